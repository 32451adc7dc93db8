// stmc: multicontinuum upscaling pipeline on shrinking perforated domains.

#include <CLI11.hpp>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <sstream>

#include "stmc/config.hpp"
#include "stmc/pipeline.hpp"

namespace {

struct Overrides {
  std::string config;
  std::string out;
  std::string stages;
  int threads = -1;
  std::string h;
  std::string H;
};

void add_common(CLI::App* app, Overrides& o, bool with_stages) {
  app->set_help_flag("--help", "Print this help message and exit");
  app->add_option("--config", o.config, "Run configuration file")->check(CLI::ExistingFile);
  app->add_option("--out", o.out, "Output directory");
  if (with_stages) app->add_option("--stages", o.stages, "Comma-separated stages (geometry,fine,cells,upscale,macro,errors)");
  app->add_option("--threads", o.threads, "Worker threads for cell problems (0 = all cores)")->check(CLI::NonNegativeNumber);
  app->add_option("--h", o.h, "Fine mesh size, e.g. 1/240");
  app->add_option("--H", o.H, "Coarse sizes, e.g. 1/10,1/20");
}

stmc::RunConfig resolve(const Overrides& o, const std::vector<std::string>& stages) {
  stmc::RunConfig c = o.config.empty() ? stmc::default_config() : stmc::parse_config(o.config);
  if (!o.out.empty()) c.out_dir = o.out;
  if (o.threads >= 0) c.threads = o.threads;
  if (!o.h.empty()) {
    const int n = stmc::parse_reciprocal(o.h);
    const bool desk = c.geometry.n_cells % 20 == 0 && c.geometry == stmc::scaled_desk_lattice(c.geometry.n_cells);
    if (desk) {
      const int steps = c.geometry.n_steps;
      const auto rate = c.geometry.shrink_rate;
      c.geometry = stmc::scaled_desk_lattice(n);
      c.geometry.n_steps = steps;
      c.geometry.shrink_rate = rate;
    } else {
      c.geometry.n_cells = n;
    }
  }
  if (!o.H.empty()) {
    std::vector<int> coarse, layers;
    std::stringstream ss(o.H);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (item.empty()) continue;
      const int n = stmc::parse_reciprocal(item);
      coarse.push_back(n);
      layers.push_back(std::max(1, static_cast<int>(std::lround(2.0 * n / 10.0))));
    }
    c.coarse = coarse;
    c.layers = layers;
  }
  if (!stages.empty())
    c.stages = stages;
  else if (!o.stages.empty())
    c.stages = stmc::parse_stage_list(o.stages);
  stmc::validate(c);
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Space-time multicontinuum upscaling on shrinking perforated domains"};
  app.set_help_flag("--help", "Print this help message and exit");
  app.require_subcommand(1);
  Overrides o;
  struct Sub {
    const char* name;
    const char* help;
    std::vector<std::string> stages;
  };
  const std::vector<Sub> subs{
      {"geometry", "Build the channel lattice and its shrinking timeline", {"geometry"}},
      {"fine", "Fine-scale reference solution", {"fine"}},
      {"cells", "Constrained local cell problems", {"cells"}},
      {"upscale", "Effective coefficients", {"upscale"}},
      {"macro", "Coarse multicontinuum solve", {"macro"}},
      {"errors", "Continuum-wise relative errors", {"errors"}},
      {"all", "Every stage (or those given by --stages)", {}},
  };
  std::vector<CLI::App*> apps;
  for (const auto& s : subs) {
    CLI::App* a = app.add_subcommand(s.name, s.help);
    add_common(a, o, s.stages.empty());
    apps.push_back(a);
  }
  CLI11_PARSE(app, argc, argv);

  std::vector<std::string> stages;
  for (std::size_t k = 0; k < subs.size(); ++k)
    if (apps[k]->parsed()) stages = subs[k].stages;

  stmc::RunConfig config;
  try {
    config = resolve(o, stages);
  } catch (const std::exception& e) {
    std::cerr << "stmc: " << e.what() << "\n";
    return 2;
  }

  const stmc::PipelineResult r = stmc::run_pipeline(config);
  for (const auto& s : r.stages) {
    if (s.status == "skipped") continue;
    std::printf("%-24s %-7s %8.2fs\n", stmc::stage_label(s).c_str(), s.status.c_str(), s.seconds);
  }
  if (r.exit_code != 0) std::cerr << "stmc: " << r.error << "\n";
  std::printf("manifest: %s\n", r.manifest.string().c_str());
  return r.exit_code;
}
