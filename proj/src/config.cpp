#include "stmc/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <variant>

namespace stmc {

ProblemData RunConfig::problem() const {
  ProblemData d;
  d.contrast = contrast;
  d.kappa2 = kappa2;
  return d;
}

bool RunConfig::stage_enabled(const std::string& stage) const {
  return std::find(stages.begin(), stages.end(), stage) != stages.end();
}

GeometryConfig scaled_desk_lattice(int n_cells) {
  if (n_cells <= 0 || n_cells % 20 != 0)
    throw ConfigError("the default lattice needs n_cells divisible by 20 (got " + std::to_string(n_cells) + ")");
  GeometryConfig g = GeometryConfig::desk_default();
  if (n_cells == g.n_cells) return g;
  const int unit = n_cells / 20;
  const int thick = std::max(1, unit - 1);
  const int thin = std::max(1, static_cast<int>(std::lround(5.0 * unit / 12.0)));
  for (int k = 0; k < 10; ++k) g.thick_channels[k] = {Orientation::Horizontal, unit - 1 + 2 * unit * k, thick};
  for (int k = 0; k < 19; ++k) g.thin_channels[k] = {Orientation::Vertical, unit - 1 + unit * k, thin};
  g.n_cells = n_cells;
  return g;
}

RunConfig default_config() { return RunConfig{}; }

namespace {

using Scalar = std::variant<long long, double, bool, std::string>;
struct Value {
  bool is_array = false;
  std::vector<Scalar> items;
  int line = 0;
};

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string strip_comment(const std::string& line) {
  bool in_str = false;
  for (std::size_t k = 0; k < line.size(); ++k) {
    if (line[k] == '"' && (k == 0 || line[k - 1] != '\\')) in_str = !in_str;
    if (line[k] == '#' && !in_str) return line.substr(0, k);
  }
  return line;
}

class Parser {
 public:
  Parser(std::string origin) : origin_(std::move(origin)) {}

  [[noreturn]] void fail(int line, const std::string& msg) const {
    throw ConfigError(origin_ + ":" + std::to_string(line) + ": " + msg);
  }

  Scalar scalar(const std::string& raw, int line) const {
    const std::string t = trim(raw);
    if (t.empty()) fail(line, "missing value");
    if (t.front() == '"') {
      if (t.size() < 2 || t.back() != '"') fail(line, "unterminated string");
      return t.substr(1, t.size() - 2);
    }
    if (t == "true") return true;
    if (t == "false") return false;
    long long i = 0;
    auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), i);
    if (ec == std::errc() && p == t.data() + t.size()) return i;
    double d = 0.0;
    auto [p2, ec2] = std::from_chars(t.data(), t.data() + t.size(), d);
    if (ec2 == std::errc() && p2 == t.data() + t.size()) return d;
    fail(line, "cannot parse value '" + t + "'");
  }

  Value value(const std::string& raw, int line) const {
    const std::string t = trim(raw);
    Value v;
    v.line = line;
    if (!t.empty() && t.front() == '[') {
      if (t.back() != ']') fail(line, "unterminated array");
      v.is_array = true;
      const std::string body = trim(t.substr(1, t.size() - 2));
      if (body.empty()) return v;
      std::stringstream ss(body);
      std::string item;
      while (std::getline(ss, item, ',')) v.items.push_back(scalar(item, line));
      return v;
    }
    v.items.push_back(scalar(t, line));
    return v;
  }

  std::map<std::string, std::map<std::string, Value>> parse(const std::string& text) {
    std::map<std::string, std::map<std::string, Value>> out;
    std::istringstream in(text);
    std::string raw, section;
    int line = 0;
    while (std::getline(in, raw)) {
      ++line;
      const std::string s = trim(strip_comment(raw));
      if (s.empty()) continue;
      if (s.front() == '[') {
        if (s.back() != ']') fail(line, "malformed section header");
        section = trim(s.substr(1, s.size() - 2));
        if (section.empty()) fail(line, "empty section name");
        out[section];
        continue;
      }
      const auto eq = s.find('=');
      if (eq == std::string::npos) fail(line, "expected key = value");
      const std::string key = trim(s.substr(0, eq));
      if (key.empty()) fail(line, "empty key");
      if (section.empty()) fail(line, "key '" + key + "' outside any section");
      auto& sec = out[section];
      if (sec.count(key)) fail(line, "duplicate key '" + key + "'");
      sec[key] = value(s.substr(eq + 1), line);
    }
    return out;
  }

 private:
  std::string origin_;
};

struct Reader {
  const Parser& parser;
  std::map<std::string, Value>& sec;
  std::string section;
  int header_line = 0;

  const Value* find(const std::string& key) const {
    auto it = sec.find(key);
    return it == sec.end() ? nullptr : &it->second;
  }
  const Scalar& single(const Value& v, const std::string& key) const {
    if (v.is_array) parser.fail(v.line, section + "." + key + " must be a scalar");
    return v.items.front();
  }
  void get(const std::string& key, long long& out) const {
    if (auto* v = find(key)) {
      const Scalar& s = single(*v, key);
      if (!std::holds_alternative<long long>(s)) parser.fail(v->line, section + "." + key + " must be an integer");
      out = std::get<long long>(s);
    }
  }
  void get(const std::string& key, int& out) const {
    long long x = out;
    get(key, x);
    out = static_cast<int>(x);
  }
  void get(const std::string& key, double& out) const {
    if (auto* v = find(key)) {
      const Scalar& s = single(*v, key);
      if (std::holds_alternative<double>(s))
        out = std::get<double>(s);
      else if (std::holds_alternative<long long>(s))
        out = static_cast<double>(std::get<long long>(s));
      else
        parser.fail(v->line, section + "." + key + " must be a number");
    }
  }
  void get(const std::string& key, bool& out) const {
    if (auto* v = find(key)) {
      const Scalar& s = single(*v, key);
      if (!std::holds_alternative<bool>(s)) parser.fail(v->line, section + "." + key + " must be true or false");
      out = std::get<bool>(s);
    }
  }
  void get(const std::string& key, std::string& out) const {
    if (auto* v = find(key)) {
      const Scalar& s = single(*v, key);
      if (!std::holds_alternative<std::string>(s)) parser.fail(v->line, section + "." + key + " must be a string");
      out = std::get<std::string>(s);
    }
  }
  bool get(const std::string& key, std::vector<int>& out) const {
    const Value* v = find(key);
    if (!v) return false;
    std::vector<int> r;
    for (const auto& s : v->items) {
      if (!std::holds_alternative<long long>(s)) parser.fail(v->line, section + "." + key + " must hold integers");
      r.push_back(static_cast<int>(std::get<long long>(s)));
    }
    out = std::move(r);
    return true;
  }
  void get(const std::string& key, std::vector<std::string>& out) const {
    const Value* v = find(key);
    if (!v) return;
    std::vector<std::string> r;
    for (const auto& s : v->items) {
      if (!std::holds_alternative<std::string>(s)) parser.fail(v->line, section + "." + key + " must hold strings");
      r.push_back(std::get<std::string>(s));
    }
    out = std::move(r);
  }
  int line_of(const std::string& key) const {
    const Value* v = find(key);
    return v ? v->line : header_line;
  }
  void reject_unknown(const std::set<std::string>& known) const {
    for (const auto& [k, v] : sec)
      if (!known.count(k)) parser.fail(v.line, "unknown key '" + k + "' in [" + section + "]");
  }
};

Orientation parse_orientation(const std::string& s, const Parser& p, int line) {
  if (s == "horizontal") return Orientation::Horizontal;
  if (s == "vertical") return Orientation::Vertical;
  p.fail(line, "orientation must be \"horizontal\" or \"vertical\"");
}

const char* orientation_name(Orientation o) { return o == Orientation::Horizontal ? "horizontal" : "vertical"; }

std::string fmt_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  std::string s = buf;
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

template <class T, class F>
std::string fmt_list(const std::vector<T>& v, F f) {
  std::string s = "[";
  for (std::size_t k = 0; k < v.size(); ++k) s += (k ? ", " : "") + f(v[k]);
  return s + "]";
}

std::string quote(const std::string& s) { return "\"" + s + "\""; }

}  // namespace

void validate(const RunConfig& c) {
  try {
    validate_config(c.geometry);
  } catch (const GeometryError& e) {
    throw ConfigError(std::string("geometry: ") + e.what());
  }
  if (c.geometry.n_steps != c.time.n_steps) throw ConfigError("geometry and time step counts differ");
  if (c.time.n_steps < 0) throw ConfigError("time.steps must be >= 0");
  if (!(c.time.tau > 0.0)) throw ConfigError("time.tau must be positive");
  if (c.time.substeps < 1) throw ConfigError("time.substeps must be >= 1");
  if (!(c.contrast > 0.0)) throw ConfigError("coefficients.contrast must be positive");
  if (c.example < 1 || c.example > 3) throw ConfigError("coefficients.example must be 1, 2 or 3");
  if (c.coarse.empty()) throw ConfigError("multiscale.coarse must list at least one coarse size");
  if (c.coarse.size() != c.layers.size()) throw ConfigError("multiscale.coarse and multiscale.layers differ in length");
  for (std::size_t k = 0; k < c.coarse.size(); ++k) {
    const int n = c.coarse[k];
    if (n < 1) throw ConfigError("multiscale.coarse entries must be positive");
    if (c.geometry.n_cells % n != 0)
      throw ConfigError("H = 1/" + std::to_string(n) + " is not a multiple of h = 1/" +
                        std::to_string(c.geometry.n_cells));
    if (c.layers[k] < 0) throw ConfigError("multiscale.layers entries must be >= 0");
  }
  if (!(c.fine_tol > 0.0) || !(c.saddle_tol > 0.0)) throw ConfigError("solver tolerances must be positive");
  if (c.fine_max_iterations < 1) throw ConfigError("solver.fine_max_iterations must be >= 1");
  if (c.out_dir.empty()) throw ConfigError("output.dir must not be empty");
  for (const auto& s : c.stages)
    if (std::find(kAllStages.begin(), kAllStages.end(), s) == kAllStages.end())
      throw ConfigError("unknown stage '" + s + "'");
  if (c.threads < 0) throw ConfigError("output.threads must be >= 0");
}

RunConfig parse_config_text(const std::string& text, const std::string& origin) {
  Parser parser(origin);
  auto doc = parser.parse(text);
  static const std::set<std::string> sections{"geometry", "coefficients", "time", "multiscale", "solver", "output"};
  for (const auto& [name, sec] : doc)
    if (!sections.count(name)) {
      int line = sec.empty() ? 0 : sec.begin()->second.line;
      parser.fail(line, "unknown section [" + name + "]");
    }

  RunConfig c;
  auto reader = [&](const std::string& name) { return Reader{parser, doc[name], name}; };

  {
    Reader r = reader("geometry");
    r.reject_unknown({"n_cells", "shrink_thick", "shrink_thin", "thick_orientation", "thick_centers", "thick_width",
                      "thin_orientation", "thin_centers", "thin_width"});
    int n = c.geometry.n_cells;
    r.get("n_cells", n);
    std::vector<int> thick_c, thin_c;
    const bool has_thick = r.get("thick_centers", thick_c);
    const bool has_thin = r.get("thin_centers", thin_c);
    GeometryConfig g;
    if (!has_thick || !has_thin) {
      try {
        g = scaled_desk_lattice(n);
      } catch (const ConfigError& e) {
        parser.fail(r.line_of("n_cells"), e.what());
      }
    }
    g.n_cells = n;
    auto family = [&](const char* prefix, bool given, const std::vector<int>& centers, std::vector<Channel>& chans) {
      const std::string p = prefix;
      std::string orient = chans.empty() ? (p == "thick" ? "horizontal" : "vertical")
                                         : orientation_name(chans.front().orientation);
      int width = chans.empty() ? 1 : chans.front().width;
      r.get(p + "_orientation", orient);
      r.get(p + "_width", width);
      const Orientation o = parse_orientation(orient, parser, r.line_of(p + "_orientation"));
      if (given) {
        chans.clear();
        for (int ctr : centers) chans.push_back({o, ctr, width});
      } else {
        for (auto& ch : chans) {
          ch.orientation = o;
          ch.width = width;
        }
      }
    };
    family("thick", has_thick, thick_c, g.thick_channels);
    family("thin", has_thin, thin_c, g.thin_channels);
    r.get("shrink_thick", g.shrink_rate[0]);
    r.get("shrink_thin", g.shrink_rate[1]);
    c.geometry = g;
  }
  {
    Reader r = reader("coefficients");
    r.reject_unknown({"example", "contrast", "kappa2", "kappa2_constant"});
    r.get("example", c.example);
    if (c.example < 1 || c.example > 3) parser.fail(r.line_of("example"), "example must be 1, 2 or 3");
    r.get("contrast", c.contrast);
    c.kappa2 = Kappa2::for_example(c.example);
    std::string name = c.kappa2.name();
    double k = c.kappa2.constant;
    r.get("kappa2", name);
    r.get("kappa2_constant", k);
    try {
      c.kappa2 = Kappa2::from_name(name, k);
    } catch (const ConfigError& e) {
      parser.fail(r.line_of("kappa2"), e.what());
    }
  }
  {
    Reader r = reader("time");
    r.reject_unknown({"steps", "tau", "substeps", "final_time"});
    r.get("steps", c.time.n_steps);
    r.get("tau", c.time.tau);
    r.get("substeps", c.time.substeps);
    if (r.find("final_time")) {
      double T = 0.0;
      r.get("final_time", T);
      if (!r.find("tau") && c.time.n_steps > 0) c.time.tau = T / c.time.n_steps;
      if (std::abs(c.time.final_time() - T) > 1e-12 * std::max(1.0, T))
        parser.fail(r.line_of("final_time"), "final_time differs from steps * tau");
    }
    c.geometry.n_steps = c.time.n_steps;
  }
  {
    Reader r = reader("multiscale");
    r.reject_unknown({"coarse", "layers", "dtensor"});
    r.get("coarse", c.coarse);
    if (!r.get("layers", c.layers) && c.coarse != RunConfig{}.coarse) {
      c.layers.clear();
      for (int n : c.coarse) c.layers.push_back(std::max(1, static_cast<int>(std::lround(2.0 * n / 10.0))));
    }
    r.get("dtensor", c.use_dtensor);
    for (int n : c.coarse)
      if (n < 1 || c.geometry.n_cells % n != 0)
        parser.fail(r.line_of("coarse"), "coarse size 1/" + std::to_string(n) + " does not divide the fine grid 1/" +
                                             std::to_string(c.geometry.n_cells));
  }
  {
    Reader r = reader("solver");
    r.reject_unknown({"fine_tol", "fine_max_iterations", "saddle_tol"});
    r.get("fine_tol", c.fine_tol);
    r.get("fine_max_iterations", c.fine_max_iterations);
    r.get("saddle_tol", c.saddle_tol);
  }
  {
    Reader r = reader("output");
    r.reject_unknown({"dir", "stages", "heatmaps", "threads"});
    r.get("dir", c.out_dir);
    r.get("stages", c.stages);
    r.get("heatmaps", c.heatmaps);
    r.get("threads", c.threads);
  }
  try {
    validate(c);
  } catch (const ConfigError& e) {
    throw ConfigError(origin + ": " + e.what());
  }
  return c;
}

RunConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path);
}

std::string serialize_config(const RunConfig& c) {
  auto ints = [](const std::vector<int>& v) { return fmt_list(v, [](int x) { return std::to_string(x); }); };
  auto centers = [&](const std::vector<Channel>& ch) {
    std::vector<int> v;
    for (const auto& x : ch) v.push_back(x.center);
    return ints(v);
  };
  auto family = [&](std::ostringstream& os, const char* p, const std::vector<Channel>& ch) {
    const Channel first = ch.empty() ? Channel{} : ch.front();
    for (const auto& x : ch)
      if (x.orientation != first.orientation || x.width != first.width)
        throw ConfigError(std::string("serialize_config: ") + p + " channels must share orientation and width");
    os << p << "_orientation = " << quote(orientation_name(first.orientation)) << "\n";
    os << p << "_centers = " << centers(ch) << "\n";
    os << p << "_width = " << first.width << "\n";
  };
  std::ostringstream os;
  os << "[geometry]\n";
  os << "n_cells = " << c.geometry.n_cells << "\n";
  os << "shrink_thick = " << c.geometry.shrink_rate[0] << "\n";
  os << "shrink_thin = " << c.geometry.shrink_rate[1] << "\n";
  family(os, "thick", c.geometry.thick_channels);
  family(os, "thin", c.geometry.thin_channels);
  os << "\n[coefficients]\n";
  os << "example = " << c.example << "\n";
  os << "contrast = " << fmt_double(c.contrast) << "\n";
  os << "kappa2 = " << quote(c.kappa2.name()) << "\n";
  os << "kappa2_constant = " << fmt_double(c.kappa2.constant) << "\n";
  os << "\n[time]\n";
  os << "steps = " << c.time.n_steps << "\n";
  os << "tau = " << fmt_double(c.time.tau) << "\n";
  os << "substeps = " << c.time.substeps << "\n";
  os << "\n[multiscale]\n";
  os << "coarse = " << ints(c.coarse) << "\n";
  os << "layers = " << ints(c.layers) << "\n";
  os << "dtensor = " << (c.use_dtensor ? "true" : "false") << "\n";
  os << "\n[solver]\n";
  os << "fine_tol = " << fmt_double(c.fine_tol) << "\n";
  os << "fine_max_iterations = " << c.fine_max_iterations << "\n";
  os << "saddle_tol = " << fmt_double(c.saddle_tol) << "\n";
  os << "\n[output]\n";
  os << "dir = " << quote(c.out_dir) << "\n";
  os << "stages = " << fmt_list(c.stages, quote) << "\n";
  os << "heatmaps = " << (c.heatmaps ? "true" : "false") << "\n";
  os << "threads = " << c.threads << "\n";
  return os.str();
}

std::uint64_t fnv1a(const std::string& bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string config_hash(const RunConfig& config) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(serialize_config(config))));
  return buf;
}

int parse_reciprocal(const std::string& text) {
  const std::string t = trim(text);
  auto as_int = [&](const std::string& s) {
    int v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size() || v <= 0) throw ConfigError("cannot read grid size '" + text + "'");
    return v;
  };
  if (t.rfind("1/", 0) == 0) return as_int(t.substr(2));
  if (t.find('.') == std::string::npos && t.find('e') == std::string::npos) return as_int(t);
  double d = 0.0;
  auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), d);
  if (ec != std::errc() || p != t.data() + t.size() || !(d > 0.0) || d > 1.0)
    throw ConfigError("cannot read grid size '" + text + "'");
  const double inv = 1.0 / d;
  const long r = std::lround(inv);
  if (std::abs(inv - r) > 1e-6 * inv) throw ConfigError("grid size '" + text + "' is not 1/n for an integer n");
  return static_cast<int>(r);
}

std::vector<std::string> parse_stage_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    if (item == "all") return kAllStages;
    if (std::find(kAllStages.begin(), kAllStages.end(), item) == kAllStages.end())
      throw ConfigError("unknown stage '" + item + "'");
    if (std::find(out.begin(), out.end(), item) == out.end()) out.push_back(item);
  }
  if (out.empty()) throw ConfigError("empty stage list");
  // Keep pipeline order.
  std::vector<std::string> ordered;
  for (const auto& s : kAllStages)
    if (std::find(out.begin(), out.end(), s) != out.end()) ordered.push_back(s);
  return ordered;
}

}  // namespace stmc
