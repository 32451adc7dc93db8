#include "stmc/problem.hpp"

#include <cmath>
#include <numbers>

namespace stmc {

double Kappa2::operator()(double x, double y) const {
  using std::numbers::pi;
  switch (kind) {
    case Kappa2Kind::Constant:
      return constant;
    case Kappa2Kind::Example2:
      return 2.0 + std::sin(2.0 * pi * x) * std::sin(20.0 * pi * y);
    case Kappa2Kind::Example3:
      return 2.0 + std::sin(std::sqrt(20.0) * pi * x) * std::sin(pi * y);
  }
  return constant;
}

std::string Kappa2::name() const {
  switch (kind) {
    case Kappa2Kind::Constant:
      return "constant";
    case Kappa2Kind::Example2:
      return "example2";
    case Kappa2Kind::Example3:
      return "example3";
  }
  return "constant";
}

Kappa2 Kappa2::from_name(const std::string& name, double constant) {
  if (name == "constant") return {Kappa2Kind::Constant, constant};
  if (name == "example2") return {Kappa2Kind::Example2, 1.0};
  if (name == "example3") return {Kappa2Kind::Example3, 1.0};
  throw ConfigError("unknown kappa2 '" + name + "' (expected constant, example2 or example3)");
}

Kappa2 Kappa2::for_example(int example) {
  switch (example) {
    case 1:
      return {Kappa2Kind::Constant, 1.0};
    case 2:
      return {Kappa2Kind::Example2, 1.0};
    case 3:
      return {Kappa2Kind::Example3, 1.0};
  }
  throw ConfigError("example must be 1, 2 or 3 (got " + std::to_string(example) + ")");
}

double gaussian_source(double x, double y, double) {
  const double dx = x - 0.5, dy = y - 0.5;
  return 1e-3 * std::exp(-100.0 * (dx * dx + dy * dy));
}

double gaussian_initial(double x, double y, double) {
  const double dx = x - 0.5, dy = y - 0.5;
  return 1e-1 * std::exp(-100.0 * (dx * dx + dy * dy));
}

}  // namespace stmc
