#include "ldplab/observable.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ldplab/error.hpp"

namespace ldplab {

Observable builtin_observable(std::string_view id, double a) {
  if (id == "x") return {"x", [](double x) { return x; }, 1.0, false};
  if (id == "x2") return {"x2", [](double x) { return x * x; }, 2.0, false};
  if (id == "abs") return {"abs", [](double x) { return std::abs(x); }, 1.0, false};
  if (id == "log_df") {
    return {"log_df", [a](double x) { return std::log(std::abs(2.0 * a * x)); }, 0.0, true};
  }
  throw Error(ErrorKind::validation, "unknown observable '" + std::string(id) + "'");
}

Observable constant_observable(double value) {
  return {"const", [value](double) { return value; }, 0.0, false};
}

double lipschitz_spot_check(const Observable& phi, int grid) {
  if (phi.singular) return 0.0;
  double worst = 0.0;
  for (int i = 0; i < grid; ++i) {
    const double x = -1.0 + 2.0 * i / (grid - 1);
    for (int j = i + 1; j < grid; ++j) {
      const double y = -1.0 + 2.0 * j / (grid - 1);
      const double diff = std::abs(phi(x) - phi(y));
      if (diff == 0.0) continue;
      const double bound = phi.lipschitz * std::abs(x - y);
      worst = std::max(worst, bound > 0.0 ? diff / bound : INFINITY);
    }
  }
  return worst;
}

}  // namespace ldplab
