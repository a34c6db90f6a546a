#pragma once

#include <functional>
#include <string>
#include <string_view>

namespace ldplab {

/// Real observable on [-1, 1] with a declared Lipschitz constant. Builtins with a
/// singularity (log|Df| at 0) are flagged and skipped by Lipschitz spot checks.
struct Observable {
  std::string id;
  std::function<double(double)> eval;
  double lipschitz = 0.0;
  bool singular = false;

  double operator()(double x) const { return eval(x); }
};

/// "x", "x2", "abs", or "log_df" (log|Df_a(x)| = log|2 a x|).
Observable builtin_observable(std::string_view id, double a = 2.0);

Observable constant_observable(double value);

/// Worst ratio |phi(x)-phi(y)| / (L |x-y|) over a deterministic grid of pairs;
/// <= 1 means the declared constant held.
double lipschitz_spot_check(const Observable& phi, int grid = 257);

}  // namespace ldplab
