#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace paramask::ad {

// Evaluates a scalar loss at the given parameter values. When grads is
// non-null the callee must also fill analytic gradients, one vector per
// parameter with matching length.
using LossFn = std::function<double(const std::vector<std::vector<double>>& params,
                                    std::vector<std::vector<double>>* grads)>;

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::size_t worst_param = 0;  // which parameter vector
  std::size_t worst_index = 0;  // which component within it
  double analytic = 0.0;        // gradient at the worst component
  double numeric = 0.0;         // central difference at the worst component
};

// Compares analytic gradients against central finite differences with step
// eps. Relative error per component is
//   |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
// Throws std::runtime_error if any probed loss value is non-finite.
GradCheckReport gradient_check(const LossFn& loss_fn,
                               std::vector<std::vector<double>> params, double eps);

// Single-step checks fail spuriously in two step-size-local ways: a probe
// crossing a kink (relu, |.|, max ties) breaks the central difference, and
// near-zero gradients drown in f(x+e)-f(x-e) cancellation noise. A wrong
// backward rule, by contrast, mismatches at every step size. Each component
// therefore keeps its best agreement across a halving ladder eps_max,
// eps_max/2, ... (levels steps) and the report maximizes over components.
GradCheckReport gradient_check_ladder(const LossFn& loss_fn,
                                      std::vector<std::vector<double>> params,
                                      double eps_max, std::size_t levels);

}  // namespace paramask::ad
