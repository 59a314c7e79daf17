#include "paramask/gradcheck.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace paramask::ad {

namespace {
void require_finite(double x, const char* what) {
  if (!std::isfinite(x))
    throw std::runtime_error(std::string("gradient_check: non-finite ") + what);
}

void check_grad_shapes(const std::vector<std::vector<double>>& grads,
                       const std::vector<std::vector<double>>& params) {
  if (grads.size() != params.size())
    throw std::runtime_error("gradient_check: callee returned " +
                             std::to_string(grads.size()) + " gradient vectors for " +
                             std::to_string(params.size()) + " parameters");
  for (std::size_t p = 0; p < params.size(); ++p)
    if (grads[p].size() != params[p].size())
      throw std::runtime_error("gradient_check: gradient length mismatch on parameter " +
                               std::to_string(p));
}

double central_difference(const LossFn& loss_fn, std::vector<std::vector<double>>& params,
                          std::size_t p, std::size_t i, double eps) {
  double saved = params[p][i];
  params[p][i] = saved + eps;
  double up = loss_fn(params, nullptr);
  params[p][i] = saved - eps;
  double down = loss_fn(params, nullptr);
  params[p][i] = saved;
  require_finite(up, "perturbed loss");
  require_finite(down, "perturbed loss");
  return (up - down) / (2.0 * eps);
}

double relative_error(double analytic, double numeric) {
  double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-8});
  return std::fabs(analytic - numeric) / denom;
}
}  // namespace

GradCheckReport gradient_check(const LossFn& loss_fn,
                               std::vector<std::vector<double>> params, double eps) {
  if (eps <= 0.0) throw std::invalid_argument("gradient_check: eps must be positive");

  std::vector<std::vector<double>> grads;
  double base = loss_fn(params, &grads);
  require_finite(base, "loss at the base point");
  check_grad_shapes(grads, params);

  GradCheckReport rep;
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (std::size_t i = 0; i < params[p].size(); ++i) {
      double numeric = central_difference(loss_fn, params, p, i, eps);
      double analytic = grads[p][i];
      double rel = relative_error(analytic, numeric);
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.worst_param = p;
        rep.worst_index = i;
        rep.analytic = analytic;
        rep.numeric = numeric;
      }
    }
  }
  return rep;
}

GradCheckReport gradient_check_ladder(const LossFn& loss_fn,
                                      std::vector<std::vector<double>> params,
                                      double eps_max, std::size_t levels) {
  if (eps_max <= 0.0) throw std::invalid_argument("gradient_check: eps must be positive");
  if (levels < 1) throw std::invalid_argument("gradient_check: needs at least one level");

  std::vector<std::vector<double>> grads;
  double base = loss_fn(params, &grads);
  require_finite(base, "loss at the base point");
  check_grad_shapes(grads, params);

  GradCheckReport rep;
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (std::size_t i = 0; i < params[p].size(); ++i) {
      double analytic = grads[p][i];
      double best = std::numeric_limits<double>::infinity();
      double best_numeric = 0.0;
      double eps = eps_max;
      for (std::size_t level = 0; level < levels; ++level, eps *= 0.5) {
        double numeric = central_difference(loss_fn, params, p, i, eps);
        double rel = relative_error(analytic, numeric);
        if (rel < best) {
          best = rel;
          best_numeric = numeric;
        }
        if (best < 1e-6) break;  // already matched, skip finer steps
      }
      if (best > rep.max_rel_err) {
        rep.max_rel_err = best;
        rep.worst_param = p;
        rep.worst_index = i;
        rep.analytic = analytic;
        rep.numeric = best_numeric;
      }
    }
  }
  return rep;
}

}  // namespace paramask::ad
