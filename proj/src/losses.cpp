#include "paramask/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "paramask/errors.hpp"

namespace paramask::losses {

void LossWeights::validate() const {
  auto nonneg = [](double v, const char* name) {
    if (!(v >= 0.0))
      throw UserError(std::string("loss weight ") + name + " must be nonnegative, got " +
                      std::to_string(v));
  };
  nonneg(lambda_s, "lambda_s");
  nonneg(lambda_c, "lambda_c");
  nonneg(lambda_g, "lambda_g");
  nonneg(lambda_r, "lambda_r");
  nonneg(lambda_ns, "lambda_ns");
  nonneg(h, "h");
  if (!(T > 0.0 && T < 1.0))
    throw UserError("sparsity target T must lie in (0,1), got " + std::to_string(T));
}

ad::Var classification_loss(ad::Tape& t, ad::Var probs, ad::Var targets) {
  return t.bce_sum(probs, targets);
}

ad::Var sparsity_loss(ad::Tape& t, ad::Var z, double T) {
  return t.abs(t.add_const(t.scale(t.mean(z), -1.0), T));
}

ad::Var continuity_loss(ad::Tape& t, ad::Var z) {
  std::size_t n = t.at(z).value.size();
  if (n < 2) return t.zeros({});
  ad::Var col = t.reshape(z, {n, 1});
  ad::Var head = t.slice_rows(col, 0, n - 1);
  ad::Var tail = t.slice_rows(col, 1, n - 1);
  return t.scale(t.sum(t.abs(t.sub(tail, head))), 1.0 / static_cast<double>(n - 1));
}

ad::Var comprehensiveness_margin(ad::Tape& t, ad::Var lp, ad::Var lp_comp, double h) {
  return t.relu(t.add_const(t.sub(lp, lp_comp), h));
}

ad::Var comprehensiveness_prob(ad::Tape& t, ad::Var probs, ad::Var probs_comp,
                               ad::Var targets, double h) {
  // y=1 wants the complement pass to score lower, y=0 no higher:
  // per-label term y*(p_c - p + h) + (1-y)*(p - p_c + h), hinged after the mean
  ad::Var diff = t.sub(probs_comp, probs);
  ad::Var sign = t.add_const(t.scale(targets, 2.0), -1.0);
  return t.relu(t.add_const(t.mean(t.mul(diff, sign)), h));
}

ad::Var comprehensiveness_repr(ad::Tape& t, ad::Var dm, ad::Var dm_comp) {
  return t.abs(t.cosine(dm, dm_comp));
}

ad::Var singularity_scale(ad::Tape& t, ad::Var z, ad::Var z_rand) {
  return t.add_const(t.scale(t.cosine(z_rand, z), -1.0), 1.0);
}

ad::Var supervision_loss(ad::Tape& t, ad::Var z, ad::Var z_silver) {
  const auto& a = t.at(z);
  const auto& b = t.at(z_silver);
  if (a.value.size() != b.value.size())
    throw std::invalid_argument("supervision_loss: mask lengths differ, " +
                                std::to_string(a.value.size()) + " vs " +
                                std::to_string(b.value.size()));
  return t.mean(t.abs(t.sub(z, z_silver)));
}

std::vector<double> random_mask(std::size_t n, double T, Rng& rng) {
  if (n == 0) throw std::invalid_argument("random_mask: empty mask");
  auto k = static_cast<std::size_t>(std::llround(T * static_cast<double>(n)));
  k = std::clamp<std::size_t>(k, 1, n);
  std::vector<double> mask(n, 0.0);
  for (std::size_t i : rng.sample_without_replacement(n, k)) mask[i] = 1.0;
  return mask;
}

ad::Var total_loss(ad::Tape& t, const TotalInputs& in, const LossWeights& w) {
  auto require = [](ad::Var v, const char* what) {
    if (!v.valid())
      throw std::invalid_argument(std::string("total_loss: nonzero weight but missing ") +
                                  what);
  };
  require(in.L_p, "classification loss");
  ad::Var total = in.L_p;
  if (w.lambda_s > 0.0) {
    require(in.L_s, "sparsity loss");
    total = t.add(total, t.scale(in.L_s, w.lambda_s));
  }
  if (w.lambda_c > 0.0) {
    require(in.L_c, "continuity loss");
    total = t.add(total, t.scale(in.L_c, w.lambda_c));
  }
  if (w.lambda_g > 0.0) {
    require(in.L_g, "comprehensiveness loss");
    require(in.L_p_c, "complement classification loss");
    total = t.add(total, t.scale(t.add(in.L_g, in.L_p_c), w.lambda_g));
  }
  if (w.lambda_r > 0.0) {
    require(in.L_r, "singularity loss");
    require(in.L_p_r, "random-mask classification loss");
    total = t.add(total, t.scale(t.add(in.L_r, in.L_p_r), w.lambda_r));
  }
  return total;
}

ad::Var supervised_total(ad::Tape& t, ad::Var lp, ad::Var l_sup, double lambda_ns) {
  return t.add(lp, t.scale(l_sup, lambda_ns));
}

}  // namespace paramask::losses
