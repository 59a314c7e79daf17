#pragma once

#include <cstddef>
#include <vector>

#include "paramask/rng.hpp"
#include "paramask/tensor.hpp"

// Training objectives. Everything is built on the tape so gradients flow to
// the attention scores through the straight-through threshold.

namespace paramask::losses {

enum class GVariant { kLossMargin, kProbMargin, kReprCosine };

struct LossWeights {
  double lambda_s = 0.0;
  double lambda_c = 0.0;
  double lambda_g = 0.0;
  double lambda_r = 0.0;
  double lambda_ns = 0.0;  // silver supervision weight
  double T = 0.3;          // target fraction of selected paragraphs
  double h = 0.0;          // comprehensiveness margin
  GVariant g_variant = GVariant::kLossMargin;
  GVariant r_variant = GVariant::kLossMargin;

  // Throws UserError when a weight is negative, T is outside (0,1) or h < 0.
  void validate() const;
};

// Per-case components for logging; inactive parts stay zero with the flag off.
struct LossBreakdown {
  double L_p = 0.0;
  double L_p_c = 0.0;
  double L_p_r = 0.0;
  double L_s = 0.0;
  double L_c = 0.0;
  double L_g = 0.0;
  double L_r = 0.0;
  double L_sup = 0.0;
  double L_total = 0.0;
  bool g_active = false;
  bool r_active = false;
  bool sup_active = false;
};

// Sum of per-label binary cross-entropies for one case.
ad::Var classification_loss(ad::Tape& t, ad::Var probs, ad::Var targets);

// |T - mean(Z)|
ad::Var sparsity_loss(ad::Tape& t, ad::Var z, double T);

// Mean absolute difference between neighboring mask entries; 0 for a single
// paragraph.
ad::Var continuity_loss(ad::Tape& t, ad::Var z);

// max(L_p - L_p_comp + h, 0)
ad::Var comprehensiveness_margin(ad::Tape& t, ad::Var lp, ad::Var lp_comp, double h);

// Hinged mean probability margin: the complement pass should score every
// gold label lower and every other label no higher.
ad::Var comprehensiveness_prob(ad::Tape& t, ad::Var probs, ad::Var probs_comp,
                               ad::Var targets, double h);

// |cos(D_M, D_M_comp)|
ad::Var comprehensiveness_repr(ad::Tape& t, ad::Var dm, ad::Var dm_comp);

// gamma = 1 - cos(Z^r, Z)
ad::Var singularity_scale(ad::Tape& t, ad::Var z, ad::Var z_rand);

// Mean absolute error against a silver mask.
ad::Var supervision_loss(ad::Tape& t, ad::Var z, ad::Var z_silver);

// Binary vector of length n with exactly round(T*n) ones (at least one),
// positions uniform without replacement.
std::vector<double> random_mask(std::size_t n, double T, Rng& rng);

// Handles for the total-loss assembly; leave a Var invalid when that forward
// pass was not run.
struct TotalInputs {
  ad::Var L_p;
  ad::Var L_s;
  ad::Var L_c;
  ad::Var L_g;
  ad::Var L_p_c;
  ad::Var L_r;
  ad::Var L_p_r;
};

// L = L_p + ls*L_s + lc*L_c + lg*(L_g + L_p_c) + lr*(L_r + L_p_r).
// Throws std::invalid_argument when a nonzero weight lacks its component.
ad::Var total_loss(ad::Tape& t, const TotalInputs& in, const LossWeights& w);

// Silver supervision objective: L_p + lambda_ns * MAE(Z, Z^s).
ad::Var supervised_total(ad::Tape& t, ad::Var lp, ad::Var l_sup, double lambda_ns);

}  // namespace paramask::losses
