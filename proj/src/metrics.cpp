#include "paramask/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace paramask::metrics {

namespace {

bool positive(double v) { return v > 0.5; }

void check_paired(const std::vector<std::vector<double>>& a,
                  const std::vector<std::vector<double>>& b, const char* what) {
  if (a.size() != b.size())
    throw std::invalid_argument(std::string(what) + ": case counts differ, " +
                                std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].size() != b[i].size())
      throw std::invalid_argument(std::string(what) + ": label counts differ on case " +
                                  std::to_string(i));
}

}  // namespace

double micro_f1(const std::vector<std::vector<double>>& preds,
                const std::vector<std::vector<double>>& golds) {
  check_paired(preds, golds, "micro_f1");
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t c = 0; c < preds.size(); ++c)
    for (std::size_t l = 0; l < preds[c].size(); ++l) {
      bool p = positive(preds[c][l]);
      bool g = positive(golds[c][l]);
      tp += p && g;
      fp += p && !g;
      fn += !p && g;
    }
  if (tp + fp + fn == 0) return 1.0;
  return 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
}

std::vector<double> per_label_f1(const std::vector<std::vector<double>>& preds,
                                 const std::vector<std::vector<double>>& golds,
                                 std::size_t n_labels) {
  check_paired(preds, golds, "per_label_f1");
  std::vector<double> out(n_labels, 0.0);
  for (std::size_t l = 0; l < n_labels; ++l) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t c = 0; c < preds.size(); ++c) {
      bool p = positive(preds[c][l]);
      bool g = positive(golds[c][l]);
      tp += p && g;
      fp += p && !g;
      fn += !p && g;
    }
    out[l] = (tp + fp + fn == 0)
                 ? 1.0
                 : 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
  }
  return out;
}

void collect_gold_pairs(const std::vector<std::vector<double>>& probs_full,
                        const std::vector<std::vector<double>>& probs_other,
                        const std::vector<std::vector<double>>& golds,
                        std::vector<double>& out_full, std::vector<double>& out_other) {
  check_paired(probs_full, probs_other, "collect_gold_pairs");
  check_paired(probs_full, golds, "collect_gold_pairs");
  for (std::size_t c = 0; c < golds.size(); ++c)
    for (std::size_t l = 0; l < golds[c].size(); ++l)
      if (positive(golds[c][l])) {
        out_full.push_back(probs_full[c][l]);
        out_other.push_back(probs_other[c][l]);
      }
}

double mean_prob_drop(const std::vector<double>& p_full, const std::vector<double>& p_other) {
  if (p_full.size() != p_other.size())
    throw std::invalid_argument("mean_prob_drop: pair counts differ");
  if (p_full.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < p_full.size(); ++i) s += p_full[i] - p_other[i];
  return s / static_cast<double>(p_full.size());
}

double rationale_f1(const std::vector<double>& z_pred, const std::vector<double>& z_gold) {
  if (z_pred.size() != z_gold.size())
    throw std::invalid_argument("rationale_f1: mask lengths differ, " +
                                std::to_string(z_pred.size()) + " vs " +
                                std::to_string(z_gold.size()));
  std::size_t tp = 0, np = 0, ng = 0;
  for (std::size_t i = 0; i < z_pred.size(); ++i) {
    bool p = positive(z_pred[i]);
    bool g = positive(z_gold[i]);
    tp += p && g;
    np += p;
    ng += g;
  }
  if (np + ng == 0) return 1.0;
  return 2.0 * static_cast<double>(tp) / static_cast<double>(np + ng);
}

std::vector<std::size_t> rank_selected(const std::vector<double>& scores,
                                       const std::vector<double>& z) {
  if (scores.size() != z.size())
    throw std::invalid_argument("rank_selected: score/mask lengths differ");
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < z.size(); ++i)
    if (positive(z[i])) idx.push_back(i);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return idx;
}

double mean_r_precision(const std::vector<std::vector<std::size_t>>& rankings,
                        const std::vector<std::vector<std::size_t>>& gold_sets) {
  if (rankings.size() != gold_sets.size())
    throw std::invalid_argument("mean_r_precision: case counts differ");
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t c = 0; c < rankings.size(); ++c) {
    const auto& gold = gold_sets[c];
    if (gold.empty()) continue;
    std::size_t k = gold.size();
    std::size_t take = std::min(k, rankings[c].size());
    std::size_t hit = 0;
    for (std::size_t i = 0; i < take; ++i)
      if (std::find(gold.begin(), gold.end(), rankings[c][i]) != gold.end()) ++hit;
    total += static_cast<double>(hit) / static_cast<double>(k);
    ++counted;
  }
  return counted == 0 ? 0.0 : total / static_cast<double>(counted);
}

RunAggregate aggregate_runs(const std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("aggregate_runs: no values");
  RunAggregate agg;
  agg.n_runs = values.size();
  agg.mean = std::accumulate(values.begin(), values.end(), 0.0) /
             static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - agg.mean) * (v - agg.mean);
  agg.std_dev = std::sqrt(var / static_cast<double>(values.size()));
  return agg;
}

std::string render_table(const EvalReport& r) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(3);
  os << "input          micro-F1\n";
  os << "full           " << r.micro_f1_full << "\n";
  os << "masked (Z)     " << r.micro_f1_masked << "\n";
  os << "complement     " << r.micro_f1_complement << "\n";
  os << "\n";
  os << "sufficiency        " << r.sufficiency << "  (lower is better)\n";
  os << "comprehensiveness  " << r.comprehensiveness << "  (higher is better)\n";
  os << "rationale F1       " << r.rationale_f1 << "\n";
  os << "mean R-Precision   " << r.mean_r_precision << "\n";
  os << "selected           " << std::setprecision(1) << r.observed_sparsity << "%\n";
  if (!r.per_label.empty()) {
    os << "\nlabel  train-cases  F1\n";
    os.precision(3);
    for (const auto& pl : r.per_label)
      os << pl.label << "  " << pl.train_count << "  " << pl.f1 << "\n";
  }
  return os.str();
}

std::string render_kv(const EvalReport& r) {
  nlohmann::json j;
  j["micro_f1_full"] = r.micro_f1_full;
  j["micro_f1_masked"] = r.micro_f1_masked;
  j["micro_f1_complement"] = r.micro_f1_complement;
  j["sufficiency"] = r.sufficiency;
  j["comprehensiveness"] = r.comprehensiveness;
  j["rationale_f1"] = r.rationale_f1;
  j["mean_r_precision"] = r.mean_r_precision;
  j["observed_sparsity"] = r.observed_sparsity;
  nlohmann::json labels = nlohmann::json::object();
  for (const auto& pl : r.per_label)
    labels[pl.label] = {{"f1", pl.f1}, {"train_count", pl.train_count}};
  j["per_label"] = labels;
  return j.dump(2);
}

}  // namespace paramask::metrics
