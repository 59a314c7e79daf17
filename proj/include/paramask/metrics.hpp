#pragma once

#include <cstddef>
#include <string>
#include <vector>

// Evaluation: classification scores, faithfulness probes and rationale
// quality. Binary vectors are doubles holding exactly 0 or 1; anything above
// 0.5 counts as positive so raw probabilities can be passed directly.

namespace paramask::metrics {

struct RunAggregate {
  double mean = 0.0;
  double std_dev = 0.0;  // population standard deviation
  std::size_t n_runs = 0;
};

struct PerLabelF1 {
  std::string label;
  double f1 = 0.0;
  std::size_t train_count = 0;  // how often the label occurs in training data
};

struct EvalReport {
  double micro_f1_full = 0.0;
  double micro_f1_masked = 0.0;
  double micro_f1_complement = 0.0;
  double sufficiency = 0.0;
  double comprehensiveness = 0.0;
  double rationale_f1 = 0.0;
  double mean_r_precision = 0.0;
  double observed_sparsity = 0.0;  // percent of paragraphs selected
  std::vector<PerLabelF1> per_label;
};

// Pooled micro-F1 over all (case, label) pairs; 1.0 when there are no
// positives on either side.
double micro_f1(const std::vector<std::vector<double>>& preds,
                const std::vector<std::vector<double>>& golds);

// One F1 per label, pooled over cases.
std::vector<double> per_label_f1(const std::vector<std::vector<double>>& preds,
                                 const std::vector<std::vector<double>>& golds,
                                 std::size_t n_labels);

// Gathers the aligned (full, other) probability pairs at gold-positive
// (case, label) positions; cases without positives contribute nothing.
void collect_gold_pairs(const std::vector<std::vector<double>>& probs_full,
                        const std::vector<std::vector<double>>& probs_other,
                        const std::vector<std::vector<double>>& golds,
                        std::vector<double>& out_full, std::vector<double>& out_other);

// Mean of (p_full - p_other) over pooled gold-positive pairs; 0 on empty.
double mean_prob_drop(const std::vector<double>& p_full, const std::vector<double>& p_other);

// Set-based F1 between two masks; 1.0 when both are empty.
double rationale_f1(const std::vector<double>& z_pred, const std::vector<double>& z_gold);

// Indices with z=1 ordered by decreasing score, ties by ascending index.
std::vector<std::size_t> rank_selected(const std::vector<double>& scores,
                                       const std::vector<double>& z);

// Precision@k with k = |gold|, averaged over cases with nonempty gold.
// Rankings shorter than k are penalized (intersection still divided by k).
double mean_r_precision(const std::vector<std::vector<std::size_t>>& rankings,
                        const std::vector<std::vector<std::size_t>>& gold_sets);

// Arithmetic mean and population standard deviation; throws on empty input.
RunAggregate aggregate_runs(const std::vector<double>& values);

// Human-readable score table.
std::string render_table(const EvalReport& r);
// Flat JSON document with one key per score, for machine consumption.
std::string render_kv(const EvalReport& r);

}  // namespace paramask::metrics
