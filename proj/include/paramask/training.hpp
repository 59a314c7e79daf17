#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "paramask/gradcheck.hpp"
#include "paramask/losses.hpp"
#include "paramask/metrics.hpp"
#include "paramask/model.hpp"
#include "paramask/rng.hpp"

// Optimization and experiment orchestration: Adam, the per-case forward
// passes for Z / Z^c / Z^r, greedy lambda tuning and multi-seed aggregation.

namespace paramask::training {

struct TrainConfig {
  model::ModelConfig model;
  losses::LossWeights weights;
  double learning_rate = 1e-3;  // desk-scale default; preset "paper" uses 2e-5
  std::size_t batch_size = 16;
  std::size_t epochs = 10;
  std::uint64_t seed = 42;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  bool supervision_mode = false;  // mask supervision instead of regularizers

  void validate() const;  // throws UserError
};

// First/second moment buffers aligned with ModelParams::tensors.
struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::uint64_t step = 0;
};

AdamState init_adam(const model::ModelParams& params);

// One bias-corrected update; throws std::runtime_error naming the tensor
// when a gradient is not finite.
void adam_step(model::ModelParams& params, const std::vector<std::vector<double>>& grads,
               AdamState& state, const TrainConfig& cfg);

// Forward-pass bookkeeping: the complement and random counters must stay
// zero while their lambdas are zero.
struct PassCounters {
  std::size_t learned = 0;
  std::size_t complement = 0;
  std::size_t random = 0;
};

struct TrainHistory {
  std::vector<losses::LossBreakdown> steps;      // one per optimizer step
  std::vector<metrics::EvalReport> dev_reports;  // one per epoch
  std::size_t best_epoch = 0;                    // argmax dev masked micro-F1
  PassCounters passes;
};

// Which reference mask rationale_f1 / mean_r_precision compare against;
// cases lacking that mask are skipped.
enum class RationaleRef { kSilver, kGold };

// Frozen-parameter evaluation. Per case: a full-input pass, a learned-mask
// pass and a complement pass feed the classification, faithfulness and
// rationale metrics. Per-label F1 (over the masked pass) is filled when
// label_names is given; train_counts, when present, must align with it.
metrics::EvalReport evaluate(const std::vector<model::EncodedCase>& cases,
                             const model::ModelParams& params, RationaleRef ref,
                             const std::vector<std::string>* label_names = nullptr,
                             const std::vector<std::size_t>* train_counts = nullptr);

// One pass over the training cases in a freshly shuffled order, one Adam
// step per batch of per-case-mean gradients. rng drives the shuffle and the
// Z^r draws. In supervision mode cases without a silver mask are skipped.
void train_epoch(const std::vector<model::EncodedCase>& train, model::ModelParams& params,
                 const TrainConfig& cfg, AdamState& state, Rng& rng, PassCounters& passes,
                 std::vector<losses::LossBreakdown>& steps);

struct TrainResult {
  model::ModelParams best_params;   // snapshot at history.best_epoch
  model::ModelParams final_params;  // after the last epoch
  TrainHistory history;
};

// Epoch selection order: higher dev masked micro-F1 wins; an exact tie goes
// to the epoch whose selection rate sits closest to the sparsity target T,
// so saturated accuracy cannot freeze selection before pruning settles.
bool better_epoch(const metrics::EvalReport& cand, const metrics::EvalReport& incumbent,
                  double T);

// Full run: init from cfg.seed, cfg.epochs epochs, dev evaluation after each,
// best epoch kept by better_epoch over dev reports.
TrainResult train_model(const std::vector<model::EncodedCase>& train,
                        const std::vector<model::EncodedCase>& dev, const TrainConfig& cfg);

// Tab-separated log, one loss-breakdown line per optimizer step.
void write_train_log(const std::string& path, const std::vector<losses::LossBreakdown>& steps);

struct TuneRow {
  std::string name;   // which lambda
  double value = 0.0; // candidate weight
  metrics::EvalReport dev;
  bool selected = false;
};

struct TuningResult {
  losses::LossWeights best;
  std::vector<TuneRow> table;
  double baseline_micro_f1 = 0.0;  // dev masked micro-F1 with every lambda 0
};

// Greedy search: one lambda at a time in grid order (lambda_s, lambda_c,
// lambda_g, lambda_r; subsets allowed), untuned lambdas held at zero, each
// fixed at the winner before the next grid. A candidate wins by the best dev
// silver mRP among those whose dev masked micro-F1 stays within `tolerance`
// of the all-zero baseline; if none qualifies the best micro-F1 wins.
TuningResult greedy_lambda_tuning(
    const std::vector<model::EncodedCase>& train, const std::vector<model::EncodedCase>& dev,
    const TrainConfig& base,
    const std::vector<std::pair<std::string, std::vector<double>>>& grids,
    double tolerance = 0.01);

std::string render_tuning_table(const TuningResult& r);

struct ExperimentResult {
  std::vector<metrics::EvalReport> runs;  // one per seed, on the test split
  metrics::RunAggregate micro_f1_full;
  metrics::RunAggregate micro_f1_masked;
  metrics::RunAggregate micro_f1_complement;
  metrics::RunAggregate sufficiency;
  metrics::RunAggregate comprehensiveness;
  metrics::RunAggregate rationale_f1;
  metrics::RunAggregate mean_r_precision;
  metrics::RunAggregate observed_sparsity;
};

// Trains n_seeds models with seeds cfg.seed, cfg.seed+1, ... and aggregates
// their test reports to mean and population std.
ExperimentResult run_experiment(const std::vector<model::EncodedCase>& train,
                                const std::vector<model::EncodedCase>& dev,
                                const std::vector<model::EncodedCase>& test,
                                const TrainConfig& cfg, std::size_t n_seeds, RationaleRef ref);

std::string render_experiment(const ExperimentResult& r);

// Finite-difference check of the assembled objective on one case, with the
// attention standing in for the hard mask so the computation is smooth; the
// complement mask is frozen at the base point and Z^r is drawn once from
// rng. In supervision mode the case must carry a silver mask. Runs the
// step-size ladder from eps downward; the report locates the worst component
// (parameter tensor index aligned with ModelParams::tensors).
ad::GradCheckReport surrogate_gradcheck(const model::EncodedCase& c,
                                        const model::ModelParams& params,
                                        const losses::LossWeights& weights,
                                        bool supervision_mode, Rng& rng, double eps = 1e-3);

}  // namespace paramask::training
