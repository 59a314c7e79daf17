#include "paramask/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "paramask/errors.hpp"
#include "paramask/gradcheck.hpp"

namespace paramask::training {

namespace L = losses;
namespace M = metrics;
namespace mdl = model;

void TrainConfig::validate() const {
  if (learning_rate <= 0.0) throw UserError("learning_rate must be > 0");
  if (epochs < 1) throw UserError("epochs must be >= 1");
  if (batch_size < 1) throw UserError("batch_size must be >= 1");
  if (beta1 < 0.0 || beta1 >= 1.0) throw UserError("beta1 must be in [0,1)");
  if (beta2 < 0.0 || beta2 >= 1.0) throw UserError("beta2 must be in [0,1)");
  if (adam_eps <= 0.0) throw UserError("adam_eps must be > 0");
  weights.validate();
  model.validate();
}

AdamState init_adam(const mdl::ModelParams& params) {
  AdamState s;
  s.m.reserve(params.tensors.size());
  s.v.reserve(params.tensors.size());
  for (const auto& t : params.tensors) {
    s.m.emplace_back(t.value.size(), 0.0);
    s.v.emplace_back(t.value.size(), 0.0);
  }
  return s;
}

void adam_step(mdl::ModelParams& params, const std::vector<std::vector<double>>& grads,
               AdamState& state, const TrainConfig& cfg) {
  if (grads.size() != params.tensors.size())
    throw std::invalid_argument("adam_step: gradient count does not match tensors");
  ++state.step;
  double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.tensors.size(); ++i) {
    auto& tensor = params.tensors[i];
    if (grads[i].size() != tensor.value.size())
      throw std::invalid_argument("adam_step: gradient size mismatch in " + tensor.name);
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < tensor.value.size(); ++j) {
      double g = grads[i][j];
      if (!std::isfinite(g))
        throw std::runtime_error("adam_step: non-finite gradient in " + tensor.name);
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g;
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g * g;
      double mhat = m[j] / bc1;
      double vhat = v[j] / bc2;
      tensor.value[j] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.adam_eps);
    }
  }
}

namespace {

std::vector<double> complement_of(const std::vector<double>& z) {
  std::vector<double> zc(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) zc[i] = 1.0 - z[i];
  return zc;
}

std::vector<double> dense_mask(const std::vector<std::size_t>& indices, std::size_t n) {
  std::vector<double> z(n, 0.0);
  for (std::size_t i : indices) z[i] = 1.0;
  return z;
}

ad::Var margin_of(ad::Tape& t, L::GVariant variant, ad::Var lp, ad::Var probs, ad::Var dm,
                  ad::Var y, const mdl::Forward& other, ad::Var lp_other, double h) {
  switch (variant) {
    case L::GVariant::kLossMargin:
      return L::comprehensiveness_margin(t, lp, lp_other, h);
    case L::GVariant::kProbMargin:
      return L::comprehensiveness_prob(t, probs, other.probs, y, h);
    case L::GVariant::kReprCosine:
      return L::comprehensiveness_repr(t, dm, other.doc_repr);
  }
  throw std::invalid_argument("unknown comprehensiveness variant");
}

void add_breakdown(L::LossBreakdown& acc, const L::LossBreakdown& b) {
  acc.L_p += b.L_p;
  acc.L_p_c += b.L_p_c;
  acc.L_p_r += b.L_p_r;
  acc.L_s += b.L_s;
  acc.L_c += b.L_c;
  acc.L_g += b.L_g;
  acc.L_r += b.L_r;
  acc.L_sup += b.L_sup;
  acc.L_total += b.L_total;
  acc.g_active = acc.g_active || b.g_active;
  acc.r_active = acc.r_active || b.r_active;
  acc.sup_active = acc.sup_active || b.sup_active;
}

void scale_breakdown(L::LossBreakdown& b, double s) {
  b.L_p *= s;
  b.L_p_c *= s;
  b.L_p_r *= s;
  b.L_s *= s;
  b.L_c *= s;
  b.L_g *= s;
  b.L_r *= s;
  b.L_sup *= s;
  b.L_total *= s;
}

// Objective for one case under the learned hard mask; extra passes only when
// their weight is on. Returns the total-loss var and fills the breakdown.
ad::Var case_objective(ad::Tape& t, const mdl::TapeParams& tp, const mdl::EncodedCase& c,
                       const TrainConfig& cfg, Rng& rng, PassCounters& passes,
                       L::LossBreakdown& bd) {
  auto fwd = mdl::forward(t, tp, c);
  ++passes.learned;
  auto y = t.input({c.labels.size()}, c.labels);
  auto lp = L::classification_loss(t, fwd.probs, y);
  bd.L_p = t.scalar(lp);

  if (cfg.supervision_mode) {
    std::size_t n = c.n_paragraphs();
    auto zs = t.input({n}, dense_mask(*c.silver_rationale, n));
    auto lsup = L::supervision_loss(t, fwd.mask, zs);
    auto total = L::supervised_total(t, lp, lsup, cfg.weights.lambda_ns);
    bd.L_sup = t.scalar(lsup);
    bd.sup_active = true;
    bd.L_total = t.scalar(total);
    return total;
  }

  L::TotalInputs in;
  in.L_p = lp;
  in.L_s = L::sparsity_loss(t, fwd.mask, cfg.weights.T);
  in.L_c = L::continuity_loss(t, fwd.mask);
  bd.L_s = t.scalar(in.L_s);
  bd.L_c = t.scalar(in.L_c);

  if (cfg.weights.lambda_g > 0.0) {
    auto comp = mdl::forward(t, tp, c, complement_of(t.value(fwd.mask)));
    ++passes.complement;
    in.L_p_c = L::classification_loss(t, comp.probs, y);
    in.L_g = margin_of(t, cfg.weights.g_variant, lp, fwd.probs, fwd.doc_repr, y, comp,
                       in.L_p_c, cfg.weights.h);
    bd.L_p_c = t.scalar(in.L_p_c);
    bd.L_g = t.scalar(in.L_g);
    bd.g_active = true;
  }
  if (cfg.weights.lambda_r > 0.0) {
    auto zr = L::random_mask(c.n_paragraphs(), cfg.weights.T, rng);
    auto rnd = mdl::forward(t, tp, c, zr);
    ++passes.random;
    in.L_p_r = L::classification_loss(t, rnd.probs, y);
    auto margin = margin_of(t, cfg.weights.r_variant, lp, fwd.probs, fwd.doc_repr, y, rnd,
                            in.L_p_r, cfg.weights.h);
    auto gamma = L::singularity_scale(t, fwd.mask, t.input({zr.size()}, zr));
    in.L_r = t.mul(gamma, margin);
    bd.L_p_r = t.scalar(in.L_p_r);
    bd.L_r = t.scalar(in.L_r);
    bd.r_active = true;
  }
  auto total = L::total_loss(t, in, cfg.weights);
  bd.L_total = t.scalar(total);
  return total;
}

}  // namespace

void train_epoch(const std::vector<mdl::EncodedCase>& train, mdl::ModelParams& params,
                 const TrainConfig& cfg, AdamState& state, Rng& rng, PassCounters& passes,
                 std::vector<L::LossBreakdown>& steps) {
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);

  std::vector<std::vector<double>> grads(params.tensors.size());
  for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
    std::size_t stop = std::min(order.size(), start + cfg.batch_size);
    for (std::size_t i = 0; i < grads.size(); ++i)
      grads[i].assign(params.tensors[i].value.size(), 0.0);
    L::LossBreakdown batch_bd;
    std::size_t contributing = 0;

    for (std::size_t b = start; b < stop; ++b) {
      const auto& c = train[order[b]];
      if (cfg.supervision_mode && !c.silver_rationale) continue;
      ad::Tape t;
      auto tp = mdl::load_params(t, params);
      L::LossBreakdown bd;
      auto total = case_objective(t, tp, c, cfg, rng, passes, bd);
      if (!std::isfinite(bd.L_total))
        throw std::runtime_error("non-finite loss on case " + c.case_id);
      t.backward(total);
      for (std::size_t i = 0; i < grads.size(); ++i) {
        const auto& g = t.grad(tp.vars[i]);
        for (std::size_t j = 0; j < g.size(); ++j) grads[i][j] += g[j];
      }
      add_breakdown(batch_bd, bd);
      ++contributing;
    }
    if (contributing == 0) continue;
    double inv = 1.0 / static_cast<double>(contributing);
    for (auto& g : grads)
      for (double& v : g) v *= inv;
    scale_breakdown(batch_bd, inv);
    adam_step(params, grads, state, cfg);
    steps.push_back(batch_bd);
  }
}

metrics::EvalReport evaluate(const std::vector<mdl::EncodedCase>& cases,
                             const mdl::ModelParams& params, RationaleRef ref,
                             const std::vector<std::string>* label_names,
                             const std::vector<std::size_t>* train_counts) {
  M::EvalReport rep;
  std::vector<std::vector<double>> full, masked, comp, golds;
  std::vector<std::vector<std::size_t>> rankings, ref_sets;
  std::vector<double> per_case_rf1;
  double sparsity_sum = 0.0;

  for (const auto& c : cases) {
    ad::Tape t;
    auto tp = mdl::load_params(t, params);
    std::size_t n = c.n_paragraphs();
    auto fwd = mdl::forward(t, tp, c);
    auto z = t.value(fwd.mask);
    auto fwd_full = mdl::forward(t, tp, c, std::vector<double>(n, 1.0));
    auto fwd_comp = mdl::forward(t, tp, c, complement_of(z));

    full.push_back(t.value(fwd_full.probs));
    masked.push_back(t.value(fwd.probs));
    comp.push_back(t.value(fwd_comp.probs));
    golds.push_back(c.labels);

    double selected = 0.0;
    for (double v : z) selected += v;
    sparsity_sum += selected / static_cast<double>(n);

    const auto& mask_ref =
        ref == RationaleRef::kSilver ? c.silver_rationale : c.gold_rationale;
    if (mask_ref) {
      per_case_rf1.push_back(M::rationale_f1(z, dense_mask(*mask_ref, n)));
      rankings.push_back(M::rank_selected(t.value(fwd.attention), z));
      ref_sets.push_back(*mask_ref);
    }
  }

  rep.micro_f1_full = M::micro_f1(full, golds);
  rep.micro_f1_masked = M::micro_f1(masked, golds);
  rep.micro_f1_complement = M::micro_f1(comp, golds);

  std::vector<double> pf, po;
  M::collect_gold_pairs(full, masked, golds, pf, po);
  rep.sufficiency = M::mean_prob_drop(pf, po);
  pf.clear();
  po.clear();
  M::collect_gold_pairs(full, comp, golds, pf, po);
  rep.comprehensiveness = M::mean_prob_drop(pf, po);

  if (!per_case_rf1.empty())
    rep.rationale_f1 = std::accumulate(per_case_rf1.begin(), per_case_rf1.end(), 0.0) /
                       static_cast<double>(per_case_rf1.size());
  rep.mean_r_precision = M::mean_r_precision(rankings, ref_sets);
  if (!cases.empty())
    rep.observed_sparsity = 100.0 * sparsity_sum / static_cast<double>(cases.size());

  if (label_names) {
    auto f1s = M::per_label_f1(masked, golds, label_names->size());
    for (std::size_t i = 0; i < label_names->size(); ++i) {
      M::PerLabelF1 pl;
      pl.label = (*label_names)[i];
      pl.f1 = f1s[i];
      if (train_counts && i < train_counts->size()) pl.train_count = (*train_counts)[i];
      rep.per_label.push_back(std::move(pl));
    }
  }
  return rep;
}

bool better_epoch(const M::EvalReport& cand, const M::EvalReport& incumbent, double T) {
  if (cand.micro_f1_masked != incumbent.micro_f1_masked)
    return cand.micro_f1_masked > incumbent.micro_f1_masked;
  return std::fabs(cand.observed_sparsity - 100.0 * T) <
         std::fabs(incumbent.observed_sparsity - 100.0 * T);
}

TrainResult train_model(const std::vector<mdl::EncodedCase>& train,
                        const std::vector<mdl::EncodedCase>& dev, const TrainConfig& cfg) {
  cfg.validate();
  TrainResult r;
  auto params = mdl::init_params(cfg.model, cfg.seed);
  auto state = init_adam(params);
  Rng master(cfg.seed);
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    Rng epoch_rng = master.fork(e + 1);
    train_epoch(train, params, cfg, state, epoch_rng, r.history.passes, r.history.steps);
    auto rep = evaluate(dev, params, RationaleRef::kSilver);
    r.history.dev_reports.push_back(rep);
    if (e == 0 || better_epoch(rep, r.history.dev_reports[r.history.best_epoch], cfg.weights.T)) {
      r.history.best_epoch = e;
      r.best_params = params;
    }
  }
  r.final_params = std::move(params);
  return r;
}

void write_train_log(const std::string& path, const std::vector<L::LossBreakdown>& steps) {
  std::ofstream out(path);
  if (!out) throw UserError("cannot write training log: " + path);
  out << "step\tL_p\tL_p_c\tL_p_r\tL_s\tL_c\tL_g\tL_r\tL_sup\tL_total\n";
  out.precision(10);
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const auto& b = steps[i];
    out << i << '\t' << b.L_p << '\t' << b.L_p_c << '\t' << b.L_p_r << '\t' << b.L_s << '\t'
        << b.L_c << '\t' << b.L_g << '\t' << b.L_r << '\t' << b.L_sup << '\t' << b.L_total
        << '\n';
  }
  if (!out) throw UserError("failed while writing training log: " + path);
}

namespace {

double& weight_by_name(L::LossWeights& w, const std::string& name) {
  if (name == "lambda_s") return w.lambda_s;
  if (name == "lambda_c") return w.lambda_c;
  if (name == "lambda_g") return w.lambda_g;
  if (name == "lambda_r") return w.lambda_r;
  throw UserError("unknown tuning grid \"" + name +
                  "\" (expected lambda_s, lambda_c, lambda_g or lambda_r)");
}

std::size_t grid_rank(const std::string& name) {
  if (name == "lambda_s") return 0;
  if (name == "lambda_c") return 1;
  if (name == "lambda_g") return 2;
  if (name == "lambda_r") return 3;
  return 4;
}

}  // namespace

TuningResult greedy_lambda_tuning(
    const std::vector<mdl::EncodedCase>& train, const std::vector<mdl::EncodedCase>& dev,
    const TrainConfig& base, const std::vector<std::pair<std::string, std::vector<double>>>& grids,
    double tolerance) {
  if (grids.empty()) throw UserError("tuning needs at least one grid");
  std::size_t prev = 0;
  for (const auto& [name, candidates] : grids) {
    std::size_t rank = grid_rank(name);
    if (rank == 4)
      throw UserError("unknown tuning grid \"" + name +
                      "\" (expected lambda_s, lambda_c, lambda_g or lambda_r)");
    if (rank < prev)
      throw UserError("tuning grids must follow the order lambda_s, lambda_c, lambda_g, lambda_r");
    prev = rank;
    if (candidates.empty()) throw UserError("empty candidate list for " + name);
  }

  TuningResult result;
  TrainConfig cfg = base;
  cfg.weights.lambda_s = cfg.weights.lambda_c = cfg.weights.lambda_g = cfg.weights.lambda_r = 0.0;

  auto dev_report = [&](const TrainConfig& c) {
    auto tr = train_model(train, dev, c);
    return evaluate(dev, tr.best_params, RationaleRef::kSilver);
  };
  result.baseline_micro_f1 = dev_report(cfg).micro_f1_masked;

  for (const auto& [name, candidates] : grids) {
    std::size_t first_row = result.table.size();
    for (double v : candidates) {
      TrainConfig trial = cfg;
      weight_by_name(trial.weights, name) = v;
      TuneRow row;
      row.name = name;
      row.value = v;
      row.dev = dev_report(trial);
      result.table.push_back(std::move(row));
    }
    // best silver mRP subject to staying near the baseline micro-F1
    std::size_t winner = first_row;
    bool found = false;
    for (std::size_t i = first_row; i < result.table.size(); ++i) {
      const auto& row = result.table[i];
      if (row.dev.micro_f1_masked + tolerance < result.baseline_micro_f1) continue;
      if (!found || row.dev.mean_r_precision > result.table[winner].dev.mean_r_precision) {
        winner = i;
        found = true;
      }
    }
    if (!found) {
      for (std::size_t i = first_row; i < result.table.size(); ++i)
        if (result.table[i].dev.micro_f1_masked > result.table[winner].dev.micro_f1_masked)
          winner = i;
    }
    result.table[winner].selected = true;
    weight_by_name(cfg.weights, name) = result.table[winner].value;
  }
  result.best = cfg.weights;
  return result;
}

std::string render_tuning_table(const TuningResult& r) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(3);
  os << "baseline micro-F1 (all lambdas 0): " << r.baseline_micro_f1 << "\n";
  os << "lambda    value   micro-F1  selected%  rationale-F1  mRP\n";
  for (const auto& row : r.table) {
    os << row.name << (row.selected ? " *" : "  ") << "  " << row.value << "  "
       << row.dev.micro_f1_masked << "  ";
    os.precision(1);
    os << row.dev.observed_sparsity;
    os.precision(3);
    os << "  " << row.dev.rationale_f1 << "  " << row.dev.mean_r_precision << "\n";
  }
  return os.str();
}

ExperimentResult run_experiment(const std::vector<mdl::EncodedCase>& train,
                                const std::vector<mdl::EncodedCase>& dev,
                                const std::vector<mdl::EncodedCase>& test,
                                const TrainConfig& cfg, std::size_t n_seeds, RationaleRef ref) {
  if (n_seeds < 1) throw UserError("run_experiment needs n_seeds >= 1");
  ExperimentResult r;
  for (std::size_t i = 0; i < n_seeds; ++i) {
    TrainConfig run_cfg = cfg;
    run_cfg.seed = cfg.seed + i;
    auto tr = train_model(train, dev, run_cfg);
    r.runs.push_back(evaluate(test, tr.best_params, ref));
  }
  auto agg = [&](double M::EvalReport::* field) {
    std::vector<double> vals;
    for (const auto& run : r.runs) vals.push_back(run.*field);
    return M::aggregate_runs(vals);
  };
  r.micro_f1_full = agg(&M::EvalReport::micro_f1_full);
  r.micro_f1_masked = agg(&M::EvalReport::micro_f1_masked);
  r.micro_f1_complement = agg(&M::EvalReport::micro_f1_complement);
  r.sufficiency = agg(&M::EvalReport::sufficiency);
  r.comprehensiveness = agg(&M::EvalReport::comprehensiveness);
  r.rationale_f1 = agg(&M::EvalReport::rationale_f1);
  r.mean_r_precision = agg(&M::EvalReport::mean_r_precision);
  r.observed_sparsity = agg(&M::EvalReport::observed_sparsity);
  return r;
}

std::string render_experiment(const ExperimentResult& r) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(3);
  auto line = [&](const char* name, const M::RunAggregate& a) {
    os << name << "  " << a.mean << " +/- " << a.std_dev << "\n";
  };
  os << "runs: " << r.runs.size() << "\n";
  line("micro-F1 full        ", r.micro_f1_full);
  line("micro-F1 masked (Z)  ", r.micro_f1_masked);
  line("micro-F1 compl. (Zc) ", r.micro_f1_complement);
  line("sufficiency          ", r.sufficiency);
  line("comprehensiveness    ", r.comprehensiveness);
  line("rationale F1         ", r.rationale_f1);
  line("mean R-Precision     ", r.mean_r_precision);
  line("selected %           ", r.observed_sparsity);
  return os.str();
}

ad::GradCheckReport surrogate_gradcheck(const mdl::EncodedCase& c,
                                        const mdl::ModelParams& params,
                                        const L::LossWeights& weights, bool supervision_mode,
                                        Rng& rng, double eps) {
  weights.validate();
  if (supervision_mode && !c.silver_rationale)
    throw UserError("surrogate_gradcheck: supervision mode needs a silver rationale");

  // freeze the complement and random masks at the base point
  std::size_t n = c.n_paragraphs();
  std::vector<double> zc, zr;
  {
    ad::Tape t;
    auto tp = mdl::load_params(t, params);
    auto fwd = mdl::forward(t, tp, c);
    zc = complement_of(t.value(fwd.mask));
  }
  if (weights.lambda_r > 0.0) zr = L::random_mask(n, weights.T, rng);

  std::vector<std::vector<double>> values;
  for (const auto& tensor : params.tensors) values.push_back(tensor.value);

  ad::LossFn fn = [&](const std::vector<std::vector<double>>& pv,
                      std::vector<std::vector<double>>* grads) {
    mdl::ModelParams probe = params;
    for (std::size_t i = 0; i < pv.size(); ++i) probe.tensors[i].value = pv[i];
    ad::Tape t;
    auto tp = mdl::load_params(t, probe);

    auto pcls = mdl::encode_paragraphs(t, tp, c);
    auto ctx = mdl::contextualize(t, tp, pcls);
    auto [pk, pq] = mdl::project_kq(t, tp, ctx);
    auto a = mdl::attention_scores(t, tp, pq);
    auto dm = mdl::document_repr(t, pk, a);
    auto probs = mdl::classify(t, tp, dm);
    auto y = t.input({c.labels.size()}, c.labels);
    auto lp = L::classification_loss(t, probs, y);

    ad::Var total;
    if (supervision_mode) {
      auto zs = t.input({n}, dense_mask(*c.silver_rationale, n));
      total = L::supervised_total(t, lp, L::supervision_loss(t, a, zs), weights.lambda_ns);
    } else {
      L::TotalInputs in;
      in.L_p = lp;
      in.L_s = L::sparsity_loss(t, a, weights.T);
      in.L_c = L::continuity_loss(t, a);
      if (weights.lambda_g > 0.0) {
        auto comp = mdl::forward(t, tp, c, zc);
        in.L_p_c = L::classification_loss(t, comp.probs, y);
        in.L_g = margin_of(t, weights.g_variant, lp, probs, dm, y, comp, in.L_p_c, weights.h);
      }
      if (weights.lambda_r > 0.0) {
        auto rnd = mdl::forward(t, tp, c, zr);
        in.L_p_r = L::classification_loss(t, rnd.probs, y);
        auto margin =
            margin_of(t, weights.r_variant, lp, probs, dm, y, rnd, in.L_p_r, weights.h);
        in.L_r = t.mul(L::singularity_scale(t, a, t.input({n}, zr)), margin);
      }
      total = L::total_loss(t, in, weights);
    }
    double v = t.scalar(total);
    if (grads) {
      t.backward(total);
      grads->clear();
      for (auto var : tp.vars) grads->push_back(t.grad(var));
    }
    return v;
  };

  return ad::gradient_check_ladder(fn, values, eps, 4);
}

}  // namespace paramask::training
