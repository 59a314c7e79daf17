#include <algorithm>
#include <cmath>
#include <sstream>

#include "paramask/data.hpp"
#include "paramask/errors.hpp"

namespace paramask::data {

void SynthConfig::validate() const {
  if (n_cases == 0) throw UserError("synth: n_cases must be positive");
  if (n_paragraphs < 2) throw UserError("synth: need at least 2 paragraphs per case");
  if (n_labels < 2) throw UserError("synth: need at least 2 labels (decoys use another article)");
  if (vocab_size == 0) throw UserError("synth: vocab_size must be positive");
  if (triggers_per_label == 0) throw UserError("synth: triggers_per_label must be positive");
  if (para_len == 0) throw UserError("synth: para_len must be positive");
  if (!(sparsity > 0.0 && sparsity < 1.0))
    throw UserError("synth: sparsity must lie in (0,1), got " + std::to_string(sparsity));
  if (!(noise >= 0.0 && noise < 1.0))
    throw UserError("synth: noise must lie in [0,1), got " + std::to_string(noise));
}

namespace {

// Token universe depends only on the config, never on the seed, so corpora
// generated with different seeds share one vocabulary (train/dev/test).
std::string filler_token(std::size_t i) { return "w" + std::to_string(i); }

std::string trigger_token(const std::string& label, std::size_t j) {
  return "trig" + label + "x" + std::to_string(j);
}

std::string join_paragraph(std::vector<std::string> tokens) {
  std::ostringstream os;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) os << ' ';
    os << tokens[i];
  }
  os << '.';
  return os.str();
}

}  // namespace

std::vector<Case> generate_synthetic(const SynthConfig& cfg, Split split) {
  cfg.validate();
  auto labels = synth_label_names(cfg.n_labels);

  // guard against a filler/trigger collision if the naming scheme changes
  for (const auto& l : labels)
    for (std::size_t j = 0; j < cfg.triggers_per_label; ++j)
      if (trigger_token(l, j).rfind("w", 0) == 0)
        throw UserError("synth: trigger token collides with filler namespace");

  Rng rng(cfg.seed);
  auto n_gold = std::max<std::size_t>(
      1, static_cast<std::size_t>(
             std::llround(cfg.sparsity * static_cast<double>(cfg.n_paragraphs))));
  n_gold = std::min(n_gold, cfg.n_paragraphs - 1);  // keep at least one non-gold

  std::vector<Case> cases;
  cases.reserve(cfg.n_cases);
  for (std::size_t ci = 0; ci < cfg.n_cases; ++ci) {
    Case c;
    c.case_id = "synth-" + split_name(split) + "-" + std::to_string(ci);
    c.split = split;
    c.labels.assign(cfg.n_labels, 0.0);

    auto gold = rng.sample_without_replacement(cfg.n_paragraphs, n_gold);
    std::sort(gold.begin(), gold.end());
    std::vector<bool> is_gold(cfg.n_paragraphs, false);
    for (std::size_t g : gold) is_gold[g] = true;

    // one label per rationale paragraph; the case's labels are their union
    std::vector<std::size_t> para_label(cfg.n_paragraphs, 0);
    for (std::size_t g : gold) {
      std::size_t l = rng.uniform_index(cfg.n_labels);
      para_label[g] = l;
      c.labels[l] = 1.0;
    }

    std::vector<std::size_t> decoys;
    c.facts.reserve(cfg.n_paragraphs);
    for (std::size_t p = 0; p < cfg.n_paragraphs; ++p) {
      std::vector<std::string> tokens;
      tokens.reserve(cfg.para_len + 2);
      for (std::size_t t = 0; t < cfg.para_len; ++t)
        tokens.push_back(filler_token(rng.uniform_index(cfg.vocab_size)));

      if (is_gold[p]) {
        // two trigger mentions mark a real rationale paragraph
        const auto& label = labels[para_label[p]];
        std::size_t j0 = rng.uniform_index(cfg.triggers_per_label);
        std::size_t j1 = cfg.triggers_per_label > 1
                             ? (j0 + 1 + rng.uniform_index(cfg.triggers_per_label - 1)) %
                                   cfg.triggers_per_label
                             : j0;
        tokens.insert(tokens.begin() + rng.uniform_index(tokens.size() + 1),
                      trigger_token(label, j0));
        tokens.insert(tokens.begin() + rng.uniform_index(tokens.size() + 1),
                      trigger_token(label, j1));
      } else if (rng.uniform() < cfg.noise) {
        // decoy: one mention of an article the case does not allege
        std::vector<std::size_t> others;
        for (std::size_t l = 0; l < cfg.n_labels; ++l)
          if (c.labels[l] < 0.5) others.push_back(l);
        if (!others.empty()) {
          std::size_t l = others[rng.uniform_index(others.size())];
          std::size_t j = rng.uniform_index(cfg.triggers_per_label);
          tokens.insert(tokens.begin() + rng.uniform_index(tokens.size() + 1),
                        trigger_token(labels[l], j));
          decoys.push_back(p);
        }
      }
      c.facts.push_back(join_paragraph(std::move(tokens)));
    }

    c.gold_rationale = gold;

    // silver mimics incomplete references: drop one gold index, add one
    // non-gold paragraph (a decoy when available)
    std::vector<std::size_t> silver = gold;
    silver.erase(silver.begin() + static_cast<long>(rng.uniform_index(silver.size())));
    std::vector<std::size_t> addable = decoys;
    if (addable.empty())
      for (std::size_t p = 0; p < cfg.n_paragraphs; ++p)
        if (!is_gold[p]) addable.push_back(p);
    if (!addable.empty()) silver.push_back(addable[rng.uniform_index(addable.size())]);
    std::sort(silver.begin(), silver.end());
    silver.erase(std::unique(silver.begin(), silver.end()), silver.end());
    c.silver_rationale = std::move(silver);

    cases.push_back(std::move(c));
  }
  return cases;
}

}  // namespace paramask::data
