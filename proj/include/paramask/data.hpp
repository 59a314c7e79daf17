#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "paramask/rng.hpp"

namespace paramask::data {

enum class Split { kTrain, kDev, kTest };

std::string split_name(Split s);
Split parse_split(const std::string& s);  // throws UserError on unknown name

struct Case {
  std::string case_id;
  std::vector<std::string> facts;       // ordered paragraphs
  std::vector<double> labels;           // multi-hot over the label set
  std::optional<std::vector<std::size_t>> silver_rationale;  // sorted indices
  std::optional<std::vector<std::size_t>> gold_rationale;
  Split split = Split::kTrain;

  bool operator==(const Case&) const = default;
};

// The 40 violable Convention and Protocol articles the label set covers.
const std::vector<std::string>& default_articles();

// Label names of a synthetic corpus with n articles: A1..An.
std::vector<std::string> synth_label_names(std::size_t n);

// Line-delimited records with keys facts / labels / silver_rationales /
// gold_rationales (case_id and split are optional). Labels are article names
// resolved against label_names; unknown names fail listing every offender.
std::vector<Case> load_corpus(const std::string& path,
                              const std::vector<std::string>& label_names);
void write_corpus(const std::string& path, const std::vector<Case>& cases,
                  const std::vector<std::string>& label_names);

// 0-based fact indices referenced from decision text ("See paragraphs 2 and
// 4.", comma lists, ranges "10-12"). References beyond n_facts are dropped.
std::vector<std::size_t> extract_silver_rationales(const std::string& decision_text,
                                                   std::size_t n_facts);

// Renders an index set the way decisions cite it, 1-based.
std::string render_references(const std::vector<std::size_t>& indices);

struct CorpusStats {
  std::size_t n_cases = 0;
  double mean_facts = 0.0;
  double silver_sparsity_pct = 0.0;  // mean of |silver| / n_facts * 100
  double mean_allegations = 0.0;     // mean count of positive labels
  std::vector<std::size_t> label_counts;
};

CorpusStats corpus_stats(const std::vector<Case>& cases, std::size_t n_labels);
std::string render_stats(const CorpusStats& s, const std::vector<std::string>& label_names);

struct Vocabulary {
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;

  std::vector<std::string> id_to_token;  // [0]="<pad>", [1]="<unk>"
  std::unordered_map<std::string, int> token_to_id;

  std::size_t size() const { return id_to_token.size(); }
  int lookup(const std::string& token) const;
  // Lowercased alphanumeric tokens, truncated to max_tokens (0 = no limit).
  std::vector<int> encode(const std::string& text, std::size_t max_tokens) const;
};

std::vector<std::string> tokenize(const std::string& text);

// Frequency-sorted vocabulary from the given cases (train split only, by
// convention of the caller); tokens seen fewer than min_freq times are left
// to UNK.
Vocabulary build_vocabulary(const std::vector<Case>& cases, std::size_t min_freq);

struct SynthConfig {
  std::size_t n_cases = 100;
  std::size_t n_paragraphs = 10;  // per case
  std::size_t n_labels = 4;
  std::size_t vocab_size = 50;    // filler tokens
  std::size_t triggers_per_label = 2;
  std::size_t para_len = 10;      // filler tokens per paragraph
  double sparsity = 0.3;          // fraction of planted rationale paragraphs
  double noise = 0.0;             // decoy-trigger rate on non-rationale paragraphs
  std::uint64_t seed = 1;

  void validate() const;  // throws UserError
};

// Planted-rationale corpus: every rationale paragraph carries two trigger
// tokens of one sampled label, decoy paragraphs (rate = noise) carry a single
// trigger of a non-label article. Labels are the union of planted triggers,
// gold is the planted set, silver is gold with one index dropped and one
// non-gold paragraph added.
std::vector<Case> generate_synthetic(const SynthConfig& cfg, Split split);

}  // namespace paramask::data
