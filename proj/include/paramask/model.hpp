#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "paramask/data.hpp"
#include "paramask/rng.hpp"
#include "paramask/tensor.hpp"

// Hierarchical hard-attention classifier: shared paragraph encoder ->
// two-layer transformer over paragraphs -> K/Q projections -> sigmoid
// attention -> straight-through hard mask -> masked max-pool -> sigmoid head.

namespace paramask::model {

enum class ParagraphEncoder { kMeanEmbedding, kTransformerLayer };

struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t embed_dim = 32;
  std::size_t num_labels = 0;
  std::size_t max_paragraphs = 50;   // N_max
  std::size_t max_tokens = 256;      // L_max per paragraph
  std::size_t context_layers = 2;
  std::size_t attention_heads = 4;
  std::size_t proj_dim = 0;          // K/Q width; 0 means embed_dim
  std::size_t ff_dim = 0;            // transformer feed-forward width; 0 means 2*embed_dim
  ParagraphEncoder paragraph_encoder = ParagraphEncoder::kMeanEmbedding;

  std::size_t proj() const { return proj_dim ? proj_dim : embed_dim; }
  std::size_t ff() const { return ff_dim ? ff_dim : 2 * embed_dim; }
  void validate() const;  // throws UserError

  bool operator==(const ModelConfig&) const = default;
};

struct ParamTensor {
  std::string name;
  ad::Shape shape;
  std::vector<double> value;

  bool operator==(const ParamTensor&) const = default;
};

struct ModelParams {
  ModelConfig config;
  std::vector<ParamTensor> tensors;  // fixed, config-determined order

  ParamTensor& find(const std::string& name);
  const ParamTensor& find(const std::string& name) const;
  std::size_t total_values() const;

  bool operator==(const ModelParams&) const = default;
};

// Deterministic initialization: embeddings and positional tables Gaussian,
// linear layers Glorot-uniform, layer-norm gains one, biases zero except the
// attention bias, which starts positive so the hard mask opens fully.
ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed);

// A case reduced to padded-free token ids, truncated to the config limits
// (first max_paragraphs paragraphs, first max_tokens tokens of each).
struct EncodedCase {
  std::string case_id;
  std::vector<std::vector<int>> token_ids;  // one list per paragraph
  std::vector<double> labels;
  std::optional<std::vector<std::size_t>> silver_rationale;
  std::optional<std::vector<std::size_t>> gold_rationale;

  std::size_t n_paragraphs() const { return token_ids.size(); }
};

EncodedCase encode_case(const data::Case& c, const data::Vocabulary& vocab,
                        const ModelConfig& cfg);

// Every model parameter mirrored onto a tape so gradients accumulate in
// creation order; vars align with ModelParams::tensors.
struct TapeParams {
  std::vector<ad::Var> vars;
  const ModelParams* host = nullptr;

  ad::Var at(const std::string& name) const;
};

TapeParams load_params(ad::Tape& t, const ModelParams& p);

// Context-unaware paragraph embeddings, one row per paragraph.
ad::Var encode_paragraphs(ad::Tape& t, const TapeParams& p, const EncodedCase& c);

// Two transformer layers plus learned paragraph positions.
ad::Var contextualize(ad::Tape& t, const TapeParams& p, ad::Var pcls);

// SELU-activated K (classification) and Q (rationale) projections.
std::pair<ad::Var, ad::Var> project_kq(ad::Tape& t, const TapeParams& p, ad::Var ctx);

// One sigmoid score per paragraph.
ad::Var attention_scores(ad::Tape& t, const TapeParams& p, ad::Var pq);

// D_M[j] = max_i mask_i * PK[i][j]; masked-out rows still contribute zeros.
ad::Var document_repr(ad::Tape& t, ad::Var pk, ad::Var mask);

// Independent label probabilities from the document representation.
ad::Var classify(ad::Tape& t, const TapeParams& p, ad::Var dm);

struct Forward {
  ad::Var attention;  // soft scores a, [N]
  ad::Var mask;       // hard mask Z (or the override constant), [N]
  ad::Var pk;         // [N, proj]
  ad::Var pq;         // [N, proj]
  ad::Var doc_repr;   // [proj]
  ad::Var probs;      // [num_labels]
};

// Full pipeline. With a mask override the threshold is bypassed: the mask
// enters as a constant (Z^c, Z^r, all-ones) while a is still computed and
// reported. Without one, Z = straight-through-threshold(a, 0.5).
Forward forward(ad::Tape& t, const TapeParams& p, const EncodedCase& c,
                const std::optional<std::vector<double>>& mask_override = std::nullopt);

// Binary checkpoint: config header, named tensors, vocabulary and label
// names; round-trips bit-exactly.
void save_checkpoint(const std::string& path, const ModelParams& params,
                     const data::Vocabulary& vocab,
                     const std::vector<std::string>& label_names);

struct Checkpoint {
  ModelParams params;
  data::Vocabulary vocab;
  std::vector<std::string> label_names;
};

Checkpoint load_checkpoint(const std::string& path);

}  // namespace paramask::model
