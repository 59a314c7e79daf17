#include "paramask/model.hpp"

#include <cmath>
#include <stdexcept>

#include "paramask/errors.hpp"

namespace paramask::model {

void ModelConfig::validate() const {
  auto count = [](std::size_t v, const char* name) {
    if (v == 0) throw UserError(std::string("model config: ") + name + " must be at least 1");
  };
  count(vocab_size, "vocab_size");
  count(embed_dim, "embed_dim");
  count(num_labels, "num_labels");
  count(max_paragraphs, "max_paragraphs");
  count(max_tokens, "max_tokens");
  count(context_layers, "context_layers");
  count(attention_heads, "attention_heads");
  if (embed_dim % attention_heads != 0)
    throw UserError("model config: embed_dim " + std::to_string(embed_dim) +
                    " not divisible by attention_heads " + std::to_string(attention_heads));
}

ParamTensor& ModelParams::find(const std::string& name) {
  for (auto& t : tensors)
    if (t.name == name) return t;
  throw std::logic_error("model params: no tensor named " + name);
}

const ParamTensor& ModelParams::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return t;
  throw std::logic_error("model params: no tensor named " + name);
}

std::size_t ModelParams::total_values() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.value.size();
  return n;
}

namespace {

void add_layer_tensors(std::vector<ParamTensor>& out, const std::string& prefix,
                       std::size_t d, std::size_t ff) {
  auto mat = [&](const char* n, std::size_t r, std::size_t c) {
    out.push_back({prefix + n, {r, c}, std::vector<double>(r * c, 0.0)});
  };
  auto vec = [&](const char* n, std::size_t l, double fill = 0.0) {
    out.push_back({prefix + n, {l}, std::vector<double>(l, fill)});
  };
  mat("wq", d, d);
  vec("bq", d);
  mat("wk", d, d);
  vec("bk", d);
  mat("wv", d, d);
  vec("bv", d);
  mat("wo", d, d);
  vec("bo", d);
  vec("ln1_g", d, 1.0);
  vec("ln1_b", d);
  mat("ff1_w", d, ff);
  vec("ff1_b", ff);
  mat("ff2_w", ff, d);
  vec("ff2_b", d);
  vec("ln2_g", d, 1.0);
  vec("ln2_b", d);
}

// One post-norm transformer layer over the rows of x.
ad::Var transformer_layer(ad::Tape& t, const TapeParams& p, const std::string& prefix,
                          ad::Var x, std::size_t heads) {
  std::size_t d = t.at(x).cols();
  std::size_t dh = d / heads;
  ad::Var qm = t.add_rowvec(t.matmul(x, p.at(prefix + "wq")), p.at(prefix + "bq"));
  ad::Var km = t.add_rowvec(t.matmul(x, p.at(prefix + "wk")), p.at(prefix + "bk"));
  ad::Var vm = t.add_rowvec(t.matmul(x, p.at(prefix + "wv")), p.at(prefix + "bv"));

  std::vector<ad::Var> head_outs;
  head_outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    ad::Var qh = t.slice_cols(qm, h * dh, dh);
    ad::Var kh = t.slice_cols(km, h * dh, dh);
    ad::Var vh = t.slice_cols(vm, h * dh, dh);
    ad::Var scores = t.scale(t.matmul(qh, t.transpose(kh)), 1.0 / std::sqrt(static_cast<double>(dh)));
    head_outs.push_back(t.matmul(t.softmax_rows(scores), vh));
  }
  ad::Var attn = t.add_rowvec(t.matmul(t.concat_cols(head_outs), p.at(prefix + "wo")),
                              p.at(prefix + "bo"));
  ad::Var x1 = t.layer_norm_rows(t.add(x, attn), p.at(prefix + "ln1_g"), p.at(prefix + "ln1_b"));
  ad::Var ff = t.add_rowvec(
      t.matmul(t.relu(t.add_rowvec(t.matmul(x1, p.at(prefix + "ff1_w")), p.at(prefix + "ff1_b"))),
               p.at(prefix + "ff2_w")),
      p.at(prefix + "ff2_b"));
  return t.layer_norm_rows(t.add(x1, ff), p.at(prefix + "ln2_g"), p.at(prefix + "ln2_b"));
}

}  // namespace

ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ModelParams p;
  p.config = cfg;
  std::size_t d = cfg.embed_dim, proj = cfg.proj(), ff = cfg.ff();

  p.tensors.push_back({"embedding", {cfg.vocab_size, d},
                       std::vector<double>(cfg.vocab_size * d, 0.0)});
  if (cfg.paragraph_encoder == ParagraphEncoder::kTransformerLayer) {
    p.tensors.push_back({"tok_pos", {cfg.max_tokens, d},
                         std::vector<double>(cfg.max_tokens * d, 0.0)});
    add_layer_tensors(p.tensors, "enc.", d, ff);
  }
  p.tensors.push_back({"para_pos", {cfg.max_paragraphs, d},
                       std::vector<double>(cfg.max_paragraphs * d, 0.0)});
  for (std::size_t l = 0; l < cfg.context_layers; ++l)
    add_layer_tensors(p.tensors, "ctx" + std::to_string(l) + ".", d, ff);
  p.tensors.push_back({"k_w", {d, proj}, std::vector<double>(d * proj, 0.0)});
  p.tensors.push_back({"k_b", {proj}, std::vector<double>(proj, 0.0)});
  p.tensors.push_back({"q_w", {d, proj}, std::vector<double>(d * proj, 0.0)});
  p.tensors.push_back({"q_b", {proj}, std::vector<double>(proj, 0.0)});
  p.tensors.push_back({"att_w", {proj, 1}, std::vector<double>(proj, 0.0)});
  p.tensors.push_back({"att_b", {1}, std::vector<double>(1, 0.0)});
  p.tensors.push_back({"cls_w", {proj, cfg.num_labels},
                       std::vector<double>(proj * cfg.num_labels, 0.0)});
  p.tensors.push_back({"cls_b", {cfg.num_labels}, std::vector<double>(cfg.num_labels, 0.0)});

  Rng rng(seed);
  for (auto& tensor : p.tensors) {
    const std::string& n = tensor.name;
    bool is_matrix = tensor.shape.size() == 2;
    bool is_embedding = n == "embedding";
    bool is_positional = n == "tok_pos" || n == "para_pos";
    bool is_gain = n.size() >= 5 && n.compare(n.size() - 2, 2, "_g") == 0 &&
                   n.find("ln") != std::string::npos;
    if (is_embedding) {
      for (double& v : tensor.value) v = 0.1 * rng.normal();
    } else if (is_positional) {
      for (double& v : tensor.value) v = 0.02 * rng.normal();
    } else if (n == "att_w") {
      // small scale + positive bias: every paragraph starts selected, so early
      // training matches the full-input regime; if the mask can collapse to
      // zero before the classifier is informative, nothing revives it (a zero
      // doc-repr sends no per-paragraph signal) and training deadlocks
      double limit = 0.1 * std::sqrt(6.0 / static_cast<double>(tensor.shape[0] + tensor.shape[1]));
      for (double& v : tensor.value) v = rng.uniform(-limit, limit);
    } else if (n == "att_b") {
      tensor.value[0] = 4.0;
    } else if (is_matrix) {
      double limit = std::sqrt(6.0 / static_cast<double>(tensor.shape[0] + tensor.shape[1]));
      for (double& v : tensor.value) v = rng.uniform(-limit, limit);
    } else if (is_gain) {
      // keep ones from construction
    }
    // remaining vectors are biases, kept zero
  }
  return p;
}

EncodedCase encode_case(const data::Case& c, const data::Vocabulary& vocab,
                        const ModelConfig& cfg) {
  if (c.facts.empty())
    throw std::invalid_argument("encode_case: case " + c.case_id + " has no paragraphs");
  EncodedCase e;
  e.case_id = c.case_id;
  e.labels = c.labels;
  std::size_t n = std::min(c.facts.size(), cfg.max_paragraphs);
  e.token_ids.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto ids = vocab.encode(c.facts[i], cfg.max_tokens);
    if (ids.empty()) ids.push_back(data::Vocabulary::kPad);
    e.token_ids.push_back(std::move(ids));
  }
  // drop rationale indices that point at truncated paragraphs
  auto clip = [n](const std::optional<std::vector<std::size_t>>& r) {
    std::optional<std::vector<std::size_t>> out;
    if (r) {
      out.emplace();
      for (std::size_t i : *r)
        if (i < n) out->push_back(i);
    }
    return out;
  };
  e.silver_rationale = clip(c.silver_rationale);
  e.gold_rationale = clip(c.gold_rationale);
  return e;
}

ad::Var TapeParams::at(const std::string& name) const {
  for (std::size_t i = 0; i < host->tensors.size(); ++i)
    if (host->tensors[i].name == name) return vars[i];
  throw std::logic_error("tape params: no tensor named " + name);
}

TapeParams load_params(ad::Tape& t, const ModelParams& p) {
  TapeParams tp;
  tp.host = &p;
  tp.vars.reserve(p.tensors.size());
  for (const auto& tensor : p.tensors) tp.vars.push_back(t.input(tensor.shape, tensor.value));
  return tp;
}

ad::Var encode_paragraphs(ad::Tape& t, const TapeParams& p, const EncodedCase& c) {
  if (c.token_ids.empty())
    throw std::invalid_argument("encode_paragraphs: case has no paragraphs");
  const ModelConfig& cfg = p.host->config;
  ad::Var emb = p.at("embedding");

  std::vector<ad::Var> rows;
  rows.reserve(c.token_ids.size());
  for (const auto& ids : c.token_ids) {
    std::vector<std::size_t> idx(ids.begin(), ids.end());
    ad::Var tok = t.gather_rows(emb, std::move(idx));
    if (cfg.paragraph_encoder == ParagraphEncoder::kTransformerLayer) {
      ad::Var pos = t.slice_rows(p.at("tok_pos"), 0, ids.size());
      tok = transformer_layer(t, p, "enc.", t.add(tok, pos), cfg.attention_heads);
    }
    rows.push_back(t.reshape(t.row_mean(tok), {1, cfg.embed_dim}));
  }
  return t.concat_rows(rows);
}

ad::Var contextualize(ad::Tape& t, const TapeParams& p, ad::Var pcls) {
  const ModelConfig& cfg = p.host->config;
  std::size_t n = t.at(pcls).rows();
  if (n > cfg.max_paragraphs)
    throw std::invalid_argument("contextualize: " + std::to_string(n) +
                                " paragraphs exceed the positional table (" +
                                std::to_string(cfg.max_paragraphs) + ")");
  ad::Var x = t.add(pcls, t.slice_rows(p.at("para_pos"), 0, n));
  for (std::size_t l = 0; l < cfg.context_layers; ++l)
    x = transformer_layer(t, p, "ctx" + std::to_string(l) + ".", x, cfg.attention_heads);
  return x;
}

std::pair<ad::Var, ad::Var> project_kq(ad::Tape& t, const TapeParams& p, ad::Var ctx) {
  ad::Var pk = t.selu(t.add_rowvec(t.matmul(ctx, p.at("k_w")), p.at("k_b")));
  ad::Var pq = t.selu(t.add_rowvec(t.matmul(ctx, p.at("q_w")), p.at("q_b")));
  return {pk, pq};
}

ad::Var attention_scores(ad::Tape& t, const TapeParams& p, ad::Var pq) {
  std::size_t n = t.at(pq).rows();
  ad::Var logits = t.add_rowvec(t.matmul(pq, p.at("att_w")), p.at("att_b"));
  return t.sigmoid(t.reshape(logits, {n}));
}

ad::Var document_repr(ad::Tape& t, ad::Var pk, ad::Var mask) {
  return t.maxpool(t.scale_rows(pk, mask), 0);
}

ad::Var classify(ad::Tape& t, const TapeParams& p, ad::Var dm) {
  const ModelConfig& cfg = p.host->config;
  ad::Var row = t.reshape(dm, {1, t.at(dm).value.size()});
  ad::Var logits = t.add_rowvec(t.matmul(row, p.at("cls_w")), p.at("cls_b"));
  return t.reshape(t.sigmoid(logits), {cfg.num_labels});
}

Forward forward(ad::Tape& t, const TapeParams& p, const EncodedCase& c,
                const std::optional<std::vector<double>>& mask_override) {
  Forward f;
  ad::Var pcls = encode_paragraphs(t, p, c);
  ad::Var ctx = contextualize(t, p, pcls);
  auto [pk, pq] = project_kq(t, p, ctx);
  f.pk = pk;
  f.pq = pq;
  f.attention = attention_scores(t, p, pq);
  if (mask_override) {
    if (mask_override->size() != c.n_paragraphs())
      throw std::invalid_argument("forward: mask override length " +
                                  std::to_string(mask_override->size()) + " for " +
                                  std::to_string(c.n_paragraphs()) + " paragraphs");
    f.mask = t.input({mask_override->size()}, *mask_override);
  } else {
    f.mask = t.threshold_st(f.attention, 0.5);
  }
  f.doc_repr = document_repr(t, f.pk, f.mask);
  f.probs = classify(t, p, f.doc_repr);
  return f;
}

}  // namespace paramask::model
