#include "paramask/config.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"
#include "paramask/errors.hpp"

namespace paramask::config {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& origin, const std::string& what) {
  throw UserError(origin + ": " + what);
}

void reject_unknown(const json& j, const std::string& origin, const std::string& section,
                    std::initializer_list<const char*> known) {
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok)
      fail(origin, "unknown key \"" + key + "\" in " + section);
  }
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& origin,
          const std::string& section) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    fail(origin, std::string("bad value for \"") + key + "\" in " + section);
  }
}

void read_enum(const json& j, const char* key, model::ParagraphEncoder& out,
               const std::string& origin) {
  if (!j.contains(key)) return;
  std::string name;
  read(j, key, name, origin, "model");
  out = parse_encoder(name);
}

void read_enum(const json& j, const char* key, losses::GVariant& out,
               const std::string& origin) {
  if (!j.contains(key)) return;
  std::string name;
  read(j, key, name, origin, "loss");
  out = parse_variant(name);
}

}  // namespace

model::ParagraphEncoder parse_encoder(const std::string& name) {
  if (name == "mean") return model::ParagraphEncoder::kMeanEmbedding;
  if (name == "transformer") return model::ParagraphEncoder::kTransformerLayer;
  throw UserError("unknown paragraph_encoder \"" + name + "\" (mean or transformer)");
}

losses::GVariant parse_variant(const std::string& name) {
  if (name == "loss") return losses::GVariant::kLossMargin;
  if (name == "prob") return losses::GVariant::kProbMargin;
  if (name == "repr") return losses::GVariant::kReprCosine;
  throw UserError("unknown margin variant \"" + name + "\" (loss, prob or repr)");
}

std::vector<std::string> resolve_labels(const std::string& spec) {
  if (spec == "articles") return data::default_articles();
  if (spec.rfind("synth:", 0) == 0) {
    std::size_t n = 0;
    try {
      n = std::stoul(spec.substr(6));
    } catch (const std::exception&) {
      throw UserError("bad label spec \"" + spec + "\"");
    }
    if (n == 0) throw UserError("label spec needs at least one label: " + spec);
    return data::synth_label_names(n);
  }
  throw UserError("unknown label spec \"" + spec + "\" (articles or synth:<n>)");
}

FileConfig parse_config(const std::string& text, const std::string& origin) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(origin, std::string("not valid JSON: ") + e.what());
  }
  if (!j.is_object()) fail(origin, "top level must be an object");
  reject_unknown(j, origin, "the top level",
                 {"model", "train", "loss", "synth", "tune", "labels", "vocab_min_freq"});

  FileConfig cfg;
  read(j, "labels", cfg.labels, origin, "the top level");
  read(j, "vocab_min_freq", cfg.vocab_min_freq, origin, "the top level");

  if (j.contains("model")) {
    const auto& m = j.at("model");
    reject_unknown(m, origin, "model",
                   {"embed_dim", "max_paragraphs", "max_tokens", "context_layers",
                    "attention_heads", "proj_dim", "ff_dim", "paragraph_encoder"});
    auto& mc = cfg.train.model;
    read(m, "embed_dim", mc.embed_dim, origin, "model");
    read(m, "max_paragraphs", mc.max_paragraphs, origin, "model");
    read(m, "max_tokens", mc.max_tokens, origin, "model");
    read(m, "context_layers", mc.context_layers, origin, "model");
    read(m, "attention_heads", mc.attention_heads, origin, "model");
    read(m, "proj_dim", mc.proj_dim, origin, "model");
    read(m, "ff_dim", mc.ff_dim, origin, "model");
    read_enum(m, "paragraph_encoder", mc.paragraph_encoder, origin);
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    reject_unknown(t, origin, "train",
                   {"learning_rate", "batch_size", "epochs", "seed", "beta1", "beta2",
                    "adam_eps", "supervision_mode"});
    read(t, "learning_rate", cfg.train.learning_rate, origin, "train");
    read(t, "batch_size", cfg.train.batch_size, origin, "train");
    read(t, "epochs", cfg.train.epochs, origin, "train");
    read(t, "seed", cfg.train.seed, origin, "train");
    read(t, "beta1", cfg.train.beta1, origin, "train");
    read(t, "beta2", cfg.train.beta2, origin, "train");
    read(t, "adam_eps", cfg.train.adam_eps, origin, "train");
    read(t, "supervision_mode", cfg.train.supervision_mode, origin, "train");
  }
  if (j.contains("loss")) {
    const auto& l = j.at("loss");
    reject_unknown(l, origin, "loss",
                   {"lambda_s", "lambda_c", "lambda_g", "lambda_r", "lambda_ns", "T", "h",
                    "g_variant", "r_variant"});
    auto& w = cfg.train.weights;
    read(l, "lambda_s", w.lambda_s, origin, "loss");
    read(l, "lambda_c", w.lambda_c, origin, "loss");
    read(l, "lambda_g", w.lambda_g, origin, "loss");
    read(l, "lambda_r", w.lambda_r, origin, "loss");
    read(l, "lambda_ns", w.lambda_ns, origin, "loss");
    read(l, "T", w.T, origin, "loss");
    read(l, "h", w.h, origin, "loss");
    read_enum(l, "g_variant", w.g_variant, origin);
    read_enum(l, "r_variant", w.r_variant, origin);
  }
  if (j.contains("synth")) {
    const auto& s = j.at("synth");
    reject_unknown(s, origin, "synth",
                   {"n_cases", "n_paragraphs", "n_labels", "vocab_size",
                    "triggers_per_label", "para_len", "sparsity", "noise", "seed"});
    read(s, "n_cases", cfg.synth.n_cases, origin, "synth");
    read(s, "n_paragraphs", cfg.synth.n_paragraphs, origin, "synth");
    read(s, "n_labels", cfg.synth.n_labels, origin, "synth");
    read(s, "vocab_size", cfg.synth.vocab_size, origin, "synth");
    read(s, "triggers_per_label", cfg.synth.triggers_per_label, origin, "synth");
    read(s, "para_len", cfg.synth.para_len, origin, "synth");
    read(s, "sparsity", cfg.synth.sparsity, origin, "synth");
    read(s, "noise", cfg.synth.noise, origin, "synth");
    read(s, "seed", cfg.synth.seed, origin, "synth");
  }
  if (j.contains("tune")) {
    const auto& t = j.at("tune");
    reject_unknown(t, origin, "tune", {"grids", "tolerance"});
    read(t, "tolerance", cfg.tune_tolerance, origin, "tune");
    if (t.contains("grids")) {
      if (!t.at("grids").is_array()) fail(origin, "tune.grids must be an array");
      for (const auto& g : t.at("grids")) {
        reject_unknown(g, origin, "tune.grids", {"name", "values"});
        std::string name;
        std::vector<double> values;
        read(g, "name", name, origin, "tune.grids");
        read(g, "values", values, origin, "tune.grids");
        if (name.empty()) fail(origin, "tune.grids entry without a name");
        cfg.grids.emplace_back(std::move(name), std::move(values));
      }
    }
  }
  return cfg;
}

FileConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UserError("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

}  // namespace paramask::config
