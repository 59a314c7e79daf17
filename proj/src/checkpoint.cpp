#include <bit>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "paramask/errors.hpp"
#include "paramask/model.hpp"

// Checkpoint layout (all integers little-endian):
//   magic "PMCK", version u32
//   ModelConfig: nine u64 counts + encoder enum u32
//   tensors: count u32, then per tensor name, rank u32, dims u64[], values
//     as raw IEEE-754 bit patterns (u64) so round-trips are bit-exact
//   vocabulary tokens in id order, then label names

namespace paramask::model {

namespace {

constexpr char kMagic[4] = {'P', 'M', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  explicit Writer(const std::string& path) : out_(path, std::ios::binary) {
    if (!out_) throw UserError("cannot write checkpoint " + path);
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.put(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.put(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void raw(const char* p, std::size_t n) { out_.write(p, static_cast<std::streamsize>(n)); }
  bool ok() const { return static_cast<bool>(out_); }

 private:
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw UserError("cannot open checkpoint " + path);
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(byte()) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(byte()) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    std::uint32_t n = u32();
    std::string s(n, '\0');
    if (n && !in_.read(s.data(), n)) truncated();
    return s;
  }
  char str_byte() { return static_cast<char>(byte()); }

 private:
  std::uint8_t byte() {
    int c = in_.get();
    if (c == EOF) truncated();
    return static_cast<std::uint8_t>(c);
  }
  [[noreturn]] void truncated() { throw UserError("checkpoint " + path_ + " is truncated"); }

  std::string path_;
  std::ifstream in_;
};

}  // namespace

void save_checkpoint(const std::string& path, const ModelParams& params,
                     const data::Vocabulary& vocab,
                     const std::vector<std::string>& label_names) {
  Writer w(path);
  w.raw(kMagic, 4);
  w.u32(kVersion);

  const ModelConfig& c = params.config;
  w.u64(c.vocab_size);
  w.u64(c.embed_dim);
  w.u64(c.num_labels);
  w.u64(c.max_paragraphs);
  w.u64(c.max_tokens);
  w.u64(c.context_layers);
  w.u64(c.attention_heads);
  w.u64(c.proj_dim);
  w.u64(c.ff_dim);
  w.u32(c.paragraph_encoder == ParagraphEncoder::kMeanEmbedding ? 0u : 1u);

  w.u32(static_cast<std::uint32_t>(params.tensors.size()));
  for (const auto& t : params.tensors) {
    w.str(t.name);
    w.u32(static_cast<std::uint32_t>(t.shape.size()));
    for (std::size_t d : t.shape) w.u64(d);
    for (double v : t.value) w.f64(v);
  }

  w.u32(static_cast<std::uint32_t>(vocab.id_to_token.size()));
  for (const auto& tok : vocab.id_to_token) w.str(tok);
  w.u32(static_cast<std::uint32_t>(label_names.size()));
  for (const auto& l : label_names) w.str(l);
  if (!w.ok()) throw UserError("short write on checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  Reader r(path);
  for (char expect : kMagic)
    if (r.str_byte() != expect) throw UserError("not a checkpoint file: " + path);
  auto version = r.u32();
  if (version != kVersion)
    throw UserError("unsupported checkpoint version " + std::to_string(version) + " in " + path);

  Checkpoint ck;
  ModelConfig& c = ck.params.config;
  c.vocab_size = r.u64();
  c.embed_dim = r.u64();
  c.num_labels = r.u64();
  c.max_paragraphs = r.u64();
  c.max_tokens = r.u64();
  c.context_layers = r.u64();
  c.attention_heads = r.u64();
  c.proj_dim = r.u64();
  c.ff_dim = r.u64();
  c.paragraph_encoder =
      r.u32() == 0 ? ParagraphEncoder::kMeanEmbedding : ParagraphEncoder::kTransformerLayer;

  auto n_tensors = r.u32();
  ck.params.tensors.reserve(n_tensors);
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    ParamTensor t;
    t.name = r.str();
    auto rank = r.u32();
    std::size_t numel = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      t.shape.push_back(r.u64());
      numel *= t.shape.back();
    }
    t.value.resize(numel);
    for (auto& v : t.value) v = r.f64();
    ck.params.tensors.push_back(std::move(t));
  }

  auto n_tokens = r.u32();
  ck.vocab.id_to_token.reserve(n_tokens);
  for (std::uint32_t i = 0; i < n_tokens; ++i) ck.vocab.id_to_token.push_back(r.str());
  for (std::size_t i = 0; i < ck.vocab.id_to_token.size(); ++i)
    ck.vocab.token_to_id[ck.vocab.id_to_token[i]] = static_cast<int>(i);

  auto n_labels = r.u32();
  for (std::uint32_t i = 0; i < n_labels; ++i) ck.label_names.push_back(r.str());
  return ck;
}

}  // namespace paramask::model
