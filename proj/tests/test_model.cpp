#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdio>
#include <cstring>
#include <vector>

#include "doctest.h"
#include "gradcheck_util.hpp"
#include "paramask/data.hpp"
#include "paramask/errors.hpp"
#include "paramask/losses.hpp"
#include "paramask/model.hpp"
#include "paramask/rng.hpp"

using paramask::Rng;
using paramask::UserError;
namespace ad = paramask::ad;
namespace D = paramask::data;
namespace L = paramask::losses;
namespace mdl = paramask::model;

namespace {

// tiny corpus + vocab shared by the pipeline tests
struct Fixture {
  mdl::ModelConfig cfg;
  D::Vocabulary vocab;
  mdl::ModelParams params;

  explicit Fixture(std::uint64_t seed = 5,
                   mdl::ParagraphEncoder enc = mdl::ParagraphEncoder::kMeanEmbedding) {
    D::Case c;
    c.case_id = "fix";
    c.facts = {"alpha beta gamma", "delta beta", "alpha zeta eta theta", "iota kappa"};
    c.labels = {1, 0};
    vocab = D::build_vocabulary({c}, 1);

    cfg.vocab_size = vocab.size();
    cfg.embed_dim = 8;
    cfg.num_labels = 2;
    cfg.max_paragraphs = 6;
    cfg.max_tokens = 5;
    cfg.context_layers = 1;
    cfg.attention_heads = 2;
    cfg.paragraph_encoder = enc;
    params = mdl::init_params(cfg, seed);
  }

  D::Case make_case(std::vector<std::string> facts) const {
    D::Case c;
    c.case_id = "t";
    c.facts = std::move(facts);
    c.labels = {1, 0};
    return c;
  }

  mdl::EncodedCase encode(std::vector<std::string> facts) const {
    return mdl::encode_case(make_case(std::move(facts)), vocab, cfg);
  }
};

std::vector<double> ln_row(std::vector<double> x) {
  double mu = 0, var = 0;
  for (double v : x) mu += v;
  mu /= static_cast<double>(x.size());
  for (double v : x) var += (v - mu) * (v - mu);
  var /= static_cast<double>(x.size());
  double inv = 1.0 / std::sqrt(var + 1e-5);
  for (double& v : x) v = (v - mu) * inv;
  return x;
}

}  // namespace

TEST_CASE("config validation") {
  mdl::ModelConfig cfg;
  cfg.vocab_size = 10;
  cfg.num_labels = 2;
  cfg.embed_dim = 9;
  cfg.attention_heads = 2;
  CHECK_THROWS_AS(cfg.validate(), UserError);
  cfg.embed_dim = 8;
  CHECK_NOTHROW(cfg.validate());
  cfg.context_layers = 0;
  CHECK_THROWS_AS(cfg.validate(), UserError);
}

TEST_CASE("parameter initialization is deterministic and sane") {
  Fixture f;
  auto again = mdl::init_params(f.cfg, 5);
  CHECK(f.params == again);
  CHECK(f.params != mdl::init_params(f.cfg, 6));

  for (const auto& t : f.params.tensors)
    for (double v : t.value) CHECK(std::isfinite(v));
  for (double v : f.params.find("ctx0.ln1_g").value) CHECK(v == 1.0);
  for (double v : f.params.find("cls_b").value) CHECK(v == 0.0);
  CHECK(f.params.total_values() > 500);
}

TEST_CASE("case encoding truncates and clips rationales") {
  Fixture f;
  D::Case c = f.make_case({"a", "b", "c", "d", "e", "f", "g", "h"});
  c.silver_rationale = std::vector<std::size_t>{0, 7};
  auto e = mdl::encode_case(c, f.vocab, f.cfg);
  CHECK(e.n_paragraphs() == 6);
  CHECK(*e.silver_rationale == std::vector<std::size_t>{0});

  auto long_para = f.encode({"alpha beta gamma delta beta alpha zeta"});
  CHECK(long_para.token_ids[0].size() == 5);

  auto empty_text = f.encode({"..."});
  CHECK(empty_text.token_ids[0] == std::vector<int>{D::Vocabulary::kPad});

  D::Case bad = f.make_case({});
  CHECK_THROWS_AS(mdl::encode_case(bad, f.vocab, f.cfg), std::invalid_argument);
}

TEST_CASE("paragraph encoding is shared, independent and order-insensitive") {
  Fixture f;
  ad::Tape t;
  auto tp = mdl::load_params(t, f.params);

  SUBCASE("identical paragraphs produce identical rows") {
    auto e = f.encode({"alpha beta", "alpha beta", "delta"});
    auto rows = t.value(mdl::encode_paragraphs(t, tp, e));
    for (std::size_t j = 0; j < f.cfg.embed_dim; ++j)
      CHECK(rows[j] == rows[f.cfg.embed_dim + j]);
  }
  SUBCASE("mean encoder ignores token order") {
    auto a = t.value(mdl::encode_paragraphs(t, tp, f.encode({"alpha beta gamma"})));
    auto b = t.value(mdl::encode_paragraphs(t, tp, f.encode({"gamma alpha beta"})));
    for (std::size_t j = 0; j < a.size(); ++j) CHECK(a[j] == doctest::Approx(b[j]).epsilon(1e-12));
  }
  SUBCASE("out-of-vocabulary tokens use the UNK row") {
    auto oov = t.value(mdl::encode_paragraphs(t, tp, f.encode({"qqqqq"})));
    const auto& emb = f.params.find("embedding").value;
    for (std::size_t j = 0; j < f.cfg.embed_dim; ++j)
      CHECK(oov[j] == emb[D::Vocabulary::kUnk * f.cfg.embed_dim + j]);
  }
}

TEST_CASE("token-level transformer encoder is order-sensitive") {
  Fixture f(5, mdl::ParagraphEncoder::kTransformerLayer);
  ad::Tape t;
  auto tp = mdl::load_params(t, f.params);
  auto a = t.value(mdl::encode_paragraphs(t, tp, f.encode({"alpha beta gamma"})));
  auto b = t.value(mdl::encode_paragraphs(t, tp, f.encode({"gamma alpha beta"})));
  bool differs = false;
  for (std::size_t j = 0; j < a.size(); ++j)
    if (std::fabs(a[j] - b[j]) > 1e-9) differs = true;
  CHECK(differs);
}

TEST_CASE("contextualizer") {
  Fixture f;

  SUBCASE("single paragraph passes through") {
    ad::Tape t;
    auto tp = mdl::load_params(t, f.params);
    auto ctx = mdl::contextualize(t, tp, mdl::encode_paragraphs(t, tp, f.encode({"alpha"})));
    CHECK(t.at(ctx).rows() == 1);
    for (double v : t.value(ctx)) CHECK(std::isfinite(v));
  }

  SUBCASE("zeroed sublayers reduce to two layer norms over input plus position") {
    auto zeroed = f.params;
    for (auto& tensor : zeroed.tensors) {
      if (tensor.name.rfind("ctx0.", 0) != 0) continue;
      bool is_gain = tensor.name.find("ln") != std::string::npos &&
                     tensor.name.back() == 'g';
      if (!is_gain) std::fill(tensor.value.begin(), tensor.value.end(), 0.0);
    }
    ad::Tape t;
    auto tp = mdl::load_params(t, zeroed);
    auto e = f.encode({"alpha beta", "delta"});
    auto pcls = mdl::encode_paragraphs(t, tp, e);
    auto ctx = t.value(mdl::contextualize(t, tp, pcls));

    const auto& pos = zeroed.find("para_pos").value;
    auto rows = t.value(pcls);
    std::size_t d = f.cfg.embed_dim;
    for (std::size_t i = 0; i < 2; ++i) {
      std::vector<double> x(d);
      for (std::size_t j = 0; j < d; ++j) x[j] = rows[i * d + j] + pos[i * d + j];
      auto expect = ln_row(ln_row(x));
      for (std::size_t j = 0; j < d; ++j)
        CHECK(ctx[i * d + j] == doctest::Approx(expect[j]).epsilon(1e-9));
    }
  }

  SUBCASE("paragraph order changes the contextualized rows") {
    ad::Tape t;
    auto tp = mdl::load_params(t, f.params);
    auto ab = t.value(mdl::contextualize(
        t, tp, mdl::encode_paragraphs(t, tp, f.encode({"alpha beta", "delta"}))));
    auto ba = t.value(mdl::contextualize(
        t, tp, mdl::encode_paragraphs(t, tp, f.encode({"delta", "alpha beta"}))));
    // the row that held "alpha beta" moved and must not carry the same values
    bool differs = false;
    for (std::size_t j = 0; j < f.cfg.embed_dim; ++j)
      if (std::fabs(ab[j] - ba[f.cfg.embed_dim + j]) > 1e-9) differs = true;
    CHECK(differs);
  }

  SUBCASE("too many paragraphs fail against the positional table") {
    ad::Tape t;
    auto tp = mdl::load_params(t, f.params);
    auto x = t.zeros({f.cfg.max_paragraphs + 1, f.cfg.embed_dim});
    CHECK_THROWS_AS(mdl::contextualize(t, tp, x), std::invalid_argument);
  }
}

TEST_CASE("K and Q projections") {
  Fixture f;
  ad::Tape t;
  auto tp = mdl::load_params(t, f.params);

  SUBCASE("zero input and bias give zero output") {
    auto zero = t.zeros({2, f.cfg.embed_dim});
    auto [pk, pq] = mdl::project_kq(t, tp, zero);
    for (double v : t.value(pk)) CHECK(v == 0.0);
    for (double v : t.value(pq)) CHECK(v == 0.0);
  }
  SUBCASE("K and Q differ on random input") {
    auto e = f.encode({"alpha beta", "delta"});
    auto ctx = mdl::contextualize(t, tp, mdl::encode_paragraphs(t, tp, e));
    auto [pk, pq] = mdl::project_kq(t, tp, ctx);
    CHECK(t.value(pk) != t.value(pq));
  }
}

TEST_CASE("attention scores") {
  Fixture f;
  SUBCASE("zero scorer weights and bias give one half everywhere") {
    auto zeroed = f.params;
    std::fill(zeroed.find("att_w").value.begin(), zeroed.find("att_w").value.end(), 0.0);
    std::fill(zeroed.find("att_b").value.begin(), zeroed.find("att_b").value.end(), 0.0);
    ad::Tape t;
    auto tp = mdl::load_params(t, zeroed);
    auto e = f.encode({"alpha", "beta", "delta"});
    auto fwd = mdl::forward(t, tp, e);
    for (double v : t.value(fwd.attention)) CHECK(v == doctest::Approx(0.5));
  }
  SUBCASE("duplicate projected rows score equally") {
    ad::Tape t;
    auto tp = mdl::load_params(t, f.params);
    Rng rng(3);
    auto pq = t.input({2, f.cfg.embed_dim}, testutil::draw(2 * f.cfg.embed_dim, rng));
    // reuse the same row twice
    auto row = t.slice_rows(pq, 0, 1);
    auto dup = t.concat_rows({row, row});
    auto a = t.value(mdl::attention_scores(t, tp, dup));
    CHECK(a[0] == a[1]);
  }
}

TEST_CASE("document representation fixtures") {
  ad::Tape t;
  auto pk = t.input({2, 2}, {1, -2, 3, 0});
  CHECK(t.value(mdl::document_repr(t, pk, t.input({2}, {1, 1}))) ==
        std::vector<double>{3, 0});
  auto pk2 = t.input({2, 2}, {9, 9, 1, -2});
  CHECK(t.value(mdl::document_repr(t, pk2, t.input({2}, {0, 1}))) ==
        std::vector<double>{1, 0});
  CHECK(t.value(mdl::document_repr(t, pk2, t.input({2}, {0, 0}))) ==
        std::vector<double>{0, 0});
}

TEST_CASE("classifier head") {
  Fixture f;
  SUBCASE("zero everything gives one half per label") {
    auto zeroed = f.params;
    std::fill(zeroed.find("cls_w").value.begin(), zeroed.find("cls_w").value.end(), 0.0);
    ad::Tape t;
    auto tp = mdl::load_params(t, zeroed);
    auto probs = t.value(mdl::classify(t, tp, t.zeros({f.cfg.proj()})));
    REQUIRE(probs.size() == 2);
    for (double v : probs) CHECK(v == doctest::Approx(0.5));
  }
  SUBCASE("raising a bias raises exactly that probability") {
    ad::Tape t;
    auto tp = mdl::load_params(t, f.params);
    auto dm = t.input({f.cfg.proj()}, std::vector<double>(f.cfg.proj(), 0.3));
    auto before = t.value(mdl::classify(t, tp, dm));
    auto bumped = f.params;
    bumped.find("cls_b").value[1] += 1.0;
    ad::Tape t2;
    auto tp2 = mdl::load_params(t2, bumped);
    auto dm2 = t2.input({f.cfg.proj()}, std::vector<double>(f.cfg.proj(), 0.3));
    auto after = t2.value(mdl::classify(t2, tp2, dm2));
    CHECK(after[1] > before[1]);
    CHECK(after[0] == doctest::Approx(before[0]).epsilon(1e-12));
  }
}

TEST_CASE("full forward pass") {
  Fixture f;
  auto e = f.encode({"alpha beta gamma", "delta beta", "alpha zeta", "iota kappa"});

  SUBCASE("hard mask is the thresholded attention") {
    ad::Tape t;
    auto tp = mdl::load_params(t, f.params);
    auto fwd = mdl::forward(t, tp, e);
    auto a = t.value(fwd.attention);
    auto z = t.value(fwd.mask);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(z[i] == (a[i] > 0.5 ? 1.0 : 0.0));
    for (double v : t.value(fwd.probs)) {
      CHECK(v > 0.0);
      CHECK(v < 1.0);
    }
  }

  SUBCASE("pipeline equality: probs recompute from intermediates") {
    ad::Tape t;
    auto tp = mdl::load_params(t, f.params);
    auto fwd = mdl::forward(t, tp, e);
    auto again = mdl::classify(t, tp, mdl::document_repr(t, fwd.pk, fwd.mask));
    CHECK(t.value(fwd.probs) == t.value(again));
  }

  SUBCASE("determinism across tapes") {
    ad::Tape t1, t2;
    auto fwd1 = mdl::forward(t1, mdl::load_params(t1, f.params), e);
    auto fwd2 = mdl::forward(t2, mdl::load_params(t2, f.params), e);
    CHECK(t1.value(fwd1.probs) == t2.value(fwd2.probs));
  }

  SUBCASE("mask override bypasses the threshold") {
    ad::Tape t;
    auto tp = mdl::load_params(t, f.params);
    auto all = mdl::forward(t, tp, e, std::vector<double>{1, 1, 1, 1});
    CHECK(t.value(all.mask) == std::vector<double>{1, 1, 1, 1});
    // attention is still computed and reported
    for (double v : t.value(all.attention)) {
      CHECK(v > 0.0);
      CHECK(v < 1.0);
    }
    CHECK_THROWS_AS(mdl::forward(t, tp, e, std::vector<double>{1, 1}),
                    std::invalid_argument);
  }

  SUBCASE("complement mask sums with the mask to all-ones") {
    ad::Tape t;
    auto tp = mdl::load_params(t, f.params);
    auto fwd = mdl::forward(t, tp, e);
    auto z = t.value(fwd.mask);
    std::vector<double> zc(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) zc[i] = 1.0 - z[i];
    auto comp = mdl::forward(t, tp, e, zc);
    auto zcv = t.value(comp.mask);
    for (std::size_t i = 0; i < z.size(); ++i) CHECK(z[i] + zcv[i] == 1.0);
    CHECK(t.value(comp.probs) != t.value(fwd.probs));
  }

  SUBCASE("with an override the Q branch gets exactly zero gradient") {
    ad::Tape t;
    auto tp = mdl::load_params(t, f.params);
    auto fwd = mdl::forward(t, tp, e, std::vector<double>{1, 0, 1, 0});
    t.backward(t.sum(fwd.probs));
    for (const char* name : {"q_w", "q_b", "att_w", "att_b"})
      for (double g : t.grad(tp.at(name))) CHECK(g == 0.0);
    // while the K branch is live
    double knorm = 0;
    for (double g : t.grad(tp.at("k_w"))) knorm += std::fabs(g);
    CHECK(knorm > 0.0);
  }

  SUBCASE("sparsity pressure reaches the attention scorer through the threshold") {
    ad::Tape t;
    auto tp = mdl::load_params(t, f.params);
    auto fwd = mdl::forward(t, tp, e);
    t.backward(L::sparsity_loss(t, fwd.mask, 0.3));
    double norm = 0;
    for (double g : t.grad(tp.at("att_w"))) norm += std::fabs(g);
    CHECK(norm > 0.0);
  }
}

TEST_CASE("soft-surrogate gradient check of the assembled objective") {
  Fixture f;
  auto e = f.encode({"alpha beta gamma", "delta beta", "alpha zeta"});

  // freeze the complement and random masks at the base point so the
  // surrogate objective is smooth in the parameters
  std::vector<double> zc, zr{1, 0, 0};
  {
    ad::Tape t;
    auto tp = mdl::load_params(t, f.params);
    auto fwd = mdl::forward(t, tp, e);
    for (double z : t.value(fwd.mask)) zc.push_back(1.0 - z);
  }

  std::vector<std::vector<double>> values;
  std::vector<ad::Shape> shapes;
  for (const auto& tensor : f.params.tensors) {
    values.push_back(tensor.value);
    shapes.push_back(tensor.shape);
  }

  ad::LossFn fn = [&](const std::vector<std::vector<double>>& pv,
                      std::vector<std::vector<double>>* grads) {
    mdl::ModelParams params = f.params;
    for (std::size_t i = 0; i < pv.size(); ++i) params.tensors[i].value = pv[i];
    ad::Tape t;
    auto tp = mdl::load_params(t, params);

    // soft pipeline: the attention itself is the mask
    auto pcls = mdl::encode_paragraphs(t, tp, e);
    auto ctx = mdl::contextualize(t, tp, pcls);
    auto [pk, pq] = mdl::project_kq(t, tp, ctx);
    auto a = mdl::attention_scores(t, tp, pq);
    auto dm = mdl::document_repr(t, pk, a);
    auto probs = mdl::classify(t, tp, dm);
    auto y = t.input({2}, e.labels);

    auto comp = mdl::forward(t, tp, e, zc);
    auto rnd = mdl::forward(t, tp, e, zr);

    L::TotalInputs parts;
    parts.L_p = L::classification_loss(t, probs, y);
    parts.L_s = L::sparsity_loss(t, a, 0.3);
    parts.L_c = L::continuity_loss(t, a);
    parts.L_p_c = L::classification_loss(t, comp.probs, y);
    parts.L_g = L::comprehensiveness_margin(t, parts.L_p, parts.L_p_c, 0.1);
    parts.L_p_r = L::classification_loss(t, rnd.probs, y);
    auto zr_var = t.input({3}, zr);
    parts.L_r = t.mul(L::singularity_scale(t, a, zr_var),
                      L::comprehensiveness_margin(t, parts.L_p, parts.L_p_r, 0.1));
    L::LossWeights w;
    w.lambda_s = 0.1;
    w.lambda_c = 0.05;
    w.lambda_g = 0.2;
    w.lambda_r = 0.15;
    auto total = L::total_loss(t, parts, w);
    double v = t.scalar(total);
    if (grads) {
      t.backward(total);
      grads->clear();
      for (auto var : tp.vars) grads->push_back(t.grad(var));
    }
    return v;
  };

  auto rep = ad::gradient_check(fn, values, 1e-5);
  CHECK(rep.max_rel_err < 1e-4);
}

TEST_CASE("checkpoint round-trips bit-exactly") {
  Fixture f;
  std::string path = "test_model_ckpt.bin";
  std::vector<std::string> labels = {"A1", "A2"};

  // plant tricky bit patterns
  f.params.find("cls_b").value[0] = 0x1.921fb54442d18p+1;  // pi
  f.params.find("cls_b").value[1] = -0.0;

  mdl::save_checkpoint(path, f.params, f.vocab, labels);
  auto ck = mdl::load_checkpoint(path);

  CHECK(ck.params.config == f.cfg);
  CHECK(ck.label_names == labels);
  CHECK(ck.vocab.id_to_token == f.vocab.id_to_token);
  REQUIRE(ck.params.tensors.size() == f.params.tensors.size());
  for (std::size_t i = 0; i < f.params.tensors.size(); ++i) {
    const auto& a = f.params.tensors[i];
    const auto& b = ck.params.tensors[i];
    CHECK(a.name == b.name);
    CHECK(a.shape == b.shape);
    REQUIRE(a.value.size() == b.value.size());
    CHECK(std::memcmp(a.value.data(), b.value.data(), a.value.size() * sizeof(double)) == 0);
  }

  SUBCASE("rejects foreign files") {
    std::string bogus = "test_model_bogus.bin";
    {
      std::ofstream out(bogus, std::ios::binary);
      out << "not a checkpoint at all";
    }
    CHECK_THROWS_AS(mdl::load_checkpoint(bogus), UserError);
    std::remove(bogus.c_str());
  }
  SUBCASE("rejects truncation") {
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::string cut = "test_model_cut.bin";
    {
      std::ofstream out(cut, std::ios::binary);
      out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    }
    CHECK_THROWS_AS(mdl::load_checkpoint(cut), UserError);
    std::remove(cut.c_str());
  }
  std::remove(path.c_str());
}
