#include "paramask/tensor.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <utility>

#include "paramask/kernels.hpp"

namespace paramask::ad {

namespace {
// Standard published SELU constants.
constexpr double kSeluAlpha = 1.6732632423543772848170429916717;
constexpr double kSeluLambda = 1.0507009873554804934193349852946;
constexpr double kLnEps = 1e-5;
constexpr double kBceEps = 1e-12;

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }
}  // namespace

std::size_t numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

Tape::Tape() { nodes_.reserve(256); }

Var Tape::emit(Shape shape) {
  Tensor t;
  std::size_t n = numel(shape);
  t.shape = std::move(shape);
  t.value.resize(n);
  t.grad.assign(n, 0.0);
  tensors_.push_back(std::move(t));
  return Var{static_cast<std::uint32_t>(tensors_.size() - 1)};
}

void Tape::record(std::function<void(Tape&)> back) {
  nodes_.push_back(Node{std::move(back)});
}

const Tensor& Tape::at(Var v) const {
  if (!v.valid() || v.id >= tensors_.size()) fail("tape: invalid tensor handle");
  return tensors_[v.id];
}

double Tape::scalar(Var v) const {
  const Tensor& t = at(v);
  if (t.value.size() != 1) fail("tape: scalar() on tensor of shape " + shape_str(t.shape));
  return t.value[0];
}

void Tape::check_same_shape(const char* op, Var a, Var b) const {
  if (at(a).shape != at(b).shape)
    fail(std::string(op) + ": shape mismatch " + shape_str(at(a).shape) + " vs " +
         shape_str(at(b).shape));
}

void Tape::check_matrix(const char* op, Var a) const {
  if (at(a).rank() != 2)
    fail(std::string(op) + ": expected a matrix, got shape " + shape_str(at(a).shape));
}

Var Tape::input(Shape shape, std::vector<double> values) {
  if (numel(shape) != values.size())
    fail("input: shape " + shape_str(shape) + " does not match " +
         std::to_string(values.size()) + " values");
  Var v = emit(std::move(shape));
  mut(v).value = std::move(values);
  return v;
}

Var Tape::input_scalar(double v) { return input(Shape{}, {v}); }

Var Tape::zeros(Shape shape) { return emit(std::move(shape)); }

Var Tape::matmul(Var a, Var b) {
  check_matrix("matmul", a);
  check_matrix("matmul", b);
  const Tensor& ta = at(a);
  const Tensor& tb = at(b);
  if (ta.cols() != tb.rows())
    fail("matmul: shape mismatch " + shape_str(ta.shape) + " x " + shape_str(tb.shape));
  std::size_t m = ta.rows(), k = ta.cols(), n = tb.cols();
  Var out = emit({m, n});
  kern::matmul_nn(ta.value.data(), tb.value.data(), mut(out).value.data(), m, k, n);
  record([a, b, out, m, k, n](Tape& t) {
    kern::matmul_nt(t.adj(out).data(), t.at(b).value.data(), t.adj(a).data(), m, n, k, true);
    kern::matmul_tn(t.at(a).value.data(), t.adj(out).data(), t.adj(b).data(), k, m, n, true);
  });
  return out;
}

Var Tape::transpose(Var a) {
  check_matrix("transpose", a);
  const Tensor& ta = at(a);
  std::size_t m = ta.rows(), n = ta.cols();
  Var out = emit({n, m});
  Tensor& to = mut(out);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) to.value[j * m + i] = ta.value[i * n + j];
  record([a, out, m, n](Tape& t) {
    auto& ga = t.adj(a);
    const auto& go = t.adj(out);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += go[j * m + i];
  });
  return out;
}

Var Tape::add(Var a, Var b) {
  check_same_shape("add", a, b);
  Var out = emit(at(a).shape);
  const auto& va = at(a).value;
  const auto& vb = at(b).value;
  auto& vo = mut(out).value;
  for (std::size_t i = 0; i < vo.size(); ++i) vo[i] = va[i] + vb[i];
  record([a, b, out](Tape& t) {
    const auto& go = t.adj(out);
    auto& ga = t.adj(a);
    auto& gb = t.adj(b);
    for (std::size_t i = 0; i < go.size(); ++i) {
      ga[i] += go[i];
      gb[i] += go[i];
    }
  });
  return out;
}

Var Tape::sub(Var a, Var b) {
  check_same_shape("sub", a, b);
  Var out = emit(at(a).shape);
  const auto& va = at(a).value;
  const auto& vb = at(b).value;
  auto& vo = mut(out).value;
  for (std::size_t i = 0; i < vo.size(); ++i) vo[i] = va[i] - vb[i];
  record([a, b, out](Tape& t) {
    const auto& go = t.adj(out);
    auto& ga = t.adj(a);
    auto& gb = t.adj(b);
    for (std::size_t i = 0; i < go.size(); ++i) {
      ga[i] += go[i];
      gb[i] -= go[i];
    }
  });
  return out;
}

Var Tape::mul(Var a, Var b) {
  check_same_shape("mul", a, b);
  Var out = emit(at(a).shape);
  const auto& va = at(a).value;
  const auto& vb = at(b).value;
  auto& vo = mut(out).value;
  for (std::size_t i = 0; i < vo.size(); ++i) vo[i] = va[i] * vb[i];
  record([a, b, out](Tape& t) {
    const auto& go = t.adj(out);
    const auto& va = t.at(a).value;
    const auto& vb = t.at(b).value;
    auto& ga = t.adj(a);
    auto& gb = t.adj(b);
    for (std::size_t i = 0; i < go.size(); ++i) {
      ga[i] += go[i] * vb[i];
      gb[i] += go[i] * va[i];
    }
  });
  return out;
}

Var Tape::add_rowvec(Var m, Var row) {
  check_matrix("add_rowvec", m);
  const Tensor& tm = at(m);
  const Tensor& tr = at(row);
  if (tr.rank() != 1 || tr.shape[0] != tm.cols())
    fail("add_rowvec: shape mismatch " + shape_str(tm.shape) + " + " + shape_str(tr.shape));
  std::size_t r = tm.rows(), c = tm.cols();
  Var out = emit({r, c});
  auto& vo = mut(out).value;
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) vo[i * c + j] = tm.value[i * c + j] + tr.value[j];
  record([m, row, out, r, c](Tape& t) {
    const auto& go = t.adj(out);
    auto& gm = t.adj(m);
    auto& gr = t.adj(row);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) {
        gm[i * c + j] += go[i * c + j];
        gr[j] += go[i * c + j];
      }
  });
  return out;
}

Var Tape::scale(Var a, double c) {
  Var out = emit(at(a).shape);
  const auto& va = at(a).value;
  auto& vo = mut(out).value;
  for (std::size_t i = 0; i < vo.size(); ++i) vo[i] = va[i] * c;
  record([a, out, c](Tape& t) {
    const auto& go = t.adj(out);
    auto& ga = t.adj(a);
    for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * c;
  });
  return out;
}

Var Tape::add_const(Var a, double c) {
  Var out = emit(at(a).shape);
  const auto& va = at(a).value;
  auto& vo = mut(out).value;
  for (std::size_t i = 0; i < vo.size(); ++i) vo[i] = va[i] + c;
  record([a, out](Tape& t) {
    const auto& go = t.adj(out);
    auto& ga = t.adj(a);
    for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
  });
  return out;
}

Var Tape::sigmoid(Var a) {
  Var out = emit(at(a).shape);
  kern::sigmoid(at(a).value.data(), mut(out).value.data(), at(a).value.size());
  record([a, out](Tape& t) {
    const auto& go = t.adj(out);
    const auto& vo = t.at(out).value;
    auto& ga = t.adj(a);
    for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * vo[i] * (1.0 - vo[i]);
  });
  return out;
}

Var Tape::selu(Var a) {
  Var out = emit(at(a).shape);
  const auto& va = at(a).value;
  auto& vo = mut(out).value;
  for (std::size_t i = 0; i < vo.size(); ++i)
    vo[i] = va[i] > 0.0 ? kSeluLambda * va[i] : kSeluLambda * kSeluAlpha * std::expm1(va[i]);
  record([a, out](Tape& t) {
    const auto& go = t.adj(out);
    const auto& va = t.at(a).value;
    auto& ga = t.adj(a);
    for (std::size_t i = 0; i < go.size(); ++i)
      ga[i] += go[i] * (va[i] > 0.0 ? kSeluLambda
                                    : kSeluLambda * kSeluAlpha * std::exp(va[i]));
  });
  return out;
}

Var Tape::relu(Var a) {
  Var out = emit(at(a).shape);
  const auto& va = at(a).value;
  auto& vo = mut(out).value;
  for (std::size_t i = 0; i < vo.size(); ++i) vo[i] = va[i] > 0.0 ? va[i] : 0.0;
  record([a, out](Tape& t) {
    const auto& go = t.adj(out);
    const auto& va = t.at(a).value;
    auto& ga = t.adj(a);
    for (std::size_t i = 0; i < go.size(); ++i)
      if (va[i] > 0.0) ga[i] += go[i];
  });
  return out;
}

Var Tape::abs(Var a) {
  Var out = emit(at(a).shape);
  const auto& va = at(a).value;
  auto& vo = mut(out).value;
  for (std::size_t i = 0; i < vo.size(); ++i) vo[i] = std::fabs(va[i]);
  record([a, out](Tape& t) {
    const auto& go = t.adj(out);
    const auto& va = t.at(a).value;
    auto& ga = t.adj(a);
    for (std::size_t i = 0; i < go.size(); ++i) {
      double s = va[i] > 0.0 ? 1.0 : (va[i] < 0.0 ? -1.0 : 0.0);
      ga[i] += go[i] * s;
    }
  });
  return out;
}

Var Tape::softmax_rows(Var a) {
  check_matrix("softmax_rows", a);
  const Tensor& ta = at(a);
  std::size_t r = ta.rows(), c = ta.cols();
  Var out = emit({r, c});
  kern::softmax_rows(ta.value.data(), mut(out).value.data(), r, c);
  record([a, out, r, c](Tape& t) {
    const auto& go = t.adj(out);
    const auto& vo = t.at(out).value;
    auto& ga = t.adj(a);
    for (std::size_t i = 0; i < r; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += go[i * c + j] * vo[i * c + j];
      for (std::size_t j = 0; j < c; ++j)
        ga[i * c + j] += vo[i * c + j] * (go[i * c + j] - dot);
    }
  });
  return out;
}

Var Tape::layer_norm_rows(Var a, Var gain, Var bias) {
  check_matrix("layer_norm_rows", a);
  const Tensor& ta = at(a);
  std::size_t r = ta.rows(), c = ta.cols();
  if (at(gain).value.size() != c || at(bias).value.size() != c)
    fail("layer_norm_rows: gain/bias must have " + std::to_string(c) + " entries, got " +
         shape_str(at(gain).shape) + " / " + shape_str(at(bias).shape));
  Var out = emit({r, c});
  auto& vo = mut(out).value;
  const auto& vg = at(gain).value;
  const auto& vb = at(bias).value;
  // keep normalized rows and inverse stddev for the backward pass
  std::vector<double> xhat(r * c);
  std::vector<double> inv_sd(r);
  for (std::size_t i = 0; i < r; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += ta.value[i * c + j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      double d = ta.value[i * c + j] - mu;
      var += d * d;
    }
    var /= static_cast<double>(c);
    inv_sd[i] = 1.0 / std::sqrt(var + kLnEps);
    for (std::size_t j = 0; j < c; ++j) {
      xhat[i * c + j] = (ta.value[i * c + j] - mu) * inv_sd[i];
      vo[i * c + j] = vg[j] * xhat[i * c + j] + vb[j];
    }
  }
  record([a, gain, bias, out, r, c, xhat = std::move(xhat),
          inv_sd = std::move(inv_sd)](Tape& t) {
    const auto& go = t.adj(out);
    const auto& vg = t.at(gain).value;
    auto& ga = t.adj(a);
    auto& gg = t.adj(gain);
    auto& gb = t.adj(bias);
    for (std::size_t i = 0; i < r; ++i) {
      double mean_dxh = 0.0, mean_dxh_xh = 0.0;
      for (std::size_t j = 0; j < c; ++j) {
        double dxh = go[i * c + j] * vg[j];
        mean_dxh += dxh;
        mean_dxh_xh += dxh * xhat[i * c + j];
        gg[j] += go[i * c + j] * xhat[i * c + j];
        gb[j] += go[i * c + j];
      }
      mean_dxh /= static_cast<double>(c);
      mean_dxh_xh /= static_cast<double>(c);
      for (std::size_t j = 0; j < c; ++j) {
        double dxh = go[i * c + j] * vg[j];
        ga[i * c + j] +=
            inv_sd[i] * (dxh - mean_dxh - xhat[i * c + j] * mean_dxh_xh);
      }
    }
  });
  return out;
}

Var Tape::maxpool(Var a, int axis) {
  check_matrix("maxpool", a);
  if (axis != 0 && axis != 1) fail("maxpool: axis must be 0 or 1");
  const Tensor& ta = at(a);
  std::size_t r = ta.rows(), c = ta.cols();
  std::size_t out_n = axis == 0 ? c : r;
  Var out = emit({out_n});
  auto& vo = mut(out).value;
  std::vector<std::size_t> arg(out_n);  // flat index of the (first) max
  if (axis == 0) {
    for (std::size_t j = 0; j < c; ++j) {
      std::size_t best = j;
      for (std::size_t i = 1; i < r; ++i)
        if (ta.value[i * c + j] > ta.value[best]) best = i * c + j;
      arg[j] = best;
      vo[j] = ta.value[best];
    }
  } else {
    for (std::size_t i = 0; i < r; ++i) {
      std::size_t best = i * c;
      for (std::size_t j = 1; j < c; ++j)
        if (ta.value[i * c + j] > ta.value[best]) best = i * c + j;
      arg[i] = best;
      vo[i] = ta.value[best];
    }
  }
  record([a, out, arg = std::move(arg)](Tape& t) {
    const auto& go = t.adj(out);
    auto& ga = t.adj(a);
    for (std::size_t i = 0; i < go.size(); ++i) ga[arg[i]] += go[i];
  });
  return out;
}

Var Tape::sum(Var a) {
  Var out = emit({});
  const auto& va = at(a).value;
  mut(out).value[0] = std::accumulate(va.begin(), va.end(), 0.0);
  record([a, out](Tape& t) {
    double g = t.adj(out)[0];
    auto& ga = t.adj(a);
    for (double& x : ga) x += g;
  });
  return out;
}

Var Tape::mean(Var a) {
  const auto& va = at(a).value;
  if (va.empty()) fail("mean: empty tensor");
  Var out = emit({});
  mut(out).value[0] =
      std::accumulate(va.begin(), va.end(), 0.0) / static_cast<double>(va.size());
  record([a, out, n = va.size()](Tape& t) {
    double g = t.adj(out)[0] / static_cast<double>(n);
    auto& ga = t.adj(a);
    for (double& x : ga) x += g;
  });
  return out;
}

Var Tape::row_mean(Var a) {
  check_matrix("row_mean", a);
  const Tensor& ta = at(a);
  std::size_t r = ta.rows(), c = ta.cols();
  Var out = emit({c});
  auto& vo = mut(out).value;
  for (std::size_t j = 0; j < c; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < r; ++i) s += ta.value[i * c + j];
    vo[j] = s / static_cast<double>(r);
  }
  record([a, out, r, c](Tape& t) {
    const auto& go = t.adj(out);
    auto& ga = t.adj(a);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += go[j] / static_cast<double>(r);
  });
  return out;
}

Var Tape::scale_rows(Var m, Var v) {
  check_matrix("scale_rows", m);
  const Tensor& tm = at(m);
  const Tensor& tv = at(v);
  if (tv.rank() != 1 || tv.shape[0] != tm.rows())
    fail("scale_rows: shape mismatch " + shape_str(tm.shape) + " vs " + shape_str(tv.shape));
  std::size_t r = tm.rows(), c = tm.cols();
  Var out = emit({r, c});
  auto& vo = mut(out).value;
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) vo[i * c + j] = tm.value[i * c + j] * tv.value[i];
  record([m, v, out, r, c](Tape& t) {
    const auto& go = t.adj(out);
    const auto& vm = t.at(m).value;
    const auto& vv = t.at(v).value;
    auto& gm = t.adj(m);
    auto& gv = t.adj(v);
    for (std::size_t i = 0; i < r; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < c; ++j) {
        gm[i * c + j] += go[i * c + j] * vv[i];
        acc += go[i * c + j] * vm[i * c + j];
      }
      gv[i] += acc;
    }
  });
  return out;
}

Var Tape::gather_rows(Var table, std::vector<std::size_t> idx) {
  check_matrix("gather_rows", table);
  const Tensor& tt = at(table);
  std::size_t c = tt.cols();
  for (std::size_t i : idx)
    if (i >= tt.rows())
      fail("gather_rows: row " + std::to_string(i) + " out of range for " +
           shape_str(tt.shape));
  Var out = emit({idx.size(), c});
  auto& vo = mut(out).value;
  for (std::size_t r = 0; r < idx.size(); ++r)
    for (std::size_t j = 0; j < c; ++j) vo[r * c + j] = tt.value[idx[r] * c + j];
  record([table, out, c, idx = std::move(idx)](Tape& t) {
    const auto& go = t.adj(out);
    auto& gt = t.adj(table);
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (std::size_t j = 0; j < c; ++j) gt[idx[r] * c + j] += go[r * c + j];
  });
  return out;
}

Var Tape::concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) fail("concat_rows: no parts");
  std::size_t c = at(parts[0]).cols();
  std::size_t r = 0;
  for (Var p : parts) {
    check_matrix("concat_rows", p);
    if (at(p).cols() != c)
      fail("concat_rows: column mismatch " + shape_str(at(parts[0]).shape) + " vs " +
           shape_str(at(p).shape));
    r += at(p).rows();
  }
  Var out = emit({r, c});
  auto& vo = mut(out).value;
  std::size_t off = 0;
  for (Var p : parts) {
    const auto& vp = at(p).value;
    std::copy(vp.begin(), vp.end(), vo.begin() + off);
    off += vp.size();
  }
  record([parts, out](Tape& t) {
    const auto& go = t.adj(out);
    std::size_t off = 0;
    for (Var p : parts) {
      auto& gp = t.adj(p);
      for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += go[off + i];
      off += gp.size();
    }
  });
  return out;
}

Var Tape::slice_rows(Var a, std::size_t start, std::size_t len) {
  check_matrix("slice_rows", a);
  const Tensor& ta = at(a);
  if (start + len > ta.rows())
    fail("slice_rows: [" + std::to_string(start) + "," + std::to_string(start + len) +
         ") out of range for " + shape_str(ta.shape));
  std::size_t c = ta.cols();
  Var out = emit({len, c});
  auto& vo = mut(out).value;
  std::copy(ta.value.begin() + start * c, ta.value.begin() + (start + len) * c, vo.begin());
  record([a, out, start, c](Tape& t) {
    const auto& go = t.adj(out);
    auto& ga = t.adj(a);
    for (std::size_t i = 0; i < go.size(); ++i) ga[start * c + i] += go[i];
  });
  return out;
}

Var Tape::slice_cols(Var a, std::size_t start, std::size_t len) {
  check_matrix("slice_cols", a);
  const Tensor& ta = at(a);
  if (start + len > ta.cols())
    fail("slice_cols: [" + std::to_string(start) + "," + std::to_string(start + len) +
         ") out of range for " + shape_str(ta.shape));
  std::size_t r = ta.rows(), c = ta.cols();
  Var out = emit({r, len});
  auto& vo = mut(out).value;
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < len; ++j) vo[i * len + j] = ta.value[i * c + start + j];
  record([a, out, start, len, r, c](Tape& t) {
    const auto& go = t.adj(out);
    auto& ga = t.adj(a);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < len; ++j) ga[i * c + start + j] += go[i * len + j];
  });
  return out;
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) fail("concat_cols: no parts");
  std::size_t r = at(parts[0]).rows();
  std::size_t c = 0;
  for (Var p : parts) {
    check_matrix("concat_cols", p);
    if (at(p).rows() != r)
      fail("concat_cols: row mismatch " + shape_str(at(parts[0]).shape) + " vs " +
           shape_str(at(p).shape));
    c += at(p).cols();
  }
  Var out = emit({r, c});
  auto& vo = mut(out).value;
  std::size_t off = 0;
  for (Var p : parts) {
    const Tensor& tp = at(p);
    std::size_t pc = tp.cols();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < pc; ++j) vo[i * c + off + j] = tp.value[i * pc + j];
    off += pc;
  }
  record([parts, out, r, c](Tape& t) {
    const auto& go = t.adj(out);
    std::size_t off = 0;
    for (Var p : parts) {
      std::size_t pc = t.at(p).cols();
      auto& gp = t.adj(p);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < pc; ++j) gp[i * pc + j] += go[i * c + off + j];
      off += pc;
    }
  });
  return out;
}

Var Tape::reshape(Var a, Shape shape) {
  if (numel(shape) != at(a).value.size())
    fail("reshape: " + shape_str(at(a).shape) + " to " + shape_str(shape) +
         " changes element count");
  Var out = emit(std::move(shape));
  mut(out).value = at(a).value;
  record([a, out](Tape& t) {
    const auto& go = t.adj(out);
    auto& ga = t.adj(a);
    for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
  });
  return out;
}

Var Tape::cosine(Var u, Var v) {
  check_same_shape("cosine", u, v);
  const auto& vu = at(u).value;
  const auto& vv = at(v).value;
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (std::size_t i = 0; i < vu.size(); ++i) {
    dot += vu[i] * vv[i];
    nu += vu[i] * vu[i];
    nv += vv[i] * vv[i];
  }
  nu = std::sqrt(nu);
  nv = std::sqrt(nv);
  bool degenerate = nu == 0.0 || nv == 0.0;
  double c = degenerate ? 0.0 : dot / (nu * nv);
  Var out = emit({});
  mut(out).value[0] = c;
  record([u, v, out, nu, nv, c, degenerate](Tape& t) {
    if (degenerate) return;  // cos := 0 with zero gradient at the degenerate point
    double g = t.adj(out)[0];
    const auto& vu = t.at(u).value;
    const auto& vv = t.at(v).value;
    auto& gu = t.adj(u);
    auto& gv = t.adj(v);
    for (std::size_t i = 0; i < vu.size(); ++i) {
      gu[i] += g * (vv[i] / (nu * nv) - c * vu[i] / (nu * nu));
      gv[i] += g * (vu[i] / (nu * nv) - c * vv[i] / (nv * nv));
    }
  });
  return out;
}

Var Tape::bce_sum(Var probs, Var targets) {
  check_same_shape("bce_sum", probs, targets);
  const auto& vp = at(probs).value;
  const auto& vt = at(targets).value;
  double loss = 0.0;
  for (std::size_t i = 0; i < vp.size(); ++i) {
    double p = std::min(std::max(vp[i], kBceEps), 1.0 - kBceEps);
    loss -= vt[i] * std::log(p) + (1.0 - vt[i]) * std::log1p(-p);
  }
  Var out = emit({});
  mut(out).value[0] = loss;
  record([probs, targets, out](Tape& t) {
    double g = t.adj(out)[0];
    const auto& vp = t.at(probs).value;
    const auto& vt = t.at(targets).value;
    auto& gp = t.adj(probs);
    auto& gt = t.adj(targets);
    for (std::size_t i = 0; i < vp.size(); ++i) {
      double p = std::min(std::max(vp[i], kBceEps), 1.0 - kBceEps);
      gp[i] += g * (-vt[i] / p + (1.0 - vt[i]) / (1.0 - p));
      gt[i] += g * (std::log1p(-p) - std::log(p));
    }
  });
  return out;
}

Var Tape::threshold_st(Var a, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0))
    fail("threshold_st: threshold must lie in (0,1), got " + std::to_string(threshold));
  const auto& va = at(a).value;
  for (double x : va)
    if (!(x >= 0.0 && x <= 1.0))
      fail("threshold_st: input " + std::to_string(x) +
           " outside [0,1] (upstream activation bug)");
  Var out = emit(at(a).shape);
  auto& vo = mut(out).value;
  for (std::size_t i = 0; i < va.size(); ++i) vo[i] = va[i] > threshold ? 1.0 : 0.0;
  // straight-through: the incoming gradient passes to a unchanged
  record([a, out](Tape& t) {
    const auto& go = t.adj(out);
    auto& ga = t.adj(a);
    for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
  });
  return out;
}

void Tape::backward(Var loss) {
  const Tensor& tl = at(loss);
  if (tl.value.size() != 1)
    fail("backward: loss must be scalar, got shape " + shape_str(tl.shape));
  adj_.resize(tensors_.size());
  for (std::size_t i = 0; i < tensors_.size(); ++i)
    adj_[i].assign(tensors_[i].value.size(), 0.0);
  adj_[loss.id][0] = 1.0;
  for (std::size_t i = nodes_.size(); i > 0; --i) nodes_[i - 1].back(*this);
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    auto& g = tensors_[i].grad;
    const auto& a = adj_[i];
    for (std::size_t j = 0; j < g.size(); ++j) g[j] += a[j];
  }
}

void Tape::zero_grad() {
  for (Tensor& t : tensors_) std::fill(t.grad.begin(), t.grad.end(), 0.0);
}

}  // namespace paramask::ad
