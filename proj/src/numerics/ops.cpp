#include "dprobe/numerics/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "dprobe/errors.hpp"

namespace dprobe::numerics {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;
using MatrixMap = Eigen::Map<RowMatrix>;

Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank, 1);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const std::size_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw DimensionError(std::string(op) + ": shapes " + shape_string(a) + " and " + shape_string(b) +
                           " do not broadcast");
    }
    out[i] = std::max(da, db);
  }
  return out;
}

// Strides of `in` expressed over the axes of `out`; zero on broadcast axes.
std::vector<std::size_t> aligned_strides(const Shape& in, const Shape& out) {
  std::vector<std::size_t> strides(out.size(), 0);
  std::size_t stride = 1;
  for (std::size_t k = 0; k < in.size(); ++k) {
    const std::size_t in_axis = in.size() - 1 - k;
    const std::size_t out_axis = out.size() - 1 - k;
    strides[out_axis] = in[in_axis] == 1 ? 0 : stride;
    stride *= in[in_axis];
  }
  return strides;
}

// Input offsets for every element of `out`, in row-major order of `out`.
std::vector<std::size_t> broadcast_offsets(const Shape& in, const Shape& out) {
  const auto strides = aligned_strides(in, out);
  const std::size_t total = element_count(out);
  std::vector<std::size_t> offsets(total);
  std::vector<std::size_t> counter(out.size(), 0);
  std::size_t offset = 0;
  for (std::size_t linear = 0; linear < total; ++linear) {
    offsets[linear] = offset;
    for (std::size_t axis = out.size(); axis-- > 0;) {
      if (++counter[axis] < out[axis]) {
        offset += strides[axis];
        break;
      }
      offset -= strides[axis] * (out[axis] - 1);
      counter[axis] = 0;
    }
  }
  return offsets;
}

enum class Elementwise { kAdd, kMul };

Var binary(const Var& a, const Var& b, Elementwise kind) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  const char* name = kind == Elementwise::kAdd ? "add" : "mul";

  if (A.shape() == B.shape()) {
    Tensor out(A.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = kind == Elementwise::kAdd ? A[i] + B[i] : A[i] * B[i];
    return a.tape().record(std::move(out), {a, b}, [a, b, kind](const Tensor& g, const Tensor&) {
      auto& tape = a.tape();
      if (a.requires_grad()) {
        auto& ga = tape.grad_buffer(a);
        const Tensor& B = b.value();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += kind == Elementwise::kAdd ? g[i] : g[i] * B[i];
      }
      if (b.requires_grad()) {
        auto& gb = tape.grad_buffer(b);
        const Tensor& A = a.value();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += kind == Elementwise::kAdd ? g[i] : g[i] * A[i];
      }
    });
  }

  // b's shape is a trailing slice of a's (bias rows): b repeats with period b.size().
  const auto& as = A.shape();
  const auto& bs = B.shape();
  if (bs.size() <= as.size() && std::equal(bs.begin(), bs.end(), as.end() - static_cast<std::ptrdiff_t>(bs.size()))) {
    const std::size_t period = B.size();
    Tensor out(as);
    for (std::size_t base = 0; base < out.size(); base += period) {
      for (std::size_t j = 0; j < period; ++j) {
        out[base + j] = kind == Elementwise::kAdd ? A[base + j] + B[j] : A[base + j] * B[j];
      }
    }
    return a.tape().record(std::move(out), {a, b}, [a, b, kind, period](const Tensor& g, const Tensor&) {
      auto& tape = a.tape();
      if (a.requires_grad()) {
        auto& ga = tape.grad_buffer(a);
        const Tensor& B = b.value();
        for (std::size_t base = 0; base < g.size(); base += period) {
          for (std::size_t j = 0; j < period; ++j) {
            ga[base + j] += kind == Elementwise::kAdd ? g[base + j] : g[base + j] * B[j];
          }
        }
      }
      if (b.requires_grad()) {
        auto& gb = tape.grad_buffer(b);
        const Tensor& A = a.value();
        for (std::size_t base = 0; base < g.size(); base += period) {
          for (std::size_t j = 0; j < period; ++j) {
            gb[j] += kind == Elementwise::kAdd ? g[base + j] : g[base + j] * A[base + j];
          }
        }
      }
    });
  }

  Shape out_shape = broadcast_shape(A.shape(), B.shape(), name);
  auto oa = broadcast_offsets(A.shape(), out_shape);
  auto ob = broadcast_offsets(B.shape(), out_shape);
  Tensor out(out_shape);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = kind == Elementwise::kAdd ? A[oa[i]] + B[ob[i]] : A[oa[i]] * B[ob[i]];
  }
  return a.tape().record(std::move(out), {a, b}, [a, b, kind, oa = std::move(oa), ob = std::move(ob)](const Tensor& g, const Tensor&) {
    auto& tape = a.tape();
    if (a.requires_grad()) {
      auto& ga = tape.grad_buffer(a);
      const Tensor& B = b.value();
      for (std::size_t i = 0; i < g.size(); ++i) ga[oa[i]] += kind == Elementwise::kAdd ? g[i] : g[i] * B[ob[i]];
    }
    if (b.requires_grad()) {
      auto& gb = tape.grad_buffer(b);
      const Tensor& A = a.value();
      for (std::size_t i = 0; i < g.size(); ++i) gb[ob[i]] += kind == Elementwise::kAdd ? g[i] : g[i] * A[oa[i]];
    }
  });
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.rank() < 2 || B.rank() < 2 || A.dim(-1) != B.dim(-2)) {
    throw DimensionError("matmul: incompatible shapes " + shape_string(A.shape()) + " and " +
                         shape_string(B.shape()));
  }
  const std::size_t rows = A.dim(-2);
  const std::size_t inner = A.dim(-1);
  const std::size_t cols = B.dim(-1);
  const Shape a_batch(A.shape().begin(), A.shape().end() - 2);
  const Shape b_batch(B.shape().begin(), B.shape().end() - 2);
  Shape batch;
  try {
    batch = broadcast_shape(a_batch, b_batch, "matmul");
  } catch (const DimensionError&) {
    throw DimensionError("matmul: batch dims of " + shape_string(A.shape()) + " and " + shape_string(B.shape()) +
                         " do not broadcast");
  }
  auto a_off = broadcast_offsets(a_batch, batch);
  auto b_off = broadcast_offsets(b_batch, batch);

  Shape out_shape = batch;
  out_shape.push_back(rows);
  out_shape.push_back(cols);
  Tensor out(out_shape);
  const std::size_t count = a_off.size();
  for (std::size_t bi = 0; bi < count; ++bi) {
    ConstMatrixMap am(A.ptr() + a_off[bi] * rows * inner, rows, inner);
    ConstMatrixMap bm(B.ptr() + b_off[bi] * inner * cols, inner, cols);
    MatrixMap cm(out.ptr() + bi * rows * cols, rows, cols);
    cm.noalias() = am * bm;
  }

  return a.tape().record(std::move(out), {a, b},
                         [a, b, rows, inner, cols, a_off = std::move(a_off), b_off = std::move(b_off)](const Tensor& g, const Tensor&) {
                           auto& tape = a.tape();
                           const Tensor& A = a.value();
                           const Tensor& B = b.value();
                           const std::size_t count = a_off.size();
                           if (a.requires_grad()) {
                             auto& ga = tape.grad_buffer(a);
                             for (std::size_t bi = 0; bi < count; ++bi) {
                               ConstMatrixMap gm(g.ptr() + bi * rows * cols, rows, cols);
                               ConstMatrixMap bm(B.ptr() + b_off[bi] * inner * cols, inner, cols);
                               MatrixMap dam(ga.ptr() + a_off[bi] * rows * inner, rows, inner);
                               dam.noalias() += gm * bm.transpose();
                             }
                           }
                           if (b.requires_grad()) {
                             auto& gb = tape.grad_buffer(b);
                             for (std::size_t bi = 0; bi < count; ++bi) {
                               ConstMatrixMap gm(g.ptr() + bi * rows * cols, rows, cols);
                               ConstMatrixMap am(A.ptr() + a_off[bi] * rows * inner, rows, inner);
                               MatrixMap dbm(gb.ptr() + b_off[bi] * inner * cols, inner, cols);
                               dbm.noalias() += am.transpose() * gm;
                             }
                           }
                         });
}

Var add(const Var& a, const Var& b) { return binary(a, b, Elementwise::kAdd); }

Var mul(const Var& a, const Var& b) { return binary(a, b, Elementwise::kMul); }

Var scale(const Var& x, double factor) {
  Tensor out = x.value();
  for (auto& v : out.data()) v *= factor;
  return x.tape().record(std::move(out), {x}, [x, factor](const Tensor& g, const Tensor&) {
    auto& gx = x.tape().grad_buffer(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * factor;
  });
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

// exp over n values in fixed blocks of 8 (the tail padded), so every element
// takes the same vectorized path whatever its offset, buffer size, or address.
// Keeps results bitwise independent of sequence length. Inputs below
// kExpFloor give exactly 0 (Eigen clamps them to a tiny positive value).
constexpr double kExpFloor = -708.0;

void exp_blocks(const double* in, double* out, std::size_t n) {
  using Block = Eigen::Array<double, 8, 1>;
  const Block floor = Block::Constant(kExpFloor);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const Block v = Eigen::Map<const Block>(in + i);
    const Block b = (v < floor).select(0.0, v.exp());
    Eigen::Map<Block>(out + i) = b;
  }
  if (i < n) {
    Block b = Block::Zero();
    for (std::size_t k = i; k < n; ++k) b[static_cast<Eigen::Index>(k - i)] = in[k];
    b = (b < floor).select(0.0, b.exp());
    for (std::size_t k = i; k < n; ++k) out[k] = b[static_cast<Eigen::Index>(k - i)];
  }
}
}  // namespace

Var gelu(const Var& x) {
  const double kC = kGeluC;
  const double kA = kGeluA;
  const Tensor& X = x.value();
  using Array = Eigen::Array<double, Eigen::Dynamic, 1>;
  const auto n = static_cast<Eigen::Index>(X.size());
  Eigen::Map<const Array> v(X.ptr(), n);
  // tanh(u) = 1 - 2 / (exp(2u) + 1); Eigen vectorizes exp but not tanh for doubles.
  Array t = 2.0 * kC * (v + kA * v.cube());
  exp_blocks(t.data(), t.data(), X.size());
  t = 1.0 - 2.0 / (t + 1.0);
  Tensor out(X.shape());
  Eigen::Map<Array>(out.ptr(), n) = 0.5 * v * (1.0 + t);
  return x.tape().record(std::move(out), {x}, [x, kC, kA, t = std::move(t)](const Tensor& g, const Tensor&) {
    const Tensor& X = x.value();
    auto& gx = x.tape().grad_buffer(x);
    Eigen::Map<const Array> v(X.ptr(), t.size());
    Eigen::Map<const Array> gm(g.ptr(), t.size());
    Eigen::Map<Array>(gx.ptr(), t.size()) +=
        gm * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t.square()) * kC * (1.0 + 3.0 * kA * v.square()));
  });
}

Var softmax(const Var& x, std::ptrdiff_t axis) {
  const Tensor& X = x.value();
  const std::size_t ax = normalize_axis(axis, X.rank());
  const std::size_t len = X.shape()[ax];
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < ax; ++i) outer *= X.shape()[i];
  for (std::size_t i = ax + 1; i < X.rank(); ++i) inner *= X.shape()[i];

  Tensor out(X.shape());
  if (inner == 1) {
    // Contiguous rows.
    std::vector<double> shifted(len);
    for (std::size_t o = 0; o < outer; ++o) {
      const double* xr = X.ptr() + o * len;
      double* yr = out.ptr() + o * len;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < len; ++k) mx = std::max(mx, xr[k]);
      for (std::size_t k = 0; k < len; ++k) shifted[k] = xr[k] - mx;
      exp_blocks(shifted.data(), yr, len);
      double total = 0.0;
      for (std::size_t k = 0; k < len; ++k) total += yr[k];
      const double inv = 1.0 / total;
      for (std::size_t k = 0; k < len; ++k) yr[k] *= inv;
    }
    return x.tape().record(std::move(out), {x}, [x, outer, len](const Tensor& g, const Tensor& Y) {
      auto& gx = x.tape().grad_buffer(x);
      for (std::size_t o = 0; o < outer; ++o) {
        const double* gr = g.ptr() + o * len;
        const double* yr = Y.ptr() + o * len;
        double* dr = gx.ptr() + o * len;
        double dot = 0.0;
        for (std::size_t k = 0; k < len; ++k) dot += gr[k] * yr[k];
        for (std::size_t k = 0; k < len; ++k) dr[k] += yr[k] * (gr[k] - dot);
      }
    });
  }
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < len; ++k) mx = std::max(mx, X[base + k * inner]);
      double total = 0.0;
      for (std::size_t k = 0; k < len; ++k) {
        const double e = std::exp(X[base + k * inner] - mx);
        out[base + k * inner] = e;
        total += e;
      }
      const double inv = 1.0 / total;
      for (std::size_t k = 0; k < len; ++k) out[base + k * inner] *= inv;
    }
  }
  return x.tape().record(std::move(out), {x}, [x, outer, inner, len](const Tensor& g, const Tensor& Y) {
    auto& gx = x.tape().grad_buffer(x);
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * len * inner + in;
        double dot = 0.0;
        for (std::size_t k = 0; k < len; ++k) dot += g[base + k * inner] * Y[base + k * inner];
        for (std::size_t k = 0; k < len; ++k) {
          const std::size_t idx = base + k * inner;
          gx[idx] += Y[idx] * (g[idx] - dot);
        }
      }
    }
  });
}

Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps) {
  const Tensor& X = x.value();
  const Tensor& G = gain.value();
  const Tensor& Bv = bias.value();
  if (!(eps > 0.0)) throw ParameterError("layer_norm: eps must be positive");
  if (X.rank() < 1) throw DimensionError("layer_norm: input must have at least one axis");
  const std::size_t width = X.dim(-1);
  if (G.size() != width || Bv.size() != width) {
    throw DimensionError("layer_norm: gain " + shape_string(G.shape()) + " / bias " + shape_string(Bv.shape()) +
                         " do not match last axis of " + shape_string(X.shape()));
  }
  const std::size_t rows = X.size() / width;
  Tensor out(X.shape());
  std::vector<double> xhat(X.size());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = X.ptr() + r * width;
    double mean = 0.0;
    for (std::size_t c = 0; c < width; ++c) mean += row[c];
    mean /= static_cast<double>(width);
    double var = 0.0;
    for (std::size_t c = 0; c < width; ++c) var += (row[c] - mean) * (row[c] - mean);
    var /= static_cast<double>(width);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t c = 0; c < width; ++c) {
      const double h = (row[c] - mean) * is;
      xhat[r * width + c] = h;
      out[r * width + c] = h * G[c] + Bv[c];
    }
  }
  return x.tape().record(
      std::move(out), {x, gain, bias},
      [x, gain, bias, rows, width, xhat = std::move(xhat), inv_std = std::move(inv_std)](const Tensor& g, const Tensor&) {
        auto& tape = x.tape();
        const Tensor& G = gain.value();
        if (gain.requires_grad()) {
          auto& gg = tape.grad_buffer(gain);
          for (std::size_t i = 0; i < g.size(); ++i) gg[i % width] += g[i] * xhat[i];
        }
        if (bias.requires_grad()) {
          auto& gb = tape.grad_buffer(bias);
          for (std::size_t i = 0; i < g.size(); ++i) gb[i % width] += g[i];
        }
        if (x.requires_grad()) {
          auto& gx = tape.grad_buffer(x);
          const double n = static_cast<double>(width);
          for (std::size_t r = 0; r < rows; ++r) {
            double mean_d = 0.0, mean_dh = 0.0;
            for (std::size_t c = 0; c < width; ++c) {
              const double d = g[r * width + c] * G[c];
              mean_d += d;
              mean_dh += d * xhat[r * width + c];
            }
            mean_d /= n;
            mean_dh /= n;
            for (std::size_t c = 0; c < width; ++c) {
              const std::size_t i = r * width + c;
              const double d = g[i] * G[c];
              gx[i] += inv_std[r] * (d - mean_d - xhat[i] * mean_dh);
            }
          }
        }
      });
}

Var dropout(const Var& x, const DropoutSpec& spec) {
  spec.validate();
  if (!spec.active || spec.rate == 0.0) {
    // Identity, but still a distinct node so graph structure does not depend on the flag.
    return x.tape().record(Tensor(x.value()), {x}, [x](const Tensor& g, const Tensor&) { x.tape().grad_buffer(x) += g; });
  }
  const Tensor& X = x.value();
  auto keep = dropout_keep_mask(spec, X.size());
  const double factor = 1.0 / (1.0 - spec.rate);
  Tensor out(X.shape());
  for (std::size_t i = 0; i < X.size(); ++i) out[i] = keep[i] ? X[i] * factor : 0.0;
  return x.tape().record(std::move(out), {x}, [x, factor, keep = std::move(keep)](const Tensor& g, const Tensor&) {
    auto& gx = x.tape().grad_buffer(x);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (keep[i]) gx[i] += g[i] * factor;
    }
  });
}

Var cross_entropy(const Var& logits, std::span<const int> targets) {
  const Tensor& L = logits.value();
  if (L.rank() != 2) throw DimensionError("cross_entropy: logits must be [positions, vocab], got " + shape_string(L.shape()));
  const std::size_t positions = L.dim(0);
  const std::size_t vocab = L.dim(1);
  if (targets.size() != positions) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                         std::to_string(positions) + " positions");
  }
  std::size_t counted = 0;
  for (std::size_t p = 0; p < positions; ++p) {
    const int t = targets[p];
    if (t == kIgnoreTarget) continue;
    if (t < 0 || static_cast<std::size_t>(t) >= vocab) {
      throw VocabularyError("cross_entropy: target id " + std::to_string(t) + " at position " + std::to_string(p) +
                            " outside vocabulary of " + std::to_string(vocab));
    }
    ++counted;
  }
  if (counted == 0) throw ParameterError("cross_entropy: every target is ignored");

  // Row-wise softmax probabilities kept for the backward pass.
  std::vector<double> probs(L.size(), 0.0);
  double total = 0.0;
  for (std::size_t p = 0; p < positions; ++p) {
    if (targets[p] == kIgnoreTarget) continue;
    const double* row = L.ptr() + p * vocab;
    const double mx = *std::max_element(row, row + vocab);
    double z = 0.0;
    for (std::size_t v = 0; v < vocab; ++v) z += std::exp(row[v] - mx);
    const double log_z = mx + std::log(z);
    total += log_z - row[targets[p]];
    for (std::size_t v = 0; v < vocab; ++v) probs[p * vocab + v] = std::exp(row[v] - log_z);
  }
  const double inv_count = 1.0 / static_cast<double>(counted);
  std::vector<int> kept_targets(targets.begin(), targets.end());
  return logits.tape().record(
      Tensor::scalar(total * inv_count), {logits},
      [logits, vocab, inv_count, probs = std::move(probs), kept_targets = std::move(kept_targets)](const Tensor& g, const Tensor&) {
        auto& gl = logits.tape().grad_buffer(logits);
        const double scale_g = g[0] * inv_count;
        for (std::size_t p = 0; p < kept_targets.size(); ++p) {
          if (kept_targets[p] == kIgnoreTarget) continue;
          for (std::size_t v = 0; v < vocab; ++v) gl[p * vocab + v] += scale_g * probs[p * vocab + v];
          gl[p * vocab + static_cast<std::size_t>(kept_targets[p])] -= scale_g;
        }
      });
}

Var embedding(const Var& table, std::span<const int> ids) {
  const Tensor& T = table.value();
  if (T.rank() != 2) throw DimensionError("embedding: table must be [vocab, width], got " + shape_string(T.shape()));
  if (ids.empty()) throw DimensionError("embedding: no ids");
  const std::size_t vocab = T.dim(0);
  const std::size_t width = T.dim(1);
  Tensor out({ids.size(), width});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
      throw VocabularyError("embedding: id " + std::to_string(ids[i]) + " at offset " + std::to_string(i) +
                            " outside table of " + std::to_string(vocab));
    }
    std::copy_n(T.ptr() + static_cast<std::size_t>(ids[i]) * width, width, out.ptr() + i * width);
  }
  std::vector<int> kept(ids.begin(), ids.end());
  return table.tape().record(std::move(out), {table}, [table, width, kept = std::move(kept)](const Tensor& g, const Tensor&) {
    auto& gt = table.tape().grad_buffer(table);
    for (std::size_t i = 0; i < kept.size(); ++i) {
      double* dst = gt.ptr() + static_cast<std::size_t>(kept[i]) * width;
      const double* src = g.ptr() + i * width;
      for (std::size_t c = 0; c < width; ++c) dst[c] += src[c];
    }
  });
}

Var reshape(const Var& x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return x.tape().record(std::move(out), {x}, [x](const Tensor& g, const Tensor&) {
    auto& gx = x.tape().grad_buffer(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

Var permute(const Var& x, const std::vector<std::size_t>& order) {
  const Tensor& X = x.value();
  const std::size_t rank = X.rank();
  if (order.size() != rank) {
    throw DimensionError("permute: order has " + std::to_string(order.size()) + " axes for shape " +
                         shape_string(X.shape()));
  }
  std::vector<bool> seen(rank, false);
  for (auto a : order) {
    if (a >= rank || seen[a]) throw DimensionError("permute: order is not a permutation");
    seen[a] = true;
  }
  std::vector<std::size_t> in_strides(rank, 1);
  for (std::size_t i = rank - 1; i-- > 0;) in_strides[i] = in_strides[i + 1] * X.shape()[i + 1];
  Shape out_shape(rank);
  Shape permuted_strides(rank);
  for (std::size_t d = 0; d < rank; ++d) {
    out_shape[d] = X.shape()[order[d]];
    permuted_strides[d] = in_strides[order[d]];
  }

  // source[i] is the input offset of output element i
  std::vector<std::size_t> source(X.size());
  std::vector<std::size_t> counter(rank, 0);
  std::size_t offset = 0;
  for (std::size_t linear = 0; linear < source.size(); ++linear) {
    source[linear] = offset;
    for (std::size_t axis = rank; axis-- > 0;) {
      if (++counter[axis] < out_shape[axis]) {
        offset += permuted_strides[axis];
        break;
      }
      offset -= permuted_strides[axis] * (out_shape[axis] - 1);
      counter[axis] = 0;
    }
  }
  Tensor out(out_shape);
  for (std::size_t i = 0; i < source.size(); ++i) out[i] = X[source[i]];
  return x.tape().record(std::move(out), {x}, [x, source = std::move(source)](const Tensor& g, const Tensor&) {
    auto& gx = x.tape().grad_buffer(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[source[i]] += g[i];
  });
}

Var causal_mask(const Var& scores) {
  const Tensor& S = scores.value();
  if (S.rank() < 2) throw DimensionError("causal_mask: needs at least two axes, got " + shape_string(S.shape()));
  const std::size_t queries = S.dim(-2);
  const std::size_t keys = S.dim(-1);
  if (keys < queries) {
    throw DimensionError("causal_mask: fewer keys than queries in " + shape_string(S.shape()));
  }
  const std::size_t shift = keys - queries;
  Tensor out = S;
  const std::size_t blocks = S.size() / (queries * keys);
  for (std::size_t b = 0; b < blocks; ++b) {
    for (std::size_t q = 0; q < queries; ++q) {
      double* row = out.ptr() + (b * queries + q) * keys;
      for (std::size_t k = q + shift + 1; k < keys; ++k) row[k] = kMaskedScore;
    }
  }
  return scores.tape().record(std::move(out), {scores}, [scores, queries, keys, shift](const Tensor& g, const Tensor&) {
    auto& gs = scores.tape().grad_buffer(scores);
    const std::size_t blocks = g.size() / (queries * keys);
    for (std::size_t b = 0; b < blocks; ++b) {
      for (std::size_t q = 0; q < queries; ++q) {
        const std::size_t base = (b * queries + q) * keys;
        for (std::size_t k = 0; k <= q + shift; ++k) gs[base + k] += g[base + k];
      }
    }
  });
}

Var sum(const Var& x) {
  const auto d = x.value().data();
  const double total = std::accumulate(d.begin(), d.end(), 0.0);
  return x.tape().record(Tensor::scalar(total), {x}, [x](const Tensor& g, const Tensor&) {
    auto& gx = x.tape().grad_buffer(x);
    for (auto& v : gx.data()) v += g[0];
  });
}

}  // namespace dprobe::numerics
