#include "mcrc/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Core>

#include "mcrc/error.hpp"

namespace mcrc {
namespace {

Tape& same_tape(const Var& a, const Var& b, const char* op) {
  Tape& t = a.tape();
  if (&b.tape() != &t) throw GraphError(std::string(op) + ": operands live on different tapes");
  return t;
}

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + to_string(a.shape()) + " and " +
                   to_string(b.shape()));
}

Tensor matrix_like(std::size_t rows, std::size_t cols) { return Tensor({rows, cols}); }

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<RowMajor> view(Tensor& x, std::size_t rows, std::size_t cols) {
  return {x.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
}

Eigen::Map<const RowMajor> view(const Tensor& x, std::size_t rows, std::size_t cols) {
  return {x.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
}

bool needs(Tape& t, std::size_t id) { return t.requires_grad(id); }

template <typename Fwd, typename Deriv>
Var unary(Var a, const char* op, Fwd fwd, Deriv deriv) {
  Tape& t = a.tape();
  const Tensor& x = a.value();
  Tensor y = matrix_like(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = fwd(x[i]);
  const std::size_t ia = a.id();
  return t.record(
      std::move(y), {ia},
      [ia, deriv](Tape& t, std::size_t self) {
        const Tensor& out = t.value(self);
        const Tensor& g = t.grad(self);
        Tensor& ga = t.grad_buffer(ia);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * deriv(out[i]);
      },
      op);
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = same_tape(a, b, "matmul");
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
  if (B.rows() != k) shape_error("matmul", A, B);
  Tensor C = matrix_like(m, n);
  view(C, m, n).noalias() = view(A, m, k) * view(B, k, n);
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(
      std::move(C), {ia, ib},
      [ia, ib, m, k, n](Tape& t, std::size_t self) {
        const auto g = view(t.grad(self), m, n);
        if (needs(t, ia)) view(t.grad_buffer(ia), m, k).noalias() += g * view(t.value(ib), k, n).transpose();
        if (needs(t, ib)) view(t.grad_buffer(ib), k, n).noalias() += view(t.value(ia), m, k).transpose() * g;
      },
      "matmul");
}

namespace {

// Shared by add and sub: sign is +1 or -1 on the right operand.
Var add_signed(Var a, Var b, double sign, const char* op) {
  Tape& t = same_tape(a, b, op);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  const std::size_t m = A.rows(), n = A.cols();
  const bool broadcast = !(B.rows() == m && B.cols() == n);
  if (broadcast && !(B.rows() == 1 && B.cols() == n)) shape_error(op, A, B);
  Tensor C = matrix_like(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      C[i * n + j] = A[i * n + j] + sign * B[broadcast ? j : i * n + j];
    }
  }
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(
      std::move(C), {ia, ib},
      [ia, ib, m, n, broadcast, sign](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        if (needs(t, ia)) t.grad_buffer(ia) += g;
        if (needs(t, ib)) {
          Tensor& gb = t.grad_buffer(ib);
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) gb[broadcast ? j : i * n + j] += sign * g[i * n + j];
          }
        }
      },
      op);
}

}  // namespace

Var add(Var a, Var b) { return add_signed(a, b, 1.0, "add"); }
Var sub(Var a, Var b) { return add_signed(a, b, -1.0, "sub"); }

Var mul(Var a, Var b) {
  Tape& t = same_tape(a, b, "mul");
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  const std::size_t m = A.rows(), n = A.cols();
  enum class Mode { kSame, kColumn, kRow };
  Mode mode;
  if (B.rows() == m && B.cols() == n) {
    mode = Mode::kSame;
  } else if (B.rows() == m && B.cols() == 1) {
    mode = Mode::kColumn;
  } else if (B.rows() == 1 && B.cols() == n) {
    mode = Mode::kRow;
  } else {
    shape_error("mul", A, B);
  }
  auto bidx = [mode, n](std::size_t i, std::size_t j) {
    switch (mode) {
      case Mode::kSame: return i * n + j;
      case Mode::kColumn: return i;
      case Mode::kRow: return j;
    }
    return std::size_t{0};
  };
  Tensor C = matrix_like(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) C[i * n + j] = A[i * n + j] * B[bidx(i, j)];
  }
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(
      std::move(C), {ia, ib},
      [ia, ib, m, n, bidx](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        if (needs(t, ia)) {
          const Tensor& B = t.value(ib);
          Tensor& ga = t.grad_buffer(ia);
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[i * n + j] * B[bidx(i, j)];
          }
        }
        if (needs(t, ib)) {
          const Tensor& A = t.value(ia);
          Tensor& gb = t.grad_buffer(ib);
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) gb[bidx(i, j)] += g[i * n + j] * A[i * n + j];
          }
        }
      },
      "mul");
}

Var scale(Var a, double factor) {
  Tape& t = a.tape();
  const Tensor& A = a.value();
  Tensor C = matrix_like(A.rows(), A.cols());
  for (std::size_t i = 0; i < A.size(); ++i) C[i] = A[i] * factor;
  const std::size_t ia = a.id();
  return t.record(
      std::move(C), {ia},
      [ia, factor](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        Tensor& ga = t.grad_buffer(ia);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
      },
      "scale");
}

Var sigmoid(Var a) {
  return unary(
      a, "sigmoid",
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double y) { return y * (1.0 - y); });
}

Var tanh(Var a) {
  return unary(
      a, "tanh", [](double x) { return std::tanh(x); }, [](double y) { return 1.0 - y * y; });
}

Var concat(std::initializer_list<Var> parts) {
  return concat(std::span<const Var>(parts.begin(), parts.size()));
}

Var concat(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat: no operands");
  Tape& t = parts[0].tape();
  const std::size_t m = parts[0].rows();
  std::vector<std::size_t> ids, widths;
  std::size_t total = 0;
  for (const Var& p : parts) {
    same_tape(parts[0], p, "concat");
    if (p.rows() != m) shape_error("concat", parts[0].value(), p.value());
    ids.push_back(p.id());
    widths.push_back(p.cols());
    total += p.cols();
  }
  Tensor C = matrix_like(m, total);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& P = parts[k].value();
    const std::size_t w = widths[k];
    for (std::size_t i = 0; i < m; ++i) {
      std::copy_n(P.data() + i * w, w, C.data() + i * total + offset);
    }
    offset += w;
  }
  return t.record(
      std::move(C), ids,
      [ids, widths, m, total](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        std::size_t offset = 0;
        for (std::size_t k = 0; k < ids.size(); ++k) {
          const std::size_t w = widths[k];
          if (needs(t, ids[k])) {
            Tensor& gp = t.grad_buffer(ids[k]);
            for (std::size_t i = 0; i < m; ++i) {
              for (std::size_t j = 0; j < w; ++j) gp[i * w + j] += g[i * total + offset + j];
            }
          }
          offset += w;
        }
      },
      "concat");
}

Var slice_cols(Var a, std::size_t start, std::size_t count) {
  Tape& t = a.tape();
  const Tensor& A = a.value();
  const std::size_t m = A.rows(), n = A.cols();
  if (count == 0 || start + count > n) {
    throw ShapeError("slice_cols: range [" + std::to_string(start) + ", " +
                     std::to_string(start + count) + ") outside " + to_string(A.shape()));
  }
  Tensor C = matrix_like(m, count);
  for (std::size_t i = 0; i < m; ++i) std::copy_n(A.data() + i * n + start, count, C.data() + i * count);
  const std::size_t ia = a.id();
  return t.record(
      std::move(C), {ia},
      [ia, m, n, start, count](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        Tensor& ga = t.grad_buffer(ia);
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < count; ++j) ga[i * n + start + j] += g[i * count + j];
        }
      },
      "slice_cols");
}

Var stack_rows(std::initializer_list<Var> parts) {
  return stack_rows(std::span<const Var>(parts.begin(), parts.size()));
}

Var stack_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("stack_rows: no operands");
  Tape& t = parts[0].tape();
  const std::size_t n = parts[0].cols();
  std::vector<std::size_t> ids, sizes;
  std::size_t total = 0;
  for (const Var& p : parts) {
    same_tape(parts[0], p, "stack_rows");
    if (p.cols() != n) shape_error("stack_rows", parts[0].value(), p.value());
    ids.push_back(p.id());
    sizes.push_back(p.value().size());
    total += p.rows();
  }
  Tensor C = matrix_like(total, n);
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Tensor& P = p.value();
    std::copy_n(P.data(), P.size(), C.data() + offset);
    offset += P.size();
  }
  return t.record(
      std::move(C), ids,
      [ids, sizes](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        std::size_t offset = 0;
        for (std::size_t k = 0; k < ids.size(); ++k) {
          if (needs(t, ids[k])) {
            Tensor& gp = t.grad_buffer(ids[k]);
            for (std::size_t i = 0; i < sizes[k]; ++i) gp[i] += g[offset + i];
          }
          offset += sizes[k];
        }
      },
      "stack_rows");
}

Var slice_rows(Var a, std::size_t start, std::size_t count) {
  Tape& t = a.tape();
  const Tensor& A = a.value();
  const std::size_t n = A.cols();
  if (count == 0 || start + count > A.rows()) {
    throw ShapeError("slice_rows: range [" + std::to_string(start) + ", " +
                     std::to_string(start + count) + ") outside " + to_string(A.shape()));
  }
  Tensor C = matrix_like(count, n);
  std::copy_n(A.data() + start * n, count * n, C.data());
  const std::size_t ia = a.id();
  return t.record(
      std::move(C), {ia},
      [ia, start, n](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        Tensor& ga = t.grad_buffer(ia);
        double* dst = ga.data() + start * n;
        for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
      },
      "slice_rows");
}

Var softmax(Var a, const Tensor* mask) {
  Tape& t = a.tape();
  const Tensor& A = a.value();
  const std::size_t m = A.rows(), n = A.cols();
  if (mask && (mask->rows() != m || mask->cols() != n)) shape_error("softmax mask", A, *mask);
  Tensor Y = matrix_like(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (!mask || mask->at(i, j) != 0.0) mx = std::max(mx, A[i * n + j]);
    }
    if (!std::isfinite(mx)) throw ShapeError("softmax: row " + std::to_string(i) + " is fully masked");
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (mask && mask->at(i, j) == 0.0) continue;
      const double e = std::exp(A[i * n + j] - mx);
      Y[i * n + j] = e;
      z += e;
    }
    for (std::size_t j = 0; j < n; ++j) Y[i * n + j] /= z;
  }
  const std::size_t ia = a.id();
  return t.record(
      std::move(Y), {ia},
      [ia, m, n](Tape& t, std::size_t self) {
        const Tensor& y = t.value(self);
        const Tensor& g = t.grad(self);
        Tensor& ga = t.grad_buffer(ia);
        for (std::size_t i = 0; i < m; ++i) {
          double dot = 0.0;
          for (std::size_t j = 0; j < n; ++j) dot += y[i * n + j] * g[i * n + j];
          for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += y[i * n + j] * (g[i * n + j] - dot);
        }
      },
      "softmax");
}

Var gather_rows(Var table, std::span<const std::size_t> ids) {
  Tape& t = table.tape();
  const Tensor& W = table.value();
  const std::size_t n = W.cols();
  if (ids.empty()) throw ShapeError("gather_rows: no ids");
  Tensor C = matrix_like(ids.size(), n);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= W.rows()) {
      throw ShapeError("gather_rows: id " + std::to_string(ids[i]) + " outside table " +
                       to_string(W.shape()));
    }
    std::copy_n(W.data() + ids[i] * n, n, C.data() + i * n);
  }
  const std::size_t it = table.id();
  std::vector<std::size_t> rows(ids.begin(), ids.end());
  return t.record(
      std::move(C), {it},
      [it, rows = std::move(rows), n](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        Tensor& gw = t.grad_buffer(it);
        for (std::size_t i = 0; i < rows.size(); ++i) {
          double* dst = gw.data() + rows[i] * n;
          for (std::size_t j = 0; j < n; ++j) dst[j] += g[i * n + j];
        }
      },
      "gather_rows");
}

Var apply_mask(Var a, const Tensor& mask) {
  Tape& t = a.tape();
  const Tensor& A = a.value();
  if (mask.size() != A.size()) shape_error("apply_mask", A, mask);
  Tensor C = matrix_like(A.rows(), A.cols());
  for (std::size_t i = 0; i < A.size(); ++i) C[i] = A[i] * mask[i];
  const std::size_t ia = a.id();
  return t.record(
      std::move(C), {ia},
      [ia, mask](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        Tensor& ga = t.grad_buffer(ia);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * mask[i];
      },
      "apply_mask");
}

Var dropout(Var a, double p, std::mt19937_64& rng, bool training) {
  if (!training || p <= 0.0) return a;
  if (p >= 1.0) throw Error("dropout rate must be below 1");
  const Tensor& A = a.value();
  Tensor mask({A.rows(), A.cols()});
  std::bernoulli_distribution keep(1.0 - p);
  const double kept = 1.0 / (1.0 - p);
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = keep(rng) ? kept : 0.0;
  return apply_mask(a, mask);
}

Var scale_rows(Var a, std::span<const double> factors) {
  Tape& t = a.tape();
  const Tensor& A = a.value();
  const std::size_t m = A.rows(), n = A.cols();
  if (factors.size() != m) throw ShapeError("scale_rows: factor count does not match rows");
  Tensor C = matrix_like(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) C[i * n + j] = A[i * n + j] * factors[i];
  }
  const std::size_t ia = a.id();
  std::vector<double> f(factors.begin(), factors.end());
  return t.record(
      std::move(C), {ia},
      [ia, f = std::move(f), n](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        Tensor& ga = t.grad_buffer(ia);
        for (std::size_t i = 0; i < f.size(); ++i) {
          for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[i * n + j] * f[i];
        }
      },
      "scale_rows");
}

Var blend_rows(std::span<const double> keep, Var a, Var b) {
  Tape& t = same_tape(a, b, "blend_rows");
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (!A.same_shape(B) && !(A.rows() == B.rows() && A.cols() == B.cols())) shape_error("blend_rows", A, B);
  const std::size_t m = A.rows(), n = A.cols();
  if (keep.size() != m) throw ShapeError("blend_rows: selector count does not match rows");
  Tensor C = matrix_like(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    const double* src = keep[i] != 0.0 ? A.data() : B.data();
    std::copy_n(src + i * n, n, C.data() + i * n);
  }
  const std::size_t ia = a.id(), ib = b.id();
  std::vector<char> k(m);
  for (std::size_t i = 0; i < m; ++i) k[i] = keep[i] != 0.0;
  return t.record(
      std::move(C), {ia, ib},
      [ia, ib, k = std::move(k), n](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        const bool na = needs(t, ia), nb = needs(t, ib);
        for (std::size_t i = 0; i < k.size(); ++i) {
          if (k[i] ? !na : !nb) continue;
          Tensor& dst = t.grad_buffer(k[i] ? ia : ib);
          for (std::size_t j = 0; j < n; ++j) dst[i * n + j] += g[i * n + j];
        }
      },
      "blend_rows");
}

Var sum(Var a) {
  Tape& t = a.tape();
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  const std::size_t ia = a.id();
  return t.record(
      Tensor::scalar(s), {ia},
      [ia](Tape& t, std::size_t self) {
        const double g = t.grad(self)[0];
        Tensor& ga = t.grad_buffer(ia);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
      },
      "sum");
}

Var sum_cols(Var a) {
  Tape& t = a.tape();
  const Tensor& A = a.value();
  const std::size_t m = A.rows(), n = A.cols();
  Tensor C = matrix_like(m, 1);
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += A[i * n + j];
    C[i] = s;
  }
  const std::size_t ia = a.id();
  return t.record(
      std::move(C), {ia},
      [ia, m, n](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        Tensor& ga = t.grad_buffer(ia);
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[i];
        }
      },
      "sum_cols");
}

Var weighted_time_sum(Var weights, Var seq) {
  Tape& t = same_tape(weights, seq, "weighted_time_sum");
  const Tensor& W = weights.value();
  const Tensor& S = seq.value();
  const std::size_t B = W.rows(), T = W.cols(), d = S.cols();
  if (S.rows() != T * B) shape_error("weighted_time_sum", W, S);
  Tensor C = matrix_like(B, d);
  for (std::size_t b = 0; b < B; ++b) {
    double* out = C.data() + b * d;
    for (std::size_t s = 0; s < T; ++s) {
      const double w = W[b * T + s];
      if (w == 0.0) continue;
      const double* row = S.data() + (s * B + b) * d;
      for (std::size_t j = 0; j < d; ++j) out[j] += w * row[j];
    }
  }
  const std::size_t iw = weights.id(), is = seq.id();
  return t.record(
      std::move(C), {iw, is},
      [iw, is, B, T, d](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        if (needs(t, iw)) {
          const Tensor& S = t.value(is);
          Tensor& gw = t.grad_buffer(iw);
          for (std::size_t b = 0; b < B; ++b) {
            for (std::size_t s = 0; s < T; ++s) {
              const double* row = S.data() + (s * B + b) * d;
              double acc = 0.0;
              for (std::size_t j = 0; j < d; ++j) acc += g[b * d + j] * row[j];
              gw[b * T + s] += acc;
            }
          }
        }
        if (needs(t, is)) {
          const Tensor& W = t.value(iw);
          Tensor& gs = t.grad_buffer(is);
          for (std::size_t b = 0; b < B; ++b) {
            for (std::size_t s = 0; s < T; ++s) {
              const double w = W[b * T + s];
              if (w == 0.0) continue;
              double* row = gs.data() + (s * B + b) * d;
              for (std::size_t j = 0; j < d; ++j) row[j] += w * g[b * d + j];
            }
          }
        }
      },
      "weighted_time_sum");
}

Var masked_time_mean(Var seq, const Tensor& mask) {
  const std::size_t B = mask.rows(), T = mask.cols();
  Tensor w({B, T});
  for (std::size_t b = 0; b < B; ++b) {
    double len = 0.0;
    for (std::size_t s = 0; s < T; ++s) len += mask.at(b, s);
    if (len == 0.0) throw ShapeError("masked_time_mean: sequence " + std::to_string(b) + " is fully masked");
    for (std::size_t s = 0; s < T; ++s) w.at(b, s) = mask.at(b, s) / len;
  }
  return weighted_time_sum(seq.tape().constant(std::move(w)), seq);
}

Var time_to_batch(Var column, std::size_t steps, std::size_t batch) {
  Tape& t = column.tape();
  const Tensor& A = column.value();
  if (A.cols() != 1 || A.rows() != steps * batch) {
    throw ShapeError("time_to_batch: expected [" + std::to_string(steps * batch) + "x1], got " +
                     to_string(A.shape()));
  }
  Tensor C = matrix_like(batch, steps);
  for (std::size_t s = 0; s < steps; ++s) {
    for (std::size_t b = 0; b < batch; ++b) C[b * steps + s] = A[s * batch + b];
  }
  const std::size_t ia = column.id();
  return t.record(
      std::move(C), {ia},
      [ia, steps, batch](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        Tensor& ga = t.grad_buffer(ia);
        for (std::size_t s = 0; s < steps; ++s) {
          for (std::size_t b = 0; b < batch; ++b) ga[s * batch + b] += g[b * steps + s];
        }
      },
      "time_to_batch");
}

Var tile_rows(Var a, std::size_t steps) {
  Tape& t = a.tape();
  const Tensor& A = a.value();
  if (steps == 0) throw ShapeError("tile_rows: zero steps");
  Tensor C = matrix_like(A.rows() * steps, A.cols());
  for (std::size_t s = 0; s < steps; ++s) std::copy_n(A.data(), A.size(), C.data() + s * A.size());
  const std::size_t ia = a.id();
  const std::size_t block = A.size();
  return t.record(
      std::move(C), {ia},
      [ia, steps, block](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        Tensor& ga = t.grad_buffer(ia);
        for (std::size_t s = 0; s < steps; ++s) {
          for (std::size_t i = 0; i < block; ++i) ga[i] += g[s * block + i];
        }
      },
      "tile_rows");
}

Var cross_entropy(Var logits, std::span<const std::size_t> targets, std::span<const double> weights,
                  const Tensor* mask) {
  Tape& t = logits.tape();
  const Tensor& X = logits.value();
  const std::size_t m = X.rows(), n = X.cols();
  if (targets.size() != m || weights.size() != m) {
    throw ShapeError("cross_entropy: need one target and weight per row");
  }
  if (mask && (mask->rows() != m || mask->cols() != n)) shape_error("cross_entropy mask", X, *mask);
  auto live = [mask](std::size_t i, std::size_t j) { return !mask || mask->at(i, j) != 0.0; };

  // Probabilities are cached for the backward rule.
  Tensor probs({m, n});
  double loss = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    if (weights[i] == 0.0) continue;
    if (targets[i] >= n || !live(i, targets[i])) {
      throw Error("cross_entropy: target " + std::to_string(targets[i]) + " out of range in row " +
                  std::to_string(i));
    }
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (live(i, j)) mx = std::max(mx, X[i * n + j]);
    }
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (live(i, j)) z += std::exp(X[i * n + j] - mx);
    }
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < n; ++j) {
      if (live(i, j)) probs[i * n + j] = std::exp(X[i * n + j] - lse);
    }
    loss += weights[i] * (lse - X[i * n + targets[i]]);
  }
  const std::size_t ix = logits.id();
  std::vector<std::size_t> tg(targets.begin(), targets.end());
  std::vector<double> w(weights.begin(), weights.end());
  return t.record(
      Tensor::scalar(loss), {ix},
      [ix, tg = std::move(tg), w = std::move(w), probs = std::move(probs), n](Tape& t, std::size_t self) {
        const double g = t.grad(self)[0];
        Tensor& gx = t.grad_buffer(ix);
        for (std::size_t i = 0; i < tg.size(); ++i) {
          if (w[i] == 0.0) continue;
          const double c = g * w[i];
          for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += c * probs[i * n + j];
          gx[i * n + tg[i]] -= c;
        }
      },
      "cross_entropy");
}

}  // namespace mcrc
