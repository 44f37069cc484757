#include "abevo/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace abevo::model {

namespace {

constexpr double kMaskScore = -1e30;

void ensure_grad(Tensor::Node& n) {
  if (n.grad.size() != n.data.size()) n.grad.assign(n.data.size(), 0.0);
}

int last_dim(const std::vector<int>& shape) {
  if (shape.empty()) throw NumericError("tensor: scalar has no last dimension");
  return shape.back();
}

}  // namespace

int64_t numel_of(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  auto node = std::make_shared<Node>();
  node->data.assign(static_cast<size_t>(numel_of(shape)), 0.0);
  node->shape = std::move(shape);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<double> data, bool requires_grad) {
  if (numel_of(shape) != static_cast<int64_t>(data.size()))
    throw NumericError("tensor: data size does not match shape");
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_data({1}, {value}, requires_grad);
}

double Tensor::item() const {
  if (numel() != 1) throw NumericError("tensor: item() on non-scalar");
  return node_->data[0];
}

Tensor make_op(std::vector<int> shape, std::vector<Tensor> parents) {
  Tensor t = Tensor::zeros(std::move(shape));
  bool rg = false;
  for (const auto& p : parents) rg = rg || p.requires_grad();
  t.node()->requires_grad = rg;
  if (rg) t.node()->parents = std::move(parents);
  return t;
}

void backward(const Tensor& loss) {
  if (loss.numel() != 1) throw NumericError("backward: loss must be scalar");
  // post-order DFS; reversed order visits each node once before its parents
  std::vector<Tensor::Node*> order;
  std::unordered_set<Tensor::Node*> seen;
  struct Frame {
    Tensor::Node* node;
    size_t next_parent;
  };
  std::vector<Frame> stack;
  if (loss.node()->requires_grad) {
    stack.push_back({loss.node(), 0});
    seen.insert(loss.node());
  }
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      Tensor::Node* p = f.node->parents[f.next_parent++].node();
      if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }
  for (auto* n : order) {
    n->grad.assign(n->data.size(), 0.0);
  }
  if (order.empty()) return;
  loss.node()->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward_fn) (*it)->backward_fn(**it);
  }
}

// --- matmul ---------------------------------------------------------------

namespace {

// rows x cols (row-major) -> cols x rows
void transpose_into(const double* __restrict src, int64_t rows, int64_t cols,
                    std::vector<double>& dst) {
  dst.resize(static_cast<size_t>(rows * cols));
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t c = 0; c < cols; ++c) dst[static_cast<size_t>(c * rows + r)] = src[r * cols + c];
}

double dot(const double* __restrict x, const double* __restrict y, int64_t n) {
  double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
  int64_t i = 0;
  for (; i + 4 <= n; i += 4) {
    a0 += x[i] * y[i];
    a1 += x[i + 1] * y[i + 1];
    a2 += x[i + 2] * y[i + 2];
    a3 += x[i + 3] * y[i + 3];
  }
  for (; i < n; ++i) a0 += x[i] * y[i];
  return (a0 + a1) + (a2 + a3);
}

// C[m,n] (+)= A[m,k] * B[k,n] with B supplied transposed as BT[n,k]
void gemm_bt(const double* __restrict A, const double* __restrict BT, double* __restrict C,
             int64_t m, int64_t k, int64_t n, bool accumulate) {
  for (int64_t i = 0; i < m; ++i) {
    const double* arow = A + i * k;
    double* crow = C + i * n;
    for (int64_t j = 0; j < n; ++j) {
      double v = dot(arow, BT + j * k, k);
      crow[j] = accumulate ? crow[j] + v : v;
    }
  }
}

}  // namespace

namespace {

// shared core of matmul and linear: C = A*B (+ bias)
Tensor affine_op(const Tensor& a, const Tensor& b, const Tensor& bias) {
  const auto& ash = a.shape();
  const auto& bsh = b.shape();
  if (bsh.size() != 2) throw NumericError("matmul: rhs must be 2-D");
  const int k = last_dim(ash);
  if (k != bsh[0]) throw NumericError("matmul: inner dimensions disagree");
  const int n = bsh[1];
  const int64_t m = numel_of(ash) / k;
  if (bias.defined() && bias.numel() != n) throw NumericError("linear: bias width mismatch");

  std::vector<int> out_shape(ash.begin(), ash.end() - 1);
  out_shape.push_back(n);
  std::vector<Tensor> parents = {a, b};
  if (bias.defined()) parents.push_back(bias);
  Tensor out = make_op(std::move(out_shape), std::move(parents));

  std::vector<double> bt;
  transpose_into(b.data().data(), k, n, bt);
  gemm_bt(a.data().data(), bt.data(), out.data().data(), m, k, n, false);
  if (bias.defined()) {
    double* C = out.data().data();
    const double* bv = bias.data().data();
    for (int64_t i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) C[i * n + j] += bv[j];
  }

  if (out.requires_grad()) {
    Tensor at = a, btens = b, biast = bias;
    int64_t M = m;
    int K = k, N = n;
    out.node()->backward_fn = [at, btens, biast, M, K, N](Tensor::Node& node) mutable {
      const double* G = node.grad.data();
      if (at.requires_grad()) {
        // dA[m,k] += G[m,n] * B^T[n,k]; B is already the transpose of B^T
        ensure_grad(*at.node());
        gemm_bt(G, btens.data().data(), at.node()->grad.data(), M, N, K, true);
      }
      if (btens.requires_grad()) {
        // dB[k,n] += A^T[k,m] * G[m,n]: pack both transposed, dot over m
        ensure_grad(*btens.node());
        std::vector<double> a_t, g_t;
        transpose_into(at.data().data(), M, K, a_t);
        transpose_into(G, M, N, g_t);
        gemm_bt(a_t.data(), g_t.data(), btens.node()->grad.data(), K, M, N, true);
      }
      if (biast.defined() && biast.requires_grad()) {
        ensure_grad(*biast.node());
        double* dB = biast.node()->grad.data();
        for (int64_t i = 0; i < M; ++i)
          for (int j = 0; j < N; ++j) dB[j] += G[i * N + j];
      }
    };
  }
  return out;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) { return affine_op(a, b, Tensor()); }

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  const int n = last_dim(x.shape());
  if (bias.numel() != n) throw NumericError("add_bias: width mismatch");
  Tensor out = make_op(x.shape(), {x, bias});
  const int64_t rows = x.numel() / n;
  const double* X = x.data().data();
  const double* B = bias.data().data();
  double* O = out.data().data();
  for (int64_t i = 0; i < rows; ++i)
    for (int j = 0; j < n; ++j) O[i * n + j] = X[i * n + j] + B[j];
  if (out.requires_grad()) {
    Tensor xt = x, bt = bias;
    out.node()->backward_fn = [xt, bt, rows, n](Tensor::Node& node) mutable {
      const double* G = node.grad.data();
      if (xt.requires_grad()) {
        ensure_grad(*xt.node());
        double* dX = xt.node()->grad.data();
        for (size_t i = 0; i < node.grad.size(); ++i) dX[i] += G[i];
      }
      if (bt.requires_grad()) {
        ensure_grad(*bt.node());
        double* dB = bt.node()->grad.data();
        for (int64_t i = 0; i < rows; ++i)
          for (int j = 0; j < n; ++j) dB[j] += G[i * n + j];
      }
    };
  }
  return out;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  return affine_op(x, w, bias);
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw NumericError("add: shape mismatch");
  Tensor out = make_op(a.shape(), {a, b});
  const double* A = a.data().data();
  const double* B = b.data().data();
  double* O = out.data().data();
  for (size_t i = 0; i < out.data().size(); ++i) O[i] = A[i] + B[i];
  if (out.requires_grad()) {
    Tensor at = a, bt = b;
    out.node()->backward_fn = [at, bt](Tensor::Node& node) mutable {
      for (Tensor* t : {&at, &bt}) {
        if (!t->requires_grad()) continue;
        ensure_grad(*t->node());
        double* d = t->node()->grad.data();
        for (size_t i = 0; i < node.grad.size(); ++i) d[i] += node.grad[i];
      }
    };
  }
  return out;
}

Tensor scale(const Tensor& a, double c) {
  Tensor out = make_op(a.shape(), {a});
  for (size_t i = 0; i < a.data().size(); ++i) out.data()[i] = a.data()[i] * c;
  if (out.requires_grad()) {
    Tensor at = a;
    out.node()->backward_fn = [at, c](Tensor::Node& node) mutable {
      ensure_grad(*at.node());
      for (size_t i = 0; i < node.grad.size(); ++i) at.node()->grad[i] += c * node.grad[i];
    };
  }
  return out;
}

Tensor mean_of(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw NumericError("mean_of: empty list");
  Tensor acc = scale(xs[0], 1.0 / static_cast<double>(xs.size()));
  for (size_t i = 1; i < xs.size(); ++i)
    acc = add(acc, scale(xs[i], 1.0 / static_cast<double>(xs.size())));
  return acc;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const int d = last_dim(x.shape());
  if (gamma.numel() != d || beta.numel() != d) throw NumericError("layer_norm: width mismatch");
  const int64_t rows = x.numel() / d;
  Tensor out = make_op(x.shape(), {x, gamma, beta});

  auto xhat = std::make_shared<std::vector<double>>(x.data().size());
  auto inv_sigma = std::make_shared<std::vector<double>>(static_cast<size_t>(rows));
  const double* X = x.data().data();
  const double* G = gamma.data().data();
  const double* B = beta.data().data();
  double* O = out.data().data();
  for (int64_t i = 0; i < rows; ++i) {
    const double* row = X + i * d;
    double mu = 0.0;
    for (int j = 0; j < d; ++j) mu += row[j];
    mu /= d;
    double var = 0.0;
    for (int j = 0; j < d; ++j) {
      double c = row[j] - mu;
      var += c * c;
    }
    var /= d;
    double inv = 1.0 / std::sqrt(var + eps);
    (*inv_sigma)[static_cast<size_t>(i)] = inv;
    for (int j = 0; j < d; ++j) {
      double xh = (row[j] - mu) * inv;
      (*xhat)[static_cast<size_t>(i * d + j)] = xh;
      O[i * d + j] = G[j] * xh + B[j];
    }
  }

  if (out.requires_grad()) {
    Tensor xt = x, gt = gamma, bt = beta;
    out.node()->backward_fn = [xt, gt, bt, xhat, inv_sigma, rows, d](Tensor::Node& node) mutable {
      const double* dY = node.grad.data();
      const double* G = gt.data().data();
      if (gt.requires_grad()) ensure_grad(*gt.node());
      if (bt.requires_grad()) ensure_grad(*bt.node());
      if (xt.requires_grad()) ensure_grad(*xt.node());
      for (int64_t i = 0; i < rows; ++i) {
        const double* dyrow = dY + i * d;
        const double* xhrow = xhat->data() + i * d;
        if (gt.requires_grad() || bt.requires_grad()) {
          for (int j = 0; j < d; ++j) {
            if (gt.requires_grad()) gt.node()->grad[static_cast<size_t>(j)] += dyrow[j] * xhrow[j];
            if (bt.requires_grad()) bt.node()->grad[static_cast<size_t>(j)] += dyrow[j];
          }
        }
        if (xt.requires_grad()) {
          double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
          for (int j = 0; j < d; ++j) {
            double dxh = dyrow[j] * G[j];
            sum_dxhat += dxh;
            sum_dxhat_xhat += dxh * xhrow[j];
          }
          double inv = (*inv_sigma)[static_cast<size_t>(i)];
          double* dxrow = xt.node()->grad.data() + i * d;
          for (int j = 0; j < d; ++j) {
            double dxh = dyrow[j] * G[j];
            dxrow[j] += inv * (dxh - sum_dxhat / d - xhrow[j] * sum_dxhat_xhat / d);
          }
        }
      }
    };
  }
  return out;
}

Tensor gelu(const Tensor& x) {
  Tensor out = make_op(x.shape(), {x});
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  constexpr double kInvSqrt2Pi = 0.39894228040143267794;
  for (size_t i = 0; i < x.data().size(); ++i) {
    double v = x.data()[i];
    out.data()[i] = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
  }
  if (out.requires_grad()) {
    Tensor xt = x;
    out.node()->backward_fn = [xt, kInvSqrt2, kInvSqrt2Pi](Tensor::Node& node) mutable {
      ensure_grad(*xt.node());
      for (size_t i = 0; i < node.grad.size(); ++i) {
        double v = xt.data()[i];
        double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
        double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
        xt.node()->grad[i] += node.grad[i] * (cdf + v * pdf);
      }
    };
  }
  return out;
}

Tensor embedding(const Tensor& tok_table, const Tensor& pos_table, const Tensor& seg_table,
                 const std::vector<int>& tokens, const std::vector<int>& segments, int batch,
                 int seq_len) {
  const int d = last_dim(tok_table.shape());
  if (pos_table.shape()[1] != d || seg_table.shape()[1] != d)
    throw NumericError("embedding: table widths disagree");
  if (seq_len > pos_table.shape()[0])
    throw DataError("embedding: sequence length " + std::to_string(seq_len) +
                    " exceeds max_len " + std::to_string(pos_table.shape()[0]));
  if (static_cast<int64_t>(tokens.size()) != static_cast<int64_t>(batch) * seq_len ||
      tokens.size() != segments.size())
    throw NumericError("embedding: id buffers do not match batch x seq_len");
  const int vocab = tok_table.shape()[0];
  const int n_seg = seg_table.shape()[0];
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] < 0 || tokens[i] >= vocab)
      throw DataError("embedding: token id out of range: " + std::to_string(tokens[i]));
    if (segments[i] < 0 || segments[i] >= n_seg)
      throw DataError("embedding: segment id out of range: " + std::to_string(segments[i]));
  }

  Tensor out = make_op({batch, seq_len, d}, {tok_table, pos_table, seg_table});
  const double* TK = tok_table.data().data();
  const double* PS = pos_table.data().data();
  const double* SG = seg_table.data().data();
  double* O = out.data().data();
  for (int b = 0; b < batch; ++b) {
    for (int t = 0; t < seq_len; ++t) {
      int64_t flat = static_cast<int64_t>(b) * seq_len + t;
      const double* tok = TK + static_cast<int64_t>(tokens[static_cast<size_t>(flat)]) * d;
      const double* pos = PS + static_cast<int64_t>(t) * d;
      const double* seg = SG + static_cast<int64_t>(segments[static_cast<size_t>(flat)]) * d;
      double* dst = O + flat * d;
      for (int j = 0; j < d; ++j) dst[j] = tok[j] + pos[j] + seg[j];
    }
  }
  if (out.requires_grad()) {
    Tensor tt = tok_table, pt = pos_table, st = seg_table;
    auto toks = std::make_shared<std::vector<int>>(tokens);
    auto segs = std::make_shared<std::vector<int>>(segments);
    out.node()->backward_fn = [tt, pt, st, toks, segs, batch, seq_len, d](
                                  Tensor::Node& node) mutable {
      const double* G = node.grad.data();
      if (tt.requires_grad()) ensure_grad(*tt.node());
      if (pt.requires_grad()) ensure_grad(*pt.node());
      if (st.requires_grad()) ensure_grad(*st.node());
      for (int b = 0; b < batch; ++b) {
        for (int t = 0; t < seq_len; ++t) {
          int64_t flat = static_cast<int64_t>(b) * seq_len + t;
          const double* g = G + flat * d;
          if (tt.requires_grad()) {
            double* dst =
                tt.node()->grad.data() + static_cast<int64_t>((*toks)[static_cast<size_t>(flat)]) * d;
            for (int j = 0; j < d; ++j) dst[j] += g[j];
          }
          if (pt.requires_grad()) {
            double* dst = pt.node()->grad.data() + static_cast<int64_t>(t) * d;
            for (int j = 0; j < d; ++j) dst[j] += g[j];
          }
          if (st.requires_grad()) {
            double* dst =
                st.node()->grad.data() + static_cast<int64_t>((*segs)[static_cast<size_t>(flat)]) * d;
            for (int j = 0; j < d; ++j) dst[j] += g[j];
          }
        }
      }
    };
  }
  return out;
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v,
                 const std::vector<double>& key_mask, int heads,
                 std::vector<double>* probs_out) {
  const auto& sh = q.shape();
  if (sh.size() != 3 || k.shape() != sh || v.shape() != sh)
    throw NumericError("attention: expects matching [B,T,D] inputs");
  const int B = sh[0], T = sh[1], D = sh[2];
  if (D % heads != 0) throw NumericError("attention: hidden size not divisible by heads");
  if (static_cast<int64_t>(key_mask.size()) != static_cast<int64_t>(B) * T)
    throw NumericError("attention: key mask size mismatch");
  const int dh = D / heads;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

  Tensor out = make_op(sh, {q, k, v});
  auto probs = std::make_shared<std::vector<double>>(
      static_cast<size_t>(B) * heads * T * T, 0.0);

  const double* Q = q.data().data();
  const double* K = k.data().data();
  const double* V = v.data().data();
  double* O = out.data().data();

  std::vector<double> row(static_cast<size_t>(T));
  for (int b = 0; b < B; ++b) {
    const double* mask = key_mask.data() + static_cast<int64_t>(b) * T;
    for (int h = 0; h < heads; ++h) {
      const int off = h * dh;
      double* P = probs->data() +
                  (static_cast<int64_t>(b) * heads + h) * static_cast<int64_t>(T) * T;
      for (int i = 0; i < T; ++i) {
        const double* qi = Q + (static_cast<int64_t>(b) * T + i) * D + off;
        double max_s = -1e300;
        for (int j = 0; j < T; ++j) {
          const double* kj = K + (static_cast<int64_t>(b) * T + j) * D + off;
          double s = 0.0;
          for (int c = 0; c < dh; ++c) s += qi[c] * kj[c];
          s *= inv_sqrt_dh;
          if (mask[j] == 0.0) s = kMaskScore;
          row[static_cast<size_t>(j)] = s;
          if (s > max_s) max_s = s;
        }
        double denom = 0.0;
        for (int j = 0; j < T; ++j) {
          double e = std::exp(row[static_cast<size_t>(j)] - max_s);
          row[static_cast<size_t>(j)] = e;
          denom += e;
        }
        double* prow = P + static_cast<int64_t>(i) * T;
        double* orow = O + (static_cast<int64_t>(b) * T + i) * D + off;
        for (int j = 0; j < T; ++j) prow[j] = row[static_cast<size_t>(j)] / denom;
        for (int j = 0; j < T; ++j) {
          const double p = prow[j];
          if (p == 0.0) continue;
          const double* vj = V + (static_cast<int64_t>(b) * T + j) * D + off;
          for (int c = 0; c < dh; ++c) orow[c] += p * vj[c];
        }
      }
    }
  }
  if (probs_out) *probs_out = *probs;

  if (out.requires_grad()) {
    Tensor qt = q, kt = k, vt = v;
    out.node()->backward_fn = [qt, kt, vt, probs, B, T, D, heads, dh,
                               inv_sqrt_dh](Tensor::Node& node) mutable {
      const double* G = node.grad.data();
      ensure_grad(*qt.node());
      ensure_grad(*kt.node());
      ensure_grad(*vt.node());
      double* dQ = qt.node()->grad.data();
      double* dK = kt.node()->grad.data();
      double* dV = vt.node()->grad.data();
      const double* Q = qt.data().data();
      const double* K = kt.data().data();
      const double* V = vt.data().data();
      std::vector<double> dP(static_cast<size_t>(T));
      for (int b = 0; b < B; ++b) {
        for (int h = 0; h < heads; ++h) {
          const int off = h * dh;
          const double* P = probs->data() +
                            (static_cast<int64_t>(b) * heads + h) * static_cast<int64_t>(T) * T;
          for (int i = 0; i < T; ++i) {
            const double* prow = P + static_cast<int64_t>(i) * T;
            const double* grow = G + (static_cast<int64_t>(b) * T + i) * D + off;
            // dV += P^T dO ; dP = dO V^T
            double dot_pp = 0.0;
            for (int j = 0; j < T; ++j) {
              const double p = prow[j];
              const double* vj = V + (static_cast<int64_t>(b) * T + j) * D + off;
              double acc = 0.0;
              for (int c = 0; c < dh; ++c) acc += grow[c] * vj[c];
              dP[static_cast<size_t>(j)] = acc;
              dot_pp += acc * p;
              if (p != 0.0) {
                double* dvj = dV + (static_cast<int64_t>(b) * T + j) * D + off;
                for (int c = 0; c < dh; ++c) dvj[c] += p * grow[c];
              }
            }
            // softmax backward, then score gradient into Q and K
            const double* qi = Q + (static_cast<int64_t>(b) * T + i) * D + off;
            double* dqi = dQ + (static_cast<int64_t>(b) * T + i) * D + off;
            for (int j = 0; j < T; ++j) {
              const double p = prow[j];
              if (p == 0.0) continue;
              const double ds = p * (dP[static_cast<size_t>(j)] - dot_pp) * inv_sqrt_dh;
              const double* kj = K + (static_cast<int64_t>(b) * T + j) * D + off;
              double* dkj = dK + (static_cast<int64_t>(b) * T + j) * D + off;
              for (int c = 0; c < dh; ++c) {
                dqi[c] += ds * kj[c];
                dkj[c] += ds * qi[c];
              }
            }
          }
        }
      }
    };
  }
  return out;
}

Tensor mean_pool(const Tensor& x, const std::vector<double>& key_mask) {
  const auto& sh = x.shape();
  if (sh.size() != 3) throw NumericError("mean_pool: expects [B,T,D]");
  const int B = sh[0], T = sh[1], D = sh[2];
  if (static_cast<int64_t>(key_mask.size()) != static_cast<int64_t>(B) * T)
    throw NumericError("mean_pool: mask size mismatch");
  Tensor out = make_op({B, D}, {x});
  auto counts = std::make_shared<std::vector<double>>(static_cast<size_t>(B), 0.0);
  const double* X = x.data().data();
  double* O = out.data().data();
  for (int b = 0; b < B; ++b) {
    double cnt = 0.0;
    for (int t = 0; t < T; ++t) cnt += key_mask[static_cast<size_t>(b) * T + t];
    if (cnt == 0.0) throw NumericError("mean_pool: all positions masked in one sequence");
    (*counts)[static_cast<size_t>(b)] = cnt;
    for (int t = 0; t < T; ++t) {
      double m = key_mask[static_cast<size_t>(b) * T + t];
      if (m == 0.0) continue;
      const double* row = X + (static_cast<int64_t>(b) * T + t) * D;
      double* orow = O + static_cast<int64_t>(b) * D;
      for (int j = 0; j < D; ++j) orow[j] += row[j] / cnt;
    }
  }
  if (out.requires_grad()) {
    Tensor xt = x;
    auto mask = std::make_shared<std::vector<double>>(key_mask);
    out.node()->backward_fn = [xt, mask, counts, B, T, D](Tensor::Node& node) mutable {
      ensure_grad(*xt.node());
      double* dX = xt.node()->grad.data();
      const double* G = node.grad.data();
      for (int b = 0; b < B; ++b) {
        double cnt = (*counts)[static_cast<size_t>(b)];
        const double* grow = G + static_cast<int64_t>(b) * D;
        for (int t = 0; t < T; ++t) {
          if ((*mask)[static_cast<size_t>(b) * T + t] == 0.0) continue;
          double* drow = dX + (static_cast<int64_t>(b) * T + t) * D;
          for (int j = 0; j < D; ++j) drow[j] += grow[j] / cnt;
        }
      }
    };
  }
  return out;
}

Tensor gather_rows(const Tensor& x, std::vector<int64_t> rows) {
  const int d = last_dim(x.shape());
  const int64_t n = x.numel() / d;
  for (int64_t r : rows) {
    if (r < 0 || r >= n) throw NumericError("gather_rows: row index out of range");
  }
  Tensor out = make_op({static_cast<int>(rows.size()), d}, {x});
  const double* X = x.data().data();
  double* O = out.data().data();
  for (size_t i = 0; i < rows.size(); ++i) {
    const double* src = X + rows[i] * d;
    double* dst = O + static_cast<int64_t>(i) * d;
    for (int j = 0; j < d; ++j) dst[j] = src[j];
  }
  if (out.requires_grad()) {
    Tensor xt = x;
    auto idx = std::make_shared<std::vector<int64_t>>(std::move(rows));
    out.node()->backward_fn = [xt, idx, d](Tensor::Node& node) mutable {
      ensure_grad(*xt.node());
      double* dX = xt.node()->grad.data();
      const double* G = node.grad.data();
      for (size_t i = 0; i < idx->size(); ++i) {
        double* dst = dX + (*idx)[i] * d;
        const double* src = G + static_cast<int64_t>(i) * d;
        for (int j = 0; j < d; ++j) dst[j] += src[j];
      }
    };
  }
  return out;
}

Tensor dropout(const Tensor& x, double rate, Rng& rng) {
  if (rate <= 0.0) return x;
  if (rate >= 1.0) throw NumericError("dropout: rate must be < 1");
  Tensor out = make_op(x.shape(), {x});
  const double keep = 1.0 - rate;
  auto mask = std::make_shared<std::vector<double>>(x.data().size());
  for (size_t i = 0; i < x.data().size(); ++i) {
    double m = rng.bernoulli(keep) ? 1.0 / keep : 0.0;
    (*mask)[i] = m;
    out.data()[i] = x.data()[i] * m;
  }
  if (out.requires_grad()) {
    Tensor xt = x;
    out.node()->backward_fn = [xt, mask](Tensor::Node& node) mutable {
      ensure_grad(*xt.node());
      for (size_t i = 0; i < node.grad.size(); ++i)
        xt.node()->grad[i] += node.grad[i] * (*mask)[i];
    };
  }
  return out;
}

Tensor sum_weighted(const Tensor& x, std::vector<double> weights) {
  if (weights.size() != x.data().size())
    throw NumericError("sum_weighted: weight count mismatch");
  Tensor out = make_op({1}, {x});
  double acc = 0.0;
  for (size_t i = 0; i < weights.size(); ++i) acc += weights[i] * x.data()[i];
  out.data()[0] = acc;
  if (out.requires_grad()) {
    Tensor xt = x;
    auto w = std::make_shared<std::vector<double>>(std::move(weights));
    out.node()->backward_fn = [xt, w](Tensor::Node& node) mutable {
      ensure_grad(*xt.node());
      for (size_t i = 0; i < w->size(); ++i) xt.node()->grad[i] += node.grad[0] * (*w)[i];
    };
  }
  return out;
}

Tensor xent_weighted(const Tensor& logits, std::vector<int> targets, std::vector<double> weights) {
  const auto& sh = logits.shape();
  if (sh.size() != 2) throw NumericError("xent_weighted: logits must be [R,V]");
  const int R = sh[0], V = sh[1];
  if (static_cast<int>(targets.size()) != R || weights.size() != targets.size())
    throw NumericError("xent_weighted: row count mismatch");
  if (R == 0) throw NumericError("xent_weighted: empty selection");
  Tensor out = make_op({1}, {logits});
  auto softmax = std::make_shared<std::vector<double>>(logits.data().size());
  const double* L = logits.data().data();
  double loss = 0.0;
  for (int r = 0; r < R; ++r) {
    int t = targets[static_cast<size_t>(r)];
    if (t < 0 || t >= V) throw NumericError("xent_weighted: target out of range");
    const double* row = L + static_cast<int64_t>(r) * V;
    double m = row[0];
    for (int j = 1; j < V; ++j) m = std::max(m, row[j]);
    double denom = 0.0;
    for (int j = 0; j < V; ++j) denom += std::exp(row[j] - m);
    double lse = m + std::log(denom);
    for (int j = 0; j < V; ++j)
      (*softmax)[static_cast<size_t>(r) * V + static_cast<size_t>(j)] =
          std::exp(row[j] - m) / denom;
    loss += weights[static_cast<size_t>(r)] * (lse - row[t]);
  }
  out.data()[0] = loss;
  if (out.requires_grad()) {
    Tensor lt = logits;
    auto tg = std::make_shared<std::vector<int>>(std::move(targets));
    auto wt = std::make_shared<std::vector<double>>(std::move(weights));
    out.node()->backward_fn = [lt, tg, wt, softmax, R, V](Tensor::Node& node) mutable {
      ensure_grad(*lt.node());
      const double g = node.grad[0];
      double* dL = lt.node()->grad.data();
      for (int r = 0; r < R; ++r) {
        const double w = (*wt)[static_cast<size_t>(r)] * g;
        const int t = (*tg)[static_cast<size_t>(r)];
        double* drow = dL + static_cast<int64_t>(r) * V;
        const double* srow = softmax->data() + static_cast<int64_t>(r) * V;
        for (int j = 0; j < V; ++j) drow[j] += w * srow[j];
        drow[t] -= w;
      }
    };
  }
  return out;
}

Tensor bce_weighted(const Tensor& logits, std::vector<double> targets,
                    std::vector<double> weights) {
  const int64_t R = logits.numel();
  if (logits.shape().size() == 2 && logits.shape()[1] != 1)
    throw NumericError("bce_weighted: logits must be [R] or [R,1]");
  if (static_cast<int64_t>(targets.size()) != R || targets.size() != weights.size())
    throw NumericError("bce_weighted: row count mismatch");
  if (R == 0) throw NumericError("bce_weighted: empty selection");
  Tensor out = make_op({1}, {logits});
  const double* Z = logits.data().data();
  double loss = 0.0;
  for (int64_t r = 0; r < R; ++r) {
    double z = Z[r], y = targets[static_cast<size_t>(r)];
    loss += weights[static_cast<size_t>(r)] *
            (std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::fabs(z))));
  }
  out.data()[0] = loss;
  if (out.requires_grad()) {
    Tensor lt = logits;
    auto tg = std::make_shared<std::vector<double>>(std::move(targets));
    auto wt = std::make_shared<std::vector<double>>(std::move(weights));
    out.node()->backward_fn = [lt, tg, wt, R](Tensor::Node& node) mutable {
      ensure_grad(*lt.node());
      const double g = node.grad[0];
      double* dZ = lt.node()->grad.data();
      const double* Z = lt.data().data();
      for (int64_t r = 0; r < R; ++r) {
        double sigma = 1.0 / (1.0 + std::exp(-Z[r]));
        dZ[r] += g * (*wt)[static_cast<size_t>(r)] * (sigma - (*tg)[static_cast<size_t>(r)]);
      }
    };
  }
  return out;
}

}  // namespace abevo::model
