#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "abevo/errors.hpp"
#include "abevo/rng.hpp"

namespace abevo::model {

// Reverse-mode autograd value. Data is contiguous 64-bit floats; the graph
// is a tape of shared nodes built by the ops below and freed when the last
// handle drops.
class Tensor {
public:
  struct Node {
    std::vector<int> shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
    std::vector<Tensor> parents;
    std::function<void(Node&)> backward_fn;
  };

  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor from_data(std::vector<int> shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const std::vector<int>& shape() const { return node_->shape; }
  int64_t numel() const { return static_cast<int64_t>(node_->data.size()); }
  std::vector<double>& data() { return node_->data; }
  const std::vector<double>& data() const { return node_->data; }
  std::vector<double>& grad() { return node_->grad; }
  const std::vector<double>& grad() const { return node_->grad; }
  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool v) { node_->requires_grad = v; }
  double item() const;

  Node* node() const { return node_.get(); }

private:
  explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}
  std::shared_ptr<Node> node_;
  friend Tensor make_op(std::vector<int> shape, std::vector<Tensor> parents);
};

// Creates a graph node whose requires_grad is inherited from its parents.
Tensor make_op(std::vector<int> shape, std::vector<Tensor> parents);

// Accumulates d(loss)/d(node) into .grad of every reachable node that
// requires it. loss must be scalar. Existing grads are cleared first.
void backward(const Tensor& loss);

int64_t numel_of(const std::vector<int>& shape);

// --- ops ----------------------------------------------------------------

// a: [..., K] (leading dims flattened), b: [K, N] -> [..., N]
Tensor matmul(const Tensor& a, const Tensor& b);
// x: [..., N] + bias [N]
Tensor add_bias(const Tensor& x, const Tensor& bias);
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);
Tensor add(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor mean_of(const std::vector<Tensor>& xs);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);
Tensor gelu(const Tensor& x);

// Token + learned position + segment embeddings, fused gather. tokens and
// segments are row-major [B, T].
Tensor embedding(const Tensor& tok_table, const Tensor& pos_table, const Tensor& seg_table,
                 const std::vector<int>& tokens, const std::vector<int>& segments, int batch,
                 int seq_len);

// Multi-head scaled dot-product attention over [B, T, D] with a key
// padding mask (1 keep, 0 pad). Masked keys receive exactly zero weight.
// probs_out, when set, receives the [B, H, T, T] attention rows.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v,
                 const std::vector<double>& key_mask, int heads,
                 std::vector<double>* probs_out = nullptr);

// Masked mean over the time axis: [B, T, D] -> [B, D].
Tensor mean_pool(const Tensor& x, const std::vector<double>& key_mask);

// Flattens x to [N, D_last] and gathers the given rows -> [R, D_last].
Tensor gather_rows(const Tensor& x, std::vector<int64_t> rows);

// Inverted dropout; identity when rate == 0.
Tensor dropout(const Tensor& x, double rate, Rng& rng);

// Scalar sum_i w_i * x_i over the flattened tensor.
Tensor sum_weighted(const Tensor& x, std::vector<double> weights);

// sum_r w_r * (-log softmax(logits_r)[target_r]); logits [R, V]
Tensor xent_weighted(const Tensor& logits, std::vector<int> targets, std::vector<double> weights);

// sum_r w_r * BCE-with-logits(logit_r, y_r); logits [R] or [R, 1]
Tensor bce_weighted(const Tensor& logits, std::vector<double> targets,
                    std::vector<double> weights);

}  // namespace abevo::model
