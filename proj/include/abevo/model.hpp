#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "abevo/objectives.hpp"
#include "abevo/tensor.hpp"

namespace abevo::model {

struct ModelConfig {
  int layers = 2;
  int heads = 4;
  int hidden = 64;
  int ffn = 256;
  int vocab = 25;
  int max_len = 128;
  double dropout = 0.0;
  uint64_t seed = 7;

  void validate() const;
};

using ParamStore = std::map<std::string, Tensor>;

// Padded token batch. PAD fills the tail; key_mask is 1 on real tokens.
struct TokenBatch {
  int batch = 0;
  int seq_len = 0;
  std::vector<int> tokens;
  std::vector<int> segments;
  std::vector<double> key_mask;
};

TokenBatch assemble_batch(const std::vector<objectives::PairedEncoding>& encodings);
// Same, but with per-encoding replacement token streams (e.g. masked).
TokenBatch assemble_batch(const std::vector<objectives::PairedEncoding>& encodings,
                          const std::vector<std::vector<int>>& token_override);

struct ForwardResult {
  std::vector<Tensor> layers;  // L+1 stacks [B,T,D]: embedding + each block
  Tensor final_normed;         // [B,T,D], input to all heads
  TokenBatch batch;
};

// Pre-norm transformer encoder with learned absolute position and 2-way
// segment embeddings.
class Encoder {
public:
  Encoder() = default;
  static Encoder init(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  Tensor param(const std::string& name) const;
  bool has_param(const std::string& name) const { return params_.count(name) > 0; }

  // Adds a task head ("head.task.*") of the given output width.
  void ensure_task_head(int out_dim);
  void set_encoder_trainable(bool trainable);  // heads stay trainable

  ForwardResult forward(const TokenBatch& batch, bool training = false,
                        Rng* dropout_rng = nullptr) const;

  // Head readouts. `rows` are flat indices into the [B*T] token grid.
  Tensor token_logits(const ForwardResult& fwd, const std::vector<int64_t>& rows) const;
  Tensor position_logits(const ForwardResult& fwd, const std::vector<int64_t>& rows) const;
  Tensor agp_logits(const ForwardResult& fwd) const;             // [B,1]
  Tensor task_logits_pooled(const ForwardResult& fwd) const;     // [B,K]
  Tensor task_logits_tokens(const ForwardResult& fwd, const std::vector<int64_t>& rows) const;

  ModelConfig cfg_;
  ParamStore params_;
};

// Masked-token mean within each encoder layer, then the average of the L
// layer pools. Kept as one function so the pooling convention is a single
// point of change.
Tensor sequence_representation(const ForwardResult& fwd);

// --- losses (Eqs. as documented in the README) ----------------------------

// Mean NLL over the masked set.
Tensor loss_mlm(const Tensor& logits, const std::vector<int>& targets);
// Binary cross-entropy of the ancestor label(s); mean over the batch.
Tensor loss_agp(const Tensor& logits, const std::vector<int>& labels);
// (1/n) sum_j BCE(y_j) + (1/|M'|) sum_{i in M'} NLL(a_i); the residue term
// vanishes when no positions are masked.
Tensor loss_mpp(const Tensor& germline_logits, const std::vector<int>& germline_labels,
                const Tensor& residue_logits, const std::vector<int>& residue_targets);

// --- optimizer -------------------------------------------------------------

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int64_t t = 0;
  std::map<std::string, std::vector<double>> m, v;
};

// One Adam update with bias correction from the accumulated .grad buffers.
void adam_step(ParamStore& params, AdamState& state, double lr);
void zero_grads(ParamStore& params);

// Linear warmup to `peak`, then inverse-sqrt decay. step is 1-based.
double lr_schedule(int64_t step, double peak, int64_t warmup_steps);

// --- checkpoint --------------------------------------------------------------

struct Checkpoint {
  int version = 1;
  std::string dtype = "f32";  // storage mode: "f32" or "f64"
  ModelConfig config;
  int64_t step = 0;
  ParamStore tensors;
  AdamState optimizer;
  bool has_optimizer = false;
};

void save_checkpoint(const std::string& path, const Encoder& enc, int64_t step,
                     const AdamState* optimizer = nullptr, const std::string& dtype = "f32");
Checkpoint load_checkpoint(const std::string& path);
Encoder encoder_from_checkpoint(const Checkpoint& ckpt);

// --- verification -----------------------------------------------------------

// Central finite differences (spacing h) on `samples` randomly chosen
// parameter entries against the autograd gradient; returns the max
// relative error.
double gradient_check(Encoder& enc, const std::function<Tensor()>& loss_builder, int samples,
                      double h, uint64_t seed);

}  // namespace abevo::model
