#include "abevo/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "abevo/seqcore.hpp"

namespace abevo::model {

using nlohmann::json;
using seqcore::Alphabet;

void ModelConfig::validate() const {
  if (layers < 1 || heads < 1 || hidden < 1 || ffn < 1 || vocab < 2 || max_len < 4)
    throw DataError("model config: dimensions must be positive");
  if (hidden % heads != 0) throw DataError("model config: hidden must be divisible by heads");
  if (dropout < 0.0 || dropout >= 1.0) throw DataError("model config: dropout not in [0,1)");
}

TokenBatch assemble_batch(const std::vector<objectives::PairedEncoding>& encodings) {
  std::vector<std::vector<int>> overrides;
  overrides.reserve(encodings.size());
  for (const auto& e : encodings) overrides.push_back(e.token_ids);
  return assemble_batch(encodings, overrides);
}

TokenBatch assemble_batch(const std::vector<objectives::PairedEncoding>& encodings,
                          const std::vector<std::vector<int>>& token_override) {
  if (encodings.empty()) throw DataError("assemble_batch: empty batch");
  if (token_override.size() != encodings.size())
    throw DataError("assemble_batch: override count mismatch");
  TokenBatch b;
  b.batch = static_cast<int>(encodings.size());
  int t_max = 0;
  for (const auto& e : encodings) t_max = std::max(t_max, e.length());
  b.seq_len = t_max;
  size_t total = static_cast<size_t>(b.batch) * static_cast<size_t>(t_max);
  b.tokens.assign(total, Alphabet::kPad);
  b.segments.assign(total, 0);
  b.key_mask.assign(total, 0.0);
  for (int i = 0; i < b.batch; ++i) {
    const auto& enc = encodings[static_cast<size_t>(i)];
    const auto& toks = token_override[static_cast<size_t>(i)];
    if (static_cast<int>(toks.size()) != enc.length())
      throw DataError("assemble_batch: override length mismatch");
    for (int t = 0; t < enc.length(); ++t) {
      size_t flat = static_cast<size_t>(i) * static_cast<size_t>(t_max) + static_cast<size_t>(t);
      b.tokens[flat] = toks[static_cast<size_t>(t)];
      b.segments[flat] = enc.segment_ids[static_cast<size_t>(t)];
      b.key_mask[flat] = 1.0;
    }
  }
  return b;
}

namespace {

Tensor init_param(const std::string& name, std::vector<int> shape, uint64_t seed) {
  Tensor t = Tensor::zeros(std::move(shape), true);
  bool is_gamma = name.size() >= 2 && name.compare(name.size() - 2, 2, ".g") == 0;
  bool is_bias = (name.size() >= 2 && name.compare(name.size() - 2, 2, ".b") == 0) ||
                 name.rfind(".b", name.size() - 2) != std::string::npos;
  // layernorm gains start at one, biases at zero, weights at N(0, 0.02^2)
  if (is_gamma) {
    std::fill(t.data().begin(), t.data().end(), 1.0);
  } else if (!is_bias) {
    Rng rng = Rng::stream(seed, fnv1a64(name.c_str()));
    for (auto& x : t.data()) x = 0.02 * rng.normal();
  }
  return t;
}

}  // namespace

Encoder Encoder::init(const ModelConfig& cfg) {
  cfg.validate();
  Encoder enc;
  enc.cfg_ = cfg;
  auto& P = enc.params_;
  const int d = cfg.hidden;
  auto put = [&](const std::string& name, std::vector<int> shape) {
    P[name] = init_param(name, std::move(shape), cfg.seed);
  };
  put("emb.tok", {cfg.vocab, d});
  put("emb.pos", {cfg.max_len, d});
  put("emb.seg", {2, d});
  for (int l = 0; l < cfg.layers; ++l) {
    std::string pre = "layer" + std::to_string(l) + ".";
    put(pre + "ln1.g", {d});
    put(pre + "ln1.b", {d});
    put(pre + "attn.wq", {d, d});
    put(pre + "attn.bq", {d});
    put(pre + "attn.wk", {d, d});
    put(pre + "attn.bk", {d});
    put(pre + "attn.wv", {d, d});
    put(pre + "attn.bv", {d});
    put(pre + "attn.wo", {d, d});
    put(pre + "attn.bo", {d});
    put(pre + "ln2.g", {d});
    put(pre + "ln2.b", {d});
    put(pre + "ffn.w1", {d, cfg.ffn});
    put(pre + "ffn.b1", {cfg.ffn});
    put(pre + "ffn.w2", {cfg.ffn, d});
    put(pre + "ffn.b2", {d});
  }
  put("final_ln.g", {d});
  put("final_ln.b", {d});
  put("head.mlm.w", {d, cfg.vocab});
  put("head.mlm.b", {cfg.vocab});
  put("head.agp.w", {d, 1});
  put("head.agp.b", {1});
  put("head.pos.w", {d, 1});
  put("head.pos.b", {1});
  return enc;
}

Tensor Encoder::param(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw DataError("unknown parameter: " + name);
  return it->second;
}

void Encoder::ensure_task_head(int out_dim) {
  if (has_param("head.task.w")) {
    if (param("head.task.w").shape()[1] != out_dim)
      throw DataError("task head width mismatch: checkpoint has " +
                      std::to_string(param("head.task.w").shape()[1]) + ", requested " +
                      std::to_string(out_dim));
    return;
  }
  params_["head.task.w"] = init_param("head.task.w", {cfg_.hidden, out_dim}, cfg_.seed);
  params_["head.task.b"] = init_param("head.task.b", {out_dim}, cfg_.seed);
}

void Encoder::set_encoder_trainable(bool trainable) {
  for (auto& [name, t] : params_) {
    if (name.rfind("head.task", 0) == 0) continue;
    t.set_requires_grad(trainable);
  }
}

ForwardResult Encoder::forward(const TokenBatch& batch, bool training, Rng* dropout_rng) const {
  for (int id : batch.tokens) {
    if (id < 0 || id >= cfg_.vocab)
      throw DataError("forward: token id out of vocabulary: " + std::to_string(id));
  }
  if (batch.seq_len > cfg_.max_len)
    throw DataError("forward: sequence length " + std::to_string(batch.seq_len) +
                    " exceeds max_len " + std::to_string(cfg_.max_len));
  const bool use_dropout = training && cfg_.dropout > 0.0;
  if (use_dropout && dropout_rng == nullptr)
    throw DataError("forward: dropout requires an RNG in training mode");

  ForwardResult out;
  out.batch = batch;
  Tensor x = embedding(param("emb.tok"), param("emb.pos"), param("emb.seg"), batch.tokens,
                       batch.segments, batch.batch, batch.seq_len);
  if (use_dropout) x = dropout(x, cfg_.dropout, *dropout_rng);
  out.layers.push_back(x);
  for (int l = 0; l < cfg_.layers; ++l) {
    std::string pre = "layer" + std::to_string(l) + ".";
    Tensor h = layer_norm(x, param(pre + "ln1.g"), param(pre + "ln1.b"));
    Tensor q = linear(h, param(pre + "attn.wq"), param(pre + "attn.bq"));
    Tensor k = linear(h, param(pre + "attn.wk"), param(pre + "attn.bk"));
    Tensor v = linear(h, param(pre + "attn.wv"), param(pre + "attn.bv"));
    Tensor a = attention(q, k, v, batch.key_mask, cfg_.heads);
    a = linear(a, param(pre + "attn.wo"), param(pre + "attn.bo"));
    if (use_dropout) a = dropout(a, cfg_.dropout, *dropout_rng);
    x = add(x, a);
    Tensor h2 = layer_norm(x, param(pre + "ln2.g"), param(pre + "ln2.b"));
    Tensor f = linear(h2, param(pre + "ffn.w1"), param(pre + "ffn.b1"));
    f = gelu(f);
    f = linear(f, param(pre + "ffn.w2"), param(pre + "ffn.b2"));
    if (use_dropout) f = dropout(f, cfg_.dropout, *dropout_rng);
    x = add(x, f);
    out.layers.push_back(x);
  }
  out.final_normed = layer_norm(x, param("final_ln.g"), param("final_ln.b"));
  return out;
}

Tensor Encoder::token_logits(const ForwardResult& fwd, const std::vector<int64_t>& rows) const {
  Tensor h = gather_rows(fwd.final_normed, rows);
  return linear(h, param("head.mlm.w"), param("head.mlm.b"));
}

Tensor Encoder::position_logits(const ForwardResult& fwd, const std::vector<int64_t>& rows) const {
  Tensor h = gather_rows(fwd.final_normed, rows);
  return linear(h, param("head.pos.w"), param("head.pos.b"));
}

Tensor Encoder::agp_logits(const ForwardResult& fwd) const {
  Tensor pooled = mean_pool(fwd.final_normed, fwd.batch.key_mask);
  return linear(pooled, param("head.agp.w"), param("head.agp.b"));
}

Tensor Encoder::task_logits_pooled(const ForwardResult& fwd) const {
  Tensor repr = sequence_representation(fwd);
  return linear(repr, param("head.task.w"), param("head.task.b"));
}

Tensor Encoder::task_logits_tokens(const ForwardResult& fwd,
                                   const std::vector<int64_t>& rows) const {
  Tensor h = gather_rows(fwd.final_normed, rows);
  return linear(h, param("head.task.w"), param("head.task.b"));
}

Tensor sequence_representation(const ForwardResult& fwd) {
  std::vector<Tensor> pools;
  for (size_t l = 1; l < fwd.layers.size(); ++l)
    pools.push_back(mean_pool(fwd.layers[l], fwd.batch.key_mask));
  return mean_of(pools);
}

Tensor loss_mlm(const Tensor& logits, const std::vector<int>& targets) {
  if (targets.empty()) throw NumericError("loss_mlm: empty masked set");
  std::vector<double> w(targets.size(), 1.0 / static_cast<double>(targets.size()));
  return xent_weighted(logits, targets, w);
}

Tensor loss_agp(const Tensor& logits, const std::vector<int>& labels) {
  std::vector<double> y(labels.begin(), labels.end());
  std::vector<double> w(labels.size(), 1.0 / static_cast<double>(labels.size()));
  return bce_weighted(logits, y, w);
}

Tensor loss_mpp(const Tensor& germline_logits, const std::vector<int>& germline_labels,
                const Tensor& residue_logits, const std::vector<int>& residue_targets) {
  if (germline_labels.empty()) throw NumericError("loss_mpp: empty germline");
  std::vector<double> y(germline_labels.begin(), germline_labels.end());
  std::vector<double> w(y.size(), 1.0 / static_cast<double>(y.size()));
  Tensor position_term = bce_weighted(germline_logits, y, w);
  if (residue_targets.empty()) return position_term;
  std::vector<double> wr(residue_targets.size(), 1.0 / static_cast<double>(residue_targets.size()));
  Tensor residue_term = xent_weighted(residue_logits, residue_targets, wr);
  return add(position_term, residue_term);
}

void zero_grads(ParamStore& params) {
  for (auto& [name, t] : params) t.grad().assign(t.data().size(), 0.0);
}

void adam_step(ParamStore& params, AdamState& state, double lr) {
  ++state.t;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (auto& [name, t] : params) {
    if (!t.requires_grad()) continue;
    if (t.grad().size() != t.data().size()) continue;  // no gradient reached this tensor
    auto& m = state.m[name];
    auto& v = state.v[name];
    if (m.size() != t.data().size()) m.assign(t.data().size(), 0.0);
    if (v.size() != t.data().size()) v.assign(t.data().size(), 0.0);
    double* x = t.data().data();
    const double* g = t.grad().data();
    for (size_t i = 0; i < t.data().size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      double mhat = m[i] / bc1;
      double vhat = v[i] / bc2;
      x[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

double lr_schedule(int64_t step, double peak, int64_t warmup_steps) {
  if (step < 1) throw NumericError("lr_schedule: step must be >= 1");
  if (warmup_steps < 1) warmup_steps = 1;
  if (step <= warmup_steps)
    return peak * static_cast<double>(step) / static_cast<double>(warmup_steps);
  return peak * std::sqrt(static_cast<double>(warmup_steps) / static_cast<double>(step));
}

namespace {

json config_to_json(const ModelConfig& c) {
  return json{{"layers", c.layers}, {"heads", c.heads},     {"hidden", c.hidden},
              {"ffn", c.ffn},       {"vocab", c.vocab},     {"max_len", c.max_len},
              {"dropout", c.dropout}, {"seed", c.seed}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.layers = j.at("layers").get<int>();
  c.heads = j.at("heads").get<int>();
  c.hidden = j.at("hidden").get<int>();
  c.ffn = j.at("ffn").get<int>();
  c.vocab = j.at("vocab").get<int>();
  c.max_len = j.at("max_len").get<int>();
  c.dropout = j.at("dropout").get<double>();
  c.seed = j.at("seed").get<uint64_t>();
  return c;
}

void append_array(std::string& blob, const std::vector<double>& data, const std::string& dtype) {
  if (dtype == "f64") {
    size_t off = blob.size();
    blob.resize(off + data.size() * sizeof(double));
    std::memcpy(blob.data() + off, data.data(), data.size() * sizeof(double));
  } else {
    std::vector<float> f(data.begin(), data.end());
    size_t off = blob.size();
    blob.resize(off + f.size() * sizeof(float));
    std::memcpy(blob.data() + off, f.data(), f.size() * sizeof(float));
  }
}

std::vector<double> read_array(const std::string& blob, size_t offset, size_t count,
                               const std::string& dtype) {
  std::vector<double> out(count);
  if (dtype == "f64") {
    if (offset + count * sizeof(double) > blob.size())
      throw DataError("checkpoint: truncated tensor data");
    std::memcpy(out.data(), blob.data() + offset, count * sizeof(double));
  } else {
    if (offset + count * sizeof(float) > blob.size())
      throw DataError("checkpoint: truncated tensor data");
    std::vector<float> f(count);
    std::memcpy(f.data(), blob.data() + offset, count * sizeof(float));
    std::copy(f.begin(), f.end(), out.begin());
  }
  return out;
}

}  // namespace

void save_checkpoint(const std::string& path, const Encoder& enc, int64_t step,
                     const AdamState* optimizer, const std::string& dtype) {
  if (dtype != "f32" && dtype != "f64") throw DataError("checkpoint dtype must be f32 or f64");
  json header;
  header["version"] = 1;
  header["dtype"] = dtype;
  header["step"] = step;
  header["config"] = config_to_json(enc.config());
  json manifest = json::array();
  std::string blob;

  auto add_entry = [&](const std::string& name, const std::vector<int>& shape,
                       const std::vector<double>& data) {
    json e;
    e["name"] = name;
    e["shape"] = shape;
    e["dtype"] = dtype;
    e["offset"] = blob.size();
    e["count"] = data.size();
    manifest.push_back(e);
    append_array(blob, data, dtype);
  };

  for (const auto& [name, t] : enc.params()) add_entry(name, t.shape(), t.data());
  header["has_optimizer"] = optimizer != nullptr;
  if (optimizer) {
    header["adam_t"] = optimizer->t;
    for (const auto& [name, m] : optimizer->m)
      add_entry("adam.m." + name, {static_cast<int>(m.size())}, m);
    for (const auto& [name, v] : optimizer->v)
      add_entry("adam.v." + name, {static_cast<int>(v.size())}, v);
  }
  header["tensors"] = manifest;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint: " + path);
  out << header.dump() << '\n';
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  size_t nl = text.find('\n');
  if (nl == std::string::npos) throw DataError("checkpoint: missing header terminator");
  json header;
  try {
    header = json::parse(text.substr(0, nl));
  } catch (const json::exception& e) {
    throw DataError(std::string("checkpoint: bad header: ") + e.what());
  }
  if (!header.contains("version")) throw DataError("checkpoint: missing version field");
  Checkpoint ckpt;
  ckpt.version = header.at("version").get<int>();
  if (ckpt.version != 1)
    throw DataError("checkpoint: unsupported version " + std::to_string(ckpt.version));
  ckpt.dtype = header.at("dtype").get<std::string>();
  ckpt.step = header.at("step").get<int64_t>();
  ckpt.config = config_from_json(header.at("config"));
  ckpt.has_optimizer = header.value("has_optimizer", false);
  if (ckpt.has_optimizer) ckpt.optimizer.t = header.value("adam_t", int64_t{0});

  std::string blob = text.substr(nl + 1);
  for (const auto& e : header.at("tensors")) {
    std::string name = e.at("name").get<std::string>();
    std::vector<int> shape = e.at("shape").get<std::vector<int>>();
    size_t offset = e.at("offset").get<size_t>();
    size_t count = e.at("count").get<size_t>();
    std::string dtype = e.at("dtype").get<std::string>();
    std::vector<double> data = read_array(blob, offset, count, dtype);
    if (name.rfind("adam.m.", 0) == 0) {
      ckpt.optimizer.m[name.substr(7)] = std::move(data);
    } else if (name.rfind("adam.v.", 0) == 0) {
      ckpt.optimizer.v[name.substr(7)] = std::move(data);
    } else {
      ckpt.tensors[name] = Tensor::from_data(std::move(shape), std::move(data), true);
    }
  }
  return ckpt;
}

Encoder encoder_from_checkpoint(const Checkpoint& ckpt) {
  Encoder enc = Encoder::init(ckpt.config);
  for (auto& [name, t] : ckpt.tensors) {
    auto it = enc.params_.find(name);
    if (it == enc.params_.end()) {
      enc.params_[name] = t;  // task heads and other extras
    } else {
      if (it->second.shape() != t.shape())
        throw DataError("checkpoint: shape mismatch for " + name);
      it->second.data() = t.data();
    }
  }
  return enc;
}

double gradient_check(Encoder& enc, const std::function<Tensor()>& loss_builder, int samples,
                      double h, uint64_t seed) {
  Tensor loss = loss_builder();
  backward(loss);
  // (name, flat index, autograd gradient)
  std::vector<std::tuple<std::string, size_t, double>> entries;
  for (auto& [name, t] : enc.params()) {
    if (!t.requires_grad()) continue;
    const auto& g = t.grad();
    for (size_t i = 0; i < t.data().size(); ++i)
      entries.emplace_back(name, i, g.size() == t.data().size() ? g[i] : 0.0);
  }
  if (entries.empty()) throw NumericError("gradient_check: no trainable parameters");
  Rng rng(seed);
  double max_rel = 0.0;
  int n = std::min<int>(samples, static_cast<int>(entries.size()));
  for (int s = 0; s < n; ++s) {
    size_t pick = static_cast<size_t>(rng.below(entries.size()));
    auto [name, idx, g_auto] = entries[pick];
    auto& data = enc.params().at(name).data();
    double saved = data[idx];
    data[idx] = saved + h;
    double lp = loss_builder().item();
    data[idx] = saved - h;
    double lm = loss_builder().item();
    data[idx] = saved;
    double g_fd = (lp - lm) / (2.0 * h);
    double denom = std::max(1e-6, std::fabs(g_auto) + std::fabs(g_fd));
    double rel = std::fabs(g_auto - g_fd) / denom;
    max_rel = std::max(max_rel, rel);
  }
  return max_rel;
}

}  // namespace abevo::model
