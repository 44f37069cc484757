#include "abevo/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "abevo/csvio.hpp"

namespace abevo::train {

using model::Encoder;
using model::ForwardResult;
using model::Tensor;
using model::TokenBatch;
using objectives::PairedEncoding;

const char* phase_name(Phase p) {
  switch (p) {
    case Phase::Mlm: return "mlm";
    case Phase::Evolution: return "evolution";
    case Phase::Finetune: return "finetune";
  }
  return "?";
}

namespace {

constexpr uint64_t kMlmStream = 0x4d4c4d0000000000ull;
constexpr uint64_t kAgpStream = 0x4147500000000000ull;
constexpr uint64_t kOrderStream = 0x4f52440000000000ull;
constexpr uint64_t kEvalStream = 0x4556414c00000000ull;
constexpr uint64_t kFtStream = 0x4654000000000000ull;

Encoder clone_encoder(const Encoder& src) {
  Encoder out;
  out.cfg_ = src.cfg_;
  for (const auto& [name, t] : src.params_) {
    out.params_[name] = Tensor::from_data(t.shape(), t.data(), t.requires_grad());
  }
  return out;
}

std::map<std::string, std::vector<double>> snapshot_params(const Encoder& enc) {
  std::map<std::string, std::vector<double>> snap;
  for (const auto& [name, t] : enc.params()) snap[name] = t.data();
  return snap;
}

void restore_params(Encoder& enc, const std::map<std::string, std::vector<double>>& snap) {
  for (auto& [name, t] : enc.params()) t.data() = snap.at(name);
}

// shuffled epoch-style index stream; batches may straddle passes
class IndexCycler {
public:
  IndexCycler(size_t n, uint64_t seed) : n_(n), seed_(seed) { refill(); }

  std::vector<size_t> take(size_t count) {
    std::vector<size_t> out;
    out.reserve(count);
    while (out.size() < count) {
      if (cursor_ == order_.size()) refill();
      out.push_back(order_[cursor_++]);
    }
    return out;
  }

private:
  void refill() {
    order_.resize(n_);
    std::iota(order_.begin(), order_.end(), size_t{0});
    Rng rng = Rng::stream(seed_, kOrderStream + pass_++);
    rng.shuffle(order_);
    cursor_ = 0;
  }
  size_t n_;
  uint64_t seed_;
  uint64_t pass_ = 0;
  std::vector<size_t> order_;
  size_t cursor_ = 0;
};

std::vector<PairedEncoding> encode_all(const std::vector<AntibodyRecord>& records, int max_len) {
  std::vector<PairedEncoding> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(objectives::encode_pair(r, max_len));
  return out;
}

struct MlmBatchLoss {
  Tensor loss;
  int correct = 0;
  int total = 0;
};

MlmBatchLoss mlm_batch_loss(const Encoder& enc, const std::vector<PairedEncoding>& encodings,
                            const std::vector<size_t>& idxs, double ratio, Rng& rng,
                            bool want_accuracy) {
  std::vector<PairedEncoding> batch_encs;
  std::vector<std::vector<int>> overrides;
  std::vector<objectives::MaskingPlan> plans;
  batch_encs.reserve(idxs.size());
  for (size_t idx : idxs) {
    const auto& e = encodings[idx];
    auto plan = objectives::mlm_plan(e, ratio, rng);
    overrides.push_back(objectives::apply_plan(e, plan));
    plans.push_back(std::move(plan));
    batch_encs.push_back(e);
  }
  TokenBatch batch = model::assemble_batch(batch_encs, overrides);
  ForwardResult fwd = enc.forward(batch);
  std::vector<int64_t> rows;
  std::vector<int> targets;
  for (size_t i = 0; i < plans.size(); ++i) {
    for (size_t j = 0; j < plans[i].selected.size(); ++j) {
      rows.push_back(static_cast<int64_t>(i) * batch.seq_len + plans[i].selected[j]);
      targets.push_back(plans[i].targets[j]);
    }
  }
  MlmBatchLoss out;
  if (rows.empty()) throw NumericError("mlm step: no masked positions in batch");
  Tensor logits = enc.token_logits(fwd, rows);
  out.loss = model::loss_mlm(logits, targets);
  if (want_accuracy) {
    const int v = enc.config().vocab;
    const auto& L = logits.data();
    for (size_t r = 0; r < targets.size(); ++r) {
      int arg = 0;
      for (int c = 1; c < v; ++c)
        if (L[r * static_cast<size_t>(v) + static_cast<size_t>(c)] >
            L[r * static_cast<size_t>(v) + static_cast<size_t>(arg)])
          arg = c;
      if (arg == targets[r]) ++out.correct;
    }
    out.total = static_cast<int>(targets.size());
  }
  return out;
}

struct AgpBatchLoss {
  Tensor loss;
  int correct = 0;
  int total = 0;
};

AgpBatchLoss agp_batch_loss(const Encoder& enc, const std::vector<AntibodyRecord>& records,
                            const std::vector<size_t>& idxs, double p, Rng& rng, int max_len,
                            bool want_accuracy) {
  std::vector<AntibodyRecord> subset;
  subset.reserve(idxs.size());
  for (size_t idx : idxs) subset.push_back(records[idx]);
  auto instances = objectives::agp_batch(subset, p, rng, max_len);
  std::vector<PairedEncoding> encs;
  std::vector<int> labels;
  for (auto& inst : instances) {
    encs.push_back(std::move(inst.encoding));
    labels.push_back(inst.label);
  }
  TokenBatch batch = model::assemble_batch(encs);
  ForwardResult fwd = enc.forward(batch);
  Tensor logits = enc.agp_logits(fwd);
  AgpBatchLoss out;
  out.loss = model::loss_agp(logits, labels);
  if (want_accuracy) {
    for (size_t i = 0; i < labels.size(); ++i) {
      int pred = logits.data()[i] > 0.0 ? 1 : 0;
      if (pred == labels[i]) ++out.correct;
    }
    out.total = static_cast<int>(labels.size());
  }
  return out;
}

struct MppBatchLoss {
  Tensor loss;
  int pos_correct = 0, pos_total = 0;
  int mut_correct = 0, mut_total = 0;
};

MppBatchLoss mpp_batch_loss(const Encoder& enc, const std::vector<objectives::MPPInstance>& all,
                            const std::vector<size_t>& idxs, bool want_accuracy) {
  std::vector<PairedEncoding> encs;
  encs.reserve(idxs.size());
  for (size_t idx : idxs) encs.push_back(all[idx].encoding);
  TokenBatch batch = model::assemble_batch(encs);
  ForwardResult fwd = enc.forward(batch);
  const double inv_b = 1.0 / static_cast<double>(idxs.size());

  std::vector<int64_t> pos_rows;
  std::vector<double> pos_labels, pos_weights;
  std::vector<int64_t> res_rows;
  std::vector<int> res_targets;
  std::vector<double> res_weights;
  for (size_t i = 0; i < idxs.size(); ++i) {
    const auto& inst = all[idxs[i]];
    const int n = inst.encoding.germline_len;
    for (int j = 0; j < n; ++j) {
      pos_rows.push_back(static_cast<int64_t>(i) * batch.seq_len + inst.encoding.germline_pos(j));
      pos_labels.push_back(inst.germline_labels[static_cast<size_t>(j)]);
      pos_weights.push_back(inv_b / static_cast<double>(n));
    }
    const size_t m = inst.masked_positions.size();
    for (size_t k = 0; k < m; ++k) {
      res_rows.push_back(static_cast<int64_t>(i) * batch.seq_len + inst.masked_positions[k]);
      res_targets.push_back(inst.masked_targets[k]);
      res_weights.push_back(inv_b / static_cast<double>(m));
    }
  }

  MppBatchLoss out;
  Tensor pos_logits = enc.position_logits(fwd, pos_rows);
  out.loss = model::bce_weighted(pos_logits, pos_labels, pos_weights);
  Tensor res_logits;
  if (!res_rows.empty()) {
    res_logits = enc.token_logits(fwd, res_rows);
    out.loss = model::add(out.loss, model::xent_weighted(res_logits, res_targets, res_weights));
  }
  if (want_accuracy) {
    for (size_t r = 0; r < pos_rows.size(); ++r) {
      int pred = pos_logits.data()[r] > 0.0 ? 1 : 0;
      if (pred == static_cast<int>(pos_labels[r])) ++out.pos_correct;
    }
    out.pos_total = static_cast<int>(pos_rows.size());
    if (!res_rows.empty()) {
      const int v = enc.config().vocab;
      for (size_t r = 0; r < res_targets.size(); ++r) {
        int arg = 0;
        for (int c = 1; c < v; ++c)
          if (res_logits.data()[r * static_cast<size_t>(v) + static_cast<size_t>(c)] >
              res_logits.data()[r * static_cast<size_t>(v) + static_cast<size_t>(arg)])
            arg = c;
        if (arg == res_targets[r]) ++out.mut_correct;
      }
      out.mut_total = static_cast<int>(res_targets.size());
    }
  }
  return out;
}

std::vector<std::vector<size_t>> eval_batches(size_t n, int batch_size) {
  std::vector<std::vector<size_t>> out;
  for (size_t off = 0; off < n; off += static_cast<size_t>(batch_size)) {
    std::vector<size_t> b;
    for (size_t i = off; i < std::min(n, off + static_cast<size_t>(batch_size)); ++i)
      b.push_back(i);
    out.push_back(std::move(b));
  }
  return out;
}

}  // namespace

std::string log_to_csv(const std::vector<LogRow>& rows) {
  std::string out = csv_join({"step", "phase", "lr", "loss", "val_loss", "mlm_acc", "agp_acc",
                              "pos_acc", "mut_acc"});
  auto fmt = [](double v) {
    if (v < 0.0) return std::string();
    std::ostringstream s;
    s.precision(10);
    s << v;
    return s.str();
  };
  for (const auto& r : rows) {
    bool has_eval = r.eval.step >= 0;
    out += csv_join({std::to_string(r.step), phase_name(r.phase), fmt(r.lr), fmt(r.loss),
                     has_eval ? fmt(r.eval.loss) : "", has_eval ? fmt(r.eval.mlm_accuracy) : "",
                     has_eval ? fmt(r.eval.agp_accuracy) : "",
                     has_eval ? fmt(r.eval.position_accuracy) : "",
                     has_eval ? fmt(r.eval.mutation_accuracy) : ""});
  }
  return out;
}

PretrainDiagnostics compute_diagnostics(const Encoder& enc,
                                        const std::vector<AntibodyRecord>& held_out,
                                        const TrainConfig& cfg) {
  if (held_out.empty()) throw DataError("diagnostics: empty held-out set");
  const size_t n = std::min(held_out.size(), static_cast<size_t>(cfg.eval_max_records));
  std::vector<AntibodyRecord> subset(held_out.begin(),
                                     held_out.begin() + static_cast<long>(n));
  const int max_len = enc.config().max_len;
  auto encodings = encode_all(subset, max_len);
  std::vector<objectives::MPPInstance> mpp;
  mpp.reserve(n);
  for (const auto& r : subset) mpp.push_back(objectives::mpp_build(r, max_len));

  PretrainDiagnostics diag;
  diag.step = -1;
  double mlm_loss_sum = 0.0;
  int mlm_batches = 0;
  long mlm_correct = 0, mlm_total = 0;
  long agp_correct = 0, agp_total = 0;
  long pos_correct = 0, pos_total = 0;
  long mut_correct = 0, mut_total = 0;

  auto batches = eval_batches(n, cfg.batch_size);
  for (size_t b = 0; b < batches.size(); ++b) {
    Rng mlm_rng = Rng::stream(cfg.seed, kEvalStream + 3 * b);
    auto mlm = mlm_batch_loss(enc, encodings, batches[b], cfg.mlm_ratio, mlm_rng, true);
    mlm_loss_sum += mlm.loss.item();
    ++mlm_batches;
    mlm_correct += mlm.correct;
    mlm_total += mlm.total;

    if (batches[b].size() >= 2) {
      Rng agp_rng = Rng::stream(cfg.seed, kEvalStream + 3 * b + 1);
      auto agp = agp_batch_loss(enc, subset, batches[b], cfg.agp_swap_prob, agp_rng, max_len, true);
      agp_correct += agp.correct;
      agp_total += agp.total;
    }

    auto mp = mpp_batch_loss(enc, mpp, batches[b], true);
    pos_correct += mp.pos_correct;
    pos_total += mp.pos_total;
    mut_correct += mp.mut_correct;
    mut_total += mp.mut_total;
  }

  diag.loss = mlm_loss_sum / std::max(1, mlm_batches);
  diag.mlm_accuracy = mlm_total > 0 ? static_cast<double>(mlm_correct) / mlm_total : -1.0;
  diag.agp_accuracy = agp_total > 0 ? static_cast<double>(agp_correct) / agp_total : -1.0;
  diag.position_accuracy = pos_total > 0 ? static_cast<double>(pos_correct) / pos_total : -1.0;
  diag.mutation_accuracy = mut_total > 0 ? static_cast<double>(mut_correct) / mut_total : -1.0;
  return diag;
}

PretrainOutcome pretrain(const std::vector<CorpusChunk>& chunks, const model::ModelConfig& mcfg,
                         const TrainConfig& mlm_cfg, const TrainConfig& evo_cfg) {
  std::vector<AntibodyRecord> train_records, val_records;
  for (const auto& c : chunks) {
    auto& dst = c.role == corpus::ChunkRole::Validation ? val_records : train_records;
    dst.insert(dst.end(), c.records.begin(), c.records.end());
  }
  if (train_records.empty()) throw DataError("pretrain: empty train set");
  if (val_records.empty()) throw DataError("pretrain: no validation chunk");
  if (mlm_cfg.steps > 0 && evo_cfg.steps > 0 && evo_cfg.peak_lr >= mlm_cfg.peak_lr)
    throw DataError("pretrain: evolution-phase peak lr must be below the MLM-phase peak lr");

  PretrainOutcome out;
  out.encoder = Encoder::init(mcfg);
  Encoder& enc = out.encoder;
  const int max_len = mcfg.max_len;
  auto train_enc = encode_all(train_records, max_len);

  int64_t global_step = 0;

  // ---- phase 1: MLM ----
  {
    model::AdamState adam;
    IndexCycler cycler(train_records.size(), mlm_cfg.seed);
    for (int64_t s = 1; s <= mlm_cfg.steps; ++s) {
      auto idxs = cycler.take(static_cast<size_t>(mlm_cfg.batch_size));
      Rng rng = Rng::stream(mlm_cfg.seed, kMlmStream + static_cast<uint64_t>(s));
      auto step_loss = mlm_batch_loss(enc, train_enc, idxs, mlm_cfg.mlm_ratio, rng, false);
      model::zero_grads(enc.params());
      model::backward(step_loss.loss);
      double lr = model::lr_schedule(s, mlm_cfg.peak_lr, mlm_cfg.warmup_steps);
      model::adam_step(enc.params(), adam, lr);
      ++global_step;

      LogRow row;
      row.step = global_step;
      row.phase = Phase::Mlm;
      row.lr = lr;
      row.loss = step_loss.loss.item();
      row.eval.step = -1;
      if (s % mlm_cfg.eval_interval == 0 || s == mlm_cfg.steps) {
        row.eval = compute_diagnostics(enc, val_records, mlm_cfg);
        row.eval.step = global_step;
        row.eval.phase = Phase::Mlm;
      }
      out.log.push_back(row);
    }
  }

  // ---- phase 2: AGP + MPP further pretraining ----
  if (evo_cfg.steps > 0) {
    model::AdamState adam;
    IndexCycler cycler(train_records.size(), evo_cfg.seed + 1);
    std::vector<objectives::MPPInstance> mpp;
    mpp.reserve(train_records.size());
    for (const auto& r : train_records) mpp.push_back(objectives::mpp_build(r, max_len));

    const int cycle = evo_cfg.evo_include_mlm ? 3 : 2;
    for (int64_t s = 1; s <= evo_cfg.steps; ++s) {
      auto idxs = cycler.take(static_cast<size_t>(evo_cfg.batch_size));
      int kind = static_cast<int>((s - 1) % cycle);
      Tensor loss;
      if (kind == 0) {
        Rng rng = Rng::stream(evo_cfg.seed, kAgpStream + static_cast<uint64_t>(s));
        loss = agp_batch_loss(enc, train_records, idxs, evo_cfg.agp_swap_prob, rng, max_len, false)
                   .loss;
      } else if (kind == 1) {
        loss = mpp_batch_loss(enc, mpp, idxs, false).loss;
      } else {
        Rng rng = Rng::stream(evo_cfg.seed, kMlmStream + static_cast<uint64_t>(s));
        loss = mlm_batch_loss(enc, train_enc, idxs, evo_cfg.mlm_ratio, rng, false).loss;
      }
      model::zero_grads(enc.params());
      model::backward(loss);
      double lr = model::lr_schedule(s, evo_cfg.peak_lr, evo_cfg.warmup_steps);
      out.max_phase2_lr = std::max(out.max_phase2_lr, lr);
      model::adam_step(enc.params(), adam, lr);
      ++global_step;

      LogRow row;
      row.step = global_step;
      row.phase = Phase::Evolution;
      row.lr = lr;
      row.loss = loss.item();
      row.eval.step = -1;
      if (s % evo_cfg.eval_interval == 0 || s == evo_cfg.steps) {
        row.eval = compute_diagnostics(enc, val_records, evo_cfg);
        row.eval.step = global_step;
        row.eval.phase = Phase::Evolution;
      }
      out.log.push_back(row);
    }
  }

  out.step = global_step;
  out.final_diagnostics = compute_diagnostics(enc, val_records,
                                              evo_cfg.steps > 0 ? evo_cfg : mlm_cfg);
  out.final_diagnostics.step = global_step;
  out.final_diagnostics.phase = evo_cfg.steps > 0 ? Phase::Evolution : Phase::Mlm;
  return out;
}

// --- finetuning ------------------------------------------------------------

namespace {

struct SeqLossResult {
  Tensor loss;
};

Tensor seq_batch_loss(const Encoder& enc,
                      const std::vector<PairedEncoding>& encodings_by_record,
                      const std::vector<SeqSample>& samples, const std::vector<size_t>& idxs,
                      int n_classes, bool training, Rng* dropout_rng) {
  std::vector<PairedEncoding> encs;
  std::vector<int> labels;
  encs.reserve(idxs.size());
  for (size_t i : idxs) {
    encs.push_back(encodings_by_record[samples[i].record]);
    labels.push_back(samples[i].label);
  }
  TokenBatch batch = model::assemble_batch(encs);
  ForwardResult fwd = enc.forward(batch, training, dropout_rng);
  Tensor logits = enc.task_logits_pooled(fwd);
  const double inv_b = 1.0 / static_cast<double>(idxs.size());
  if (n_classes == 2) {
    std::vector<double> y(labels.begin(), labels.end());
    std::vector<double> w(labels.size(), inv_b);
    return model::bce_weighted(logits, y, w);
  }
  std::vector<double> w(labels.size(), inv_b);
  return model::xent_weighted(logits, labels, w);
}

Tensor token_batch_loss(const Encoder& enc,
                        const std::vector<PairedEncoding>& encodings_by_record,
                        const std::vector<TokenSample>& samples, const std::vector<size_t>& idxs,
                        bool training, Rng* dropout_rng) {
  std::vector<PairedEncoding> encs;
  encs.reserve(idxs.size());
  for (size_t i : idxs) encs.push_back(encodings_by_record[samples[i].record]);
  TokenBatch batch = model::assemble_batch(encs);
  ForwardResult fwd = enc.forward(batch, training, dropout_rng);
  std::vector<int64_t> rows;
  std::vector<double> labels;
  for (size_t i = 0; i < idxs.size(); ++i) {
    const auto& s = samples[idxs[i]];
    const auto& e = encodings_by_record[s.record];
    for (size_t k = 0; k < s.antibody_positions.size(); ++k) {
      rows.push_back(static_cast<int64_t>(i) * batch.seq_len +
                     e.antibody_pos(s.antibody_positions[k]));
      labels.push_back(s.labels[k]);
    }
  }
  if (rows.empty()) throw NumericError("token loss: no labeled positions in batch");
  Tensor logits = enc.task_logits_tokens(fwd, rows);
  std::vector<double> w(labels.size(), 1.0 / static_cast<double>(labels.size()));
  return model::bce_weighted(logits, labels, w);
}

template <typename Sample, typename LossFn>
FinetuneOutcome finetune_impl(const Encoder& init, const std::vector<AntibodyRecord>& records,
                              const std::vector<Sample>& train_samples,
                              const std::vector<Sample>& valid_samples, int head_dim,
                              const TrainConfig& cfg, LossFn&& batch_loss) {
  if (train_samples.empty()) throw DataError("finetune: empty training set");
  FinetuneOutcome out;
  out.encoder = clone_encoder(init);
  Encoder& enc = out.encoder;
  enc.ensure_task_head(head_dim);
  if (cfg.freeze_encoder) enc.set_encoder_trainable(false);

  auto encodings = encode_all(records, enc.config().max_len);
  model::AdamState adam;
  Rng dropout_rng = Rng::stream(cfg.seed, kFtStream + 0xD);
  int64_t global_step = 0;
  double best_valid = std::numeric_limits<double>::infinity();
  std::map<std::string, std::vector<double>> best_snapshot;
  int bad_epochs = 0;

  auto eval_loss = [&](const std::vector<Sample>& samples) {
    if (samples.empty()) return std::numeric_limits<double>::quiet_NaN();
    double sum = 0.0;
    int count = 0;
    for (const auto& b : eval_batches(samples.size(), cfg.batch_size)) {
      sum += batch_loss(enc, encodings, samples, b, false, nullptr).item();
      ++count;
    }
    return sum / count;
  };

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<size_t> order(train_samples.size());
    std::iota(order.begin(), order.end(), size_t{0});
    Rng erng = Rng::stream(cfg.seed, kFtStream + static_cast<uint64_t>(epoch));
    erng.shuffle(order);

    double train_loss_sum = 0.0;
    int train_batches = 0;
    for (size_t off = 0; off < order.size(); off += static_cast<size_t>(cfg.batch_size)) {
      std::vector<size_t> idxs(order.begin() + static_cast<long>(off),
                               order.begin() +
                                   static_cast<long>(std::min(order.size(),
                                                              off + static_cast<size_t>(
                                                                        cfg.batch_size))));
      Tensor loss = batch_loss(enc, encodings, train_samples, idxs, true, &dropout_rng);
      model::zero_grads(enc.params());
      model::backward(loss);
      ++global_step;
      double lr = model::lr_schedule(global_step, cfg.peak_lr, cfg.warmup_steps);
      model::adam_step(enc.params(), adam, lr);
      train_loss_sum += loss.item();
      ++train_batches;
    }
    out.train_loss_per_epoch.push_back(train_loss_sum / std::max(1, train_batches));
    double vloss = eval_loss(valid_samples);
    out.valid_loss_per_epoch.push_back(vloss);
    out.epochs_run = epoch;

    if (!valid_samples.empty()) {
      if (vloss < best_valid - 1e-12) {
        best_valid = vloss;
        best_snapshot = snapshot_params(enc);
        bad_epochs = 0;
      } else {
        ++bad_epochs;
        if (bad_epochs >= cfg.patience) break;
      }
    }
  }
  if (!best_snapshot.empty()) restore_params(enc, best_snapshot);
  out.best_valid_loss = valid_samples.empty()
                            ? (out.train_loss_per_epoch.empty() ? 0.0
                                                                : out.train_loss_per_epoch.back())
                            : best_valid;
  return out;
}

}  // namespace

FinetuneOutcome finetune_sequence(const Encoder& init, const std::vector<AntibodyRecord>& records,
                                  const std::vector<SeqSample>& train_samples,
                                  const std::vector<SeqSample>& valid_samples, int n_classes,
                                  const TrainConfig& cfg) {
  if (n_classes < 2) throw DataError("finetune_sequence: needs >= 2 classes");
  for (const auto& s : train_samples) {
    if (s.label < 0 || s.label >= n_classes)
      throw DataError("finetune_sequence: label out of range for record " +
                      records.at(s.record).id);
  }
  int head_dim = n_classes == 2 ? 1 : n_classes;
  return finetune_impl(init, records, train_samples, valid_samples, head_dim, cfg,
                       [n_classes](const Encoder& enc, const std::vector<PairedEncoding>& encs,
                                   const std::vector<SeqSample>& samples,
                                   const std::vector<size_t>& idxs, bool training,
                                   Rng* rng) {
                         return seq_batch_loss(enc, encs, samples, idxs, n_classes, training, rng);
                       });
}

FinetuneOutcome finetune_tokens(const Encoder& init, const std::vector<AntibodyRecord>& records,
                                const std::vector<TokenSample>& train_samples,
                                const std::vector<TokenSample>& valid_samples,
                                const TrainConfig& cfg) {
  return finetune_impl(init, records, train_samples, valid_samples, 1, cfg,
                       [](const Encoder& enc, const std::vector<PairedEncoding>& encs,
                          const std::vector<TokenSample>& samples,
                          const std::vector<size_t>& idxs, bool training, Rng* rng) {
                         return token_batch_loss(enc, encs, samples, idxs, training, rng);
                       });
}

std::vector<double> score_sequences_binary(const Encoder& enc,
                                           const std::vector<AntibodyRecord>& records,
                                           const std::vector<size_t>& indices, int batch_size) {
  std::vector<double> out;
  out.reserve(indices.size());
  for (const auto& b : eval_batches(indices.size(), batch_size)) {
    std::vector<PairedEncoding> encs;
    for (size_t i : b) encs.push_back(objectives::encode_pair(records[indices[i]],
                                                              enc.config().max_len));
    TokenBatch batch = model::assemble_batch(encs);
    ForwardResult fwd = enc.forward(batch);
    Tensor logits = enc.task_logits_pooled(fwd);
    for (size_t i = 0; i < b.size(); ++i)
      out.push_back(1.0 / (1.0 + std::exp(-logits.data()[i])));
  }
  return out;
}

std::vector<std::vector<double>> score_sequences_multiclass(
    const Encoder& enc, const std::vector<AntibodyRecord>& records,
    const std::vector<size_t>& indices, int batch_size) {
  std::vector<std::vector<double>> out;
  out.reserve(indices.size());
  const int k = enc.param("head.task.w").shape()[1];
  for (const auto& b : eval_batches(indices.size(), batch_size)) {
    std::vector<PairedEncoding> encs;
    for (size_t i : b) encs.push_back(objectives::encode_pair(records[indices[i]],
                                                              enc.config().max_len));
    TokenBatch batch = model::assemble_batch(encs);
    ForwardResult fwd = enc.forward(batch);
    Tensor logits = enc.task_logits_pooled(fwd);
    for (size_t i = 0; i < b.size(); ++i) {
      const double* row = logits.data().data() + i * static_cast<size_t>(k);
      double mx = row[0];
      for (int c = 1; c < k; ++c) mx = std::max(mx, row[c]);
      double denom = 0.0;
      std::vector<double> probs(static_cast<size_t>(k));
      for (int c = 0; c < k; ++c) {
        probs[static_cast<size_t>(c)] = std::exp(row[c] - mx);
        denom += probs[static_cast<size_t>(c)];
      }
      for (auto& p : probs) p /= denom;
      out.push_back(std::move(probs));
    }
  }
  return out;
}

std::vector<std::vector<double>> score_tokens(const Encoder& enc,
                                              const std::vector<AntibodyRecord>& records,
                                              const std::vector<TokenSample>& samples,
                                              int batch_size) {
  std::vector<std::vector<double>> out(samples.size());
  for (const auto& b : eval_batches(samples.size(), batch_size)) {
    std::vector<PairedEncoding> encs;
    for (size_t i : b)
      encs.push_back(objectives::encode_pair(records[samples[i].record], enc.config().max_len));
    TokenBatch batch = model::assemble_batch(encs);
    ForwardResult fwd = enc.forward(batch);
    std::vector<int64_t> rows;
    for (size_t i = 0; i < b.size(); ++i) {
      const auto& s = samples[b[i]];
      for (int pos : s.antibody_positions)
        rows.push_back(static_cast<int64_t>(i) * batch.seq_len + encs[i].antibody_pos(pos));
    }
    Tensor logits = enc.task_logits_tokens(fwd, rows);
    size_t cursor = 0;
    for (size_t i = 0; i < b.size(); ++i) {
      const auto& s = samples[b[i]];
      std::vector<double> probs;
      probs.reserve(s.antibody_positions.size());
      for (size_t k = 0; k < s.antibody_positions.size(); ++k)
        probs.push_back(1.0 / (1.0 + std::exp(-logits.data()[cursor++])));
      out[b[i]] = std::move(probs);
    }
  }
  return out;
}

}  // namespace abevo::train
