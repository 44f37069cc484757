#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "abevo/corpus.hpp"
#include "abevo/model.hpp"

namespace abevo::train {

using corpus::CorpusChunk;
using seqcore::AntibodyRecord;

enum class Phase { Mlm, Evolution, Finetune };
const char* phase_name(Phase p);

struct TrainConfig {
  Phase phase = Phase::Mlm;
  int64_t steps = 1000;       // pretraining budget (per phase)
  int epochs = 30;            // finetune cap
  int batch_size = 32;
  double peak_lr = 1e-3;
  int64_t warmup_steps = 100;
  int64_t eval_interval = 100;
  int eval_max_records = 256;
  double mlm_ratio = 0.15;
  double agp_swap_prob = 0.3;
  bool evo_include_mlm = false;  // adds plain-MLM steps to the phase-2 cycle
  int patience = 5;              // finetune early stopping on validation loss
  bool freeze_encoder = false;
  uint64_t seed = 1;
};

struct PretrainDiagnostics {
  int64_t step = 0;
  Phase phase = Phase::Mlm;
  double loss = -1.0;
  double mlm_accuracy = -1.0;       // -1 marks "not measured"
  double agp_accuracy = -1.0;
  double position_accuracy = -1.0;
  double mutation_accuracy = -1.0;
};

struct LogRow {
  int64_t step = 0;
  Phase phase = Phase::Mlm;
  double lr = 0.0;
  double loss = 0.0;
  PretrainDiagnostics eval;  // step < 0 when this row has no evaluation
};

std::string log_to_csv(const std::vector<LogRow>& rows);

// Held-out accuracies for the three pretraining objectives plus MLM.
PretrainDiagnostics compute_diagnostics(const model::Encoder& enc,
                                        const std::vector<AntibodyRecord>& held_out,
                                        const TrainConfig& cfg);

struct PretrainOutcome {
  model::Encoder encoder;
  int64_t step = 0;
  std::vector<LogRow> log;
  double max_phase2_lr = 0.0;
  PretrainDiagnostics final_diagnostics;
};

// Two-phase pretraining: MLM on paired encodings, then alternating
// AGP/MPP further pretraining at a strictly smaller peak learning rate.
// Either phase may have a zero-step budget.
PretrainOutcome pretrain(const std::vector<CorpusChunk>& chunks, const model::ModelConfig& mcfg,
                         const TrainConfig& mlm_cfg, const TrainConfig& evo_cfg);

// --- finetuning ----------------------------------------------------------

enum class HeadKind { BinarySeq, MulticlassSeq, TokenLabel };

struct SeqSample {
  size_t record = 0;
  int label = 0;
};

struct TokenSample {
  size_t record = 0;
  std::vector<int> antibody_positions;  // indices into the antibody string
  std::vector<int> labels;              // parallel 0/1 labels
};

struct FinetuneOutcome {
  model::Encoder encoder;  // best-validation parameters
  int epochs_run = 0;
  std::vector<double> train_loss_per_epoch;
  std::vector<double> valid_loss_per_epoch;
  double best_valid_loss = 0.0;
};

FinetuneOutcome finetune_sequence(const model::Encoder& init,
                                  const std::vector<AntibodyRecord>& records,
                                  const std::vector<SeqSample>& train_samples,
                                  const std::vector<SeqSample>& valid_samples, int n_classes,
                                  const TrainConfig& cfg);

FinetuneOutcome finetune_tokens(const model::Encoder& init,
                                const std::vector<AntibodyRecord>& records,
                                const std::vector<TokenSample>& train_samples,
                                const std::vector<TokenSample>& valid_samples,
                                const TrainConfig& cfg);

// --- inference helpers ------------------------------------------------------

// P(class 1) for binary heads; softmax probabilities for multiclass.
std::vector<double> score_sequences_binary(const model::Encoder& enc,
                                           const std::vector<AntibodyRecord>& records,
                                           const std::vector<size_t>& indices, int batch_size);
std::vector<std::vector<double>> score_sequences_multiclass(
    const model::Encoder& enc, const std::vector<AntibodyRecord>& records,
    const std::vector<size_t>& indices, int batch_size);
// Per-token P(label 1) for the requested antibody positions.
std::vector<std::vector<double>> score_tokens(const model::Encoder& enc,
                                              const std::vector<AntibodyRecord>& records,
                                              const std::vector<TokenSample>& samples,
                                              int batch_size);

}  // namespace abevo::train
