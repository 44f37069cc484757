#pragma once

#include <optional>
#include <string>
#include <vector>

#include "abevo/metrics.hpp"
#include "abevo/model.hpp"
#include "abevo/train.hpp"

namespace abevo::tasks {

using eval::EvalReport;
using seqcore::AntibodyRecord;

enum class TaskKind { Binding, Paratope, Bcell, Discovery };
TaskKind task_kind_from_name(const std::string& name);
const char* task_kind_name(TaskKind kind);

struct TaskConfig {
  model::ModelConfig model;
  train::TrainConfig trainer;  // finetune budget, lr, seed
  int cv_folds = 10;
  const model::Encoder* init = nullptr;  // optional pretrained starting point
};

// Optional fixed split: record id -> "train" | "valid" | "test".
struct FixedSplit {
  std::map<std::string, std::string> assignment;
};

// Binary CDR-binding classification; fixed split when provided, otherwise
// sequence-grouped cross validation.
EvalReport run_binding(const std::vector<AntibodyRecord>& records, const TaskConfig& cfg,
                       const std::optional<FixedSplit>& split = std::nullopt);

// Per-residue 0/1 labeling on CDR positions. The record label is a bit
// string covering the concatenated CDR spans in order.
EvalReport run_paratope(const std::vector<AntibodyRecord>& records, const TaskConfig& cfg);

// Six-way maturation-stage classification with a row-normalized confusion
// matrix and the stage-adjacent error fraction.
EvalReport run_bcell(const std::vector<AntibodyRecord>& records, const TaskConfig& cfg);

struct RankedBinder {
  int rank = 0;
  std::string id;
  std::string cdr3;
  double score = 0.0;
  double best_identity = 0.0;
  int hit85 = 0;
  int hit90 = 0;
};

struct DiscoveryOptions {
  double trim_fraction = 0.1;
  std::vector<double> prob_thresholds = {0.5, 0.7, 0.8, 0.9};
  std::vector<double> identity_thresholds = {0.85, 0.90};
  int threads = 1;
};

struct DiscoveryResult {
  EvalReport report;
  std::vector<RankedBinder> ranked;  // positive-profile sequences by score
};

// Profile-grouped CV: trains per-sequence classifiers on noisy profile
// labels, aggregates individual scores by trimmed mean, and matches the
// ranked positive-profile sequences against the binder database.
DiscoveryResult run_discovery(const std::vector<AntibodyRecord>& records,
                              const std::vector<std::string>& binder_db, const TaskConfig& cfg,
                              const DiscoveryOptions& options = {});

// External-score mode: per-sequence scores from a third-party model are
// evaluated with the same metrics and (for discovery) aggregation.
EvalReport evaluate_external_binary(const std::vector<AntibodyRecord>& records,
                                    const std::map<std::string, double>& scores_by_id);
DiscoveryResult evaluate_external_discovery(const std::vector<AntibodyRecord>& records,
                                            const std::map<std::string, double>& scores_by_id,
                                            const std::vector<std::string>& binder_db,
                                            const DiscoveryOptions& options = {});

}  // namespace abevo::tasks
