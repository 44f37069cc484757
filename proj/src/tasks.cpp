#include "abevo/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <set>
#include <thread>

#include "abevo/simgen.hpp"

namespace abevo::tasks {

using model::Encoder;
using train::SeqSample;
using train::TokenSample;

TaskKind task_kind_from_name(const std::string& name) {
  if (name == "binding") return TaskKind::Binding;
  if (name == "paratope") return TaskKind::Paratope;
  if (name == "bcell") return TaskKind::Bcell;
  if (name == "discovery") return TaskKind::Discovery;
  throw DataError("unknown task: '" + name + "'");
}

const char* task_kind_name(TaskKind kind) {
  switch (kind) {
    case TaskKind::Binding: return "binding";
    case TaskKind::Paratope: return "paratope";
    case TaskKind::Bcell: return "bcell";
    case TaskKind::Discovery: return "discovery";
  }
  return "?";
}

namespace {

Encoder starting_encoder(const TaskConfig& cfg) {
  if (cfg.init) return *cfg.init;  // shared handles; finetune clones internally
  return Encoder::init(cfg.model);
}

int binary_label(const AntibodyRecord& r) {
  if (r.label == "0") return 0;
  if (r.label == "1") return 1;
  throw DataError("record " + r.id + ": expected binary label 0/1, got '" + r.label + "'");
}

train::TrainConfig fold_trainer(const train::TrainConfig& base, int fold) {
  train::TrainConfig cfg = base;
  cfg.phase = train::Phase::Finetune;
  cfg.seed = base.seed + 1000003ull * static_cast<uint64_t>(fold + 1);
  return cfg;
}

void assert_no_leakage(const std::vector<AntibodyRecord>& records,
                       const std::vector<eval::FoldSplit>& folds, eval::Grouping grouping) {
  for (const auto& fold : folds) {
    std::set<std::string> train_keys, valid_keys;
    for (size_t i : fold.train)
      train_keys.insert(grouping == eval::Grouping::BySequence ? records[i].antibody
                                                               : records[i].profile_id);
    for (size_t i : fold.valid)
      valid_keys.insert(grouping == eval::Grouping::BySequence ? records[i].antibody
                                                               : records[i].profile_id);
    for (const auto& k : valid_keys) {
      if (train_keys.count(k)) throw DataError("cross-validation fold leaks group: " + k);
    }
  }
}

void put_metric(EvalReport& report, const std::string& name, const std::function<double()>& fn) {
  try {
    report.metrics[name] = fn();
  } catch (const NumericError& e) {
    report.metric_errors[name] = e.what();
  }
}

std::map<std::string, double> binary_fold_metrics(const std::vector<double>& scores,
                                                  const std::vector<int>& labels) {
  std::map<std::string, double> m;
  std::vector<int> preds;
  preds.reserve(scores.size());
  for (double s : scores) preds.push_back(s > 0.5 ? 1 : 0);
  m["acc"] = eval::accuracy(preds, labels);
  try {
    m["auc"] = eval::auc(scores, labels);
  } catch (const NumericError&) {
  }
  try {
    m["f1"] = eval::f1_binary(preds, labels);
  } catch (const NumericError&) {
  }
  try {
    m["mcc"] = eval::mcc_binary(preds, labels);
  } catch (const NumericError&) {
  }
  return m;
}

void aggregate_folds(EvalReport& report) {
  std::map<std::string, std::pair<double, int>> acc;
  for (const auto& fold : report.per_fold) {
    for (const auto& [k, v] : fold) {
      acc[k].first += v;
      acc[k].second += 1;
    }
  }
  for (const auto& [k, pv] : acc) {
    report.metrics["fold_mean_" + k] = pv.first / pv.second;
  }
}

}  // namespace

EvalReport run_binding(const std::vector<AntibodyRecord>& records, const TaskConfig& cfg,
                       const std::optional<FixedSplit>& split) {
  if (records.empty()) throw DataError("run_binding: empty dataset");
  std::vector<int> labels;
  labels.reserve(records.size());
  for (const auto& r : records) labels.push_back(binary_label(r));

  EvalReport report;
  report.metadata["task"] = "binding";
  Encoder init = starting_encoder(cfg);

  if (split) {
    std::vector<SeqSample> train, valid, test;
    for (size_t i = 0; i < records.size(); ++i) {
      auto it = split->assignment.find(records[i].id);
      if (it == split->assignment.end())
        throw DataError("split file misses record " + records[i].id);
      SeqSample s{i, labels[i]};
      if (it->second == "train")
        train.push_back(s);
      else if (it->second == "valid")
        valid.push_back(s);
      else if (it->second == "test")
        test.push_back(s);
      else
        throw DataError("split file: unknown split '" + it->second + "'");
    }
    report.metadata["split"] = "fixed";
    report.metadata["split_sizes"] = std::to_string(train.size()) + "/" +
                                     std::to_string(valid.size()) + "/" +
                                     std::to_string(test.size());
    auto outcome = train::finetune_sequence(init, records, train, valid, 2,
                                            fold_trainer(cfg.trainer, 0));
    const auto& eval_set = test.empty() ? valid : test;
    std::vector<size_t> idx;
    std::vector<int> eval_labels;
    for (const auto& s : eval_set) {
      idx.push_back(s.record);
      eval_labels.push_back(s.label);
    }
    auto scores =
        train::score_sequences_binary(outcome.encoder, records, idx, cfg.trainer.batch_size);
    auto m = binary_fold_metrics(scores, eval_labels);
    report.per_fold.push_back(m);
    put_metric(report, "auc", [&] { return eval::auc(scores, eval_labels); });
    std::vector<int> preds;
    for (double s : scores) preds.push_back(s > 0.5 ? 1 : 0);
    put_metric(report, "acc", [&] { return eval::accuracy(preds, eval_labels); });
    put_metric(report, "f1", [&] { return eval::f1_binary(preds, eval_labels); });
    put_metric(report, "mcc", [&] { return eval::mcc_binary(preds, eval_labels); });
    return report;
  }

  report.metadata["split"] = "cv";
  auto folds = eval::kfold(records, cfg.cv_folds, eval::Grouping::BySequence, cfg.trainer.seed);
  assert_no_leakage(records, folds, eval::Grouping::BySequence);
  std::vector<double> pooled_scores;
  std::vector<int> pooled_labels;
  for (size_t f = 0; f < folds.size(); ++f) {
    std::vector<SeqSample> train, valid;
    for (size_t i : folds[f].train) train.push_back({i, labels[i]});
    for (size_t i : folds[f].valid) valid.push_back({i, labels[i]});
    auto outcome = train::finetune_sequence(init, records, train, valid, 2,
                                            fold_trainer(cfg.trainer, static_cast<int>(f)));
    std::vector<size_t> idx = folds[f].valid;
    auto scores =
        train::score_sequences_binary(outcome.encoder, records, idx, cfg.trainer.batch_size);
    std::vector<int> fold_labels;
    for (size_t i : idx) fold_labels.push_back(labels[i]);
    report.per_fold.push_back(binary_fold_metrics(scores, fold_labels));
    pooled_scores.insert(pooled_scores.end(), scores.begin(), scores.end());
    pooled_labels.insert(pooled_labels.end(), fold_labels.begin(), fold_labels.end());
  }
  aggregate_folds(report);
  std::vector<int> preds;
  for (double s : pooled_scores) preds.push_back(s > 0.5 ? 1 : 0);
  put_metric(report, "auc", [&] { return eval::auc(pooled_scores, pooled_labels); });
  put_metric(report, "acc", [&] { return eval::accuracy(preds, pooled_labels); });
  put_metric(report, "f1", [&] { return eval::f1_binary(preds, pooled_labels); });
  put_metric(report, "mcc", [&] { return eval::mcc_binary(preds, pooled_labels); });
  return report;
}

namespace {

TokenSample paratope_sample(const AntibodyRecord& r, size_t index) {
  TokenSample s;
  s.record = index;
  size_t total = 0;
  for (const auto& span : {r.cdr1, r.cdr2, r.cdr3}) {
    if (!span) continue;
    total += static_cast<size_t>(span->length());
  }
  if (total == 0) throw DataError("record " + r.id + ": paratope task needs CDR spans");
  if (r.label.size() != total)
    throw DataError("record " + r.id + ": label string length " + std::to_string(r.label.size()) +
                    " does not cover the CDR spans (" + std::to_string(total) + ")");
  size_t cursor = 0;
  for (const auto& span : {r.cdr1, r.cdr2, r.cdr3}) {
    if (!span) continue;
    for (int pos = span->start; pos < span->end; ++pos) {
      char c = r.label[cursor++];
      if (c != '0' && c != '1')
        throw DataError("record " + r.id + ": paratope labels must be 0/1");
      s.antibody_positions.push_back(pos);
      s.labels.push_back(c - '0');
    }
  }
  return s;
}

}  // namespace

EvalReport run_paratope(const std::vector<AntibodyRecord>& records, const TaskConfig& cfg) {
  if (records.empty()) throw DataError("run_paratope: empty dataset");
  std::vector<TokenSample> samples;
  samples.reserve(records.size());
  for (size_t i = 0; i < records.size(); ++i) samples.push_back(paratope_sample(records[i], i));

  EvalReport report;
  report.metadata["task"] = "paratope";
  report.metadata["auc_pooling"] = "micro";
  Encoder init = starting_encoder(cfg);
  auto folds = eval::kfold(records, cfg.cv_folds, eval::Grouping::BySequence, cfg.trainer.seed);
  assert_no_leakage(records, folds, eval::Grouping::BySequence);

  std::vector<double> pooled_scores;
  std::vector<int> pooled_labels;
  for (size_t f = 0; f < folds.size(); ++f) {
    std::vector<TokenSample> train, valid;
    for (size_t i : folds[f].train) train.push_back(samples[i]);
    for (size_t i : folds[f].valid) valid.push_back(samples[i]);
    auto outcome = train::finetune_tokens(init, records, train, valid,
                                          fold_trainer(cfg.trainer, static_cast<int>(f)));
    auto scores = train::score_tokens(outcome.encoder, records, valid, cfg.trainer.batch_size);
    std::vector<double> fold_scores;
    std::vector<int> fold_labels;
    for (size_t v = 0; v < valid.size(); ++v) {
      fold_scores.insert(fold_scores.end(), scores[v].begin(), scores[v].end());
      fold_labels.insert(fold_labels.end(), valid[v].labels.begin(), valid[v].labels.end());
    }
    report.per_fold.push_back(binary_fold_metrics(fold_scores, fold_labels));
    pooled_scores.insert(pooled_scores.end(), fold_scores.begin(), fold_scores.end());
    pooled_labels.insert(pooled_labels.end(), fold_labels.begin(), fold_labels.end());
  }
  aggregate_folds(report);
  std::vector<int> preds;
  for (double s : pooled_scores) preds.push_back(s > 0.5 ? 1 : 0);
  put_metric(report, "auc", [&] { return eval::auc(pooled_scores, pooled_labels); });
  put_metric(report, "acc", [&] { return eval::accuracy(preds, pooled_labels); });
  put_metric(report, "f1", [&] { return eval::f1_binary(preds, pooled_labels); });
  put_metric(report, "mcc", [&] { return eval::mcc_binary(preds, pooled_labels); });
  return report;
}

EvalReport run_bcell(const std::vector<AntibodyRecord>& records, const TaskConfig& cfg) {
  if (records.empty()) throw DataError("run_bcell: empty dataset");
  std::vector<int> labels;
  labels.reserve(records.size());
  for (const auto& r : records) labels.push_back(simgen::stage_index(r.stage));

  EvalReport report;
  report.metadata["task"] = "bcell";
  report.class_names.assign(simgen::kStageNames.begin(), simgen::kStageNames.end());
  Encoder init = starting_encoder(cfg);
  auto folds = eval::kfold(records, cfg.cv_folds, eval::Grouping::BySequence, cfg.trainer.seed);
  assert_no_leakage(records, folds, eval::Grouping::BySequence);

  std::vector<int> pooled_preds, pooled_labels;
  for (size_t f = 0; f < folds.size(); ++f) {
    std::vector<SeqSample> train, valid;
    for (size_t i : folds[f].train) train.push_back({i, labels[i]});
    for (size_t i : folds[f].valid) valid.push_back({i, labels[i]});
    auto outcome = train::finetune_sequence(init, records, train, valid, 6,
                                            fold_trainer(cfg.trainer, static_cast<int>(f)));
    auto probs = train::score_sequences_multiclass(outcome.encoder, records, folds[f].valid,
                                                   cfg.trainer.batch_size);
    std::map<std::string, double> fold_metrics;
    std::vector<int> fold_preds, fold_labels;
    for (size_t v = 0; v < folds[f].valid.size(); ++v) {
      int arg = 0;
      for (int c = 1; c < 6; ++c)
        if (probs[v][static_cast<size_t>(c)] > probs[v][static_cast<size_t>(arg)]) arg = c;
      fold_preds.push_back(arg);
      fold_labels.push_back(labels[folds[f].valid[v]]);
    }
    fold_metrics["acc"] = eval::accuracy(fold_preds, fold_labels);
    report.per_fold.push_back(fold_metrics);
    pooled_preds.insert(pooled_preds.end(), fold_preds.begin(), fold_preds.end());
    pooled_labels.insert(pooled_labels.end(), fold_labels.begin(), fold_labels.end());
  }
  aggregate_folds(report);
  put_metric(report, "acc", [&] { return eval::accuracy(pooled_preds, pooled_labels); });
  put_metric(report, "f1_weighted",
             [&] { return eval::f1_weighted(pooled_preds, pooled_labels, 6); });
  put_metric(report, "mcc", [&] { return eval::mcc_multiclass(pooled_preds, pooled_labels, 6); });
  report.confusion = eval::confusion_row_normalized(pooled_preds, pooled_labels, 6);

  long errors = 0, adjacent_errors = 0;
  for (size_t i = 0; i < pooled_preds.size(); ++i) {
    if (pooled_preds[i] == pooled_labels[i]) continue;
    ++errors;
    if (std::abs(pooled_preds[i] - pooled_labels[i]) == 1) ++adjacent_errors;
  }
  if (errors > 0)
    report.metrics["adjacent_error_fraction"] =
        static_cast<double>(adjacent_errors) / static_cast<double>(errors);
  return report;
}

namespace {

struct ProfileGroups {
  std::vector<std::string> ids;                    // sorted profile ids
  std::map<std::string, std::vector<size_t>> by_profile;
  std::map<std::string, int> label_of;
};

ProfileGroups group_profiles(const std::vector<AntibodyRecord>& records) {
  ProfileGroups g;
  for (size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.profile_id.empty()) throw DataError("record " + r.id + ": discovery needs profile ids");
    int label = binary_label(r);
    auto [it, fresh] = g.label_of.emplace(r.profile_id, label);
    if (!fresh && it->second != label)
      throw DataError("profile " + r.profile_id + " carries conflicting labels");
    g.by_profile[r.profile_id].push_back(i);
  }
  for (const auto& [pid, idxs] : g.by_profile) {
    if (idxs.empty()) throw DataError("profile " + pid + " has zero sequences");
    g.ids.push_back(pid);
  }
  return g;
}

// "top100 redundancy": when redundancy counts are present, only the 100
// most redundant sequences per profile are used for training.
std::vector<size_t> redundancy_filter(const std::vector<AntibodyRecord>& records,
                                      const std::vector<size_t>& idxs, bool* applied) {
  bool have = std::any_of(idxs.begin(), idxs.end(),
                          [&](size_t i) { return records[i].redundancy >= 0; });
  if (!have) {
    *applied = false;
    return idxs;
  }
  *applied = true;
  std::vector<size_t> sorted = idxs;
  std::sort(sorted.begin(), sorted.end(), [&](size_t a, size_t b) {
    if (records[a].redundancy != records[b].redundancy)
      return records[a].redundancy > records[b].redundancy;
    return records[a].id < records[b].id;
  });
  if (sorted.size() > 100) sorted.resize(100);
  std::sort(sorted.begin(), sorted.end());
  return sorted;
}

DiscoveryResult discovery_from_scores(const std::vector<AntibodyRecord>& records,
                                      const std::vector<double>& scores,
                                      const std::vector<int>& labels,
                                      const std::vector<std::string>& binder_db,
                                      const DiscoveryOptions& options, EvalReport report) {
  ProfileGroups groups = group_profiles(records);

  // individual scores: trimmed mean over each profile's sequence scores
  std::vector<double> profile_scores;
  std::vector<int> profile_labels;
  for (const auto& pid : groups.ids) {
    std::vector<double> vals;
    for (size_t i : groups.by_profile[pid]) vals.push_back(scores[i]);
    profile_scores.push_back(eval::trimmed_mean(vals, options.trim_fraction));
    profile_labels.push_back(groups.label_of[pid]);
  }

  put_metric(report, "sequence_auc", [&] { return eval::auc(scores, labels); });
  std::vector<int> seq_preds;
  for (double s : scores) seq_preds.push_back(s > 0.5 ? 1 : 0);
  put_metric(report, "sequence_f1", [&] { return eval::f1_binary(seq_preds, labels); });
  put_metric(report, "sequence_mcc", [&] { return eval::mcc_binary(seq_preds, labels); });
  put_metric(report, "individual_auc", [&] { return eval::auc(profile_scores, profile_labels); });
  std::vector<int> prof_preds;
  for (double s : profile_scores) prof_preds.push_back(s > 0.5 ? 1 : 0);
  put_metric(report, "individual_f1",
             [&] { return eval::f1_binary(prof_preds, profile_labels); });
  put_metric(report, "individual_mcc",
             [&] { return eval::mcc_binary(prof_preds, profile_labels); });
  report.metrics["trim_fraction"] = options.trim_fraction;

  // rank the positive-profile sequences by predicted score
  std::vector<size_t> positive_idx;
  for (size_t i = 0; i < records.size(); ++i) {
    if (labels[i] == 1) positive_idx.push_back(i);
  }
  std::stable_sort(positive_idx.begin(), positive_idx.end(), [&](size_t a, size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return records[a].id < records[b].id;
  });

  DiscoveryResult result;
  result.report = std::move(report);
  std::vector<eval::ScoredSequence> ranked_seqs;
  for (size_t i : positive_idx)
    ranked_seqs.push_back({records[i].id, records[i].cdr3_seq(), scores[i]});

  // identity of each ranked sequence against the database (once)
  std::vector<double> best_identity(ranked_seqs.size(), 0.0);
  {
    auto score_one = [&](size_t s) {
      double best = 0.0;
      for (const auto& entry : binder_db)
        best = std::max(best, seqcore::sequence_identity(ranked_seqs[s].cdr3, entry));
      best_identity[s] = best;
    };
    if (options.threads <= 1 || ranked_seqs.size() < 64) {
      for (size_t s = 0; s < ranked_seqs.size(); ++s) score_one(s);
    } else {
      size_t n_threads = std::min<size_t>(static_cast<size_t>(options.threads), ranked_seqs.size());
      std::vector<std::thread> pool;
      for (size_t t = 0; t < n_threads; ++t) {
        pool.emplace_back([&, t]() {
          for (size_t s = t; s < ranked_seqs.size(); s += n_threads) score_one(s);
        });
      }
      for (auto& th : pool) th.join();
    }
  }

  for (double ident : options.identity_thresholds) {
    std::vector<int> hits;
    hits.reserve(ranked_seqs.size());
    for (double b : best_identity) hits.push_back(b >= ident ? 1 : 0);
    auto curve = eval::cumulative_match_curve(hits);
    std::string key = "cumulative_identity_" + std::to_string(ident).substr(0, 4);
    result.report.curves[key] = curve.cumulative;
    result.report.curves[key + "_baseline"] = curve.baseline;
    for (double prob : options.prob_thresholds) {
      auto match = eval::binder_match(ranked_seqs, binder_db, prob, ident, options.threads);
      result.report.hit_table.push_back(match.row);
    }
  }

  for (size_t i = 0; i < ranked_seqs.size(); ++i) {
    RankedBinder rb;
    rb.rank = static_cast<int>(i + 1);
    rb.id = ranked_seqs[i].id;
    rb.cdr3 = ranked_seqs[i].cdr3;
    rb.score = ranked_seqs[i].score;
    rb.best_identity = best_identity[i];
    rb.hit85 = best_identity[i] >= 0.85 ? 1 : 0;
    rb.hit90 = best_identity[i] >= 0.90 ? 1 : 0;
    result.ranked.push_back(std::move(rb));
  }
  return result;
}

}  // namespace

DiscoveryResult run_discovery(const std::vector<AntibodyRecord>& records,
                              const std::vector<std::string>& binder_db, const TaskConfig& cfg,
                              const DiscoveryOptions& options) {
  if (records.empty()) throw DataError("run_discovery: empty dataset");
  if (binder_db.empty()) throw DataError("run_discovery: empty binder database");
  ProfileGroups groups = group_profiles(records);
  if (groups.ids.size() < 2) throw DataError("run_discovery: needs >= 2 profiles");

  std::vector<int> labels;
  labels.reserve(records.size());
  for (const auto& r : records) labels.push_back(binary_label(r));

  EvalReport report;
  report.metadata["task"] = "discovery";
  Encoder init = starting_encoder(cfg);
  auto folds = eval::kfold(records, cfg.cv_folds, eval::Grouping::ByProfile, cfg.trainer.seed);
  assert_no_leakage(records, folds, eval::Grouping::ByProfile);

  bool redundancy_applied = false;
  std::vector<double> scores(records.size(), 0.0);
  for (size_t f = 0; f < folds.size(); ++f) {
    // per-profile redundancy filter on the training side only
    std::map<std::string, std::vector<size_t>> train_by_profile;
    for (size_t i : folds[f].train) train_by_profile[records[i].profile_id].push_back(i);
    std::vector<SeqSample> train;
    for (auto& [pid, idxs] : train_by_profile) {
      bool applied = false;
      for (size_t i : redundancy_filter(records, idxs, &applied)) {
        train.push_back({i, labels[i]});
      }
      redundancy_applied = redundancy_applied || applied;
    }
    std::vector<SeqSample> valid;
    for (size_t i : folds[f].valid) valid.push_back({i, labels[i]});
    auto outcome = train::finetune_sequence(init, records, train, valid, 2,
                                            fold_trainer(cfg.trainer, static_cast<int>(f)));
    auto fold_scores = train::score_sequences_binary(outcome.encoder, records, folds[f].valid,
                                                     cfg.trainer.batch_size);
    for (size_t v = 0; v < folds[f].valid.size(); ++v)
      scores[folds[f].valid[v]] = fold_scores[v];
  }
  report.metadata["redundancy_filter"] = redundancy_applied ? "applied (top 100 per profile)"
                                                            : "absent (all sequences used)";
  return discovery_from_scores(records, scores, labels, binder_db, options, std::move(report));
}

EvalReport evaluate_external_binary(const std::vector<AntibodyRecord>& records,
                                    const std::map<std::string, double>& scores_by_id) {
  if (records.empty()) throw DataError("evaluate: empty dataset");
  std::vector<double> scores;
  std::vector<int> labels;
  for (const auto& r : records) {
    auto it = scores_by_id.find(r.id);
    if (it == scores_by_id.end()) throw DataError("scores file misses record " + r.id);
    scores.push_back(it->second);
    labels.push_back(binary_label(r));
  }
  EvalReport report;
  report.metadata["task"] = "external-binary";
  report.metadata["scores"] = "external";
  std::vector<int> preds;
  for (double s : scores) preds.push_back(s > 0.5 ? 1 : 0);
  put_metric(report, "auc", [&] { return eval::auc(scores, labels); });
  put_metric(report, "acc", [&] { return eval::accuracy(preds, labels); });
  put_metric(report, "f1", [&] { return eval::f1_binary(preds, labels); });
  put_metric(report, "mcc", [&] { return eval::mcc_binary(preds, labels); });
  return report;
}

DiscoveryResult evaluate_external_discovery(const std::vector<AntibodyRecord>& records,
                                            const std::map<std::string, double>& scores_by_id,
                                            const std::vector<std::string>& binder_db,
                                            const DiscoveryOptions& options) {
  if (records.empty()) throw DataError("evaluate: empty dataset");
  if (binder_db.empty()) throw DataError("evaluate: empty binder database");
  std::vector<double> scores;
  std::vector<int> labels;
  for (const auto& r : records) {
    auto it = scores_by_id.find(r.id);
    if (it == scores_by_id.end()) throw DataError("scores file misses record " + r.id);
    scores.push_back(it->second);
    labels.push_back(binary_label(r));
  }
  EvalReport report;
  report.metadata["task"] = "discovery";
  report.metadata["scores"] = "external";
  return discovery_from_scores(records, scores, labels, binder_db, options, std::move(report));
}

}  // namespace abevo::tasks
