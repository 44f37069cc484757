#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "abevo/seqcore.hpp"

namespace abevo::eval {

using seqcore::AntibodyRecord;

// --- core metrics -------------------------------------------------------

// Rank-statistic AUC with midranks for ties. Throws NumericError when the
// labels contain a single class.
double auc(const std::vector<double>& scores, const std::vector<int>& labels);

double accuracy(const std::vector<int>& predictions, const std::vector<int>& labels);
// Binary F1 of the positive class (label 1).
double f1_binary(const std::vector<int>& predictions, const std::vector<int>& labels);
// Weighted-by-support mean of per-class F1.
double f1_weighted(const std::vector<int>& predictions, const std::vector<int>& labels,
                   int n_classes);
// Binary MCC; throws NumericError when a marginal is empty.
double mcc_binary(const std::vector<int>& predictions, const std::vector<int>& labels);
// Generalized (multiclass) MCC.
double mcc_multiclass(const std::vector<int>& predictions, const std::vector<int>& labels,
                      int n_classes);

// K x K confusion with rows normalized to sum to 1 (empty rows stay zero).
std::vector<std::vector<double>> confusion_row_normalized(const std::vector<int>& predictions,
                                                          const std::vector<int>& labels,
                                                          int n_classes);

// --- cross validation -----------------------------------------------------

enum class Grouping { BySequence, ByProfile };

struct FoldSplit {
  std::vector<size_t> train;
  std::vector<size_t> valid;
};

// Shuffles group keys with the seed and deals them round-robin into k
// folds; a group's records never straddle folds.
std::vector<FoldSplit> kfold(const std::vector<AntibodyRecord>& records, int k, Grouping grouping,
                             uint64_t seed);

// --- aggregation and ranking ----------------------------------------------

double trimmed_mean(const std::vector<double>& values, double trim_fraction = 0.1);

struct CurveSeries {
  std::vector<double> x, y;
};

struct MatchCurve {
  CurveSeries cumulative;  // y_i = hits among the top i
  CurveSeries baseline;    // straight line to (n, total_hits)
};

MatchCurve cumulative_match_curve(const std::vector<int>& ranked_hits);

// --- binder matching --------------------------------------------------------

struct ScoredSequence {
  std::string id;
  std::string cdr3;
  double score = 0.0;
};

struct HitRow {
  double prob_threshold = 0.0;
  double identity_threshold = 0.0;
  long total = 0;
  long hits = 0;
  double hit_rate_percent = 0.0;  // 100 * hits / total
};

struct MatchedPair {
  std::string id;
  std::string predicted;
  std::string db_entry;  // best-identity database entry
  double identity = 0.0;
};

struct BinderMatchResult {
  HitRow row;
  std::vector<MatchedPair> matches;  // one per hit, input order
  std::vector<int> hit_flags;        // per above-threshold sequence, input order
};

// Sequences scoring strictly above prob_threshold are compared to every
// database entry; a hit is max identity >= identity_threshold.
BinderMatchResult binder_match(const std::vector<ScoredSequence>& predicted,
                               const std::vector<std::string>& db, double prob_threshold,
                               double identity_threshold = 0.85, int threads = 1);

// --- report ------------------------------------------------------------------

struct EvalReport {
  std::map<std::string, double> metrics;
  std::map<std::string, std::string> metric_errors;
  std::vector<std::map<std::string, double>> per_fold;
  std::vector<std::string> class_names;
  std::vector<std::vector<double>> confusion;
  std::map<std::string, CurveSeries> curves;
  std::vector<HitRow> hit_table;
  std::map<std::string, std::string> metadata;

  std::string to_json() const;  // deterministic (sorted keys)
};

}  // namespace abevo::eval
