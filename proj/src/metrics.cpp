#include "abevo/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

#include <json.hpp>

#include "abevo/errors.hpp"
#include "abevo/rng.hpp"

namespace abevo::eval {

using nlohmann::json;

double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.empty() || scores.size() != labels.size())
    throw DataError("auc: scores and labels must be non-empty and aligned");
  int64_t n_pos = 0, n_neg = 0;
  for (int y : labels) {
    if (y == 1)
      ++n_pos;
    else if (y == 0)
      ++n_neg;
    else
      throw DataError("auc: labels must be 0/1");
  }
  if (n_pos == 0 || n_neg == 0)
    throw NumericError("auc: undefined for single-class labels");

  const size_t n = scores.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return scores[a] < scores[b]; });
  double rank_sum_pos = 0.0;
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    double midrank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (size_t k = i; k <= j; ++k) {
      if (labels[order[k]] == 1) rank_sum_pos += midrank;
    }
    i = j + 1;
  }
  double numerator =
      rank_sum_pos - static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0) / 2.0;
  return numerator / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

namespace {

void check_aligned(const std::vector<int>& predictions, const std::vector<int>& labels) {
  if (predictions.empty() || predictions.size() != labels.size())
    throw DataError("metrics: predictions and labels must be non-empty and aligned");
}

struct BinaryCounts {
  double tp = 0, fp = 0, tn = 0, fn = 0;
};

BinaryCounts binary_counts(const std::vector<int>& predictions, const std::vector<int>& labels) {
  BinaryCounts c;
  for (size_t i = 0; i < predictions.size(); ++i) {
    int p = predictions[i], y = labels[i];
    if ((p != 0 && p != 1) || (y != 0 && y != 1))
      throw DataError("metrics: binary predictions/labels must be 0/1");
    if (p == 1 && y == 1)
      c.tp += 1;
    else if (p == 1 && y == 0)
      c.fp += 1;
    else if (p == 0 && y == 0)
      c.tn += 1;
    else
      c.fn += 1;
  }
  return c;
}

}  // namespace

double accuracy(const std::vector<int>& predictions, const std::vector<int>& labels) {
  check_aligned(predictions, labels);
  double correct = 0;
  for (size_t i = 0; i < predictions.size(); ++i)
    if (predictions[i] == labels[i]) correct += 1;
  return correct / static_cast<double>(predictions.size());
}

double f1_binary(const std::vector<int>& predictions, const std::vector<int>& labels) {
  check_aligned(predictions, labels);
  BinaryCounts c = binary_counts(predictions, labels);
  double denom = 2.0 * c.tp + c.fp + c.fn;
  if (denom == 0.0) throw NumericError("f1: no positive labels or predictions");
  return 2.0 * c.tp / denom;
}

double f1_weighted(const std::vector<int>& predictions, const std::vector<int>& labels,
                   int n_classes) {
  check_aligned(predictions, labels);
  if (n_classes < 2) throw DataError("f1_weighted: needs >= 2 classes");
  double total = static_cast<double>(labels.size());
  double out = 0.0;
  for (int c = 0; c < n_classes; ++c) {
    double tp = 0, fp = 0, fn = 0, support = 0;
    for (size_t i = 0; i < predictions.size(); ++i) {
      bool py = predictions[i] == c, yy = labels[i] == c;
      if (yy) support += 1;
      if (py && yy)
        tp += 1;
      else if (py && !yy)
        fp += 1;
      else if (!py && yy)
        fn += 1;
    }
    double denom = 2.0 * tp + fp + fn;
    double f1 = denom == 0.0 ? 0.0 : 2.0 * tp / denom;
    out += f1 * support / total;
  }
  return out;
}

double mcc_binary(const std::vector<int>& predictions, const std::vector<int>& labels) {
  check_aligned(predictions, labels);
  BinaryCounts c = binary_counts(predictions, labels);
  double denom =
      std::sqrt((c.tp + c.fp) * (c.tp + c.fn) * (c.tn + c.fp) * (c.tn + c.fn));
  if (denom == 0.0) throw NumericError("mcc: undefined (an empty marginal)");
  return (c.tp * c.tn - c.fp * c.fn) / denom;
}

double mcc_multiclass(const std::vector<int>& predictions, const std::vector<int>& labels,
                      int n_classes) {
  check_aligned(predictions, labels);
  double s = static_cast<double>(labels.size());
  double correct = 0.0;
  std::vector<double> pred_count(static_cast<size_t>(n_classes), 0.0);
  std::vector<double> true_count(static_cast<size_t>(n_classes), 0.0);
  for (size_t i = 0; i < labels.size(); ++i) {
    if (predictions[i] < 0 || predictions[i] >= n_classes || labels[i] < 0 ||
        labels[i] >= n_classes)
      throw DataError("mcc_multiclass: class index out of range");
    if (predictions[i] == labels[i]) correct += 1.0;
    pred_count[static_cast<size_t>(predictions[i])] += 1.0;
    true_count[static_cast<size_t>(labels[i])] += 1.0;
  }
  double cross = 0.0, p2 = 0.0, t2 = 0.0;
  for (int c = 0; c < n_classes; ++c) {
    cross += pred_count[static_cast<size_t>(c)] * true_count[static_cast<size_t>(c)];
    p2 += pred_count[static_cast<size_t>(c)] * pred_count[static_cast<size_t>(c)];
    t2 += true_count[static_cast<size_t>(c)] * true_count[static_cast<size_t>(c)];
  }
  double denom = std::sqrt((s * s - p2) * (s * s - t2));
  if (denom == 0.0) throw NumericError("mcc: undefined (an empty marginal)");
  return (correct * s - cross) / denom;
}

std::vector<std::vector<double>> confusion_row_normalized(const std::vector<int>& predictions,
                                                          const std::vector<int>& labels,
                                                          int n_classes) {
  check_aligned(predictions, labels);
  std::vector<std::vector<double>> m(static_cast<size_t>(n_classes),
                                     std::vector<double>(static_cast<size_t>(n_classes), 0.0));
  for (size_t i = 0; i < labels.size(); ++i)
    m[static_cast<size_t>(labels[i])][static_cast<size_t>(predictions[i])] += 1.0;
  for (auto& row : m) {
    double sum = std::accumulate(row.begin(), row.end(), 0.0);
    if (sum > 0.0)
      for (auto& x : row) x /= sum;
  }
  return m;
}

std::vector<FoldSplit> kfold(const std::vector<AntibodyRecord>& records, int k, Grouping grouping,
                             uint64_t seed) {
  if (k < 2) throw DataError("kfold: k must be >= 2");
  std::map<std::string, std::vector<size_t>> groups;
  for (size_t i = 0; i < records.size(); ++i) {
    const std::string& key =
        grouping == Grouping::BySequence ? records[i].antibody : records[i].profile_id;
    if (key.empty()) throw DataError("kfold: record " + records[i].id + " has an empty group key");
    groups[key].push_back(i);
  }
  if (static_cast<int>(groups.size()) < k)
    throw DataError("kfold: " + std::to_string(groups.size()) + " groups < k=" +
                    std::to_string(k));
  std::vector<const std::vector<size_t>*> group_list;
  group_list.reserve(groups.size());
  for (const auto& [key, idxs] : groups) group_list.push_back(&idxs);
  Rng rng(seed);
  rng.shuffle(group_list);

  std::vector<FoldSplit> folds(static_cast<size_t>(k));
  for (size_t g = 0; g < group_list.size(); ++g) {
    size_t fold = g % static_cast<size_t>(k);
    auto& v = folds[fold].valid;
    v.insert(v.end(), group_list[g]->begin(), group_list[g]->end());
  }
  for (int f = 0; f < k; ++f) {
    for (int other = 0; other < k; ++other) {
      if (other == f) continue;
      auto& t = folds[static_cast<size_t>(f)].train;
      const auto& v = folds[static_cast<size_t>(other)].valid;
      t.insert(t.end(), v.begin(), v.end());
    }
    std::sort(folds[static_cast<size_t>(f)].train.begin(), folds[static_cast<size_t>(f)].train.end());
    std::sort(folds[static_cast<size_t>(f)].valid.begin(), folds[static_cast<size_t>(f)].valid.end());
  }
  return folds;
}

double trimmed_mean(const std::vector<double>& values, double trim_fraction) {
  if (values.empty()) throw DataError("trimmed_mean: empty input");
  if (trim_fraction < 0.0 || trim_fraction >= 0.5)
    throw DataError("trimmed_mean: trim fraction must be in [0, 0.5)");
  std::vector<double> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  size_t cut = static_cast<size_t>(std::floor(trim_fraction * static_cast<double>(sorted.size())));
  if (2 * cut >= sorted.size()) throw NumericError("trimmed_mean: all values trimmed");
  double sum = 0.0;
  for (size_t i = cut; i < sorted.size() - cut; ++i) sum += sorted[i];
  return sum / static_cast<double>(sorted.size() - 2 * cut);
}

MatchCurve cumulative_match_curve(const std::vector<int>& ranked_hits) {
  MatchCurve curve;
  double acc = 0.0;
  double total = 0.0;
  for (int h : ranked_hits) total += h != 0 ? 1.0 : 0.0;
  const double n = static_cast<double>(ranked_hits.size());
  for (size_t i = 0; i < ranked_hits.size(); ++i) {
    acc += ranked_hits[i] != 0 ? 1.0 : 0.0;
    curve.cumulative.x.push_back(static_cast<double>(i + 1));
    curve.cumulative.y.push_back(acc);
    curve.baseline.x.push_back(static_cast<double>(i + 1));
    curve.baseline.y.push_back(total * static_cast<double>(i + 1) / n);
  }
  return curve;
}

BinderMatchResult binder_match(const std::vector<ScoredSequence>& predicted,
                               const std::vector<std::string>& db, double prob_threshold,
                               double identity_threshold, int threads) {
  if (db.empty()) throw DataError("binder_match: empty binder database");
  if (prob_threshold < 0.0 || prob_threshold > 1.0 || identity_threshold < 0.0 ||
      identity_threshold > 1.0)
    throw DataError("binder_match: thresholds must lie in [0,1]");

  std::vector<size_t> selected;
  for (size_t i = 0; i < predicted.size(); ++i) {
    if (predicted[i].score > prob_threshold) selected.push_back(i);
  }

  std::vector<double> best_identity(selected.size(), 0.0);
  std::vector<size_t> best_entry(selected.size(), 0);
  auto score_one = [&](size_t s) {
    const std::string& q = predicted[selected[s]].cdr3;
    double best = -1.0;
    size_t arg = 0;
    for (size_t d = 0; d < db.size(); ++d) {
      double ident = seqcore::sequence_identity(q, db[d]);
      if (ident > best) {
        best = ident;
        arg = d;
      }
    }
    best_identity[s] = best;
    best_entry[s] = arg;
  };
  if (threads <= 1 || selected.size() < 64) {
    for (size_t s = 0; s < selected.size(); ++s) score_one(s);
  } else {
    size_t n_threads = std::min<size_t>(static_cast<size_t>(threads), selected.size());
    std::vector<std::thread> pool;
    for (size_t t = 0; t < n_threads; ++t) {
      pool.emplace_back([&, t]() {
        for (size_t s = t; s < selected.size(); s += n_threads) score_one(s);
      });
    }
    for (auto& th : pool) th.join();
  }

  BinderMatchResult out;
  out.row.prob_threshold = prob_threshold;
  out.row.identity_threshold = identity_threshold;
  out.row.total = static_cast<long>(selected.size());
  out.hit_flags.assign(selected.size(), 0);
  for (size_t s = 0; s < selected.size(); ++s) {
    if (best_identity[s] >= identity_threshold) {
      out.hit_flags[s] = 1;
      ++out.row.hits;
      const auto& p = predicted[selected[s]];
      out.matches.push_back({p.id, p.cdr3, db[best_entry[s]], best_identity[s]});
    }
  }
  out.row.hit_rate_percent =
      out.row.total == 0 ? 0.0
                         : 100.0 * static_cast<double>(out.row.hits) /
                               static_cast<double>(out.row.total);
  return out;
}

std::string EvalReport::to_json() const {
  json j;
  j["metrics"] = metrics;
  if (!metric_errors.empty()) j["metric_errors"] = metric_errors;
  if (!per_fold.empty()) j["per_fold"] = per_fold;
  if (!class_names.empty()) j["class_names"] = class_names;
  if (!confusion.empty()) j["confusion_row_normalized"] = confusion;
  if (!curves.empty()) {
    json c;
    for (const auto& [name, series] : curves) {
      c[name] = {{"x", series.x}, {"y", series.y}};
    }
    j["curves"] = c;
  }
  if (!hit_table.empty()) {
    json rows = json::array();
    for (const auto& r : hit_table) {
      rows.push_back({{"prob_threshold", r.prob_threshold},
                      {"identity_threshold", r.identity_threshold},
                      {"total", r.total},
                      {"hits", r.hits},
                      {"hit_rate_percent", r.hit_rate_percent}});
    }
    j["hit_table"] = rows;
  }
  if (!metadata.empty()) j["metadata"] = metadata;
  return j.dump(2) + "\n";
}

}  // namespace abevo::eval
