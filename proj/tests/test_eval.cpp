#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "abevo/metrics.hpp"
#include "abevo/rng.hpp"
#include "oracle_helpers.hpp"

using namespace abevo;
using namespace abevo::eval;

namespace {

AntibodyRecord grouped_record(const std::string& id, const std::string& antibody,
                              const std::string& profile) {
  AntibodyRecord r;
  r.id = id;
  r.antibody = antibody;
  r.germline = antibody;
  r.profile_id = profile;
  return r;
}

}  // namespace

TEST_CASE("auc trivial and derived examples") {
  CHECK(auc({0.9, 0.1}, {1, 0}) == 1.0);
  CHECK(auc({0.9, 0.8, 0.3}, {1, 0, 1}) == 0.5);
  CHECK_THROWS_AS(auc({0.5, 0.6}, {1, 1}), NumericError);
  CHECK_THROWS_AS(auc({}, {}), DataError);
}

TEST_CASE("auc equals brute-force pair counting exactly on random sets") {
  Rng rng(404);
  for (int trial = 0; trial < 100; ++trial) {
    size_t n = 2 + rng.below(49);
    std::vector<double> scores;
    std::vector<int> labels;
    bool has_pos = false, has_neg = false;
    for (size_t i = 0; i < n; ++i) {
      // quantized scores force plenty of ties
      scores.push_back(static_cast<double>(rng.below(8)) / 8.0);
      labels.push_back(static_cast<int>(rng.below(2)));
      has_pos = has_pos || labels.back() == 1;
      has_neg = has_neg || labels.back() == 0;
    }
    if (!has_pos) labels[0] = 1;
    if (!has_neg) labels[labels.size() - 1] = 0;
    CHECK(auc(scores, labels) == oracle::brute_force_auc(scores, labels));
  }
}

TEST_CASE("accuracy, f1 and mcc against direct formula evaluation") {
  std::vector<int> preds = {1, 0, 1, 1};
  std::vector<int> labels = {1, 0, 0, 1};
  CHECK(accuracy(preds, labels) == 0.75);
  CHECK(mcc_binary(preds, labels) == doctest::Approx(2.0 / std::sqrt(12.0)).epsilon(1e-12));
  CHECK(mcc_binary(preds, labels) == doctest::Approx(oracle::brute_mcc(preds, labels)).epsilon(1e-12));
  CHECK(f1_binary(preds, labels) == doctest::Approx(oracle::brute_f1(preds, labels)).epsilon(1e-12));

  // perfect predictions
  CHECK(f1_binary(labels, labels) == 1.0);
  CHECK(mcc_binary(labels, labels) == 1.0);
  CHECK(accuracy(labels, labels) == 1.0);

  CHECK_THROWS_AS(mcc_binary({0, 0}, {0, 0}), NumericError);
}

TEST_CASE("random binary metrics match the longhand formulas") {
  Rng rng(92);
  for (int trial = 0; trial < 60; ++trial) {
    size_t n = 8 + rng.below(60);
    std::vector<int> preds, labels;
    for (size_t i = 0; i < n; ++i) {
      preds.push_back(static_cast<int>(rng.below(2)));
      labels.push_back(static_cast<int>(rng.below(2)));
    }
    auto counts = oracle::brute_counts(preds, labels);
    if ((counts.tp + counts.fp) * (counts.tp + counts.fn) * (counts.tn + counts.fp) *
            (counts.tn + counts.fn) ==
        0)
      continue;
    CHECK(mcc_binary(preds, labels) ==
          doctest::Approx(oracle::brute_mcc(preds, labels)).epsilon(1e-12));
    if (counts.tp > 0)
      CHECK(f1_binary(preds, labels) ==
            doctest::Approx(oracle::brute_f1(preds, labels)).epsilon(1e-12));
  }
}

TEST_CASE("weighted f1 of a perfect classifier is 1 for any distribution") {
  Rng rng(93);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<int> labels;
    for (int i = 0; i < 40; ++i) labels.push_back(static_cast<int>(rng.below(5)));
    CHECK(f1_weighted(labels, labels, 5) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("multiclass mcc agrees with binary mcc on two classes") {
  Rng rng(94);
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<int> preds, labels;
    for (int i = 0; i < 30; ++i) {
      preds.push_back(static_cast<int>(rng.below(2)));
      labels.push_back(static_cast<int>(rng.below(2)));
    }
    try {
      double binary = mcc_binary(preds, labels);
      CHECK(mcc_multiclass(preds, labels, 2) == doctest::Approx(binary).epsilon(1e-12));
    } catch (const NumericError&) {
    }
  }
}

TEST_CASE("confusion matrix rows are normalized") {
  auto m = confusion_row_normalized({0, 1, 1, 2, 2, 2}, {0, 1, 2, 2, 2, 1}, 3);
  for (const auto& row : m) {
    double sum = 0;
    for (double v : row) sum += v;
    CHECK(std::fabs(sum - 1.0) < 1e-9);
  }
  CHECK(m[0][0] == 1.0);
}

TEST_CASE("kfold by profile: 10 profiles give 1 validation profile per fold") {
  std::vector<AntibodyRecord> records;
  for (int p = 0; p < 10; ++p)
    for (int s = 0; s < 7; ++s)
      records.push_back(
          grouped_record("r" + std::to_string(p * 7 + s), "SEQAA", "P" + std::to_string(p)));
  auto folds = kfold(records, 10, Grouping::ByProfile, 5);
  REQUIRE(folds.size() == 10);
  std::set<std::string> seen;
  for (const auto& fold : folds) {
    std::set<std::string> valid_profiles;
    for (size_t i : fold.valid) valid_profiles.insert(records[i].profile_id);
    CHECK(valid_profiles.size() == 1);
    CHECK(fold.valid.size() == 7);
    seen.insert(*valid_profiles.begin());
    // no straddling
    for (size_t i : fold.train) CHECK(valid_profiles.count(records[i].profile_id) == 0);
  }
  CHECK(seen.size() == 10);
}

TEST_CASE("kfold by sequence partitions records disjointly") {
  std::vector<AntibodyRecord> records;
  Rng rng(6);
  for (int i = 0; i < 100; ++i) {
    std::string seq;
    for (int k = 0; k < 9; ++k)
      seq.push_back("ACDEFGHIKLMNPQRSTVWY"[rng.below(20)]);
    records.push_back(grouped_record("r" + std::to_string(i), seq, "P0"));
  }
  auto folds = kfold(records, 10, Grouping::BySequence, 1);
  std::set<size_t> all;
  for (const auto& fold : folds) {
    CHECK(fold.valid.size() == 10);
    for (size_t i : fold.valid) CHECK(all.insert(i).second);
  }
  CHECK(all.size() == 100);

  CHECK_THROWS_AS(kfold(records, 200, Grouping::BySequence, 1), DataError);
}

TEST_CASE("trimmed_mean examples and properties") {
  CHECK(trimmed_mean({1, 2, 3}, 0.0) == doctest::Approx(2.0));
  CHECK(trimmed_mean({0, 5, 5, 5, 100}, 0.2) == doctest::Approx(5.0));
  CHECK(trimmed_mean({7, 7, 7, 7}, 0.25) == doctest::Approx(7.0));
  CHECK_THROWS_AS(trimmed_mean({}, 0.1), DataError);
  CHECK_THROWS_AS(trimmed_mean({1.0, 2.0}, 0.5), DataError);

  // permutation invariance and monotonicity in an untrimmed value
  Rng rng(8);
  std::vector<double> values = {3, 9, 1, 7, 5, 2, 8};
  double base = trimmed_mean(values, 0.15);
  std::vector<double> shuffled = values;
  rng.shuffle(shuffled);
  CHECK(trimmed_mean(shuffled, 0.15) == doctest::Approx(base).epsilon(1e-15));
  std::vector<double> bumped = values;
  bumped[4] += 0.5;  // middle value stays untrimmed
  CHECK(trimmed_mean(bumped, 0.15) > base);
}

TEST_CASE("cumulative_match_curve values and baseline") {
  auto curve = cumulative_match_curve({1, 1, 0, 0});
  CHECK(curve.cumulative.y == std::vector<double>{1, 2, 2, 2});
  CHECK(curve.baseline.y[3] == doctest::Approx(2.0));
  CHECK(curve.baseline.y[1] == doctest::Approx(1.0));

  auto zeros = cumulative_match_curve({0, 0, 0});
  CHECK(zeros.cumulative.y == std::vector<double>{0, 0, 0});

  // mean curve over random permutations approaches the diagonal baseline
  Rng rng(12);
  std::vector<int> hits(40, 0);
  for (int i = 0; i < 10; ++i) hits[static_cast<size_t>(i)] = 1;
  std::vector<double> mean_y(40, 0.0);
  const int trials = 2000;
  for (int t = 0; t < trials; ++t) {
    rng.shuffle(hits);
    auto c = cumulative_match_curve(hits);
    for (size_t i = 0; i < 40; ++i) mean_y[i] += c.cumulative.y[i] / trials;
  }
  auto reference = cumulative_match_curve(hits).baseline;
  for (size_t i = 0; i < 40; ++i) CHECK(std::fabs(mean_y[i] - reference.y[i]) < 0.35);
}

TEST_CASE("binder_match identities, thresholds and hit rows") {
  std::vector<ScoredSequence> predicted = {
      {"s1", "ARDLGGYFDY", 0.95},   // exact db entry
      {"s2", "ARDLGGVFDY", 0.9},    // identity 0.9
      {"s3", "WWWWWWWWWW", 0.8},    // no match
      {"s4", "ARDLGGYFDY", 0.2},    // below the probability threshold
  };
  std::vector<std::string> db = {"ARDLGGYFDY", "AREGIVGATTGFDY"};

  auto strict = binder_match(predicted, db, 0.5, 0.85);
  CHECK(strict.row.total == 3);
  CHECK(strict.row.hits == 2);
  CHECK(strict.row.hit_rate_percent == doctest::Approx(100.0 * 2 / 3));
  REQUIRE(strict.matches.size() == 2);
  CHECK(strict.matches[0].identity == 1.0);
  CHECK(strict.matches[1].identity == doctest::Approx(0.9));
  CHECK(strict.matches[1].db_entry == "ARDLGGYFDY");

  auto at90 = binder_match(predicted, db, 0.5, 0.90);
  CHECK(at90.row.hits == 2);  // 0.900 >= 0.90 still a hit
  auto at95 = binder_match(predicted, db, 0.5, 0.95);
  CHECK(at95.row.hits == 1);

  CHECK_THROWS_AS(binder_match(predicted, {}, 0.5, 0.85), DataError);
}

TEST_CASE("binder_match with planted matches finds exactly the planted count") {
  Rng rng(3);
  std::vector<std::string> db = {"CARDGGYFDYW"};
  std::vector<ScoredSequence> predicted;
  int planted = 0;
  for (int i = 0; i < 1000; ++i) {
    ScoredSequence s;
    s.id = "p" + std::to_string(i);
    if (i % 200 == 0) {
      s.cdr3 = db[0];
      s.score = 0.9;
      ++planted;
    } else {
      // random 11-mers differ from the db entry in most positions
      for (int k = 0; k < 11; ++k)
        s.cdr3.push_back("ACDEFGHIKLMNPQRSTVWY"[rng.below(20)]);
      s.score = 0.6 + 0.3 * rng.uniform();
    }
    predicted.push_back(s);
  }
  auto result = binder_match(predicted, db, 0.5, 0.85, 4);
  CHECK(result.row.total == 1000);
  CHECK(result.row.hits == planted);
}

TEST_CASE("eval report serializes deterministically") {
  EvalReport r;
  r.metrics["auc"] = 0.875;
  r.metric_errors["mcc"] = "undefined";
  r.hit_table.push_back({0.5, 0.85, 13253, 66, 0.498});
  r.curves["c"] = {{1, 2}, {3, 4}};
  auto a = r.to_json();
  auto b = r.to_json();
  CHECK(a == b);
  CHECK(a.find("13253") != std::string::npos);
}
