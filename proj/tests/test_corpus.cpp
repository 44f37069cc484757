#include <doctest.h>

#include <algorithm>
#include <set>

#include "abevo/corpus.hpp"
#include "abevo/rng.hpp"
#include "oracle_helpers.hpp"

using namespace abevo;
using namespace abevo::corpus;

namespace {

AntibodyRecord make_record(const std::string& id, const std::string& antibody, int cdr3_start,
                           int cdr3_end) {
  AntibodyRecord r;
  r.id = id;
  r.antibody = antibody;
  r.germline = antibody;
  r.cdr3 = seqcore::CdrSpan{cdr3_start, cdr3_end};
  r.label = "0";
  return r;
}

std::string random_seq(Rng& rng, size_t len) {
  static const std::string residues = "ACDEFGHIKLMNPQRSTVWY";
  std::string s;
  for (size_t i = 0; i < len; ++i) s.push_back(residues[rng.below(residues.size())]);
  return s;
}

}  // namespace

TEST_CASE("csv round trip preserves every field") {
  std::vector<AntibodyRecord> records;
  AntibodyRecord r;
  r.id = "weird,id \"quoted\"";
  r.antibody = "CARDW";
  r.germline = "CARDX";
  r.cdr1 = seqcore::CdrSpan{0, 2};
  r.cdr3 = seqcore::CdrSpan{2, 5};
  r.profile_id = "P1";
  r.stage = "mature";
  r.label = "1";
  records.push_back(r);
  records.push_back(make_record("plain", "WYVV", 1, 3));

  auto parsed = records_from_csv(records_to_csv(records));
  REQUIRE(parsed.size() == 2);
  CHECK(parsed[0].id == records[0].id);
  CHECK(parsed[0].antibody == "CARDW");
  CHECK(parsed[0].germline == "CARDX");
  CHECK(parsed[0].cdr1->start == 0);
  CHECK(parsed[0].cdr1->end == 2);
  CHECK(!parsed[0].cdr2.has_value());
  CHECK(parsed[0].cdr3->end == 5);
  CHECK(parsed[0].stage == "mature");
  CHECK(parsed[0].label == "1");
  CHECK(parsed[1].id == "plain");
}

TEST_CASE("csv rejects malformed inputs") {
  CHECK_THROWS_AS(records_from_csv(""), DataError);
  CHECK_THROWS_AS(records_from_csv("id,nope\n"), DataError);
  auto base = records_to_csv({make_record("a", "CARD", 0, 2)});
  // invalid residue
  std::string bad = base;
  bad.replace(bad.find("CARD"), 4, "CA1D");
  CHECK_THROWS_AS(records_from_csv(bad), DataError);
}

TEST_CASE("jsonl chunk round trip keeps mutations") {
  CorpusChunk chunk;
  chunk.index = 3;
  chunk.role = ChunkRole::Validation;
  auto r = make_record("x", "CARDW", 1, 4);
  r.mutation_positions = {1, 3};
  chunk.records.push_back(r);
  auto back = chunk_from_jsonl(chunk_to_jsonl(chunk), 3, ChunkRole::Validation);
  REQUIRE(back.records.size() == 1);
  CHECK(back.records[0].mutation_positions == std::vector<int>{1, 3});
  CHECK(back.records[0].cdr3->start == 1);
}

TEST_CASE("dedup keeps first occurrences in stable order") {
  auto a = make_record("a", "CARD", 0, 2);
  auto a2 = make_record("a2", "CARD", 0, 2);
  auto b = make_record("b", "WYVV", 0, 2);
  auto out = dedup({a, a2, b});
  REQUIRE(out.size() == 2);
  CHECK(out[0].id == "a");
  CHECK(out[1].id == "b");
  CHECK(dedup({}).empty());
}

TEST_CASE("dedup matches a hash-set oracle on planted duplicates and is idempotent") {
  Rng rng(11);
  std::vector<AntibodyRecord> records;
  for (int i = 0; i < 10000; ++i) {
    std::string seq;
    if (i > 0 && rng.uniform() < 0.1) {
      seq = records[rng.below(records.size())].antibody;  // planted duplicate
    } else {
      seq = random_seq(rng, 12);
    }
    records.push_back(make_record("r" + std::to_string(i), seq, 2, 8));
  }
  std::set<std::string> distinct;
  for (const auto& r : records) distinct.insert(r.antibody);
  auto once = dedup(records);
  CHECK(once.size() == distinct.size());
  auto twice = dedup(once);
  REQUIRE(twice.size() == once.size());
  for (size_t i = 0; i < once.size(); ++i) CHECK(twice[i].id == once[i].id);
}

TEST_CASE("cluster_filter basics") {
  auto a = make_record("a", "CCAARRDD", 2, 6);
  auto b = make_record("b", "CCAARRDD", 2, 6);
  auto kept = cluster_filter({a, b}, 0.7);
  CHECK(kept.size() == 1);

  // same CDR3 but whole-sequence identity 0.5: both retained
  auto c = make_record("c", "AAAAWWWW", 0, 4);
  auto d = make_record("d", "AAAAYYYY", 0, 4);
  c.antibody = "AAAAWWWW";
  d.antibody = "AAAAYYYY";
  c.germline = c.antibody;
  d.germline = d.antibody;
  auto kept2 = cluster_filter({c, d}, 0.7);
  CHECK(kept2.size() == 2);

  auto no_cdr3 = make_record("e", "CARD", 0, 2);
  no_cdr3.cdr3.reset();
  CHECK_THROWS_AS(cluster_filter({no_cdr3}, 0.7), DataError);
}

TEST_CASE("cluster_filter equals the quadratic greedy reference on random corpora") {
  Rng rng(303);
  for (int corpus_idx = 0; corpus_idx < 30; ++corpus_idx) {
    size_t n = 20 + rng.below(180);
    std::vector<AntibodyRecord> records;
    std::vector<std::array<std::string, 3>> rows;
    std::vector<std::string> cdr3_pool;
    for (int k = 0; k < 6; ++k) cdr3_pool.push_back(random_seq(rng, 6));
    for (size_t i = 0; i < n; ++i) {
      std::string cdr3 = cdr3_pool[rng.below(cdr3_pool.size())];
      std::string prefix = random_seq(rng, 4 + rng.below(5));
      // mutate a base stem so identities spread around the threshold
      std::string stem = random_seq(rng, 3);
      std::string antibody = prefix + cdr3 + stem;
      auto r = make_record("r" + std::to_string(100 + i), antibody,
                           static_cast<int>(prefix.size()),
                           static_cast<int>(prefix.size() + cdr3.size()));
      records.push_back(r);
      rows.push_back({r.id, r.antibody, cdr3});
    }
    auto kept = cluster_filter(records, 0.7, 2);
    auto expected = oracle::ref_cluster_filter(rows, 0.7);
    std::set<std::string> got;
    for (const auto& r : kept) got.insert(r.id);
    CHECK(got == expected);
    // retained records preserve input order
    for (size_t i = 1; i < kept.size(); ++i) {
      auto pos_prev = std::find_if(records.begin(), records.end(),
                                   [&](const auto& r) { return r.id == kept[i - 1].id; });
      auto pos_cur = std::find_if(records.begin(), records.end(),
                                  [&](const auto& r) { return r.id == kept[i].id; });
      CHECK(pos_prev < pos_cur);
    }
  }
}

TEST_CASE("shuffle_and_chunk partitions the input with the last chunk as validation") {
  std::vector<AntibodyRecord> records;
  Rng rng(55);
  for (int i = 0; i < 10; ++i)
    records.push_back(make_record("r" + std::to_string(i), random_seq(rng, 8), 0, 2));
  auto result = shuffle_and_chunk(records, 4, 7);
  REQUIRE(result.chunks.size() == 3);
  CHECK(result.chunks[0].records.size() == 4);
  CHECK(result.chunks[1].records.size() == 4);
  CHECK(result.chunks[2].records.size() == 2);
  CHECK(result.chunks[0].role == ChunkRole::Train);
  CHECK(result.chunks[2].role == ChunkRole::Validation);
  CHECK(!result.train_empty_warning);

  // concatenated chunks are a permutation of the input
  std::multiset<std::string> in, out;
  for (const auto& r : records) in.insert(r.id);
  for (const auto& c : result.chunks)
    for (const auto& r : c.records) out.insert(r.id);
  CHECK(in == out);
}

TEST_CASE("shuffle_and_chunk degenerate single chunk warns and determinism holds") {
  std::vector<AntibodyRecord> records;
  for (int i = 0; i < 5; ++i)
    records.push_back(make_record("r" + std::to_string(i), "CARDW", 0, 2));
  auto single = shuffle_and_chunk(records, 10, 7);
  REQUIRE(single.chunks.size() == 1);
  CHECK(single.chunks[0].role == ChunkRole::Validation);
  CHECK(single.train_empty_warning);

  auto a = shuffle_and_chunk(records, 2, 123);
  auto b = shuffle_and_chunk(records, 2, 123);
  REQUIRE(a.chunks.size() == b.chunks.size());
  for (size_t c = 0; c < a.chunks.size(); ++c) {
    REQUIRE(a.chunks[c].records.size() == b.chunks[c].records.size());
    for (size_t i = 0; i < a.chunks[c].records.size(); ++i)
      CHECK(a.chunks[c].records[i].id == b.chunks[c].records[i].id);
  }

  CHECK_THROWS_AS(shuffle_and_chunk({}, 4, 7), DataError);
  CHECK_THROWS_AS(shuffle_and_chunk(records, 0, 7), DataError);
}
