#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>

#include "abevo/objectives.hpp"
#include "abevo/simgen.hpp"

using namespace abevo;
using namespace abevo::objectives;
using seqcore::Alphabet;

namespace {

seqcore::AntibodyRecord pair_record(const std::string& antibody, const std::string& germline) {
  seqcore::AntibodyRecord r;
  r.id = "t";
  r.antibody = antibody;
  r.germline = germline;
  r.mutation_positions = seqcore::derive_mutations(antibody, germline);
  return r;
}

}  // namespace

TEST_CASE("encode_pair layout and segments") {
  auto enc = encode_pair("CA", "CA");
  std::vector<int> expect_tokens = {Alphabet::kCls, Alphabet::id_of('C'), Alphabet::id_of('A'),
                                    Alphabet::kSep, Alphabet::id_of('C'), Alphabet::id_of('A')};
  CHECK(enc.token_ids == expect_tokens);
  CHECK(enc.segment_ids == std::vector<int>{0, 0, 0, 1, 1, 1});
  CHECK(enc.length() == 6);
  CHECK(enc.sep_pos() == 3);
  CHECK(enc.germline_pos(0) == 4);

  int count_sep = static_cast<int>(std::count(enc.token_ids.begin(), enc.token_ids.end(),
                                              Alphabet::kSep));
  CHECK(count_sep == 1);
}

TEST_CASE("encode_pair boundary lengths") {
  std::string a(199, 'A'), g(199, 'C');
  CHECK_NOTHROW(encode_pair(a, g, 400));  // exact fit: 199+199+2
  std::string a2(200, 'A'), g2(200, 'C');
  CHECK_THROWS_AS(encode_pair(a2, g2, 400), DataError);
}

TEST_CASE("encoding round-trips to the original pair") {
  auto enc = encode_pair("CARDW", "CAXDW");
  auto [a, g] = decode_pair(enc);
  CHECK(a == "CARDW");
  CHECK(g == "CAXDW");
}

TEST_CASE("mlm_plan ratio 0 is empty, specials never selected, deterministic") {
  auto enc = encode_pair("CARDW", "CAXDW");
  Rng rng(3);
  CHECK(mlm_plan(enc, 0.0, rng).selected.empty());

  Rng r1(9), r2(9);
  auto p1 = mlm_plan(enc, 0.5, r1);
  auto p2 = mlm_plan(enc, 0.5, r2);
  CHECK(p1.selected == p2.selected);
  CHECK(p1.replacements == p2.replacements);

  for (int trial = 0; trial < 50; ++trial) {
    Rng rng2(static_cast<uint64_t>(trial));
    auto plan = mlm_plan(enc, 1.0, rng2);
    CHECK(plan.selected.size() == 10);  // every residue position, no specials
    for (int pos : plan.selected) {
      CHECK(Alphabet::is_residue_id(enc.token_ids[static_cast<size_t>(pos)]));
    }
  }
}

TEST_CASE("mlm_plan action split approaches 80/10/10") {
  auto enc = encode_pair(std::string(20, 'A'), std::string(20, 'C'));
  long n_mask = 0, n_random = 0, n_keep = 0;
  for (int i = 0; i < 10000; ++i) {
    Rng rng(static_cast<uint64_t>(1000 + i));
    auto plan = mlm_plan(enc, 0.15, rng);
    CHECK(plan.selected.size() == 6);  // round(0.15 * 40)
    for (auto action : plan.actions) {
      if (action == MaskAction::Mask) ++n_mask;
      if (action == MaskAction::Random) ++n_random;
      if (action == MaskAction::Keep) ++n_keep;
    }
  }
  double total = static_cast<double>(n_mask + n_random + n_keep);
  CHECK(std::fabs(n_mask / total - 0.8) < 0.01);
  CHECK(std::fabs(n_random / total - 0.1) < 0.01);
  CHECK(std::fabs(n_keep / total - 0.1) < 0.01);
}

TEST_CASE("unmasking inverts masking") {
  auto enc = encode_pair("CARDWYHK", "CARDWYHK");
  Rng rng(17);
  auto plan = mlm_plan(enc, 0.5, rng);
  auto masked = apply_plan(enc, plan);
  for (size_t i = 0; i < plan.selected.size(); ++i)
    masked[static_cast<size_t>(plan.selected[i])] = plan.targets[i];
  CHECK(masked == enc.token_ids);
}

TEST_CASE("agp_batch swap semantics") {
  std::vector<seqcore::AntibodyRecord> batch = {pair_record("CARD", "CARD"),
                                                pair_record("WYVV", "WYVV")};
  Rng rng(1);
  auto all_pos = agp_batch(batch, 0.0, rng);
  for (const auto& inst : all_pos) CHECK(inst.label == 1);
  // positive instances are byte-identical to encode_pair output
  CHECK(all_pos[0].encoding.token_ids == encode_pair(batch[0]).token_ids);

  Rng rng2(2);
  auto all_neg = agp_batch(batch, 1.0, rng2);
  CHECK(all_neg[0].label == 0);
  CHECK(all_neg[1].label == 0);
  auto [a0, g0] = decode_pair(all_neg[0].encoding);
  auto [a1, g1] = decode_pair(all_neg[1].encoding);
  CHECK(a0 == "CARD");
  CHECK(g0 == "WYVV");  // germlines exchanged
  CHECK(a1 == "WYVV");
  CHECK(g1 == "CARD");

  std::vector<seqcore::AntibodyRecord> singleton = {pair_record("CARD", "CARD")};
  Rng rng3(3);
  CHECK_THROWS_AS(agp_batch(singleton, 0.5, rng3), DataError);
}

TEST_CASE("agp_batch negative fraction concentrates near p") {
  std::vector<seqcore::AntibodyRecord> batch;
  for (int i = 0; i < 10; ++i) batch.push_back(pair_record("CARDWY", "CARDWY"));
  long negatives = 0, total = 0;
  for (int i = 0; i < 1000; ++i) {
    Rng rng(static_cast<uint64_t>(5000 + i));
    for (const auto& inst : agp_batch(batch, 0.3, rng)) {
      negatives += inst.label == 0;
      ++total;
    }
  }
  double fraction = static_cast<double>(negatives) / static_cast<double>(total);
  CHECK(fraction > 0.27);
  CHECK(fraction < 0.33);
}

TEST_CASE("mpp_build marks mutations and masks the antibody side") {
  auto none = mpp_build(pair_record("CARD", "CARD"));
  CHECK(none.masked_positions.empty());
  CHECK(std::count(none.germline_labels.begin(), none.germline_labels.end(), 1) == 0);

  auto one = mpp_build(pair_record("CARW", "CARD"));
  CHECK(one.germline_labels == std::vector<int>{0, 0, 0, 1});
  REQUIRE(one.masked_positions.size() == 1);
  CHECK(one.masked_positions[0] == one.encoding.antibody_pos(3));
  CHECK(one.encoding.token_ids[static_cast<size_t>(one.masked_positions[0])] == Alphabet::kMask);
  CHECK(one.masked_targets[0] == Alphabet::id_of('W'));
}

TEST_CASE("mpp instances agree with simulator ground truth and are bijective") {
  simgen::LibraryConfig lc;
  lc.n_v = 2;
  lc.v_len_min = 15;
  lc.v_len_max = 20;
  lc.seed = 4;
  auto lib = simgen::make_library(lc);
  simgen::RepertoireSpec spec;
  spec.n_profiles = 2;
  spec.sequences_per_profile = 40;
  spec.shm_rate = 0.15;
  spec.junction_insert_min = 0;
  spec.junction_insert_max = 2;
  spec.seed = 10;
  for (const auto& record : simgen::generate_repertoire(spec, lib)) {
    auto inst = mpp_build(record);
    // labels equal ground truth exactly
    std::vector<int> expect(record.germline.size(), 0);
    for (int j : record.mutation_positions) expect[static_cast<size_t>(j)] = 1;
    CHECK(inst.germline_labels == expect);
    // bijection between masked antibody tokens and label-1 germline indices
    CHECK(inst.masked_positions.size() == record.mutation_positions.size());
    for (size_t k = 0; k < inst.masked_positions.size(); ++k) {
      int antibody_index = inst.masked_positions[k] - 1;  // CLS offset
      CHECK(antibody_index == record.mutation_positions[k]);
      CHECK(inst.encoding.token_ids[static_cast<size_t>(inst.masked_positions[k])] ==
            Alphabet::kMask);
      CHECK(inst.masked_targets[k] ==
            Alphabet::id_of(record.antibody[static_cast<size_t>(antibody_index)]));
    }
  }
}
