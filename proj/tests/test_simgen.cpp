#include <doctest.h>

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "abevo/corpus.hpp"
#include "abevo/simgen.hpp"

using namespace abevo;
using namespace abevo::simgen;

#ifndef ABEVO_GOLDEN_DIR
#define ABEVO_GOLDEN_DIR "golden"
#endif

namespace {

GeneLibrary tiny_library() {
  GeneLibrary lib;
  lib.v_segments = {"QVQLVQSGAEVKKPGASVKV"};
  lib.d_segments = {"GIVGAT"};
  lib.j_segments = {"WGQGTLVTVSS"};
  lib.seed = 1;
  return lib;
}

RepertoireSpec default_spec() {
  RepertoireSpec spec;
  spec.n_profiles = 4;
  spec.sequences_per_profile = 25;
  spec.shm_rate = 0.05;
  spec.junction_insert_min = 1;
  spec.junction_insert_max = 3;
  spec.seed = 42;
  return spec;
}

}  // namespace

TEST_CASE("recombine with single segments and no insertions is deterministic concatenation") {
  auto lib = tiny_library();
  Rng rng(1);
  auto rec = recombine(lib, 0, 0, rng);
  CHECK(rec.germline == "QVQLVQSGAEVKKPGASVKV" "GIVGAT" "WGQGTLVTVSS");
  CHECK(rec.cdr3.start == 17);
  CHECK(rec.cdr3.end == 20 + 6 + 3);
}

TEST_CASE("recombine junction length renders as X runs") {
  auto lib = tiny_library();
  Rng rng(3);
  auto rec = recombine(lib, 2, 2, rng);
  int x_count = 0;
  for (char c : rec.germline) x_count += c == 'X';
  CHECK(x_count == 4);  // exactly two per junction
  CHECK(rec.germline.substr(20, 2) == "XX");
  CHECK(rec.germline.substr(28, 2) == "XX");
  CHECK(rec.cdr3.end - rec.cdr3.start == 3 + 2 + 6 + 2 + 3);
}

TEST_CASE("hypermutate rate 0 changes only X positions") {
  std::string germline = "CARXXDW";
  Rng rng(7);
  auto hm = hypermutate(germline, 0.0, rng);
  CHECK(hm.mutations.empty());
  CHECK(hm.antibody.substr(0, 3) == "CAR");
  CHECK(hm.antibody.substr(5) == "DW");
  CHECK(hm.antibody.find('X') == std::string::npos);
}

TEST_CASE("hypermutate rate 1 mutates every non-X position") {
  std::string germline = "CARXDW";
  Rng rng(7);
  auto hm = hypermutate(germline, 1.0, rng);
  CHECK(hm.mutations == std::vector<int>{0, 1, 2, 4, 5});
  for (int i : hm.mutations) CHECK(hm.antibody[static_cast<size_t>(i)] != germline[static_cast<size_t>(i)]);
}

TEST_CASE("hypermutate empirical rate concentrates around the nominal rate") {
  std::string germline(10000, 'A');
  Rng rng(13);
  auto hm = hypermutate(germline, 0.1, rng);
  double fraction = static_cast<double>(hm.mutations.size()) / 1e4;
  CHECK(fraction > 0.08);
  CHECK(fraction < 0.12);
}

TEST_CASE("hypermutate bias routes substitutions to the per-residue target") {
  std::string germline(20000, 'A');
  Rng rng(17);
  auto hm = hypermutate(germline, 0.5, rng, 0.75);
  long to_target = 0;
  for (int i : hm.mutations)
    if (hm.antibody[static_cast<size_t>(i)] == bias_target('A')) ++to_target;
  double fraction = static_cast<double>(to_target) / static_cast<double>(hm.mutations.size());
  CHECK(fraction > 0.70);
  CHECK(fraction < 0.80);
}

TEST_CASE("generate_repertoire shapes, labels and motifs") {
  auto spec = default_spec();
  spec.n_profiles = 2;
  spec.sequences_per_profile = 3;
  spec.positive_fraction = 0.5;
  auto lib = tiny_library();
  auto records = generate_repertoire(spec, lib);
  REQUIRE(records.size() == 6);
  std::map<std::string, int> sizes;
  for (const auto& r : records) sizes[r.profile_id]++;
  REQUIRE(sizes.size() == 2);
  for (const auto& [pid, n] : sizes) CHECK(n == 3);

  int positives = 0;
  for (const auto& r : records) positives += r.label == "1" && r.id.find("_S00000") != std::string::npos;
  CHECK(positives == 1);  // exactly half the profiles are positive
}

TEST_CASE("motif_fraction 1 splices the motif into every positive CDR3") {
  auto spec = default_spec();
  spec.disease_motif = "GMDVW";
  spec.motif_fraction = 1.0;
  spec.positive_fraction = 0.5;
  auto records = generate_repertoire(spec, tiny_library());
  for (const auto& r : records) {
    bool has_motif = r.cdr3_seq().find(spec.disease_motif) != std::string::npos;
    if (r.label == "1")
      CHECK(has_motif);
  }
}

TEST_CASE("motif longer than the CDR3 span is rejected") {
  auto spec = default_spec();
  spec.junction_insert_min = 0;
  spec.junction_insert_max = 0;
  spec.disease_motif = std::string(40, 'W');
  spec.motif_fraction = 1.0;
  CHECK_THROWS_AS(generate_repertoire(spec, tiny_library()), DataError);
}

TEST_CASE("stage multipliers produce strictly increasing mean mutation counts") {
  RepertoireSpec spec;
  spec.n_profiles = 1;
  spec.sequences_per_profile = 10000;
  spec.shm_rate = 0.05;
  spec.junction_insert_min = 1;
  spec.junction_insert_max = 1;
  spec.seed = 99;
  LibraryConfig lc;
  lc.n_v = 4;
  lc.seed = 5;
  auto records = generate_repertoire(spec, make_library(lc));
  std::array<double, 6> mean_mutations{};
  std::array<int, 6> counts{};
  for (const auto& r : records) {
    int s = stage_index(r.stage);
    mean_mutations[static_cast<size_t>(s)] += static_cast<double>(r.mutation_positions.size());
    counts[static_cast<size_t>(s)] += 1;
  }
  for (int s = 0; s < 6; ++s) {
    REQUIRE(counts[static_cast<size_t>(s)] > 100);
    mean_mutations[static_cast<size_t>(s)] /= counts[static_cast<size_t>(s)];
  }
  // multipliers (0.2, 0.5, 1, 1.5, 2, 2): strict increase across the first four
  CHECK(mean_mutations[0] < mean_mutations[1]);
  CHECK(mean_mutations[1] < mean_mutations[2]);
  CHECK(mean_mutations[2] < mean_mutations[3]);
}

TEST_CASE("generation is deterministic per (spec, lib, seed)") {
  auto spec = default_spec();
  LibraryConfig lc;
  lc.seed = 21;
  auto lib = make_library(lc);
  auto a = corpus::records_to_csv(generate_repertoire(spec, lib));
  auto b = corpus::records_to_csv(generate_repertoire(spec, lib));
  CHECK(a == b);
}

TEST_CASE("golden repertoire file stays stable") {
  RepertoireSpec spec;
  spec.n_profiles = 2;
  spec.sequences_per_profile = 10;
  spec.shm_rate = 0.08;
  spec.junction_insert_min = 0;
  spec.junction_insert_max = 2;
  spec.disease_motif = "WGQG";
  spec.motif_fraction = 0.5;
  spec.seed = 42;
  LibraryConfig lc;
  lc.n_v = 3;
  lc.n_d = 3;
  lc.n_j = 2;
  lc.v_len_min = 18;
  lc.v_len_max = 22;
  lc.d_len_min = 5;
  lc.d_len_max = 8;
  lc.j_len_min = 8;
  lc.j_len_max = 10;
  lc.seed = 42;
  std::string csv = corpus::records_to_csv(generate_repertoire(spec, make_library(lc)));

  std::string path = std::string(ABEVO_GOLDEN_DIR) + "/repertoire_seed42.csv";
  if (std::getenv("ABEVO_REWRITE_GOLDEN")) {
    std::ofstream out(path, std::ios::binary);
    out << csv;
  }
  std::ifstream in(path, std::ios::binary);
  REQUIRE_MESSAGE(in.good(), "golden file missing: run with ABEVO_REWRITE_GOLDEN=1");
  std::ostringstream buf;
  buf << in.rdbuf();
  CHECK(csv == buf.str());
}

TEST_CASE("ground-truth mutations are derivable for carriers too") {
  auto spec = default_spec();
  spec.disease_motif = "GMDV";
  spec.motif_fraction = 0.5;
  auto records = generate_repertoire(spec, tiny_library());
  for (const auto& r : records) {
    CHECK(seqcore::derive_mutations(r.antibody, r.germline) == r.mutation_positions);
  }
}

TEST_CASE("spec validation rejects bad inputs") {
  RepertoireSpec spec = default_spec();
  spec.shm_rate = 1.5;
  CHECK_THROWS_AS(spec.validate(), DataError);
  spec = default_spec();
  spec.stage_weights = {0.5, 0.5, 0.5, 0, 0, 0};
  CHECK_THROWS_AS(spec.validate(), DataError);
  spec = default_spec();
  spec.motif_fraction = -0.1;
  CHECK_THROWS_AS(spec.validate(), DataError);
  GeneLibrary empty;
  CHECK_THROWS_AS(empty.validate(), DataError);
}
