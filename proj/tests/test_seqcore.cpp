#include <doctest.h>

#include <cmath>
#include <set>

#include "abevo/rng.hpp"
#include "abevo/seqcore.hpp"
#include "abevo/simgen.hpp"
#include "oracle_helpers.hpp"

using namespace abevo;
using namespace abevo::seqcore;

namespace {

std::string random_sequence(Rng& rng, size_t min_len, size_t max_len) {
  static const std::string residues = "ACDEFGHIKLMNPQRSTVWY";
  size_t len = min_len + rng.below(max_len - min_len + 1);
  std::string s;
  for (size_t i = 0; i < len; ++i) s.push_back(residues[rng.below(residues.size())]);
  return s;
}

// the 11 published predicted/existing binder pairs and their identities
const struct {
  const char* predicted;
  const char* existing;
  double identity;
} kBinderTable[] = {
    {"AREGIVGATTGFDY", "AREGIVGATTGFDY", 1.000},
    {"ARDLGGYFDY", "ARDLGGYFDY", 1.000},
    {"AKDQDDAYYYYYYMDV", "AKDQDDGYYYYYYMDV", 0.938},
    {"ASYYYDSSGYHYGMDV", "ASYYYDSSGYYYGMDV", 0.938},
    {"ARRGLGLYYYGMDV", "ARRGDGLYYYGMDV", 0.929},
    {"ARAFRGSYYYGMDV", "ARATRGSYYYGMDV", 0.929},
    {"ARLSGSSWYFDY", "ARLSGSSWDFDY", 0.917},
    {"ARLGSSSWYFDY", "ARVGSSSWYFDY", 0.917},
    {"ARGWLRGYFDL", "ARRGWLRGYFDL", 0.909},
    {"ARDWGELYFDY", "ARDWGEYYFDY", 0.909},
    {"ARDLGGVFDY", "ARDLGGYFDY", 0.900},
};

}  // namespace

TEST_CASE("alphabet ids form a bijection with fixed specials") {
  CHECK(Alphabet::kVocabSize == 25);
  CHECK(Alphabet::residues().size() == 21);
  std::set<int> ids = {Alphabet::kPad, Alphabet::kMask, Alphabet::kCls, Alphabet::kSep};
  REQUIRE(ids.size() == 4);
  for (char c : Alphabet::residues()) {
    int id = Alphabet::id_of(c);
    CHECK(Alphabet::is_residue_id(id));
    CHECK(Alphabet::char_of(id) == c);
    CHECK(ids.insert(id).second);
  }
  CHECK(ids.size() == 25);
  CHECK_THROWS_AS(Alphabet::id_of('1'), DataError);
  CHECK_THROWS_AS(Alphabet::id_of('B'), DataError);
}

TEST_CASE("parse_fasta basics") {
  auto single = parse_fasta(">a\nCARD");
  REQUIRE(single.size() == 1);
  CHECK(single[0].first == "a");
  CHECK(single[0].second == "CARD");

  auto multi = parse_fasta(">a\nCA\nRD\n>b\nWY");
  REQUIRE(multi.size() == 2);
  CHECK(multi[0] == std::pair<std::string, std::string>{"a", "CARD"});
  CHECK(multi[1] == std::pair<std::string, std::string>{"b", "WY"});

  CHECK(parse_fasta(">a\ncard")[0].second == "CARD");  // uppercased

  CHECK_THROWS_WITH_AS(parse_fasta(">a\nCA1D"), doctest::Contains("line 2"), DataError);
  CHECK_THROWS_AS(parse_fasta(">a\n>b\nWY"), DataError);  // empty sequence
  CHECK_THROWS_AS(parse_fasta("CARD"), DataError);        // data before header
}

TEST_CASE("edit_distance published pairs and basics") {
  CHECK(edit_distance("AKDQDDAYYYYYYMDV", "AKDQDDGYYYYYYMDV") == 1);
  CHECK(edit_distance("AB", "AB") == 0);
  CHECK(edit_distance("ARGWLRGYFDL", "ARRGWLRGYFDL") == 1);
  CHECK(edit_distance("", "CARD") == 4);
  CHECK(edit_distance("KITTEN", "SITTING") == 3);
}

TEST_CASE("edit_distance symmetry and triangle inequality on random triples") {
  Rng rng(101);
  for (int trial = 0; trial < 10000; ++trial) {
    std::string a = random_sequence(rng, 0, 12);
    std::string b = random_sequence(rng, 0, 12);
    std::string c = random_sequence(rng, 0, 12);
    int ab = edit_distance(a, b);
    int ba = edit_distance(b, a);
    int bc = edit_distance(b, c);
    int ac = edit_distance(a, c);
    CHECK(ab == ba);
    CHECK(ac <= ab + bc);
    CHECK((ab == 0) == (a == b));
  }
}

TEST_CASE("sequence_identity reproduces all 11 published values to 3 decimals") {
  for (const auto& row : kBinderTable) {
    double ident = sequence_identity(row.predicted, row.existing);
    CHECK(std::fabs(std::round(ident * 1000.0) / 1000.0 - row.identity) < 1e-12);
  }
}

TEST_CASE("sequence_identity properties") {
  Rng rng(77);
  for (int i = 0; i < 200; ++i) {
    std::string q = random_sequence(rng, 1, 15);
    CHECK(sequence_identity(q, q) == 1.0);
  }
  CHECK(sequence_identity("AB", "ABCDEFGHIJ") == 0.0);  // clamped
  CHECK_THROWS_AS(sequence_identity("", "A"), DataError);
}

TEST_CASE("global_align agrees with exhaustive search and stated examples") {
  auto same = global_align("CARD", "CARD");
  CHECK(same.a == "CARD");
  CHECK(same.g == "CARD");
  CHECK(same.score == 4);

  auto gap = global_align("CAD", "CARD");
  CHECK(gap.a == "CA-D");
  CHECK(gap.g == "CARD");
  CHECK(gap.score == oracle::brute_force_align_score("CAD", "CARD"));

  auto tiny = global_align("W", "Y");
  CHECK(tiny.a == "W");
  CHECK(tiny.g == "Y");
  CHECK(tiny.score == -1);

  Rng rng(5);
  for (int trial = 0; trial < 300; ++trial) {
    std::string a = random_sequence(rng, 1, 4);
    std::string g = random_sequence(rng, 1, 3);
    auto aln = global_align(a, g);
    CHECK(aln.score == oracle::brute_force_align_score(a, g));
    // aligned strings reproduce the inputs when gaps are removed
    std::string ra, rg;
    for (char c : aln.a)
      if (c != '-') ra.push_back(c);
    for (char c : aln.g)
      if (c != '-') rg.push_back(c);
    CHECK(ra == a);
    CHECK(rg == g);
    CHECK(aln.a.size() == aln.g.size());
  }
}

TEST_CASE("derive_mutations basic rules") {
  CHECK(derive_mutations("CARD", "CARD").empty());
  CHECK(derive_mutations("CARW", "CARD") == std::vector<int>{3});
  CHECK(derive_mutations("CAYYD", "CAXXD").empty());       // unknown residues excluded
  CHECK(derive_mutations("CARDW", "CARD").empty());        // pure insertion
}

TEST_CASE("derive_mutations recovers simulator ground truth for indel-free records") {
  simgen::LibraryConfig lc;
  lc.n_v = 3;
  lc.v_len_min = 20;
  lc.v_len_max = 30;
  lc.seed = 9;
  auto lib = simgen::make_library(lc);
  Rng rng(31);
  for (int trial = 0; trial < 500; ++trial) {
    auto vdj = simgen::recombine(lib, 0, 3, rng);
    double rate = 0.02 + 0.28 * rng.uniform();
    auto hm = simgen::hypermutate(vdj.germline, rate, rng);
    CHECK(derive_mutations(hm.antibody, vdj.germline) == hm.mutations);
  }
}
