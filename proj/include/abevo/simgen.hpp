#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "abevo/kvconfig.hpp"
#include "abevo/rng.hpp"
#include "abevo/seqcore.hpp"

namespace abevo::simgen {

using seqcore::AntibodyRecord;
using seqcore::CdrSpan;

// The six B-cell maturation stages, in evolutionary order.
extern const std::array<std::string, 6> kStageNames;
int stage_index(const std::string& name);  // throws DataError on unknown stage

struct GeneLibrary {
  std::vector<std::string> v_segments;
  std::vector<std::string> d_segments;
  std::vector<std::string> j_segments;
  uint64_t seed = 0;

  void validate() const;
};

struct LibraryConfig {
  int n_v = 8, n_d = 6, n_j = 4;
  int v_len_min = 80, v_len_max = 100;
  int d_len_min = 5, d_len_max = 15;
  int j_len_min = 10, j_len_max = 20;
  uint64_t seed = 1;
};

// Random segment pools with uniform residues and lengths in the configured
// ranges.
GeneLibrary make_library(const LibraryConfig& cfg);

struct RepertoireSpec {
  int n_profiles = 2;
  int sequences_per_profile = 100;
  double shm_rate = 0.05;
  int junction_insert_min = 0;
  int junction_insert_max = 4;
  std::array<double, 6> stage_weights = {1.0 / 6, 1.0 / 6, 1.0 / 6, 1.0 / 6, 1.0 / 6, 1.0 / 6};
  std::array<double, 6> stage_shm_multipliers = {0.2, 0.5, 1.0, 1.5, 2.0, 2.0};
  double positive_fraction = 0.5;
  std::string disease_motif;       // empty: no motif implant
  double motif_fraction = 0.0;     // fraction of positive-profile sequences carrying it
  double substitution_bias = 0.0;  // 0: uniform substitution targets
  double indel_rate = 0.0;         // opt-in; per-record single-indel probability
  uint64_t seed = 42;

  void validate() const;
  static RepertoireSpec from_config(const KvConfig& cfg);
};

LibraryConfig library_config_from_kv(const KvConfig& cfg);

struct Recombination {
  std::string germline;  // V ++ 'X'*n1 ++ D ++ 'X'*n2 ++ J
  CdrSpan cdr3;
  int v_index = 0, d_index = 0, j_index = 0;
  int v_len = 0;
};

// One V(D)J recombination event; junction insertions render as 'X'.
Recombination recombine(const GeneLibrary& lib, int insert_min, int insert_max, Rng& rng);

struct HypermutationResult {
  std::string antibody;
  std::vector<int> mutations;  // sorted germline indices, 'X' sites excluded
};

// Point substitutions at the given per-position rate. 'X' positions are
// always realized as a uniform residue and never counted as mutations.
// bias > 0 routes that probability mass of each substitution to a fixed
// per-residue target instead of a uniform alternative.
HypermutationResult hypermutate(const std::string& germline, double rate, Rng& rng,
                                double bias = 0.0);

// Preferred substitution target used when bias > 0.
char bias_target(char residue);

std::vector<AntibodyRecord> generate_repertoire(const RepertoireSpec& spec,
                                                const GeneLibrary& lib);

}  // namespace abevo::simgen
