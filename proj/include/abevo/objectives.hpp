#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "abevo/rng.hpp"
#include "abevo/seqcore.hpp"

namespace abevo::objectives {

using seqcore::AntibodyRecord;

constexpr int kDefaultMaxLen = 400;

// [CLS] a_1..a_m [SEP] g_1..g_n ; segment 0 on the antibody side (incl.
// CLS), segment 1 on the germline side (incl. SEP).
struct PairedEncoding {
  std::vector<int> token_ids;
  std::vector<int> segment_ids;
  int antibody_len = 0;  // m
  int germline_len = 0;  // n

  int length() const { return static_cast<int>(token_ids.size()); }
  int antibody_pos(int i) const { return 1 + i; }                     // token index of a_i
  int germline_pos(int j) const { return 2 + antibody_len + j; }      // token index of g_j
  int sep_pos() const { return 1 + antibody_len; }
};

PairedEncoding encode_pair(const AntibodyRecord& record, int max_len = kDefaultMaxLen);
PairedEncoding encode_pair(const std::string& antibody, const std::string& germline,
                           int max_len = kDefaultMaxLen);

// Recovers (antibody, germline) from an encoding; encode/decode round-trip.
std::pair<std::string, std::string> decode_pair(const PairedEncoding& enc);

enum class MaskAction { Mask, Random, Keep };

struct MaskingPlan {
  std::vector<int> selected;          // positions into token_ids, sorted
  std::vector<MaskAction> actions;    // parallel to selected
  std::vector<int> replacements;      // token written at each position
  std::vector<int> targets;           // original token at each position
};

// Selects round(ratio * maskable) non-special positions uniformly, with the
// 80/10/10 mask/replace/keep action split.
MaskingPlan mlm_plan(const PairedEncoding& enc, double ratio, Rng& rng);

// Token sequence with the plan applied.
std::vector<int> apply_plan(const PairedEncoding& enc, const MaskingPlan& plan);

struct AGPInstance {
  PairedEncoding encoding;
  int label = 1;  // 1: germline is the true ancestor
};

// Each record's germline swapped with probability p for a uniformly chosen
// other batch member's germline.
std::vector<AGPInstance> agp_batch(const std::vector<AntibodyRecord>& records, double p, Rng& rng,
                                   int max_len = kDefaultMaxLen);

struct MPPInstance {
  PairedEncoding encoding;            // antibody tokens at mutation sites masked
  std::vector<int> germline_labels;   // size n, 1 at mutated positions
  std::vector<int> masked_positions;  // token indices of the masked antibody sites
  std::vector<int> masked_targets;    // true antibody residue tokens there
};

MPPInstance mpp_build(const AntibodyRecord& record, int max_len = kDefaultMaxLen);

}  // namespace abevo::objectives
