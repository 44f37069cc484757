#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "abevo/errors.hpp"

namespace abevo::seqcore {

// Token vocabulary: 4 special tokens followed by the 20 canonical amino
// acids plus 'X' (unknown residue, mostly seen in germline junctions).
class Alphabet {
public:
  static constexpr int kPad = 0;
  static constexpr int kMask = 1;
  static constexpr int kCls = 2;
  static constexpr int kSep = 3;
  static constexpr int kResidueBase = 4;
  static constexpr int kNumResidues = 21;
  static constexpr int kVocabSize = kResidueBase + kNumResidues;  // 25

  static const std::string& residues();  // "ACDEFGHIKLMNPQRSTVWYX"
  static bool is_residue_char(char c);
  static bool is_special_id(int id) { return id >= 0 && id < kResidueBase; }
  static bool is_residue_id(int id) { return id >= kResidueBase && id < kVocabSize; }
  static int id_of(char residue);       // throws DataError on unknown symbol
  static char char_of(int id);          // residue ids only
  static char unknown() { return 'X'; }
};

struct CdrSpan {
  int start = 0;  // half-open [start, end) into the antibody sequence
  int end = 0;
  int length() const { return end - start; }
};

// One antibody paired with its ancestor germline plus ground-truth
// annotations used by training and the downstream tasks.
struct AntibodyRecord {
  std::string id;
  std::string antibody;
  std::string germline;
  std::optional<CdrSpan> cdr1, cdr2, cdr3;
  std::vector<int> mutation_positions;  // sorted germline indices
  std::string label;                    // task payload, interpreted per task
  std::string profile_id;
  std::string stage;
  long redundancy = -1;  // optional copy count; -1 when absent

  std::string cdr3_seq() const {
    if (!cdr3) throw DataError("record " + id + " has no CDR3 span");
    return antibody.substr(static_cast<size_t>(cdr3->start), static_cast<size_t>(cdr3->length()));
  }
};

struct FastaError {
  int line = 0;
  std::string message;
};

// Parses amino-acid FASTA. Sequences are uppercased, whitespace stripped,
// order preserved. Record-level problems (empty sequence, bad symbol) are
// reported with the offending line number.
std::vector<std::pair<std::string, std::string>> parse_fasta(const std::string& text);

// Levenshtein distance with unit insert/delete/substitute costs.
int edit_distance(const std::string& s, const std::string& t);

// identity = 1 - edit_distance(query, target) / |query|, clamped at 0.
// The query (predicted) length is the denominator.
double sequence_identity(const std::string& query, const std::string& target);

struct Alignment {
  std::string a;  // gap symbol '-'
  std::string g;
  int score = 0;
};

// Needleman-Wunsch, match +1 / mismatch -1 / gap -2. Ties resolve
// diagonal, then up (gap in g), then left (gap in a).
Alignment global_align(const std::string& a, const std::string& g);

// Germline positions whose aligned antibody residue differs. Gap columns
// and unknown ('X') germline residues never count.
std::vector<int> derive_mutations(const std::string& a, const std::string& g);

}  // namespace abevo::seqcore
