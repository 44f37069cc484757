#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "abevo/seqcore.hpp"

namespace abevo::corpus {

using seqcore::AntibodyRecord;

enum class ChunkRole { Train, Validation };

struct CorpusChunk {
  int index = 0;
  std::vector<AntibodyRecord> records;
  ChunkRole role = ChunkRole::Train;
};

// --- file formats -----------------------------------------------------

// Corpus CSV schema (header required, all fields quoted):
//   id, antibody, germline, cdr1_start, cdr1_end, cdr2_start, cdr2_end,
//   cdr3_start, cdr3_end, profile_id, stage, label [, redundancy]
// Span columns are empty when the span is absent.
extern const std::vector<std::string> kCsvHeader;

std::string records_to_csv(const std::vector<AntibodyRecord>& records);
std::vector<AntibodyRecord> records_from_csv(const std::string& text);
void write_records_csv(const std::string& path, const std::vector<AntibodyRecord>& records);
std::vector<AntibodyRecord> read_records_csv(const std::string& path);

// JSONL chunk format: one object per line mirroring the CSV fields plus
// "mutations" (sorted germline index array).
std::string chunk_to_jsonl(const CorpusChunk& chunk);
CorpusChunk chunk_from_jsonl(const std::string& text, int index, ChunkRole role);
void write_chunk_jsonl(const std::string& path, const CorpusChunk& chunk);
CorpusChunk read_chunk_jsonl(const std::string& path, int index, ChunkRole role);

// --- operations -------------------------------------------------------

// Keeps the first occurrence of each exact antibody string; stable order.
std::vector<AntibodyRecord> dedup(const std::vector<AntibodyRecord>& records);

// Groups records by exact CDR3 string; within each group, greedy
// representative selection in sorted-by-id order drops any record whose
// whole-sequence identity to a retained representative is >= threshold.
// Retained records come back in the original input order.
std::vector<AntibodyRecord> cluster_filter(const std::vector<AntibodyRecord>& records,
                                           double identity_threshold = 0.7,
                                           int threads = 1);

struct ChunkingResult {
  std::vector<CorpusChunk> chunks;
  bool train_empty_warning = false;
};

// Fisher-Yates shuffle with the given seed, then fixed-size chunks; the
// last chunk is the validation set.
ChunkingResult shuffle_and_chunk(std::vector<AntibodyRecord> records, int chunk_size,
                                 uint64_t seed);

}  // namespace abevo::corpus
