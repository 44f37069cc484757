#include "abevo/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <thread>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "abevo/csvio.hpp"
#include "abevo/rng.hpp"

namespace abevo::corpus {

using nlohmann::json;

const std::vector<std::string> kCsvHeader = {
    "id",         "antibody",   "germline",   "cdr1_start", "cdr1_end", "cdr2_start",
    "cdr2_end",   "cdr3_start", "cdr3_end",   "profile_id", "stage",    "label"};

namespace {

std::string span_field(const std::optional<seqcore::CdrSpan>& span, bool start) {
  if (!span) return "";
  return std::to_string(start ? span->start : span->end);
}

std::optional<seqcore::CdrSpan> parse_span(const std::string& s, const std::string& e,
                                           const std::string& id) {
  if (s.empty() != e.empty())
    throw DataError("record " + id + ": CDR span must have both endpoints or neither");
  if (s.empty()) return std::nullopt;
  try {
    seqcore::CdrSpan span{std::stoi(s), std::stoi(e)};
    if (span.start < 0 || span.end < span.start)
      throw DataError("record " + id + ": invalid CDR span [" + s + "," + e + ")");
    return span;
  } catch (const DataError&) {
    throw;
  } catch (const std::exception&) {
    throw DataError("record " + id + ": CDR span endpoints must be integers");
  }
}

void validate_sequence(const std::string& seq, const std::string& id, const char* which) {
  if (seq.empty()) throw DataError("record " + id + ": empty " + which + " sequence");
  for (char c : seq) {
    if (!seqcore::Alphabet::is_residue_char(c))
      throw DataError("record " + id + ": invalid symbol '" + std::string(1, c) + "' in " + which);
  }
}

}  // namespace

std::string records_to_csv(const std::vector<AntibodyRecord>& records) {
  std::string out = csv_join(kCsvHeader);
  bool any_redundancy =
      std::any_of(records.begin(), records.end(), [](const auto& r) { return r.redundancy >= 0; });
  if (any_redundancy) {
    auto header = kCsvHeader;
    header.push_back("redundancy");
    out = csv_join(header);
  }
  for (const auto& r : records) {
    std::vector<std::string> row = {r.id,
                                    r.antibody,
                                    r.germline,
                                    span_field(r.cdr1, true),
                                    span_field(r.cdr1, false),
                                    span_field(r.cdr2, true),
                                    span_field(r.cdr2, false),
                                    span_field(r.cdr3, true),
                                    span_field(r.cdr3, false),
                                    r.profile_id,
                                    r.stage,
                                    r.label};
    if (any_redundancy) row.push_back(r.redundancy >= 0 ? std::to_string(r.redundancy) : "");
    out += csv_join(row);
  }
  return out;
}

std::vector<AntibodyRecord> records_from_csv(const std::string& text) {
  auto rows = csv_parse(text);
  if (rows.empty()) throw DataError("corpus CSV: missing header");
  const auto& header = rows[0];
  if (header.size() < kCsvHeader.size())
    throw DataError("corpus CSV: header has " + std::to_string(header.size()) +
                    " columns, expected at least " + std::to_string(kCsvHeader.size()));
  for (size_t i = 0; i < kCsvHeader.size(); ++i) {
    if (header[i] != kCsvHeader[i])
      throw DataError("corpus CSV: column " + std::to_string(i + 1) + " is '" + header[i] +
                      "', expected '" + kCsvHeader[i] + "'");
  }
  int redundancy_col = -1;
  for (size_t i = kCsvHeader.size(); i < header.size(); ++i) {
    if (header[i] == "redundancy") redundancy_col = static_cast<int>(i);
  }

  std::vector<AntibodyRecord> out;
  out.reserve(rows.size() - 1);
  for (size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() < kCsvHeader.size())
      throw DataError("corpus CSV row " + std::to_string(r + 1) + ": expected " +
                      std::to_string(kCsvHeader.size()) + " columns, got " +
                      std::to_string(row.size()));
    AntibodyRecord rec;
    rec.id = row[0];
    rec.antibody = row[1];
    rec.germline = row[2];
    validate_sequence(rec.antibody, rec.id, "antibody");
    validate_sequence(rec.germline, rec.id, "germline");
    rec.cdr1 = parse_span(row[3], row[4], rec.id);
    rec.cdr2 = parse_span(row[5], row[6], rec.id);
    rec.cdr3 = parse_span(row[7], row[8], rec.id);
    rec.profile_id = row[9];
    rec.stage = row[10];
    rec.label = row[11];
    if (redundancy_col >= 0 && static_cast<size_t>(redundancy_col) < row.size() &&
        !row[redundancy_col].empty()) {
      rec.redundancy = std::stol(row[redundancy_col]);
    }
    for (const auto& span : {rec.cdr1, rec.cdr2, rec.cdr3}) {
      if (span && span->end > static_cast<int>(rec.antibody.size()))
        throw DataError("record " + rec.id + ": CDR span exceeds antibody length");
    }
    out.push_back(std::move(rec));
  }
  return out;
}

void write_records_csv(const std::string& path, const std::vector<AntibodyRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write file: " + path);
  out << records_to_csv(records);
}

std::vector<AntibodyRecord> read_records_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return records_from_csv(buf.str());
}

namespace {

json record_to_json(const AntibodyRecord& r) {
  json j;
  j["id"] = r.id;
  j["antibody"] = r.antibody;
  j["germline"] = r.germline;
  auto put_span = [&j](const char* key, const std::optional<seqcore::CdrSpan>& s) {
    if (s)
      j[key] = {s->start, s->end};
    else
      j[key] = nullptr;
  };
  put_span("cdr1", r.cdr1);
  put_span("cdr2", r.cdr2);
  put_span("cdr3", r.cdr3);
  j["profile_id"] = r.profile_id;
  j["stage"] = r.stage;
  j["label"] = r.label;
  j["mutations"] = r.mutation_positions;
  if (r.redundancy >= 0) j["redundancy"] = r.redundancy;
  return j;
}

AntibodyRecord record_from_json(const json& j) {
  AntibodyRecord r;
  r.id = j.at("id").get<std::string>();
  r.antibody = j.at("antibody").get<std::string>();
  r.germline = j.at("germline").get<std::string>();
  auto get_span = [&j](const char* key) -> std::optional<seqcore::CdrSpan> {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    const auto& arr = j.at(key);
    return seqcore::CdrSpan{arr.at(0).get<int>(), arr.at(1).get<int>()};
  };
  r.cdr1 = get_span("cdr1");
  r.cdr2 = get_span("cdr2");
  r.cdr3 = get_span("cdr3");
  r.profile_id = j.value("profile_id", "");
  r.stage = j.value("stage", "");
  r.label = j.value("label", "");
  r.mutation_positions = j.value("mutations", std::vector<int>{});
  r.redundancy = j.value("redundancy", -1L);
  return r;
}

}  // namespace

std::string chunk_to_jsonl(const CorpusChunk& chunk) {
  std::string out;
  for (const auto& r : chunk.records) {
    out += record_to_json(r).dump();
    out.push_back('\n');
  }
  return out;
}

CorpusChunk chunk_from_jsonl(const std::string& text, int index, ChunkRole role) {
  CorpusChunk chunk;
  chunk.index = index;
  chunk.role = role;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      chunk.records.push_back(record_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw DataError("chunk JSONL line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return chunk;
}

void write_chunk_jsonl(const std::string& path, const CorpusChunk& chunk) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write file: " + path);
  out << chunk_to_jsonl(chunk);
}

CorpusChunk read_chunk_jsonl(const std::string& path, int index, ChunkRole role) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return chunk_from_jsonl(buf.str(), index, role);
}

std::vector<AntibodyRecord> dedup(const std::vector<AntibodyRecord>& records) {
  std::vector<AntibodyRecord> out;
  std::unordered_set<std::string> seen;
  seen.reserve(records.size() * 2);
  for (const auto& r : records) {
    if (seen.insert(r.antibody).second) out.push_back(r);
  }
  return out;
}

std::vector<AntibodyRecord> cluster_filter(const std::vector<AntibodyRecord>& records,
                                           double identity_threshold, int threads) {
  std::map<std::string, std::vector<size_t>> groups;  // CDR3 -> input indices
  for (size_t i = 0; i < records.size(); ++i) {
    if (!records[i].cdr3)
      throw DataError("cluster_filter: record " + records[i].id + " has no CDR3 span");
    groups[records[i].cdr3_seq()].push_back(i);
  }

  std::vector<const std::vector<size_t>*> group_list;
  group_list.reserve(groups.size());
  for (const auto& [key, idxs] : groups) group_list.push_back(&idxs);

  std::vector<char> retained(records.size(), 0);
  auto process_group = [&](const std::vector<size_t>& idxs) {
    std::vector<size_t> order = idxs;
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return records[a].id < records[b].id; });
    std::vector<size_t> reps;
    for (size_t idx : order) {
      bool drop = false;
      for (size_t rep : reps) {
        if (seqcore::sequence_identity(records[idx].antibody, records[rep].antibody) >=
            identity_threshold) {
          drop = true;
          break;
        }
      }
      if (!drop) {
        reps.push_back(idx);
        retained[idx] = 1;
      }
    }
  };

  if (threads <= 1 || group_list.size() < 2) {
    for (const auto* g : group_list) process_group(*g);
  } else {
    size_t n_threads = std::min<size_t>(static_cast<size_t>(threads), group_list.size());
    std::vector<std::thread> pool;
    for (size_t t = 0; t < n_threads; ++t) {
      pool.emplace_back([&, t]() {
        for (size_t g = t; g < group_list.size(); g += n_threads) process_group(*group_list[g]);
      });
    }
    for (auto& th : pool) th.join();
  }

  std::vector<AntibodyRecord> out;
  for (size_t i = 0; i < records.size(); ++i) {
    if (retained[i]) out.push_back(records[i]);
  }
  return out;
}

ChunkingResult shuffle_and_chunk(std::vector<AntibodyRecord> records, int chunk_size,
                                 uint64_t seed) {
  if (records.empty()) throw DataError("shuffle_and_chunk: empty input");
  if (chunk_size < 1) throw DataError("shuffle_and_chunk: chunk_size must be >= 1");
  Rng rng(seed);
  rng.shuffle(records);

  ChunkingResult result;
  int index = 0;
  for (size_t off = 0; off < records.size(); off += static_cast<size_t>(chunk_size)) {
    CorpusChunk chunk;
    chunk.index = index++;
    size_t end = std::min(records.size(), off + static_cast<size_t>(chunk_size));
    chunk.records.assign(records.begin() + static_cast<long>(off),
                         records.begin() + static_cast<long>(end));
    result.chunks.push_back(std::move(chunk));
  }
  result.chunks.back().role = ChunkRole::Validation;
  result.train_empty_warning = result.chunks.size() == 1;
  return result;
}

}  // namespace abevo::corpus
