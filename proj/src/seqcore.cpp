#include "abevo/seqcore.hpp"

#include <algorithm>
#include <array>
#include <cctype>

namespace abevo::seqcore {

namespace {

constexpr const char kResidueOrder[] = "ACDEFGHIKLMNPQRSTVWYX";

std::array<int8_t, 256> build_lookup() {
  std::array<int8_t, 256> table{};
  table.fill(-1);
  for (int i = 0; kResidueOrder[i]; ++i) {
    table[static_cast<unsigned char>(kResidueOrder[i])] = static_cast<int8_t>(i);
  }
  return table;
}

const std::array<int8_t, 256>& lookup() {
  static const std::array<int8_t, 256> table = build_lookup();
  return table;
}

}  // namespace

const std::string& Alphabet::residues() {
  static const std::string r = kResidueOrder;
  return r;
}

bool Alphabet::is_residue_char(char c) { return lookup()[static_cast<unsigned char>(c)] >= 0; }

int Alphabet::id_of(char residue) {
  int8_t idx = lookup()[static_cast<unsigned char>(residue)];
  if (idx < 0) throw DataError(std::string("unknown residue symbol '") + residue + "'");
  return kResidueBase + idx;
}

char Alphabet::char_of(int id) {
  if (!is_residue_id(id)) throw DataError("token id " + std::to_string(id) + " is not a residue");
  return kResidueOrder[id - kResidueBase];
}

std::vector<std::pair<std::string, std::string>> parse_fasta(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::string header;
  std::string seq;
  int header_line = 0;
  int line_no = 0;
  bool in_record = false;

  auto flush = [&]() {
    if (!in_record) return;
    if (seq.empty())
      throw DataError("FASTA record '" + header + "' at line " + std::to_string(header_line) +
                      " has an empty sequence");
    out.emplace_back(header, seq);
    seq.clear();
  };

  size_t pos = 0;
  while (pos <= text.size()) {
    size_t eol = text.find('\n', pos);
    std::string line = text.substr(pos, (eol == std::string::npos ? text.size() : eol) - pos);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty() && line[0] == '>') {
      flush();
      header = line.substr(1);
      while (!header.empty() && (header.back() == ' ' || header.back() == '\t')) header.pop_back();
      size_t ws = header.find_first_of(" \t");
      if (ws != std::string::npos) header = header.substr(0, ws);
      if (header.empty())
        throw DataError("malformed FASTA header at line " + std::to_string(line_no));
      header_line = line_no;
      in_record = true;
    } else {
      for (char c : line) {
        if (std::isspace(static_cast<unsigned char>(c))) continue;
        if (!in_record)
          throw DataError("sequence data before any FASTA header at line " +
                          std::to_string(line_no));
        char up = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
        if (!Alphabet::is_residue_char(up))
          throw DataError("invalid symbol '" + std::string(1, c) + "' at line " +
                          std::to_string(line_no) + " in record '" + header + "'");
        seq.push_back(up);
      }
    }
    if (eol == std::string::npos) break;
    pos = eol + 1;
  }
  flush();
  return out;
}

int edit_distance(const std::string& s, const std::string& t) {
  const size_t m = s.size(), n = t.size();
  if (m == 0) return static_cast<int>(n);
  if (n == 0) return static_cast<int>(m);
  std::vector<int> prev(n + 1), cur(n + 1);
  for (size_t j = 0; j <= n; ++j) prev[j] = static_cast<int>(j);
  for (size_t i = 1; i <= m; ++i) {
    cur[0] = static_cast<int>(i);
    for (size_t j = 1; j <= n; ++j) {
      int sub = prev[j - 1] + (s[i - 1] == t[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[n];
}

double sequence_identity(const std::string& query, const std::string& target) {
  if (query.empty()) throw DataError("sequence_identity: empty query");
  double d = static_cast<double>(edit_distance(query, target));
  double identity = 1.0 - d / static_cast<double>(query.size());
  return identity < 0.0 ? 0.0 : identity;
}

Alignment global_align(const std::string& a, const std::string& g) {
  if (a.empty() || g.empty()) throw DataError("global_align: empty input");
  constexpr int kMatch = 1, kMismatch = -1, kGap = -2;
  const int m = static_cast<int>(a.size());
  const int n = static_cast<int>(g.size());
  std::vector<int> score(static_cast<size_t>(m + 1) * (n + 1));
  auto at = [&](int i, int j) -> int& { return score[static_cast<size_t>(i) * (n + 1) + j]; };
  for (int i = 0; i <= m; ++i) at(i, 0) = kGap * i;
  for (int j = 0; j <= n; ++j) at(0, j) = kGap * j;
  for (int i = 1; i <= m; ++i) {
    for (int j = 1; j <= n; ++j) {
      int diag = at(i - 1, j - 1) + (a[i - 1] == g[j - 1] ? kMatch : kMismatch);
      int up = at(i - 1, j) + kGap;    // gap in g
      int left = at(i, j - 1) + kGap;  // gap in a
      at(i, j) = std::max({diag, up, left});
    }
  }
  Alignment out;
  out.score = at(m, n);
  std::string ra, rg;
  int i = m, j = n;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 &&
        at(i, j) == at(i - 1, j - 1) + (a[i - 1] == g[j - 1] ? kMatch : kMismatch)) {
      ra.push_back(a[i - 1]);
      rg.push_back(g[j - 1]);
      --i;
      --j;
    } else if (i > 0 && at(i, j) == at(i - 1, j) + kGap) {
      ra.push_back(a[i - 1]);
      rg.push_back('-');
      --i;
    } else {
      ra.push_back('-');
      rg.push_back(g[j - 1]);
      --j;
    }
  }
  std::reverse(ra.begin(), ra.end());
  std::reverse(rg.begin(), rg.end());
  out.a = std::move(ra);
  out.g = std::move(rg);
  return out;
}

std::vector<int> derive_mutations(const std::string& a, const std::string& g) {
  std::vector<int> out;
  if (a.empty() || g.empty()) return out;
  if (a.size() == g.size()) {
    // indel-free fast path: positions correspond directly
    for (size_t j = 0; j < g.size(); ++j) {
      if (g[j] != Alphabet::unknown() && a[j] != g[j]) out.push_back(static_cast<int>(j));
    }
    return out;
  }
  Alignment aln = global_align(a, g);
  int gj = 0;
  for (size_t col = 0; col < aln.g.size(); ++col) {
    char ca = aln.a[col], cg = aln.g[col];
    if (cg == '-') continue;
    if (ca != '-' && cg != Alphabet::unknown() && ca != cg) out.push_back(gj);
    ++gj;
  }
  return out;
}

}  // namespace abevo::seqcore
