#include "abevo/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace abevo::objectives {

using seqcore::Alphabet;

PairedEncoding encode_pair(const std::string& antibody, const std::string& germline, int max_len) {
  if (antibody.empty() || germline.empty())
    throw DataError("encode_pair: empty antibody or germline");
  const int m = static_cast<int>(antibody.size());
  const int n = static_cast<int>(germline.size());
  if (m + n + 2 > max_len)
    throw DataError("encode_pair: encoding length " + std::to_string(m + n + 2) +
                    " exceeds max_len " + std::to_string(max_len));
  PairedEncoding enc;
  enc.antibody_len = m;
  enc.germline_len = n;
  enc.token_ids.reserve(static_cast<size_t>(m + n + 2));
  enc.segment_ids.reserve(static_cast<size_t>(m + n + 2));
  enc.token_ids.push_back(Alphabet::kCls);
  enc.segment_ids.push_back(0);
  for (char c : antibody) {
    enc.token_ids.push_back(Alphabet::id_of(c));
    enc.segment_ids.push_back(0);
  }
  enc.token_ids.push_back(Alphabet::kSep);
  enc.segment_ids.push_back(1);
  for (char c : germline) {
    enc.token_ids.push_back(Alphabet::id_of(c));
    enc.segment_ids.push_back(1);
  }
  return enc;
}

PairedEncoding encode_pair(const AntibodyRecord& record, int max_len) {
  return encode_pair(record.antibody, record.germline, max_len);
}

std::pair<std::string, std::string> decode_pair(const PairedEncoding& enc) {
  std::string a, g;
  for (int i = 0; i < enc.antibody_len; ++i)
    a.push_back(Alphabet::char_of(enc.token_ids[static_cast<size_t>(enc.antibody_pos(i))]));
  for (int j = 0; j < enc.germline_len; ++j)
    g.push_back(Alphabet::char_of(enc.token_ids[static_cast<size_t>(enc.germline_pos(j))]));
  return {a, g};
}

MaskingPlan mlm_plan(const PairedEncoding& enc, double ratio, Rng& rng) {
  if (ratio < 0.0 || ratio > 1.0) throw DataError("mlm_plan: ratio not in [0,1]");
  std::vector<int> maskable;
  for (int i = 0; i < enc.length(); ++i) {
    if (Alphabet::is_residue_id(enc.token_ids[static_cast<size_t>(i)])) maskable.push_back(i);
  }
  int k = static_cast<int>(std::llround(ratio * static_cast<double>(maskable.size())));
  MaskingPlan plan;
  if (k == 0) return plan;
  rng.shuffle(maskable);
  plan.selected.assign(maskable.begin(), maskable.begin() + k);
  std::sort(plan.selected.begin(), plan.selected.end());
  plan.actions.reserve(static_cast<size_t>(k));
  plan.replacements.reserve(static_cast<size_t>(k));
  plan.targets.reserve(static_cast<size_t>(k));
  for (int pos : plan.selected) {
    int original = enc.token_ids[static_cast<size_t>(pos)];
    double u = rng.uniform();
    MaskAction action;
    int replacement;
    if (u < 0.8) {
      action = MaskAction::Mask;
      replacement = Alphabet::kMask;
    } else if (u < 0.9) {
      action = MaskAction::Random;
      replacement =
          Alphabet::kResidueBase + static_cast<int>(rng.below(Alphabet::kNumResidues));
    } else {
      action = MaskAction::Keep;
      replacement = original;
    }
    plan.actions.push_back(action);
    plan.replacements.push_back(replacement);
    plan.targets.push_back(original);
  }
  return plan;
}

std::vector<int> apply_plan(const PairedEncoding& enc, const MaskingPlan& plan) {
  std::vector<int> tokens = enc.token_ids;
  for (size_t i = 0; i < plan.selected.size(); ++i)
    tokens[static_cast<size_t>(plan.selected[i])] = plan.replacements[i];
  return tokens;
}

std::vector<AGPInstance> agp_batch(const std::vector<AntibodyRecord>& records, double p, Rng& rng,
                                   int max_len) {
  if (p < 0.0 || p > 1.0) throw DataError("agp_batch: p not in [0,1]");
  std::vector<AGPInstance> out;
  out.reserve(records.size());
  for (size_t i = 0; i < records.size(); ++i) {
    bool swap = rng.bernoulli(p);
    AGPInstance inst;
    if (swap) {
      if (records.size() < 2)
        throw DataError("agp_batch: batch of size 1 cannot swap germlines");
      size_t j = (i + 1 + rng.below(records.size() - 1)) % records.size();
      inst.encoding = encode_pair(records[i].antibody, records[j].germline, max_len);
      inst.label = 0;
    } else {
      inst.encoding = encode_pair(records[i], max_len);
      inst.label = 1;
    }
    out.push_back(std::move(inst));
  }
  return out;
}

MPPInstance mpp_build(const AntibodyRecord& record, int max_len) {
  MPPInstance inst;
  inst.encoding = encode_pair(record, max_len);
  inst.germline_labels.assign(static_cast<size_t>(inst.encoding.germline_len), 0);

  // map germline mutation indices to antibody positions; identity when the
  // generation is indel-free, alignment-based otherwise
  std::vector<int> antibody_index_of_germline;
  if (record.antibody.size() == record.germline.size()) {
    antibody_index_of_germline.resize(record.germline.size());
    std::iota(antibody_index_of_germline.begin(), antibody_index_of_germline.end(), 0);
  } else {
    antibody_index_of_germline.assign(record.germline.size(), -1);
    seqcore::Alignment aln = seqcore::global_align(record.antibody, record.germline);
    int ai = 0, gj = 0;
    for (size_t col = 0; col < aln.g.size(); ++col) {
      bool ga = aln.a[col] != '-';
      bool gg = aln.g[col] != '-';
      if (ga && gg) antibody_index_of_germline[static_cast<size_t>(gj)] = ai;
      if (ga) ++ai;
      if (gg) ++gj;
    }
  }

  for (int j : record.mutation_positions) {
    if (j < 0 || j >= inst.encoding.germline_len)
      throw DataError("mpp_build: mutation index " + std::to_string(j) +
                      " outside germline of record " + record.id);
    inst.germline_labels[static_cast<size_t>(j)] = 1;
    int ai = antibody_index_of_germline[static_cast<size_t>(j)];
    if (ai < 0) continue;  // mutation aligned to a gap: no antibody token to mask
    int pos = inst.encoding.antibody_pos(ai);
    inst.masked_positions.push_back(pos);
    inst.masked_targets.push_back(inst.encoding.token_ids[static_cast<size_t>(pos)]);
    inst.encoding.token_ids[static_cast<size_t>(pos)] = Alphabet::kMask;
  }
  return inst;
}

}  // namespace abevo::objectives
