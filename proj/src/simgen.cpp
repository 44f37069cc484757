#include "abevo/simgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <numeric>

namespace abevo::simgen {

namespace {

constexpr const char* kCanonical = "ACDEFGHIKLMNPQRSTVWY";  // excludes 'X'
constexpr int kNumCanonical = 20;

char random_canonical(Rng& rng) { return kCanonical[rng.below(kNumCanonical)]; }

constexpr uint64_t kProfileStream = 0x5000000000000000ull;
constexpr uint64_t kRecordStream = 0x1000000000000000ull;

}  // namespace

const std::array<std::string, 6> kStageNames = {"immature",    "transitional", "mature",
                                                "plasmacytes", "memory-IgD+",  "memory-IgD-"};

int stage_index(const std::string& name) {
  for (size_t i = 0; i < kStageNames.size(); ++i) {
    if (kStageNames[i] == name) return static_cast<int>(i);
  }
  throw DataError("unknown B-cell stage: '" + name + "'");
}

void GeneLibrary::validate() const {
  if (v_segments.empty() || d_segments.empty() || j_segments.empty())
    throw DataError("gene library: every segment pool must be non-empty");
  for (const auto& v : v_segments)
    if (v.size() < 4) throw DataError("gene library: V segments must have >= 4 residues");
  for (const auto& d : d_segments)
    if (d.empty()) throw DataError("gene library: empty D segment");
  for (const auto& j : j_segments)
    if (j.size() < 3) throw DataError("gene library: J segments must have >= 3 residues");
}

GeneLibrary make_library(const LibraryConfig& cfg) {
  if (cfg.n_v < 1 || cfg.n_d < 1 || cfg.n_j < 1)
    throw DataError("library config: pool sizes must be >= 1");
  auto check_range = [](int lo, int hi, const char* what) {
    if (lo < 1 || hi < lo)
      throw DataError(std::string("library config: invalid ") + what + " length range");
  };
  check_range(cfg.v_len_min, cfg.v_len_max, "V");
  check_range(cfg.d_len_min, cfg.d_len_max, "D");
  check_range(cfg.j_len_min, cfg.j_len_max, "J");

  GeneLibrary lib;
  lib.seed = cfg.seed;
  auto gen_pool = [&](int count, int len_min, int len_max, uint64_t stream_id) {
    std::vector<std::string> pool;
    for (int i = 0; i < count; ++i) {
      Rng rng = Rng::stream(cfg.seed, stream_id + static_cast<uint64_t>(i));
      int len = len_min + static_cast<int>(rng.below(static_cast<uint64_t>(len_max - len_min + 1)));
      std::string seg;
      seg.reserve(static_cast<size_t>(len));
      for (int k = 0; k < len; ++k) seg.push_back(random_canonical(rng));
      pool.push_back(std::move(seg));
    }
    return pool;
  };
  lib.v_segments = gen_pool(cfg.n_v, cfg.v_len_min, cfg.v_len_max, 0x100);
  lib.d_segments = gen_pool(cfg.n_d, cfg.d_len_min, cfg.d_len_max, 0x200);
  lib.j_segments = gen_pool(cfg.n_j, cfg.j_len_min, cfg.j_len_max, 0x300);
  lib.validate();
  return lib;
}

void RepertoireSpec::validate() const {
  if (n_profiles < 1 || sequences_per_profile < 1)
    throw DataError("repertoire spec: profile counts must be >= 1");
  if (shm_rate < 0.0 || shm_rate > 1.0) throw DataError("repertoire spec: shm_rate not in [0,1]");
  if (junction_insert_min < 0 || junction_insert_max < junction_insert_min)
    throw DataError("repertoire spec: invalid junction insert range");
  double wsum = std::accumulate(stage_weights.begin(), stage_weights.end(), 0.0);
  if (std::fabs(wsum - 1.0) > 1e-9)
    throw DataError("repertoire spec: stage_weights must sum to 1");
  for (double w : stage_weights)
    if (w < 0.0) throw DataError("repertoire spec: negative stage weight");
  for (double m : stage_shm_multipliers)
    if (m < 0.0) throw DataError("repertoire spec: negative stage multiplier");
  if (motif_fraction < 0.0 || motif_fraction > 1.0)
    throw DataError("repertoire spec: motif_fraction not in [0,1]");
  if (positive_fraction < 0.0 || positive_fraction > 1.0)
    throw DataError("repertoire spec: positive_fraction not in [0,1]");
  if (substitution_bias < 0.0 || substitution_bias > 1.0)
    throw DataError("repertoire spec: substitution_bias not in [0,1]");
  if (indel_rate < 0.0 || indel_rate > 1.0)
    throw DataError("repertoire spec: indel_rate not in [0,1]");
  for (char c : disease_motif) {
    if (!seqcore::Alphabet::is_residue_char(c) || c == 'X')
      throw DataError("repertoire spec: motif must use canonical residues");
  }
}

RepertoireSpec RepertoireSpec::from_config(const KvConfig& cfg) {
  RepertoireSpec spec;
  spec.n_profiles = static_cast<int>(cfg.get_int("n_profiles", spec.n_profiles));
  spec.sequences_per_profile =
      static_cast<int>(cfg.get_int("sequences_per_profile", spec.sequences_per_profile));
  spec.shm_rate = cfg.get_double("shm_rate", spec.shm_rate);
  spec.junction_insert_min =
      static_cast<int>(cfg.get_int("junction_insert_min", spec.junction_insert_min));
  spec.junction_insert_max =
      static_cast<int>(cfg.get_int("junction_insert_max", spec.junction_insert_max));
  auto weights = cfg.get_doubles("stage_weights",
                                 {spec.stage_weights.begin(), spec.stage_weights.end()});
  auto mults = cfg.get_doubles("stage_shm_multipliers", {spec.stage_shm_multipliers.begin(),
                                                         spec.stage_shm_multipliers.end()});
  if (weights.size() != 6) throw DataError("stage_weights must list 6 values");
  if (mults.size() != 6) throw DataError("stage_shm_multipliers must list 6 values");
  std::copy(weights.begin(), weights.end(), spec.stage_weights.begin());
  std::copy(mults.begin(), mults.end(), spec.stage_shm_multipliers.begin());
  spec.positive_fraction = cfg.get_double("positive_fraction", spec.positive_fraction);
  spec.disease_motif = cfg.get_str("disease_motif", spec.disease_motif);
  spec.motif_fraction = cfg.get_double("motif_fraction", spec.motif_fraction);
  spec.substitution_bias = cfg.get_double("substitution_bias", spec.substitution_bias);
  spec.indel_rate = cfg.get_double("indel_rate", spec.indel_rate);
  spec.seed = cfg.get_u64("seed", spec.seed);
  spec.validate();
  return spec;
}

LibraryConfig library_config_from_kv(const KvConfig& cfg) {
  LibraryConfig lc;
  lc.n_v = static_cast<int>(cfg.get_int("library_n_v", lc.n_v));
  lc.n_d = static_cast<int>(cfg.get_int("library_n_d", lc.n_d));
  lc.n_j = static_cast<int>(cfg.get_int("library_n_j", lc.n_j));
  lc.v_len_min = static_cast<int>(cfg.get_int("library_v_len_min", lc.v_len_min));
  lc.v_len_max = static_cast<int>(cfg.get_int("library_v_len_max", lc.v_len_max));
  lc.d_len_min = static_cast<int>(cfg.get_int("library_d_len_min", lc.d_len_min));
  lc.d_len_max = static_cast<int>(cfg.get_int("library_d_len_max", lc.d_len_max));
  lc.j_len_min = static_cast<int>(cfg.get_int("library_j_len_min", lc.j_len_min));
  lc.j_len_max = static_cast<int>(cfg.get_int("library_j_len_max", lc.j_len_max));
  lc.seed = cfg.get_u64("library_seed", cfg.get_u64("seed", lc.seed));
  return lc;
}

Recombination recombine(const GeneLibrary& lib, int insert_min, int insert_max, Rng& rng) {
  Recombination rec;
  rec.v_index = static_cast<int>(rng.below(lib.v_segments.size()));
  rec.d_index = static_cast<int>(rng.below(lib.d_segments.size()));
  rec.j_index = static_cast<int>(rng.below(lib.j_segments.size()));
  int span = insert_max - insert_min + 1;
  int n1 = insert_min + static_cast<int>(rng.below(static_cast<uint64_t>(span)));
  int n2 = insert_min + static_cast<int>(rng.below(static_cast<uint64_t>(span)));
  const std::string& v = lib.v_segments[static_cast<size_t>(rec.v_index)];
  const std::string& d = lib.d_segments[static_cast<size_t>(rec.d_index)];
  const std::string& j = lib.j_segments[static_cast<size_t>(rec.j_index)];
  rec.v_len = static_cast<int>(v.size());
  rec.germline.reserve(v.size() + static_cast<size_t>(n1 + n2) + d.size() + j.size());
  rec.germline = v;
  rec.germline.append(static_cast<size_t>(n1), 'X');
  rec.germline += d;
  rec.germline.append(static_cast<size_t>(n2), 'X');
  rec.germline += j;
  rec.cdr3.start = rec.v_len - 3;
  rec.cdr3.end = rec.v_len + n1 + static_cast<int>(d.size()) + n2 + 3;
  return rec;
}

char bias_target(char residue) {
  const char* p = std::strchr(kCanonical, residue);
  if (p == nullptr) throw DataError(std::string("bias_target: not a canonical residue: ") + residue);
  return kCanonical[(p - kCanonical + 7) % kNumCanonical];
}

HypermutationResult hypermutate(const std::string& germline, double rate, Rng& rng, double bias) {
  if (rate < 0.0 || rate > 1.0) throw DataError("hypermutate: rate not in [0,1]");
  HypermutationResult out;
  out.antibody = germline;
  for (size_t i = 0; i < germline.size(); ++i) {
    char g = germline[i];
    if (g == 'X') {
      out.antibody[i] = random_canonical(rng);
      continue;
    }
    if (!rng.bernoulli(rate)) continue;
    char target = bias_target(g);
    char chosen;
    if (bias > 0.0 && rng.uniform() < bias) {
      chosen = target;
    } else {
      // uniform over the other residues; skip the bias target too when the
      // bias channel is active so its total probability stays exactly `bias`
      int excluded = bias > 0.0 ? 2 : 1;
      int pick = static_cast<int>(rng.below(static_cast<uint64_t>(kNumCanonical - excluded)));
      chosen = 0;
      for (int k = 0, seen = 0; k < kNumCanonical; ++k) {
        char c = kCanonical[k];
        if (c == g || (excluded == 2 && c == target)) continue;
        if (seen++ == pick) {
          chosen = c;
          break;
        }
      }
    }
    out.antibody[i] = chosen;
    out.mutations.push_back(static_cast<int>(i));
  }
  return out;
}

namespace {

int sample_stage(const std::array<double, 6>& weights, Rng& rng) {
  double u = rng.uniform();
  double acc = 0.0;
  for (int s = 0; s < 6; ++s) {
    acc += weights[static_cast<size_t>(s)];
    if (u < acc) return s;
  }
  return 5;
}

std::string format_profile_id(int p) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "P%03d", p);
  return buf;
}

std::string format_record_id(int p, int s) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "P%03d_S%05d", p, s);
  return buf;
}

}  // namespace

std::vector<AntibodyRecord> generate_repertoire(const RepertoireSpec& spec,
                                                const GeneLibrary& lib) {
  spec.validate();
  lib.validate();

  const int n_positive = static_cast<int>(std::llround(spec.positive_fraction * spec.n_profiles));
  std::vector<AntibodyRecord> out;
  out.reserve(static_cast<size_t>(spec.n_profiles) *
              static_cast<size_t>(spec.sequences_per_profile));

  for (int p = 0; p < spec.n_profiles; ++p) {
    const bool positive = p < n_positive;
    std::vector<char> carries(static_cast<size_t>(spec.sequences_per_profile), 0);
    if (positive && !spec.disease_motif.empty()) {
      int k = static_cast<int>(std::llround(spec.motif_fraction * spec.sequences_per_profile));
      std::vector<int> order(static_cast<size_t>(spec.sequences_per_profile));
      std::iota(order.begin(), order.end(), 0);
      Rng prng = Rng::stream(spec.seed, kProfileStream + static_cast<uint64_t>(p));
      prng.shuffle(order);
      for (int i = 0; i < k; ++i) carries[static_cast<size_t>(order[static_cast<size_t>(i)])] = 1;
    }

    for (int s = 0; s < spec.sequences_per_profile; ++s) {
      uint64_t record_index =
          static_cast<uint64_t>(p) * static_cast<uint64_t>(spec.sequences_per_profile) +
          static_cast<uint64_t>(s);
      Rng rng = Rng::stream(spec.seed, kRecordStream + record_index);

      AntibodyRecord rec;
      int stage = sample_stage(spec.stage_weights, rng);
      rec.stage = kStageNames[static_cast<size_t>(stage)];

      Recombination vdj = recombine(lib, spec.junction_insert_min, spec.junction_insert_max, rng);
      double rate = std::min(1.0, spec.shm_rate * spec.stage_shm_multipliers[static_cast<size_t>(stage)]);
      HypermutationResult hm = hypermutate(vdj.germline, rate, rng, spec.substitution_bias);

      rec.germline = vdj.germline;
      rec.antibody = hm.antibody;
      rec.mutation_positions = hm.mutations;
      rec.cdr3 = vdj.cdr3;

      if (carries[static_cast<size_t>(s)]) {
        if (static_cast<int>(spec.disease_motif.size()) > vdj.cdr3.length())
          throw DataError("disease motif longer than CDR3 span");
        rec.antibody.replace(static_cast<size_t>(vdj.cdr3.start), spec.disease_motif.size(),
                             spec.disease_motif);
        // splice changes the antibody, so re-derive the mutated positions
        rec.mutation_positions = seqcore::derive_mutations(rec.antibody, rec.germline);
      }

      if (spec.indel_rate > 0.0 && rng.bernoulli(spec.indel_rate)) {
        // single indel after the CDR3 so span annotations stay valid
        size_t lo = static_cast<size_t>(vdj.cdr3.end);
        if (rng.bernoulli(0.5)) {
          size_t pos = lo + rng.below(rec.antibody.size() - lo + 1);
          rec.antibody.insert(rec.antibody.begin() + static_cast<long>(pos),
                              random_canonical(rng));
        } else if (rec.antibody.size() > lo) {
          size_t pos = lo + rng.below(rec.antibody.size() - lo);
          rec.antibody.erase(rec.antibody.begin() + static_cast<long>(pos));
        }
        rec.mutation_positions = seqcore::derive_mutations(rec.antibody, rec.germline);
      }

      // framework CDR spans carved out of the V region when they fit
      int cdr_len = std::max(3, vdj.v_len / 10);
      CdrSpan cdr1{static_cast<int>(vdj.v_len * 0.2), 0};
      cdr1.end = cdr1.start + cdr_len;
      CdrSpan cdr2{static_cast<int>(vdj.v_len * 0.55), 0};
      cdr2.end = cdr2.start + cdr_len;
      if (cdr1.end <= cdr2.start && cdr2.end <= vdj.cdr3.start) {
        rec.cdr1 = cdr1;
        rec.cdr2 = cdr2;
      }

      rec.id = format_record_id(p, s);
      rec.profile_id = format_profile_id(p);
      rec.label = positive ? "1" : "0";
      out.push_back(std::move(rec));
    }
  }
  return out;
}

}  // namespace abevo::simgen
