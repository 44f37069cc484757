#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "abevo/corpus.hpp"
#include "abevo/metrics.hpp"
#include "abevo/objectives.hpp"
#include "abevo/seqcore.hpp"
#include "abevo/simgen.hpp"
#include "abevo/stats.hpp"

namespace py = pybind11;

namespace {

using namespace abevo;

py::dict record_to_dict(const seqcore::AntibodyRecord& r) {
  py::dict d;
  d["id"] = r.id;
  d["antibody"] = r.antibody;
  d["germline"] = r.germline;
  auto span = [](const std::optional<seqcore::CdrSpan>& s) -> py::object {
    if (!s) return py::none();
    return py::make_tuple(s->start, s->end);
  };
  d["cdr1"] = span(r.cdr1);
  d["cdr2"] = span(r.cdr2);
  d["cdr3"] = span(r.cdr3);
  d["mutations"] = r.mutation_positions;
  d["profile_id"] = r.profile_id;
  d["stage"] = r.stage;
  d["label"] = r.label;
  return d;
}

simgen::RepertoireSpec spec_from_kwargs(const py::dict& kwargs) {
  simgen::RepertoireSpec spec;
  for (auto item : kwargs) {
    std::string key = py::cast<std::string>(item.first);
    if (key == "n_profiles") spec.n_profiles = py::cast<int>(item.second);
    else if (key == "sequences_per_profile") spec.sequences_per_profile = py::cast<int>(item.second);
    else if (key == "shm_rate") spec.shm_rate = py::cast<double>(item.second);
    else if (key == "junction_insert_min") spec.junction_insert_min = py::cast<int>(item.second);
    else if (key == "junction_insert_max") spec.junction_insert_max = py::cast<int>(item.second);
    else if (key == "positive_fraction") spec.positive_fraction = py::cast<double>(item.second);
    else if (key == "disease_motif") spec.disease_motif = py::cast<std::string>(item.second);
    else if (key == "motif_fraction") spec.motif_fraction = py::cast<double>(item.second);
    else if (key == "substitution_bias") spec.substitution_bias = py::cast<double>(item.second);
    else if (key == "indel_rate") spec.indel_rate = py::cast<double>(item.second);
    else if (key == "seed") spec.seed = py::cast<uint64_t>(item.second);
    else if (key == "stage_weights") {
      auto w = py::cast<std::vector<double>>(item.second);
      if (w.size() != 6) throw DataError("stage_weights must list 6 values");
      std::copy(w.begin(), w.end(), spec.stage_weights.begin());
    } else if (key == "stage_shm_multipliers") {
      auto w = py::cast<std::vector<double>>(item.second);
      if (w.size() != 6) throw DataError("stage_shm_multipliers must list 6 values");
      std::copy(w.begin(), w.end(), spec.stage_shm_multipliers.begin());
    } else {
      throw DataError("unknown repertoire option: " + key);
    }
  }
  spec.validate();
  return spec;
}

}  // namespace

PYBIND11_MODULE(_abevo, m) {
  m.doc() = "antibody evolution-aware pretraining toolkit (C++ core bindings)";

  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

  m.def("edit_distance", &seqcore::edit_distance, py::arg("s"), py::arg("t"),
        "Levenshtein distance with unit costs.");
  m.def("sequence_identity", &seqcore::sequence_identity, py::arg("query"), py::arg("target"),
        "1 - edit_distance/|query|, clamped at 0.");
  m.def(
      "global_align",
      [](const std::string& a, const std::string& g) {
        auto aln = seqcore::global_align(a, g);
        return py::make_tuple(aln.a, aln.g, aln.score);
      },
      py::arg("a"), py::arg("g"), "Needleman-Wunsch (+1/-1/-2); returns (a', g', score).");
  m.def("derive_mutations", &seqcore::derive_mutations, py::arg("antibody"), py::arg("germline"));
  m.def(
      "parse_fasta",
      [](const std::string& text) { return seqcore::parse_fasta(text); },
      py::arg("text"));

  m.def(
      "generate_repertoire",
      [](const py::kwargs& kwargs) {
        py::dict d;
        simgen::LibraryConfig lc;
        py::dict rest;
        for (auto item : kwargs) {
          std::string key = py::cast<std::string>(item.first);
          if (key == "library_n_v") lc.n_v = py::cast<int>(item.second);
          else if (key == "library_n_d") lc.n_d = py::cast<int>(item.second);
          else if (key == "library_n_j") lc.n_j = py::cast<int>(item.second);
          else if (key == "library_v_len_min") lc.v_len_min = py::cast<int>(item.second);
          else if (key == "library_v_len_max") lc.v_len_max = py::cast<int>(item.second);
          else if (key == "library_d_len_min") lc.d_len_min = py::cast<int>(item.second);
          else if (key == "library_d_len_max") lc.d_len_max = py::cast<int>(item.second);
          else if (key == "library_j_len_min") lc.j_len_min = py::cast<int>(item.second);
          else if (key == "library_j_len_max") lc.j_len_max = py::cast<int>(item.second);
          else if (key == "library_seed") lc.seed = py::cast<uint64_t>(item.second);
          else rest[item.first] = item.second;
        }
        auto spec = spec_from_kwargs(rest);
        if (!rest.contains("library_seed")) lc.seed = spec.seed;
        auto records = simgen::generate_repertoire(spec, simgen::make_library(lc));
        py::list out;
        for (const auto& r : records) out.append(record_to_dict(r));
        return out;
      },
      "Synthetic V(D)J repertoire with ground-truth annotations.");

  m.def("auc", &eval::auc, py::arg("scores"), py::arg("labels"),
        "Rank-statistic ROC AUC with midranks for ties.");
  m.def("accuracy", &eval::accuracy, py::arg("predictions"), py::arg("labels"));
  m.def("f1_binary", &eval::f1_binary, py::arg("predictions"), py::arg("labels"));
  m.def("f1_weighted", &eval::f1_weighted, py::arg("predictions"), py::arg("labels"),
        py::arg("n_classes"));
  m.def("mcc_binary", &eval::mcc_binary, py::arg("predictions"), py::arg("labels"));
  m.def("mcc_multiclass", &eval::mcc_multiclass, py::arg("predictions"), py::arg("labels"),
        py::arg("n_classes"));
  m.def("trimmed_mean", &eval::trimmed_mean, py::arg("values"), py::arg("trim_fraction") = 0.1);
  m.def(
      "cumulative_match_curve",
      [](const std::vector<int>& hits) {
        auto c = eval::cumulative_match_curve(hits);
        return py::make_tuple(c.cumulative.y, c.baseline.y);
      },
      py::arg("ranked_hits"), "Returns (cumulative, random_baseline) y-series.");
  m.def(
      "binder_match",
      [](const std::vector<std::pair<std::string, double>>& scored,
         const std::vector<std::string>& db, double prob_threshold, double identity_threshold) {
        std::vector<eval::ScoredSequence> seqs;
        for (const auto& [cdr3, score] : scored) seqs.push_back({cdr3, cdr3, score});
        auto r = eval::binder_match(seqs, db, prob_threshold, identity_threshold);
        py::dict d;
        d["total"] = r.row.total;
        d["hits"] = r.row.hits;
        d["hit_rate_percent"] = r.row.hit_rate_percent;
        return d;
      },
      py::arg("scored_cdr3"), py::arg("db"), py::arg("prob_threshold"),
      py::arg("identity_threshold") = 0.85);

  m.def(
      "chi_squared_test",
      [](const std::vector<std::vector<double>>& table) {
        auto r = stats::chi_squared_test(table);
        return py::make_tuple(r.statistic, r.dof, r.p_value);
      },
      py::arg("table"), "Pearson chi-squared; returns (statistic, dof, p).");
  m.def(
      "kruskal_wallis_test",
      [](const std::vector<std::vector<double>>& groups) {
        auto r = stats::kruskal_wallis_test(groups);
        return py::make_tuple(r.statistic, r.dof, r.p_value);
      },
      py::arg("groups"), "Tie-corrected Kruskal-Wallis; returns (H, dof, p).");
  m.def(
      "welch_t_test",
      [](const std::vector<double>& a, const std::vector<double>& b) {
        auto r = stats::welch_t_test(a, b);
        return py::make_tuple(r.statistic, r.dof, r.p_value);
      },
      py::arg("a"), py::arg("b"), "Welch t-test; returns (t, dof, two-sided p).");

  m.def(
      "encode_pair",
      [](const std::string& antibody, const std::string& germline, int max_len) {
        auto enc = objectives::encode_pair(antibody, germline, max_len);
        return py::make_tuple(enc.token_ids, enc.segment_ids);
      },
      py::arg("antibody"), py::arg("germline"), py::arg("max_len") = objectives::kDefaultMaxLen,
      "Returns ([CLS] a [SEP] g token ids, segment ids).");

  m.attr("__version__") = "0.1.0";
}
