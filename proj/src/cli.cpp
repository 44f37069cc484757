#include "abevo/cli.hpp"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "abevo/corpus.hpp"
#include "abevo/csvio.hpp"
#include "abevo/kvconfig.hpp"
#include "abevo/metrics.hpp"
#include "abevo/model.hpp"
#include "abevo/simgen.hpp"
#include "abevo/stats.hpp"
#include "abevo/svgplot.hpp"
#include "abevo/tasks.hpp"
#include "abevo/train.hpp"

namespace abevo::cli {

namespace fs = std::filesystem;
using nlohmann::json;

const char* kToolVersion = "0.1.0";

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, const std::string& content) {
  fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write file: " + path);
  out << content;
}

std::string iso_timestamp() {
  auto now = std::chrono::system_clock::now();
  std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

struct Manifest {
  std::string subcommand;
  std::string config_path;
  uint64_t seed = 0;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
};

void write_manifest(const Manifest& m, const std::string& anchor_output) {
  json j;
  j["subcommand"] = m.subcommand;
  j["config"] = m.config_path;
  j["seed"] = m.seed;
  j["inputs"] = m.inputs;
  j["outputs"] = m.outputs;
  j["tool_version"] = kToolVersion;
  j["timestamp"] = iso_timestamp();
  fs::path anchor(anchor_output);
  fs::path path = fs::is_directory(anchor) ? anchor / "manifest.json"
                                           : fs::path(anchor_output + ".manifest.json");
  write_file(path.string(), j.dump(2) + "\n");
}

// seed precedence: --seed flag > SEED env > config file > built-in default
uint64_t resolve_seed(const CLI::Option* seed_opt, uint64_t flag_value, const KvConfig& cfg,
                      uint64_t fallback) {
  if (seed_opt && seed_opt->count() > 0) return flag_value;
  if (const char* env = std::getenv("SEED")) {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      throw DataError("SEED environment variable is not an integer");
    }
  }
  return cfg.get_u64("seed", fallback);
}

model::ModelConfig model_config_from_kv(const KvConfig& cfg, uint64_t seed) {
  model::ModelConfig mc;
  mc.layers = static_cast<int>(cfg.get_int("layers", mc.layers));
  mc.heads = static_cast<int>(cfg.get_int("heads", mc.heads));
  mc.hidden = static_cast<int>(cfg.get_int("hidden", mc.hidden));
  mc.ffn = static_cast<int>(cfg.get_int("ffn", mc.ffn));
  mc.max_len = static_cast<int>(cfg.get_int("max_len", mc.max_len));
  mc.dropout = cfg.get_double("dropout", mc.dropout);
  mc.seed = cfg.get_u64("model_seed", seed);
  mc.validate();
  return mc;
}

train::TrainConfig finetune_config_from_kv(const KvConfig& cfg, uint64_t seed) {
  train::TrainConfig tc;
  tc.phase = train::Phase::Finetune;
  tc.epochs = static_cast<int>(cfg.get_int("epochs", 30));
  tc.batch_size = static_cast<int>(cfg.get_int("batch_size", 16));
  tc.peak_lr = cfg.get_double("peak_lr", 3e-4);
  tc.warmup_steps = cfg.get_int("warmup_steps", 20);
  tc.patience = static_cast<int>(cfg.get_int("patience", 5));
  tc.freeze_encoder = cfg.get_int("freeze_encoder", 0) != 0;
  tc.seed = seed;
  return tc;
}

std::vector<corpus::CorpusChunk> load_chunk_dir(const std::string& dir) {
  json index = json::parse(read_file((fs::path(dir) / "chunks.json").string()));
  std::vector<corpus::CorpusChunk> chunks;
  for (const auto& e : index.at("chunks")) {
    auto role = e.at("role").get<std::string>() == "validation" ? corpus::ChunkRole::Validation
                                                                : corpus::ChunkRole::Train;
    chunks.push_back(corpus::read_chunk_jsonl((fs::path(dir) / e.at("file").get<std::string>()).string(),
                                              e.at("index").get<int>(), role));
  }
  return chunks;
}

std::vector<std::string> load_binder_db(const std::string& path) {
  std::vector<std::string> db;
  std::istringstream in(read_file(path));
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    for (char& c : line) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    for (char c : line) {
      if (!seqcore::Alphabet::is_residue_char(c))
        throw DataError("binder database line " + std::to_string(line_no) +
                        ": invalid residue '" + std::string(1, c) + "'");
    }
    db.push_back(line);
  }
  if (db.empty()) throw DataError("binder database is empty: " + path);
  return db;
}

std::map<std::string, double> load_scores_csv(const std::string& path) {
  auto rows = csv_parse(read_file(path));
  std::map<std::string, double> out;
  for (size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() < 2)
      throw DataError("scores CSV row " + std::to_string(r + 1) + ": expected id,score");
    if (r == 0 && rows[r][0] == "id") continue;  // optional header
    try {
      out[rows[r][0]] = std::stod(rows[r][1]);
    } catch (const std::exception&) {
      throw DataError("scores CSV row " + std::to_string(r + 1) + ": score is not a number");
    }
  }
  if (out.empty()) throw DataError("scores CSV is empty: " + path);
  return out;
}

std::string curves_to_csv(const std::map<std::string, eval::CurveSeries>& curves) {
  std::string out = csv_join({"series", "x", "y"});
  for (const auto& [name, s] : curves) {
    for (size_t i = 0; i < s.x.size(); ++i) {
      std::ostringstream x, y;
      x.precision(12);
      y.precision(12);
      x << s.x[i];
      y << s.y[i];
      out += csv_join({name, x.str(), y.str()});
    }
  }
  return out;
}

std::map<std::string, eval::CurveSeries> curves_from_csv(const std::string& text) {
  auto rows = csv_parse(text);
  if (rows.empty()) throw DataError("curve CSV: empty file");
  std::map<std::string, eval::CurveSeries> out;
  for (size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() < 3) throw DataError("curve CSV: expected series,x,y columns");
    auto& s = out[rows[r][0]];
    s.x.push_back(std::stod(rows[r][1]));
    s.y.push_back(std::stod(rows[r][2]));
  }
  return out;
}

json test_result_json(const stats::TestResult& t) {
  return json{{"test", t.test_name},
              {"statistic", t.statistic},
              {"dof", t.dof},
              {"p_value", t.p_value}};
}

// ---- subcommand bodies ----------------------------------------------------

int cmd_simulate(const std::string& spec_path, const std::string& out_path,
                 const CLI::Option* seed_opt, uint64_t seed_flag) {
  KvConfig cfg = KvConfig::load(spec_path);
  uint64_t seed = resolve_seed(seed_opt, seed_flag, cfg, 42);
  cfg.set("seed", std::to_string(seed));
  auto spec = simgen::RepertoireSpec::from_config(cfg);
  auto lib_cfg = simgen::library_config_from_kv(cfg);
  simgen::GeneLibrary lib;
  if (cfg.has("v_fasta") || cfg.has("d_fasta") || cfg.has("j_fasta")) {
    auto pool = [&](const std::string& key) {
      std::vector<std::string> segs;
      for (auto& [id, seq] : seqcore::parse_fasta(read_file(cfg.get_str(key, ""))))
        segs.push_back(seq);
      return segs;
    };
    lib.v_segments = pool("v_fasta");
    lib.d_segments = pool("d_fasta");
    lib.j_segments = pool("j_fasta");
    lib.seed = lib_cfg.seed;
    lib.validate();
  } else {
    lib = simgen::make_library(lib_cfg);
  }
  auto records = simgen::generate_repertoire(spec, lib);
  corpus::write_records_csv(out_path, records);
  write_manifest({"simulate", spec_path, seed, {spec_path}, {out_path}}, out_path);
  std::cout << "simulate: wrote " << records.size() << " records to " << out_path << "\n";
  return 0;
}

int cmd_preprocess(const std::string& in_path, const std::string& out_dir, int chunk_size,
                   double identity_threshold, const CLI::Option* seed_opt, uint64_t seed_flag,
                   int threads) {
  KvConfig empty;
  uint64_t seed = resolve_seed(seed_opt, seed_flag, empty, 42);
  auto records = corpus::read_records_csv(in_path);
  for (auto& r : records) r.mutation_positions = seqcore::derive_mutations(r.antibody, r.germline);
  size_t n_in = records.size();
  records = corpus::dedup(records);
  size_t n_dedup = records.size();
  records = corpus::cluster_filter(records, identity_threshold, threads);
  size_t n_filtered = records.size();
  auto result = corpus::shuffle_and_chunk(std::move(records), chunk_size, seed);
  if (result.train_empty_warning)
    std::cerr << "warning: single chunk, the train set is empty (all records are validation)\n";

  fs::create_directories(out_dir);
  json index;
  index["chunk_size"] = chunk_size;
  index["input_records"] = n_in;
  index["after_dedup"] = n_dedup;
  index["after_cluster_filter"] = n_filtered;
  json chunk_list = json::array();
  std::vector<std::string> outputs;
  for (const auto& chunk : result.chunks) {
    char name[32];
    std::snprintf(name, sizeof(name), "chunk_%04d.jsonl", chunk.index);
    corpus::write_chunk_jsonl((fs::path(out_dir) / name).string(), chunk);
    chunk_list.push_back({{"file", name},
                          {"index", chunk.index},
                          {"role", chunk.role == corpus::ChunkRole::Validation ? "validation"
                                                                               : "train"},
                          {"records", chunk.records.size()}});
    outputs.push_back(name);
  }
  index["chunks"] = chunk_list;
  write_file((fs::path(out_dir) / "chunks.json").string(), index.dump(2) + "\n");
  write_manifest({"preprocess", "", seed, {in_path}, outputs}, out_dir);
  std::cout << "preprocess: " << n_in << " -> dedup " << n_dedup << " -> filter " << n_filtered
            << " -> " << result.chunks.size() << " chunks in " << out_dir << "\n";
  return 0;
}

int cmd_pretrain(const std::string& chunks_dir, const std::string& config_path,
                 const std::string& out_dir, const CLI::Option* seed_opt, uint64_t seed_flag) {
  KvConfig cfg = config_path.empty() ? KvConfig() : KvConfig::load(config_path);
  uint64_t seed = resolve_seed(seed_opt, seed_flag, cfg, 7);
  auto chunks = load_chunk_dir(chunks_dir);
  model::ModelConfig mc = model_config_from_kv(cfg, seed);

  train::TrainConfig mlm_cfg;
  mlm_cfg.phase = train::Phase::Mlm;
  mlm_cfg.steps = cfg.get_int("mlm_steps", 500);
  mlm_cfg.batch_size = static_cast<int>(cfg.get_int("batch_size", 32));
  mlm_cfg.peak_lr = cfg.get_double("mlm_peak_lr", 1e-3);
  mlm_cfg.warmup_steps = cfg.get_int("mlm_warmup", 100);
  mlm_cfg.eval_interval = cfg.get_int("eval_interval", 100);
  mlm_cfg.eval_max_records = static_cast<int>(cfg.get_int("eval_max_records", 256));
  mlm_cfg.mlm_ratio = cfg.get_double("mlm_ratio", 0.15);
  mlm_cfg.agp_swap_prob = cfg.get_double("agp_swap_prob", 0.3);
  mlm_cfg.seed = seed;

  train::TrainConfig evo_cfg = mlm_cfg;
  evo_cfg.phase = train::Phase::Evolution;
  evo_cfg.steps = cfg.get_int("evo_steps", 500);
  evo_cfg.peak_lr = cfg.get_double("evo_peak_lr", 1e-4);
  evo_cfg.warmup_steps = cfg.get_int("evo_warmup", 50);
  evo_cfg.evo_include_mlm = cfg.get_int("evo_include_mlm", 0) != 0;

  auto outcome = train::pretrain(chunks, mc, mlm_cfg, evo_cfg);

  fs::create_directories(out_dir);
  std::string dtype = cfg.get_str("checkpoint_dtype", "f32");
  std::string ckpt = (fs::path(out_dir) / "checkpoint.bin").string();
  model::save_checkpoint(ckpt, outcome.encoder, outcome.step, nullptr, dtype);
  write_file((fs::path(out_dir) / "training_log.csv").string(), train::log_to_csv(outcome.log));
  json diag;
  diag["step"] = outcome.final_diagnostics.step;
  diag["mlm_accuracy"] = outcome.final_diagnostics.mlm_accuracy;
  diag["agp_accuracy"] = outcome.final_diagnostics.agp_accuracy;
  diag["position_accuracy"] = outcome.final_diagnostics.position_accuracy;
  diag["mutation_accuracy"] = outcome.final_diagnostics.mutation_accuracy;
  diag["validation_mlm_loss"] = outcome.final_diagnostics.loss;
  diag["max_phase2_lr"] = outcome.max_phase2_lr;
  write_file((fs::path(out_dir) / "diagnostics.json").string(), diag.dump(2) + "\n");
  write_manifest({"pretrain", config_path, seed, {chunks_dir},
                  {"checkpoint.bin", "training_log.csv", "diagnostics.json"}},
                 out_dir);
  std::cout << "pretrain: " << outcome.step << " steps; diagnostics in " << out_dir << "\n";
  return 0;
}

tasks::TaskConfig task_config(const KvConfig& cfg, uint64_t seed, int folds,
                              const model::Encoder* init) {
  tasks::TaskConfig tc;
  tc.model = model_config_from_kv(cfg, seed);
  tc.trainer = finetune_config_from_kv(cfg, seed);
  tc.cv_folds = folds;
  tc.init = init;
  return tc;
}

int cmd_finetune(const std::string& data_path, const std::string& task_name,
                 const std::string& out_dir, const std::string& init_path,
                 const std::string& config_path, int folds, const std::string& split_path,
                 const CLI::Option* seed_opt, uint64_t seed_flag) {
  KvConfig cfg = config_path.empty() ? KvConfig() : KvConfig::load(config_path);
  uint64_t seed = resolve_seed(seed_opt, seed_flag, cfg, 7);
  auto records = corpus::read_records_csv(data_path);
  for (auto& r : records)
    if (r.mutation_positions.empty())
      r.mutation_positions = seqcore::derive_mutations(r.antibody, r.germline);

  std::optional<model::Encoder> init;
  model::ModelConfig mc = model_config_from_kv(cfg, seed);
  if (!init_path.empty()) {
    auto ckpt = model::load_checkpoint(init_path);
    init = model::encoder_from_checkpoint(ckpt);
    mc = ckpt.config;
  }
  tasks::TaskConfig tc = task_config(cfg, seed, folds, init ? &*init : nullptr);
  tc.model = mc;

  std::optional<tasks::FixedSplit> split;
  if (!split_path.empty()) {
    tasks::FixedSplit fsplit;
    auto rows = csv_parse(read_file(split_path));
    for (size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() < 2) throw DataError("split CSV: expected id,split columns");
      if (r == 0 && rows[r][0] == "id") continue;
      fsplit.assignment[rows[r][0]] = rows[r][1];
    }
    split = std::move(fsplit);
  }

  tasks::TaskKind kind = tasks::task_kind_from_name(task_name);
  eval::EvalReport report;
  switch (kind) {
    case tasks::TaskKind::Binding: report = tasks::run_binding(records, tc, split); break;
    case tasks::TaskKind::Paratope: report = tasks::run_paratope(records, tc); break;
    case tasks::TaskKind::Bcell: report = tasks::run_bcell(records, tc); break;
    case tasks::TaskKind::Discovery:
      throw DataError("use the discover subcommand for the discovery task");
  }
  fs::create_directories(out_dir);
  write_file((fs::path(out_dir) / "report.json").string(), report.to_json());
  write_manifest({"finetune", config_path, seed, {data_path, init_path}, {"report.json"}},
                 out_dir);
  std::cout << "finetune: wrote report.json to " << out_dir << "\n";
  return 0;
}

int cmd_discover(const std::string& profiles_path, const std::string& db_path,
                 const std::string& out_dir, const std::string& init_path,
                 const std::string& config_path, double trim, int folds, int threads,
                 const CLI::Option* seed_opt, uint64_t seed_flag) {
  KvConfig cfg = config_path.empty() ? KvConfig() : KvConfig::load(config_path);
  uint64_t seed = resolve_seed(seed_opt, seed_flag, cfg, 7);
  auto records = corpus::read_records_csv(profiles_path);
  auto db = load_binder_db(db_path);

  std::optional<model::Encoder> init;
  model::ModelConfig mc = model_config_from_kv(cfg, seed);
  if (!init_path.empty()) {
    auto ckpt = model::load_checkpoint(init_path);
    init = model::encoder_from_checkpoint(ckpt);
    mc = ckpt.config;
  }
  tasks::TaskConfig tc = task_config(cfg, seed, folds, init ? &*init : nullptr);
  tc.model = mc;
  tasks::DiscoveryOptions options;
  options.trim_fraction = trim;
  options.threads = threads;

  auto result = tasks::run_discovery(records, db, tc, options);

  fs::create_directories(out_dir);
  write_file((fs::path(out_dir) / "report.json").string(), result.report.to_json());
  std::string ranked = csv_join({"rank", "id", "cdr3", "score", "best_identity", "hit85", "hit90"});
  for (const auto& r : result.ranked) {
    std::ostringstream score, ident;
    score.precision(12);
    ident.precision(12);
    score << r.score;
    ident << r.best_identity;
    ranked += csv_join({std::to_string(r.rank), r.id, r.cdr3, score.str(), ident.str(),
                        std::to_string(r.hit85), std::to_string(r.hit90)});
  }
  write_file((fs::path(out_dir) / "ranked.csv").string(), ranked);
  write_file((fs::path(out_dir) / "curves.csv").string(), curves_to_csv(result.report.curves));
  write_file((fs::path(out_dir) / "curves.svg").string(),
             svgplot::line_chart(result.report.curves, "Cumulative matched sequences", "rank",
                                 "matched"));
  write_manifest({"discover", config_path, seed, {profiles_path, db_path, init_path},
                  {"report.json", "ranked.csv", "curves.csv", "curves.svg"}},
                 out_dir);
  std::cout << "discover: wrote report.json, ranked.csv, curves.csv, curves.svg to " << out_dir
            << "\n";
  return 0;
}

int cmd_evaluate(const std::string& data_path, const std::string& scores_path,
                 const std::string& task_name, const std::string& out_dir,
                 const std::string& db_path, double trim, int threads,
                 const CLI::Option* seed_opt, uint64_t seed_flag) {
  KvConfig empty;
  uint64_t seed = resolve_seed(seed_opt, seed_flag, empty, 7);
  auto records = corpus::read_records_csv(data_path);
  auto scores = load_scores_csv(scores_path);
  tasks::TaskKind kind = tasks::task_kind_from_name(task_name);

  fs::create_directories(out_dir);
  std::vector<std::string> outputs = {"report.json"};
  if (kind == tasks::TaskKind::Discovery) {
    if (db_path.empty()) throw DataError("evaluate --task discovery requires --db");
    tasks::DiscoveryOptions options;
    options.trim_fraction = trim;
    options.threads = threads;
    auto result = tasks::evaluate_external_discovery(records, scores, load_binder_db(db_path),
                                                     options);
    write_file((fs::path(out_dir) / "report.json").string(), result.report.to_json());
    write_file((fs::path(out_dir) / "curves.csv").string(), curves_to_csv(result.report.curves));
    outputs.push_back("curves.csv");
  } else if (kind == tasks::TaskKind::Binding || kind == tasks::TaskKind::Discovery) {
    auto report = tasks::evaluate_external_binary(records, scores);
    write_file((fs::path(out_dir) / "report.json").string(), report.to_json());
  } else {
    auto report = tasks::evaluate_external_binary(records, scores);
    write_file((fs::path(out_dir) / "report.json").string(), report.to_json());
  }
  write_manifest({"evaluate", "", seed, {data_path, scores_path}, outputs}, out_dir);
  std::cout << "evaluate: wrote report.json to " << out_dir << "\n";
  return 0;
}

int cmd_stats(const std::string& data_path, const std::string& out_path,
              const std::string& group_field) {
  auto records = corpus::read_records_csv(data_path);
  if (records.empty()) throw DataError("stats: empty dataset");

  auto group_key = [&](const seqcore::AntibodyRecord& r) -> std::string {
    if (group_field == "label") return r.label;
    if (group_field == "stage") return r.stage;
    throw DataError("stats: --group-by must be label or stage");
  };

  // germline subtype: the V region (germline prefix up to the CDR3 start+3)
  std::map<std::string, size_t> subtype_index;
  std::map<std::string, size_t> group_index;
  for (const auto& r : records) {
    if (!r.cdr3) throw DataError("stats: record " + r.id + " has no CDR3 span");
    std::string v = r.germline.substr(0, static_cast<size_t>(r.cdr3->start + 3));
    subtype_index.emplace(v, subtype_index.size());
    group_index.emplace(group_key(r), group_index.size());
  }
  if (group_index.size() < 2) throw DataError("stats: needs >= 2 label groups");

  std::vector<std::vector<double>> usage(group_index.size(),
                                         std::vector<double>(subtype_index.size(), 0.0));
  std::vector<std::vector<double>> mutation_counts(group_index.size());
  for (const auto& r : records) {
    std::string v = r.germline.substr(0, static_cast<size_t>(r.cdr3->start + 3));
    size_t g = group_index[group_key(r)];
    usage[g][subtype_index[v]] += 1.0;
    mutation_counts[g].push_back(
        static_cast<double>(seqcore::derive_mutations(r.antibody, r.germline).size()));
  }

  stats::SpecificityReport report;
  report.germline_usage = stats::chi_squared_test(usage);
  report.mutation_counts = stats::kruskal_wallis_test(mutation_counts);
  if (group_index.size() == 2) {
    report.has_pairwise_t = true;
    report.pairwise_t = stats::welch_t_test(mutation_counts[0], mutation_counts[1]);
  }

  json j;
  j["germline_usage"] = test_result_json(report.germline_usage);
  j["mutation_counts"] = test_result_json(report.mutation_counts);
  if (report.has_pairwise_t) j["pairwise_t"] = test_result_json(report.pairwise_t);
  std::vector<std::string> group_names(group_index.size());
  for (const auto& [name, idx] : group_index) group_names[idx] = name;
  j["groups"] = group_names;
  j["n_germline_subtypes"] = subtype_index.size();
  j["group_by"] = group_field;
  write_file(out_path, j.dump(2) + "\n");
  write_manifest({"stats", "", 0, {data_path}, {out_path}}, out_path);
  std::cout << "stats: germline-usage p=" << report.germline_usage.p_value
            << ", mutation-count p=" << report.mutation_counts.p_value << " -> " << out_path
            << "\n";
  return 0;
}

int cmd_gradcheck(const std::string& config_path, int samples, double h,
                  const CLI::Option* seed_opt, uint64_t seed_flag) {
  KvConfig cfg = config_path.empty() ? KvConfig() : KvConfig::load(config_path);
  uint64_t seed = resolve_seed(seed_opt, seed_flag, cfg, 7);
  model::ModelConfig mc;
  mc.layers = static_cast<int>(cfg.get_int("layers", 1));
  mc.heads = static_cast<int>(cfg.get_int("heads", 2));
  mc.hidden = static_cast<int>(cfg.get_int("hidden", 16));
  mc.ffn = static_cast<int>(cfg.get_int("ffn", 32));
  mc.max_len = static_cast<int>(cfg.get_int("max_len", 64));
  mc.seed = seed;
  mc.validate();

  simgen::LibraryConfig lc;
  lc.n_v = 2; lc.n_d = 2; lc.n_j = 2;
  lc.v_len_min = 8; lc.v_len_max = 10;
  lc.d_len_min = 4; lc.d_len_max = 5;
  lc.j_len_min = 5; lc.j_len_max = 6;
  lc.seed = seed;
  simgen::RepertoireSpec spec;
  spec.n_profiles = 2;
  spec.sequences_per_profile = 4;
  spec.shm_rate = 0.15;
  spec.junction_insert_min = 1;
  spec.junction_insert_max = 2;
  spec.seed = seed;
  auto records = simgen::generate_repertoire(spec, simgen::make_library(lc));

  double worst = 0.0;
  for (const std::string head : {"mlm", "agp", "mpp"}) {
    model::Encoder enc = model::Encoder::init(mc);
    double err = 0.0;
    if (head == "mlm") {
      std::vector<objectives::PairedEncoding> encs;
      std::vector<std::vector<int>> overrides;
      std::vector<int> targets;
      std::vector<std::vector<int>> selected;
      for (size_t i = 0; i < 4; ++i) {
        auto e = objectives::encode_pair(records[i], mc.max_len);
        Rng rng = Rng::stream(seed, 900 + i);
        auto plan = objectives::mlm_plan(e, 0.15, rng);
        overrides.push_back(objectives::apply_plan(e, plan));
        selected.push_back(plan.selected);
        targets.insert(targets.end(), plan.targets.begin(), plan.targets.end());
        encs.push_back(std::move(e));
      }
      auto batch = model::assemble_batch(encs, overrides);
      std::vector<int64_t> rows;
      for (size_t i = 0; i < selected.size(); ++i)
        for (int pos : selected[i]) rows.push_back(static_cast<int64_t>(i) * batch.seq_len + pos);
      err = model::gradient_check(
          enc,
          [&]() {
            auto fwd = enc.forward(batch);
            return model::loss_mlm(enc.token_logits(fwd, rows), targets);
          },
          samples, h, seed + 1);
    } else if (head == "agp") {
      std::vector<seqcore::AntibodyRecord> subset(records.begin(), records.begin() + 4);
      Rng rng = Rng::stream(seed, 901);
      auto insts = objectives::agp_batch(subset, 0.5, rng, mc.max_len);
      std::vector<objectives::PairedEncoding> encs;
      std::vector<int> labels;
      for (auto& inst : insts) {
        encs.push_back(std::move(inst.encoding));
        labels.push_back(inst.label);
      }
      auto batch = model::assemble_batch(encs);
      err = model::gradient_check(
          enc,
          [&]() {
            auto fwd = enc.forward(batch);
            return model::loss_agp(enc.agp_logits(fwd), labels);
          },
          samples, h, seed + 1);
    } else {
      std::vector<objectives::MPPInstance> insts;
      std::vector<objectives::PairedEncoding> encs;
      for (size_t i = 0; i < 4; ++i) {
        insts.push_back(objectives::mpp_build(records[i], mc.max_len));
        encs.push_back(insts.back().encoding);
      }
      auto batch = model::assemble_batch(encs);
      std::vector<int64_t> pos_rows, res_rows;
      std::vector<double> pos_labels, pos_w;
      std::vector<int> res_targets;
      std::vector<double> res_w;
      for (size_t i = 0; i < insts.size(); ++i) {
        const auto& inst = insts[i];
        int n = inst.encoding.germline_len;
        for (int j = 0; j < n; ++j) {
          pos_rows.push_back(static_cast<int64_t>(i) * batch.seq_len +
                             inst.encoding.germline_pos(j));
          pos_labels.push_back(inst.germline_labels[static_cast<size_t>(j)]);
          pos_w.push_back(0.25 / n);
        }
        for (size_t k = 0; k < inst.masked_positions.size(); ++k) {
          res_rows.push_back(static_cast<int64_t>(i) * batch.seq_len + inst.masked_positions[k]);
          res_targets.push_back(inst.masked_targets[k]);
          res_w.push_back(0.25 / static_cast<double>(inst.masked_positions.size()));
        }
      }
      err = model::gradient_check(
          enc,
          [&]() {
            auto fwd = enc.forward(batch);
            auto loss = model::bce_weighted(enc.position_logits(fwd, pos_rows), pos_labels, pos_w);
            if (!res_rows.empty())
              loss = model::add(loss, model::xent_weighted(enc.token_logits(fwd, res_rows),
                                                           res_targets, res_w));
            return loss;
          },
          samples, h, seed + 1);
    }
    std::cout << "gradcheck " << head << ": max relative error " << err << "\n";
    worst = std::max(worst, err);
  }
  std::cout << "gradcheck: max relative error " << worst << "\n";
  if (!(worst < 1e-4)) {
    std::cerr << "gradcheck failed: " << worst << " >= 1e-4\n";
    return 3;
  }
  return 0;
}

int cmd_plot(const std::string& curve_path, const std::string& out_path,
             const std::string& title, const std::string& x_label, const std::string& y_label) {
  auto curves = curves_from_csv(read_file(curve_path));
  write_file(out_path, svgplot::line_chart(curves, title, x_label, y_label));
  write_manifest({"plot", "", 0, {curve_path}, {out_path}}, out_path);
  std::cout << "plot: wrote " << out_path << "\n";
  return 0;
}

}  // namespace

int dispatch(int argc, const char* const* argv) {
  CLI::App app{"antibody evolution-aware pretraining and evaluation toolkit"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  int threads_default = static_cast<int>(std::thread::hardware_concurrency());
  if (threads_default < 1) threads_default = 1;

  // simulate
  auto* sim = app.add_subcommand("simulate", "generate a synthetic repertoire CSV");
  std::string sim_spec, sim_out;
  uint64_t sim_seed = 0;
  sim->add_option("--spec", sim_spec, "repertoire spec (key=value)")->required();
  sim->add_option("--out", sim_out, "output corpus CSV")->required();
  auto* sim_seed_opt = sim->add_option("--seed", sim_seed, "RNG seed override");

  // preprocess
  auto* pre = app.add_subcommand("preprocess", "dedup, cluster-filter, shuffle and chunk");
  std::string pre_in, pre_out;
  int pre_chunk = 1000, pre_threads = threads_default;
  double pre_identity = 0.7;
  uint64_t pre_seed = 0;
  pre->add_option("--in", pre_in, "corpus CSV")->required();
  pre->add_option("--out", pre_out, "output chunk directory")->required();
  pre->add_option("--chunk-size", pre_chunk, "records per chunk (default 1000)");
  pre->add_option("--identity-threshold", pre_identity, "cluster filter identity (default 0.7)");
  pre->add_option("--threads", pre_threads, "worker threads");
  auto* pre_seed_opt = pre->add_option("--seed", pre_seed, "RNG seed override");

  // pretrain
  auto* pt = app.add_subcommand("pretrain", "two-phase pretraining (MLM, then AGP+MPP)");
  std::string pt_chunks, pt_config, pt_out;
  uint64_t pt_seed = 0;
  pt->add_option("--chunks", pt_chunks, "chunk directory from preprocess")->required();
  pt->add_option("--config", pt_config, "training config (key=value)");
  pt->add_option("--out", pt_out, "output directory")->required();
  auto* pt_seed_opt = pt->add_option("--seed", pt_seed, "RNG seed override");

  // finetune
  auto* ft = app.add_subcommand("finetune", "finetune and evaluate a downstream task");
  std::string ft_data, ft_task, ft_out, ft_init, ft_config, ft_split;
  int ft_folds = 10;
  uint64_t ft_seed = 0;
  ft->add_option("--data", ft_data, "task dataset CSV")->required();
  ft->add_option("--task", ft_task, "binding | paratope | bcell")->required();
  ft->add_option("--out", ft_out, "output directory")->required();
  ft->add_option("--init", ft_init, "pretraining checkpoint");
  ft->add_option("--config", ft_config, "finetuning config (key=value)");
  ft->add_option("--folds", ft_folds, "cross-validation folds (default 10)");
  ft->add_option("--split", ft_split, "fixed split CSV (id,split)");
  auto* ft_seed_opt = ft->add_option("--seed", ft_seed, "RNG seed override");

  // evaluate (external scores)
  auto* ev = app.add_subcommand("evaluate", "evaluate externally produced per-sequence scores");
  std::string ev_data, ev_scores, ev_task = "binding", ev_out, ev_db;
  double ev_trim = 0.1;
  int ev_threads = threads_default;
  uint64_t ev_seed = 0;
  ev->add_option("--data", ev_data, "task dataset CSV")->required();
  ev->add_option("--scores", ev_scores, "two-column CSV (id,score)")->required();
  ev->add_option("--task", ev_task, "binding | discovery");
  ev->add_option("--out", ev_out, "output directory")->required();
  ev->add_option("--db", ev_db, "binder database (one CDR-H3 per line)");
  ev->add_option("--trim", ev_trim, "trimmed-mean fraction (default 0.1)");
  ev->add_option("--threads", ev_threads, "worker threads");
  auto* ev_seed_opt = ev->add_option("--seed", ev_seed, "RNG seed override");

  // discover
  auto* dc = app.add_subcommand("discover", "train a noisy-label classifier and match binders");
  std::string dc_profiles, dc_db, dc_out, dc_init, dc_config;
  double dc_trim = 0.1;
  int dc_folds = 10, dc_threads = threads_default;
  uint64_t dc_seed = 0;
  dc->add_option("--profiles", dc_profiles, "profile dataset CSV")->required();
  dc->add_option("--db", dc_db, "binder database (one CDR-H3 per line)")->required();
  dc->add_option("--out", dc_out, "output directory")->required();
  dc->add_option("--init", dc_init, "pretraining checkpoint");
  dc->add_option("--config", dc_config, "finetuning config (key=value)");
  dc->add_option("--trim", dc_trim, "trimmed-mean fraction (default 0.1)");
  dc->add_option("--folds", dc_folds, "cross-validation folds (default 10)");
  dc->add_option("--threads", dc_threads, "worker threads");
  auto* dc_seed_opt = dc->add_option("--seed", dc_seed, "RNG seed override");

  // stats
  auto* st = app.add_subcommand("stats", "germline-usage and mutation-count significance tests");
  std::string st_data, st_out, st_group = "label";
  st->add_option("--data", st_data, "dataset CSV")->required();
  st->add_option("--out", st_out, "output report JSON")->required();
  st->add_option("--group-by", st_group, "label | stage (default label)");

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every loss head");
  std::string gc_config;
  int gc_samples = 200;
  double gc_h = 1e-5;
  uint64_t gc_seed = 0;
  gc->add_option("--config", gc_config, "model config (key=value)");
  gc->add_option("--samples", gc_samples, "parameters to probe per head (default 200)");
  gc->add_option("--spacing", gc_h, "finite-difference spacing (default 1e-5)");
  auto* gc_seed_opt = gc->add_option("--seed", gc_seed, "RNG seed override");

  // plot
  auto* pl = app.add_subcommand("plot", "render a curve CSV as a standalone SVG");
  std::string pl_curve, pl_out, pl_title = "curves", pl_x = "x", pl_y = "y";
  pl->add_option("--curve", pl_curve, "curve CSV (series,x,y)")->required();
  pl->add_option("--out", pl_out, "output SVG")->required();
  pl->add_option("--title", pl_title, "chart title");
  pl->add_option("--x-label", pl_x, "x axis label");
  pl->add_option("--y-label", pl_y, "y axis label");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (sim->parsed()) return cmd_simulate(sim_spec, sim_out, sim_seed_opt, sim_seed);
    if (pre->parsed())
      return cmd_preprocess(pre_in, pre_out, pre_chunk, pre_identity, pre_seed_opt, pre_seed,
                            pre_threads);
    if (pt->parsed()) return cmd_pretrain(pt_chunks, pt_config, pt_out, pt_seed_opt, pt_seed);
    if (ft->parsed())
      return cmd_finetune(ft_data, ft_task, ft_out, ft_init, ft_config, ft_folds, ft_split,
                          ft_seed_opt, ft_seed);
    if (ev->parsed())
      return cmd_evaluate(ev_data, ev_scores, ev_task, ev_out, ev_db, ev_trim, ev_threads,
                          ev_seed_opt, ev_seed);
    if (dc->parsed())
      return cmd_discover(dc_profiles, dc_db, dc_out, dc_init, dc_config, dc_trim, dc_folds,
                          dc_threads, dc_seed_opt, dc_seed);
    if (st->parsed()) return cmd_stats(st_data, st_out, st_group);
    if (gc->parsed()) return cmd_gradcheck(gc_config, gc_samples, gc_h, gc_seed_opt, gc_seed);
    if (pl->parsed()) return cmd_plot(pl_curve, pl_out, pl_title, pl_x, pl_y);
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

int dispatch(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.push_back("abevo");
  for (const auto& a : args) argv.push_back(a.c_str());
  return dispatch(static_cast<int>(argv.size()), argv.data());
}

}  // namespace abevo::cli
