#include "seqrec/experiment.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

#include "seqrec/checkpoint.hpp"
#include "seqrec/error.hpp"
#include "seqrec/graph_io.hpp"

namespace seqrec {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used == v.size()) return x;
  } catch (...) {
  }
  throw ConfigError("'" + key + "' expects a number, got '" + v + "'");
}

std::size_t parse_size(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long long x = std::stoll(v, &used);
    if (used == v.size() && x >= 0) return static_cast<std::size_t>(x);
  } catch (...) {
  }
  throw ConfigError("'" + key + "' expects a non-negative integer, got '" + v + "'");
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("'" + key + "' expects true or false, got '" + v + "'");
}

std::vector<std::size_t> parse_sizes(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string part;
  while (std::getline(ss, part, ',')) out.push_back(parse_size(key, trim(part)));
  if (out.empty()) throw ConfigError("'" + key + "' expects a comma-separated list");
  return out;
}

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string join(const std::vector<std::size_t>& xs) {
  std::string s;
  for (std::size_t k = 0; k < xs.size(); ++k) s += (k ? "," : "") + std::to_string(xs[k]);
  return s;
}

using Setter = std::function<void(ExperimentConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"data", [](auto& c, auto&, auto& v) { c.data = v; }},
      {"delimiter",
       [](auto& c, auto& k, auto& v) {
         if (v == "tab" || v == "\\t") {
           c.delimiter = '\t';
         } else if (v.size() == 1) {
           c.delimiter = v[0];
         } else {
           throw ConfigError("'" + k + "' expects one character or 'tab'");
         }
       }},
      {"intervals", [](auto& c, auto& k, auto& v) { c.intervals = parse_size(k, v); }},
      {"beta", [](auto& c, auto& k, auto& v) { c.refine.beta = parse_double(k, v); }},
      {"min_sim", [](auto& c, auto& k, auto& v) { c.refine.min_sim = parse_double(k, v); }},
      {"max_aug_per_user", [](auto& c, auto& k, auto& v) { c.refine.max_aug_per_user = parse_size(k, v); }},
      {"min_items_for_detection",
       [](auto& c, auto& k, auto& v) { c.refine.min_items_for_detection = parse_size(k, v); }},
      {"similarity_top_k", [](auto& c, auto& k, auto& v) { c.refine.similarity.top_k = parse_size(k, v); }},
      {"similarity_epsilon", [](auto& c, auto& k, auto& v) { c.refine.similarity.epsilon = parse_double(k, v); }},
      {"denoise", [](auto& c, auto& k, auto& v) { c.refine.denoise = parse_bool(k, v); }},
      {"augment", [](auto& c, auto& k, auto& v) { c.refine.augment = parse_bool(k, v); }},
      {"dim", [](auto& c, auto& k, auto& v) { c.model.short_term.dim = parse_size(k, v); }},
      {"gcn_layers", [](auto& c, auto& k, auto& v) { c.model.short_term.layers = parse_size(k, v); }},
      {"edge_dropout", [](auto& c, auto& k, auto& v) { c.model.short_term.edge_dropout = parse_double(k, v); }},
      {"message_dropout",
       [](auto& c, auto& k, auto& v) { c.model.short_term.message_dropout = parse_double(k, v); }},
      {"heads", [](auto& c, auto& k, auto& v) { c.model.heads = parse_size(k, v); }},
      {"attention_layers", [](auto& c, auto& k, auto& v) { c.model.attention_layers = parse_size(k, v); }},
      {"max_seq_len", [](auto& c, auto& k, auto& v) { c.model.max_seq_len = parse_size(k, v); }},
      {"init_std", [](auto& c, auto& k, auto& v) { c.model.init_std = parse_double(k, v); }},
      {"model_seed", [](auto& c, auto& k, auto& v) { c.model.seed = parse_size(k, v); }},
      {"lambda1", [](auto& c, auto& k, auto& v) { c.loss.lambda1 = parse_double(k, v); }},
      {"lambda2", [](auto& c, auto& k, auto& v) { c.loss.lambda2 = parse_double(k, v); }},
      {"detach_gate", [](auto& c, auto& k, auto& v) { c.loss.detach_gate = parse_bool(k, v); }},
      {"epochs", [](auto& c, auto& k, auto& v) { c.train.epochs = parse_size(k, v); }},
      {"batch_size", [](auto& c, auto& k, auto& v) { c.train.batch_size = parse_size(k, v); }},
      {"lr", [](auto& c, auto& k, auto& v) { c.train.lr = parse_double(k, v); }},
      {"lr_decay", [](auto& c, auto& k, auto& v) { c.train.lr_decay = parse_double(k, v); }},
      {"seed", [](auto& c, auto& k, auto& v) { c.train.seed = parse_size(k, v); }},
      {"pairs_per_user", [](auto& c, auto& k, auto& v) { c.train.pairs_per_user = parse_size(k, v); }},
      {"eval_every", [](auto& c, auto& k, auto& v) { c.train.eval_every = parse_size(k, v); }},
      {"patience", [](auto& c, auto& k, auto& v) { c.train.patience = parse_size(k, v); }},
      {"monitor_n", [](auto& c, auto& k, auto& v) { c.train.monitor_n = parse_size(k, v); }},
      {"topn", [](auto& c, auto& k, auto& v) { c.eval.topn = parse_sizes(k, v); }},
      {"sampled_negatives", [](auto& c, auto& k, auto& v) { c.eval.sampled_negatives = parse_size(k, v); }},
      {"eval_seed", [](auto& c, auto& k, auto& v) { c.eval.seed = parse_size(k, v); }},
      {"disable_refine", [](auto& c, auto& k, auto& v) { c.disable_refine = parse_bool(k, v); }},
      {"disable_mean_branch", [](auto& c, auto& k, auto& v) { c.disable_mean_branch = parse_bool(k, v); }},
      {"disable_gru_branch", [](auto& c, auto& k, auto& v) { c.disable_gru_branch = parse_bool(k, v); }},
      {"fixed_gate_value",
       [](auto& c, auto& k, auto& v) {
         if (v.empty() || v == "none") {
           c.fixed_gate_value.reset();
         } else {
           c.fixed_gate_value = parse_double(k, v);
         }
       }},
  };
  return table;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw DataError("failed writing '" + path.string() + "'");
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError("cannot create directory '" + dir.string() + "': " + ec.message());
}

void echo_config(const ExperimentConfig& cfg, const std::filesystem::path& out) {
  write_text(out / "config.txt", cfg.to_text());
}

InteractionLog read_log(const ExperimentConfig& cfg) {
  if (cfg.data.empty()) throw ConfigError("'data' (interaction log path) is not set");
  ParseOptions opts;
  opts.delimiter = cfg.delimiter;
  return parse_log_file(cfg.data, opts);
}

ExperimentConfig validated(ExperimentConfig cfg) {
  cfg.validate();
  return cfg;
}

}  // namespace

void ExperimentConfig::validate() {
  if (intervals == 0) throw ConfigError("intervals must be at least 1");
  refine.validate();
  loss.validate();
  train.validate();
  eval.validate();
  const int modes = (disable_mean_branch ? 1 : 0) + (disable_gru_branch ? 1 : 0) + (fixed_gate_value ? 1 : 0);
  if (modes > 1) {
    throw ConfigError("disable_mean_branch, disable_gru_branch and fixed_gate_value are mutually exclusive");
  }
  if (disable_mean_branch) {
    model.gate_mode = GateMode::kGruOnly;
  } else if (disable_gru_branch) {
    model.gate_mode = GateMode::kMeanOnly;
  } else if (fixed_gate_value) {
    model.gate_mode = GateMode::kFixed;
    model.fixed_gate = *fixed_gate_value;
  } else {
    model.gate_mode = GateMode::kLearned;
  }
  model.validate();
}

std::string ExperimentConfig::to_text() const {
  std::ostringstream s;
  auto b = [](bool x) { return x ? "true" : "false"; };
  s << "data = " << data << "\n";
  s << "delimiter = " << (delimiter == '\t' ? std::string("tab") : std::string(1, delimiter)) << "\n";
  s << "intervals = " << intervals << "\n";
  s << "beta = " << fmt(refine.beta) << "\n";
  s << "min_sim = " << fmt(refine.min_sim) << "\n";
  s << "max_aug_per_user = " << refine.max_aug_per_user << "\n";
  s << "min_items_for_detection = " << refine.min_items_for_detection << "\n";
  s << "similarity_top_k = " << refine.similarity.top_k << "\n";
  s << "similarity_epsilon = " << fmt(refine.similarity.epsilon) << "\n";
  s << "denoise = " << b(refine.denoise) << "\n";
  s << "augment = " << b(refine.augment) << "\n";
  s << "dim = " << model.short_term.dim << "\n";
  s << "gcn_layers = " << model.short_term.layers << "\n";
  s << "edge_dropout = " << fmt(model.short_term.edge_dropout) << "\n";
  s << "message_dropout = " << fmt(model.short_term.message_dropout) << "\n";
  s << "heads = " << model.heads << "\n";
  s << "attention_layers = " << model.attention_layers << "\n";
  s << "max_seq_len = " << model.max_seq_len << "\n";
  s << "init_std = " << fmt(model.init_std) << "\n";
  s << "model_seed = " << model.seed << "\n";
  s << "lambda1 = " << fmt(loss.lambda1) << "\n";
  s << "lambda2 = " << fmt(loss.lambda2) << "\n";
  s << "detach_gate = " << b(loss.detach_gate) << "\n";
  s << "epochs = " << train.epochs << "\n";
  s << "batch_size = " << train.batch_size << "\n";
  s << "lr = " << fmt(train.lr) << "\n";
  s << "lr_decay = " << fmt(train.lr_decay) << "\n";
  s << "seed = " << train.seed << "\n";
  s << "pairs_per_user = " << train.pairs_per_user << "\n";
  s << "eval_every = " << train.eval_every << "\n";
  s << "patience = " << train.patience << "\n";
  s << "monitor_n = " << train.monitor_n << "\n";
  s << "topn = " << join(eval.topn) << "\n";
  s << "sampled_negatives = " << eval.sampled_negatives << "\n";
  s << "eval_seed = " << eval.seed << "\n";
  s << "disable_refine = " << b(disable_refine) << "\n";
  s << "disable_mean_branch = " << b(disable_mean_branch) << "\n";
  s << "disable_gru_branch = " << b(disable_gru_branch) << "\n";
  s << "fixed_gate_value = " << (fixed_gate_value ? fmt(*fixed_gate_value) : std::string("none")) << "\n";
  return s.str();
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  const auto& table = setters();
  auto it = table.find(key);
  if (it == table.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second(*this, key, value);
}

ExperimentConfig parse_config(std::istream& in) {
  ExperimentConfig cfg;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(number) + ": expected 'key = value'");
    }
    try {
      cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(number) + ": " + e.what());
    }
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  ExperimentConfig cfg = parse_config(in);
  // Relative data paths are taken relative to the config file.
  if (!cfg.data.empty() && std::filesystem::path(cfg.data).is_relative()) {
    const auto candidate = path.parent_path() / cfg.data;
    if (std::filesystem::exists(candidate)) cfg.data = candidate.string();
  }
  return cfg;
}

Preprocessed preprocess(const InteractionLog& log, const ExperimentConfig& cfg) {
  Preprocessed p;
  p.split = split_log(log, cfg.intervals);
  if (cfg.disable_refine) {
    p.report.intervals.resize(p.split.inputs.num_intervals);
    for (std::size_t t = 0; t < p.split.inputs.num_intervals; ++t) {
      p.report.intervals[t].initial = p.split.inputs.user_item[t].nnz();
      p.report.initial += p.report.intervals[t].initial;
    }
    return p;
  }
  auto [refined, report] = refine_all(p.split.inputs, cfg.refine);
  p.split.inputs = std::move(refined);
  p.report = report;
  return p;
}

MetricsReport evaluate_model(const Model& model, const SplitData& split, const EvalOptions& options) {
  const ModelInputs inputs = prepare_inputs(split.inputs, model.config().max_seq_len);
  const std::vector<RankingTask> tasks = make_tasks(split.inputs, split.targets, options);
  return evaluate(model.forward(inputs, Mode::kEval), tasks, options.topn);
}

TrainingRun train_and_evaluate(const SplitData& split, const ExperimentConfig& raw) {
  const ExperimentConfig cfg = validated(raw);
  const IntervalGraphs& g = split.inputs;
  TrainingRun run{Model(g.num_users, g.num_items, g.num_intervals, cfg.model), {}, {}};
  const ModelInputs inputs = prepare_inputs(g, cfg.model.max_seq_len);
  const std::vector<RankingTask> tasks = make_tasks(g, split.targets, cfg.eval);
  if (tasks.empty()) throw DataError("no user has an interaction in the held-out interval");
  run.result = train(run.model, inputs, split.targets, tasks, cfg.train, cfg.loss, cfg.eval.topn);
  run.metrics = evaluate(run.model.forward(inputs, Mode::kEval), tasks, cfg.eval.topn);
  return run;
}

void cmd_preprocess(const ExperimentConfig& raw, const std::filesystem::path& out) {
  const ExperimentConfig cfg = validated(raw);
  ensure_dir(out);
  echo_config(cfg, out);
  const Preprocessed p = preprocess(read_log(cfg), cfg);
  save_split(out / "graphs", p.split);
  write_text(out / "refinement_report.json", p.report.to_json().dump(2) + "\n");
  std::cout << p.report.to_json().dump(2) << "\n";
}

void cmd_train(const ExperimentConfig& raw, const std::filesystem::path& out) {
  const ExperimentConfig cfg = validated(raw);
  const SplitData split = load_split(out / "graphs");
  ensure_dir(out);
  echo_config(cfg, out);
  TrainingRun run = train_and_evaluate(split, cfg);
  nlohmann::json extra = {{"model", cfg.model.to_json()},
                          {"num_users", split.inputs.num_users},
                          {"num_items", split.inputs.num_items},
                          {"num_intervals", split.inputs.num_intervals},
                          {"best_epoch", run.result.best_epoch}};
  save_checkpoint(out / "model", run.model.parameters(), extra);
  write_text(out / "train_log.json", run.result.log_json().dump(2) + "\n");
  write_text(out / "metrics.json", run.metrics.to_json().dump(2) + "\n");
  write_text(out / "metrics.txt", run.metrics.to_table());
  std::cout << run.metrics.to_table();
}

MetricsReport cmd_evaluate(const ExperimentConfig& raw, const std::filesystem::path& checkpoint,
                           const std::filesystem::path& out) {
  const ExperimentConfig cfg = validated(raw);
  std::filesystem::path stem = checkpoint;
  if (stem.extension() == ".bin" || stem.extension() == ".json") stem.replace_extension();
  const nlohmann::json manifest = load_checkpoint_manifest(stem);
  const SplitData split = load_split(out / "graphs");
  ModelConfig model_cfg;
  std::size_t users = 0, items = 0, intervals = 0;
  try {
    model_cfg = ModelConfig::from_json(manifest.at("model"));
    users = manifest.at("num_users").get<std::size_t>();
    items = manifest.at("num_items").get<std::size_t>();
    intervals = manifest.at("num_intervals").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError("checkpoint manifest is incomplete: " + std::string(e.what()));
  }
  if (users != split.inputs.num_users || items != split.inputs.num_items ||
      intervals != split.inputs.num_intervals) {
    throw DataError("checkpoint was trained on different graphs; rerun `seqrec train`");
  }
  Model model(users, items, intervals, model_cfg);
  model.load_parameters(load_checkpoint_tensors(stem));
  const MetricsReport metrics = evaluate_model(model, split, cfg.eval);
  ensure_dir(out);
  write_text(out / "metrics.json", metrics.to_json().dump(2) + "\n");
  write_text(out / "metrics.txt", metrics.to_table());
  std::cout << metrics.to_table();
  return metrics;
}

void cmd_sweep(const ExperimentConfig& raw, const std::string& axis, const std::vector<double>& values,
               const std::filesystem::path& out) {
  if (axis != "beta" && axis != "lambda1" && axis != "min_sim") {
    throw ConfigError("sweep axis must be beta, lambda1 or min_sim, got '" + axis + "'");
  }
  if (values.empty()) throw ConfigError("sweep needs at least one value");
  ExperimentConfig base = validated(raw);
  if (std::find(base.eval.topn.begin(), base.eval.topn.end(), std::size_t{10}) == base.eval.topn.end()) {
    base.eval.topn.push_back(10);
  }
  ensure_dir(out);
  echo_config(base, out);
  const InteractionLog log = read_log(base);
  std::string csv = "value,HR@10,NDCG@10\n";
  for (double v : values) {
    ExperimentConfig cfg = base;
    cfg.set(axis, fmt(v));
    cfg.validate();
    const Preprocessed p = preprocess(log, cfg);
    const TrainingRun run = train_and_evaluate(p.split, cfg);
    csv += fmt(v) + "," + fmt(run.metrics.hr_at(10)) + "," + fmt(run.metrics.ndcg_at(10)) + "\n";
    std::cout << axis << "=" << fmt(v) << "  HR@10=" << run.metrics.hr_at(10)
              << "  NDCG@10=" << run.metrics.ndcg_at(10) << "\n";
  }
  write_text(out / ("sweep_" + axis + ".csv"), csv);
}

}  // namespace seqrec
