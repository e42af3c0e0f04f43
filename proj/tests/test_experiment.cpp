#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "seqrec/error.hpp"
#include "seqrec/experiment.hpp"
#include "seqrec/synthetic.hpp"

using namespace seqrec;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("seqrec_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

ExperimentConfig small_config(const fs::path& dir, double noise = 0.2) {
  SyntheticSpec spec;
  spec.noise_rate = noise;
  spec.seed = 21;
  std::ofstream csv(dir / "log.csv");
  csv << "user,item,timestamp\n";
  for (const auto& x : generate_synthetic(spec).log.interactions)
    csv << "u" << x.user << ",i" << x.item << "," << x.timestamp << "\n";
  csv.close();
  std::istringstream text("data = " + (dir / "log.csv").string() +
                          "\nintervals = 3\ndim = 8\nepochs = 3\nlr = 0.01\nbatch_size = 128\n");
  return parse_config(text);
}

}  // namespace

TEST_CASE("config parsing, validation and echo") {
  std::istringstream text("# comment\nbeta = 0.3\nmin_sim=0.8\ntopn = 5,15,20\nfixed_gate_value = 0.0\n");
  ExperimentConfig cfg = parse_config(text);
  CHECK(cfg.refine.beta == 0.3);
  CHECK(cfg.refine.min_sim == 0.8);
  CHECK(cfg.eval.topn == std::vector<std::size_t>{5, 15, 20});
  cfg.validate();
  CHECK(cfg.model.gate_mode == GateMode::kFixed);
  CHECK(cfg.model.fixed_gate == 0.0);

  std::istringstream echoed(cfg.to_text());
  ExperimentConfig back = parse_config(echoed);
  back.validate();
  CHECK(back.to_text() == cfg.to_text());
}

TEST_CASE("config errors") {
  std::istringstream unknown("nope = 1\n");
  CHECK_THROWS_AS(parse_config(unknown), ConfigError);
  std::istringstream bad("beta = lots\n");
  CHECK_THROWS_AS(parse_config(bad), ConfigError);
  std::istringstream heads("dim = 6\nheads = 4\n");
  ExperimentConfig cfg = parse_config(heads);
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  std::istringstream both("disable_mean_branch = true\ndisable_gru_branch = true\n");
  ExperimentConfig c2 = parse_config(both);
  CHECK_THROWS_AS(c2.validate(), ConfigError);
  std::istringstream lam("lambda1 = 2\n");
  ExperimentConfig c3 = parse_config(lam);
  CHECK_THROWS_AS(c3.validate(), ConfigError);
}

TEST_CASE("disable_refine writes exactly the corpus graphs") {
  const fs::path dir = scratch("bypass");
  ExperimentConfig cfg = small_config(dir);
  cfg.disable_refine = true;
  cmd_preprocess(cfg, dir / "a");
  const Preprocessed raw{split_log(parse_log_file(cfg.data), 3), {}};
  for (std::size_t t = 0; t < 3; ++t) {
    std::ostringstream expected;
    for (UserId u = 0; u < raw.split.inputs.num_users; ++u)
      for (const auto& e : raw.split.inputs.user_item[t].row(u)) expected << u << " " << e.item << " 1\n";
    CHECK(slurp(dir / "a" / "graphs" / ("user_item_" + std::to_string(t) + ".txt")) == expected.str());
  }
  fs::remove_all(dir);
}

TEST_CASE("preprocess is idempotent and reports counts") {
  const fs::path dir = scratch("idem");
  const ExperimentConfig cfg = small_config(dir, 0.3);
  cmd_preprocess(cfg, dir / "a");
  cmd_preprocess(cfg, dir / "b");
  for (const auto& entry : fs::directory_iterator(dir / "a" / "graphs")) {
    CHECK(slurp(entry.path()) == slurp(dir / "b" / "graphs" / entry.path().filename()));
  }
  const std::string report = slurp(dir / "a" / "refinement_report.json");
  CHECK(report.find("\"initial\"") != std::string::npos);
  CHECK(report.find("\"noisy\"") != std::string::npos);
  CHECK(report.find("\"augmented\"") != std::string::npos);
  CHECK(fs::exists(dir / "a" / "config.txt"));
  fs::remove_all(dir);
}

TEST_CASE("train then evaluate reproduces the training metrics") {
  const fs::path dir = scratch("train");
  const ExperimentConfig cfg = small_config(dir);
  CHECK_THROWS_AS(cmd_train(cfg, dir / "out"), DataError);  // not preprocessed yet
  cmd_preprocess(cfg, dir / "out");
  cmd_train(cfg, dir / "out");
  CHECK(fs::exists(dir / "out" / "model.bin"));
  CHECK(fs::exists(dir / "out" / "train_log.json"));
  const std::string trained = slurp(dir / "out" / "metrics.json");
  const MetricsReport m = cmd_evaluate(cfg, dir / "out" / "model.bin", dir / "out");
  CHECK(slurp(dir / "out" / "metrics.json") == trained);
  CHECK(m.users > 0);
  CHECK_THROWS_AS(cmd_evaluate(cfg, dir / "missing", dir / "out"), DataError);
  fs::remove_all(dir);
}

TEST_CASE("fixed gate 0 makes the final score the mean-branch score") {
  const fs::path dir = scratch("gate0");
  ExperimentConfig cfg = small_config(dir);
  cfg.fixed_gate_value = 0.0;
  cfg.validate();
  const Preprocessed p = preprocess(parse_log_file(cfg.data), cfg);
  const Model model(p.split.inputs.num_users, p.split.inputs.num_items, 3, cfg.model);
  const Model::Output out = model.forward(prepare_inputs(p.split.inputs, cfg.model.max_seq_len), Mode::kEval);
  for (UserId u = 0; u < model.num_users(); ++u) {
    const std::vector<double> scores = Model::score_items(out, u);
    for (ItemId j = 0; j < model.num_items(); ++j) {
      double mean = 0.0;
      for (std::size_t k = 0; k < cfg.model.short_term.dim; ++k) mean += out.user_mean.at(u, k) * out.item_mean.at(j, k);
      CHECK(scores[j] == doctest::Approx(mean).epsilon(1e-14));
    }
  }
  fs::remove_all(dir);
}

TEST_CASE("sweep writes one row per value") {
  const fs::path dir = scratch("sweep");
  const ExperimentConfig cfg = small_config(dir);
  cmd_sweep(cfg, "beta", {0.3, 0.5, 0.7}, dir / "out");
  const std::string csv = slurp(dir / "out" / "sweep_beta.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
  CHECK(csv.rfind("value,HR@10,NDCG@10\n", 0) == 0);
  CHECK_THROWS_AS(cmd_sweep(cfg, "dim", {1}, dir / "out"), ConfigError);
  fs::remove_all(dir);
}
