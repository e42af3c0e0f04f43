// seqrec: preprocess, train, evaluate and sweep sequential recommenders.

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "seqrec/error.hpp"
#include "seqrec/experiment.hpp"
#include "seqrec/synthetic.hpp"

namespace {

std::vector<double> parse_values(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(part, &used));
      if (used != part.size()) throw std::invalid_argument(part);
    } catch (const std::exception&) {
      throw seqrec::ConfigError("--values expects comma-separated numbers, got '" + part + "'");
    }
  }
  return out;
}

void write_csv(const seqrec::SyntheticData& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw seqrec::DataError("cannot write '" + path + "'");
  out << "user,item,timestamp\n";
  for (const auto& x : data.log.interactions) out << x.user << "," << x.item << "," << x.timestamp << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sequential recommendation with graph denoising and gated long/short-term fusion"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "out";

  auto* pre = app.add_subcommand("preprocess", "Slice the log, refine the interval graphs and write them to disk");
  pre->add_option("--config", config_path, "Config file")->required();
  pre->add_option("--out", out_dir, "Output directory");

  auto* tr = app.add_subcommand("train", "Train on preprocessed graphs and write a checkpoint");
  tr->add_option("--config", config_path, "Config file")->required();
  tr->add_option("--out", out_dir, "Output directory");

  std::string checkpoint;
  std::string topn;
  auto* ev = app.add_subcommand("evaluate", "Score a checkpoint on the held-out interval");
  ev->add_option("--config", config_path, "Config file")->required();
  ev->add_option("--checkpoint", checkpoint, "Checkpoint stem or .bin file")->required();
  ev->add_option("--topn", topn, "Comma-separated cut-offs, e.g. 5,10,20");
  ev->add_option("--out", out_dir, "Output directory");

  std::string axis;
  std::string values;
  auto* sw = app.add_subcommand("sweep", "Retrain over a grid of one hyper-parameter");
  sw->add_option("--config", config_path, "Config file")->required();
  sw->add_option("--axis", axis, "beta, lambda1 or min_sim")->required();
  sw->add_option("--values", values, "Comma-separated values")->required();
  sw->add_option("--out", out_dir, "Output directory");

  seqrec::SyntheticSpec spec;
  std::string csv_path;
  auto* gen = app.add_subcommand("generate", "Write a synthetic interaction log as CSV");
  gen->add_option("--output", csv_path, "CSV path")->required();
  gen->add_option("--users", spec.users);
  gen->add_option("--items", spec.items);
  gen->add_option("--communities", spec.communities);
  gen->add_option("--noise-rate", spec.noise_rate);
  gen->add_option("--drift", spec.drift);
  gen->add_option("--inactive-rate", spec.inactive_rate);
  gen->add_option("--intervals", spec.intervals, "Intervals including the held-out one");
  gen->add_option("--events-per-interval", spec.events_per_interval);
  gen->add_option("--seed", spec.seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(seqrec::ExitCode::kConfig);
  }

  try {
    if (gen->parsed()) {
      write_csv(seqrec::generate_synthetic(spec), csv_path);
      return 0;
    }
    seqrec::ExperimentConfig cfg = seqrec::load_config(config_path);
    if (pre->parsed()) {
      seqrec::cmd_preprocess(cfg, out_dir);
    } else if (tr->parsed()) {
      seqrec::cmd_train(cfg, out_dir);
    } else if (ev->parsed()) {
      if (!topn.empty()) cfg.set("topn", topn);
      seqrec::cmd_evaluate(cfg, checkpoint, out_dir);
    } else if (sw->parsed()) {
      seqrec::cmd_sweep(cfg, axis, parse_values(values), out_dir);
    }
  } catch (const seqrec::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(seqrec::ExitCode::kData);
  }
  return 0;
}
