#pragma once

// Experiment configuration and the preprocess / train / evaluate / sweep
// pipelines behind the command-line tool.

#include <filesystem>
#include <istream>
#include <optional>
#include <string>
#include <vector>

#include "seqrec/corpus.hpp"
#include "seqrec/evaluator.hpp"
#include "seqrec/model.hpp"
#include "seqrec/refine.hpp"
#include "seqrec/trainer.hpp"

namespace seqrec {

struct ExperimentConfig {
  std::string data;  // interaction log path
  char delimiter = ',';
  std::size_t intervals = 4;  // T, input intervals; the log is cut into T + 1

  RefineConfig refine;
  ModelConfig model;
  LossConfig loss;
  TrainConfig train;
  EvalOptions eval;

  bool disable_refine = false;
  bool disable_mean_branch = false;
  bool disable_gru_branch = false;
  std::optional<double> fixed_gate_value;

  /// Applies the ablation flags to model.gate_mode and checks every section.
  void validate();
  /// Flat `key = value` rendering, parseable by parse_config.
  std::string to_text() const;
  /// Sets one key; throws ConfigError for unknown keys or bad values.
  void set(const std::string& key, const std::string& value);
};

ExperimentConfig parse_config(std::istream& in);
ExperimentConfig load_config(const std::filesystem::path& path);

struct Preprocessed {
  SplitData split;  // inputs refined unless disabled
  RefinementReport report;
};

Preprocessed preprocess(const InteractionLog& log, const ExperimentConfig& cfg);

struct TrainingRun {
  Model model;
  TrainResult result;
  MetricsReport metrics;
};

/// Trains on a preprocessed split and evaluates the final parameters.
TrainingRun train_and_evaluate(const SplitData& split, const ExperimentConfig& cfg);

/// Model scores for the held-out targets of `split`.
MetricsReport evaluate_model(const Model& model, const SplitData& split, const EvalOptions& options);

// Commands writing under `out`. Each returns normally or throws seqrec::Error.
void cmd_preprocess(const ExperimentConfig& cfg, const std::filesystem::path& out);
void cmd_train(const ExperimentConfig& cfg, const std::filesystem::path& out);
MetricsReport cmd_evaluate(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint,
                           const std::filesystem::path& out);
void cmd_sweep(const ExperimentConfig& cfg, const std::string& axis, const std::vector<double>& values,
               const std::filesystem::path& out);

}  // namespace seqrec
