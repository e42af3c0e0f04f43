#include "seqrec/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "seqrec/error.hpp"

namespace seqrec {

namespace {

const char* gate_mode_name(GateMode m) {
  switch (m) {
    case GateMode::kLearned: return "learned";
    case GateMode::kFixed: return "fixed";
    case GateMode::kGruOnly: return "gru_only";
    case GateMode::kMeanOnly: return "mean_only";
  }
  return "learned";
}

GateMode gate_mode_from(const std::string& s) {
  if (s == "learned") return GateMode::kLearned;
  if (s == "fixed") return GateMode::kFixed;
  if (s == "gru_only") return GateMode::kGruOnly;
  if (s == "mean_only") return GateMode::kMeanOnly;
  throw ConfigError("unknown gate mode '" + s + "'");
}

// splitmix64, used to derive independent per-tensor initialisation streams.
std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

void ModelConfig::validate() const {
  short_term.validate();
  if (heads == 0 || short_term.dim % heads != 0) throw ConfigError("dim must be divisible by the number of heads");
  if (attention_layers == 0) throw ConfigError("attention_layers must be at least 1");
  if (max_seq_len == 0) throw ConfigError("max_seq_len must be at least 1");
  if (!(init_std > 0.0)) throw ConfigError("init_std must be positive");
  if (gate_mode == GateMode::kFixed && !(fixed_gate >= 0.0 && fixed_gate <= 1.0)) {
    throw ConfigError("fixed_gate_value must lie in [0, 1]");
  }
}

nlohmann::json ModelConfig::to_json() const {
  return {{"dim", short_term.dim},
          {"layers", short_term.layers},
          {"edge_dropout", short_term.edge_dropout},
          {"message_dropout", short_term.message_dropout},
          {"heads", heads},
          {"attention_layers", attention_layers},
          {"max_seq_len", max_seq_len},
          {"init_std", init_std},
          {"seed", seed},
          {"gate_mode", gate_mode_name(gate_mode)},
          {"fixed_gate", fixed_gate}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.short_term.dim = j.at("dim").get<std::size_t>();
    c.short_term.layers = j.at("layers").get<std::size_t>();
    c.short_term.edge_dropout = j.at("edge_dropout").get<double>();
    c.short_term.message_dropout = j.at("message_dropout").get<double>();
    c.heads = j.at("heads").get<std::size_t>();
    c.attention_layers = j.at("attention_layers").get<std::size_t>();
    c.max_seq_len = j.at("max_seq_len").get<std::size_t>();
    c.init_std = j.at("init_std").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.gate_mode = gate_mode_from(j.at("gate_mode").get<std::string>());
    c.fixed_gate = j.at("fixed_gate").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError("model config in checkpoint manifest is incomplete: " + std::string(e.what()));
  }
  return c;
}

ModelInputs prepare_inputs(const IntervalGraphs& graphs, std::size_t max_seq_len) {
  ModelInputs in;
  in.num_users = graphs.num_users;
  in.num_items = graphs.num_items;
  for (std::size_t t = 0; t < graphs.num_intervals; ++t) {
    auto a = std::make_shared<const SparseMatrix>(normalize_adjacency(graphs.user_item[t]));
    in.adjacency_t.push_back(std::make_shared<const SparseMatrix>(a->transpose()));
    in.adjacency.push_back(std::move(a));
  }
  std::vector<std::vector<ItemId>> sequences(graphs.num_users);
  std::size_t longest = 1;
  for (UserId u = 0; u < graphs.num_users; ++u) {
    sequences[u] = recent_items(graphs, u, max_seq_len);
    longest = std::max(longest, sequences[u].size());
  }
  in.instant = make_instant_batch(sequences, longest);
  return in;
}

// ---------------------------------------------------------------------------

Model::Model(std::size_t num_users, std::size_t num_items, std::size_t num_intervals, const ModelConfig& config)
    : config_(config),
      num_users_(num_users),
      num_items_(num_items),
      num_intervals_(num_intervals),
      init_state_(config.seed) {
  config_.validate();
  if (num_users == 0 || num_items == 0 || num_intervals == 0) {
    throw DataError("model needs at least one user, item and interval");
  }
  const std::size_t d = config_.short_term.dim;
  for (std::size_t t = 0; t < num_intervals; ++t) {
    user_tables_.push_back(add_param("user_emb/" + std::to_string(t), num_users, d, config_.init_std));
    item_tables_.push_back(add_param("item_emb/" + std::to_string(t), num_items, d, config_.init_std));
  }
  user_gru_ = make_gru("user_gru");
  item_gru_ = make_gru("item_gru");
  user_interval_attn_ = make_attention("user_interval_attn");
  item_interval_attn_ = make_attention("item_interval_attn");
  for (std::size_t l = 0; l < config_.attention_layers; ++l)
    instant_layers_.push_back(make_attention("instant_attn/" + std::to_string(l)));
  positions_.positions = add_param("positions", config_.max_seq_len, d, config_.init_std);
  const std::size_t wide = config_.short_term.layers * d;
  user_mean_proj_ = add_param("user_mean_proj", wide, d, 1.0 / std::sqrt(static_cast<double>(wide)));
  item_mean_proj_ = add_param("item_mean_proj", wide, d, 1.0 / std::sqrt(static_cast<double>(wide)));
  gate_.w1 = add_param("gate/w1", 2 * d, d, 1.0 / std::sqrt(2.0 * static_cast<double>(d)));
  gate_.b1 = add_zero_param("gate/b1", 1, d);
  gate_.w2 = add_param("gate/w2", d, 1, 1.0 / std::sqrt(static_cast<double>(d)));
  gate_.b2 = add_zero_param("gate/b2", 1, 1);
}

Tensor Model::add_param(const std::string& name, std::size_t rows, std::size_t cols, double stddev) {
  init_state_ = mix(init_state_);
  std::mt19937_64 rng(init_state_);
  std::normal_distribution<double> normal(0.0, stddev);
  std::vector<double> values(rows * cols);
  for (double& v : values) v = normal(rng);
  Tensor t = Tensor::from(rows, cols, std::move(values), true);
  params_.push_back({name, t});
  return t;
}

Tensor Model::add_zero_param(const std::string& name, std::size_t rows, std::size_t cols) {
  Tensor t = Tensor::zeros(rows, cols, true);
  params_.push_back({name, t});
  return t;
}

GRUParams Model::make_gru(const std::string& prefix) {
  const std::size_t d = config_.short_term.dim;
  const std::size_t wide = config_.short_term.layers * d;
  const double s = 1.0 / std::sqrt(static_cast<double>(d));
  GRUParams g;
  g.input_proj = add_param(prefix + "/input_proj", wide, d, 1.0 / std::sqrt(static_cast<double>(wide)));
  g.w_z = add_param(prefix + "/w_z", d, d, s);
  g.w_r = add_param(prefix + "/w_r", d, d, s);
  g.w_h = add_param(prefix + "/w_h", d, d, s);
  g.u_z = add_param(prefix + "/u_z", d, d, s);
  g.u_r = add_param(prefix + "/u_r", d, d, s);
  g.u_h = add_param(prefix + "/u_h", d, d, s);
  g.b_z = add_zero_param(prefix + "/b_z", 1, d);
  g.b_r = add_zero_param(prefix + "/b_r", 1, d);
  g.b_h = add_zero_param(prefix + "/b_h", 1, d);
  return g;
}

AttentionParams Model::make_attention(const std::string& prefix) {
  const std::size_t d = config_.short_term.dim;
  const double s = 1.0 / std::sqrt(static_cast<double>(d));
  AttentionParams a;
  a.heads = config_.heads;
  a.w_q = add_param(prefix + "/w_q", d, d, s);
  a.w_k = add_param(prefix + "/w_k", d, d, s);
  a.w_v = add_param(prefix + "/w_v", d, d, s);
  a.w_o = add_param(prefix + "/w_o", d, d, s);
  return a;
}

Model::Output Model::forward(const ModelInputs& inputs, Mode mode, std::uint64_t seed) const {
  if (inputs.num_users != num_users_ || inputs.num_items != num_items_ ||
      inputs.adjacency.size() != num_intervals_) {
    throw DataError("model inputs do not match the model's users, items or intervals");
  }
  Output out;
  for (std::size_t t = 0; t < num_intervals_; ++t) {
    IntervalEmbeddings e = encode_interval(inputs.adjacency[t], inputs.adjacency_t[t], user_tables_[t],
                                           item_tables_[t], config_.short_term, mode, mix(seed + t));
    out.user_short.push_back(e.user);
    out.item_short.push_back(e.item);
  }
  out.user_interval = interval_attention(gru_sequence(out.user_short, user_gru_), user_interval_attn_);
  out.item_interval = interval_attention(gru_sequence(out.item_short, item_gru_), item_interval_attn_);
  out.user_instant = instant_attention(inputs.instant, out.item_interval, positions_, instant_layers_);
  out.user_mean = mean_pool(out.user_short, user_mean_proj_);
  out.item_mean = mean_pool(out.item_short, item_mean_proj_);
  switch (config_.gate_mode) {
    case GateMode::kLearned:
      out.gate = gate(out.user_mean, out.user_interval, gate_);
      break;
    case GateMode::kFixed:
      out.gate = Tensor::from(num_users_, 1, std::vector<double>(num_users_, config_.fixed_gate));
      break;
    case GateMode::kGruOnly:
      out.gate = Tensor::from(num_users_, 1, std::vector<double>(num_users_, 1.0));
      break;
    case GateMode::kMeanOnly:
      out.gate = Tensor::from(num_users_, 1, std::vector<double>(num_users_, 0.0));
      break;
  }
  return out;
}

Model::Loss Model::loss(const Output& out, std::span<const Sample> batch, const LossConfig& cfg) const {
  std::vector<std::int64_t> users, pos, neg;
  for (const Sample& s : batch) {
    users.push_back(s.user);
    pos.push_back(s.positive);
    neg.push_back(s.negative);
  }
  const Tensor w = ops::embedding_lookup(out.gate, users);
  const Tensor u_mean = ops::embedding_lookup(out.user_mean, users);
  const Tensor u_int = ops::embedding_lookup(out.user_interval, users);
  const Tensor u_inst = ops::embedding_lookup(out.user_instant, users);
  const Predictions p = predict(u_mean, ops::embedding_lookup(out.item_mean, pos), u_int, u_inst,
                                ops::embedding_lookup(out.item_interval, pos), w);
  const Predictions n = predict(u_mean, ops::embedding_lookup(out.item_mean, neg), u_int, u_inst,
                                ops::embedding_lookup(out.item_interval, neg), w);

  RecLoss rec;
  switch (config_.gate_mode) {
    case GateMode::kGruOnly:
      // Single branch: plain hinge, coefficient 1.
      rec = rec_loss(p, n, Tensor::zeros(batch.size(), 1));
      rec.mean = Tensor::scalar(0.0);
      break;
    case GateMode::kMeanOnly:
      rec = rec_loss(p, n, Tensor::from(batch.size(), 1, std::vector<double>(batch.size(), 1.0)));
      rec.gru = Tensor::scalar(0.0);
      break;
    default:
      rec = rec_loss(p, n, w, cfg.detach_gate);
  }

  LossConfig effective = cfg;
  if (config_.gate_mode == GateMode::kGruOnly) effective.lambda1 = 1.0;
  if (config_.gate_mode == GateMode::kMeanOnly) effective.lambda1 = 0.0;

  Loss result;
  result.total = total_loss(rec, parameter_tensors(), effective);
  result.gru = rec.gru.item();
  result.mean = rec.mean.item();
  double g = 0.0;
  for (double x : w.data()) g += x;
  result.mean_gate = batch.empty() ? 0.0 : g / static_cast<double>(batch.size());
  return result;
}

std::vector<double> Model::score_items(const Output& out, UserId user) {
  const std::size_t d = out.user_mean.cols();
  const std::size_t items = out.item_mean.rows();
  const double w = out.gate.data()[user];
  const double* um = out.user_mean.data().data() + user * d;
  const double* ui = out.user_interval.data().data() + user * d;
  const double* ut = out.user_instant.data().data() + user * d;
  std::vector<double> scores(items);
  for (std::size_t j = 0; j < items; ++j) {
    const double* vm = out.item_mean.data().data() + j * d;
    const double* vi = out.item_interval.data().data() + j * d;
    double mean = 0.0, gru = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      mean += um[k] * vm[k];
      gru += (ui[k] + ut[k]) * vi[k];
    }
    scores[j] = fuse(w, gru, mean);
  }
  return scores;
}

std::vector<Tensor> Model::parameter_tensors() const {
  std::vector<Tensor> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.tensor);
  return out;
}

void Model::load_parameters(const std::vector<NamedTensor>& tensors) {
  for (auto& p : params_) {
    auto it = std::find_if(tensors.begin(), tensors.end(), [&](const NamedTensor& t) { return t.name == p.name; });
    if (it == tensors.end()) throw DataError("checkpoint lacks tensor '" + p.name + "'");
    if (it->tensor.rows() != p.tensor.rows() || it->tensor.cols() != p.tensor.cols()) {
      throw DataError("checkpoint tensor '" + p.name + "' has shape " + it->tensor.shape_string() + ", expected " +
                      p.tensor.shape_string());
    }
    auto dst = p.tensor.mutable_data();
    std::copy(it->tensor.data().begin(), it->tensor.data().end(), dst.begin());
  }
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.size();
  return n;
}

}  // namespace seqrec
