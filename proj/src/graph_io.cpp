#include "seqrec/graph_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "seqrec/error.hpp"

namespace seqrec {

namespace fs = std::filesystem;

std::string format_weight(double w) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", w);
  return buf;
}

std::string format_user_item(const UserItemGraph& graph) {
  std::string out;
  for (UserId u = 0; u < graph.num_users(); ++u) {
    for (const auto& e : graph.row(u)) {
      out += std::to_string(u) + ' ' + std::to_string(e.item) + ' ' + format_weight(e.weight) + '\n';
    }
  }
  return out;
}

std::string format_item_item(const ItemItemGraph& graph) {
  std::string out;
  for (const auto& e : graph.edges()) {
    out += std::to_string(e.a) + ' ' + std::to_string(e.b) + ' ' + format_weight(e.weight) + '\n';
  }
  return out;
}

namespace {

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << text;
}

std::ifstream open_read(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw DataError("missing artifact '" + path.string() + "'; run `seqrec preprocess` first");
  }
  return in;
}

std::string format_events(const std::vector<std::vector<Event>>& per_user) {
  std::string out;
  for (UserId u = 0; u < per_user.size(); ++u)
    for (const Event& e : per_user[u])
      out += std::to_string(u) + ' ' + std::to_string(e.item) + ' ' + std::to_string(e.timestamp) + '\n';
  return out;
}

std::vector<std::vector<Event>> read_events(const fs::path& path, std::size_t num_users) {
  auto in = open_read(path);
  std::vector<std::vector<Event>> per_user(num_users);
  std::size_t u = 0;
  Event e;
  while (in >> u >> e.item >> e.timestamp) {
    if (u >= num_users) throw DataError("user index out of range in '" + path.string() + "'");
    per_user[u].push_back(e);
  }
  if (!in.eof()) throw DataError("malformed event file '" + path.string() + "'");
  return per_user;
}

}  // namespace

void save_split(const fs::path& dir, const SplitData& data) {
  fs::create_directories(dir);
  const IntervalGraphs& g = data.inputs;
  nlohmann::json manifest = {
      {"num_users", g.num_users},     {"num_items", g.num_items}, {"num_intervals", g.num_intervals},
      {"t_a", g.t_a},                 {"t_b", g.t_b},             {"target_file", "targets.txt"},
  };
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
  for (std::size_t t = 0; t < g.num_intervals; ++t) {
    const std::string suffix = std::to_string(t) + ".txt";
    write_file(dir / ("user_item_" + suffix), format_user_item(g.user_item[t]));
    write_file(dir / ("item_item_" + suffix), format_item_item(g.item_item[t]));
    write_file(dir / ("events_" + suffix), format_events(g.sequences[t]));
  }
  write_file(dir / "targets.txt", format_events(data.targets));
}

SplitData load_split(const fs::path& dir) {
  auto manifest_in = open_read(dir / "manifest.json");
  nlohmann::json manifest;
  try {
    manifest_in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed graph manifest: " + std::string(e.what()));
  }
  SplitData data;
  IntervalGraphs& g = data.inputs;
  try {
    g.num_users = manifest.at("num_users").get<std::size_t>();
    g.num_items = manifest.at("num_items").get<std::size_t>();
    g.num_intervals = manifest.at("num_intervals").get<std::size_t>();
    g.t_a = manifest.at("t_a").get<Timestamp>();
    g.t_b = manifest.at("t_b").get<Timestamp>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError("incomplete graph manifest: " + std::string(e.what()));
  }
  g.user_item.assign(g.num_intervals, UserItemGraph(g.num_users, g.num_items));
  g.item_item.assign(g.num_intervals, ItemItemGraph(g.num_items));
  for (std::size_t t = 0; t < g.num_intervals; ++t) {
    const std::string suffix = std::to_string(t) + ".txt";
    {
      auto in = open_read(dir / ("user_item_" + suffix));
      std::size_t u = 0, i = 0;
      double w = 0;
      while (in >> u >> i >> w) {
        if (u >= g.num_users || i >= g.num_items) throw DataError("index out of range in user_item_" + suffix);
        g.user_item[t].set(static_cast<UserId>(u), static_cast<ItemId>(i), w);
      }
      if (!in.eof()) throw DataError("malformed user_item_" + suffix);
    }
    {
      auto in = open_read(dir / ("item_item_" + suffix));
      std::size_t a = 0, b = 0;
      double w = 0;
      while (in >> a >> b >> w) {
        if (a >= g.num_items || b >= g.num_items) throw DataError("index out of range in item_item_" + suffix);
        g.item_item[t].set(static_cast<ItemId>(a), static_cast<ItemId>(b), w);
      }
      if (!in.eof()) throw DataError("malformed item_item_" + suffix);
    }
    g.sequences.push_back(read_events(dir / ("events_" + suffix), g.num_users));
  }
  data.targets = read_events(dir / "targets.txt", g.num_users);
  return data;
}

}  // namespace seqrec
