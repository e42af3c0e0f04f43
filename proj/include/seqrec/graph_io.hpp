#pragma once

// On-disk form of interval graphs: one text triplet file per interval and
// graph kind plus a JSON manifest.
//
//   manifest.json       {"num_users", "num_items", "num_intervals", "t_a", "t_b", ...}
//   user_item_<t>.txt   "u i w" per line
//   item_item_<t>.txt   "i j w" per line, i < j
//   events_<t>.txt      "u i timestamp" per line (input sequences)
//   targets.txt         "u i timestamp" per line (held-out interval)
//
// Weights are printed with 17 significant digits so a load/save cycle is
// lossless and output is byte-stable.

#include <filesystem>
#include <string>

#include "seqrec/corpus.hpp"

namespace seqrec {

void save_split(const std::filesystem::path& dir, const SplitData& data);
SplitData load_split(const std::filesystem::path& dir);

/// Text of a single graph file, exposed for byte-level comparisons.
std::string format_user_item(const UserItemGraph& graph);
std::string format_item_item(const ItemItemGraph& graph);

std::string format_weight(double w);

}  // namespace seqrec
