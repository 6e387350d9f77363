// SPDX-License-Identifier: Apache-2.0
//
// JSONL graph format, one record per line:
//   {"kind":"entity","id":"e0","texts":["..."],"images":["e0_0.bin"]}
//   {"kind":"relation","id":0,"name":"is a"}
//   {"kind":"triplet","h":"e0","r":0,"t":"e1"}
// Image paths are relative to the JSONL file's directory. Pair files hold
//   {"image":"p0.bin","caption":"..."}

#ifndef KCLIP_KG_JSONL_HPP_
#define KCLIP_KG_JSONL_HPP_

#include <filesystem>
#include <string>
#include <vector>

#include "kclip/kg/graph.hpp"

namespace kclip::kg {

/// Throws DataError naming the line for malformed records, dangling
/// references and duplicate ids.
KnowledgeGraph ingest_graph(const std::filesystem::path& path);

/// Writes the graph and its image blobs (into "<stem>_images/").
void write_graph(const KnowledgeGraph& graph, const std::filesystem::path& path);

struct ImageTextPair {
  Image image;
  std::string caption;
  bool operator==(const ImageTextPair&) const = default;
};

std::vector<ImageTextPair> read_pairs(const std::filesystem::path& path);
void write_pairs(const std::vector<ImageTextPair>& pairs, const std::filesystem::path& path);

}  // namespace kclip::kg

#endif  // KCLIP_KG_JSONL_HPP_
