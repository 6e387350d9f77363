// SPDX-License-Identifier: Apache-2.0

#include "kclip/kg/jsonl.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>

#include "json.hpp"
#include "kclip/errors.hpp"

namespace kclip::kg {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

[[noreturn]] void fail(const fs::path& path, std::size_t line, const std::string& what) {
  throw DataError(path.string() + ":" + std::to_string(line) + ": " + what);
}

struct PendingTriplet {
  std::size_t line;
  std::string head;
  std::size_t relation;
  std::string tail;
};

fs::path blob_dir(const fs::path& path) {
  return path.parent_path() / (path.stem().string() + "_images");
}

std::ifstream open_input(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return in;
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

}  // namespace

KnowledgeGraph ingest_graph(const fs::path& path) {
  std::ifstream in = open_input(path);
  const fs::path base = path.parent_path();
  std::vector<std::pair<std::size_t, Entity>> entities;
  std::map<std::size_t, std::pair<std::size_t, std::string>> relations;  // id -> (line, name)
  std::vector<PendingTriplet> triplets;

  std::string text;
  for (std::size_t line = 1; std::getline(in, text); ++line) {
    if (std::all_of(text.begin(), text.end(), [](unsigned char c) { return std::isspace(c); })) {
      continue;
    }
    try {
      const json rec = json::parse(text);
      const std::string kind = rec.at("kind").get<std::string>();
      if (kind == "entity") {
        Entity e;
        e.id = rec.at("id").get<std::string>();
        if (rec.contains("texts")) e.texts = rec.at("texts").get<std::vector<std::string>>();
        if (rec.contains("images")) {
          for (const auto& p : rec.at("images")) {
            try {
              e.images.push_back(read_image(base / p.get<std::string>()));
            } catch (const DataError& err) {
              fail(path, line, std::string("entity '") + e.id + "': " + err.what());
            }
          }
        }
        entities.emplace_back(line, std::move(e));
      } else if (kind == "relation") {
        const auto id = rec.at("id").get<std::size_t>();
        if (relations.contains(id)) fail(path, line, "duplicate relation id " + std::to_string(id));
        relations.emplace(id, std::make_pair(line, rec.at("name").get<std::string>()));
      } else if (kind == "triplet") {
        triplets.push_back(PendingTriplet{line, rec.at("h").get<std::string>(),
                                          rec.at("r").get<std::size_t>(),
                                          rec.at("t").get<std::string>()});
      } else {
        fail(path, line, "unknown record kind '" + kind + "'");
      }
    } catch (const json::exception& err) {
      fail(path, line, std::string("malformed record: ") + err.what());
    }
  }

  KnowledgeGraph graph;
  std::size_t expected = 0;
  for (auto& [id, entry] : relations) {
    if (id != expected) fail(path, entry.first, "relation ids must be dense from 0, missing " +
                                                    std::to_string(expected));
    try {
      graph.add_relation(entry.second);
    } catch (const DataError& err) {
      fail(path, entry.first, err.what());
    }
    ++expected;
  }
  for (auto& [line, e] : entities) {
    try {
      graph.add_entity(std::move(e));
    } catch (const DataError& err) {
      fail(path, line, err.what());
    }
  }
  for (const auto& t : triplets) {
    const auto h = graph.find_entity(t.head);
    if (!h) fail(path, t.line, "triplet references unknown entity '" + t.head + "'");
    const auto tl = graph.find_entity(t.tail);
    if (!tl) fail(path, t.line, "triplet references unknown entity '" + t.tail + "'");
    if (t.relation >= graph.relations().size()) {
      fail(path, t.line, "triplet references unknown relation " + std::to_string(t.relation));
    }
    graph.add_triplet(Triplet{*h, t.relation, *tl});
  }
  return graph;
}

void write_graph(const KnowledgeGraph& graph, const fs::path& path) {
  const fs::path dir = blob_dir(path);
  bool any_images = std::any_of(graph.entities().begin(), graph.entities().end(),
                                [](const Entity& e) { return !e.images.empty(); });
  if (any_images) fs::create_directories(dir);
  std::ofstream out = open_output(path);
  for (const auto& r : graph.relations()) {
    out << json{{"kind", "relation"}, {"id", r.id}, {"name", r.name}}.dump() << '\n';
  }
  for (std::size_t i = 0; i < graph.entities().size(); ++i) {
    const Entity& e = graph.entity(i);
    json images = json::array();
    for (std::size_t k = 0; k < e.images.size(); ++k) {
      const std::string name = std::to_string(i) + "_" + std::to_string(k) + ".bin";
      write_image(e.images[k], dir / name);
      images.push_back((dir.filename() / name).generic_string());
    }
    out << json{{"kind", "entity"}, {"id", e.id}, {"texts", e.texts}, {"images", images}}.dump()
        << '\n';
  }
  for (const auto& t : graph.triplets()) {
    out << json{{"kind", "triplet"},
                {"h", graph.entity(t.head).id},
                {"r", t.relation},
                {"t", graph.entity(t.tail).id}}
               .dump()
        << '\n';
  }
  if (!out) throw DataError("failed writing " + path.string());
}

std::vector<ImageTextPair> read_pairs(const fs::path& path) {
  std::ifstream in = open_input(path);
  std::vector<ImageTextPair> pairs;
  std::string text;
  for (std::size_t line = 1; std::getline(in, text); ++line) {
    if (std::all_of(text.begin(), text.end(), [](unsigned char c) { return std::isspace(c); })) {
      continue;
    }
    try {
      const json rec = json::parse(text);
      ImageTextPair p;
      p.caption = rec.at("caption").get<std::string>();
      try {
        p.image = read_image(path.parent_path() / rec.at("image").get<std::string>());
      } catch (const DataError& err) {
        fail(path, line, err.what());
      }
      pairs.push_back(std::move(p));
    } catch (const json::exception& err) {
      fail(path, line, std::string("malformed record: ") + err.what());
    }
  }
  return pairs;
}

void write_pairs(const std::vector<ImageTextPair>& pairs, const fs::path& path) {
  const fs::path dir = blob_dir(path);
  if (!pairs.empty()) fs::create_directories(dir);
  std::ofstream out = open_output(path);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const std::string name = std::to_string(i) + ".bin";
    write_image(pairs[i].image, dir / name);
    out << json{{"image", (dir.filename() / name).generic_string()}, {"caption", pairs[i].caption}}
               .dump()
        << '\n';
  }
}

}  // namespace kclip::kg
