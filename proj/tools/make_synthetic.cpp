// Copyright 2026 The pedebias Authors
// SPDX-License-Identifier: Apache-2.0

// Writes the bundled synthetic corpus and evaluation sets.
//   make_synthetic <dir>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "pedebias/synthetic.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace pedebias;

namespace {

void write_lines(const fs::path& path, const std::vector<std::string>& lines) {
  std::ofstream out(path, std::ios::binary);
  for (const auto& l : lines) out << l << "\n";
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

template <class T, class F>
std::vector<std::string> records(const std::vector<T>& items, F&& to_json) {
  std::vector<std::string> lines;
  for (const auto& item : items) lines.push_back(to_json(item).dump());
  return lines;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: make_synthetic <dir>\n";
    return 1;
  }
  const fs::path dir = argv[1];
  fs::create_directories(dir);
  write_lines(dir / "corpus.txt", synthetic::occupation_corpus({}));
  write_lines(dir / "pairs.jsonl", records(synthetic::occupation_pairs(), [](const PairedExample& p) {
                return json{{"sent_more", p.sent_more}, {"sent_less", p.sent_less}, {"bias_type", p.bias_type}};
              }));
  write_lines(dir / "triples.jsonl", records(synthetic::occupation_triples(), [](const TripleExample& t) {
                return json{{"context", t.context},
                            {"stereotype", t.stereotype},
                            {"anti_stereotype", t.anti_stereotype},
                            {"unrelated", t.unrelated},
                            {"bias_type", t.bias_type}};
              }));
  write_lines(dir / "cloze.jsonl", records(synthetic::occupation_cloze(), [](const ClozeQuery& q) {
                return json{{"template", q.template_text}, {"answer", q.answer}};
              }));
  write_lines(dir / "coref.jsonl", records(synthetic::occupation_coref(), [](const CorefExample& e) {
                return json{{"sentence", e.sentence},
                            {"pronoun", e.pronoun},
                            {"candidates", e.candidates},
                            {"correct", e.correct + 1},
                            {"stereotypical", e.stereotypical}};
              }));
  std::cerr << "wrote " << dir.string() << "\n";
  return 0;
}
