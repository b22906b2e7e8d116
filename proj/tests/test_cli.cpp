// Copyright 2026 The pedebias Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <fstream>
#include <json.hpp>
#include <sstream>

#include "cli.hpp"
#include "pedebias/synthetic.hpp"
#include "support.hpp"

using namespace pedebias;
using namespace pedebias::testing;
using nlohmann::json;

namespace {

struct Result {
  int status;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int status = cli::run(args, out, err);
  return {status, out.str(), err.str()};
}

json read_json(const std::filesystem::path& p) {
  std::ifstream in(p);
  return json::parse(in);
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("params prints the prefix count") {
  const auto r = run({"params", "--method", "prefix", "--l", "16", "--d", "768", "--layers", "12"});
  CHECK(r.status == 0);
  CHECK(r.out == "294912\n");
  CHECK(run({"params", "--method", "prompt", "--l", "16"}).out == "12288\n");
  CHECK(run({"params", "--method", "adapter", "--r", "48"}).out == "304320\n");
}

TEST_CASE("usage errors exit with status 1") {
  const auto r = run({"frobnicate"});
  CHECK(r.status == 1);
  CHECK(r.err.find("pipeline") != std::string::npos);
  CHECK(run({}).status == 1);
  CHECK(run({"params", "--method", "lora"}).status == 1);
  CHECK(run({"eval-bias"}).status == 1);
}

TEST_CASE("data errors exit with status 2") {
  TempDir dir("cli-data");
  const auto r = run({"augment", "--corpus", (dir / "nope.txt").string()});
  CHECK(r.status == 2);
  CHECK(r.err.find("corpus") != std::string::npos);
  CHECK(run({"params", "--method", "adapter", "--r", "5"}).status == 2);
}

TEST_CASE("augment writes JSON Lines") {
  TempDir dir("cli-augment");
  std::ofstream(dir / "c.txt") << "He is a doctor .\nthe sky is blue .\n";
  const auto r = run({"augment", "--corpus", (dir / "c.txt").string(), "--seed", "3"});
  REQUIRE(r.status == 0);
  std::istringstream lines(r.out);
  std::vector<json> recs;
  for (std::string l; std::getline(lines, l);) recs.push_back(json::parse(l));
  REQUIRE(recs.size() == 2);
  CHECK(recs[0]["text"] == "She is a doctor .");
  CHECK(recs[0]["origin"] == 0);
  CHECK(recs[0]["is_original"] == false);
  CHECK(recs[0]["permutation"] == json::array({1}));
  CHECK(recs[1]["text"] == "He is a doctor .");
  CHECK(recs[1]["is_original"] == true);
  CHECK(recs[1]["permutation"].is_null());
}

TEST_CASE("config file values apply and flags override them") {
  TempDir dir("cli-config");
  std::ofstream(dir / "cfg.json") << R"({"method": "prefix", "l": 16, "d": 768})";
  CHECK(run({"params", "--config", (dir / "cfg.json").string()}).out == "294912\n");
  CHECK(run({"params", "--config", (dir / "cfg.json").string(), "--method", "prompt"}).out == "12288\n");
  std::ofstream(dir / "bad.json") << "{";
  CHECK(run({"params", "--config", (dir / "bad.json").string()}).status == 2);
}

TEST_CASE("pipeline runs end to end and is reproducible") {
  TempDir dir("cli-pipeline");
  auto pipeline = [&](const std::string& name) {
    return run({"pipeline", "--out-dir", (dir / name).string(), "--base-epochs", "2", "--epochs", "1", "--lr",
                "1e-2", "--d", "16", "--heads", "2", "--resamples", "200"});
  };
  const auto a = pipeline("a");
  INFO(a.err);
  REQUIRE(a.status == 0);
  const auto b = pipeline("b");
  REQUIRE(b.status == 0);

  json ma = read_json(dir / "a" / "manifest.json");
  json mb = read_json(dir / "b" / "manifest.json");
  CHECK(ma.contains("timestamps"));
  ma.erase("timestamps");
  mb.erase("timestamps");
  CHECK(ma.dump() == mb.dump());

  for (const char* name : {"augmented_corpus", "core", "checkpoint", "train_report", "bias_report", "lm_report",
                           "fact_report", "coref_report"}) {
    CAPTURE(name);
    REQUIRE(ma["artifacts"].contains(name));
    const auto path = ma["artifacts"][name]["path"].get<std::string>();
    CHECK(read_file(dir / "a" / path) == read_file(dir / "b" / path));
  }
  for (const char* name : {"train_report.json", "bias_report.json", "lm_report.json"}) {
    const auto j = read_json(dir / "a" / name);
    CHECK(j["config_hash"] == ma["config_hash"]);
    CHECK(j["core_fingerprint"] == ma["core_fingerprint"]);
  }
  const auto bias = read_json(dir / "a" / "bias_report.json");
  CHECK(bias["base"]["pairs"]["count"] == synthetic::occupation_pairs().size());
  CHECK(bias["debiased"]["pairs"]["indicators"].size() == synthetic::occupation_pairs().size());

  // Each stage draws from its own derived seed, so a different seed changes the
  // manifest.
  const auto c = run({"pipeline", "--out-dir", (dir / "c").string(), "--base-epochs", "2", "--epochs", "1", "--lr",
                      "1e-2", "--d", "16", "--heads", "2", "--resamples", "200", "--seed", "7"});
  REQUIRE(c.status == 0);
  json mc = read_json(dir / "c" / "manifest.json");
  CHECK(mc["config_hash"] != ma["config_hash"]);
  CHECK(mc["seeds"]["augment"] != ma["seeds"]["augment"]);
}

TEST_CASE("train and evaluation subcommands chain through checkpoints") {
  TempDir dir("cli-chain");
  std::ofstream corpus(dir / "c.txt");
  for (const auto& line : synthetic::occupation_corpus({60, 0.9, 1})) corpus << line << "\n";
  corpus.close();
  const auto out = (dir / "run").string();
  auto base = run({"train", "--corpus", (dir / "c.txt").string(), "--method", "full", "--epochs", "1", "--lr", "1e-2",
                   "--d", "16", "--heads", "2", "--out-dir", out});
  INFO(base.err);
  REQUIRE(base.status == 0);
  const auto core = (dir / "run" / "core.bin").string();
  const auto tok = (dir / "run" / "tokenizer.json").string();
  auto adapter = run({"train", "--corpus", (dir / "c.txt").string(), "--core", core, "--tokenizer", tok, "--method",
                      "adapter", "--r", "4", "--epochs", "1", "--lr", "1e-2", "--output",
                      (dir / "run" / "ov.bin").string()});
  REQUIRE(adapter.status == 0);
  const json report = json::parse(adapter.out);
  CHECK(report["fingerprint_before"] == report["core_fingerprint"]);

  TempDir data("cli-chain-data");
  REQUIRE(std::system(("\"" PEDEBIAS_MAKE_SYNTHETIC "\" " + data.path().string() + " 2>/dev/null").c_str()) == 0);
  const std::vector<std::string> model = {"--core", core, "--tokenizer", tok, "--overlay",
                                          (dir / "run" / "ov.bin").string()};
  auto with = [&](std::vector<std::string> args) {
    args.insert(args.end(), model.begin(), model.end());
    return run(args);
  };
  auto bias = with({"eval-bias", "--pairs", (data / "pairs.jsonl").string(), "--resamples", "100"});
  REQUIRE(bias.status == 0);
  CHECK(json::parse(bias.out)["pairs"].contains("p_value"));
  auto lm = with({"eval-lm", "--lm-corpus", (dir / "c.txt").string(), "--triples", (data / "triples.jsonl").string()});
  REQUIRE(lm.status == 0);
  CHECK(json::parse(lm.out)["perplexity"].get<double>() > 1.0);
  CHECK(with({"eval-facts", "--cloze", (data / "cloze.jsonl").string()}).status == 0);
  CHECK(with({"eval-coref", "--coref", (data / "coref.jsonl").string()}).status == 0);
  auto sub = with({"debias-subspace", "--corpus", (dir / "c.txt").string(), "--k", "2"});
  REQUIRE(sub.status == 0);
  const json s = json::parse(sub.out);
  CHECK(s["format"] == "pedebias-subspace");
  CHECK(s["basis"].size() == 2);
}

TEST_CASE("bundled synthetic data matches the generator") {
  TempDir dir("cli-synth");
  REQUIRE(std::system(("\"" PEDEBIAS_MAKE_SYNTHETIC "\" " + dir.path().string() + " 2>/dev/null").c_str()) == 0);
  for (const char* f : {"corpus.txt", "pairs.jsonl", "triples.jsonl", "cloze.jsonl", "coref.jsonl"}) {
    CAPTURE(f);
    CHECK(read_file(dir / f) == read_file(std::filesystem::path(PEDEBIAS_DATA_DIR) / "synthetic" / f));
  }
}
