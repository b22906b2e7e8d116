// Copyright 2026 The pedebias Authors
// SPDX-License-Identifier: Apache-2.0

#include "pedebias/knowledgeeval.hpp"

#include <exception>
#include <fstream>
#include <iostream>
#include <optional>

#include <json.hpp>

#include "pedebias/biaseval.hpp"
#include "pedebias/cda.hpp"
#include "pedebias/errors.hpp"
#include "pedebias/kernels.hpp"

namespace pedebias {

namespace {

std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path, std::string_view op) {
  std::ifstream in(path);
  if (!in) throw DataError(std::string(op) + ": cannot read " + path.string());
  std::vector<nlohmann::json> out;
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(nlohmann::json::parse(line));
    } catch (const std::exception& e) {
      throw DataError(std::string(op) + ": " + path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::size_t count_occurrences(std::string_view text, std::string_view needle) {
  std::size_t n = 0;
  for (auto pos = text.find(needle); pos != std::string_view::npos; pos = text.find(needle, pos + needle.size())) ++n;
  return n;
}

// Tokens before the slot, tokens after it, or nullopt if the answer is not a
// single known token.
struct EncodedQuery {
  std::vector<TokenId> left, right;
  TokenId gold = special::kUnk;
};

std::optional<EncodedQuery> encode_query(const Tokenizer& tokenizer, const ClozeQuery& q) {
  const auto pos = q.template_text.find(kSlotMarker);
  EncodedQuery e;
  e.left = tokenizer.encode(std::string_view(q.template_text).substr(0, pos));
  e.right = tokenizer.encode(std::string_view(q.template_text).substr(pos + kSlotMarker.size()));
  const auto answer = tokenizer.split(q.answer);
  if (answer.size() != 1 || !tokenizer.contains(answer.front())) return std::nullopt;
  e.gold = tokenizer.id(answer.front());
  if (static_cast<std::size_t>(e.gold) < special::kCount) return std::nullopt;
  return e;
}

double percent(std::size_t hits, std::size_t total) {
  return 100.0 * static_cast<double>(hits) / static_cast<double>(total);
}

}  // namespace

std::vector<ClozeQuery> load_cloze_jsonl(const std::filesystem::path& path) {
  std::vector<ClozeQuery> out;
  for (const auto& j : read_jsonl(path, "knowledgeeval.load_cloze")) {
    ClozeQuery q{j.at("template").get<std::string>(), j.at("answer").get<std::string>()};
    if (count_occurrences(q.template_text, kSlotMarker) != 1) {
      throw DataError("knowledgeeval.load_cloze: template must contain exactly one [MASK]: " + q.template_text);
    }
    out.push_back(std::move(q));
  }
  return out;
}

std::vector<CorefExample> load_coref_jsonl(const std::filesystem::path& path) {
  std::vector<CorefExample> out;
  for (const auto& j : read_jsonl(path, "knowledgeeval.load_coref")) {
    const auto cands = j.at("candidates").get<std::vector<std::string>>();
    if (cands.size() != 2 || cands[0] == cands[1]) {
      throw DataError("knowledgeeval.load_coref: need exactly two distinct candidates");
    }
    const auto correct = j.at("correct").get<int>();
    if (correct != 1 && correct != 2) throw DataError("knowledgeeval.load_coref: correct must be 1 or 2");
    out.push_back({j.at("sentence").get<std::string>(), j.at("pronoun").get<std::string>(), {cands[0], cands[1]},
                   static_cast<std::size_t>(correct - 1), j.at("stereotypical").get<bool>()});
  }
  return out;
}

std::size_t gold_rank(std::span<const double> logits, TokenId gold) {
  const double g = logits[static_cast<std::size_t>(gold)];
  std::size_t rank = 1;
  for (std::size_t i = special::kCount; i < logits.size(); ++i) {
    if (logits[i] > g) ++rank;
  }
  return rank;
}

std::string FactReport::to_json() const {
  nlohmann::json j;
  j["p_at_1"] = p_at_1;
  j["p_at_10"] = p_at_10;
  j["mrr"] = mrr;
  j["evaluated"] = evaluated;
  j["skipped_out_of_vocabulary"] = skipped_out_of_vocabulary;
  j["skipped_slot_not_final"] = skipped_slot_not_final;
  j["ranks"] = ranks;
  return j.dump(2);
}

FactReport fact_retrieval(const LanguageModel& model, const Tokenizer& tokenizer, std::span<const ClozeQuery> queries) {
  const bool causal = model.objective() == Objective::Causal;
  FactReport report;
  std::vector<EncodedQuery> work;
  for (const auto& q : queries) {
    if (count_occurrences(q.template_text, kSlotMarker) != 1) {
      throw DataError("knowledgeeval.fact_retrieval: template must contain exactly one [MASK]: " + q.template_text);
    }
    auto e = encode_query(tokenizer, q);
    if (!e) {
      ++report.skipped_out_of_vocabulary;
      continue;
    }
    if (causal && !e->right.empty()) {
      ++report.skipped_slot_not_final;
      continue;
    }
    work.push_back(std::move(*e));
  }

  report.ranks.assign(work.size(), 0);
  std::exception_ptr error;
  const bool par = kernels::backend() == kernels::Backend::Parallel && work.size() > 1;
#pragma omp parallel for schedule(dynamic) if (par)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(work.size()); ++i) {
    try {
      const auto& e = work[static_cast<std::size_t>(i)];
      std::vector<TokenId> input;
      std::size_t row = 0;
      if (causal) {
        input.push_back(special::kBos);
        input.insert(input.end(), e.left.begin(), e.left.end());
        row = input.size() - 1;
      } else {
        input = e.left;
        row = input.size();
        input.push_back(special::kMask);
        input.insert(input.end(), e.right.begin(), e.right.end());
      }
      const Matrix logits = model.logits(input);
      report.ranks[static_cast<std::size_t>(i)] = gold_rank(logits.row(row), e.gold);
    } catch (...) {
#pragma omp critical(pedebias_facts_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);

  report.evaluated = work.size();
  if (report.evaluated == 0) return report;
  std::size_t top1 = 0, top10 = 0;
  double rr = 0.0;
  for (std::size_t r : report.ranks) {
    top1 += r <= 1;
    top10 += r <= 10;
    rr += 1.0 / static_cast<double>(r);
  }
  const auto n = static_cast<double>(report.evaluated);
  report.p_at_1 = static_cast<double>(top1) / n;
  report.p_at_10 = static_cast<double>(top10) / n;
  report.mrr = rr / n;
  return report;
}

std::string CorefReport::to_json() const {
  nlohmann::json j;
  j["f1_pro"] = f1_pro;
  j["f1_anti"] = f1_anti;
  j["avg"] = avg;
  j["diff"] = diff;
  j["pro_count"] = pro_count;
  j["anti_count"] = anti_count;
  j["ties"] = ties;
  j["predictions"] = predictions;
  return j.dump(2);
}

std::string complete_coref(const CorefExample& example, std::size_t candidate) {
  std::string pronoun = example.pronoun;
  if (!pronoun.empty()) pronoun = apply_case(pronoun, CaseStyle::Capitalized);
  return example.sentence + " " + pronoun + " refers to the " + example.candidates.at(candidate) + " .";
}

CorefReport winobias_from_scores(std::span<const CorefExample> examples, std::span<const double> scores) {
  if (scores.size() != 2 * examples.size()) throw DataError("knowledgeeval.winobias_eval: need two scores per example");
  CorefReport r;
  std::size_t pro_hits = 0, anti_hits = 0;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const double a = scores[2 * i];
    const double b = scores[2 * i + 1];
    int pred = a > b ? 0 : (b > a ? 1 : -1);
    if (pred < 0) {
      ++r.ties;
      std::cerr << "knowledgeeval.winobias_eval: tie on example " << i << ", counted as wrong\n";
    }
    r.predictions.push_back(pred);
    const bool hit = pred == static_cast<int>(examples[i].correct);
    if (examples[i].stereotypical) {
      ++r.pro_count;
      pro_hits += hit;
    } else {
      ++r.anti_count;
      anti_hits += hit;
    }
  }
  if (r.pro_count == 0) throw DataError("knowledgeeval.winobias_eval: no pro-stereotypical examples");
  if (r.anti_count == 0) throw DataError("knowledgeeval.winobias_eval: no anti-stereotypical examples");
  r.f1_pro = percent(pro_hits, r.pro_count);
  r.f1_anti = percent(anti_hits, r.anti_count);
  r.avg = (r.f1_pro + r.f1_anti) / 2.0;
  r.diff = r.f1_pro - r.f1_anti;
  return r;
}

CorefReport winobias_eval(const LanguageModel& model, const Tokenizer& tokenizer, std::span<const CorefExample> examples) {
  std::vector<std::string> texts;
  for (const auto& e : examples) {
    texts.push_back(complete_coref(e, 0));
    texts.push_back(complete_coref(e, 1));
  }
  const auto scores = sentence_scores(model, tokenizer, texts);
  return winobias_from_scores(examples, scores);
}

}  // namespace pedebias
