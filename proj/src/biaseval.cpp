// Copyright 2026 The pedebias Authors
// SPDX-License-Identifier: Apache-2.0

#include "pedebias/biaseval.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>

#include <json.hpp>

#include "pedebias/errors.hpp"
#include "pedebias/kernels.hpp"
#include "pedebias/random.hpp"

namespace pedebias {

namespace {

template <class F>
std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path, std::string_view op, F&& check) {
  std::ifstream in(path);
  if (!in) throw DataError(std::string(op) + ": cannot read " + path.string());
  std::vector<nlohmann::json> out;
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = nlohmann::json::parse(line);
      check(j);
      out.push_back(std::move(j));
    } catch (const std::exception& e) {
      throw DataError(std::string(op) + ": " + path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

template <class F>
std::vector<double> parallel_map(std::size_t n, F&& f) {
  std::vector<double> out(n, 0.0);
  std::exception_ptr error;
  const bool par = kernels::backend() == kernels::Backend::Parallel && n > 1;
#pragma omp parallel for schedule(dynamic) if (par)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    try {
      out[static_cast<std::size_t>(i)] = f(static_cast<std::size_t>(i));
    } catch (...) {
#pragma omp critical(pedebias_biaseval_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
  return out;
}

double mean_percent(std::span<const double> xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return 100.0 * s / static_cast<double>(xs.size());
}

}  // namespace

std::vector<PairedExample> load_paired_jsonl(const std::filesystem::path& path) {
  auto rows = read_jsonl(path, "biaseval.load_pairs", [](const nlohmann::json& j) {
    if (j.at("sent_more").get<std::string>().empty() || j.at("sent_less").get<std::string>().empty()) {
      throw DataError("empty sentence");
    }
  });
  std::vector<PairedExample> out;
  for (const auto& j : rows) {
    out.push_back({j.at("sent_more").get<std::string>(), j.at("sent_less").get<std::string>(), j.value("bias_type", "")});
  }
  return out;
}

std::vector<TripleExample> load_triples_jsonl(const std::filesystem::path& path) {
  auto rows = read_jsonl(path, "biaseval.load_triples", [](const nlohmann::json& j) {
    const auto ctx = j.at("context").get<std::string>();
    const auto first = ctx.find(kBlankMarker);
    if (first == std::string::npos || ctx.find(kBlankMarker, first + 1) != std::string::npos) {
      throw DataError("context must contain exactly one BLANK");
    }
    const auto s = j.at("stereotype").get<std::string>();
    const auto a = j.at("anti_stereotype").get<std::string>();
    const auto u = j.at("unrelated").get<std::string>();
    if (s == a || s == u || a == u) throw DataError("candidates must be distinct");
  });
  std::vector<TripleExample> out;
  for (const auto& j : rows) {
    out.push_back({j.at("context").get<std::string>(), j.at("stereotype").get<std::string>(),
                   j.at("anti_stereotype").get<std::string>(), j.at("unrelated").get<std::string>(),
                   j.value("bias_type", "")});
  }
  return out;
}

std::string fill_blank(const TripleExample& t, std::string_view candidate) {
  std::string out = t.context;
  const auto pos = out.find(kBlankMarker);
  if (pos == std::string::npos) throw DataError("biaseval.fill_blank: context has no BLANK marker");
  out.replace(pos, kBlankMarker.size(), candidate);
  return out;
}

double sentence_score_ids(const LanguageModel& model, std::span<const TokenId> ids) {
  if (model.objective() == Objective::Masked) return pseudo_logprob(model, ids);
  return sequence_logprob(model, ids) / static_cast<double>(ids.size() - 1);
}

double sentence_score(const LanguageModel& model, const Tokenizer& tokenizer, std::string_view text) {
  std::vector<TokenId> ids;
  if (model.objective() == Objective::Causal) ids.push_back(special::kBos);
  for (TokenId t : tokenizer.encode(text)) ids.push_back(t);
  if (ids.size() < (model.objective() == Objective::Causal ? 2u : 1u)) {
    throw DataError("biaseval.sentence_score: empty sentence");
  }
  return sentence_score_ids(model, ids);
}

std::vector<double> sentence_scores(const LanguageModel& model, const Tokenizer& tokenizer,
                                    std::span<const std::string> texts) {
  return parallel_map(texts.size(), [&](std::size_t i) { return sentence_score(model, tokenizer, texts[i]); });
}

double preference(double a, double b) {
  if (a > b) return 1.0;
  if (a < b) return 0.0;
  return 0.5;
}

std::string BiasReport::to_json() const {
  nlohmann::json j;
  j["stereotype_score"] = stereotype_score;
  j["count"] = count;
  j["lm_score"] = lm_score ? nlohmann::json(*lm_score) : nlohmann::json(nullptr);
  j["perplexity"] = perplexity ? nlohmann::json(*perplexity) : nlohmann::json(nullptr);
  j["icat"] = icat ? nlohmann::json(*icat) : nlohmann::json(nullptr);
  j["indicators"] = indicators;
  return j.dump(2);
}

BiasReport stereotype_score_pairs(const LanguageModel& model, const Tokenizer& tokenizer,
                                  std::span<const PairedExample> examples) {
  if (examples.empty()) throw DataError("biaseval.stereotype_score_pairs: no examples");
  std::vector<std::string> texts;
  for (const auto& e : examples) {
    texts.push_back(e.sent_more);
    texts.push_back(e.sent_less);
  }
  const auto scores = sentence_scores(model, tokenizer, texts);
  BiasReport r;
  r.count = examples.size();
  for (std::size_t i = 0; i < examples.size(); ++i) r.indicators.push_back(preference(scores[2 * i], scores[2 * i + 1]));
  r.stereotype_score = mean_percent(r.indicators);
  return r;
}

StereoSetScores stereoset_scores(const LanguageModel& model, const Tokenizer& tokenizer,
                                 std::span<const TripleExample> triples) {
  if (triples.empty()) throw DataError("biaseval.stereoset_scores: no examples");
  std::vector<std::string> texts;
  for (const auto& t : triples) {
    texts.push_back(fill_blank(t, t.stereotype));
    texts.push_back(fill_blank(t, t.anti_stereotype));
    texts.push_back(fill_blank(t, t.unrelated));
  }
  const auto scores = sentence_scores(model, tokenizer, texts);
  StereoSetScores out;
  for (std::size_t i = 0; i < triples.size(); ++i) {
    const double s = scores[3 * i];
    const double a = scores[3 * i + 1];
    const double u = scores[3 * i + 2];
    out.ss_indicators.push_back(preference(s, a));
    out.lm_indicators.push_back(preference(s, u));
    out.lm_indicators.push_back(preference(a, u));
  }
  out.ss = mean_percent(out.ss_indicators);
  out.lms = mean_percent(out.lm_indicators);
  return out;
}

double icat(double ss, double lms) {
  if (ss < 0.0 || ss > 100.0 || lms < 0.0 || lms > 100.0) {
    throw DataError("biaseval.icat: scores must lie in [0, 100]");
  }
  return lms * std::min(ss, 100.0 - ss) / 50.0;
}

namespace {

// Per-token log-likelihoods of one sequence, plus the inverse probability of
// its first scored token computed without a log/exp round trip.
struct TokenScores {
  std::vector<double> logprobs;
  double first_inverse = 0.0;
};

double inverse_probability(std::span<const double> logits, TokenId target) {
  const double t = logits[static_cast<std::size_t>(target)];
  double sum = 0.0;
  for (double l : logits) sum += std::exp(l - t);
  return sum;
}

TokenScores token_scores(const LanguageModel& model, std::span<const TokenId> seq) {
  TokenScores out;
  if (model.objective() == Objective::Causal) {
    if (seq.size() < 2) return out;
    const Matrix logits = model.logits(seq);
    const Matrix lp = log_softmax_rows(logits);
    for (std::size_t t = 1; t < seq.size(); ++t) out.logprobs.push_back(lp(t - 1, static_cast<std::size_t>(seq[t])));
    out.first_inverse = inverse_probability(logits.row(0), seq[1]);
    return out;
  }
  std::vector<TokenId> masked(seq.begin(), seq.end());
  for (std::size_t t = 0; t < seq.size(); ++t) {
    masked[t] = special::kMask;
    const Matrix logits = model.logits(masked);
    masked[t] = seq[t];
    const Matrix lp = log_softmax_rows(logits);
    out.logprobs.push_back(lp(t, static_cast<std::size_t>(seq[t])));
    if (t == 0) out.first_inverse = inverse_probability(logits.row(0), seq[0]);
  }
  return out;
}

}  // namespace

double perplexity_ids(const LanguageModel& model, const std::vector<std::vector<TokenId>>& sequences) {
  std::vector<TokenScores> scores(sequences.size());
  std::exception_ptr error;
  const bool par = kernels::backend() == kernels::Backend::Parallel && sequences.size() > 1;
#pragma omp parallel for schedule(dynamic) if (par)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(sequences.size()); ++i) {
    try {
      scores[static_cast<std::size_t>(i)] = token_scores(model, sequences[static_cast<std::size_t>(i)]);
    } catch (...) {
#pragma omp critical(pedebias_biaseval_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);

  // exp(mean nll) written as anchor * exp(mean nll - log anchor), where the
  // anchor is the first token's inverse probability.
  double mean_nll = 0.0;
  double anchor = 0.0;
  std::size_t count = 0;
  for (const auto& s : scores) {
    for (double lp : s.logprobs) {
      if (count == 0) anchor = s.first_inverse;
      ++count;
      mean_nll += (-lp - mean_nll) / static_cast<double>(count);
    }
  }
  if (count == 0) throw DataError("biaseval.perplexity: no scored tokens");
  if (!(anchor > 0.0) || !std::isfinite(anchor)) return std::exp(mean_nll);
  return anchor * std::exp(mean_nll - std::log(anchor));
}

double perplexity(const LanguageModel& model, const Tokenizer& tokenizer, std::span<const std::string> texts) {
  std::vector<std::vector<TokenId>> seqs;
  for (const auto& t : texts) {
    std::vector<TokenId> ids;
    if (model.objective() == Objective::Causal) ids.push_back(special::kBos);
    for (TokenId id : tokenizer.encode(t)) ids.push_back(id);
    seqs.push_back(std::move(ids));
  }
  return perplexity_ids(model, seqs);
}

double permutation_test(std::span<const double> base, std::span<const double> debiased,
                        const PermutationTestOptions& options) {
  if (base.size() != debiased.size()) throw DataError("biaseval.permutation_test: indicator vectors differ in length");
  if (base.empty()) throw DataError("biaseval.permutation_test: empty indicator vectors");
  const std::size_t n = base.size();
  std::vector<double> diff(n);
  double observed = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    diff[i] = base[i] - debiased[i];
    observed += diff[i];
  }
  constexpr double kTol = 1e-12;

  if (options.exhaustive) {
    if (n > 30) throw DataError("biaseval.permutation_test: exhaustive mode supports at most 30 pairs");
    const std::uint64_t patterns = std::uint64_t{1} << n;
    std::uint64_t extreme = 0;
    for (std::uint64_t mask = 0; mask < patterns; ++mask) {
      double stat = 0.0;
      for (std::size_t i = 0; i < n; ++i) stat += ((mask >> i) & 1U) ? -diff[i] : diff[i];
      if (stat >= observed - kTol) ++extreme;
    }
    return static_cast<double>(extreme) / static_cast<double>(patterns);
  }

  Rng rng = make_rng(options.seed, 0x7065726d);
  std::size_t extreme = 0;
  for (std::size_t r = 0; r < options.resamples; ++r) {
    double stat = 0.0;
    std::uint64_t bits = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (i % 64 == 0) bits = rng();
      stat += (bits & 1U) ? -diff[i] : diff[i];
      bits >>= 1;
    }
    if (stat >= observed - kTol) ++extreme;
  }
  return static_cast<double>(1 + extreme) / static_cast<double>(1 + options.resamples);
}

}  // namespace pedebias
