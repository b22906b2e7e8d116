// Copyright 2026 The pedebias Authors
// SPDX-License-Identifier: Apache-2.0

#include "pedebias/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "pedebias/errors.hpp"
#include "pedebias/lexicon.hpp"
#include "pedebias/random.hpp"

namespace pedebias {

namespace {

bool is_word_char(unsigned char c) { return std::isalnum(c) != 0 || c >= 0x80; }

// ceil(f * n) without floating noise pushing exact products up by one.
std::size_t fraction_count(double f, std::size_t n) {
  return static_cast<std::size_t>(std::ceil(f * static_cast<double>(n) - 1e-9));
}

Corpus select(const Corpus& corpus, std::vector<std::size_t> keep) {
  std::sort(keep.begin(), keep.end());
  Corpus out;
  out.format = corpus.format;
  out.provenance = corpus.provenance;
  out.examples.reserve(keep.size());
  for (std::size_t i : keep) out.examples.push_back(corpus.examples[i]);
  return out;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text, const std::unordered_set<std::string>& abbreviations) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (std::isspace(c)) {
      ++i;
      continue;
    }
    if (!is_word_char(c)) {
      out.emplace_back(1, text[i]);
      ++i;
      continue;
    }
    std::size_t j = i + 1;
    while (j < text.size()) {
      const auto cj = static_cast<unsigned char>(text[j]);
      if (is_word_char(cj)) {
        ++j;
      } else if ((cj == '\'' || cj == '-') && j + 1 < text.size() && is_word_char(static_cast<unsigned char>(text[j + 1]))) {
        j += 2;
      } else {
        break;
      }
    }
    if (j < text.size() && text[j] == '.' && !abbreviations.empty() &&
        abbreviations.contains(ascii_lower(text.substr(i, j - i + 1)))) {
      ++j;
    }
    out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

std::string join_tokens(std::span<const std::string> tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

Corpus corpus_from_lines(std::span<const std::string> lines, CorpusFormat format,
                         const std::unordered_set<std::string>& abbreviations) {
  if (format.mode == CorpusMode::Chunk && format.chunk_length < 2) {
    throw DataError("corpus.load_corpus: chunk length T must be at least 2");
  }
  Corpus corpus;
  corpus.format = format;
  if (format.mode == CorpusMode::Sentence) {
    for (const auto& line : lines) {
      auto toks = tokenize(line, abbreviations);
      if (!toks.empty()) corpus.examples.push_back(std::move(toks));
    }
    return corpus;
  }
  std::vector<std::string> current;
  for (const auto& line : lines) {
    for (auto& tok : tokenize(line, abbreviations)) {
      current.push_back(std::move(tok));
      if (current.size() == format.chunk_length) {
        corpus.examples.push_back(std::move(current));
        current.clear();
      }
    }
  }
  if (!current.empty()) corpus.examples.push_back(std::move(current));
  return corpus;
}

Corpus load_corpus(const std::filesystem::path& path, CorpusFormat format,
                   const std::unordered_set<std::string>& abbreviations) {
  std::ifstream in(path);
  if (!in) throw DataError("corpus.load_corpus: cannot read " + path.string());
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  Corpus corpus = corpus_from_lines(lines, format, abbreviations);
  corpus.provenance.source = path.string();
  if (corpus.empty()) std::cerr << "warning: corpus.load_corpus: " << path.string() << " is empty\n";
  return corpus;
}

Corpus downsample(const Corpus& corpus, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw DataError("corpus.downsample: fraction must be in (0, 1], got " + std::to_string(fraction));
  }
  const std::size_t k = std::min(corpus.size(), fraction_count(fraction, corpus.size()));
  Rng rng = make_rng(seed, 0x646f776e);
  Corpus out = select(corpus, sample_without_replacement(rng, corpus.size(), k));
  out.provenance.fraction = corpus.provenance.fraction * fraction;
  out.provenance.seed = seed;
  return out;
}

std::pair<Corpus, Corpus> split(const Corpus& corpus, double val_fraction, std::uint64_t seed) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw DataError("corpus.split: validation fraction must be in (0, 1), got " + std::to_string(val_fraction));
  }
  const std::size_t n = corpus.size();
  const std::size_t n_val = std::min(n, fraction_count(val_fraction, n));
  Rng rng = make_rng(seed, 0x73706c74);
  const auto order = random_permutation(rng, n);
  std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  return {select(corpus, std::move(train)), select(corpus, std::move(val))};
}

Tokenizer::Tokenizer(std::vector<std::string> vocabulary, std::vector<std::string> abbreviations)
    : abbreviations_(std::move(abbreviations)) {
  id_to_token_ = {"[PAD]", "[UNK]", "[MASK]", "[BOS]"};
  for (auto& w : vocabulary) id_to_token_.push_back(std::move(w));
  for (std::size_t i = 0; i < id_to_token_.size(); ++i) {
    auto [it, inserted] = token_to_id_.emplace(id_to_token_[i], static_cast<TokenId>(i));
    if (!inserted) throw DataError("corpus.tokenizer: duplicate vocabulary entry '" + id_to_token_[i] + "'");
  }
  std::sort(abbreviations_.begin(), abbreviations_.end());
  abbreviation_set_.insert(abbreviations_.begin(), abbreviations_.end());
}

std::vector<std::string> Tokenizer::split(std::string_view text) const { return tokenize(text, abbreviation_set_); }

TokenId Tokenizer::id(std::string_view token) const {
  const auto it = token_to_id_.find(std::string(token));
  return it == token_to_id_.end() ? special::kUnk : it->second;
}

const std::string& Tokenizer::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size()) {
    throw DataError("corpus.tokenizer: id " + std::to_string(id) + " out of range");
  }
  return id_to_token_[static_cast<std::size_t>(id)];
}

bool Tokenizer::contains(std::string_view token) const { return token_to_id_.contains(std::string(token)); }

std::vector<TokenId> Tokenizer::encode_tokens(std::span<const std::string> tokens) const {
  std::vector<TokenId> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

std::vector<TokenId> Tokenizer::encode(std::string_view text) const { return encode_tokens(split(text)); }

std::string Tokenizer::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += token(ids[i]);
  }
  return out;
}

std::string Tokenizer::to_json() const {
  nlohmann::json j;
  j["format"] = "pedebias-tokenizer";
  j["version"] = kFormatVersion;
  j["vocabulary"] = std::vector<std::string>(id_to_token_.begin() + special::kCount, id_to_token_.end());
  j["abbreviations"] = abbreviations_;
  return j.dump();
}

Tokenizer Tokenizer::from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("corpus.tokenizer: invalid JSON: ") + e.what());
  }
  if (j.value("format", "") != "pedebias-tokenizer") throw DataError("corpus.tokenizer: not a tokenizer file");
  if (j.value("version", 0) != kFormatVersion) {
    throw DataError("corpus.tokenizer: unsupported version " + std::to_string(j.value("version", 0)));
  }
  return Tokenizer(j.at("vocabulary").get<std::vector<std::string>>(),
                   j.value("abbreviations", std::vector<std::string>{}));
}

void Tokenizer::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("corpus.tokenizer: cannot write " + path.string());
  out << to_json() << '\n';
}

Tokenizer Tokenizer::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("corpus.tokenizer: cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return from_json(buf.str());
}

Tokenizer build_vocab(const Corpus& corpus, std::size_t min_count, std::vector<std::string> abbreviations) {
  if (corpus.empty()) throw DataError("corpus.build_vocab: empty corpus");
  std::map<std::string, std::size_t> counts;
  for (const auto& ex : corpus.examples) {
    for (const auto& t : ex) ++counts[t];
  }
  std::vector<std::pair<std::string, std::size_t>> entries;
  for (auto& [w, c] : counts) {
    if (c >= std::max<std::size_t>(min_count, 1)) entries.emplace_back(w, c);
  }
  std::stable_sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> vocab;
  vocab.reserve(entries.size());
  for (auto& e : entries) vocab.push_back(std::move(e.first));
  return Tokenizer(std::move(vocab), std::move(abbreviations));
}

std::vector<std::vector<TokenId>> encode_corpus(const Corpus& corpus, const Tokenizer& tokenizer, bool prepend_bos) {
  std::vector<std::vector<TokenId>> out;
  out.reserve(corpus.size());
  for (const auto& ex : corpus.examples) {
    std::vector<TokenId> ids;
    ids.reserve(ex.size() + 1);
    if (prepend_bos) ids.push_back(special::kBos);
    for (const auto& t : ex) ids.push_back(tokenizer.id(t));
    out.push_back(std::move(ids));
  }
  return out;
}

void save_encoded_jsonl(const std::filesystem::path& path, const std::vector<std::vector<TokenId>>& encoded) {
  std::ofstream out(path);
  if (!out) throw DataError("corpus.save_encoded: cannot write " + path.string());
  for (const auto& ids : encoded) out << nlohmann::json{{"ids", ids}}.dump() << '\n';
}

std::vector<std::vector<TokenId>> load_encoded_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("corpus.load_encoded: cannot read " + path.string());
  std::vector<std::vector<TokenId>> out;
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(nlohmann::json::parse(line).at("ids").get<std::vector<TokenId>>());
    } catch (const nlohmann::json::exception& e) {
      throw DataError("corpus.load_encoded: " + path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace pedebias
