// Copyright 2026 The pedebias Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "pedebias/core.hpp"

namespace pedebias {

// Word-level splitting: runs of letters/digits (with inner apostrophes and
// hyphens) are words, every other non-space character is its own token. A
// word followed by '.' stays one token when the lowercased result is a known
// abbreviation ("mr.").
std::vector<std::string> tokenize(std::string_view text, const std::unordered_set<std::string>& abbreviations = {});

std::string join_tokens(std::span<const std::string> tokens);

enum class CorpusMode { Sentence, Chunk };

struct CorpusFormat {
  CorpusMode mode = CorpusMode::Sentence;
  std::size_t chunk_length = 0;  // T in chunk mode
};

struct CorpusProvenance {
  std::string source;
  double fraction = 1.0;
  std::uint64_t seed = 0;
};

// Token sequences, one per example. In chunk mode every example except
// possibly the last has exactly chunk_length tokens.
struct Corpus {
  std::vector<std::vector<std::string>> examples;
  CorpusFormat format;
  CorpusProvenance provenance;

  std::size_t size() const { return examples.size(); }
  bool empty() const { return examples.empty(); }
};

Corpus corpus_from_lines(std::span<const std::string> lines, CorpusFormat format,
                         const std::unordered_set<std::string>& abbreviations = {});
Corpus load_corpus(const std::filesystem::path& path, CorpusFormat format,
                   const std::unordered_set<std::string>& abbreviations = {});

// ceil(fraction * |corpus|) examples without replacement, original order kept.
Corpus downsample(const Corpus& corpus, double fraction, std::uint64_t seed);

// Disjoint, exhaustive split; validation gets ceil(val_fraction * n) examples.
std::pair<Corpus, Corpus> split(const Corpus& corpus, double val_fraction, std::uint64_t seed = 42);

class Tokenizer {
 public:
  static constexpr int kFormatVersion = 1;

  Tokenizer() = default;
  // vocabulary excludes the four reserved tokens, which take ids 0-3.
  Tokenizer(std::vector<std::string> vocabulary, std::vector<std::string> abbreviations);

  std::vector<std::string> split(std::string_view text) const;
  TokenId id(std::string_view token) const;  // UNK when absent
  const std::string& token(TokenId id) const;
  bool contains(std::string_view token) const;

  std::vector<TokenId> encode_tokens(std::span<const std::string> tokens) const;
  std::vector<TokenId> encode(std::string_view text) const;
  std::string decode(std::span<const TokenId> ids) const;

  std::size_t size() const { return id_to_token_.size(); }
  const std::vector<std::string>& abbreviations() const { return abbreviations_; }
  const std::unordered_set<std::string>& abbreviation_set() const { return abbreviation_set_; }

  std::string to_json() const;
  static Tokenizer from_json(std::string_view json);
  void save(const std::filesystem::path& path) const;
  static Tokenizer load(const std::filesystem::path& path);

  friend bool operator==(const Tokenizer& a, const Tokenizer& b) {
    return a.id_to_token_ == b.id_to_token_ && a.abbreviations_ == b.abbreviations_;
  }

 private:
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, TokenId> token_to_id_;
  std::vector<std::string> abbreviations_;
  std::unordered_set<std::string> abbreviation_set_;
};

// Tokens with count >= min_count, ordered by descending count then
// lexicographically, after the reserved tokens.
Tokenizer build_vocab(const Corpus& corpus, std::size_t min_count = 1, std::vector<std::string> abbreviations = {});

// Encodes every example; causal models get a leading BOS.
std::vector<std::vector<TokenId>> encode_corpus(const Corpus& corpus, const Tokenizer& tokenizer, bool prepend_bos);

// JSON Lines cache: {"ids":[...]} per example.
void save_encoded_jsonl(const std::filesystem::path& path, const std::vector<std::vector<TokenId>>& encoded);
std::vector<std::vector<TokenId>> load_encoded_jsonl(const std::filesystem::path& path);

}  // namespace pedebias
