// Copyright 2026 The pedebias Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace pedebias {

// M aligned tuples of N demographic attribute words. Group k of tuple i is
// tuples[i][k]; indices are 0-based in the API and 1-based in file comments
// and JSON output.
struct BiasAttributeList {
  std::size_t num_groups = 0;
  std::vector<std::vector<std::string>> tuples;
  std::vector<std::string> group_names;  // documentation only

  friend bool operator==(const BiasAttributeList&, const BiasAttributeList&) = default;
};

struct AttributeRef {
  std::size_t tuple = 0;
  std::size_t group = 0;

  friend bool operator==(const AttributeRef&, const AttributeRef&) = default;
};

// Parses the tab-separated word-list format. expected_groups == 0 infers N
// from the first data line. Errors carry the 1-based line number.
BiasAttributeList parse_wordlist(std::string_view text, std::size_t expected_groups,
                                 std::string_view source = "<memory>");
BiasAttributeList load_wordlist(const std::filesystem::path& path, std::size_t expected_groups = 0);

// Built-in lists: "gender" (N=2), "religion" (N=3), "race" (N=3).
BiasAttributeList builtin_wordlist(std::string_view name);
std::vector<std::string> builtin_wordlist_names();

// A built-in name, or otherwise a path to a word-list file.
BiasAttributeList resolve_wordlist(std::string_view name_or_path, std::size_t expected_groups = 0);

std::string serialize_wordlist(const BiasAttributeList& list);

std::string ascii_lower(std::string_view s);

// word -> (tuple, group). When a word repeats in the same group position the
// first tuple in file order wins.
class LexiconIndex {
 public:
  explicit LexiconIndex(const BiasAttributeList& list);

  // Case-insensitive whole-token match.
  std::optional<AttributeRef> lookup(std::string_view token) const;

  std::size_t size() const { return map_.size(); }
  std::size_t num_groups() const { return num_groups_; }

  // Listed words carrying a trailing period ("mr.", "mrs."); the tokenizer
  // keeps these as single tokens.
  std::vector<std::string> abbreviations() const;

 private:
  std::size_t num_groups_ = 0;
  std::unordered_map<std::string, AttributeRef> map_;
};

}  // namespace pedebias
