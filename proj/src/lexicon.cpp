// Copyright 2026 The pedebias Authors
// SPDX-License-Identifier: Apache-2.0

#include "pedebias/lexicon.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "builtin_wordlists.hpp"
#include "pedebias/errors.hpp"

namespace pedebias {

namespace {

std::string trim(std::string_view s) {
  auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
  while (!s.empty() && is_space(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && is_space(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return std::string(s);
}

std::vector<std::string> split_tabs(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find('\t', start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

[[noreturn]] void fail(std::string_view source, std::size_t line, const std::string& what) {
  std::ostringstream os;
  os << "lexicon.load_wordlist: " << source << ":" << line << ": " << what;
  throw DataError(os.str());
}

}  // namespace

std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

BiasAttributeList parse_wordlist(std::string_view text, std::size_t expected_groups, std::string_view source) {
  BiasAttributeList list;
  list.num_groups = expected_groups;
  // word -> (group, first line seen)
  std::unordered_map<std::string, std::pair<std::size_t, std::size_t>> seen;

  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

    const std::string stripped = trim(line);
    if (stripped.empty()) continue;
    if (stripped.front() == '#') {
      constexpr std::string_view kGroups = "# groups:";
      if (stripped.rfind(kGroups, 0) == 0) list.group_names = split_tabs(trim(std::string_view(stripped).substr(kGroups.size())));
      continue;
    }

    auto fields = split_tabs(line);
    if (list.num_groups == 0) list.num_groups = fields.size();
    if (list.num_groups < 2) fail(source, line_no, "a word list needs at least 2 groups");
    if (fields.size() != list.num_groups) {
      fail(source, line_no,
           "expected " + std::to_string(list.num_groups) + " tab-separated fields, got " + std::to_string(fields.size()));
    }
    for (std::size_t k = 0; k < fields.size(); ++k) {
      const auto& w = fields[k];
      if (w.empty()) fail(source, line_no, "empty entry in group " + std::to_string(k + 1));
      if (w != ascii_lower(w)) fail(source, line_no, "entry '" + w + "' is not lowercase");
      if (w.find_first_of(" \t") != std::string::npos) fail(source, line_no, "entry '" + w + "' contains whitespace");
      auto [it, inserted] = seen.emplace(w, std::make_pair(k, line_no));
      if (!inserted && it->second.first != k) {
        fail(source, line_no,
             "word '" + w + "' appears in group " + std::to_string(k + 1) + " but line " +
                 std::to_string(it->second.second) + " lists it in group " + std::to_string(it->second.first + 1));
      }
    }
    list.tuples.push_back(std::move(fields));
  }

  if (list.tuples.empty()) throw DataError("lexicon.load_wordlist: " + std::string(source) + ": empty word list");
  if (!list.group_names.empty() && list.group_names.size() != list.num_groups) list.group_names.clear();
  if (list.group_names.empty()) {
    for (std::size_t k = 0; k < list.num_groups; ++k) list.group_names.push_back("group" + std::to_string(k + 1));
  }
  return list;
}

BiasAttributeList load_wordlist(const std::filesystem::path& path, std::size_t expected_groups) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("lexicon.load_wordlist: cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_wordlist(buf.str(), expected_groups, path.string());
}

std::vector<std::string> builtin_wordlist_names() { return {"gender", "religion", "race"}; }

BiasAttributeList builtin_wordlist(std::string_view name) {
  if (name == "gender") return parse_wordlist(builtin::kGenderWords, 2, "builtin:gender");
  if (name == "religion") return parse_wordlist(builtin::kReligionWords, 3, "builtin:religion");
  if (name == "race") return parse_wordlist(builtin::kRaceWords, 3, "builtin:race");
  throw DataError("lexicon.builtin_wordlist: unknown list '" + std::string(name) + "'");
}

BiasAttributeList resolve_wordlist(std::string_view name_or_path, std::size_t expected_groups) {
  const auto names = builtin_wordlist_names();
  if (std::find(names.begin(), names.end(), name_or_path) != names.end()) {
    auto list = builtin_wordlist(name_or_path);
    if (expected_groups != 0 && list.num_groups != expected_groups) {
      throw DataError("lexicon.resolve_wordlist: '" + std::string(name_or_path) + "' has " +
                      std::to_string(list.num_groups) + " groups, expected " + std::to_string(expected_groups));
    }
    return list;
  }
  return load_wordlist(std::filesystem::path(name_or_path), expected_groups);
}

std::string serialize_wordlist(const BiasAttributeList& list) {
  std::string out = "# groups:";
  for (std::size_t k = 0; k < list.group_names.size(); ++k) out += (k == 0 ? " " : "\t") + list.group_names[k];
  out += '\n';
  for (const auto& t : list.tuples) {
    for (std::size_t k = 0; k < t.size(); ++k) {
      if (k) out += '\t';
      out += t[k];
    }
    out += '\n';
  }
  return out;
}

LexiconIndex::LexiconIndex(const BiasAttributeList& list) : num_groups_(list.num_groups) {
  for (std::size_t i = 0; i < list.tuples.size(); ++i) {
    for (std::size_t k = 0; k < list.tuples[i].size(); ++k) {
      map_.emplace(list.tuples[i][k], AttributeRef{i, k});  // first tuple wins
    }
  }
}

std::optional<AttributeRef> LexiconIndex::lookup(std::string_view token) const {
  if (token.empty()) return std::nullopt;
  const auto it = map_.find(ascii_lower(token));
  if (it == map_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::string> LexiconIndex::abbreviations() const {
  std::vector<std::string> out;
  for (const auto& [w, ref] : map_) {
    if (w.size() > 1 && w.back() == '.') out.push_back(w);
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace pedebias
