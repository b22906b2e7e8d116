// Copyright 2026 The pedebias Authors
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include <omp.h>

#include <CLI11.hpp>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <sstream>

#include "pedebias/biaseval.hpp"
#include "pedebias/cda.hpp"
#include "pedebias/checkpoint.hpp"
#include "pedebias/corpus.hpp"
#include "pedebias/errors.hpp"
#include "pedebias/hashing.hpp"
#include "pedebias/kernels.hpp"
#include "pedebias/knowledgeeval.hpp"
#include "pedebias/lexicon.hpp"
#include "pedebias/peft.hpp"
#include "pedebias/sentdebias.hpp"
#include "pedebias/trainer.hpp"

#ifndef PEDEBIAS_DATA_DIR
#define PEDEBIAS_DATA_DIR "data"
#endif

namespace pedebias::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

const fs::path kDataDir = PEDEBIAS_DATA_DIR;

struct RunConfig {
  std::uint64_t seed = 42;
  int threads = 0;
  std::string out_dir;
  std::string output;

  std::string corpus;
  std::string val_corpus;
  std::string wordlist = "gender";
  std::size_t samples = 1;
  bool keep_neutral = false;
  bool exclude_fixed_identity = false;
  double downsample_fraction = 0.2;
  double val_fraction = 0.05;

  std::string core_path;
  std::string tokenizer_path;
  std::string overlay_path;
  std::string objective = "causal";
  ModelConfig model = [] {
    ModelConfig m;
    m.max_len = 32;
    return m;
  }();

  std::string method = "adapter";
  std::size_t length = 4;
  std::size_t reduction = 4;
  std::string activation = "relu";
  bool adapter_layer_norm = false;

  TrainConfig train;
  double clip = 0.0;
  std::vector<double> lr_grid;
  std::size_t base_epochs = 30;
  double base_lr = 5e-3;

  std::string pairs, triples, cloze, coref, lm_corpus;
  bool skip_bias = false, skip_lm = false, skip_facts = false, skip_coref = false;
  std::size_t resamples = 10000;
  bool exhaustive = false;

  std::size_t k = 1;

  // params
  ModelConfig count_model = [] {
    ModelConfig m;
    m.layers = 12;
    m.d = 768;
    m.heads = 12;
    m.max_len = 512;
    m.vocab_size = 30522;
    return m;
  }();
};

// Tracks the current step so failures name where they happened.
struct Stage {
  std::ostream& err;
  std::string name;

  void enter(std::string n, std::string_view what = {}) {
    name = std::move(n);
    if (!what.empty()) err << "[" << name << "] " << what << "\n";
  }
};

fs::path output_dir(const RunConfig& c) {
  if (!c.out_dir.empty()) return c.out_dir;
  if (const char* env = std::getenv("PEDEBIAS_OUT_DIR"); env && *env) return env;
  return ".";
}

void require_file(const std::string& path, std::string_view flag) {
  if (path.empty()) throw UsageError("missing required option --" + std::string(flag));
  if (!fs::is_regular_file(path)) throw DataError("--" + std::string(flag) + ": no such file: " + path);
}

void check_optional_file(const std::string& path, std::string_view flag) {
  if (!path.empty()) require_file(path, flag);
}

std::string file_sha256(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  Sha256 h;
  char buf[1 << 16];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) h.update(std::string_view(buf, static_cast<std::size_t>(in.gcount())));
  return h.hex_digest();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("write failed: " + path.string());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

// Canonical JSON of a subcommand's settings: every option with its effective
// value. Locations that do not change results are left out.
json options_json(const CLI::App& sub) {
  json j = json::object();
  for (const CLI::Option* opt : sub.get_options()) {
    const std::string name = opt->get_single_name();
    if (name == "help" || name == "config" || name == "threads" || name == "out-dir" || name == "output") continue;
    if (opt->get_type_size() == 0) {
      j[name] = opt->count() > 0;
    } else if (opt->get_items_expected_max() > 1) {
      j[name] = opt->count() > 0 ? json(opt->results()) : json::array();
    } else {
      j[name] = opt->count() > 0 ? opt->results().back() : opt->get_default_str();
    }
  }
  return j;
}

// Turns a JSON config file into flags, skipping any the user passed directly.
std::vector<std::string> expand_config(const fs::path& path, const std::vector<std::string>& given) {
  std::ifstream in(path);
  if (!in) throw DataError("--config: no such file: " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("--config: " + std::string(e.what()));
  }
  if (!j.is_object()) throw DataError("--config: expected a JSON object");
  auto given_flag = [&](const std::string& flag) {
    for (const auto& g : given)
      if (g == flag || g.rfind(flag + "=", 0) == 0) return true;
    return false;
  };
  auto scalar = [](const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); };
  std::vector<std::string> args;
  for (const auto& [key, value] : j.items()) {
    const std::string flag = "--" + key;
    if (given_flag(flag)) continue;
    if (value.is_boolean()) {
      if (value.get<bool>()) args.push_back(flag);
    } else if (value.is_array()) {
      if (value.empty()) continue;
      args.push_back(flag);
      for (const auto& v : value) args.push_back(scalar(v));
    } else {
      args.push_back(flag);
      args.push_back(scalar(value));
    }
  }
  return args;
}

struct Loaded {
  Tokenizer tokenizer;
  FrozenCore core;
  std::optional<TuningOverlay> overlay;

  const TuningOverlay* overlay_ptr() const { return overlay ? &*overlay : nullptr; }
};

Loaded load_model(const RunConfig& c, Stage& stage) {
  stage.enter("checkpoint.load", "loading model");
  Loaded m;
  m.tokenizer = Tokenizer::load(c.tokenizer_path);
  m.core = load_core(c.core_path);
  if (!c.overlay_path.empty()) m.overlay = load_overlay(c.overlay_path, m.core);
  if (m.tokenizer.size() != m.core.config.vocab_size)
    throw DataError("tokenizer has " + std::to_string(m.tokenizer.size()) + " entries but the core expects " +
                    std::to_string(m.core.config.vocab_size));
  return m;
}

void check_model_paths(const RunConfig& c) {
  require_file(c.core_path, "core");
  require_file(c.tokenizer_path, "tokenizer");
  check_optional_file(c.overlay_path, "overlay");
}

MethodSpec method_spec(const RunConfig& c) {
  MethodSpec s;
  s.method = parse_method(c.method);
  s.length = c.length;
  s.reduction = c.reduction;
  s.activation = parse_activation(c.activation);
  s.adapter_layer_norm = c.adapter_layer_norm;
  return s;
}

TrainConfig train_config(const RunConfig& c) {
  TrainConfig t = c.train;
  if (c.clip > 0.0) t.clip_norm = c.clip;
  t.validate();
  return t;
}

json parse_report(const std::string& text) { return json::parse(text); }

json stamp(json j, const std::string& config_hash, const std::string& fingerprint) {
  j["config_hash"] = config_hash;
  j["core_fingerprint"] = fingerprint;
  return j;
}

void emit(const json& j, const RunConfig& c, std::ostream& out) {
  if (c.output.empty()) {
    out << j.dump(2) << "\n";
  } else {
    write_json(c.output, j);
  }
}

json permutation_json(const RunConfig& c, std::uint64_t seed) {
  return {{"resamples", c.resamples}, {"seed", seed}, {"exhaustive", c.exhaustive}};
}

std::vector<std::vector<TokenId>> encode(const Corpus& corpus, const Tokenizer& tok, Objective objective) {
  return encode_corpus(corpus, tok, objective == Objective::Causal);
}

Corpus tokens_corpus(const AugmentedCorpus& aug) {
  Corpus c;
  c.examples.reserve(aug.examples.size());
  for (const auto& e : aug.examples) c.examples.push_back(e.tokens);
  return c;
}

json augmented_record(const AugmentedExample& e) {
  json j{{"text", e.text()}, {"origin", e.origin}, {"is_original", e.is_original}};
  j["permutation"] = e.permutation ? json(e.permutation->targets) : json(nullptr);
  if (e.permutation) j["occurred"] = e.permutation->occurred;
  return j;
}

std::string augmented_jsonl(const AugmentedCorpus& aug) {
  std::string s;
  for (const auto& e : aug.examples) s += augmented_record(e).dump() + "\n";
  return s;
}

AugmentedCorpus run_augment(const RunConfig& c, const Corpus& corpus, std::uint64_t seed, Stage& stage) {
  stage.enter("cda.augment_corpus", "augmenting " + std::to_string(corpus.size()) + " sentences");
  const auto list = resolve_wordlist(c.wordlist);
  CdaOptions o;
  o.samples = c.samples;
  o.seed = seed;
  o.keep_neutral = c.keep_neutral;
  o.exclude_fixed_identity = c.exclude_fixed_identity;
  auto aug = augment_corpus(corpus.examples, list, o);
  stage.err << "  " << aug.examples.size() << " examples\n";
  return aug;
}

// ---- subcommands ----

int cmd_augment(const RunConfig& c, const std::string& hash, std::ostream& out, Stage& stage) {
  require_file(c.corpus, "corpus");
  const Corpus corpus = load_corpus(c.corpus, {});
  const auto aug = run_augment(c, corpus, c.seed, stage);
  if (c.output.empty()) {
    out << augmented_jsonl(aug);
  } else {
    write_text(c.output, augmented_jsonl(aug));
  }
  stage.err << "config " << hash << "\n";
  return kExitOk;
}

int cmd_params(const RunConfig& c, std::ostream& out, Stage& stage) {
  stage.enter("peft.count_tunable");
  const MethodSpec spec = method_spec(c);
  validate_method(spec, c.count_model);
  out << count_tunable(spec, c.count_model) << "\n";
  auto& err = stage.err;
  err << std::left << std::setw(10) << "method" << std::right << std::setw(14) << "tunable" << std::setw(10) << "% core\n";
  const double core = static_cast<double>(core_parameter_count(c.count_model));
  for (Method m : {Method::Prefix, Method::Prompt, Method::Adapter, Method::Full}) {
    MethodSpec s = spec;
    s.method = m;
    try {
      validate_method(s, c.count_model);
    } catch (const DataError&) {
      continue;
    }
    const auto n = count_tunable(s, c.count_model);
    err << std::left << std::setw(10) << to_string(m) << std::right << std::setw(14) << n << std::setw(9) << std::fixed
        << std::setprecision(3) << 100.0 * static_cast<double>(n) / core << "\n";
  }
  return kExitOk;
}

struct TrainOutcome {
  TrainReport report;
  std::optional<GridSelection> grid;
};

TrainOutcome train_overlay(const RunConfig& c, FrozenCore& core, TuningOverlay& overlay,
                           const std::vector<std::vector<TokenId>>& train_set,
                           const std::vector<std::vector<TokenId>>& val_set, std::uint64_t seed,
                           std::uint64_t overlay_seed, Stage& stage) {
  TrainConfig tc = train_config(c);
  tc.seed = seed;
  TrainOutcome outcome;
  if (c.lr_grid.empty()) {
    stage.enter("trainer.train", "training " + std::string(to_string(overlay.spec.method)) + " on " +
                                     std::to_string(train_set.size()) + " sequences");
    outcome.report = train(core, overlay, train_set, val_set, tc);
  } else {
    stage.enter("trainer.grid_select", "searching " + std::to_string(c.lr_grid.size()) + " learning rates");
    std::vector<TrainConfig> grid;
    for (double lr : c.lr_grid) {
      TrainConfig g = tc;
      g.learning_rate = lr;
      grid.push_back(g);
    }
    auto sel = grid_select(core, overlay.spec, grid, train_set, val_set, overlay_seed);
    stage.err << "  best lr " << sel.best.learning_rate << " val loss " << sel.best_val_loss << "\n";
    core = sel.core;
    overlay = sel.overlay;
    outcome.grid = std::move(sel);
    return outcome;
  }
  stage.err << "  val loss " << outcome.report.initial_val_loss << " -> " << outcome.report.final_val_loss() << "\n";
  return outcome;
}

json train_json(const TrainOutcome& o) {
  json j = o.grid ? json::object() : parse_report(o.report.to_json(false));
  if (o.grid) {
    json runs = json::array();
    for (const auto& r : o.grid->runs)
      runs.push_back({{"learning_rate", r.config.learning_rate},
                      {"val_loss", r.val_loss ? json(*r.val_loss) : json(nullptr)}});
    j["grid"] = runs;
    j["best_learning_rate"] = o.grid->best.learning_rate;
    j["final_val_loss"] = o.grid->best_val_loss;
  }
  return j;
}

int cmd_train(const RunConfig& c, const std::string& hash, std::ostream& out, Stage& stage) {
  require_file(c.corpus, "corpus");
  check_optional_file(c.val_corpus, "val");
  const bool fresh = c.core_path.empty();
  if (!fresh) {
    require_file(c.core_path, "core");
    require_file(c.tokenizer_path, "tokenizer");
  }
  const MethodSpec spec = method_spec(c);
  const fs::path dir = output_dir(c);
  fs::create_directories(dir);

  stage.enter("corpus.load_corpus");
  Corpus train_text = load_corpus(c.corpus, {});
  Corpus val_text;
  if (c.val_corpus.empty()) {
    std::tie(train_text, val_text) = split(train_text, c.val_fraction, derive_seed(c.seed, "split"));
  } else {
    val_text = load_corpus(c.val_corpus, {});
  }

  Tokenizer tok;
  FrozenCore core;
  if (fresh) {
    stage.enter("transformer.initialize", "initializing a new core");
    tok = build_vocab(train_text);
    ModelConfig mc = c.model;
    mc.objective = parse_objective(c.objective);
    mc.vocab_size = tok.size();
    core = FrozenCore::initialize(mc, derive_seed(c.seed, "core-init"));
    tok.save(dir / "tokenizer.json");
  } else {
    tok = Tokenizer::load(c.tokenizer_path);
    core = load_core(c.core_path);
  }
  validate_method(spec, core.config);
  const auto train_ids = encode(train_text, tok, core.config.objective);
  const auto val_ids = encode(val_text, tok, core.config.objective);
  TuningOverlay overlay = attach(core, spec, derive_seed(c.seed, "overlay"));
  const std::string before = core.fingerprint();
  const auto outcome = train_overlay(c, core, overlay, train_ids, val_ids, derive_seed(c.seed, "train"),
                                     derive_seed(c.seed, "overlay"), stage);

  stage.enter("checkpoint.save");
  fs::path ckpt;
  if (spec.method == Method::Full) {
    ckpt = c.output.empty() ? dir / "core.bin" : fs::path(c.output);
    save_core(ckpt, core);
  } else {
    ckpt = c.output.empty() ? dir / "overlay.bin" : fs::path(c.output);
    save_overlay(ckpt, overlay);
    if (fresh) save_core(dir / "core.bin", core);
  }
  stage.err << "wrote " << ckpt.string() << "\n";
  json j = train_json(outcome);
  j["checkpoint"] = ckpt.string();
  j["fingerprint_before"] = before;
  j["elapsed_seconds"] = outcome.report.elapsed_seconds;
  out << stamp(j, hash, core.fingerprint()).dump(2) << "\n";
  return kExitOk;
}

json bias_json(const RunConfig& c, const Loaded& m, std::uint64_t perm_seed, Stage& stage) {
  const TransformerLM model(m.core, m.overlay_ptr());
  json j = json::object();
  if (!c.pairs.empty()) {
    stage.enter("biaseval.stereotype_score_pairs", "scoring pairs");
    const auto pairs = load_paired_jsonl(c.pairs);
    j["pairs"] = parse_report(stereotype_score_pairs(model, m.tokenizer, pairs).to_json());
    if (m.overlay) {
      stage.enter("biaseval.permutation_test");
      const TransformerLM base(m.core, nullptr);
      const auto before = stereotype_score_pairs(base, m.tokenizer, pairs);
      const auto after = j["pairs"]["indicators"].get<std::vector<double>>();
      PermutationTestOptions po{c.resamples, perm_seed, c.exhaustive};
      j["pairs"]["base_stereotype_score"] = before.stereotype_score;
      j["pairs"]["p_value"] = permutation_test(before.indicators, after, po);
      j["pairs"]["permutation_test"] = permutation_json(c, perm_seed);
    }
  }
  if (!c.triples.empty()) {
    stage.enter("biaseval.stereoset_scores", "scoring triples");
    const auto triples = load_triples_jsonl(c.triples);
    const auto s = stereoset_scores(model, m.tokenizer, triples);
    j["triples"] = {{"ss", s.ss}, {"lms", s.lms}, {"icat", icat(s.ss, s.lms)}, {"ss_indicators", s.ss_indicators},
                    {"lm_indicators", s.lm_indicators}};
  }
  return j;
}

int cmd_eval_bias(const RunConfig& c, const std::string& hash, std::ostream& out, Stage& stage) {
  check_model_paths(c);
  if (c.pairs.empty() && c.triples.empty()) throw UsageError("eval-bias needs --pairs or --triples");
  check_optional_file(c.pairs, "pairs");
  check_optional_file(c.triples, "triples");
  const Loaded m = load_model(c, stage);
  auto j = bias_json(c, m, derive_seed(c.seed, "permutation"), stage);
  emit(stamp(j, hash, m.core.fingerprint()), c, out);
  return kExitOk;
}

int cmd_eval_lm(const RunConfig& c, const std::string& hash, std::ostream& out, Stage& stage) {
  check_model_paths(c);
  if (c.lm_corpus.empty() && c.triples.empty()) throw UsageError("eval-lm needs --lm-corpus or --triples");
  check_optional_file(c.lm_corpus, "lm-corpus");
  check_optional_file(c.triples, "triples");
  const Loaded m = load_model(c, stage);
  const TransformerLM model(m.core, m.overlay_ptr());
  json j = json::object();
  if (!c.lm_corpus.empty()) {
    stage.enter("biaseval.perplexity", "perplexity");
    const auto ids = encode(load_corpus(c.lm_corpus, {}), m.tokenizer, m.core.config.objective);
    j["perplexity"] = perplexity_ids(model, ids);
    j["sequences"] = ids.size();
  }
  if (!c.triples.empty()) {
    stage.enter("biaseval.stereoset_scores", "LM score");
    const auto s = stereoset_scores(model, m.tokenizer, load_triples_jsonl(c.triples));
    j["lm_score"] = s.lms;
    j["stereotype_score"] = s.ss;
    j["icat"] = icat(s.ss, s.lms);
    j["lm_indicators"] = s.lm_indicators;
  }
  emit(stamp(j, hash, m.core.fingerprint()), c, out);
  return kExitOk;
}

int cmd_eval_facts(const RunConfig& c, const std::string& hash, std::ostream& out, Stage& stage) {
  check_model_paths(c);
  require_file(c.cloze, "cloze");
  const Loaded m = load_model(c, stage);
  stage.enter("knowledgeeval.fact_retrieval", "cloze retrieval");
  const TransformerLM model(m.core, m.overlay_ptr());
  const auto r = fact_retrieval(model, m.tokenizer, load_cloze_jsonl(c.cloze));
  emit(stamp(parse_report(r.to_json()), hash, m.core.fingerprint()), c, out);
  return kExitOk;
}

int cmd_eval_coref(const RunConfig& c, const std::string& hash, std::ostream& out, Stage& stage) {
  check_model_paths(c);
  require_file(c.coref, "coref");
  const Loaded m = load_model(c, stage);
  stage.enter("knowledgeeval.winobias_eval", "coreference");
  const TransformerLM model(m.core, m.overlay_ptr());
  const auto r = winobias_eval(model, m.tokenizer, load_coref_jsonl(c.coref));
  emit(stamp(parse_report(r.to_json()), hash, m.core.fingerprint()), c, out);
  return kExitOk;
}

int cmd_debias_subspace(const RunConfig& c, const std::string& hash, std::ostream& out, Stage& stage) {
  check_model_paths(c);
  require_file(c.corpus, "corpus");
  const Loaded m = load_model(c, stage);
  const Corpus corpus = load_corpus(c.corpus, {});
  stage.enter("sentdebias.difference_vectors", "encoding counterfactual pairs");
  const auto encoder = mean_hidden_encoder(m.core, m.overlay_ptr(), m.tokenizer);
  const auto diffs = difference_vectors(encoder, corpus.examples, resolve_wordlist(c.wordlist), c.samples, c.seed);
  stage.enter("sentdebias.bias_subspace", std::to_string(diffs.size()) + " difference vectors");
  const auto subspace = bias_subspace(diffs, c.k, {diffs.size(), c.seed});
  json j = json::parse(subspace.to_json());
  emit(stamp(j, hash, m.core.fingerprint()), c, out);
  return kExitOk;
}

struct Artifacts {
  fs::path dir;
  json entries = json::object();

  void add(const std::string& name, const fs::path& file) {
    entries[name] = {{"path", fs::relative(file, dir).generic_string()}, {"sha256", file_sha256(file)}};
  }
};

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream s;
  s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return s.str();
}

int cmd_pipeline(RunConfig c, const json& options, const std::string& hash, std::ostream& out, Stage& stage) {
  if (c.corpus.empty()) c.corpus = (kDataDir / "synthetic" / "corpus.txt").string();
  auto bundled = [](std::string& path, std::string_view name) {
    if (path.empty()) path = (kDataDir / "synthetic" / name).string();
  };
  if (!c.skip_bias) {
    bundled(c.pairs, "pairs.jsonl");
    bundled(c.triples, "triples.jsonl");
  }
  if (!c.skip_facts) bundled(c.cloze, "cloze.jsonl");
  if (!c.skip_coref) bundled(c.coref, "coref.jsonl");

  stage.enter("cli.validate");
  require_file(c.corpus, "corpus");
  const bool fresh = c.core_path.empty();
  if (!fresh) {
    require_file(c.core_path, "core");
    require_file(c.tokenizer_path, "tokenizer");
  }
  if (!c.skip_bias) {
    require_file(c.pairs, "pairs");
    require_file(c.triples, "triples");
  }
  if (!c.skip_facts) require_file(c.cloze, "cloze");
  if (!c.skip_coref) require_file(c.coref, "coref");
  check_optional_file(c.lm_corpus, "lm-corpus");
  const MethodSpec spec = method_spec(c);
  const TrainConfig base_train = train_config(c);
  (void)resolve_wordlist(c.wordlist);

  const fs::path dir = output_dir(c);
  fs::create_directories(dir);
  Artifacts artifacts{dir};
  json seeds = json::object();
  auto seed_for = [&](const std::string& s) {
    const auto v = derive_seed(c.seed, s);
    seeds[s] = v;
    return v;
  };
  json timings = json::object();
  auto clock = std::chrono::steady_clock::now();
  auto lap = [&](const std::string& name) {
    const auto now = std::chrono::steady_clock::now();
    timings[name] = std::chrono::duration<double>(now - clock).count();
    clock = now;
  };
  const std::string started = utc_now();

  stage.enter("corpus.load_corpus");
  const Corpus raw = load_corpus(c.corpus, {});
  const auto aug = run_augment(c, raw, seed_for("augment"), stage);
  write_text(dir / "augmented.jsonl", augmented_jsonl(aug));
  artifacts.add("augmented_corpus", dir / "augmented.jsonl");
  lap("augment");

  stage.enter("corpus.downsample");
  const Corpus sampled = downsample(tokens_corpus(aug), c.downsample_fraction, seed_for("downsample"));
  auto [train_text, val_text] = split(sampled, c.val_fraction, seed_for("split"));
  stage.err << "  train " << train_text.size() << " / val " << val_text.size() << "\n";

  Tokenizer tok;
  FrozenCore core;
  json base_report = nullptr;
  if (fresh) {
    Corpus vocab_source = raw;
    for (const auto& e : aug.examples) vocab_source.examples.push_back(e.tokens);
    tok = build_vocab(vocab_source);
    ModelConfig mc = c.model;
    mc.objective = parse_objective(c.objective);
    mc.vocab_size = tok.size();
    stage.enter("trainer.train", "pretraining a " + std::string(to_string(mc.objective)) + " base model on the raw corpus");
    core = FrozenCore::initialize(mc, seed_for("core-init"));
    auto [raw_train, raw_val] = split(raw, c.val_fraction, seed_for("base-split"));
    TuningOverlay full = attach(core, MethodSpec{Method::Full, 0, 1, Activation::Relu, false}, 0);
    TrainConfig bt = base_train;
    bt.learning_rate = c.base_lr;
    bt.epochs = c.base_epochs;
    bt.seed = seed_for("base-train");
    const auto rep = train(core, full, encode(raw_train, tok, mc.objective), encode(raw_val, tok, mc.objective), bt);
    base_report = parse_report(rep.to_json(false));
    write_json(dir / "base_train_report.json", stamp(base_report, hash, core.fingerprint()));
    artifacts.add("base_train_report", dir / "base_train_report.json");
    lap("base_train");
  } else {
    tok = Tokenizer::load(c.tokenizer_path);
    core = load_core(c.core_path);
  }
  tok.save(dir / "tokenizer.json");
  artifacts.add("tokenizer", dir / "tokenizer.json");
  save_core(dir / "core.bin", core);
  artifacts.add("core", dir / "core.bin");
  const std::string base_fingerprint = core.fingerprint();

  validate_method(spec, core.config);
  const auto train_ids = encode(train_text, tok, core.config.objective);
  const auto val_ids = encode(val_text, tok, core.config.objective);
  const auto overlay_seed = seed_for("overlay");
  TuningOverlay overlay = attach(core, spec, overlay_seed);
  const auto outcome = train_overlay(c, core, overlay, train_ids, val_ids, seed_for("train"), overlay_seed, stage);
  timings["train_elapsed_seconds"] = outcome.report.elapsed_seconds;
  lap("train");
  write_json(dir / "train_report.json", stamp(train_json(outcome), hash, core.fingerprint()));
  artifacts.add("train_report", dir / "train_report.json");
  if (spec.method == Method::Full) {
    save_core(dir / "tuned_core.bin", core);
    artifacts.add("checkpoint", dir / "tuned_core.bin");
  } else {
    save_overlay(dir / "overlay.bin", overlay);
    artifacts.add("checkpoint", dir / "overlay.bin");
  }

  // The untuned model is the reference for every evaluation.
  FrozenCore base_core = spec.method == Method::Full ? load_core(dir / "core.bin") : core;
  Loaded base{tok, base_core, std::nullopt};
  Loaded tuned{tok, core, std::nullopt};
  if (spec.method != Method::Full) tuned.overlay = overlay;
  const auto perm_seed = seed_for("permutation");

  json reports = json::object();
  auto both = [&](const std::string& name, auto&& fn) {
    json r = {{"base", fn(base)}, {"debiased", fn(tuned)}};
    write_json(dir / (name + ".json"), stamp(r, hash, base_fingerprint));
    artifacts.add(name, dir / (name + ".json"));
    reports[name] = r;
  };
  if (!c.skip_bias) {
    both("bias_report", [&](const Loaded& m) { return bias_json(c, m, perm_seed, stage); });
    const auto& br = reports["bias_report"];
    const auto b = br["base"]["pairs"]["indicators"].get<std::vector<double>>();
    const auto d = br["debiased"]["pairs"]["indicators"].get<std::vector<double>>();
    stage.enter("biaseval.permutation_test");
    const double p = permutation_test(b, d, {c.resamples, perm_seed, c.exhaustive});
    reports["bias_report"]["p_value"] = p;
    stage.err << "  stereotype score " << br["base"]["pairs"]["stereotype_score"].get<double>() << " -> "
              << br["debiased"]["pairs"]["stereotype_score"].get<double>() << " (p = " << p << ")\n";
    lap("eval_bias");
  }
  if (!c.skip_lm) {
    stage.enter("biaseval.perplexity", "perplexity");
    const auto lm_ids = c.lm_corpus.empty() ? val_ids : encode(load_corpus(c.lm_corpus, {}), tok, core.config.objective);
    both("lm_report", [&](const Loaded& m) {
      const TransformerLM model(m.core, m.overlay_ptr());
      return json{{"perplexity", perplexity_ids(model, lm_ids)}, {"sequences", lm_ids.size()}};
    });
    lap("eval_lm");
  }
  if (!c.skip_facts) {
    stage.enter("knowledgeeval.fact_retrieval", "cloze retrieval");
    const auto queries = load_cloze_jsonl(c.cloze);
    both("fact_report", [&](const Loaded& m) {
      const TransformerLM model(m.core, m.overlay_ptr());
      return parse_report(fact_retrieval(model, tok, queries).to_json());
    });
    lap("eval_facts");
  }
  if (!c.skip_coref) {
    stage.enter("knowledgeeval.winobias_eval", "coreference");
    const auto examples = load_coref_jsonl(c.coref);
    both("coref_report", [&](const Loaded& m) {
      const TransformerLM model(m.core, m.overlay_ptr());
      return parse_report(winobias_eval(model, tok, examples).to_json());
    });
    lap("eval_coref");
  }

  json manifest = {{"format", "pedebias-manifest"},
                   {"version", 1},
                   {"config", options},
                   {"config_hash", hash},
                   {"core_fingerprint", base_fingerprint},
                   {"tuned_fingerprint", core.fingerprint()},
                   {"seeds", seeds},
                   {"artifacts", artifacts.entries},
                   {"summary", {{"augmented_examples", aug.examples.size()},
                                {"train_sequences", train_ids.size()},
                                {"val_sequences", val_ids.size()},
                                {"tunable_parameters", count_tunable(spec, core.config)},
                                {"final_val_loss", outcome.grid ? outcome.grid->best_val_loss
                                                                : outcome.report.final_val_loss()}}},
                   {"timestamps", {{"started", started}, {"finished", utc_now()}, {"seconds", timings}}}};
  if (reports.contains("bias_report")) {
    manifest["summary"]["stereotype_score"] = {
        {"base", reports["bias_report"]["base"]["pairs"]["stereotype_score"]},
        {"debiased", reports["bias_report"]["debiased"]["pairs"]["stereotype_score"]},
        {"p_value", reports["bias_report"]["p_value"]}};
  }
  write_json(dir / "manifest.json", manifest);
  stage.err << "wrote " << (dir / "manifest.json").string() << "\n";
  out << manifest.dump(2) << "\n";
  return kExitOk;
}

// ---- option wiring ----

void add_seed(CLI::App* s, RunConfig& c) { s->add_option("--seed", c.seed, "Global seed"); }

void add_model_paths(CLI::App* s, RunConfig& c) {
  s->add_option("--core", c.core_path, "Core checkpoint");
  s->add_option("--tokenizer", c.tokenizer_path, "Tokenizer JSON");
  s->add_option("--overlay", c.overlay_path, "Overlay checkpoint (omit for the base model)");
}

void add_cda(CLI::App* s, RunConfig& c) {
  s->add_option("--wordlist", c.wordlist, "Built-in list name (gender, religion, race) or a TSV path");
  s->add_option("--samples", c.samples, "Counterfactuals per sentence")->check(CLI::PositiveNumber);
  s->add_flag("--keep-neutral", c.keep_neutral, "Keep sentences without attribute words");
  s->add_flag("--exclude-fixed-identity", c.exclude_fixed_identity,
              "Drop permutations that fix every occurred group");
}

void add_architecture(CLI::App* s, ModelConfig& m) {
  s->add_option("--d", m.d, "Model dimension")->check(CLI::PositiveNumber);
  s->add_option("--layers", m.layers, "Layers")->check(CLI::PositiveNumber);
  s->add_option("--heads", m.heads, "Attention heads")->check(CLI::PositiveNumber);
  s->add_option("--max-len", m.max_len, "Maximum positions")->check(CLI::PositiveNumber);
}

void add_method(CLI::App* s, RunConfig& c) {
  s->add_option("--method", c.method, "full, prefix, prompt or adapter")
      ->check(CLI::IsMember({"full", "prefix", "prompt", "adapter"}));
  s->add_option("--l", c.length, "Prefix or prompt length");
  s->add_option("--r", c.reduction, "Adapter reduction factor");
  s->add_option("--activation", c.activation, "Adapter nonlinearity")->check(CLI::IsMember({"relu", "tanh"}));
  s->add_flag("--adapter-layer-norm", c.adapter_layer_norm, "Add a tunable layer norm to each adapter");
}

void add_training(CLI::App* s, RunConfig& c) {
  s->add_option("--lr", c.train.learning_rate, "Initial learning rate");
  s->add_option("--lr-grid", c.lr_grid, "Search these learning rates and keep the best");
  s->add_option("--epochs", c.train.epochs, "Epochs");
  s->add_option("--batch-size", c.train.batch_size, "Batch size");
  s->add_option("--weight-decay", c.train.weight_decay, "Decoupled weight decay");
  s->add_option("--clip", c.clip, "Gradient norm clip (0 disables)");
  s->add_option("--val-fraction", c.val_fraction, "Validation share")->check(CLI::Range(0.0, 1.0));
  s->add_option("--objective", c.objective, "Objective for a new core")->check(CLI::IsMember({"causal", "masked"}));
  add_architecture(s, c.model);
}

void add_permutation(CLI::App* s, RunConfig& c) {
  s->add_option("--resamples", c.resamples, "Permutation test resamples");
  s->add_flag("--exhaustive", c.exhaustive, "Enumerate all sign flips");
}

int dispatch(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  RunConfig c;
  CLI::App app{"Counterfactual augmentation, parameter-efficient tuning and bias evaluation"};
  app.name("pedebias");
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  std::string config_path;
  auto common = [&](CLI::App* s) {
    s->add_option("--config", config_path, "JSON file mirroring the flags; flags win");
    s->add_option("--threads", c.threads, "Worker cap (0 uses the OpenMP default)");
    s->add_option("--out-dir", c.out_dir, "Output directory (default $PEDEBIAS_OUT_DIR or .)");
    s->add_option("--output", c.output, "Write the result here instead of standard output");
  };

  auto* augment = app.add_subcommand("augment", "Counterfactual data augmentation to JSON Lines");
  common(augment);
  add_seed(augment, c);
  augment->add_option("--corpus", c.corpus, "Text corpus, one sentence per line");
  add_cda(augment, c);

  auto* train_cmd = app.add_subcommand("train", "Train an overlay (or the full model)");
  common(train_cmd);
  add_seed(train_cmd, c);
  train_cmd->add_option("--corpus", c.corpus, "Training text");
  train_cmd->add_option("--val", c.val_corpus, "Validation text (default: split from --corpus)");
  add_model_paths(train_cmd, c);
  add_method(train_cmd, c);
  add_training(train_cmd, c);

  auto* eval_bias = app.add_subcommand("eval-bias", "Stereotype scores on paired or triple data");
  common(eval_bias);
  add_seed(eval_bias, c);
  add_model_paths(eval_bias, c);
  eval_bias->add_option("--pairs", c.pairs, "Paired JSON Lines");
  eval_bias->add_option("--triples", c.triples, "Triple JSON Lines");
  add_permutation(eval_bias, c);

  auto* eval_lm = app.add_subcommand("eval-lm", "Perplexity and LM score");
  common(eval_lm);
  add_model_paths(eval_lm, c);
  eval_lm->add_option("--lm-corpus", c.lm_corpus, "Held-out text");
  eval_lm->add_option("--triples", c.triples, "Triple JSON Lines for the LM score");

  auto* eval_facts = app.add_subcommand("eval-facts", "Cloze fact retrieval");
  common(eval_facts);
  add_model_paths(eval_facts, c);
  eval_facts->add_option("--cloze", c.cloze, "Cloze JSON Lines");

  auto* eval_coref = app.add_subcommand("eval-coref", "Coreference by suffix completion");
  common(eval_coref);
  add_model_paths(eval_coref, c);
  eval_coref->add_option("--coref", c.coref, "Coreference JSON Lines");

  auto* subspace = app.add_subcommand("debias-subspace", "Estimate a bias subspace from counterfactual pairs");
  common(subspace);
  add_seed(subspace, c);
  add_model_paths(subspace, c);
  subspace->add_option("--corpus", c.corpus, "Text corpus");
  add_cda(subspace, c);
  subspace->add_option("--k", c.k, "Subspace dimension")->check(CLI::PositiveNumber);

  auto* params = app.add_subcommand("params", "Count tunable parameters");
  common(params);
  add_method(params, c);
  add_architecture(params, c.count_model);
  params->add_option("--vocab", c.count_model.vocab_size, "Vocabulary size");

  auto* pipeline = app.add_subcommand("pipeline", "Augment, down-sample, train and evaluate");
  common(pipeline);
  add_seed(pipeline, c);
  pipeline->add_option("--corpus", c.corpus, "Raw corpus (default: bundled synthetic corpus)");
  add_cda(pipeline, c);
  pipeline->add_option("--downsample", c.downsample_fraction, "Share of the augmented corpus to keep")
      ->check(CLI::Range(0.0, 1.0));
  pipeline->add_option("--core", c.core_path, "Existing core (default: pretrain one on the raw corpus)");
  pipeline->add_option("--tokenizer", c.tokenizer_path, "Tokenizer for --core");
  pipeline->add_option("--base-epochs", c.base_epochs, "Pretraining epochs for a new core");
  pipeline->add_option("--base-lr", c.base_lr, "Pretraining learning rate for a new core");
  add_method(pipeline, c);
  add_training(pipeline, c);
  pipeline->add_option("--pairs", c.pairs, "Paired JSON Lines");
  pipeline->add_option("--triples", c.triples, "Triple JSON Lines");
  pipeline->add_option("--cloze", c.cloze, "Cloze JSON Lines");
  pipeline->add_option("--coref", c.coref, "Coreference JSON Lines");
  pipeline->add_option("--lm-corpus", c.lm_corpus, "Held-out text for perplexity (default: validation split)");
  pipeline->add_flag("--skip-bias", c.skip_bias, "Skip stereotype scores");
  pipeline->add_flag("--skip-lm", c.skip_lm, "Skip perplexity");
  pipeline->add_flag("--skip-facts", c.skip_facts, "Skip fact retrieval");
  pipeline->add_flag("--skip-coref", c.skip_coref, "Skip coreference");
  add_permutation(pipeline, c);

  std::vector<std::string> args = raw_args;
  for (std::size_t i = 1; i + 1 < args.size(); ++i) {
    if (args[i] == "--config") {
      const std::string path = args[i + 1];
      std::vector<std::string> rest(args.begin() + 1, args.end());
      rest.erase(rest.begin() + static_cast<std::ptrdiff_t>(i - 1), rest.begin() + static_cast<std::ptrdiff_t>(i + 1));
      auto from_file = expand_config(path, rest);
      std::vector<std::string> merged{args.front()};
      merged.insert(merged.end(), from_file.begin(), from_file.end());
      merged.insert(merged.end(), rest.begin(), rest.end());
      args = std::move(merged);
      break;
    }
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, err, err);
    if (code == 0) return kExitOk;
    const CLI::App* failed = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    err << failed->help();
    return kExitUsage;
  }

  if (c.threads < 0) throw UsageError("--threads must be non-negative");
  if (c.threads > 0) {
    kernels::set_threads(c.threads);
    omp_set_num_threads(c.threads);
  }

  CLI::App* sub = app.get_subcommands().front();
  const json options = options_json(*sub);
  const std::string hash = sha256_hex(json{{"subcommand", sub->get_name()}, {"options", options}}.dump());
  Stage stage{err, "cli." + sub->get_name()};
  try {
    if (sub == augment) return cmd_augment(c, hash, out, stage);
    if (sub == train_cmd) return cmd_train(c, hash, out, stage);
    if (sub == eval_bias) return cmd_eval_bias(c, hash, out, stage);
    if (sub == eval_lm) return cmd_eval_lm(c, hash, out, stage);
    if (sub == eval_facts) return cmd_eval_facts(c, hash, out, stage);
    if (sub == eval_coref) return cmd_eval_coref(c, hash, out, stage);
    if (sub == subspace) return cmd_debias_subspace(c, hash, out, stage);
    if (sub == params) return cmd_params(c, out, stage);
    return cmd_pipeline(c, options, hash, out, stage);
  } catch (const UsageError& e) {
    err << "pedebias " << sub->get_name() << ": usage error in " << stage.name << ": " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericalError& e) {
    err << "pedebias " << sub->get_name() << ": numerical failure in " << stage.name << ": " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "pedebias " << sub->get_name() << ": data error in " << stage.name << ": " << e.what() << "\n";
    return kExitData;
  }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  try {
    return dispatch(args, out, err);
  } catch (const UsageError& e) {
    err << "pedebias: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericalError& e) {
    err << "pedebias: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "pedebias: " << e.what() << "\n";
    return kExitData;
  }
}

}  // namespace pedebias::cli
