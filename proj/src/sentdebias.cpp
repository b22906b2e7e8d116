// Copyright 2026 The pedebias Authors
// SPDX-License-Identifier: Apache-2.0

#include "pedebias/sentdebias.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <sstream>

#include <Eigen/Dense>
#include <json.hpp>

#include "pedebias/cda.hpp"
#include "pedebias/errors.hpp"
#include "pedebias/kernels.hpp"

namespace pedebias {

SentenceEncoder mean_hidden_encoder(const FrozenCore& core, const TuningOverlay* overlay, const Tokenizer& tokenizer) {
  return [&core, overlay, &tokenizer](std::span<const std::string> tokens) {
    const auto ids = tokenizer.encode_tokens(tokens);
    if (ids.empty()) throw DataError("sentdebias.encode: empty sentence");
    const Matrix h = final_hidden(core, overlay, ids);
    Vector out(h.cols, 0.0);
    for (std::size_t r = 0; r < h.rows; ++r) {
      for (std::size_t c = 0; c < h.cols; ++c) out[c] += h(r, c);
    }
    for (double& x : out) x /= static_cast<double>(h.rows);
    return out;
  };
}

std::vector<Vector> difference_vectors(const SentenceEncoder& encoder,
                                       std::span<const std::vector<std::string>> sentences,
                                       const BiasAttributeList& list, std::size_t samples, std::uint64_t seed) {
  CdaOptions options;
  options.samples = samples;
  options.seed = seed;
  const auto augmented = augment_corpus(sentences, list, options);

  // Pair each counterfactual with its source; encode everything once.
  std::vector<std::size_t> cf_index;
  for (std::size_t i = 0; i < augmented.examples.size(); ++i) {
    if (!augmented.examples[i].is_original) cf_index.push_back(i);
  }
  if (cf_index.empty()) throw DataError("sentdebias.difference_vectors: no attribute-bearing sentences found");

  std::vector<std::size_t> sources;
  for (std::size_t i : cf_index) sources.push_back(augmented.examples[i].origin);
  std::sort(sources.begin(), sources.end());
  sources.erase(std::unique(sources.begin(), sources.end()), sources.end());

  const std::size_t n_src = sources.size();
  std::vector<Vector> embeddings(n_src + cf_index.size());
  std::exception_ptr error;
  const bool par = kernels::backend() == kernels::Backend::Parallel;
#pragma omp parallel for schedule(dynamic) if (par)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(embeddings.size()); ++i) {
    const auto u = static_cast<std::size_t>(i);
    try {
      embeddings[u] = u < n_src ? encoder(sentences[sources[u]]) : encoder(augmented.examples[cf_index[u - n_src]].tokens);
    } catch (...) {
#pragma omp critical(pedebias_sentdebias_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);

  std::vector<Vector> diffs;
  for (std::size_t j = 0; j < cf_index.size(); ++j) {
    const auto origin = augmented.examples[cf_index[j]].origin;
    const auto s = static_cast<std::size_t>(std::lower_bound(sources.begin(), sources.end(), origin) - sources.begin());
    const Vector& a = embeddings[s];
    const Vector& b = embeddings[n_src + j];
    if (a.size() != b.size()) throw DataError("sentdebias.difference_vectors: encoder returned inconsistent sizes");
    Vector d(a.size());
    for (std::size_t c = 0; c < a.size(); ++c) d[c] = a[c] - b[c];
    diffs.push_back(std::move(d));
  }
  return diffs;
}

BiasSubspace bias_subspace(std::span<const Vector> diffs, std::size_t k, SubspaceProvenance provenance) {
  if (k == 0) throw DataError("sentdebias.bias_subspace: k must be at least 1");
  if (diffs.size() < k) {
    throw DataError("sentdebias.bias_subspace: need at least k=" + std::to_string(k) + " vectors, got " +
                    std::to_string(diffs.size()));
  }
  const std::size_t n = diffs.size();
  const std::size_t d = diffs.front().size();
  if (d == 0) throw DataError("sentdebias.bias_subspace: zero-dimensional vectors");
  if (k > d) throw DataError("sentdebias.bias_subspace: k exceeds the dimension");

  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < n; ++i) {
    if (diffs[i].size() != d) throw DataError("sentdebias.bias_subspace: vectors differ in dimension");
    for (std::size_t c = 0; c < d; ++c) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = diffs[i][c];
  }
  x.rowwise() -= x.colwise().mean();
  const Eigen::MatrixXd cov = (x.transpose() * x) / static_cast<double>(n);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw NumericalError("sentdebias.bias_subspace: eigendecomposition failed");
  const auto& values = solver.eigenvalues();  // ascending
  const auto& vectors = solver.eigenvectors();

  const double top = std::max(values(values.size() - 1), 0.0);
  const double tol = std::max(top, 1.0) * 1e-10 * static_cast<double>(d);
  std::size_t rank = 0;
  for (Eigen::Index i = 0; i < values.size(); ++i) rank += values(i) > tol;
  if (k > rank) {
    throw DataError("sentdebias.bias_subspace: k=" + std::to_string(k) + " exceeds the rank of the centered vectors (" +
                    std::to_string(rank) + ")");
  }

  BiasSubspace s;
  s.dimension = d;
  provenance.source_vectors = n;
  s.provenance = provenance;
  for (std::size_t j = 0; j < k; ++j) {
    const Eigen::Index col = values.size() - 1 - static_cast<Eigen::Index>(j);
    Vector b(d);
    std::size_t arg = 0;
    for (std::size_t c = 0; c < d; ++c) {
      b[c] = vectors(static_cast<Eigen::Index>(c), col);
      if (std::abs(b[c]) > std::abs(b[arg])) arg = c;
    }
    if (b[arg] < 0.0) {
      for (double& v : b) v = -v;
    }
    s.basis.push_back(std::move(b));
    s.variances.push_back(values(col));
  }
  return s;
}

Vector debias_embedding(std::span<const double> v, const BiasSubspace& subspace) {
  if (v.size() != subspace.dimension) {
    throw DataError("sentdebias.debias_embedding: vector has dimension " + std::to_string(v.size()) + ", subspace has " +
                    std::to_string(subspace.dimension));
  }
  Vector out(v.begin(), v.end());
  for (const auto& b : subspace.basis) {
    double dot = 0.0;
    for (std::size_t c = 0; c < v.size(); ++c) dot += v[c] * b[c];
    for (std::size_t c = 0; c < v.size(); ++c) out[c] -= dot * b[c];
  }
  return out;
}

std::string BiasSubspace::to_json() const {
  nlohmann::json j;
  j["format"] = "pedebias-subspace";
  j["version"] = 1;
  j["dimension"] = dimension;
  j["k"] = basis.size();
  j["basis"] = basis;
  j["variances"] = variances;
  j["provenance"] = {{"source_vectors", provenance.source_vectors}, {"seed", provenance.seed}};
  return j.dump(2);
}

BiasSubspace BiasSubspace::from_json(std::string_view json) {
  try {
    const auto j = nlohmann::json::parse(json);
    if (j.at("format").get<std::string>() != "pedebias-subspace" || j.at("version").get<int>() != 1) {
      throw DataError("sentdebias.load: unsupported subspace format");
    }
    BiasSubspace s;
    s.dimension = j.at("dimension").get<std::size_t>();
    s.basis = j.at("basis").get<std::vector<Vector>>();
    s.variances = j.at("variances").get<std::vector<double>>();
    s.provenance.source_vectors = j.at("provenance").at("source_vectors").get<std::size_t>();
    s.provenance.seed = j.at("provenance").at("seed").get<std::uint64_t>();
    if (s.basis.size() != j.at("k").get<std::size_t>() || s.variances.size() != s.basis.size()) {
      throw DataError("sentdebias.load: k does not match the basis");
    }
    for (const auto& b : s.basis) {
      if (b.size() != s.dimension) throw DataError("sentdebias.load: basis vector has the wrong dimension");
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("sentdebias.load: ") + e.what());
  }
}

void BiasSubspace::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("sentdebias.save: cannot write " + path.string());
  out << to_json() << '\n';
}

BiasSubspace BiasSubspace::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("sentdebias.load: cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

}  // namespace pedebias
