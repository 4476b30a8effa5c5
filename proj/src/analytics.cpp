#include "cuatree/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <unordered_set>

#include "cuatree/error.hpp"
#include "cuatree/text.hpp"

namespace cuatree::analytics {

ActionSignature quantize(const Action& action, int screen_width, int screen_height, int grid) {
  if (screen_width <= 0 || screen_height <= 0 || grid <= 0) throw ContractError("quantize needs positive sizes");
  ActionSignature sig;
  sig.kind = action.kind;
  if (action.coordinate) {
    const auto [x, y] = *action.coordinate;
    if (x < 0 || y < 0 || x >= screen_width || y >= screen_height) {
      throw ContractError("coordinate (" + std::to_string(x) + ", " + std::to_string(y) + ") outside " +
                          std::to_string(screen_width) + "x" + std::to_string(screen_height));
    }
    sig.column = static_cast<int>(static_cast<long long>(x) * grid / screen_width);
    sig.row = static_cast<int>(static_cast<long long>(y) * grid / screen_height);
  }
  if (action.text) sig.text = text::normalize(*action.text);
  return sig;
}

double jaccard(const SignatureSet& a, const SignatureSet& b) {
  if (a.empty() && b.empty()) return 0.0;
  std::size_t common = 0;
  for (const auto& s : a) common += b.contains(s) ? 1 : 0;
  const std::size_t united = a.size() + b.size() - common;
  return static_cast<double>(common) / static_cast<double>(united);
}

SignatureSet executed_signatures(const ExplorationTree& tree, int screen_width, int screen_height, int grid) {
  SignatureSet out;
  for (const auto& [id, n] : tree.nodes) {
    if (!n.incoming || !n.verification) continue;
    if (n.incoming->action.kind == ActionKind::kTerminate) continue;
    out.insert(quantize(n.incoming->action, screen_width, screen_height, grid));
  }
  return out;
}

RedundancyMatrix redundancy_matrix(std::span<const ExplorationTree> trees, int screen_width, int screen_height,
                                   int grid) {
  if (trees.size() < 2) throw ContractError("redundancy matrix needs at least two trees");
  std::vector<SignatureSet> sets;
  for (const auto& t : trees) sets.push_back(executed_signatures(t, screen_width, screen_height, grid));
  const std::size_t n = trees.size();
  RedundancyMatrix m;
  m.values.assign(n, std::vector<double>(n, 1.0));
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = jaccard(sets[i], sets[j]);
      m.values[i][j] = m.values[j][i] = v;
      sum += v;
    }
  }
  m.mean_off_diagonal = sum / static_cast<double>(n * (n - 1) / 2);
  return m;
}

TfIdfModel TfIdfModel::fit(std::span<const std::string> documents) {
  TfIdfModel model;
  std::vector<std::vector<std::string>> tokenized;
  tokenized.reserve(documents.size());
  std::map<std::string, std::size_t> df;
  for (const auto& doc : documents) {
    tokenized.push_back(text::tokenize(doc));
    std::set<std::string> unique(tokenized.back().begin(), tokenized.back().end());
    for (const auto& t : unique) ++df[t];
  }
  const auto n_docs = static_cast<double>(documents.size());
  for (const auto& [token, count] : df) {
    model.vocabulary_.emplace(token, model.idf_.size());
    model.idf_.push_back(std::log(n_docs / (1.0 + static_cast<double>(count))) + 1.0);
  }
  for (const auto& tokens : tokenized) {
    std::map<std::size_t, double> tf;
    for (const auto& t : tokens) tf[model.vocabulary_.at(t)] += 1.0;
    SparseVector v;
    double norm2 = 0.0;
    for (const auto& [idx, count] : tf) {
      const double w = count * model.idf_[idx];
      v.emplace_back(idx, w);
      norm2 += w * w;
    }
    if (norm2 <= 0.0) {
      model.vectors_.emplace_back(std::nullopt);
      continue;
    }
    const double norm = std::sqrt(norm2);
    for (auto& [idx, w] : v) w /= norm;
    model.vectors_.emplace_back(std::move(v));
  }
  return model;
}

std::optional<TfIdfModel::SparseVector> TfIdfModel::transform(std::string_view input) const {
  std::map<std::size_t, double> tf;
  for (const auto& t : text::tokenize(input)) {
    if (auto it = vocabulary_.find(t); it != vocabulary_.end()) tf[it->second] += 1.0;
  }
  SparseVector v;
  double norm2 = 0.0;
  for (const auto& [idx, count] : tf) {
    const double w = count * idf_[idx];
    v.emplace_back(idx, w);
    norm2 += w * w;
  }
  if (norm2 <= 0.0) return std::nullopt;
  const double norm = std::sqrt(norm2);
  for (auto& [idx, w] : v) w /= norm;
  return v;
}

double TfIdfModel::cosine(const SparseVector& a, const SparseVector& b) {
  double dot = 0.0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (ia->first < ib->first) {
      ++ia;
    } else if (ib->first < ia->first) {
      ++ib;
    } else {
      dot += ia->second * ib->second;
      ++ia;
      ++ib;
    }
  }
  return dot;
}

double pairwise_tfidf_cosine(std::string_view a, std::string_view b) {
  const std::vector<std::string> docs{std::string(a), std::string(b)};
  const auto model = TfIdfModel::fit(docs);
  const auto& va = model.vector(0);
  const auto& vb = model.vector(1);
  if (!va || !vb) return 0.0;
  return TfIdfModel::cosine(*va, *vb);
}

UniqueTaskCount unique_task_count(std::span<const std::string> descriptions, double threshold) {
  if (!(threshold > 0.0 && threshold <= 1.0)) throw ContractError("threshold must lie in (0, 1]");
  const auto model = TfIdfModel::fit(descriptions);
  UniqueTaskCount result;
  std::vector<const TfIdfModel::SparseVector*> accepted;
  for (std::size_t i = 0; i < descriptions.size(); ++i) {
    const auto& v = model.vector(i);
    if (!v) {
      result.skipped.push_back(i);
    } else {
      const bool unique = std::all_of(accepted.begin(), accepted.end(), [&](const auto* other) {
        return !reaches(TfIdfModel::cosine(*v, *other), threshold);
      });
      if (unique) accepted.push_back(&*v);
    }
    result.cumulative.push_back(accepted.size());
  }
  return result;
}

double ttr(std::span<const std::string> goals) {
  if (goals.empty()) throw ContractError("ttr needs a nonempty sample");
  std::size_t total = 0;
  std::unordered_set<std::string> types;
  for (const auto& g : goals) {
    for (auto& t : text::tokenize(g)) {
      ++total;
      types.insert(std::move(t));
    }
  }
  if (total == 0) throw ContractError("ttr sample has no tokens");
  return static_cast<double>(types.size()) / static_cast<double>(total);
}

std::vector<double> ttr_resampled(std::span<const std::string> goals, std::size_t sample_size, std::size_t repeats,
                                  std::uint64_t seed) {
  if (goals.empty()) throw ContractError("ttr needs a nonempty pool");
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(goals.size());
  std::vector<double> values;
  const std::size_t take = std::min(sample_size, goals.size());
  for (std::size_t r = 0; r < repeats; ++r) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    // Partial Fisher-Yates; modulo draw keeps the sequence identical across standard libraries.
    for (std::size_t i = 0; i < take; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng() % (order.size() - i));
      std::swap(order[i], order[j]);
    }
    std::vector<std::string> sample;
    sample.reserve(take);
    for (std::size_t i = 0; i < take; ++i) sample.push_back(goals[order[i]]);
    values.push_back(ttr(sample));
  }
  return values;
}

std::map<int, double> branching_histogram(std::span<const ExplorationTree> forest) {
  std::map<int, std::pair<double, std::size_t>> acc;
  for (const auto& tree : forest) {
    const auto index = child_index(tree);
    for (const auto& [id, n] : tree.nodes) {
      auto it = index.find(id);
      const std::size_t kids = it == index.end() ? 0 : it->second.size();
      auto& [sum, count] = acc[n.depth];
      sum += kids > 0 ? static_cast<double>(kids - 1) : 0.0;
      ++count;
    }
  }
  std::map<int, double> out;
  for (const auto& [depth, sc] : acc) out[depth] = sc.first / static_cast<double>(sc.second);
  return out;
}

}  // namespace cuatree::analytics
