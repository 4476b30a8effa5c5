#include "cuatree/prefix_memory.hpp"

#include <algorithm>

#include "cuatree/analytics.hpp"
#include "cuatree/error.hpp"
#include "cuatree/text.hpp"

namespace cuatree {

namespace {

PrefixMemory::Sequence normalized(const PrefixMemory::Sequence& goals, std::size_t limit) {
  PrefixMemory::Sequence out;
  for (std::size_t i = 0; i < goals.size() && i < limit; ++i) out.push_back(text::normalize(goals[i]));
  return out;
}

}  // namespace

std::string_view to_string(SimilarityMode mode) { return mode == SimilarityMode::kExact ? "exact" : "tfidf"; }

SimilarityMode similarity_mode_from_string(std::string_view name) {
  if (name == "exact") return SimilarityMode::kExact;
  if (name == "tfidf") return SimilarityMode::kTfIdf;
  throw ConfigError("unknown similarity mode '" + std::string(name) + "' (expected exact or tfidf)");
}

PrefixMemory::PrefixMemory(int prefix_length, double similarity_threshold, SimilarityMode mode)
    : prefix_length_(prefix_length), threshold_(similarity_threshold), mode_(mode) {
  if (prefix_length < 1) throw ContractError("prefix length must be positive");
  if (!(similarity_threshold > 0.0 && similarity_threshold <= 1.0)) {
    throw ContractError("similarity threshold must lie in (0, 1]");
  }
}

void PrefixMemory::admit(const std::string& category, const Sequence& goals) {
  auto seq = normalized(goals, static_cast<std::size_t>(prefix_length_));
  if (!seq.empty()) entries_[category].insert(std::move(seq));
}

void PrefixMemory::merge(const PrefixMemory& other) {
  for (const auto& [category, seqs] : other.entries_) {
    for (const auto& s : seqs) admit(category, s);
  }
}

std::vector<std::string> PrefixMemory::goals_after(const std::string& category, const Sequence& history) const {
  std::vector<std::string> out;
  auto it = entries_.find(category);
  if (it == entries_.end()) return out;
  const auto h = normalized(history, history.size());
  for (const auto& s : it->second) {
    if (s.size() > h.size() && std::equal(h.begin(), h.end(), s.begin())) out.push_back(s[h.size()]);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<PrefixMemory::Sequence> PrefixMemory::view(const std::string& category, const Sequence& history) const {
  std::vector<Sequence> out;
  const auto h = normalized(history, history.size());
  for (auto& g : goals_after(category, history)) {
    Sequence s = h;
    s.push_back(std::move(g));
    out.push_back(std::move(s));
  }
  return out;
}

std::size_t PrefixMemory::size() const {
  std::size_t n = 0;
  for (const auto& [category, seqs] : entries_) n += seqs.size();
  return n;
}

bool novelty_check(const PrefixMemory& memory, const std::string& category, const PrefixMemory::Sequence& history,
                   const std::string& candidate) {
  if (history.size() >= static_cast<std::size_t>(memory.prefix_length())) return true;
  const auto stored = memory.goals_after(category, history);
  if (stored.empty()) return true;
  const std::string cand = text::normalize(candidate);
  if (memory.mode() == SimilarityMode::kExact) {
    return std::find(stored.begin(), stored.end(), cand) == stored.end();
  }
  std::vector<std::string> corpus = stored;
  corpus.push_back(cand);
  const auto model = analytics::TfIdfModel::fit(corpus);
  const auto& cv = model.vector(corpus.size() - 1);
  if (!cv) return true;
  for (std::size_t i = 0; i < stored.size(); ++i) {
    const auto& sv = model.vector(i);
    if (sv && analytics::reaches(analytics::TfIdfModel::cosine(*cv, *sv), memory.similarity_threshold())) return false;
  }
  return true;
}

}  // namespace cuatree
