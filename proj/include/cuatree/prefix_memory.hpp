#pragma once

#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace cuatree {

enum class SimilarityMode { kExact, kTfIdf };

std::string_view to_string(SimilarityMode mode);
SimilarityMode similarity_mode_from_string(std::string_view name);

// Goal prefixes of previously explored paths, grouped by category. A stored sequence
// (g0 .. gk) records that goal gk was taken after the history g0 .. g(k-1).
class PrefixMemory {
 public:
  using Sequence = std::vector<std::string>;

  explicit PrefixMemory(int prefix_length = 3, double similarity_threshold = 0.8,
                        SimilarityMode mode = SimilarityMode::kExact);

  int prefix_length() const { return prefix_length_; }
  double similarity_threshold() const { return threshold_; }
  SimilarityMode mode() const { return mode_; }

  // Stores the normalized goals, truncated to the prefix length. Empty sequences are ignored.
  void admit(const std::string& category, const Sequence& goals);
  void merge(const PrefixMemory& other);

  // Goals stored at `history.size()` after exactly this (normalized) history.
  std::vector<std::string> goals_after(const std::string& category, const Sequence& history) const;

  // Stored prefixes extending `history` by one goal, for display to an exploring agent.
  std::vector<Sequence> view(const std::string& category, const Sequence& history) const;

  std::size_t size() const;
  const std::map<std::string, std::set<Sequence>>& entries() const { return entries_; }

 private:
  int prefix_length_;
  double threshold_;
  SimilarityMode mode_;
  std::map<std::string, std::set<Sequence>> entries_;
};

// True when `candidate` is below the similarity threshold against every goal stored for the
// same category and history. Vacuously true at depths at or beyond the prefix length.
bool novelty_check(const PrefixMemory& memory, const std::string& category, const PrefixMemory::Sequence& history,
                   const std::string& candidate);

}  // namespace cuatree
