#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cuatree/model.hpp"

namespace cuatree::analytics {

inline constexpr int kDefaultGrid = 20;
inline constexpr double kUniqueTaskThreshold = 0.65;

// Actions compare equal when kind, grid cell and normalized text match.
struct ActionSignature {
  ActionKind kind = ActionKind::kWait;
  int column = 0;
  int row = 0;
  std::string text;
  friend auto operator<=>(const ActionSignature&, const ActionSignature&) = default;
};

using SignatureSet = std::set<ActionSignature>;

ActionSignature quantize(const Action& action, int screen_width, int screen_height, int grid = kDefaultGrid);

// |A ∩ B| / |A ∪ B|, and 0 when both sets are empty.
double jaccard(const SignatureSet& a, const SignatureSet& b);

// Signatures of every executed non-terminate edge of `tree`.
SignatureSet executed_signatures(const ExplorationTree& tree, int screen_width, int screen_height,
                                 int grid = kDefaultGrid);

struct RedundancyMatrix {
  std::vector<std::vector<double>> values;
  double mean_off_diagonal = 0.0;
};

RedundancyMatrix redundancy_matrix(std::span<const ExplorationTree> trees, int screen_width, int screen_height,
                                   int grid = kDefaultGrid);

// TF-IDF with raw term counts, idf = ln(N / (1 + df)) + 1, and L2-normalized rows.
class TfIdfModel {
 public:
  using SparseVector = std::vector<std::pair<std::size_t, double>>;  // sorted by term index

  static TfIdfModel fit(std::span<const std::string> documents);

  const std::map<std::string, std::size_t>& vocabulary() const { return vocabulary_; }
  const std::vector<double>& idf() const { return idf_; }
  std::size_t document_count() const { return vectors_.size(); }

  // Unit vector of a fitted document; nullopt when the document has no tokens.
  const std::optional<SparseVector>& vector(std::size_t document) const { return vectors_.at(document); }

  // Vector of arbitrary text over the fitted vocabulary; unknown tokens are ignored.
  std::optional<SparseVector> transform(std::string_view text) const;

  static double cosine(const SparseVector& a, const SparseVector& b);

 private:
  std::map<std::string, std::size_t> vocabulary_;
  std::vector<double> idf_;
  std::vector<std::optional<SparseVector>> vectors_;
};

// Rounding slack when comparing a cosine with a threshold: reordered bags of words must reach 1.0.
inline constexpr double kSimilarityTolerance = 1e-9;

// True when `similarity` meets `threshold` up to kSimilarityTolerance.
inline bool reaches(double similarity, double threshold) { return similarity >= threshold - kSimilarityTolerance; }

// Cosine of two texts under a model fitted on exactly those two texts.
double pairwise_tfidf_cosine(std::string_view a, std::string_view b);

struct UniqueTaskCount {
  std::vector<std::size_t> cumulative;  // one entry per arrival
  std::vector<std::size_t> skipped;     // arrivals with no tokens
};

// Streaming count: an arrival is unique iff no accepted description reaches `threshold`.
UniqueTaskCount unique_task_count(std::span<const std::string> descriptions,
                                  double threshold = kUniqueTaskThreshold);

// Unique tokens over total tokens.
double ttr(std::span<const std::string> goals);

// `repeats` TTR values over samples of `sample_size` goals drawn without replacement.
std::vector<double> ttr_resampled(std::span<const std::string> goals, std::size_t sample_size = 500,
                                  std::size_t repeats = 20, std::uint64_t seed = 0);

// depth -> mean over nodes at that depth of max(children - 1, 0).
std::map<int, double> branching_histogram(std::span<const ExplorationTree> forest);

}  // namespace cuatree::analytics
