#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

namespace prmim {

struct GridCoord {
  std::size_t row = 0;
  std::size_t col = 0;
  bool operator==(const GridCoord&) const = default;
};

/// Token grid; token i sits at (i / cols, i % cols).
struct GridShape {
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t count() const { return rows * cols; }
  GridCoord coord(std::size_t token) const { return {token / cols, token % cols}; }
  std::size_t index(GridCoord c) const { return c.row * cols + c.col; }
  void validate() const;
  bool operator==(const GridShape&) const = default;
};

enum class TokenLabel : std::uint8_t { Unmasked, Retained, Thrown };

/// Partition of the grid into visible tokens, masked tokens that stay in the
/// decoder sequence, and masked tokens that are thrown out of it.
struct MaskPlan {
  GridShape grid;
  std::vector<TokenLabel> labels;
  double rho_e = 0.0;
  double rho_d = 0.0;

  std::size_t count(TokenLabel label) const;
  std::size_t masked_count() const { return count(TokenLabel::Retained) + count(TokenLabel::Thrown); }
  // Ascending token indices.
  std::vector<std::size_t> tokens(TokenLabel label) const;
  std::vector<std::size_t> masked_tokens() const;
  // Copy with every thrown token relabeled as retained.
  MaskPlan without_throw() const;
  // Checks the count invariants; throws ParameterError on violation.
  void validate() const;
};

// round(n * ratio), halves rounded up. A 1e-9 guard absorbs representation
// error in products such as 10 * 0.15.
std::size_t token_count(std::size_t n, double ratio);

MaskPlan generate_mask(GridShape grid, double rho_e, std::uint64_t seed);

/// Pairwise Euclidean distances between masked tokens, ordered by ascending
/// token index.
struct DistanceMatrix {
  std::vector<std::size_t> tokens;
  std::vector<GridCoord> coords;
  std::vector<double> values;  // row-major, size() x size()

  std::size_t size() const { return coords.size(); }
  double operator()(std::size_t i, std::size_t j) const { return values[i * coords.size() + j]; }
};

DistanceMatrix distance_matrix(const MaskPlan& plan);
DistanceMatrix distance_matrix(const std::vector<GridCoord>& coords);

/// bits[i] == 1 keeps the i-th masked token in the decoder sequence.
struct SelectionVector {
  std::vector<std::uint8_t> bits;
  std::size_t retained() const;
  std::vector<std::size_t> retained_indices() const;
};

SelectionVector selection_of(const MaskPlan& plan);

// Sum over ordered pairs of retained tokens of their distance (each unordered
// pair counted twice). Throws ConstraintError when s is not a 0/1 vector of
// the right length or, if given, does not retain exactly `required_retained`.
double dispersion_objective(const DistanceMatrix& d, const SelectionVector& s,
                            std::optional<std::size_t> required_retained = std::nullopt);

// Smallest distance between two retained tokens; +inf with fewer than two.
double min_pairwise_distance(const DistanceMatrix& d, const SelectionVector& s);

// Greedy farthest-point selection starting from masked index `first`.
// Ties go to the lowest index.
SelectionVector furthest_select(const DistanceMatrix& d, std::size_t retain, std::size_t first);

SelectionVector random_select(std::size_t size, std::size_t retain, std::uint64_t seed);

struct SearchResult {
  SelectionVector selection;
  double objective = 0.0;
};

inline constexpr std::uint64_t kMaxExhaustiveSubsets = 1'000'000;

// Exhaustive maximizer of dispersion_objective. Ties resolve to the
// lexicographically smallest retained index set. Throws SizeError when
// C(size, retain) exceeds kMaxExhaustiveSubsets.
SearchResult brute_force_select(const DistanceMatrix& d, std::size_t retain);

// Exhaustive maximizer of min_pairwise_distance (same guard and tie rule).
SearchResult brute_force_maxmin(const DistanceMatrix& d, std::size_t retain);

std::uint64_t binomial(std::uint64_t n, std::uint64_t k);

enum class Sampling { Random, Furthest };

std::string_view to_string(Sampling s);
Sampling parse_sampling(std::string_view name);

// Both throw functions reset any previous throw, then relabel
// token_count(N, rho_d) masked tokens as thrown.
MaskPlan throw_random(const MaskPlan& plan, double rho_d, std::uint64_t seed);
// `first` fixes the first retained masked index instead of drawing it.
MaskPlan throw_furthest(const MaskPlan& plan, double rho_d, std::uint64_t seed,
                        std::optional<std::size_t> first = std::nullopt);
MaskPlan throw_tokens(const MaskPlan& plan, double rho_d, Sampling strategy, std::uint64_t seed);

// Fraction of thrown tokens with no unmasked or retained token in their
// window x window neighborhood (center excluded, clipped at the border).
double isolation_rate(const MaskPlan& plan, std::size_t window);

}  // namespace prmim
