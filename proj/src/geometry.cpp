#include "prmim/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "prmim/errors.hpp"
#include "prmim/random.hpp"

namespace prmim {

void GridShape::validate() const {
  if (rows == 0 || cols == 0) {
    throw ParameterError("grid must have at least one token, got " + std::to_string(rows) + "x" +
                         std::to_string(cols));
  }
}

std::size_t MaskPlan::count(TokenLabel label) const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), label));
}

std::vector<std::size_t> MaskPlan::tokens(TokenLabel label) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == label) out.push_back(i);
  return out;
}

std::vector<std::size_t> MaskPlan::masked_tokens() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] != TokenLabel::Unmasked) out.push_back(i);
  return out;
}

MaskPlan MaskPlan::without_throw() const {
  MaskPlan copy = *this;
  for (auto& l : copy.labels)
    if (l == TokenLabel::Thrown) l = TokenLabel::Retained;
  copy.rho_d = 0.0;
  return copy;
}

void MaskPlan::validate() const {
  grid.validate();
  if (labels.size() != grid.count()) {
    throw ParameterError("mask plan has " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(grid.count()) + " tokens");
  }
  if (rho_e < 0.0 || rho_e > 1.0 || rho_d < 0.0 || rho_d > rho_e) {
    throw ParameterError("mask plan ratios out of range: rho_e=" + std::to_string(rho_e) +
                         " rho_d=" + std::to_string(rho_d));
  }
  const std::size_t n = grid.count();
  if (masked_count() != token_count(n, rho_e) || count(TokenLabel::Thrown) != token_count(n, rho_d)) {
    throw ParameterError("mask plan counts disagree with rho_e=" + std::to_string(rho_e) +
                         ", rho_d=" + std::to_string(rho_d));
  }
}

std::size_t token_count(std::size_t n, double ratio) {
  return static_cast<std::size_t>(std::floor(static_cast<double>(n) * ratio + 0.5 + 1e-9));
}

MaskPlan generate_mask(GridShape grid, double rho_e, std::uint64_t seed) {
  grid.validate();
  if (!(rho_e >= 0.0 && rho_e <= 1.0)) {
    throw ParameterError("masking ratio must lie in [0, 1], got " + std::to_string(rho_e));
  }
  const std::size_t n = grid.count();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(order));
  MaskPlan plan{grid, std::vector<TokenLabel>(n, TokenLabel::Unmasked), rho_e, 0.0};
  const std::size_t masked = token_count(n, rho_e);
  for (std::size_t i = 0; i < masked; ++i) plan.labels[order[i]] = TokenLabel::Retained;
  return plan;
}

DistanceMatrix distance_matrix(const std::vector<GridCoord>& coords) {
  DistanceMatrix d;
  d.coords = coords;
  const std::size_t m = coords.size();
  d.values.assign(m * m, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i + 1; j < m; ++j) {
      const double dr = static_cast<double>(coords[i].row) - static_cast<double>(coords[j].row);
      const double dc = static_cast<double>(coords[i].col) - static_cast<double>(coords[j].col);
      const double dist = std::sqrt(dr * dr + dc * dc);
      d.values[i * m + j] = dist;
      d.values[j * m + i] = dist;
    }
  return d;
}

DistanceMatrix distance_matrix(const MaskPlan& plan) {
  const auto masked = plan.masked_tokens();
  if (masked.empty()) throw ParameterError("distance matrix needs at least one masked token");
  std::vector<GridCoord> coords;
  coords.reserve(masked.size());
  for (std::size_t t : masked) coords.push_back(plan.grid.coord(t));
  DistanceMatrix d = distance_matrix(coords);
  d.tokens = masked;
  return d;
}

std::size_t SelectionVector::retained() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

std::vector<std::size_t> SelectionVector::retained_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < bits.size(); ++i)
    if (bits[i]) out.push_back(i);
  return out;
}

SelectionVector selection_of(const MaskPlan& plan) {
  SelectionVector s;
  for (TokenLabel l : plan.labels) {
    if (l == TokenLabel::Retained) s.bits.push_back(1);
    if (l == TokenLabel::Thrown) s.bits.push_back(0);
  }
  return s;
}

namespace {

void check_selection(const DistanceMatrix& d, const SelectionVector& s,
                     std::optional<std::size_t> required_retained) {
  if (s.bits.size() != d.size()) {
    throw ConstraintError("selection has " + std::to_string(s.bits.size()) + " entries for " +
                          std::to_string(d.size()) + " masked tokens");
  }
  for (auto b : s.bits)
    if (b > 1) throw ConstraintError("selection entries must be 0 or 1");
  if (required_retained && s.retained() != *required_retained) {
    throw ConstraintError("selection retains " + std::to_string(s.retained()) + " tokens, expected " +
                          std::to_string(*required_retained));
  }
}

void check_retain(const DistanceMatrix& d, std::size_t retain) {
  if (retain > d.size()) {
    throw ParameterError("cannot retain " + std::to_string(retain) + " of " + std::to_string(d.size()) +
                         " masked tokens");
  }
}

double pair_sum(const DistanceMatrix& d, std::span<const std::size_t> idx) {
  double total = 0.0;
  for (std::size_t a : idx)
    for (std::size_t b : idx) total += d(a, b);
  return total;
}

double pair_min(const DistanceMatrix& d, std::span<const std::size_t> idx) {
  double m = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < idx.size(); ++a)
    for (std::size_t b = a + 1; b < idx.size(); ++b) m = std::min(m, d(idx[a], idx[b]));
  return m;
}

// Lexicographic enumeration of retain-subsets; keeps the first strict maximum.
template <typename Score>
SearchResult exhaustive(const DistanceMatrix& d, std::size_t retain, Score score) {
  check_retain(d, retain);
  const std::uint64_t subsets = binomial(d.size(), retain);
  if (subsets > kMaxExhaustiveSubsets) {
    throw SizeError("exhaustive search over C(" + std::to_string(d.size()) + ", " +
                    std::to_string(retain) + ") = " + std::to_string(subsets) +
                    " subsets exceeds the limit of " + std::to_string(kMaxExhaustiveSubsets));
  }
  std::vector<std::size_t> idx(retain);
  std::iota(idx.begin(), idx.end(), 0);
  std::vector<std::size_t> best = idx;
  double best_score = score(std::span<const std::size_t>(idx));
  const std::size_t m = d.size();
  for (;;) {
    std::size_t i = retain;
    while (i > 0 && idx[i - 1] == m - retain + (i - 1)) --i;
    if (i == 0) break;
    ++idx[i - 1];
    for (std::size_t j = i; j < retain; ++j) idx[j] = idx[j - 1] + 1;
    const double s = score(std::span<const std::size_t>(idx));
    if (s > best_score) {
      best_score = s;
      best = idx;
    }
  }
  SearchResult r;
  r.selection.bits.assign(m, 0);
  for (std::size_t k : best) r.selection.bits[k] = 1;
  r.objective = best_score;
  return r;
}

}  // namespace

double dispersion_objective(const DistanceMatrix& d, const SelectionVector& s,
                            std::optional<std::size_t> required_retained) {
  check_selection(d, s, required_retained);
  const auto idx = s.retained_indices();
  return pair_sum(d, idx);
}

double min_pairwise_distance(const DistanceMatrix& d, const SelectionVector& s) {
  check_selection(d, s, std::nullopt);
  const auto idx = s.retained_indices();
  return pair_min(d, idx);
}

SelectionVector furthest_select(const DistanceMatrix& d, std::size_t retain, std::size_t first) {
  check_retain(d, retain);
  const std::size_t m = d.size();
  SelectionVector s{std::vector<std::uint8_t>(m, 0)};
  if (retain == 0) return s;
  if (first >= m) throw ParameterError("first retained index " + std::to_string(first) + " out of range");
  s.bits[first] = 1;
  // Distance from each token to its nearest retained token.
  std::vector<double> nearest(m);
  for (std::size_t i = 0; i < m; ++i) nearest[i] = d(i, first);
  for (std::size_t k = 1; k < retain; ++k) {
    std::size_t pick = m;
    for (std::size_t i = 0; i < m; ++i) {
      if (s.bits[i]) continue;
      if (pick == m || nearest[i] > nearest[pick]) pick = i;
    }
    s.bits[pick] = 1;
    for (std::size_t i = 0; i < m; ++i) nearest[i] = std::min(nearest[i], d(i, pick));
  }
  return s;
}

SelectionVector random_select(std::size_t size, std::size_t retain, std::uint64_t seed) {
  if (retain > size) throw ParameterError("cannot retain more tokens than available");
  std::vector<std::size_t> order(size);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(order));
  SelectionVector s{std::vector<std::uint8_t>(size, 0)};
  for (std::size_t i = 0; i < retain; ++i) s.bits[order[i]] = 1;
  return s;
}

std::uint64_t binomial(std::uint64_t n, std::uint64_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  std::uint64_t r = 1;
  for (std::uint64_t i = 1; i <= k; ++i) {
    // Saturate rather than overflow; callers only compare against a guard.
    if (r > std::numeric_limits<std::uint64_t>::max() / (n - k + i)) {
      return std::numeric_limits<std::uint64_t>::max();
    }
    r = r * (n - k + i) / i;
  }
  return r;
}

SearchResult brute_force_select(const DistanceMatrix& d, std::size_t retain) {
  return exhaustive(d, retain, [&](std::span<const std::size_t> idx) { return pair_sum(d, idx); });
}

SearchResult brute_force_maxmin(const DistanceMatrix& d, std::size_t retain) {
  return exhaustive(d, retain, [&](std::span<const std::size_t> idx) { return pair_min(d, idx); });
}

std::string_view to_string(Sampling s) { return s == Sampling::Random ? "random" : "furthest"; }

Sampling parse_sampling(std::string_view name) {
  if (name == "random") return Sampling::Random;
  if (name == "furthest") return Sampling::Furthest;
  throw ParameterError("unknown sampling strategy '" + std::string(name) + "'");
}

namespace {

std::size_t checked_throw_count(const MaskPlan& plan, double rho_d) {
  if (!(rho_d >= 0.0) || rho_d > plan.rho_e) {
    throw ParameterError("throwing ratio rho_d=" + std::to_string(rho_d) +
                         " must lie in [0, rho_e=" + std::to_string(plan.rho_e) + "]");
  }
  const std::size_t thrown = token_count(plan.grid.count(), rho_d);
  const std::size_t masked = plan.masked_count();
  if (thrown > masked) {
    throw ParameterError("cannot throw " + std::to_string(thrown) + " of " + std::to_string(masked) +
                         " masked tokens");
  }
  return thrown;
}

MaskPlan apply_selection(const MaskPlan& plan, const std::vector<std::size_t>& masked,
                         const SelectionVector& s, double rho_d) {
  MaskPlan out = plan;
  out.rho_d = rho_d;
  for (std::size_t i = 0; i < masked.size(); ++i)
    out.labels[masked[i]] = s.bits[i] ? TokenLabel::Retained : TokenLabel::Thrown;
  return out;
}

}  // namespace

MaskPlan throw_random(const MaskPlan& plan, double rho_d, std::uint64_t seed) {
  const std::size_t thrown = checked_throw_count(plan, rho_d);
  const auto masked = plan.masked_tokens();
  const auto s = random_select(masked.size(), masked.size() - thrown, seed);
  return apply_selection(plan, masked, s, rho_d);
}

MaskPlan throw_furthest(const MaskPlan& plan, double rho_d, std::uint64_t seed,
                        std::optional<std::size_t> first) {
  const std::size_t thrown = checked_throw_count(plan, rho_d);
  const auto masked = plan.masked_tokens();
  const std::size_t retain = masked.size() - thrown;
  if (retain == 0 || masked.empty()) {
    return apply_selection(plan, masked, SelectionVector{std::vector<std::uint8_t>(masked.size(), 0)}, rho_d);
  }
  std::size_t start = 0;
  if (first) {
    start = *first;
  } else {
    Rng rng(seed);
    start = rng.uniform_index(masked.size());
  }
  const auto d = distance_matrix(plan);
  return apply_selection(plan, masked, furthest_select(d, retain, start), rho_d);
}

MaskPlan throw_tokens(const MaskPlan& plan, double rho_d, Sampling strategy, std::uint64_t seed) {
  return strategy == Sampling::Random ? throw_random(plan, rho_d, seed)
                                      : throw_furthest(plan, rho_d, seed);
}

double isolation_rate(const MaskPlan& plan, std::size_t window) {
  if (window < 3 || window % 2 == 0) {
    throw ParameterError("isolation window must be odd and >= 3, got " + std::to_string(window));
  }
  const auto thrown = plan.tokens(TokenLabel::Thrown);
  if (thrown.empty()) return 0.0;
  const long r = static_cast<long>(window / 2);
  const long rows = static_cast<long>(plan.grid.rows), cols = static_cast<long>(plan.grid.cols);
  std::size_t isolated = 0;
  for (std::size_t t : thrown) {
    const GridCoord c = plan.grid.coord(t);
    bool has_context = false;
    for (long dr = -r; dr <= r && !has_context; ++dr)
      for (long dc = -r; dc <= r; ++dc) {
        if (dr == 0 && dc == 0) continue;
        const long rr = static_cast<long>(c.row) + dr, cc = static_cast<long>(c.col) + dc;
        if (rr < 0 || rr >= rows || cc < 0 || cc >= cols) continue;
        if (plan.labels[static_cast<std::size_t>(rr * cols + cc)] != TokenLabel::Thrown) {
          has_context = true;
          break;
        }
      }
    if (!has_context) ++isolated;
  }
  return static_cast<double>(isolated) / static_cast<double>(thrown.size());
}

}  // namespace prmim
