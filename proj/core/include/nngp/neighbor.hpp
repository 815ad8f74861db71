#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "nngp/point.hpp"

namespace nngp {

enum class OrderingStrategy {
  coord_sum,    // sort by x + y, then original index
  first_coord,  // sort by x, then y, then original index
  given,        // caller-supplied permutation
};

/// Returns `order` with order[k] = original index of the k-th location.
/// `given` is only read for OrderingStrategy::given and must be a permutation.
std::vector<std::size_t> order_locations(std::span<const Point> coords,
                                         OrderingStrategy strategy,
                                         std::span<const std::size_t> given = {});

/// Conditioning sets of an ordered set of locations. Indices refer to
/// positions in the ordered sequence; every neighbor of i precedes i and
/// each set is sorted by increasing distance, ties by smaller index.
class NeighborGraph {
 public:
  NeighborGraph() = default;
  NeighborGraph(std::size_t m, std::vector<std::size_t> offsets,
                std::vector<std::size_t> indices, std::vector<std::size_t> order);

  std::size_t size() const noexcept { return offsets_.empty() ? 0 : offsets_.size() - 1; }
  std::size_t max_neighbors() const noexcept { return m_; }

  std::span<const std::size_t> neighbors(std::size_t i) const noexcept {
    return {indices_.data() + offsets_[i], offsets_[i + 1] - offsets_[i]};
  }
  /// Position of row i's first neighbor in the flattened index array.
  std::size_t offset(std::size_t i) const noexcept { return offsets_[i]; }
  std::size_t total_neighbors() const noexcept { return indices_.size(); }

  /// order()[k] is the original index of ordered location k.
  const std::vector<std::size_t>& order() const noexcept { return order_; }
  const std::vector<std::size_t>& offsets() const noexcept { return offsets_; }
  const std::vector<std::size_t>& indices() const noexcept { return indices_; }

  friend bool operator==(const NeighborGraph&, const NeighborGraph&) = default;

 private:
  std::size_t m_ = 0;
  std::vector<std::size_t> offsets_{0};
  std::vector<std::size_t> indices_;
  std::vector<std::size_t> order_;
};

/// O(n^2) exhaustive construction over already ordered coordinates.
/// Throws DuplicateLocationError when two locations coincide.
NeighborGraph brute_force_neighbors(std::span<const Point> ordered, std::size_t m);

/// Projection-sorted partial search: candidates are visited outward along
/// the (1,1) direction and the scan stops once the projected gap alone
/// exceeds the current m-th best distance. Output is identical to
/// brute_force_neighbors.
NeighborGraph fast_neighbors(std::span<const Point> ordered, std::size_t m);

/// Orders `coords`, builds the conditioning sets with fast_neighbors and
/// records the ordering in the result.
NeighborGraph build_neighbor_graph(std::span<const Point> coords, std::size_t m,
                                   OrderingStrategy strategy = OrderingStrategy::coord_sum,
                                   std::span<const std::size_t> given = {});

/// Unconstrained m-nearest search over a fixed reference set.
class NeighborIndex {
 public:
  NeighborIndex() = default;
  explicit NeighborIndex(std::vector<Point> reference);

  std::size_t size() const noexcept { return points_.size(); }
  const std::vector<Point>& points() const noexcept { return points_; }

  /// The min(m, n) nearest reference indices sorted by distance, ties by
  /// smaller index.
  std::vector<std::size_t> query(const Point& s0, std::size_t m) const;

 private:
  std::vector<Point> points_;
  std::vector<double> proj_;          // sorted projections
  std::vector<std::size_t> by_proj_;  // reference index at each sorted slot
};

/// One-shot version of NeighborIndex::query. Throws configuration error on an
/// empty reference set.
std::vector<std::size_t> predict_neighbors(const Point& s0,
                                           std::span<const Point> reference,
                                           std::size_t m);

}  // namespace nngp
