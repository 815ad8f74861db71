#include "nngp/neighbor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <string>

#include "nngp/error.hpp"
#include "nngp/parallel.hpp"

namespace nngp {

namespace {

struct Candidate {
  double d2;
  std::size_t index;
};

bool closer(const Candidate& a, const Candidate& b) noexcept {
  return a.d2 < b.d2 || (a.d2 == b.d2 && a.index < b.index);
}

/// Fixed-capacity list of the best candidates seen so far, kept sorted.
class BestList {
 public:
  explicit BestList(std::size_t capacity) : capacity_(capacity) { items_.reserve(capacity + 1); }

  bool full() const noexcept { return items_.size() == capacity_; }
  double worst() const noexcept { return items_.back().d2; }

  void offer(const Candidate& c) {
    if (capacity_ == 0) return;
    if (full() && !closer(c, items_.back())) return;
    auto pos = std::upper_bound(items_.begin(), items_.end(), c, closer);
    items_.insert(pos, c);
    if (items_.size() > capacity_) items_.pop_back();
  }

  const std::vector<Candidate>& items() const noexcept { return items_; }

 private:
  std::size_t capacity_;
  std::vector<Candidate> items_;
};

double projection(const Point& p) noexcept { return p.x + p.y; }

// |u_a - u_b|^2 / 2 <= d^2 in exact arithmetic; the slack absorbs rounding in
// the projected coordinates so the cut never drops a candidate.
bool beyond(double u_query, double u_other, double worst_d2) noexcept {
  const double slack = 8.0 * std::numeric_limits<double>::epsilon() *
                       (std::abs(u_query) + std::abs(u_other));
  const double gap = std::abs(u_query - u_other) - slack;
  if (gap <= 0.0) return false;
  return 0.5 * gap * gap > worst_d2 * (1.0 + 1e-12);
}

std::vector<std::size_t> row_offsets(std::size_t n, std::size_t m) {
  std::vector<std::size_t> offsets(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) offsets[i + 1] = offsets[i] + std::min(i, m);
  return offsets;
}

[[noreturn]] void throw_duplicate(std::size_t a, std::size_t b) {
  throw DuplicateLocationError(
      std::min(a, b), std::max(a, b),
      "duplicate locations at ordered positions " + std::to_string(std::min(a, b)) +
          " and " + std::to_string(std::max(a, b)));
}

void check_finite(std::span<const Point> coords) {
  for (const auto& p : coords) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
      throw Error(ErrorKind::parameter_domain, "non-finite coordinate");
    }
  }
}

template <typename RowFn>
NeighborGraph build_rows(std::span<const Point> ordered, std::size_t m, RowFn&& row_fn) {
  check_finite(ordered);
  const std::size_t n = ordered.size();
  auto offsets = row_offsets(n, m);
  std::vector<std::size_t> indices(offsets.back());
  // First failing row wins so the error is independent of scheduling.
  std::vector<std::optional<std::pair<std::size_t, std::size_t>>> dup(n);
  const auto sn = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic, 256) num_threads(thread_budget())
  for (std::ptrdiff_t si = 0; si < sn; ++si) {
    const auto i = static_cast<std::size_t>(si);
    BestList best(std::min(i, m));
    row_fn(i, best);
    const auto& items = best.items();
    if (!items.empty() && items.front().d2 == 0.0) {
      dup[i] = std::make_pair(items.front().index, i);
    }
    for (std::size_t k = 0; k < items.size(); ++k) indices[offsets[i] + k] = items[k].index;
  }
  for (const auto& d : dup) {
    if (d) throw_duplicate(d->first, d->second);
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  return NeighborGraph(m, std::move(offsets), std::move(indices), std::move(order));
}

}  // namespace

NeighborGraph::NeighborGraph(std::size_t m, std::vector<std::size_t> offsets,
                             std::vector<std::size_t> indices,
                             std::vector<std::size_t> order)
    : m_(m), offsets_(std::move(offsets)), indices_(std::move(indices)), order_(std::move(order)) {
  if (offsets_.empty() || offsets_.back() != indices_.size() ||
      order_.size() + 1 != offsets_.size()) {
    throw Error(ErrorKind::dimension, "inconsistent neighbor graph layout");
  }
}

std::vector<std::size_t> order_locations(std::span<const Point> coords,
                                         OrderingStrategy strategy,
                                         std::span<const std::size_t> given) {
  check_finite(coords);
  const std::size_t n = coords.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  switch (strategy) {
    case OrderingStrategy::coord_sum:
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return projection(coords[a]) < projection(coords[b]);
      });
      break;
    case OrderingStrategy::first_coord:
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (coords[a].x != coords[b].x) return coords[a].x < coords[b].x;
        return coords[a].y < coords[b].y;
      });
      break;
    case OrderingStrategy::given: {
      if (given.size() != n) {
        throw Error(ErrorKind::dimension, "given ordering has wrong length");
      }
      std::vector<bool> seen(n, false);
      for (std::size_t k = 0; k < n; ++k) {
        if (given[k] >= n || seen[given[k]]) {
          throw Error(ErrorKind::configuration, "given ordering is not a permutation");
        }
        seen[given[k]] = true;
        order[k] = given[k];
      }
      break;
    }
  }
  return order;
}

NeighborGraph brute_force_neighbors(std::span<const Point> ordered, std::size_t m) {
  return build_rows(ordered, m, [&](std::size_t i, BestList& best) {
    for (std::size_t j = 0; j < i; ++j) {
      best.offer({squared_distance(ordered[i], ordered[j]), j});
    }
  });
}

NeighborGraph fast_neighbors(std::span<const Point> ordered, std::size_t m) {
  const std::size_t n = ordered.size();
  std::vector<std::size_t> slots(n);
  std::iota(slots.begin(), slots.end(), std::size_t{0});
  std::vector<double> u(n);
  for (std::size_t i = 0; i < n; ++i) u[i] = projection(ordered[i]);
  std::stable_sort(slots.begin(), slots.end(),
                   [&](std::size_t a, std::size_t b) { return u[a] < u[b]; });
  std::vector<std::size_t> slot_of(n);
  for (std::size_t k = 0; k < n; ++k) slot_of[slots[k]] = k;

  return build_rows(ordered, m, [&](std::size_t i, BestList& best) {
    if (i == 0 || m == 0) return;
    const std::size_t home = slot_of[i];
    // Walk left then right; each side stops at the projection bound.
    for (std::size_t k = home; k-- > 0;) {
      const std::size_t j = slots[k];
      if (best.full() && beyond(u[i], u[j], best.worst())) break;
      if (j < i) best.offer({squared_distance(ordered[i], ordered[j]), j});
    }
    for (std::size_t k = home + 1; k < n; ++k) {
      const std::size_t j = slots[k];
      if (best.full() && beyond(u[i], u[j], best.worst())) break;
      if (j < i) best.offer({squared_distance(ordered[i], ordered[j]), j});
    }
  });
}

NeighborGraph build_neighbor_graph(std::span<const Point> coords, std::size_t m,
                                   OrderingStrategy strategy,
                                   std::span<const std::size_t> given) {
  auto order = order_locations(coords, strategy, given);
  std::vector<Point> ordered(coords.size());
  for (std::size_t k = 0; k < order.size(); ++k) ordered[k] = coords[order[k]];
  NeighborGraph g = fast_neighbors(ordered, m);
  return NeighborGraph(m, g.offsets(), g.indices(), std::move(order));
}

NeighborIndex::NeighborIndex(std::vector<Point> reference) : points_(std::move(reference)) {
  check_finite(points_);
  const std::size_t n = points_.size();
  by_proj_.resize(n);
  std::iota(by_proj_.begin(), by_proj_.end(), std::size_t{0});
  std::stable_sort(by_proj_.begin(), by_proj_.end(), [&](std::size_t a, std::size_t b) {
    return projection(points_[a]) < projection(points_[b]);
  });
  proj_.resize(n);
  for (std::size_t k = 0; k < n; ++k) proj_[k] = projection(points_[by_proj_[k]]);
}

std::vector<std::size_t> NeighborIndex::query(const Point& s0, std::size_t m) const {
  const std::size_t n = points_.size();
  BestList best(std::min(m, n));
  const double u0 = projection(s0);
  const auto split = static_cast<std::size_t>(
      std::lower_bound(proj_.begin(), proj_.end(), u0) - proj_.begin());
  for (std::size_t k = split; k-- > 0;) {
    if (best.full() && beyond(u0, proj_[k], best.worst())) break;
    best.offer({squared_distance(s0, points_[by_proj_[k]]), by_proj_[k]});
  }
  for (std::size_t k = split; k < n; ++k) {
    if (best.full() && beyond(u0, proj_[k], best.worst())) break;
    best.offer({squared_distance(s0, points_[by_proj_[k]]), by_proj_[k]});
  }
  std::vector<std::size_t> out;
  out.reserve(best.items().size());
  for (const auto& c : best.items()) out.push_back(c.index);
  return out;
}

std::vector<std::size_t> predict_neighbors(const Point& s0, std::span<const Point> reference,
                                           std::size_t m) {
  if (reference.empty()) {
    throw Error(ErrorKind::configuration, "prediction requires a non-empty reference set");
  }
  return NeighborIndex(std::vector<Point>(reference.begin(), reference.end())).query(s0, m);
}

}  // namespace nngp
