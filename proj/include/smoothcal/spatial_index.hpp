#pragma once

#include "smoothcal/types.hpp"

#include <cmath>
#include <cstdint>
#include <unordered_map>
#include <vector>

namespace smoothcal {

// Uniform-cell hash over R^m. A query visits the 3^m cells around the
// query point, so every stored point within `cell` of it is reported.
class PointIndex {
 public:
  PointIndex(int dim, double cell) : dim_(dim), cell_(cell) {
    require(dim >= 1, "PointIndex: dimension must be positive");
    require(cell > 0.0 && std::isfinite(cell), "PointIndex: cell size must be positive");
  }

  int dim() const { return dim_; }
  double cell() const { return cell_; }

  void insert(int id, const Vector& p) {
    std::vector<std::int64_t> key(dim_);
    for (int i = 0; i < dim_; ++i) key[i] = coord(p[i]);
    buckets_[hash(key)].push_back({std::move(key), id});
  }

  // Calls f(id) for every stored point in the neighbouring cells. Ids are
  // visited in cell order; callers that need a canonical order sort them.
  template <class F>
  void for_each_near(const Vector& x, F&& f) const {
    std::vector<std::int64_t> base(dim_);
    for (int i = 0; i < dim_; ++i) base[i] = coord(x[i]);
    std::vector<int> offset(dim_, -1);
    std::vector<std::int64_t> key(dim_);
    while (true) {
      for (int i = 0; i < dim_; ++i) key[i] = base[i] + offset[i];
      auto it = buckets_.find(hash(key));
      if (it != buckets_.end()) {
        for (const auto& entry : it->second) {
          if (entry.key == key) f(entry.id);
        }
      }
      int i = dim_ - 1;
      while (i >= 0 && offset[i] == 1) offset[i--] = -1;
      if (i < 0) break;
      ++offset[i];
    }
  }

  std::vector<int> near(const Vector& x) const {
    std::vector<int> ids;
    for_each_near(x, [&](int id) { ids.push_back(id); });
    return ids;
  }

 private:
  struct Entry {
    std::vector<std::int64_t> key;
    int id;
  };

  std::int64_t coord(double v) const {
    return static_cast<std::int64_t>(std::floor(v / cell_));
  }

  static std::uint64_t hash(const std::vector<std::int64_t>& key) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (auto k : key) {
      h ^= static_cast<std::uint64_t>(k) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    }
    return h;
  }

  int dim_;
  double cell_;
  std::unordered_map<std::uint64_t, std::vector<Entry>> buckets_;
};

}  // namespace smoothcal
