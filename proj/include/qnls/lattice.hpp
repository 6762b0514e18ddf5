#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace qnls {

// Lattice wavenumber in Z^d, d in {1,2,3}. Unused components stay zero.
struct Mode {
  std::array<int, 3> k{0, 0, 0};
  int dim = 1;

  Mode() = default;
  explicit Mode(int d) : dim(d) {}
  Mode(std::initializer_list<int> comps);

  int norm2() const { return k[0] * k[0] + k[1] * k[1] + k[2] * k[2]; }
  double norm() const;
  bool is_zero() const { return k[0] == 0 && k[1] == 0 && k[2] == 0; }
  int operator[](int i) const { return k[i]; }

  Mode operator+(const Mode& o) const;
  Mode operator-(const Mode& o) const;
  Mode operator-() const;
  bool operator==(const Mode& o) const = default;
  std::strong_ordering operator<=>(const Mode& o) const;

  std::string str() const;
};

void check_dimension(int d);

// Lattice points with |k| <= N, lexicographic order.
std::vector<Mode> modes_within(double N, int d);

// Sorted set of modes with O(1) lookup through a dense box index.
class ModeSet {
 public:
  ModeSet() = default;
  ModeSet(int d, std::vector<Mode> modes);
  static ModeSet ball(double N, int d);

  int dim() const { return dim_; }
  std::size_t size() const { return modes_.size(); }
  bool empty() const { return modes_.empty(); }
  const Mode& operator[](std::size_t i) const { return modes_[i]; }
  std::span<const Mode> modes() const { return modes_; }
  auto begin() const { return modes_.begin(); }
  auto end() const { return modes_.end(); }

  // -1 when absent.
  std::ptrdiff_t index_of(const Mode& m) const {
    int idx = box_index(m);
    return idx < 0 ? -1 : lookup_[idx];
  }
  bool contains(const Mode& m) const { return index_of(m) >= 0; }
  // Largest absolute coordinate of any member.
  int box_radius() const { return radius_; }
  int max_norm2() const { return max_norm2_; }

 private:
  int box_index(const Mode& m) const {
    int idx = 0;
    for (int a = 0; a < dim_; ++a) {
      int c = m.k[a];
      if (c < -radius_ || c > radius_) return -1;
      idx = idx * width_ + (c + radius_);
    }
    return idx;
  }

  int dim_ = 1;
  int radius_ = 0;
  int width_ = 1;
  int max_norm2_ = 0;
  std::vector<Mode> modes_;
  std::vector<std::int32_t> lookup_;
};

// Smooth bump: 1 on [0, plateau], 0 on [support, inf).
struct CutoffProfile {
  double plateau = 0.5;
  double support = 1.0;

  double operator()(double r) const;
  void validate() const;

  static CutoffProfile resonance_default() { return {0.5, 1.0}; }
  static CutoffProfile frequency_default() { return {0.87, 1.0}; }
};

double smooth_cutoff(double r, const CutoffProfile& profile);

}  // namespace qnls
