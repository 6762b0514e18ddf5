#include "qnls/lattice.hpp"

#include <algorithm>
#include <cmath>

#include "qnls/errors.hpp"

namespace qnls {

Mode::Mode(std::initializer_list<int> comps) : dim(static_cast<int>(comps.size())) {
  check_dimension(dim);
  int i = 0;
  for (int c : comps) k[i++] = c;
}

double Mode::norm() const { return std::sqrt(static_cast<double>(norm2())); }

Mode Mode::operator+(const Mode& o) const {
  Mode r(dim);
  for (int a = 0; a < 3; ++a) r.k[a] = k[a] + o.k[a];
  return r;
}

Mode Mode::operator-(const Mode& o) const {
  Mode r(dim);
  for (int a = 0; a < 3; ++a) r.k[a] = k[a] - o.k[a];
  return r;
}

Mode Mode::operator-() const {
  Mode r(dim);
  for (int a = 0; a < 3; ++a) r.k[a] = -k[a];
  return r;
}

std::strong_ordering Mode::operator<=>(const Mode& o) const {
  if (auto c = dim <=> o.dim; c != 0) return c;
  return k <=> o.k;
}

std::string Mode::str() const {
  std::string s = "(";
  for (int a = 0; a < dim; ++a) {
    if (a) s += ",";
    s += std::to_string(k[a]);
  }
  return s + ")";
}

void check_dimension(int d) {
  if (d < 1 || d > 3) throw ParameterError("dimension must be 1, 2 or 3, got " + std::to_string(d));
}

std::vector<Mode> modes_within(double N, int d) {
  check_dimension(d);
  if (!(N >= 0.0) || !std::isfinite(N)) throw ParameterError("mode radius must be finite and >= 0");
  const int r = static_cast<int>(std::floor(N));
  // Integer comparison against floor(N^2) avoids rounding at exact radii.
  const long long lim = static_cast<long long>(std::floor(N * N + 1e-9));
  std::vector<Mode> out;
  Mode m(d);
  const int ya = d >= 2 ? r : 0;
  const int za = d >= 3 ? r : 0;
  for (int x = -r; x <= r; ++x)
    for (int y = -ya; y <= ya; ++y)
      for (int z = -za; z <= za; ++z) {
        m.k = {x, y, z};
        if (m.norm2() <= lim) out.push_back(m);
      }
  return out;
}

ModeSet::ModeSet(int d, std::vector<Mode> modes) : dim_(d), modes_(std::move(modes)) {
  check_dimension(d);
  for (const auto& m : modes_) {
    if (m.dim != d) throw ParameterError("mode dimension mismatch in ModeSet");
  }
  std::sort(modes_.begin(), modes_.end());
  modes_.erase(std::unique(modes_.begin(), modes_.end()), modes_.end());
  radius_ = 0;
  max_norm2_ = 0;
  for (const auto& m : modes_) {
    for (int a = 0; a < d; ++a) radius_ = std::max(radius_, std::abs(m.k[a]));
    max_norm2_ = std::max(max_norm2_, m.norm2());
  }
  width_ = 2 * radius_ + 1;
  std::size_t cells = 1;
  for (int a = 0; a < d; ++a) cells *= static_cast<std::size_t>(width_);
  lookup_.assign(cells, -1);
  for (std::size_t i = 0; i < modes_.size(); ++i) lookup_[box_index(modes_[i])] = static_cast<std::int32_t>(i);
}

ModeSet ModeSet::ball(double N, int d) { return ModeSet(d, modes_within(N, d)); }

namespace {
double bump_g(double t) { return t > 0.0 ? std::exp(-1.0 / t) : 0.0; }
}  // namespace

double CutoffProfile::operator()(double r) const {
  if (r <= plateau) return 1.0;
  if (r >= support) return 0.0;
  double a = bump_g(support - r);
  double b = bump_g(r - plateau);
  return a / (a + b);
}

void CutoffProfile::validate() const {
  if (!(plateau > 0.0) || !(support > plateau) || !std::isfinite(support)) {
    throw ParameterError("cutoff profile needs 0 < plateau < support");
  }
}

double smooth_cutoff(double r, const CutoffProfile& profile) { return profile(r); }

}  // namespace qnls
