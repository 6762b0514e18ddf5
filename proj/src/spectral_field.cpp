#include "qnls/spectral_field.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>

#include "qnls/errors.hpp"
#include "qnls/io.hpp"

namespace qnls {

std::shared_ptr<const ModeSet> shared_ball(int cutoff, int d) {
  static std::mutex mu;
  static std::map<std::pair<int, int>, std::shared_ptr<const ModeSet>> cache;
  if (cutoff < 0) throw ParameterError("cutoff must be >= 0");
  check_dimension(d);
  std::lock_guard<std::mutex> lock(mu);
  auto& slot = cache[{cutoff, d}];
  if (!slot) slot = std::make_shared<const ModeSet>(ModeSet::ball(cutoff, d));
  return slot;
}

SpectralField::SpectralField(int dim, int cutoff)
    : cutoff_(cutoff), modes_(shared_ball(cutoff, dim)), coeffs_(modes_->size(), cplx(0.0, 0.0)) {}

cplx SpectralField::at(const Mode& k) const {
  auto i = modes_->index_of(k);
  return i < 0 ? cplx(0.0, 0.0) : coeffs_[static_cast<std::size_t>(i)];
}

void SpectralField::set(const Mode& k, cplx v) {
  auto i = modes_->index_of(k);
  if (i < 0) throw ParameterError("mode " + k.str() + " outside stored ball");
  coeffs_[static_cast<std::size_t>(i)] = v;
}

SpectralField SpectralField::resized(int new_cutoff) const {
  SpectralField out(dim(), new_cutoff);
  for (std::size_t i = 0; i < out.size(); ++i) out.coeffs_[i] = at(out.modes()[i]);
  return out;
}

bool SpectralField::all_finite() const {
  for (const auto& c : coeffs_) {
    if (!std::isfinite(c.real()) || !std::isfinite(c.imag())) return false;
  }
  return true;
}

SpectralField single_mode(int dim, int cutoff, const Mode& k, cplx amplitude) {
  SpectralField u(dim, cutoff);
  u.set(k, amplitude);
  return u;
}

SpectralField apply_smooth_truncation(const SpectralField& u, double N, const CutoffProfile& profile) {
  SpectralField out = u;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= profile(u.modes()[i].norm() / N);
  return out;
}

SpectralField apply_sharp_truncation(const SpectralField& u, double N) {
  SpectralField out = u;
  const double lim = N * N + 1e-9;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (u.modes()[i].norm2() > lim) out[i] = 0.0;
  }
  return out;
}

double sobolev_norm_sq(const SpectralField& u, double sigma) {
  double acc = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    acc += std::pow(1.0 + u.modes()[i].norm2(), sigma) * std::norm(u[i]);
  }
  return acc;
}

double triple_norm_sq(const SpectralField& u, double s) {
  double acc = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    acc += (1.0 + std::pow(static_cast<double>(u.modes()[i].norm2()), s)) * std::norm(u[i]);
  }
  return acc;
}

nlohmann::json to_json(const SpectralField& u) {
  nlohmann::json modes = nlohmann::json::array();
  for (std::size_t i = 0; i < u.size(); ++i) {
    const Mode& m = u.modes()[i];
    std::vector<int> k(m.k.begin(), m.k.begin() + m.dim);
    modes.push_back({k, u[i].real(), u[i].imag()});
  }
  return {{"dim", u.dim()}, {"cutoff", u.cutoff()}, {"modes", modes}};
}

SpectralField field_from_json(const nlohmann::json& j) {
  try {
    int dim = j.at("dim").get<int>();
    int cutoff = j.at("cutoff").get<int>();
    SpectralField u(dim, cutoff);
    for (const auto& e : j.at("modes")) {
      auto comps = e.at(0).get<std::vector<int>>();
      if (static_cast<int>(comps.size()) != dim) throw ParameterError("mode arity does not match dim");
      Mode m(dim);
      for (int a = 0; a < dim; ++a) m.k[a] = comps[a];
      u.set(m, {e.at(1).get<double>(), e.at(2).get<double>()});
    }
    if (!u.all_finite()) throw ParameterError("non-finite amplitude in field");
    return u;
  } catch (const nlohmann::json::exception& e) {
    throw ParameterError(std::string("malformed field JSON: ") + e.what());
  }
}

namespace {
static_assert(std::endian::native == std::endian::little, "binary field format assumes a little-endian host");

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <class T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw IoError("truncated binary field");
  return v;
}
}  // namespace

void write_binary(const SpectralField& u, std::ostream& os) {
  os.write("SPF1", 4);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(u.dim()));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(u.cutoff()));
  put<std::uint64_t>(os, u.size());
  for (std::size_t i = 0; i < u.size(); ++i) {
    for (int a = 0; a < u.dim(); ++a) put<std::int32_t>(os, u.modes()[i].k[a]);
    put<double>(os, u[i].real());
    put<double>(os, u[i].imag());
  }
}

SpectralField read_binary(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "SPF1", 4) != 0) throw IoError("bad magic in binary field");
  int dim = static_cast<int>(get<std::uint32_t>(is));
  int cutoff = static_cast<int>(get<std::uint32_t>(is));
  auto count = get<std::uint64_t>(is);
  SpectralField u(dim, cutoff);
  for (std::uint64_t n = 0; n < count; ++n) {
    Mode m(dim);
    for (int a = 0; a < dim; ++a) m.k[a] = get<std::int32_t>(is);
    double re = get<double>(is);
    double im = get<double>(is);
    u.set(m, {re, im});
  }
  if (!u.all_finite()) throw ParameterError("non-finite amplitude in field");
  return u;
}

void save_field(const SpectralField& u, const std::string& path) {
  if (path.size() >= 5 && path.compare(path.size() - 5, 5, ".json") == 0) {
    write_file_atomic(path, to_json(u).dump(1) + "\n");
    return;
  }
  std::ostringstream os(std::ios::binary);
  write_binary(u, os);
  write_file_atomic(path, os.str());
}

SpectralField load_field(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  if (path.size() >= 5 && path.compare(path.size() - 5, 5, ".json") == 0) {
    try {
      return field_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
      throw ParameterError(path + ": " + e.what());
    }
  }
  return read_binary(in);
}

}  // namespace qnls
