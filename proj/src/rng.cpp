#include "qnls/rng.hpp"

#include <cmath>
#include <numbers>

namespace qnls {

namespace {
constexpr std::uint32_t kM0 = 0xD2511F53u;
constexpr std::uint32_t kM1 = 0xCD9E8D57u;
constexpr std::uint32_t kW0 = 0x9E3779B9u;
constexpr std::uint32_t kW1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

inline double u53_open_low(std::uint32_t hi, std::uint32_t lo) {
  std::uint64_t x = (static_cast<std::uint64_t>(hi) << 32 | lo) >> 11;
  return (static_cast<double>(x) + 1.0) * 0x1.0p-53;
}

inline double u53(std::uint32_t hi, std::uint32_t lo) {
  std::uint64_t x = (static_cast<std::uint64_t>(hi) << 32 | lo) >> 11;
  return static_cast<double>(x) * 0x1.0p-53;
}
}  // namespace

Philox4x32::Counter Philox4x32::block(Counter c, Key k) {
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kM0, c[0], hi0, lo0);
    mulhilo(kM1, c[2], hi1, lo1);
    c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
    k[0] += kW0;
    k[1] += kW1;
  }
  return c;
}

Stream::Stream(std::uint64_t master_seed, std::uint64_t stream_id, std::uint32_t lane)
    : key_{static_cast<std::uint32_t>(master_seed), static_cast<std::uint32_t>(master_seed >> 32)},
      stream_(stream_id),
      lane_(lane) {}

std::array<std::uint32_t, 4> Stream::next_block() {
  Philox4x32::Counter ctr{static_cast<std::uint32_t>(draw_), lane_, static_cast<std::uint32_t>(stream_),
                          static_cast<std::uint32_t>(stream_ >> 32)};
  ++draw_;
  return Philox4x32::block(ctr, key_);
}

double Stream::uniform() {
  if (buf_pos_ >= 4) {
    buf_ = next_block();
    buf_pos_ = 0;
  }
  double u = u53(buf_[buf_pos_], buf_[buf_pos_ + 1]);
  buf_pos_ += 2;
  return u;
}

double Stream::uniform_pos() { return 1.0 - uniform(); }

double Stream::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  auto g = gaussian_from_block(next_block());
  spare_ = g.imag() * std::numbers::sqrt2;
  has_spare_ = true;
  return g.real() * std::numbers::sqrt2;
}

std::complex<double> gaussian_from_block(const std::array<std::uint32_t, 4>& b) {
  double u1 = u53_open_low(b[0], b[1]);
  double u2 = u53(b[2], b[3]);
  double r = std::sqrt(-std::log(u1));
  double ang = 2.0 * std::numbers::pi * u2;
  return {r * std::cos(ang), r * std::sin(ang)};
}

std::complex<double> complex_std_gaussian(Stream& stream) { return gaussian_from_block(stream.next_block()); }

}  // namespace qnls
