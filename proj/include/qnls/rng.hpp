#pragma once

#include <array>
#include <complex>
#include <cstdint>

namespace qnls {

// Philox4x32-10 counter-based generator.
struct Philox4x32 {
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Counter block(Counter ctr, Key key);
};

inline constexpr const char* kPrngAlgorithm = "philox4x32-10+box-muller/v1";

// Sequential draws from one (key, stream, lane) coordinate of the counter space.
class Stream {
 public:
  Stream(std::uint64_t master_seed, std::uint64_t stream_id, std::uint32_t lane = 0);

  std::array<std::uint32_t, 4> next_block();
  // Uniform in [0, 1).
  double uniform();
  // Uniform in (0, 1].
  double uniform_pos();
  double normal();
  std::uint64_t draws() const { return draw_; }

 private:
  Philox4x32::Key key_;
  std::uint64_t stream_;
  std::uint32_t lane_;
  std::uint64_t draw_ = 0;
  std::array<std::uint32_t, 4> buf_{};
  int buf_pos_ = 4;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Re and Im independent N(0, 1/2), so E|g|^2 = 1.
std::complex<double> complex_std_gaussian(Stream& stream);

// Uniform doubles from one Philox block: u1 in (0,1], u2 in [0,1).
std::complex<double> gaussian_from_block(const std::array<std::uint32_t, 4>& b);

}  // namespace qnls
