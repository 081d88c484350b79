#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <type_traits>

#include <boost/multiprecision/cpp_bin_float.hpp>

namespace verde::lattice {

/// Software floats for the upper rungs of the precision ladder (106 bits ~ double-double).
using Float106 = boost::multiprecision::number<
    boost::multiprecision::cpp_bin_float<106, boost::multiprecision::digit_base_2>, boost::multiprecision::et_off>;
using Float212 = boost::multiprecision::number<
    boost::multiprecision::cpp_bin_float<212, boost::multiprecision::digit_base_2>, boost::multiprecision::et_off>;

/// Mantissa widths the engine can run at.
inline constexpr std::array<int, 5> kSupportedPrecisions{24, 53, 64, 106, 212};

inline bool is_supported_precision(int bits) noexcept {
  for (int b : kSupportedPrecisions)
    if (b == bits) return true;
  return false;
}

/// Calls fn(std::type_identity<FT>{}) with the float type matching `bits`.
template <class Fn>
decltype(auto) with_precision(int bits, Fn&& fn) {
  switch (bits) {
    case 24: return fn(std::type_identity<float>{});
    case 53: return fn(std::type_identity<double>{});
    case 64: return fn(std::type_identity<long double>{});
    case 106: return fn(std::type_identity<Float106>{});
    case 212: return fn(std::type_identity<Float212>{});
    default: throw std::invalid_argument("unsupported precision: " + std::to_string(bits) + " mantissa bits");
  }
}

/// Exact conversion of a 128-bit integer (up to rounding of FT itself).
template <class FT>
FT from_int128(__int128 v) {
  const bool neg = v < 0;
  unsigned __int128 u = neg ? static_cast<unsigned __int128>(-(v + 1)) + 1 : static_cast<unsigned __int128>(v);
  const auto hi = static_cast<std::uint64_t>(u >> 64);
  const auto lo = static_cast<std::uint64_t>(u);
  FT r;
  if constexpr (std::is_floating_point_v<FT>) {
    r = static_cast<FT>(hi) * static_cast<FT>(18446744073709551616.0L) + static_cast<FT>(lo);
  } else {
    r = FT(hi);
    r *= FT(18446744073709551616.0L);
    r += FT(lo);
  }
  return neg ? -r : r;
}

template <class FT>
FT ft_round(const FT& x) {
  using std::round;
  return round(x);
}

template <class FT>
FT ft_abs(const FT& x) {
  using std::abs;
  return abs(x);
}

}  // namespace verde::lattice
