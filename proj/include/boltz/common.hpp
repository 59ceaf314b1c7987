#ifndef BOLTZ_COMMON_HPP
#define BOLTZ_COMMON_HPP

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <thread>
#include <vector>

namespace boltz {

inline constexpr const char* kVersion = "0.4.1";
inline constexpr double kPi = std::numbers::pi;

using Vec = std::vector<double>;

enum class ErrorKind {
  InvalidArgument,
  DegenerateRankAmbiguous,
  StepTooLarge,
  CoverageBudgetExceeded,
  NoSamplesOutside,
  AsymmetryExceeded,
  GramIllConditioned,
  InvariantViolation,
  NonMonotone,
  NegativeDensity,
  DegenerateRun,
  Io,
  Parse,
};

inline const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::DegenerateRankAmbiguous: return "DegenerateRankAmbiguous";
    case ErrorKind::StepTooLarge: return "StepTooLarge";
    case ErrorKind::CoverageBudgetExceeded: return "CoverageBudgetExceeded";
    case ErrorKind::NoSamplesOutside: return "NoSamplesOutside";
    case ErrorKind::AsymmetryExceeded: return "AsymmetryExceeded";
    case ErrorKind::GramIllConditioned: return "GramIllConditioned";
    case ErrorKind::InvariantViolation: return "InvariantViolation";
    case ErrorKind::NonMonotone: return "NonMonotone";
    case ErrorKind::NegativeDensity: return "NegativeDensity";
    case ErrorKind::DegenerateRun: return "DegenerateRun";
    case ErrorKind::Io: return "Io";
    case ErrorKind::Parse: return "Parse";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

  // validation problems vs. numerical failures, used for CLI exit codes
  bool is_validation() const noexcept {
    return kind_ == ErrorKind::InvalidArgument || kind_ == ErrorKind::Parse ||
           kind_ == ErrorKind::Io || kind_ == ErrorKind::GramIllConditioned;
  }

 private:
  ErrorKind kind_;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw Error(ErrorKind::InvalidArgument, msg);
}

inline double sqr(double x) { return x * x; }

inline double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}
inline double dot(const Vec& a, const Vec& b) { return dot(a.data(), b.data(), a.size()); }
inline double norm2(const Vec& a) { return std::sqrt(dot(a, a)); }
inline double max_abs(const Vec& a) {
  double m = 0.0;
  for (double x : a) m = std::max(m, std::abs(x));
  return m;
}

// Static block partition; each index is computed by exactly one worker so
// results never depend on the worker count.
inline void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t, std::size_t)>& body) {
  if (workers <= 1 || n < 2) {
    body(0, n);
    return;
  }
  std::size_t w = std::min<std::size_t>(static_cast<std::size_t>(workers), n);
  std::vector<std::thread> pool;
  pool.reserve(w);
  for (std::size_t k = 0; k < w; ++k) {
    std::size_t lo = n * k / w, hi = n * (k + 1) / w;
    pool.emplace_back([&body, lo, hi] { body(lo, hi); });
  }
  for (auto& t : pool) t.join();
}

// shortest round-trip decimal
inline std::string fmt(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double x = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), x);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw Error(ErrorKind::Parse, "not a number: '" + std::string(s) + "'");
  return x;
}

inline long parse_long(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  long x = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), x);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw Error(ErrorKind::Parse, "not an integer: '" + std::string(s) + "'");
  return x;
}

// FNV-1a, stable across platforms (std::hash is not)
struct Fnv1a {
  std::uint64_t h = 1469598103934665603ull;
  Fnv1a& bytes(const void* p, std::size_t n) {
    auto* c = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= c[i];
      h *= 1099511628211ull;
    }
    return *this;
  }
  Fnv1a& str(std::string_view s) { return bytes(s.data(), s.size()); }
  Fnv1a& f64(double x) { return bytes(&x, sizeof x); }
  Fnv1a& i64(std::int64_t x) { return bytes(&x, sizeof x); }
  std::string hex() const {
    char buf[17];
    static const char* digits = "0123456789abcdef";
    for (int i = 0; i < 16; ++i) buf[i] = digits[(h >> (60 - 4 * i)) & 0xF];
    buf[16] = 0;
    return buf;
  }
};

// Halton point k (k >= 1) in [0,1)^d
inline Vec halton(std::uint64_t k, int d) {
  static const int primes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37};
  Vec p(d);
  for (int j = 0; j < d; ++j) {
    double f = 1.0, r = 0.0;
    std::uint64_t i = k;
    int b = primes[j % 12];
    while (i > 0) {
      f /= b;
      r += f * static_cast<double>(i % b);
      i /= b;
    }
    p[j] = r;
  }
  return p;
}

}  // namespace boltz

#endif  // BOLTZ_COMMON_HPP
