#pragma once
// Small shared utilities: deterministic RNG, confidence intervals, parallel_for.
// The RNG is specified in-repo (splitmix64 + xoshiro256++) so that streams are
// bit-identical across platforms and standard-library versions.

#include <array>
#include <atomic>
#include <cstdint>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace dyad {

using i64 = long long;
using u64 = unsigned long long;

inline u64 splitmix64(u64& state) {
  u64 z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Derive an independent stream seed from (master, stream, index).
inline u64 derive_seed(u64 master, u64 stream, u64 index = 0) {
  u64 s = master;
  u64 a = splitmix64(s);
  s ^= stream * 0x9e3779b97f4a7c15ULL + 0x632be59bd9b4e019ULL;
  u64 b = splitmix64(s);
  s ^= index * 0xd1342543de82ef95ULL + 1;
  u64 c = splitmix64(s);
  return a ^ (b << 1) ^ (c >> 1);
}

// xoshiro256++ with splitmix64 seeding.
class Rng {
 public:
  explicit Rng(u64 seed) {
    u64 st = seed;
    for (auto& w : s_) w = splitmix64(st);
  }

  u64 next_u64() {
    auto rotl = [](u64 x, int k) { return (x << k) | (x >> (64 - k)); };
    u64 result = rotl(s_[0] + s_[3], 23) + s_[0];
    u64 t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform in [0,1), 53 random bits.
  double next_double() { return double(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [lo, hi] inclusive, rejection sampling (unbiased).
  i64 uniform_int(i64 lo, i64 hi) {
    if (lo > hi) throw std::invalid_argument("uniform_int: empty range");
    u64 span = u64(hi - lo) + 1;
    if (span == 0) return i64(next_u64());  // full range
    u64 limit = ~u64(0) - (~u64(0) % span);
    u64 x;
    do {
      x = next_u64();
    } while (x >= limit && span != 0 && limit != 0);
    return lo + i64(x % span);
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // Deterministic normal via Box-Muller (uses two uniforms per call).
  double normal() {
    double u1 = next_double(), u2 = next_double();
    if (u1 <= 0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
  }

 private:
  std::array<u64, 4> s_;
};

struct WilsonCI {
  double estimate = 0, lo = 0, hi = 1;
  int successes = 0, trials = 0;
};

// Wilson score interval, default z for 95% coverage.
inline WilsonCI wilson_ci(int successes, int trials, double z = 1.959963984540054) {
  if (trials <= 0) throw std::invalid_argument("wilson_ci: trials must be positive");
  WilsonCI ci;
  ci.successes = successes;
  ci.trials = trials;
  double p = double(successes) / trials;
  ci.estimate = p;
  double z2 = z * z, n = trials;
  double denom = 1.0 + z2 / n;
  double center = (p + z2 / (2 * n)) / denom;
  double half = (z / denom) * std::sqrt(p * (1 - p) / n + z2 / (4 * n * n));
  ci.lo = std::max(0.0, center - half);
  ci.hi = std::min(1.0, center + half);
  return ci;
}

// Deterministic parallel loop: the work item i is independent of the thread
// that runs it, so results (stored by index) do not depend on thread count.
inline void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
  if (n <= 0) return;
  if (threads <= 1 || n == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  int nt = std::min(threads, n);
  std::vector<std::thread> pool;
  pool.reserve(nt);
  std::atomic<int>* next = new std::atomic<int>(0);
  for (int t = 0; t < nt; ++t) {
    pool.emplace_back([&fn, next, n]() {
      for (;;) {
        int i = next->fetch_add(1);
        if (i >= n) break;
        fn(i);
      }
    });
  }
  for (auto& th : pool) th.join();
  delete next;
}

inline double sqr(double x) { return x * x; }

}  // namespace dyad
