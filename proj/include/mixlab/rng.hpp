#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <thread>
#include <vector>

namespace mixlab {

// splitmix64, used to derive independent stream seeds from (seed, index).
// Keeping the mixer explicit (instead of seeding one engine and jumping)
// makes chunked Monte Carlo results independent of the worker count.
inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline uint64_t derive_seed(uint64_t seed, uint64_t stream) {
  return splitmix64(seed ^ splitmix64(stream + 0x51'7c'c1'b7'27'22'0a'95ULL));
}

inline std::mt19937_64 make_engine(uint64_t seed, uint64_t stream = 0) {
  return std::mt19937_64(derive_seed(seed, stream));
}

struct MeanSE {
  double mean = 0.0;
  double se = 0.0;
  uint64_t n = 0;
};

// Chunked Monte Carlo mean with standard error. Work is split into fixed-size
// chunks, each chunk runs on its own derived seed, and chunk sums are folded
// in index order, so the result is byte-identical for any worker count.
// f(engine) must produce one sample.
inline MeanSE mc_mean(uint64_t samples, uint64_t seed,
                      const std::function<double(std::mt19937_64&)>& f,
                      unsigned workers = 1, uint64_t chunk_size = 4096) {
  if (samples == 0) throw std::invalid_argument("mc_mean: samples must be positive");
  const uint64_t nchunks = (samples + chunk_size - 1) / chunk_size;
  std::vector<double> sums(nchunks, 0.0), sqsums(nchunks, 0.0);

  auto run_chunk = [&](uint64_t c) {
    std::mt19937_64 eng = make_engine(seed, c);
    const uint64_t lo = c * chunk_size;
    const uint64_t hi = std::min(samples, lo + chunk_size);
    double s = 0.0, s2 = 0.0;
    for (uint64_t i = lo; i < hi; ++i) {
      const double v = f(eng);
      s += v;
      s2 += v * v;
    }
    sums[c] = s;
    sqsums[c] = s2;
  };

  if (workers <= 1 || nchunks == 1) {
    for (uint64_t c = 0; c < nchunks; ++c) run_chunk(c);
  } else {
    std::vector<std::thread> pool;
    std::atomic<uint64_t> next{0};
    for (unsigned w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (;;) {
          const uint64_t c = next.fetch_add(1);
          if (c >= nchunks) return;
          run_chunk(c);
        }
      });
    for (auto& t : pool) t.join();
  }

  double s = 0.0, s2 = 0.0;
  for (uint64_t c = 0; c < nchunks; ++c) { s += sums[c]; s2 += sqsums[c]; }
  const double n = static_cast<double>(samples);
  const double mean = s / n;
  const double var = std::max(0.0, s2 / n - mean * mean);
  MeanSE out;
  out.mean = mean;
  out.se = std::sqrt(var / n);
  out.n = samples;
  return out;
}

}  // namespace mixlab
