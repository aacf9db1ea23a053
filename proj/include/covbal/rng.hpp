#pragma once

#include <cstdint>

namespace covbal {

// Finalizer from the splitmix64 generator (Steele, Lea, Flood 2014).
std::uint64_t mix64(std::uint64_t x);

/* Counter-based 64-bit generator: output i is mix64(seed + (i+1)*GAMMA),
 * i.e. a fixed permutation applied to an affine counter. State is one word,
 * streams with distinct seeds are independent for simulation purposes, and
 * every draw is pure integer arithmetic, so sequences are identical across
 * platforms and thread schedules. */
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next();
  // Uniform on [0, 1): 53 high bits scaled by 2^-53.
  double next_double();
  // Uniform on (0, 1): never returns an exact endpoint.
  double next_open_double();
  // Unbiased uniform integer on [0, bound), bound >= 1 (Lemire rejection).
  std::uint64_t next_below(std::uint64_t bound);
  // Standard normal via the inverse CDF applied to next_open_double().
  double next_normal();

 private:
  std::uint64_t state_;
};

/* Deterministic per-replicate stream seeds. Lane 0 drives patient sampling,
 * lane 1 drives treatment draws; keeping them separate gives every procedure
 * the same covariate stream within a replicate (common random numbers) and
 * makes results independent of how replicates are spread over threads. */
std::uint64_t replicate_seed(std::uint64_t master_seed, std::uint64_t replicate_index, std::uint64_t lane);

// Phi(z), standard normal CDF, evaluated through erfc; absolute error < 1e-14.
double normal_cdf(double z);

// Phi^-1(p) for p in (0,1): Wichura's AS241 rational approximation followed
// by one Newton step against normal_cdf, full double accuracy.
double normal_quantile(double p);

}  // namespace covbal
