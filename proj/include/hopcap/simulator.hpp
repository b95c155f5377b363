#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace hopcap::sim {

/// m stored patterns of length n, entries +-1. The scaled patterns are
/// bits / sqrt(n).
struct PatternSet {
  int n = 0;
  int m = 0;
  std::vector<std::int8_t> bits;  ///< row-major m x n
  double scale = 0.0;

  [[nodiscard]] std::int8_t bit(int i, int j) const { return bits[static_cast<std::size_t>(i) * n + j]; }
  [[nodiscard]] std::span<const std::int8_t> row(int i) const {
    return {bits.data() + static_cast<std::size_t>(i) * n, static_cast<std::size_t>(n)};
  }
};

/// Hebbian coupling G = sum_i g_i g_i^T. `counts` holds n * G exactly as
/// integers (sum_i b_ij b_ik); `entries` is counts / n.
struct CouplingMatrix {
  int n = 0;
  std::vector<std::int32_t> counts;
  std::vector<double> entries;

  [[nodiscard]] double operator()(int j, int k) const { return entries[static_cast<std::size_t>(j) * n + k]; }
  [[nodiscard]] std::int32_t count(int j, int k) const { return counts[static_cast<std::size_t>(j) * n + k]; }
};

enum class UpdateOrder { cyclic, random_permutation };

struct DynamicsConfig {
  UpdateOrder update_order = UpdateOrder::cyclic;
  int max_sweeps = 200;
  std::uint64_t seed = 0;  ///< used by random_permutation only

  void validate() const;
};

struct TrialStats {
  double final_overlap = 0.0;
  int sweeps_used = 0;
  bool converged = false;
  double final_energy = 0.0;
};

/// States are +-1 vectors; the scaled state is x / sqrt(n).
using State = std::vector<std::int8_t>;

/// Called after each accepted flip with the energies before and after it.
using FlipObserver = std::function<void(int site, double energy_before, double energy_after)>;

/// Mixes (master, index) into an independent 64-bit seed.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

/// Throws std::invalid_argument for n < 2, m < 1 or n * m > 1e9.
PatternSet generate_patterns(int n, int m, std::uint64_t seed);

CouplingMatrix hebbian_coupling(const PatternSet& ps);

/// -x^T G x for the scaled state x = s / sqrt(n).
double energy(std::span<const std::int8_t> s, const CouplingMatrix& cm);

/// sum_{j != i} n G_ij s_j, the (integer-scaled) local field at site i.
std::int64_t local_field(std::span<const std::int8_t> s, const CouplingMatrix& cm, int i);

/// Sequential sign dynamics with the diagonal excluded; a zero field keeps
/// the current spin. `reference` defines final_overlap (defaults to x0).
TrialStats run_dynamics(const CouplingMatrix& cm, std::span<const std::int8_t> x0, const DynamicsConfig& cfg,
                        std::span<const std::int8_t> reference = {}, const FlipObserver& observer = {},
                        State* final_state = nullptr);

/// Copy of `pattern` with exactly `flips` distinct coordinates negated.
State corrupt(std::span<const std::int8_t> pattern, int flips, std::uint64_t seed);

struct ExperimentConfig {
  int n = 1000;
  double alpha = 0.1;
  double flip_frac = 0.05;
  int trials = 50;
  std::uint64_t seed = 1;
  double delta_tol = 0.01;
  DynamicsConfig dynamics;
  int threads = 0;  ///< 0: HOPCAP_THREADS, else hardware concurrency

  void validate() const;
};

struct ExperimentStats {
  int m = 0;
  double mean_overlap = 0.0;
  double median_overlap = 0.0;
  double retrieval_fraction = 0.0;
  double converged_fraction = 0.0;
  double mean_sweeps = 0.0;
  std::vector<TrialStats> trials;
};

/// Independent trials with fresh patterns; each starts at pattern 0 with
/// round(flip_frac * n) coordinates flipped. Trial t uses derive_seed(seed, t),
/// so results do not depend on the thread count.
ExperimentStats retrieval_experiment(const ExperimentConfig& cfg);

/// Worker count from HOPCAP_THREADS, falling back to hardware concurrency.
int default_threads();

enum class Ensemble { gaussian, rademacher };

/// m x n matrix of iid entries drawn from the ensemble, row-major.
std::vector<double> draw_matrix(int m, int n, std::uint64_t seed, Ensemble ensemble = Ensemble::gaussian);

/// max ||G x||_2 / sqrt(n) over x = (1/sqrt n) * (all ones with exactly
/// k_flips coordinates negated), by full enumeration. Requires n <= 24 and a
/// bounded enumeration size.
double exact_xi_oracle(int n, int m, int k_flips, std::uint64_t seed, Ensemble ensemble = Ensemble::gaussian);

/// Same maximization for an explicit row-major m x n matrix.
double exact_xi_max(std::span<const double> g, int m, int n, int k_flips);

}  // namespace hopcap::sim
