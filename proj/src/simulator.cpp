#include "hopcap/simulator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <random>
#include <stdexcept>
#include <thread>

#include <fmt/core.h>

namespace hopcap::sim {
namespace {

// Unbiased integer in [0, bound) from raw 64-bit draws (std distributions are
// implementation-defined, which would break cross-platform reproducibility).
std::uint64_t below(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t r;
  do {
    r = rng();
  } while (r >= limit);
  return r % bound;
}

std::int64_t quadratic_form(std::span<const std::int8_t> s, const CouplingMatrix& cm) {
  std::int64_t acc = 0;
  for (int j = 0; j < cm.n; ++j) {
    std::int64_t row = 0;
    const std::int32_t* c = cm.counts.data() + static_cast<std::size_t>(j) * cm.n;
    for (int k = 0; k < cm.n; ++k) row += static_cast<std::int64_t>(c[k]) * s[k];
    acc += row * s[j];
  }
  return acc;
}

double scaled_energy(std::int64_t form, int n) { return -static_cast<double>(form) / (static_cast<double>(n) * n); }

void check_state(std::span<const std::int8_t> s, int n, const char* who) {
  if (static_cast<int>(s.size()) != n) {
    throw std::invalid_argument(fmt::format("{}: state has {} entries, expected {}", who, s.size(), n));
  }
  for (auto v : s) {
    if (v != 1 && v != -1) throw std::invalid_argument(fmt::format("{}: state entries must be +-1", who));
  }
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  // splitmix64 of the pair
  std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

void DynamicsConfig::validate() const {
  if (max_sweeps < 1) throw std::invalid_argument(fmt::format("max_sweeps must be >= 1, got {}", max_sweeps));
}

PatternSet generate_patterns(int n, int m, std::uint64_t seed) {
  if (n < 2 || m < 1) throw std::invalid_argument(fmt::format("generate_patterns: need n >= 2, m >= 1; got {}, {}", n, m));
  if (static_cast<double>(n) * m > 1e9) {
    throw std::invalid_argument(fmt::format("generate_patterns: n * m = {} exceeds 1e9", static_cast<double>(n) * m));
  }
  PatternSet ps;
  ps.n = n;
  ps.m = m;
  ps.scale = 1.0 / std::sqrt(static_cast<double>(n));
  ps.bits.resize(static_cast<std::size_t>(n) * m);
  std::mt19937_64 rng(seed);
  std::uint64_t word = 0;
  int left = 0;
  for (auto& b : ps.bits) {
    if (left == 0) {
      word = rng();
      left = 64;
    }
    b = (word & 1U) ? 1 : -1;
    word >>= 1;
    --left;
  }
  return ps;
}

CouplingMatrix hebbian_coupling(const PatternSet& ps) {
  const int n = ps.n;
  CouplingMatrix cm;
  cm.n = n;
  cm.counts.assign(static_cast<std::size_t>(n) * n, 0);
  for (int i = 0; i < ps.m; ++i) {
    const auto g = ps.row(i);
    for (int j = 0; j < n; ++j) {
      std::int32_t* row = cm.counts.data() + static_cast<std::size_t>(j) * n;
      const std::int32_t gj = g[j];
      for (int k = j; k < n; ++k) row[k] += gj * g[k];
    }
  }
  for (int j = 0; j < n; ++j) {
    for (int k = 0; k < j; ++k) cm.counts[static_cast<std::size_t>(j) * n + k] = cm.counts[static_cast<std::size_t>(k) * n + j];
  }
  cm.entries.resize(cm.counts.size());
  for (std::size_t i = 0; i < cm.counts.size(); ++i) cm.entries[i] = static_cast<double>(cm.counts[i]) / n;
  return cm;
}

double energy(std::span<const std::int8_t> s, const CouplingMatrix& cm) {
  check_state(s, cm.n, "energy");
  return scaled_energy(quadratic_form(s, cm), cm.n);
}

std::int64_t local_field(std::span<const std::int8_t> s, const CouplingMatrix& cm, int i) {
  std::int64_t f = 0;
  const std::int32_t* c = cm.counts.data() + static_cast<std::size_t>(i) * cm.n;
  for (int j = 0; j < cm.n; ++j) {
    if (j != i) f += static_cast<std::int64_t>(c[j]) * s[j];
  }
  return f;
}

TrialStats run_dynamics(const CouplingMatrix& cm, std::span<const std::int8_t> x0, const DynamicsConfig& cfg,
                        std::span<const std::int8_t> reference, const FlipObserver& observer, State* final_state) {
  cfg.validate();
  const int n = cm.n;
  check_state(x0, n, "run_dynamics");
  if (reference.empty()) reference = x0;
  check_state(reference, n, "run_dynamics reference");

  State s(x0.begin(), x0.end());
  // full product C s; the diagonal term is removed when the field is read
  std::vector<std::int64_t> full(n, 0);
  for (int j = 0; j < n; ++j) {
    const std::int32_t* c = cm.counts.data() + static_cast<std::size_t>(j) * n;
    std::int64_t acc = 0;
    for (int k = 0; k < n; ++k) acc += static_cast<std::int64_t>(c[k]) * s[k];
    full[j] = acc;
  }
  std::int64_t form = 0;
  for (int j = 0; j < n; ++j) form += full[j] * s[j];

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(cfg.seed);

  TrialStats st;
  for (int sweep = 1; sweep <= cfg.max_sweeps; ++sweep) {
    if (cfg.update_order == UpdateOrder::random_permutation) {
      for (int i = n - 1; i > 0; --i) std::swap(order[i], order[below(rng, static_cast<std::uint64_t>(i) + 1)]);
    }
    int flips = 0;
    for (int i : order) {
      const std::int64_t field = full[i] - static_cast<std::int64_t>(cm.count(i, i)) * s[i];
      if (field == 0 || (field > 0) == (s[i] > 0)) continue;
      const double before = observer ? scaled_energy(form, n) : 0.0;
      // flipping s_i changes s^T C s by -4 s_i field
      form -= 4 * static_cast<std::int64_t>(s[i]) * field;
      const int delta = -2 * s[i];
      s[i] = static_cast<std::int8_t>(-s[i]);
      const std::int32_t* c = cm.counts.data() + static_cast<std::size_t>(i) * n;
      for (int j = 0; j < n; ++j) full[j] += static_cast<std::int64_t>(c[j]) * delta;
      ++flips;
      if (observer) observer(i, before, scaled_energy(form, n));
    }
    st.sweeps_used = sweep;
    if (flips == 0) {
      st.converged = true;
      break;
    }
  }
  std::int64_t dot = 0;
  for (int j = 0; j < n; ++j) dot += static_cast<std::int64_t>(s[j]) * reference[j];
  st.final_overlap = static_cast<double>(dot) / n;
  st.final_energy = scaled_energy(form, n);
  if (final_state) *final_state = std::move(s);
  return st;
}

State corrupt(std::span<const std::int8_t> pattern, int flips, std::uint64_t seed) {
  const int n = static_cast<int>(pattern.size());
  if (flips < 0 || flips > n) throw std::invalid_argument(fmt::format("corrupt: flips = {} outside [0, {}]", flips, n));
  State s(pattern.begin(), pattern.end());
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  // partial Fisher-Yates picks `flips` distinct sites
  for (int t = 0; t < flips; ++t) {
    const int r = t + static_cast<int>(below(rng, static_cast<std::uint64_t>(n - t)));
    std::swap(idx[t], idx[r]);
    s[idx[t]] = static_cast<std::int8_t>(-s[idx[t]]);
  }
  return s;
}

void ExperimentConfig::validate() const {
  if (n < 2) throw std::invalid_argument(fmt::format("n must be >= 2, got {}", n));
  if (!(alpha > 0.0) || std::lround(alpha * n) < 1) {
    throw std::invalid_argument(fmt::format("alpha * n must round to at least 1 pattern (alpha = {}, n = {})", alpha, n));
  }
  if (!(flip_frac >= 0.0 && flip_frac < 0.5)) throw std::invalid_argument(fmt::format("flip_frac = {} outside [0, 1/2)", flip_frac));
  if (trials < 1) throw std::invalid_argument(fmt::format("trials must be >= 1, got {}", trials));
  if (!(delta_tol >= 0.0 && delta_tol < 0.5)) throw std::invalid_argument(fmt::format("delta_tol = {} outside [0, 1/2)", delta_tol));
  if (threads < 0) throw std::invalid_argument("threads must be >= 0");
  dynamics.validate();
}

int default_threads() {
  if (const char* env = std::getenv("HOPCAP_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<int>(std::min<long>(v, 1024));
    throw std::invalid_argument(fmt::format("HOPCAP_THREADS must be a positive integer, got '{}'", env));
  }
  return std::max(1U, std::thread::hardware_concurrency());
}

ExperimentStats retrieval_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const int m = static_cast<int>(std::lround(cfg.alpha * cfg.n));
  if (static_cast<double>(cfg.n) * m > 1e9) {
    throw std::invalid_argument(fmt::format("retrieval_experiment: n * m = {} exceeds 1e9", static_cast<double>(cfg.n) * m));
  }
  ExperimentStats out;
  out.m = m;
  out.trials.resize(cfg.trials);
  const int flips = static_cast<int>(std::lround(cfg.flip_frac * cfg.n));

  auto run_trial = [&](int t) {
    const std::uint64_t ts = derive_seed(cfg.seed, static_cast<std::uint64_t>(t));
    const PatternSet ps = generate_patterns(cfg.n, m, derive_seed(ts, 0));
    const CouplingMatrix cm = hebbian_coupling(ps);
    const State x0 = corrupt(ps.row(0), flips, derive_seed(ts, 1));
    DynamicsConfig dc = cfg.dynamics;
    dc.seed = derive_seed(ts, 2);
    out.trials[t] = run_dynamics(cm, x0, dc, ps.row(0));
  };

  const int workers = std::min(cfg.threads > 0 ? cfg.threads : default_threads(), cfg.trials);
  if (workers <= 1) {
    for (int t = 0; t < cfg.trials; ++t) run_trial(t);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (int t = next++; t < cfg.trials; t = next++) run_trial(t);
      });
    }
    for (auto& th : pool) th.join();
  }

  std::vector<double> overlaps;
  int retrieved = 0, converged = 0;
  double sweeps = 0.0, sum = 0.0;
  for (const auto& t : out.trials) {
    overlaps.push_back(t.final_overlap);
    sum += t.final_overlap;
    sweeps += t.sweeps_used;
    if (t.final_overlap >= 1.0 - 2.0 * cfg.delta_tol) ++retrieved;
    if (t.converged) ++converged;
  }
  std::sort(overlaps.begin(), overlaps.end());
  const std::size_t k = overlaps.size();
  out.median_overlap = k % 2 ? overlaps[k / 2] : 0.5 * (overlaps[k / 2 - 1] + overlaps[k / 2]);
  out.mean_overlap = sum / k;
  out.retrieval_fraction = static_cast<double>(retrieved) / k;
  out.converged_fraction = static_cast<double>(converged) / k;
  out.mean_sweeps = sweeps / k;
  return out;
}

std::vector<double> draw_matrix(int m, int n, std::uint64_t seed, Ensemble ensemble) {
  if (m < 1 || n < 1) throw std::invalid_argument("draw_matrix: need m, n >= 1");
  std::vector<double> g(static_cast<std::size_t>(m) * n);
  std::mt19937_64 rng(seed);
  if (ensemble == Ensemble::gaussian) {
    std::normal_distribution<double> nd(0.0, 1.0);
    for (auto& v : g) v = nd(rng);
  } else {
    for (auto& v : g) v = (rng() >> 63) ? 1.0 : -1.0;
  }
  return g;
}

double exact_xi_max(std::span<const double> g, int m, int n, int k_flips) {
  if (n < 1 || n > 24) throw std::invalid_argument(fmt::format("exact_xi_oracle: n = {} outside [1, 24]", n));
  if (k_flips < 0 || k_flips > n) throw std::invalid_argument(fmt::format("exact_xi_oracle: k_flips = {} outside [0, {}]", k_flips, n));
  if (m < 1 || g.size() != static_cast<std::size_t>(m) * n) throw std::invalid_argument("exact_xi_oracle: matrix shape mismatch");
  double subsets = 1.0;
  for (int i = 0; i < k_flips; ++i) subsets = subsets * (n - i) / (i + 1);
  if (subsets * m * n > 4e9) {
    throw std::invalid_argument(fmt::format("exact_xi_oracle: enumeration of {:.0f} subsets is too large", subsets));
  }
  auto norm_sq = [&](std::uint32_t mask) {
    double acc = 0.0;
    for (int i = 0; i < m; ++i) {
      const double* row = g.data() + static_cast<std::size_t>(i) * n;
      double dot = 0.0;
      for (int j = 0; j < n; ++j) dot += (mask >> j & 1U) ? -row[j] : row[j];
      acc += dot * dot;
    }
    return acc;
  };
  double best = 0.0;
  if (k_flips == 0) {
    best = norm_sq(0);
  } else {
    // Gosper's hack: successive masks with exactly k_flips bits set
    const std::uint64_t end = 1ULL << n;
    for (std::uint64_t mask = (1ULL << k_flips) - 1; mask < end;) {
      best = std::max(best, norm_sq(static_cast<std::uint32_t>(mask)));
      const std::uint64_t c = mask & (~mask + 1);
      const std::uint64_t r = mask + c;
      mask = (((r ^ mask) >> 2) / c) | r;
    }
  }
  return std::sqrt(best) / n;  // ||G x|| with x = sigma / sqrt(n), then / sqrt(n)
}

double exact_xi_oracle(int n, int m, int k_flips, std::uint64_t seed, Ensemble ensemble) {
  if (n < 1 || n > 24) throw std::invalid_argument(fmt::format("exact_xi_oracle: n = {} outside [1, 24]", n));
  return exact_xi_max(draw_matrix(m, n, seed, ensemble), m, n, k_flips);
}

}  // namespace hopcap::sim
