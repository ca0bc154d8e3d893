#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "binval/bits.hpp"
#include "binval/errors.hpp"
#include "binval/heuristics.hpp"
#include "binval/rng.hpp"

namespace binval {

// Weighted zero count over the first k positions, weights 2 down to 1 + 1/k.
struct LinearPotential {
    int k;

    explicit LinearPotential(int k) : k(k) {
        if (k < 1) throw config_error("LinearPotential: k must be at least 1");
    }

    double weight(int i) const {
        if (i < 1 || i > k) throw config_error("LinearPotential: index out of range");
        return 1.0 + static_cast<double>(k + 1 - i) / k;
    }

    double eval(const BitString& x) const {
        if (k > x.size()) throw config_error("LinearPotential: k exceeds the string length");
        double g = 0.0;
        for (int i = 1; i <= k; ++i)
            if (!x.get(i)) g += weight(i);
        return g;
    }
};

// Geometric weights over the first 2^r positions.  The weight base grows so
// fast that everything is kept in log space; raw weights overflow doubles
// around r = 6 with the default d.
struct PhasePotential {
    int r;
    double alpha;
    double d;

    PhasePotential(int r, double alpha = 3.0, double d = 13.0);

    int block() const { return 1 << r; }
    double chi_opt() const { return std::ldexp(1.0, -r); }
    double ln_base() const { return ln_base_; }

    // ln g_i = (2^r - i) * ln_base
    double log_weight(int i) const;

    // ln of the weighted zero count over the block; -infinity when the block
    // is all ones (g = 0)
    double eval_log(const BitString& x) const;

private:
    double ln_base_ = 0.0;
};

struct CombinedValue {
    double h = 0.0;
    double h1 = 0.0;
    double h2 = 0.0;
};

// h(x, chi) = ln(1 + g(x)/g_min) + c * |log2(chi / chi_opt)|, the coupling of
// block progress with the distance of the rate from its per-phase optimum.
struct CombinedPotential {
    PhasePotential phase;
    double gamma;
    double a;
    double b;
    double c;

    CombinedPotential(PhasePotential phase, double gamma = 0.15, double a = 1.85,
                      double b = 0.898, std::optional<double> c_override = std::nullopt);

    // admissible ceiling for c; the default c is half of it
    double c_bound() const;

    int zeros_at_exit() const;  // ceil(gamma * 2^r), the block zeros allowed at phase exit
    double ln_g_min() const { return ln_g_min_; }

    // The rate-adjustment window the coupled analysis asks of (a, b, d,
    // gamma): lower < log2(a)/(-log2(b)) < upper.  Reported, not enforced;
    // the customary d = 13 misses the lower side.
    double rate_window_lower() const;
    double rate_window_upper() const;
    double rate_ratio() const;
    bool rate_window_ok() const;

private:
    double ln_g_min_ = 0.0;
};

CombinedValue eval_combined_potential(const BitString& x, double chi, const CombinedPotential& cp);

// Exact one-step expected decrease of pot under the elitist step at rate chi,
// by enumerating all 2^n flip masks.  n is capped so the enumeration stays
// cheap; larger n belongs to monte_carlo_drift.
double exact_one_step_drift(const BitString& x, double chi,
                            const std::function<double(const BitString&)>& pot);

struct DriftEstimate {
    double mean = 0.0;
    double stderr_ = 0.0;
};

DriftEstimate monte_carlo_drift(const BitString& x, double chi,
                                const std::function<double(const BitString&)>& pot,
                                long long samples, RngStream& rng);

// Same estimand for the combined potential, where one step also moves chi.
DriftEstimate monte_carlo_combined_drift(const BitString& x, double chi,
                                         const CombinedPotential& cp,
                                         const SelfAdjustParams& params, long long samples,
                                         RngStream& rng);

// Block-progress phase: in phase r the first 2^r bits are being optimized;
// the phase advances once at most ceil(gamma * 2^r) of them are still zero,
// cascading, and never beyond 2^r <= n/2.
class PhaseTracker {
public:
    PhaseTracker(int n, double gamma);

    void update(const BitString& x);

    int r() const { return r_; }
    int zero_count() const { return zero_count_; }
    int r_max() const { return r_max_; }
    double gamma() const { return gamma_; }
    int threshold() const;  // ceil(gamma * 2^r)

private:
    int n_;
    double gamma_;
    int r_ = 0;
    int r_max_;
    int zero_count_ = 0;
};

// One grid point of the exact drift audit of the linear potential bound.
struct DriftGridOutcome {
    int n = 0;
    int k = 0;
    double chi = 0.0;
    long long states = 0;
    long long violations = 0;
    double worst_slack = 0.0;  // min over states of drift - chi*g/(4e)
};

// For every n in ns, k in {4..n}, chi in {1/k, 1/(2k)}: draws uniform states
// and checks exact_one_step_drift >= chi * g(x) / (4e).  corrupt_slope flips
// the weight profile to increasing, which breaks the bound and serves as the
// checker's self-test.
std::vector<DriftGridOutcome> run_linear_drift_grid(const std::vector<int>& ns,
                                                    long long states_per_point,
                                                    std::uint64_t seed, bool corrupt_slope = false);

// Average combined-potential drift over states visited while self-adjusting
// runs sit in phase r; trajectories restart until max_states are collected.
struct CombinedDriftOutcome {
    double mean = 0.0;
    double stderr_ = 0.0;
    long long states_used = 0;
};

CombinedDriftOutcome combined_drift_on_phase(int n, int r, const SelfAdjustParams& params,
                                             const CombinedPotential& cp,
                                             long long samples_per_state, long long max_states,
                                             std::uint64_t seed);

}  // namespace binval
