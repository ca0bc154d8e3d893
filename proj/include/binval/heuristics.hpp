#pragma once

#include <cstdint>
#include <vector>

#include "binval/bits.hpp"
#include "binval/errors.hpp"
#include "binval/rng.hpp"

namespace binval {

// One emitted record per iteration of any algorithm.
struct TraceEvent {
    long long iteration = 0;
    long long evaluations = 0;
    bool accepted = false;  // EA variants: offspring kept; sampler variant: always true
    double chi_after = 0.0;  // EA variants only
    int prefix_len_after = 0;
};

// State shared by the three (1+1) EA variants.
struct EaState {
    BitString x;
    double chi = 0.0;
    long long iteration = 0;
    long long evaluations = 0;
    int prefix_len = 0;

    std::vector<int> scratch_flips;  // reused per step, not part of the logical state

    static EaState init(int n, double chi0, RngStream& rng);
    static EaState init_from(BitString x0, double chi0);
};

// Parameters of the multiplicative rate self-adjustment: accepted steps scale
// chi by a (capped at chi_max), rejected steps by b (floored at chi_min(n) =
// n^-exponent).
struct SelfAdjustParams {
    double a = 1.85;
    double b = 0.898;
    double chi0 = 0.5;
    double chi_max = 0.5;
    double min_exponent = 2.0;  // chi_min = n^-min_exponent, needs exponent > 1
    double gamma = 0.15;        // phase-fraction parameter, read by the health check

    double chi_min(int n) const;
    void validate(int n) const;  // throws config_error on hard violations

    // True when log2(a)/(-log2(b)) > (1-gamma)/gamma, the margin the rate
    // analysis needs; surfaced as a warning, not an error.
    bool gain_loss_ratio_ok() const;
};

// One elitist step with the given fixed mutation rate.  Ties are accepted.
TraceEvent ea_fixed_step(EaState& state, double chi, RngStream& rng);

// Rate used by the rate-adjusting variant: 1/2^ceil(log2 i) for the first
// zero position i (clamped to 1/2 when i = 1), 1/n when x is all ones.
double greedy_optimal_rate(const BitString& x);

// One elitist step at the greedy rate recomputed from the current state.
TraceEvent ea_adjusting_step(EaState& state, RngStream& rng);

// One elitist step at the current state.chi, then the multiplicative update.
TraceEvent ea_self_adjusting_step(EaState& state, const SelfAdjustParams& params, RngStream& rng);

// Significance margin epsilon * max{sqrt(mu * ln nu), ln nu}.
double significance_threshold(double epsilon, double mu, long long nu);

enum class SigMove { Up, Down, Stay };

// Reference decision on an explicit history: Up when some power-of-two suffix
// window holds at least 2^m*tau + significance_threshold(epsilon, 2^m*tau, nu)
// ones (allowed while tau < 1 - 1/nu), Down symmetrically on zero counts with
// the same right-hand side (allowed while tau > 1/nu); Up is checked first.
SigMove sig_decision(double tau, const std::vector<bool>& history, double epsilon, long long nu);

// Frequency-vector sampler: per bit a frequency in {1/nu, 1/2, 1-1/nu} and a
// win history driving significance-triggered frequency jumps.  Histories are
// kept as packed bits with incremental per-window counters; windows that
// cannot trigger within max_iterations are never materialized, which the
// decision rule makes exact, not approximate.
class SigCgaState {
public:
    SigCgaState(int n, double epsilon, long long nu, long long max_iterations);

    // Same, but starting from given per-bit frequencies (values must be in
    // {1/nu, 1/2, 1-1/nu}).
    static SigCgaState with_frequencies(int n, double epsilon, long long nu,
                                        long long max_iterations,
                                        const std::vector<double>& taus);

    int n() const { return n_; }
    double epsilon() const { return epsilon_; }
    long long nu() const { return nu_; }
    long long iteration() const { return iteration_; }
    long long evaluations() const { return evaluations_; }

    double tau(int i) const;
    long long history_len(int i) const;

    // winner of the last completed iteration (undefined before the first step)
    const BitString& winner() const { return winner_; }

private:
    enum class Band : unsigned char { Lower, Half, Upper };

    struct WindowPlan {
        int first_m = -1;            // smallest window exponent that can ever trigger
        std::vector<double> thr;     // threshold for window 2^(first_m + idx)
        bool track = false;          // whether history bits must be stored at all
        bool up_allowed = false;
        bool down_allowed = false;
    };

    // A window's count moves by at most one per appended entry, so each
    // window schedules the next history length at which it could possibly
    // cross its threshold; between those lengths a bit costs one comparison.
    struct BitHistory {
        std::vector<std::uint64_t> bits;       // packed, entry j at word j>>6 bit j&63
        std::vector<std::uint32_t> word_ones;  // running ones total per completed word
        std::vector<long long> next_check;     // per window, length of its next look
        long long next_event = 0;              // min over next_check
        long long len = 0;
        long long total_ones = 0;

        void clear();
        void append(bool one);
        void reset_windows(const WindowPlan& plan);
        long long ones_before(long long p) const;
        long long last_window_ones(long long w) const;
    };

    SigCgaState() = default;
    void init_common(int n, double epsilon, long long nu, long long max_iterations);
    void build_plans();
    void set_band(int i, Band next);
    void rebuild_band_structures();
    double band_value(Band band) const;
    const WindowPlan& plan(Band band) const {
        return plans_[static_cast<std::size_t>(band)];
    }

    friend TraceEvent sig_cga_step(SigCgaState& state, RngStream& rng);

    int n_ = 0;
    double epsilon_ = 0.0;
    long long nu_ = 0;
    long long max_iter_ = 0;
    long long iteration_ = 0;
    long long evaluations_ = 0;

    std::vector<Band> band_;
    std::vector<BitHistory> hist_;
    WindowPlan plans_[3];

    // sampling support: word masks of the half- and upper-band positions,
    // plus position lists for the rare-exception draws
    std::vector<std::uint64_t> half_mask_, upper_mask_;
    std::vector<int> lower_bits_, upper_bits_;
    std::vector<int> pos_in_list_;

    BitString winner_, y_, z_;
    std::vector<int> scratch_;
};

// One iteration: sample two offspring from the frequency vector, pick the
// winner by bit-value comparison (first sample wins ties), append its bits to
// every history, apply the significance decisions, clear histories on any
// frequency change.  Two evaluations per iteration.
TraceEvent sig_cga_step(SigCgaState& state, RngStream& rng);

}  // namespace binval
