#include "binval/drift.hpp"

#include <bit>
#include <cmath>
#include <limits>
#include <numbers>

namespace binval {

namespace {

// log(1 + e^t) without overflow for large t
double log1p_exp(double t) {
    return t > 36.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
}

struct Welford {
    long long count = 0;
    double mean = 0.0;
    double m2 = 0.0;

    void add(double v) {
        ++count;
        double d = v - mean;
        mean += d / count;
        m2 += d * (v - mean);
    }

    double stderr_of_mean() const {
        if (count < 2) return 0.0;
        return std::sqrt(m2 / (static_cast<double>(count) * (count - 1)));
    }
};

}  // namespace

PhasePotential::PhasePotential(int r, double alpha, double d) : r(r), alpha(alpha), d(d) {
    if (r < 1 || r > 30) throw config_error("phase potential: r must lie in [1, 30]");
    if (!(alpha > 2.0)) throw config_error("phase potential: alpha must exceed 2");
    if (!(d > 1.0)) throw config_error("phase potential: d must exceed 1");
    double dchi = d * chi_opt();
    if (!(dchi < 1.0))
        throw config_error(
            "phase potential: d * chi_opt must be below 1, the weight base is undefined otherwise");
    double t = std::log(alpha * dchi) - (block() - 1) * std::log1p(-dchi);
    ln_base_ = log1p_exp(t);
}

double PhasePotential::log_weight(int i) const {
    if (i < 1 || i > block()) throw config_error("phase potential: index out of range");
    return (block() - i) * ln_base_;
}

double PhasePotential::eval_log(const BitString& x) const {
    if (block() > x.size()) throw config_error("phase potential: block exceeds the string length");
    int first = 0;
    double tail = 0.0;  // sum of base^-(i - first) over zero positions after the first
    for (int i = 1; i <= block(); ++i) {
        if (x.get(i)) continue;
        if (first == 0)
            first = i;
        else
            tail += std::exp(-(i - first) * ln_base_);
    }
    if (first == 0) return -std::numeric_limits<double>::infinity();
    return (block() - first) * ln_base_ + std::log1p(tail);
}

CombinedPotential::CombinedPotential(PhasePotential phase_in, double gamma, double a, double b,
                                     std::optional<double> c_override)
    : phase(phase_in), gamma(gamma), a(a), b(b), c(0.0) {
    if (!(gamma > 0.0) || !(gamma < 1.0 - std::numbers::ln2))
        throw config_error("combined potential: gamma must lie in (0, 1 - ln 2)");
    if (!(a > 1.0) || !(a < 2.0)) throw config_error("combined potential: a must lie in (1, 2)");
    if (!(b > 0.0) || !(b < 1.0)) throw config_error("combined potential: b must lie in (0, 1)");
    if (!(phase.d > a)) throw config_error("combined potential: d must exceed a");
    if (!(phase.d > 1.0 / b)) throw config_error("combined potential: d must exceed 1/b");

    double bound = c_bound();
    c = c_override ? *c_override : bound / 2.0;
    if (!(c > 0.0) || !(c <= bound))
        throw config_error("combined potential: c must lie in (0, c_bound]");

    int z = zeros_at_exit();
    double tail = 0.0;
    for (int m = 1; m < z; ++m) tail += std::exp(-m * phase.ln_base());
    ln_g_min_ = (z - 1) * phase.ln_base() + std::log1p(tail);
    if (ln_g_min_ < 0.0) ln_g_min_ = 0.0;
}

double CombinedPotential::c_bound() const {
    double d = phase.d;
    double shrink = std::min((2.0 * d - 1.0) / (d * d), d * std::exp(-d));
    double rate = std::min(1.0 / std::log2(a), 1.0 / (-std::log2(b)));
    return 0.25 * shrink * rate / phase.block();
}

int CombinedPotential::zeros_at_exit() const {
    return static_cast<int>(std::ceil(gamma * phase.block()));
}

double CombinedPotential::rate_window_lower() const {
    return (1.0 - gamma) / gamma + 1.0 / ((phase.d - 1.0) * gamma);
}

double CombinedPotential::rate_window_upper() const {
    return 2.0 * phase.d * (0.75 - gamma / 2.0) + 1.0;
}

double CombinedPotential::rate_ratio() const { return std::log2(a) / (-std::log2(b)); }

bool CombinedPotential::rate_window_ok() const {
    double ratio = rate_ratio();
    return rate_window_lower() < ratio && ratio < rate_window_upper();
}

CombinedValue eval_combined_potential(const BitString& x, double chi, const CombinedPotential& cp) {
    if (!(chi > 0.0) || !(chi < 1.0))
        throw config_error("combined potential: chi must lie strictly between 0 and 1");
    double lg = cp.phase.eval_log(x);
    double h1 = std::isinf(lg) ? 0.0 : log1p_exp(lg - cp.ln_g_min());
    double h2 = cp.c * std::abs(std::log2(chi / cp.phase.chi_opt()));
    return {h1 + h2, h1, h2};
}

double exact_one_step_drift(const BitString& x, double chi,
                            const std::function<double(const BitString&)>& pot) {
    int n = x.size();
    if (n > 14)
        throw config_error("exact_one_step_drift: n is capped at 14, use monte_carlo_drift instead");
    if (!(chi > 0.0) || !(chi < 1.0))
        throw config_error("exact_one_step_drift: chi must lie strictly between 0 and 1");

    std::vector<double> flip_pow(static_cast<std::size_t>(n + 1)),
        keep_pow(static_cast<std::size_t>(n + 1));
    flip_pow[0] = keep_pow[0] = 1.0;
    for (int j = 1; j <= n; ++j) {
        flip_pow[static_cast<std::size_t>(j)] = flip_pow[static_cast<std::size_t>(j - 1)] * chi;
        keep_pow[static_cast<std::size_t>(j)] = keep_pow[static_cast<std::size_t>(j - 1)] * (1.0 - chi);
    }

    std::uint64_t xv = x.words()[0] >> (64 - n);
    double px = pot(x);
    BitString y(n);
    double drift = 0.0;
    for (std::uint64_t mask = 1; mask < (std::uint64_t(1) << n); ++mask) {
        std::uint64_t yv = xv ^ mask;
        if (yv < xv) continue;  // rejected offspring leave the potential unchanged
        int flips = std::popcount(mask);
        y.words()[0] = yv << (64 - n);
        drift += flip_pow[static_cast<std::size_t>(flips)] *
                 keep_pow[static_cast<std::size_t>(n - flips)] * (px - pot(y));
    }
    return drift;
}

DriftEstimate monte_carlo_drift(const BitString& x, double chi,
                                const std::function<double(const BitString&)>& pot,
                                long long samples, RngStream& rng) {
    if (samples < 1000) throw config_error("monte_carlo_drift: need at least 1000 samples");
    if (!(chi > 0.0) || !(chi < 1.0))
        throw config_error("monte_carlo_drift: chi must lie strictly between 0 and 1");
    double px = pot(x);
    BitString y = x;
    std::vector<int> flips;
    Welford acc;
    for (long long s = 0; s < samples; ++s) {
        detail::sample_flip_indices(x.size(), chi, rng, flips);
        double delta = 0.0;
        if (!flips.empty() && !x.get(flips.front())) {
            y = x;
            for (int i : flips) y.flip(i);
            delta = px - pot(y);
        }
        acc.add(delta);
    }
    return {acc.mean, acc.stderr_of_mean()};
}

DriftEstimate monte_carlo_combined_drift(const BitString& x, double chi,
                                         const CombinedPotential& cp,
                                         const SelfAdjustParams& params, long long samples,
                                         RngStream& rng) {
    if (samples < 1000)
        throw config_error("monte_carlo_combined_drift: need at least 1000 samples");
    params.validate(x.size());
    double h0 = eval_combined_potential(x, chi, cp).h;
    EaState st = EaState::init_from(x, chi);
    int prefix0 = st.prefix_len;
    Welford acc;
    for (long long s = 0; s < samples; ++s) {
        st.x = x;
        st.chi = chi;
        st.prefix_len = prefix0;
        ea_self_adjusting_step(st, params, rng);
        acc.add(h0 - eval_combined_potential(st.x, st.chi, cp).h);
    }
    return {acc.mean, acc.stderr_of_mean()};
}

PhaseTracker::PhaseTracker(int n, double gamma) : n_(n), gamma_(gamma) {
    if (n < 2) throw config_error("phase tracker: n must be at least 2");
    if (!(gamma > 0.0) || !(gamma < 1.0 - std::numbers::ln2))
        throw config_error("phase tracker: gamma must lie in (0, 1 - ln 2)");
    r_max_ = static_cast<int>(std::bit_width(static_cast<unsigned>(n / 2))) - 1;
}

int PhaseTracker::threshold() const {
    return static_cast<int>(std::ceil(gamma_ * std::ldexp(1.0, r_)));
}

void PhaseTracker::update(const BitString& x) {
    if (x.size() != n_) throw config_error("phase tracker: string length differs from n");
    zero_count_ = x.zeros_in_prefix(1 << r_);
    while (r_ < r_max_ && zero_count_ <= threshold()) {
        ++r_;
        zero_count_ = x.zeros_in_prefix(1 << r_);
    }
}

std::vector<DriftGridOutcome> run_linear_drift_grid(const std::vector<int>& ns,
                                                    long long states_per_point,
                                                    std::uint64_t seed, bool corrupt_slope) {
    const double divisor = 4.0 * std::exp(1.0);
    std::vector<DriftGridOutcome> out;
    for (int n : ns) {
        if (n < 4 || n > 14)
            throw config_error("drift grid: n must lie in [4, 14] for exact enumeration");
        for (int k = 4; k <= n; ++k) {
            LinearPotential lp(k);
            auto pot = [&](const BitString& s) {
                if (!corrupt_slope) return lp.eval(s);
                double g = 0.0;  // slope flipped to increasing, breaks the bound on purpose
                for (int i = 1; i <= k; ++i)
                    if (!s.get(i)) g += 1.0 + static_cast<double>(i) / k;
                return g;
            };
            for (int which = 0; which < 2; ++which) {
                double chi = which == 0 ? 1.0 / k : 1.0 / (2.0 * k);
                DriftGridOutcome o;
                o.n = n;
                o.k = k;
                o.chi = chi;
                o.states = states_per_point;
                o.worst_slack = std::numeric_limits<double>::infinity();
                RngStream rng(seed, (static_cast<std::uint64_t>(n) << 32) |
                                        (static_cast<std::uint64_t>(k) << 8) |
                                        static_cast<std::uint64_t>(which));
                for (long long s = 0; s < states_per_point; ++s) {
                    BitString x = sample_uniform(n, rng);
                    double slack = exact_one_step_drift(x, chi, pot) - chi * pot(x) / divisor;
                    if (slack < o.worst_slack) o.worst_slack = slack;
                    if (slack < 0.0) ++o.violations;
                }
                out.push_back(o);
            }
        }
    }
    return out;
}

CombinedDriftOutcome combined_drift_on_phase(int n, int r, const SelfAdjustParams& params,
                                             const CombinedPotential& cp,
                                             long long samples_per_state, long long max_states,
                                             std::uint64_t seed) {
    params.validate(n);
    if (cp.phase.r != r)
        throw config_error("combined drift: the potential's phase differs from the requested one");
    RngStream traj_rng(seed, fnv1a64_str("phase-trajectory"));
    RngStream mc_rng(seed, fnv1a64_str("phase-drift-samples"));

    // A trajectory can hop clean over the requested phase when one accepted
    // step clears several leading zeros at once, and a phase also simply ends.
    // Fresh restarts keep collecting until the state budget is spent.
    CombinedDriftOutcome out;
    double mean_sum = 0.0, var_sum = 0.0;
    long long guard = 2000000;
    while (out.states_used < max_states && guard-- > 0) {
        EaState st = EaState::init(n, params.chi0, traj_rng);
        PhaseTracker tracker(n, cp.gamma);
        tracker.update(st.x);
        while (tracker.r() < r && guard-- > 0) {
            ea_self_adjusting_step(st, params, traj_rng);
            tracker.update(st.x);
        }
        while (tracker.r() == r && out.states_used < max_states && guard-- > 0) {
            DriftEstimate de =
                monte_carlo_combined_drift(st.x, st.chi, cp, params, samples_per_state, mc_rng);
            mean_sum += de.mean;
            var_sum += de.stderr_ * de.stderr_;
            ++out.states_used;
            ea_self_adjusting_step(st, params, traj_rng);
            tracker.update(st.x);
        }
    }
    if (out.states_used > 0) {
        out.mean = mean_sum / static_cast<double>(out.states_used);
        out.stderr_ = std::sqrt(var_sum) / static_cast<double>(out.states_used);
    }
    return out;
}

}  // namespace binval
