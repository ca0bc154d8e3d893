#include "binval/heuristics.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <string>

namespace binval {

EaState EaState::init(int n, double chi0, RngStream& rng) {
    EaState st;
    st.x = sample_uniform(n, rng);
    st.chi = chi0;
    st.prefix_len = st.x.leading_prefix();
    return st;
}

EaState EaState::init_from(BitString x0, double chi0) {
    EaState st;
    st.x = std::move(x0);
    st.chi = chi0;
    st.prefix_len = st.x.leading_prefix();
    return st;
}

namespace {

// Shared elitist step: propose x with each bit flipped independently with
// probability chi, keep it unless its value is smaller.  The value comparison
// never materializes the offspring: the leftmost flipped position decides, and
// the offspring wins (or ties) exactly when that position held a 0.
TraceEvent ea_core_step(EaState& st, double chi, RngStream& rng) {
    detail::sample_flip_indices(st.x.size(), chi, rng, st.scratch_flips);
    bool accepted = true;
    if (!st.scratch_flips.empty()) {
        int first = st.scratch_flips.front();
        accepted = !st.x.get(first);
        if (accepted) {
            for (int i : st.scratch_flips) st.x.flip(i);
            if (first == st.prefix_len + 1) {
                int p = st.prefix_len;
                int n = st.x.size();
                while (p < n && st.x.get(p + 1)) ++p;
                st.prefix_len = p;
            }
        }
    }
    st.chi = chi;
    ++st.iteration;
    ++st.evaluations;
    return {st.iteration, st.evaluations, accepted, st.chi, st.prefix_len};
}

double rate_for_first_zero(int first_zero, int n) {
    if (first_zero == 0) return 1.0 / n;  // all ones
    if (first_zero == 1) return 0.5;      // 1/2^0 = 1 is not a valid rate
    int m = std::bit_width(static_cast<unsigned>(first_zero - 1));
    return std::ldexp(1.0, -m);
}

}  // namespace

TraceEvent ea_fixed_step(EaState& state, double chi, RngStream& rng) {
    if (!(chi > 0.0) || !(chi < 1.0))
        throw config_error("ea_fixed_step: chi must lie strictly between 0 and 1");
    return ea_core_step(state, chi, rng);
}

double greedy_optimal_rate(const BitString& x) {
    int p = x.leading_prefix();
    return rate_for_first_zero(p == x.size() ? 0 : p + 1, x.size());
}

TraceEvent ea_adjusting_step(EaState& state, RngStream& rng) {
    int p = state.prefix_len;
    double chi = rate_for_first_zero(p == state.x.size() ? 0 : p + 1, state.x.size());
    return ea_core_step(state, chi, rng);
}

double SelfAdjustParams::chi_min(int n) const { return std::pow(n, -min_exponent); }

void SelfAdjustParams::validate(int n) const {
    if (!(a > 1.0) || !(a < 2.0)) throw config_error("self-adjust: a must lie in (1, 2)");
    if (!(b > 0.0) || !(b < 1.0)) throw config_error("self-adjust: b must lie in (0, 1)");
    if (!(min_exponent > 1.0)) throw config_error("self-adjust: chi_min exponent must exceed 1");
    if (!(chi_max > 0.0) || !(chi_max < 1.0)) throw config_error("self-adjust: chi_max must lie in (0, 1)");
    if (!(gamma > 0.0) || !(gamma < 1.0)) throw config_error("self-adjust: gamma must lie in (0, 1)");
    double lo = chi_min(n);
    if (!(lo <= chi0) || !(chi0 <= chi_max))
        throw config_error("self-adjust: chi0 must lie in [chi_min, chi_max]");
}

bool SelfAdjustParams::gain_loss_ratio_ok() const {
    return std::log2(a) / (-std::log2(b)) > (1.0 - gamma) / gamma;
}

TraceEvent ea_self_adjusting_step(EaState& state, const SelfAdjustParams& params, RngStream& rng) {
    double used = state.chi;
    double lo = params.chi_min(state.x.size());
    if (!(used >= lo) || !(used <= params.chi_max))
        throw config_error("ea_self_adjusting_step: chi left [chi_min, chi_max]");
    TraceEvent ev = ea_core_step(state, used, rng);
    state.chi = ev.accepted ? std::min(params.a * used, params.chi_max)
                            : std::max(params.b * used, lo);
    ev.chi_after = state.chi;
    return ev;
}

double significance_threshold(double epsilon, double mu, long long nu) {
    if (nu < 2) throw config_error("significance_threshold: nu must be at least 2");
    if (!(epsilon > 0.0)) throw config_error("significance_threshold: epsilon must be positive");
    if (!(mu >= 0.0)) throw config_error("significance_threshold: mu must be non-negative");
    double ln_nu = std::log(static_cast<double>(nu));
    return epsilon * std::max(std::sqrt(mu * ln_nu), ln_nu);
}

SigMove sig_decision(double tau, const std::vector<bool>& history, double epsilon, long long nu) {
    if (nu < 2) throw config_error("sig_decision: nu must be at least 2");
    double lower = 1.0 / static_cast<double>(nu);
    double upper = 1.0 - 1.0 / static_cast<double>(nu);
    bool is_lower = tau == lower;
    bool is_half = tau == 0.5;
    bool is_upper = tau == upper;
    if (!is_lower && !is_half && !is_upper)
        throw config_error("sig_decision: frequency not in {1/nu, 1/2, 1 - 1/nu}");

    long long len = static_cast<long long>(history.size());
    auto window_count = [&](long long w, bool ones) {
        long long c = 0;
        for (long long j = len - w; j < len; ++j)
            c += history[static_cast<std::size_t>(j)] == ones;
        return c;
    };
    if (is_lower || is_half) {
        for (int m = 0; (1LL << m) <= len; ++m) {
            long long w = 1LL << m;
            double need = static_cast<double>(w) * tau + significance_threshold(epsilon, static_cast<double>(w) * tau, nu);
            if (static_cast<double>(window_count(w, true)) >= need) return SigMove::Up;
        }
    }
    if (is_half || is_upper) {
        for (int m = 0; (1LL << m) <= len; ++m) {
            long long w = 1LL << m;
            double need = static_cast<double>(w) * tau + significance_threshold(epsilon, static_cast<double>(w) * tau, nu);
            if (static_cast<double>(window_count(w, false)) >= need) return SigMove::Down;
        }
    }
    return SigMove::Stay;
}

void SigCgaState::BitHistory::clear() {
    std::vector<std::uint64_t>().swap(bits);
    std::vector<std::uint32_t>().swap(word_ones);
    len = 0;
    total_ones = 0;
}

void SigCgaState::BitHistory::append(bool one) {
    if ((len & 63) == 0) bits.push_back(0);
    if (one) {
        bits.back() |= 1ull << (len & 63);
        ++total_ones;
    }
    ++len;
    if ((len & 63) == 0) word_ones.push_back(static_cast<std::uint32_t>(total_ones));
}

void SigCgaState::BitHistory::reset_windows(const WindowPlan& plan) {
    next_check.assign(plan.thr.size(), 0);
    long long soonest = std::numeric_limits<long long>::max();
    for (std::size_t idx = 0; idx < plan.thr.size(); ++idx) {
        long long w = 1LL << (plan.first_m + static_cast<int>(idx));
        next_check[idx] = w;  // a window is first evaluated once filled
        soonest = std::min(soonest, w);
    }
    next_event = soonest;
}

long long SigCgaState::BitHistory::ones_before(long long p) const {
    long long full = p >> 6;
    long long count = full > 0 ? word_ones[static_cast<std::size_t>(full - 1)] : 0;
    int rem = static_cast<int>(p & 63);
    if (rem)
        count += std::popcount(bits[static_cast<std::size_t>(full)] & ((1ull << rem) - 1));
    return count;
}

long long SigCgaState::BitHistory::last_window_ones(long long w) const {
    return total_ones - ones_before(len - w);
}

SigCgaState::SigCgaState(int n, double epsilon, long long nu, long long max_iterations) {
    init_common(n, epsilon, nu, max_iterations);
    band_.assign(static_cast<std::size_t>(n), Band::Half);
    hist_.assign(static_cast<std::size_t>(n), BitHistory{});
    for (int i = 0; i < n; ++i)
        hist_[static_cast<std::size_t>(i)].reset_windows(plan(band_[static_cast<std::size_t>(i)]));
    rebuild_band_structures();
}

SigCgaState SigCgaState::with_frequencies(int n, double epsilon, long long nu,
                                          long long max_iterations,
                                          const std::vector<double>& taus) {
    SigCgaState st;
    st.init_common(n, epsilon, nu, max_iterations);
    if (static_cast<int>(taus.size()) != n)
        throw config_error("sig_cga: frequency vector length must equal n");
    st.band_.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        double t = taus[static_cast<std::size_t>(i)];
        if (t == st.band_value(Band::Lower))
            st.band_[static_cast<std::size_t>(i)] = Band::Lower;
        else if (t == 0.5)
            st.band_[static_cast<std::size_t>(i)] = Band::Half;
        else if (t == st.band_value(Band::Upper))
            st.band_[static_cast<std::size_t>(i)] = Band::Upper;
        else
            throw config_error("sig_cga: frequency not in {1/nu, 1/2, 1 - 1/nu}");
    }
    st.hist_.assign(static_cast<std::size_t>(n), BitHistory{});
    for (int i = 0; i < n; ++i)
        st.hist_[static_cast<std::size_t>(i)].reset_windows(
            st.plan(st.band_[static_cast<std::size_t>(i)]));
    st.rebuild_band_structures();
    return st;
}

void SigCgaState::init_common(int n, double epsilon, long long nu, long long max_iterations) {
    if (n < 1) throw config_error("sig_cga: n must be at least 1");
    if (!(epsilon > 12.0)) throw config_error("sig_cga: epsilon must exceed 12");
    if (nu < 3) throw config_error("sig_cga: nu must be at least 3 (nu = 2 collapses the frequency set)");
    if (max_iterations < 1) throw config_error("sig_cga: max_iterations must be at least 1");
    if (max_iterations > 0xFFFFFFFFLL)
        throw config_error("sig_cga: max_iterations beyond 2^32 - 1 is not supported");
    n_ = n;
    epsilon_ = epsilon;
    nu_ = nu;
    max_iter_ = max_iterations;
    winner_ = BitString(n);
    y_ = BitString(n);
    z_ = BitString(n);
    build_plans();
}

double SigCgaState::band_value(Band band) const {
    switch (band) {
        case Band::Lower: return 1.0 / static_cast<double>(nu_);
        case Band::Half: return 0.5;
        default: return 1.0 - 1.0 / static_cast<double>(nu_);
    }
}

// For each frequency value, precompute which power-of-two windows can ever
// satisfy "count >= w*tau + margin" before max_iterations: since the count is
// at most w, window w is usable only once the threshold fits inside it, and
// threshold/w shrinks monotonically in w, so the usable exponents form a
// contiguous tail.  Bits whose frequency has no usable window inside the
// horizon keep only a history length, no stored bits, with identical
// observable behavior.
void SigCgaState::build_plans() {
    int m_max = static_cast<int>(std::bit_width(static_cast<unsigned long long>(max_iter_))) - 1;
    if (m_max > 62) m_max = 62;
    for (Band band : {Band::Lower, Band::Half, Band::Upper}) {
        WindowPlan& p = plans_[static_cast<std::size_t>(band)];
        p = WindowPlan{};
        p.up_allowed = band != Band::Upper;
        p.down_allowed = band != Band::Lower;
        double tau = band_value(band);
        for (int m = 0; m <= m_max; ++m) {
            double w = std::ldexp(1.0, m);
            double need = w * tau + significance_threshold(epsilon_, w * tau, nu_);
            if (need > w && p.thr.empty()) continue;
            if (p.thr.empty()) p.first_m = m;
            p.thr.push_back(need);
        }
        p.track = !p.thr.empty();
    }
}

double SigCgaState::tau(int i) const {
    if (i < 1 || i > n_) throw config_error("sig_cga: index out of range");
    return band_value(band_[static_cast<std::size_t>(i - 1)]);
}

long long SigCgaState::history_len(int i) const {
    if (i < 1 || i > n_) throw config_error("sig_cga: index out of range");
    return hist_[static_cast<std::size_t>(i - 1)].len;
}

void SigCgaState::rebuild_band_structures() {
    std::size_t words = (static_cast<std::size_t>(n_) + 63) / 64;
    half_mask_.assign(words, 0);
    upper_mask_.assign(words, 0);
    lower_bits_.clear();
    upper_bits_.clear();
    pos_in_list_.assign(static_cast<std::size_t>(n_), -1);
    for (int i = 1; i <= n_; ++i) {
        std::size_t w = static_cast<std::size_t>(i - 1) >> 6;
        std::uint64_t m = 1ull << (63 - ((i - 1) & 63));
        switch (band_[static_cast<std::size_t>(i - 1)]) {
            case Band::Half:
                half_mask_[w] |= m;
                break;
            case Band::Lower:
                pos_in_list_[static_cast<std::size_t>(i - 1)] = static_cast<int>(lower_bits_.size());
                lower_bits_.push_back(i);
                break;
            case Band::Upper:
                upper_mask_[w] |= m;
                pos_in_list_[static_cast<std::size_t>(i - 1)] = static_cast<int>(upper_bits_.size());
                upper_bits_.push_back(i);
                break;
        }
    }
}

void SigCgaState::set_band(int i, Band next) {
    Band cur = band_[static_cast<std::size_t>(i - 1)];
    if (cur == next) return;
    auto remove_from = [&](std::vector<int>& list) {
        int pos = pos_in_list_[static_cast<std::size_t>(i - 1)];
        int moved = list.back();
        list[static_cast<std::size_t>(pos)] = moved;
        pos_in_list_[static_cast<std::size_t>(moved - 1)] = pos;
        list.pop_back();
        pos_in_list_[static_cast<std::size_t>(i - 1)] = -1;
    };
    std::size_t w = static_cast<std::size_t>(i - 1) >> 6;
    std::uint64_t m = 1ull << (63 - ((i - 1) & 63));
    switch (cur) {
        case Band::Half: half_mask_[w] &= ~m; break;
        case Band::Lower: remove_from(lower_bits_); break;
        case Band::Upper:
            upper_mask_[w] &= ~m;
            remove_from(upper_bits_);
            break;
    }
    switch (next) {
        case Band::Half: half_mask_[w] |= m; break;
        case Band::Lower:
            pos_in_list_[static_cast<std::size_t>(i - 1)] = static_cast<int>(lower_bits_.size());
            lower_bits_.push_back(i);
            break;
        case Band::Upper:
            upper_mask_[w] |= m;
            pos_in_list_[static_cast<std::size_t>(i - 1)] = static_cast<int>(upper_bits_.size());
            upper_bits_.push_back(i);
            break;
    }
    band_[static_cast<std::size_t>(i - 1)] = next;
}

namespace {

// Draw one offspring: half-frequency bits come straight from random words,
// the rare side of each saturated frequency is applied as exceptions found by
// geometric skipping over that band's position list.
void sample_offspring(BitString& out, const std::vector<std::uint64_t>& half_mask,
                      const std::vector<std::uint64_t>& upper_mask,
                      const std::vector<int>& lower_bits, const std::vector<int>& upper_bits,
                      double rare, std::vector<int>& scratch, RngStream& rng) {
    auto& w = out.words();
    for (std::size_t j = 0; j < w.size(); ++j)
        w[j] = (rng.next_u64() & half_mask[j]) | upper_mask[j];
    if (!lower_bits.empty()) {
        detail::sample_flip_indices(static_cast<int>(lower_bits.size()), rare, rng, scratch);
        for (int o : scratch) out.set(lower_bits[static_cast<std::size_t>(o - 1)], true);
    }
    if (!upper_bits.empty()) {
        detail::sample_flip_indices(static_cast<int>(upper_bits.size()), rare, rng, scratch);
        for (int o : scratch) out.set(upper_bits[static_cast<std::size_t>(o - 1)], false);
    }
}

}  // namespace

TraceEvent sig_cga_step(SigCgaState& s, RngStream& rng) {
    double rare = 1.0 / static_cast<double>(s.nu_);
    sample_offspring(s.y_, s.half_mask_, s.upper_mask_, s.lower_bits_, s.upper_bits_, rare,
                     s.scratch_, rng);
    sample_offspring(s.z_, s.half_mask_, s.upper_mask_, s.lower_bits_, s.upper_bits_, rare,
                     s.scratch_, rng);
    s.winner_ = binval_compare(s.z_, s.y_) == Ordering::Greater ? s.z_ : s.y_;

    for (int i = 1; i <= s.n_; ++i) {
        bool one = s.winner_.get(i);
        SigCgaState::Band band = s.band_[static_cast<std::size_t>(i - 1)];
        const SigCgaState::WindowPlan& plan = s.plan(band);
        SigCgaState::BitHistory& h = s.hist_[static_cast<std::size_t>(i - 1)];

        if (!plan.track) {
            ++h.len;
            continue;
        }
        h.append(one);
        if (h.len < h.next_event) continue;

        bool fired_up = false, fired_down = false;
        long long soonest = std::numeric_limits<long long>::max();
        for (std::size_t idx = 0; idx < plan.thr.size(); ++idx) {
            long long nc = h.next_check[idx];
            if (h.len < nc) {
                soonest = std::min(soonest, nc);
                continue;
            }
            long long w = 1LL << (plan.first_m + static_cast<int>(idx));
            long long ones = h.last_window_ones(w);
            double thr = plan.thr[idx];
            long long ithr = static_cast<long long>(std::ceil(thr));
            long long wait = std::numeric_limits<long long>::max();
            if (plan.up_allowed) {
                if (static_cast<double>(ones) >= thr)
                    fired_up = true;
                else
                    wait = std::min(wait, ithr - ones);
            }
            if (plan.down_allowed) {
                long long zeros = w - ones;
                if (static_cast<double>(zeros) >= thr)
                    fired_down = true;
                else
                    wait = std::min(wait, ithr - zeros);
            }
            // a fired window needs no reschedule, the move resets every window
            if (wait == std::numeric_limits<long long>::max()) continue;
            if (wait < 1) wait = 1;
            long long next = h.len + wait;
            h.next_check[idx] = next;
            soonest = std::min(soonest, next);
        }
        h.next_event = soonest;
        if (fired_up || fired_down) {
            SigCgaState::Band to =
                fired_up ? SigCgaState::Band::Upper : SigCgaState::Band::Lower;
            h.clear();
            s.set_band(i, to);
            h.reset_windows(s.plan(to));
        }
    }

    ++s.iteration_;
    s.evaluations_ += 2;
    return {s.iteration_, s.evaluations_, true, 0.0, s.winner_.leading_prefix()};
}

}  // namespace binval
