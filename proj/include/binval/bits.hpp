#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "binval/errors.hpp"
#include "binval/rng.hpp"

namespace binval {

// Fixed-length bit string, the search point.  Index 1 is the most significant
// (leftmost) position.  Bits are packed into 64-bit words with index 1 at the
// top bit of word 0, so a word-wise unsigned comparison is exactly the
// lexicographic (most-significant-first) order on bits.  That order coincides
// with comparing the binary values sum(2^(n-i) * x_i) without ever
// materializing them, which matters because those values overflow every fixed
// width once n > 64.
class BitString {
public:
    BitString() = default;

    explicit BitString(int n) : n_(n), w_((n + 63) / 64, 0) {
        if (n < 1) throw config_error("BitString: length must be >= 1");
    }

    // e.g. "1101" -> bits 1,1,0,1 with index 1 leftmost
    static BitString from_string(const std::string& s) {
        BitString x(static_cast<int>(s.size()));
        for (int i = 1; i <= x.n_; ++i) {
            char c = s[static_cast<std::size_t>(i - 1)];
            if (c != '0' && c != '1') throw config_error("BitString: invalid character in bit literal");
            x.set(i, c == '1');
        }
        return x;
    }

    int size() const { return n_; }

    bool get(int i) const {
        check_index(i);
        return (w_[static_cast<std::size_t>(i - 1) >> 6] >> (63 - ((i - 1) & 63))) & 1u;
    }

    void set(int i, bool v) {
        check_index(i);
        std::uint64_t m = 1ull << (63 - ((i - 1) & 63));
        if (v)
            w_[static_cast<std::size_t>(i - 1) >> 6] |= m;
        else
            w_[static_cast<std::size_t>(i - 1) >> 6] &= ~m;
    }

    void flip(int i) {
        check_index(i);
        w_[static_cast<std::size_t>(i - 1) >> 6] ^= 1ull << (63 - ((i - 1) & 63));
    }

    void fill(bool v) {
        std::uint64_t w = v ? ~0ull : 0ull;
        for (auto& word : w_) word = w;
        if (v) mask_tail();
    }

    // length of the maximal all-ones leading prefix
    int leading_prefix() const {
        int p = 0;
        for (std::size_t j = 0; j < w_.size(); ++j) {
            if (w_[j] == ~0ull) {
                p += 64;
                continue;
            }
            p += std::countl_one(w_[j]);
            break;
        }
        return p > n_ ? n_ : p;
    }

    int popcount() const {
        int c = 0;
        for (auto w : w_) c += std::popcount(w);
        return c;
    }

    // number of zeros among the first k bits
    int zeros_in_prefix(int k) const {
        check_index(k);
        int ones = 0;
        int full = k >> 6;
        for (int j = 0; j < full; ++j) ones += std::popcount(w_[static_cast<std::size_t>(j)]);
        int rem = k & 63;
        if (rem) ones += std::popcount(w_[static_cast<std::size_t>(full)] >> (64 - rem));
        return k - ones;
    }

    bool operator==(const BitString& o) const { return n_ == o.n_ && w_ == o.w_; }
    bool operator!=(const BitString& o) const { return !(*this == o); }

    std::string to_string() const {
        std::string s(static_cast<std::size_t>(n_), '0');
        for (int i = 1; i <= n_; ++i)
            if (get(i)) s[static_cast<std::size_t>(i - 1)] = '1';
        return s;
    }

    const std::vector<std::uint64_t>& words() const { return w_; }
    std::vector<std::uint64_t>& words() { return w_; }

private:
    void check_index(int i) const {
        if (i < 1 || i > n_) throw config_error("BitString: index out of range");
    }

    // keep unused low bits of the last word zero; the comparator relies on it
    void mask_tail() {
        int rem = n_ & 63;
        if (rem) w_.back() &= ~0ull << (64 - rem);
    }

    int n_ = 0;
    std::vector<std::uint64_t> w_;
};

enum class Ordering { Less, Equal, Greater };

// Ordering of the binary values of x and y: the first index where they differ
// decides, and the string holding the 1 there is greater.
inline Ordering binval_compare(const BitString& x, const BitString& y) {
    if (x.size() != y.size()) throw config_error("binval_compare: length mismatch");
    const auto& a = x.words();
    const auto& b = y.words();
    for (std::size_t j = 0; j < a.size(); ++j) {
        if (a[j] != b[j]) return a[j] > b[j] ? Ordering::Greater : Ordering::Less;
    }
    return Ordering::Equal;
}

inline BitString sample_uniform(int n, RngStream& rng) {
    if (n < 1) throw config_error("sample_uniform: n must be >= 1");
    BitString x(n);
    auto& w = x.words();
    for (auto& word : w) word = rng.next_u64();
    int rem = n & 63;
    if (rem) w.back() &= ~0ull << (64 - rem);
    return x;
}

namespace detail {

// Appends the indices flipped by one mutation (each bit independently with
// probability chi) to out, in increasing index order.  Two regimes with the
// same per-bit marginal: dense chi draws one word-sized threshold test per
// bit; sparse chi jumps between flips with geometric skips, costing
// O(n*chi + 1) instead of O(n).
inline void sample_flip_indices(int n, double chi, RngStream& rng, std::vector<int>& out) {
    out.clear();
    if (chi >= 1.0 / 6.0) {
        for (int i = 1; i <= n; ++i)
            if (rng.next_double() < chi) out.push_back(i);
        return;
    }
    const double denom = std::log1p(-chi);  // log(1 - chi) < 0
    double i = 0.0;                         // 0-based position just before the next candidate
    while (true) {
        double u = rng.next_double_open0();
        i += std::floor(std::log(u) / denom) + 1.0;  // skip ~ Geometric(chi)
        if (i > static_cast<double>(n)) return;
        out.push_back(static_cast<int>(i));
    }
}

}  // namespace detail

// Mutation operator: flips each of the n bits independently with probability
// chi; the argument is left untouched.
inline BitString mutate(const BitString& x, double chi, RngStream& rng) {
    if (!(chi > 0.0) || !(chi < 1.0)) throw config_error("mutate: chi must lie strictly between 0 and 1");
    BitString y = x;
    std::vector<int> flips;
    detail::sample_flip_indices(x.size(), chi, rng, flips);
    for (int i : flips) y.flip(i);
    return y;
}

inline int leading_prefix(const BitString& x) { return x.leading_prefix(); }

// Running leading-ones prefix of an elitist incumbent.  After an accepted
// mutation whose leftmost flip is at first_flip, only a flip landing exactly
// one past the prefix can extend it; the extension walk is amortized O(1)
// per step because the prefix never shrinks under BinVal elitism.
struct PrefixTracker {
    int prefix_len = 0;

    void reset(const BitString& x) { prefix_len = x.leading_prefix(); }

    void on_accepted(const BitString& x, int first_flip) {
        if (first_flip != prefix_len + 1) return;
        int n = x.size();
        int p = prefix_len;
        while (p < n && x.get(p + 1)) ++p;
        prefix_len = p;
    }
};

}  // namespace binval
