#pragma once

#include <vector>

#include "binval/errors.hpp"
#include "binval/heuristics.hpp"

namespace binval {

// First-hit bookkeeping for every leading-ones target at once: hits[k] is the
// first iteration whose state had the first k bits set.  Because acceptance is
// elitist on the bit value, the prefix length never shrinks, so one pass over
// the trace fills every target in amortized constant time per event.
class FixedTargetRecord {
public:
    FixedTargetRecord(int n, long long budget)
        : n_(n),
          budget_(budget),
          hit_iteration_(static_cast<std::size_t>(n), -1),
          hit_evaluations_(static_cast<std::size_t>(n), -1) {
        if (n < 1) throw config_error("FixedTargetRecord: n must be at least 1");
        if (budget < 1) throw config_error("FixedTargetRecord: budget must be at least 1");
    }

    // Feed the next trace event; events must arrive in iteration order.
    void record(const TraceEvent& ev) {
        if (ev.iteration <= last_iteration_)
            throw runtime_failure("FixedTargetRecord: trace event out of order");
        last_iteration_ = ev.iteration;
        int p = ev.prefix_len_after;
        if (p > n_) throw runtime_failure("FixedTargetRecord: prefix exceeds n");
        for (int k = reached_max_k_ + 1; k <= p; ++k) {
            hit_iteration_[static_cast<std::size_t>(k - 1)] = ev.iteration;
            hit_evaluations_[static_cast<std::size_t>(k - 1)] = ev.evaluations;
        }
        if (p > reached_max_k_) reached_max_k_ = p;
    }

    int n() const { return n_; }
    long long budget() const { return budget_; }
    int reached_max_k() const { return reached_max_k_; }

    bool is_hit(int k) const {
        check_k(k);
        return hit_iteration_[static_cast<std::size_t>(k - 1)] >= 0;
    }
    long long hit_iteration(int k) const {
        check_k(k);
        return hit_iteration_[static_cast<std::size_t>(k - 1)];
    }
    long long hit_evaluations(int k) const {
        check_k(k);
        return hit_evaluations_[static_cast<std::size_t>(k - 1)];
    }

    bool operator==(const FixedTargetRecord& o) const {
        return n_ == o.n_ && budget_ == o.budget_ && reached_max_k_ == o.reached_max_k_ &&
               hit_iteration_ == o.hit_iteration_ && hit_evaluations_ == o.hit_evaluations_;
    }

private:
    void check_k(int k) const {
        if (k < 1 || k > n_) throw config_error("FixedTargetRecord: k out of range");
    }

    int n_;
    long long budget_;
    int reached_max_k_ = 0;
    long long last_iteration_ = -1;
    std::vector<long long> hit_iteration_;
    std::vector<long long> hit_evaluations_;
};

}  // namespace binval
