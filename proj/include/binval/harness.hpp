#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "binval/anytime.hpp"
#include "binval/errors.hpp"
#include "binval/heuristics.hpp"
#include "binval/rng.hpp"

namespace binval {

enum class Algorithm { EaFixed, EaAdjusting, EaSelfAdjusting, SigCga };

const char* algorithm_tag(Algorithm a);
Algorithm algorithm_from_tag(const std::string& tag);

// "1/n", "3/64" or a plain decimal; the n placeholder resolves against the
// problem size.
double parse_rate(const std::string& text, int n);

struct ExperimentConfig {
    Algorithm algorithm = Algorithm::EaFixed;
    int n = 0;
    long long runs = 0;
    long long budget = 0;  // 0 picks the per-algorithm default
    std::uint64_t seed = 0;
    std::vector<int> k_targets;  // empty means every k in 1..n
    bool record_trace = false;

    double chi = 0.0;              // ea_fixed only; 0 picks 1/n
    SelfAdjustParams self_adjust;  // ea_self_adjusting only
    double epsilon = 13.0;         // sig_cga only
    long long nu = 0;              // sig_cga only; 0 picks n

    long long effective_budget() const;
    double effective_chi() const;
    long long effective_nu() const;
    std::vector<int> effective_targets() const;  // sorted, deduplicated
    void validate() const;
};

// JSON mirror of ExperimentConfig.  Unknown fields are rejected so a typo
// cannot silently fall back to a default.
std::string config_to_json(const ExperimentConfig& cfg);
ExperimentConfig config_from_json(const std::string& text);
std::uint64_t config_hash(const ExperimentConfig& cfg);
std::string config_hash_hex(const ExperimentConfig& cfg);

struct PrefixStep {
    long long iteration = 0;
    long long evaluations = 0;
    int prefix_len = 0;
};

struct RunSummary {
    ExperimentConfig config;
    std::vector<int> ks;
    // [target index][run index]; -1 marks a run that never reached the target
    std::vector<std::vector<long long>> hit_iterations;
    std::vector<std::vector<long long>> hit_evaluations;
    // aggregates over the runs that reached the target, NaN when none did
    std::vector<double> mean;
    std::vector<double> median;
    std::vector<double> stddev;
    std::vector<long long> censored;
    // one entry per run when config.record_trace, each prefix increase
    std::vector<std::vector<PrefixStep>> traces;
};

// Every run draws from its own stream, so adding runs or algorithms never
// shifts anybody else's randomness.
std::uint64_t run_stream_id(Algorithm algorithm, long long run_index);

RunSummary run_experiment(const ExperimentConfig& cfg, int jobs = 1);

// Largest relative disagreement between the stored aggregates and a second
// pass computed with different algorithms (streaming moments, selection
// instead of sorting).  Exists so tests can hold the aggregation to 1e-12.
double aggregation_disagreement(const RunSummary& summary);

// Largest k where a's hit comes strictly earlier than b's, treating a
// censored entry as later than any hit; -1 when a is never earlier.  Two
// noisy hit curves trade places many times, so the last win sits well above
// the first loss and is the stabler summary of how far a stays ahead.
long long furthest_win(const std::vector<int>& ks, const std::vector<long long>& hit_a,
                       const std::vector<long long>& hit_b);

struct TurningPoint {
    int n = 0;
    std::vector<long long> k_star;  // per run pair; -1 when a never led
    long long counted = 0;          // pairs with a defined k*
    double mean_relative = 0.0;     // mean of k*/n over counted pairs, NaN when none
    double stddev_relative = 0.0;
};

// Runs both configs and finds, per run pair, the furthest target a reaches
// ahead of b.  Paired mode reuses the shared seed so run i of a faces run i
// of b; unpaired mode reseeds b to make the sides independent replicates.
TurningPoint compare_turning_points(const ExperimentConfig& cfg_a, const ExperimentConfig& cfg_b,
                                    int jobs = 1, bool paired = true);

void write_raw_csv(const std::filesystem::path& path, const RunSummary& summary);
void write_summary_csv(const std::filesystem::path& path, const RunSummary& summary);
void write_turning_csv(const std::filesystem::path& path, const TurningPoint& tp);
void write_config_sidecar(const std::filesystem::path& path, const ExperimentConfig& cfg);

struct SummaryRow {
    std::string algo;
    int n = 0;
    int k = 0;
    double mean = 0.0;
    double median = 0.0;
    double stddev = 0.0;
    long long censored = 0;
};

std::vector<SummaryRow> parse_summary_csv(const std::filesystem::path& path);

// Rebuilds hit tables from a raw CSV and re-aggregates; parsing an emitted
// file must reproduce the original summary's numbers exactly.
RunSummary summary_from_raw_csv(const std::filesystem::path& path, const ExperimentConfig& cfg);

}  // namespace binval
