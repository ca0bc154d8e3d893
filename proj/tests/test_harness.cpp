#include <doctest.h>

#include <unistd.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "binval/harness.hpp"

using namespace binval;

namespace {

bool message_mentions(const std::exception& e, const char* needle) {
    return std::string(e.what()).find(needle) != std::string::npos;
}

ExperimentConfig small_fixed(int n, long long runs, std::uint64_t seed) {
    ExperimentConfig cfg;
    cfg.algorithm = Algorithm::EaFixed;
    cfg.n = n;
    cfg.runs = runs;
    cfg.seed = seed;
    return cfg;
}

bool same_numbers(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (!(a[i] == b[i] || (std::isnan(a[i]) && std::isnan(b[i])))) return false;
    return true;
}

std::string read_bytes(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const char* tag) {
        path = std::filesystem::temp_directory_path() /
               (std::string("binval-test-") + tag + "-" + std::to_string(::getpid()));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
};

// Expected absorption time of the 8-bit elitist chain with flip rate 1/8,
// averaged over a uniform initial state.  Packing the string msb-first makes
// plain integer order the acceptance order, and because every transition goes
// strictly upward the hitting-time system is triangular: solve from the top.
double absorption_time_n8() {
    const int n = 8;
    const double chi = 0.125;
    const int states = 1 << n;
    std::vector<double> by_flips(n + 1);
    for (int h = 0; h <= n; ++h)
        by_flips[static_cast<std::size_t>(h)] =
            std::pow(chi, h) * std::pow(1.0 - chi, n - h);
    std::vector<double> t(static_cast<std::size_t>(states), 0.0);
    for (int v = states - 2; v >= 0; --v) {
        double up = 0.0, acc = 0.0;
        for (int y = v + 1; y < states; ++y) {
            double p = by_flips[static_cast<std::size_t>(__builtin_popcount(
                static_cast<unsigned>(v ^ y)))];
            up += p;
            acc += p * t[static_cast<std::size_t>(y)];
        }
        t[static_cast<std::size_t>(v)] = (1.0 + acc) / up;
    }
    double sum = 0.0;
    for (double v : t) sum += v;
    return sum / states;
}

}  // namespace

TEST_CASE("rate literals parse in all three forms") {
    CHECK(parse_rate("1/n", 100) == doctest::Approx(0.01).epsilon(1e-15));
    CHECK(parse_rate("3/64", 10) == doctest::Approx(0.046875).epsilon(1e-15));
    CHECK(parse_rate("0.25", 10) == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(parse_rate("1/2", 10) == 0.5);

    CHECK_THROWS_AS(parse_rate("2/0", 10), config_error);
    CHECK_THROWS_AS(parse_rate("x", 10), config_error);
    CHECK_THROWS_AS(parse_rate("1/m", 10), config_error);
    CHECK_THROWS_AS(parse_rate("", 10), config_error);
    CHECK_THROWS_AS(parse_rate("1", 10), config_error);
    CHECK_THROWS_AS(parse_rate("0", 10), config_error);
    CHECK_THROWS_AS(parse_rate("-0.5", 10), config_error);
    CHECK_THROWS_AS(parse_rate("1.5", 10), config_error);
    CHECK_THROWS_AS(parse_rate("1/1", 10), config_error);
    try {
        parse_rate("1.5", 10);
    } catch (const config_error& e) {
        CHECK(message_mentions(e, "1.5"));
    }
}

TEST_CASE("config defaults resolve as documented") {
    ExperimentConfig cfg = small_fixed(1024, 1, 1);
    CHECK(cfg.effective_budget() == 406092);
    CHECK(cfg.effective_chi() == doctest::Approx(1.0 / 1024.0).epsilon(1e-15));
    cfg.n = 8;
    CHECK(cfg.effective_budget() == 1232);
    cfg.n = 16;
    CHECK(cfg.effective_budget() == 3019);
    cfg.n = 64;
    CHECK(cfg.effective_budget() == 16509);
    cfg.budget = 77;
    CHECK(cfg.effective_budget() == 77);

    ExperimentConfig sig = small_fixed(512, 1, 1);
    sig.algorithm = Algorithm::SigCga;
    CHECK(sig.effective_budget() == 741205);
    CHECK(sig.effective_nu() == 512);
    sig.nu = 9;
    CHECK(sig.effective_nu() == 9);
    sig.n = 8;
    CHECK(sig.effective_budget() == 4928);

    ExperimentConfig tiny = small_fixed(4, 1, 1);
    CHECK(tiny.effective_targets() == std::vector<int>{1, 2, 3, 4});
    tiny.k_targets = {3, 1, 3, 2};
    CHECK(tiny.effective_targets() == std::vector<int>{1, 2, 3});
}

TEST_CASE("config validation rejects the degenerate corners") {
    CHECK_THROWS_AS(small_fixed(0, 1, 1).validate(), config_error);
    CHECK_THROWS_AS(small_fixed(4, 0, 1).validate(), config_error);

    ExperimentConfig cfg = small_fixed(4, 1, 1);
    cfg.budget = -1;
    CHECK_THROWS_AS(cfg.validate(), config_error);

    cfg = small_fixed(4, 1, 1);
    cfg.k_targets = {0};
    CHECK_THROWS_AS(cfg.validate(), config_error);
    cfg.k_targets = {5};
    CHECK_THROWS_AS(cfg.validate(), config_error);

    cfg = small_fixed(4, 1, 1);
    cfg.chi = 1.0;
    CHECK_THROWS_AS(cfg.validate(), config_error);

    cfg = small_fixed(4, 1, 1);
    cfg.algorithm = Algorithm::EaSelfAdjusting;
    cfg.self_adjust.a = 1.0;
    CHECK_THROWS_AS(cfg.validate(), config_error);
}

TEST_CASE("config json round-trips and rejects what it does not know") {
    ExperimentConfig cfg = small_fixed(64, 5, 99);
    cfg.k_targets = {8, 16};
    cfg.chi = 0.03125;
    cfg.budget = 500;
    ExperimentConfig back = config_from_json(config_to_json(cfg));
    CHECK(config_hash(back) == config_hash(cfg));
    CHECK(back.n == 64);
    CHECK(back.runs == 5);
    CHECK(back.k_targets == cfg.k_targets);
    CHECK(back.chi == cfg.chi);

    ExperimentConfig sa = small_fixed(64, 5, 99);
    sa.algorithm = Algorithm::EaSelfAdjusting;
    sa.self_adjust.a = 1.9;
    ExperimentConfig sa_back = config_from_json(config_to_json(sa));
    CHECK(sa_back.self_adjust.a == 1.9);
    CHECK(config_hash(sa_back) == config_hash(sa));

    ExperimentConfig sig = small_fixed(64, 2, 7);
    sig.algorithm = Algorithm::SigCga;
    ExperimentConfig sig_back = config_from_json(config_to_json(sig));
    CHECK(sig_back.epsilon == 13.0);
    CHECK(sig_back.nu == 0);

    CHECK_THROWS_AS(config_from_json("not json"), config_error);
    CHECK_THROWS_AS(config_from_json("[1,2]"), config_error);
    CHECK_THROWS_AS(
        config_from_json(R"({"algorithm":"ea_fixed","n":4,"runs":1,"seed":1,"bogus":3})"),
        config_error);
    try {
        config_from_json(R"({"algorithm":"ea_fixed","n":4,"runs":1,"seed":1,"bogus":3})");
    } catch (const config_error& e) {
        CHECK(message_mentions(e, "bogus"));
    }
    // fields belonging to a different algorithm count as unknown
    CHECK_THROWS_AS(
        config_from_json(R"({"algorithm":"sig_cga","n":4,"runs":1,"seed":1,"chi":0.5})"),
        config_error);
    CHECK_THROWS_AS(config_from_json(R"({"algorithm":"ea_fixed","n":4,"runs":1,"seed":-1})"),
                    config_error);
    CHECK_THROWS_AS(
        config_from_json(
            R"({"algorithm":"ea_self_adjusting","n":4,"runs":1,"seed":1,"self_adjust":{"q":2}})"),
        config_error);
    CHECK_THROWS_AS(config_from_json(R"({"algorithm":"ea_fixed","n":4,"runs":1})"), config_error);
    CHECK_THROWS_AS(
        config_from_json(R"({"algorithm":"warm_restart","n":4,"runs":1,"seed":1})"),
        config_error);

    ExperimentConfig str_chi = config_from_json(
        R"({"algorithm":"ea_fixed","n":64,"runs":1,"seed":1,"chi":"1/n"})");
    CHECK(str_chi.chi == doctest::Approx(1.0 / 64.0).epsilon(1e-15));
    ExperimentConfig all_targets = config_from_json(
        R"({"algorithm":"ea_fixed","n":4,"runs":1,"seed":1,"k_targets":"all"})");
    CHECK(all_targets.k_targets.empty());
}

TEST_CASE("config hash separates every field") {
    ExperimentConfig base = small_fixed(64, 5, 99);
    std::uint64_t h0 = config_hash(base);
    CHECK(config_hash_hex(base).size() == 16);

    auto differs = [&](ExperimentConfig cfg) { return config_hash(cfg) != h0; };
    ExperimentConfig c = base;
    c.n = 65;
    CHECK(differs(c));
    c = base;
    c.runs = 6;
    CHECK(differs(c));
    c = base;
    c.budget = 1;
    CHECK(differs(c));
    c = base;
    c.seed = 100;
    CHECK(differs(c));
    c = base;
    c.k_targets = {1};
    CHECK(differs(c));
    c = base;
    c.record_trace = true;
    CHECK(differs(c));
    c = base;
    c.chi = 0.25;
    CHECK(differs(c));
    c = base;
    c.algorithm = Algorithm::EaAdjusting;
    CHECK(differs(c));
    CHECK(config_hash(base) == h0);
}

TEST_CASE("runs are deterministic, stream-separated, and worker-count independent") {
    ExperimentConfig cfg = small_fixed(32, 6, 4242);
    RunSummary a = run_experiment(cfg);
    RunSummary b = run_experiment(cfg);
    CHECK(a.hit_iterations == b.hit_iterations);
    CHECK(a.hit_evaluations == b.hit_evaluations);
    CHECK(a.mean == b.mean);
    CHECK(a.median == b.median);
    CHECK(a.stddev == b.stddev);
    CHECK(a.censored == b.censored);

    RunSummary par = run_experiment(cfg, 4);
    CHECK(par.hit_iterations == a.hit_iterations);
    CHECK(par.hit_evaluations == a.hit_evaluations);

    // distinct run indices must explore distinct trajectories
    bool any_differs = false;
    std::size_t last = a.ks.size() - 1;
    for (long long r = 1; r < cfg.runs; ++r)
        if (a.hit_iterations[last][static_cast<std::size_t>(r)] != a.hit_iterations[last][0])
            any_differs = true;
    CHECK(any_differs);

    CHECK(run_stream_id(Algorithm::EaFixed, 3) != run_stream_id(Algorithm::EaAdjusting, 3));
    CHECK(run_stream_id(Algorithm::EaFixed, 3) != run_stream_id(Algorithm::EaFixed, 4));
}

TEST_CASE("algorithm parameter errors surface before any worker starts") {
    ExperimentConfig cfg = small_fixed(16, 4, 1);
    cfg.algorithm = Algorithm::SigCga;
    cfg.nu = 2;
    CHECK_THROWS_AS(run_experiment(cfg), config_error);
    CHECK_THROWS_AS(run_experiment(cfg, 8), config_error);
    cfg.nu = 0;
    cfg.epsilon = 12.0;
    CHECK_THROWS_AS(run_experiment(cfg, 8), config_error);
    CHECK_THROWS_AS(run_experiment(small_fixed(16, 4, 1), 0), config_error);
}

TEST_CASE("aggregates match an independent pass and honor censoring") {
    ExperimentConfig cfg = small_fixed(32, 9, 7);
    RunSummary s = run_experiment(cfg);
    CHECK(aggregation_disagreement(s) <= 1e-12);
    for (std::size_t idx = 0; idx < s.ks.size(); ++idx) {
        long long uncensored = 0;
        for (long long v : s.hit_iterations[idx])
            if (v >= 0) ++uncensored;
        CHECK(uncensored + s.censored[idx] == cfg.runs);
    }

    // a one-step budget censors the far targets outright
    ExperimentConfig strangled = small_fixed(32, 5, 7);
    strangled.budget = 1;
    RunSummary t = run_experiment(strangled);
    CHECK(aggregation_disagreement(t) <= 1e-12);
    std::size_t last = t.ks.size() - 1;
    CHECK(t.censored[last] == 5);
    CHECK(std::isnan(t.mean[last]));
    CHECK(std::isnan(t.median[last]));
    CHECK(std::isnan(t.stddev[last]));
    for (long long v : t.hit_iterations[last]) CHECK(v == -1);
    // the budget caps every recorded hit
    for (const auto& row : t.hit_iterations)
        for (long long v : row) CHECK(v <= 1);

    ExperimentConfig lone = small_fixed(8, 1, 3);
    RunSummary u = run_experiment(lone);
    CHECK(aggregation_disagreement(u) <= 1e-12);
    for (std::size_t idx = 0; idx < u.ks.size(); ++idx)
        if (u.censored[idx] == 0) {
            CHECK(u.stddev[idx] == 0.0);
            CHECK(u.mean[idx] == u.median[idx]);
        }
}

TEST_CASE("simulated global hitting time matches the chain solved exactly") {
    double oracle = absorption_time_n8();
    CHECK(oracle == doctest::Approx(35.50452382259503679).epsilon(1e-12));

    ExperimentConfig cfg = small_fixed(8, 20000, 20260822);
    cfg.chi = 0.125;
    cfg.k_targets = {8};
    RunSummary s = run_experiment(cfg);
    CHECK(s.censored[0] == 0);
    double stderr_of_mean = s.stddev[0] / std::sqrt(static_cast<double>(cfg.runs));
    CHECK(std::abs(s.mean[0] - oracle) <= 3.0 * stderr_of_mean);
}

TEST_CASE("furthest win follows the synthetic definitions") {
    std::vector<int> ks;
    std::vector<long long> quad, lin;
    for (int k = 1; k <= 150; ++k) {
        ks.push_back(k);
        quad.push_back(static_cast<long long>(k) * k);
        lin.push_back(100LL * k);
    }
    // k^2 < 100k up to k = 99, they tie at 100, the linear side wins after
    CHECK(furthest_win(ks, quad, lin) == 99);
    CHECK(furthest_win(ks, lin, quad) == 150);

    // ahead through the whole recorded range: the last recorded target counts
    std::vector<int> short_ks(ks.begin(), ks.begin() + 50);
    CHECK(furthest_win(short_ks, {quad.begin(), quad.begin() + 50},
                       {lin.begin(), lin.begin() + 50}) == 50);

    std::vector<long long> earlier(lin);
    for (auto& v : earlier) --v;
    CHECK(furthest_win(ks, earlier, lin) == 150);

    // ties are not wins
    CHECK(furthest_win(ks, lin, lin) == -1);

    // a censored side never wins; a hit against a censored side does
    CHECK(furthest_win({4, 8}, {10, -1}, {10, 500}) == -1);
    CHECK(furthest_win({4, 8}, {10, 400}, {12, -1}) == 8);
    CHECK(furthest_win({4, 8}, {10, -1}, {12, -1}) == 4);
    // once both sides are censored the recorded range is exhausted
    CHECK(furthest_win({4, 8, 12}, {10, -1, 20}, {12, -1, 90}) == 4);

    CHECK_THROWS_AS(furthest_win({1, 2}, {3}, {4, 5}), config_error);
}

TEST_CASE("identical paired configurations never lead") {
    ExperimentConfig cfg = small_fixed(16, 12, 5);
    TurningPoint tp = compare_turning_points(cfg, cfg);
    CHECK(tp.n == 16);
    CHECK(tp.counted == 0);
    CHECK(tp.counted < static_cast<long long>(0.6 * static_cast<double>(cfg.runs)));
    CHECK(tp.k_star == std::vector<long long>(12, -1));
    CHECK(std::isnan(tp.mean_relative));

    ExperimentConfig other = small_fixed(17, 12, 5);
    CHECK_THROWS_AS(compare_turning_points(cfg, other), config_error);
    other = small_fixed(16, 11, 5);
    CHECK_THROWS_AS(compare_turning_points(cfg, other), config_error);
    other = small_fixed(16, 12, 6);
    CHECK_THROWS_AS(compare_turning_points(cfg, other), config_error);
    other = small_fixed(16, 12, 5);
    other.k_targets = {1, 2};
    CHECK_THROWS_AS(compare_turning_points(cfg, other), config_error);
}

TEST_CASE("identical unpaired configurations lead symmetrically") {
    ExperimentConfig cfg = small_fixed(16, 400, 31337);
    TurningPoint tp = compare_turning_points(cfg, cfg, 1, false);

    ExperimentConfig replica = cfg;
    replica.seed ^= fnv1a64_str("unpaired-replicate");
    RunSummary sa = run_experiment(cfg);
    RunSummary sb = run_experiment(replica);
    long long forward = 0, backward = 0;
    std::vector<long long> col_a(sa.ks.size()), col_b(sa.ks.size());
    for (long long r = 0; r < cfg.runs; ++r) {
        for (std::size_t idx = 0; idx < sa.ks.size(); ++idx) {
            col_a[idx] = sa.hit_iterations[idx][static_cast<std::size_t>(r)];
            col_b[idx] = sb.hit_iterations[idx][static_cast<std::size_t>(r)];
        }
        if (furthest_win(sa.ks, col_a, col_b) > 0) ++forward;
        if (furthest_win(sa.ks, col_b, col_a) > 0) ++backward;
    }
    CHECK(tp.counted == forward);

    // neither side may dominate: two-sided sign test at significance 1e-3
    double spread = 3.29 * std::sqrt(static_cast<double>(forward + backward));
    CHECK(std::abs(static_cast<double>(forward - backward)) <= spread);
}

TEST_CASE("raw and summary files round-trip exactly") {
    TempDir dir("csv");
    ExperimentConfig cfg = small_fixed(24, 7, 11);
    cfg.budget = 60;  // low enough that the far targets censor
    RunSummary s = run_experiment(cfg);

    std::filesystem::path raw = dir.path / "raw.csv";
    std::filesystem::path sum = dir.path / "summary.csv";
    write_raw_csv(raw, s);
    write_summary_csv(sum, s);

    std::string raw_bytes = read_bytes(raw);
    CHECK(raw_bytes.find('\r') == std::string::npos);
    CHECK(raw_bytes.rfind("algo,n,run_index,k,hit_iteration,hit_evaluations\n", 0) == 0);
    CHECK(raw_bytes.back() == '\n');

    RunSummary back = summary_from_raw_csv(raw, cfg);
    CHECK(back.hit_iterations == s.hit_iterations);
    CHECK(back.hit_evaluations == s.hit_evaluations);
    CHECK(same_numbers(back.mean, s.mean));
    CHECK(same_numbers(back.median, s.median));
    CHECK(same_numbers(back.stddev, s.stddev));
    CHECK(back.censored == s.censored);

    std::vector<SummaryRow> rows = parse_summary_csv(sum);
    REQUIRE(rows.size() == s.ks.size());
    bool saw_censored = false;
    for (std::size_t idx = 0; idx < rows.size(); ++idx) {
        CHECK(rows[idx].algo == "ea_fixed");
        CHECK(rows[idx].n == 24);
        CHECK(rows[idx].k == s.ks[idx]);
        CHECK(rows[idx].censored == s.censored[idx]);
        if (s.censored[idx] == cfg.runs) {
            saw_censored = true;
            CHECK(std::isnan(rows[idx].mean));
        } else if (s.censored[idx] == 0) {
            CHECK(rows[idx].mean == s.mean[idx]);
            CHECK(rows[idx].median == s.median[idx]);
            CHECK(rows[idx].stddev == s.stddev[idx]);
        }
    }
    CHECK(saw_censored);

    std::filesystem::path side = dir.path / "config.json";
    write_config_sidecar(side, cfg);
    std::string side_bytes = read_bytes(side);
    CHECK(side_bytes.find(config_hash_hex(cfg)) != std::string::npos);
    CHECK(side_bytes.find("\"algorithm\": \"ea_fixed\"") != std::string::npos);

    CHECK_THROWS_AS(parse_summary_csv(dir.path / "missing.csv"), runtime_failure);
    CHECK_THROWS_AS(summary_from_raw_csv(sum, cfg), runtime_failure);
}

TEST_CASE("turning file marks absent turning points with empty cells") {
    TempDir dir("turning");
    TurningPoint tp;
    tp.n = 100;
    tp.k_star = {58, -1, 62};
    std::filesystem::path path = dir.path / "turning.csv";
    write_turning_csv(path, tp);
    CHECK(read_bytes(path) ==
          "run_index,k_star,relative\n"
          "0,58,0.57999999999999996\n"
          "1,,\n"
          "2,62,0.62\n");
}

TEST_CASE("emitted files are byte-identical across worker counts") {
    TempDir dir("jobs");
    ExperimentConfig cfg = small_fixed(48, 16, 2024);
    cfg.algorithm = Algorithm::EaSelfAdjusting;
    for (int jobs : {1, 8}) {
        RunSummary s = run_experiment(cfg, jobs);
        write_raw_csv(dir.path / ("raw" + std::to_string(jobs) + ".csv"), s);
        write_summary_csv(dir.path / ("sum" + std::to_string(jobs) + ".csv"), s);
    }
    CHECK(read_bytes(dir.path / "raw1.csv") == read_bytes(dir.path / "raw8.csv"));
    CHECK(read_bytes(dir.path / "sum1.csv") == read_bytes(dir.path / "sum8.csv"));
}

TEST_CASE("traces record every prefix advance in order") {
    ExperimentConfig cfg = small_fixed(32, 3, 12);
    cfg.record_trace = true;
    RunSummary s = run_experiment(cfg);
    REQUIRE(s.traces.size() == 3);
    for (const auto& trace : s.traces) {
        REQUIRE(!trace.empty());
        CHECK(trace.front().iteration == 0);
        for (std::size_t i = 1; i < trace.size(); ++i) {
            CHECK(trace[i].iteration > trace[i - 1].iteration);
            CHECK(trace[i].prefix_len > trace[i - 1].prefix_len);
            CHECK(trace[i].evaluations >= trace[i - 1].evaluations);
        }
    }
    RunSummary quiet = run_experiment(small_fixed(32, 3, 12));
    CHECK(quiet.traces.empty());
}
