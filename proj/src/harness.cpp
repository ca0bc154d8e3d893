#include "binval/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace binval {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

const char* kTags[] = {"ea_fixed", "ea_adjusting", "ea_self_adjusting", "sig_cga"};

std::string format_double(double v) {
    if (std::isnan(v)) return "";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

long long parse_ll_field(const std::string& text, const char* what) {
    long long v = 0;
    auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || p != text.data() + text.size())
        throw runtime_failure(std::string("csv: bad ") + what + " '" + text + "'");
    return v;
}

double parse_double_field(const std::string& text) {
    if (text.empty()) return kNan;
    double v = 0.0;
    auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || p != text.data() + text.size())
        throw runtime_failure("csv: bad number '" + text + "'");
    return v;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (;;) {
        std::size_t comma = line.find(',', start);
        if (comma == std::string::npos) {
            fields.push_back(line.substr(start));
            return fields;
        }
        fields.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
}

std::ofstream open_for_write(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw runtime_failure("cannot open " + path.string() + " for writing");
    return out;
}

void finish_write(std::ofstream& out, const std::filesystem::path& path) {
    out.flush();
    if (!out) throw runtime_failure("write to " + path.string() + " failed");
}

std::ifstream open_for_read(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw runtime_failure("cannot open " + path.string());
    return in;
}

}  // namespace

const char* algorithm_tag(Algorithm a) { return kTags[static_cast<std::size_t>(a)]; }

Algorithm algorithm_from_tag(const std::string& tag) {
    for (std::size_t i = 0; i < 4; ++i)
        if (tag == kTags[i]) return static_cast<Algorithm>(i);
    throw config_error("unknown algorithm '" + tag + "'");
}

double parse_rate(const std::string& text, int n) {
    if (n < 1) throw config_error("rate: n must be known before '" + text + "' can be resolved");
    auto bad = [&]() -> double {
        throw config_error("rate '" + text +
                           "' is neither a decimal nor p/q with integer p and q (q may be n)");
    };
    double value = 0.0;
    std::size_t slash = text.find('/');
    if (slash == std::string::npos) {
        auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
        if (ec != std::errc{} || p != text.data() + text.size()) return bad();
    } else {
        std::string num = text.substr(0, slash);
        std::string den = text.substr(slash + 1);
        long long p_val = 0, q_val = 0;
        auto [pp, pec] = std::from_chars(num.data(), num.data() + num.size(), p_val);
        if (pec != std::errc{} || pp != num.data() + num.size()) return bad();
        if (den == "n") {
            q_val = n;
        } else {
            auto [qp, qec] = std::from_chars(den.data(), den.data() + den.size(), q_val);
            if (qec != std::errc{} || qp != den.data() + den.size()) return bad();
        }
        if (q_val == 0) return bad();
        value = static_cast<double>(p_val) / static_cast<double>(q_val);
    }
    if (!(value > 0.0) || !(value < 1.0))
        throw config_error("rate '" + text + "' must lie strictly between 0 and 1");
    return value;
}

long long ExperimentConfig::effective_budget() const {
    if (budget > 0) return budget;
    double scale = algorithm == Algorithm::SigCga ? 200.0 : 50.0;
    return static_cast<long long>(
        std::ceil(scale * n * (1.0 + std::log(static_cast<double>(n)))));
}

double ExperimentConfig::effective_chi() const {
    return chi > 0.0 ? chi : 1.0 / static_cast<double>(n);
}

long long ExperimentConfig::effective_nu() const { return nu > 0 ? nu : n; }

std::vector<int> ExperimentConfig::effective_targets() const {
    std::vector<int> ks = k_targets;
    if (ks.empty()) {
        ks.resize(static_cast<std::size_t>(n));
        for (int k = 1; k <= n; ++k) ks[static_cast<std::size_t>(k - 1)] = k;
        return ks;
    }
    std::sort(ks.begin(), ks.end());
    ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
    return ks;
}

void ExperimentConfig::validate() const {
    if (n < 1) throw config_error("config: n must be at least 1");
    if (runs < 1) throw config_error("config: runs must be at least 1");
    if (budget < 0) throw config_error("config: budget cannot be negative");
    for (int k : k_targets)
        if (k < 1 || k > n) throw config_error("config: k targets must lie in 1..n");
    if (algorithm == Algorithm::EaFixed) {
        double c = effective_chi();
        if (!(c > 0.0) || !(c < 1.0))
            throw config_error("config: chi must lie strictly between 0 and 1");
    }
    if (algorithm == Algorithm::EaSelfAdjusting) self_adjust.validate(n);
}

namespace {

nlohmann::json config_json(const ExperimentConfig& cfg) {
    nlohmann::json j;
    j["algorithm"] = algorithm_tag(cfg.algorithm);
    j["n"] = cfg.n;
    j["runs"] = cfg.runs;
    j["budget"] = cfg.budget;
    j["seed"] = cfg.seed;
    if (cfg.k_targets.empty())
        j["k_targets"] = "all";
    else
        j["k_targets"] = cfg.k_targets;
    j["record_trace"] = cfg.record_trace;
    switch (cfg.algorithm) {
        case Algorithm::EaFixed:
            j["chi"] = cfg.chi;
            break;
        case Algorithm::EaSelfAdjusting:
            j["self_adjust"] = {{"a", cfg.self_adjust.a},
                                {"b", cfg.self_adjust.b},
                                {"chi0", cfg.self_adjust.chi0},
                                {"chi_max", cfg.self_adjust.chi_max},
                                {"min_exponent", cfg.self_adjust.min_exponent},
                                {"gamma", cfg.self_adjust.gamma}};
            break;
        case Algorithm::SigCga:
            j["epsilon"] = cfg.epsilon;
            j["nu"] = cfg.nu;
            break;
        default:
            break;
    }
    return j;
}

}  // namespace

std::string config_to_json(const ExperimentConfig& cfg) { return config_json(cfg).dump(2); }

ExperimentConfig config_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw config_error(std::string("config: ") + e.what());
    }
    if (!j.is_object()) throw config_error("config: top level must be an object");

    auto need = [&](const char* key) -> const nlohmann::json& {
        auto it = j.find(key);
        if (it == j.end()) throw config_error(std::string("config: missing field '") + key + "'");
        return *it;
    };
    auto as_int = [](const nlohmann::json& v, const char* key) -> long long {
        if (!v.is_number_integer())
            throw config_error(std::string("config: field '") + key + "' must be an integer");
        return v.get<long long>();
    };
    auto as_double = [](const nlohmann::json& v, const char* key) -> double {
        if (!v.is_number())
            throw config_error(std::string("config: field '") + key + "' must be a number");
        return v.get<double>();
    };

    ExperimentConfig cfg;
    const auto& alg = need("algorithm");
    if (!alg.is_string()) throw config_error("config: field 'algorithm' must be a string");
    cfg.algorithm = algorithm_from_tag(alg.get<std::string>());
    cfg.n = static_cast<int>(as_int(need("n"), "n"));
    cfg.runs = as_int(need("runs"), "runs");
    const auto& sd = need("seed");
    if (!sd.is_number_integer() || (sd.is_number_integer() && !sd.is_number_unsigned() &&
                                    sd.get<long long>() < 0))
        throw config_error("config: field 'seed' must be a non-negative integer");
    cfg.seed = sd.get<std::uint64_t>();

    std::vector<std::string> allowed = {"algorithm", "n", "runs", "budget",
                                        "seed",      "k_targets", "record_trace"};
    switch (cfg.algorithm) {
        case Algorithm::EaFixed: allowed.push_back("chi"); break;
        case Algorithm::EaSelfAdjusting: allowed.push_back("self_adjust"); break;
        case Algorithm::SigCga:
            allowed.push_back("epsilon");
            allowed.push_back("nu");
            break;
        default: break;
    }
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
            throw config_error("config: unknown field '" + key + "'");
    }

    if (auto it = j.find("budget"); it != j.end()) cfg.budget = as_int(*it, "budget");
    if (auto it = j.find("record_trace"); it != j.end()) {
        if (!it->is_boolean()) throw config_error("config: field 'record_trace' must be a boolean");
        cfg.record_trace = it->get<bool>();
    }
    if (auto it = j.find("k_targets"); it != j.end()) {
        if (it->is_string()) {
            if (it->get<std::string>() != "all")
                throw config_error("config: k_targets must be \"all\" or a list of integers");
        } else if (it->is_array()) {
            for (const auto& v : *it)
                cfg.k_targets.push_back(static_cast<int>(as_int(v, "k_targets")));
        } else {
            throw config_error("config: k_targets must be \"all\" or a list of integers");
        }
    }
    if (auto it = j.find("chi"); it != j.end()) {
        if (it->is_string())
            cfg.chi = parse_rate(it->get<std::string>(), cfg.n);
        else
            cfg.chi = as_double(*it, "chi");
    }
    if (auto it = j.find("epsilon"); it != j.end()) cfg.epsilon = as_double(*it, "epsilon");
    if (auto it = j.find("nu"); it != j.end()) cfg.nu = as_int(*it, "nu");
    if (auto it = j.find("self_adjust"); it != j.end()) {
        if (!it->is_object()) throw config_error("config: field 'self_adjust' must be an object");
        for (const auto& [key, value] : it->items()) {
            double v = as_double(value, key.c_str());
            if (key == "a")
                cfg.self_adjust.a = v;
            else if (key == "b")
                cfg.self_adjust.b = v;
            else if (key == "chi0")
                cfg.self_adjust.chi0 = v;
            else if (key == "chi_max")
                cfg.self_adjust.chi_max = v;
            else if (key == "min_exponent")
                cfg.self_adjust.min_exponent = v;
            else if (key == "gamma")
                cfg.self_adjust.gamma = v;
            else
                throw config_error("config: unknown field 'self_adjust." + key + "'");
        }
    }
    cfg.validate();
    return cfg;
}

std::uint64_t config_hash(const ExperimentConfig& cfg) {
    return fnv1a64_str(config_json(cfg).dump().c_str());
}

std::string config_hash_hex(const ExperimentConfig& cfg) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(config_hash(cfg)));
    return buf;
}

std::uint64_t run_stream_id(Algorithm algorithm, long long run_index) {
    return fnv1a64_str(algorithm_tag(algorithm)) ^ static_cast<std::uint64_t>(run_index);
}

namespace {

struct PerRun {
    std::vector<long long> hit_it;
    std::vector<long long> hit_ev;
    std::vector<PrefixStep> trace;
};

PerRun execute_one_run(const ExperimentConfig& cfg, long long run_index,
                       const std::vector<int>& ks, long long budget) {
    RngStream rng(cfg.seed, run_stream_id(cfg.algorithm, run_index));
    FixedTargetRecord rec(cfg.n, budget);
    PerRun out;
    const int max_k = ks.back();

    auto note = [&](const TraceEvent& ev, int prev_prefix) {
        rec.record(ev);
        if (cfg.record_trace && ev.prefix_len_after > prev_prefix)
            out.trace.push_back({ev.iteration, ev.evaluations, ev.prefix_len_after});
    };

    if (cfg.algorithm == Algorithm::SigCga) {
        SigCgaState st(cfg.n, cfg.epsilon, cfg.effective_nu(), budget);
        TraceEvent ev0;
        note(ev0, -1);
        int prefix = 0;
        while (prefix < max_k && st.iteration() < budget) {
            TraceEvent ev = sig_cga_step(st, rng);
            note(ev, prefix);
            prefix = ev.prefix_len_after;
        }
    } else {
        double chi0 = cfg.algorithm == Algorithm::EaFixed ? cfg.effective_chi()
                      : cfg.algorithm == Algorithm::EaSelfAdjusting ? cfg.self_adjust.chi0
                                                                    : 0.5;
        EaState st = EaState::init(cfg.n, chi0, rng);
        TraceEvent ev0;
        ev0.chi_after = st.chi;
        ev0.prefix_len_after = st.prefix_len;
        note(ev0, -1);
        while (st.prefix_len < max_k && st.iteration < budget) {
            int prev = st.prefix_len;
            TraceEvent ev;
            switch (cfg.algorithm) {
                case Algorithm::EaFixed:
                    ev = ea_fixed_step(st, cfg.effective_chi(), rng);
                    break;
                case Algorithm::EaAdjusting:
                    ev = ea_adjusting_step(st, rng);
                    break;
                default:
                    ev = ea_self_adjusting_step(st, cfg.self_adjust, rng);
                    break;
            }
            note(ev, prev);
        }
    }

    out.hit_it.reserve(ks.size());
    out.hit_ev.reserve(ks.size());
    for (int k : ks) {
        bool hit = rec.is_hit(k);
        out.hit_it.push_back(hit ? rec.hit_iteration(k) : -1);
        out.hit_ev.push_back(hit ? rec.hit_evaluations(k) : -1);
    }
    return out;
}

void aggregate(RunSummary& s) {
    std::size_t targets = s.ks.size();
    long long runs = s.config.runs;
    s.mean.assign(targets, kNan);
    s.median.assign(targets, kNan);
    s.stddev.assign(targets, kNan);
    s.censored.assign(targets, 0);
    std::vector<double> values;
    for (std::size_t idx = 0; idx < targets; ++idx) {
        values.clear();
        for (long long r = 0; r < runs; ++r) {
            long long v = s.hit_iterations[idx][static_cast<std::size_t>(r)];
            if (v >= 0)
                values.push_back(static_cast<double>(v));
            else
                ++s.censored[idx];
        }
        if (values.empty()) continue;
        double sum = 0.0;
        for (double v : values) sum += v;
        double mean = sum / static_cast<double>(values.size());
        s.mean[idx] = mean;
        double sq = 0.0;
        for (double v : values) sq += (v - mean) * (v - mean);
        s.stddev[idx] =
            values.size() > 1 ? std::sqrt(sq / static_cast<double>(values.size() - 1)) : 0.0;
        std::sort(values.begin(), values.end());
        std::size_t half = values.size() / 2;
        s.median[idx] = values.size() % 2 == 1 ? values[half]
                                               : 0.5 * (values[half - 1] + values[half]);
    }
}

}  // namespace

RunSummary run_experiment(const ExperimentConfig& cfg, int jobs) {
    cfg.validate();
    if (jobs < 1) throw config_error("run_experiment: jobs must be at least 1");
    std::vector<int> ks = cfg.effective_targets();
    long long budget = cfg.effective_budget();

    // a throwaway state surfaces bad algorithm parameters before any thread starts
    if (cfg.algorithm == Algorithm::SigCga)
        SigCgaState probe(cfg.n, cfg.epsilon, cfg.effective_nu(), budget);

    std::vector<PerRun> results(static_cast<std::size_t>(cfg.runs));
    int workers = static_cast<int>(std::min<long long>(jobs, cfg.runs));
    if (workers <= 1) {
        for (long long r = 0; r < cfg.runs; ++r)
            results[static_cast<std::size_t>(r)] = execute_one_run(cfg, r, ks, budget);
    } else {
        std::atomic<long long> next{0};
        std::atomic<bool> abort{false};
        std::exception_ptr first_error;
        std::mutex error_mu;
        auto body = [&]() {
            for (;;) {
                long long r = next.fetch_add(1);
                if (r >= cfg.runs || abort.load()) return;
                try {
                    results[static_cast<std::size_t>(r)] = execute_one_run(cfg, r, ks, budget);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mu);
                    if (!first_error) first_error = std::current_exception();
                    abort.store(true);
                    return;
                }
            }
        };
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(workers));
        for (int w = 0; w < workers; ++w) pool.emplace_back(body);
        for (auto& t : pool) t.join();
        if (first_error) std::rethrow_exception(first_error);
    }

    RunSummary s;
    s.config = cfg;
    s.ks = std::move(ks);
    std::size_t targets = s.ks.size();
    s.hit_iterations.assign(targets, std::vector<long long>(static_cast<std::size_t>(cfg.runs)));
    s.hit_evaluations.assign(targets, std::vector<long long>(static_cast<std::size_t>(cfg.runs)));
    for (long long r = 0; r < cfg.runs; ++r) {
        const PerRun& pr = results[static_cast<std::size_t>(r)];
        for (std::size_t idx = 0; idx < targets; ++idx) {
            s.hit_iterations[idx][static_cast<std::size_t>(r)] = pr.hit_it[idx];
            s.hit_evaluations[idx][static_cast<std::size_t>(r)] = pr.hit_ev[idx];
        }
    }
    if (cfg.record_trace) {
        s.traces.resize(static_cast<std::size_t>(cfg.runs));
        for (long long r = 0; r < cfg.runs; ++r)
            s.traces[static_cast<std::size_t>(r)] = std::move(results[static_cast<std::size_t>(r)].trace);
    }
    aggregate(s);
    return s;
}

double aggregation_disagreement(const RunSummary& s) {
    auto rel = [](double a, double b) {
        bool na = std::isnan(a), nb = std::isnan(b);
        if (na && nb) return 0.0;
        if (na != nb) return std::numeric_limits<double>::infinity();
        return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
    };
    double worst = 0.0;
    std::vector<double> values;
    for (std::size_t idx = 0; idx < s.ks.size(); ++idx) {
        long long count = 0;
        double mean = 0.0, m2 = 0.0;
        values.clear();
        long long censored = 0;
        for (long long v : s.hit_iterations[idx]) {
            if (v < 0) {
                ++censored;
                continue;
            }
            double x = static_cast<double>(v);
            values.push_back(x);
            ++count;
            double d = x - mean;
            mean += d / static_cast<double>(count);
            m2 += d * (x - mean);
        }
        double mean2 = count > 0 ? mean : kNan;
        double std2 = count > 1 ? std::sqrt(m2 / static_cast<double>(count - 1))
                                : (count == 1 ? 0.0 : kNan);
        double med2 = kNan;
        if (count > 0) {
            std::size_t half = values.size() / 2;
            std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(half),
                             values.end());
            med2 = values[half];
            if (values.size() % 2 == 0) {
                auto below = std::max_element(values.begin(),
                                              values.begin() + static_cast<std::ptrdiff_t>(half));
                med2 = 0.5 * (med2 + *below);
            }
        }
        if (censored != s.censored[idx]) return std::numeric_limits<double>::infinity();
        worst = std::max({worst, rel(s.mean[idx], mean2), rel(s.stddev[idx], std2),
                          rel(s.median[idx], med2)});
    }
    return worst;
}

long long furthest_win(const std::vector<int>& ks, const std::vector<long long>& hit_a,
                       const std::vector<long long>& hit_b) {
    if (ks.size() != hit_a.size() || ks.size() != hit_b.size())
        throw config_error("furthest_win: vectors must align with the target list");
    long long last = -1;
    for (std::size_t idx = 0; idx < ks.size(); ++idx) {
        long long a = hit_a[idx], b = hit_b[idx];
        if (a < 0 && b < 0) break;  // nothing is known past this point
        bool earlier = a >= 0 && (b < 0 || a < b);
        if (earlier) last = ks[idx];
    }
    return last;
}

TurningPoint compare_turning_points(const ExperimentConfig& cfg_a, const ExperimentConfig& cfg_b,
                                    int jobs, bool paired) {
    cfg_a.validate();
    cfg_b.validate();
    if (cfg_a.n != cfg_b.n || cfg_a.runs != cfg_b.runs || cfg_a.seed != cfg_b.seed)
        throw config_error("turning point: configs must share n, runs, and seed");
    if (cfg_a.effective_targets() != cfg_b.effective_targets())
        throw config_error("turning point: configs must share k targets");

    ExperimentConfig second = cfg_b;
    if (!paired) second.seed ^= fnv1a64_str("unpaired-replicate");
    RunSummary sa = run_experiment(cfg_a, jobs);
    RunSummary sb = run_experiment(second, jobs);

    TurningPoint tp;
    tp.n = cfg_a.n;
    tp.k_star.resize(static_cast<std::size_t>(cfg_a.runs));
    std::vector<long long> col_a(sa.ks.size()), col_b(sa.ks.size());
    double sum = 0.0;
    for (long long r = 0; r < cfg_a.runs; ++r) {
        for (std::size_t idx = 0; idx < sa.ks.size(); ++idx) {
            col_a[idx] = sa.hit_iterations[idx][static_cast<std::size_t>(r)];
            col_b[idx] = sb.hit_iterations[idx][static_cast<std::size_t>(r)];
        }
        long long k = furthest_win(sa.ks, col_a, col_b);
        tp.k_star[static_cast<std::size_t>(r)] = k;
        if (k > 0) {
            ++tp.counted;
            sum += static_cast<double>(k) / static_cast<double>(tp.n);
        }
    }
    if (tp.counted == 0) {
        tp.mean_relative = kNan;
        tp.stddev_relative = kNan;
        return tp;
    }
    tp.mean_relative = sum / static_cast<double>(tp.counted);
    double sq = 0.0;
    for (long long k : tp.k_star)
        if (k > 0) {
            double d = static_cast<double>(k) / static_cast<double>(tp.n) - tp.mean_relative;
            sq += d * d;
        }
    tp.stddev_relative =
        tp.counted > 1 ? std::sqrt(sq / static_cast<double>(tp.counted - 1)) : 0.0;
    return tp;
}

void write_raw_csv(const std::filesystem::path& path, const RunSummary& s) {
    std::ofstream out = open_for_write(path);
    out << "algo,n,run_index,k,hit_iteration,hit_evaluations\n";
    const char* tag = algorithm_tag(s.config.algorithm);
    for (long long r = 0; r < s.config.runs; ++r) {
        for (std::size_t idx = 0; idx < s.ks.size(); ++idx) {
            out << tag << ',' << s.config.n << ',' << r << ',' << s.ks[idx] << ',';
            long long it = s.hit_iterations[idx][static_cast<std::size_t>(r)];
            if (it >= 0) out << it;
            out << ',';
            long long ev = s.hit_evaluations[idx][static_cast<std::size_t>(r)];
            if (ev >= 0) out << ev;
            out << '\n';
        }
    }
    finish_write(out, path);
}

void write_summary_csv(const std::filesystem::path& path, const RunSummary& s) {
    std::ofstream out = open_for_write(path);
    out << "algo,n,k,mean,median,stddev,censored\n";
    const char* tag = algorithm_tag(s.config.algorithm);
    for (std::size_t idx = 0; idx < s.ks.size(); ++idx) {
        out << tag << ',' << s.config.n << ',' << s.ks[idx] << ',' << format_double(s.mean[idx])
            << ',' << format_double(s.median[idx]) << ',' << format_double(s.stddev[idx]) << ','
            << s.censored[idx] << '\n';
    }
    finish_write(out, path);
}

void write_turning_csv(const std::filesystem::path& path, const TurningPoint& tp) {
    std::ofstream out = open_for_write(path);
    out << "run_index,k_star,relative\n";
    for (std::size_t r = 0; r < tp.k_star.size(); ++r) {
        out << r << ',';
        long long k = tp.k_star[r];
        if (k > 0)
            out << k << ',' << format_double(static_cast<double>(k) / static_cast<double>(tp.n));
        else
            out << ',';
        out << '\n';
    }
    finish_write(out, path);
}

void write_config_sidecar(const std::filesystem::path& path, const ExperimentConfig& cfg) {
    std::ofstream out = open_for_write(path);
    nlohmann::json j;
    j["config"] = config_json(cfg);
    j["config_hash"] = config_hash_hex(cfg);
    out << j.dump(2) << '\n';
    finish_write(out, path);
}

std::vector<SummaryRow> parse_summary_csv(const std::filesystem::path& path) {
    std::ifstream in = open_for_read(path);
    std::string line;
    if (!std::getline(in, line) || line != "algo,n,k,mean,median,stddev,censored")
        throw runtime_failure("summary csv: bad header in " + path.string());
    std::vector<SummaryRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto f = split_csv_line(line);
        if (f.size() != 7) throw runtime_failure("summary csv: bad row '" + line + "'");
        SummaryRow row;
        row.algo = f[0];
        row.n = static_cast<int>(parse_ll_field(f[1], "n"));
        row.k = static_cast<int>(parse_ll_field(f[2], "k"));
        row.mean = parse_double_field(f[3]);
        row.median = parse_double_field(f[4]);
        row.stddev = parse_double_field(f[5]);
        row.censored = parse_ll_field(f[6], "censored");
        rows.push_back(std::move(row));
    }
    return rows;
}

RunSummary summary_from_raw_csv(const std::filesystem::path& path, const ExperimentConfig& cfg) {
    cfg.validate();
    std::ifstream in = open_for_read(path);
    std::string line;
    if (!std::getline(in, line) || line != "algo,n,run_index,k,hit_iteration,hit_evaluations")
        throw runtime_failure("raw csv: bad header in " + path.string());

    RunSummary s;
    s.config = cfg;
    s.ks = cfg.effective_targets();
    s.hit_iterations.assign(s.ks.size(),
                            std::vector<long long>(static_cast<std::size_t>(cfg.runs), -1));
    s.hit_evaluations.assign(s.ks.size(),
                             std::vector<long long>(static_cast<std::size_t>(cfg.runs), -1));
    const char* tag = algorithm_tag(cfg.algorithm);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto f = split_csv_line(line);
        if (f.size() != 6) throw runtime_failure("raw csv: bad row '" + line + "'");
        if (f[0] != tag) throw runtime_failure("raw csv: row algorithm '" + f[0] + "' differs");
        if (parse_ll_field(f[1], "n") != cfg.n)
            throw runtime_failure("raw csv: row n differs from the config");
        long long r = parse_ll_field(f[2], "run_index");
        if (r < 0 || r >= cfg.runs) throw runtime_failure("raw csv: run_index out of range");
        int k = static_cast<int>(parse_ll_field(f[3], "k"));
        auto pos = std::lower_bound(s.ks.begin(), s.ks.end(), k);
        if (pos == s.ks.end() || *pos != k)
            throw runtime_failure("raw csv: k is not one of the config's targets");
        std::size_t idx = static_cast<std::size_t>(pos - s.ks.begin());
        s.hit_iterations[idx][static_cast<std::size_t>(r)] =
            f[4].empty() ? -1 : parse_ll_field(f[4], "hit_iteration");
        s.hit_evaluations[idx][static_cast<std::size_t>(r)] =
            f[5].empty() ? -1 : parse_ll_field(f[5], "hit_evaluations");
    }
    aggregate(s);
    return s;
}

}  // namespace binval
