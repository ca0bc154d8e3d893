#include <charconv>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "binval/drift.hpp"
#include "binval/harness.hpp"

namespace fs = std::filesystem;
using namespace binval;

namespace {

struct CommonFlags {
    std::string config_path;
    std::string algo;
    int n = 0;
    long long runs = 0;
    long long budget = 0;
    std::uint64_t seed = 0;
    bool nondeterministic = false;
    std::string k_list;
    bool trace = false;
    std::string chi;
    double epsilon = 13.0;
    long long nu = 0;
    SelfAdjustParams sa;
    std::string out;
    int jobs = 1;
};

bool flag_given(const CLI::App* cmd, const std::string& name) {
    const CLI::Option* opt = cmd->get_option_no_throw(name);
    return opt != nullptr && opt->count() > 0;
}

void add_output_flags(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--out", f.out,
                    "output root; results land in <out>/<config-hash>/ "
                    "(default: $BINVAL_OUT or ./out)");
}

void add_seed_flags(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--seed", f.seed, "base seed shared by every run");
    cmd->add_flag("--nondeterministic", f.nondeterministic,
                  "draw a fresh seed and report it on stderr");
}

void add_experiment_flags(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--config", f.config_path, "JSON config file; flags override its fields");
    cmd->add_option("--n", f.n, "problem size in bits");
    cmd->add_option("--runs", f.runs, "independent replicate count");
    cmd->add_option("--budget", f.budget, "iteration budget per run (0 = default)");
    cmd->add_option("--k", f.k_list, "targets: comma-separated list or 'all'");
    cmd->add_flag("--trace", f.trace, "record every prefix advance per run");
    cmd->add_option("--chi", f.chi, "mutation rate: decimal, p/q, or 1/n");
    cmd->add_option("--epsilon", f.epsilon, "significance factor");
    cmd->add_option("--nu", f.nu, "frequency margin parameter (0 = n)");
    cmd->add_option("--sa-a", f.sa.a, "rate gain on acceptance");
    cmd->add_option("--sa-b", f.sa.b, "rate loss on rejection");
    cmd->add_option("--sa-chi0", f.sa.chi0, "initial rate");
    cmd->add_option("--sa-chi-max", f.sa.chi_max, "rate ceiling");
    cmd->add_option("--sa-min-exponent", f.sa.min_exponent, "rate floor exponent");
    cmd->add_option("--sa-gamma", f.sa.gamma, "phase-fraction parameter");
    cmd->add_option("--jobs", f.jobs, "worker thread bound");
    add_seed_flags(cmd, f);
    add_output_flags(cmd, f);
}

std::vector<int> parse_int_list(const std::string& text, const char* flag) {
    std::vector<int> values;
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t comma = text.find(',', start);
        std::string item =
            text.substr(start, comma == std::string::npos ? comma : comma - start);
        int v = 0;
        auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
        if (ec != std::errc{} || p != item.data() + item.size())
            throw config_error(std::string(flag) + ": bad integer '" + item + "'");
        values.push_back(v);
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return values;
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> items;
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t comma = text.find(',', start);
        items.push_back(text.substr(start, comma == std::string::npos ? comma : comma - start));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return items;
}

std::string read_config_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw config_error("--config: cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::string read_emitted_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw runtime_failure("cannot read back " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::uint64_t fresh_seed() {
    std::random_device rd;
    return (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
}

// Seed precedence: explicit flag, then a config file's value, and otherwise
// the caller must have opted into irreproducibility, in which case the drawn
// seed is reported so the invocation can still be replayed.
std::uint64_t resolve_seed(const CLI::App* cmd, const CommonFlags& f, bool have_file_seed,
                           std::uint64_t file_seed) {
    if (flag_given(cmd, "--seed")) return f.seed;
    if (have_file_seed) return file_seed;
    if (!f.nondeterministic)
        throw config_error("a --seed is required unless --nondeterministic is given");
    std::uint64_t s = fresh_seed();
    std::fprintf(stderr, "seed %llu\n", static_cast<unsigned long long>(s));
    return s;
}

ExperimentConfig resolve_config(const CLI::App* cmd, const CommonFlags& f) {
    ExperimentConfig cfg;
    bool from_file = !f.config_path.empty();
    if (from_file) cfg = config_from_json(read_config_file(f.config_path));

    if (flag_given(cmd, "--algo")) cfg.algorithm = algorithm_from_tag(f.algo);
    if (flag_given(cmd, "--n")) cfg.n = f.n;
    if (flag_given(cmd, "--runs")) cfg.runs = f.runs;
    if (flag_given(cmd, "--budget")) cfg.budget = f.budget;
    if (flag_given(cmd, "--trace")) cfg.record_trace = true;
    if (flag_given(cmd, "--k")) {
        if (f.k_list == "all")
            cfg.k_targets.clear();
        else
            cfg.k_targets = parse_int_list(f.k_list, "--k");
    }
    if (flag_given(cmd, "--chi")) {
        try {
            cfg.chi = parse_rate(f.chi, cfg.n);
        } catch (const config_error& e) {
            throw config_error(std::string("--chi: ") + e.what());
        }
    }
    if (flag_given(cmd, "--epsilon")) cfg.epsilon = f.epsilon;
    if (flag_given(cmd, "--nu")) cfg.nu = f.nu;
    for (const char* flag : {"--sa-a", "--sa-b", "--sa-chi0", "--sa-chi-max",
                             "--sa-min-exponent", "--sa-gamma"})
        if (flag_given(cmd, flag)) {
            cfg.self_adjust = f.sa;
            break;
        }
    cfg.seed = resolve_seed(cmd, f, from_file, cfg.seed);
    cfg.validate();
    return cfg;
}

fs::path out_root(const CommonFlags& f) {
    if (!f.out.empty()) return f.out;
    if (const char* env = std::getenv("BINVAL_OUT"); env && *env) return env;
    return "out";
}

fs::path make_result_dir(const CommonFlags& f, const std::string& hash_hex) {
    fs::path dir = out_root(f) / hash_hex;
    fs::create_directories(dir);
    return dir;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// Multi-part outputs go through a temp file in the same directory followed by
// a rename, so a failed invocation never leaves a partial file under the
// final name.
void write_atomically(const fs::path& path, const std::string& content) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw runtime_failure("cannot open " + tmp.string() + " for writing");
        out << content;
        out.flush();
        if (!out) throw runtime_failure("write to " + tmp.string() + " failed");
    }
    fs::rename(tmp, path);
}

int cmd_run(const CLI::App* cmd, const CommonFlags& f) {
    ExperimentConfig cfg = resolve_config(cmd, f);
    RunSummary s = run_experiment(cfg, f.jobs);
    fs::path dir = make_result_dir(f, config_hash_hex(cfg));
    write_raw_csv(dir / "raw.csv", s);
    write_summary_csv(dir / "summary.csv", s);
    write_config_sidecar(dir / "config.json", cfg);
    std::cout << dir.string() << "\n";
    return 0;
}

int cmd_sweep(const CLI::App* cmd, const CommonFlags& f, const std::string& algos_list,
              const std::string& ns_list) {
    if (!f.config_path.empty())
        throw config_error("sweep: give the grid through flags, not --config");
    if (algos_list.empty() || ns_list.empty())
        throw config_error("sweep: --algos and --ns must both be non-empty");
    std::vector<std::string> algos = split_list(algos_list);
    std::vector<int> ns = parse_int_list(ns_list, "--ns");

    std::uint64_t seed = resolve_seed(cmd, f, false, 0);

    struct Point {
        ExperimentConfig cfg;
        RunSummary summary;
    };
    std::vector<Point> points;
    std::uint64_t sweep_hash = 1469598103934665603ULL;
    for (const std::string& algo : algos) {
        Algorithm algorithm = algorithm_from_tag(algo);
        for (int n : ns) {
            ExperimentConfig cfg;
            cfg.algorithm = algorithm;
            cfg.n = n;
            cfg.runs = f.runs;
            cfg.budget = f.budget;
            cfg.seed = seed;
            if (flag_given(cmd, "--k") && f.k_list != "all")
                cfg.k_targets = parse_int_list(f.k_list, "--k");
            if (flag_given(cmd, "--chi") && algorithm == Algorithm::EaFixed) {
                // the 1/n form resolves against each grid point's own n
                try {
                    cfg.chi = parse_rate(f.chi, n);
                } catch (const config_error& e) {
                    throw config_error(std::string("--chi: ") + e.what());
                }
            }
            if (flag_given(cmd, "--epsilon")) cfg.epsilon = f.epsilon;
            if (flag_given(cmd, "--nu")) cfg.nu = f.nu;
            cfg.self_adjust = f.sa;
            cfg.validate();
            sweep_hash ^= config_hash(cfg);
            sweep_hash *= 1099511628211ULL;
            points.push_back({cfg, {}});
        }
    }

    // run everything before emitting anything, so a failing point cannot
    // leave a partial sweep on disk
    for (Point& p : points) p.summary = run_experiment(p.cfg, f.jobs);

    fs::path dir = make_result_dir(f, "sweep-" + hex64(sweep_hash));
    std::ostringstream merged;
    merged << "algo,n,k,mean,median,stddev,censored\n";
    nlohmann::json sidecar;
    sidecar["points"] = nlohmann::json::array();
    for (const Point& p : points) {
        std::string name = std::string("summary-") + algorithm_tag(p.cfg.algorithm) + "-n" +
                           std::to_string(p.cfg.n) + ".csv";
        write_summary_csv(dir / name, p.summary);
        std::string body = read_emitted_file(dir / name);
        merged << body.substr(body.find('\n') + 1);
        nlohmann::json entry;
        entry["file"] = name;
        entry["config_hash"] = config_hash_hex(p.cfg);
        entry["config"] = nlohmann::json::parse(config_to_json(p.cfg));
        sidecar["points"].push_back(entry);
    }
    write_atomically(dir / "merged.csv", merged.str());
    write_atomically(dir / "sweep.json", sidecar.dump(2) + "\n");
    std::cout << dir.string() << "\n";
    return 0;
}

int cmd_turning(const CLI::App* cmd, const CommonFlags& f, const std::string& algo_a,
                const std::string& algo_b, bool unpaired) {
    ExperimentConfig base = resolve_config(cmd, f);
    ExperimentConfig cfg_a = base;
    cfg_a.algorithm = algorithm_from_tag(algo_a);
    cfg_a.validate();
    ExperimentConfig cfg_b = base;
    cfg_b.algorithm = algorithm_from_tag(algo_b);
    cfg_b.validate();

    TurningPoint tp = compare_turning_points(cfg_a, cfg_b, f.jobs, !unpaired);

    std::uint64_t pair_hash =
        config_hash(cfg_a) ^ (config_hash(cfg_b) * 1099511628211ULL) ^ (unpaired ? 1 : 0);
    fs::path dir = make_result_dir(f, "turning-" + hex64(pair_hash));
    write_turning_csv(dir / "turning.csv", tp);
    nlohmann::json sidecar;
    sidecar["config_a"] = nlohmann::json::parse(config_to_json(cfg_a));
    sidecar["config_b"] = nlohmann::json::parse(config_to_json(cfg_b));
    sidecar["paired"] = !unpaired;
    sidecar["counted_pairs"] = tp.counted;
    if (tp.counted > 0) {
        sidecar["mean_relative"] = tp.mean_relative;
        sidecar["stddev_relative"] = tp.stddev_relative;
    }
    write_atomically(dir / "turning.json", sidecar.dump(2) + "\n");
    std::cout << dir.string() << "\n";
    if (tp.counted > 0)
        std::cout << "mean k*/n " << format_double(tp.mean_relative) << " over " << tp.counted
                  << " of " << tp.k_star.size() << " pairs\n";
    else
        std::cout << "turning point undefined in all " << tp.k_star.size() << " pairs\n";
    return 0;
}

int cmd_drift(const CLI::App* cmd, const CommonFlags& f, const std::string& ns_list,
              long long states) {
    std::vector<int> ns = parse_int_list(ns_list, "--ns");
    std::uint64_t seed = resolve_seed(cmd, f, false, 0);
    std::vector<DriftGridOutcome> grid = run_linear_drift_grid(ns, states, seed);

    nlohmann::json ident;
    ident["ns"] = ns;
    ident["states"] = states;
    ident["seed"] = seed;
    fs::path dir = make_result_dir(f, "drift-" + hex64(fnv1a64_str(ident.dump().c_str())));
    std::ostringstream csv;
    csv << "n,k,chi,states,violations,worst_slack\n";
    long long total_violations = 0;
    for (const DriftGridOutcome& o : grid) {
        csv << o.n << ',' << o.k << ',' << format_double(o.chi) << ',' << o.states << ','
            << o.violations << ',' << format_double(o.worst_slack) << '\n';
        total_violations += o.violations;
    }
    write_atomically(dir / "drift.csv", csv.str());
    std::cout << dir.string() << "\n";
    std::cout << grid.size() << " grid points, " << total_violations << " violations\n";
    return 0;
}

int cmd_verify(const CLI::App* cmd, const CommonFlags& f, const std::string& ns_list,
               long long states, bool corrupt_weights, long long samples,
               long long max_states, int combined_n, int combined_r) {
    std::vector<int> ns = parse_int_list(ns_list, "--ns");
    std::uint64_t seed = resolve_seed(cmd, f, false, 0);

    bool all_pass = true;
    std::vector<DriftGridOutcome> grid = run_linear_drift_grid(ns, states, seed, corrupt_weights);
    for (const DriftGridOutcome& o : grid) {
        if (o.violations == 0) {
            std::cout << "pass exact-drift n=" << o.n << " k=" << o.k
                      << " chi=" << format_double(o.chi)
                      << " worst_slack=" << format_double(o.worst_slack) << "\n";
        } else {
            all_pass = false;
            std::cout << "FAIL exact-drift n=" << o.n << " k=" << o.k
                      << " chi=" << format_double(o.chi) << ": drift >= chi*g(x)/(4e) violated at "
                      << o.violations << "/" << o.states << " states, worst slack "
                      << format_double(o.worst_slack) << "\n";
        }
    }

    if (combined_r > 0 && max_states > 0) {
        SelfAdjustParams params;
        CombinedPotential cp{PhasePotential(combined_r)};
        CombinedDriftOutcome out = combined_drift_on_phase(combined_n, combined_r, params, cp,
                                                           samples, max_states, seed);
        double lower = out.mean - 2.326 * out.stderr_;
        if (lower > 0.0) {
            std::cout << "pass combined-drift n=" << combined_n << " r=" << combined_r
                      << " mean=" << format_double(out.mean)
                      << " stderr=" << format_double(out.stderr_)
                      << " states=" << out.states_used << "\n";
        } else {
            all_pass = false;
            std::cout << "FAIL combined-drift n=" << combined_n << " r=" << combined_r << ": ";
            if (out.states_used == 0)
                std::cout << "no states sampled in that phase\n";
            else
                std::cout << "mean - 2.326*stderr = " << format_double(lower)
                          << " <= 0 (states=" << out.states_used << ")\n";
        }
    }
    return all_pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"fixed-target experiments for search heuristics on BinVal"};
    app.require_subcommand(1);

    CommonFlags run_f, sweep_f, turning_f, drift_f, verify_f;

    CLI::App* run = app.add_subcommand("run", "execute one experiment and write its tables");
    run->add_option("--algo", run_f.algo,
                    "ea_fixed | ea_adjusting | ea_self_adjusting | sig_cga");
    add_experiment_flags(run, run_f);

    CLI::App* sweep =
        app.add_subcommand("sweep", "run a grid over algorithms and sizes, merge the summaries");
    std::string sweep_algos, sweep_ns;
    sweep->add_option("--algos", sweep_algos, "comma-separated algorithm list");
    sweep->add_option("--ns", sweep_ns, "comma-separated problem sizes");
    add_experiment_flags(sweep, sweep_f);

    CLI::App* turning =
        app.add_subcommand("turning", "find the furthest target one algorithm reaches ahead of another");
    std::string algo_a = "ea_self_adjusting";
    std::string algo_b = "ea_fixed";
    bool unpaired = false;
    turning->add_option("--algo-a", algo_a, "side expected to win for small targets");
    turning->add_option("--algo-b", algo_b, "reference side");
    turning->add_flag("--unpaired", unpaired, "independent replicates instead of shared seeds");
    add_experiment_flags(turning, turning_f);

    CLI::App* drift = app.add_subcommand("drift", "emit the exact drift audit grid as CSV");
    std::string drift_ns = "8,10,12";
    long long drift_states = 500;
    drift->add_option("--ns", drift_ns, "sizes for the exact audit (each must be 4..14)");
    drift->add_option("--states", drift_states, "random states per grid point");
    add_seed_flags(drift, drift_f);
    add_output_flags(drift, drift_f);

    CLI::App* verify = app.add_subcommand("verify", "run the drift checks and report pass/fail");
    std::string verify_ns = "8,10,12";
    long long verify_states = 500;
    bool corrupt_weights = false;
    long long verify_samples = 2000;
    long long verify_max_states = 120;
    int combined_n = 64;
    int combined_r = 4;
    verify->add_option("--ns", verify_ns, "sizes for the exact audit (each must be 4..14)");
    verify->add_option("--states", verify_states, "random states per grid point");
    verify->add_flag("--corrupt-weights", corrupt_weights,
                     "invert the potential's weight slope; the audit must then fail");
    verify->add_option("--samples", verify_samples, "samples per state for the combined check");
    verify->add_option("--max-states", verify_max_states,
                       "state cap for the combined check (0 disables it)");
    verify->add_option("--combined-n", combined_n, "size for the combined check");
    verify->add_option("--combined-r", combined_r, "phase for the combined check (0 disables)");
    add_seed_flags(verify, verify_f);
    add_output_flags(verify, verify_f);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (app.got_subcommand(run)) return cmd_run(run, run_f);
        if (app.got_subcommand(sweep)) return cmd_sweep(sweep, sweep_f, sweep_algos, sweep_ns);
        if (app.got_subcommand(turning))
            return cmd_turning(turning, turning_f, algo_a, algo_b, unpaired);
        if (app.got_subcommand(drift)) return cmd_drift(drift, drift_f, drift_ns, drift_states);
        if (app.got_subcommand(verify))
            return cmd_verify(verify, verify_f, verify_ns, verify_states, corrupt_weights,
                              verify_samples, verify_max_states, combined_n, combined_r);
    } catch (const config_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const runtime_failure& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
