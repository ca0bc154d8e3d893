#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "binval/harness.hpp"

using namespace binval;
namespace fs = std::filesystem;

namespace {

struct CliResult {
    int code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

struct CliSandbox {
    fs::path dir;
    CliSandbox() {
        static int counter = 0;
        dir = fs::temp_directory_path() /
              ("binval-cli-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        fs::create_directories(dir);
    }
    ~CliSandbox() {
        std::error_code ec;
        fs::remove_all(dir, ec);
    }

    CliResult run(const std::string& args, const std::string& env_prefix = "") {
        fs::path out_file = dir / "stdout.txt";
        fs::path err_file = dir / "stderr.txt";
        std::string cmd = "cd '" + dir.string() + "' && " + env_prefix + " '" BINVAL_CLI_PATH
                          "' " + args + " > '" + out_file.string() + "' 2> '" +
                          err_file.string() + "'";
        int raw = std::system(cmd.c_str());
        CliResult r;
        r.code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
        r.out = slurp(out_file);
        r.err = slurp(err_file);
        return r;
    }

    // the directory the command printed as its first stdout line
    fs::path printed_dir(const CliResult& r) const {
        std::string first = r.out.substr(0, r.out.find('\n'));
        return dir / first;
    }
};

}  // namespace

TEST_CASE("cli run writes the same bytes the library writes") {
    CliSandbox box;
    CliResult r = box.run("run --algo ea_fixed --chi 1/n --n 64 --runs 3 --seed 7 --k 8,16");
    REQUIRE(r.code == 0);
    fs::path out_dir = box.printed_dir(r);
    REQUIRE(fs::exists(out_dir / "raw.csv"));
    REQUIRE(fs::exists(out_dir / "summary.csv"));
    REQUIRE(fs::exists(out_dir / "config.json"));

    ExperimentConfig cfg;
    cfg.algorithm = Algorithm::EaFixed;
    cfg.n = 64;
    cfg.runs = 3;
    cfg.seed = 7;
    cfg.k_targets = {8, 16};
    cfg.chi = parse_rate("1/n", 64);
    CHECK(out_dir.filename().string() == config_hash_hex(cfg));

    RunSummary s = run_experiment(cfg);
    write_raw_csv(box.dir / "expected_raw.csv", s);
    write_summary_csv(box.dir / "expected_summary.csv", s);
    CHECK(slurp(out_dir / "raw.csv") == slurp(box.dir / "expected_raw.csv"));
    CHECK(slurp(out_dir / "summary.csv") == slurp(box.dir / "expected_summary.csv"));

    nlohmann::json sidecar = nlohmann::json::parse(slurp(out_dir / "config.json"));
    CHECK(sidecar["config_hash"] == config_hash_hex(cfg));
    CHECK(sidecar["config"]["n"] == 64);

    // reruns and extra workers reproduce the files byte for byte
    CliResult again = box.run("run --algo ea_fixed --chi 1/n --n 64 --runs 3 --seed 7 --k 8,16"
                              " --jobs 4 --out second");
    REQUIRE(again.code == 0);
    CHECK(slurp(box.printed_dir(again) / "raw.csv") == slurp(out_dir / "raw.csv"));
}

TEST_CASE("cli configuration mistakes exit with code 2") {
    CliSandbox box;
    CliResult r = box.run("run --algo ea_fixed --chi 1.5 --n 64 --runs 3 --seed 7");
    CHECK(r.code == 2);
    CHECK(r.err.find("--chi") != std::string::npos);
    CHECK(r.err.find("1.5") != std::string::npos);

    CHECK(box.run("run --algo ea_fixed --n 64 --runs 0 --seed 7").code == 2);
    CHECK(box.run("run --algo ea_fixed --n 64 --runs 3").code == 2);
    CHECK(box.run("run --algo warm_restart --n 64 --runs 3 --seed 7").code == 2);
    CHECK(box.run("run --algo ea_fixed --n 64 --runs 3 --seed 7 --k 3,x").code == 2);
    CHECK(box.run("run --no-such-flag").code == 2);
    CHECK(box.run("").code == 2);
    CHECK(box.run("run --config missing.json --seed 1").code == 2);
    CHECK(box.run("run --algo sig_cga --n 16 --runs 1 --seed 1 --nu 2").code == 2);

    CHECK(box.run("--help").code == 0);
    CHECK(box.run("run --help").code == 0);
}

TEST_CASE("cli seed handling supports opt-in nondeterminism") {
    CliSandbox box;
    CliResult r = box.run("run --algo ea_fixed --n 16 --runs 2 --nondeterministic");
    REQUIRE(r.code == 0);
    CHECK(r.err.find("seed ") != std::string::npos);
}

TEST_CASE("cli output root comes from the flag or the environment") {
    CliSandbox box;
    CliResult r = box.run("run --algo ea_fixed --n 16 --runs 2 --seed 3",
                          "BINVAL_OUT=env_root");
    REQUIRE(r.code == 0);
    CHECK(r.out.rfind("env_root/", 0) == 0);
    CHECK(fs::exists(box.printed_dir(r) / "raw.csv"));

    CliResult flagged = box.run("run --algo ea_fixed --n 16 --runs 2 --seed 3 --out flag_root",
                                "BINVAL_OUT=env_root");
    REQUIRE(flagged.code == 0);
    CHECK(flagged.out.rfind("flag_root/", 0) == 0);
}

TEST_CASE("cli config files load and flags override them") {
    CliSandbox box;
    ExperimentConfig cfg;
    cfg.algorithm = Algorithm::EaFixed;
    cfg.n = 16;
    cfg.runs = 2;
    cfg.seed = 11;
    {
        std::ofstream out(box.dir / "cfg.json", std::ios::binary);
        out << config_to_json(cfg);
    }
    CliResult r = box.run("run --config cfg.json --runs 5");
    REQUIRE(r.code == 0);
    nlohmann::json sidecar =
        nlohmann::json::parse(slurp(box.printed_dir(r) / "config.json"));
    CHECK(sidecar["config"]["runs"] == 5);
    CHECK(sidecar["config"]["seed"] == 11);

    ExperimentConfig expected = cfg;
    expected.runs = 5;
    CHECK(box.printed_dir(r).filename().string() == config_hash_hex(expected));

    {
        std::ofstream out(box.dir / "bad.json", std::ios::binary);
        out << R"({"algorithm":"ea_fixed","n":16,"runs":2,"seed":11,"mystery":1})";
    }
    CHECK(box.run("run --config bad.json").code == 2);
}

TEST_CASE("cli sweep merges grid summaries atomically") {
    CliSandbox box;
    CliResult r =
        box.run("sweep --algos ea_fixed,ea_adjusting --ns 16,32 --runs 2 --seed 3 --k 4,8");
    REQUIRE(r.code == 0);
    fs::path dir = box.printed_dir(r);
    std::vector<std::string> names = {"summary-ea_fixed-n16.csv", "summary-ea_fixed-n32.csv",
                                      "summary-ea_adjusting-n16.csv",
                                      "summary-ea_adjusting-n32.csv"};
    std::string expected = "algo,n,k,mean,median,stddev,censored\n";
    for (const std::string& name : names) {
        REQUIRE(fs::exists(dir / name));
        std::string body = slurp(dir / name);
        expected += body.substr(body.find('\n') + 1);
    }
    CHECK(slurp(dir / "merged.csv") == expected);
    CHECK(!fs::exists(dir / "merged.csv.tmp"));
    REQUIRE(fs::exists(dir / "sweep.json"));
    nlohmann::json sidecar = nlohmann::json::parse(slurp(dir / "sweep.json"));
    CHECK(sidecar["points"].size() == 4);

    CliResult again =
        box.run("sweep --algos ea_fixed,ea_adjusting --ns 16,32 --runs 2 --seed 3 --k 4,8"
                " --out again");
    REQUIRE(again.code == 0);
    CHECK(slurp(box.printed_dir(again) / "merged.csv") == expected);

    CHECK(box.run("sweep --ns 16 --runs 2 --seed 3").code == 2);
    CHECK(box.run("sweep --algos ea_fixed --runs 2 --seed 3").code == 2);
    CHECK(box.run("sweep --algos ea_fixed --ns '' --runs 2 --seed 3").code == 2);
    CHECK(box.run("sweep --algos nope --ns 16 --runs 2 --seed 3").code == 2);
}

TEST_CASE("cli turning emits one row per pair and a provenance sidecar") {
    CliSandbox box;
    CliResult r = box.run("turning --n 16 --runs 6 --seed 5");
    REQUIRE(r.code == 0);
    fs::path dir = box.printed_dir(r);
    std::string csv = slurp(dir / "turning.csv");
    CHECK(csv.rfind("run_index,k_star,relative\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 7);
    nlohmann::json sidecar = nlohmann::json::parse(slurp(dir / "turning.json"));
    CHECK(sidecar["paired"] == true);
    CHECK(sidecar["config_a"]["algorithm"] == "ea_self_adjusting");
    CHECK(sidecar["config_b"]["algorithm"] == "ea_fixed");

    CliResult un = box.run("turning --n 16 --runs 4 --seed 5 --unpaired");
    REQUIRE(un.code == 0);
    nlohmann::json un_sidecar =
        nlohmann::json::parse(slurp(box.printed_dir(un) / "turning.json"));
    CHECK(un_sidecar["paired"] == false);
}

TEST_CASE("cli drift emits the audit grid with zero violations") {
    CliSandbox box;
    CliResult r = box.run("drift --ns 8 --states 30 --seed 2");
    REQUIRE(r.code == 0);
    std::string csv = slurp(box.printed_dir(r) / "drift.csv");
    REQUIRE(csv.rfind("n,k,chi,states,violations,worst_slack\n", 0) == 0);
    std::istringstream lines(csv);
    std::string line;
    std::getline(lines, line);
    int rows = 0;
    while (std::getline(lines, line)) {
        ++rows;
        // violations sit in the fifth column
        std::size_t p = 0;
        for (int c = 0; c < 4; ++c) p = line.find(',', p) + 1;
        CHECK(line.substr(p, line.find(',', p) - p) == "0");
    }
    CHECK(rows == 10);
    CHECK(r.out.find("0 violations") != std::string::npos);
}

TEST_CASE("cli verify reports pass lines and honors the corruption hook") {
    CliSandbox box;
    CliResult good = box.run("verify --seed 1 --ns 8 --states 40 --samples 1200 --max-states 30");
    CHECK(good.code == 0);
    CHECK(good.out.find("pass exact-drift n=8 k=4") != std::string::npos);
    CHECK(good.out.find("pass combined-drift n=64 r=4") != std::string::npos);
    CHECK(good.out.find("FAIL") == std::string::npos);

    CliResult bad = box.run("verify --seed 1 --ns 8 --states 40 --corrupt-weights --max-states 0");
    CHECK(bad.code == 1);
    CHECK(bad.out.find("FAIL exact-drift") != std::string::npos);
    CHECK(bad.out.find("chi*g(x)/(4e)") != std::string::npos);

    CHECK(box.run("verify --seed 1 --ns 20 --max-states 0").code == 2);
    CHECK(box.run("verify --ns 8 --states 10 --max-states 0").code == 2);
}

TEST_CASE("cli reports i/o trouble as a runtime failure") {
    CliSandbox box;
    {
        std::ofstream out(box.dir / "blocker", std::ios::binary);
        out << "x";
    }
    CliResult r = box.run("run --algo ea_fixed --n 16 --runs 1 --seed 1 --out blocker/sub");
    CHECK(r.code == 1);
    CHECK(!r.err.empty());
}
