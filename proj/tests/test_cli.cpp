#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "ebxmse/cli.hpp"
#include "ebxmse/io.hpp"

using namespace ebxmse;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result run(std::vector<std::string> args) {
    args.insert(args.begin(), "ebxmse");
    std::vector<const char *> argv;
    for (const auto &a : args) { argv.push_back(a.c_str()); }
    std::ostringstream out, err;
    const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path &p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

fs::path fresh(const std::string &name) {
    const fs::path p = fs::temp_directory_path() / ("ebxmse_cli_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

fs::path config(const std::string &name) { return fs::path(EBXMSE_SOURCE_DIR) / "configs" / name; }

fs::path write_system(const fs::path &dir, const Vec &theta0, const Vec *u = nullptr) {
    SystemSpec s;
    s.theta0 = theta0;
    json j = system_to_json(s);
    if (u) { j["u"] = vec_to_json(*u); }
    const fs::path p = dir / "sys.json";
    write_json_file(p, j);
    return p;
}

}  // namespace

TEST_CASE("error reporting and exit codes") {
    const fs::path d = fresh("errors");
    Result r = run({"xmse", "--bogus"});
    CHECK(r.code == kExitConfig);
    CHECK(json::parse(r.err)["error"]["type"] == "config");
    r = run({"--out", d.string(), "xmse", "--system", (d / "missing.json").string()});
    CHECK(r.code == kExitConfig);
    r = run({"--alpha", "-1", "--out", d.string(), "xmse", "--system", write_system(d, Vec::Ones(3)).string()});
    CHECK(r.code == kExitConfig);
    r = run({"--out", d.string(), "--mode", "apx", "xmse", "--system", write_system(d, Vec::Ones(3)).string()});
    CHECK(r.code == kExitConfig);
    r = run({});
    CHECK(r.code == kExitConfig);
}

TEST_CASE("xmse: SUREy and GCV breakdowns are byte-identical; provenance present") {
    const fs::path d = fresh("parity");
    Rng rg(1);
    const Vec th = rg.normal_vec(6);
    const fs::path sys = write_system(d, th);
    const Result r = run({"--out", d.string(), "--method", "surey,gcv", "xmse", "--system", sys.string()});
    REQUIRE(r.code == kExitOk);
    const json a = read_json_file(d / "xmse_sys_surey_exact.json");
    const json b = read_json_file(d / "xmse_sys_gcv_exact.json");
    CHECK(a["breakdown"].dump() == b["breakdown"].dump());
    CHECK(a["schema_version"] == kSchemaVersion);
    CHECK(a["provenance"]["seed"].is_number());
    CHECK(a["provenance"]["config"]["kernel"] == "ss-fixed-gamma:0.95");
}

TEST_CASE("xmse with fixed eta equals the fixed-eta subcommand") {
    const fs::path d = fresh("fixed");
    Rng rg(2);
    const fs::path sys = write_system(d, rg.normal_vec(4));
    REQUIRE(run({"--out", d.string(), "--method", "eb", "xmse", "--system", sys.string(), "--eta", "2.5"}).code == 0);
    REQUIRE(run({"--out", d.string(), "fixed-eta", "--system", sys.string(), "--eta", "2.5"}).code == 0);
    const double a = read_json_file(d / "xmse_sys_eb_exact.json")["breakdown"]["xmse_total"].get<double>();
    const double b = read_json_file(d / "fixed_eta_sys_exact.json")["fixed_eta_xmse"].get<double>();
    CHECK(a == doctest::Approx(b).epsilon(1e-12));
}

TEST_CASE("bundled example1 config") {
    const fs::path d = fresh("example1");
    const Result r = run({"--config", config("example1.json").string(), "--out", d.string(), "example1"});
    REQUIRE(r.code == kExitOk);
    const json j = read_json_file(d / "example1.json");
    const double v = j["xvarhpe_over_alpha_sigma4"].get<double>();
    CHECK(v == doctest::Approx(-0.0211726).epsilon(1e-5));
    CHECK(j["closed_form_over_alpha_sigma4"].get<double>() == doctest::Approx(v).epsilon(1e-8));
}

TEST_CASE("selftest passes") {
    const fs::path d = fresh("selftest");
    const Result r = run({"--out", d.string(), "selftest"});
    CHECK(r.code == kExitOk);
    CHECK(r.out.find("FAIL") == std::string::npos);
}

TEST_CASE("mc: one run, reruns identical, per-run CSV") {
    const fs::path d = fresh("mc");
    Rng rg(3);
    const Vec u = rg.normal_vec(50);
    const Vec th = rg.normal_vec(8);
    const fs::path sys = write_system(d, th, &u);
    const std::vector<std::string> args = {"--out", (d / "o").string(), "--seed", "9", "mc", "--system", sys.string(),
                                           "--runs", "1"};
    REQUIRE(run(args).code == kExitOk);
    const json j = read_json_file(d / "o" / "mc_sys.json");
    const std::string csv = slurp(d / "o" / "runs_sys.csv");
    CHECK(csv.rfind("# provenance: ", 0) == 0);
    std::istringstream lines(csv);
    std::string line;
    std::getline(lines, line);
    std::getline(lines, line);
    CHECK(line == "run,estimator,se,fit");
    std::getline(lines, line);
    const double se = std::stod(line.substr(line.rfind(',', line.rfind(',') - 1) + 1));
    CHECK(j["report"]["estimators"][0]["sample_mse"].get<double>() == doctest::Approx(se).epsilon(1e-15));

    const std::string first = slurp(d / "o" / "mc_sys.json");
    REQUIRE(run(args).code == kExitOk);
    CHECK(slurp(d / "o" / "mc_sys.json") == first);
    CHECK(slurp(d / "o" / "runs_sys.csv") == csv);
}

TEST_CASE("sysgen: empty corpus, filter replay; report on empty input") {
    const fs::path d = fresh("sysgen");
    REQUIRE(run({"--out", (d / "empty").string(), "sysgen", "--count", "0"}).code == kExitOk);
    const json m = read_json_file(d / "empty" / "manifest.json");
    CHECK(m["entries"].empty());

    REQUIRE(run({"--out", (d / "rep").string(), "report", "--in", (d / "empty").string()}).code == kExitOk);
    const std::string t = slurp(d / "rep" / "table_xmse.csv");
    CHECK(std::count(t.begin(), t.end(), '\n') == 2);
    const json meta = read_json_file(d / "rep" / "report_meta.json");
    CHECK(meta["component_mapping"].size() == 4);
    CHECK(meta["component_mapping"][3]["apx_xmse"] == "0");

    REQUIRE(run({"--out", (d / "f").string(), "--seed", "4", "sysgen", "--count", "2", "--filter", "positive-xmse"})
                .code == kExitOk);
    const json mf = read_json_file(d / "f" / "manifest.json");
    REQUIRE(mf["entries"].size() == 2);
    CorpusSpec spec;
    spec.filter = true;
    for (const auto &e : mf["entries"]) {
        const CorpusEntry ce = corpus_entry_from_json(read_json_file(d / "f" / e["file"].get<std::string>()));
        const auto x = filter_xmse(ce, spec);
        REQUIRE(x.has_value());
        CHECK(*x > 0.1);
    }
}

TEST_CASE("report: component columns sum to the sample delta MSE") {
    const fs::path d = fresh("report");
    REQUIRE(run({"--out", (d / "c").string(), "--seed", "5", "sysgen", "--count", "2"}).code == kExitOk);
    REQUIRE(run({"--out", (d / "m").string(), "mc", "--corpus", (d / "c").string(), "--runs", "20"}).code ==
            kExitOk);
    REQUIRE(run({"--out", (d / "r").string(), "report", "--in", (d / "m").string()}).code == kExitOk);
    std::istringstream in(slurp(d / "r" / "table_components.csv"));
    std::string line;
    std::getline(in, line);
    std::getline(in, line);
    int rows = 0;
    while (std::getline(in, line)) {
        std::vector<std::string> f;
        std::stringstream ls(line);
        std::string x;
        while (std::getline(ls, x, ',')) { f.push_back(x); }
        REQUIRE(f.size() >= 7);
        const double delta = std::stod(f[2]);
        const double sum = std::stod(f[3]) + std::stod(f[4]) + std::stod(f[5]) + std::stod(f[6]);
        CHECK(sum == doctest::Approx(delta).epsilon(1e-12));
        ++rows;
    }
    CHECK(rows == 6);
}

TEST_CASE("misaligned motivating-style system: EB sample delta MSE is positive") {
    const fs::path d = fresh("motivating");
    REQUIRE(run({"--config", config("motivating.json").string(), "--out", (d / "c").string(), "sysgen", "--count",
                 "1"})
                .code == kExitOk);
    REQUIRE(run({"--config", config("motivating.json").string(), "--out", (d / "m").string(), "mc", "--corpus",
                 (d / "c").string()})
                .code == kExitOk);
    const json j = read_json_file(d / "m" / "mc_system_0000.json");
    CHECK(j["report"]["estimators"][1]["estimator"] == "eb");
    CHECK(j["report"]["estimators"][1]["sample_delta_mse"].get<double>() > 0.0);
}

TEST_CASE("kernel-aligned corpus: EB beats ML on average") {
    const fs::path d = fresh("aligned");
    REQUIRE(run({"--config", config("aligned.json").string(), "--out", (d / "c").string(), "sysgen", "--count", "5"})
                .code == kExitOk);
    REQUIRE(run({"--config", config("aligned.json").string(), "--out", (d / "m").string(), "--method", "eb", "mc",
                 "--corpus", (d / "c").string(), "--runs", "30"})
                .code == kExitOk);
    double ml = 0.0, eb = 0.0;
    for (int i = 0; i < 5; ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "mc_system_%04d.json", i);
        const json j = read_json_file(d / "m" / name);
        ml += j["report"]["estimators"][0]["sample_mse"].get<double>();
        eb += j["report"]["estimators"][1]["sample_mse"].get<double>();
    }
    CHECK(eb < ml);
}
