#include "nbmq/io.hpp"
#include "nbmq/negbin.hpp"

#include <catch_amalgamated.hpp>

#include <sys/wait.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <random>
#include <sstream>

using namespace nbmq;
namespace fs = std::filesystem;

namespace {

const std::string kCli = NBMQ_CLI_PATH;
const std::string kData = NBMQ_DATA_DIR;
const std::string kGolden = NBMQ_GOLDEN_DIR;

fs::path workdir() {
    static const fs::path dir = [] {
        const fs::path d = fs::temp_directory_path() / "nbmq_cli_test";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

std::string path(const std::string& name) { return (workdir() / name).string(); }

// Runs the CLI with stderr captured to `err`; returns the exit code.
int run(const std::string& args, std::string* err = nullptr) {
    const std::string err_file = path("stderr.txt");
    const int status = std::system((kCli + " " + args + " 2> " + err_file + " > " + path("stdout.txt")).c_str());
    if (err) *err = read_text(err_file);
    REQUIRE(WIFEXITED(status));
    return WEXITSTATUS(status);
}

void write(const std::string& name, const std::string& text) { write_file_atomic(path(name), text); }

std::vector<double> column(const CsvTable& t, const std::string& name) {
    std::vector<double> out;
    const auto c = t.column(name);
    for (std::size_t r = 0; r < t.rows.size(); ++r) out.push_back(parse_number(t.rows[r][c], t.file, t.lines[r], name));
    return out;
}

const std::string lip = kData + "/scotland_lip.csv";
const std::string lip_adj = kData + "/scotland_lip.adj";

}  // namespace

TEST_CASE("fit on the lip-cancer data", "[cli]") {
    REQUIRE(run("fit --data " + lip + " --out " + path("fit.csv") + " --model-out " + path("model.csv")) == 0);
    const auto t = read_csv(path("fit.csv"));
    CHECK(t.rows.size() == 56);
    for (const auto* name : {"smr", "eb_risk", "nbmq_risk"}) {
        const auto v = column(t, name);
        CHECK(std::all_of(v.begin(), v.end(), [&](double x) { return name == std::string("smr") ? x >= 0 : x > 0; }));
    }
    const auto model = read_csv(path("model.csv"));
    CHECK(model.header == std::vector<std::string>{"block", "q", "parameter", "estimate", "std_error"});
    const auto se = column(model, "std_error");
    CHECK(std::count_if(se.begin(), se.end(), [](double s) { return std::isfinite(s) && s > 0; }) == 2);

    REQUIRE(run("fit --data " + lip + " --out " + path("fit2.csv") + " --model-out " + path("model2.csv")) == 0);
    CHECK(read_text(path("fit.csv")) == read_text(path("fit2.csv")));
    CHECK(read_text(path("model.csv")) == read_text(path("model2.csv")));
}

// Under the default correction the quantile lines nearly coincide, so area quantiles scatter to the grid ends;
// the literal correction keeps the lines apart.
TEST_CASE("homogeneous synthetic data gives central quantiles", "[cli]") {
    Rng rng(8);
    std::uniform_real_distribution<double> ut(2.0, 10.0);
    std::vector<std::vector<std::string>> rows;
    for (int i = 0; i < 150; ++i) {
        const double t = std::round(ut(rng) * 100.0) / 100.0;
        const auto y = nb_sample(NegBin2(1.3 * t, 1e8), rng);
        rows.push_back({"s" + std::to_string(i), std::to_string(y), format_number(t)});
    }
    write("hom.csv", to_csv({"area_id", "y", "t"}, rows));
    REQUIRE(run("fit --data " + path("hom.csv") + " --correction literal --out " + path("hom_out.csv")) == 0);
    auto q = column(read_csv(path("hom_out.csv")), "q_i");
    std::nth_element(q.begin(), q.begin() + 75, q.end());
    const double hi = q[75];
    std::nth_element(q.begin(), q.begin() + 74, q.end());
    const double median = 0.5 * (q[74] + hi);
    CHECK(median >= 0.4);
    CHECK(median <= 0.6);
}

TEST_CASE("configuration files supply flags", "[cli]") {
    write("fit.cfg", "# tuning\nc = 2.0\ncorrection = literal\n");
    REQUIRE(run("fit --data " + lip + " --out " + path("cfg_a.csv") + " --config " + path("fit.cfg")) == 0);
    REQUIRE(run("fit --data " + lip + " --out " + path("cfg_b.csv") + " --c 2 --correction literal") == 0);
    CHECK(read_text(path("cfg_a.csv")) == read_text(path("cfg_b.csv")));
    REQUIRE(run("fit --data " + lip + " --out " + path("cfg_c.csv") + " --c 1.345 --correction literal") == 0);
    CHECK(read_text(path("cfg_a.csv")) != read_text(path("cfg_c.csv")));

    std::string err;
    write("bad.cfg", "c = 2\nnot_a_flag = 1\n");
    CHECK(run("fit --data " + lip + " --out " + path("cfg_d.csv") + " --config " + path("bad.cfg"), &err) == 1);
    CHECK(err.find("bad.cfg:2: field 'not_a_flag'") != std::string::npos);
    CHECK_FALSE(fs::exists(path("cfg_d.csv")));
}

TEST_CASE("map with spatial files", "[cli]") {
    REQUIRE(run("fit --data " + lip + " --out " + path("base.csv")) == 0);
    const auto base = read_csv(path("base.csv"));

    SECTION("disconnected adjacency leaves the estimates unchanged") {
        std::string adj;
        for (int i = 1; i <= 56; ++i) adj += std::to_string(i) + ":\n";
        write("none.adj", adj);
        REQUIRE(run("map --data " + lip + " --adjacency " + path("none.adj") + " --out " + path("m0.csv")) == 0);
        const auto t = read_csv(path("m0.csv"));
        CHECK(column(t, "q_i_sp") == column(base, "q_i"));
        CHECK(column(t, "nbmq_sp_risk") == column(base, "nbmq_risk"));
    }
    SECTION("lip-cancer adjacency contracts the quantile spread") {
        REQUIRE(run("map --data " + lip + " --adjacency " + lip_adj + " --out " + path("m1.csv") + " --join-out " +
                    path("join.csv")) == 0);
        const auto t = read_csv(path("m1.csv"));
        auto var = [](const std::vector<double>& v) {
            double m = 0, s = 0;
            for (double x : v) m += x / static_cast<double>(v.size());
            for (double x : v) s += (x - m) * (x - m);
            return s;
        };
        CHECK(var(column(t, "q_i_sp")) <= var(column(t, "q_i")));
        const auto join = read_csv(path("join.csv"));
        CHECK(join.header == std::vector<std::string>{"area_id", "value"});
        CHECK(column(join, "value") == column(t, "nbmq_sp_risk"));
    }
    SECTION("infinite bandwidth gives a common quantile") {
        std::vector<std::vector<std::string>> rows;
        for (int i = 1; i <= 56; ++i)
            rows.push_back({std::to_string(i), format_number(std::cos(i)), format_number(std::sin(2.0 * i))});
        write("cent.csv", to_csv({"area_id", "x_coord", "y_coord"}, rows));
        REQUIRE(run("map --data " + lip + " --centroids " + path("cent.csv") + " --bandwidth inf --out " +
                    path("m2.csv")) == 0);
        const auto q = column(read_csv(path("m2.csv")), "q_i_sp");
        for (double v : q) CHECK(v == Catch::Approx(q[0]).margin(1e-12));
    }
    SECTION("unknown ids in spatial files are rejected") {
        write("bad.adj", "1: 2\n99: 1\n");
        std::string err;
        CHECK(run("map --data " + lip + " --adjacency " + path("bad.adj") + " --out " + path("m3.csv"), &err) == 1);
        CHECK(err.find("bad.adj:2: field 'area_id'") != std::string::npos);
        CHECK_FALSE(fs::exists(path("m3.csv")));
    }
}

TEST_CASE("bootstrap output", "[cli]") {
    const std::string common = "bootstrap --data " + lip + " --B 2 ";
    REQUIRE(run(common + "--seed 7 --out " + path("b7.csv")) == 0);
    CHECK(read_text(path("b7.csv")) == read_text(kGolden + "/bootstrap_lip_B2_seed7.csv"));
    const auto t = read_csv(path("b7.csv"));
    const auto mse = column(t, "mse");
    CHECK(std::all_of(mse.begin(), mse.end(), [](double v) { return v >= 0; }));

    REQUIRE(run(common + "--seed 8 --out " + path("b8.csv")) == 0);
    const auto other = read_csv(path("b8.csv"));
    CHECK(other.header == t.header);
    CHECK(other.rows.size() == t.rows.size());
    CHECK(column(other, "mse") != mse);
}

TEST_CASE("simulate", "[cli]") {
    SECTION("oracle with no heterogeneity is exact") {
        REQUIRE(run("simulate --n_reps 1 --sigma2 0 --delta 0 --estimators oracle --out " + path("sim.csv") +
                    " --summary_out " + path("sim.json")) == 0);
        const auto t = read_csv(path("sim.csv"));
        CHECK(t.rows.size() == 57);
        for (const auto* name : {"bias", "rmse"}) {
            const auto v = column(t, name);
            CHECK(std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; }));
        }
        CHECK(read_text(path("sim.json")).find("\"average_rmse\": 0.0") != std::string::npos);
    }
    SECTION("invalid configuration") {
        write("sim.cfg", "sigma2 = -0.1\n");
        std::string err;
        CHECK(run("simulate --config " + path("sim.cfg") + " --out " + path("sim_bad.csv"), &err) == 1);
        CHECK(err.find("sigma2") != std::string::npos);
        CHECK_FALSE(fs::exists(path("sim_bad.csv")));
    }
}

TEST_CASE("exit codes and diagnostics", "[cli]") {
    std::string err;
    write("bad.csv", "area_id,y,t\nA,1,2\nB,x,2\n");
    CHECK(run("fit --data " + path("bad.csv") + " --out " + path("o.csv"), &err) == 1);
    CHECK(err.find("bad.csv:3: field 'y'") != std::string::npos);
    CHECK(run("fit --data " + path("missing.csv") + " --out " + path("o.csv")) == 1);
    CHECK(run("fit --data " + lip + " --out " + path("o.csv") + " --c -1") == 1);
    CHECK(run("fit --unknown-flag") == 1);
    CHECK(run("") == 1);
    CHECK(run("fit --help") == 0);

    write("zero.csv", "area_id,y,t\nA,0,1\nB,0,2\nC,0,1\n");
    CHECK(run("fit --data " + path("zero.csv") + " --out " + path("o.csv"), &err) == 2);
    CHECK(err.find("numerical failure") != std::string::npos);
    CHECK_FALSE(fs::exists(path("o.csv")));
}
