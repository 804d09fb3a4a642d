#include <filesystem>
#include <fstream>
#include <sstream>

#include "commands.hpp"
#include "doctest.h"
#include "omnical/metrics.hpp"

using namespace omnical;
using namespace omnical::cli;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("omnical_test_cli_" + name);
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

ExperimentConfig config(const std::string& command, std::size_t T, const fs::path& out) {
    ExperimentConfig c;
    c.command = command;
    c.T = T;
    c.out = out.string();
    c.trace_points = 10;
    return c;
}

}  // namespace

TEST_CASE("aggregate examples") {
    const Record one{{"a", 1.5}, {"b", -2.0}};
    const auto s = aggregate({one});
    CHECK(s.metrics == std::vector<std::string>{"a", "b"});
    CHECK(s.mean == std::vector<double>{1.5, -2.0});
    CHECK(s.min == s.mean);
    CHECK(s.max == s.mean);

    const auto two = aggregate({{{"a", 0.0}}, {{"a", 2.0}}});
    CHECK(two.mean[0] == 1.0);
    CHECK(two.min[0] == 0.0);
    CHECK(two.max[0] == 2.0);

    CHECK_THROWS_AS(aggregate({}), Error);
    CHECK_THROWS_AS(aggregate({{{"a", 0.0}}, {{"b", 0.0}}}), Error);
    CHECK_THROWS_AS(aggregate({{{"a", 0.0}}, {{"a", 0.0}, {"c", 1.0}}}), Error);
}

TEST_CASE("config parsing and defaults") {
    const fs::path dir = scratch("config");
    fs::create_directories(dir);
    write_text(dir / "c.txt", "# comment\nT = 250\n\ngrid-m=7   # trailing\nadversary=shifting:3:50\nsvg=false\n");
    ExperimentConfig c;
    c.command = "run-multical";
    for (const auto& [k, v] : read_key_values(dir / "c.txt")) set_config_key(c, k, v);
    CHECK(c.T == 250);
    CHECK(c.grid_m() == 7);
    CHECK(c.adversary_spec() == "shifting:3:50");
    CHECK_FALSE(c.svg);

    ExperimentConfig d;
    d.T = 10000;
    d.command = "run-multical";
    CHECK(d.grid_m() == 10);
    CHECK(d.class_spec() == "linear:1");
    d.command = "run-amf";
    CHECK(d.grid_m() == 100);
    CHECK(d.class_spec() == "bank:16");
    d.command = "run-conformal";
    CHECK(d.adversary_spec() == "smoothscore:4:4");

    CHECK_THROWS_AS(set_config_key(c, "nope", "1"), ConfigError);
    CHECK_THROWS_AS(set_config_key(c, "T", "abc"), ConfigError);
    CHECK_THROWS_AS(set_config_key(c, "T", "-3"), ConfigError);
    write_text(dir / "bad.txt", "T 5\n");
    CHECK_THROWS_AS(read_key_values(dir / "bad.txt"), ConfigError);
    c.T = 0;
    CHECK_THROWS_AS(validate(c), ConfigError);
    fs::remove_all(dir);
}

TEST_CASE("class and loss specs") {
    const auto lin = make_class("linear:4:2", 4);
    CHECK(std::get<LinearBall>(lin).B == 2.0);
    CHECK_THROWS_AS(make_class("linear:3:2", 4), ConfigError);
    const auto bank = std::get<FiniteClass>(make_class("bank:8", 4));
    CHECK(bank.predictors.size() == 8);
    CHECK(bank.predictors[0].name == "I");
    const auto bb = std::get<FiniteClass>(make_class("boolbank:8", 4));
    const Example x{{0.2, -0.5, 0.0, 0.4}, {}};
    for (const auto& p : bb.predictors) {
        const double v = p.fn(x);
        CHECK((v == 0.0 || v == 1.0));
    }
    CHECK_THROWS_AS(make_class("bank:0", 4), ConfigError);
    CHECK_THROWS_AS(make_class("mystery:3", 4), ConfigError);
    CHECK(make_losses("builtin").size() == builtin_convex_losses().size());
    CHECK(make_losses("squared,pinball:0.3").size() == 2);
    CHECK_THROWS(make_losses("squared,nope"));
}

TEST_CASE("finite-class CSV") {
    const fs::path dir = scratch("csv");
    fs::create_directories(dir);
    write_text(dir / "f.csv", "name,transform,bias,w_0,w_1\nhalf,linear,0.5,0,0\nup,step,0,1,0\nc,clip,0.5,1,-1\n");
    const auto cls = read_finite_class_csv(dir / "f.csv", 2);
    REQUIRE(cls.predictors.size() == 4);  // "I" prepended
    const Example x{{0.3, 0.1}, {}};
    CHECK(cls.predictors[1].fn(x) == 0.5);
    CHECK(cls.predictors[2].fn(x) == 1.0);
    CHECK(cls.predictors[3].fn(x) == doctest::Approx(0.7));
    CHECK_THROWS_AS(read_finite_class_csv(dir / "f.csv", 2, true), ConfigError);
    CHECK_THROWS_AS(read_finite_class_csv(dir / "f.csv", 3), ConfigError);
    write_text(dir / "g.csv", "name,transform,bias,w_0,w_1\nx,cube,0,1,0\n");
    CHECK_THROWS_AS(read_finite_class_csv(dir / "g.csv", 2), ConfigError);
    fs::remove_all(dir);
}

TEST_CASE("T = 1 minimal run on every command") {
    for (const char* cmd : {"run-multical", "run-omni", "run-amf", "run-vcal", "run-conformal", "run-oracle-bench"}) {
        INFO(cmd);
        const fs::path out = scratch(std::string("min_") + cmd);
        std::ostringstream log;
        const int code = run_experiment(config(cmd, 1, out), log);
        CHECK((code == 0 || code == 2));
        std::istringstream csv(slurp(out / "transcript_rep0.csv"));
        std::string line;
        int lines = 0;
        while (std::getline(csv, line)) ++lines;
        CHECK(lines == 2);  // header plus one round
        const auto j = Json::parse(slurp(out / "summary.json"));
        for (const auto& [k, v] : j["replications"][0]["metrics"].items()) {
            INFO(k);
            CHECK(std::isfinite(v.get<double>()));
        }
        CHECK(fs::exists(out / "trace.csv"));
        fs::remove_all(out);
    }
}

TEST_CASE("replications use distinct streams and outputs are reproducible") {
    const fs::path a = scratch("reps_a"), b = scratch("reps_b");
    auto ca = config("run-multical", 200, a);
    ca.reps = 3;
    ca.jobs = 2;
    auto cb = ca;
    cb.out = b.string();
    cb.jobs = 1;
    std::ostringstream log;
    REQUIRE(run_experiment(ca, log) == 0);
    REQUIRE(run_experiment(cb, log) == 0);
    const std::string t0 = slurp(a / "transcript_rep0.csv"), t1 = slurp(a / "transcript_rep1.csv"),
                      t2 = slurp(a / "transcript_rep2.csv");
    CHECK(t0 != t1);
    CHECK(t1 != t2);
    CHECK(t0 != t2);
    for (const char* f : {"summary.json", "trace.csv", "curves.svg", "transcript_rep0.csv", "transcript_rep2.csv"}) {
        INFO(f);
        CHECK(slurp(a / f) == slurp(b / f));
    }
    const auto j = Json::parse(slurp(a / "summary.json"));
    CHECK(j["replications"].size() == 3);
    CHECK(j["pass"].get<bool>());
    for (const auto& bd : j["bounds"]) {
        CHECK(bd.contains("worst_measured"));
        CHECK(bd.contains("bound"));
    }
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST_CASE("trace helpers") {
    CHECK(checkpoints(10, 4) == std::vector<std::size_t>{3, 5, 8, 10});
    CHECK(checkpoints(3, 10) == std::vector<std::size_t>{1, 2, 3});
    const std::vector<TraceRow> rows{{0, 1, 0.5, true, 1.0}, {0, 2, 0.25, true, 3.0}, {1, 1, 0.1, false, 2.0}};
    const std::string svg = trace_svg(rows, "t");
    CHECK(svg == trace_svg(rows, "t"));
    CHECK(svg.find("<polyline") != std::string::npos);
    const fs::path dir = scratch("trace");
    fs::create_directories(dir);
    write_trace_csv(dir / "trace.csv", rows);
    CHECK(slurp(dir / "trace.csv") == "rep,t,K2,regret\n0,1,0.5,1\n0,2,0.25,3\n1,1,,2\n");
    fs::remove_all(dir);
    CHECK(fmt(0.1) == "0.1");
    CHECK(fmt(1e-300) == "1e-300");
}

TEST_CASE("V-forecaster coordinate cap") {
    const fs::path out = scratch("vcap");
    auto c = config("run-vcal", 10, out);
    c.m = 200;
    std::ostringstream log;
    CHECK_THROWS_AS(run_experiment(c, log), ConfigError);
    fs::remove_all(out);
}
