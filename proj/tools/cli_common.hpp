#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "omnical/core.hpp"
#include "omnical/losses.hpp"

namespace omnical::cli {

using Json = nlohmann::ordered_json;

// Flat experiment configuration; every field has a key=value spelling equal to its flag name.
struct ExperimentConfig {
    std::string command;
    std::size_t T = 1000;
    int m = 0;       // 0 selects the command default
    int mprime = 0;  // 0 selects 2m
    std::uint64_t seed = 0;
    std::size_t reps = 1;
    std::size_t jobs = 1;
    std::string adversary;  // empty selects the command default
    std::string oracle;
    std::string cls;
    std::string losses = "builtin";
    std::string out = "out";
    double q = 0.9;
    std::string stream = "smoothscore";
    std::size_t groups = 4;
    double score_rho = 4.0;
    double gamma = -1.0;
    double eta = -1.0;
    double radius = 2.0;
    double rho = 0.05;  // failure probability in high-probability bounds
    std::size_t trace_points = 100;
    bool svg = true;

    int grid_m() const;
    std::string adversary_spec() const;
    std::string class_spec() const;
    std::string oracle_spec() const;
};

// Sets one key; unknown keys and malformed values raise ConfigError.
void set_config_key(ExperimentConfig& cfg, const std::string& key, const std::string& value);
// Flat key=value lines; '#' starts a comment; blank lines are skipped.
std::vector<std::pair<std::string, std::string>> read_key_values(const std::filesystem::path& path);
std::vector<std::string> config_keys();
Json config_json(const ExperimentConfig& cfg);
void validate(const ExperimentConfig& cfg);

// Class specs: linear:<B>, linear:<d>:<B>, bank:<n>, boolbank:<n>, finite:<path> (alias csv:<path>),
// finite-boolean:<path>. d is the raw feature dimension.
FunctionClass make_class(const std::string& spec, std::size_t d);
// Finite-class CSV: header name,transform,bias,w_0..w_{d-1}; transform in {linear, clip, step}.
// boolean restricts every row to step.
FiniteClass read_finite_class_csv(const std::filesystem::path& path, std::size_t d, bool boolean = false);
// Loss list: "builtin", "proper", or comma-separated registry names.
std::vector<LossSpec> make_losses(const std::string& spec);

// Ordered metric record; key order is part of the output format.
using Record = std::vector<std::pair<std::string, double>>;

struct Summary {
    std::vector<std::string> metrics;
    std::vector<double> mean, min, max;
};
// Elementwise mean/min/max; all records must share the same keys in the same order.
Summary aggregate(const std::vector<Record>& records);

struct BoundCheck {
    std::string name;
    double measured = 0.0;
    double bound = 0.0;
    bool holds = true;
    std::string note;
};
Json bound_json(const BoundCheck& b);

struct TraceRow {
    std::size_t rep = 0;
    std::size_t t = 0;
    double K2 = 0.0;
    bool has_K2 = true;
    double regret = 0.0;
};
// Checkpoints ceil(T k / P), k = 1..P, deduplicated.
std::vector<std::size_t> checkpoints(std::size_t T, std::size_t points);
void write_trace_csv(const std::filesystem::path& path, const std::vector<TraceRow>& rows);
// Line chart of K2 and regret against t for replication 0; fixed-precision coordinates.
std::string trace_svg(const std::vector<TraceRow>& rows, const std::string& title);

std::string fmt(double v);  // shortest round-trip text
void write_text(const std::filesystem::path& path, const std::string& text);
void write_json(const std::filesystem::path& path, const Json& j);

}  // namespace omnical::cli
