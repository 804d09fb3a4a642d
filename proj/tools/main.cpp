#include <iostream>
#include <map>

#include "CLI11.hpp"
#include "commands.hpp"
#include "verify_suite.hpp"

using omnical::cli::ExperimentConfig;

namespace {

struct FlagSpec {
    const char* key;
    const char* help;
};

// Flags shared by every run command; names equal config keys.
const FlagSpec kCommon[] = {{"T", "horizon"},
                            {"seed", "base seed"},
                            {"reps", "replications"},
                            {"jobs", "concurrent replications"},
                            {"out", "output directory"},
                            {"grid-m", "forecast grid size m"}};

struct PerCommand {
    const char* name;
    const char* help;
    std::vector<FlagSpec> flags;
};

const std::vector<PerCommand>& commands() {
    static const std::vector<PerCommand> c = {
        {"run-multical", "contextual-swap forecaster with regression oracles",
         {{"adversary", "adversary spec"}, {"oracle", "oracle spec"}, {"class", "class spec"},
          {"gamma", "mixing probability"}, {"trace-points", "trace checkpoints"}}},
        {"run-omni", "omniprediction regrets of the contextual-swap forecaster",
         {{"adversary", "adversary spec"}, {"oracle", "oracle spec"}, {"class", "finite class spec"},
          {"losses", "builtin, proper or a comma list"}, {"gamma", "mixing probability"},
          {"trace-points", "trace checkpoints"}}},
        {"run-amf", "exponential-weights multicalibration over a finite class",
         {{"adversary", "adversary spec"}, {"class", "finite class spec"}, {"eta", "learning rate"},
          {"trace-points", "trace checkpoints"}}},
        {"run-vcal", "V-forecaster over a finite boolean class",
         {{"adversary", "adversary spec"}, {"class", "finite boolean class spec"}, {"mprime", "loss grid m'"},
          {"eta", "learning rate"}, {"rho", "failure probability in the bound"},
          {"trace-points", "trace checkpoints"}}},
        {"run-conformal", "multivalid conformal thresholds",
         {{"q", "target coverage"}, {"stream", "score stream spec"}, {"groups", "group count"},
          {"score-rho", "score density bound"}, {"class", "class for sQ2"}, {"gamma", "mixing probability"},
          {"eta", "oracle step size"}, {"radius", "oracle ball radius"}, {"trace-points", "trace checkpoints"}}},
        {"run-oracle-bench", "single regression oracle against the best fixed parameter",
         {{"adversary", "adversary spec"}, {"oracle", "oracle spec"}, {"radius", "comparator ball radius"},
          {"trace-points", "trace checkpoints"}}},
    };
    return c;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"omnical: online multicalibration, omniprediction and conformal experiments"};
    app.require_subcommand(1);

    std::map<std::string, std::map<std::string, std::string>> values;
    std::map<std::string, std::string> config_path;
    std::map<std::string, bool> no_svg;
    for (const auto& pc : commands()) {
        auto* sub = app.add_subcommand(pc.name, pc.help);
        auto& v = values[pc.name];
        for (const auto& f : kCommon) sub->add_option(std::string("--") + f.key, v[f.key], f.help);
        for (const auto& f : pc.flags) sub->add_option(std::string("--") + f.key, v[f.key], f.help);
        if (std::string(pc.name) == "run-vcal") sub->add_option("--m", v["grid-m"], "alias of --grid-m");
        if (std::string(pc.name) != "run-oracle-bench" && std::string(pc.name) != "run-vcal" &&
            std::string(pc.name) != "run-amf")
            sub->add_option("--mix-gamma", v["gamma"], "alias of --gamma");
        sub->add_option("--config", config_path[pc.name], "flat key=value config file");
        sub->add_flag("--no-svg", no_svg[pc.name], "skip curves.svg");
    }
    std::string verify_out = "verify_out";
    auto* verify = app.add_subcommand("verify", "run every acceptance property suite");
    verify->add_option("--out", verify_out, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (verify->parsed()) return omnical::cli::run_verify(verify_out, std::cout);
        for (const auto& pc : commands()) {
            auto* sub = app.get_subcommand(pc.name);
            if (!sub->parsed()) continue;
            ExperimentConfig cfg;
            cfg.command = pc.name;
            // Precedence: defaults, then the config file, then flags.
            if (!config_path[pc.name].empty())
                for (const auto& [k, v] : omnical::cli::read_key_values(config_path[pc.name]))
                    omnical::cli::set_config_key(cfg, k, v);
            for (const auto* opt : sub->get_options()) {
                if (opt->count() == 0) continue;
                std::string key = opt->get_lnames().empty() ? "" : opt->get_lnames().front();
                if (key == "config" || key == "no-svg" || key == "help") continue;
                if (key == "m") key = "grid-m";
                if (key == "mix-gamma") key = "gamma";
                omnical::cli::set_config_key(cfg, key, values[pc.name][key]);
            }
            if (no_svg[pc.name]) cfg.svg = false;
            return omnical::cli::run_experiment(cfg, std::cout);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
