/*
 * Copyright 2026 The hwmimo Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// hwmimo: batch runner for the hardware-impaired massive MIMO uplink.
//
//   hwmimo run <config.json> [--out DIR] [--seed S] [--trials T] [--mode closed|mc|both]
//   hwmimo scenario [--seed S] [--drop D] [--pilots spatial|temporal] [--out FILE]
//   hwmimo law --tau1 A --tau2 B --tau3 C --delta0 D [--pilot-length B] [--coherence T] [--t t]
//
// Exit status: 0 success, 2 invalid input, 3 runtime failure.

#include <chrono>
#include <cstdint>
#include <exception>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "hwmimo/hwmimo.hpp"

namespace {

constexpr int exit_ok = 0;
constexpr int exit_invalid = 2;
constexpr int exit_runtime = 3;

struct RunArgs {
        std::string config;
        std::string out = ".";
        std::optional<std::uint64_t> seed;
        std::optional<int> trials;
        std::optional<std::string> mode;
        std::optional<int> threads;
};

int run_command(const RunArgs& args) {
    hwmimo::ExperimentConfig cfg = hwmimo::load_config(args.config);
    if (args.seed) {
        cfg.scenario.base.seed = *args.seed;
    }
    if (args.trials) {
        if (*args.trials < 1) {
            throw hwmimo::ValidationError("--trials must be >= 1");
        }
        cfg.mc.trials = *args.trials;
    }
    if (args.mode) {
        cfg.mode = hwmimo::parse_run_mode(*args.mode);
    }
    if (args.threads) {
        if (*args.threads < 1) {
            throw hwmimo::ValidationError("--threads must be >= 1");
        }
        cfg.mc.threads = *args.threads;
    }
    hwmimo::check_feasible(cfg);

    const auto start = std::chrono::steady_clock::now();
    const hwmimo::ExperimentResult res = hwmimo::run_experiment(cfg);
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    hwmimo::write_outputs(cfg, res, args.out, wall);
    std::cerr << "hwmimo: " << res.rows.size() << " rows written to "
              << (std::filesystem::path(args.out) / cfg.output.csv).string() << " in " << wall
              << " s\n";
    return exit_ok;
}

struct ScenarioArgs {
        std::uint64_t seed = 1;
        int drop = 0;
        std::string pilots = "spatial";
        std::string shadow = "variance";
        std::string out;
};

int scenario_command(const ScenarioArgs& args) {
    hwmimo::ScenarioOptions o;
    o.seed = args.seed;
    o.drop = args.drop;
    o.pilot_kind = hwmimo::parse_pilot_kind(args.pilots);
    o.shadow_reading =
        args.shadow == "stddev" ? hwmimo::ShadowReading::stddev : hwmimo::ShadowReading::variance;
    const std::string text = hwmimo::scenario_to_json(hwmimo::build_scenario(o)).dump(1) + "\n";
    if (args.out.empty()) {
        std::cout << text;
        return exit_ok;
    }
    std::ofstream f(args.out, std::ios::binary | std::ios::trunc);
    if (!f || !(f << text)) {
        throw hwmimo::IoError("cannot write '" + args.out + "'");
    }
    return exit_ok;
}

struct LawArgs {
        hwmimo::ScalingExponents e;
        int pilot_length = 8;
        int coherence = 500;
        std::optional<int> t;
};

int law_command(const LawArgs& args) {
    if (auto issues = hwmimo::check_exponents(args.e); !issues.empty()) {
        throw hwmimo::ValidationError(issues.front());
    }
    const int t = args.t.value_or(args.coherence);
    if (t <= args.pilot_length || t > args.coherence) {
        throw hwmimo::ValidationError("--t must lie in B+1..T");
    }
    const bool holds = hwmimo::scaling_law_holds(args.e, t, args.pilot_length);
    const double lhs = std::max(args.e.tau1, args.e.tau2) +
                       0.5 * args.e.delta0 * (t - args.pilot_length) * args.e.tau3;
    std::cout << "t=" << t << " lhs=" << lhs << " bound=0.5 " << (holds ? "holds" : "violated")
              << "\n";
    return exit_ok;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hardware-impaired massive MIMO uplink simulator"};
    app.set_version_flag("--version", std::string(hwmimo::version));
    app.require_subcommand(1);

    RunArgs run;
    auto* run_cmd = app.add_subcommand("run", "Run an experiment config and write CSV + manifest");
    run_cmd->add_option("config", run.config, "Experiment config (JSON)")->required();
    run_cmd->add_option("--out", run.out, "Output directory");
    run_cmd->add_option("--seed", run.seed, "Override scenario.seed");
    run_cmd->add_option("--trials", run.trials, "Override mc.trials");
    run_cmd->add_option("--mode", run.mode, "closed, mc or both")
        ->check(CLI::IsMember({"closed", "mc", "both"}));
    run_cmd->add_option("--threads", run.threads, "Monte Carlo worker threads");

    ScenarioArgs sc;
    auto* sc_cmd = app.add_subcommand("scenario", "Write one user drop as JSON");
    sc_cmd->add_option("--seed", sc.seed, "Master seed");
    sc_cmd->add_option("--drop", sc.drop, "Drop index")->check(CLI::NonNegativeNumber);
    sc_cmd->add_option("--pilots", sc.pilots, "spatial or temporal")
        ->check(CLI::IsMember({"spatial", "temporal"}));
    sc_cmd->add_option("--shadow", sc.shadow, "Read the shadowing parameter as variance or stddev")
        ->check(CLI::IsMember({"variance", "stddev"}));
    sc_cmd->add_option("--out", sc.out, "Output file (stdout when omitted)");

    LawArgs law;
    auto* law_cmd = app.add_subcommand("law", "Evaluate the scaling-law condition at channel use t");
    law_cmd->add_option("--tau1", law.e.tau1)->required();
    law_cmd->add_option("--tau2", law.e.tau2)->required();
    law_cmd->add_option("--tau3", law.e.tau3)->required();
    law_cmd->add_option("--delta0", law.e.delta0)->required();
    law_cmd->add_option("--pilot-length", law.pilot_length);
    law_cmd->add_option("--coherence", law.coherence);
    law_cmd->add_option("--t", law.t, "Channel use (default: T)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? exit_ok : exit_invalid;
    }

    try {
        if (run_cmd->parsed()) {
            return run_command(run);
        }
        if (sc_cmd->parsed()) {
            return scenario_command(sc);
        }
        return law_command(law);
    } catch (const hwmimo::ValidationError& e) {
        std::cerr << "hwmimo: invalid input: " << e.what() << "\n";
        return exit_invalid;
    } catch (const hwmimo::UnsupportedError& e) {
        std::cerr << "hwmimo: unsupported: " << e.what() << "\n";
        return exit_invalid;
    } catch (const std::exception& e) {
        std::cerr << "hwmimo: error: " << e.what() << "\n";
        return exit_runtime;
    }
}
