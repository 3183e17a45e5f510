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

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hwmimo/common.hpp"
#include "hwmimo/csv.hpp"
#include "hwmimo/estimation.hpp"
#include "hwmimo/model.hpp"
#include "hwmimo/montecarlo.hpp"
#include "hwmimo/rates.hpp"
#include "hwmimo/scenario.hpp"

// Batch experiments over the multi-cell scenario: a JSON config describes the
// drops, hardware profiles and sweep; the runner produces sum-rate tables.

namespace hwmimo {

inline constexpr const char* version = "1.0.0";

enum class RunMode { closed, mc, both };

inline std::string_view to_string(RunMode m) {
    switch (m) {
        case RunMode::closed:
            return "closed";
        case RunMode::mc:
            return "mc";
        case RunMode::both:
            return "both";
    }
    return "unknown";
}

inline RunMode parse_run_mode(std::string_view s) {
    if (s == "closed") {
        return RunMode::closed;
    }
    if (s == "mc") {
        return RunMode::mc;
    }
    if (s == "both") {
        return RunMode::both;
    }
    throw ValidationError("mode must be closed, mc or both (got '" + std::string(s) + "')");
}

/// A named hardware setting: fixed, or growing with N.
struct HardwareSpec {
        std::string label = "ideal";
        bool scaled = false;
        HardwareProfile fixed;
        ScalingExponents exponents;

        [[nodiscard]] HardwareProfile at(int antennas) const {
            return scaled ? apply_scaling(exponents, antennas) : fixed;
        }
};

struct ScenarioSpec {
        /// `antennas` is ignored; the sweep sets N.
        ScenarioOptions base;
        int drops = 1;
        /// Receiving cells whose users are evaluated (all when empty). The sum
        /// rate of a subset is scaled by L / |subset|.
        std::vector<int> receiving_cells;
};

struct SweepSpec {
        std::vector<int> antennas;
        std::vector<PilotKind> pilots{PilotKind::spatial_dft};
        std::vector<FilterKind> filters{FilterKind::mrc};
};

struct McSpec {
        int trials = 100000;
        int t_step = 25;
        bool full_t = false;
        int threads = 1;
        /// Larger arrays are rejected in Monte Carlo mode.
        int max_antennas = 2048;
};

struct OutputSpec {
        std::string csv = "sum_rate.csv";
        /// Significant digits; 0 selects the shortest round-trip form.
        int precision = 0;
        bool per_user = false;
        /// Channel use at which the scaling-law predicate is reported (T when unset).
        std::optional<int> law_t;
};

struct ExperimentConfig {
        std::string name = "experiment";
        RunMode mode = RunMode::closed;
        ScenarioSpec scenario;
        std::vector<HardwareSpec> hardware;
        SweepSpec sweep;
        McSpec mc;
        OutputSpec output;
};

namespace detail {

/// JSON object reader that names the offending field in every error and
/// rejects unknown keys.
class FieldReader {
    public:
        FieldReader(const nlohmann::json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
            if (!obj_.is_object()) {
                throw ValidationError(where() + ": expected an object");
            }
        }

        ~FieldReader() = default;
        FieldReader(const FieldReader&) = delete;
        FieldReader& operator=(const FieldReader&) = delete;

        [[nodiscard]] bool has(const std::string& key) {
            seen_.insert(key);
            return obj_.contains(key) && !obj_.at(key).is_null();
        }

        [[nodiscard]] std::string field(const std::string& key) const {
            return path_.empty() ? key : path_ + "." + key;
        }

        const nlohmann::json& raw(const std::string& key) {
            seen_.insert(key);
            if (!obj_.contains(key)) {
                throw ValidationError("config field '" + field(key) + "' is required");
            }
            return obj_.at(key);
        }

        double number(const std::string& key) {
            const auto& v = raw(key);
            if (!v.is_number()) {
                throw ValidationError("config field '" + field(key) + "': expected a number");
            }
            return v.get<double>();
        }

        double number(const std::string& key, double fallback) {
            return has(key) ? number(key) : fallback;
        }

        std::int64_t integer(const std::string& key) {
            const auto& v = raw(key);
            if (!v.is_number_integer()) {
                throw ValidationError("config field '" + field(key) + "': expected an integer");
            }
            return v.get<std::int64_t>();
        }

        std::int64_t integer(const std::string& key, std::int64_t fallback) {
            return has(key) ? integer(key) : fallback;
        }

        std::string text(const std::string& key) {
            const auto& v = raw(key);
            if (!v.is_string()) {
                throw ValidationError("config field '" + field(key) + "': expected a string");
            }
            return v.get<std::string>();
        }

        std::string text(const std::string& key, const std::string& fallback) {
            return has(key) ? text(key) : fallback;
        }

        bool boolean(const std::string& key, bool fallback) {
            if (!has(key)) {
                return fallback;
            }
            const auto& v = raw(key);
            if (!v.is_boolean()) {
                throw ValidationError("config field '" + field(key) + "': expected true or false");
            }
            return v.get<bool>();
        }

        void reject_unknown() const {
            for (const auto& [key, value] : obj_.items()) {
                if (!seen_.contains(key)) {
                    throw ValidationError("config field '" + field(key) + "' is not recognized");
                }
            }
        }

    private:
        [[nodiscard]] std::string where() const { return path_.empty() ? "config" : "config field '" + path_ + "'"; }

        const nlohmann::json& obj_;
        std::string path_;
        std::set<std::string> seen_;
};

template <typename F>
auto with_field(const std::string& field, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const UnsupportedError& e) {
        throw ValidationError("config field '" + field + "': " + e.what());
    }
}

inline int positive_int(FieldReader& r, const std::string& key, std::int64_t fallback,
                        std::int64_t min = 1) {
    const std::int64_t v = r.integer(key, fallback);
    if (v < min || v > std::numeric_limits<int>::max()) {
        throw ValidationError("config field '" + r.field(key) + "' must be >= " +
                              std::to_string(min));
    }
    return static_cast<int>(v);
}

inline HardwareSpec parse_hardware(const nlohmann::json& j, const std::string& path) {
    FieldReader r(j, path);
    HardwareSpec h;
    const std::string kind = r.text("kind", "fixed");
    h.label = r.text("label", kind);
    if (h.label.empty()) {
        throw ValidationError("config field '" + r.field("label") + "' must not be empty");
    }
    if (kind == "fixed") {
        h.fixed.kappa = r.number("kappa", 0.0);
        h.fixed.xi = r.number("xi", 1.0);
        h.fixed.delta = r.number("delta", 0.0);
        if (auto issues = check_hardware(h.fixed); !issues.empty()) {
            throw ValidationError("config field '" + path + "': " + issues.front());
        }
    } else if (kind == "scaled") {
        h.scaled = true;
        h.exponents.kappa0 = r.number("kappa0");
        h.exponents.xi0 = r.number("xi0");
        h.exponents.delta0 = r.number("delta0");
        h.exponents.tau1 = r.number("tau1", 0.0);
        h.exponents.tau2 = r.number("tau2", 0.0);
        h.exponents.tau3 = r.number("tau3", 0.0);
        if (auto issues = check_exponents(h.exponents); !issues.empty()) {
            throw ValidationError("config field '" + path + "': " + issues.front());
        }
        if (!(h.exponents.xi0 > 0.0)) {
            throw ValidationError("config field '" + r.field("xi0") +
                                  "' must be > 0 for simulation");
        }
    } else {
        throw ValidationError("config field '" + r.field("kind") + "' must be fixed or scaled");
    }
    r.reject_unknown();
    return h;
}

}  // namespace detail

/// Builds and validates a config from a parsed JSON document.
inline ExperimentConfig parse_config(const nlohmann::json& doc) {
    using detail::FieldReader;
    ExperimentConfig cfg;
    FieldReader root(doc, "");
    cfg.name = root.text("name", cfg.name);
    cfg.mode = parse_run_mode(root.text("mode", "closed"));

    {
        FieldReader r(root.raw("scenario"), "scenario");
        ScenarioOptions& o = cfg.scenario.base;
        const std::int64_t seed = r.integer("seed", 1);
        if (seed < 0) {
            throw ValidationError("config field 'scenario.seed' must be >= 0");
        }
        o.seed = static_cast<std::uint64_t>(seed);
        cfg.scenario.drops = detail::positive_int(r, "drops", 1);
        o.users = detail::positive_int(r, "users", o.users);
        o.pilot_length = detail::positive_int(r, "pilot_length", o.pilot_length);
        o.coherence = detail::positive_int(r, "coherence", o.coherence);
        o.topology.cells_per_side = detail::positive_int(r, "cells_per_side", 4);
        o.topology.cell_side = r.number("cell_side_m", o.topology.cell_side);
        o.topology.min_distance = r.number("min_distance_m", o.topology.min_distance);
        if (!(o.topology.cell_side > 0.0) || !(o.topology.min_distance >= 0.0) ||
            o.topology.min_distance >= 0.5 * o.topology.cell_side) {
            throw ValidationError(
                "config fields 'scenario.cell_side_m' / 'scenario.min_distance_m' must satisfy "
                "0 <= min_distance < cell_side / 2");
        }
        o.power_dbm_hz = r.number("power_dbm_hz", o.power_dbm_hz);
        o.noise_dbm_hz = r.number("noise_dbm_hz", o.noise_dbm_hz);
        o.shadow_param = r.number("shadow_param", o.shadow_param);
        if (!(o.shadow_param >= 0.0)) {
            throw ValidationError("config field 'scenario.shadow_param' must be >= 0");
        }
        const std::string reading = r.text("shadow_reading", "variance");
        if (reading == "variance") {
            o.shadow_reading = ShadowReading::variance;
        } else if (reading == "stddev") {
            o.shadow_reading = ShadowReading::stddev;
        } else {
            throw ValidationError(
                "config field 'scenario.shadow_reading' must be variance or stddev");
        }
        if (r.has("receiving_cells")) {
            const auto& cells = r.raw("receiving_cells");
            const int L = o.topology.cells();
            if (!cells.is_array() || cells.empty()) {
                throw ValidationError(
                    "config field 'scenario.receiving_cells' must be a nonempty array");
            }
            for (const auto& c : cells) {
                if (!c.is_number_integer() || c.get<int>() < 0 || c.get<int>() >= L) {
                    throw ValidationError("config field 'scenario.receiving_cells' entries must be "
                                          "cell indices in 0.." + std::to_string(L - 1));
                }
                cfg.scenario.receiving_cells.push_back(c.get<int>());
            }
            std::vector<int> sorted = cfg.scenario.receiving_cells;
            std::sort(sorted.begin(), sorted.end());
            if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
                throw ValidationError("config field 'scenario.receiving_cells' has duplicates");
            }
        }
        Dimensions d{o.topology.cells(), o.users, 1, o.pilot_length, o.coherence};
        if (auto issues = check_dimensions(d); !issues.empty()) {
            throw ValidationError("config block 'scenario': " + issues.front());
        }
        if (o.coherence <= o.pilot_length) {
            throw ValidationError("config block 'scenario': coherence must exceed pilot_length");
        }
        r.reject_unknown();
    }

    {
        const auto& hw = root.raw("hardware");
        if (!hw.is_array() || hw.empty()) {
            throw ValidationError("config field 'hardware' must be a nonempty array");
        }
        std::set<std::string> labels;
        for (std::size_t i = 0; i < hw.size(); ++i) {
            cfg.hardware.push_back(
                detail::parse_hardware(hw[i], "hardware[" + std::to_string(i) + "]"));
            if (!labels.insert(cfg.hardware.back().label).second) {
                throw ValidationError("config field 'hardware[" + std::to_string(i) +
                                      "].label' duplicates an earlier label");
            }
        }
    }

    {
        FieldReader r(root.raw("sweep"), "sweep");
        const auto& n = r.raw("antennas");
        if (!n.is_array() || n.empty()) {
            throw ValidationError("config field 'sweep.antennas' must be a nonempty array");
        }
        for (const auto& v : n) {
            if (!v.is_number_integer() || v.get<std::int64_t>() < 1 ||
                v.get<std::int64_t>() > std::numeric_limits<int>::max()) {
                throw ValidationError("config field 'sweep.antennas' entries must be integers >= 1");
            }
            const int N = v.get<int>();
            if (!cfg.sweep.antennas.empty() && N <= cfg.sweep.antennas.back()) {
                throw ValidationError("config field 'sweep.antennas' must be strictly ascending");
            }
            cfg.sweep.antennas.push_back(N);
        }
        if (r.has("pilots")) {
            cfg.sweep.pilots.clear();
            for (const auto& v : r.raw("pilots")) {
                if (!v.is_string()) {
                    throw ValidationError("config field 'sweep.pilots' entries must be strings");
                }
                const PilotKind k = detail::with_field(
                    "sweep.pilots", [&] { return parse_pilot_kind(v.get<std::string>()); });
                if (k == PilotKind::custom) {
                    throw ValidationError("config field 'sweep.pilots': custom pilots are not "
                                          "available in scenario experiments");
                }
                cfg.sweep.pilots.push_back(k);
            }
        }
        if (r.has("filters")) {
            cfg.sweep.filters.clear();
            for (const auto& v : r.raw("filters")) {
                if (!v.is_string()) {
                    throw ValidationError("config field 'sweep.filters' entries must be strings");
                }
                cfg.sweep.filters.push_back(detail::with_field(
                    "sweep.filters", [&] { return parse_filter_kind(v.get<std::string>()); }));
            }
        }
        if (cfg.sweep.pilots.empty() || cfg.sweep.filters.empty()) {
            throw ValidationError("config fields 'sweep.pilots' and 'sweep.filters' must be nonempty");
        }
        r.reject_unknown();
    }

    if (root.has("mc")) {
        FieldReader r(root.raw("mc"), "mc");
        cfg.mc.trials = detail::positive_int(r, "trials", cfg.mc.trials);
        cfg.mc.t_step = detail::positive_int(r, "t_step", cfg.mc.t_step);
        cfg.mc.full_t = r.boolean("full_t", cfg.mc.full_t);
        cfg.mc.threads = detail::positive_int(r, "threads", cfg.mc.threads);
        cfg.mc.max_antennas = detail::positive_int(r, "max_antennas", cfg.mc.max_antennas);
        r.reject_unknown();
    }

    if (root.has("output")) {
        FieldReader r(root.raw("output"), "output");
        cfg.output.csv = r.text("csv", cfg.output.csv);
        if (cfg.output.csv.empty()) {
            throw ValidationError("config field 'output.csv' must not be empty");
        }
        cfg.output.precision = detail::positive_int(r, "precision", 0, 0);
        if (cfg.output.precision > 17) {
            throw ValidationError("config field 'output.precision' must be <= 17");
        }
        cfg.output.per_user = r.boolean("per_user", false);
        if (r.has("law_t")) {
            cfg.output.law_t = detail::positive_int(r, "law_t", 1);
        }
        r.reject_unknown();
    }
    root.reject_unknown();
    return cfg;
}

/// Checks that the requested mode is feasible. Called after CLI overrides.
inline void check_feasible(const ExperimentConfig& cfg) {
    if (cfg.mode != RunMode::closed) {
        const int largest = cfg.sweep.antennas.back();
        if (largest > cfg.mc.max_antennas) {
            throw ValidationError("Monte Carlo at N=" + std::to_string(largest) +
                                  " is infeasible (mc.max_antennas=" +
                                  std::to_string(cfg.mc.max_antennas) +
                                  "); use --mode closed for large arrays");
        }
        if (cfg.mc.trials < 2) {
            throw ValidationError("Monte Carlo needs mc.trials >= 2");
        }
    }
    const ScenarioOptions& o = cfg.scenario.base;
    if (cfg.output.law_t && (*cfg.output.law_t <= o.pilot_length || *cfg.output.law_t > o.coherence)) {
        throw ValidationError("config field 'output.law_t' must lie in pilot_length+1..coherence");
    }
}

/// Parses config text, reporting JSON syntax errors with line and column.
inline ExperimentConfig parse_config_text(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        std::size_t line = 1;
        std::size_t col = 1;
        const std::size_t stop = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
        for (std::size_t i = 0; i < stop; ++i) {
            if (text[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        throw ValidationError("config syntax error at line " + std::to_string(line) + ", column " +
                              std::to_string(col) + ": " + e.what());
    }
    return parse_config(doc);
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ValidationError("cannot read config '" + path.string() + "'");
    }
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str());
}

/// One aggregated output row. Unset values are not applicable in the run mode.
struct SweepRow {
        int antennas = 0;
        PilotKind pilot = PilotKind::spatial_dft;
        FilterKind filter = FilterKind::mrc;
        std::string hw_label;
        std::optional<double> closed_form;
        std::optional<double> mc;
        std::optional<double> mc_std_error;
        std::optional<double> asymptotic;
};

struct UserRow {
        int antennas = 0;
        PilotKind pilot = PilotKind::spatial_dft;
        FilterKind filter = FilterKind::mrc;
        std::string hw_label;
        int drop = 0;
        int cell = 0;
        int user = 0;
        std::optional<double> closed_form;
        std::optional<double> mc;
        std::optional<double> mc_std_error;
};

struct ExperimentResult {
        std::vector<SweepRow> rows;
        std::vector<UserRow> users;
        std::vector<int> mc_t_samples;
};

namespace detail {

struct RowAccumulator {
        CompensatedSum closed;
        CompensatedSum mc;
        CompensatedSum mc_var;
        CompensatedSum asymptotic;
        bool asymptotic_inf = false;
};

inline std::vector<int> receiving_cells(const ExperimentConfig& cfg) {
    if (!cfg.scenario.receiving_cells.empty()) {
        return cfg.scenario.receiving_cells;
    }
    std::vector<int> all(cfg.scenario.base.topology.cells());
    std::iota(all.begin(), all.end(), 0);
    return all;
}

inline std::vector<int> mc_times(const ExperimentConfig& cfg) {
    const ScenarioOptions& o = cfg.scenario.base;
    return decimated_times(o.pilot_length, o.coherence, cfg.mc.full_t ? 1 : cfg.mc.t_step);
}

}  // namespace detail

/// Runs the sweep. Sum rates add R_jk over the evaluated users (scaled to all
/// L cells when a subset is configured) and average over the drops.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    check_feasible(cfg);
    const auto& sw = cfg.sweep;
    const std::vector<int> cells = detail::receiving_cells(cfg);
    const int L = cfg.scenario.base.topology.cells();
    const double scale = static_cast<double>(L) / static_cast<double>(cells.size());
    const bool want_closed = cfg.mode != RunMode::mc;
    const bool want_mc = cfg.mode != RunMode::closed;

    ExperimentResult result;
    if (want_mc) {
        result.mc_t_samples = detail::mc_times(cfg);
    }
    const std::size_t nN = sw.antennas.size();
    const std::size_t nP = sw.pilots.size();
    const std::size_t nF = sw.filters.size();
    const std::size_t nH = cfg.hardware.size();
    auto index = [&](std::size_t n, std::size_t p, std::size_t f, std::size_t h) {
        return ((n * nP + p) * nF + f) * nH + h;
    };
    std::vector<detail::RowAccumulator> acc(nN * nP * nF * nH);

    for (int drop = 0; drop < cfg.scenario.drops; ++drop) {
        ScenarioOptions opts = cfg.scenario.base;
        opts.drop = drop;
        opts.antennas = 1;
        const Scenario sc = build_scenario(opts);
        for (std::size_t p = 0; p < nP; ++p) {
            const PilotBook book = build_pilot_book(sw.pilots[p], sc.stats.dims, sc.stats.power);
            for (std::size_t h = 0; h < nH; ++h) {
                const HardwareSpec& spec = cfg.hardware[h];
                // Closed-form terms do not depend on N for fixed hardware.
                std::vector<std::vector<MrcTargetTerms>> cached;
                for (std::size_t n = 0; n < nN; ++n) {
                    const int N = sw.antennas[n];
                    NetworkStats stats = sc.stats;
                    stats.dims.antennas = N;
                    PilotBook bk = book;
                    bk.dims.antennas = N;
                    const CheckedConfig checked = validate(
                        stats, bk, spec.at(N), spec.scaled ? XiBound::relaxed : XiBound::strict);
                    if (!(checked.hardware.xi > 0.0)) {
                        throw ValidationError("hardware '" + spec.label + "' has xi = 0 at N=" +
                                              std::to_string(N));
                    }
                    const EstimatorContext ctx(checked.stats, checked.pilots, checked.hardware);
                    const int T = ctx.dims().coherence;

                    std::vector<std::vector<MrcTargetTerms>> terms;
                    const bool need_terms =
                        want_closed && std::find(sw.filters.begin(), sw.filters.end(),
                                                 FilterKind::mrc) != sw.filters.end();
                    if (need_terms) {
                        if (spec.scaled || cached.empty()) {
                            for (int j : cells) {
                                std::vector<MrcTargetTerms> row;
                                for (int k = 0; k < ctx.dims().users; ++k) {
                                    row.push_back(mrc_target_terms(ctx, j, k));
                                }
                                terms.push_back(std::move(row));
                            }
                            if (!spec.scaled) {
                                cached = terms;
                            }
                        } else {
                            terms = cached;
                        }
                    }

                    for (std::size_t f = 0; f < nF; ++f) {
                        const FilterKind filter = sw.filters[f];
                        detail::RowAccumulator& a = acc[index(n, p, f, h)];
                        std::vector<UserRow> users;
                        for (int j : cells) {
                            for (int k = 0; k < ctx.dims().users; ++k) {
                                users.push_back({N, sw.pilots[p], filter, spec.label, drop, j, k,
                                                 std::nullopt, std::nullopt, std::nullopt});
                            }
                        }
                        if (want_closed && filter == FilterKind::mrc) {
                            CompensatedSum sum;
                            CompensatedSum asym;
                            bool inf = false;
                            std::size_t u = 0;
                            for (const auto& row : terms) {
                                for (const MrcTargetTerms& t : row) {
                                    const double r = t.rate(N, T);
                                    users[u++].closed_form = r;
                                    sum.add(r);
                                    const double ar = asymptotic_user_rate(t, T);
                                    if (std::isinf(ar)) {
                                        inf = true;
                                    } else {
                                        asym.add(ar);
                                    }
                                }
                            }
                            a.closed.add(scale * sum.value());
                            a.asymptotic.add(scale * asym.value());
                            a.asymptotic_inf = a.asymptotic_inf || inf;
                        }
                        if (want_mc) {
                            TrialPlan plan;
                            plan.trials = cfg.mc.trials;
                            plan.t_samples = result.mc_t_samples;
                            plan.filter = filter;
                            plan.threads = cfg.mc.threads;
                            // Shared across hardware profiles and filters: paired comparisons.
                            plan.master_seed = derive_seed(
                                opts.seed, {static_cast<std::uint64_t>(drop),
                                            static_cast<std::uint64_t>(N),
                                            static_cast<std::uint64_t>(sw.pilots[p])});
                            CompensatedSum sum;
                            double var = 0.0;
                            std::size_t u = 0;
                            for (int j : cells) {
                                const auto mc = run_cell(ctx, plan, j);
                                std::vector<double> batch(mc.front().batch_rates.size(), 0.0);
                                for (const TargetMonteCarlo& r : mc) {
                                    users[u].mc = r.rate;
                                    users[u].mc_std_error = r.rate_std_error;
                                    ++u;
                                    sum.add(r.rate);
                                    for (std::size_t b = 0; b < batch.size(); ++b) {
                                        batch[b] += r.batch_rates[b];
                                    }
                                }
                                if (batch.size() >= 2) {
                                    const double mean = compensated_sum(batch) / batch.size();
                                    double ss = 0.0;
                                    for (double x : batch) {
                                        ss += (x - mean) * (x - mean);
                                    }
                                    var += ss / (batch.size() - 1.0) / batch.size();
                                }
                            }
                            a.mc.add(scale * sum.value());
                            a.mc_var.add(scale * scale * var);
                        }
                        if (cfg.output.per_user) {
                            for (auto& ur : users) {
                                result.users.push_back(std::move(ur));
                            }
                        }
                    }
                }
            }
        }
    }

    const double drops = cfg.scenario.drops;
    for (std::size_t n = 0; n < nN; ++n) {
        for (std::size_t p = 0; p < nP; ++p) {
            for (std::size_t f = 0; f < nF; ++f) {
                const bool has_closed = want_closed && sw.filters[f] == FilterKind::mrc;
                if (!has_closed && !want_mc) {
                    continue;  // no closed form for this filter
                }
                for (std::size_t h = 0; h < nH; ++h) {
                    const detail::RowAccumulator& a = acc[index(n, p, f, h)];
                    SweepRow row;
                    row.antennas = sw.antennas[n];
                    row.pilot = sw.pilots[p];
                    row.filter = sw.filters[f];
                    row.hw_label = cfg.hardware[h].label;
                    if (has_closed) {
                        row.closed_form = a.closed.value() / drops;
                        row.asymptotic = a.asymptotic_inf
                                             ? std::numeric_limits<double>::infinity()
                                             : a.asymptotic.value() / drops;
                    }
                    if (want_mc) {
                        row.mc = a.mc.value() / drops;
                        row.mc_std_error = std::sqrt(a.mc_var.value()) / drops;
                    }
                    result.rows.push_back(std::move(row));
                }
            }
        }
    }
    if (cfg.output.per_user) {
        // Drop-major generation order -> sweep order for readability.
        std::stable_sort(result.users.begin(), result.users.end(),
                         [](const UserRow& a, const UserRow& b) { return a.antennas < b.antennas; });
    }
    return result;
}

namespace detail {

inline CsvCell optional_cell(const std::optional<double>& v) {
    return v ? CsvCell(*v) : CsvCell(std::monostate{});
}

}  // namespace detail

inline CsvTable sweep_table(const ExperimentResult& res) {
    CsvTable t;
    t.header = {"N",           "pilot_kind",           "filter",
                "hw_mode",     "sum_rate_closed_form", "sum_rate_mc",
                "mc_stderr",   "sum_rate_asymptotic"};
    for (const SweepRow& r : res.rows) {
        t.rows.push_back({CsvCell(std::int64_t{r.antennas}), std::string(to_string(r.pilot)),
                          std::string(to_string(r.filter)), r.hw_label,
                          detail::optional_cell(r.closed_form), detail::optional_cell(r.mc),
                          detail::optional_cell(r.mc_std_error),
                          detail::optional_cell(r.asymptotic)});
    }
    return t;
}

inline CsvTable user_table(const ExperimentResult& res) {
    CsvTable t;
    t.header = {"N",    "pilot_kind", "filter", "hw_mode",          "drop",
                "cell", "user",       "rate_closed_form", "rate_mc", "rate_mc_stderr"};
    for (const UserRow& r : res.users) {
        t.rows.push_back({CsvCell(std::int64_t{r.antennas}), std::string(to_string(r.pilot)),
                          std::string(to_string(r.filter)), r.hw_label,
                          CsvCell(std::int64_t{r.drop}), CsvCell(std::int64_t{r.cell}),
                          CsvCell(std::int64_t{r.user}), detail::optional_cell(r.closed_form),
                          detail::optional_cell(r.mc), detail::optional_cell(r.mc_std_error)});
    }
    return t;
}

/// Writes the CSV tables and manifest.json into `out_dir`; returns the manifest.
inline nlohmann::json write_outputs(const ExperimentConfig& cfg, const ExperimentResult& res,
                                    const std::filesystem::path& out_dir, double wall_seconds) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) {
        throw IoError("cannot create output directory '" + out_dir.string() + "': " + ec.message());
    }
    const fs::path csv = out_dir / cfg.output.csv;
    emit_csv(sweep_table(res), csv, cfg.output.precision);
    std::vector<std::string> files{csv.filename().string()};
    if (cfg.output.per_user) {
        fs::path users = csv;
        users.replace_filename(csv.stem().string() + "_users.csv");
        emit_csv(user_table(res), users, cfg.output.precision);
        files.push_back(users.filename().string());
    }

    using nlohmann::json;
    const ScenarioOptions& o = cfg.scenario.base;
    json m;
    m["name"] = cfg.name;
    m["version"] = version;
    m["mode"] = std::string(to_string(cfg.mode));
    m["master_seed"] = o.seed;
    json drops = json::array();
    for (int d = 0; d < cfg.scenario.drops; ++d) {
        const auto du = static_cast<std::uint64_t>(d);
        drops.push_back({{"drop", d},
                         {"topology_seed", derive_seed(o.seed, Stream::topology, {du})},
                         {"shadowing_seed", derive_seed(o.seed, Stream::shadowing, {du})}});
    }
    m["drops"] = drops;
    m["receiving_cells"] = detail::receiving_cells(cfg);
    if (cfg.mode != RunMode::closed) {
        m["mc"] = {{"trials", cfg.mc.trials},
                   {"threads", cfg.mc.threads},
                   {"t_samples", res.mc_t_samples}};
    }
    const int law_t = cfg.output.law_t.value_or(o.coherence);
    json hw = json::array();
    for (const HardwareSpec& h : cfg.hardware) {
        json e{{"label", h.label}, {"kind", h.scaled ? "scaled" : "fixed"}};
        if (h.scaled) {
            const ScalingExponents& x = h.exponents;
            e["kappa0"] = x.kappa0;
            e["xi0"] = x.xi0;
            e["delta0"] = x.delta0;
            e["tau"] = {x.tau1, x.tau2, x.tau3};
            e["scaling_law_t"] = law_t;
            e["scaling_law_holds"] = scaling_law_holds(x, law_t, o.pilot_length);
        } else {
            e["kappa"] = h.fixed.kappa;
            e["xi"] = h.fixed.xi;
            e["delta"] = h.fixed.delta;
        }
        hw.push_back(e);
    }
    m["hardware"] = hw;
    m["outputs"] = files;
    m["wall_time_s"] = wall_seconds;

    const fs::path manifest = out_dir / "manifest.json";
    std::ofstream out(manifest, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open '" + manifest.string() + "' for writing");
    }
    out << m.dump(2) << '\n';
    if (!out) {
        throw IoError("failed writing '" + manifest.string() + "'");
    }
    return m;
}

}  // namespace hwmimo
