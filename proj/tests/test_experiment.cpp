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

#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "hwmimo/csv.hpp"
#include "hwmimo/experiment.hpp"

namespace hwmimo {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("hwmimo_test_" + name);
    fs::remove_all(p);
    return p;
}

json small_config() {
    return json::parse(R"({
        "name": "small",
        "mode": "closed",
        "scenario": {"seed": 3, "drops": 2, "users": 2, "pilot_length": 2, "coherence": 60,
                     "cells_per_side": 2},
        "hardware": [
            {"kind": "fixed", "label": "ideal"},
            {"kind": "fixed", "label": "impaired", "kappa": 0.05, "xi": 3, "delta": 4.7e-5},
            {"kind": "scaled", "label": "scaled", "kappa0": 0.05, "xi0": 3, "delta0": 4.7e-5,
             "tau1": 0.25, "tau2": 0.25, "tau3": 0.25}
        ],
        "sweep": {"antennas": [4, 8, 16], "pilots": ["spatial", "temporal"], "filters": ["mrc"]}
    })");
}

TEST(Csv, SingleRowHasHeaderAndRecord) {
    CsvTable t;
    t.header = {"a", "b"};
    t.rows.push_back({CsvCell(std::int64_t{7}), CsvCell(0.1)});
    EXPECT_EQ(to_csv(t, 0), "a,b\r\n7,0.1\r\n");
}

TEST(Csv, NonFiniteEmptyAndQuoted) {
    CsvTable t;
    t.header = {"x", "y", "z"};
    t.rows.push_back({CsvCell(std::numeric_limits<double>::infinity()), CsvCell(std::monostate{}),
                      CsvCell(std::string("say \"hi\", ok"))});
    EXPECT_EQ(to_csv(t, 0), "x,y,z\r\ninf,,\"say \"\"hi\"\", ok\"\r\n");
}

TEST(Csv, PrecisionAndRoundTrip) {
    EXPECT_EQ(format_number(1.0 / 3.0, 4), "0.3333");
    const double x = 0.1 + 0.2;
    EXPECT_EQ(std::stod(format_number(x, 0)), x);
    CsvTable bad;
    bad.header = {"a"};
    bad.rows.push_back({CsvCell(1.0), CsvCell(2.0)});
    EXPECT_THROW(to_csv(bad, 0), ValidationError);
}

TEST(Config, ParsesDefaultsAndFields) {
    const ExperimentConfig cfg = parse_config(small_config());
    EXPECT_EQ(cfg.name, "small");
    EXPECT_EQ(cfg.scenario.drops, 2);
    EXPECT_EQ(cfg.scenario.base.topology.cells(), 4);
    ASSERT_EQ(cfg.hardware.size(), 3u);
    EXPECT_TRUE(cfg.hardware[2].scaled);
    EXPECT_DOUBLE_EQ(cfg.hardware[1].fixed.xi, 3.0);
    EXPECT_EQ(cfg.sweep.pilots.size(), 2u);
    EXPECT_EQ(cfg.output.csv, "sum_rate.csv");
}

void expect_rejected(const json& doc, const std::string& needle) {
    try {
        const ExperimentConfig cfg = parse_config(doc);
        check_feasible(cfg);
        ADD_FAILURE() << "accepted; expected error mentioning " << needle;
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
}

TEST(Config, RejectsBadFields) {
    json doc = small_config();
    doc["sweep"]["antennas"] = json::array();
    expect_rejected(doc, "sweep.antennas");

    doc = small_config();
    doc["sweep"]["antennas"] = {8, 4};
    expect_rejected(doc, "ascending");

    doc = small_config();
    doc["scenario"]["colour"] = "blue";
    expect_rejected(doc, "scenario.colour");

    doc = small_config();
    doc["hardware"][1]["kappa"] = -0.1;
    expect_rejected(doc, "hardware[1]");

    doc = small_config();
    doc["hardware"][1]["label"] = "ideal";
    expect_rejected(doc, "label");

    doc = small_config();
    doc["sweep"]["filters"] = {"zf"};
    expect_rejected(doc, "sweep.filters");

    doc = small_config();
    doc["scenario"]["users"] = 3;
    expect_rejected(doc, "scenario");

    doc = small_config();
    doc["mode"] = "mc";
    doc["sweep"]["antennas"] = {100, 100000};
    expect_rejected(doc, "--mode closed");

    doc = small_config();
    doc["output"] = {{"law_t", 1}};
    expect_rejected(doc, "law_t");
}

TEST(Config, SyntaxErrorReportsLine) {
    const std::string text = "{\n  \"name\": \"x\",\n  \"mode\": closed\n}\n";
    try {
        parse_config_text(text);
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
    }
}

TEST(Experiment, ClosedModeRowsAndOrdering) {
    const ExperimentConfig cfg = parse_config(small_config());
    const ExperimentResult res = run_experiment(cfg);
    ASSERT_EQ(res.rows.size(), 3u * 2u * 3u);
    for (const SweepRow& r : res.rows) {
        ASSERT_TRUE(r.closed_form.has_value());
        EXPECT_FALSE(r.mc.has_value());
        EXPECT_GT(*r.closed_form, 0.0);
        EXPECT_GE(*r.asymptotic, *r.closed_form * (1.0 - 1e-12));
    }
    // Impaired hardware never beats ideal at the same N and pilots.
    for (std::size_t i = 0; i < res.rows.size(); i += 3) {
        EXPECT_LE(*res.rows[i + 1].closed_form, *res.rows[i].closed_form);
    }
}

TEST(Experiment, MmseRowsOnlyWithMonteCarlo) {
    json doc = small_config();
    doc["sweep"]["filters"] = {"mrc", "mmse"};
    const ExperimentResult closed = run_experiment(parse_config(doc));
    for (const SweepRow& r : closed.rows) {
        EXPECT_EQ(r.filter, FilterKind::mrc);
    }

    doc["mode"] = "both";
    doc["mc"] = {{"trials", 200}, {"t_step", 20}};
    doc["sweep"]["antennas"] = {8};
    doc["sweep"]["pilots"] = {"spatial"};
    const ExperimentResult both = run_experiment(parse_config(doc));
    ASSERT_EQ(both.rows.size(), 2u * 3u);
    for (const SweepRow& r : both.rows) {
        EXPECT_TRUE(r.mc.has_value());
        EXPECT_GT(*r.mc_std_error, 0.0);
        EXPECT_EQ(r.closed_form.has_value(), r.filter == FilterKind::mrc);
    }
}

TEST(Experiment, OutputsAreByteIdenticalAcrossRunsAndThreads) {
    json doc = small_config();
    doc["mode"] = "both";
    doc["mc"] = {{"trials", 300}, {"t_step", 20}};
    doc["sweep"]["antennas"] = {4, 8};
    doc["output"] = {{"per_user", true}, {"csv", "out.csv"}};
    ExperimentConfig cfg = parse_config(doc);

    const fs::path a = scratch("a");
    const fs::path b = scratch("b");
    write_outputs(cfg, run_experiment(cfg), a, 0.0);
    cfg.mc.threads = 3;
    write_outputs(cfg, run_experiment(cfg), b, 0.0);
    EXPECT_EQ(slurp(a / "out.csv"), slurp(b / "out.csv"));
    EXPECT_EQ(slurp(a / "out_users.csv"), slurp(b / "out_users.csv"));

    const std::string csv = slurp(a / "out.csv");
    EXPECT_EQ(csv.rfind("N,pilot_kind,filter,hw_mode,sum_rate_closed_form,sum_rate_mc,mc_stderr,"
                        "sum_rate_asymptotic\r\n",
                        0),
              0u);
    const json manifest = json::parse(slurp(a / "manifest.json"));
    EXPECT_EQ(manifest.at("master_seed"), 3);
    EXPECT_EQ(manifest.at("drops").size(), 2u);
    EXPECT_TRUE(manifest.at("hardware")[2].at("scaling_law_holds").get<bool>());
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST(Experiment, ReceivingSubsetScalesSumRate) {
    json doc = small_config();
    doc["hardware"] = json::array({{{"kind", "fixed"}, {"label", "ideal"}}});
    doc["sweep"]["pilots"] = {"temporal"};
    const ExperimentResult all = run_experiment(parse_config(doc));
    double per_cell = 0.0;
    for (int j = 0; j < 4; ++j) {
        doc["scenario"]["receiving_cells"] = {j};
        per_cell += *run_experiment(parse_config(doc)).rows[0].closed_form / 4.0;
    }
    EXPECT_NEAR(per_cell, *all.rows[0].closed_form, 1e-9 * per_cell);
}

TEST(Experiment, WideClosedFormSweepIsFast) {
    json doc = json::parse(R"({
        "scenario": {"seed": 1, "drops": 1},
        "hardware": [{"kind": "fixed", "kappa": 0.05, "xi": 3, "delta": 4.7e-5}],
        "sweep": {"antennas": [1, 10, 100, 1000, 10000, 100000, 1000000, 10000000],
                  "pilots": ["spatial", "temporal"]}
    })");
    const auto start = std::chrono::steady_clock::now();
    const ExperimentResult res = run_experiment(parse_config(doc));
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    EXPECT_LT(secs, 10.0);
    ASSERT_EQ(res.rows.size(), 16u);
    for (std::size_t i = 1; i < 8; ++i) {
        EXPECT_GE(*res.rows[2 * i].closed_form, *res.rows[2 * (i - 1)].closed_form);
    }
}

}  // namespace
}  // namespace hwmimo
