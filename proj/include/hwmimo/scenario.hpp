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

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numbers>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hwmimo/common.hpp"
#include "hwmimo/model.hpp"
#include "hwmimo/random.hpp"

// Multi-cell evaluation scenario: square cells on a torus, one UE per
// angular sector of each cell, 3GPP-style distance pathloss with log-normal
// shadowing.

namespace hwmimo {

struct Point {
        double x = 0.0;
        double y = 0.0;
};

/// Euclidean distance on a square torus of the given side.
inline double wrap_distance(Point a, Point b, double world_side) {
    double dx = std::abs(a.x - b.x);
    double dy = std::abs(a.y - b.y);
    dx = std::min(dx, world_side - dx);
    dy = std::min(dy, world_side - dy);
    return std::hypot(dx, dy);
}

struct TopologyParams {
        int cells_per_side = 4;
        double cell_side = 250.0;
        double min_distance = 35.0;

        [[nodiscard]] double world_side() const { return cells_per_side * cell_side; }
        [[nodiscard]] int cells() const { return cells_per_side * cells_per_side; }
};

struct Topology {
        TopologyParams params;
        /// BS at the center of each cell; cell l = row * cells_per_side + col.
        std::vector<Point> bs;
        /// ue[l][k] lies in sector k of cell l.
        std::vector<std::vector<Point>> ue;
};

/// Equal angular sector of `p` around `center`, counted counter-clockwise
/// from the positive x axis. The cell is split into `sectors` wedges.
inline int sector_of(Point p, Point center, int sectors) {
    double angle = std::atan2(p.y - center.y, p.x - center.x);
    if (angle < 0.0) {
        angle += 2.0 * std::numbers::pi;
    }
    const int s = static_cast<int>(angle / (2.0 * std::numbers::pi / sectors));
    return std::min(s, sectors - 1);
}

inline std::vector<Point> base_stations(const TopologyParams& params) {
    std::vector<Point> bs;
    for (int row = 0; row < params.cells_per_side; ++row) {
        for (int col = 0; col < params.cells_per_side; ++col) {
            bs.push_back({(col + 0.5) * params.cell_side, (row + 0.5) * params.cell_side});
        }
    }
    return bs;
}

/// One UE uniformly distributed in each sector of every cell, at least
/// `min_distance` from its serving BS (rejection sampling over the cell square).
inline Topology drop_users(const TopologyParams& params, int sectors, std::uint64_t seed) {
    if (sectors < 1) {
        throw ValidationError("at least one sector per cell is required");
    }
    Topology topo;
    topo.params = params;
    topo.bs = base_stations(params);
    Rng rng(seed);
    const double half = 0.5 * params.cell_side;
    for (const Point& c : topo.bs) {
        std::vector<Point> cell_ues;
        for (int k = 0; k < sectors; ++k) {
            Point p;
            do {
                const double ux = rng.uniform();
                const double uy = rng.uniform();
                p = {c.x - half + ux * params.cell_side, c.y - half + uy * params.cell_side};
            } while (sector_of(p, c, sectors) != k ||
                     std::hypot(p.x - c.x, p.y - c.y) < params.min_distance);
            cell_ues.push_back(p);
        }
        topo.ue.push_back(std::move(cell_ues));
    }
    return topo;
}

/// lambda = 10^(s - 1.53) / d^3.76 with d in meters and shadowing s.
inline double pathloss(double distance, double shadowing) {
    if (!(distance > 0.0)) {
        throw DomainError("pathloss requires a positive distance");
    }
    return std::pow(10.0, shadowing - 1.53) / std::pow(distance, 3.76);
}

/// How the 0.25 in the shadowing law N(0, 0.25) is read.
enum class ShadowReading { variance, stddev };

struct ScenarioOptions {
        std::uint64_t seed = 1;
        int drop = 0;
        int users = 8;
        int antennas = 100;
        int pilot_length = 8;
        int coherence = 500;
        double power_dbm_hz = -47.0;
        double noise_dbm_hz = -174.0;
        double shadow_param = 0.25;
        ShadowReading shadow_reading = ShadowReading::variance;
        PilotKind pilot_kind = PilotKind::spatial_dft;
        TopologyParams topology;
};

struct Scenario {
        ScenarioOptions options;
        NetworkStats stats;
        PilotBook pilots;
        Topology topology;
};

inline double shadow_stddev(const ScenarioOptions& o) {
    return o.shadow_reading == ShadowReading::variance ? std::sqrt(o.shadow_param) : o.shadow_param;
}

/// Builds the network statistics of one user drop. Powers are given in
/// dBm/Hz and normalized so that sigma^2 = 1 (only p / sigma^2 matters).
inline Scenario build_scenario(const ScenarioOptions& o) {
    Scenario sc;
    sc.options = o;
    Dimensions& d = sc.stats.dims;
    d.cells = o.topology.cells();
    d.users = o.users;
    d.antennas = o.antennas;
    d.pilot_length = o.pilot_length;
    d.coherence = o.coherence;
    if (auto issues = check_dimensions(d); !issues.empty()) {
        throw ValidationError("scenario dimensions: " + issues.front());
    }
    sc.topology = drop_users(
        o.topology, o.users,
        derive_seed(o.seed, Stream::topology, {static_cast<std::uint64_t>(o.drop)}));

    const double world = o.topology.world_side();
    const double sd = shadow_stddev(o);
    Rng shadow(derive_seed(o.seed, Stream::shadowing, {static_cast<std::uint64_t>(o.drop)}));
    sc.stats.lambda.assign(d.cells, RMat(d.cells, d.users));
    for (int j = 0; j < d.cells; ++j) {
        for (int l = 0; l < d.cells; ++l) {
            for (int k = 0; k < d.users; ++k) {
                const double dist = wrap_distance(sc.topology.bs[j], sc.topology.ue[l][k], world);
                sc.stats.lambda[j](l, k) = pathloss(dist, sd * shadow.normal());
            }
        }
    }
    sc.stats.sigma2 = 1.0;
    sc.stats.power =
        RMat::Constant(d.cells, d.users, db_to_linear(o.power_dbm_hz - o.noise_dbm_hz));
    sc.pilots = build_pilot_book(o.pilot_kind, d, sc.stats.power);
    return sc;
}

namespace detail {

inline double round_significant(double x, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", digits, x);
    return std::strtod(buf, nullptr);
}

}  // namespace detail

/// Scenario document: seed, dimensions, positions and the attenuation
/// tensor (row-major [j][l][k], 15 significant digits).
inline nlohmann::json scenario_to_json(const Scenario& sc) {
    using nlohmann::json;
    const ScenarioOptions& o = sc.options;
    const Dimensions& d = sc.stats.dims;
    json doc;
    doc["seed"] = o.seed;
    doc["drop"] = o.drop;
    doc["dims"] = {{"L", d.cells}, {"K", d.users}, {"N", d.antennas}, {"B", d.pilot_length},
                   {"T", d.coherence}};
    doc["pilot_kind"] = std::string(to_string(o.pilot_kind));
    doc["power_dbm_hz"] = o.power_dbm_hz;
    doc["noise_dbm_hz"] = o.noise_dbm_hz;
    doc["shadow"] = {{"param", o.shadow_param},
                     {"reading", o.shadow_reading == ShadowReading::variance ? "variance"
                                                                             : "stddev"}};
    doc["topology"] = {{"cells_per_side", o.topology.cells_per_side},
                       {"cell_side", o.topology.cell_side},
                       {"min_distance", o.topology.min_distance}};
    json bs = json::array();
    for (const Point& p : sc.topology.bs) {
        bs.push_back({p.x, p.y});
    }
    doc["bs_positions"] = bs;
    json ue = json::array();
    for (const auto& cell : sc.topology.ue) {
        json row = json::array();
        for (const Point& p : cell) {
            row.push_back({detail::round_significant(p.x, 15), detail::round_significant(p.y, 15)});
        }
        ue.push_back(row);
    }
    doc["ue_positions"] = ue;
    json lambda = json::array();
    for (int j = 0; j < d.cells; ++j) {
        for (int l = 0; l < d.cells; ++l) {
            for (int k = 0; k < d.users; ++k) {
                lambda.push_back(detail::round_significant(sc.stats.lambda[j](l, k), 15));
            }
        }
    }
    doc["lambda"] = lambda;
    return doc;
}

inline ScenarioOptions scenario_options_from_json(const nlohmann::json& doc) {
    ScenarioOptions o;
    o.seed = doc.at("seed").get<std::uint64_t>();
    o.drop = doc.at("drop").get<int>();
    const auto& dims = doc.at("dims");
    o.users = dims.at("K").get<int>();
    o.antennas = dims.at("N").get<int>();
    o.pilot_length = dims.at("B").get<int>();
    o.coherence = dims.at("T").get<int>();
    o.pilot_kind = parse_pilot_kind(doc.at("pilot_kind").get<std::string>());
    o.power_dbm_hz = doc.at("power_dbm_hz").get<double>();
    o.noise_dbm_hz = doc.at("noise_dbm_hz").get<double>();
    o.shadow_param = doc.at("shadow").at("param").get<double>();
    o.shadow_reading = doc.at("shadow").at("reading").get<std::string>() == "stddev"
                           ? ShadowReading::stddev
                           : ShadowReading::variance;
    const auto& topo = doc.at("topology");
    o.topology.cells_per_side = topo.at("cells_per_side").get<int>();
    o.topology.cell_side = topo.at("cell_side").get<double>();
    o.topology.min_distance = topo.at("min_distance").get<double>();
    return o;
}

/// Rebuilds a scenario from its stored attenuation tensor (not from the seed).
inline Scenario scenario_from_json(const nlohmann::json& doc) {
    Scenario sc;
    sc.options = scenario_options_from_json(doc);
    const ScenarioOptions& o = sc.options;
    Dimensions& d = sc.stats.dims;
    d.cells = o.topology.cells();
    d.users = o.users;
    d.antennas = o.antennas;
    d.pilot_length = o.pilot_length;
    d.coherence = o.coherence;
    const auto& lambda = doc.at("lambda");
    if (lambda.size() != static_cast<std::size_t>(d.cells) * d.cells * d.users) {
        throw ValidationError("scenario lambda tensor has the wrong size");
    }
    sc.stats.lambda.assign(d.cells, RMat(d.cells, d.users));
    std::size_t idx = 0;
    for (int j = 0; j < d.cells; ++j) {
        for (int l = 0; l < d.cells; ++l) {
            for (int k = 0; k < d.users; ++k) {
                sc.stats.lambda[j](l, k) = lambda[idx++].get<double>();
            }
        }
    }
    sc.topology.params = o.topology;
    for (const auto& p : doc.at("bs_positions")) {
        sc.topology.bs.push_back({p[0].get<double>(), p[1].get<double>()});
    }
    for (const auto& cell : doc.at("ue_positions")) {
        std::vector<Point> row;
        for (const auto& p : cell) {
            row.push_back({p[0].get<double>(), p[1].get<double>()});
        }
        sc.topology.ue.push_back(std::move(row));
    }
    sc.stats.sigma2 = 1.0;
    sc.stats.power =
        RMat::Constant(d.cells, d.users, db_to_linear(o.power_dbm_hz - o.noise_dbm_hz));
    sc.pilots = build_pilot_book(o.pilot_kind, d, sc.stats.power);
    return sc;
}

}  // namespace hwmimo
