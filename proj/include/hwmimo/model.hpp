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
#include <numbers>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "hwmimo/common.hpp"

namespace hwmimo {

/// Network dimensions. All counts are strictly positive and K <= B <= T.
struct Dimensions {
        int cells = 1;           // L
        int users = 1;           // K, users per cell
        int antennas = 1;        // N, BS antennas
        int pilot_length = 1;    // B
        int coherence = 1;       // T, channel uses per coherence block

        [[nodiscard]] int total_users() const { return cells * users; }
        [[nodiscard]] int flat(int l, int k) const { return l * users + k; }
};

/// Base-station hardware imperfections.
struct HardwareProfile {
        double delta = 0.0;  // phase-drift innovation variance [rad^2] per channel use
        double kappa = 0.0;  // EVM of the additive distortion noise
        double xi = 1.0;     // noise amplification factor

        static HardwareProfile ideal() { return {}; }
};

/// Imperfection growth with N: kappa^2 = kappa0^2 N^tau1, xi = xi0 N^tau2,
/// delta = delta0 (1 + tau3 ln N).
struct ScalingExponents {
        double tau1 = 0.0;
        double tau2 = 0.0;
        double tau3 = 0.0;
        double kappa0 = 0.0;
        double xi0 = 1.0;
        double delta0 = 0.0;
};

/// Second-order statistics of the network seen by every receiving BS.
struct NetworkStats {
        Dimensions dims;
        /// lambda[j](l, k): average attenuation from UE k in cell l to BS j.
        std::vector<RMat> lambda;
        /// power(l, k): per-channel-use transmit power of UE k in cell l.
        RMat power;
        double sigma2 = 1.0;

        [[nodiscard]] double attenuation(int j, int l, int k) const { return lambda[j](l, k); }

        /// Uniform attenuation/power network, convenient for tests and small studies.
        static NetworkStats uniform(const Dimensions& d, double lambda_value, double p,
                                    double sigma2 = 1.0) {
            NetworkStats s;
            s.dims = d;
            s.lambda.assign(d.cells, RMat::Constant(d.cells, d.users, lambda_value));
            s.power = RMat::Constant(d.cells, d.users, p);
            s.sigma2 = sigma2;
            return s;
        }
};

enum class PilotKind { spatial_dft, temporal, custom };

inline std::string_view to_string(PilotKind kind) {
    switch (kind) {
        case PilotKind::spatial_dft:
            return "spatial";
        case PilotKind::temporal:
            return "temporal";
        case PilotKind::custom:
            return "custom";
    }
    return "unknown";
}

inline PilotKind parse_pilot_kind(std::string_view name) {
    if (name == "spatial" || name == "spatial_dft" || name == "dft") {
        return PilotKind::spatial_dft;
    }
    if (name == "temporal") {
        return PilotKind::temporal;
    }
    if (name == "custom") {
        return PilotKind::custom;
    }
    throw UnsupportedError("unknown pilot kind '" + std::string(name) + "'");
}

/// Pilot sequences x_lk of length B for every UE in the network.
struct PilotBook {
        PilotKind kind = PilotKind::custom;
        Dimensions dims;
        /// sequences[l*K + k] has length B.
        std::vector<CVec> sequences;
        /// Users with equal reuse index transmit sequences of the same shape
        /// (the same DFT column or time slot); -1 when unknown.
        std::vector<int> reuse_index;

        [[nodiscard]] const CVec& sequence(int l, int k) const {
            return sequences[dims.flat(l, k)];
        }

        /// Rows are users (l*K + k), columns are pilot channel uses.
        [[nodiscard]] CMat matrix() const {
            CMat m(dims.total_users(), dims.pilot_length);
            for (int u = 0; u < dims.total_users(); ++u) {
                m.row(u) = sequences[u].transpose();
            }
            return m;
        }
};

/// Builds spatial (DFT) or temporally orthogonal pilots with sector-indexed
/// reuse: user k of every cell gets the same sequence shape.
///
/// Spatial: x_lk(i) = sqrt(p_lk) exp(-2 pi j i k / B), i.e. a DFT column with
/// per-symbol power p_lk. Temporal: x_lk(k) = sqrt(p_lk), zero elsewhere.
/// When K < B the first K columns/slots are used.
inline PilotBook build_pilot_book(PilotKind kind, const Dimensions& dims, const RMat& power) {
    if (dims.pilot_length < dims.users) {
        throw ValidationError("pilot length B=" + std::to_string(dims.pilot_length) +
                              " is shorter than the number of users K=" +
                              std::to_string(dims.users));
    }
    if (power.rows() != dims.cells || power.cols() != dims.users) {
        throw ValidationError("power matrix must be L x K");
    }
    const int B = dims.pilot_length;
    PilotBook book;
    book.kind = kind;
    book.dims = dims;
    book.sequences.reserve(dims.total_users());
    for (int l = 0; l < dims.cells; ++l) {
        for (int k = 0; k < dims.users; ++k) {
            const double amp = std::sqrt(power(l, k));
            CVec x = CVec::Zero(B);
            switch (kind) {
                case PilotKind::spatial_dft:
                    for (int i = 0; i < B; ++i) {
                        // Reduce i*k mod B first so the angle stays exact for large B.
                        const double angle = -2.0 * std::numbers::pi *
                                             static_cast<double>((i * k) % B) / B;
                        x(i) = amp * Complex(std::cos(angle), std::sin(angle));
                    }
                    break;
                case PilotKind::temporal:
                    x(k) = amp;
                    break;
                case PilotKind::custom:
                    throw UnsupportedError(
                        "custom pilot books are built with make_custom_pilot_book");
            }
            book.sequences.push_back(std::move(x));
            book.reuse_index.push_back(k);
        }
    }
    return book;
}

inline PilotBook make_custom_pilot_book(const Dimensions& dims, std::vector<CVec> sequences) {
    if (static_cast<int>(sequences.size()) != dims.total_users()) {
        throw ValidationError("custom pilot book needs L*K sequences");
    }
    PilotBook book;
    book.kind = PilotKind::custom;
    book.dims = dims;
    book.sequences = std::move(sequences);
    book.reuse_index.assign(dims.total_users(), -1);
    return book;
}

enum class XiBound {
    /// Simulation profiles: xi >= 1.
    strict,
    /// Scaling-law analysis inputs only need xi >= 0.
    relaxed,
};

inline std::vector<std::string> check_hardware(const HardwareProfile& hw,
                                               XiBound bound = XiBound::strict) {
    std::vector<std::string> issues;
    if (!(hw.delta >= 0.0) || !std::isfinite(hw.delta)) {
        issues.push_back("delta must be finite and >= 0");
    }
    if (!(hw.kappa >= 0.0) || !std::isfinite(hw.kappa)) {
        issues.push_back("kappa must be finite and >= 0");
    }
    const double xi_min = bound == XiBound::strict ? 1.0 : 0.0;
    if (!(hw.xi >= xi_min) || !std::isfinite(hw.xi)) {
        issues.push_back("xi must be finite and >= " + std::to_string(xi_min).substr(0, 3));
    }
    return issues;
}

inline std::vector<std::string> check_exponents(const ScalingExponents& e) {
    std::vector<std::string> issues;
    for (auto [name, v] : {std::pair{"tau1", e.tau1}, std::pair{"tau2", e.tau2},
                           std::pair{"tau3", e.tau3}, std::pair{"kappa0", e.kappa0},
                           std::pair{"xi0", e.xi0}, std::pair{"delta0", e.delta0}}) {
        if (!(v >= 0.0) || !std::isfinite(v)) {
            issues.push_back(std::string(name) + " must be finite and >= 0");
        }
    }
    return issues;
}

inline std::vector<std::string> check_dimensions(const Dimensions& d) {
    std::vector<std::string> issues;
    if (d.cells < 1 || d.users < 1 || d.antennas < 1 || d.pilot_length < 1 || d.coherence < 1) {
        issues.push_back("dimensions L, K, N, B, T must be >= 1");
    }
    if (d.users > d.pilot_length) {
        issues.push_back("K <= B violated");
    }
    if (d.pilot_length > d.coherence) {
        issues.push_back("B <= T violated");
    }
    return issues;
}

/// Validated configuration, normalized so that sigma^2 = 1.
///
/// Powers are divided by sigma^2 and pilots by sigma; every SINR, rate and
/// error coefficient c_jlk is unchanged by this rescaling.
struct CheckedConfig {
        NetworkStats stats;
        PilotBook pilots;
        HardwareProfile hardware;
        double original_sigma2 = 1.0;
};

inline CheckedConfig validate(const NetworkStats& stats, const PilotBook& book,
                              const HardwareProfile& hw, XiBound bound = XiBound::strict) {
    std::vector<std::string> issues = check_dimensions(stats.dims);
    for (auto& s : check_hardware(hw, bound)) {
        issues.push_back(std::move(s));
    }
    const Dimensions& d = stats.dims;
    if (issues.empty()) {
        if (static_cast<int>(stats.lambda.size()) != d.cells) {
            issues.push_back("lambda must hold one L x K matrix per receiving BS");
        } else {
            for (int j = 0; j < d.cells; ++j) {
                const RMat& lj = stats.lambda[j];
                if (lj.rows() != d.cells || lj.cols() != d.users) {
                    issues.push_back("lambda[" + std::to_string(j) + "] must be L x K");
                } else if (!(lj.array() > 0.0).all() || !lj.allFinite()) {
                    issues.push_back("lambda[" + std::to_string(j) + "] has entries <= 0");
                }
            }
        }
        if (stats.power.rows() != d.cells || stats.power.cols() != d.users) {
            issues.push_back("power must be L x K");
        } else if (!(stats.power.array() >= 0.0).all() || !stats.power.allFinite()) {
            issues.push_back("power has negative entries");
        }
        if (!(stats.sigma2 > 0.0) || !std::isfinite(stats.sigma2)) {
            issues.push_back("sigma2 must be > 0");
        }
        const Dimensions& bd = book.dims;
        if (bd.cells != d.cells || bd.users != d.users || bd.pilot_length != d.pilot_length ||
            static_cast<int>(book.sequences.size()) != d.total_users()) {
            issues.push_back("pilot book dimensions do not match the network");
        }
    }
    if (issues.empty()) {
        const int B = d.pilot_length;
        constexpr double cap_tol = 1e-12;
        for (int l = 0; l < d.cells; ++l) {
            for (int k = 0; k < d.users; ++k) {
                const CVec& x = book.sequence(l, k);
                if (x.size() != B) {
                    issues.push_back("pilot (" + std::to_string(l) + "," + std::to_string(k) +
                                     ") has wrong length");
                    continue;
                }
                const double cap = stats.power(l, k) * (1.0 + cap_tol);
                for (int i = 0; i < B; ++i) {
                    if (std::norm(x(i)) > cap) {
                        issues.push_back("pilot (" + std::to_string(l) + "," +
                                         std::to_string(k) + ") exceeds its power cap");
                        break;
                    }
                }
            }
            if (book.kind == PilotKind::spatial_dft) {
                for (int k = 0; k < d.users; ++k) {
                    for (int m = k + 1; m < d.users; ++m) {
                        const CVec& a = book.sequence(l, k);
                        const CVec& b = book.sequence(l, m);
                        if (std::abs(a.dot(b)) > 1e-12 * a.norm() * b.norm()) {
                            issues.push_back("spatial pilots of cell " + std::to_string(l) +
                                             " are not orthogonal");
                        }
                    }
                }
            } else if (book.kind == PilotKind::temporal) {
                std::vector<int> used(B, 0);
                for (int k = 0; k < d.users; ++k) {
                    const CVec& x = book.sequence(l, k);
                    int nonzero = 0;
                    for (int i = 0; i < B; ++i) {
                        if (x(i) != Complex(0.0, 0.0)) {
                            ++nonzero;
                            ++used[i];
                        }
                    }
                    if (nonzero != 1) {
                        issues.push_back("temporal pilot must have exactly one nonzero entry");
                    }
                }
                for (int u : used) {
                    if (u > 1) {
                        issues.push_back("temporal pilots of cell " + std::to_string(l) +
                                         " share a time slot");
                    }
                }
            }
        }
    }
    if (!issues.empty()) {
        std::ostringstream msg;
        msg << "invalid configuration:";
        for (const auto& s : issues) {
            msg << "\n  - " << s;
        }
        throw ValidationError(msg.str());
    }

    CheckedConfig out{stats, book, hw, stats.sigma2};
    const double s2 = stats.sigma2;
    out.stats.power /= s2;
    out.stats.sigma2 = 1.0;
    const double amp = 1.0 / std::sqrt(s2);
    for (auto& x : out.pilots.sequences) {
        x *= amp;
    }
    return out;
}

}  // namespace hwmimo
