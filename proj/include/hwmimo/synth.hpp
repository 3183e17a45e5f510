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
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hwmimo/common.hpp"
#include "hwmimo/model.hpp"
#include "hwmimo/random.hpp"

// Random draws of the uplink signal model
//
//   y_j(t) = D_phi_j(t) sum_l H_jl x_l(t) + upsilon_j(t) + eta_j(t)
//
// Every draw is a pure function of a 64-bit seed. Sub-streams are split by
// receiving BS, stream kind and channel use, so a (seed, j) pair yields the
// same channels whatever else is drawn.

namespace hwmimo {

/// Random draw of one BS's channels, channel from UE column l*K + k.
inline CMat draw_bs_channels(const NetworkStats& stats, int j, std::uint64_t seed) {
    const Dimensions& d = stats.dims;
    CMat H(d.antennas, d.total_users());
    Rng rng(derive_seed(seed, Stream::channel, {static_cast<std::uint64_t>(j)}));
    rng.fill_complex_normal(H);
    for (int l = 0; l < d.cells; ++l) {
        for (int k = 0; k < d.users; ++k) {
            H.col(d.flat(l, k)) *= std::sqrt(stats.attenuation(j, l, k));
        }
    }
    return H;
}

/// h_jlk ~ CN(0, lambda_jlk I_N), independent over (j, l, k, n).
inline std::vector<CMat> draw_channels(const NetworkStats& stats, std::uint64_t seed) {
    std::vector<CMat> out;
    out.reserve(stats.dims.cells);
    for (int j = 0; j < stats.dims.cells; ++j) {
        out.push_back(draw_bs_channels(stats, j, seed));
    }
    return out;
}

/// Samples the per-antenna Wiener phase of BS j at increasing channel uses
/// `times` (all >= 1), starting from phi(0) = 0. Column c of the result is
/// phi_j(times[c]). Increments over a gap of g channel uses are N(0, g delta).
inline RMat sample_phase_path(double delta, int antennas, std::span<const int> times, int j,
                              std::uint64_t seed) {
    if (delta < 0.0) {
        throw ValidationError("phase drift variance must be >= 0");
    }
    RMat phi(antennas, static_cast<Eigen::Index>(times.size()));
    Rng rng(derive_seed(seed, Stream::phase, {static_cast<std::uint64_t>(j)}));
    RVec current = RVec::Zero(antennas);
    int now = 0;
    for (std::size_t c = 0; c < times.size(); ++c) {
        const int gap = times[c] - now;
        if (gap < 1) {
            throw ValidationError("phase sample times must be strictly increasing and >= 1");
        }
        const double sd = std::sqrt(delta * gap);
        for (int n = 0; n < antennas; ++n) {
            current(n) += sd * rng.normal();
        }
        phi.col(static_cast<Eigen::Index>(c)) = current;
        now = times[c];
    }
    return phi;
}

/// Full phase trajectories phi_jn(t), t = 0..T: one N x (T+1) matrix per BS.
inline std::vector<RMat> draw_phase_trajectories(double delta, const Dimensions& dims,
                                                 std::uint64_t seed) {
    std::vector<int> times(dims.coherence);
    for (int t = 1; t <= dims.coherence; ++t) {
        times[t - 1] = t;
    }
    std::vector<RMat> out;
    out.reserve(dims.cells);
    for (int j = 0; j < dims.cells; ++j) {
        RMat phi(dims.antennas, dims.coherence + 1);
        phi.col(0).setZero();
        phi.rightCols(dims.coherence) = sample_phase_path(delta, dims.antennas, times, j, seed);
        out.push_back(std::move(phi));
    }
    return out;
}

enum class SymbolKind {
    /// Deterministic symbols: E|x|^2 = |x|^2.
    pilot,
    /// Gaussian codebook symbols at full power: E|x|^2 = p.
    data,
};

/// Received vector at one BS for one channel use.
///
/// `symbols` and `expected_power` are flattened over users (l*K + k). The
/// distortion noise has per-antenna variance
/// kappa^2 sum_lk E|x_lk|^2 |h_jlk^(n)|^2 for the given channels.
inline CVec receive_at_bs(const CMat& channels, const RVec& phase, const CVec& symbols,
                          const RVec& expected_power, const HardwareProfile& hw, double sigma2,
                          Rng& rng) {
    const Eigen::Index N = channels.rows();
    CVec y = channels * symbols;
    for (Eigen::Index n = 0; n < N; ++n) {
        y(n) *= Complex(std::cos(phase(n)), std::sin(phase(n)));
    }
    const RVec distortion_var =
        hw.kappa * hw.kappa * (channels.cwiseAbs2() * expected_power);
    for (Eigen::Index n = 0; n < N; ++n) {
        y(n) += rng.complex_normal(distortion_var(n));
    }
    const double noise_var = sigma2 * hw.xi;
    for (Eigen::Index n = 0; n < N; ++n) {
        y(n) += rng.complex_normal(noise_var);
    }
    return y;
}

inline std::uint64_t channel_use_seed(std::uint64_t seed, SymbolKind kind, int j, int t) {
    return derive_seed(seed, kind == SymbolKind::pilot ? Stream::pilot_noise : Stream::data_noise,
                       {static_cast<std::uint64_t>(j), static_cast<std::uint64_t>(t)});
}

/// One Monte Carlo draw of the whole network for one coherence block.
struct Realization {
        std::uint64_t seed = 0;
        /// channels[j] is N x (L K).
        std::vector<CMat> channels;
        /// phases[j] is N x (T + 1); column t holds phi_j(t).
        std::vector<RMat> phases;
        /// pilot_blocks[j] is N x B; column i holds y_j(i + 1).
        std::vector<CMat> pilot_blocks;
};

/// y_j(t) for every BS j given the symbols x (L x K) sent at channel use t.
inline std::vector<CVec> received_block(int t, const CMat& symbols, SymbolKind kind,
                                        const Realization& real, const HardwareProfile& hw,
                                        const NetworkStats& stats, std::uint64_t seed) {
    const Dimensions& d = stats.dims;
    if (t < 1 || t > d.coherence) {
        throw std::out_of_range("channel use t=" + std::to_string(t) + " outside 1.." +
                                std::to_string(d.coherence));
    }
    if (symbols.rows() != d.cells || symbols.cols() != d.users) {
        throw ValidationError("symbol matrix must be L x K");
    }
    CVec x(d.total_users());
    RVec expected(d.total_users());
    for (int l = 0; l < d.cells; ++l) {
        for (int k = 0; k < d.users; ++k) {
            x(d.flat(l, k)) = symbols(l, k);
            expected(d.flat(l, k)) =
                kind == SymbolKind::pilot ? std::norm(symbols(l, k)) : stats.power(l, k);
        }
    }
    std::vector<CVec> out;
    out.reserve(d.cells);
    for (int j = 0; j < d.cells; ++j) {
        Rng rng(channel_use_seed(seed, kind, j, t));
        out.push_back(receive_at_bs(real.channels[j], real.phases[j].col(t), x, expected, hw,
                                    stats.sigma2, rng));
    }
    return out;
}

/// Draws channels, full phase trajectories and the received pilot blocks.
inline Realization draw_realization(const NetworkStats& stats, const PilotBook& book,
                                    const HardwareProfile& hw, std::uint64_t seed) {
    const Dimensions& d = stats.dims;
    Realization r;
    r.seed = seed;
    r.channels = draw_channels(stats, seed);
    r.phases = draw_phase_trajectories(hw.delta, d, seed);
    r.pilot_blocks.assign(d.cells, CMat(d.antennas, d.pilot_length));
    const CMat X = book.matrix();
    for (int i = 1; i <= d.pilot_length; ++i) {
        CMat symbols(d.cells, d.users);
        for (int l = 0; l < d.cells; ++l) {
            for (int k = 0; k < d.users; ++k) {
                symbols(l, k) = X(d.flat(l, k), i - 1);
            }
        }
        auto ys = received_block(i, symbols, SymbolKind::pilot, r, hw, stats, seed);
        for (int j = 0; j < d.cells; ++j) {
            r.pilot_blocks[j].col(i - 1) = ys[j];
        }
    }
    return r;
}

/// The part of a realization one receiving BS needs for a Monte Carlo trial:
/// channels, pilot block, and the phase at a sparse set of data channel uses.
///
/// The channels and pilot block equal those of draw_realization(seed) for
/// BS j. Phases are sampled only at 1..B and `data_times`.
struct BsTrial {
        CMat channels;
        CMat pilot_block;
        /// N x |data_times|.
        RMat data_phases;
        /// kappa^2-free distortion power sum_lk p_lk |h_jlk^(n)|^2 during data.
        RVec data_signal_power;
};

inline BsTrial draw_bs_trial(const NetworkStats& stats, const CMat& pilot_matrix,
                             const HardwareProfile& hw, int j, std::span<const int> data_times,
                             std::uint64_t seed) {
    const Dimensions& d = stats.dims;
    const int B = d.pilot_length;
    BsTrial trial;
    trial.channels = draw_bs_channels(stats, j, seed);

    std::vector<int> times;
    times.reserve(B + data_times.size());
    for (int i = 1; i <= B; ++i) {
        times.push_back(i);
    }
    for (int t : data_times) {
        if (t <= B || t > d.coherence) {
            throw std::out_of_range("data channel use t=" + std::to_string(t) +
                                    " outside B+1..T");
        }
        times.push_back(t);
    }
    const RMat phi = sample_phase_path(hw.delta, d.antennas, times, j, seed);

    trial.pilot_block.resize(d.antennas, B);
    for (int i = 1; i <= B; ++i) {
        const CVec x = pilot_matrix.col(i - 1);
        const RVec expected = x.cwiseAbs2();
        Rng rng(channel_use_seed(seed, SymbolKind::pilot, j, i));
        trial.pilot_block.col(i - 1) =
            receive_at_bs(trial.channels, phi.col(i - 1), x, expected, hw, stats.sigma2, rng);
    }
    trial.data_phases = phi.rightCols(static_cast<Eigen::Index>(data_times.size()));

    RVec p(d.total_users());
    for (int l = 0; l < d.cells; ++l) {
        for (int k = 0; k < d.users; ++k) {
            p(d.flat(l, k)) = stats.power(l, k);
        }
    }
    trial.data_signal_power = trial.channels.cwiseAbs2() * p;
    return trial;
}

}  // namespace hwmimo
