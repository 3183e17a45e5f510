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
#include <atomic>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "hwmimo/common.hpp"
#include "hwmimo/estimation.hpp"
#include "hwmimo/model.hpp"
#include "hwmimo/random.hpp"
#include "hwmimo/synth.hpp"

namespace hwmimo {

enum class FilterKind { mrc, approx_mmse };

inline std::string_view to_string(FilterKind f) {
    return f == FilterKind::mrc ? "mrc" : "mmse";
}

inline FilterKind parse_filter_kind(std::string_view name) {
    if (name == "mrc") {
        return FilterKind::mrc;
    }
    if (name == "mmse" || name == "approx_mmse") {
        return FilterKind::approx_mmse;
    }
    throw UnsupportedError("unknown filter '" + std::string(name) + "'");
}

/// Every `step`-th data channel use starting at B+1, always including T.
inline std::vector<int> decimated_times(int pilot_length, int coherence, int step) {
    if (step < 1) {
        throw ValidationError("t decimation step must be >= 1");
    }
    std::vector<int> times;
    for (int t = pilot_length + 1; t <= coherence; t += step) {
        times.push_back(t);
    }
    if (!times.empty() && times.back() != coherence) {
        times.push_back(coherence);
    }
    return times;
}

struct TrialPlan {
        int trials = 100000;
        std::uint64_t master_seed = 1;
        /// Data channel uses (within B+1..T, increasing) where moments are sampled.
        std::vector<int> t_samples;
        FilterKind filter = FilterKind::mrc;
        /// Worker threads; results do not depend on this value.
        int threads = 1;
};

struct MomentEstimate {
        double mean = 0.0;
        double std_error = 0.0;
};

/// Sample-mean estimates of the expectations in the SINR of one UE at one t.
struct EmpiricalMoments {
        int t = 0;
        MomentEstimate norm2;
        Complex first;
        double first_std_error = 0.0;
        RMat second;
        RMat second_std_error;
        MomentEstimate distortion;
        double sinr = 0.0;
};

struct TargetMonteCarlo {
        int cell = 0;
        int user = 0;
        std::vector<EmpiricalMoments> samples;
        /// Ergodic rate with log2(1 + SINR) interpolated linearly between samples.
        double rate = 0.0;
        /// Batch-means standard error of `rate`.
        double rate_std_error = 0.0;
        /// Rate of each batch of consecutive trials (same batches for every UE).
        std::vector<double> batch_rates;
};

/// Approximate MMSE receive filter for UE (j, k), solved directly:
/// v = (sum_lm p_lm (G_lm + kappa^2 diag(G_lm)) + sigma^2 xi I)^{-1} hhat_jjk
/// with G_lm = hhat_lm hhat_lm^H + c_lm I.
inline CVec approx_mmse_filter(const CMat& estimates, const RVec& error_coeffs,
                               const NetworkStats& stats, const HardwareProfile& hw, int j,
                               int k) {
    const Dimensions& d = stats.dims;
    const Eigen::Index N = estimates.rows();
    const double kappa2 = hw.kappa * hw.kappa;
    CMat A = CMat::Zero(N, N);
    RVec diag = RVec::Constant(N, stats.sigma2 * hw.xi);
    for (int l = 0; l < d.cells; ++l) {
        for (int m = 0; m < d.users; ++m) {
            const int u = d.flat(l, m);
            const double p = stats.power(l, m);
            A.selfadjointView<Eigen::Lower>().rankUpdate(estimates.col(u), p);
            diag.array() += p * (1.0 + kappa2) * error_coeffs(u) +
                            p * kappa2 * estimates.col(u).cwiseAbs2().array();
        }
    }
    A.diagonal() += diag.cast<Complex>();
    return A.selfadjointView<Eigen::Lower>().llt().solve(estimates.col(d.flat(j, k)));
}

namespace detail {

/// Quantities of the LMMSE predictor at one data channel use, shared by all trials.
struct TimeSlice {
        int t = 0;
        CMat weights;             // B x LK, hhat = Y * weights
        CMat mmse_core;           // weights P weights^H
        double error_load = 0.0;  // sum_lm p_lm c_lm(t)
};

}  // namespace detail

/// Same filter as approx_mmse_filter for every UE listed in `users` of cell
/// j, using that all LMMSE estimates lie in the span of the B received pilot
/// vectors. With Y the pilot block, W the estimator weights (hhat = Y W),
/// core M = W P W^H and Dg the diagonal part, the matrix equals Dg + Y M Y^H and
/// (Dg + Y M Y^H)^{-1} Y = Dg^{-1} Y (I + M Y^H Dg^{-1} Y)^{-1}.
inline CMat approx_mmse_filters_lowrank(const CMat& pilot_block, const CMat& core,
                                        double error_load, const HardwareProfile& hw, double sigma2,
                                        const CMat& target_weights) {
    const Eigen::Index B = pilot_block.cols();
    const double kappa2 = hw.kappa * hw.kappa;
    const CMat YM = pilot_block * core;
    RVec dg = (YM.cwiseProduct(pilot_block.conjugate())).rowwise().sum().real();
    dg = (kappa2 * dg.array() + (1.0 + kappa2) * error_load + sigma2 * hw.xi).matrix();
    const RVec inv = dg.cwiseInverse();
    const CMat scaled = inv.asDiagonal() * pilot_block;
    const CMat gram = pilot_block.adjoint() * scaled;
    const CMat system = CMat::Identity(B, B) + core * gram;
    const CMat coeffs = system.partialPivLu().solve(target_weights);
    return scaled * coeffs;
}

namespace detail {

struct MomentAccumulator {
        CompensatedSum sum;
        CompensatedSum sum_sq;

        void add(double x) {
            sum.add(x);
            sum_sq.add(x * x);
        }

        void merge(const MomentAccumulator& o) {
            sum.merge(o.sum);
            sum_sq.merge(o.sum_sq);
        }

        [[nodiscard]] MomentEstimate estimate(double n) const {
            const double mean = sum.value() / n;
            const double var = std::max(0.0, (sum_sq.value() - n * mean * mean) / (n - 1.0));
            return {mean, std::sqrt(var / n)};
        }
};

/// Running sums for one (user, t) pair.
struct TargetAccumulator {
        MomentAccumulator norm2;
        CompensatedSum first_re;
        CompensatedSum first_im;
        CompensatedSum first_abs2;
        std::vector<MomentAccumulator> second;
        MomentAccumulator distortion;

        explicit TargetAccumulator(int users = 0) : second(users) {}

        void merge(const TargetAccumulator& o) {
            norm2.merge(o.norm2);
            first_re.merge(o.first_re);
            first_im.merge(o.first_im);
            first_abs2.merge(o.first_abs2);
            for (std::size_t u = 0; u < second.size(); ++u) {
                second[u].merge(o.second[u]);
            }
            distortion.merge(o.distortion);
        }
};

struct CellAccumulator {
        double count = 0.0;
        /// Indexed [t sample][user position].
        std::vector<std::vector<TargetAccumulator>> targets;

        CellAccumulator(std::size_t times, std::size_t users, int total_users)
            : targets(times, std::vector<TargetAccumulator>(users, TargetAccumulator(total_users))) {}

        void merge(const CellAccumulator& o) {
            count += o.count;
            for (std::size_t s = 0; s < targets.size(); ++s) {
                for (std::size_t u = 0; u < targets[s].size(); ++u) {
                    targets[s][u].merge(o.targets[s][u]);
                }
            }
        }
};

inline EmpiricalMoments finalize_moments(const TargetAccumulator& acc, double n, int t,
                                         const NetworkStats& stats, const HardwareProfile& hw,
                                         int j, int k) {
    const Dimensions& d = stats.dims;
    EmpiricalMoments m;
    m.t = t;
    m.norm2 = acc.norm2.estimate(n);
    m.first = Complex(acc.first_re.value() / n, acc.first_im.value() / n);
    const double first_var =
        std::max(0.0, (acc.first_abs2.value() - n * std::norm(m.first)) / (n - 1.0));
    m.first_std_error = std::sqrt(first_var / n);
    m.second.resize(d.cells, d.users);
    m.second_std_error.resize(d.cells, d.users);
    double interference = 0.0;
    for (int l = 0; l < d.cells; ++l) {
        for (int mm = 0; mm < d.users; ++mm) {
            const MomentEstimate e = acc.second[d.flat(l, mm)].estimate(n);
            m.second(l, mm) = e.mean;
            m.second_std_error(l, mm) = e.std_error;
            interference += stats.power(l, mm) * e.mean;
        }
    }
    m.distortion = acc.distortion.estimate(n);
    const double signal = stats.power(j, k) * std::norm(m.first);
    const double denom =
        interference - signal + m.distortion.mean + stats.sigma2 * hw.xi * m.norm2.mean;
    m.sinr = (signal > 0.0 && denom > 0.0) ? signal / denom : 0.0;
    return m;
}

}  // namespace detail

/// Rate from SINR samples at increasing data channel uses: log2(1 + SINR) is
/// linearly interpolated between samples and held constant outside them.
inline double interpolated_rate(std::span<const int> times, std::span<const double> sinr,
                                int pilot_length, int coherence) {
    if (times.empty() || times.size() != sinr.size()) {
        throw ValidationError("interpolated_rate needs one SINR per sample time");
    }
    CompensatedSum acc;
    std::size_t s = 0;
    for (int t = pilot_length + 1; t <= coherence; ++t) {
        while (s + 1 < times.size() && times[s + 1] <= t) {
            ++s;
        }
        double value;
        if (t <= times.front()) {
            value = std::log2(1.0 + sinr.front());
        } else if (t >= times.back()) {
            value = std::log2(1.0 + sinr.back());
        } else {
            const double f0 = std::log2(1.0 + sinr[s]);
            const double f1 = std::log2(1.0 + sinr[s + 1]);
            const double w = static_cast<double>(t - times[s]) / (times[s + 1] - times[s]);
            value = f0 + w * (f1 - f0);
        }
        acc.add(value);
    }
    return acc.value() / coherence;
}

/// Monte Carlo estimate of every SINR expectation for UEs `users` (all when
/// empty) of receiving cell j.
///
/// Trials are grouped in fixed-size chunks whose partial sums are merged in
/// chunk order, so the output is bit-identical for any thread count.
inline std::vector<TargetMonteCarlo> run_cell(const EstimatorContext& ctx, const TrialPlan& plan,
                                              int j, std::span<const int> users = {}) {
    const Dimensions& d = ctx.dims();
    const NetworkStats& stats = ctx.stats();
    const HardwareProfile& hw = ctx.hardware();
    if (plan.trials < 2) {
        throw ValidationError("Monte Carlo needs at least 2 trials for standard errors");
    }
    if (plan.t_samples.empty()) {
        throw ValidationError("Monte Carlo needs at least one sample time");
    }
    for (std::size_t s = 0; s < plan.t_samples.size(); ++s) {
        const int t = plan.t_samples[s];
        if (t <= d.pilot_length || t > d.coherence ||
            (s > 0 && t <= plan.t_samples[s - 1])) {
            throw ValidationError("t samples must be increasing and within B+1..T");
        }
    }
    std::vector<int> targets(users.begin(), users.end());
    if (targets.empty()) {
        targets.resize(d.users);
        std::iota(targets.begin(), targets.end(), 0);
    }
    const int LK = d.total_users();
    const std::size_t nt = plan.t_samples.size();
    const double kappa2 = hw.kappa * hw.kappa;

    RVec power(LK);
    for (int l = 0; l < d.cells; ++l) {
        for (int m = 0; m < d.users; ++m) {
            power(d.flat(l, m)) = stats.power(l, m);
        }
    }
    std::vector<detail::TimeSlice> slices(nt);
    std::vector<CMat> target_weights(nt);
    for (std::size_t s = 0; s < nt; ++s) {
        auto& sl = slices[s];
        sl.t = plan.t_samples[s];
        sl.weights = ctx.weight_matrix(j, sl.t);
        sl.mmse_core = sl.weights * power.asDiagonal() * sl.weights.adjoint();
        for (int l = 0; l < d.cells; ++l) {
            for (int m = 0; m < d.users; ++m) {
                sl.error_load += stats.power(l, m) * ctx.error_coefficient(j, l, m, sl.t);
            }
        }
        target_weights[s].resize(d.pilot_length, static_cast<Eigen::Index>(targets.size()));
        for (std::size_t u = 0; u < targets.size(); ++u) {
            target_weights[s].col(static_cast<Eigen::Index>(u)) =
                sl.weights.col(d.flat(j, targets[u]));
        }
    }
    const CMat pilot_matrix = ctx.pilots().matrix();

    const int chunk_size = std::clamp(plan.trials / 20, 1, 64);
    const int chunks = (plan.trials + chunk_size - 1) / chunk_size;
    std::vector<detail::CellAccumulator> partial(
        chunks, detail::CellAccumulator(nt, targets.size(), LK));

    auto run_chunk = [&](int c) {
        detail::CellAccumulator& acc = partial[c];
        const int begin = c * chunk_size;
        const int end = std::min(plan.trials, begin + chunk_size);
        for (int trial = begin; trial < end; ++trial) {
            const std::uint64_t seed =
                derive_seed(plan.master_seed, {static_cast<std::uint64_t>(trial)});
            const BsTrial bt = draw_bs_trial(stats, pilot_matrix, hw, j, plan.t_samples, seed);
            acc.count += 1.0;
            for (std::size_t s = 0; s < nt; ++s) {
                const detail::TimeSlice& sl = slices[s];
                CMat V;
                if (plan.filter == FilterKind::mrc) {
                    V = bt.pilot_block * target_weights[s];
                } else {
                    V = approx_mmse_filters_lowrank(bt.pilot_block, sl.mmse_core,
                                                    sl.error_load, hw, stats.sigma2,
                                                    target_weights[s]);
                }
                // v^H D_phi(t) h = (D_phi(t)^* v)^H h
                CMat rotated = V;
                for (Eigen::Index n = 0; n < V.rows(); ++n) {
                    const double ph = bt.data_phases(n, static_cast<Eigen::Index>(s));
                    rotated.row(n) *= Complex(std::cos(ph), -std::sin(ph));
                }
                const CMat Z = rotated.adjoint() * bt.channels;

                CVec upsilon = CVec::Zero(V.rows());
                if (kappa2 > 0.0) {
                    Rng rng(channel_use_seed(seed, SymbolKind::data, j, sl.t));
                    for (Eigen::Index n = 0; n < V.rows(); ++n) {
                        upsilon(n) = rng.complex_normal(kappa2 * bt.data_signal_power(n));
                    }
                }
                const CVec vu = V.adjoint() * upsilon;
                for (std::size_t u = 0; u < targets.size(); ++u) {
                    const auto ui = static_cast<Eigen::Index>(u);
                    detail::TargetAccumulator& ta = acc.targets[s][u];
                    ta.norm2.add(V.col(ui).squaredNorm());
                    const Complex f = Z(ui, d.flat(j, targets[u]));
                    ta.first_re.add(f.real());
                    ta.first_im.add(f.imag());
                    ta.first_abs2.add(std::norm(f));
                    for (int v = 0; v < LK; ++v) {
                        ta.second[v].add(std::norm(Z(ui, v)));
                    }
                    ta.distortion.add(std::norm(vu(ui)));
                }
            }
        }
    };

    const int workers = std::max(1, std::min(plan.threads, chunks));
    if (workers == 1) {
        for (int c = 0; c < chunks; ++c) {
            run_chunk(c);
        }
    } else {
        std::atomic<int> next{0};
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (int c = next++; c < chunks; c = next++) {
                    run_chunk(c);
                }
            });
        }
    }

    // Fixed batches of consecutive chunks for the batch-means rate error.
    const int batches = std::min(10, chunks);
    std::vector<detail::CellAccumulator> batch_acc(batches,
                                                   detail::CellAccumulator(nt, targets.size(), LK));
    for (int c = 0; c < chunks; ++c) {
        batch_acc[static_cast<std::size_t>(c) * batches / chunks].merge(partial[c]);
    }
    detail::CellAccumulator total(nt, targets.size(), LK);
    for (const auto& b : batch_acc) {
        total.merge(b);
    }

    std::vector<TargetMonteCarlo> out;
    out.reserve(targets.size());
    for (std::size_t u = 0; u < targets.size(); ++u) {
        TargetMonteCarlo res;
        res.cell = j;
        res.user = targets[u];
        std::vector<double> sinr(nt);
        for (std::size_t s = 0; s < nt; ++s) {
            res.samples.push_back(detail::finalize_moments(total.targets[s][u], total.count,
                                                           plan.t_samples[s], stats, hw, j,
                                                           targets[u]));
            sinr[s] = res.samples.back().sinr;
        }
        res.rate = interpolated_rate(plan.t_samples, sinr, d.pilot_length, d.coherence);
        if (batches >= 2) {
            std::vector<double> rates(batches);
            for (int b = 0; b < batches; ++b) {
                for (std::size_t s = 0; s < nt; ++s) {
                    sinr[s] = detail::finalize_moments(batch_acc[b].targets[s][u],
                                                       batch_acc[b].count, plan.t_samples[s],
                                                       stats, hw, j, targets[u])
                                  .sinr;
                }
                rates[b] = interpolated_rate(plan.t_samples, sinr, d.pilot_length, d.coherence);
            }
            const double mean = compensated_sum(rates) / batches;
            double ss = 0.0;
            for (double r : rates) {
                ss += (r - mean) * (r - mean);
            }
            res.rate_std_error = std::sqrt(ss / (batches - 1.0) / batches);
            res.batch_rates = std::move(rates);
        }
        out.push_back(std::move(res));
    }
    return out;
}

/// Empirical SINR expectations for a single UE (j, k).
inline TargetMonteCarlo empirical_sinr(const TrialPlan& plan, const EstimatorContext& ctx, int j,
                                       int k) {
    const int users[] = {k};
    return run_cell(ctx, plan, j, users).front();
}

}  // namespace hwmimo
