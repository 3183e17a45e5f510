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
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "hwmimo/common.hpp"
#include "hwmimo/estimation.hpp"
#include "hwmimo/model.hpp"

// Closed-form uplink performance with MRC (v = hhat_jjk(t)).
//
// N never enters as a dimension here, only as the scalars N and N(N-1), so
// any array size can be evaluated at the cost of a few B x B products.

namespace hwmimo {

/// Expectations entering the SINR of UE (j, k) at channel use t under MRC.
struct MrcMoments {
        double norm2 = 0.0;       // E{||v||^2}
        double first = 0.0;       // E{v^H h_jjk(t)}, always equal to norm2
        RMat second;              // second(l, m) = E{|v^H h_jlm(t)|^2}
        double distortion = 0.0;  // E{|v^H upsilon_j(t)|^2}
        /// second(j, k) - first^2, evaluated without the N^2 cancellation.
        double target_excess = 0.0;
};

inline MrcMoments mrc_moments(const EstimatorContext& ctx, int j, int k, int t, double antennas) {
    const Dimensions& d = ctx.dims();
    if (t <= d.pilot_length) {
        throw DomainError("MRC moments are defined for data channel uses t > B (t=" +
                          std::to_string(t) + ")");
    }
    const NetworkStats& stats = ctx.stats();
    const double N = antennas;
    const double kappa2 = ctx.hardware().kappa * ctx.hardware().kappa;
    const RVec decay = ctx.decay(t);
    const CVec w = ctx.whitened_pilot(j, j, k, t);
    const double lam = stats.attenuation(j, j, k);
    const double lam2 = lam * lam;
    const CVec dx_self = decay.cwiseProduct(ctx.pilots().sequence(j, k));
    const double q_self = dx_self.dot(w).real();

    MrcMoments m;
    m.norm2 = N * lam2 * q_self;
    m.first = m.norm2;
    m.second.resize(d.cells, d.users);
    double distortion = 0.0;
    double q_self_gram = 0.0;
    for (int l = 0; l < d.cells; ++l) {
        for (int mm = 0; mm < d.users; ++mm) {
            const double lam_lm = stats.attenuation(j, l, mm);
            const double quad = w.dot(ctx.gram(l, mm) * w).real();
            const Complex cross = w.dot(decay.cwiseProduct(ctx.pilots().sequence(l, mm)));
            const double incoherent = lam_lm * m.norm2 + N * lam2 * lam_lm * lam_lm * quad;
            m.second(l, mm) = incoherent + N * (N - 1.0) * lam2 * lam_lm * lam_lm * std::norm(cross);
            distortion += stats.power(l, mm) * incoherent;
            if (l == j && mm == k) {
                q_self_gram = quad;
            }
        }
    }
    m.distortion = kappa2 * distortion;
    m.target_excess = lam * m.norm2 + N * lam2 * lam2 * (q_self_gram - q_self * q_self);
    return m;
}

inline MrcMoments mrc_moments(const EstimatorContext& ctx, int j, int k, int t) {
    return mrc_moments(ctx, j, k, t, static_cast<double>(ctx.dims().antennas));
}

/// SINR of UE (j, k) from its MRC moments. Zero pilot energy gives 0.
inline double sinr_closed_form(const MrcMoments& m, const NetworkStats& stats,
                               const HardwareProfile& hw, int j, int k) {
    if (!(m.norm2 > 0.0)) {
        return 0.0;
    }
    const Dimensions& d = stats.dims;
    double interference = stats.power(j, k) * m.target_excess;
    for (int l = 0; l < d.cells; ++l) {
        for (int mm = 0; mm < d.users; ++mm) {
            if (l != j || mm != k) {
                interference += stats.power(l, mm) * m.second(l, mm);
            }
        }
    }
    const double signal = stats.power(j, k) * m.first * m.first;
    return signal / (interference + m.distortion + stats.sigma2 * hw.xi * m.norm2);
}

/// R = (1/T) sum_{t=B+1}^{T} log2(1 + SINR(t)) in bit per channel use.
inline double ergodic_rate(std::span<const double> sinr, int coherence, int pilot_length) {
    if (static_cast<int>(sinr.size()) != coherence - pilot_length) {
        throw ValidationError("ergodic_rate expects one SINR per data channel use (T - B values)");
    }
    CompensatedSum acc;
    for (double s : sinr) {
        acc.add(std::log2(1.0 + s));
    }
    return acc.value() / coherence;
}

namespace detail {

// Pilot contamination below this fraction of the signal term is roundoff.
inline constexpr double contamination_floor = 1e-20;

}  // namespace detail

/// Large-N limit of the MRC SINR: only pilot contamination remains.
/// Returns +inf when the contamination term vanishes.
inline double sinr_asymptotic(const EstimatorContext& ctx, int j, int k, int t) {
    const Dimensions& d = ctx.dims();
    const NetworkStats& stats = ctx.stats();
    const RVec decay = ctx.decay(t);
    const CVec w = ctx.whitened_pilot(j, j, k, t);
    const double lam = stats.attenuation(j, j, k);
    const double q_self = decay.cwiseProduct(ctx.pilots().sequence(j, k)).dot(w).real();
    const double signal = stats.power(j, k) * lam * lam * q_self * q_self;
    if (!(signal > 0.0)) {
        return 0.0;
    }
    double contamination = 0.0;
    for (int l = 0; l < d.cells; ++l) {
        for (int m = 0; m < d.users; ++m) {
            if (l == j && m == k) {
                continue;
            }
            const double lam_lm = stats.attenuation(j, l, m);
            const Complex cross = w.dot(decay.cwiseProduct(ctx.pilots().sequence(l, m)));
            contamination += stats.power(l, m) * lam_lm * lam_lm * std::norm(cross);
        }
    }
    if (contamination <= detail::contamination_floor * signal) {
        return std::numeric_limits<double>::infinity();
    }
    return signal / contamination;
}

/// Aggregated closed-form terms of one UE, evaluated at the reference time
/// t = B. Every moment depends on t only through rho^2 = exp(-delta (t - B)),
/// which makes SINR(N, t) an O(1) evaluation.
struct MrcTargetTerms {
        double signal_gain = 0.0;    // p_jk lambda_jjk^2
        double q_self = 0.0;         // x^H D Psi^-1 D x at t = B
        double total_load = 0.0;     // sum_lm p_lm lambda_jlm
        double gram_load = 0.0;      // sum_lm p_lm lambda_jlm^2 w^H X_lm w
        double contamination = 0.0;  // sum_{(l,m) != (j,k)} p lambda^2 |x_jk^H D Psi^-1 D x_lm|^2
        double kappa2 = 0.0;
        double noise = 1.0;          // sigma^2 xi
        double delta = 0.0;
        int pilot_length = 1;

        [[nodiscard]] double rho2(int t) const {
            return std::exp(-delta * static_cast<double>(t - pilot_length));
        }

        [[nodiscard]] double sinr(double antennas, int t) const {
            if (!(q_self > 0.0)) {
                return 0.0;
            }
            const double r2 = rho2(t);
            const double lam2_q2 = signal_gain * q_self * q_self;
            const double denom = (1.0 + kappa2) * (total_load * q_self + gram_load) +
                                 (antennas - 1.0) * r2 * contamination - r2 * lam2_q2 +
                                 noise * q_self;
            return antennas * r2 * lam2_q2 / denom;
        }

        [[nodiscard]] double asymptotic_sinr() const {
            const double s = signal_gain * q_self * q_self;
            if (!(s > 0.0)) {
                return 0.0;
            }
            if (contamination <= detail::contamination_floor * s) {
                return std::numeric_limits<double>::infinity();
            }
            return s / contamination;
        }

        /// Ergodic rate over the block for a given N.
        [[nodiscard]] double rate(double antennas, int coherence) const {
            CompensatedSum acc;
            for (int t = pilot_length + 1; t <= coherence; ++t) {
                acc.add(std::log2(1.0 + sinr(antennas, t)));
            }
            return acc.value() / coherence;
        }
};

inline MrcTargetTerms mrc_target_terms(const EstimatorContext& ctx, int j, int k) {
    const Dimensions& d = ctx.dims();
    const NetworkStats& stats = ctx.stats();
    const int B = d.pilot_length;
    const RVec decay = ctx.decay(B);
    const CVec w = ctx.whitened_pilot(j, j, k, B);
    const double lam = stats.attenuation(j, j, k);

    MrcTargetTerms terms;
    terms.pilot_length = B;
    terms.delta = ctx.hardware().delta;
    terms.kappa2 = ctx.hardware().kappa * ctx.hardware().kappa;
    terms.noise = stats.sigma2 * ctx.hardware().xi;
    terms.signal_gain = stats.power(j, k) * lam * lam;
    terms.q_self = decay.cwiseProduct(ctx.pilots().sequence(j, k)).dot(w).real();
    for (int l = 0; l < d.cells; ++l) {
        for (int m = 0; m < d.users; ++m) {
            const double p = stats.power(l, m);
            const double lam_lm = stats.attenuation(j, l, m);
            terms.total_load += p * lam_lm;
            terms.gram_load += p * lam_lm * lam_lm * w.dot(ctx.gram(l, m) * w).real();
            if (l != j || m != k) {
                const Complex cross = w.dot(decay.cwiseProduct(ctx.pilots().sequence(l, m)));
                terms.contamination += p * lam_lm * lam_lm * std::norm(cross);
            }
        }
    }
    return terms;
}

/// Closed-form MRC rate of every UE in the listed receiving cells (all
/// cells when empty), indexed [cell position][k].
inline std::vector<std::vector<double>> mrc_user_rates(const EstimatorContext& ctx,
                                                       double antennas,
                                                       std::span<const int> cells = {}) {
    const Dimensions& d = ctx.dims();
    std::vector<int> all;
    if (cells.empty()) {
        for (int j = 0; j < d.cells; ++j) {
            all.push_back(j);
        }
        cells = all;
    }
    std::vector<std::vector<double>> rates;
    for (int j : cells) {
        std::vector<double> r(d.users);
        for (int k = 0; k < d.users; ++k) {
            r[k] = mrc_target_terms(ctx, j, k).rate(antennas, d.coherence);
        }
        rates.push_back(std::move(r));
    }
    return rates;
}

inline double sum_of(const std::vector<std::vector<double>>& per_user) {
    CompensatedSum acc;
    for (const auto& cell : per_user) {
        for (double r : cell) {
            acc.add(r);
        }
    }
    return acc.value();
}

/// Rate obtained with the large-N SINR at every data channel use; +inf when
/// any UE is free of pilot contamination.
inline double asymptotic_user_rate(const MrcTargetTerms& terms, int coherence) {
    const double s = terms.asymptotic_sinr();
    if (std::isinf(s)) {
        return s;
    }
    return (coherence - terms.pilot_length) * std::log2(1.0 + s) / coherence;
}

/// Sufficient condition for a non-vanishing MRC SINR at channel use t when
/// the imperfections grow with N: max(tau1, tau2) + delta0 (t - B) tau3 / 2 <= 1/2.
inline bool scaling_law_holds(const ScalingExponents& e, int t, int pilot_length) {
    return std::max(e.tau1, e.tau2) + 0.5 * e.delta0 * static_cast<double>(t - pilot_length) * e.tau3 <=
           0.5;
}

/// Hardware profile at array size N: kappa = kappa0 N^(tau1/2),
/// xi = xi0 N^tau2, delta = delta0 (1 + tau3 ln N).
inline HardwareProfile apply_scaling(const ScalingExponents& e, double antennas) {
    if (antennas < 1.0) {
        throw DomainError("apply_scaling requires N >= 1");
    }
    HardwareProfile hw;
    hw.kappa = e.kappa0 * std::pow(antennas, 0.5 * e.tau1);
    hw.xi = e.xi0 * std::pow(antennas, e.tau2);
    hw.delta = e.delta0 * (1.0 + e.tau3 * std::log(antennas));
    return hw;
}

}  // namespace hwmimo
