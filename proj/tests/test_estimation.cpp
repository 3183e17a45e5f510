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

#include <cmath>

#include <Eigen/Dense>
#include <unsupported/Eigen/KroneckerProduct>

#include "hwmimo/estimation.hpp"
#include "hwmimo/random.hpp"
#include "hwmimo/synth.hpp"

namespace hwmimo {
namespace {

TEST(PhaseDecay, Examples) {
    EXPECT_EQ(phase_decay(7, 3, 0.0), RVec::Ones(3));
    const RVec d = phase_decay(2, 2, 0.2);
    EXPECT_NEAR(d(0), 0.904837418035960, 1e-14);
    EXPECT_DOUBLE_EQ(d(1), 1.0);
    EXPECT_NEAR(phase_decay(11, 1, 0.1)(0), 0.606530659712633, 1e-14);
    EXPECT_THROW(phase_decay(1, 2, 0.1), DomainError);
}

TEST(PilotGram, Examples) {
    const CVec x = (CVec(2) << 1.0, 1.0).finished();
    const CVec y = (CVec(3) << Complex(1, 2), Complex(0, -1), Complex(0.5, 0.5)).finished();
    EXPECT_LT((pilot_gram(y, 0.0, 0.0) - y * y.adjoint()).norm(), 1e-15);
    const CMat g1 = pilot_gram(x, 0.1, 0.0);
    EXPECT_NEAR(g1(0, 0).real(), 1.01, 1e-15);
    EXPECT_NEAR(g1(1, 1).real(), 1.01, 1e-15);
    EXPECT_NEAR(g1(0, 1).real(), 1.0, 1e-15);
    const CMat g2 = pilot_gram(x, 0.0, 0.2);
    EXPECT_NEAR(g2(0, 1).real(), 0.904837418035960, 1e-14);
    EXPECT_NEAR(g2(0, 0).real(), 1.0, 1e-15);
}

TEST(Psi, Examples) {
    const std::vector<CMat> grams{pilot_gram(CVec::Ones(1), 0.0, 0.0)};
    EXPECT_NEAR(psi_matrix(RMat::Ones(1, 1), grams, 1.0, 1.0)(0, 0).real(), 2.0, 1e-15);

    const CVec x = (CVec(3) << Complex(1, 1), 2.0, Complex(0, -1)).finished();
    const std::vector<CMat> g0{pilot_gram(x, 0.0, 0.01), pilot_gram(2.0 * x, 0.0, 0.01)};
    const std::vector<CMat> gk{pilot_gram(x, 0.05, 0.01), pilot_gram(2.0 * x, 0.05, 0.01)};
    const RMat lambda = (RMat(1, 2) << 0.3, 0.7).finished();
    const CMat diff = psi_matrix(lambda, gk, 2.0, 1.5) - psi_matrix(lambda, g0, 2.0, 1.5);
    const RVec expected = 0.05 * 0.05 *
                          (0.3 * x.cwiseAbs2() + 0.7 * (2.0 * x).cwiseAbs2());
    EXPECT_LT((diff - CMat(expected.cast<Complex>().asDiagonal())).norm(), 1e-14);

    const CMat noise_only = psi_matrix(RMat::Constant(1, 2, 1e-300), g0, 3.0, 2.0);
    EXPECT_LT((noise_only - 6.0 * CMat::Identity(3, 3)).norm(), 1e-12);
}

NetworkStats small_stats(int L, int K, int B, int N, int T) {
    NetworkStats s;
    s.dims = {L, K, N, B, T};
    Rng rng(99 + L * 7 + K);
    for (int j = 0; j < L; ++j) {
        RMat lj(L, K);
        for (int l = 0; l < L; ++l) {
            for (int k = 0; k < K; ++k) {
                lj(l, k) = (l == j ? 1.0 : 0.2) * (0.5 + rng.uniform());
            }
        }
        s.lambda.push_back(lj);
    }
    s.power = RMat::Constant(L, K, 2.0);
    return s;
}

TEST(Lmmse, ScalarExample) {
    const NetworkStats s = NetworkStats::uniform({1, 1, 1, 1, 5}, 1.0, 1.0);
    const PilotBook book = build_pilot_book(PilotKind::temporal, s.dims, s.power);
    const EstimatorContext ctx(s, book, {});
    CMat psi(1, 1);
    psi(0, 0) = Complex(0.8, -1.4);
    const ChannelEstimate e = lmmse_estimate(psi, ctx, 0, 0, 0, 1);
    EXPECT_NEAR(std::abs(e.hhat(0) - psi(0, 0) / 2.0), 0.0, 1e-15);
    EXPECT_NEAR(e.c, 0.5, 1e-15);
    EXPECT_NEAR(e.mse, 0.5, 1e-15);
}

TEST(Lmmse, ZeroPilotGivesPrior) {
    const Dimensions d{1, 2, 3, 2, 10};
    const NetworkStats s = NetworkStats::uniform(d, 0.7, 1.0);
    const PilotBook book = make_custom_pilot_book(d, {(CVec(2) << 1.0, 0.0).finished(), CVec::Zero(2)});
    const EstimatorContext ctx(s, book, {0.01, 0.1, 1.0});
    const CMat Y = CMat::Random(3, 2);
    const ChannelEstimate e = lmmse_estimate(Y, ctx, 0, 0, 1, 5);
    EXPECT_EQ(e.hhat.norm(), 0.0);
    EXPECT_DOUBLE_EQ(e.c, 0.7);
}

TEST(Lmmse, FullyDecorrelatedPhaseGivesPrior) {
    const Dimensions d{1, 1, 2, 2, 10};
    const NetworkStats s = NetworkStats::uniform(d, 0.9, 1.0);
    const PilotBook book = build_pilot_book(PilotKind::spatial_dft, d, s.power);
    const EstimatorContext ctx(s, book, {200.0, 0.0, 1.0});
    const ChannelEstimate e = lmmse_estimate(CMat::Random(2, 2), ctx, 0, 0, 0, 10);
    EXPECT_LT(e.hhat.norm(), 1e-100);
    EXPECT_NEAR(e.c, 0.9, 1e-12);
}

TEST(Lmmse, TimeBeforePilotEndRejected) {
    const NetworkStats s = NetworkStats::uniform({1, 1, 1, 3, 5}, 1.0, 1.0);
    const EstimatorContext ctx(s, build_pilot_book(PilotKind::temporal, s.dims, s.power), {});
    EXPECT_THROW(lmmse_estimate(CMat::Zero(1, 3), ctx, 0, 0, 0, 2), DomainError);
}

// Textbook MMSE estimator for y = sum x_lk (x) h_lk + n, built with explicit
// Kronecker products over the stacked NB-dimensional observation.
CVec textbook_estimate(const NetworkStats& s, const PilotBook& book, int j, int l, int k,
                       const CMat& Y) {
    const int N = s.dims.antennas;
    const int B = s.dims.pilot_length;
    const CMat I = CMat::Identity(N, N);
    CMat cov = s.sigma2 * CMat::Identity(N * B, N * B);
    for (int a = 0; a < s.dims.cells; ++a) {
        for (int m = 0; m < s.dims.users; ++m) {
            const CVec& x = book.sequence(a, m);
            const CMat xx = x * x.adjoint();
            cov += s.attenuation(j, a, m) * Eigen::kroneckerProduct(xx, I).eval();
        }
    }
    const CRowVec xh = book.sequence(l, k).adjoint();
    const CMat cross = s.attenuation(j, l, k) * Eigen::kroneckerProduct(xh, I).eval();
    CVec psi(N * B);
    for (int i = 0; i < B; ++i) {
        psi.segment(i * N, N) = Y.col(i);
    }
    return cross * cov.ldlt().solve(psi);
}

TEST(Lmmse, MatchesTextbookEstimatorWithoutImpairments) {
    for (int cfg = 0; cfg < 6; ++cfg) {
        const int L = 1 + cfg % 2;
        const int K = 1 + cfg % 3 / 2;
        const int B = 2 + cfg % 3;
        const NetworkStats s = small_stats(L, K, B, 3, 12);
        const PilotBook book = build_pilot_book(
            cfg % 2 ? PilotKind::spatial_dft : PilotKind::temporal, s.dims, s.power);
        const EstimatorContext ctx(s, book, {});
        Rng rng(cfg);
        CMat Y(3, B);
        rng.fill_complex_normal(Y);
        for (int l = 0; l < L; ++l) {
            for (int k = 0; k < K; ++k) {
                const CVec ref = textbook_estimate(s, book, 0, l, k, Y);
                const CVec got = lmmse_estimate(Y, ctx, 0, l, k, B + 3).hhat;
                EXPECT_LT((got - ref).norm(), 1e-12 * ref.norm()) << "cfg " << cfg;
            }
        }
    }
}

TEST(Lmmse, BatchMatchesSingle) {
    const NetworkStats s = small_stats(2, 2, 3, 5, 20);
    const PilotBook book = build_pilot_book(PilotKind::spatial_dft, s.dims, s.power);
    const EstimatorContext ctx(s, book, {0.02, 0.1, 2.0});
    CMat Y(5, 3);
    Rng rng(4);
    rng.fill_complex_normal(Y);
    const BatchEstimate all = lmmse_estimate_all(Y, ctx, 1, 9);
    for (int l = 0; l < 2; ++l) {
        for (int k = 0; k < 2; ++k) {
            const ChannelEstimate e = lmmse_estimate(Y, ctx, 1, l, k, 9);
            EXPECT_LT((all.hhat.col(s.dims.flat(l, k)) - e.hhat).norm(), 1e-13);
            EXPECT_DOUBLE_EQ(all.c(s.dims.flat(l, k)), e.c);
        }
    }
}

TEST(EstimatorContext, StructuralInvariants) {
    const NetworkStats s = small_stats(2, 2, 4, 3, 30);
    const HardwareProfile hw{0.03, 0.2, 2.5};
    const EstimatorContext ctx(s, build_pilot_book(PilotKind::spatial_dft, s.dims, s.power), hw);
    for (int j = 0; j < 2; ++j) {
        EXPECT_LT((ctx.psi(j) - ctx.psi(j).adjoint()).norm(), 1e-14);
        const Eigen::SelfAdjointEigenSolver<CMat> eig(ctx.psi(j) - 2.5 * CMat::Identity(4, 4));
        EXPECT_GE(eig.eigenvalues().minCoeff(), -1e-12);
        for (int l = 0; l < 2; ++l) {
            for (int k = 0; k < 2; ++k) {
                const Eigen::SelfAdjointEigenSolver<CMat> g(ctx.gram(l, k));
                EXPECT_GE(g.eigenvalues().minCoeff(), -1e-12);
                for (int t = 4; t <= 30; t += 13) {
                    const double c = ctx.error_coefficient(j, l, k, t);
                    EXPECT_GE(c, 0.0);
                    EXPECT_LE(c, s.attenuation(j, l, k));
                }
            }
        }
    }
    for (int t = 4; t <= 30; ++t) {
        EXPECT_GT(ctx.decay(t).minCoeff(), 0.0);
        EXPECT_LE(ctx.decay(t).maxCoeff(), 1.0);
    }
}

TEST(EstimatorContext, ErrorNonIncreasingInPilotPower) {
    const Dimensions d{2, 1, 1, 3, 10};
    NetworkStats s = NetworkStats::uniform(d, 0.5, 1.0);
    double previous = std::numeric_limits<double>::infinity();
    for (int step = 0; step < 10; ++step) {
        const double amp = 0.1 + 0.4 * step;
        const CVec base = (CVec(3) << 1.0, Complex(0, 1), -1.0).finished();
        std::vector<CVec> seqs{amp * base, base};
        const EstimatorContext ctx(s, make_custom_pilot_book(d, seqs), {0.01, 0.1, 1.5});
        const double c = ctx.error_coefficient(0, 0, 0, 6);
        EXPECT_LE(c, previous + 1e-15);
        previous = c;
    }
}

// Monte Carlo checks of the estimator on draws from the signal model.
struct ErrorStats {
        CVec mean_error;
        double error_var = 0.0;
        Complex orthogonality;
        double ortho_se = 0.0;
        double mean_se = 0.0;
};

ErrorStats estimator_errors(const NetworkStats& s, const PilotBook& book,
                            const HardwareProfile& hw, int j, int l, int k, int t, int trials) {
    const EstimatorContext ctx(s, book, hw);
    const int N = s.dims.antennas;
    CVec sum_err = CVec::Zero(N);
    double sum_sq = 0.0;
    Complex sum_ortho = 0.0;
    double sum_ortho_sq = 0.0;
    for (int trial = 0; trial < trials; ++trial) {
        const Realization r = draw_realization(s, book, hw, derive_seed(1234, {std::uint64_t(trial)}));
        CVec h = r.channels[j].col(s.dims.flat(l, k));
        for (int n = 0; n < N; ++n) {
            h(n) *= std::polar(1.0, r.phases[j](n, t));
        }
        const ChannelEstimate e = lmmse_estimate(r.pilot_blocks[j], ctx, j, l, k, t);
        const CVec err = h - e.hhat;
        sum_err += err;
        sum_sq += err.squaredNorm();
        const Complex o = e.hhat.dot(err);
        sum_ortho += o;
        sum_ortho_sq += std::norm(o);
    }
    ErrorStats out;
    out.mean_error = sum_err / trials;
    out.error_var = sum_sq / trials / N;
    out.orthogonality = sum_ortho / double(trials);
    out.ortho_se = std::sqrt(sum_ortho_sq / trials / trials);
    out.mean_se = std::sqrt(out.error_var / trials);
    return out;
}

TEST(Lmmse, MonteCarloUnbiasedOrthogonalAndCalibrated) {
    const NetworkStats s = small_stats(2, 2, 3, 4, 20);
    const PilotBook book = build_pilot_book(PilotKind::spatial_dft, s.dims, s.power);
    const HardwareProfile hw{0.02, 0.15, 2.0};
    const EstimatorContext ctx(s, book, hw);
    const int trials = 20000;
    for (auto [l, k] : {std::pair{0, 1}, std::pair{1, 0}}) {
        const ErrorStats st = estimator_errors(s, book, hw, 0, l, k, 12, trials);
        for (int n = 0; n < 4; ++n) {
            EXPECT_LT(std::abs(st.mean_error(n)), 4.0 * st.mean_se);
        }
        EXPECT_LT(std::abs(st.orthogonality), 4.0 * st.ortho_se);
        EXPECT_NEAR(st.error_var, ctx.error_coefficient(0, l, k, 12),
                    0.03 * ctx.error_coefficient(0, l, k, 12));
    }
}

}  // namespace
}  // namespace hwmimo
