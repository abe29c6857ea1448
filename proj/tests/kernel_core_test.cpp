#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "aelsvi/hyperparameters.hpp"
#include "aelsvi/information_gain.hpp"
#include "aelsvi/kernel.hpp"
#include "aelsvi/kernel_model.hpp"
#include "support/oracles.hpp"

using namespace aelsvi;

namespace {

KernelSpec se(Index d, double l = 1.0) { return KernelSpec::squared_exponential(VectorXd::Constant(d, l)); }

MatrixXd points(std::initializer_list<double> values) {
    MatrixXd X(static_cast<Index>(values.size()), 1);
    Index i = 0;
    for (double v : values) X(i++, 0) = v;
    return X;
}

} // namespace

TEST(Gram, SingleSePointIsOne) {
    const MatrixXd K = gram(se(1), points({0.0}));
    ASSERT_EQ(K.rows(), 1);
    EXPECT_DOUBLE_EQ(K(0, 0), 1.0);
}

TEST(Gram, DeltaOnDistinctPointsIsIdentity) {
    const MatrixXd K = gram(KernelSpec::delta(), points({0.0, 1.0}));
    EXPECT_EQ(K, MatrixXd::Identity(2, 2));
}

TEST(Gram, DuplicatePointsGiveAllOnes) {
    const MatrixXd K = gram(se(1), points({0.0, 0.0}));
    EXPECT_EQ(K, MatrixXd::Ones(2, 2));
}

TEST(Gram, DimensionMismatchThrows) {
    EXPECT_THROW(gram(se(2), points({0.0, 1.0})), InvalidInput);
}

TEST(Gram, SymmetricWithDiagonalBoundedBySignalVariance) {
    Rng rng(3);
    const MatrixXd X = oracle::uniform_points(rng, 12, 3);
    const auto spec = KernelSpec::squared_exponential(VectorXd::Constant(3, 0.4), 0.7);
    const MatrixXd K = gram(spec, X);
    EXPECT_EQ(K, K.transpose());
    EXPECT_LE(K.diagonal().maxCoeff(), 0.7 + 1e-15);
}

TEST(Gram, CrossGridMatchesDirectEvaluation) {
    Rng rng(11);
    const MatrixXd S = oracle::uniform_points(rng, 4, 2);
    const MatrixXd A = oracle::uniform_points(rng, 3, 1);
    const MatrixXd X = oracle::uniform_points(rng, 5, 3);
    for (const KernelSpec& spec : {se(3, 0.3), KernelSpec::linear()}) {
        const MatrixXd K = cross_grid(spec, S, A, X);
        for (Index c = 0; c < 4; ++c)
            for (Index g = 0; g < 3; ++g)
                for (Index i = 0; i < 5; ++i)
                    EXPECT_NEAR(K(c * 3 + g, i), kernel(spec, join(S.row(c).transpose(), A.row(g).transpose()), X.row(i).transpose()),
                                1e-14);
    }
}

TEST(Fit, EmptyDataIsPrior) {
    const auto m = KernelModel::fit(se(1), MatrixXd(0, 1), {{"y", VectorXd(0)}}, 1.0);
    EXPECT_EQ(m.size(), 0);
    EXPECT_EQ(m.mean("y", VectorXd::Constant(1, 0.3)), 0.0);
    EXPECT_EQ(m.mean("y", VectorXd::Constant(1, -7.0)), 0.0);
}

TEST(Fit, OnePointHalvesTheTarget) {
    const double y1 = 0.8;
    const auto m = KernelModel::fit(se(1), points({0.5}), {{"y", VectorXd::Constant(1, y1)}}, 1.0);
    EXPECT_DOUBLE_EQ(m.weights("y")[0], y1 / 2.0);
    EXPECT_DOUBLE_EQ(m.mean("y", VectorXd::Constant(1, 0.5)), y1 / 2.0);
}

TEST(Fit, RejectsLambdaBelowOneUnlessRelaxed) {
    EXPECT_THROW(KernelModel::fit(se(1), points({0.0}), {{"y", VectorXd::Ones(1)}}, 0.5), InvalidInput);
    EXPECT_NO_THROW(KernelModel::fit(se(1), points({0.0}), {{"y", VectorXd::Ones(1)}}, 0.5, LambdaCheck::Relaxed));
}

TEST(Fit, TargetLengthMismatchThrows) {
    EXPECT_THROW(KernelModel::fit(se(1), points({0.0, 1.0}), {{"y", VectorXd::Ones(3)}}, 1.0), InvalidInput);
}

TEST(Fit, FivePointsMatchDenseSolve) {
    Rng rng(5);
    const MatrixXd X = oracle::uniform_points(rng, 5, 2);
    const VectorXd y = oracle::normal_vector(rng, 5);
    const auto spec = se(2, 0.5);
    const auto m = KernelModel::fit(spec, X, {{"y", y}}, 1.0);

    MatrixXd A = gram(spec, X);
    A.diagonal().array() += 1.0;
    const VectorXd alpha = A.fullPivLu().solve(y);
    EXPECT_LE((m.weights("y") - alpha).cwiseAbs().maxCoeff(), 1e-10);

    const VectorXd xq = oracle::uniform_points(rng, 1, 2).row(0).transpose();
    EXPECT_NEAR(m.mean("y", xq), oracle::dense_posterior(spec, X, y, 1.0, xq).mean, 1e-10);
}

TEST(Fit, CholeskyReconstructsRegularizedGram) {
    Rng rng(8);
    const MatrixXd X = oracle::uniform_points(rng, 25, 3);
    const auto spec = se(3, 0.3);
    const auto m = KernelModel::fit(spec, X, {{"y", oracle::normal_vector(rng, 25)}}, 1.3);
    MatrixXd A = gram(spec, X);
    A.diagonal().array() += 1.3;
    const MatrixXd LLt = m.chol() * m.chol().transpose();
    EXPECT_LE((LLt - A).norm() / A.norm(), 1e-8);
}

TEST(PosteriorMean, UnknownLabelThrows) {
    const auto m = KernelModel::fit(se(1), points({0.0}), {{"y", VectorXd::Ones(1)}}, 1.0);
    EXPECT_THROW((void)m.mean("nope", VectorXd::Zero(1)), InvalidInput);
}

TEST(PosteriorSd, PriorValues) {
    const auto m1 = KernelModel::prior(se(1), 1, 1.0, {"y"});
    EXPECT_DOUBLE_EQ(m1.sd(VectorXd::Constant(1, 2.0)), 1.0);
    const auto m2 = KernelModel::prior(se(1), 1, 2.0, {"y"});
    EXPECT_NEAR(m2.sd(VectorXd::Constant(1, 2.0)), 1.0 / std::sqrt(2.0), 1e-15);
}

TEST(PosteriorSd, AfterOneObservation) {
    const auto m = KernelModel::fit(se(1), points({0.2}), {{"y", VectorXd::Ones(1)}}, 1.0);
    EXPECT_NEAR(m.sd(VectorXd::Constant(1, 0.2)), std::sqrt(0.5), 1e-15);
}

TEST(PosteriorSd, ClampRule) {
    EXPECT_EQ(detail::clamp_variance(-1e-12, 1.0), 0.0);
    EXPECT_EQ(detail::clamp_variance(0.25, 1.0), 0.25);
    EXPECT_THROW(detail::clamp_variance(-1e-6, 1.0), NumericalError);
}

TEST(PosteriorSd, BatchAgreesWithPointQueries) {
    Rng rng(21);
    const MatrixXd X = oracle::uniform_points(rng, 10, 2);
    const auto m = KernelModel::fit(se(2, 0.4), X, {{"a", oracle::normal_vector(rng, 10)}, {"b", oracle::normal_vector(rng, 10)}}, 1.0);
    const MatrixXd Q = oracle::uniform_points(rng, 7, 2);
    const Prediction p = m.predict(Q);
    for (Index i = 0; i < 7; ++i) {
        EXPECT_NEAR(p.sd[i], m.sd(Q.row(i).transpose()), 1e-12);
        EXPECT_NEAR(p.mean(i, m.label_index("b")), m.mean("b", Q.row(i).transpose()), 1e-12);
    }
}

TEST(FitExtend, ExtendingPriorEqualsOnePointFit) {
    const auto prior = KernelModel::prior(se(1), 1, 1.0, {"y"});
    const auto ext = prior.extend(VectorXd::Constant(1, 0.3), {{"y", 0.9}});
    const auto fit = KernelModel::fit(se(1), points({0.3}), {{"y", VectorXd::Constant(1, 0.9)}}, 1.0);
    for (double q : {-1.0, 0.0, 0.3, 2.0}) {
        const VectorXd x = VectorXd::Constant(1, q);
        EXPECT_NEAR(ext.mean("y", x), fit.mean("y", x), 1e-15);
        EXPECT_NEAR(ext.sd(x), fit.sd(x), 1e-15);
    }
}

TEST(FitExtend, TwentySequentialExtendsMatchBatchFit) {
    Rng rng(31);
    const auto spec = se(2, 0.35);
    const MatrixXd X = oracle::uniform_points(rng, 20, 2);
    const VectorXd y = oracle::normal_vector(rng, 20);
    auto m = KernelModel::prior(spec, 2, 1.0, {"y"});
    for (Index i = 0; i < 20; ++i) m = m.extend(X.row(i).transpose(), {{"y", y[i]}});
    const auto batch = KernelModel::fit(spec, X, {{"y", y}}, 1.0);

    const MatrixXd Q = oracle::uniform_points(rng, 100, 2);
    const Prediction a = m.predict(Q);
    const Prediction b = batch.predict(Q);
    EXPECT_LE((a.mean - b.mean).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LE((a.sd - b.sd).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(FitExtend, DuplicatePointStaysFiniteAndShrinksVariance) {
    const auto spec = se(1);
    const auto m1 = KernelModel::fit(spec, points({0.4}), {{"y", VectorXd::Ones(1)}}, 1.0);
    const VectorXd x = VectorXd::Constant(1, 0.4);
    const auto m2 = m1.extend(x, {{"y", 1.0}});
    EXPECT_TRUE(std::isfinite(m2.mean("y", x)));
    EXPECT_LT(m2.sd(x), m1.sd(x));
    EXPECT_NEAR(m2.sd(x), oracle::dense_posterior(spec, points({0.4, 0.4}), VectorXd::Ones(2), 1.0, x).sd, 1e-12);
}

TEST(FitExtend, MissingLabelThrows) {
    const auto m = KernelModel::prior(se(1), 1, 1.0, {"a", "b"});
    EXPECT_THROW((void)m.extend(VectorXd::Zero(1), {{"a", 1.0}}), InvalidInput);
}

TEST(KernelModelProperties, VarianceNeverGrowsWhenExtending) {
    Rng rng(41);
    const auto spec = se(2, 0.3);
    auto m = KernelModel::fit(spec, oracle::uniform_points(rng, 6, 2), {{"y", oracle::normal_vector(rng, 6)}}, 1.0);
    const MatrixXd Q = oracle::uniform_points(rng, 50, 2);
    for (int step = 0; step < 30; ++step) {
        const VectorXd before = m.predict(Q).sd;
        m = m.extend(oracle::uniform_points(rng, 1, 2).row(0).transpose(), {{"y", 0.1 * step}});
        const VectorXd after = m.predict(Q).sd;
        EXPECT_LE((after - before).maxCoeff(), 1e-10);
    }
}

TEST(KernelModelProperties, IncrementalAgreesWithDenseOnFiftyInstances) {
    Rng rng(51);
    std::uniform_int_distribution<int> size(1, 30);
    std::uniform_int_distribution<int> dims(1, 4);
    std::uniform_real_distribution<double> ls(0.1, 1.5);
    std::uniform_real_distribution<double> lam(1.0, 3.0);
    double worst = 0.0;
    for (int inst = 0; inst < 50; ++inst) {
        const Index n = size(rng);
        const Index d = dims(rng);
        VectorXd l(d);
        for (Index j = 0; j < d; ++j) l[j] = ls(rng);
        const auto spec = KernelSpec::squared_exponential(l);
        const double lambda = lam(rng);
        const MatrixXd X = oracle::uniform_points(rng, n, d);
        const VectorXd y = oracle::normal_vector(rng, n);
        auto m = KernelModel::prior(spec, d, lambda, {"y"});
        for (Index i = 0; i < n; ++i) m = m.extend(X.row(i).transpose(), {{"y", y[i]}});
        for (int q = 0; q < 10; ++q) {
            const VectorXd x = oracle::uniform_points(rng, 1, d).row(0).transpose();
            const auto ref = oracle::dense_posterior(spec, X, y, lambda, x);
            worst = std::max({worst, std::abs(m.mean("y", x) - ref.mean), std::abs(m.sd(x) - ref.sd)});
        }
    }
    EXPECT_LE(worst, 1e-8);
}

TEST(KernelModelProperties, DeltaKernelShrinksTargetsExactly) {
    const MatrixXd X = points({0.0, 1.0, 2.0, 3.0});
    VectorXd y(4);
    y << 0.3, 1.7, -0.4, 2.5;
    const double lambda = 1.5;
    const auto m = KernelModel::fit(KernelSpec::delta(), X, {{"y", y}}, lambda);
    for (Index i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(m.mean("y", X.row(i).transpose()), y[i] / (1.0 + lambda));

    const auto near = KernelModel::fit(KernelSpec::delta(), X, {{"y", y}}, 1e-6, LambdaCheck::Relaxed);
    for (Index i = 0; i < 4; ++i) EXPECT_NEAR(near.mean("y", X.row(i).transpose()), y[i], 2e-6 * std::abs(y[i]));
}

TEST(InformationGain, EmptyAndSingleton) {
    EXPECT_EQ(information_gain(se(1), MatrixXd(0, 1), 1.0), 0.0);
    EXPECT_NEAR(information_gain(se(1), points({0.7}), 1.0), 0.5 * std::log(2.0), 1e-15);
    EXPECT_NEAR(information_gain(se(1), points({0.7}), 1.0), 0.34657359, 1e-8);
}

TEST(InformationGain, TenPointsMatchDenseLogDet) {
    Rng rng(61);
    const auto spec = se(2, 0.3);
    const MatrixXd X = oracle::uniform_points(rng, 10, 2);
    EXPECT_NEAR(information_gain(spec, X, 1.2), oracle::dense_information_gain(spec, X, 1.2), 1e-10);
}

TEST(InformationGain, ModelGainMatchesDirect) {
    Rng rng(62);
    const auto spec = se(2, 0.3);
    const MatrixXd X = oracle::uniform_points(rng, 15, 2);
    const auto m = KernelModel::fit(spec, X, {{"y", VectorXd::Zero(15)}}, 1.4);
    EXPECT_NEAR(m.information_gain(), information_gain(spec, X, 1.4), 1e-10);
}

TEST(InformationGain, MonotoneUnderAddingPoints) {
    Rng rng(63);
    std::uniform_int_distribution<int> size(0, 20);
    for (int trial = 0; trial < 100; ++trial) {
        const auto spec = se(2, 0.2 + 0.01 * trial);
        const MatrixXd X = oracle::uniform_points(rng, size(rng), 2);
        MatrixXd Xp(X.rows() + 1, 2);
        Xp << X, oracle::uniform_points(rng, 1, 2);
        EXPECT_GE(information_gain(spec, Xp, 1.0), information_gain(spec, X, 1.0) - 1e-12);
    }
}

TEST(GreedyInformationGain, ZeroBudget) {
    const auto r = greedy_information_gain(se(1), points({0.0, 1.0}), 0, 1.0);
    EXPECT_EQ(r.gain, 0.0);
    EXPECT_TRUE(r.chosen.empty());
}

TEST(GreedyInformationGain, EmptyPoolThrows) {
    EXPECT_THROW(greedy_information_gain(se(1), MatrixXd(0, 1), 1, 1.0), InvalidInput);
    EXPECT_THROW(greedy_information_gain(se(1), points({0.0}), 2, 1.0), InvalidInput);
}

TEST(GreedyInformationGain, SingleStepTies) {
    const auto r = greedy_information_gain(se(1), points({0.0, 1.0, 2.0}), 1, 2.0);
    EXPECT_NEAR(r.gain, 0.5 * std::log(1.0 + 1.0 / 2.0), 1e-15);
    EXPECT_EQ(r.chosen.front(), 0);
}

TEST(GreedyInformationGain, ThreeOfSixAgainstExhaustiveEnumeration) {
    Rng rng(71);
    const auto spec = se(2, 0.4);
    const MatrixXd pool = oracle::uniform_points(rng, 6, 2);
    const auto greedy = greedy_information_gain(spec, pool, 3, 1.0);

    // Realized gain of the chosen subset, recomputed directly.
    MatrixXd chosen(3, 2);
    for (int i = 0; i < 3; ++i) chosen.row(i) = pool.row(greedy.chosen[i]);
    EXPECT_NEAR(greedy.gain, oracle::dense_information_gain(spec, chosen, 1.0), 1e-10);

    double best = 0.0;
    double best_single = 0.0;
    for (int a = 0; a < 6; ++a) {
        best_single = std::max(best_single, oracle::dense_information_gain(spec, pool.row(a), 1.0));
        for (int b = a + 1; b < 6; ++b)
            for (int c = b + 1; c < 6; ++c) {
                MatrixXd S(3, 2);
                S << pool.row(a), pool.row(b), pool.row(c);
                best = std::max(best, oracle::dense_information_gain(spec, S, 1.0));
            }
    }
    EXPECT_LE(greedy.gain, best + 1e-12);
    // The greedy set's gain dominates every prefix of itself and every singleton.
    EXPECT_GE(greedy.gain, greedy.prefix_gain[1] - 1e-15);
    EXPECT_GE(greedy.gain, best_single - 1e-12);
    // Submodularity gives the (1 - 1/e) guarantee against the exhaustive optimum.
    EXPECT_GE(greedy.gain, (1.0 - std::exp(-1.0)) * best);
}

TEST(SdSumBound, RealizedSdSumBelowSqrtThreeGammaT) {
    Rng rng(81);
    const Index T = 100;
    for (int seq = 0; seq < 20; ++seq) {
        const auto spec = se(2, 0.05 + 0.05 * seq);
        const double lambda = 1.0 + 0.1 * seq;
        const MatrixXd X = oracle::uniform_points(rng, T, 2);
        auto m = KernelModel::prior(spec, 2, lambda, {"y"});
        double sum = 0.0;
        for (Index t = 0; t < T; ++t) {
            sum += m.sd(X.row(t).transpose());
            m = m.extend(X.row(t).transpose(), {{"y", 0.0}});
        }
        const double gamma = information_gain(spec, X, lambda);
        EXPECT_LE(sum, std::sqrt(3.0 * gamma * static_cast<double>(T))) << "sequence " << seq;
    }
}

TEST(Hyperparameters, GridIsLogSpacedOverRange) {
    const VectorXd m = LengthscaleSearch{}.multipliers();
    ASSERT_EQ(m.size(), 9);
    EXPECT_NEAR(m[0], 0.1, 1e-15);
    EXPECT_NEAR(m[4], 1.0, 1e-12);
    EXPECT_NEAR(m[8], 10.0, 1e-12);
}

TEST(Hyperparameters, CoordinateSearchRecoversGeneratingScale) {
    // Sample from a GP with lengthscale 0.1 on [0, 1]; search should not pick the long end of the grid.
    Rng rng(91);
    const auto truth = se(1, 0.1);
    const MatrixXd X = oracle::uniform_points(rng, 60, 1);
    MatrixXd K = gram(truth, X);
    K.diagonal().array() += 1e-8;
    const VectorXd y = Eigen::LLT<MatrixXd>(K).matrixL() * oracle::normal_vector(rng, 60) + 0.05 * oracle::normal_vector(rng, 60);
    const auto found = coordinate_search(se(1, 1.0), X, y, 1.0, VectorXd::Ones(1));
    EXPECT_LE(found.lengthscales[0], 0.32);
    EXPECT_GE(log_marginal_likelihood(found, X, y, 1.0), log_marginal_likelihood(se(1, 1.0), X, y, 1.0));
}
