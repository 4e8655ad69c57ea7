#include "densmap/encoder.hpp"

#include "densmap/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

using namespace densmap;

namespace {

MaskedBatch random_batch(int n, int p, int m, std::uint64_t seed, double mask_p = 0.4) {
    auto rng = make_rng(seed);
    std::normal_distribution<double> normal(0, 1);
    std::uniform_real_distribution<double> unif(0, 1);
    MaskedBatch b;
    b.X.resize(n, p);
    b.D = Eigen::MatrixXd::Zero(n, m);
    b.Phi = Eigen::MatrixXd::Zero(n, m);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < p; ++j) b.X(i, j) = normal(rng);
        bool any = false;
        for (int j = 0; j < m; ++j) {
            if (unif(rng) < mask_p) {
                b.Phi(i, j) = 1;
                b.D(i, j) = 50 + 10 * normal(rng);
                any = true;
            }
        }
        if (!any) {
            b.Phi(i, 0) = 1;
            b.D(i, 0) = 50;
        }
    }
    return b;
}

double max_param_rel_error(const Network& net, const MaskedBatch& batch) {
    const Gradients g = loss_gradient(net, batch);
    const double h = 1e-5;
    double worst = 0;
    auto probe = [&](double* param, double analytic) {
        const double orig = *param;
        *param = orig + h;
        const Forward fp = forward(net, batch.X);
        const double lp = masked_loss(fp.outputs, batch.D, batch.Phi);
        *param = orig - h;
        const Forward fm = forward(net, batch.X);
        const double lm = masked_loss(fm.outputs, batch.D, batch.Phi);
        *param = orig;
        const double numeric = (lp - lm) / (2 * h);
        const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6 / 1e-4});
        worst = std::max(worst, std::abs(analytic - numeric) / denom);
    };
    Network& mut = const_cast<Network&>(net);
    for (std::size_t l = 0; l < mut.encoder_w.size(); ++l) {
        for (Eigen::Index i = 0; i < mut.encoder_w[l].size(); ++i)
            probe(mut.encoder_w[l].data() + i, g.encoder_w[l](i));
        for (Eigen::Index i = 0; i < mut.encoder_b[l].size(); ++i)
            probe(mut.encoder_b[l].data() + i, g.encoder_b[l](i));
    }
    for (Eigen::Index i = 0; i < mut.head_w.size(); ++i)
        probe(mut.head_w.data() + i, g.head_w(i));
    for (Eigen::Index i = 0; i < mut.head_b.size(); ++i)
        probe(mut.head_b.data() + i, g.head_b(i));
    return worst;
}

}  // namespace

TEST_CASE("init_network is deterministic with the right shapes") {
    NetworkArch arch{8, {32, 16}, 13};
    const Network a = init_network(arch, 5);
    const Network b = init_network(arch, 5);
    CHECK(a.head_w.rows() == 16);
    CHECK(a.head_w.cols() == 13);
    CHECK(a.encoder_w[0].rows() == 32);
    CHECK(a.encoder_w[0].cols() == 8);
    CHECK(a.encoder_w[1] == b.encoder_w[1]);
    CHECK(a.head_w == b.head_w);

    NetworkArch single{8, {32, 16}, 1};
    CHECK(init_network(single, 5).head_w.cols() == 1);
    const Network c = init_network(arch, 6);
    CHECK(a.head_w != c.head_w);
}

TEST_CASE("forward propagates zeros and separates head from representation") {
    NetworkArch arch{3, {4}, 2};
    Network net = init_network(arch, 1);
    const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(2, 3);
    const Forward fw = forward(net, zero);
    // tanh fixes 0 and offsets start at zero, so everything is zero
    CHECK(fw.representation.cwiseAbs().maxCoeff() == 0.0);
    CHECK(fw.outputs.cwiseAbs().maxCoeff() == 0.0);

    auto rng = make_rng(3);
    std::normal_distribution<double> normal(0, 1);
    Eigen::MatrixXd X(2, 3);
    for (Eigen::Index i = 0; i < X.size(); ++i) X(i) = normal(rng);
    const Forward fw1 = forward(net, X);
    net.head_w.setZero();
    const Forward fw2 = forward(net, X);
    CHECK(fw2.outputs.cwiseAbs().maxCoeff() == 0.0);
    CHECK(fw2.representation == fw1.representation);
}

TEST_CASE("forward matches a by-hand single-layer computation") {
    NetworkArch arch{2, {1}, 1};
    Network net = init_network(arch, 1);
    net.encoder_w[0] << 0.5, -0.25;
    net.encoder_b[0] << 0.1;
    net.head_w << 2.0;
    net.head_b << -1.0;
    Eigen::MatrixXd X(1, 2);
    X << 0.4, 0.8;
    const Forward fw = forward(net, X);
    const double rep = std::tanh(0.5 * 0.4 - 0.25 * 0.8 + 0.1);
    CHECK(fw.representation(0, 0) == doctest::Approx(rep).epsilon(1e-15));
    CHECK(fw.outputs(0, 0) == doctest::Approx(2.0 * rep - 1.0).epsilon(1e-15));
}

TEST_CASE("masked_loss plug-in cases") {
    Eigen::MatrixXd out(1, 3), d(1, 3), phi(1, 3);
    out << 10, 20, 999;
    d << 12, 18, 0;
    phi << 1, 1, 0;
    CHECK(masked_loss(out, d, phi) == 8.0);

    phi.setZero();
    CHECK(masked_loss(out, d, phi) == 0.0);

    phi << 1, 1, 0;
    out << 12, 18, -123;
    CHECK(masked_loss(out, d, phi) == 0.0);
}

TEST_CASE("single-output loss with full mask is plain summed squared error") {
    auto batch = random_batch(12, 4, 1, 7, 1.0);
    batch.Phi.setOnes();
    NetworkArch arch{4, {6}, 1};
    const Network net = init_network(arch, 2);
    const Forward fw = forward(net, batch.X);
    CHECK(masked_loss(fw.outputs, batch.D, batch.Phi) ==
          doctest::Approx((fw.outputs - batch.D).squaredNorm()).epsilon(1e-14));
}

TEST_CASE("analytic gradients match central differences") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        NetworkArch arch{4, {5, 3}, 4};
        const Network net = init_network(arch, seed);
        const auto batch = random_batch(6, 4, 4, seed + 100);
        CHECK(max_param_rel_error(net, batch) < 1e-4);
    }
}

TEST_CASE("mask kills head-column gradients for unlabeled readers") {
    NetworkArch arch{4, {5}, 3};
    const Network net = init_network(arch, 9);
    auto batch = random_batch(8, 4, 3, 11);
    batch.Phi.col(1).setZero();
    const Gradients g = loss_gradient(net, batch);
    CHECK(g.head_w.col(1).cwiseAbs().maxCoeff() == 0.0);
    CHECK(g.head_b(1) == 0.0);
    // encoder still receives signal from the labeled columns
    CHECK(g.encoder_w[0].cwiseAbs().maxCoeff() > 0.0);

    batch.Phi.setZero();
    const Gradients gz = loss_gradient(net, batch);
    CHECK(gz.head_w.cwiseAbs().maxCoeff() == 0.0);
    CHECK(gz.encoder_w[0].cwiseAbs().maxCoeff() == 0.0);
    CHECK(gz.encoder_b[0].cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("head-column gradient depends only on its labeled rows") {
    NetworkArch arch{4, {5}, 3};
    const Network net = init_network(arch, 13);
    auto batch = random_batch(10, 4, 3, 17);
    const Gradients g_full = loss_gradient(net, batch);

    // drop every row that does not label reader 2
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < batch.X.rows(); ++i)
        if (batch.Phi(i, 2) == 1.0) keep.push_back(i);
    MaskedBatch sub;
    sub.X.resize(static_cast<Eigen::Index>(keep.size()), 4);
    sub.D.resize(static_cast<Eigen::Index>(keep.size()), 3);
    sub.Phi = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(keep.size()), 3);
    for (std::size_t i = 0; i < keep.size(); ++i) {
        sub.X.row(static_cast<Eigen::Index>(i)) = batch.X.row(keep[i]);
        sub.D(static_cast<Eigen::Index>(i), 2) = batch.D(keep[i], 2);
        sub.Phi(static_cast<Eigen::Index>(i), 2) = 1.0;
    }
    const Gradients g_sub = loss_gradient(net, sub);
    CHECK((g_full.head_w.col(2) - g_sub.head_w.col(2)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("training reduces validation RMSE on separable data") {
    // noise-free linear truth in feature space
    auto rng = make_rng(21);
    std::normal_distribution<double> normal(0, 1);
    const int n = 400, p = 6;
    Eigen::MatrixXd X(n, p);
    for (Eigen::Index i = 0; i < X.size(); ++i) X(i) = normal(rng);
    Eigen::VectorXd w = Eigen::VectorXd::LinSpaced(p, -2, 3);
    Eigen::VectorXd y = X * w;

    MaskedBatch tr{X.topRows(300), y.head(300), Eigen::MatrixXd::Ones(300, 1)};
    MaskedBatch val{X.bottomRows(100), y.tail(100), Eigen::MatrixXd::Ones(100, 1)};

    NetworkArch arch{p, {16, 8}, 1};
    TrainConfig cfg;
    cfg.max_epochs = 150;
    cfg.learning_rate = 1e-2;
    cfg.seed = 4;
    const Network net = init_network(arch, 4);
    const double initial = masked_rmse(net, val);
    const TrainedNetwork trained = train(net, tr, val, cfg);
    CHECK(trained.best_val_rmse < 0.5 * initial);
    CHECK(trained.log.size() == 150);

    const TrainedNetwork again = train(net, tr, val, cfg);
    CHECK(again.best_epoch == trained.best_epoch);
    CHECK(again.net.head_w == trained.net.head_w);
    CHECK(again.net.encoder_w[0] == trained.net.encoder_w[0]);
}

TEST_CASE("training aborts on divergence") {
    auto batch = random_batch(20, 3, 1, 5, 1.0);
    NetworkArch arch{3, {4}, 1};
    TrainConfig cfg;
    cfg.learning_rate = 1e18;
    cfg.max_epochs = 50;
    CHECK_THROWS_AS(train(init_network(arch, 1), batch, batch, cfg), std::runtime_error);
}

TEST_CASE("extract_representations produces a ridge-ready table") {
    std::vector<ImageRecord> recs{{"i1", "w1", View::CC, Side::L},
                                  {"i2", "w1", View::MLO, Side::L},
                                  {"i3", "w2", View::CC, Side::R}};
    Eigen::MatrixXd feats(3, 4);
    feats << 1, 2, 3, 4, 1, 2, 3, 4, 0, 0, 1, 1;
    const FeatureTable t(recs, feats, false);

    NetworkArch arch{4, {7, 5}, 2};
    const Network net = init_network(arch, 8);
    const FeatureTable reps = extract_representations(net, t);
    CHECK(reps.cols() == 5);
    CHECK_FALSE(reps.has_bias());
    CHECK(reps.records()[1].image_id == "i2");
    // identical inputs map to identical representations
    CHECK(reps.features().row(0) == reps.features().row(1));
}

TEST_CASE("network files round-trip") {
    NetworkArch arch{3, {4, 2}, 5};
    const Network net = init_network(arch, 31);
    const auto path = (std::filesystem::temp_directory_path() / "net.txt").string();
    save_network(path, net, "prov");
    const Network net2 = load_network(path);
    CHECK(net2.arch.hidden_widths == net.arch.hidden_widths);
    CHECK(net2.encoder_w[0] == net.encoder_w[0]);
    CHECK(net2.encoder_b[1] == net.encoder_b[1]);
    CHECK(net2.head_w == net.head_w);
    CHECK(net2.head_b == net.head_b);
}
