#include "densmap/encoder.hpp"

#include "densmap/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace densmap {

void NetworkArch::validate() const {
    if (input_dim < 1) throw std::invalid_argument("input_dim must be positive");
    if (hidden_widths.empty()) throw std::invalid_argument("need at least one hidden layer");
    for (int w : hidden_widths)
        if (w < 1) throw std::invalid_argument("hidden widths must be positive");
    if (output_count < 1) throw std::invalid_argument("output_count must be >= 1");
}

void TrainConfig::validate() const {
    if (learning_rate <= 0) throw std::invalid_argument("learning_rate must be positive");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be positive");
    if (max_epochs < 1) throw std::invalid_argument("max_epochs must be positive");
    if (adam_beta1 <= 0 || adam_beta1 >= 1 || adam_beta2 <= 0 || adam_beta2 >= 1)
        throw std::invalid_argument("adam betas must lie in (0,1)");
    if (augment_noise_sd < 0) throw std::invalid_argument("negative augment_noise_sd");
}

void MaskedBatch::validate(bool require_known_per_row) const {
    if (D.rows() != X.rows() || Phi.rows() != X.rows() || Phi.cols() != D.cols())
        throw std::invalid_argument("masked batch shape mismatch");
    if (((Phi.array() != 0.0) && (Phi.array() != 1.0)).any())
        throw std::invalid_argument("mask entries must be 0 or 1");
    if (require_known_per_row && X.rows() > 0 &&
        (Phi.rowwise().sum().array() < 1.0).any())
        throw std::invalid_argument("every batch row needs at least one known label");
}

Network init_network(const NetworkArch& arch, std::uint64_t seed) {
    arch.validate();
    Network net;
    net.arch = arch;
    auto rng = make_rng(seed, 0x1417);
    std::normal_distribution<double> normal(0.0, 1.0);
    int in = arch.input_dim;
    for (int width : arch.hidden_widths) {
        Eigen::MatrixXd w(width, in);
        const double scale = 1.0 / std::sqrt(static_cast<double>(in));
        for (Eigen::Index i = 0; i < w.rows(); ++i)
            for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = scale * normal(rng);
        net.encoder_w.push_back(std::move(w));
        net.encoder_b.push_back(Eigen::VectorXd::Zero(width));
        in = width;
    }
    const int r = arch.representation_dim();
    net.head_w.resize(r, arch.output_count);
    const double scale = 1.0 / std::sqrt(static_cast<double>(r));
    for (Eigen::Index i = 0; i < net.head_w.rows(); ++i)
        for (Eigen::Index j = 0; j < net.head_w.cols(); ++j)
            net.head_w(i, j) = scale * normal(rng);
    net.head_b = Eigen::VectorXd::Zero(arch.output_count);
    return net;
}

Forward forward(const Network& net, const Eigen::MatrixXd& X) {
    if (X.cols() != net.arch.input_dim)
        throw std::invalid_argument("forward: input dimension mismatch");
    Eigen::MatrixXd a = X;
    for (std::size_t l = 0; l < net.encoder_w.size(); ++l)
        a = ((a * net.encoder_w[l].transpose()).rowwise() + net.encoder_b[l].transpose())
                .array()
                .tanh();
    Forward fw;
    fw.outputs = (a * net.head_w).rowwise() + net.head_b.transpose();
    fw.representation = std::move(a);
    return fw;
}

double masked_loss(const Eigen::MatrixXd& outputs, const Eigen::MatrixXd& D,
                   const Eigen::MatrixXd& Phi) {
    if (outputs.rows() != D.rows() || outputs.cols() != D.cols() ||
        Phi.rows() != D.rows() || Phi.cols() != D.cols())
        throw std::invalid_argument("masked_loss: shape mismatch");
    return (Phi.array() * (outputs - D).array().square()).sum();
}

Gradients loss_gradient(const Network& net, const MaskedBatch& batch) {
    batch.validate(false);
    // replay the forward pass keeping per-layer activations
    std::vector<Eigen::MatrixXd> acts;
    acts.push_back(batch.X);
    for (std::size_t l = 0; l < net.encoder_w.size(); ++l)
        acts.push_back(((acts.back() * net.encoder_w[l].transpose()).rowwise() +
                        net.encoder_b[l].transpose())
                           .array()
                           .tanh());
    const Eigen::MatrixXd outputs =
        (acts.back() * net.head_w).rowwise() + net.head_b.transpose();

    Gradients g;
    const Eigen::MatrixXd d_out =
        2.0 * (batch.Phi.array() * (outputs - batch.D).array()).matrix();
    g.head_w = acts.back().transpose() * d_out;
    g.head_b = d_out.colwise().sum().transpose();

    Eigen::MatrixXd d_act = d_out * net.head_w.transpose();
    g.encoder_w.resize(net.encoder_w.size());
    g.encoder_b.resize(net.encoder_b.size());
    for (std::size_t l = net.encoder_w.size(); l-- > 0;) {
        const Eigen::MatrixXd d_z =
            (d_act.array() * (1.0 - acts[l + 1].array().square())).matrix();
        g.encoder_w[l] = d_z.transpose() * acts[l];
        g.encoder_b[l] = d_z.colwise().sum().transpose();
        if (l > 0) d_act = d_z * net.encoder_w[l];
    }
    return g;
}

double masked_rmse(const Network& net, const MaskedBatch& batch) {
    const double known = batch.Phi.sum();
    if (known <= 0) throw std::invalid_argument("masked_rmse: no known labels");
    const Forward fw = forward(net, batch.X);
    return std::sqrt(masked_loss(fw.outputs, batch.D, batch.Phi) / known);
}

namespace {

struct AdamState {
    std::vector<Eigen::MatrixXd> m_ew, v_ew;
    std::vector<Eigen::VectorXd> m_eb, v_eb;
    Eigen::MatrixXd m_hw, v_hw;
    Eigen::VectorXd m_hb, v_hb;
    long t = 0;

    explicit AdamState(const Network& net) {
        for (const auto& w : net.encoder_w) {
            m_ew.push_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
            v_ew.push_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
        }
        for (const auto& b : net.encoder_b) {
            m_eb.push_back(Eigen::VectorXd::Zero(b.size()));
            v_eb.push_back(Eigen::VectorXd::Zero(b.size()));
        }
        m_hw = Eigen::MatrixXd::Zero(net.head_w.rows(), net.head_w.cols());
        v_hw = m_hw;
        m_hb = Eigen::VectorXd::Zero(net.head_b.size());
        v_hb = m_hb;
    }
};

template <typename Mat>
void adam_update(Mat& param, const Mat& grad, Mat& m, Mat& v, const TrainConfig& cfg,
                 double bc1, double bc2) {
    m = cfg.adam_beta1 * m + (1.0 - cfg.adam_beta1) * grad;
    v = (cfg.adam_beta2 * v.array() + (1.0 - cfg.adam_beta2) * grad.array().square())
            .matrix();
    param.array() -= cfg.learning_rate * (m.array() / bc1) /
                     ((v.array() / bc2).sqrt() + cfg.adam_eps);
}

}  // namespace

TrainedNetwork train(Network net, const MaskedBatch& train_data,
                     const MaskedBatch& val_data, const TrainConfig& cfg) {
    cfg.validate();
    train_data.validate(true);
    val_data.validate(false);
    if (val_data.Phi.sum() <= 0)
        throw std::invalid_argument("train: validation set has no known labels");

    const Eigen::Index n = train_data.X.rows();
    auto rng = make_rng(cfg.seed, 0x7124);
    std::normal_distribution<double> aug(0.0, cfg.augment_noise_sd);

    AdamState adam(net);
    TrainedNetwork result;
    result.net = net;
    result.best_val_rmse = masked_rmse(net, val_data);
    result.best_epoch = 0;

    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);

    double reference_loss = -1;  // first batch loss, anchors the blow-up guard

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0;
        for (Eigen::Index start = 0; start < n; start += cfg.batch_size) {
            const Eigen::Index bsz = std::min<Eigen::Index>(cfg.batch_size, n - start);
            MaskedBatch batch;
            batch.X.resize(bsz, train_data.X.cols());
            batch.D.resize(bsz, train_data.D.cols());
            batch.Phi.resize(bsz, train_data.Phi.cols());
            for (Eigen::Index i = 0; i < bsz; ++i) {
                const Eigen::Index src = order[static_cast<std::size_t>(start + i)];
                batch.X.row(i) = train_data.X.row(src);
                batch.D.row(i) = train_data.D.row(src);
                batch.Phi.row(i) = train_data.Phi.row(src);
            }
            if (cfg.augment_noise_sd > 0)
                for (Eigen::Index i = 0; i < batch.X.rows(); ++i)
                    for (Eigen::Index j = 0; j < batch.X.cols(); ++j)
                        batch.X(i, j) += aug(rng);

            const Forward fw = forward(net, batch.X);
            const double loss = masked_loss(fw.outputs, batch.D, batch.Phi);
            if (reference_loss < 0) reference_loss = loss;
            if (!std::isfinite(loss) || loss > 1e9 * (reference_loss + 1.0))
                throw std::runtime_error("train: loss diverged");
            epoch_loss += loss;

            const Gradients g = loss_gradient(net, batch);
            ++adam.t;
            const double bc1 = 1.0 - std::pow(cfg.adam_beta1, adam.t);
            const double bc2 = 1.0 - std::pow(cfg.adam_beta2, adam.t);
            for (std::size_t l = 0; l < net.encoder_w.size(); ++l) {
                adam_update(net.encoder_w[l], g.encoder_w[l], adam.m_ew[l], adam.v_ew[l],
                            cfg, bc1, bc2);
                adam_update(net.encoder_b[l], g.encoder_b[l], adam.m_eb[l], adam.v_eb[l],
                            cfg, bc1, bc2);
            }
            adam_update(net.head_w, g.head_w, adam.m_hw, adam.v_hw, cfg, bc1, bc2);
            adam_update(net.head_b, g.head_b, adam.m_hb, adam.v_hb, cfg, bc1, bc2);
        }

        const double val = masked_rmse(net, val_data);
        result.log.push_back({epoch, epoch_loss, val});
        if (val < result.best_val_rmse) {
            result.best_val_rmse = val;
            result.best_epoch = epoch;
            result.net = net;
        }
    }
    return result;
}

FeatureTable extract_representations(const Network& net, const FeatureTable& features) {
    const Forward fw = forward(net, features.features());
    return FeatureTable(features.records(), fw.representation, false);
}

void save_network(const std::string& path, const Network& net,
                  const std::string& provenance) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    if (!provenance.empty()) f << "# " << provenance << "\n";
    f.precision(17);
    f << "input_dim," << net.arch.input_dim << "\noutput_count," << net.arch.output_count
      << "\nhidden";
    for (int w : net.arch.hidden_widths) f << ',' << w;
    f << "\n";
    auto dump = [&](const Eigen::MatrixXd& m) {
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            for (Eigen::Index j = 0; j < m.cols(); ++j)
                f << (j ? "," : "") << m(i, j);
            f << "\n";
        }
    };
    for (std::size_t l = 0; l < net.encoder_w.size(); ++l) {
        f << "layer," << l << "\n";
        dump(net.encoder_w[l]);
        dump(net.encoder_b[l].transpose());
    }
    f << "head\n";
    dump(net.head_w);
    dump(net.head_b.transpose());
}

Network load_network(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(f, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        lines.push_back(line);
    }
    std::size_t pos = 0;
    auto next = [&]() -> const std::string& {
        if (pos >= lines.size()) throw std::runtime_error(path + ": truncated");
        return lines[pos++];
    };
    auto parse_row = [](const std::string& l) {
        std::vector<double> out;
        std::stringstream ss(l);
        std::string tok;
        while (std::getline(ss, tok, ',')) out.push_back(std::stod(tok));
        return out;
    };

    Network net;
    {
        const auto& l = next();
        if (l.rfind("input_dim,", 0) != 0) throw std::runtime_error(path + ": bad header");
        net.arch.input_dim = std::stoi(l.substr(10));
    }
    {
        const auto& l = next();
        if (l.rfind("output_count,", 0) != 0)
            throw std::runtime_error(path + ": bad header");
        net.arch.output_count = std::stoi(l.substr(13));
    }
    {
        const auto& l = next();
        if (l.rfind("hidden,", 0) != 0) throw std::runtime_error(path + ": bad header");
        std::stringstream ss(l.substr(7));
        std::string tok;
        while (std::getline(ss, tok, ',')) net.arch.hidden_widths.push_back(std::stoi(tok));
    }
    net.arch.validate();

    int in = net.arch.input_dim;
    for (std::size_t l = 0; l < net.arch.hidden_widths.size(); ++l) {
        if (next() != "layer," + std::to_string(l))
            throw std::runtime_error(path + ": bad layer marker");
        const int width = net.arch.hidden_widths[l];
        Eigen::MatrixXd w(width, in);
        for (int i = 0; i < width; ++i) {
            auto row = parse_row(next());
            if (static_cast<int>(row.size()) != in)
                throw std::runtime_error(path + ": bad layer row");
            for (int j = 0; j < in; ++j) w(i, j) = row[static_cast<std::size_t>(j)];
        }
        auto brow = parse_row(next());
        if (static_cast<int>(brow.size()) != width)
            throw std::runtime_error(path + ": bad offset row");
        net.encoder_w.push_back(std::move(w));
        net.encoder_b.push_back(
            Eigen::Map<Eigen::VectorXd>(brow.data(), static_cast<Eigen::Index>(width)));
        in = width;
    }
    if (next() != "head") throw std::runtime_error(path + ": missing head marker");
    const int r = net.arch.representation_dim();
    net.head_w.resize(r, net.arch.output_count);
    for (int i = 0; i < r; ++i) {
        auto row = parse_row(next());
        if (static_cast<int>(row.size()) != net.arch.output_count)
            throw std::runtime_error(path + ": bad head row");
        for (int j = 0; j < net.arch.output_count; ++j)
            net.head_w(i, j) = row[static_cast<std::size_t>(j)];
    }
    auto brow = parse_row(next());
    if (static_cast<int>(brow.size()) != net.arch.output_count)
        throw std::runtime_error(path + ": bad head offsets");
    net.head_b = Eigen::Map<Eigen::VectorXd>(brow.data(),
                                             static_cast<Eigen::Index>(brow.size()));
    return net;
}

void save_training_log(const std::string& path, const std::vector<EpochLog>& log,
                       const std::string& provenance) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    if (!provenance.empty()) f << "# " << provenance << "\n";
    f << "epoch,train_loss,val_rmse\n";
    f.precision(12);
    for (const auto& e : log) f << e.epoch << ',' << e.train_loss << ',' << e.val_rmse << "\n";
}

}  // namespace densmap
