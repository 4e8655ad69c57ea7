#include "densmap/ridge.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace densmap {

double Predictions::value_of(const std::string& image_id) const {
    for (const auto& p : items)
        if (p.image_id == image_id) return p.value;
    throw std::runtime_error("no prediction for image '" + image_id + "'");
}

std::vector<double> Predictions::values_in_order(
    const std::vector<std::string>& image_ids) const {
    std::unordered_map<std::string, double> by_id;
    by_id.reserve(items.size());
    for (const auto& p : items) by_id.emplace(p.image_id, p.value);
    std::vector<double> out;
    out.reserve(image_ids.size());
    for (const auto& id : image_ids) {
        auto it = by_id.find(id);
        if (it == by_id.end())
            throw std::runtime_error("no prediction for image '" + id + "'");
        out.push_back(it->second);
    }
    return out;
}

Weights fit_ridge(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double lambda2,
                  const std::string& trained_on) {
    if (X.rows() != y.size())
        throw std::invalid_argument("fit_ridge: " + std::to_string(X.rows()) +
                                    " rows vs " + std::to_string(y.size()) + " targets");
    if (lambda2 < 0) throw std::invalid_argument("fit_ridge: negative lambda2");

    Eigen::MatrixXd gram = X.transpose() * X;
    gram.diagonal().array() += lambda2;
    const Eigen::VectorXd rhs = X.transpose() * y;

    Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
    Eigen::VectorXd w = ldlt.solve(rhs);
    const double resid = (gram * w - rhs).norm();
    // the normal equations are consistent even for rank-deficient X, so the
    // residual alone cannot flag an unregularized singular system
    const Eigen::VectorXd pivots = ldlt.vectorD().cwiseAbs();
    const bool rank_deficient =
        lambda2 == 0.0 && pivots.size() > 0 &&
        pivots.minCoeff() <= 1e-12 * std::max(pivots.maxCoeff(), 1.0);
    if (ldlt.info() != Eigen::Success || !w.allFinite() || rank_deficient ||
        resid > 1e-8 * std::max(rhs.norm(), 1.0))
        throw std::runtime_error(
            lambda2 == 0.0 ? "fit_ridge: singular system at lambda2 = 0"
                           : "fit_ridge: solve failed (residual " + std::to_string(resid) + ")");
    return Weights{std::move(w), lambda2, trained_on};
}

Eigen::VectorXd ridge_predict(const Weights& wts, const Eigen::MatrixXd& X) {
    if (X.cols() != wts.w.size())
        throw std::invalid_argument("predict: feature dimension " + std::to_string(X.cols()) +
                                    " does not match weight length " +
                                    std::to_string(wts.w.size()));
    return X * wts.w;
}

Predictions predict(const Weights& wts, const FeatureTable& biased) {
    const Eigen::VectorXd v = ridge_predict(wts, biased.features());
    Predictions out;
    out.items.reserve(static_cast<std::size_t>(v.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i)
        out.items.push_back({biased.records()[static_cast<std::size_t>(i)].image_id, v(i), -1});
    return out;
}

Predictions cross_val_predict(const FeatureTable& features,
                              const std::vector<double>& target, int k, double lambda2,
                              std::uint64_t seed) {
    if (static_cast<Eigen::Index>(target.size()) != features.rows())
        throw std::invalid_argument("cross_val_predict: target length mismatch");
    const auto folds = grouped_kfold(features, k, seed);
    const FeatureTable biased = features.has_bias() ? features : append_bias(features);

    Predictions out;
    out.items.resize(static_cast<std::size_t>(features.rows()));
    for (std::size_t f = 0; f < folds.size(); ++f) {
        const auto& fold = folds[f];
        Eigen::MatrixXd Xtr(static_cast<Eigen::Index>(fold.train_rows.size()), biased.cols());
        Eigen::VectorXd ytr(static_cast<Eigen::Index>(fold.train_rows.size()));
        for (std::size_t i = 0; i < fold.train_rows.size(); ++i) {
            Xtr.row(static_cast<Eigen::Index>(i)) = biased.features().row(fold.train_rows[i]);
            ytr(static_cast<Eigen::Index>(i)) =
                target[static_cast<std::size_t>(fold.train_rows[i])];
        }
        const Weights wts = fit_ridge(Xtr, ytr, lambda2, "fold" + std::to_string(f));
        for (Eigen::Index r : fold.heldout_rows) {
            const double v = biased.features().row(r).dot(wts.w);
            out.items[static_cast<std::size_t>(r)] = {
                features.records()[static_cast<std::size_t>(r)].image_id, v,
                static_cast<int>(f)};
        }
    }
    return out;
}

void save_weights(const std::string& path, const Weights& wts,
                  const std::string& provenance) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    if (!provenance.empty()) f << "# " << provenance << "\n";
    f.precision(17);
    f << "lambda2," << wts.lambda2 << "\n";
    for (Eigen::Index i = 0; i < wts.w.size(); ++i) f << wts.w(i) << "\n";
}

Weights load_weights(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path);
    std::string line;
    Weights wts;
    std::vector<double> vals;
    bool saw_header = false;
    while (std::getline(f, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        if (!saw_header) {
            if (line.rfind("lambda2,", 0) != 0)
                throw std::runtime_error(path + ": missing lambda2 header");
            wts.lambda2 = std::stod(line.substr(8));
            saw_header = true;
            continue;
        }
        vals.push_back(std::stod(line));
    }
    wts.w = Eigen::Map<Eigen::VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
    return wts;
}

void save_predictions(const std::string& path, const Predictions& preds,
                      const std::string& provenance) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    if (!provenance.empty()) f << "# " << provenance << "\n";
    f << "image_id,prediction,fold\n";
    f.precision(17);
    for (const auto& p : preds.items)
        f << p.image_id << ',' << p.value << ',' << p.fold << "\n";
}

Predictions load_predictions(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path);
    Predictions out;
    std::string line;
    bool saw_header = false;
    while (std::getline(f, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        if (!saw_header) {
            if (line != "image_id,prediction,fold")
                throw std::runtime_error(path + ": malformed header");
            saw_header = true;
            continue;
        }
        std::stringstream ss(line);
        std::string id, val, fold;
        std::getline(ss, id, ',');
        std::getline(ss, val, ',');
        std::getline(ss, fold, ',');
        out.items.push_back({id, std::stod(val), std::stoi(fold)});
    }
    if (!saw_header) throw std::runtime_error(path + ": missing header");
    return out;
}

}  // namespace densmap
