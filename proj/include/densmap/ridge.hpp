#pragma once

#include "densmap/data_model.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace densmap {

struct Weights {
    Eigen::VectorXd w;
    double lambda2 = 0.0;
    std::string trained_on;
};

struct Prediction {
    std::string image_id;
    double value = 0.0;  // raw regression output, not clipped
    int fold = -1;
};

struct Predictions {
    std::vector<Prediction> items;

    double value_of(const std::string& image_id) const;
    std::vector<double> values_in_order(const std::vector<std::string>& image_ids) const;
};

/// Solves (X^T X + lambda2 I) w = X^T y by LDLT of the regularized Gram matrix.
Weights fit_ridge(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double lambda2,
                  const std::string& trained_on = "");

Eigen::VectorXd ridge_predict(const Weights& wts, const Eigen::MatrixXd& X);

Predictions predict(const Weights& wts, const FeatureTable& biased);

/// Grouped k-fold cross-validated heldout predictions. `features` is unbiased;
/// the bias column is appended per fold internally.
Predictions cross_val_predict(const FeatureTable& features,
                              const std::vector<double>& target, int k, double lambda2,
                              std::uint64_t seed);

void save_weights(const std::string& path, const Weights& wts,
                  const std::string& provenance = "");
Weights load_weights(const std::string& path);

void save_predictions(const std::string& path, const Predictions& preds,
                      const std::string& provenance = "");
Predictions load_predictions(const std::string& path);

}  // namespace densmap
