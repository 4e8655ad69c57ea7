#pragma once

#include "densmap/data_model.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace densmap {

struct NetworkArch {
    int input_dim = 0;
    std::vector<int> hidden_widths;  // last width is the representation dim
    int output_count = 1;

    int representation_dim() const { return hidden_widths.back(); }
    void validate() const;
};

/// tanh encoder layers plus a linear multi-output head.
struct Network {
    NetworkArch arch;
    std::vector<Eigen::MatrixXd> encoder_w;  // layer l: width_l x in_l
    std::vector<Eigen::VectorXd> encoder_b;
    Eigen::MatrixXd head_w;  // r x output_count
    Eigen::VectorXd head_b;  // output_count
};

struct TrainConfig {
    double learning_rate = 1e-3;
    int batch_size = 64;
    int max_epochs = 200;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double augment_noise_sd = 0.0;  // feature-space Gaussian augmentation
    std::uint64_t seed = 0;

    void validate() const;
};

struct MaskedBatch {
    Eigen::MatrixXd X;    // n x input_dim
    Eigen::MatrixXd D;    // n x m; masked entries arbitrary (zeros by convention)
    Eigen::MatrixXd Phi;  // n x m binary mask

    void validate(bool require_known_per_row = true) const;
};

struct Gradients {
    std::vector<Eigen::MatrixXd> encoder_w;
    std::vector<Eigen::VectorXd> encoder_b;
    Eigen::MatrixXd head_w;
    Eigen::VectorXd head_b;
};

struct Forward {
    Eigen::MatrixXd representation;  // n x r
    Eigen::MatrixXd outputs;         // n x output_count
};

struct EpochLog {
    int epoch = 0;
    double train_loss = 0.0;
    double val_rmse = 0.0;
};

struct TrainedNetwork {
    Network net;          // snapshot with minimal validation RMSE
    int best_epoch = -1;
    double best_val_rmse = 0.0;
    std::vector<EpochLog> log;
};

Network init_network(const NetworkArch& arch, std::uint64_t seed);

Forward forward(const Network& net, const Eigen::MatrixXd& X);

double masked_loss(const Eigen::MatrixXd& outputs, const Eigen::MatrixXd& D,
                   const Eigen::MatrixXd& Phi);

Gradients loss_gradient(const Network& net, const MaskedBatch& batch);

/// RMSE over known (Phi = 1) entries.
double masked_rmse(const Network& net, const MaskedBatch& batch);

TrainedNetwork train(Network net, const MaskedBatch& train_data,
                     const MaskedBatch& val_data, const TrainConfig& cfg);

/// Encoder output as an r-column FeatureTable (has_bias = false), usable as
/// ridge input. Works for trained or freshly initialized networks.
FeatureTable extract_representations(const Network& net, const FeatureTable& features);

void save_network(const std::string& path, const Network& net,
                  const std::string& provenance = "");
Network load_network(const std::string& path);

void save_training_log(const std::string& path, const std::vector<EpochLog>& log,
                       const std::string& provenance = "");

}  // namespace densmap
