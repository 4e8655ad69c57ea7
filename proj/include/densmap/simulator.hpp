#pragma once

#include "densmap/data_model.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace densmap {

/// One simulated reader: a monotone recalibration of the density scale,
/// a personal weighting of the latent image attributes, and a random
/// error scale. The three knobs can be switched off independently.
struct ReaderProfile {
    std::string reader_id;
    // (x, y) knots on [0,100]; endpoints fixed at (0,0) and (100,100).
    std::vector<std::pair<double, double>> dist_knots{{0, 0}, {100, 100}};
    Eigen::VectorXd attribute_weights;  // nonnegative, sums to 1
    double noise_sd = 0.0;

    void validate(int q) const;
    double apply_transform(double x) const;
};

struct SimConfig {
    int n_women = 1000;
    int images_per_woman = 4;
    int q = 3;            // latent attribute count
    int feature_dim = 16;
    std::vector<ReaderProfile> readers;
    Eigen::MatrixXd pairing_weights;  // m x m, symmetric, zero diagonal
    double truth_alpha = 2.0;         // Beta law for the woman-level density
    double truth_beta = 4.0;
    double latent_spread = 0.08;      // attribute scatter around the woman level
    double image_jitter = 0.02;       // per-image latent scatter
    double feature_noise_sd = 0.5;
    double cancer_log_odds_intercept = -2.0;
    double cancer_log_odds_slope = 0.0;  // per percent of mean density
    int control_ratio = 3;
    std::uint64_t seed = 0;

    void validate() const;
};

struct TruthRow {
    std::string image_id;
    double true_density = 0.0;
    Eigen::VectorXd latent;
};

struct TruthTable {
    std::vector<TruthRow> images;
    std::vector<std::pair<std::string, bool>> women;  // woman_id, cancer_status

    double woman_mean_density(const std::string& woman_id) const;
};

struct PairAssignment {
    std::vector<std::pair<std::string, std::pair<std::string, std::string>>> image_pairs;
};

struct CaseControlRow {
    std::string woman_id;
    bool is_case = false;
    int match_group = -1;
};

struct Cohort {
    FeatureTable features;
    LabelTable labels;
    TruthTable truth;
    PairAssignment pairs;
};

double reader_score(const ReaderProfile& profile, double true_density,
                    const Eigen::VectorXd& latent, std::mt19937_64& rng);

Cohort simulate_cohort(const SimConfig& cfg);

std::vector<CaseControlRow> simulate_case_control(
    const TruthTable& truth, const SimConfig& cfg,
    const std::vector<std::string>& excluded_women = {});

void save_truth_table(const std::string& path, const TruthTable& t,
                      const std::string& provenance = "");
void save_roster(const std::string& path, const std::vector<CaseControlRow>& roster,
                 const std::string& provenance = "");
std::vector<CaseControlRow> load_roster(const std::string& path);

}  // namespace densmap
