#pragma once

#include "densmap/data_model.hpp"
#include "densmap/ridge.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace densmap {

enum class Metric { rmse, spearman };

std::string to_string(Metric m);

struct MetricResult {
    Metric name = Metric::rmse;
    double point = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    std::size_t n = 0;
    int repeats = 0;
    double level = 0.95;
    int degenerate_redraws = 0;  // spearman resamples redrawn for zero rank variance
};

struct BootstrapOptions {
    int repeats = 1000;
    double level = 0.95;
    std::uint64_t seed = 0;
    int max_redraws = 100;
};

double rmse(const std::vector<double>& pred, const std::vector<double>& target);

std::vector<double> average_ranks(const std::vector<double>& v);
double spearman(const std::vector<double>& pred, const std::vector<double>& target);

double compute_metric(Metric m, const std::vector<double>& pred,
                      const std::vector<double>& target);

MetricResult bootstrap_ci(Metric m, const std::vector<double>& pred,
                          const std::vector<double>& target, const BootstrapOptions& opt);

/// Resamples whole groups (e.g. the two individual-score pairs of one image)
/// jointly. `group` maps each sample index to its group id; groups must be
/// contiguous ids starting at 0.
MetricResult bootstrap_ci_grouped(Metric m, const std::vector<double>& pred,
                                  const std::vector<double>& target,
                                  const std::vector<std::size_t>& group,
                                  const BootstrapOptions& opt);

struct EvalCell {
    std::string train_labels;  // Av | Ind | subset id
    std::string test_labels;
    std::string subset;
    MetricResult rmse_result;
    MetricResult spearman_result;
    std::size_t n_images = 0;
};

struct EvalReport {
    std::vector<EvalCell> cells;
    std::vector<std::string> excluded_subsets;
    double lambda2 = 0.0;
    int k = 0;
    std::uint64_t seed = 0;
};

/// Four-cell train/test label-convention matrix (Av/Ind crossed), via
/// grouped cross-validation. Requires exactly two known labels per image.
EvalReport eval_label_matrix(const FeatureTable& features, const LabelTable& labels,
                             double lambda2, int k, std::uint64_t seed,
                             const BootstrapOptions& boot);

/// Per-subset metrics plus Av1/Av2 aggregate rows and a pooled "All" cell
/// over the union of the subset images.
EvalReport eval_subsets(const FeatureTable& features, const LabelTable& labels,
                        const std::vector<SubsetSpec>& specs, double lambda2, int k,
                        std::uint64_t seed, const BootstrapOptions& boot);

struct SizePoint {
    std::size_t size = 0;
    MetricResult rmse_result;
};

std::vector<SizePoint> size_curve(const FeatureTable& features,
                                  const std::vector<double>& target,
                                  const std::vector<std::size_t>& sizes, double lambda2,
                                  int k, std::uint64_t seed, const BootstrapOptions& boot);

struct SimilarityResult {
    MetricResult spearman_result;
    MetricResult rmse_result;
    std::size_t n = 0;
};

SimilarityResult prediction_similarity(const Predictions& a, const Predictions& b,
                                       const BootstrapOptions& boot);

void save_report(const std::string& path, const EvalReport& report,
                 const std::string& provenance = "");

}  // namespace densmap
