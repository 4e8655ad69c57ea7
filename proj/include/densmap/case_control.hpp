#pragma once

#include "densmap/data_model.hpp"
#include "densmap/ridge.hpp"
#include "densmap/simulator.hpp"

#include <array>
#include <map>
#include <string>
#include <vector>

namespace densmap {

struct QuintileAssignment {
    std::array<double, 4> boundaries{};  // 20/40/60/80 percentiles of control scores
    std::map<std::string, int> quintile_of;  // woman_id -> 1..5
};

struct OddsRatioResult {
    double or_point = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    // case/control counts in the top and bottom quintiles
    double cases_top = 0, controls_top = 0, cases_bottom = 0, controls_bottom = 0;
    bool continuity_corrected = false;
};

/// Mean of a woman's image predictions.
double woman_score(const Predictions& predictions,
                   const std::vector<std::string>& image_ids);

/// Woman-level scores for every woman appearing in the feature table and
/// present in the prediction set.
std::map<std::string, double> woman_scores(const Predictions& predictions,
                                           const FeatureTable& features);

/// Linear-interpolated percentile of a sample, q in [0,1].
double percentile(std::vector<double> values, double q);

QuintileAssignment assign_quintiles(const std::vector<double>& control_scores,
                                    const std::map<std::string, double>& all_scores);

OddsRatioResult odds_ratio_top_bottom(const QuintileAssignment& assign,
                                      const std::vector<CaseControlRow>& roster,
                                      double level = 0.95);

void save_odds_ratios(const std::string& path,
                      const std::vector<std::pair<std::string, OddsRatioResult>>& rows,
                      const std::string& provenance = "");

}  // namespace densmap
