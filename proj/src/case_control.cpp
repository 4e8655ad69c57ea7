#include "densmap/case_control.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace densmap {

double woman_score(const Predictions& predictions,
                   const std::vector<std::string>& image_ids) {
    if (image_ids.empty()) throw std::invalid_argument("woman_score: no images");
    double sum = 0;
    for (const auto& id : image_ids) sum += predictions.value_of(id);
    return sum / static_cast<double>(image_ids.size());
}

std::map<std::string, double> woman_scores(const Predictions& predictions,
                                           const FeatureTable& features) {
    std::map<std::string, std::vector<std::string>> images_of;
    for (const auto& rec : features.records())
        images_of[rec.woman_id].push_back(rec.image_id);
    std::map<std::string, double> out;
    for (const auto& [woman, ids] : images_of) out[woman] = woman_score(predictions, ids);
    return out;
}

double percentile(std::vector<double> values, double q) {
    if (values.empty()) throw std::invalid_argument("percentile of empty sample");
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

QuintileAssignment assign_quintiles(const std::vector<double>& control_scores,
                                    const std::map<std::string, double>& all_scores) {
    if (control_scores.size() < 5)
        throw std::invalid_argument("assign_quintiles: need at least 5 controls");
    QuintileAssignment out;
    for (int b = 0; b < 4; ++b)
        out.boundaries[static_cast<std::size_t>(b)] =
            percentile(control_scores, 0.2 * (b + 1));
    if (out.boundaries[0] == out.boundaries[3])
        throw std::invalid_argument("assign_quintiles: degenerate boundaries");
    for (const auto& [woman, score] : all_scores) {
        int q = 1;
        for (double b : out.boundaries)
            if (score > b) ++q;  // ties go to the lower quintile
        out.quintile_of[woman] = q;
    }
    return out;
}

OddsRatioResult odds_ratio_top_bottom(const QuintileAssignment& assign,
                                      const std::vector<CaseControlRow>& roster,
                                      double level) {
    OddsRatioResult res;
    for (const auto& row : roster) {
        auto it = assign.quintile_of.find(row.woman_id);
        if (it == assign.quintile_of.end())
            throw std::runtime_error("no quintile for woman '" + row.woman_id + "'");
        if (it->second == 5)
            (row.is_case ? res.cases_top : res.controls_top) += 1;
        else if (it->second == 1)
            (row.is_case ? res.cases_bottom : res.controls_bottom) += 1;
    }
    if (res.cases_top + res.controls_top == 0 || res.cases_bottom + res.controls_bottom == 0)
        throw std::runtime_error("odds_ratio: empty top or bottom quintile");

    double a = res.cases_top, b = res.controls_top, c = res.cases_bottom,
           d = res.controls_bottom;
    if (a == 0 || b == 0 || c == 0 || d == 0) {
        a += 0.5;
        b += 0.5;
        c += 0.5;
        d += 0.5;
        res.continuity_corrected = true;
    }
    res.or_point = (a / b) / (c / d);
    const double z = level == 0.95 ? 1.959963984540054 : [&] {
        // inverse normal via Acklam-style rational approximation of the tail
        const double p = 1.0 - (1.0 - level) / 2.0;
        // Beasley-Springer-Moro
        static const double a1[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                    -2.759285104469687e+02, 1.383577518672690e+02,
                                    -3.066479806614716e+01, 2.506628277459239e+00};
        static const double b1[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                    -1.556989798598866e+02, 6.680131188771972e+01,
                                    -1.328068155288572e+01};
        const double q = p - 0.5;
        const double r = q * q;
        return (((((a1[0] * r + a1[1]) * r + a1[2]) * r + a1[3]) * r + a1[4]) * r + a1[5]) *
               q /
               (((((b1[0] * r + b1[1]) * r + b1[2]) * r + b1[3]) * r + b1[4]) * r + 1.0);
    }();
    const double se = std::sqrt(1.0 / a + 1.0 / b + 1.0 / c + 1.0 / d);
    res.ci_low = std::exp(std::log(res.or_point) - z * se);
    res.ci_high = std::exp(std::log(res.or_point) + z * se);
    return res;
}

void save_odds_ratios(const std::string& path,
                      const std::vector<std::pair<std::string, OddsRatioResult>>& rows,
                      const std::string& provenance) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    if (!provenance.empty()) f << "# " << provenance << "\n";
    f << "model,or,ci_low,ci_high,a,b,c,d,corrected\n";
    f.precision(12);
    for (const auto& [model, r] : rows)
        f << model << ',' << r.or_point << ',' << r.ci_low << ',' << r.ci_high << ','
          << r.cases_top << ',' << r.controls_top << ',' << r.cases_bottom << ','
          << r.controls_bottom << ',' << (r.continuity_corrected ? 1 : 0) << "\n";
}

}  // namespace densmap
