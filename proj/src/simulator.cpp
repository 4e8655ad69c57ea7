#include "densmap/simulator.hpp"

#include "densmap/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <stdexcept>

namespace densmap {

namespace {

constexpr std::uint64_t kEmbeddingStream = 0xe4bed;
constexpr std::uint64_t kWomanStreamBase = 0x10000;
constexpr std::uint64_t kRosterStream = 0x205e7;

double clip01(double x) { return std::min(1.0, std::max(0.0, x)); }
double clip_percent(double x) { return std::min(100.0, std::max(0.0, x)); }

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Fixed random two-layer tanh embedding from (latent, view, side) to p dims.
struct Embedding {
    Eigen::MatrixXd w1, w2;
    Eigen::VectorXd b1, b2;

    Embedding(int q, int p, std::uint64_t seed) {
        const int in = q + 2;
        const int hidden = 32;
        auto rng = make_rng(seed, kEmbeddingStream);
        std::normal_distribution<double> normal(0.0, 1.0);
        auto fill = [&](Eigen::MatrixXd& m, double scale) {
            for (Eigen::Index i = 0; i < m.rows(); ++i)
                for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = scale * normal(rng);
        };
        w1.resize(hidden, in);
        b1.resize(hidden);
        w2.resize(p, hidden);
        b2.resize(p);
        fill(w1, 2.0 / std::sqrt(static_cast<double>(in)));
        for (Eigen::Index i = 0; i < b1.size(); ++i) b1(i) = 0.5 * normal(rng);
        fill(w2, 1.0 / std::sqrt(static_cast<double>(hidden)));
        for (Eigen::Index i = 0; i < b2.size(); ++i) b2(i) = 0.1 * normal(rng);
    }

    Eigen::VectorXd operator()(const Eigen::VectorXd& latent, View view, Side side) const {
        Eigen::VectorXd z(latent.size() + 2);
        z.head(latent.size()) = latent;
        z(latent.size()) = view == View::CC ? 1.0 : -1.0;
        z(latent.size() + 1) = side == Side::L ? 1.0 : -1.0;
        return w2 * (w1 * z + b1).array().tanh().matrix() + b2;
    }
};

}  // namespace

void ReaderProfile::validate(int q) const {
    if (dist_knots.size() < 2 || dist_knots.front() != std::make_pair(0.0, 0.0) ||
        dist_knots.back() != std::make_pair(100.0, 100.0))
        throw std::invalid_argument("reader '" + reader_id +
                                    "': transform endpoints must be (0,0) and (100,100)");
    for (std::size_t i = 1; i < dist_knots.size(); ++i)
        if (dist_knots[i].first <= dist_knots[i - 1].first ||
            dist_knots[i].second <= dist_knots[i - 1].second)
            throw std::invalid_argument("reader '" + reader_id +
                                        "': transform knots must be strictly increasing");
    if (attribute_weights.size() != q)
        throw std::invalid_argument("reader '" + reader_id + "': expected " +
                                    std::to_string(q) + " attribute weights");
    if ((attribute_weights.array() < 0).any() ||
        std::abs(attribute_weights.sum() - 1.0) > 1e-9)
        throw std::invalid_argument("reader '" + reader_id +
                                    "': attribute weights must be nonnegative and sum to 1");
    if (noise_sd < 0)
        throw std::invalid_argument("reader '" + reader_id + "': negative noise_sd");
}

double ReaderProfile::apply_transform(double x) const {
    x = clip_percent(x);
    for (std::size_t i = 1; i < dist_knots.size(); ++i) {
        if (x <= dist_knots[i].first) {
            const auto& [x0, y0] = dist_knots[i - 1];
            const auto& [x1, y1] = dist_knots[i];
            return y0 + (y1 - y0) * (x - x0) / (x1 - x0);
        }
    }
    return 100.0;
}

void SimConfig::validate() const {
    if (n_women < 1 || images_per_woman < 1 || q < 1 || feature_dim < 1)
        throw std::invalid_argument("cohort dimensions must be positive");
    if (readers.size() < 2) throw std::invalid_argument("need at least two readers");
    for (const auto& r : readers) r.validate(q);
    const auto m = static_cast<Eigen::Index>(readers.size());
    if (pairing_weights.rows() != m || pairing_weights.cols() != m)
        throw std::invalid_argument("pairing_weights must be m x m");
    if ((pairing_weights.array() < 0).any() ||
        pairing_weights.diagonal().cwiseAbs().sum() > 0 ||
        !pairing_weights.isApprox(pairing_weights.transpose()))
        throw std::invalid_argument(
            "pairing_weights must be symmetric, nonnegative, zero diagonal");
    if (pairing_weights.sum() <= 0)
        throw std::invalid_argument("all pairing weights are zero");
    if (truth_alpha <= 0 || truth_beta <= 0)
        throw std::invalid_argument("truth distribution parameters must be positive");
    if (control_ratio < 1) throw std::invalid_argument("control_ratio must be >= 1");
}

double reader_score(const ReaderProfile& profile, double /*true_density*/,
                    const Eigen::VectorXd& latent, std::mt19937_64& rng) {
    double perceived = 100.0 * profile.attribute_weights.dot(latent);
    double score = profile.apply_transform(perceived);
    if (profile.noise_sd > 0) {
        std::normal_distribution<double> noise(0.0, profile.noise_sd);
        score += noise(rng);
    }
    return clip_percent(score);
}

Cohort simulate_cohort(const SimConfig& cfg) {
    cfg.validate();
    const int m = static_cast<int>(cfg.readers.size());
    const Embedding embed(cfg.q, cfg.feature_dim, cfg.seed);

    // flattened upper triangle of pairing weights as a discrete law
    std::vector<std::pair<int, int>> pair_ids;
    std::vector<double> pair_cdf;
    double total = 0;
    for (int a = 0; a < m; ++a)
        for (int b = a + 1; b < m; ++b) {
            total += cfg.pairing_weights(a, b);
            pair_ids.emplace_back(a, b);
            pair_cdf.push_back(total);
        }

    std::vector<ImageRecord> records;
    Eigen::MatrixXd feats(cfg.n_women * cfg.images_per_woman, cfg.feature_dim);
    std::vector<LabelEntry> entries;
    TruthTable truth;
    PairAssignment pairs;

    Eigen::Index row = 0;
    for (int w = 0; w < cfg.n_women; ++w) {
        auto rng = make_rng(cfg.seed, kWomanStreamBase + static_cast<std::uint64_t>(w));
        std::ostringstream wid;
        wid << "w" << std::setw(6) << std::setfill('0') << w;
        const std::string woman_id = wid.str();

        std::gamma_distribution<double> ga(cfg.truth_alpha, 1.0);
        std::gamma_distribution<double> gb(cfg.truth_beta, 1.0);
        double x = ga(rng), y = gb(rng);
        double base = x / (x + y);

        std::normal_distribution<double> spread(0.0, cfg.latent_spread);
        Eigen::VectorXd latent_woman(cfg.q);
        for (int j = 0; j < cfg.q; ++j) latent_woman(j) = clip01(base + spread(rng));

        std::normal_distribution<double> jitter(0.0, cfg.image_jitter);
        std::normal_distribution<double> fnoise(0.0, cfg.feature_noise_sd);
        std::uniform_real_distribution<double> unif(0.0, total);

        double density_sum = 0;
        for (int k = 0; k < cfg.images_per_woman; ++k) {
            const View view = (k % 2 == 0) ? View::CC : View::MLO;
            const Side side = ((k / 2) % 2 == 0) ? Side::L : Side::R;
            const std::string image_id = woman_id + "_" + to_string(view) + to_string(side) +
                                         (k >= 4 ? std::to_string(k) : "");

            Eigen::VectorXd latent(cfg.q);
            for (int j = 0; j < cfg.q; ++j) latent(j) = clip01(latent_woman(j) + jitter(rng));
            const double density = clip_percent(100.0 * latent.mean());
            density_sum += density;

            auto it = std::upper_bound(pair_cdf.begin(), pair_cdf.end(), unif(rng));
            const auto [ra, rb] =
                pair_ids[std::min<std::size_t>(it - pair_cdf.begin(), pair_ids.size() - 1)];

            entries.push_back(
                {image_id, cfg.readers[ra].reader_id,
                 reader_score(cfg.readers[ra], density, latent, rng)});
            entries.push_back(
                {image_id, cfg.readers[rb].reader_id,
                 reader_score(cfg.readers[rb], density, latent, rng)});
            pairs.image_pairs.push_back(
                {image_id, {cfg.readers[ra].reader_id, cfg.readers[rb].reader_id}});

            Eigen::VectorXd fv = embed(latent, view, side);
            for (Eigen::Index j = 0; j < fv.size(); ++j) fv(j) += fnoise(rng);
            feats.row(row) = fv.transpose();
            records.push_back({image_id, woman_id, view, side});
            truth.images.push_back({image_id, density, latent});
            ++row;
        }

        const double mean_density = density_sum / cfg.images_per_woman;
        const double p_case = logistic(cfg.cancer_log_odds_intercept +
                                       cfg.cancer_log_odds_slope * mean_density);
        std::bernoulli_distribution cancer(p_case);
        truth.women.emplace_back(woman_id, cancer(rng));
    }

    // first-appearance reader order would depend on pair draws; pin the manifest
    std::vector<std::string> manifest;
    for (const auto& r : cfg.readers) manifest.push_back(r.reader_id);

    return Cohort{FeatureTable(std::move(records), std::move(feats), false),
                  LabelTable(std::move(entries), std::move(manifest)), std::move(truth),
                  std::move(pairs)};
}

double TruthTable::woman_mean_density(const std::string& woman_id) const {
    double sum = 0;
    int n = 0;
    for (const auto& img : images) {
        if (img.image_id.rfind(woman_id + "_", 0) == 0) {
            sum += img.true_density;
            ++n;
        }
    }
    if (n == 0) throw std::runtime_error("no images for woman '" + woman_id + "'");
    return sum / n;
}

std::vector<CaseControlRow> simulate_case_control(
    const TruthTable& truth, const SimConfig& cfg,
    const std::vector<std::string>& excluded_women) {
    std::set<std::string> excluded(excluded_women.begin(), excluded_women.end());
    std::vector<std::string> cases, noncases;
    for (const auto& [woman_id, status] : truth.women) {
        if (excluded.count(woman_id)) continue;
        (status ? cases : noncases).push_back(woman_id);
    }
    if (noncases.size() < cases.size() * static_cast<std::size_t>(cfg.control_ratio))
        throw std::runtime_error("insufficient controls: " + std::to_string(noncases.size()) +
                                 " for " + std::to_string(cases.size()) + " cases at ratio " +
                                 std::to_string(cfg.control_ratio));

    auto rng = make_rng(cfg.seed, kRosterStream);
    std::shuffle(noncases.begin(), noncases.end(), rng);

    std::vector<CaseControlRow> roster;
    std::size_t next = 0;
    for (std::size_t c = 0; c < cases.size(); ++c) {
        roster.push_back({cases[c], true, static_cast<int>(c)});
        for (int j = 0; j < cfg.control_ratio; ++j)
            roster.push_back({noncases[next++], false, static_cast<int>(c)});
    }
    return roster;
}

void save_truth_table(const std::string& path, const TruthTable& t,
                      const std::string& provenance) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    if (!provenance.empty()) f << "# " << provenance << "\n";
    const int q = t.images.empty() ? 0 : static_cast<int>(t.images[0].latent.size());
    f << "image_id,true_density";
    for (int j = 0; j < q; ++j) f << ",latent" << j;
    f << "\n";
    f.precision(17);
    for (const auto& img : t.images) {
        f << img.image_id << ',' << img.true_density;
        for (Eigen::Index j = 0; j < img.latent.size(); ++j) f << ',' << img.latent(j);
        f << "\n";
    }
}

void save_roster(const std::string& path, const std::vector<CaseControlRow>& roster,
                 const std::string& provenance) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    if (!provenance.empty()) f << "# " << provenance << "\n";
    f << "woman_id,status,match_group\n";
    for (const auto& r : roster)
        f << r.woman_id << ',' << (r.is_case ? "case" : "control") << ',' << r.match_group
          << "\n";
}

std::vector<CaseControlRow> load_roster(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path);
    std::vector<CaseControlRow> roster;
    std::string line;
    bool saw_header = false;
    while (std::getline(f, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        if (!saw_header) {
            if (line != "woman_id,status,match_group")
                throw std::runtime_error(path + ": malformed header");
            saw_header = true;
            continue;
        }
        std::stringstream ss(line);
        CaseControlRow row;
        std::string status, group;
        std::getline(ss, row.woman_id, ',');
        std::getline(ss, status, ',');
        std::getline(ss, group, ',');
        if (status != "case" && status != "control")
            throw std::runtime_error(path + ": bad status '" + status + "'");
        row.is_case = status == "case";
        row.match_group = std::stoi(group);
        roster.push_back(std::move(row));
    }
    if (!saw_header) throw std::runtime_error(path + ": missing header");
    return roster;
}

}  // namespace densmap
