#include "densmap/metrics.hpp"

#include "densmap/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <stdexcept>

namespace densmap {

std::string to_string(Metric m) { return m == Metric::rmse ? "rmse" : "spearman"; }

double rmse(const std::vector<double>& pred, const std::vector<double>& target) {
    if (pred.size() != target.size())
        throw std::invalid_argument("rmse: length mismatch");
    if (pred.empty()) throw std::invalid_argument("rmse: empty input");
    double ss = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - target[i];
        ss += d * d;
    }
    return std::sqrt(ss / static_cast<double>(pred.size()));
}

std::vector<double> average_ranks(const std::vector<double>& v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(v.size());
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
        const double avg = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
        for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = avg;
        i = j + 1;
    }
    return ranks;
}

namespace {

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const double n = static_cast<double>(a.size());
    double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
    double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double da = a[i] - ma, db = b[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa == 0 || sbb == 0)
        throw std::invalid_argument("spearman: constant list has no rank variance");
    return sab / std::sqrt(saa * sbb);
}

bool is_constant(const std::vector<double>& v) {
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] != v[0]) return false;
    return true;
}

double percentile_sorted(const std::vector<double>& sorted, double q) {
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace

double spearman(const std::vector<double>& pred, const std::vector<double>& target) {
    if (pred.size() != target.size())
        throw std::invalid_argument("spearman: length mismatch");
    if (pred.size() < 2) throw std::invalid_argument("spearman: need at least 2 samples");
    return pearson(average_ranks(pred), average_ranks(target));
}

double compute_metric(Metric m, const std::vector<double>& pred,
                      const std::vector<double>& target) {
    return m == Metric::rmse ? rmse(pred, target) : spearman(pred, target);
}

MetricResult bootstrap_ci(Metric m, const std::vector<double>& pred,
                          const std::vector<double>& target, const BootstrapOptions& opt) {
    std::vector<std::size_t> group(pred.size());
    std::iota(group.begin(), group.end(), 0);
    return bootstrap_ci_grouped(m, pred, target, group, opt);
}

MetricResult bootstrap_ci_grouped(Metric m, const std::vector<double>& pred,
                                  const std::vector<double>& target,
                                  const std::vector<std::size_t>& group,
                                  const BootstrapOptions& opt) {
    if (pred.size() != target.size() || pred.size() != group.size())
        throw std::invalid_argument("bootstrap: length mismatch");
    if (opt.repeats < 100) throw std::invalid_argument("bootstrap: need >= 100 repeats");
    if (opt.level <= 0 || opt.level >= 1)
        throw std::invalid_argument("bootstrap: level outside (0,1)");

    const std::size_t n_groups = group.empty() ? 0 : *std::max_element(group.begin(), group.end()) + 1;
    std::vector<std::vector<std::size_t>> members(n_groups);
    for (std::size_t i = 0; i < group.size(); ++i) members[group[i]].push_back(i);

    MetricResult res;
    res.name = m;
    res.point = compute_metric(m, pred, target);
    res.n = pred.size();
    res.repeats = opt.repeats;
    res.level = opt.level;

    std::vector<double> stats;
    stats.reserve(static_cast<std::size_t>(opt.repeats));
    std::vector<double> rp, rt;
    for (int rep = 0; rep < opt.repeats; ++rep) {
        auto rng = make_rng(opt.seed, 0xb007 + static_cast<std::uint64_t>(rep));
        std::uniform_int_distribution<std::size_t> pick(0, n_groups - 1);
        for (int attempt = 0;; ++attempt) {
            rp.clear();
            rt.clear();
            for (std::size_t g = 0; g < n_groups; ++g) {
                for (std::size_t i : members[pick(rng)]) {
                    rp.push_back(pred[i]);
                    rt.push_back(target[i]);
                }
            }
            if (m == Metric::spearman && (is_constant(rp) || is_constant(rt))) {
                ++res.degenerate_redraws;
                if (attempt >= opt.max_redraws)
                    throw std::runtime_error(
                        "bootstrap: degenerate spearman resample redraw cap reached");
                continue;
            }
            break;
        }
        stats.push_back(compute_metric(m, rp, rt));
    }
    std::sort(stats.begin(), stats.end());
    const double alpha = 1.0 - opt.level;
    res.ci_low = std::min(percentile_sorted(stats, alpha / 2), res.point);
    res.ci_high = std::max(percentile_sorted(stats, 1.0 - alpha / 2), res.point);
    return res;
}

namespace {

BootstrapOptions derive(const BootstrapOptions& base, std::uint64_t stream) {
    BootstrapOptions o = base;
    o.seed = mix_seed(base.seed, stream);
    return o;
}

EvalCell make_cell(const std::string& train, const std::string& test,
                   const std::string& subset, const std::vector<double>& pred,
                   const std::vector<double>& target,
                   const std::vector<std::size_t>& group, const BootstrapOptions& boot,
                   std::size_t n_images) {
    EvalCell cell;
    cell.train_labels = train;
    cell.test_labels = test;
    cell.subset = subset;
    cell.n_images = n_images;
    cell.rmse_result = bootstrap_ci_grouped(Metric::rmse, pred, target, group,
                                            derive(boot, 1));
    cell.spearman_result = bootstrap_ci_grouped(Metric::spearman, pred, target, group,
                                                derive(boot, 2));
    return cell;
}

std::vector<std::size_t> trivial_groups(std::size_t n) {
    std::vector<std::size_t> g(n);
    std::iota(g.begin(), g.end(), 0);
    return g;
}

// Stacked-row training: one training row per (image, score) entry.
Predictions stacked_cross_val(const FeatureTable& features,
                              const std::vector<std::vector<double>>& scores_per_row,
                              int k, double lambda2, std::uint64_t seed) {
    const auto folds = grouped_kfold(features, k, seed);
    const FeatureTable biased = append_bias(features);
    Predictions out;
    out.items.resize(static_cast<std::size_t>(features.rows()));
    for (std::size_t f = 0; f < folds.size(); ++f) {
        const auto& fold = folds[f];
        std::size_t n_stacked = 0;
        for (Eigen::Index r : fold.train_rows)
            n_stacked += scores_per_row[static_cast<std::size_t>(r)].size();
        Eigen::MatrixXd Xtr(static_cast<Eigen::Index>(n_stacked), biased.cols());
        Eigen::VectorXd ytr(static_cast<Eigen::Index>(n_stacked));
        Eigen::Index w = 0;
        for (Eigen::Index r : fold.train_rows) {
            for (double s : scores_per_row[static_cast<std::size_t>(r)]) {
                Xtr.row(w) = biased.features().row(r);
                ytr(w) = s;
                ++w;
            }
        }
        const Weights wts = fit_ridge(Xtr, ytr, lambda2, "fold" + std::to_string(f));
        for (Eigen::Index r : fold.heldout_rows)
            out.items[static_cast<std::size_t>(r)] = {
                features.records()[static_cast<std::size_t>(r)].image_id,
                biased.features().row(r).dot(wts.w), static_cast<int>(f)};
    }
    return out;
}

}  // namespace

EvalReport eval_label_matrix(const FeatureTable& features, const LabelTable& labels,
                             double lambda2, int k, std::uint64_t seed,
                             const BootstrapOptions& boot) {
    const std::size_t n = static_cast<std::size_t>(features.rows());
    std::vector<std::vector<double>> scores(n);
    std::vector<double> avg(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& id = features.records()[i].image_id;
        for (std::size_t e : labels.entries_for(id))
            scores[i].push_back(labels.entries()[e].score);
        if (scores[i].size() != 2)
            throw std::invalid_argument("eval_label_matrix: image '" + id + "' has " +
                                        std::to_string(scores[i].size()) +
                                        " labels, expected 2");
        avg[i] = 0.5 * (scores[i][0] + scores[i][1]);
    }

    const Predictions pred_av = cross_val_predict(features, avg, k, lambda2, seed);
    const Predictions pred_ind = stacked_cross_val(features, scores, k, lambda2, seed);

    std::vector<double> pa(n), pi(n);
    for (std::size_t i = 0; i < n; ++i) {
        pa[i] = pred_av.items[i].value;
        pi[i] = pred_ind.items[i].value;
    }

    // each image contributes two (prediction, individual score) pairs
    std::vector<double> pa2, pi2, ind2;
    std::vector<std::size_t> group2;
    for (std::size_t i = 0; i < n; ++i)
        for (double s : scores[i]) {
            pa2.push_back(pa[i]);
            pi2.push_back(pi[i]);
            ind2.push_back(s);
            group2.push_back(i);
        }

    EvalReport report;
    report.lambda2 = lambda2;
    report.k = k;
    report.seed = seed;
    report.cells.push_back(
        make_cell("Av", "Av", "all", pa, avg, trivial_groups(n), derive(boot, 10), n));
    report.cells.push_back(
        make_cell("Ind", "Ind", "all", pi2, ind2, group2, derive(boot, 11), n));
    report.cells.push_back(
        make_cell("Av", "Ind", "all", pa2, ind2, group2, derive(boot, 12), n));
    report.cells.push_back(
        make_cell("Ind", "Av", "all", pi, avg, trivial_groups(n), derive(boot, 13), n));
    return report;
}

EvalReport eval_subsets(const FeatureTable& features, const LabelTable& labels,
                        const std::vector<SubsetSpec>& specs, double lambda2, int k,
                        std::uint64_t seed, const BootstrapOptions& boot) {
    EvalReport report;
    report.lambda2 = lambda2;
    report.k = k;
    report.seed = seed;

    std::vector<double> concat_pred, concat_target;
    std::vector<SubsetSpec> included;
    double sum_rmse = 0, sum_rmse_hw = 0, sum_sp = 0, sum_sp_hw = 0;
    std::size_t total_n = 0;
    std::uint64_t stream = 100;

    for (const auto& spec : specs) {
        SubsetData sub;
        try {
            sub = select_subset(features, labels, spec);
        } catch (const std::runtime_error&) {
            report.excluded_subsets.push_back(spec.describe());
            continue;
        }
        included.push_back(spec);
        const Predictions preds = cross_val_predict(sub.features, sub.target, k, lambda2, seed);
        std::vector<double> p(preds.items.size());
        for (std::size_t i = 0; i < p.size(); ++i) p[i] = preds.items[i].value;

        auto cell = make_cell(spec.describe(), spec.describe(), spec.describe(), p,
                              sub.target, trivial_groups(p.size()), derive(boot, stream),
                              p.size());
        sum_rmse += cell.rmse_result.point;
        sum_rmse_hw += 0.5 * (cell.rmse_result.ci_high - cell.rmse_result.ci_low);
        sum_sp += cell.spearman_result.point;
        sum_sp_hw += 0.5 * (cell.spearman_result.ci_high - cell.spearman_result.ci_low);
        total_n += p.size();
        concat_pred.insert(concat_pred.end(), p.begin(), p.end());
        concat_target.insert(concat_target.end(), sub.target.begin(), sub.target.end());
        report.cells.push_back(std::move(cell));
        stream += 10;
    }
    if (included.empty())
        throw std::runtime_error("eval_subsets: every subset was excluded");

    const double ns = static_cast<double>(included.size());
    auto av1_metric = [&](Metric m, double point, double hw) {
        MetricResult r;
        r.name = m;
        r.point = point;
        r.ci_low = point - hw;
        r.ci_high = point + hw;
        r.n = total_n;
        r.repeats = boot.repeats;
        r.level = boot.level;
        return r;
    };
    EvalCell av1;
    av1.train_labels = av1.test_labels = av1.subset = "Av1";
    av1.n_images = total_n;
    av1.rmse_result = av1_metric(Metric::rmse, sum_rmse / ns, sum_rmse_hw / ns);
    av1.spearman_result = av1_metric(Metric::spearman, sum_sp / ns, sum_sp_hw / ns);
    report.cells.push_back(av1);

    report.cells.push_back(make_cell("Av2", "Av2", "Av2", concat_pred, concat_target,
                                     trivial_groups(concat_pred.size()),
                                     derive(boot, 7000), total_n));

    // pooled "All": one model over the union of the included subset images
    std::set<std::string> union_ids;
    bool stacked = false;
    std::set<std::string> subset_readers;
    for (const auto& spec : included) {
        if (spec.kind == SubsetSpec::Kind::single_reader) stacked = true;
        for (const auto& r : spec.readers) subset_readers.insert(r);
        SubsetData sub = select_subset(features, labels, spec);
        for (const auto& rec : sub.features.records()) union_ids.insert(rec.image_id);
    }
    std::vector<Eigen::Index> rows;
    for (Eigen::Index i = 0; i < features.rows(); ++i)
        if (union_ids.count(features.records()[static_cast<std::size_t>(i)].image_id))
            rows.push_back(i);
    const FeatureTable pooled = features.select_rows(rows);

    if (stacked) {
        std::vector<std::vector<double>> scores(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const auto& id = pooled.records()[i].image_id;
            for (std::size_t e : labels.entries_for(id)) {
                const auto& entry = labels.entries()[e];
                if (subset_readers.count(entry.reader_id)) scores[i].push_back(entry.score);
            }
            if (scores[i].empty())
                scores[i].push_back(0);  // unreachable: union images have subset entries
        }
        const Predictions preds = stacked_cross_val(pooled, scores, k, lambda2, seed);
        std::vector<double> p2, t2;
        std::vector<std::size_t> g2;
        for (std::size_t i = 0; i < scores.size(); ++i)
            for (double s : scores[i]) {
                p2.push_back(preds.items[i].value);
                t2.push_back(s);
                g2.push_back(i);
            }
        report.cells.push_back(make_cell("All", "All", "All", p2, t2, g2,
                                         derive(boot, 8000), rows.size()));
    } else {
        std::vector<double> target(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const auto& id = pooled.records()[i].image_id;
            double sum = 0;
            const auto idx = labels.entries_for(id);
            for (std::size_t e : idx) sum += labels.entries()[e].score;
            target[i] = sum / static_cast<double>(idx.size());
        }
        const Predictions preds = cross_val_predict(pooled, target, k, lambda2, seed);
        std::vector<double> p(preds.items.size());
        for (std::size_t i = 0; i < p.size(); ++i) p[i] = preds.items[i].value;
        report.cells.push_back(make_cell("All", "All", "All", p, target,
                                         trivial_groups(p.size()), derive(boot, 8000),
                                         rows.size()));
    }
    return report;
}

std::vector<SizePoint> size_curve(const FeatureTable& features,
                                  const std::vector<double>& target,
                                  const std::vector<std::size_t>& sizes, double lambda2,
                                  int k, std::uint64_t seed, const BootstrapOptions& boot) {
    if (static_cast<Eigen::Index>(target.size()) != features.rows())
        throw std::invalid_argument("size_curve: target length mismatch");

    // woman order fixed per seed; each size takes a prefix of women
    std::vector<std::string> women;
    std::unordered_map<std::string, std::vector<Eigen::Index>> rows_of;
    for (Eigen::Index i = 0; i < features.rows(); ++i) {
        const auto& w = features.records()[static_cast<std::size_t>(i)].woman_id;
        if (!rows_of.count(w)) women.push_back(w);
        rows_of[w].push_back(i);
    }
    auto rng = make_rng(seed, 0x512e);
    std::shuffle(women.begin(), women.end(), rng);

    std::vector<SizePoint> out;
    std::uint64_t stream = 0;
    for (std::size_t size : sizes) {
        if (size > static_cast<std::size_t>(features.rows()))
            throw std::invalid_argument("size_curve: size exceeds available images");
        std::vector<Eigen::Index> rows;
        if (size == static_cast<std::size_t>(features.rows())) {
            rows.resize(size);
            std::iota(rows.begin(), rows.end(), 0);
        } else {
            for (const auto& w : women) {
                if (rows.size() >= size) break;
                rows.insert(rows.end(), rows_of[w].begin(), rows_of[w].end());
            }
            std::sort(rows.begin(), rows.end());  // original row order, stable folds
        }
        const FeatureTable sub = features.select_rows(rows);
        std::vector<double> sub_target;
        sub_target.reserve(rows.size());
        for (Eigen::Index r : rows) sub_target.push_back(target[static_cast<std::size_t>(r)]);

        const Predictions preds = cross_val_predict(sub, sub_target, k, lambda2, seed);
        std::vector<double> p(preds.items.size());
        for (std::size_t i = 0; i < p.size(); ++i) p[i] = preds.items[i].value;

        SizePoint pt;
        pt.size = size;
        pt.rmse_result = bootstrap_ci(Metric::rmse, p, sub_target,
                                      derive(boot, 0x51ce + stream));
        out.push_back(std::move(pt));
        ++stream;
    }
    return out;
}

SimilarityResult prediction_similarity(const Predictions& a, const Predictions& b,
                                       const BootstrapOptions& boot) {
    if (a.items.size() != b.items.size())
        throw std::invalid_argument("prediction_similarity: image-set size mismatch");
    std::vector<std::string> ids;
    ids.reserve(a.items.size());
    for (const auto& p : a.items) ids.push_back(p.image_id);
    std::vector<double> va;
    va.reserve(ids.size());
    for (const auto& p : a.items) va.push_back(p.value);
    const std::vector<double> vb = b.values_in_order(ids);  // throws on mismatch

    SimilarityResult res;
    res.n = ids.size();
    res.spearman_result = bootstrap_ci(Metric::spearman, va, vb, derive(boot, 1));
    res.rmse_result = bootstrap_ci(Metric::rmse, va, vb, derive(boot, 2));
    return res;
}

void save_report(const std::string& path, const EvalReport& report,
                 const std::string& provenance) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    if (!provenance.empty()) f << "# " << provenance << "\n";
    f << "cell,metric,point,ci_low,ci_high,n,seed,lambda2\n";
    f.precision(12);
    auto emit = [&](const EvalCell& c, const MetricResult& m) {
        f << c.train_labels << '-' << c.test_labels << '-' << c.subset << ','
          << to_string(m.name) << ',' << m.point << ',' << m.ci_low << ',' << m.ci_high
          << ',' << m.n << ',' << report.seed << ',' << report.lambda2 << "\n";
    };
    for (const auto& c : report.cells) {
        emit(c, c.rmse_result);
        emit(c, c.spearman_result);
    }
    for (const auto& ex : report.excluded_subsets) f << "# excluded: " << ex << "\n";
}

}  // namespace densmap
