// Command-line driver: seeded, config-driven experiment pipelines over
// simulated or ingested feature cohorts.

#include "densmap/case_control.hpp"
#include "densmap/config.hpp"
#include "densmap/data_model.hpp"
#include "densmap/encoder.hpp"
#include "densmap/metrics.hpp"
#include "densmap/ridge.hpp"
#include "densmap/rng.hpp"
#include "densmap/simulator.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

namespace fs = std::filesystem;
using namespace densmap;

namespace {

struct CommonArgs {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir = ".";
};

struct Context {
    RunConfig cfg;
    std::uint64_t seed = 0;
    fs::path out;
    std::string provenance;
};

Context make_context(const CommonArgs& args) {
    Context ctx;
    ctx.cfg = RunConfig::parse_file(args.config_path);
    if (args.seed) {
        ctx.seed = *args.seed;
    } else if (ctx.cfg.has("", "seed")) {
        ctx.seed = static_cast<std::uint64_t>(ctx.cfg.get_int("", "seed"));
    } else {
        throw std::runtime_error("missing required field: seed (config key or --seed)");
    }
    ctx.out = args.out_dir;
    fs::create_directories(ctx.out);
    std::ostringstream prov;
    prov << "config_hash=" << std::hex << ctx.cfg.config_hash() << std::dec
         << " seed=" << ctx.seed;
    ctx.provenance = prov.str();
    return ctx;
}

BootstrapOptions boot_options(const Context& ctx, const std::string& section) {
    BootstrapOptions boot;
    boot.repeats = static_cast<int>(ctx.cfg.get_int_or(section, "bootstrap_repeats", 1000));
    boot.level = ctx.cfg.get_double_or(section, "bootstrap_level", 0.95);
    boot.seed = ctx.seed;
    return boot;
}

std::vector<SubsetSpec> parse_subset_specs(const std::string& text,
                                           std::size_t min_images) {
    // "single:A;single:B;pair:A,B"
    std::vector<SubsetSpec> specs;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ';')) {
        if (item.empty()) continue;
        const auto colon = item.find(':');
        if (colon == std::string::npos)
            throw std::runtime_error("bad subset spec '" + item + "'");
        SubsetSpec spec;
        spec.min_images = min_images;
        const std::string kind = item.substr(0, colon);
        spec.readers = parse_string_list(item.substr(colon + 1));
        if (kind == "single")
            spec.kind = SubsetSpec::Kind::single_reader;
        else if (kind == "pair")
            spec.kind = SubsetSpec::Kind::reader_pair;
        else if (kind == "all")
            spec.kind = SubsetSpec::Kind::all;
        else
            throw std::runtime_error("unknown subset kind '" + kind + "'");
        specs.push_back(std::move(spec));
    }
    return specs;
}

int cmd_simulate(const CommonArgs& args) {
    const Context ctx = make_context(args);
    const SimConfig sim = sim_config_from(ctx.cfg, ctx.seed);
    const Cohort cohort = simulate_cohort(sim);
    const auto roster = simulate_case_control(cohort.truth, sim);

    save_feature_table((ctx.out / "features.csv").string(), cohort.features, ctx.provenance);
    save_label_table((ctx.out / "labels.csv").string(), cohort.labels, ctx.provenance);
    save_truth_table((ctx.out / "truth.csv").string(), cohort.truth, ctx.provenance);
    save_roster((ctx.out / "roster.csv").string(), roster, ctx.provenance);
    std::cout << "simulated " << cohort.features.rows() << " images for " << sim.n_women
              << " women; roster of " << roster.size() << " women\n";
    return 0;
}

int cmd_eval(const CommonArgs& args) {
    const Context ctx = make_context(args);
    const FeatureTable features = load_feature_table(ctx.cfg.get("eval", "features"));
    const LabelTable labels = load_label_table(ctx.cfg.get("eval", "labels"));
    const double lambda2 = ctx.cfg.get_double_or("eval", "lambda2", 1.0);
    const int k = static_cast<int>(ctx.cfg.get_int_or("eval", "k", 5));
    const BootstrapOptions boot = boot_options(ctx, "eval");

    if (ctx.cfg.get_bool_or("eval", "run_matrix", true)) {
        const EvalReport report =
            eval_label_matrix(features, labels, lambda2, k, ctx.seed, boot);
        save_report((ctx.out / "report_matrix.csv").string(), report, ctx.provenance);
        // cross-validated averaged-label predictions, reusable downstream
        // (e.g. woman-level scoring in the case-control command)
        std::vector<double> avg;
        for (const auto& rec : features.records()) {
            const auto idx = labels.entries_for(rec.image_id);
            double sum = 0;
            for (std::size_t e : idx) sum += labels.entries()[e].score;
            avg.push_back(sum / static_cast<double>(idx.size()));
        }
        const Predictions preds = cross_val_predict(features, avg, k, lambda2, ctx.seed);
        save_predictions((ctx.out / "predictions_av.csv").string(), preds,
                         ctx.provenance);
    }
    if (ctx.cfg.has("eval", "subsets")) {
        const auto min_images =
            static_cast<std::size_t>(ctx.cfg.get_int_or("eval", "min_images", 4000));
        const auto specs = parse_subset_specs(ctx.cfg.get("eval", "subsets"), min_images);
        const EvalReport report =
            eval_subsets(features, labels, specs, lambda2, k, ctx.seed, boot);
        save_report((ctx.out / "report_subsets.csv").string(), report, ctx.provenance);
        for (const auto& ex : report.excluded_subsets)
            std::cout << "excluded subset below min_images: " << ex << "\n";
        // scatter data for pair comparisons
        for (const auto& spec : specs) {
            if (spec.kind != SubsetSpec::Kind::reader_pair) continue;
            std::ofstream f(ctx.out / ("pair_scores_" + spec.describe() + ".csv"));
            f << "# " << ctx.provenance << "\nimage_id,score_" << spec.readers[0]
              << ",score_" << spec.readers[1] << "\n";
            for (const auto& rec : features.records()) {
                auto a = labels.score(rec.image_id, spec.readers[0]);
                auto b = labels.score(rec.image_id, spec.readers[1]);
                if (a && b) f << rec.image_id << ',' << *a << ',' << *b << "\n";
            }
        }
    }
    if (ctx.cfg.has("eval", "sizes")) {
        std::vector<std::size_t> sizes;
        for (double s : parse_double_list(ctx.cfg.get("eval", "sizes")))
            sizes.push_back(static_cast<std::size_t>(s));
        std::vector<double> target;
        for (const auto& rec : features.records()) {
            const auto idx = labels.entries_for(rec.image_id);
            if (idx.empty())
                throw std::runtime_error("image '" + rec.image_id + "' has no labels");
            double sum = 0;
            for (std::size_t e : idx) sum += labels.entries()[e].score;
            target.push_back(sum / static_cast<double>(idx.size()));
        }
        const auto curve = size_curve(features, target, sizes, lambda2, k, ctx.seed, boot);
        std::ofstream f(ctx.out / "size_curve.csv");
        f << "# " << ctx.provenance << "\nsize,rmse,ci_low,ci_high\n";
        f.precision(12);
        for (const auto& pt : curve)
            f << pt.size << ',' << pt.rmse_result.point << ',' << pt.rmse_result.ci_low
              << ',' << pt.rmse_result.ci_high << "\n";
    }
    return 0;
}

struct LabelledData {
    MaskedBatch train, val, test;
    std::vector<std::string> test_ids;
};

// Builds masked train/val/test batches from a grouped split. Single mode
// collapses the pair to its mean with a one-column mask of ones.
LabelledData build_batches(const FeatureTable& features, const LabelTable& labels,
                           const DatasetSplit& split, bool multi) {
    const auto m = static_cast<Eigen::Index>(labels.reader_count());
    std::map<std::string, Eigen::Index> reader_col;
    for (Eigen::Index j = 0; j < m; ++j)
        reader_col[labels.readers()[static_cast<std::size_t>(j)]] = j;

    auto build = [&](const std::vector<std::string>& ids, MaskedBatch& batch,
                     std::vector<std::string>* keep_ids) {
        const auto n = static_cast<Eigen::Index>(ids.size());
        const Eigen::Index cols = multi ? m : 1;
        batch.X.resize(n, features.cols());
        batch.D = Eigen::MatrixXd::Zero(n, cols);
        batch.Phi = Eigen::MatrixXd::Zero(n, cols);
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto& id = ids[static_cast<std::size_t>(i)];
            const auto row = features.row_of(id);
            if (!row) throw std::runtime_error("image '" + id + "' missing from features");
            batch.X.row(i) = features.features().row(*row);
            const auto idx = labels.entries_for(id);
            if (idx.empty()) throw std::runtime_error("image '" + id + "' has no labels");
            if (multi) {
                for (std::size_t e : idx) {
                    const auto& entry = labels.entries()[e];
                    batch.D(i, reader_col.at(entry.reader_id)) = entry.score;
                    batch.Phi(i, reader_col.at(entry.reader_id)) = 1.0;
                }
            } else {
                double sum = 0;
                for (std::size_t e : idx) sum += labels.entries()[e].score;
                batch.D(i, 0) = sum / static_cast<double>(idx.size());
                batch.Phi(i, 0) = 1.0;
            }
            if (keep_ids) keep_ids->push_back(id);
        }
    };

    LabelledData data;
    build(split.train, data.train, nullptr);
    build(split.validation, data.val, nullptr);
    build(split.test, data.test, &data.test_ids);
    return data;
}

TrainConfig train_config_from(const RunConfig& cfg, const std::string& section,
                              std::uint64_t seed) {
    TrainConfig tc;
    tc.learning_rate = cfg.get_double_or(section, "learning_rate", 1e-3);
    tc.batch_size = static_cast<int>(cfg.get_int_or(section, "batch_size", 64));
    tc.max_epochs = static_cast<int>(cfg.get_int_or(section, "max_epochs", 200));
    tc.augment_noise_sd = cfg.get_double_or(section, "augment_noise_sd", 0.0);
    tc.seed = seed;
    return tc;
}

NetworkArch arch_from(const RunConfig& cfg, const std::string& section, int input_dim,
                      int output_count) {
    NetworkArch arch;
    arch.input_dim = input_dim;
    for (double w : parse_double_list(cfg.get_or(section, "hidden", "32,16")))
        arch.hidden_widths.push_back(static_cast<int>(w));
    arch.output_count = output_count;
    return arch;
}

int cmd_train(const CommonArgs& args) {
    const Context ctx = make_context(args);
    const FeatureTable features = load_feature_table(ctx.cfg.get("train", "features"));
    const LabelTable labels = load_label_table(ctx.cfg.get("train", "labels"));
    const std::string mode = ctx.cfg.get_or("train", "mode", "single");
    if (mode != "single" && mode != "multi")
        throw std::runtime_error("train mode must be 'single' or 'multi'");
    const bool multi = mode == "multi";

    const DatasetSplit split = grouped_split(features, 0.8, 0.1, 0.1, ctx.seed);
    const LabelledData data = build_batches(features, labels, split, multi);
    const NetworkArch arch =
        arch_from(ctx.cfg, "train", static_cast<int>(features.cols()),
                  multi ? static_cast<int>(labels.reader_count()) : 1);
    const TrainConfig tc = train_config_from(ctx.cfg, "train", ctx.seed);

    Network net = init_network(arch, ctx.seed);
    TrainedNetwork trained;
    try {
        trained = train(std::move(net), data.train, data.val, tc);
    } catch (const std::runtime_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;  // divergence / training failure
    }
    save_network((ctx.out / ("model_" + mode + ".txt")).string(), trained.net,
                 ctx.provenance);
    save_training_log((ctx.out / ("train_log_" + mode + ".csv")).string(), trained.log,
                      ctx.provenance);
    std::cout << "best epoch " << trained.best_epoch << " val_rmse "
              << trained.best_val_rmse << "\n";
    return 0;
}

struct MappedModel {
    std::string name;
    Predictions av_pred;  // cross-validated predictions under the Av convention
};

// Ridge-maps a representation table under the three label conventions and
// appends metric rows; returns the Av-convention predictions for similarity.
Predictions map_and_report(std::ofstream& f, const std::string& model,
                           const FeatureTable& reps, const LabelTable& labels,
                           double lambda2, int k, std::uint64_t seed,
                           const BootstrapOptions& boot, std::size_t min_images) {
    auto emit = [&](const std::string& convention, const MetricResult& sp,
                    const MetricResult& rm) {
        f << convention << ',' << model << ",spearman," << sp.point << ',' << sp.ci_low
          << ',' << sp.ci_high << "\n";
        f << convention << ',' << model << ",rmse," << rm.point << ',' << rm.ci_low << ','
          << rm.ci_high << "\n";
    };

    // Av: averaged labels over the whole set
    std::vector<double> avg;
    for (const auto& rec : reps.records()) {
        const auto idx = labels.entries_for(rec.image_id);
        double sum = 0;
        for (std::size_t e : idx) sum += labels.entries()[e].score;
        avg.push_back(sum / static_cast<double>(idx.size()));
    }
    const Predictions av_pred = cross_val_predict(reps, avg, k, lambda2, seed);
    std::vector<double> pv(av_pred.items.size());
    for (std::size_t i = 0; i < pv.size(); ++i) pv[i] = av_pred.items[i].value;
    BootstrapOptions b1 = boot;
    b1.seed = mix_seed(boot.seed, 21);
    emit("Av", bootstrap_ci(Metric::spearman, pv, avg, b1),
         bootstrap_ci(Metric::rmse, pv, avg, b1));

    // Ind 1 / Ind 2: mapping trained per reader, tested on averaged scores
    double sp_sum = 0, sp_hw = 0, rm_sum = 0, rm_hw = 0;
    int n_readers = 0;
    std::vector<double> cat_pred, cat_target;
    for (const auto& reader : labels.readers()) {
        SubsetSpec spec;
        spec.kind = SubsetSpec::Kind::single_reader;
        spec.readers = {reader};
        spec.min_images = min_images;
        SubsetData sub;
        try {
            sub = select_subset(reps, labels, spec);
        } catch (const std::runtime_error&) {
            continue;
        }
        const Predictions preds = cross_val_predict(sub.features, sub.target, k, lambda2, seed);
        std::vector<double> p(preds.items.size()), t;
        for (std::size_t i = 0; i < p.size(); ++i) p[i] = preds.items[i].value;
        for (const auto& rec : sub.features.records()) {
            const auto idx = labels.entries_for(rec.image_id);
            double sum = 0;
            for (std::size_t e : idx) sum += labels.entries()[e].score;
            t.push_back(sum / static_cast<double>(idx.size()));
        }
        BootstrapOptions br = boot;
        br.seed = mix_seed(boot.seed, 100 + static_cast<std::uint64_t>(n_readers));
        const auto sp = bootstrap_ci(Metric::spearman, p, t, br);
        const auto rm = bootstrap_ci(Metric::rmse, p, t, br);
        sp_sum += sp.point;
        sp_hw += 0.5 * (sp.ci_high - sp.ci_low);
        rm_sum += rm.point;
        rm_hw += 0.5 * (rm.ci_high - rm.ci_low);
        ++n_readers;
        cat_pred.insert(cat_pred.end(), p.begin(), p.end());
        cat_target.insert(cat_target.end(), t.begin(), t.end());
    }
    if (n_readers > 0) {
        MetricResult sp1, rm1;
        sp1.point = sp_sum / n_readers;
        sp1.ci_low = sp1.point - sp_hw / n_readers;
        sp1.ci_high = sp1.point + sp_hw / n_readers;
        rm1.point = rm_sum / n_readers;
        rm1.ci_low = rm1.point - rm_hw / n_readers;
        rm1.ci_high = rm1.point + rm_hw / n_readers;
        emit("Ind1", sp1, rm1);
        BootstrapOptions b2 = boot;
        b2.seed = mix_seed(boot.seed, 22);
        emit("Ind2", bootstrap_ci(Metric::spearman, cat_pred, cat_target, b2),
             bootstrap_ci(Metric::rmse, cat_pred, cat_target, b2));
    }
    return av_pred;
}

int cmd_represent_compare(const CommonArgs& args) {
    const Context ctx = make_context(args);
    const FeatureTable features = load_feature_table(ctx.cfg.get("represent", "features"));
    const LabelTable labels = load_label_table(ctx.cfg.get("represent", "labels"));
    const double lambda2 = ctx.cfg.get_double_or("represent", "lambda2", 1.0);
    const int k = static_cast<int>(ctx.cfg.get_int_or("represent", "k", 5));
    const auto min_images =
        static_cast<std::size_t>(ctx.cfg.get_int_or("represent", "min_images", 2));
    const BootstrapOptions boot = boot_options(ctx, "represent");
    const TrainConfig tc = train_config_from(ctx.cfg, "represent", ctx.seed);

    const DatasetSplit split = grouped_split(features, 0.8, 0.1, 0.1, ctx.seed);
    const LabelledData single_data = build_batches(features, labels, split, false);
    const LabelledData multi_data = build_batches(features, labels, split, true);
    const int p = static_cast<int>(features.cols());
    const int m = static_cast<int>(labels.reader_count());

    auto train_model = [&](bool multi, std::uint64_t seed) {
        const NetworkArch arch = arch_from(ctx.cfg, "represent", p, multi ? m : 1);
        TrainConfig cfg_run = tc;
        cfg_run.seed = seed;
        return train(init_network(arch, seed), multi ? multi_data.train : single_data.train,
                     multi ? multi_data.val : single_data.val, cfg_run);
    };

    const Network pre = init_network(arch_from(ctx.cfg, "represent", p, 1), ctx.seed);
    const TrainedNetwork single = train_model(false, ctx.seed);
    const TrainedNetwork multi = train_model(true, ctx.seed);

    std::ofstream fm(ctx.out / "represent_metrics.csv");
    fm << "# " << ctx.provenance << "\nlabels,model,metric,point,ci_low,ci_high\n";
    fm.precision(12);
    const Predictions pred_pre = map_and_report(fm, "Pre", extract_representations(pre, features),
                                                labels, lambda2, k, ctx.seed, boot, min_images);
    const Predictions pred_s = map_and_report(fm, "S", extract_representations(single.net, features),
                                              labels, lambda2, k, ctx.seed, boot, min_images);
    const Predictions pred_m = map_and_report(fm, "M", extract_representations(multi.net, features),
                                              labels, lambda2, k, ctx.seed, boot, min_images);

    std::ofstream fs(ctx.out / "represent_similarity.csv");
    fs << "# " << ctx.provenance << "\ncomparison,metric,point,ci_low,ci_high\n";
    fs.precision(12);
    auto emit_sim = [&](const std::string& name, const Predictions& a, const Predictions& b,
                        std::uint64_t stream) {
        BootstrapOptions bo = boot;
        bo.seed = mix_seed(boot.seed, stream);
        const SimilarityResult sim = prediction_similarity(a, b, bo);
        fs << name << ",spearman," << sim.spearman_result.point << ','
           << sim.spearman_result.ci_low << ',' << sim.spearman_result.ci_high << "\n";
        fs << name << ",rmse," << sim.rmse_result.point << ',' << sim.rmse_result.ci_low
           << ',' << sim.rmse_result.ci_high << "\n";
    };
    emit_sim("M_S", pred_m, pred_s, 31);
    emit_sim("M_Pre", pred_m, pred_pre, 32);
    emit_sim("S_Pre", pred_s, pred_pre, 33);

    if (ctx.cfg.has("represent", "second_seed")) {
        const auto seed2 =
            static_cast<std::uint64_t>(ctx.cfg.get_int("represent", "second_seed"));
        const TrainedNetwork single2 = train_model(false, seed2);
        const TrainedNetwork multi2 = train_model(true, seed2);
        std::ofstream devnull;
        std::ofstream fm2(ctx.out / "represent_metrics_seed2.csv");
        fm2 << "# " << ctx.provenance << "\nlabels,model,metric,point,ci_low,ci_high\n";
        fm2.precision(12);
        const Predictions pred_s2 =
            map_and_report(fm2, "S2", extract_representations(single2.net, features), labels,
                           lambda2, k, ctx.seed, boot, min_images);
        const Predictions pred_m2 =
            map_and_report(fm2, "M2", extract_representations(multi2.net, features), labels,
                           lambda2, k, ctx.seed, boot, min_images);
        emit_sim("S_S", pred_s, pred_s2, 41);
        emit_sim("M_M", pred_m, pred_m2, 42);
    }
    return 0;
}

int cmd_casecontrol(const CommonArgs& args) {
    const Context ctx = make_context(args);
    const FeatureTable features = load_feature_table(ctx.cfg.get("casecontrol", "features"));
    const auto roster = load_roster(ctx.cfg.get("casecontrol", "roster"));

    // every match group needs both a case and at least one control
    std::map<int, std::pair<int, int>> group_counts;
    for (const auto& row : roster) {
        auto& [cases, controls] = group_counts[row.match_group];
        (row.is_case ? cases : controls) += 1;
    }
    for (const auto& [group, counts] : group_counts)
        if (counts.first == 0 || counts.second == 0)
            throw std::runtime_error("match_group " + std::to_string(group) +
                                     " is missing a " +
                                     (counts.first == 0 ? "case" : "control"));

    std::vector<std::pair<std::string, OddsRatioResult>> rows;
    for (const auto& section : ctx.cfg.sections_with_prefix("model ")) {
        const std::string name = section.substr(6);
        const Predictions preds =
            load_predictions(ctx.cfg.get(section, "predictions"));
        const auto scores = woman_scores(preds, features);

        std::vector<double> control_scores;
        std::map<std::string, double> roster_scores;
        for (const auto& row : roster) {
            auto it = scores.find(row.woman_id);
            if (it == scores.end())
                throw std::runtime_error("no predictions for woman '" + row.woman_id + "'");
            roster_scores[row.woman_id] = it->second;
            if (!row.is_case) control_scores.push_back(it->second);
        }
        const QuintileAssignment assign = assign_quintiles(control_scores, roster_scores);
        rows.emplace_back(name, odds_ratio_top_bottom(assign, roster));
    }
    if (rows.empty()) throw std::runtime_error("no [model *] sections configured");
    save_odds_ratios((ctx.out / "odds_ratios.csv").string(), rows, ctx.provenance);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"density-score modeling under reader label variability"};
    app.require_subcommand(1);

    CommonArgs args;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", args.config_path, "run configuration file")->required();
        sub->add_option("--seed", args.seed, "seed override");
        sub->add_option("--out", args.out_dir, "output directory");
    };

    auto* sim = app.add_subcommand("simulate", "generate a synthetic cohort");
    auto* ev = app.add_subcommand("eval", "label-matrix / subset / size-curve evaluation");
    auto* tr = app.add_subcommand("train", "train the single- or multi-output network");
    auto* rc = app.add_subcommand("represent-compare",
                                  "compare representations of trained and untrained nets");
    auto* cc = app.add_subcommand("casecontrol", "quintile odds ratios on a matched roster");
    for (auto* sub : {sim, ev, tr, rc, cc}) add_common(sub);

    CLI11_PARSE(app, argc, argv);

    try {
        if (sim->parsed()) return cmd_simulate(args);
        if (ev->parsed()) return cmd_eval(args);
        if (tr->parsed()) return cmd_train(args);
        if (rc->parsed()) return cmd_represent_compare(args);
        if (cc->parsed()) return cmd_casecontrol(args);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
