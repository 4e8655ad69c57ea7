#include "densmap/data_model.hpp"

#include "densmap/rng.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

namespace densmap {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

double parse_finite(const std::string& tok, std::size_t line_no, const char* what) {
    std::size_t pos = 0;
    double v = 0.0;
    try {
        v = std::stod(tok, &pos);
    } catch (const std::exception&) {
        throw std::runtime_error("line " + std::to_string(line_no) + ": bad " +
                                 what + " value '" + tok + "'");
    }
    if (pos != tok.size())
        throw std::runtime_error("line " + std::to_string(line_no) + ": bad " +
                                 what + " value '" + tok + "'");
    if (!std::isfinite(v))
        throw std::runtime_error("line " + std::to_string(line_no) +
                                 ": non-finite " + what + " value");
    return v;
}

// Reads lines, skipping '#' provenance comments and blank lines.
std::vector<std::pair<std::size_t, std::string>> read_data_lines(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path);
    std::vector<std::pair<std::size_t, std::string>> lines;
    std::string line;
    std::size_t no = 0;
    while (std::getline(f, line)) {
        ++no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        lines.emplace_back(no, line);
    }
    return lines;
}

}  // namespace

std::string to_string(View v) { return v == View::CC ? "CC" : "MLO"; }
std::string to_string(Side s) { return s == Side::L ? "L" : "R"; }

View parse_view(const std::string& s) {
    if (s == "CC") return View::CC;
    if (s == "MLO") return View::MLO;
    throw std::runtime_error("unknown view '" + s + "'");
}

Side parse_side(const std::string& s) {
    if (s == "L") return Side::L;
    if (s == "R") return Side::R;
    throw std::runtime_error("unknown side '" + s + "'");
}

FeatureTable::FeatureTable(std::vector<ImageRecord> records, Eigen::MatrixXd features,
                           bool has_bias)
    : records_(std::move(records)), features_(std::move(features)), has_bias_(has_bias) {
    if (static_cast<Eigen::Index>(records_.size()) != features_.rows())
        throw std::invalid_argument("record count does not match feature rows");
    if (!features_.allFinite())
        throw std::invalid_argument("non-finite feature value");
    if (has_bias_ && features_.rows() > 0) {
        if (features_.cols() < 1 || (features_.col(features_.cols() - 1).array() != 1.0).any())
            throw std::invalid_argument("bias column is not all ones");
    }
    for (std::size_t i = 0; i < records_.size(); ++i) {
        auto [it, inserted] = index_.emplace(records_[i].image_id, static_cast<Eigen::Index>(i));
        if (!inserted)
            throw std::invalid_argument("duplicate image_id '" + records_[i].image_id + "'");
    }
}

std::optional<Eigen::Index> FeatureTable::row_of(const std::string& image_id) const {
    auto it = index_.find(image_id);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

FeatureTable FeatureTable::select_rows(const std::vector<Eigen::Index>& rows) const {
    std::vector<ImageRecord> recs;
    recs.reserve(rows.size());
    Eigen::MatrixXd feats(static_cast<Eigen::Index>(rows.size()), features_.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        recs.push_back(records_.at(static_cast<std::size_t>(rows[i])));
        feats.row(static_cast<Eigen::Index>(i)) = features_.row(rows[i]);
    }
    return FeatureTable(std::move(recs), std::move(feats), has_bias_);
}

LabelTable::LabelTable(std::vector<LabelEntry> entries,
                       std::vector<std::string> reader_manifest)
    : entries_(std::move(entries)), readers_(std::move(reader_manifest)) {
    std::set<std::pair<std::string, std::string>> seen;
    std::set<std::string> manifest(readers_.begin(), readers_.end());
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        const auto& e = entries_[i];
        if (e.score < 0.0 || e.score > 100.0)
            throw std::invalid_argument("score " + std::to_string(e.score) +
                                        " for image '" + e.image_id + "' outside [0,100]");
        if (!seen.emplace(e.image_id, e.reader_id).second)
            throw std::invalid_argument("duplicate entry for (" + e.image_id + ", " +
                                        e.reader_id + ")");
        if (manifest.empty()) {
            if (std::find(readers_.begin(), readers_.end(), e.reader_id) == readers_.end())
                readers_.push_back(e.reader_id);
        } else if (!manifest.count(e.reader_id)) {
            throw std::invalid_argument("reader '" + e.reader_id + "' not in manifest");
        }
        per_image_[e.image_id].push_back(i);
    }
}

std::vector<std::size_t> LabelTable::entries_for(const std::string& image_id) const {
    auto it = per_image_.find(image_id);
    if (it == per_image_.end()) return {};
    return it->second;
}

std::optional<double> LabelTable::score(const std::string& image_id,
                                        const std::string& reader_id) const {
    for (std::size_t i : entries_for(image_id))
        if (entries_[i].reader_id == reader_id) return entries_[i].score;
    return std::nullopt;
}

bool LabelTable::has_reader(const std::string& reader_id) const {
    return std::find(readers_.begin(), readers_.end(), reader_id) != readers_.end();
}

std::string SubsetSpec::describe() const {
    switch (kind) {
        case Kind::single_reader: return readers.at(0);
        case Kind::reader_pair: return readers.at(0) + "_" + readers.at(1);
        case Kind::all: return "all";
    }
    return "?";
}

FeatureTable load_feature_table(const std::string& path) {
    auto lines = read_data_lines(path);
    if (lines.empty()) throw std::runtime_error(path + ": missing header");

    auto header = split_csv_line(lines[0].second);
    if (header.size() < 4 || header[0] != "image_id" || header[1] != "woman_id" ||
        header[2] != "view" || header[3] != "side")
        throw std::runtime_error(path + ": malformed header");
    const std::size_t p = header.size() - 4;
    for (std::size_t j = 0; j < p; ++j)
        if (header[4 + j] != "f" + std::to_string(j))
            throw std::runtime_error(path + ": malformed header at column " +
                                     std::to_string(4 + j));

    std::vector<ImageRecord> records;
    Eigen::MatrixXd feats(static_cast<Eigen::Index>(lines.size() - 1),
                          static_cast<Eigen::Index>(p));
    for (std::size_t r = 1; r < lines.size(); ++r) {
        const auto& [no, line] = lines[r];
        auto fields = split_csv_line(line);
        if (fields.size() != header.size())
            throw std::runtime_error(path + ": line " + std::to_string(no) +
                                     ": expected " + std::to_string(header.size()) +
                                     " fields, got " + std::to_string(fields.size()));
        ImageRecord rec{fields[0], fields[1], parse_view(fields[2]), parse_side(fields[3])};
        records.push_back(std::move(rec));
        for (std::size_t j = 0; j < p; ++j)
            feats(static_cast<Eigen::Index>(r - 1), static_cast<Eigen::Index>(j)) =
                parse_finite(fields[4 + j], no, "feature");
    }
    return FeatureTable(std::move(records), std::move(feats), false);
}

void save_feature_table(const std::string& path, const FeatureTable& t,
                        const std::string& provenance) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    if (!provenance.empty()) f << "# " << provenance << "\n";
    f << "image_id,woman_id,view,side";
    for (Eigen::Index j = 0; j < t.cols(); ++j) f << ",f" << j;
    f << "\n";
    f.precision(17);
    for (Eigen::Index i = 0; i < t.rows(); ++i) {
        const auto& r = t.records()[static_cast<std::size_t>(i)];
        f << r.image_id << ',' << r.woman_id << ',' << to_string(r.view) << ','
          << to_string(r.side);
        for (Eigen::Index j = 0; j < t.cols(); ++j) f << ',' << t.features()(i, j);
        f << "\n";
    }
}

LabelTable load_label_table(const std::string& path,
                            std::vector<std::string> reader_manifest) {
    auto lines = read_data_lines(path);
    if (lines.empty()) throw std::runtime_error(path + ": missing header");
    auto header = split_csv_line(lines[0].second);
    if (header != std::vector<std::string>{"image_id", "reader_id", "score"})
        throw std::runtime_error(path + ": malformed header");

    std::vector<LabelEntry> entries;
    for (std::size_t r = 1; r < lines.size(); ++r) {
        const auto& [no, line] = lines[r];
        auto fields = split_csv_line(line);
        if (fields.size() != 3)
            throw std::runtime_error(path + ": line " + std::to_string(no) +
                                     ": expected 3 fields");
        double score = parse_finite(fields[2], no, "score");
        if (score < 0.0 || score > 100.0)
            throw std::runtime_error(path + ": line " + std::to_string(no) +
                                     ": score outside [0,100]");
        entries.push_back({fields[0], fields[1], score});
    }
    return LabelTable(std::move(entries), std::move(reader_manifest));
}

void save_label_table(const std::string& path, const LabelTable& t,
                      const std::string& provenance) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    if (!provenance.empty()) f << "# " << provenance << "\n";
    f << "image_id,reader_id,score\n";
    f.precision(17);
    for (const auto& e : t.entries())
        f << e.image_id << ',' << e.reader_id << ',' << e.score << "\n";
}

FeatureTable append_bias(const FeatureTable& t) {
    if (t.has_bias()) throw std::invalid_argument("table already has a bias column");
    Eigen::MatrixXd feats(t.rows(), t.cols() + 1);
    feats.leftCols(t.cols()) = t.features();
    feats.col(t.cols()).setOnes();
    return FeatureTable(t.records(), std::move(feats), true);
}

namespace {

// woman id -> rows, in first-appearance order so shuffles are reproducible.
std::vector<std::pair<std::string, std::vector<Eigen::Index>>> group_by_woman(
    const FeatureTable& t) {
    std::vector<std::pair<std::string, std::vector<Eigen::Index>>> groups;
    std::unordered_map<std::string, std::size_t> pos;
    for (Eigen::Index i = 0; i < t.rows(); ++i) {
        const auto& w = t.records()[static_cast<std::size_t>(i)].woman_id;
        auto it = pos.find(w);
        if (it == pos.end()) {
            pos.emplace(w, groups.size());
            groups.push_back({w, {i}});
        } else {
            groups[it->second].second.push_back(i);
        }
    }
    return groups;
}

}  // namespace

DatasetSplit grouped_split(const FeatureTable& t, double train_frac, double val_frac,
                           double test_frac, std::uint64_t seed) {
    if (train_frac <= 0 || val_frac <= 0 || test_frac <= 0 ||
        std::abs(train_frac + val_frac + test_frac - 1.0) > 1e-9)
        throw std::invalid_argument("split fractions must be positive and sum to 1");
    auto groups = group_by_woman(t);
    if (groups.size() < 3) throw std::invalid_argument("need at least 3 women to split");

    auto rng = make_rng(seed, 0x511717);
    std::shuffle(groups.begin(), groups.end(), rng);

    const double total = static_cast<double>(t.rows());
    std::array<double, 3> target{train_frac * total, val_frac * total, test_frac * total};
    std::array<double, 3> count{0, 0, 0};
    DatasetSplit split;
    std::array<std::vector<std::string>*, 3> parts{&split.train, &split.validation,
                                                   &split.test};
    for (const auto& [woman, rows] : groups) {
        // largest remaining deficit wins; ties go to the earlier partition
        int best = 0;
        for (int j = 1; j < 3; ++j)
            if (target[j] - count[j] > target[best] - count[best]) best = j;
        for (Eigen::Index r : rows)
            parts[best]->push_back(t.records()[static_cast<std::size_t>(r)].image_id);
        count[best] += static_cast<double>(rows.size());
    }
    return split;
}

std::vector<FoldPair> grouped_kfold(const FeatureTable& t, int k, std::uint64_t seed) {
    if (k < 2) throw std::invalid_argument("k must be at least 2");
    auto groups = group_by_woman(t);
    if (groups.size() < static_cast<std::size_t>(k))
        throw std::invalid_argument("k exceeds woman count");

    auto rng = make_rng(seed, 0xf01d5);
    std::shuffle(groups.begin(), groups.end(), rng);

    std::vector<FoldPair> folds(static_cast<std::size_t>(k));
    for (std::size_t g = 0; g < groups.size(); ++g) {
        std::size_t fold = g % static_cast<std::size_t>(k);
        for (Eigen::Index r : groups[g].second)
            folds[fold].heldout_rows.push_back(r);
    }
    for (std::size_t f = 0; f < folds.size(); ++f) {
        for (std::size_t g = 0; g < folds.size(); ++g) {
            if (g == f) continue;
            folds[f].train_rows.insert(folds[f].train_rows.end(),
                                       folds[g].heldout_rows.begin(),
                                       folds[g].heldout_rows.end());
        }
        std::sort(folds[f].train_rows.begin(), folds[f].train_rows.end());
        std::sort(folds[f].heldout_rows.begin(), folds[f].heldout_rows.end());
    }
    return folds;
}

SubsetData select_subset(const FeatureTable& features, const LabelTable& labels,
                         const SubsetSpec& spec) {
    using Kind = SubsetSpec::Kind;
    if (spec.kind == Kind::single_reader && spec.readers.size() != 1)
        throw std::invalid_argument("single_reader spec needs exactly one reader");
    if (spec.kind == Kind::reader_pair &&
        (spec.readers.size() != 2 || spec.readers[0] == spec.readers[1]))
        throw std::invalid_argument("reader_pair spec needs two distinct readers");
    for (const auto& r : spec.readers)
        if (!labels.has_reader(r))
            throw std::invalid_argument("unknown reader '" + r + "'");

    std::vector<Eigen::Index> rows;
    std::vector<double> target;
    for (Eigen::Index i = 0; i < features.rows(); ++i) {
        const auto& id = features.records()[static_cast<std::size_t>(i)].image_id;
        if (spec.kind == Kind::single_reader) {
            auto s = labels.score(id, spec.readers[0]);
            if (!s) continue;
            rows.push_back(i);
            target.push_back(*s);
        } else if (spec.kind == Kind::reader_pair) {
            auto a = labels.score(id, spec.readers[0]);
            auto b = labels.score(id, spec.readers[1]);
            if (!a || !b) continue;
            rows.push_back(i);
            target.push_back(0.5 * (*a + *b));
        } else {
            auto idx = labels.entries_for(id);
            if (idx.empty()) continue;
            double sum = 0;
            for (std::size_t e : idx) sum += labels.entries()[e].score;
            rows.push_back(i);
            target.push_back(sum / static_cast<double>(idx.size()));
        }
    }
    if (rows.size() < spec.min_images)
        throw std::runtime_error("subset '" + spec.describe() + "' has " +
                                 std::to_string(rows.size()) + " images, below minimum " +
                                 std::to_string(spec.min_images));
    return SubsetData{features.select_rows(rows), std::move(target)};
}

}  // namespace densmap
