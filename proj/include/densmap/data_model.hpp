#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace densmap {

enum class View { CC, MLO };
enum class Side { L, R };

std::string to_string(View v);
std::string to_string(Side s);
View parse_view(const std::string& s);
Side parse_side(const std::string& s);

struct ImageRecord {
    std::string image_id;
    std::string woman_id;
    View view = View::CC;
    Side side = Side::L;
};

/// Per-image feature vectors with identity columns. Rows align with records.
class FeatureTable {
public:
    FeatureTable() = default;
    FeatureTable(std::vector<ImageRecord> records, Eigen::MatrixXd features,
                 bool has_bias = false);

    const std::vector<ImageRecord>& records() const { return records_; }
    const Eigen::MatrixXd& features() const { return features_; }
    bool has_bias() const { return has_bias_; }
    Eigen::Index rows() const { return features_.rows(); }
    Eigen::Index cols() const { return features_.cols(); }

    std::optional<Eigen::Index> row_of(const std::string& image_id) const;
    FeatureTable select_rows(const std::vector<Eigen::Index>& rows) const;

private:
    std::vector<ImageRecord> records_;
    Eigen::MatrixXd features_;
    bool has_bias_ = false;
    std::unordered_map<std::string, Eigen::Index> index_;
};

struct LabelEntry {
    std::string image_id;
    std::string reader_id;
    double score = 0.0;  // percent in [0,100]
};

/// Sparse image-by-reader score matrix. Reader order is first appearance
/// unless a manifest is supplied.
class LabelTable {
public:
    LabelTable() = default;
    explicit LabelTable(std::vector<LabelEntry> entries,
                        std::vector<std::string> reader_manifest = {});

    const std::vector<LabelEntry>& entries() const { return entries_; }
    const std::vector<std::string>& readers() const { return readers_; }
    std::size_t reader_count() const { return readers_.size(); }

    /// Entry indices for one image (empty if the image is unknown).
    std::vector<std::size_t> entries_for(const std::string& image_id) const;
    std::optional<double> score(const std::string& image_id,
                                const std::string& reader_id) const;
    bool has_reader(const std::string& reader_id) const;

private:
    std::vector<LabelEntry> entries_;
    std::vector<std::string> readers_;
    std::unordered_map<std::string, std::vector<std::size_t>> per_image_;
};

struct DatasetSplit {
    std::vector<std::string> train;
    std::vector<std::string> validation;
    std::vector<std::string> test;
};

struct FoldPair {
    std::vector<Eigen::Index> train_rows;
    std::vector<Eigen::Index> heldout_rows;
};

struct SubsetSpec {
    enum class Kind { single_reader, reader_pair, all };
    Kind kind = Kind::all;
    std::vector<std::string> readers;
    std::size_t min_images = 4000;

    std::string describe() const;
};

struct SubsetData {
    FeatureTable features;
    std::vector<double> target;
};

FeatureTable load_feature_table(const std::string& path);
void save_feature_table(const std::string& path, const FeatureTable& t,
                        const std::string& provenance = "");

LabelTable load_label_table(const std::string& path,
                            std::vector<std::string> reader_manifest = {});
void save_label_table(const std::string& path, const LabelTable& t,
                      const std::string& provenance = "");

FeatureTable append_bias(const FeatureTable& t);

DatasetSplit grouped_split(const FeatureTable& t, double train_frac,
                           double val_frac, double test_frac, std::uint64_t seed);

std::vector<FoldPair> grouped_kfold(const FeatureTable& t, int k, std::uint64_t seed);

SubsetData select_subset(const FeatureTable& features, const LabelTable& labels,
                         const SubsetSpec& spec);

}  // namespace densmap
