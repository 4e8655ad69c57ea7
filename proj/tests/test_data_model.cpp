#include "densmap/data_model.hpp"

#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

using namespace densmap;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
    const auto path = (std::filesystem::temp_directory_path() / name).string();
    std::ofstream f(path);
    f << content;
    return path;
}

FeatureTable tiny_table(int n_women, int images_per_woman, int p) {
    std::vector<ImageRecord> recs;
    Eigen::MatrixXd feats(n_women * images_per_woman, p);
    Eigen::Index row = 0;
    for (int w = 0; w < n_women; ++w)
        for (int k = 0; k < images_per_woman; ++k) {
            recs.push_back({"i" + std::to_string(row), "w" + std::to_string(w),
                            k % 2 ? View::MLO : View::CC, Side::L});
            for (int j = 0; j < p; ++j) feats(row, j) = row * 10.0 + j;
            ++row;
        }
    return FeatureTable(std::move(recs), std::move(feats), false);
}

}  // namespace

TEST_CASE("load_feature_table parses a well-formed file") {
    const auto path = write_temp("feat_ok.csv",
                                 "image_id,woman_id,view,side,f0,f1,f2,f3\n"
                                 "i1,w1,CC,L,1,2,3,4\n"
                                 "i2,w1,MLO,L,5,6,7,8\n"
                                 "i3,w2,CC,R,9,10,11,12\n");
    const auto t = load_feature_table(path);
    CHECK(t.rows() == 3);
    CHECK(t.cols() == 4);
    CHECK_FALSE(t.has_bias());
    CHECK(t.records()[2].woman_id == "w2");
    CHECK(t.features()(1, 3) == 8.0);
}

TEST_CASE("load_feature_table rejects NaN naming the row") {
    const auto path = write_temp("feat_nan.csv",
                                 "image_id,woman_id,view,side,f0\n"
                                 "i1,w1,CC,L,1\n"
                                 "i2,w1,CC,L,nan\n");
    CHECK_THROWS_WITH_AS(load_feature_table(path), doctest::Contains("line 3"),
                         std::runtime_error);
}

TEST_CASE("load_feature_table accepts a header-only file") {
    const auto path = write_temp("feat_empty.csv", "image_id,woman_id,view,side,f0,f1\n");
    const auto t = load_feature_table(path);
    CHECK(t.rows() == 0);
    CHECK(t.cols() == 2);
}

TEST_CASE("load_feature_table error cases") {
    CHECK_THROWS(load_feature_table(write_temp("feat_h.csv", "bogus,header\n")));
    CHECK_THROWS_WITH_AS(
        load_feature_table(write_temp("feat_rl.csv",
                                      "image_id,woman_id,view,side,f0,f1\n"
                                      "i1,w1,CC,L,1\n")),
        doctest::Contains("line 2"), std::runtime_error);
    CHECK_THROWS(load_feature_table(write_temp("feat_dup.csv",
                                               "image_id,woman_id,view,side,f0\n"
                                               "i1,w1,CC,L,1\ni1,w1,MLO,L,2\n")));
}

TEST_CASE("feature table round-trips") {
    const auto t = tiny_table(3, 4, 5);
    const auto path =
        (std::filesystem::temp_directory_path() / "feat_rt.csv").string();
    save_feature_table(path, t, "test");
    const auto t2 = load_feature_table(path);
    CHECK(t2.rows() == t.rows());
    CHECK(t2.features() == t.features());
    for (std::size_t i = 0; i < t.records().size(); ++i) {
        CHECK(t2.records()[i].image_id == t.records()[i].image_id);
        CHECK(t2.records()[i].woman_id == t.records()[i].woman_id);
    }
}

TEST_CASE("load_label_table basics") {
    const auto path = write_temp("lab_ok.csv",
                                 "image_id,reader_id,score\n"
                                 "i1,A,30\ni1,B,40\n");
    const auto t = load_label_table(path);
    CHECK(t.reader_count() == 2);
    CHECK(t.entries().size() == 2);
    CHECK(t.score("i1", "B") == 40.0);
    CHECK(t.readers() == std::vector<std::string>{"A", "B"});
}

TEST_CASE("load_label_table rejections") {
    CHECK_THROWS(load_label_table(write_temp(
        "lab_rng.csv", "image_id,reader_id,score\ni1,A,101\n")));
    CHECK_THROWS(load_label_table(write_temp(
        "lab_dup.csv", "image_id,reader_id,score\ni1,A,30\ni1,A,35\n")));
}

TEST_CASE("label table round-trips") {
    const auto path = write_temp("lab_rt_src.csv",
                                 "image_id,reader_id,score\ni1,A,30.5\ni2,B,41\ni1,B,12\n");
    const auto t = load_label_table(path);
    const auto path2 = (std::filesystem::temp_directory_path() / "lab_rt.csv").string();
    save_label_table(path2, t);
    const auto t2 = load_label_table(path2);
    CHECK(t2.entries().size() == t.entries().size());
    for (std::size_t i = 0; i < t.entries().size(); ++i) {
        CHECK(t2.entries()[i].image_id == t.entries()[i].image_id);
        CHECK(t2.entries()[i].score == t.entries()[i].score);
    }
}

TEST_CASE("append_bias") {
    const auto t = tiny_table(1, 2, 3);
    const auto b = append_bias(t);
    CHECK(b.cols() == 4);
    CHECK(b.has_bias());
    CHECK(b.features().col(3) == Eigen::VectorXd::Ones(2));
    // original values preserved bit-exactly
    CHECK(b.features().leftCols(3) == t.features());
    CHECK_THROWS(append_bias(b));

    const auto empty = FeatureTable({}, Eigen::MatrixXd(0, 3), false);
    const auto be = append_bias(empty);
    CHECK(be.rows() == 0);
    CHECK(be.cols() == 4);
    CHECK(be.has_bias());
}

TEST_CASE("grouped_split respects woman grouping and fractions") {
    const auto t = tiny_table(1000, 4, 2);
    const auto s = grouped_split(t, 0.8, 0.1, 0.1, 7);
    const double total = static_cast<double>(t.rows());
    CHECK(std::abs(s.train.size() / total - 0.8) < 0.02);
    CHECK(std::abs(s.validation.size() / total - 0.1) < 0.02);
    CHECK(std::abs(s.test.size() / total - 0.1) < 0.02);
    CHECK(s.train.size() + s.validation.size() + s.test.size() ==
          static_cast<std::size_t>(t.rows()));

    // no woman straddles partitions
    auto woman_of = [&](const std::string& id) {
        return t.records()[static_cast<std::size_t>(*t.row_of(id))].woman_id;
    };
    std::set<std::string> train_women, other_women;
    for (const auto& id : s.train) train_women.insert(woman_of(id));
    for (const auto& id : s.validation) other_women.insert(woman_of(id));
    for (const auto& id : s.test) other_women.insert(woman_of(id));
    for (const auto& w : other_women) CHECK(train_women.count(w) == 0);

    const auto s2 = grouped_split(t, 0.8, 0.1, 0.1, 7);
    CHECK(s2.train == s.train);
    CHECK(s2.validation == s.validation);
    CHECK(s2.test == s.test);
}

TEST_CASE("grouped_split forced assignment and errors") {
    const auto t = tiny_table(3, 2, 2);
    const auto s = grouped_split(t, 1.0 / 3, 1.0 / 3, 1.0 / 3, 1);
    CHECK(s.train.size() == 2);
    CHECK(s.validation.size() == 2);
    CHECK(s.test.size() == 2);
    CHECK_THROWS(grouped_split(tiny_table(2, 2, 2), 1.0 / 3, 1.0 / 3, 1.0 / 3, 1));
    CHECK_THROWS(grouped_split(t, 0.5, 0.5, 0.5, 1));
}

TEST_CASE("grouped_kfold partitions by woman") {
    const auto t = tiny_table(10, 3, 2);
    const auto folds = grouped_kfold(t, 5, 3);
    CHECK(folds.size() == 5);
    std::set<Eigen::Index> heldout;
    for (const auto& f : folds) {
        CHECK(f.heldout_rows.size() == 6);  // 2 women x 3 images
        for (auto r : f.heldout_rows) CHECK(heldout.insert(r).second);
    }
    CHECK(heldout.size() == static_cast<std::size_t>(t.rows()));
    CHECK_THROWS(grouped_kfold(tiny_table(3, 2, 2), 5, 3));
    CHECK_THROWS(grouped_kfold(t, 1, 3));
}

TEST_CASE("select_subset conventions") {
    const auto feats = tiny_table(2, 2, 2);  // images i0..i3
    const LabelTable labels({{"i0", "C", 20}, {"i0", "D", 30},
                             {"i1", "C", 50}, {"i2", "D", 70},
                             {"i3", "C", 10}, {"i3", "D", 90}});

    SubsetSpec pair{SubsetSpec::Kind::reader_pair, {"C", "D"}, 1};
    const auto sub = select_subset(feats, labels, pair);
    CHECK(sub.features.rows() == 2);  // i0 and i3
    CHECK(sub.target[0] == 25.0);
    CHECK(sub.target[1] == 50.0);

    // pair selection is symmetric in reader order
    SubsetSpec swapped{SubsetSpec::Kind::reader_pair, {"D", "C"}, 1};
    const auto sub2 = select_subset(feats, labels, swapped);
    CHECK(sub2.target == sub.target);
    for (std::size_t i = 0; i < sub.features.records().size(); ++i)
        CHECK(sub2.features.records()[i].image_id == sub.features.records()[i].image_id);

    SubsetSpec single{SubsetSpec::Kind::single_reader, {"C"}, 1};
    const auto subc = select_subset(feats, labels, single);
    CHECK(subc.features.rows() == 3);
    CHECK(subc.target == std::vector<double>{20, 50, 10});

    SubsetSpec below{SubsetSpec::Kind::reader_pair, {"C", "D"}, 4000};
    CHECK_THROWS_WITH_AS(select_subset(feats, labels, below),
                         doctest::Contains("below minimum"), std::runtime_error);

    SubsetSpec unknown{SubsetSpec::Kind::single_reader, {"Z"}, 1};
    CHECK_THROWS(select_subset(feats, labels, unknown));
}
