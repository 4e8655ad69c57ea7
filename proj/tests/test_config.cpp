#include "densmap/config.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <stdexcept>

using namespace densmap;

namespace {

const char* kSample = R"(# run settings
seed = 42

[sim]
n_women = 120
q = 3
feature_dim = 8   # inline comment

[reader A]
knots = 0:0, 40:60, 100:100
weights = 0.5,0.3,0.2
noise_sd = 4.5

[reader B]

[pairing]
A_B = 2.0
)";

}  // namespace

TEST_CASE("ini parsing with sections, comments and fallbacks") {
    const auto cfg = RunConfig::parse_string(kSample);
    CHECK(cfg.get_int("", "seed") == 42);
    CHECK(cfg.get_int("sim", "n_women") == 120);
    CHECK(cfg.get_int("sim", "feature_dim") == 8);  // inline comment stripped
    CHECK(cfg.get_double("reader A", "noise_sd") == doctest::Approx(4.5));
    CHECK(cfg.get_or("sim", "missing", "dflt") == "dflt");
    CHECK(cfg.get_int_or("sim", "missing", 7) == 7);
    CHECK(cfg.get_double_or("sim", "missing", 1.5) == 1.5);
    CHECK(cfg.get_bool_or("sim", "missing", true));
    CHECK_FALSE(cfg.has("sim", "missing"));
    CHECK_THROWS(cfg.get("sim", "missing"));
}

TEST_CASE("boolean parsing accepts the usual spellings") {
    const auto cfg = RunConfig::parse_string("a = true\nb = 0\nc = yes\nd = maybe\n");
    CHECK(cfg.get_bool_or("", "a", false));
    CHECK_FALSE(cfg.get_bool_or("", "b", true));
    CHECK(cfg.get_bool_or("", "c", false));
    CHECK_THROWS(cfg.get_bool_or("", "d", false));
}

TEST_CASE("sections_with_prefix preserves file order") {
    const auto cfg = RunConfig::parse_string(kSample);
    const auto readers = cfg.sections_with_prefix("reader ");
    REQUIRE(readers.size() == 2);
    CHECK(readers[0] == "reader A");
    CHECK(readers[1] == "reader B");
}

TEST_CASE("config hash is stable and content-sensitive") {
    const auto a = RunConfig::parse_string(kSample);
    const auto b = RunConfig::parse_string(kSample);
    CHECK(a.config_hash() == b.config_hash());
    const auto c = RunConfig::parse_string(std::string(kSample) + "\nextra = 1\n");
    CHECK(a.config_hash() != c.config_hash());
    CHECK(a.config_hash() != 0);
}

TEST_CASE("parse_file round-trips through disk") {
    const auto path = (std::filesystem::temp_directory_path() / "cfg_test.ini").string();
    {
        std::ofstream f(path);
        f << kSample;
    }
    const auto cfg = RunConfig::parse_file(path);
    CHECK(cfg.get_int("sim", "n_women") == 120);
    CHECK_THROWS(RunConfig::parse_file(path + ".does-not-exist"));
}

TEST_CASE("list parsing") {
    CHECK(parse_double_list("1,2.5,-3") == std::vector<double>{1, 2.5, -3});
    CHECK(parse_double_list("") == std::vector<double>{});
    CHECK(parse_string_list(" a , b,c ") == std::vector<std::string>{"a", "b", "c"});
}

TEST_CASE("sim_config_from assembles readers and pairing weights") {
    const auto cfg = RunConfig::parse_string(kSample);
    const auto sim = sim_config_from(cfg, 99);
    CHECK(sim.seed == 99);
    CHECK(sim.n_women == 120);
    CHECK(sim.feature_dim == 8);
    REQUIRE(sim.readers.size() == 2);
    CHECK(sim.readers[0].reader_id == "A");
    REQUIRE(sim.readers[0].dist_knots.size() == 3);
    CHECK(sim.readers[0].dist_knots[1].first == 40.0);
    CHECK(sim.readers[0].dist_knots[1].second == 60.0);
    CHECK(sim.readers[0].attribute_weights(0) == doctest::Approx(0.5));
    CHECK(sim.readers[0].noise_sd == 4.5);
    // reader B gets the defaults: identity transform, uniform weights, no noise
    CHECK(sim.readers[1].dist_knots.size() == 2);
    CHECK(sim.readers[1].attribute_weights(2) == doctest::Approx(1.0 / 3));
    CHECK(sim.readers[1].noise_sd == 0.0);
    CHECK(sim.pairing_weights(0, 1) == 2.0);
    CHECK(sim.pairing_weights(1, 0) == 2.0);
    CHECK(sim.pairing_weights(0, 0) == 0.0);
    sim.validate();  // accepted as a complete configuration
}

TEST_CASE("sim_config_from defaults the pairing matrix when absent") {
    const auto cfg = RunConfig::parse_string(
        "[sim]\nn_women = 10\n[reader A]\n[reader B]\n[reader C]\n");
    const auto sim = sim_config_from(cfg, 1);
    CHECK(sim.pairing_weights.rows() == 3);
    CHECK(sim.pairing_weights(0, 1) == 1.0);
    CHECK(sim.pairing_weights.diagonal().isZero());
    CHECK(sim.n_women == 10);
}

TEST_CASE("bad knot syntax is rejected") {
    const auto cfg = RunConfig::parse_string(
        "[sim]\nn_women = 10\n[reader A]\nknots = 0:0, nope, 100:100\n");
    CHECK_THROWS(sim_config_from(cfg, 1));
}
