#include "densmap/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace densmap {

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t");
    return s.substr(a, b - a + 1);
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace

RunConfig RunConfig::parse_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_string(ss.str());
}

RunConfig RunConfig::parse_string(const std::string& text) {
    RunConfig cfg;
    cfg.text_ = text;
    cfg.hash_ = fnv1a(text);
    std::stringstream ss(text);
    std::string line;
    std::string section;  // "" is the global section
    cfg.sections_[section];
    cfg.section_order_.push_back(section);
    std::size_t no = 0;
    while (std::getline(ss, line)) {
        ++no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto hash_pos = line.find('#');
        if (hash_pos != std::string::npos) line = line.substr(0, hash_pos);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw std::runtime_error("config line " + std::to_string(no) +
                                         ": unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            if (!cfg.sections_.count(section)) cfg.section_order_.push_back(section);
            cfg.sections_[section];
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("config line " + std::to_string(no) +
                                     ": expected key = value");
        cfg.sections_[section][trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return cfg;
}

bool RunConfig::has(const std::string& section, const std::string& key) const {
    auto it = sections_.find(section);
    return it != sections_.end() && it->second.count(key);
}

std::string RunConfig::get(const std::string& section, const std::string& key) const {
    auto it = sections_.find(section);
    if (it == sections_.end() || !it->second.count(key))
        throw std::runtime_error("config: missing [" + section + "] " + key);
    return it->second.at(key);
}

std::string RunConfig::get_or(const std::string& section, const std::string& key,
                              const std::string& fallback) const {
    return has(section, key) ? get(section, key) : fallback;
}

double RunConfig::get_double(const std::string& section, const std::string& key) const {
    return std::stod(get(section, key));
}

double RunConfig::get_double_or(const std::string& section, const std::string& key,
                                double fallback) const {
    return has(section, key) ? get_double(section, key) : fallback;
}

long RunConfig::get_int(const std::string& section, const std::string& key) const {
    return std::stol(get(section, key));
}

long RunConfig::get_int_or(const std::string& section, const std::string& key,
                           long fallback) const {
    return has(section, key) ? get_int(section, key) : fallback;
}

bool RunConfig::get_bool_or(const std::string& section, const std::string& key,
                            bool fallback) const {
    if (!has(section, key)) return fallback;
    const std::string v = get(section, key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw std::runtime_error("config: bad boolean '" + v + "' for [" + section + "] " + key);
}

std::vector<std::string> RunConfig::sections_with_prefix(const std::string& prefix) const {
    std::vector<std::string> out;
    for (const auto& s : section_order_)
        if (s.rfind(prefix, 0) == 0) out.push_back(s);
    return out;
}

std::vector<double> parse_double_list(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ','))
        if (!tok.empty()) out.push_back(std::stod(tok));
    return out;
}

std::vector<std::string> parse_string_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        const auto a = tok.find_first_not_of(" \t");
        const auto b = tok.find_last_not_of(" \t");
        if (a != std::string::npos) out.push_back(tok.substr(a, b - a + 1));
    }
    return out;
}

SimConfig sim_config_from(const RunConfig& cfg, std::uint64_t seed) {
    SimConfig sim;
    sim.seed = seed;
    sim.n_women = static_cast<int>(cfg.get_int("sim", "n_women"));
    sim.images_per_woman = static_cast<int>(cfg.get_int_or("sim", "images_per_woman", 4));
    sim.q = static_cast<int>(cfg.get_int_or("sim", "q", 3));
    sim.feature_dim = static_cast<int>(cfg.get_int_or("sim", "feature_dim", 16));
    sim.truth_alpha = cfg.get_double_or("sim", "truth_alpha", 2.0);
    sim.truth_beta = cfg.get_double_or("sim", "truth_beta", 4.0);
    sim.latent_spread = cfg.get_double_or("sim", "latent_spread", 0.08);
    sim.image_jitter = cfg.get_double_or("sim", "image_jitter", 0.02);
    sim.feature_noise_sd = cfg.get_double_or("sim", "feature_noise_sd", 0.5);
    sim.cancer_log_odds_intercept = cfg.get_double_or("sim", "cancer_intercept", -2.0);
    sim.cancer_log_odds_slope = cfg.get_double_or("sim", "cancer_slope", 0.0);
    sim.control_ratio = static_cast<int>(cfg.get_int_or("sim", "control_ratio", 3));

    for (const auto& section : cfg.sections_with_prefix("reader ")) {
        ReaderProfile r;
        r.reader_id = section.substr(7);
        if (cfg.has(section, "knots")) {
            r.dist_knots.clear();
            for (const auto& knot : parse_string_list(cfg.get(section, "knots"))) {
                const auto colon = knot.find(':');
                if (colon == std::string::npos)
                    throw std::runtime_error("config: bad knot '" + knot + "' in [" +
                                             section + "]");
                r.dist_knots.emplace_back(std::stod(knot.substr(0, colon)),
                                          std::stod(knot.substr(colon + 1)));
            }
        }
        if (cfg.has(section, "weights")) {
            auto w = parse_double_list(cfg.get(section, "weights"));
            r.attribute_weights =
                Eigen::Map<Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
        } else {
            r.attribute_weights = Eigen::VectorXd::Constant(sim.q, 1.0 / sim.q);
        }
        r.noise_sd = cfg.get_double_or(section, "noise_sd", 0.0);
        sim.readers.push_back(std::move(r));
    }

    const auto m = static_cast<Eigen::Index>(sim.readers.size());
    sim.pairing_weights = Eigen::MatrixXd::Ones(m, m);
    sim.pairing_weights.diagonal().setZero();
    if (!cfg.sections_with_prefix("pairing").empty()) {
        sim.pairing_weights.setZero();
        std::map<std::string, Eigen::Index> idx;
        for (Eigen::Index i = 0; i < m; ++i)
            idx[sim.readers[static_cast<std::size_t>(i)].reader_id] = i;
        auto it = cfg.sections_with_prefix("pairing");
        for (const auto& section : it) {
            // keys are "A_B = weight"
            for (const auto& a : idx)
                for (const auto& b : idx) {
                    const std::string key = a.first + "_" + b.first;
                    if (cfg.has(section, key)) {
                        const double w = cfg.get_double(section, key);
                        sim.pairing_weights(a.second, b.second) = w;
                        sim.pairing_weights(b.second, a.second) = w;
                    }
                }
        }
    }
    return sim;
}

}  // namespace densmap
