#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ragseco/model.hpp"

namespace ragseco::config {

struct RunConfig {
    std::string drugs_path;
    std::string ddis_path;
    std::string charset_path; // empty -> built-in default charset
    std::string out_dir = ".";
    int task = 1;
    std::size_t fold = 0;
    std::size_t fold_count = 5;
    model::Variant variant = model::Variant::full;
    model::HyperParams hp;
};

// Table of per-dataset/task hyperparameter profiles.
inline const std::map<std::string, std::map<std::string, std::string>>& profiles() {
    static const std::map<std::string, std::map<std::string, std::string>> table = {
        {"dataset1-task1",
         {{"task", "1"}, {"bs", "512"}, {"lr", "2e-5"}, {"dr", "0.3"}, {"te", "120"},
          {"d_prime", "500"}, {"n", "0"}, {"d_fnn", "1000"}, {"t_pos", "0.95"},
          {"t_neg", "0.1"}, {"lambda", "5"}}},
        {"dataset1-task2",
         {{"task", "2"}, {"bs", "512"}, {"lr", "5e-6"}, {"dr", "0.2"}, {"te", "120"},
          {"d_prime", "500"}, {"n", "3"}, {"d_fnn", "1500"}, {"t_pos", "0.95"},
          {"t_neg", "0.1"}, {"lambda", "5"}}},
        {"dataset1-task3",
         {{"task", "3"}, {"bs", "512"}, {"lr", "5e-6"}, {"dr", "0.2"}, {"te", "120"},
          {"d_prime", "500"}, {"n", "3"}, {"d_fnn", "1500"}, {"t_pos", "0.95"},
          {"t_neg", "0.1"}, {"lambda", "5"}}},
        {"dataset2-task1",
         {{"task", "1"}, {"bs", "1024"}, {"lr", "2e-5"}, {"dr", "0.5"}, {"te", "120"},
          {"d_prime", "500"}, {"n", "0"}, {"d_fnn", "1500"}, {"t_pos", "0.95"},
          {"t_neg", "0.1"}, {"lambda", "5"}}},
        {"dataset2-task2",
         {{"task", "2"}, {"bs", "1024"}, {"lr", "5e-6"}, {"dr", "0.5"}, {"te", "120"},
          {"d_prime", "500"}, {"n", "3"}, {"d_fnn", "1500"}, {"t_pos", "0.95"},
          {"t_neg", "0.1"}, {"lambda", "5"}}},
        {"dataset2-task3",
         {{"task", "3"}, {"bs", "1024"}, {"lr", "5e-6"}, {"dr", "0.5"}, {"te", "120"},
          {"d_prime", "500"}, {"n", "3"}, {"d_fnn", "1500"}, {"t_pos", "0.95"},
          {"t_neg", "0.1"}, {"lambda", "5"}}},
    };
    return table;
}

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

template <typename T>
inline T parse_number(const std::string& key, const std::string& value) {
    std::istringstream ss(value);
    T out{};
    ss >> out;
    if (ss.fail() || !(ss >> std::ws).eof())
        throw ConfigError("config key '" + key + "': cannot parse '" + value + "'");
    return out;
}

inline std::vector<std::size_t> parse_size_list(const std::string& key, const std::string& value) {
    std::vector<std::size_t> out;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ','))
        out.push_back(parse_number<std::size_t>(key, trim(item)));
    if (out.empty()) throw ConfigError("config key '" + key + "': empty list");
    return out;
}

} // namespace detail

inline void apply_key(RunConfig& cfg, const std::string& key, const std::string& value) {
    using detail::parse_number;
    if (key == "drugs") cfg.drugs_path = value;
    else if (key == "ddis") cfg.ddis_path = value;
    else if (key == "charset") cfg.charset_path = value;
    else if (key == "out") cfg.out_dir = value;
    else if (key == "task") cfg.task = parse_number<int>(key, value);
    else if (key == "fold") cfg.fold = parse_number<std::size_t>(key, value);
    else if (key == "folds") cfg.fold_count = parse_number<std::size_t>(key, value);
    else if (key == "variant") cfg.variant = model::parse_variant(value);
    else if (key == "bs") cfg.hp.bs = parse_number<std::size_t>(key, value);
    else if (key == "lr") cfg.hp.lr = parse_number<double>(key, value);
    else if (key == "dr") cfg.hp.dr = parse_number<double>(key, value);
    else if (key == "te") cfg.hp.te = parse_number<std::size_t>(key, value);
    else if (key == "d_prime") cfg.hp.d_prime = parse_number<std::size_t>(key, value);
    else if (key == "n") cfg.hp.n = parse_number<int>(key, value);
    else if (key == "d_fnn") cfg.hp.d_fnn = parse_number<std::size_t>(key, value);
    else if (key == "t_pos") cfg.hp.t_pos = parse_number<double>(key, value);
    else if (key == "t_neg") cfg.hp.t_neg = parse_number<double>(key, value);
    else if (key == "lambda") cfg.hp.lambda = parse_number<double>(key, value);
    else if (key == "mixup_alpha") cfg.hp.mixup_alpha = parse_number<double>(key, value);
    else if (key == "seed") cfg.hp.seed = parse_number<std::uint64_t>(key, value);
    else if (key == "decoder_hidden") cfg.hp.decoder_hidden = parse_number<std::size_t>(key, value);
    else if (key == "smiles_q") cfg.hp.smiles_q = parse_number<std::size_t>(key, value);
    else if (key == "cnn_channels") cfg.hp.cnn_channels = detail::parse_size_list(key, value);
    else if (key == "cnn_kernels") cfg.hp.cnn_kernels = detail::parse_size_list(key, value);
    else throw ConfigError("unknown config key '" + key + "'");
}

inline void apply_profile(RunConfig& cfg, const std::string& name) {
    auto it = profiles().find(name);
    if (it == profiles().end()) {
        std::string known;
        for (const auto& [k, v] : profiles()) known += (known.empty() ? "" : ", ") + k;
        throw ConfigError("unknown profile '" + name + "' (known: " + known + ")");
    }
    for (const auto& [k, v] : it->second) apply_key(cfg, k, v);
}

// Plain-text config: one `key = value` per line, '#' starts a comment.
inline void apply_config_file(RunConfig& cfg, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path + ":" + std::to_string(lineno) + ": expected 'key = value'");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        try {
            apply_key(cfg, key, value);
        } catch (const ConfigError& e) {
            throw ConfigError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
}

inline void validate(const RunConfig& cfg, bool need_dataset_paths = true) {
    if (cfg.task < 1 || cfg.task > 3) throw ConfigError("task must be 1, 2 or 3");
    if (cfg.fold_count < 2) throw ConfigError("folds must be >= 2");
    if (cfg.fold >= cfg.fold_count)
        throw ConfigError("fold " + std::to_string(cfg.fold) + " out of range for " +
                          std::to_string(cfg.fold_count) + " folds");
    model::validate(cfg.hp);
    if (need_dataset_paths) {
        if (cfg.drugs_path.empty() || cfg.ddis_path.empty())
            throw ConfigError("drugs and ddis paths are required");
        for (const std::string* p : {&cfg.drugs_path, &cfg.ddis_path}) {
            if (!std::filesystem::exists(*p))
                throw ConfigError("referenced path does not exist: " + *p);
        }
        if (!cfg.charset_path.empty() && !std::filesystem::exists(cfg.charset_path))
            throw ConfigError("referenced path does not exist: " + cfg.charset_path);
    }
}

} // namespace ragseco::config
