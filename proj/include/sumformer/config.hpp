#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>

#include "sumformer/model.hpp"

namespace sumformer {

struct TrainConfig {
    int epochs = 80;
    int batch_size = 16;
    int warmup_epochs = 5;
    double warmup_lr = 1e-5;
    double peak_lr = 5e-4;
    double min_lr = 1e-6;
    std::uint64_t seed = 0;
    std::string loss = "mse";
    int T_in = 128;
    int horizon = 128;
    std::string dataset;

    std::string scenario() const { return std::to_string(T_in) + "-" + std::to_string(horizon); }

    void validate() const {
        if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
        if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
        if (warmup_epochs < 0 || warmup_epochs >= epochs)
            throw std::invalid_argument("warmup_epochs must be in [0, epochs)");
        if (loss != "mse") throw std::invalid_argument("unsupported loss '" + loss + "' (only mse)");
    }
};

inline std::pair<int, int> parse_scenario(const std::string& s) {
    auto dash = s.find('-');
    if (dash == std::string::npos || dash == 0 || dash + 1 >= s.size())
        throw std::invalid_argument("scenario must be 'Tin-tau', got '" + s + "'");
    int t_in = std::stoi(s.substr(0, dash));
    int tau = std::stoi(s.substr(dash + 1));
    if (t_in < 1 || tau < 1) throw std::invalid_argument("scenario lengths must be positive, got '" + s + "'");
    return {t_in, tau};
}

/// UTF-8 `key = value` lines; blank lines and lines starting with '#' are
/// skipped. Duplicate keys are errors.
inline std::map<std::string, std::string> parse_kv_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open config '" + path + "'");
    std::map<std::string, std::string> out;
    std::string line;
    int lineno = 0;
    auto trim = [](std::string s) {
        const char* ws = " \t\r\n";
        auto b = s.find_first_not_of(ws);
        if (b == std::string::npos) return std::string();
        auto e = s.find_last_not_of(ws);
        return s.substr(b, e - b + 1);
    };
    while (std::getline(is, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        auto eq = t.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected 'key = value'");
        std::string key = trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));
        if (key.empty()) throw std::runtime_error(path + ":" + std::to_string(lineno) + ": empty key");
        if (!out.emplace(key, value).second)
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
    }
    return out;
}

/// Applies a parsed config to the training and model settings. Keys are
/// exactly the field names; anything else is an error.
inline void apply_config(const std::map<std::string, std::string>& kv, TrainConfig& train, ModelConfig& model) {
    std::set<std::string> seen;
    auto take = [&](const std::string& key) -> const std::string* {
        auto it = kv.find(key);
        if (it == kv.end()) return nullptr;
        seen.insert(key);
        return &it->second;
    };
    auto as_int = [](const std::string& key, const std::string& v) {
        try {
            std::size_t pos = 0;
            int x = std::stoi(v, &pos);
            if (pos != v.size()) throw std::invalid_argument(v);
            return x;
        } catch (const std::exception&) {
            throw std::runtime_error("config key '" + key + "' expects an integer, got '" + v + "'");
        }
    };
    auto as_double = [](const std::string& key, const std::string& v) {
        try {
            std::size_t pos = 0;
            double x = std::stod(v, &pos);
            if (pos != v.size()) throw std::invalid_argument(v);
            return x;
        } catch (const std::exception&) {
            throw std::runtime_error("config key '" + key + "' expects a number, got '" + v + "'");
        }
    };

    if (auto* v = take("epochs")) train.epochs = as_int("epochs", *v);
    if (auto* v = take("batch_size")) train.batch_size = as_int("batch_size", *v);
    if (auto* v = take("warmup_epochs")) train.warmup_epochs = as_int("warmup_epochs", *v);
    if (auto* v = take("warmup_lr")) train.warmup_lr = as_double("warmup_lr", *v);
    if (auto* v = take("peak_lr")) train.peak_lr = as_double("peak_lr", *v);
    if (auto* v = take("min_lr")) train.min_lr = as_double("min_lr", *v);
    if (auto* v = take("seed")) train.seed = static_cast<std::uint64_t>(std::stoull(*v));
    if (auto* v = take("loss")) train.loss = *v;
    if (auto* v = take("dataset")) train.dataset = *v;
    if (auto* v = take("scenario")) {
        auto [t_in, tau] = parse_scenario(*v);
        train.T_in = t_in;
        train.horizon = tau;
    }
    if (auto* v = take("variant")) model.variant = variant_from_name(*v);
    if (auto* v = take("L_seg")) model.L_seg = as_int("L_seg", *v);
    if (auto* v = take("d_model")) model.d_model = as_int("d_model", *v);
    if (auto* v = take("depth")) model.depth = as_int("depth", *v);
    if (auto* v = take("r_win")) model.r_win = as_int("r_win", *v);
    if (auto* v = take("g")) model.g = as_int("g", *v);
    if (auto* v = take("h")) model.heads = as_int("h", *v);
    if (auto* v = take("d_qkv")) model.d_qkv = as_int("d_qkv", *v);
    if (auto* v = take("keep_bins")) model.keep_bins = as_int("keep_bins", *v);
    if (auto* v = take("L_spatial")) model.L_spatial = as_int("L_spatial", *v);

    for (const auto& [key, value] : kv)
        if (!seen.count(key)) throw std::runtime_error("unknown config key '" + key + "'");

    model.input_len = train.T_in;
    model.horizon = train.horizon;
    train.validate();
}

}  // namespace sumformer
