#pragma once

#include <fstream>

#include "sumformer/data.hpp"
#include "sumformer/model.hpp"

namespace sumformer {

// Checkpoint layout: magic "SUMF" | u32 version | config as i32 fields
// | parameters in initialization order, float32 little-endian.

constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline void put_config(std::ostream& os, const ModelConfig& cfg) {
    auto put = [&](int v) { put_u32(os, static_cast<std::uint32_t>(v)); };
    put(variant_id(cfg.variant.name));
    put(cfg.L_seg);
    put(cfg.d_model);
    put(cfg.depth);
    put(cfg.r_win);
    put(cfg.g);
    put(cfg.heads);
    put(cfg.d_qkv);
    put(cfg.keep_bins);
    put(cfg.horizon);
    put(cfg.input_len);
    put(cfg.L_spatial);
    put(cfg.C);
    put(cfg.H);
    put(cfg.W);
}

inline ModelConfig get_config(std::istream& is) {
    auto get = [&]() { return static_cast<int>(get_u32(is)); };
    ModelConfig cfg;
    cfg.variant = variant_from_name(variant_name_from_id(get()));
    cfg.L_seg = get();
    cfg.d_model = get();
    cfg.depth = get();
    cfg.r_win = get();
    cfg.g = get();
    cfg.heads = get();
    cfg.d_qkv = get();
    cfg.keep_bins = get();
    cfg.horizon = get();
    cfg.input_len = get();
    cfg.L_spatial = get();
    cfg.C = get();
    cfg.H = get();
    cfg.W = get();
    return cfg;
}

}  // namespace detail

template <typename S>
void save_checkpoint(const std::string& path, ModelParams<S>& m) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
    os.write("SUMF", 4);
    detail::put_u32(os, kCheckpointVersion);
    detail::put_config(os, m.cfg);
    detail::visit_params(m, [&](const std::string&, Parameter<S>& p) {
        for (std::int64_t i = 0; i < p.value.numel(); ++i) detail::put_f32(os, static_cast<float>(p.value[i]));
    });
    if (!os) throw std::runtime_error("write to '" + path + "' failed");
}

template <typename S>
ModelParams<S> load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open '" + path + "' for reading");
    char magic[4] = {};
    is.read(magic, 4);
    if (!is || std::string(magic, 4) != "SUMF")
        throw std::runtime_error("bad magic in '" + path + "': expected SUMF");
    const std::uint32_t version = detail::get_u32(is);
    if (version != kCheckpointVersion)
        throw std::runtime_error("version mismatch in '" + path + "': file has " + std::to_string(version) +
                                 ", reader supports " + std::to_string(kCheckpointVersion));
    ModelConfig cfg = detail::get_config(is);
    ModelParams<S> m = build_model<S>(cfg, 0);
    std::int64_t scalars = 0;
    detail::visit_params(m, [&](const std::string&, Parameter<S>& p) { scalars += p.value.numel(); });
    const std::int64_t header = 4 + 4 + 15 * 4;
    is.seekg(0, std::ios::end);
    const std::int64_t total = static_cast<std::int64_t>(is.tellg());
    if (total < header + 4 * scalars)
        throw std::runtime_error("truncated checkpoint '" + path + "': file has " + std::to_string(total) +
                                 " bytes, config implies " + std::to_string(header + 4 * scalars));
    is.seekg(header, std::ios::beg);
    detail::visit_params(m, [&](const std::string&, Parameter<S>& p) {
        for (std::int64_t i = 0; i < p.value.numel(); ++i) p.value[i] = static_cast<S>(detail::get_f32(is));
    });
    return m;
}

}  // namespace sumformer
