// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "avsv/blstm.hpp"
#include "avsv/features_io.hpp"
#include "avsv/graph.hpp"
#include "avsv/jca.hpp"
#include "avsv/pooling.hpp"
#include "avsv/rng.hpp"

namespace avsv {

enum class FusionMode : uint8_t {
    Jca = 0,         // U-BLSTMs + JCA + J-BLSTM
    JcaNoBlstm = 1,  // JCA only
    JcaUBlstm = 2,   // U-BLSTMs + JCA
    Early = 3,       // feature concatenation
    Score = 4,       // unimodal towers, decision-level fusion
};

inline std::string mode_name(FusionMode m) {
    switch (m) {
        case FusionMode::Jca: return "jca";
        case FusionMode::JcaNoBlstm: return "jca_noblstm";
        case FusionMode::JcaUBlstm: return "jca_ublstm";
        case FusionMode::Early: return "early";
        case FusionMode::Score: return "score";
    }
    throw ContractError("unknown fusion mode");
}

inline FusionMode parse_mode(const std::string& s) {
    if (s == "jca") return FusionMode::Jca;
    if (s == "jca_noblstm") return FusionMode::JcaNoBlstm;
    if (s == "jca_ublstm") return FusionMode::JcaUBlstm;
    if (s == "early") return FusionMode::Early;
    if (s == "score") return FusionMode::Score;
    throw ContractError("unknown fusion mode \"" + s + "\"");
}

struct TrainConfig {
    double lr = 0.001;
    int batch = 100;
    int epochs = 100;
    int patience = 10;
    double dropout = 0.5;     // on the fused feature matrix, training only
    double wd = 5e-4;         // decoupled weight decay
    FusionMode mode = FusionMode::Jca;
    double aam_s = 30.0;
    double aam_m = 0.2;       // radians
    uint64_t seed = 1;
    int L = 5;
    int d_a = 192;
    int d_v = 512;
    int d_h = 128;            // ASP attention hidden dim
    int embed_dim = 256;
    double fusion_weight = 0.5;  // score-mode weight on the audio score

    void validate() const {
        if (lr <= 0.0) throw ContractError("TrainConfig: lr must be positive");
        if (batch < 1) throw ContractError("TrainConfig: batch must be >= 1");
        if (epochs < 0) throw ContractError("TrainConfig: epochs must be >= 0");
        if (patience < 1) throw ContractError("TrainConfig: patience must be >= 1");
        if (!(dropout >= 0.0 && dropout < 1.0))
            throw ContractError("TrainConfig: dropout must be in [0,1)");
        if (wd < 0.0) throw ContractError("TrainConfig: wd must be >= 0");
        if (aam_s <= 0.0) throw ContractError("TrainConfig: s must be positive");
        if (!(aam_m >= 0.0 && aam_m < M_PI / 2))
            throw ContractError("TrainConfig: m must be in [0, pi/2)");
        if (!(fusion_weight >= 0.0 && fusion_weight <= 1.0))
            throw ContractError("TrainConfig: fusion_weight must be in [0,1]");
        if (d_h < 1 || embed_dim < 1) throw ContractError("TrainConfig: dims must be positive");
    }
};

struct ModelCheckpoint {
    FusionMode mode = FusionMode::Jca;
    ParamMap tensors;
    std::map<std::string, std::string> config;  // snapshot, key=value
    int epoch = 0;
    double val_eer = 1.0;
};

// --- parameter naming and initialization ---

namespace model_detail {

inline void add_blstm_shapes(std::map<std::string, std::pair<int, int>>& shapes,
                             const std::string& block, int d_in) {
    int h = d_in / 2;
    for (const char* dir : {"f", "b"}) {
        for (const char* gate : {"i", "f", "g", "o"}) {
            std::string base = block + "." + dir + ".";
            shapes[base + "W" + gate] = {h, d_in};
            shapes[base + "U" + gate] = {h, h};
            shapes[base + "b" + gate] = {h, 1};
        }
    }
}

inline void add_head_shapes(std::map<std::string, std::pair<int, int>>& shapes,
                            const std::string& prefix, int feat_dim, int d_h, int e,
                            int n_classes) {
    shapes[prefix + "asp.W"] = {d_h, feat_dim};
    shapes[prefix + "asp.b"] = {d_h, 1};
    shapes[prefix + "asp.v"] = {d_h, 1};
    shapes[prefix + "asp.k"] = {1, 1};
    shapes[prefix + "head.proj"] = {e, 2 * feat_dim};
    shapes[prefix + "head.cls"] = {n_classes, e};
}

}  // namespace model_detail

// Expected tensor name -> shape for a mode and set of dims.
inline std::map<std::string, std::pair<int, int>> expected_shapes(FusionMode mode, int d_a,
                                                                  int d_v, int d_h, int e,
                                                                  int n_classes) {
    std::map<std::string, std::pair<int, int>> shapes;
    int d = d_a + d_v;
    switch (mode) {
        case FusionMode::Jca:
            model_detail::add_blstm_shapes(shapes, "jblstm", d);
            [[fallthrough]];
        case FusionMode::JcaUBlstm:
            model_detail::add_blstm_shapes(shapes, "ublstm_a", d_a);
            model_detail::add_blstm_shapes(shapes, "ublstm_v", d_v);
            [[fallthrough]];
        case FusionMode::JcaNoBlstm:
            shapes["jca.W_ja"] = {d_a, d};
            shapes["jca.W_jv"] = {d_v, d};
            shapes["jca.W_ca"] = {d_a, d_a};
            shapes["jca.W_cv"] = {d_v, d_v};
            shapes["jca.W_ha"] = {d_a, d_a};
            shapes["jca.W_hv"] = {d_v, d_v};
            model_detail::add_head_shapes(shapes, "", d, d_h, e, n_classes);
            break;
        case FusionMode::Early:
            model_detail::add_head_shapes(shapes, "", d, d_h, e, n_classes);
            break;
        case FusionMode::Score:
            model_detail::add_head_shapes(shapes, "a.", d_a, d_h, e, n_classes);
            model_detail::add_head_shapes(shapes, "v.", d_v, d_h, e, n_classes);
            break;
    }
    return shapes;
}

// Uniform on [-a, a], a = sqrt(6/(rows+cols)).
inline Matrix xavier_init(int rows, int cols, Rng& rng) {
    double a = std::sqrt(6.0 / (rows + cols));
    Matrix m(rows, cols);
    for (size_t i = 0; i < m.size(); ++i) m[i] = rng.uniform(-a, a);
    return m;
}

inline Matrix xavier_init(int rows, int cols, uint64_t seed) {
    Rng rng(seed);
    return xavier_init(rows, cols, rng);
}

// Weight matrices get Xavier init, biases (and the ASP scalar) start at
// zero. Tensor order is the sorted name order, so a seed fully determines
// every entry.
inline ParamMap init_parameters(FusionMode mode, int d_a, int d_v, int d_h, int e, int n_classes,
                                uint64_t seed) {
    auto shapes = expected_shapes(mode, d_a, d_v, d_h, e, n_classes);
    Rng rng(seed);
    ParamMap params;
    for (const auto& [name, sh] : shapes) {
        auto dot = name.rfind('.');
        std::string leaf = name.substr(dot + 1);
        bool is_bias = leaf == "k" || (leaf.size() == 2 && leaf[0] == 'b') || leaf == "b";
        if (is_bias)
            params[name] = Matrix::zeros(sh.first, sh.second);
        else
            params[name] = xavier_init(sh.first, sh.second, rng);
    }
    return params;
}

// --- forward stacks ---

namespace model_detail {

inline BlstmNodes blstm_nodes(const std::map<std::string, Graph::NodeId>& p,
                              const std::string& block) {
    auto get = [&](const std::string& n) { return p.at(block + "." + n); };
    return BlstmNodes{
        LstmDirNodes{get("f.Wi"), get("f.Ui"), get("f.bi"), get("f.Wf"), get("f.Uf"), get("f.bf"),
                     get("f.Wg"), get("f.Ug"), get("f.bg"), get("f.Wo"), get("f.Uo"), get("f.bo")},
        LstmDirNodes{get("b.Wi"), get("b.Ui"), get("b.bi"), get("b.Wf"), get("b.Uf"), get("b.bf"),
                     get("b.Wg"), get("b.Ug"), get("b.bg"), get("b.Wo"), get("b.Uo"), get("b.bo")}};
}

inline Graph::NodeId head_embedding(Graph& g, const std::map<std::string, Graph::NodeId>& p,
                                    const std::string& prefix, Graph::NodeId feats) {
    AspNodes asp{p.at(prefix + "asp.W"), p.at(prefix + "asp.b"), p.at(prefix + "asp.v"),
                 p.at(prefix + "asp.k")};
    Graph::NodeId pooled = attentive_stats_pool(g, feats, asp);
    return embed(g, pooled, p.at(prefix + "head.proj"));
}

}  // namespace model_detail

// Fused-mode forward pass: (X_a, X_v) -> embedding node (e x 1).
// dropout_mask < 0 means no dropout (evaluation). The mask multiplies the
// fused feature matrix before the J-BLSTM / pooling stage.
inline Graph::NodeId forward_fused_embedding(Graph& g,
                                             const std::map<std::string, Graph::NodeId>& p,
                                             FusionMode mode, Graph::NodeId x_a,
                                             Graph::NodeId x_v, Graph::NodeId dropout_mask = -1) {
    Graph::NodeId fused;
    switch (mode) {
        case FusionMode::Jca:
        case FusionMode::JcaUBlstm: {
            Graph::NodeId xa = blstm_residual(g, x_a, model_detail::blstm_nodes(p, "ublstm_a"));
            Graph::NodeId xv = blstm_residual(g, x_v, model_detail::blstm_nodes(p, "ublstm_v"));
            JcaNodes w{p.at("jca.W_ja"), p.at("jca.W_jv"), p.at("jca.W_ca"),
                       p.at("jca.W_cv"), p.at("jca.W_ha"), p.at("jca.W_hv")};
            fused = jca_forward(g, xa, xv, w);
            break;
        }
        case FusionMode::JcaNoBlstm: {
            JcaNodes w{p.at("jca.W_ja"), p.at("jca.W_jv"), p.at("jca.W_ca"),
                       p.at("jca.W_cv"), p.at("jca.W_ha"), p.at("jca.W_hv")};
            fused = jca_forward(g, x_a, x_v, w);
            break;
        }
        case FusionMode::Early:
            fused = early_fusion(g, x_a, x_v);
            break;
        case FusionMode::Score:
            throw ContractError("forward_fused_embedding: score mode has no fused stack");
    }
    if (dropout_mask >= 0) fused = g.hadamard(fused, dropout_mask);
    if (mode == FusionMode::Jca)
        fused = blstm_residual(g, fused, model_detail::blstm_nodes(p, "jblstm"));
    return model_detail::head_embedding(g, p, "", fused);
}

// Unimodal tower for score mode; prefix is "a." or "v.".
inline Graph::NodeId forward_unimodal_embedding(Graph& g,
                                                const std::map<std::string, Graph::NodeId>& p,
                                                const std::string& prefix, Graph::NodeId x,
                                                Graph::NodeId dropout_mask = -1) {
    Graph::NodeId feats = dropout_mask >= 0 ? g.hadamard(x, dropout_mask) : x;
    return model_detail::head_embedding(g, p, prefix, feats);
}

// --- AVSM checkpoint format ---
// magic "AVSM", version u32 = 1, mode u8, tensor count u32; per tensor:
// name (u16 len + bytes), rows u32, cols u32, float64 row-major. Then a
// u32-length-prefixed UTF-8 key=value config block.

inline void save_model(const ModelCheckpoint& ckpt, std::ostream& os) {
    os.write("AVSM", 4);
    io_detail::put<uint32_t>(os, 1);
    io_detail::put<uint8_t>(os, static_cast<uint8_t>(ckpt.mode));
    io_detail::put<uint32_t>(os, static_cast<uint32_t>(ckpt.tensors.size()));
    for (const auto& [name, m] : ckpt.tensors) {
        io_detail::put_string(os, name);
        io_detail::put<uint32_t>(os, static_cast<uint32_t>(m.rows()));
        io_detail::put<uint32_t>(os, static_cast<uint32_t>(m.cols()));
        for (size_t i = 0; i < m.size(); ++i) io_detail::put<double>(os, m[i]);
    }
    std::ostringstream cfg;
    for (const auto& [k, v] : ckpt.config) cfg << k << '=' << v << '\n';
    std::string cfgs = cfg.str();
    io_detail::put<uint32_t>(os, static_cast<uint32_t>(cfgs.size()));
    os.write(cfgs.data(), static_cast<std::streamsize>(cfgs.size()));
    if (!os) throw IoError("save_model: stream write failed");
}

inline void save_model(const ModelCheckpoint& ckpt, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path);
    save_model(ckpt, os);
}

// validate_tensors: when true (trained models), the tensor set must match
// exactly the expected names/shapes for the stored mode and dims. Embedding
// containers reuse the format with validation off.
inline ModelCheckpoint load_model(std::istream& is, bool validate_tensors = true) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "AVSM", 4) != 0) throw FormatError("bad AVSM magic");
    uint32_t version = io_detail::get<uint32_t>(is, "version");
    if (version != 1) throw FormatError("unsupported AVSM version " + std::to_string(version));
    uint8_t mode = io_detail::get<uint8_t>(is, "mode");
    if (mode > 4) throw FormatError("bad AVSM mode byte " + std::to_string(mode));
    ModelCheckpoint ckpt;
    ckpt.mode = static_cast<FusionMode>(mode);
    uint32_t count = io_detail::get<uint32_t>(is, "tensor count");
    for (uint32_t t = 0; t < count; ++t) {
        std::string name = io_detail::get_string(is, "tensor " + std::to_string(t) + " name");
        uint32_t rows = io_detail::get<uint32_t>(is, "tensor " + name + " rows");
        uint32_t cols = io_detail::get<uint32_t>(is, "tensor " + name + " cols");
        if (rows == 0 || cols == 0) throw FormatError("tensor " + name + " has zero dimension");
        Matrix m(static_cast<int>(rows), static_cast<int>(cols));
        for (size_t i = 0; i < m.size(); ++i)
            m[i] = io_detail::get<double>(is, "tensor " + name + " values");
        if (ckpt.tensors.count(name)) throw FormatError("duplicate tensor name " + name);
        ckpt.tensors[name] = std::move(m);
    }
    uint32_t cfg_len = io_detail::get<uint32_t>(is, "config block length");
    std::string cfg(cfg_len, '\0');
    is.read(cfg.data(), cfg_len);
    if (!is) throw FormatError("truncated file while reading config block");
    std::istringstream cs(cfg);
    std::string line;
    while (std::getline(cs, line)) {
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) throw FormatError("bad config line \"" + line + "\"");
        ckpt.config[line.substr(0, eq)] = line.substr(eq + 1);
    }
    if (auto it = ckpt.config.find("best_epoch"); it != ckpt.config.end())
        ckpt.epoch = std::stoi(it->second);
    if (auto it = ckpt.config.find("val_eer"); it != ckpt.config.end())
        ckpt.val_eer = std::stod(it->second);

    if (validate_tensors) {
        auto geti = [&](const std::string& k) {
            auto it = ckpt.config.find(k);
            if (it == ckpt.config.end()) throw FormatError("config block missing key " + k);
            return std::stoi(it->second);
        };
        int n_classes = 1;
        const std::string cls_key = ckpt.mode == FusionMode::Score ? "a.head.cls" : "head.cls";
        if (auto it = ckpt.tensors.find(cls_key); it != ckpt.tensors.end())
            n_classes = it->second.rows();
        auto expected = expected_shapes(ckpt.mode, geti("d_a"), geti("d_v"), geti("d_h"),
                                        geti("embed_dim"), n_classes);
        for (const auto& [name, sh] : expected) {
            auto it = ckpt.tensors.find(name);
            if (it == ckpt.tensors.end()) throw FormatError("missing tensor " + name);
            if (it->second.rows() != sh.first || it->second.cols() != sh.second)
                throw FormatError("tensor " + name + " has shape " + it->second.shape() +
                                  ", expected " + Matrix::shape_str(sh.first, sh.second));
        }
        for (const auto& [name, m] : ckpt.tensors)
            if (!expected.count(name)) throw FormatError("unknown tensor " + name);
    }
    return ckpt;
}

inline ModelCheckpoint load_model(const std::string& path, bool validate_tensors = true) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open model file: " + path);
    return load_model(is, validate_tensors);
}

// --- evaluation-time embedding extraction ---

namespace model_detail {

inline std::map<std::string, Graph::NodeId> register_params(Graph& g, const ParamMap& tensors) {
    std::map<std::string, Graph::NodeId> ids;
    for (const auto& [name, m] : tensors) ids[name] = g.parameter(m, name);
    return ids;
}

}  // namespace model_detail

// Embeddings for aligned (audio, visual) records under a fused-mode model.
inline std::map<std::string, Embedding> embed_fused(const ModelCheckpoint& ckpt,
                                                    std::span<const UtteranceFeatures> audio,
                                                    std::span<const UtteranceFeatures> visual) {
    if (ckpt.mode == FusionMode::Score)
        throw ContractError("embed_fused: model is score-mode; use embed_unimodal per tower");
    std::map<std::string, const UtteranceFeatures*> by_id;
    for (const auto& v : visual) by_id[v.id] = &v;
    std::map<std::string, Embedding> out;
    for (const auto& a : audio) {
        auto it = by_id.find(a.id);
        if (it == by_id.end())
            throw ContractError("embed_fused: no visual record for utterance " + a.id);
        Graph g;
        auto p = model_detail::register_params(g, ckpt.tensors);
        Graph::NodeId xa = g.input(a.values);
        Graph::NodeId xv = g.input(it->second->values);
        Graph::NodeId e = forward_fused_embedding(g, p, ckpt.mode, xa, xv);
        out[a.id] = Embedding{a.id, g.value(e).data()};
    }
    return out;
}

// Embeddings for one modality tower of a score-mode model (prefix "a." / "v.").
inline std::map<std::string, Embedding> embed_unimodal(const ModelCheckpoint& ckpt,
                                                       const std::string& prefix,
                                                       std::span<const UtteranceFeatures> records) {
    std::map<std::string, Embedding> out;
    for (const auto& r : records) {
        Graph g;
        auto p = model_detail::register_params(g, ckpt.tensors);
        Graph::NodeId x = g.input(r.values);
        Graph::NodeId e = forward_unimodal_embedding(g, p, prefix, x);
        out[r.id] = Embedding{r.id, g.value(e).data()};
    }
    return out;
}

}  // namespace avsv
