#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "potkv/config.hpp"
#include "potkv/error.hpp"
#include "potkv/rng.hpp"
#include "potkv/rope.hpp"

namespace potkv {

struct NamedTensor {
    std::string name;
    std::vector<std::uint32_t> dims;
    std::vector<float> data;

    std::size_t elem_count() const {
        std::size_t n = 1;
        for (auto d : dims) n *= d;
        return n;
    }
};

// Miniature pre-norm decoder-only transformer. Projections are bias-free and
// stored [out][in] row-major; the feed-forward is two matrices with GELU.
struct Model {
    ModelConfig config;

    NamedTensor tok_embedding;  // [vocab, d_model]
    struct Layer {
        NamedTensor attn_norm;  // [d_model]
        NamedTensor wq, wk, wv, wo;  // [d_model, d_model]
        NamedTensor ffn_norm;   // [d_model]
        NamedTensor w_in;       // [d_ff, d_model]
        NamedTensor w_out;      // [d_model, d_ff]
    };
    std::vector<Layer> layers;
    NamedTensor final_norm;     // [d_model]
    NamedTensor lm_head;        // [vocab, d_model]

    RopeTable rope;

    // Visits tensors in the fixed declaration order used by init and by the
    // MPKV1 writer.
    template <class Fn>
    void for_each_tensor(Fn&& fn) {
        fn(tok_embedding);
        for (auto& l : layers) {
            fn(l.attn_norm);
            fn(l.wq);
            fn(l.wk);
            fn(l.wv);
            fn(l.wo);
            fn(l.ffn_norm);
            fn(l.w_in);
            fn(l.w_out);
        }
        fn(final_norm);
        fn(lm_head);
    }

    template <class Fn>
    void for_each_tensor(Fn&& fn) const {
        const_cast<Model*>(this)->for_each_tensor([&](NamedTensor& t) { fn(static_cast<const NamedTensor&>(t)); });
    }

    void check_finite() const {
        for_each_tensor([](const NamedTensor& t) {
            for (float v : t.data) {
                if (!std::isfinite(v))
                    throw ConfigError("model weights: tensor '" + t.name + "' contains a non-finite value");
            }
        });
    }
};

namespace detail {

inline NamedTensor make_tensor(std::string name, std::vector<std::uint32_t> dims) {
    NamedTensor t;
    t.name = std::move(name);
    t.dims = std::move(dims);
    t.data.assign(t.elem_count(), 0.0f);
    return t;
}

}  // namespace detail

// Builds the weight skeleton (names + shapes) without filling values.
inline Model make_model_skeleton(const ModelConfig& config) {
    config.validate();
    Model m;
    m.config = config;
    const auto u = [](int v) { return static_cast<std::uint32_t>(v); };
    m.tok_embedding = detail::make_tensor("tok_embedding", {u(config.vocab_size), u(config.d_model)});
    m.layers.resize(static_cast<std::size_t>(config.n_layers));
    for (int l = 0; l < config.n_layers; ++l) {
        auto& lay = m.layers[static_cast<std::size_t>(l)];
        const std::string sfx = "." + std::to_string(l);
        lay.attn_norm = detail::make_tensor("attn_norm" + sfx, {u(config.d_model)});
        lay.wq = detail::make_tensor("wq" + sfx, {u(config.d_model), u(config.d_model)});
        lay.wk = detail::make_tensor("wk" + sfx, {u(config.d_model), u(config.d_model)});
        lay.wv = detail::make_tensor("wv" + sfx, {u(config.d_model), u(config.d_model)});
        lay.wo = detail::make_tensor("wo" + sfx, {u(config.d_model), u(config.d_model)});
        lay.ffn_norm = detail::make_tensor("ffn_norm" + sfx, {u(config.d_model)});
        lay.w_in = detail::make_tensor("w_in" + sfx, {u(config.d_ff), u(config.d_model)});
        lay.w_out = detail::make_tensor("w_out" + sfx, {u(config.d_model), u(config.d_ff)});
    }
    m.final_norm = detail::make_tensor("final_norm", {u(config.d_model)});
    m.lm_head = detail::make_tensor("lm_head", {u(config.vocab_size), u(config.d_model)});
    m.rope = RopeTable(config.d_head, config.rope_base);
    return m;
}

// Seeded init: one continuous N(0, 0.02) stream (see rng.hpp for the exact
// recipe) fills the non-norm tensors in declaration order, tok_embedding
// first; norm gains are set to 1.
inline Model init_model(const ModelConfig& config) {
    Model m = make_model_skeleton(config);
    GaussianStream g(config.init_seed);
    m.for_each_tensor([&](NamedTensor& t) {
        const bool is_norm = t.name.rfind("attn_norm", 0) == 0 || t.name.rfind("ffn_norm", 0) == 0 ||
                             t.name.rfind("final_norm", 0) == 0;
        if (is_norm) {
            for (auto& v : t.data) v = 1.0f;
        } else {
            for (auto& v : t.data) v = static_cast<float>(0.02 * g.next());
        }
    });
    m.check_finite();
    return m;
}

}  // namespace potkv
