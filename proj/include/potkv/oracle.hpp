#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "potkv/ccd.hpp"
#include "potkv/forward.hpp"
#include "potkv/model.hpp"

namespace potkv {

// Memory-unconstrained reference: the first generated token's attention over
// the full context, plus exact per-token novelty over the true prefix.
struct GlobalScore {
    // [layer][head][context column]
    std::vector<std::vector<std::vector<double>>> attention;
    std::vector<double> exact_novelty;  // n_t per context token
    int first_token = -1;

    // Per-head top-k context positions by attention, ties to the lower
    // index. layer == -1 averages the distribution across layers.
    std::vector<std::vector<long long>> topk_sets(int k, int layer = -1) const {
        const int n_layers = static_cast<int>(attention.size());
        const int n_heads = static_cast<int>(attention.front().size());
        std::vector<std::vector<long long>> out;
        out.reserve(static_cast<std::size_t>(n_heads * (layer == -1 ? 1 : 1)));
        const int use_layer = layer == -1 ? -1 : layer;
        for (int h = 0; h < n_heads; ++h) {
            std::vector<double> dist(attention[0][static_cast<std::size_t>(h)].size(), 0.0);
            if (use_layer >= 0) {
                dist = attention[static_cast<std::size_t>(use_layer)][static_cast<std::size_t>(h)];
            } else {
                for (int l = 0; l < n_layers; ++l)
                    for (std::size_t c = 0; c < dist.size(); ++c)
                        dist[c] += attention[static_cast<std::size_t>(l)][static_cast<std::size_t>(h)][c] /
                                   static_cast<double>(n_layers);
            }
            std::vector<int> order(dist.size());
            std::iota(order.begin(), order.end(), 0);
            std::sort(order.begin(), order.end(), [&](int a, int b) {
                if (dist[static_cast<std::size_t>(a)] != dist[static_cast<std::size_t>(b)])
                    return dist[static_cast<std::size_t>(a)] > dist[static_cast<std::size_t>(b)];
                return a < b;
            });
            order.resize(static_cast<std::size_t>(std::min<int>(k, static_cast<int>(dist.size()))));
            std::vector<long long> set(order.begin(), order.end());
            std::sort(set.begin(), set.end());
            out.push_back(std::move(set));
        }
        return out;
    }
};

// Unbounded prefill of context + query, one greedy token, then that token's
// attention distribution sliced to the context columns.
inline GlobalScore global_scoring(const Model& model, std::span<const int> context,
                                  std::span<const int> query) {
    const int n_ctx = static_cast<int>(context.size());
    const int n_all = n_ctx + static_cast<int>(query.size());
    if (n_ctx < 1) throw ArgumentError("global_scoring: empty context");

    PotConfig big;
    big.capacity = n_all + 2;
    big.cap_len = 1;
    big.compressed_size = std::max(1, big.capacity - big.cap_len - 1);
    big.nuc_ratio = 0.0;
    big.chunk_size = 0;
    big.validate();
    MemoryPot pot(big, model.config);

    std::vector<int> all(context.begin(), context.end());
    all.insert(all.end(), query.begin(), query.end());
    std::vector<int> positions(static_cast<std::size_t>(n_all));
    std::vector<long long> origins(static_cast<std::size_t>(n_all));
    for (int i = 0; i < n_all; ++i) {
        positions[static_cast<std::size_t>(i)] = i;
        origins[static_cast<std::size_t>(i)] = i;
    }
    const ChunkOutput prefill = forward_chunk(model, pot, all, positions, origins);

    GlobalScore gs;
    gs.exact_novelty.resize(static_cast<std::size_t>(n_ctx));
    gs.exact_novelty[0] = 0.0;
    for (int t = 1; t < n_ctx; ++t) {
        gs.exact_novelty[static_cast<std::size_t>(t)] = cross_entropy_row(
            std::span<const float>(prefill.logits.row(t - 1), static_cast<std::size_t>(prefill.logits.cols)),
            all[static_cast<std::size_t>(t)]);
    }

    const float* last = prefill.logits.row(n_all - 1);
    gs.first_token = static_cast<int>(
        std::max_element(last, last + prefill.logits.cols) - last);

    AttnCapture capture;
    const int pos = n_all;
    const long long origin = n_all;
    forward_chunk(model, pot, std::span<const int>(&gs.first_token, 1), std::span<const int>(&pos, 1),
                  std::span<const long long>(&origin, 1), 0, &capture);

    gs.attention.resize(static_cast<std::size_t>(model.config.n_layers));
    for (int l = 0; l < model.config.n_layers; ++l) {
        auto& layer = gs.attention[static_cast<std::size_t>(l)];
        layer.resize(static_cast<std::size_t>(model.config.n_heads));
        for (int h = 0; h < model.config.n_heads; ++h) {
            const auto& row = capture.last_row[static_cast<std::size_t>(l)][static_cast<std::size_t>(h)];
            layer[static_cast<std::size_t>(h)].assign(row.begin(), row.begin() + n_ctx);
        }
    }
    return gs;
}

// Mean over heads of |retained ∩ oracle_topk| / |oracle_topk|.
inline double hit_rate(const std::vector<std::vector<long long>>& retained,
                       const std::vector<std::vector<long long>>& oracle_topk) {
    if (retained.size() != oracle_topk.size() || retained.empty())
        throw ArgumentError("hit_rate: per-head set counts must match");
    double total = 0.0;
    for (std::size_t h = 0; h < retained.size(); ++h) {
        std::vector<long long> a = retained[h];
        std::vector<long long> b = oracle_topk[h];
        std::sort(a.begin(), a.end());
        std::sort(b.begin(), b.end());
        std::vector<long long> inter;
        std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(inter));
        if (b.empty()) throw ArgumentError("hit_rate: empty oracle top-k set");
        total += static_cast<double>(inter.size()) / static_cast<double>(b.size());
    }
    return total / static_cast<double>(retained.size());
}

struct EntropySummary {
    std::vector<double> per_head;  // sum of exact novelty over each head's retained positions
    double ceiling = 0.0;          // sum of the global top-|C| novelty values
};

// Positions outside the novelty vector (query or generated tokens) do not
// contribute.
inline EntropySummary entropy_sum(const std::vector<std::vector<long long>>& retained,
                                  std::span<const double> novelty, int top_c) {
    EntropySummary s;
    s.per_head.reserve(retained.size());
    for (const auto& set : retained) {
        double acc = 0.0;
        for (long long pos : set) {
            if (pos >= 0 && pos < static_cast<long long>(novelty.size()))
                acc += novelty[static_cast<std::size_t>(pos)];
        }
        s.per_head.push_back(acc);
    }
    std::vector<double> sorted(novelty.begin(), novelty.end());
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    const int k = std::min<int>(top_c, static_cast<int>(sorted.size()));
    s.ceiling = std::accumulate(sorted.begin(), sorted.begin() + k, 0.0);
    return s;
}

// ---- independent naive dense path (cross-checks only) -----------------------
//
// A from-scratch double-precision forward that materializes every attention
// probability matrix. Deliberately separate from forward_chunk: own loops,
// own softmax, own rotation.

struct NaiveForward {
    std::vector<std::vector<double>> logits;                          // [n][vocab]
    std::vector<std::vector<std::vector<std::vector<double>>>> attn;  // [layer][head][row][col]
};

namespace naive_detail {

inline void rotate(std::vector<double>& v, int offset, int d, long long pos, double base) {
    for (int i = 0; i + 1 < d; i += 2) {
        const double angle = static_cast<double>(pos) * std::pow(base, -static_cast<double>(i) / d);
        const double c = std::cos(angle), s = std::sin(angle);
        const double x = v[static_cast<std::size_t>(offset + i)];
        const double y = v[static_cast<std::size_t>(offset + i + 1)];
        v[static_cast<std::size_t>(offset + i)] = x * c - y * s;
        v[static_cast<std::size_t>(offset + i + 1)] = x * s + y * c;
    }
}

inline std::vector<double> rms(const std::vector<double>& x, const std::vector<float>& g) {
    double ss = 0.0;
    for (double v : x) ss += v * v;
    const double scale = 1.0 / std::sqrt(ss / static_cast<double>(x.size()) + 1e-5);
    std::vector<double> y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * scale * static_cast<double>(g[i]);
    return y;
}

inline std::vector<double> mat(const std::vector<float>& w, const std::vector<double>& x, int out_d,
                               int in_d) {
    std::vector<double> y(static_cast<std::size_t>(out_d), 0.0);
    for (int o = 0; o < out_d; ++o) {
        double acc = 0.0;
        for (int i = 0; i < in_d; ++i)
            acc += static_cast<double>(w[static_cast<std::size_t>(o) * in_d + i]) * x[static_cast<std::size_t>(i)];
        y[static_cast<std::size_t>(o)] = acc;
    }
    return y;
}

}  // namespace naive_detail

inline NaiveForward naive_dense_forward(const Model& model, std::span<const int> tokens,
                                        std::span<const int> positions) {
    const ModelConfig& cfg = model.config;
    const int n = static_cast<int>(tokens.size());
    const int dm = cfg.d_model, dh = cfg.d_head, nh = cfg.n_heads;
    const double base = static_cast<double>(cfg.rope_base);

    std::vector<std::vector<double>> x(static_cast<std::size_t>(n));
    for (int t = 0; t < n; ++t) {
        x[static_cast<std::size_t>(t)].resize(static_cast<std::size_t>(dm));
        for (int d = 0; d < dm; ++d)
            x[static_cast<std::size_t>(t)][static_cast<std::size_t>(d)] = static_cast<double>(
                model.tok_embedding.data[static_cast<std::size_t>(tokens[t]) * dm + d]);
    }

    NaiveForward out;
    out.attn.resize(static_cast<std::size_t>(cfg.n_layers));

    for (int l = 0; l < cfg.n_layers; ++l) {
        const Model::Layer& lay = model.layers[static_cast<std::size_t>(l)];
        std::vector<std::vector<double>> q(static_cast<std::size_t>(n)), k(static_cast<std::size_t>(n)),
            v(static_cast<std::size_t>(n));
        for (int t = 0; t < n; ++t) {
            const auto xn = naive_detail::rms(x[static_cast<std::size_t>(t)], lay.attn_norm.data);
            q[static_cast<std::size_t>(t)] = naive_detail::mat(lay.wq.data, xn, dm, dm);
            k[static_cast<std::size_t>(t)] = naive_detail::mat(lay.wk.data, xn, dm, dm);
            v[static_cast<std::size_t>(t)] = naive_detail::mat(lay.wv.data, xn, dm, dm);
            for (int h = 0; h < nh; ++h) {
                naive_detail::rotate(q[static_cast<std::size_t>(t)], h * dh, dh, positions[t], base);
                naive_detail::rotate(k[static_cast<std::size_t>(t)], h * dh, dh, positions[t], base);
            }
        }

        auto& attn_l = out.attn[static_cast<std::size_t>(l)];
        attn_l.assign(static_cast<std::size_t>(nh),
                      std::vector<std::vector<double>>(static_cast<std::size_t>(n),
                                                       std::vector<double>(static_cast<std::size_t>(n), 0.0)));
        std::vector<std::vector<double>> attn_out(static_cast<std::size_t>(n),
                                                  std::vector<double>(static_cast<std::size_t>(dm), 0.0));
        for (int h = 0; h < nh; ++h) {
            for (int t = 0; t < n; ++t) {
                std::vector<double> scores(static_cast<std::size_t>(t + 1));
                for (int j = 0; j <= t; ++j) {
                    double acc = 0.0;
                    for (int d = 0; d < dh; ++d)
                        acc += q[static_cast<std::size_t>(t)][static_cast<std::size_t>(h * dh + d)] *
                               k[static_cast<std::size_t>(j)][static_cast<std::size_t>(h * dh + d)];
                    scores[static_cast<std::size_t>(j)] = acc / std::sqrt(static_cast<double>(dh));
                }
                double m = scores[0];
                for (double s : scores) m = std::max(m, s);
                double z = 0.0;
                for (double& s : scores) {
                    s = std::exp(s - m);
                    z += s;
                }
                for (int j = 0; j <= t; ++j) {
                    const double p = scores[static_cast<std::size_t>(j)] / z;
                    attn_l[static_cast<std::size_t>(h)][static_cast<std::size_t>(t)][static_cast<std::size_t>(j)] = p;
                    for (int d = 0; d < dh; ++d)
                        attn_out[static_cast<std::size_t>(t)][static_cast<std::size_t>(h * dh + d)] +=
                            p * v[static_cast<std::size_t>(j)][static_cast<std::size_t>(h * dh + d)];
                }
            }
        }

        for (int t = 0; t < n; ++t) {
            const auto proj = naive_detail::mat(lay.wo.data, attn_out[static_cast<std::size_t>(t)], dm, dm);
            for (int d = 0; d < dm; ++d) x[static_cast<std::size_t>(t)][static_cast<std::size_t>(d)] += proj[static_cast<std::size_t>(d)];
            const auto xn = naive_detail::rms(x[static_cast<std::size_t>(t)], lay.ffn_norm.data);
            auto hid = naive_detail::mat(lay.w_in.data, xn, cfg.d_ff, dm);
            for (double& hv : hid) hv = 0.5 * hv * (1.0 + std::erf(hv / std::sqrt(2.0)));
            const auto ff = naive_detail::mat(lay.w_out.data, hid, dm, cfg.d_ff);
            for (int d = 0; d < dm; ++d) x[static_cast<std::size_t>(t)][static_cast<std::size_t>(d)] += ff[static_cast<std::size_t>(d)];
        }
    }

    out.logits.resize(static_cast<std::size_t>(n));
    for (int t = 0; t < n; ++t) {
        const auto xf = naive_detail::rms(x[static_cast<std::size_t>(t)], model.final_norm.data);
        out.logits[static_cast<std::size_t>(t)] = naive_detail::mat(model.lm_head.data, xf, cfg.vocab_size, dm);
    }
    return out;
}

}  // namespace potkv
