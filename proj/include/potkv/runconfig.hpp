#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "potkv/analysis.hpp"
#include "potkv/bench.hpp"
#include "potkv/config.hpp"
#include "potkv/error.hpp"
#include "potkv/model.hpp"
#include "potkv/policies.hpp"
#include "potkv/weights_io.hpp"

namespace potkv {

// One JSON document describes a run; flags may override individual fields.
// See README for the schema.
struct RunConfig {
    std::optional<ModelConfig> model_config;  // either inline config ...
    std::string weights_path;                 // ... or an MPKV1 file
    PotConfig pot;
    PolicySpec policy;
    std::vector<PolicySpec> policies;  // grid tasks; defaults to {policy}
    std::string task = "consume";      // consume | generate | nih | hitrate
    std::string out_dir = ".";
    std::string stream_file;           // decimal token ids, one per line
    std::string text_file;             // raw bytes, BOS-prefixed on load
    std::vector<std::uint64_t> seeds{0};
    int threads = 0;

    // nih grid
    std::vector<long long> nih_lengths{512};
    std::vector<double> nih_depths{0.1, 0.5, 0.9};
    std::string nih_passkey = "48215";
    std::string nih_query = "What is the secret passkey?";
    int max_new = 48;

    // hitrate
    long long hitrate_length = 0;
    int hitrate_layer = std::numeric_limits<int>::min();
    int hitrate_top_k = 0;
};

namespace cfg_detail {

template <class T>
T field(const nlohmann::json& j, const std::string& section, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(section + "." + key + ": wrong type");
    }
}

inline PolicySpec parse_policy(const nlohmann::json& j, const std::string& section) {
    PolicySpec p;
    p.kind = policy_from_name(field<std::string>(j, section, "kind", "ccd"));
    p.budget = field<int>(j, section, "budget", 0);
    p.sink_count = field<int>(j, section, "sink_count", 4);
    p.heavy_count = field<int>(j, section, "heavy_count", 4);
    p.seed = field<std::uint64_t>(j, section, "seed", 0);
    return p;
}

}  // namespace cfg_detail

inline RunConfig parse_run_config(const nlohmann::json& j) {
    using cfg_detail::field;
    RunConfig rc;

    if (!j.contains("model")) throw ConfigError("model: section is required");
    const auto& jm = j.at("model");
    if (jm.contains("weights")) {
        rc.weights_path = jm.at("weights").get<std::string>();
    } else {
        ModelConfig mc;
        mc.n_layers = field<int>(jm, "model", "n_layers", mc.n_layers);
        mc.n_heads = field<int>(jm, "model", "n_heads", mc.n_heads);
        mc.d_model = field<int>(jm, "model", "d_model", mc.d_model);
        mc.d_head = field<int>(jm, "model", "d_head", mc.d_model / std::max(1, mc.n_heads));
        mc.d_ff = field<int>(jm, "model", "d_ff", mc.d_ff);
        mc.vocab_size = field<int>(jm, "model", "vocab_size", mc.vocab_size);
        mc.rope_base = field<float>(jm, "model", "rope_base", mc.rope_base);
        mc.init_seed = field<std::uint64_t>(jm, "model", "init_seed", mc.init_seed);
        mc.validate();
        rc.model_config = mc;
    }

    if (!j.contains("pot")) throw ConfigError("pot: section is required");
    const auto& jp = j.at("pot");
    rc.pot.capacity = field<int>(jp, "pot", "capacity", rc.pot.capacity);
    rc.pot.compressed_size = field<int>(jp, "pot", "compressed_size", rc.pot.compressed_size);
    rc.pot.cap_len = field<int>(jp, "pot", "cap_len", rc.pot.cap_len);
    rc.pot.nuc_ratio = field<double>(jp, "pot", "nuc_ratio", rc.pot.nuc_ratio);
    rc.pot.chunk_size = field<int>(jp, "pot", "chunk_size", rc.pot.chunk_size);
    rc.pot.cap_preset = cap_preset_from_name(field<std::string>(jp, "pot", "cap_preset", "G"));
    rc.pot.cap_payload = field<std::string>(jp, "pot", "cap_payload", "");
    rc.pot.validate();

    if (j.contains("policy")) rc.policy = cfg_detail::parse_policy(j.at("policy"), "policy");
    if (rc.policy.kind != PolicyKind::Ccd && rc.policy.budget == 0)
        rc.policy.budget = rc.pot.intake_window();
    rc.policy.validate(rc.pot);

    if (j.contains("policies")) {
        for (const auto& jpol : j.at("policies")) {
            PolicySpec p = cfg_detail::parse_policy(jpol, "policies[]");
            if (p.kind != PolicyKind::Ccd && p.budget == 0) p.budget = rc.pot.intake_window();
            p.validate(rc.pot);
            rc.policies.push_back(p);
        }
    }
    if (rc.policies.empty() && j.contains("policies") == false) rc.policies = {rc.policy};

    rc.task = field<std::string>(j, "run", "task", rc.task);
    if (rc.task != "consume" && rc.task != "generate" && rc.task != "nih" && rc.task != "hitrate")
        throw ConfigError("task: must be one of consume|generate|nih|hitrate (got '" + rc.task + "')");

    if (j.contains("io")) {
        const auto& ji = j.at("io");
        rc.out_dir = field<std::string>(ji, "io", "out_dir", rc.out_dir);
        rc.stream_file = field<std::string>(ji, "io", "stream_file", "");
        rc.text_file = field<std::string>(ji, "io", "text_file", "");
    }
    if (j.contains("seeds")) {
        rc.seeds.clear();
        for (const auto& s : j.at("seeds")) rc.seeds.push_back(s.get<std::uint64_t>());
        if (rc.seeds.empty()) throw ConfigError("seeds: must be non-empty");
    }
    rc.threads = field<int>(j, "run", "threads", 0);
    rc.max_new = field<int>(j, "run", "max_new", rc.max_new);

    if (j.contains("nih")) {
        const auto& jn = j.at("nih");
        if (jn.contains("lengths")) {
            rc.nih_lengths.clear();
            for (const auto& v : jn.at("lengths")) rc.nih_lengths.push_back(v.get<long long>());
        }
        if (jn.contains("depths")) {
            rc.nih_depths.clear();
            for (const auto& v : jn.at("depths")) rc.nih_depths.push_back(v.get<double>());
        }
        rc.nih_passkey = field<std::string>(jn, "nih", "passkey", rc.nih_passkey);
        rc.nih_query = field<std::string>(jn, "nih", "query", rc.nih_query);
        rc.max_new = field<int>(jn, "nih", "max_new", rc.max_new);
    }
    if (j.contains("hitrate")) {
        const auto& jh = j.at("hitrate");
        rc.hitrate_length = field<long long>(jh, "hitrate", "length", 0);
        if (jh.contains("layer")) rc.hitrate_layer = jh.at("layer").get<int>();
        rc.hitrate_top_k = field<int>(jh, "hitrate", "top_k", 0);
    }
    return rc;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("config: cannot open '" + path + "'");
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("config: invalid JSON in '" + path + "': " + e.what());
    }
    return parse_run_config(j);
}

inline Model load_model(const RunConfig& rc) {
    if (!rc.weights_path.empty()) {
        if (!std::filesystem::exists(rc.weights_path))
            throw ConfigError("model.weights: file '" + rc.weights_path + "' does not exist");
        return load_weights(rc.weights_path);
    }
    return init_model(*rc.model_config);
}

// Token stream for consume/generate tasks: an explicit id file, a text file
// (BOS-prefixed bytes), or a seeded random stream as fallback.
inline std::vector<int> load_stream(const RunConfig& rc, int vocab_size) {
    if (!rc.stream_file.empty()) {
        std::ifstream is(rc.stream_file);
        if (!is) throw ConfigError("io.stream_file: cannot open '" + rc.stream_file + "'");
        std::vector<int> ids;
        long long v;
        while (is >> v) {
            if (v < 0 || v >= vocab_size)
                throw FormatError("io.stream_file: token id " + std::to_string(v) + " outside vocab");
            ids.push_back(static_cast<int>(v));
        }
        if (ids.empty()) throw FormatError("io.stream_file: no token ids in '" + rc.stream_file + "'");
        return ids;
    }
    if (!rc.text_file.empty()) {
        std::ifstream is(rc.text_file, std::ios::binary);
        if (!is) throw ConfigError("io.text_file: cannot open '" + rc.text_file + "'");
        std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
        return encode_stream(text);
    }
    return random_stream(4LL * rc.pot.intake_window(), rc.seeds.front());
}

}  // namespace potkv
