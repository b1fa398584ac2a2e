// potkv command-line front door: weight management, runs, analyses.

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "potkv/analysis.hpp"
#include "potkv/bench.hpp"
#include "potkv/ccd.hpp"
#include "potkv/runconfig.hpp"
#include "potkv/weights_io.hpp"

namespace {

namespace fs = std::filesystem;
using potkv::RunConfig;
using potkv::RunMetrics;

std::string out_path(const RunConfig& rc, const std::string& name) {
    fs::create_directories(rc.out_dir);
    return (fs::path(rc.out_dir) / name).string();
}

// Drives one engine over the configured stream; returns metrics plus the
// engine for follow-up inspection.
struct StreamRun {
    std::unique_ptr<potkv::StreamEngine> engine;
    RunMetrics metrics;
    std::vector<int> stream;
};

StreamRun run_stream_task(const potkv::Model& model, const RunConfig& rc) {
    const auto t0 = std::chrono::steady_clock::now();
    StreamRun run;
    run.stream = potkv::load_stream(rc, model.config.vocab_size);
    const potkv::CatalystPrompt cap = potkv::build_cap_from_config(rc.pot);
    run.engine = potkv::make_engine(model, rc.pot, rc.policy, cap);
    if (rc.policy.kind == potkv::PolicyKind::Truncate) {
        const auto keep =
            potkv::truncate_keep_indices(static_cast<long long>(run.stream.size()), rc.policy.budget);
        std::vector<int> sliced;
        sliced.reserve(keep.size());
        for (int idx : keep) sliced.push_back(run.stream[static_cast<std::size_t>(idx)]);
        run.engine->consume(sliced);
    } else {
        run.engine->consume(run.stream);
    }
    const potkv::MemoryPot& pot = run.engine->pot();
    run.metrics.policy = potkv::policy_name(rc.policy.kind);
    run.metrics.context_len = static_cast<long long>(run.stream.size());
    run.metrics.seed = rc.seeds.front();
    run.metrics.cycles = pot.cycle_counter();
    run.metrics.rope_recomputes = pot.rope_recompute_counter();
    run.metrics.peak_occ = pot.peak_occupancy();
    run.metrics.ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return run;
}

void write_reports(const RunConfig& rc, const potkv::StreamEngine& engine) {
    if (const auto* reports = engine.distill_reports()) {
        std::string body;
        for (const auto& r : *reports) {
            body += r.to_json().dump();
            body += '\n';
        }
        potkv::write_file_atomic(out_path(rc, "reports.jsonl"), body);
    }
}

int task_consume(const potkv::Model& model, const RunConfig& rc) {
    StreamRun run = run_stream_task(model, rc);
    potkv::write_metrics_jsonl({&run.metrics, 1}, out_path(rc, "metrics.jsonl"));
    potkv::write_metrics_csv({&run.metrics, 1}, out_path(rc, "metrics.csv"));
    write_reports(rc, *run.engine);
    std::cout << "consumed " << run.stream.size() << " tokens, cycles=" << run.metrics.cycles
              << ", peak_occ=" << run.metrics.peak_occ << "\n";
    return 0;
}

int task_generate(const potkv::Model& model, const RunConfig& rc) {
    StreamRun run = run_stream_task(model, rc);
    const auto ids = run.engine->generate(rc.max_new);
    const potkv::MemoryPot& pot = run.engine->pot();
    run.metrics.cycles = pot.cycle_counter();
    run.metrics.rope_recomputes = pot.rope_recompute_counter();
    run.metrics.peak_occ = pot.peak_occupancy();
    potkv::write_metrics_jsonl({&run.metrics, 1}, out_path(rc, "metrics.jsonl"));
    potkv::write_metrics_csv({&run.metrics, 1}, out_path(rc, "metrics.csv"));
    write_reports(rc, *run.engine);
    std::string id_lines;
    for (int id : ids) id_lines += std::to_string(id) + "\n";
    potkv::write_file_atomic(out_path(rc, "generated_ids.txt"), id_lines);
    potkv::write_file_atomic(out_path(rc, "generated.txt"), potkv::decode_bytes(ids));
    std::cout << "generated " << ids.size() << " tokens\n";
    return 0;
}

int task_nih(const potkv::Model& model, const RunConfig& rc) {
    potkv::BenchGrid grid;
    grid.policies = rc.policies;
    grid.lengths = rc.nih_lengths;
    grid.depths = rc.nih_depths;
    grid.seeds = rc.seeds;
    grid.passkey = rc.nih_passkey;
    grid.query_text = rc.nih_query;
    grid.max_new = rc.max_new;
    grid.threads = rc.threads;
    const auto metrics = potkv::run_benchmark(model, rc.pot, grid);
    potkv::write_metrics_jsonl(metrics, out_path(rc, "metrics.jsonl"));
    potkv::write_metrics_csv(metrics, out_path(rc, "metrics.csv"));
    std::cout << "wrote " << metrics.size() << " benchmark cells\n";
    return 0;
}

int task_hitrate(const potkv::Model& model, const RunConfig& rc) {
    potkv::HitrateParams params;
    params.policies = rc.policies;
    params.length = rc.hitrate_length;
    params.seeds = rc.seeds;
    params.layer = rc.hitrate_layer;
    params.top_k = rc.hitrate_top_k;
    const nlohmann::json analysis = potkv::hitrate_analysis(model, rc.pot, params);
    potkv::write_file_atomic(out_path(rc, "analysis.json"), analysis.dump(2) + "\n");
    std::cout << "wrote hit-rate analysis for " << params.policies.size() << " policies\n";
    return 0;
}

int dispatch(const RunConfig& rc) {
    const potkv::Model model = potkv::load_model(rc);
    if (rc.task == "consume") return task_consume(model, rc);
    if (rc.task == "generate") return task_generate(model, rc);
    if (rc.task == "nih") return task_nih(model, rc);
    if (rc.task == "hitrate") return task_hitrate(model, rc);
    throw potkv::ConfigError("task: unknown task '" + rc.task + "'");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"potkv: memory-bounded KV-cache control engine and benchmark harness"};
    app.require_subcommand(1);

    // gen-weights
    auto* gen = app.add_subcommand("gen-weights", "Initialize a model and write an MPKV1 weight file");
    potkv::ModelConfig mc;
    std::string gen_out;
    std::uint64_t gen_seed = 0;
    gen->add_option("--layers", mc.n_layers, "decoder layers");
    gen->add_option("--heads", mc.n_heads, "attention heads");
    gen->add_option("--d-model", mc.d_model, "model width");
    gen->add_option("--d-ff", mc.d_ff, "feed-forward width");
    gen->add_option("--vocab", mc.vocab_size, "vocabulary size");
    gen->add_option("--rope-base", mc.rope_base, "rotary base");
    gen->add_option("--seed", gen_seed, "init seed");
    gen->add_option("--out", gen_out, "output path")->required();

    // run + aliases
    std::string config_path, override_task, override_out;
    bool dry_run = false;
    int override_threads = -1;
    auto add_run_opts = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "JSON run config")->required();
        cmd->add_flag("--dry-run", dry_run, "validate the config and exit");
        cmd->add_option("--out-dir", override_out, "override io.out_dir");
        cmd->add_option("--threads", override_threads, "override worker count");
    };
    auto* run = app.add_subcommand("run", "Execute the task named in the config");
    add_run_opts(run);
    run->add_option("--task", override_task, "override the config task");
    auto* hit = app.add_subcommand("hitrate", "Hit-rate analysis against the unconstrained oracle");
    add_run_opts(hit);
    auto* nih = app.add_subcommand("nih", "Needle-in-a-haystack benchmark grid");
    add_run_opts(nih);
    auto* snap = app.add_subcommand("snapshot-pot", "Consume the stream and dump the pot state");
    add_run_opts(snap);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;  // usage error
    }

    try {
        if (gen->parsed()) {
            mc.d_head = mc.d_model / std::max(1, mc.n_heads);
            mc.init_seed = gen_seed;
            mc.validate();
            const potkv::Model model = potkv::init_model(mc);
            potkv::save_weights(model, gen_out);
            std::cout << "wrote " << gen_out << "\n";
            return 0;
        }

        RunConfig rc = potkv::load_run_config(config_path);
        if (!override_out.empty()) rc.out_dir = override_out;
        if (override_threads >= 0) rc.threads = override_threads;
        if (run->parsed() && !override_task.empty()) rc.task = override_task;
        if (hit->parsed()) rc.task = "hitrate";
        if (nih->parsed()) rc.task = "nih";

        if (dry_run) {
            std::cout << "config ok: task=" << rc.task << "\n";
            return 0;
        }
        if (snap->parsed()) {
            const potkv::Model model = potkv::load_model(rc);
            StreamRun sr = run_stream_task(model, rc);
            potkv::write_file_atomic(out_path(rc, "snapshot.json"),
                                     sr.engine->pot().snapshot().dump(2) + "\n");
            std::cout << "wrote pot snapshot\n";
            return 0;
        }
        return dispatch(rc);
    } catch (const potkv::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
