// Command-line driver for the compression / memory-augmentation experiments.
//
// Every subcommand writes its tabular results as CSV under --out and appends
// one JSON line per run to <out>/run_log.jsonl. The process exits 0 only when
// every invariant assertion in the run passed.

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "vidmem/dataprep.hpp"
#include "vidmem/gradsuite.hpp"
#include "vidmem/harness.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace vidmem;

namespace {

struct GlobalOpts {
    std::string config_path;
    std::uint64_t seed = 0;
    std::string out_dir = "out";
};

json load_config(const std::string& path) {
    if (path.empty()) return json::object();
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file " + path);
    return json::parse(in);
}

// Overlay config-file keys (same names as PipelineConfig::to_json) onto the
// desk-scale defaults.
PipelineConfig pipeline_config(const json& j, std::uint64_t seed) {
    PipelineConfig cfg;
    cfg.seed = seed;
    auto get = [&](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key).template get<std::decay_t<decltype(field)>>();
    };
    get("frames", cfg.frames);
    get("raw_dim", cfg.raw_dim);
    get("d_model", cfg.d_model);
    get("num_heads", cfg.num_heads);
    get("memaug_blocks", cfg.memaug_blocks);
    get("decoder_layers", cfg.decoder_layers);
    get("mlp_mult", cfg.mlp_mult);
    get("lr", cfg.lr);
    get("batch_size", cfg.batch_size);
    get("train_steps", cfg.train_steps);
    get("eval_probes", cfg.eval_probes);
    get("enforce_needle_discarded", cfg.enforce_needle_discarded);
    get("question_hint", cfg.question_hint);
    get("spatial_ratio", cfg.forget.spatial_ratio);
    get("temporal_ratio", cfg.forget.temporal_ratio);
    get("min_frames", cfg.forget.min_frames);
    get("max_frames", cfg.forget.max_frames);
    get("k_neighbors", cfg.forget.k_neighbors);
    if (j.contains("grid")) {
        cfg.grid_h = j.at("grid").at(0).get<std::size_t>();
        cfg.grid_w = j.at("grid").at(1).get<std::size_t>();
    }
    if (j.contains("pool")) {
        cfg.pool_h = j.at("pool").at(0).get<std::size_t>();
        cfg.pool_w = j.at("pool").at(1).get<std::size_t>();
    }
    if (j.contains("spatial_strategy"))
        cfg.forget.spatial_strategy =
            spatial_strategy_from(j.at("spatial_strategy").get<std::string>());
    if (j.contains("temporal_strategy"))
        cfg.forget.temporal_strategy =
            temporal_strategy_from(j.at("temporal_strategy").get<std::string>());
    if (j.contains("memory_scale"))
        cfg.memory_scale = memory_scale_from(j.at("memory_scale").get<std::string>());
    cfg.forget.rng_seed = seed;
    return cfg;
}

void append_run_log(const GlobalOpts& g, const std::string& command, bool ok,
                    double wall_seconds, const json& details) {
    std::ofstream log(fs::path(g.out_dir) / "run_log.jsonl", std::ios::app);
    log << json{{"command", command},
                {"seed", g.seed},
                {"config_file", g.config_path},
                {"ok", ok},
                {"wall_seconds", wall_seconds},
                {"details", details}}
               .dump()
        << "\n";
}

// runs the body, logs it, and converts the pass/fail into the exit code
int run_command(const GlobalOpts& g, const std::string& name,
                const std::function<json()>& body) {
    fs::create_directories(g.out_dir);
    const auto t0 = std::chrono::steady_clock::now();
    bool ok = true;
    json details;
    try {
        details = body();
        if (details.contains("ok")) ok = details.at("ok").get<bool>();
    } catch (const std::exception& e) {
        ok = false;
        details = {{"error", e.what()}};
        std::cerr << name << ": " << e.what() << "\n";
    }
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    append_run_log(g, name, ok, wall, details);
    return ok ? 0 : 1;
}

void write_csv_rows(const std::string& path, const std::vector<std::string>& columns,
                    const std::vector<json>& rows) {
    ExperimentReport rep;
    rep.columns = columns;
    rep.rows = rows;
    rep.write_csv(path);
}

json cmd_gradcheck(const GlobalOpts& g, std::size_t num_seeds, double tol) {
    std::vector<json> rows;
    bool all_pass = true;
    for (std::size_t s = 0; s < num_seeds; ++s) {
        const std::uint64_t seed = g.seed + s;
        for (const SuiteCheck& c : run_grad_suite(seed, tol)) {
            all_pass = all_pass && c.report.pass;
            rows.push_back({{"seed", seed},
                            {"check", c.name},
                            {"max_error", c.report.max_error},
                            {"coords", c.report.coords_checked},
                            {"pass", c.report.pass}});
            std::cout << (c.report.pass ? "PASS" : "FAIL") << " seed=" << seed << " "
                      << c.name << " max_error=" << c.report.max_error << "\n";
        }
    }
    const std::string csv = (fs::path(g.out_dir) / "gradcheck.csv").string();
    write_csv_rows(csv, {"seed", "check", "max_error", "coords", "pass"}, rows);
    return {{"ok", all_pass}, {"csv", csv}, {"checks", rows.size()}};
}

json cmd_encode(const GlobalOpts& g, const json& cfg_json, std::size_t needle_frame,
                std::size_t marker) {
    const PipelineConfig cfg = pipeline_config(cfg_json, g.seed);
    if (needle_frame >= cfg.frames)
        throw std::runtime_error("needle frame out of range");
    std::mt19937_64 rng(g.seed);
    Projector proj(cfg.raw_dim, cfg.d_model, cfg.d_model, rng);
    Graph graph;
    FrameStream stream{cfg.frames, cfg.raw_dim, cfg.grid_h, cfg.grid_w, g.seed,
                       {{needle_frame, marker}}};
    FeatureSequence seq = encode_video(graph, stream, cfg.pool_h, cfg.pool_w, proj);
    if (!seq.tokens().all_finite()) throw std::runtime_error("non-finite features");

    // the probe reads the pooled (pre-projection) tokens
    const Tensor raw = synth_frames(stream);
    const std::size_t raw_tokens = cfg.grid_h * cfg.grid_w;
    std::vector<json> rows;
    for (std::size_t f = 0; f < cfg.frames; ++f) {
        const Tensor pooled = avg_pool_grid(
            Tensor({raw_tokens, cfg.raw_dim},
                   {raw.data.begin() + f * raw_tokens * cfg.raw_dim,
                    raw.data.begin() + (f + 1) * raw_tokens * cfg.raw_dim}),
            cfg.grid_h, cfg.grid_w, cfg.pool_h, cfg.pool_w);
        double norm = 0.0;
        for (double v : pooled.data) norm += v * v;
        rows.push_back({{"frame", f},
                        {"timestamp_s", seq.timestamps[f]},
                        {"pooled_norm", std::sqrt(norm)},
                        {"probe_marker", probe_marker(pooled.data.data(), cfg.raw_dim)}});
    }
    const bool probe_ok =
        rows[needle_frame].at("probe_marker").get<std::size_t>() == marker;
    const std::string csv = (fs::path(g.out_dir) / "encode.csv").string();
    write_csv_rows(csv, {"frame", "timestamp_s", "pooled_norm", "probe_marker"}, rows);
    std::cout << "encoded " << cfg.frames << " frames x " << seq.tokens_per_frame
              << " tokens, d_model=" << seq.d_model() << ", needle probe "
              << (probe_ok ? "recovered" : "LOST") << "\n";
    return {{"ok", probe_ok},
            {"csv", csv},
            {"frames", cfg.frames},
            {"tokens_per_frame", seq.tokens_per_frame}};
}

json cmd_compress(const GlobalOpts& g, const json& cfg_json, const std::string& video_id) {
    const PipelineConfig cfg = pipeline_config(cfg_json, g.seed);
    std::mt19937_64 rng(g.seed);
    Projector proj(cfg.raw_dim, cfg.d_model, cfg.d_model, rng);
    ToyDecoder dec(DecoderConfig{cfg.decoder_layers, cfg.num_heads, cfg.d_model,
                                 cfg.mlp_mult, vocab::kSize},
                   rng);
    Graph graph;
    FrameStream stream{cfg.frames, cfg.raw_dim, cfg.grid_h, cfg.grid_w, g.seed, {}};
    FeatureSequence seq = encode_video(graph, stream, cfg.pool_h, cfg.pool_w, proj);
    QuestionSequence q = embed_question(graph, {vocab::kQuestionMark}, dec.embedding);
    const ForgetResult fr = apply_forgetting(graph, seq, q, cfg.forget);

    // invariants of the plan
    bool ok = !fr.plan.kept_frames.empty() &&
              fr.plan.kept_frames.size() <= cfg.frames &&
              std::is_sorted(fr.plan.kept_frames.begin(), fr.plan.kept_frames.end());
    const std::size_t total = cfg.frames * seq.tokens_per_frame;
    const std::size_t kept = fr.plan.kept_frames.size() * fr.plan.kept_spatial.size();

    const std::string plan_path = (fs::path(g.out_dir) / "plan.jsonl").string();
    std::ofstream plan_out(plan_path);
    plan_out << plan_to_jsonl(fr.plan, video_id, g.seed) << "\n";

    std::vector<json> rows{{{"video_id", video_id},
                            {"frames_total", cfg.frames},
                            {"frames_kept", fr.plan.kept_frames.size()},
                            {"tokens_total", total},
                            {"tokens_kept", kept},
                            {"retention", double(kept) / double(total)},
                            {"provenance", fr.plan.provenance}}};
    const std::string csv = (fs::path(g.out_dir) / "compress.csv").string();
    write_csv_rows(csv,
                   {"video_id", "frames_total", "frames_kept", "tokens_total",
                    "tokens_kept", "retention", "provenance"},
                   rows);
    std::cout << "kept " << kept << "/" << total << " tokens ("
              << fr.plan.kept_frames.size() << " frames), plan -> " << plan_path << "\n";
    return {{"ok", ok}, {"csv", csv}, {"plan", plan_path}, {"tokens_kept", kept}};
}

json cmd_token_count(const GlobalOpts& g, std::vector<std::size_t> seconds,
                     std::size_t tokens_per_frame) {
    if (seconds.empty()) seconds = {20, 60, 128, 2000, 3000, 3600};
    std::vector<json> rows;
    bool ordering_ok = true;
    for (std::size_t t : seconds) {
        const std::size_t hour = token_count(TokenPolicy::HourLlava, t, tokens_per_frame);
        const std::size_t uni = token_count(TokenPolicy::Uniform64, t, tokens_per_frame);
        const std::size_t van = token_count(TokenPolicy::Vanilla1Fps, t, tokens_per_frame);
        ordering_ok = ordering_ok && hour <= van && uni <= van;
        rows.push_back({{"video_seconds", t},
                        {"hour_llava", hour},
                        {"uniform_64", uni},
                        {"vanilla_1fps", van}});
        std::cout << "T=" << t << "s  hour_llava=" << hour << "  uniform_64=" << uni
                  << "  vanilla_1fps=" << van << "\n";
    }
    const std::string csv = (fs::path(g.out_dir) / "token_count.csv").string();
    write_csv_rows(csv, {"video_seconds", "hour_llava", "uniform_64", "vanilla_1fps"},
                   rows);
    return {{"ok", ordering_ok}, {"csv", csv}};
}

json report_to_files(const GlobalOpts& g, const std::string& stem,
                     const ExperimentReport& rep) {
    const std::string csv = (fs::path(g.out_dir) / (stem + ".csv")).string();
    const std::string jsonl = (fs::path(g.out_dir) / (stem + ".jsonl")).string();
    rep.write_csv(csv);
    rep.write_jsonl(jsonl);
    for (const json& row : rep.rows) std::cout << row.dump() << "\n";
    std::cout << stem << " finished in " << rep.wall_seconds << "s -> " << csv << "\n";
    return {{"ok", true}, {"csv", csv}, {"jsonl", jsonl}, {"rows", rep.rows.size()}};
}

json cmd_needle(const GlobalOpts& g, const json& cfg_json,
                const std::vector<std::string>& scale_names, std::size_t trials) {
    const PipelineConfig base = pipeline_config(cfg_json, g.seed);
    std::vector<MemoryScale> scales;
    for (const std::string& s : scale_names) scales.push_back(memory_scale_from(s));
    if (scales.empty()) scales = {MemoryScale::Full, MemoryScale::DecayedOnly};
    std::vector<std::uint64_t> seeds;
    for (std::size_t t = 0; t < trials; ++t) seeds.push_back(g.seed + t);
    return report_to_files(g, "needle", run_needle(base, scales, seeds));
}

json cmd_compare(const GlobalOpts& g, const json& cfg_json) {
    const PipelineConfig base = pipeline_config(cfg_json, g.seed);
    return report_to_files(
        g, "compare",
        compare_strategies(base, {TemporalStrategy::Uniform, TemporalStrategy::Random,
                                  TemporalStrategy::Keyframe,
                                  TemporalStrategy::QuestionGuided}));
}

json cmd_sweep(const GlobalOpts& g, const json& cfg_json, std::vector<double> ratios) {
    const PipelineConfig base = pipeline_config(cfg_json, g.seed);
    if (ratios.empty()) ratios = {1.0, 0.5, 0.25, 0.125, 0.0625};
    return report_to_files(g, "sweep", ratio_sweep(base, ratios));
}

json validation_summary(const dataprep::ValidationReport& rep) {
    json reasons = json::object();
    for (const auto& [k, v] : rep.reject_reasons) reasons[k] = v;
    return {{"accepted", rep.accepted},
            {"rejected", rep.rejected},
            {"malformed_lines", rep.malformed_lines},
            {"reject_reasons", reasons}};
}

json cmd_pack(const GlobalOpts& g, const std::string& input) {
    const dataprep::ValidationReport rep = dataprep::validate_file(input);
    std::vector<dataprep::ConversationRecord> convs =
        dataprep::pack_conversations(rep.accepted_qa, dataprep::kMaxTurns, g.seed);

    std::size_t packed_turns = 0;
    for (const auto& c : convs) packed_turns += c.turns.size();
    if (packed_turns != rep.accepted_qa.size())
        throw std::runtime_error("pack: conversations do not partition the QA records");

    const std::string out_path = (fs::path(g.out_dir) / "conversations.jsonl").string();
    std::ofstream out(out_path);
    for (const auto& c : convs) out << c.to_json().dump() << "\n";

    std::vector<json> rows;
    for (const auto& [reason, n] : rep.reject_reasons)
        rows.push_back({{"reject_reason", reason}, {"count", n}});
    const std::string csv = (fs::path(g.out_dir) / "pack_rejects.csv").string();
    write_csv_rows(csv, {"reject_reason", "count"}, rows);

    json summary = validation_summary(rep);
    summary["conversations"] = convs.size();
    summary["ok"] = true;
    summary["output"] = out_path;
    std::cout << "accepted " << rep.accepted << ", rejected " << rep.rejected << " ("
              << rep.malformed_lines << " malformed), packed " << convs.size()
              << " conversations -> " << out_path << "\n";
    return summary;
}

json cmd_stats(const GlobalOpts& g, const std::string& input) {
    const dataprep::ValidationReport rep = dataprep::validate_file(input);
    const dataprep::DatasetStats st = dataprep::dataset_stats(rep.accepted_canonical);

    const std::string json_path = (fs::path(g.out_dir) / "stats.json").string();
    std::ofstream out(json_path);
    json doc = st.to_json();
    doc["validation"] = validation_summary(rep);
    out << doc.dump(2) << "\n";

    std::vector<json> rows;
    for (const auto& [task, n] : st.task_counts) {
        std::string topic;
        for (const auto& [t, tasks] : dataprep::kTasksByTopic)
            if (std::find(tasks.begin(), tasks.end(), task) != tasks.end()) topic = t;
        rows.push_back({{"topic", topic}, {"task", task}, {"count", n}});
    }
    const std::string csv = (fs::path(g.out_dir) / "stats_tasks.csv").string();
    write_csv_rows(csv, {"topic", "task", "count"}, rows);
    std::cout << doc.dump(2) << "\n";
    return {{"ok", true}, {"json", json_path}, {"csv", csv}};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"forgetting-based video token compression: experiment driver"};
    app.require_subcommand(1);

    GlobalOpts g;
    app.add_option("--config", g.config_path, "JSON config file overriding defaults");
    app.add_option("--seed", g.seed, "base RNG seed");
    app.add_option("--out", g.out_dir, "output directory (CSV + run log)");

    auto* sc_gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suite");
    std::size_t gc_seeds = 5;
    double gc_tol = 1e-4;
    sc_gradcheck->add_option("--seeds", gc_seeds, "number of seeds");
    sc_gradcheck->add_option("--tol", gc_tol, "tolerance");

    auto* sc_encode = app.add_subcommand("encode", "synthesize and encode a feature stream");
    std::size_t enc_needle = 0, enc_marker = 7;
    sc_encode->add_option("--needle-frame", enc_needle, "frame carrying the marker");
    sc_encode->add_option("--marker", enc_marker, "marker id (0..31)");

    auto* sc_compress = app.add_subcommand("compress", "emit a token selection plan");
    std::string video_id = "synthetic";
    sc_compress->add_option("--video-id", video_id, "id recorded in the plan");

    auto* sc_tokens = app.add_subcommand("token-count", "token budgets per input policy");
    std::vector<std::size_t> tc_seconds;
    std::size_t tc_tpf = 64;
    sc_tokens->add_option("--seconds", tc_seconds, "video durations in seconds");
    sc_tokens->add_option("--tokens-per-frame", tc_tpf, "raw tokens per frame");

    auto* sc_needle = app.add_subcommand("needle", "needle retrieval across memory scales");
    std::vector<std::string> needle_scales;
    std::size_t needle_trials = 1;
    sc_needle->add_option("--scales", needle_scales,
                          "memory scales (full half quarter decayed_only)");
    sc_needle->add_option("--trials", needle_trials, "seeds per scale");

    auto* sc_compare = app.add_subcommand("compare", "temporal strategies at equal budgets");

    auto* sc_sweep = app.add_subcommand("sweep", "accuracy/tokens across temporal ratios");
    std::vector<double> sweep_ratios;
    sc_sweep->add_option("--ratios", sweep_ratios, "temporal retention ratios");

    auto* sc_pack = app.add_subcommand("pack", "validate records and pack conversations");
    std::string pack_input;
    sc_pack->add_option("--input", pack_input, "JSONL record file")->required();

    auto* sc_stats = app.add_subcommand("stats", "dataset statistics from records");
    std::string stats_input;
    sc_stats->add_option("--input", stats_input, "JSONL record file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        const json cfg_json = load_config(g.config_path);
        if (sc_gradcheck->parsed())
            return run_command(g, "gradcheck", [&] { return cmd_gradcheck(g, gc_seeds, gc_tol); });
        if (sc_encode->parsed())
            return run_command(g, "encode",
                               [&] { return cmd_encode(g, cfg_json, enc_needle, enc_marker); });
        if (sc_compress->parsed())
            return run_command(g, "compress",
                               [&] { return cmd_compress(g, cfg_json, video_id); });
        if (sc_tokens->parsed())
            return run_command(g, "token-count",
                               [&] { return cmd_token_count(g, tc_seconds, tc_tpf); });
        if (sc_needle->parsed())
            return run_command(g, "needle", [&] {
                return cmd_needle(g, cfg_json, needle_scales, needle_trials);
            });
        if (sc_compare->parsed())
            return run_command(g, "compare", [&] { return cmd_compare(g, cfg_json); });
        if (sc_sweep->parsed())
            return run_command(g, "sweep", [&] { return cmd_sweep(g, cfg_json, sweep_ratios); });
        if (sc_pack->parsed())
            return run_command(g, "pack", [&] { return cmd_pack(g, pack_input); });
        if (sc_stats->parsed())
            return run_command(g, "stats", [&] { return cmd_stats(g, stats_input); });
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
