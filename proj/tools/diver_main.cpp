#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "diver/checkpoint.hpp"
#include "diver/config.hpp"
#include "diver/manifest.hpp"
#include "diver/pipeline.hpp"

namespace fs = std::filesystem;
using namespace diver;

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_flag;
    std::string from_distilled;
    int64_t seed_flag = -1;
    size_t threads = 1;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool with_from_distilled) {
    cmd->add_option("--config", args.config_path, "Config file (JSON, # comments allowed)");
    cmd->add_option("--seed", args.seed_flag, "Global seed override")->check(CLI::NonNegativeNumber);
    cmd->add_option("--out", args.out_flag,
                    "Output directory (default: config out_dir, then $DIVER_OUT, then ./out)");
    cmd->add_option("--threads", args.threads, "Worker threads for refinement")
        ->check(CLI::PositiveNumber);
    if (with_from_distilled)
        cmd->add_option("--from-distilled", args.from_distilled,
                        "Existing distilled dataset; skips gen-data and distill");
}

struct Run {
    RunConfig cfg;
    std::string out;
    std::string command; // replayable command line
    bool config_given = false;
    std::string config_path;
};

Run resolve(const std::string& cmd_name, const CommonArgs& args) {
    Run run;
    bool file_has_out = false;
    if (!args.config_path.empty()) {
        run.cfg = load_config(args.config_path);
        run.config_given = true;
        run.config_path = args.config_path;
        std::ifstream in(args.config_path, std::ios::binary);
        std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        file_has_out = parse_config_text(text).contains("out_dir");
    }
    if (args.seed_flag >= 0) run.cfg.seed = uint64_t(args.seed_flag);

    if (!args.out_flag.empty())
        run.out = args.out_flag;
    else if (file_has_out)
        run.out = run.cfg.out_dir;
    else if (const char* env = std::getenv("DIVER_OUT"); env != nullptr && env[0] != '\0')
        run.out = env;
    else
        run.out = run.cfg.out_dir;
    run.cfg.out_dir = run.out;

    run.command = "diver " + cmd_name;
    if (run.config_given) run.command += " --config " + run.config_path;
    run.command += " --seed " + std::to_string(run.cfg.seed);
    run.command += " --out " + run.out;
    if (args.threads != 1) run.command += " --threads " + std::to_string(args.threads);
    if (!args.from_distilled.empty()) run.command += " --from-distilled " + args.from_distilled;
    return run;
}

std::string artifact(const Run& run, const char* name) { return run.out + "/" + name; }

// Missing upstream artifacts name the command that produces them.
void require_artifact(const std::string& path, const char* producer) {
    if (!fs::exists(path))
        throw std::runtime_error("missing " + path + "; produce it with `diver " +
                                 std::string(producer) + "`");
}

Manifest start_manifest(const Run& run) {
    Manifest m;
    m.command = run.command;
    m.config = config_to_json(run.cfg);
    if (run.config_given) add_input(m, run.config_path);
    return m;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void cmd_gen_data(const Run& run) {
    auto t0 = std::chrono::steady_clock::now();
    fs::create_directories(run.out);
    Manifest m = start_manifest(run);
    auto [train, test] = make_splits(run.cfg);
    save(train, artifact(run, "train.bin"));
    save(test, artifact(run, "test.bin"));
    add_output(m, artifact(run, "train.bin"));
    add_output(m, artifact(run, "test.bin"));
    m.wall_seconds = seconds_since(t0);
    save_manifest(m, artifact(run, "gen-data.manifest.json"));
    std::printf("gen-data: %zu train / %zu test points (%zu classes, dim %zu) -> %s\n", train.n(),
                test.n(), size_t(train.num_classes), train.dim(), run.out.c_str());
}

void cmd_train_codec(const Run& run) {
    auto t0 = std::chrono::steady_clock::now();
    fs::create_directories(run.out);
    require_artifact(artifact(run, "train.bin"), "gen-data");
    Manifest m = start_manifest(run);
    add_input(m, artifact(run, "train.bin"));
    LabeledDataset train = load(artifact(run, "train.bin"));
    Codec codec = train_codec_stage(run.cfg, train);
    save_codec(artifact(run, "codec.ckpt"), codec);
    add_output(m, artifact(run, "codec.ckpt"));
    m.wall_seconds = seconds_since(t0);
    save_manifest(m, artifact(run, "train-codec.manifest.json"));
    std::printf("train-codec: mode=%s latent_dim=%zu final_mse=%.6f (%.1fs)\n",
                codec.identity ? "identity" : "learned", codec.latent_dim, codec.final_loss,
                m.wall_seconds);
}

void cmd_train_denoiser(const Run& run) {
    auto t0 = std::chrono::steady_clock::now();
    fs::create_directories(run.out);
    require_artifact(artifact(run, "train.bin"), "gen-data");
    require_artifact(artifact(run, "codec.ckpt"), "train-codec");
    Manifest m = start_manifest(run);
    add_input(m, artifact(run, "train.bin"));
    add_input(m, artifact(run, "codec.ckpt"));
    LabeledDataset train = load(artifact(run, "train.bin"));
    Codec codec = load_codec(artifact(run, "codec.ckpt"));
    EpsilonModel model = train_denoiser_stage(run.cfg, codec, train);
    save_denoiser(artifact(run, "denoiser.ckpt"), model);
    add_output(m, artifact(run, "denoiser.ckpt"));
    m.wall_seconds = seconds_since(t0);
    save_manifest(m, artifact(run, "train-denoiser.manifest.json"));
    double tail = 0.0;
    size_t k = std::min<size_t>(100, model.loss_trace.size());
    for (size_t i = model.loss_trace.size() - k; i < model.loss_trace.size(); ++i)
        tail += model.loss_trace[i];
    if (k > 0) tail /= double(k);
    std::printf("train-denoiser: %zu epochs, trailing-loss=%.4f (%.1fs)\n",
                model.loss_trace.size(), tail, m.wall_seconds);
}

void cmd_distill(const Run& run) {
    auto t0 = std::chrono::steady_clock::now();
    fs::create_directories(run.out);
    require_artifact(artifact(run, "train.bin"), "gen-data");
    Manifest m = start_manifest(run);
    add_input(m, artifact(run, "train.bin"));
    LabeledDataset train = load(artifact(run, "train.bin"));
    std::vector<double> trace;
    LabeledDataset distilled = distill_stage(run.cfg, train, &trace);
    save(distilled, artifact(run, "distilled.bin"));
    std::ofstream tr(artifact(run, "distill_trace.csv"), std::ios::binary);
    tr << "iteration,dm_loss\n";
    char buf[64];
    for (size_t i = 0; i < trace.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%zu,%.6f\n", i, trace[i]);
        tr << buf;
    }
    tr.close();
    add_output(m, artifact(run, "distilled.bin"));
    add_output(m, artifact(run, "distill_trace.csv"));
    m.wall_seconds = seconds_since(t0);
    save_manifest(m, artifact(run, "distill.manifest.json"));
    std::printf("distill: %zu points (ipc=%zu, hook=%s), dm_loss %.4f -> %.4f (%.1fs)\n",
                distilled.n(), run.cfg.distill.ipc, run.cfg.distill.hook ? "on" : "off",
                trace.empty() ? 0.0 : trace.front(), trace.empty() ? 0.0 : trace.back(),
                m.wall_seconds);
}

void cmd_refine(const Run& run, const CommonArgs& args) {
    auto t0 = std::chrono::steady_clock::now();
    fs::create_directories(run.out);
    std::string distilled_path =
        args.from_distilled.empty() ? artifact(run, "distilled.bin") : args.from_distilled;
    require_artifact(distilled_path, "distill");
    require_artifact(artifact(run, "codec.ckpt"), "train-codec");
    require_artifact(artifact(run, "denoiser.ckpt"), "train-denoiser");
    Manifest m = start_manifest(run);
    add_input(m, distilled_path);
    add_input(m, artifact(run, "codec.ckpt"));
    add_input(m, artifact(run, "denoiser.ckpt"));
    LabeledDataset distilled = load(distilled_path);
    Codec codec = load_codec(artifact(run, "codec.ckpt"));
    EpsilonModel model = load_denoiser(artifact(run, "denoiser.ckpt"));
    LabeledDataset refined = refine_stage(run.cfg, codec, model, distilled, args.threads);
    save(refined, artifact(run, "refined.bin"));
    add_output(m, artifact(run, "refined.bin"));
    m.wall_seconds = seconds_since(t0);
    save_manifest(m, artifact(run, "refine.manifest.json"));
    std::printf("refine: %zu points, t_f=%zu t_r=%zu window=[%zu,%zu] gamma=%g (%.1fs)\n",
                refined.n(), run.cfg.refine.t_f, run.cfg.refine.t_r, run.cfg.refine.t_l,
                run.cfg.refine.t_h, run.cfg.refine.gamma, m.wall_seconds);
}

void emit_eval_outputs(const Run& run, Manifest& m, const std::vector<EvalReport>& reports,
                       const std::vector<const LabeledDataset*>& candidates) {
    emit_report(reports, artifact(run, "report.csv"));
    add_output(m, artifact(run, "report.csv"));
    add_output(m, artifact(run, "report.csv.summary.txt"));
    for (const LabeledDataset* c : candidates) {
        std::string path = artifact(run, ("scatter_" + c->name + ".svg").c_str());
        emit_scatter(*c, path);
        add_output(m, path);
    }
    std::fputs(format_summary(reports).c_str(), stdout);
}

void cmd_evaluate(const Run& run) {
    auto t0 = std::chrono::steady_clock::now();
    fs::create_directories(run.out);
    require_artifact(artifact(run, "test.bin"), "gen-data");
    Manifest m = start_manifest(run);
    add_input(m, artifact(run, "test.bin"));
    LabeledDataset test = load(artifact(run, "test.bin"));

    std::vector<LabeledDataset> owned;
    owned.reserve(8);
    if (fs::exists(artifact(run, "train.bin"))) {
        add_input(m, artifact(run, "train.bin"));
        LabeledDataset train = load(artifact(run, "train.bin"));
        owned.push_back(coreset_stage(run.cfg, train));
    }
    bool have_distilled = fs::exists(artifact(run, "distilled.bin"));
    if (have_distilled) {
        add_input(m, artifact(run, "distilled.bin"));
        owned.push_back(load(artifact(run, "distilled.bin")));
        if (fs::exists(artifact(run, "codec.ckpt"))) {
            add_input(m, artifact(run, "codec.ckpt"));
            Codec codec = load_codec(artifact(run, "codec.ckpt"));
            owned.push_back(recon_stage(codec, owned.back()));
        }
    }
    if (fs::exists(artifact(run, "refined.bin"))) {
        add_input(m, artifact(run, "refined.bin"));
        owned.push_back(load(artifact(run, "refined.bin")));
    }
    if (owned.empty()) require_artifact(artifact(run, "distilled.bin"), "distill");

    std::vector<const LabeledDataset*> candidates;
    for (const LabeledDataset& d : owned) candidates.push_back(&d);
    std::vector<EvalReport> reports = evaluate_stage(run.cfg, candidates, test);
    emit_eval_outputs(run, m, reports, candidates);
    m.wall_seconds = seconds_since(t0);
    save_manifest(m, artifact(run, "evaluate.manifest.json"));
}

void cmd_pipeline(const Run& run, const CommonArgs& args) {
    auto t0 = std::chrono::steady_clock::now();
    fs::create_directories(run.out);
    Manifest m = start_manifest(run);
    PipelineResult r;

    if (args.from_distilled.empty()) {
        r = run_pipeline(run.cfg, args.threads);
        save(r.train, artifact(run, "train.bin"));
        save(r.test, artifact(run, "test.bin"));
        save_codec(artifact(run, "codec.ckpt"), r.codec);
        save_denoiser(artifact(run, "denoiser.ckpt"), r.denoiser);
        save(r.distilled, artifact(run, "distilled.bin"));
        for (const char* name : {"train.bin", "test.bin", "codec.ckpt", "denoiser.ckpt",
                                 "distilled.bin"})
            add_output(m, artifact(run, name));
    } else {
        // Stage I provided: reuse on-disk artifacts where present, train the
        // rest, and go straight to refinement.
        require_artifact(args.from_distilled, "distill");
        add_input(m, args.from_distilled);
        r.distilled = load(args.from_distilled);
        if (fs::exists(artifact(run, "train.bin")) && fs::exists(artifact(run, "test.bin"))) {
            add_input(m, artifact(run, "train.bin"));
            add_input(m, artifact(run, "test.bin"));
            r.train = load(artifact(run, "train.bin"));
            r.test = load(artifact(run, "test.bin"));
        } else {
            std::tie(r.train, r.test) = make_splits(run.cfg);
        }
        if (fs::exists(artifact(run, "codec.ckpt"))) {
            add_input(m, artifact(run, "codec.ckpt"));
            r.codec = load_codec(artifact(run, "codec.ckpt"));
        } else {
            r.codec = train_codec_stage(run.cfg, r.train);
            save_codec(artifact(run, "codec.ckpt"), r.codec);
            add_output(m, artifact(run, "codec.ckpt"));
        }
        if (fs::exists(artifact(run, "denoiser.ckpt"))) {
            add_input(m, artifact(run, "denoiser.ckpt"));
            r.denoiser = load_denoiser(artifact(run, "denoiser.ckpt"));
        } else {
            r.denoiser = train_denoiser_stage(run.cfg, r.codec, r.train);
            save_denoiser(artifact(run, "denoiser.ckpt"), r.denoiser);
            add_output(m, artifact(run, "denoiser.ckpt"));
        }
        r.coreset = coreset_stage(run.cfg, r.train);
        r.recon = recon_stage(r.codec, r.distilled);
        r.refined = refine_stage(run.cfg, r.codec, r.denoiser, r.distilled, args.threads);
        r.reports = evaluate_stage(run.cfg, {&r.coreset, &r.distilled, &r.recon, &r.refined},
                                   r.test);
    }

    save(r.recon, artifact(run, "reconstructed.bin"));
    save(r.refined, artifact(run, "refined.bin"));
    add_output(m, artifact(run, "reconstructed.bin"));
    add_output(m, artifact(run, "refined.bin"));
    std::vector<const LabeledDataset*> candidates = {&r.coreset, &r.distilled, &r.recon,
                                                     &r.refined};
    emit_eval_outputs(run, m, r.reports, candidates);
    m.wall_seconds = seconds_since(t0);
    save_manifest(m, artifact(run, "pipeline.manifest.json"));
    std::printf("pipeline: done in %.1fs -> %s\n", m.wall_seconds, run.out.c_str());
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Dual-stage dataset distillation: distribution-matching distillation plus "
                 "diffusion-based refinement and cross-architecture evaluation"};
    app.require_subcommand(1);

    struct Sub {
        CLI::App* cmd;
        CommonArgs args;
    };
    Sub subs[7];
    const char* names[7] = {"gen-data", "train-codec", "train-denoiser", "distill",
                            "refine",   "evaluate",    "pipeline"};
    const char* descs[7] = {
        "Generate the dataset and write train/test splits",
        "Train (or construct) the encoder/decoder pair",
        "Train the conditional noise predictor on codec latents",
        "Stage I: optimize a distilled dataset by distribution matching",
        "Stage II: refine the distilled dataset through guided reverse diffusion",
        "Train the classifier zoo on candidate datasets and report accuracies",
        "Run every stage end to end and emit the comparison report"};
    for (int i = 0; i < 7; ++i) {
        subs[i].cmd = app.add_subcommand(names[i], descs[i]);
        bool from_distilled = std::string(names[i]) == "refine" ||
                              std::string(names[i]) == "pipeline";
        add_common(subs[i].cmd, subs[i].args, from_distilled);
    }

    CLI11_PARSE(app, argc, argv);

    try {
        for (int i = 0; i < 7; ++i) {
            if (!subs[i].cmd->parsed()) continue;
            Run run = resolve(names[i], subs[i].args);
            switch (i) {
                case 0: cmd_gen_data(run); break;
                case 1: cmd_train_codec(run); break;
                case 2: cmd_train_denoiser(run); break;
                case 3: cmd_distill(run); break;
                case 4: cmd_refine(run, subs[i].args); break;
                case 5: cmd_evaluate(run); break;
                case 6: cmd_pipeline(run, subs[i].args); break;
            }
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
