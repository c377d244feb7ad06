#include "diver/pipeline.hpp"

#include <chrono>
#include <stdexcept>

namespace diver {

std::pair<LabeledDataset, LabeledDataset> make_splits(const RunConfig& cfg) {
    LabeledDataset full = generate(data_spec(cfg));
    auto [train, test] = split(full, cfg.data.train_fraction, stage_seed(cfg, Stage::Split));
    train.name = "train";
    test.name = "test";
    return {std::move(train), std::move(test)};
}

NoiseSchedule schedule_from(const RunConfig& cfg) {
    return make_schedule(int(cfg.schedule.num_train_steps), cfg.schedule.beta_start,
                         cfg.schedule.beta_end, cfg.refine.eta);
}

StepGrid grid_from(const RunConfig& cfg) {
    return make_grid(schedule_from(cfg), int(cfg.schedule.num_sample_steps));
}

Codec train_codec_stage(const RunConfig& cfg, const LabeledDataset& train) {
    if (cfg.codec.mode == "identity") return make_identity_codec(train.dim());
    return train_codec(train, cfg.codec.latent_dim, cfg.codec.epochs, cfg.codec.lr,
                       stage_seed(cfg, Stage::Codec));
}

EpsilonModel train_denoiser_stage(const RunConfig& cfg, const Codec& codec,
                                  const LabeledDataset& train) {
    Matrix latents = encode(codec, train.features);
    DenoiserTrainConfig dc;
    dc.epochs = cfg.denoiser.epochs;
    dc.batch_size = cfg.denoiser.batch_size;
    dc.lr = cfg.denoiser.lr;
    dc.null_drop_prob = cfg.denoiser.null_drop_prob;
    dc.seed = stage_seed(cfg, Stage::Denoiser);
    return train_denoiser(latents, train.labels, schedule_from(cfg), grid_from(cfg), dc);
}

LabeledDataset distill_stage(const RunConfig& cfg, const LabeledDataset& train,
                             std::vector<double>* trace) {
    LabeledDataset d = distill(train, distill_config(cfg), trace);
    d.name = "distilled";
    return d;
}

LabeledDataset coreset_stage(const RunConfig& cfg, const LabeledDataset& train) {
    DistillConfig dc = distill_config(cfg);
    dc.iterations = 0;
    dc.hook = false;
    dc.init = DistillInit::RandomReal;
    LabeledDataset c = distill(train, dc);
    c.name = "random";
    return c;
}

LabeledDataset recon_stage(const Codec& codec, const LabeledDataset& distilled) {
    LabeledDataset r = distilled;
    r.features = decode(codec, encode(codec, distilled.features));
    r.name = "reconstructed";
    return r;
}

LabeledDataset refine_stage(const RunConfig& cfg, const Codec& codec, const EpsilonModel& model,
                            const LabeledDataset& distilled, size_t threads) {
    return refine_dataset(distilled, codec, model, schedule_from(cfg), grid_from(cfg),
                          refine_config(cfg), threads);
}

std::vector<EvalReport> evaluate_stage(const RunConfig& cfg,
                                       const std::vector<const LabeledDataset*>& candidates,
                                       const LabeledDataset& test) {
    std::vector<ArchSpec> zoo = default_zoo();
    uint64_t seed = stage_seed(cfg, Stage::Evaluate);
    std::vector<EvalReport> reports;
    for (const LabeledDataset* c : candidates)
        reports.push_back(evaluate_dataset(*c, test, zoo, cfg.evaluate.trials, seed));
    return reports;
}

PipelineResult run_pipeline(const RunConfig& cfg, size_t threads) {
    auto t0 = std::chrono::steady_clock::now();
    PipelineResult r;
    std::tie(r.train, r.test) = make_splits(cfg);
    r.codec = train_codec_stage(cfg, r.train);
    r.denoiser = train_denoiser_stage(cfg, r.codec, r.train);
    r.distilled = distill_stage(cfg, r.train);
    r.coreset = coreset_stage(cfg, r.train);
    r.recon = recon_stage(r.codec, r.distilled);
    r.refined = refine_stage(cfg, r.codec, r.denoiser, r.distilled, threads);
    r.reports = evaluate_stage(cfg, {&r.coreset, &r.distilled, &r.recon, &r.refined}, r.test);
    r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

} // namespace diver
