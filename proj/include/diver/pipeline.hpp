#pragma once
#include <utility>
#include <vector>

#include "diver/codec.hpp"
#include "diver/config.hpp"
#include "diver/dataset.hpp"
#include "diver/denoiser.hpp"
#include "diver/evaluate.hpp"
#include "diver/refine.hpp"
#include "diver/schedule.hpp"

namespace diver {

// Stage helpers shared by the CLI commands and the end-to-end runner. Each
// derives its seed from the config (see stage_seed) so identical configs give
// identical artifacts.
std::pair<LabeledDataset, LabeledDataset> make_splits(const RunConfig& cfg);
NoiseSchedule schedule_from(const RunConfig& cfg);
StepGrid grid_from(const RunConfig& cfg);
Codec train_codec_stage(const RunConfig& cfg, const LabeledDataset& train);
EpsilonModel train_denoiser_stage(const RunConfig& cfg, const Codec& codec,
                                  const LabeledDataset& train);
LabeledDataset distill_stage(const RunConfig& cfg, const LabeledDataset& train,
                             std::vector<double>* trace = nullptr);
// The matching no-optimization baseline: a seeded stratified random coreset.
LabeledDataset coreset_stage(const RunConfig& cfg, const LabeledDataset& train);
LabeledDataset recon_stage(const Codec& codec, const LabeledDataset& distilled);
LabeledDataset refine_stage(const RunConfig& cfg, const Codec& codec, const EpsilonModel& model,
                            const LabeledDataset& distilled, size_t threads = 1);
std::vector<EvalReport> evaluate_stage(const RunConfig& cfg,
                                       const std::vector<const LabeledDataset*>& candidates,
                                       const LabeledDataset& test);

struct PipelineResult {
    LabeledDataset train, test;
    Codec codec;
    EpsilonModel denoiser;
    LabeledDataset coreset, distilled, recon, refined;
    std::vector<EvalReport> reports; // rows: random, distilled, reconstructed, refined
    double wall_seconds = 0.0;
};

// Full run: data -> codec -> denoiser -> distill -> refine -> evaluate, with
// the four-candidate comparison report.
PipelineResult run_pipeline(const RunConfig& cfg, size_t threads = 1);

} // namespace diver
