#pragma once
#include <optional>
#include <string>

#include "diver/dataset.hpp"
#include "diver/distill.hpp"
#include "diver/refine.hpp"
#include "json.hpp"

namespace diver {

// Whole-run configuration: one section per stage plus a global seed and output
// directory. Section seeds are optional; when absent the stage derives its
// seed from the global one (see stage_seed).
struct RunConfig {
    struct DataSection {
        std::string family = "gaussian-ring";
        int num_classes = 8;
        size_t points_per_class = 1000;
        size_t dim = 2;
        double noise_std = 0.5;
        double train_fraction = 0.8;
        std::optional<uint64_t> seed;
    } data;

    struct CodecSection {
        std::string mode = "learned"; // or "identity"
        size_t latent_dim = 2;
        size_t epochs = 3000;
        double lr = 0.01;
        std::optional<uint64_t> seed;
    } codec;

    struct DenoiserSection {
        size_t epochs = 400;
        size_t batch_size = 256;
        double lr = 0.06;
        double null_drop_prob = 0.1;
        std::optional<uint64_t> seed;
    } denoiser;

    struct ScheduleSection {
        size_t num_train_steps = 1000;
        double beta_start = 1e-4;
        double beta_end = 0.02;
        size_t num_sample_steps = 50;
    } schedule;

    struct DistillSection {
        size_t ipc = 10;
        size_t iterations = 500;
        double lr = 0.5;
        size_t num_embedders = 4;
        size_t embed_dim = 32;
        std::string init = "random-real"; // or "noise", "mix"
        bool hook = false;
        double hook_radius = 2.6;
        size_t hook_iters = 60;
        double hook_step = 0.1;
        std::optional<uint64_t> seed;
    } distill;

    struct RefineSection {
        size_t t_f = 25;
        size_t t_r = 50;
        size_t t_h = 40;
        size_t t_l = 25;
        double gamma = 0.1;
        double omega = 2.0;
        std::string guidance_sigma = "marginal"; // or "ddim"
        double eta = 0.0;
        bool start_at_tf = false;
        bool cfg_semantic_off = false;
        std::optional<uint64_t> seed;
    } refine;

    struct EvaluateSection {
        size_t trials = 5;
        std::optional<uint64_t> seed;
    } evaluate;

    uint64_t seed = 1;
    std::string out_dir = "out";
};

// The standard desk task: 8-class ring embedded in 8 dims with the distill
// hook enabled, everything else at defaults.
RunConfig desk_config();

// Strips #-to-end-of-line comments (outside string literals) so config files
// can be annotated, then parses the remainder as JSON.
nlohmann::json parse_config_text(const std::string& text);

// Applies a parsed document on top of `base`. Unknown keys are rejected with
// their full path; type mismatches name the key.
RunConfig apply_config(const RunConfig& base, const nlohmann::json& doc);

RunConfig load_config(const std::string& path);
nlohmann::json config_to_json(const RunConfig& cfg);

enum class Stage { Data = 1, Split, Codec, Denoiser, Distill, Refine, Evaluate };

// Effective seed for one stage: the section override when present, otherwise a
// stream derived from the global seed and the stage id.
uint64_t stage_seed(const RunConfig& cfg, Stage stage);

DataSpec data_spec(const RunConfig& cfg);
DistillConfig distill_config(const RunConfig& cfg);
RefineConfig refine_config(const RunConfig& cfg);

} // namespace diver
