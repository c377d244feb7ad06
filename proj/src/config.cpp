#include "diver/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace diver {

RunConfig desk_config() {
    RunConfig cfg;
    cfg.data.dim = 8;
    cfg.distill.hook = true;
    return cfg;
}

nlohmann::json parse_config_text(const std::string& text) {
    std::string stripped;
    stripped.reserve(text.size());
    bool in_string = false, escaped = false;
    for (size_t i = 0; i < text.size(); ++i) {
        char ch = text[i];
        if (in_string) {
            stripped += ch;
            if (escaped)
                escaped = false;
            else if (ch == '\\')
                escaped = true;
            else if (ch == '"')
                in_string = false;
            continue;
        }
        if (ch == '"') {
            in_string = true;
            stripped += ch;
        } else if (ch == '#') {
            while (i < text.size() && text[i] != '\n') ++i;
            if (i < text.size()) stripped += '\n';
        } else {
            stripped += ch;
        }
    }
    try {
        return nlohmann::json::parse(stripped);
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string("config is not valid JSON: ") + e.what());
    }
}

namespace {

// Parsed documents store nonnegative integers as unsigned, but documents built
// in code usually carry plain (signed) ints; both spellings are valid seeds.
bool is_nonnegative_integer(const nlohmann::json& v) {
    return v.is_number_unsigned() || (v.is_number_integer() && v.get<int64_t>() >= 0);
}

// Pulls typed values out of one section object, tracking which keys were
// consumed so leftovers can be reported with their full path.
struct Section {
    const nlohmann::json& obj;
    std::string prefix;
    std::set<std::string> seen;

    Section(const nlohmann::json& o, std::string p) : obj(o), prefix(std::move(p)) {
        if (!o.is_object())
            throw std::runtime_error("config key '" + prefix.substr(0, prefix.size() - 1) +
                                     "' must be an object");
    }

    template <typename T>
    void get(const char* key, T& out) {
        auto it = obj.find(key);
        if (it == obj.end()) return;
        seen.insert(key);
        try {
            out = it->get<T>();
        } catch (const std::exception&) {
            throw std::runtime_error("config key '" + prefix + key + "' has the wrong type");
        }
    }

    void get_seed(std::optional<uint64_t>& out) {
        auto it = obj.find("seed");
        if (it == obj.end()) return;
        seen.insert("seed");
        if (!is_nonnegative_integer(*it))
            throw std::runtime_error("config key '" + prefix +
                                     "seed' must be a nonnegative integer");
        out = it->get<uint64_t>();
    }

    void finish() const {
        for (auto it = obj.begin(); it != obj.end(); ++it)
            if (seen.find(it.key()) == seen.end())
                throw std::runtime_error("unknown config key '" + prefix + it.key() + "'");
    }
};

} // namespace

RunConfig apply_config(const RunConfig& base, const nlohmann::json& doc) {
    RunConfig cfg = base;
    if (!doc.is_object()) throw std::runtime_error("config root must be an object");
    std::set<std::string> seen;
    for (auto it = doc.begin(); it != doc.end(); ++it) {
        const std::string& key = it.key();
        seen.insert(key);
        if (key == "seed") {
            if (!is_nonnegative_integer(*it))
                throw std::runtime_error("config key 'seed' must be a nonnegative integer");
            cfg.seed = it->get<uint64_t>();
        } else if (key == "out_dir") {
            cfg.out_dir = it->get<std::string>();
        } else if (key == "data") {
            Section s(*it, "data.");
            s.get("family", cfg.data.family);
            s.get("num_classes", cfg.data.num_classes);
            s.get("points_per_class", cfg.data.points_per_class);
            s.get("dim", cfg.data.dim);
            s.get("noise_std", cfg.data.noise_std);
            s.get("train_fraction", cfg.data.train_fraction);
            s.get_seed(cfg.data.seed);
            s.finish();
        } else if (key == "codec") {
            Section s(*it, "codec.");
            s.get("mode", cfg.codec.mode);
            s.get("latent_dim", cfg.codec.latent_dim);
            s.get("epochs", cfg.codec.epochs);
            s.get("lr", cfg.codec.lr);
            s.get_seed(cfg.codec.seed);
            s.finish();
        } else if (key == "denoiser") {
            Section s(*it, "denoiser.");
            s.get("epochs", cfg.denoiser.epochs);
            s.get("batch_size", cfg.denoiser.batch_size);
            s.get("lr", cfg.denoiser.lr);
            s.get("null_drop_prob", cfg.denoiser.null_drop_prob);
            s.get_seed(cfg.denoiser.seed);
            s.finish();
        } else if (key == "schedule") {
            Section s(*it, "schedule.");
            s.get("num_train_steps", cfg.schedule.num_train_steps);
            s.get("beta_start", cfg.schedule.beta_start);
            s.get("beta_end", cfg.schedule.beta_end);
            s.get("num_sample_steps", cfg.schedule.num_sample_steps);
            s.finish();
        } else if (key == "distill") {
            Section s(*it, "distill.");
            s.get("ipc", cfg.distill.ipc);
            s.get("iterations", cfg.distill.iterations);
            s.get("lr", cfg.distill.lr);
            s.get("num_embedders", cfg.distill.num_embedders);
            s.get("embed_dim", cfg.distill.embed_dim);
            s.get("init", cfg.distill.init);
            s.get("hook", cfg.distill.hook);
            s.get("hook_radius", cfg.distill.hook_radius);
            s.get("hook_iters", cfg.distill.hook_iters);
            s.get("hook_step", cfg.distill.hook_step);
            s.get_seed(cfg.distill.seed);
            s.finish();
        } else if (key == "refine") {
            Section s(*it, "refine.");
            s.get("t_f", cfg.refine.t_f);
            s.get("t_r", cfg.refine.t_r);
            s.get("t_h", cfg.refine.t_h);
            s.get("t_l", cfg.refine.t_l);
            s.get("gamma", cfg.refine.gamma);
            s.get("omega", cfg.refine.omega);
            s.get("guidance_sigma", cfg.refine.guidance_sigma);
            s.get("eta", cfg.refine.eta);
            s.get("start_at_tf", cfg.refine.start_at_tf);
            s.get("cfg_semantic_off", cfg.refine.cfg_semantic_off);
            s.get_seed(cfg.refine.seed);
            s.finish();
        } else if (key == "evaluate") {
            Section s(*it, "evaluate.");
            s.get("trials", cfg.evaluate.trials);
            s.get_seed(cfg.evaluate.seed);
            s.finish();
        } else {
            throw std::runtime_error("unknown config key '" + key + "'");
        }
    }

    if (cfg.data.family != "gaussian-ring" && cfg.data.family != "concentric-rings" &&
        cfg.data.family != "spirals")
        throw std::runtime_error("config key 'data.family': unknown family '" + cfg.data.family +
                                 "'");
    if (cfg.codec.mode != "learned" && cfg.codec.mode != "identity")
        throw std::runtime_error("config key 'codec.mode': must be 'learned' or 'identity'");
    if (cfg.distill.init != "random-real" && cfg.distill.init != "noise" &&
        cfg.distill.init != "mix")
        throw std::runtime_error(
            "config key 'distill.init': must be 'random-real', 'noise', or 'mix'");
    if (cfg.refine.guidance_sigma != "marginal" && cfg.refine.guidance_sigma != "ddim")
        throw std::runtime_error(
            "config key 'refine.guidance_sigma': must be 'marginal' or 'ddim'");
    if (cfg.data.train_fraction <= 0.0 || cfg.data.train_fraction >= 1.0)
        throw std::runtime_error("config key 'data.train_fraction': must be in (0, 1)");
    if (cfg.refine.t_l > cfg.refine.t_r)
        throw std::runtime_error("config key 'refine.t_l': exceeds refine.t_r");
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open config file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return apply_config(RunConfig{}, parse_config_text(ss.str()));
}

nlohmann::json config_to_json(const RunConfig& cfg) {
    nlohmann::json j;
    j["seed"] = cfg.seed;
    j["out_dir"] = cfg.out_dir;
    j["data"] = {{"family", cfg.data.family},
                 {"num_classes", cfg.data.num_classes},
                 {"points_per_class", cfg.data.points_per_class},
                 {"dim", cfg.data.dim},
                 {"noise_std", cfg.data.noise_std},
                 {"train_fraction", cfg.data.train_fraction}};
    j["codec"] = {{"mode", cfg.codec.mode},
                  {"latent_dim", cfg.codec.latent_dim},
                  {"epochs", cfg.codec.epochs},
                  {"lr", cfg.codec.lr}};
    j["denoiser"] = {{"epochs", cfg.denoiser.epochs},
                     {"batch_size", cfg.denoiser.batch_size},
                     {"lr", cfg.denoiser.lr},
                     {"null_drop_prob", cfg.denoiser.null_drop_prob}};
    j["schedule"] = {{"num_train_steps", cfg.schedule.num_train_steps},
                     {"beta_start", cfg.schedule.beta_start},
                     {"beta_end", cfg.schedule.beta_end},
                     {"num_sample_steps", cfg.schedule.num_sample_steps}};
    j["distill"] = {{"ipc", cfg.distill.ipc},
                    {"iterations", cfg.distill.iterations},
                    {"lr", cfg.distill.lr},
                    {"num_embedders", cfg.distill.num_embedders},
                    {"embed_dim", cfg.distill.embed_dim},
                    {"init", cfg.distill.init},
                    {"hook", cfg.distill.hook},
                    {"hook_radius", cfg.distill.hook_radius},
                    {"hook_iters", cfg.distill.hook_iters},
                    {"hook_step", cfg.distill.hook_step}};
    j["refine"] = {{"t_f", cfg.refine.t_f},
                   {"t_r", cfg.refine.t_r},
                   {"t_h", cfg.refine.t_h},
                   {"t_l", cfg.refine.t_l},
                   {"gamma", cfg.refine.gamma},
                   {"omega", cfg.refine.omega},
                   {"guidance_sigma", cfg.refine.guidance_sigma},
                   {"eta", cfg.refine.eta},
                   {"start_at_tf", cfg.refine.start_at_tf},
                   {"cfg_semantic_off", cfg.refine.cfg_semantic_off}};
    j["evaluate"] = {{"trials", cfg.evaluate.trials}};
    if (cfg.data.seed) j["data"]["seed"] = *cfg.data.seed;
    if (cfg.codec.seed) j["codec"]["seed"] = *cfg.codec.seed;
    if (cfg.denoiser.seed) j["denoiser"]["seed"] = *cfg.denoiser.seed;
    if (cfg.distill.seed) j["distill"]["seed"] = *cfg.distill.seed;
    if (cfg.refine.seed) j["refine"]["seed"] = *cfg.refine.seed;
    if (cfg.evaluate.seed) j["evaluate"]["seed"] = *cfg.evaluate.seed;
    return j;
}

uint64_t stage_seed(const RunConfig& cfg, Stage stage) {
    // The split reuses the data override so an explicit data.seed pins both the
    // raw draw and the train/test partition.
    if (stage == Stage::Split && cfg.data.seed)
        return Rng(*cfg.data.seed).stream(uint64_t(stage)).next_u64();
    const std::optional<uint64_t>* override_seed = nullptr;
    switch (stage) {
        case Stage::Data: override_seed = &cfg.data.seed; break;
        case Stage::Split: break;
        case Stage::Codec: override_seed = &cfg.codec.seed; break;
        case Stage::Denoiser: override_seed = &cfg.denoiser.seed; break;
        case Stage::Distill: override_seed = &cfg.distill.seed; break;
        case Stage::Refine: override_seed = &cfg.refine.seed; break;
        case Stage::Evaluate: override_seed = &cfg.evaluate.seed; break;
    }
    if (override_seed != nullptr && override_seed->has_value()) return **override_seed;
    return Rng(cfg.seed).stream(uint64_t(stage)).next_u64();
}

DataSpec data_spec(const RunConfig& cfg) {
    DataSpec spec;
    spec.family = cfg.data.family;
    spec.num_classes = cfg.data.num_classes;
    spec.points_per_class = int(cfg.data.points_per_class);
    spec.dim = int(cfg.data.dim);
    spec.noise_std = cfg.data.noise_std;
    spec.seed = stage_seed(cfg, Stage::Data);
    return spec;
}

DistillConfig distill_config(const RunConfig& cfg) {
    DistillConfig d;
    d.ipc = cfg.distill.ipc;
    d.iterations = cfg.distill.iterations;
    d.lr = cfg.distill.lr;
    d.num_embedders = cfg.distill.num_embedders;
    d.embed_dim = cfg.distill.embed_dim;
    d.init = cfg.distill.init == "noise"
                 ? DistillInit::Noise
                 : (cfg.distill.init == "mix" ? DistillInit::Mix : DistillInit::RandomReal);
    d.hook = cfg.distill.hook;
    d.hook_radius = cfg.distill.hook_radius;
    d.hook_iters = cfg.distill.hook_iters;
    d.hook_step = cfg.distill.hook_step;
    d.seed = stage_seed(cfg, Stage::Distill);
    return d;
}

RefineConfig refine_config(const RunConfig& cfg) {
    RefineConfig r;
    r.t_f = cfg.refine.t_f;
    r.t_r = cfg.refine.t_r;
    r.t_h = cfg.refine.t_h;
    r.t_l = cfg.refine.t_l;
    r.gamma = cfg.refine.gamma;
    r.omega = cfg.refine.omega;
    r.guidance_sigma = cfg.refine.guidance_sigma == "ddim" ? GuidanceSigma::Ddim
                                                           : GuidanceSigma::Marginal;
    r.eta = cfg.refine.eta;
    r.start_at_tf = cfg.refine.start_at_tf;
    r.cfg_semantic_off = cfg.refine.cfg_semantic_off;
    r.seed = stage_seed(cfg, Stage::Refine);
    return r;
}

} // namespace diver
