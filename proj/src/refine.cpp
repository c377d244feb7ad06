#include "diver/refine.hpp"

#include <cmath>
#include <stdexcept>
#include <thread>

namespace diver {

void validate_refine_config(const RefineConfig& cfg, const StepGrid& grid) {
    size_t steps = size_t(grid.num_sample_steps);
    if (cfg.t_r > steps)
        throw std::runtime_error("refine: t_r = " + std::to_string(cfg.t_r) +
                                 " exceeds the sample grid (" + std::to_string(steps) + ")");
    if (cfg.t_f > cfg.t_r)
        throw std::runtime_error("refine: t_f = " + std::to_string(cfg.t_f) + " exceeds t_r = " +
                                 std::to_string(cfg.t_r));
    if (cfg.t_l < 1 || cfg.t_l > cfg.t_h)
        throw std::runtime_error("refine: need 1 <= t_l <= t_h, got t_l = " +
                                 std::to_string(cfg.t_l) + ", t_h = " + std::to_string(cfg.t_h));
    if (cfg.t_h > cfg.t_r)
        throw std::runtime_error("refine: t_h = " + std::to_string(cfg.t_h) + " exceeds t_r = " +
                                 std::to_string(cfg.t_r));
    if (cfg.gamma < 0.0) throw std::runtime_error("refine: gamma must be >= 0");
    if (cfg.eta < 0.0 || cfg.eta > 1.0) throw std::runtime_error("refine: eta must be in [0, 1]");
}

std::pair<std::vector<double>, std::vector<double>> inherit(const Codec& codec,
                                                            const NoiseSchedule& schedule,
                                                            const StepGrid& grid,
                                                            const std::vector<double>& x0,
                                                            size_t t_f, Rng& rng) {
    std::vector<double> z0 = encode(codec, x0);
    std::vector<double> eps(z0.size());
    for (double& v : eps) v = rng.normal();
    std::vector<double> z_init;
    forward_noise(z0, int(t_f), grid, schedule, eps, z_init);
    return {std::move(z0), std::move(z_init)};
}

std::vector<double> ddim_step(const std::vector<double>& eps, const std::vector<double>& z_t,
                              size_t t, size_t t_prev, const NoiseSchedule& schedule,
                              const StepGrid& grid, Rng& rng) {
    if (t_prev >= t || t > size_t(grid.num_sample_steps))
        throw std::runtime_error("ddim_step: need grid indices t > t_prev >= 0, got t = " +
                                 std::to_string(t) + ", t_prev = " + std::to_string(t_prev));
    if (eps.size() != z_t.size())
        throw std::runtime_error("ddim_step: eps dim " + std::to_string(eps.size()) +
                                 " vs state dim " + std::to_string(z_t.size()));
    double ab_t = alpha_bar_at(schedule, grid, int(t));
    double ab_p = alpha_bar_at(schedule, grid, int(t_prev));
    double sigma = ddim_sigma(int(t), int(t_prev), grid, schedule);
    double dir_sq = 1.0 - ab_p - sigma * sigma;
    if (dir_sq < 0.0)
        throw std::runtime_error("ddim_step: 1 - abar_prev - sigma^2 = " + std::to_string(dir_sq) +
                                 " < 0 (eta too large for step " + std::to_string(t) + ")");
    double sq_t = std::sqrt(ab_t), sq_one = std::sqrt(1.0 - ab_t);
    double sq_p = std::sqrt(ab_p), sq_dir = std::sqrt(dir_sq);
    std::vector<double> out(z_t.size());
    for (size_t j = 0; j < z_t.size(); ++j) {
        double z0_hat = (z_t[j] - sq_one * eps[j]) / sq_t;
        out[j] = sq_p * z0_hat + sq_dir * eps[j];
    }
    if (sigma > 0.0)
        for (double& v : out) v += sigma * rng.normal();
    return out;
}

GuidedEps model_eps(const EpsilonModel& model) {
    return [&model](const std::vector<double>& z, size_t t, size_t label, double omega) {
        return cfg_eps(model, z, t, label, omega);
    };
}

std::vector<double> guided_step(const GuidedEps& eps_fn, const std::vector<double>& z_t, size_t t,
                                size_t t_prev, const std::vector<double>& z0, size_t label,
                                const RefineConfig& cfg, const NoiseSchedule& schedule,
                                const StepGrid& grid, Rng& rng) {
    bool in_window = t >= cfg.t_l && t <= cfg.t_h;
    double omega = (in_window && cfg.cfg_semantic_off) ? 1.0 : cfg.omega;
    std::vector<double> eps = eps_fn(z_t, t, label, omega);
    std::vector<double> out = ddim_step(eps, z_t, t, t_prev, schedule, grid, rng);
    if (in_window && cfg.gamma != 0.0) {
        double sigma_hat = cfg.guidance_sigma == GuidanceSigma::Marginal
                               ? marginal_sigma(int(t), grid, schedule)
                               : ddim_sigma(int(t), int(t_prev), grid, schedule);
        for (size_t j = 0; j < out.size(); ++j)
            out[j] -= cfg.gamma * (z_t[j] - z0[j]) * sigma_hat;
    }
    return out;
}

LabeledDataset refine_dataset(const LabeledDataset& distilled, const Codec& codec,
                              const GuidedEps& eps_fn, const NoiseSchedule& schedule,
                              const StepGrid& grid, const RefineConfig& cfg, size_t threads) {
    distilled.validate();
    validate_refine_config(cfg, grid);
    size_t n = distilled.n();
    size_t start = cfg.start_at_tf ? cfg.t_f : cfg.t_r;

    LabeledDataset out;
    out.num_classes = distilled.num_classes;
    out.labels = distilled.labels;
    out.name = "refined";
    out.features = Matrix(n, distilled.dim());

    std::vector<std::string> errors(n);
    Rng root(cfg.seed);

    auto run_sample = [&](size_t i) {
        try {
            Rng rng = root.stream(i);
            std::vector<double> x0(distilled.dim());
            for (size_t j = 0; j < x0.size(); ++j) x0[j] = distilled.features(i, j);
            auto [z0, z] = inherit(codec, schedule, grid, x0, cfg.t_f, rng);
            size_t label = size_t(distilled.labels[i]);
            for (size_t k = start; k >= 1; --k)
                z = guided_step(eps_fn, z, k, k - 1, z0, label, cfg, schedule, grid, rng);
            std::vector<double> x = decode(codec, z);
            for (size_t j = 0; j < x.size(); ++j) out.features(i, j) = x[j];
        } catch (const std::exception& e) {
            errors[i] = e.what();
        }
    };

    if (threads <= 1) {
        for (size_t i = 0; i < n; ++i) run_sample(i);
    } else {
        std::vector<std::thread> workers;
        size_t nw = std::min(threads, n);
        for (size_t w = 0; w < nw; ++w)
            workers.emplace_back([&, w] {
                for (size_t i = w; i < n; i += nw) run_sample(i);
            });
        for (std::thread& t : workers) t.join();
    }
    for (size_t i = 0; i < n; ++i)
        if (!errors[i].empty())
            throw std::runtime_error("refine: sample " + std::to_string(i) + ": " + errors[i]);
    return out;
}

LabeledDataset refine_dataset(const LabeledDataset& distilled, const Codec& codec,
                              const EpsilonModel& model, const NoiseSchedule& schedule,
                              const StepGrid& grid, const RefineConfig& cfg, size_t threads) {
    return refine_dataset(distilled, codec, model_eps(model), schedule, grid, cfg, threads);
}

} // namespace diver
