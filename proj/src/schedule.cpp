#include "diver/schedule.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace diver {

NoiseSchedule make_schedule(int T, double beta_start, double beta_end, double eta) {
    if (T < 1) throw std::runtime_error("make_schedule: T must be >= 1");
    if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
        throw std::runtime_error("make_schedule: need 0 < beta_start <= beta_end < 1");
    if (!std::isfinite(beta_start) || !std::isfinite(beta_end))
        throw std::runtime_error("make_schedule: non-finite beta bounds");
    if (!(eta >= 0.0 && eta <= 1.0))
        throw std::runtime_error("make_schedule: eta must be in [0, 1]");

    NoiseSchedule s;
    s.num_train_steps = T;
    s.eta = eta;
    s.beta.resize(T);
    s.alpha_bar.resize(T + 1);
    s.alpha_bar[0] = 1.0;
    for (int t = 0; t < T; ++t) {
        s.beta[t] = (T == 1) ? beta_start
                             : beta_start + (beta_end - beta_start) * t / (T - 1);
        s.alpha_bar[t + 1] = s.alpha_bar[t] * (1.0 - s.beta[t]);
    }
    return s;
}

StepGrid make_grid(const NoiseSchedule& sched, int num_sample_steps) {
    const int T = sched.num_train_steps;
    if (num_sample_steps < 1 || num_sample_steps > T)
        throw std::runtime_error("make_grid: num_sample_steps " +
                                 std::to_string(num_sample_steps) + " outside [1, " +
                                 std::to_string(T) + "]");
    StepGrid g;
    g.num_sample_steps = num_sample_steps;
    g.train_indices.resize(num_sample_steps + 1);
    for (int k = 0; k <= num_sample_steps; ++k)
        g.train_indices[k] =
            static_cast<int>((static_cast<long long>(k) * T) / num_sample_steps);
    return g;
}

double alpha_bar_at(const NoiseSchedule& sched, const StepGrid& grid, int k) {
    if (k < 0 || k > grid.num_sample_steps)
        throw std::runtime_error("alpha_bar_at: grid step " + std::to_string(k) +
                                 " outside [0, " + std::to_string(grid.num_sample_steps) + "]");
    return sched.alpha_bar[grid.train_indices[k]];
}

void forward_noise(const std::vector<double>& z0, int k, const StepGrid& grid,
                   const NoiseSchedule& sched, const std::vector<double>& eps,
                   std::vector<double>& out) {
    if (eps.size() != z0.size())
        throw std::runtime_error("forward_noise: eps has " + std::to_string(eps.size()) +
                                 " entries, z0 has " + std::to_string(z0.size()));
    const double ab = alpha_bar_at(sched, grid, k);
    const double ca = std::sqrt(ab);
    const double ce = std::sqrt(1.0 - ab);
    out.resize(z0.size());
    for (size_t i = 0; i < z0.size(); ++i)
        out[i] = ca * z0[i] + ce * eps[i];
}

double marginal_sigma(int k, const StepGrid& grid, const NoiseSchedule& sched) {
    if (k < 1 || k > grid.num_sample_steps)
        throw std::runtime_error("marginal_sigma: grid step " + std::to_string(k) +
                                 " outside [1, " + std::to_string(grid.num_sample_steps) + "]");
    return std::sqrt(1.0 - alpha_bar_at(sched, grid, k));
}

double ddim_sigma(int k, int k_prev, const StepGrid& grid, const NoiseSchedule& sched) {
    if (sched.eta == 0.0) return 0.0;
    const double ab_t = alpha_bar_at(sched, grid, k);
    const double ab_p = alpha_bar_at(sched, grid, k_prev);
    return sched.eta * std::sqrt((1.0 - ab_p) / (1.0 - ab_t)) *
           std::sqrt(1.0 - ab_t / ab_p);
}

} // namespace diver
