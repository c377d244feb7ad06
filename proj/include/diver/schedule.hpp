#pragma once
#include <cstddef>
#include <vector>

namespace diver {

// Linear-beta diffusion schedule. alpha_bar has T+1 entries with alpha_bar[0] = 1
// and alpha_bar[t] = prod_{s<=t} (1 - beta[s]), strictly decreasing.
struct NoiseSchedule {
    int num_train_steps = 0;          // T
    std::vector<double> beta;         // T entries, increasing, in (0,1)
    std::vector<double> alpha_bar;    // T+1 entries
    double eta = 0.0;                 // DDIM injection-noise scale, 0 = deterministic
};

// Uniform-stride subset of training timesteps used at sampling time.
// train_indices[k] for k in [0, num_sample_steps], with train_indices[0] = 0 and
// train_indices[num_sample_steps] = T; entries for k >= 1 are strictly increasing.
struct StepGrid {
    int num_sample_steps = 0;
    std::vector<int> train_indices;
};

NoiseSchedule make_schedule(int T, double beta_start, double beta_end, double eta);
StepGrid make_grid(const NoiseSchedule& sched, int num_sample_steps);

// alpha_bar at grid step k (k in [0, num_sample_steps]).
double alpha_bar_at(const NoiseSchedule& sched, const StepGrid& grid, int k);

// sqrt(alpha_bar_k) * z0 + sqrt(1 - alpha_bar_k) * eps, elementwise; k = 0 returns z0.
void forward_noise(const std::vector<double>& z0, int k, const StepGrid& grid,
                   const NoiseSchedule& sched, const std::vector<double>& eps,
                   std::vector<double>& out);

// Marginal noise std sqrt(1 - alpha_bar) at grid step k in [1, num_sample_steps].
double marginal_sigma(int k, const StepGrid& grid, const NoiseSchedule& sched);

// DDIM injection noise scale for the reverse step k -> k_prev; zero when eta = 0.
double ddim_sigma(int k, int k_prev, const StepGrid& grid, const NoiseSchedule& sched);

} // namespace diver
