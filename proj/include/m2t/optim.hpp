#pragma once

// Adam and the learning-rate schedule.

#include "m2t/params.hpp"

#include <cstdint>

namespace m2t {

struct AdamOptions {
    double beta1 = 0.5;
    double beta2 = 0.999;
    double eps = 1e-8;
    /// Global L2 gradient-norm clip; 0 disables clipping.
    double clip_norm = 0.0;
};

/// Bias-corrected Adam over a parameter set. Moments are stored in the
/// parameter precision under the parameter names; the update arithmetic
/// runs in double.
template <typename T>
class Adam {
public:
    explicit Adam(ParameterSet<T>& params, AdamOptions opts = {});

    /// One update from the gradients currently held by the parameters
    /// (parameters without a gradient count as zero-gradient). Returns the
    /// global gradient L2 norm before clipping.
    double step(double lr);

    std::int64_t steps() const noexcept { return t_; }
    void set_steps(std::int64_t t);
    const AdamOptions& options() const noexcept { return opts_; }

    ParameterSet<T>& first_moments() noexcept { return m_; }
    ParameterSet<T>& second_moments() noexcept { return v_; }
    const ParameterSet<T>& first_moments() const noexcept { return m_; }
    const ParameterSet<T>& second_moments() const noexcept { return v_; }

private:
    ParameterSet<T>* params_;
    AdamOptions opts_;
    ParameterSet<T> m_, v_;
    std::int64_t t_ = 0;
};

/// Constant `max_lr` for epochs [0, E/2), then linear decay reaching 0 at E.
double lr_at(double epoch, double max_lr, std::int64_t total_epochs);

} // namespace m2t
