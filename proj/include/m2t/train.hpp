#pragma once

// Alternating adversarial training: run configuration, the per-step
// update, checkpoints with full optimizer state, and line-delimited logs.

#include "m2t/checkpoint.hpp"
#include "m2t/discriminator.hpp"
#include "m2t/generator.hpp"
#include "m2t/losses.hpp"
#include "m2t/optim.hpp"
#include "m2t/volume.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace m2t {

struct TrainConfig {
    double max_lr = 2e-4;
    std::int64_t epochs = 100;
    std::int64_t steps_per_epoch = 20;
    Vec3 patch{16, 16, 16};
    Index batch = 2;
    /// Checkpoint every N epochs; 0 writes only the final checkpoint.
    std::int64_t checkpoint_every = 0;
    double clip_norm = 0.0;
    std::uint64_t perceptual_seed = 1234;

    std::int64_t total_steps() const { return epochs * steps_per_epoch; }
    void validate(const GeneratorConfig& g) const;
};

Json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const Json& j, const std::string& path = "train");

struct VolumePairPaths {
    std::string mri;
    std::string ct;
};

/// Training data source: a synthetic phantom or RVOL pairs on disk.
struct DataConfig {
    std::optional<PhantomSpec> phantom;
    std::vector<VolumePairPaths> pairs;

    void validate() const;
};

Json to_json(const DataConfig& d);
DataConfig data_config_from_json(const Json& j, const std::string& path = "data");

struct RunConfig {
    std::uint64_t seed = 0;
    GeneratorConfig generator = GeneratorConfig::desk_default();
    DiscriminatorConfig discriminator;
    LossWeights loss;
    TrainConfig train;
    DataConfig data;

    void validate() const;
};

Json to_json(const RunConfig& c);
RunConfig run_config_from_json(const Json& j);

/// Normalized, masked, 1 mm isotropic training pair.
struct TrainingPair {
    Volume mri; // normalized
    Volume ct;  // normalized
    Volume mask;
};

/// Resamples to 1 mm when needed, normalizes both modalities and derives
/// the body mask from the CT.
TrainingPair prepare_pair(const Volume& mri_raw, const Volume& ct_hu);

/// Loads (or synthesizes) every pair named by `data`. Throws DataError on
/// an empty dataset or unreadable file.
std::vector<TrainingPair> load_training_data(const DataConfig& data);

struct StepReport {
    std::int64_t epoch = 0;
    std::int64_t step = 0;
    double lr = 0.0;
    double d_loss = 0.0;
    double g_gan = 0.0;
    double g_l1 = 0.0;
    double g_perc = 0.0;
    double g_total = 0.0;
    double d_grad_norm = 0.0;
    double g_grad_norm = 0.0;
};

Json to_json(const StepReport& r);

class Trainer {
public:
    Trainer(RunConfig cfg, std::vector<TrainingPair> data);

    /// One discriminator update followed by one generator update.
    StepReport step();

    std::int64_t global_step() const noexcept { return step_; }
    bool finished() const { return step_ >= cfg_.train.total_steps(); }
    const RunConfig& config() const noexcept { return cfg_; }
    Generator<float>& generator() noexcept { return gen_; }
    const Generator<float>& generator() const noexcept { return gen_; }
    Discriminator<float>& discriminator() noexcept { return disc_; }

    /// Full state: weights, Adam moments and step counters, run config.
    Checkpoint checkpoint() const;
    /// Restores state written by checkpoint(). The architecture must match.
    void restore(const Checkpoint& c);

private:
    struct Batch {
        Tensor mri;
        Tensor ct;
    };
    Batch sample_batch(std::uint64_t step) const;
    Tensor disc_input(const Tensor& mri, const Tensor& ct) const;

    RunConfig cfg_;
    std::vector<TrainingPair> data_;
    Generator<float> gen_;
    Discriminator<float> disc_;
    SeededConvExtractor<float> fx_;
    std::unique_ptr<Adam<float>> adam_g_, adam_d_;
    std::int64_t step_ = 0;
};

/// Generator-only checkpoint for inference.
Checkpoint generator_checkpoint(const Generator<float>& g);
/// Rebuilds the generator from any checkpoint holding "gen." arrays and
/// a "generator" config entry.
Generator<float> load_generator(const Checkpoint& c);

struct TrainOutputs {
    std::string log_path;
    std::string final_checkpoint;
};

/// Runs the remaining steps, appending one JSON line per step to
/// <out_dir>/train.jsonl and writing checkpoints into out_dir. On a
/// NumericalError a snapshot (nan_snapshot.m2tckpt) is written before the
/// error propagates.
TrainOutputs run_training(Trainer& trainer, const std::string& out_dir,
                          const std::function<void(const StepReport&)>& on_step = {});

} // namespace m2t
