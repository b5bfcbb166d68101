#include "m2t/train.hpp"

#include <filesystem>
#include <fstream>

namespace m2t {

namespace {

constexpr std::uint64_t kPatchStream = 1;

} // namespace

// ---- configuration --------------------------------------------------------

void TrainConfig::validate(const GeneratorConfig& g) const
{
    if (!(max_lr >= 0.0))
        throw ConfigError("train.max_lr must be nonnegative");
    if (epochs < 1 || steps_per_epoch < 1)
        throw ConfigError("train.epochs and train.steps_per_epoch must be positive");
    if (batch < 1)
        throw ConfigError("train.batch must be positive");
    if (checkpoint_every < 0)
        throw ConfigError("train.checkpoint_every must be nonnegative");
    if (!(clip_norm >= 0.0))
        throw ConfigError("train.clip_norm must be nonnegative");
    const Index r = g.reduction();
    for (Index e : patch)
        if (e < 1 || e % r != 0)
            throw ConfigError("train.patch " + vec3_str(patch) + " must be positive multiples of " +
                              std::to_string(r));
}

Json to_json(const TrainConfig& c)
{
    return Json{{"max_lr", c.max_lr},
                {"epochs", c.epochs},
                {"steps_per_epoch", c.steps_per_epoch},
                {"patch", c.patch},
                {"batch", c.batch},
                {"checkpoint_every", c.checkpoint_every},
                {"clip_norm", c.clip_norm},
                {"perceptual_seed", c.perceptual_seed}};
}

TrainConfig train_config_from_json(const Json& j, const std::string& path)
{
    TrainConfig c;
    JsonObjectReader r(j, path);
    r.optional("max_lr", c.max_lr);
    r.optional("epochs", c.epochs);
    r.optional("steps_per_epoch", c.steps_per_epoch);
    r.optional("patch", c.patch);
    r.optional("batch", c.batch);
    r.optional("checkpoint_every", c.checkpoint_every);
    r.optional("clip_norm", c.clip_norm);
    r.optional("perceptual_seed", c.perceptual_seed);
    r.finish();
    return c;
}

void DataConfig::validate() const
{
    if (phantom && !pairs.empty())
        throw ConfigError("data: give either 'phantom' or 'pairs', not both");
    if (!phantom && pairs.empty())
        throw ConfigError("data: empty dataset (need 'phantom' or at least one entry in 'pairs')");
    if (phantom)
        phantom->validate();
}

Json to_json(const DataConfig& d)
{
    Json j = Json::object();
    if (d.phantom)
        j["phantom"] = to_json(*d.phantom);
    if (!d.pairs.empty()) {
        j["pairs"] = Json::array();
        for (const auto& p : d.pairs)
            j["pairs"].push_back(Json{{"mri", p.mri}, {"ct", p.ct}});
    }
    return j;
}

DataConfig data_config_from_json(const Json& j, const std::string& path)
{
    DataConfig d;
    JsonObjectReader r(j, path);
    if (const Json* p = r.take("phantom"))
        d.phantom = phantom_spec_from_json(*p, r.qualified("phantom"));
    if (const Json* p = r.take("pairs")) {
        if (!p->is_array())
            throw ConfigError("'" + r.qualified("pairs") + "' must be an array");
        for (std::size_t i = 0; i < p->size(); ++i) {
            VolumePairPaths v;
            JsonObjectReader pr((*p)[i], r.qualified("pairs") + "[" + std::to_string(i) + "]");
            pr.required("mri", v.mri);
            pr.required("ct", v.ct);
            pr.finish();
            d.pairs.push_back(v);
        }
    }
    r.finish();
    d.validate();
    return d;
}

void RunConfig::validate() const
{
    generator.validate();
    discriminator.validate();
    loss.validate();
    train.validate(generator);
    data.validate();
}

Json to_json(const RunConfig& c)
{
    return Json{{"seed", c.seed},
                {"generator", to_json(c.generator)},
                {"discriminator", to_json(c.discriminator)},
                {"loss", to_json(c.loss)},
                {"train", to_json(c.train)},
                {"data", to_json(c.data)}};
}

RunConfig run_config_from_json(const Json& j)
{
    RunConfig c;
    JsonObjectReader r(j, "");
    r.optional("seed", c.seed);
    if (const Json* p = r.take("generator"))
        c.generator = generator_config_from_json(*p);
    if (const Json* p = r.take("discriminator"))
        c.discriminator = discriminator_config_from_json(*p);
    if (const Json* p = r.take("loss"))
        c.loss = loss_weights_from_json(*p);
    if (const Json* p = r.take("train"))
        c.train = train_config_from_json(*p);
    if (const Json* p = r.take("data"))
        c.data = data_config_from_json(*p);
    else
        throw ConfigError("missing required key 'data'");
    r.finish();
    c.validate();
    return c;
}

// ---- data -----------------------------------------------------------------

TrainingPair prepare_pair(const Volume& mri_raw, const Volume& ct_hu)
{
    require_same_extents(mri_raw, ct_hu, "training pair");
    if (ct_hu.unit != IntensityUnit::HU)
        throw DataError("training pair: CT must be in HU");
    auto iso = [](const Volume& v) {
        for (double s : v.spacing)
            if (s != 1.0)
                return resample_isotropic(v, 1.0);
        return v;
    };
    const Volume mri = iso(mri_raw), ct = iso(ct_hu);
    return TrainingPair{normalize_mri(mri), normalize_hu(ct), body_mask(ct)};
}

std::vector<TrainingPair> load_training_data(const DataConfig& data)
{
    data.validate();
    std::vector<TrainingPair> out;
    if (data.phantom) {
        const auto p = make_phantom_pair(*data.phantom);
        out.push_back(prepare_pair(p.mri, p.ct));
    }
    for (const auto& p : data.pairs)
        out.push_back(prepare_pair(read_rvol(p.mri), read_rvol(p.ct)));
    if (out.empty())
        throw DataError("training dataset is empty");
    return out;
}

// ---- trainer --------------------------------------------------------------

Json to_json(const StepReport& r)
{
    return Json{{"epoch", r.epoch},     {"step", r.step},   {"lr", r.lr},
                {"d_loss", r.d_loss},   {"g_gan", r.g_gan}, {"g_l1", r.g_l1},
                {"g_perc", r.g_perc},   {"g_total", r.g_total},
                {"d_grad_norm", r.d_grad_norm}, {"g_grad_norm", r.g_grad_norm}};
}

Trainer::Trainer(RunConfig cfg, std::vector<TrainingPair> data)
    : cfg_(std::move(cfg)),
      data_(std::move(data)),
      gen_(cfg_.generator, derive_seed(cfg_.seed, 2)),
      disc_(cfg_.discriminator, derive_seed(cfg_.seed, 3)),
      fx_(cfg_.train.perceptual_seed)
{
    cfg_.validate();
    if (data_.empty())
        throw DataError("training dataset is empty");
    for (const auto& p : data_)
        for (int a = 0; a < 3; ++a)
            if (p.mri.extents[a] < cfg_.train.patch[a])
                throw DataError("training volume " + vec3_str(p.mri.extents) + " is smaller than the patch " +
                                vec3_str(cfg_.train.patch));
    AdamOptions opts;
    opts.clip_norm = cfg_.train.clip_norm;
    adam_g_ = std::make_unique<Adam<float>>(gen_.parameters(), opts);
    adam_d_ = std::make_unique<Adam<float>>(disc_.parameters(), opts);
}

Trainer::Batch Trainer::sample_batch(std::uint64_t step) const
{
    Rng rng(derive_seed(cfg_.seed, kPatchStream, step));
    std::vector<Tensor> mri, ct;
    for (Index b = 0; b < cfg_.train.batch; ++b) {
        const auto& pair = data_[static_cast<std::size_t>(rng.uniform_int(0, static_cast<Index>(data_.size()) - 1))];
        const auto s = sample_patch(pair.mri, pair.ct, pair.mask, cfg_.train.patch, rng);
        mri.push_back(to_tensor(s.mri));
        ct.push_back(to_tensor(s.ct));
    }
    return {concat<float>(mri, 0), concat<float>(ct, 0)};
}

Tensor Trainer::disc_input(const Tensor& mri, const Tensor& ct) const
{
    return cfg_.discriminator.in_channels == 2 ? concat<float>({mri, ct}, 1) : ct;
}

StepReport Trainer::step()
{
    if (finished())
        throw ConfigError("training already finished");
    StepReport rep;
    rep.step = step_;
    rep.epoch = step_ / cfg_.train.steps_per_epoch;
    const double epoch_pos = static_cast<double>(rep.epoch);
    rep.lr = lr_at(epoch_pos, cfg_.train.max_lr, cfg_.train.epochs);

    const Batch batch = sample_batch(static_cast<std::uint64_t>(step_));
    auto& gp = gen_.parameters();
    auto& dp = disc_.parameters();
    gp.zero_grad();
    dp.zero_grad();

    Tape<float> gtape;
    const Tensor fake = gen_.forward(batch.mri);

    {
        dp.set_requires_grad(true);
        Tape<float> dtape;
        const Tensor detached = fake.detach();
        const Tensor d_loss = gan_loss_discriminator(disc_.forward(disc_input(batch.mri, batch.ct)),
                                                     disc_.forward(disc_input(batch.mri, detached)));
        dtape.backward(d_loss);
        rep.d_loss = d_loss.item();
        rep.d_grad_norm = adam_d_->step(rep.lr);
    }

    dp.set_requires_grad(false);
    const LossWeights& w = cfg_.loss;
    auto maybe_tracked = [](double lambda, auto&& fn) {
        if (lambda != 0.0)
            return fn();
        NoGradScope<float> ng;
        return fn();
    };
    LossParts<float> parts;
    parts.gan = maybe_tracked(w.gan, [&] { return gan_loss_generator(disc_.forward(disc_input(batch.mri, fake))); });
    parts.l1 = maybe_tracked(w.l1, [&] { return l1_loss(fake, batch.ct); });
    parts.perc = maybe_tracked(w.perc, [&] { return perceptual_loss(fake, batch.ct, fx_); });
    const Tensor total = total_generator_loss(parts, w);
    gtape.backward(total);
    rep.g_gan = parts.gan.item();
    rep.g_l1 = parts.l1.item();
    rep.g_perc = parts.perc.item();
    rep.g_total = total.item();
    rep.g_grad_norm = adam_g_->step(rep.lr);
    dp.set_requires_grad(true);
    ++step_;
    return rep;
}

Checkpoint Trainer::checkpoint() const
{
    Checkpoint c;
    c.meta = Json{{"kind", "training"},
                  {"step", step_},
                  {"adam_g_steps", adam_g_->steps()},
                  {"adam_d_steps", adam_d_->steps()},
                  {"generator", to_json(cfg_.generator)},
                  {"run", to_json(cfg_)}};
    c.add("gen.", gen_.parameters());
    c.add("disc.", disc_.parameters());
    c.add("adam_g.m.", adam_g_->first_moments());
    c.add("adam_g.v.", adam_g_->second_moments());
    c.add("adam_d.m.", adam_d_->first_moments());
    c.add("adam_d.v.", adam_d_->second_moments());
    return c;
}

void Trainer::restore(const Checkpoint& c)
{
    if (c.meta.value("kind", "") != "training")
        throw DataError("checkpoint does not hold training state");
    if (c.meta.at("generator") != to_json(cfg_.generator))
        throw DataError("checkpoint generator config differs from the run config");
    c.load("gen.", gen_.parameters());
    c.load("disc.", disc_.parameters());
    c.load("adam_g.m.", adam_g_->first_moments());
    c.load("adam_g.v.", adam_g_->second_moments());
    c.load("adam_d.m.", adam_d_->first_moments());
    c.load("adam_d.v.", adam_d_->second_moments());
    adam_g_->set_steps(c.meta.at("adam_g_steps").get<std::int64_t>());
    adam_d_->set_steps(c.meta.at("adam_d_steps").get<std::int64_t>());
    const auto s = c.meta.at("step").get<std::int64_t>();
    if (s < 0 || s > cfg_.train.total_steps())
        throw DataError("checkpoint step " + std::to_string(s) + " is outside this run");
    step_ = s;
}

Checkpoint generator_checkpoint(const Generator<float>& g)
{
    Checkpoint c;
    c.meta = Json{{"kind", "generator"}, {"generator", to_json(g.config())}};
    c.add("gen.", g.parameters());
    return c;
}

Generator<float> load_generator(const Checkpoint& c)
{
    if (!c.meta.is_object() || !c.meta.contains("generator"))
        throw DataError("checkpoint has no generator config");
    GeneratorConfig cfg;
    try {
        cfg = generator_config_from_json(c.meta.at("generator"));
    } catch (const ConfigError& e) {
        throw DataError(std::string("checkpoint generator config is invalid: ") + e.what());
    }
    Generator<float> g(cfg, 0);
    c.load("gen.", g.parameters());
    return g;
}

TrainOutputs run_training(Trainer& trainer, const std::string& out_dir,
                          const std::function<void(const StepReport&)>& on_step)
{
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec)
        throw DataError("cannot create output directory " + out_dir + ": " + ec.message());
    TrainOutputs out;
    out.log_path = (fs::path(out_dir) / "train.jsonl").string();
    std::ofstream log(out.log_path, trainer.global_step() == 0 ? std::ios::trunc : std::ios::app);
    if (!log)
        throw DataError("cannot write " + out.log_path);

    const auto& tc = trainer.config().train;
    while (!trainer.finished()) {
        StepReport rep;
        try {
            rep = trainer.step();
        } catch (const NumericalError& e) {
            Checkpoint snap = trainer.checkpoint();
            snap.meta["kind"] = "nan_snapshot";
            snap.meta["error"] = e.what();
            write_checkpoint((fs::path(out_dir) / "nan_snapshot.m2tckpt").string(), snap);
            throw;
        }
        log << to_json(rep).dump() << '\n';
        if (!log)
            throw DataError("write failed for " + out.log_path);
        if (on_step)
            on_step(rep);
        const std::int64_t done = trainer.global_step();
        if (tc.checkpoint_every > 0 && done % (tc.checkpoint_every * tc.steps_per_epoch) == 0 &&
            done < tc.total_steps()) {
            const auto epoch = done / tc.steps_per_epoch;
            write_checkpoint((fs::path(out_dir) / ("epoch_" + std::to_string(epoch) + ".m2tckpt")).string(),
                             trainer.checkpoint());
        }
    }
    log.flush();
    out.final_checkpoint = (fs::path(out_dir) / "final.m2tckpt").string();
    write_checkpoint(out.final_checkpoint, trainer.checkpoint());
    return out;
}

} // namespace m2t
