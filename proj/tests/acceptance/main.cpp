// Acceptance runner: one PASS/FAIL line per criterion.

#include "CLI11.hpp"

#include "m2t/checkpoint.hpp"
#include "m2t/inference.hpp"
#include "m2t/kernels/kernels.hpp"
#include "m2t/losses.hpp"
#include "m2t/metrics.hpp"
#include "m2t/swin3d.hpp"
#include "m2t/train.hpp"
#include "support/op_cases.hpp"
#include "support/testing.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <set>
#include <sstream>

using namespace m2t;
using namespace m2t::testing;
namespace fs = std::filesystem;

namespace {

const std::string kData = M2T_TEST_DATA_DIR;

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

template <typename T>
void randomize_where(ParameterSet<T>& ps, Rng& rng, double amp, bool (*pred)(const std::string&))
{
    for (auto& [name, t] : ps.items()) {
        if (!pred(name))
            continue;
        auto tt = t;
        for (auto& v : tt.mutable_data())
            v = static_cast<T>(amp * (2.0 * rng.uniform() - 1.0));
    }
}

template <typename T>
void zero_where(ParameterSet<T>& ps, bool (*pred)(const std::string&))
{
    for (auto& [name, t] : ps.items()) {
        if (!pred(name))
            continue;
        auto tt = t;
        for (auto& v : tt.mutable_data())
            v = T(0);
    }
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// ---- 1: gradient fidelity -------------------------------------------------

constexpr double kGradH = 1e-3;
constexpr double kGradTol = 1e-3;
constexpr double kGradFloor = 1e-6;
constexpr double kGradFraction = 0.99;

struct GradTally {
    std::size_t checked = 0;
    std::size_t passed = 0;
    double worst = 0.0;
    std::string failing;

    void add(const GradcheckResult& r, const std::string& name = "")
    {
        std::size_t bad = 0;
        for (double e : r.errors) {
            ++checked;
            passed += e <= kGradTol ? 1 : 0;
            bad += e <= kGradTol ? 0 : 1;
            worst = std::max(worst, e);
        }
        if (bad > 0 && !name.empty())
            failing += (failing.empty() ? "" : ", ") + name + " " + std::to_string(bad);
    }
    double fraction() const { return checked == 0 ? 0.0 : static_cast<double>(passed) / checked; }
    std::string str() const
    {
        return std::to_string(passed) + "/" + std::to_string(checked) + " (" + fmt("%.4f", fraction()) + ")";
    }
};

template <typename Net>
GradTally network_gradcheck(Net& net, const Tensor64& x, std::uint64_t seed, std::size_t cap)
{
    GradTally t;
    for (const auto& [name, p] : net.parameters().items()) {
        // Roughly 1% of each tensor, at least two entries, at most `cap` to bound the runtime.
        const auto n = static_cast<std::size_t>(p.numel());
        const std::size_t sample = std::clamp<std::size_t>(n / 100, 2, cap);
        t.add(gradcheck<double>({p}, [&] { return probe_loss(net.forward(x)); }, kGradH, sample, seed++, kGradFloor,
                                false));
    }
    return t;
}

GeneratorConfig acceptance_generator()
{
    return GeneratorConfig::desk_default();
}

Outcome criterion1()
{
    const auto t0 = std::chrono::steady_clock::now();
    GradTally ops, swin;
    Rng rng(2024);
    for (const auto& c : op_cases<double>()) {
        std::vector<Tensor64> leaves;
        for (const auto& s : c.inputs)
            leaves.push_back(random_tensor<double>(s, rng));
        ops.add(gradcheck<double>(leaves, [&] { return probe_loss(c.fn(leaves)); }, kGradH, 0, 1, kGradFloor, false),
                c.name);
    }
    {
        ParameterSet<double> ps;
        auto p = make_swin_block<double>(ps, "b", 8, 2, {4, 4, 4});
        init_swin_block(p, rng);
        auto x = random_tensor<double>({1, 8, 4, 8, 4}, rng);
        std::vector<Tensor64> leaves{x};
        for (const auto& [name, t] : ps.items())
            leaves.push_back(t);
        swin.add(gradcheck<double>(leaves,
                                   [&] { return probe_loss(swin_block(x, p, WindowSpec::shifted_half({4, 4, 4}))); },
                                   kGradH, 0, 1, kGradFloor, false));
        SeededConvExtractor<double> fx(3);
        auto a = random_tensor<double>({1, 1, 2, 8, 8}, rng);
        const auto b = random_tensor<double>({1, 1, 2, 8, 8}, rng);
        ops.add(gradcheck<double>({a}, [&] { return perceptual_loss(a, b, fx); }, kGradH, 0, 1, kGradFloor, false),
                "perceptual_loss");
    }

    Generator<double> g(acceptance_generator(), 41);
    // Zero-initialized fusion would hide the transformer branch from the check.
    randomize_where<double>(g.parameters(), rng, 0.2, &Generator<double>::is_fusion_param);
    const auto xg = random_tensor<double>({1, 1, 8, 8, 8}, rng);
    const GradTally gen = network_gradcheck(g, xg, 100, 8);

    Discriminator<double> d(DiscriminatorConfig{}, 14);
    const auto xd = random_tensor<double>({1, 1, 8, 8, 8}, rng);
    const GradTally disc = network_gradcheck(d, xd, 200, 256);

    const double secs = seconds_since(t0);
    Outcome o;
    o.pass = true;
    for (const GradTally* t : std::initializer_list<const GradTally*>{&ops, &swin, &gen, &disc})
        o.pass &= t->fraction() >= kGradFraction;
    o.pass &= secs < 300.0;
    o.detail = "within rel " + fmt("%g", kGradTol) + " at h " + fmt("%g", kGradH) + ": ops " + ops.str() +
               ", swin block " + swin.str() + ", generator " + gen.str() + ", discriminator " + disc.str() + "; worst " +
               fmt("%.3g", std::max({ops.worst, swin.worst, gen.worst, disc.worst})) + "; " + fmt("%.1f", secs) + " s";
    if (!ops.failing.empty())
        o.detail += "; failing op entries: " + ops.failing;
    return o;
}

// ---- 2: structural identities ---------------------------------------------

Outcome criterion2()
{
    Rng rng(5);
    bool ok = true;
    std::ostringstream detail;

    const auto x = random_tensor<float>({2, 3, 8, 12, 8}, rng);
    for (const auto& spec : {WindowSpec::regular({4, 4, 4}), WindowSpec::shifted_half({4, 4, 4}),
                             WindowSpec::regular({2, 4, 8})}) {
        const auto w = window_partition(x, spec);
        const auto back = window_reverse(w, spec, 2, 3, {8, 12, 8});
        ok &= bit_equal(back.data(), x.data());
        if (spec.shifted())
            ok &= bit_equal(cyclic_shift(cyclic_shift(x, spec, false), spec, true).data(), x.data());
    }
    detail << "partition/shift round trips " << (ok ? "exact" : "NOT exact");

    const auto v = random_tensor<float>({2, 2, 4, 6, 8}, rng);
    const auto sub = haar3d(v);
    const double rt = max_abs_diff(haar3d_inverse(sub).data(), v.data());
    double ev = 0.0, es = 0.0;
    for (float f : v.data())
        ev += static_cast<double>(f) * f;
    for (float f : sub.data())
        es += static_cast<double>(f) * f;
    const double energy = std::abs(es - ev) / ev;
    ok &= rt <= 1e-5 && energy <= 1e-5;
    detail << "; haar round trip " << fmt("%.2g", rt) << ", energy rel " << fmt("%.2g", energy);

    const auto spec = WindowSpec::shifted_half({4, 4, 4});
    const Vec3 ext{8, 8, 8};
    const auto mask = attention_mask<double>(spec, ext);
    const auto scores = random_tensor<double>({mask.dim(0), 64, 64}, rng, -3, 3);
    const auto sm = softmax_lastdim(add(scores, mask));
    double row_err = 0.0, cross = 0.0;
    for (Index w = 0; w < mask.dim(0); ++w)
        for (Index i = 0; i < 64; ++i) {
            double rs = 0.0;
            for (Index j = 0; j < 64; ++j) {
                rs += sm.at({w, i, j});
                if (mask.at({w, i, j}) != 0.0)
                    cross = std::max(cross, sm.at({w, i, j}));
            }
            row_err = std::max(row_err, std::abs(rs - 1.0));
        }
    ok &= row_err <= 1e-6 && cross < 1e-8;
    detail << "; attention row error " << fmt("%.2g", row_err) << ", max cross-region weight " << fmt("%.2g", cross);
    return {ok, detail.str()};
}

// ---- 3: fusion ablation -----------------------------------------------------

Outcome criterion3()
{
    Generator<float> g(acceptance_generator(), 31);
    zero_where<float>(g.parameters(), &Generator<float>::is_fusion_param);
    Rng rng(32);
    const auto x = random_tensor<float>({1, 1, 16, 16, 16}, rng);
    const auto before = g.forward(x);
    bool ok = true;
    for (double amp : {0.05, 1.0, 25.0}) {
        randomize_where<float>(g.parameters(), rng, amp, &Generator<float>::is_transformer_param);
        ok &= bit_equal(g.forward(x).data(), before.data());
    }
    // Control: the branch matters once the projection is live.
    randomize_where<float>(g.parameters(), rng, 0.1, &Generator<float>::is_fusion_param);
    const bool control = !bit_equal(g.forward(x).data(), before.data());
    return {ok && control, std::string("output bitwise invariant under 3 transformer perturbations: ") +
                               (ok ? "yes" : "no") + "; live-fusion control differs: " + (control ? "yes" : "no")};
}

// ---- 4: sliding window ----------------------------------------------------

Outcome criterion4()
{
    std::ostringstream detail;
    bool ok = true;
    const Generator<float> g(acceptance_generator(), 51);
    const Vec3 patch{16, 16, 16}, half{8, 8, 8};

    const Volume flat({16, 32, 32}, Modality::MRI, IntensityUnit::Normalized, 0.25f);
    const Volume a = synthesize_volume(flat, g, plan_windows(flat.extents, patch, patch));
    const Volume b = synthesize_volume(flat, g, plan_windows(flat.extents, patch, half));
    const double gen_diff = max_abs_diff<float>(a.data, b.data);
    ok &= gen_diff == 0.0;
    detail << "constant input, generator: max |stride 16 - stride 8| " << fmt("%.3g", gen_diff);

    // The same comparison with a position-independent window model isolates the averaging.
    const WindowModel pointwise = [](const Tensor& t) { return tanh(scale(t, 2.0f)); };
    const double pw_diff = max_abs_diff<float>(synthesize_volume(flat, pointwise, plan_windows(flat.extents, patch, patch)).data,
                                               synthesize_volume(flat, pointwise, plan_windows(flat.extents, patch, half)).data);
    detail << ", pointwise model " << fmt("%.3g", pw_diff);
    ok &= pw_diff == 0.0;

    Rng rng(52);
    Volume mri({20, 24, 28}, Modality::MRI, IntensityUnit::Normalized);
    for (auto& v : mri.data)
        v = static_cast<float>(2.0 * rng.uniform() - 1.0);
    const auto plan = plan_windows(mri.extents, patch, Vec3{6, 5, 7});
    const Volume out = synthesize_volume(mri, g, plan);
    std::vector<double> acc(mri.data.size(), 0.0);
    std::vector<int> cov(mri.data.size(), 0);
    for (const auto& o : plan.origins) {
        const Tensor y = g.forward(to_tensor(crop(mri, o, patch)));
        const auto yd = y.data();
        std::size_t k = 0;
        for (Index z = 0; z < patch[0]; ++z)
            for (Index yy = 0; yy < patch[1]; ++yy)
                for (Index xx = 0; xx < patch[2]; ++xx, ++k) {
                    const auto off = mri.offset(o[0] + z, o[1] + yy, o[2] + xx);
                    acc[off] += yd[k];
                    ++cov[off];
                }
    }
    double oracle_err = 0.0;
    for (std::size_t i = 0; i < acc.size(); ++i)
        oracle_err = std::max(oracle_err, std::abs(acc[i] / cov[i] - out.data[i]));
    ok &= oracle_err <= 1e-6;
    detail << "; random input vs per-window oracle (" << plan.origins.size() << " windows) "
           << fmt("%.3g", oracle_err);

    int coverage_ok = 0;
    for (int trial = 0; trial < 50; ++trial) {
        Vec3 vol, p, s;
        for (int ax = 0; ax < 3; ++ax) {
            vol[ax] = rng.uniform_int(1, 24);
            p[ax] = rng.uniform_int(1, vol[ax]);
            s[ax] = rng.uniform_int(1, p[ax]);
        }
        const auto pl = plan_windows(vol, p, s);
        std::vector<std::int32_t> brute(static_cast<std::size_t>(vol[0] * vol[1] * vol[2]), 0);
        for (const auto& o : pl.origins)
            for (Index z = o[0]; z < o[0] + p[0]; ++z)
                for (Index y = o[1]; y < o[1] + p[1]; ++y)
                    for (Index x = o[2]; x < o[2] + p[2]; ++x)
                        ++brute[static_cast<std::size_t>((z * vol[1] + y) * vol[2] + x)];
        bool good = brute == pl.coverage;
        // Origins on the stride lattice except the clamped last one.
        for (int ax = 0; ax < 3; ++ax) {
            const auto origins = axis_origins(vol[ax], p[ax], s[ax]);
            for (std::size_t i = 0; i + 1 < origins.size(); ++i)
                good &= origins[i] == static_cast<Index>(i) * s[ax];
            good &= origins.back() + p[ax] <= vol[ax];
        }
        for (auto c : brute)
            good &= c >= 1;
        coverage_ok += good ? 1 : 0;
    }
    ok &= coverage_ok == 50;
    detail << "; coverage matches brute force in " << coverage_ok << "/50 combinations";
    return {ok, detail.str()};
}

// ---- 5: loss linearity ----------------------------------------------------

Outcome criterion5()
{
    const LossWeights w;
    bool ok = w.gan == 1.0 && w.l1 == 20.0 && w.perc == 1.0;
    Rng rng(9);
    double worst = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        const double c[3] = {3.0 * rng.uniform(), rng.uniform(), 2.0 * rng.uniform()};
        const double lambda[3] = {w.gan, w.l1, w.perc};
        auto total = [&](int doubled) {
            LossParts<double> p{Tensor64::scalar(c[0] * (doubled == 0 ? 2 : 1)),
                                Tensor64::scalar(c[1] * (doubled == 1 ? 2 : 1)),
                                Tensor64::scalar(c[2] * (doubled == 2 ? 2 : 1))};
            return total_generator_loss(p, w).item();
        };
        const double base = total(-1);
        for (int i = 0; i < 3; ++i) {
            const double delta = total(i) - base;
            // A few roundings of the total: the change is exact up to them.
            const double ulp = 4.0 * std::numeric_limits<double>::epsilon() * (base + lambda[i] * c[i]);
            const double err = std::abs(delta - lambda[i] * c[i]);
            worst = std::max(worst, err / ulp);
            ok &= err <= ulp;
        }
    }
    return {ok, "weights (1, 20, 1); 600 doublings, worst error " + fmt("%.2f", worst) +
                    " of the 4-ulp budget"};
}

// ---- 6: desk-scale learning -----------------------------------------------

constexpr double kMaxMaskedL1 = 0.05;
constexpr double kMaxMaeHu = 150.0;
constexpr double kMinSsim = 0.85;
constexpr double kMinDice = 0.90;
constexpr std::int64_t kMaxSteps = 2000;
constexpr double kMaxSeconds = 30.0 * 60.0;

struct DeskResult {
    double masked_l1 = 0.0;
    MetricsReport report;
    double seconds = 0.0;
    std::int64_t steps = 0;
    StepReport last;
};

RunConfig desk_run(std::int64_t epochs, std::int64_t steps_per_epoch, double lr, bool pure_l1)
{
    RunConfig cfg;
    cfg.seed = 11;
    cfg.train.max_lr = lr;
    cfg.train.epochs = epochs;
    cfg.train.steps_per_epoch = steps_per_epoch;
    cfg.train.patch = {16, 16, 16};
    cfg.train.batch = 2;
    if (pure_l1) {
        cfg.loss.gan = 0.0;
        cfg.loss.perc = 0.0;
    }
    cfg.data.phantom = desk_phantom_spec();
    return cfg;
}

DeskResult run_desk(const RunConfig& cfg, bool verbose)
{
    const auto t0 = std::chrono::steady_clock::now();
    Trainer trainer(cfg, load_training_data(cfg.data));
    DeskResult r;
    while (!trainer.finished()) {
        r.last = trainer.step();
        if (verbose && (r.last.step % 100 == 0))
            std::cerr << "  step " << r.last.step << " l1 " << r.last.g_l1 << " d " << r.last.d_loss << " ("
                      << fmt("%.0f", seconds_since(t0)) << " s)\n";
    }
    r.steps = trainer.global_step();

    const PhantomPair pair = make_phantom_pair(*cfg.data.phantom);
    const Volume sct = synthesize_to_hu(pair.mri, trainer.generator(), SynthesisOptions{cfg.train.patch, {}});
    r.seconds = seconds_since(t0);
    const Volume body = body_mask(pair.ct);
    const Volume a = normalize_hu(sct), b = normalize_hu(pair.ct);
    double acc = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < body.data.size(); ++i)
        if (body.data[i] != 0.0f) {
            acc += std::abs(static_cast<double>(a.data[i]) - b.data[i]);
            ++n;
        }
    r.masked_l1 = acc / static_cast<double>(n);
    r.report = evaluate(sct, pair.ct, body, {bone_structures(sct, pair.ct)});
    return r;
}

Json desk_json(const DeskResult& r, const RunConfig& cfg)
{
    return Json{{"run", to_json(cfg)},          {"steps", r.steps},
                {"seconds", r.seconds},         {"masked_l1_normalized", r.masked_l1},
                {"mae_hu", r.report.mae_hu},    {"ssim", r.report.ssim},
                {"psnr_db", r.report.psnr_db},  {"dice_bone", r.report.dice.at("bone")},
                {"last_step", to_json(r.last)}};
}

bool meets_thresholds(double l1, double mae, double ssim, double dice)
{
    return l1 < kMaxMaskedL1 && mae < kMaxMaeHu && ssim > kMinSsim && dice > kMinDice;
}

struct DeskBudget {
    std::int64_t epochs = 60;
    std::int64_t steps_per_epoch = 20;
    double lr = 1e-3;
};

Outcome criterion6(const DeskBudget& budget, bool verbose)
{
    std::ostringstream detail;
    const Json base = read_json_file(kData + "/desk_l1_baseline.json");
    const bool base_ok = meets_thresholds(base.at("masked_l1_normalized"), base.at("mae_hu"), base.at("ssim"),
                                          base.at("dice_bone"));
    detail << "pure-L1 baseline fixture: L1 " << fmt("%.4f", base.at("masked_l1_normalized").get<double>()) << ", MAE "
           << fmt("%.1f", base.at("mae_hu").get<double>()) << " HU, SSIM " << fmt("%.4f", base.at("ssim").get<double>())
           << ", Dice " << fmt("%.4f", base.at("dice_bone").get<double>()) << (base_ok ? "" : " (misses thresholds)");

    const RunConfig cfg = desk_run(budget.epochs, budget.steps_per_epoch, budget.lr, false);
    const DeskResult r = run_desk(cfg, verbose);
    const double dice_bone = r.report.dice.at("bone");
    const bool ok = base_ok && r.steps <= kMaxSteps && r.seconds < kMaxSeconds &&
                    meets_thresholds(r.masked_l1, r.report.mae_hu, r.report.ssim, dice_bone);
    detail << "; adversarial run " << r.steps << " steps in " << fmt("%.0f", r.seconds) << " s: masked L1 "
           << fmt("%.4f", r.masked_l1) << " (< 0.05), MAE " << fmt("%.1f", r.report.mae_hu) << " HU (< 150), SSIM "
           << fmt("%.4f", r.report.ssim) << " (> 0.85), Dice " << fmt("%.4f", dice_bone) << " (> 0.90)";
    return {ok, detail.str()};
}

// ---- 7: metric oracles ----------------------------------------------------

Outcome criterion7()
{
    std::ostringstream detail;
    const PhantomPair pair = make_phantom_pair(desk_phantom_spec());
    const Volume body = body_mask(pair.ct);
    const auto same = evaluate(pair.ct, pair.ct, body, {bone_structures(pair.ct, pair.ct)});
    bool ok = same.mae_hu == 0.0 && same.ssim == 1.0 && same.psnr_db == kPsnrCapDb && same.dice.at("bone") == 1.0;
    detail << "identical: MAE " << same.mae_hu << ", SSIM " << same.ssim << ", PSNR " << same.psnr_db << " dB, Dice "
           << same.dice.at("bone");

    Volume a({4, 4, 4}, Modality::MASK, IntensityUnit::Arbitrary), b = a;
    for (Index z = 1; z < 3; ++z)
        for (Index y = 1; y < 3; ++y)
            for (Index x = 1; x < 3; ++x) {
                a.at(z, y, x) = 1.0f;
                b.at(z, y, x + 1) = 1.0f;
            }
    const double d = dice(a, b);
    ok &= d == 0.5;
    detail << "; shifted cube Dice " << d;

    // 100 masked voxels, one off by 1: MSE 0.01 with data range 2.
    Volume pred({1, 10, 10}, Modality::CT, IntensityUnit::HU), ref = pred;
    Volume mask({1, 10, 10}, Modality::MASK, IntensityUnit::Arbitrary, 1.0f);
    pred.at(0, 3, 7) = 1.0f;
    const double p = psnr(pred, ref, mask, 2.0);
    const double want = 10.0 * std::log10(400.0);
    ok &= p == want && std::abs(p - 26.02) < 0.005;
    detail << "; PSNR case " << fmt("%.6f", p) << " dB";
    return {ok, detail.str()};
}

// ---- 8: determinism -------------------------------------------------------

Outcome criterion8(const fs::path& scratch)
{
    kernels::set_threads(1);
    RunConfig cfg = desk_run(2, 3, 1e-3, false);
    cfg.train.checkpoint_every = 1;
    std::vector<fs::path> dirs;
    for (int run = 0; run < 2; ++run) {
        const fs::path dir = scratch / ("det_" + std::to_string(run));
        fs::remove_all(dir);
        Trainer trainer(cfg, load_training_data(cfg.data));
        run_training(trainer, dir.string());
        const PhantomPair pair = make_phantom_pair(*cfg.data.phantom);
        write_rvol((dir / "mri.rvol").string(), pair.mri);
        synthesize_file((dir / "mri.rvol").string(), (dir / "final.m2tckpt").string(), (dir / "sct.rvol").string());
        dirs.push_back(dir);
    }
    bool ok = true;
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(dirs[0]))
        files.push_back(e.path().filename().string());
    std::sort(files.begin(), files.end());
    std::ostringstream detail;
    for (const auto& f : files) {
        const bool same = fs::exists(dirs[1] / f) && slurp(dirs[0] / f) == slurp(dirs[1] / f);
        ok &= same;
        detail << f << (same ? " identical" : " DIFFERS") << "; ";
    }
    ok &= files.size() >= 5;
    for (const auto& d : dirs)
        fs::remove_all(d);
    std::string s = detail.str();
    return {ok, s.substr(0, s.size() - 2)};
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"m2t acceptance criteria"};
    std::vector<int> only;
    std::vector<int> expect_fail;
    DeskBudget budget;
    std::string record_baseline;
    bool verbose = false;
    app.add_option("--only", only, "Run only these criteria")->check(CLI::Range(1, 8));
    app.add_option("--expect-fail", expect_fail, "Criteria known to fail; they do not affect the exit code")
        ->check(CLI::Range(1, 8));
    app.add_option("--desk-epochs", budget.epochs, "Epochs for the learning run");
    app.add_option("--desk-steps-per-epoch", budget.steps_per_epoch, "Steps per epoch for the learning run");
    app.add_option("--desk-lr", budget.lr, "Peak learning rate for the learning run");
    app.add_option("--record-baseline", record_baseline, "Run the pure-L1 baseline and write it to this path");
    app.add_flag("--verbose", verbose, "Progress on stderr");
    CLI11_PARSE(app, argc, argv);

    kernels::set_threads(1);
    const fs::path scratch = fs::temp_directory_path() / "m2t_acceptance";
    fs::create_directories(scratch);

    if (!record_baseline.empty()) {
        const RunConfig cfg = desk_run(budget.epochs, budget.steps_per_epoch, budget.lr, true);
        const DeskResult r = run_desk(cfg, verbose);
        write_json_file(record_baseline, desk_json(r, cfg));
        std::cout << desk_json(r, cfg).dump(2) << "\n";
        return 0;
    }

    const std::set<int> selected(only.begin(), only.end());
    const std::set<int> expected(expect_fail.begin(), expect_fail.end());
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
        {"gradient fidelity", criterion1},
        {"structural identities", criterion2},
        {"fusion ablation", criterion3},
        {"sliding window", criterion4},
        {"loss linearity", criterion5},
        {"desk-scale learning", [&] { return criterion6(budget, verbose); }},
        {"metric oracles", criterion7},
        {"determinism", [&] { return criterion8(scratch); }},
    };
    int unexpected = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!selected.empty() && !selected.count(id))
            continue;
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        const bool known = expected.count(id) > 0;
        std::cout << "criterion " << id << " " << criteria[i].first << ": " << (o.pass ? "PASS" : "FAIL")
                  << (known && !o.pass ? " (known)" : "") << " | " << o.detail << std::endl;
        if (o.pass == known)
            ++unexpected;
    }
    return unexpected == 0 ? 0 : 1;
}
