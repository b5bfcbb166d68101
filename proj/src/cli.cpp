#include "m2t/cli.hpp"

#include "m2t/inference.hpp"
#include "m2t/kernels/kernels.hpp"
#include "m2t/metrics.hpp"
#include "m2t/train.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <optional>
#include <sstream>

namespace m2t {

namespace fs = std::filesystem;

namespace {

enum Exit { kOk = 0, kConfig = 1, kData = 2, kNumerical = 3 };

Vec3 parse_vec3(const std::string& s, const char* flag)
{
    Vec3 v{};
    std::istringstream in(s);
    std::string part;
    int n = 0;
    while (std::getline(in, part, ',')) {
        if (n == 3)
            throw ConfigError(std::string(flag) + " expects d,h,w");
        try {
            std::size_t used = 0;
            v[n] = std::stoll(part, &used);
            if (used != part.size())
                throw std::invalid_argument(part);
        } catch (const std::logic_error&) {
            throw ConfigError(std::string(flag) + ": '" + part + "' is not an integer");
        }
        ++n;
    }
    if (n != 3)
        throw ConfigError(std::string(flag) + " expects d,h,w");
    return v;
}

void require_file(const std::string& path, const char* what)
{
    if (!fs::is_regular_file(path))
        throw DataError(std::string(what) + " not found: " + path);
}

void make_dir(const std::string& dir)
{
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec)
        throw DataError("cannot create directory " + dir + ": " + ec.message());
}

struct Options {
    std::string config, out, checkpoint, mri, pred, ref, mask, structures, resume;
    std::optional<std::uint64_t> seed;
    std::string stride, patch;
    int threads = 1;
};

void apply_threads(int n)
{
    if (n < 1)
        throw ConfigError("--threads must be at least 1");
    kernels::set_threads(n);
}

int cmd_gen_phantom(const Options& o, std::ostream& out)
{
    PhantomSpec spec = phantom_spec_from_json(read_json_file(o.config));
    if (o.seed)
        spec.seed = *o.seed;
    const auto pair = make_phantom_pair(spec);
    make_dir(o.out);
    const auto mri = (fs::path(o.out) / "mri.rvol").string();
    const auto ct = (fs::path(o.out) / "ct.rvol").string();
    write_rvol(mri, pair.mri);
    write_rvol(ct, pair.ct);
    const Json manifest{{"spec", to_json(spec)},
                        {"mri", {{"file", "mri.rvol"}, {"digest", file_digest(mri)}}},
                        {"ct", {{"file", "ct.rvol"}, {"digest", file_digest(ct)}}}};
    write_json_file((fs::path(o.out) / "manifest.json").string(), manifest);
    out << "wrote " << mri << " and " << ct << '\n';
    return kOk;
}

int cmd_train(const Options& o, std::ostream& out)
{
    RunConfig cfg = run_config_from_json(read_json_file(o.config));
    if (o.seed)
        cfg.seed = *o.seed;
    for (const auto& p : cfg.data.pairs) {
        require_file(p.mri, "MRI volume");
        require_file(p.ct, "CT volume");
    }
    std::optional<Checkpoint> resume;
    if (!o.resume.empty())
        resume = read_checkpoint(o.resume);
    auto data = load_training_data(cfg.data);
    Trainer trainer(cfg, std::move(data));
    if (resume)
        trainer.restore(*resume);
    std::optional<StepReport> last;
    const auto res = run_training(trainer, o.out, [&](const StepReport& r) { last = r; });
    if (last)
        out << to_json(*last).dump() << '\n';
    out << "checkpoint " << res.final_checkpoint << '\n';
    return kOk;
}

int cmd_infer(const Options& o, std::ostream& out)
{
    require_file(o.checkpoint, "checkpoint");
    require_file(o.mri, "MRI volume");
    std::optional<Vec3> stride, patch;
    if (!o.stride.empty())
        stride = parse_vec3(o.stride, "--stride");
    if (!o.patch.empty())
        patch = parse_vec3(o.patch, "--patch");
    const Volume sct = synthesize_file(o.mri, o.checkpoint, o.out, stride, patch);
    out << "wrote " << o.out << " (" << sct.comment << ")\n";
    return kOk;
}

std::vector<StructureMasks> load_structures(const std::string& dir)
{
    std::vector<StructureMasks> out;
    if (!fs::is_directory(dir))
        throw DataError("structure mask directory not found: " + dir);
    std::vector<fs::path> preds;
    for (const auto& e : fs::directory_iterator(dir)) {
        const std::string name = e.path().filename().string();
        const std::string suffix = ".pred.rvol";
        if (name.size() > suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0)
            preds.push_back(e.path());
    }
    std::sort(preds.begin(), preds.end());
    for (const auto& p : preds) {
        const std::string file = p.filename().string();
        const std::string name = file.substr(0, file.size() - std::string(".pred.rvol").size());
        const auto ref = (p.parent_path() / (name + ".ref.rvol")).string();
        require_file(ref, "reference structure mask");
        out.push_back({name, read_rvol(p.string()), read_rvol(ref)});
    }
    if (out.empty())
        throw DataError("no <name>.pred.rvol masks in " + dir);
    return out;
}

int cmd_eval(const Options& o, std::ostream& out)
{
    require_file(o.pred, "predicted volume");
    require_file(o.ref, "reference volume");
    const Volume pred = read_rvol(o.pred), ref = read_rvol(o.ref);
    require_same_extents(pred, ref, "eval");
    Volume body;
    std::string mask_id;
    if (!o.mask.empty()) {
        require_file(o.mask, "body mask");
        body = read_rvol(o.mask);
        mask_id = fs::path(o.mask).filename().string();
    } else {
        body = body_mask(ref);
        mask_id = "body_mask(ref)";
    }
    const auto structures =
        o.structures.empty() ? std::vector<StructureMasks>{bone_structures(pred, ref)} : load_structures(o.structures);
    const MetricsReport report = evaluate(pred, ref, body, structures, mask_id);
    Json j = to_json(report);
    j["pred"] = fs::path(o.pred).filename().string();
    j["ref"] = fs::path(o.ref).filename().string();
    write_json_file(o.out, j);
    out << j.dump() << '\n';
    return kOk;
}

} // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    CLI::App app{"MRI to CT synthesis"};
    app.require_subcommand(1);
    Options o;

    auto add_common = [&](CLI::App* c) {
        c->add_option("--seed", o.seed, "Override the configured seed");
        c->add_option("--threads", o.threads, "GEMM worker threads (results are thread-count independent)");
    };

    auto* gen = app.add_subcommand("gen-phantom", "Write a synthetic MRI/CT pair");
    gen->add_option("--config", o.config, "Phantom spec (JSON)")->required();
    gen->add_option("--out", o.out, "Output directory")->required();
    add_common(gen);

    auto* train = app.add_subcommand("train", "Train generator and discriminator");
    train->add_option("--config", o.config, "Run config (JSON)")->required();
    train->add_option("--out", o.out, "Output directory for log and checkpoints")->required();
    train->add_option("--resume", o.resume, "Training checkpoint to continue from");
    add_common(train);

    auto* infer = app.add_subcommand("infer", "Synthesize a CT volume from an MRI volume");
    infer->add_option("--checkpoint", o.checkpoint, "Checkpoint holding a generator")->required();
    infer->add_option("--mri", o.mri, "Input MRI (RVOL)")->required();
    infer->add_option("--out", o.out, "Output sCT (RVOL)")->required();
    infer->add_option("--stride", o.stride, "Window stride d,h,w (default half the patch)");
    infer->add_option("--patch", o.patch, "Window extents d,h,w (default: training patch)");
    add_common(infer);

    auto* eval = app.add_subcommand("eval", "Masked MAE/SSIM/PSNR and Dice report");
    eval->add_option("--pred", o.pred, "Predicted CT in HU (RVOL)")->required();
    eval->add_option("--ref", o.ref, "Reference CT in HU (RVOL)")->required();
    eval->add_option("--mask", o.mask, "Body mask (RVOL); default derived from the reference");
    eval->add_option("--structures", o.structures,
                     "Directory of <name>.pred.rvol / <name>.ref.rvol masks; default bone threshold");
    eval->add_option("--out", o.out, "Report path (JSON)")->required();
    add_common(eval);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "m2t: error: " << e.what() << '\n';
        return kConfig;
    }

    try {
        apply_threads(o.threads);
        if (gen->parsed())
            return cmd_gen_phantom(o, out);
        if (train->parsed())
            return cmd_train(o, out);
        if (infer->parsed())
            return cmd_infer(o, out);
        return cmd_eval(o, out);
    } catch (const ConfigError& e) {
        err << "m2t: config error: " << e.what() << '\n';
        return kConfig;
    } catch (const ShapeError& e) {
        err << "m2t: config error: " << e.what() << '\n';
        return kConfig;
    } catch (const DataError& e) {
        err << "m2t: data error: " << e.what() << '\n';
        return kData;
    } catch (const NumericalError& e) {
        err << "m2t: numerical error: " << e.what() << '\n';
        return kNumerical;
    }
}

} // namespace m2t
