// Command-line driver: synthesize phantom datasets, train the model, correct
// volumes, and evaluate correction quality. Every run is deterministic under
// a fixed --seed and writes a run manifest with per-stage timings.
//
// Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric failure.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "hunet/metrics.hpp"
#include "hunet/model.hpp"
#include "hunet/phantom.hpp"
#include "hunet/train.hpp"
#include "hunet/volume_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

class StageClock {
public:
    void start(const std::string& stage) {
        stage_ = stage;
        t0_ = std::chrono::steady_clock::now();
    }
    void stop() {
        const auto t1 = std::chrono::steady_clock::now();
        timings_[stage_] = std::chrono::duration<double, std::milli>(t1 - t0_).count();
    }
    json& timings() { return timings_; }

private:
    std::string stage_;
    std::chrono::steady_clock::time_point t0_;
    json timings_ = json::object();
};

void write_manifest(const fs::path& dir, const std::string& command, const json& config,
                    std::uint64_t seed, const json& inputs, const json& outputs, json timings) {
    json m;
    m["command"] = command;
    m["config"] = config;
    m["seed"] = seed;
    m["inputs"] = inputs;
    m["outputs"] = outputs;
    m["timings_ms"] = std::move(timings);
    std::ofstream out(dir / "run_manifest.json");
    if (!out) throw hunet::IoError("cannot write run manifest in " + dir.string());
    out << m.dump(2) << "\n";
}

// ---- train config plumbing -----------------------------------------------------

json config_to_json(const hunet::TrainConfig& c) {
    return json{{"learning_rate", c.learning_rate},
                {"batch_size", c.batch_size},
                {"epochs", c.epochs},
                {"weight_decay", c.weight_decay},
                {"seed", c.seed},
                {"image_size", c.image_size},
                {"latent_dim", c.latent_dim},
                {"weights",
                 {{"lambda_kl", c.weights.lambda_kl},
                  {"lambda_sparsity", c.weights.lambda_sparsity},
                  {"lambda_tv", c.weights.lambda_tv},
                  {"lambda_mse", c.weights.lambda_mse},
                  {"beta", c.weights.beta}}}};
}

void config_from_json(const json& j, hunet::TrainConfig& c) {
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.seed = j.value("seed", c.seed);
    c.image_size = j.value("image_size", c.image_size);
    c.latent_dim = j.value("latent_dim", c.latent_dim);
    if (j.contains("weights")) {
        const json& w = j["weights"];
        c.weights.lambda_kl = w.value("lambda_kl", c.weights.lambda_kl);
        c.weights.lambda_sparsity = w.value("lambda_sparsity", c.weights.lambda_sparsity);
        c.weights.lambda_tv = w.value("lambda_tv", c.weights.lambda_tv);
        c.weights.lambda_mse = w.value("lambda_mse", c.weights.lambda_mse);
        c.weights.beta = w.value("beta", c.weights.beta);
    }
}

// ---- synth ------------------------------------------------------------------------

struct SynthArgs {
    int n = 16;
    int size = 64;
    std::uint64_t seed = 0;
    std::string out;
};

int run_synth(const SynthArgs& a) {
    StageClock clock;
    clock.start("generate_and_write");
    hunet::write_dataset(a.out, a.seed, a.n, a.size);
    clock.stop();

    write_manifest(a.out, "synth", json{{"n", a.n}, {"size", a.size}}, a.seed, json::array(),
                   json{{"dataset", a.out}}, clock.timings());
    std::cout << "synth: wrote " << a.n << " phantoms of size " << a.size << " to " << a.out << "\n";
    return 0;
}

// ---- train ------------------------------------------------------------------------

struct TrainArgs {
    std::string data, out, config_path, resume;
    hunet::TrainConfig cfg = hunet::TrainConfig::desk();
    CLI::App* cmd = nullptr;
};

int run_train(TrainArgs& a) {
    // precedence: desk defaults < config file < explicit flags
    hunet::TrainConfig file_cfg = hunet::TrainConfig::desk();
    if (!a.config_path.empty()) {
        std::ifstream in(a.config_path);
        if (!in) throw hunet::IoError("cannot open config: " + a.config_path);
        json j;
        try {
            in >> j;
        } catch (const json::exception& e) {
            throw hunet::ParseError(std::string("config is not valid JSON: ") + e.what(), 0, "config");
        }
        config_from_json(j, file_cfg);
    }
    auto keep_flag = [&](const std::string& flag, auto& dst, auto& src) {
        if (a.cmd->count(flag) == 0) dst = src;
    };
    keep_flag("--lr", a.cfg.learning_rate, file_cfg.learning_rate);
    keep_flag("--batch-size", a.cfg.batch_size, file_cfg.batch_size);
    keep_flag("--epochs", a.cfg.epochs, file_cfg.epochs);
    keep_flag("--weight-decay", a.cfg.weight_decay, file_cfg.weight_decay);
    keep_flag("--seed", a.cfg.seed, file_cfg.seed);
    a.cfg.latent_dim = file_cfg.latent_dim;
    a.cfg.weights = file_cfg.weights;

    StageClock clock;
    clock.start("load_dataset");
    auto items = hunet::load_dataset(a.data);
    if (items.empty()) throw hunet::ContractError("dataset is empty: " + a.data);
    a.cfg.image_size = items.front().phantom.size;
    std::vector<hunet::TrainPair> pairs(items.size());
    for (std::size_t i = 0; i < items.size(); ++i) {
        pairs[i].x = items[i].phantom.biased;
        pairs[i].y = items[i].phantom.clean;
    }
    clock.stop();

    std::optional<hunet::ModelParams> resume;
    if (!a.resume.empty()) resume = hunet::load_checkpoint(a.resume);

    fs::create_directories(a.out);
    const std::string ckpt = (fs::path(a.out) / "checkpoint.bin").string();
    const std::string history_path = (fs::path(a.out) / "loss_history.csv").string();
    std::ofstream history(history_path);
    if (!history) throw hunet::IoError("cannot write loss history: " + history_path);
    history << "epoch,kl_latent,kl_sparsity,tv,mse,total\n";
    history.precision(17);

    clock.start("train");
    auto result = hunet::train(pairs, a.cfg, ckpt, resume, [&](const hunet::EpochRecord& r, const hunet::ModelParams&) {
        history << r.epoch << "," << r.kl_latent << "," << r.sparsity << "," << r.tv << "," << r.mse
                << "," << r.total << "\n";
        history.flush();
        std::cout << "epoch " << r.epoch << " total " << r.total << " (kl " << r.kl_latent << ", sparsity "
                  << r.sparsity << ", tv " << r.tv << ", mse " << r.mse << ")\n";
    });
    clock.stop();

    write_manifest(a.out, "train", config_to_json(a.cfg), a.cfg.seed, json{{"data", a.data}},
                   json{{"checkpoint", ckpt}, {"loss_history", history_path}}, clock.timings());
    std::cout << "train: " << result.history.size() << " epochs, final total "
              << (result.history.empty() ? 0.0 : result.history.back().total) << "\n";
    return 0;
}

// ---- correct -----------------------------------------------------------------------

struct CorrectArgs {
    std::string model, in, out;
    int samples = 1;
    std::uint64_t seed = 0;
    std::string precision = "f32";
};

int run_correct(const CorrectArgs& a) {
    StageClock clock;
    clock.start("load_model");
    hunet::ModelParams params = hunet::load_checkpoint(a.model);
    clock.stop();

    clock.start("load_volume");
    hunet::Volume vol = hunet::read_volume(a.in);
    clock.stop();

    if (vol.nx != vol.ny || !hunet::is_pow2(vol.nx))
        throw hunet::DimensionError("input slices are " + std::to_string(vol.nx) + "x" +
                                    std::to_string(vol.ny) +
                                    "; supported sizes are square powers of two (32, 64, 128, 256, ...)");
    const int m = vol.nx;
    const hunet::Precision prec =
        a.precision == "f64" ? hunet::Precision::f64 : hunet::Precision::f32;

    fs::create_directories(a.out);
    const bool nii = a.in.size() > 4 && a.in.compare(a.in.size() - 4, 4, ".nii") == 0;
    const std::string ext = nii ? ".nii" : ".f32";

    hunet::Volume field = hunet::make_volume(m, m, vol.nz);
    hunet::Volume mean_out = hunet::make_volume(m, m, vol.nz);
    std::vector<hunet::Volume> sample_out;
    for (int s = 0; s < a.samples; ++s) sample_out.push_back(hunet::make_volume(m, m, vol.nz));

    hunet::Rng master(a.seed);
    clock.start("prepare_model");
    const hunet::Corrector corrector(params, prec);
    clock.stop();
    json per_slice = json::array();
    clock.start("correct");
    for (int z = 0; z < vol.nz; ++z) {
        hunet::Rng slice_rng = master.split(static_cast<std::uint64_t>(z));
        const auto t0 = std::chrono::steady_clock::now();
        auto res = corrector.run(vol.slice(z), m, slice_rng, a.samples);
        const auto t1 = std::chrono::steady_clock::now();
        per_slice.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
        field.set_slice(z, res.u.data);
        mean_out.set_slice(z, res.mean_output.data);
        for (int s = 0; s < a.samples; ++s) sample_out[s].set_slice(z, res.samples[s].data);
    }
    clock.stop();

    clock.start("write");
    json outputs;
    auto emit = [&](const std::string& name, const hunet::Volume& v) {
        const std::string path = (fs::path(a.out) / (name + ext)).string();
        hunet::write_volume(path, v);
        outputs[name] = path;
    };
    emit("scalar_field", field);
    emit("corrected_mean", mean_out);
    for (int s = 0; s < a.samples; ++s) emit("corrected_s" + std::to_string(s), sample_out[s]);
    clock.stop();

    double total_ms = 0.0;
    for (const auto& t : per_slice) total_ms += t.get<double>();
    json timings = clock.timings();
    timings["per_slice_ms"] = per_slice;
    timings["inference_ms_per_slice"] = vol.nz ? total_ms / vol.nz : 0.0;

    write_manifest(a.out, "correct",
                   json{{"model", a.model}, {"samples", a.samples}, {"precision", a.precision}}, a.seed,
                   json{{"volume", a.in}}, outputs, std::move(timings));
    std::cout << "correct: " << vol.nz << " slice(s), mean " << (vol.nz ? total_ms / vol.nz : 0.0)
              << " ms/slice\n";
    return 0;
}

// ---- eval --------------------------------------------------------------------------

struct EvalArgs {
    std::string pairs, corrected, reference, out;
};

int run_eval(const EvalArgs& a) {
    const std::string ref_dir = a.pairs.empty() ? a.reference : a.pairs;
    StageClock clock;
    clock.start("load");
    auto items = hunet::load_dataset(ref_dir);
    clock.stop();

    std::vector<std::string> missing;
    struct Row {
        std::string id;
        double cv_before, cv_after, snr_before, snr_after;
    };
    std::vector<Row> rows;

    clock.start("evaluate");
    for (const auto& item : items) {
        std::vector<double> after;
        if (a.pairs.empty()) {
            const std::string base = (fs::path(a.corrected) / item.id).string();
            if (!fs::exists(base + ".f32") && !fs::exists(base + ".nii")) {
                missing.push_back(item.id);
                continue;
            }
            hunet::Volume v = fs::exists(base + ".f32") ? hunet::read_raw(base)
                                                        : hunet::read_nifti(base + ".nii");
            if (v.nx != item.phantom.size || v.ny != item.phantom.size)
                throw hunet::DimensionError("corrected volume for '" + item.id + "' has wrong size");
            after = v.slice(0);
        } else {
            after = item.phantom.clean; // ideal-correction reference bound
        }
        Row r;
        r.id = item.id;
        r.cv_before = hunet::cv_metric(item.phantom.biased, item.phantom.tissue_mask);
        r.cv_after = hunet::cv_metric(after, item.phantom.tissue_mask);
        r.snr_before = hunet::snr_metric(item.phantom.biased, item.phantom.tissue_mask,
                                         item.phantom.background_mask);
        r.snr_after =
            hunet::snr_metric(after, item.phantom.tissue_mask, item.phantom.background_mask);
        rows.push_back(r);
    }
    clock.stop();

    if (!missing.empty()) {
        std::string list;
        for (const auto& id : missing) list += (list.empty() ? "" : ", ") + id;
        throw hunet::IoError("no corrected volume for: " + list);
    }

    fs::create_directories(a.out);
    const std::string report_path = (fs::path(a.out) / "report.csv").string();
    std::ofstream report(report_path);
    report.precision(17);
    report << "id,cv_before,cv_after,snr_before,snr_after\n";
    double s1 = 0, s2 = 0, s3 = 0, s4 = 0;
    for (const Row& r : rows) {
        report << r.id << "," << r.cv_before << "," << r.cv_after << "," << r.snr_before << ","
               << r.snr_after << "\n";
        s1 += r.cv_before;
        s2 += r.cv_after;
        s3 += r.snr_before;
        s4 += r.snr_after;
    }
    const double n = static_cast<double>(rows.size());
    json agg{{"n", rows.size()},
             {"cv_before_mean", s1 / n},
             {"cv_after_mean", s2 / n},
             {"snr_before_mean", s3 / n},
             {"snr_after_mean", s4 / n}};
    std::ofstream aggf(fs::path(a.out) / "aggregate.json");
    aggf << agg.dump(2) << "\n";

    write_manifest(a.out, "eval", json{{"mode", a.pairs.empty() ? "corrected" : "pairs"}}, 0,
                   json{{"reference", ref_dir}, {"corrected", a.corrected}},
                   json{{"report", report_path}}, clock.timings());
    std::cout << "eval: " << rows.size() << " volumes, mean CV " << s1 / n << " -> " << s2 / n << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"probabilistic Hadamard U-Net bias-field correction"};
    app.require_subcommand(1);

    auto pow2_check = CLI::Validator(
        [](std::string& s) {
            const long v = std::strtol(s.c_str(), nullptr, 10);
            return hunet::is_pow2(v) ? std::string() : std::string("must be a power of two");
        },
        "POW2");

    SynthArgs synth;
    CLI::App* synth_cmd = app.add_subcommand("synth", "generate a synthetic phantom dataset");
    synth_cmd->add_option("--n", synth.n, "number of phantoms")->check(CLI::PositiveNumber);
    synth_cmd->add_option("--size", synth.size, "slice side (power of two, >= 32)")->check(pow2_check);
    synth_cmd->add_option("--seed", synth.seed, "master seed");
    synth_cmd->add_option("--out", synth.out, "output directory")->required();

    TrainArgs train_args;
    CLI::App* train_cmd = app.add_subcommand("train", "train on a phantom dataset");
    train_args.cmd = train_cmd;
    train_cmd->add_option("--data", train_args.data, "dataset directory")->required();
    train_cmd->add_option("--out", train_args.out, "output directory")->required();
    train_cmd->add_option("--config", train_args.config_path, "JSON config file");
    train_cmd->add_option("--resume", train_args.resume, "checkpoint to continue from");
    train_cmd->add_option("--epochs", train_args.cfg.epochs)->check(CLI::PositiveNumber);
    train_cmd->add_option("--batch-size", train_args.cfg.batch_size)->check(CLI::PositiveNumber);
    train_cmd->add_option("--lr", train_args.cfg.learning_rate)->check(CLI::PositiveNumber);
    train_cmd->add_option("--weight-decay", train_args.cfg.weight_decay)->check(CLI::NonNegativeNumber);
    train_cmd->add_option("--seed", train_args.cfg.seed);

    CorrectArgs correct_args;
    CLI::App* correct_cmd = app.add_subcommand("correct", "correct a volume with a trained model");
    correct_cmd->add_option("--model", correct_args.model, "checkpoint path")->required();
    correct_cmd->add_option("--in", correct_args.in, "input volume (.nii or .f32)")->required();
    correct_cmd->add_option("--out", correct_args.out, "output directory")->required();
    correct_cmd->add_option("--samples", correct_args.samples, "number of prior samples")
        ->check(CLI::NonNegativeNumber);
    correct_cmd->add_option("--seed", correct_args.seed);
    correct_cmd->add_option("--precision", correct_args.precision)
        ->check(CLI::IsMember({"f32", "f64"}));

    EvalArgs eval_args;
    CLI::App* eval_cmd = app.add_subcommand("eval", "report CV/SNR before and after correction");
    auto* pairs_opt = eval_cmd->add_option("--pairs", eval_args.pairs, "dataset dir (ideal-correction bound)");
    auto* corr_opt = eval_cmd->add_option("--corrected", eval_args.corrected, "directory of corrected volumes");
    eval_cmd->add_option("--reference", eval_args.reference, "reference dataset dir");
    eval_cmd->add_option("--out", eval_args.out, "output directory")->required();
    pairs_opt->excludes(corr_opt);
    corr_opt->needs("--reference");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (synth_cmd->parsed()) return run_synth(synth);
        if (train_cmd->parsed()) return run_train(train_args);
        if (correct_cmd->parsed()) return run_correct(correct_args);
        if (eval_cmd->parsed()) {
            if (eval_args.pairs.empty() && eval_args.corrected.empty()) {
                std::cerr << "eval: need --pairs or --corrected/--reference\n";
                return kExitUsage;
            }
            return run_eval(eval_args);
        }
    } catch (const hunet::NonFiniteError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return 0;
}
