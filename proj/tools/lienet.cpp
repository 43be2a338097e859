#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "lienet/checkpoint.hpp"
#include "lienet/gradcheck.hpp"
#include "lienet/imageio.hpp"
#include "lienet/metrics.hpp"
#include "lienet/network.hpp"
#include "lienet/trainer.hpp"

namespace fs = std::filesystem;
using namespace lienet;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitContract = 1;
constexpr int kExitIo = 2;

// Rethrows a StructuralError from `fn` with the flag name in front.
template <typename Fn>
auto flag_value(const char* flag, Fn&& fn) {
    try {
        return fn();
    } catch (const StructuralError& e) {
        throw StructuralError(std::string(flag) + ": " + e.what());
    }
}

struct NetFlags {
    std::string dia_set = "0+1+2+3+4";
    std::string tie_mode = "mirror_tied";
    std::string skip_mode = "literal";

    void attach(CLI::App* cmd, bool with_skip = true) {
        cmd->add_option("--dia-set", dia_set, "Dilation rates, e.g. 0+1+2+3+4 or 2+3+4")->capture_default_str();
        cmd->add_option("--tie-mode", tie_mode, "mirror_tied or untied")->capture_default_str();
        if (with_skip) cmd->add_option("--skip-mode", skip_mode, "literal or single")->capture_default_str();
    }

    NetworkConfig config() const {
        NetworkConfig cfg;
        cfg.dia_set = flag_value("--dia-set", [&] { return parse_dia_set(dia_set); });
        cfg.tie_mode = flag_value("--tie-mode", [&] { return parse_tie_mode(tie_mode); });
        cfg.skip_mode = flag_value("--skip-mode", [&] { return parse_skip_mode(skip_mode); });
        flag_value("--dia-set", [&] {
            cfg.validate();
            return 0;
        });
        return cfg;
    }
};

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << text;
    if (!out) throw IoError("failed writing " + path.string());
}

// ---- train ---------------------------------------------------------------------

struct TrainFlags {
    std::string data;
    std::string out;
    int epochs = 360;
    double lr = 0.01;
    int batch = 40;
    std::uint64_t seed = 0;
    int crop = 0;
    double train_fraction = 0.9;
    bool wall_time = false;
    bool quiet = false;
    NetFlags net;
};

int smallest_side(const fs::path& root) {
    int side = 0;
    for (const auto& pair : scan_dataset(root)) {
        for (const auto& p : {pair.low, pair.high}) {
            const ImageSize s = read_image_size(p);
            const int m = std::min(s.height, s.width);
            side = side == 0 ? m : std::min(side, m);
        }
    }
    return side;
}

int run_train(const TrainFlags& f, int threads) {
    TrainConfig cfg;
    cfg.epochs = f.epochs;
    cfg.base_lr = f.lr;
    cfg.batch_size = f.batch;
    cfg.seed = f.seed;
    cfg.train_fraction = f.train_fraction;
    cfg.threads = threads;
    cfg.log_wall_time = f.wall_time;
    if (f.crop < 0) throw StructuralError("--crop: must be >= 0");
    cfg.crop = f.crop;
    if (cfg.crop == 0) {
        const int side = smallest_side(f.data);
        if (side == 0) throw StructuralError("--data: no image pairs in " + f.data);
        cfg.crop = std::min(TrainConfig{}.crop, side);
    }
    if (cfg.epochs < 1) throw StructuralError("--epochs: must be >= 1");
    if (!(cfg.base_lr > 0)) throw StructuralError("--lr: must be > 0");
    if (cfg.batch_size < 1) throw StructuralError("--batch: must be >= 1");
    if (!(cfg.train_fraction > 0 && cfg.train_fraction <= 1)) throw StructuralError("--train-fraction: must be in (0,1]");
    const NetworkConfig net_cfg = f.net.config();

    const EpochCallback report = [&](const EpochLog& log) {
        if (!f.quiet) std::cout << log.to_json_line() << '\n' << std::flush;
    };
    const TrainResult result = train(f.data, cfg, net_cfg, f.out, report);
    std::cout << "crop: " << cfg.crop << '\n';
    std::cout << "train_pairs: " << result.train_names.size() << '\n';
    std::cout << "test_pairs: " << result.test_names.size() << '\n';
    std::cout << "checkpoint: " << (fs::path(f.out) / "checkpoint.json").string() << '\n';
    return kExitOk;
}

// ---- enhance / eval ---------------------------------------------------------------

int run_enhance(const std::string& checkpoint, const std::string& in, const std::string& out) {
    const Network<float> net = load_checkpoint<float>(checkpoint);
    const Tensor<float> low = read_image(in);
    const Tensor<float> enhanced = flag_value("--in", [&] { return enhance(net, low); });
    write_image(enhanced, out);
    std::cout << "wrote " << out << " (" << enhanced.height() << "x" << enhanced.width() << ")\n";
    return kExitOk;
}

struct EvalFlags {
    std::string checkpoint;
    std::string data;
    std::string report;
    std::string split;
    bool baseline = false;
};

int run_eval(const EvalFlags& f, int threads) {
    if (f.checkpoint.empty() && !f.baseline) {
        throw StructuralError("--checkpoint: required unless --baseline is given");
    }
    EvalOptions opts;
    opts.threads = threads;
    if (!f.split.empty()) opts.names = read_split_test_names(f.split);
    EvalReport report;
    if (f.baseline) {
        report = evaluate(f.data, nullptr, opts);
    } else {
        const Network<float> net = load_checkpoint<float>(f.checkpoint);
        report = evaluate(f.data, &net, opts);
    }
    if (!f.report.empty()) write_file(f.report, report.to_json());
    std::cout << report.to_text();
    return kExitOk;
}

// ---- audit ------------------------------------------------------------------------

int run_audit(const NetFlags& nf, int height, int width, const std::string& json_path) {
    const NetworkConfig cfg = nf.config();
    if (height < 8 || width < 8) throw StructuralError(height < 8 ? "--height: must be >= 8" : "--width: must be >= 8");
    const FlopReport flops = net_flop_report(cfg, height, width);
    const std::size_t params = net_param_count(cfg);
    std::cout << "params: " << params << '\n';
    std::cout << "dia_set: " << format_dia_set(cfg.dia_set) << '\n';
    std::cout << "tie_mode: " << to_string(cfg.tie_mode) << '\n';
    std::cout << "skip_mode: " << to_string(cfg.skip_mode) << '\n';
    std::cout << "input: " << height << "x" << width << '\n';
    std::cout << flops.to_text();
    if (!json_path.empty()) {
        const std::string doc = "{\"params\":" + std::to_string(params) + ",\"dia_set\":\"" +
                                format_dia_set(cfg.dia_set) + "\",\"tie_mode\":\"" +
                                std::string(to_string(cfg.tie_mode)) + "\",\"skip_mode\":\"" +
                                std::string(to_string(cfg.skip_mode)) + "\",\"height\":" +
                                std::to_string(height) + ",\"width\":" + std::to_string(width) +
                                ",\"flops\":" + flops.to_json() + "}\n";
        if (json_path == "-") {
            std::cout << doc;
        } else {
            write_file(json_path, doc);
        }
    }
    return kExitOk;
}

// ---- gradcheck --------------------------------------------------------------------

int run_gradcheck(std::uint64_t seed, int cases) {
    GradcheckOptions opts;
    opts.seed = seed;
    opts.cases = cases;
    if (cases < 1) throw StructuralError("--cases: must be >= 1");
    const auto results = run_gradcheck_suite(opts);
    bool ok = true;
    std::size_t width = 9;
    for (const auto& r : results) width = std::max(width, r.component.size());
    for (const auto& r : results) {
        char err[32];
        std::snprintf(err, sizeof(err), "%.3e", r.max_rel_error);
        std::cout << r.component << std::string(width + 2 - r.component.size(), ' ') << "cases " << r.cases
                  << "  max_rel_error " << err << "  " << (r.passed() ? "ok" : "FAIL") << '\n';
        ok = ok && r.passed();
    }
    std::cout << "gradcheck: " << (ok ? "pass" : "fail") << " (tolerance " << kGradcheckTolerance << ")\n";
    return ok ? kExitOk : kExitContract;
}

// ---- bench ------------------------------------------------------------------------

int run_bench(const std::string& checkpoint, int height, int width, int iters, int warmup) {
    if (height < 8 || width < 8) throw StructuralError(height < 8 ? "--height: must be >= 8" : "--width: must be >= 8");
    if (iters < 1) throw StructuralError("--iters: must be >= 1");
    if (warmup < 0) throw StructuralError("--warmup: must be >= 0");
    const Network<float> net = checkpoint.empty() ? Network<float>::initialize(NetworkConfig{}, 0)
                                                  : load_checkpoint<float>(checkpoint);
    Tensor<float> x({1, 3, height, width});
    for (std::size_t k = 0; k < x.size(); ++k) x[k] = static_cast<float>((k * 2654435761u % 1000) / 1000.0);

    std::cout << "# forward wall time on the host CPU, single image, single thread.\n"
              << "# Not comparable with GPU or embedded-board runtime figures.\n";
    for (int i = 0; i < warmup; ++i) (void)net_forward(x, net);
    std::vector<double> ms;
    for (int i = 0; i < iters; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        (void)net_forward(x, net);
        ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
    }
    const double mean = std::accumulate(ms.begin(), ms.end(), 0.0) / static_cast<double>(ms.size());
    double var = 0;
    for (double v : ms) var += (v - mean) * (v - mean);
    const double sd = ms.size() > 1 ? std::sqrt(var / static_cast<double>(ms.size() - 1)) : 0.0;
    std::cout << "input: " << height << "x" << width << '\n'
              << "params: " << net.param_count() << '\n'
              << "iters: " << iters << '\n'
              << "warmup: " << warmup << '\n'
              << "mean_ms: " << mean << '\n'
              << "stddev_ms: " << sd << '\n';
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Ultra-lightweight low-light image enhancement"};
    app.require_subcommand(1);
    int threads = 1;
    app.add_option("--threads", threads, "Worker threads for batch and eval parallelism")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    app.fallthrough();

    TrainFlags tf;
    auto* train_cmd = app.add_subcommand("train", "Train on a <root>/low, <root>/high dataset");
    train_cmd->add_option("--data", tf.data, "Dataset root")->required();
    train_cmd->add_option("--out", tf.out, "Output directory for checkpoints and logs")->required();
    train_cmd->add_option("--epochs", tf.epochs)->capture_default_str();
    train_cmd->add_option("--lr", tf.lr, "Base learning rate")->capture_default_str();
    train_cmd->add_option("--batch", tf.batch)->capture_default_str();
    train_cmd->add_option("--seed", tf.seed)->capture_default_str();
    train_cmd->add_option("--crop", tf.crop, "Square crop size; 0 picks min(180, smallest image side)")
        ->capture_default_str();
    train_cmd->add_option("--train-fraction", tf.train_fraction)->capture_default_str();
    train_cmd->add_flag("--log-wall-time", tf.wall_time, "Record per-epoch seconds in the log");
    train_cmd->add_flag("--quiet", tf.quiet, "Do not echo epoch logs");
    tf.net.attach(train_cmd);

    std::string enh_ckpt, enh_in, enh_out;
    auto* enhance_cmd = app.add_subcommand("enhance", "Enhance one PNG image");
    enhance_cmd->add_option("--checkpoint", enh_ckpt)->required();
    enhance_cmd->add_option("--in", enh_in)->required();
    enhance_cmd->add_option("--out", enh_out)->required();

    EvalFlags ef;
    auto* eval_cmd = app.add_subcommand("eval", "PSNR/SSIM over a dataset");
    eval_cmd->add_option("--checkpoint", ef.checkpoint);
    eval_cmd->add_option("--data", ef.data, "Dataset root")->required();
    eval_cmd->add_option("--report", ef.report, "Write the JSON report here");
    eval_cmd->add_option("--split", ef.split, "split.json from train; evaluate its test pairs only");
    eval_cmd->add_flag("--baseline", ef.baseline, "Score the unenhanced low images");

    NetFlags af;
    int audit_h = 400;
    int audit_w = 600;
    std::string audit_json;
    auto* audit_cmd = app.add_subcommand("audit", "Parameter count and itemized FLOP report");
    af.attach(audit_cmd);
    audit_cmd->add_option("--height", audit_h)->capture_default_str();
    audit_cmd->add_option("--width", audit_w)->capture_default_str();
    audit_cmd->add_option("--json", audit_json, "Also write the report as JSON ('-' for stdout)");

    std::uint64_t gc_seed = 0;
    int gc_cases = 20;
    auto* gradcheck_cmd = app.add_subcommand("gradcheck", "64-bit finite-difference gradient suite");
    gradcheck_cmd->add_option("--seed", gc_seed)->capture_default_str();
    gradcheck_cmd->add_option("--cases", gc_cases, "Cases per component")->capture_default_str();

    SynthOptions so;
    std::string synth_out;
    auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic low/normal-light dataset");
    synth_cmd->add_option("--count", so.count)->capture_default_str();
    synth_cmd->add_option("--size", so.size)->capture_default_str();
    synth_cmd->add_option("--seed", so.seed)->capture_default_str();
    synth_cmd->add_option("--out", synth_out)->required();

    std::string bench_ckpt;
    int bench_h = 400;
    int bench_w = 600;
    int bench_iters = 10;
    int bench_warmup = 2;
    auto* bench_cmd = app.add_subcommand("bench", "Forward-pass wall time");
    bench_cmd->add_option("--checkpoint", bench_ckpt, "Defaults to a freshly initialized network");
    bench_cmd->add_option("--height", bench_h)->capture_default_str();
    bench_cmd->add_option("--width", bench_w)->capture_default_str();
    bench_cmd->add_option("--iters", bench_iters)->capture_default_str();
    bench_cmd->add_option("--warmup", bench_warmup)->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitContract;
    }

    try {
        if (train_cmd->parsed()) return run_train(tf, threads);
        if (enhance_cmd->parsed()) return run_enhance(enh_ckpt, enh_in, enh_out);
        if (eval_cmd->parsed()) return run_eval(ef, threads);
        if (audit_cmd->parsed()) return run_audit(af, audit_h, audit_w, audit_json);
        if (gradcheck_cmd->parsed()) return run_gradcheck(gc_seed, gc_cases);
        if (synth_cmd->parsed()) {
            flag_value("--size/--count", [&] {
                synth_pairs(so, synth_out);
                return 0;
            });
            std::cout << "wrote " << so.count << " pairs to " << synth_out << '\n';
            return kExitOk;
        }
        if (bench_cmd->parsed()) return run_bench(bench_ckpt, bench_h, bench_w, bench_iters, bench_warmup);
    } catch (const StructuralError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitContract;
    } catch (const NonFiniteLoss& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitContract;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitIo;
    } catch (const CheckpointError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitIo;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitIo;
    }
    return kExitContract;
}
