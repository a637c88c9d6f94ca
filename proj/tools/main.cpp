// ctdl command line front end: phantom/simulate/recon/train/eval/diagnose/render.
// Exit codes: 0 success, 2 usage or configuration error, 3 numerical failure.
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ctdl/acquisition.hpp"
#include "ctdl/baselines.hpp"
#include "ctdl/diagnostics.hpp"
#include "ctdl/io.hpp"
#include "ctdl/phantoms.hpp"
#include "ctdl/pipelines.hpp"
#include "ctdl/projector.hpp"

namespace fs = std::filesystem;
using namespace ctdl;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

// Everything the subcommands can consume, with the flat config-file keys.
struct Options {
    int grid_nx = 128, grid_ny = 128;
    double grid_pixel_mm = 1.0;
    int geom_views = 0, geom_dets = 0; // 0: derive from scale
    double geom_pitch_mm = 0.0, geom_sod_mm = 0.0, geom_sdd_mm = 0.0;
    double geom_scale = 1.0;
    std::string sim_i0 = "inf";
    double sim_ratio = 0.0;
    std::uint64_t sim_seed = 0;
    std::string sim_schedule_mode = "fixed"; // fixed | schedule
    std::string train_arch = "dualnet";
    int train_depth = 2, train_base_channels = 8, train_batch = 4, train_epochs = 30;
    double train_lr = 1e-4;
    bool train_flip = true, train_detach_h = true;
    std::string out_dir = ".";
};

const std::set<std::string> kConfigKeys = {
    "grid.nx",        "grid.ny",       "grid.pixel_mm",      "geom.views",
    "geom.dets",      "geom.pitch_mm", "geom.sod_mm",        "geom.sdd_mm",
    "geom.scale",     "sim.i0",        "sim.ratio",          "sim.seed",
    "sim.schedule_mode", "train.arch", "train.depth",        "train.base_channels",
    "train.lr",       "train.batch",   "train.epochs",       "train.flip",
    "train.detach_h", "paths.out_dir",
};

void apply_config_file(Options& opt, const std::string& path) {
    const auto kv = parse_config_file(path, kConfigKeys);
    auto geti = [&](const char* k, int& dst) {
        if (auto it = kv.find(k); it != kv.end()) dst = std::stoi(it->second);
    };
    auto getd = [&](const char* k, double& dst) {
        if (auto it = kv.find(k); it != kv.end()) dst = std::stod(it->second);
    };
    auto gets = [&](const char* k, std::string& dst) {
        if (auto it = kv.find(k); it != kv.end()) dst = it->second;
    };
    auto getb = [&](const char* k, bool& dst) {
        if (auto it = kv.find(k); it != kv.end()) dst = it->second == "1" || it->second == "true";
    };
    geti("grid.nx", opt.grid_nx);
    geti("grid.ny", opt.grid_ny);
    getd("grid.pixel_mm", opt.grid_pixel_mm);
    geti("geom.views", opt.geom_views);
    geti("geom.dets", opt.geom_dets);
    getd("geom.pitch_mm", opt.geom_pitch_mm);
    getd("geom.sod_mm", opt.geom_sod_mm);
    getd("geom.sdd_mm", opt.geom_sdd_mm);
    getd("geom.scale", opt.geom_scale);
    gets("sim.i0", opt.sim_i0);
    getd("sim.ratio", opt.sim_ratio);
    if (auto it = kv.find("sim.seed"); it != kv.end()) opt.sim_seed = std::stoull(it->second);
    gets("sim.schedule_mode", opt.sim_schedule_mode);
    gets("train.arch", opt.train_arch);
    geti("train.depth", opt.train_depth);
    geti("train.base_channels", opt.train_base_channels);
    getd("train.lr", opt.train_lr);
    geti("train.batch", opt.train_batch);
    geti("train.epochs", opt.train_epochs);
    getb("train.flip", opt.train_flip);
    getb("train.detach_h", opt.train_detach_h);
    gets("paths.out_dir", opt.out_dir);
}

ImageGrid make_grid(const Options& opt) {
    ImageGrid grid{opt.grid_nx, opt.grid_ny, opt.grid_pixel_mm};
    validate(grid);
    return grid;
}

FanBeamGeometry make_geom(const Options& opt) {
    FanBeamGeometry geom = scaled_geometry(opt.geom_scale);
    if (opt.geom_views > 0) geom.n_views = opt.geom_views;
    if (opt.geom_dets > 0) geom.n_dets = opt.geom_dets;
    if (opt.geom_pitch_mm > 0) geom.det_pitch_mm = opt.geom_pitch_mm;
    if (opt.geom_sod_mm > 0) geom.sod_mm = opt.geom_sod_mm;
    if (opt.geom_sdd_mm > 0) geom.sdd_mm = opt.geom_sdd_mm;
    validate(geom);
    return geom;
}

double parse_i0(const std::string& text) {
    if (text == "inf" || text == "infinity") return kInfinitePhotons;
    const double v = std::stod(text);
    if (!(v > 0)) throw ConfigError("sim.i0 must be positive or 'inf'");
    return v;
}

std::string out_path(const Options& opt, const std::string& name) {
    fs::create_directories(opt.out_dir);
    return (fs::path(opt.out_dir) / name).string();
}

std::vector<double> parse_double_list(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item == "inf" ? kInfinitePhotons : std::stod(item));
    return out;
}

// ---- subcommand bodies -----------------------------------------------------

int cmd_phantom(const Options& opt, const std::string& kind, int n_ellipses,
                const std::string& name) {
    const ImageGrid grid = make_grid(opt);
    Image img;
    if (kind == "shepp-logan") {
        img = shepp_logan(grid);
    } else if (kind == "disc") {
        img = disc_phantom(grid, 0.4 * std::min(grid.half_width_mm(), grid.half_height_mm()));
    } else if (kind == "ellipses") {
        std::mt19937_64 rng(opt.sim_seed);
        img = random_ellipse_phantom(grid, rng, n_ellipses);
    } else {
        throw ConfigError("unknown phantom kind '" + kind + "'");
    }
    const std::string path = out_path(opt, name);
    write_image(path, img);
    double lo = img.values.front(), hi = lo;
    for (double v : img.values) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    std::printf("phantom %s %dx%d range [%g, %g] -> %s\n", kind.c_str(), grid.nx, grid.ny, lo, hi,
                path.c_str());
    return kExitOk;
}

int cmd_simulate(const Options& opt, const std::string& image_path) {
    const ImageGrid grid = make_grid(opt);
    const FanBeamGeometry geom = make_geom(opt);
    const Image f = ingest_raw_image(image_path, grid);

    const Sinogram y = forward_project(f, geom);
    const double i0 = parse_i0(opt.sim_i0);
    std::mt19937_64 rng(opt.sim_seed);
    double ratio = opt.sim_ratio;
    if (opt.sim_schedule_mode == "schedule") ratio = sample_truncation_ratio(rng);
    const ProjectionMask T = truncation_mask(geom, ratio);
    const ImageMask I = roi_mask(grid, geom, T);

    Sinogram p = simulate_low_dose(y, i0, rng);
    for (std::size_t i = 0; i < p.values.size(); ++i)
        if (!T.values[i]) p.values[i] = 0.0;

    write_sinogram(out_path(opt, "y.ctdl"), y);
    write_sinogram(out_path(opt, "p.ctdl"), p);
    write_projection_mask(out_path(opt, "mask_t.ctdl"), T);
    write_image_mask(out_path(opt, "mask_i.ctdl"), I);
    std::printf("simulate views=%d dets=%d kept=%d i0=%s ratio=%g -> %s\n", geom.n_views,
                geom.n_dets, T.kept, opt.sim_i0.c_str(), ratio, opt.out_dir.c_str());
    return kExitOk;
}

int cmd_recon(const Options& opt, const std::string& method, const std::string& sino_path,
              const std::string& truth_path, const std::string& checkpoint, double tv_lambda,
              int tv_iters, double tv_step, const std::string& name) {
    const ImageGrid grid = make_grid(opt);
    const FanBeamGeometry geom = make_geom(opt);
    const Sinogram p = read_sinogram(sino_path, geom);
    const ProjectionMask T = truncation_mask(geom, opt.sim_ratio);
    const ImageMask I = roi_mask(grid, geom, T);

    Image recon;
    if (method == "fbp") {
        recon = fbp(p, grid);
    } else if (method == "extrapolate-fbp") {
        recon = fbp(extrapolate_sinogram(p, T), grid);
    } else if (method == "tv") {
        TvConfig cfg;
        cfg.lambda = tv_lambda;
        cfg.n_iters = tv_iters;
        cfg.step = tv_step;
        const TvResult r = tv_reconstruct(p, T, grid, cfg);
        if (!r.converged) {
            std::fprintf(stderr, "tv_reconstruct diverged (objective rose 10 iterations)\n");
            return kExitNumerical;
        }
        recon = r.image;
    } else if (method == "model") {
        if (checkpoint.empty()) throw ConfigError("recon model: --checkpoint required");
        const TrainedModel model = load_model(checkpoint);
        recon = reconstruct(model, p, T);
    } else {
        throw ConfigError("unknown recon method '" + method + "'");
    }
    check_finite(recon.values, "recon");
    write_image(out_path(opt, name), recon);

    if (!truth_path.empty()) {
        const Image f = ingest_raw_image(truth_path, grid);
        std::ofstream csv(out_path(opt, "metrics.csv"));
        csv << MetricsReport::csv_header() << "\n";
        csv << evaluate(method, "full", f, recon, nullptr).csv_row() << "\n";
        csv << evaluate(method, "roi", f, recon, &I.values).csv_row() << "\n";
    }
    std::printf("recon %s -> %s\n", method.c_str(), out_path(opt, name).c_str());
    return kExitOk;
}

DatasetConfig dataset_config(const Options& opt, const ImageGrid& grid,
                             const FanBeamGeometry& geom, int n, const std::string& i0_list,
                             const std::string& ratio_list, std::uint64_t seed,
                             const std::string& split) {
    DatasetConfig cfg;
    cfg.grid = grid;
    cfg.geom = geom;
    cfg.kind = DatasetConfig::PhantomKind::RandomEllipses;
    cfg.n_phantoms = n;
    cfg.enumerate_ratios = opt.sim_schedule_mode == "schedule" && ratio_list.empty();
    cfg.i0_choices = parse_double_list(i0_list);
    cfg.ratio_choices = parse_double_list(ratio_list);
    cfg.seed = seed;
    cfg.split = split;
    return cfg;
}

int cmd_train(const Options& opt, int n_train, int n_val, const std::string& i0_list,
              const std::string& ratio_list) {
    const ImageGrid grid = make_grid(opt);
    const FanBeamGeometry geom = make_geom(opt);
    const Dataset train_set = build_dataset(
        dataset_config(opt, grid, geom, n_train, i0_list, ratio_list, opt.sim_seed, "train"));
    const Dataset val_set = build_dataset(
        dataset_config(opt, grid, geom, n_val, i0_list, ratio_list, opt.sim_seed + 1, "val"));

    TrainConfig cfg;
    cfg.depth = opt.train_depth;
    cfg.base_channels = opt.train_base_channels;
    cfg.lr = opt.train_lr;
    cfg.batch = opt.train_batch;
    cfg.epochs = opt.train_epochs;
    cfg.flip_augment = opt.train_flip;
    cfg.detach_h = opt.train_detach_h;
    cfg.seed = opt.sim_seed;
    cfg.checkpoint_dir = out_path(opt, "checkpoints");
    fs::create_directories(cfg.checkpoint_dir);

    const ArchitectureKind arch = architecture_from_string(opt.train_arch);
    const TrainResult result = train(arch, train_set, val_set, grid, cfg);
    for (double v : result.curves.train_loss)
        if (!std::isfinite(v)) {
            std::fprintf(stderr, "training loss became non-finite\n");
            return kExitNumerical;
        }

    save_model(out_path(opt, "model.ckpt"), result.model);
    std::ofstream csv(out_path(opt, "loss_curves.csv"));
    csv << "epoch,train,val\n";
    for (std::size_t e = 0; e < result.curves.train_loss.size(); ++e)
        csv << (e + 1) << "," << result.curves.train_loss[e] << "," << result.curves.val_loss[e]
            << "\n";
    std::printf("train %s epochs=%d final_train=%g final_val=%g -> %s\n", opt.train_arch.c_str(),
                result.model.epochs_completed, result.curves.train_loss.back(),
                result.curves.val_loss.back(), out_path(opt, "model.ckpt").c_str());
    return kExitOk;
}

int cmd_eval(const Options& opt, int n_test, const std::string& i0_list,
             const std::string& ratio_list, const std::vector<std::string>& checkpoints) {
    const ImageGrid grid = make_grid(opt);
    const FanBeamGeometry geom = make_geom(opt);
    if (n_test < 1) throw ConfigError("eval: empty test set");
    const Dataset test_set = build_dataset(
        dataset_config(opt, grid, geom, n_test, i0_list, ratio_list, opt.sim_seed + 2, "test"));

    std::vector<std::pair<std::string, TrainedModel>> models;
    for (const auto& ck : checkpoints) models.emplace_back(fs::path(ck).stem().string(),
                                                           load_model(ck));

    struct Key {
        double ratio, i0;
        std::string method;
        bool operator<(const Key& o) const {
            return std::tie(ratio, i0, method) < std::tie(o.ratio, o.i0, o.method);
        }
    };
    std::map<Key, std::pair<double, int>> cells; // sum nmse (roi), count

    std::ofstream csv(out_path(opt, "eval.csv"));
    csv << "sample,method," << MetricsReport::csv_header() << "\n";
    for (std::size_t s = 0; s < test_set.samples.size(); ++s) {
        const Sample& smp = test_set.samples[s];
        auto emit = [&](const std::string& method, const Image& recon) {
            const auto full = evaluate(std::to_string(s), "full", smp.f, recon, nullptr);
            const auto roi = evaluate(std::to_string(s), "roi", smp.f, recon, &smp.I.values);
            csv << s << "," << method << "," << full.csv_row() << "\n";
            csv << s << "," << method << "," << roi.csv_row() << "\n";
            auto& cell = cells[{smp.ratio, smp.i0, method}];
            cell.first += roi.nmse;
            cell.second += 1;
        };
        emit("fbp", fbp(smp.p, grid));
        for (const auto& [name, model] : models) emit(name, reconstruct(model, smp.p, smp.T));
    }
    csv << "# cell averages: ratio,i0,method,mean_roi_nmse\n";
    for (const auto& [key, cell] : cells)
        csv << "# " << key.ratio << "," << key.i0 << "," << key.method << ","
            << cell.first / cell.second << "\n";
    std::printf("eval %d samples x %zu methods -> %s\n", n_test, models.size() + 1,
                out_path(opt, "eval.csv").c_str());
    return kExitOk;
}

int cmd_diagnose(const Options& opt, const std::vector<std::string>& checkpoints, int window) {
    if (checkpoints.empty()) throw ConfigError("diagnose: at least one --checkpoint required");
    const ImageGrid grid = make_grid(opt);
    const FanBeamGeometry geom = make_geom(opt);
    const Dataset probe = build_dataset(
        dataset_config(opt, grid, geom, 1, opt.sim_i0, std::to_string(opt.sim_ratio),
                       opt.sim_seed + 3, "probe"));
    const Sample& smp = probe.samples.front();

    std::vector<std::string> names;
    std::vector<std::vector<double>> spectra;
    for (const auto& ck : checkpoints) {
        const TrainedModel model = load_model(ck);
        Graph stage1 = model.stage1;
        const bool proj_input = model.arch == ArchitectureKind::ProjectionCNN ||
                                model.arch == ArchitectureKind::DualNet;
        Tensor x = proj_input ? sinogram_to_tensor(smp.p) : image_to_tensor(fbp(smp.p, grid));
        x = reflect_pad_to_multiple(x, stage1.spatial_divisor());
        ForwardCache cache;
        forward(stage1, x, RunMode::Eval, cache);
        const Tensor& feat = cache.act[std::size_t(stage1.backbone_out)];

        std::vector<std::vector<double>> signals;
        for (int ch = 0; ch < feat.c; ++ch) {
            std::vector<double> flat(std::size_t(feat.h) * feat.w);
            for (int y = 0; y < feat.h; ++y)
                for (int xx = 0; xx < feat.w; ++xx)
                    flat[std::size_t(y) * feat.w + xx] = feat.at(0, ch, y, xx);
            for (auto& win : window_signal(flat, window)) signals.push_back(std::move(win));
        }
        names.push_back(fs::path(ck).stem().string());
        spectra.push_back(singular_spectrum(signals, window));
    }

    std::ofstream csv(out_path(opt, "spectra.csv"));
    csv << "index";
    for (const auto& n : names) csv << "," << n;
    csv << "\n";
    std::size_t rows = 0;
    for (const auto& s : spectra) rows = std::max(rows, s.size());
    for (std::size_t i = 0; i < rows; ++i) {
        csv << i;
        for (const auto& s : spectra) csv << "," << (i < s.size() ? s[i] : 0.0);
        csv << "\n";
    }
    std::printf("diagnose %zu checkpoints window=%d -> %s\n", checkpoints.size(), window,
                out_path(opt, "spectra.csv").c_str());
    return kExitOk;
}

int cmd_render(const Options& opt, const std::string& image_path, double lo, double hi,
               const std::string& name) {
    if (!(hi > lo)) throw ConfigError("render: window high must exceed low");
    const ImageGrid grid = make_grid(opt);
    const Image img = ingest_raw_image(image_path, grid);
    std::vector<std::uint8_t> pixels(img.values.size());
    for (std::size_t i = 0; i < pixels.size(); ++i) {
        const double t = (img.values[i] - lo) / (hi - lo);
        pixels[i] = std::uint8_t(std::lround(std::clamp(t, 0.0, 1.0) * 255.0));
    }
    const std::string path = out_path(opt, name);
    write_pgm(path, grid.nx, grid.ny, pixels);
    std::printf("render window [%g, %g] -> %s\n", lo, hi, path.c_str());
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"fan-beam CT simulation and learned interior reconstruction toolkit"};
    app.require_subcommand(1);

    Options opt;
    std::string config_path;
    app.add_option("--config", config_path, "flat key=value configuration file")
        ->check(CLI::ExistingFile);

    auto add_grid = [&](CLI::App* cmd) {
        cmd->add_option("--nx", opt.grid_nx, "grid columns");
        cmd->add_option("--ny", opt.grid_ny, "grid rows");
        cmd->add_option("--pixel-mm", opt.grid_pixel_mm, "pixel size [mm]");
    };
    auto add_geom = [&](CLI::App* cmd) {
        cmd->add_option("--scale", opt.geom_scale, "shrink factor of the reference scan");
        cmd->add_option("--views", opt.geom_views, "view count override");
        cmd->add_option("--dets", opt.geom_dets, "detector count override");
        cmd->add_option("--pitch-mm", opt.geom_pitch_mm, "detector pitch override [mm]");
        cmd->add_option("--sod-mm", opt.geom_sod_mm, "source-isocenter distance [mm]");
        cmd->add_option("--sdd-mm", opt.geom_sdd_mm, "source-detector distance [mm]");
    };
    auto add_out = [&](CLI::App* cmd) {
        cmd->add_option("--out-dir", opt.out_dir, "output directory");
    };

    // phantom
    auto* phantom = app.add_subcommand("phantom", "generate a phantom image");
    std::string kind = "shepp-logan", out_name = "phantom.ctdl";
    int n_ellipses = 8;
    phantom->add_option("--kind", kind, "shepp-logan | disc | ellipses");
    phantom->add_option("--n-ellipses", n_ellipses, "random ellipse count");
    phantom->add_option("--seed", opt.sim_seed, "rng seed");
    phantom->add_option("--out", out_name, "output file name");
    add_grid(phantom);
    add_out(phantom);

    // simulate
    auto* simulate = app.add_subcommand("simulate", "project + low-dose + truncation");
    std::string image_path;
    simulate->add_option("--image", image_path, "phantom container file")->required();
    simulate->add_option("--i0", opt.sim_i0, "incident photons, number or 'inf'");
    simulate->add_option("--ratio", opt.sim_ratio, "truncation ratio");
    simulate->add_option("--seed", opt.sim_seed, "rng seed");
    simulate->add_option("--schedule-mode", opt.sim_schedule_mode, "fixed | schedule");
    add_grid(simulate);
    add_geom(simulate);
    add_out(simulate);

    // recon
    auto* recon = app.add_subcommand("recon", "reconstruct one sinogram");
    std::string method = "fbp", sino_path, truth_path, checkpoint;
    double tv_lambda = 1e-3, tv_step = 1e-4;
    int tv_iters = 100;
    std::string recon_name = "recon.ctdl";
    recon->add_option("--method", method, "fbp | extrapolate-fbp | tv | model");
    recon->add_option("--sino", sino_path, "sinogram container file")->required();
    recon->add_option("--truth", truth_path, "ground truth for metrics (optional)");
    recon->add_option("--checkpoint", checkpoint, "model checkpoint (method=model)");
    recon->add_option("--ratio", opt.sim_ratio, "truncation ratio of the measurement");
    recon->add_option("--tv-lambda", tv_lambda, "TV weight");
    recon->add_option("--tv-iters", tv_iters, "TV iterations");
    recon->add_option("--tv-step", tv_step, "TV step size");
    recon->add_option("--out", recon_name, "output file name");
    add_grid(recon);
    add_geom(recon);
    add_out(recon);

    // train
    auto* train_cmd = app.add_subcommand("train", "train an architecture on generated data");
    int n_train = 64, n_val = 8;
    std::string i0_list = "inf", ratio_list = "0";
    train_cmd->add_option("--arch", opt.train_arch,
                          "image-unet | projection-cnn | wnet | dualnet");
    train_cmd->add_option("--n-train", n_train, "training phantom count");
    train_cmd->add_option("--n-val", n_val, "validation phantom count");
    train_cmd->add_option("--i0-list", i0_list, "comma list of photon counts (or inf)");
    train_cmd->add_option("--ratio-list", ratio_list, "comma list of truncation ratios");
    train_cmd->add_option("--depth", opt.train_depth, "U-Net depth");
    train_cmd->add_option("--base-channels", opt.train_base_channels, "first level width");
    train_cmd->add_option("--lr", opt.train_lr, "initial Adam learning rate");
    train_cmd->add_option("--batch", opt.train_batch, "minibatch size");
    train_cmd->add_option("--epochs", opt.train_epochs, "epoch count");
    train_cmd->add_flag("--flip,!--no-flip", opt.train_flip, "vertical flip augmentation");
    train_cmd->add_flag("--detach-h,!--no-detach-h", opt.train_detach_h,
                        "detach the noise head in the extrapolation term");
    train_cmd->add_option("--seed", opt.sim_seed, "rng seed");
    add_grid(train_cmd);
    add_geom(train_cmd);
    add_out(train_cmd);

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "aggregate metrics over a test set");
    int n_test = 16;
    std::vector<std::string> checkpoints;
    eval_cmd->add_option("--n-test", n_test, "test phantom count");
    eval_cmd->add_option("--i0-list", i0_list, "comma list of photon counts (or inf)");
    eval_cmd->add_option("--ratio-list", ratio_list, "comma list of truncation ratios");
    eval_cmd->add_option("--checkpoint", checkpoints, "model checkpoint(s)");
    eval_cmd->add_option("--seed", opt.sim_seed, "rng seed");
    add_grid(eval_cmd);
    add_geom(eval_cmd);
    add_out(eval_cmd);

    // diagnose
    auto* diagnose = app.add_subcommand("diagnose", "Hankel singular spectra of features");
    int window = 32;
    diagnose->add_option("--checkpoint", checkpoints, "model checkpoint(s)")->required();
    diagnose->add_option("--window", window, "1-D lifting window length");
    diagnose->add_option("--i0", opt.sim_i0, "probe photons");
    diagnose->add_option("--ratio", opt.sim_ratio, "probe truncation ratio");
    diagnose->add_option("--seed", opt.sim_seed, "rng seed");
    add_grid(diagnose);
    add_geom(diagnose);
    add_out(diagnose);

    // render
    auto* render = app.add_subcommand("render", "window an image to 8-bit PGM");
    double win_lo = 0.0, win_hi = 1.0;
    std::string render_name = "render.pgm";
    render->add_option("--image", image_path, "image container file")->required();
    render->add_option("--low", win_lo, "window low (display units)");
    render->add_option("--high", win_hi, "window high (display units)");
    render->add_option("--out", render_name, "output file name");
    add_grid(render);
    add_out(render);

    try {
        app.parse(argc, argv);
        if (!config_path.empty()) apply_config_file(opt, config_path);

        if (*phantom) return cmd_phantom(opt, kind, n_ellipses, out_name);
        if (*simulate) return cmd_simulate(opt, image_path);
        if (*recon)
            return cmd_recon(opt, method, sino_path, truth_path, checkpoint, tv_lambda, tv_iters,
                             tv_step, recon_name);
        if (*train_cmd) return cmd_train(opt, n_train, n_val, i0_list, ratio_list);
        if (*eval_cmd) return cmd_eval(opt, n_test, i0_list, ratio_list, checkpoints);
        if (*diagnose) return cmd_diagnose(opt, checkpoints, window);
        if (*render) return cmd_render(opt, image_path, win_lo, win_hi, render_name);
        return kExitConfig;
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitConfig;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const FormatError& e) {
        std::fprintf(stderr, "format error: %s\n", e.what());
        return kExitConfig;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const std::domain_error& e) {
        std::fprintf(stderr, "numerical error: %s\n", e.what());
        return kExitNumerical;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitNumerical;
    }
}
