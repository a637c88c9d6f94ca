#include "ctdl/pipelines.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "ctdl/io.hpp"
#include "ctdl/optim.hpp"
#include "ctdl/projector.hpp"

namespace ctdl {

ArchitectureKind architecture_from_string(const std::string& name) {
    if (name == "image-unet") return ArchitectureKind::ImageUNet;
    if (name == "projection-cnn") return ArchitectureKind::ProjectionCNN;
    if (name == "wnet") return ArchitectureKind::WNet;
    if (name == "dualnet") return ArchitectureKind::DualNet;
    throw ConfigError("unknown architecture '" + name + "'");
}

std::string architecture_name(ArchitectureKind arch) {
    switch (arch) {
        case ArchitectureKind::ImageUNet: return "image-unet";
        case ArchitectureKind::ProjectionCNN: return "projection-cnn";
        case ArchitectureKind::WNet: return "wnet";
        case ArchitectureKind::DualNet: return "dualnet";
    }
    return "?";
}

// ---- tensor <-> field plumbing -------------------------------------------

Tensor image_to_tensor(const Image& img) {
    Tensor t(1, 1, img.grid.ny, img.grid.nx);
    t.v = img.values;
    return t;
}

Image tensor_to_image(const Tensor& t, int batch, const ImageGrid& grid) {
    if (t.c != 1 || t.h != grid.ny || t.w != grid.nx)
        throw std::invalid_argument("tensor_to_image: shape mismatch");
    Image img(grid);
    const std::size_t base = t.idx(batch, 0, 0, 0);
    std::copy(t.v.begin() + base, t.v.begin() + base + grid.size(), img.values.begin());
    return img;
}

Tensor sinogram_to_tensor(const Sinogram& sino) {
    Tensor t(1, 1, sino.geom.n_views, sino.geom.n_dets);
    t.v = sino.values;
    return t;
}

Sinogram tensor_to_sinogram(const Tensor& t, int batch, const FanBeamGeometry& geom) {
    if (t.c != 1 || t.h != geom.n_views || t.w != geom.n_dets)
        throw std::invalid_argument("tensor_to_sinogram: shape mismatch");
    Sinogram sino(geom);
    const std::size_t base = t.idx(batch, 0, 0, 0);
    std::copy(t.v.begin() + base, t.v.begin() + base + geom.size(), sino.values.begin());
    return sino;
}

Tensor projection_mask_to_tensor(const ProjectionMask& mask) {
    Tensor t(1, 1, mask.n_views, mask.n_dets);
    for (std::size_t i = 0; i < mask.values.size(); ++i) t.v[i] = mask.values[i] ? 1.0 : 0.0;
    return t;
}

Tensor image_mask_to_tensor(const ImageMask& mask) {
    Tensor t(1, 1, mask.ny, mask.nx);
    for (std::size_t i = 0; i < mask.values.size(); ++i) t.v[i] = mask.values[i] ? 1.0 : 0.0;
    return t;
}

Tensor reflect_pad_to_multiple(const Tensor& x, int divisor) {
    if (divisor < 1) throw std::invalid_argument("reflect_pad_to_multiple: bad divisor");
    const int H = (x.h + divisor - 1) / divisor * divisor;
    const int W = (x.w + divisor - 1) / divisor * divisor;
    if (H == x.h && W == x.w) return x;
    if (H - x.h > x.h - 1 || W - x.w > x.w - 1)
        throw std::invalid_argument("reflect_pad_to_multiple: padding exceeds mirror range");
    Tensor out(x.n, x.c, H, W);
    for (int b = 0; b < x.n; ++b)
        for (int ch = 0; ch < x.c; ++ch)
            for (int y = 0; y < H; ++y) {
                const int sy = y < x.h ? y : 2 * x.h - 2 - y;
                for (int xx = 0; xx < W; ++xx) {
                    const int sx = xx < x.w ? xx : 2 * x.w - 2 - xx;
                    out.at(b, ch, y, xx) = x.at(b, ch, sy, sx);
                }
            }
    return out;
}

Tensor crop_to(const Tensor& x, int h, int w) {
    if (h > x.h || w > x.w) throw std::invalid_argument("crop_to: target larger than input");
    if (h == x.h && w == x.w) return x;
    Tensor out(x.n, x.c, h, w);
    for (int b = 0; b < x.n; ++b)
        for (int ch = 0; ch < x.c; ++ch)
            for (int y = 0; y < h; ++y)
                for (int xx = 0; xx < w; ++xx) out.at(b, ch, y, xx) = x.at(b, ch, y, xx);
    return out;
}

Tensor reflect_pad_adjoint(const Tensor& g, int h, int w) {
    Tensor out(g.n, g.c, h, w);
    for (int b = 0; b < g.n; ++b)
        for (int ch = 0; ch < g.c; ++ch)
            for (int y = 0; y < g.h; ++y) {
                const int sy = y < h ? y : 2 * h - 2 - y;
                for (int xx = 0; xx < g.w; ++xx) {
                    const int sx = xx < w ? xx : 2 * w - 2 - xx;
                    out.at(b, ch, sy, sx) += g.at(b, ch, y, xx);
                }
            }
    return out;
}

namespace {

// Adjoint of crop_to: places the gradient back into the padded canvas.
Tensor zero_embed(const Tensor& g, int h, int w) {
    Tensor out(g.n, g.c, h, w);
    for (int b = 0; b < g.n; ++b)
        for (int ch = 0; ch < g.c; ++ch)
            for (int y = 0; y < g.h; ++y)
                for (int xx = 0; xx < g.w; ++xx) out.at(b, ch, y, xx) = g.at(b, ch, y, xx);
    return out;
}

} // namespace

// ---- differentiable FBP layer --------------------------------------------

Tensor fbp_layer_forward(const Tensor& sino, const FanBeamGeometry& geom, const ImageGrid& grid) {
    if (sino.c != 1 || sino.h != geom.n_views || sino.w != geom.n_dets)
        throw std::invalid_argument("fbp_layer_forward: sinogram tensor shape mismatch");
    Tensor out(sino.n, 1, grid.ny, grid.nx);
    for (int b = 0; b < sino.n; ++b) {
        const Image img = fbp(tensor_to_sinogram(sino, b, geom), grid);
        std::copy(img.values.begin(), img.values.end(), out.v.begin() + out.idx(b, 0, 0, 0));
    }
    return out;
}

Tensor fbp_layer_backward(const Tensor& grad_image, const FanBeamGeometry& geom,
                          const ImageGrid& grid) {
    if (grad_image.c != 1 || grad_image.h != grid.ny || grad_image.w != grid.nx)
        throw std::invalid_argument("fbp_layer_backward: image tensor shape mismatch");
    Tensor out(grad_image.n, 1, geom.n_views, geom.n_dets);
    for (int b = 0; b < grad_image.n; ++b) {
        const Sinogram g = fbp_adjoint(tensor_to_image(grad_image, b, grid), geom);
        std::copy(g.values.begin(), g.values.end(), out.v.begin() + out.idx(b, 0, 0, 0));
    }
    return out;
}

// ---- objectives ------------------------------------------------------------

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b)) throw std::invalid_argument(std::string(what) + ": shape mismatch");
}

double mask_value(const Tensor& mask, int b, int ch, int y, int x) {
    return mask.at(mask.n == 1 ? 0 : b, mask.c == 1 ? 0 : ch, y, x);
}

} // namespace

Tensor compose_corrected(const Tensor& p, const Tensor& h_hat, const Tensor& z_hat,
                         const Tensor& T) {
    require_same_shape(p, h_hat, "compose_corrected");
    require_same_shape(p, z_hat, "compose_corrected");
    if (T.h != p.h || T.w != p.w || (T.n != 1 && T.n != p.n))
        throw std::invalid_argument("compose_corrected: mask shape mismatch");
    Tensor out(p.n, p.c, p.h, p.w);
    for (int b = 0; b < p.n; ++b)
        for (int ch = 0; ch < p.c; ++ch)
            for (int y = 0; y < p.h; ++y)
                for (int x = 0; x < p.w; ++x) {
                    const double t = mask_value(T, b, ch, y, x);
                    out.at(b, ch, y, x) = t * (p.at(b, ch, y, x) - h_hat.at(b, ch, y, x)) +
                                          (1.0 - t) * z_hat.at(b, ch, y, x);
                }
    return out;
}

Sinogram compose_corrected_sinogram(const Sinogram& p, const Sinogram& h_hat,
                                    const Sinogram& z_hat, const ProjectionMask& T) {
    if (!(p.geom == h_hat.geom) || !(p.geom == z_hat.geom) || T.n_views != p.geom.n_views ||
        T.n_dets != p.geom.n_dets)
        throw std::invalid_argument("compose_corrected_sinogram: dimension mismatch");
    Sinogram out(p.geom);
    for (std::size_t i = 0; i < out.values.size(); ++i)
        out.values[i] = T.values[i] ? p.values[i] - h_hat.values[i] : z_hat.values[i];
    return out;
}

LossGrad masked_mse(const Tensor& target, const Tensor& pred, const Tensor& mask,
                    LossReduction red) {
    require_same_shape(target, pred, "masked_mse");
    if (mask.h != pred.h || mask.w != pred.w || (mask.n != 1 && mask.n != pred.n) ||
        (mask.c != 1 && mask.c != pred.c))
        throw std::invalid_argument("masked_mse: mask shape mismatch");

    std::size_t count = 0;
    double value = 0.0;
    LossGrad out;
    out.grad = Tensor(pred.n, pred.c, pred.h, pred.w);
    for (int b = 0; b < pred.n; ++b)
        for (int ch = 0; ch < pred.c; ++ch)
            for (int y = 0; y < pred.h; ++y)
                for (int x = 0; x < pred.w; ++x) {
                    const double m = mask_value(mask, b, ch, y, x);
                    if (m == 0.0) continue;
                    ++count;
                    const double d = pred.at(b, ch, y, x) - target.at(b, ch, y, x);
                    value += m * m * d * d;
                    out.grad.at(b, ch, y, x) = 2.0 * m * m * d;
                }
    if (count == 0) throw std::domain_error("masked_mse: empty mask");
    if (red == LossReduction::Mean) {
        const double inv = 1.0 / double(count);
        value *= inv;
        for (auto& g : out.grad.v) g *= inv;
    }
    out.value = value;
    return out;
}

LossGrad loss_image_unet(const Tensor& q, const Tensor& f, const Tensor& I, const Tensor& net_out,
                         LossReduction red) {
    require_same_shape(q, f, "loss_image_unet");
    require_same_shape(q, net_out, "loss_image_unet");
    Tensor residual(q.n, q.c, q.h, q.w);
    for (std::size_t i = 0; i < residual.size(); ++i) residual.v[i] = q.v[i] - f.v[i];
    return masked_mse(residual, net_out, I, red);
}

ProjectionLoss loss_projection_unet(const Tensor& p, const Tensor& y, const Tensor& f,
                                    const Tensor& T, const Tensor& I, const Tensor& h_hat,
                                    const Tensor& z_hat, const FanBeamGeometry& geom,
                                    const ImageGrid& grid, bool detach_h, LossReduction red) {
    require_same_shape(p, y, "loss_projection_unet");
    require_same_shape(p, h_hat, "loss_projection_unet");
    require_same_shape(p, z_hat, "loss_projection_unet");

    Tensor noise(p.n, p.c, p.h, p.w);
    for (std::size_t i = 0; i < noise.size(); ++i) noise.v[i] = p.v[i] - y.v[i];
    const LossGrad fit = masked_mse(noise, h_hat, T, red);

    const Tensor composed = compose_corrected(p, h_hat, z_hat, T);
    const Tensor recon = fbp_layer_forward(composed, geom, grid);
    const LossGrad img = masked_mse(f, recon, I, red);
    const Tensor gsino = fbp_layer_backward(img.grad, geom, grid);

    ProjectionLoss out;
    out.term1 = fit.value;
    out.term2 = img.value;
    out.value = fit.value + img.value;
    out.grad_h = fit.grad;
    out.grad_z = Tensor(p.n, p.c, p.h, p.w);
    for (int b = 0; b < p.n; ++b)
        for (int ch = 0; ch < p.c; ++ch)
            for (int yy = 0; yy < p.h; ++yy)
                for (int x = 0; x < p.w; ++x) {
                    const double t = mask_value(T, b, ch, yy, x);
                    const double g = gsino.at(b, ch, yy, x);
                    out.grad_z.at(b, ch, yy, x) = (1.0 - t) * g;
                    if (!detach_h) out.grad_h.at(b, ch, yy, x) -= t * g;
                }
    return out;
}

WnetLoss loss_wnet(const Tensor& q, const Tensor& f, const Tensor& I, const Tensor& stage1_out,
                   const Tensor& stage2_out, LossReduction red) {
    const LossGrad first = loss_image_unet(q, f, I, stage1_out, red);
    Tensor q_bar(q.n, q.c, q.h, q.w); // behind the stage barrier: values only
    for (std::size_t i = 0; i < q_bar.size(); ++i) q_bar.v[i] = q.v[i] - stage1_out.v[i];
    const LossGrad second = loss_image_unet(q_bar, f, I, stage2_out, red);
    WnetLoss out;
    out.stage1_term = first.value;
    out.stage2_term = second.value;
    out.value = first.value + second.value;
    out.grad1 = first.grad;
    out.grad2 = second.grad;
    return out;
}

DualLoss loss_dualnet(const Tensor& p, const Tensor& y, const Tensor& f, const Tensor& T,
                      const Tensor& I, const Tensor& h_hat, const Tensor& z_hat,
                      const Tensor& stage2_out, const FanBeamGeometry& geom, const ImageGrid& grid,
                      bool detach_h, LossReduction red) {
    const ProjectionLoss proj =
        loss_projection_unet(p, y, f, T, I, h_hat, z_hat, geom, grid, detach_h, red);
    // stage-2 input, recomputed behind the stage barrier
    const Tensor q_bar = fbp_layer_forward(compose_corrected(p, h_hat, z_hat, T), geom, grid);
    const LossGrad second = loss_image_unet(q_bar, f, I, stage2_out, red);
    DualLoss out;
    out.term1 = proj.term1;
    out.term2 = proj.term2;
    out.stage2_term = second.value;
    out.value = proj.value + second.value;
    out.grad_h = proj.grad_h;
    out.grad_z = proj.grad_z;
    out.grad2 = second.grad;
    return out;
}

// ---- training --------------------------------------------------------------

namespace {

struct Prepared {
    Tensor f, q, p, y, T, I;
};

Tensor flip_image_tensor(const Tensor& t) {
    Tensor out(t.n, t.c, t.h, t.w);
    for (int b = 0; b < t.n; ++b)
        for (int ch = 0; ch < t.c; ++ch)
            for (int y = 0; y < t.h; ++y)
                for (int x = 0; x < t.w; ++x) out.at(b, ch, y, x) = t.at(b, ch, y, t.w - 1 - x);
    return out;
}

// Mirroring the object about the vertical axis permutes the fan-beam
// sinogram: view beta -> pi - beta, detector u -> -u.
Tensor flip_sino_tensor(const Tensor& t) {
    const int V = t.h, K = t.w;
    Tensor out(t.n, t.c, V, K);
    for (int b = 0; b < t.n; ++b)
        for (int ch = 0; ch < t.c; ++ch)
            for (int v = 0; v < V; ++v) {
                const int sv = ((V / 2 - v) % V + V) % V;
                for (int k = 0; k < K; ++k) out.at(b, ch, v, k) = t.at(b, ch, sv, K - 1 - k);
            }
    return out;
}

bool flip_supported(const FanBeamGeometry& geom) {
    return geom.n_views % 2 == 0 && std::abs(geom.angle_start_rad) < 1e-12 &&
           std::abs(geom.angle_extent_rad - 2.0 * M_PI) < 1e-9;
}

Tensor stack(const std::vector<const Tensor*>& items) {
    const Tensor& first = *items.front();
    Tensor out(int(items.size()), first.c, first.h, first.w);
    for (std::size_t b = 0; b < items.size(); ++b) {
        if (!items[b]->same_shape(first)) throw std::invalid_argument("stack: shape mismatch");
        std::copy(items[b]->v.begin(), items[b]->v.end(),
                  out.v.begin() + out.idx(int(b), 0, 0, 0));
    }
    return out;
}

struct Batch {
    Tensor f, q, p, y, T, I;
};

Batch gather_batch(const std::vector<Prepared>& prepared, const std::vector<int>& ids,
                   const std::vector<bool>& flips, bool want_q, bool want_proj) {
    std::vector<Tensor> storage;
    storage.reserve(ids.size() * 4);
    auto collect = [&](auto member, bool flip_as_sino, bool flips_apply) {
        std::vector<const Tensor*> ptrs;
        for (std::size_t i = 0; i < ids.size(); ++i) {
            const Tensor& t = prepared[std::size_t(ids[i])].*member;
            if (flips_apply && flips[i]) {
                storage.push_back(flip_as_sino ? flip_sino_tensor(t) : flip_image_tensor(t));
                ptrs.push_back(&storage.back());
            } else {
                ptrs.push_back(&t);
            }
        }
        return stack(ptrs);
    };
    Batch b;
    b.f = collect(&Prepared::f, false, true);
    b.I = collect(&Prepared::I, false, false); // ROI disc: flip invariant
    if (want_q) b.q = collect(&Prepared::q, false, true);
    if (want_proj) {
        b.p = collect(&Prepared::p, true, true);
        b.y = collect(&Prepared::y, true, true);
        b.T = collect(&Prepared::T, true, false); // centered span: flip invariant
    }
    return b;
}

// Heads of a projection-domain net, evaluated through pad/crop.
struct ProjHeads {
    Tensor h, z;
    ForwardCache cache;
    int padded_h = 0, padded_w = 0;
};

ProjHeads run_projection_net(Graph& net, const Tensor& p, RunMode mode) {
    ProjHeads out;
    const Tensor x = reflect_pad_to_multiple(p, net.spatial_divisor());
    out.padded_h = x.h;
    out.padded_w = x.w;
    auto heads = forward(net, x, mode, out.cache);
    out.h = crop_to(heads.at(0), p.h, p.w);
    out.z = crop_to(heads.at(1), p.h, p.w);
    return out;
}

void backprop_projection_net(Graph& net, const ProjHeads& run, const Tensor& gh, const Tensor& gz,
                             RunMode mode) {
    std::vector<Tensor> grads{zero_embed(gh, run.padded_h, run.padded_w),
                              zero_embed(gz, run.padded_h, run.padded_w)};
    backward(net, run.cache, grads, mode);
}

Graph make_image_net(const TrainConfig& cfg) {
    Graph g = build_backbone<double>(1, cfg.base_channels, cfg.depth);
    attach_bridge(g, 1);
    return g;
}

Graph make_projection_net(const TrainConfig& cfg) {
    Graph g = build_backbone<double>(1, cfg.base_channels, cfg.depth);
    attach_bridge(g, 1); // head 0: noise estimate inside T
    attach_bridge(g, 1); // head 1: extrapolation estimate outside T
    return g;
}

} // namespace

TrainResult train(ArchitectureKind arch, const Dataset& train_data, const Dataset& val_data,
                  const ImageGrid& grid, const TrainConfig& cfg) {
    if (train_data.samples.empty()) throw std::invalid_argument("train: empty training set");
    if (cfg.batch < 1 || cfg.epochs < 1 || !(cfg.lr > 0.0) || cfg.depth < 1 ||
        cfg.base_channels < 1)
        throw std::invalid_argument("train: bad hyperparameters");
    const FanBeamGeometry geom = train_data.samples.front().p.geom;
    const int div = 1 << cfg.depth;
    if (grid.nx % div != 0 || grid.ny % div != 0)
        throw std::invalid_argument("train: grid dims must be divisible by 2^depth");

    const bool image_stage = arch == ArchitectureKind::ImageUNet || arch == ArchitectureKind::WNet;
    const bool proj_stage =
        arch == ArchitectureKind::ProjectionCNN || arch == ArchitectureKind::DualNet;

    auto prepare = [&](const Dataset& data) {
        std::vector<Prepared> out;
        out.reserve(data.samples.size());
        for (const Sample& s : data.samples) {
            if (!(s.p.geom == geom)) throw std::invalid_argument("train: mixed geometries");
            Prepared pr;
            pr.f = image_to_tensor(s.f);
            pr.p = sinogram_to_tensor(s.p);
            pr.y = sinogram_to_tensor(s.y);
            pr.T = projection_mask_to_tensor(s.T);
            pr.I = image_mask_to_tensor(s.I);
            if (image_stage) pr.q = image_to_tensor(fbp(s.p, grid));
            out.push_back(std::move(pr));
        }
        return out;
    };
    const std::vector<Prepared> train_set = prepare(train_data);
    const std::vector<Prepared> val_set = prepare(val_data);

    TrainResult result;
    result.model.arch = arch;
    result.model.grid = grid;
    result.model.geom = geom;
    result.model.manifest = cfg;
    result.model.stage1 = image_stage && arch != ArchitectureKind::DualNet
                              ? make_image_net(cfg)
                              : (proj_stage ? make_projection_net(cfg) : make_image_net(cfg));
    if (arch == ArchitectureKind::WNet || arch == ArchitectureKind::DualNet)
        result.model.stage2 = make_image_net(cfg);

    std::mt19937_64 init_rng(cfg.seed);
    result.model.stage1.init_weights(init_rng);
    if (result.model.stage2) result.model.stage2->init_weights(init_rng);

    AdamConfig adam_cfg;
    adam_cfg.lr = cfg.lr;
    Adam opt1(result.model.stage1, adam_cfg);
    std::optional<Adam> opt2;
    if (result.model.stage2) opt2.emplace(*result.model.stage2, adam_cfg);

    const bool can_flip = cfg.flip_augment && flip_supported(geom) && grid.nx % 2 == 0;

    // Evaluates one batch; in Train mode also backpropagates into both stages.
    auto run_batch = [&](const std::vector<Prepared>& set, const std::vector<int>& ids,
                         const std::vector<bool>& flips, RunMode mode) -> double {
        Batch batch = gather_batch(set, ids, flips, image_stage, proj_stage);
        Graph& s1 = result.model.stage1;
        switch (arch) {
            case ArchitectureKind::ImageUNet: {
                ForwardCache cache;
                auto heads = forward(s1, batch.q, mode, cache);
                const LossGrad loss = loss_image_unet(batch.q, batch.f, batch.I, heads.at(0),
                                                      cfg.reduction);
                if (mode == RunMode::Train) backward(s1, cache, {loss.grad}, mode);
                return loss.value;
            }
            case ArchitectureKind::ProjectionCNN: {
                ProjHeads run = run_projection_net(s1, batch.p, mode);
                const ProjectionLoss loss =
                    loss_projection_unet(batch.p, batch.y, batch.f, batch.T, batch.I, run.h, run.z,
                                         geom, grid, cfg.detach_h, cfg.reduction);
                if (mode == RunMode::Train)
                    backprop_projection_net(s1, run, loss.grad_h, loss.grad_z, mode);
                return loss.value;
            }
            case ArchitectureKind::WNet: {
                Graph& s2 = *result.model.stage2;
                ForwardCache cache1;
                auto h1 = forward(s1, batch.q, mode, cache1);
                Tensor q_bar = batch.q;
                for (std::size_t i = 0; i < q_bar.size(); ++i) q_bar.v[i] -= h1.at(0).v[i];
                ForwardCache cache2;
                auto h2 = forward(s2, q_bar, mode, cache2);
                const WnetLoss loss =
                    loss_wnet(batch.q, batch.f, batch.I, h1.at(0), h2.at(0), cfg.reduction);
                if (mode == RunMode::Train) {
                    backward(s2, cache2, {loss.grad2}, mode);
                    backward(s1, cache1, {loss.grad1}, mode);
                }
                return loss.value;
            }
            case ArchitectureKind::DualNet: {
                Graph& s2 = *result.model.stage2;
                ProjHeads run = run_projection_net(s1, batch.p, mode);
                const Tensor q_bar = fbp_layer_forward(
                    compose_corrected(batch.p, run.h, run.z, batch.T), geom, grid);
                ForwardCache cache2;
                auto h2 = forward(s2, q_bar, mode, cache2);
                const DualLoss loss =
                    loss_dualnet(batch.p, batch.y, batch.f, batch.T, batch.I, run.h, run.z,
                                 h2.at(0), geom, grid, cfg.detach_h, cfg.reduction);
                if (mode == RunMode::Train) {
                    backward(s2, cache2, {loss.grad2}, mode);
                    backprop_projection_net(s1, run, loss.grad_h, loss.grad_z, mode);
                }
                return loss.value;
            }
        }
        return 0.0;
    };

    auto evaluate = [&](const std::vector<Prepared>& set) -> double {
        if (set.empty()) return 0.0;
        double total = 0.0;
        std::size_t n = 0;
        for (std::size_t i = 0; i < set.size(); i += std::size_t(cfg.batch)) {
            std::vector<int> ids;
            for (std::size_t j = i; j < std::min(set.size(), i + std::size_t(cfg.batch)); ++j)
                ids.push_back(int(j));
            const std::vector<bool> flips(ids.size(), false);
            total += run_batch(set, ids, flips, RunMode::Eval) * double(ids.size());
            n += ids.size();
        }
        return total / double(n);
    };

    std::vector<int> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = int(i);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::seed_seq seq{cfg.seed, std::uint64_t(epoch), std::uint64_t(0x65706f63)};
        std::mt19937_64 epoch_rng(seq);
        std::shuffle(order.begin(), order.end(), epoch_rng);
        std::bernoulli_distribution coin(0.5);

        double train_total = 0.0;
        for (std::size_t i = 0; i < order.size(); i += std::size_t(cfg.batch)) {
            std::vector<int> ids;
            std::vector<bool> flips;
            for (std::size_t j = i; j < std::min(order.size(), i + std::size_t(cfg.batch)); ++j) {
                ids.push_back(order[j]);
                flips.push_back(can_flip && coin(epoch_rng));
            }
            result.model.stage1.zero_grads();
            if (result.model.stage2) result.model.stage2->zero_grads();
            train_total += run_batch(train_set, ids, flips, RunMode::Train) * double(ids.size());
            opt1.step(result.model.stage1);
            if (opt2) opt2->step(*result.model.stage2);
        }
        result.curves.train_loss.push_back(train_total / double(train_set.size()));

        const double val = val_set.empty() ? result.curves.train_loss.back() : evaluate(val_set);
        result.curves.val_loss.push_back(val);
        opt1.observe_validation(val);
        if (opt2) opt2->observe_validation(val);
        result.model.epochs_completed = epoch + 1;

        if (!cfg.checkpoint_dir.empty()) {
            char name[32];
            std::snprintf(name, sizeof(name), "/epoch_%03d", epoch + 1);
            save_model(cfg.checkpoint_dir + name, result.model);
        }
    }
    return result;
}

// ---- inference --------------------------------------------------------------

namespace {

Tensor eval_single_head(Graph net, const Tensor& x) {
    ForwardCache cache;
    return forward(net, x, RunMode::Eval, cache).at(0);
}

} // namespace

Image reconstruct(const TrainedModel& model, const Sinogram& p, const ProjectionMask& T) {
    if (!(p.geom == model.geom)) throw std::invalid_argument("reconstruct: geometry mismatch");
    if (T.n_views != p.geom.n_views || T.n_dets != p.geom.n_dets)
        throw std::invalid_argument("reconstruct: mask mismatch");
    const ImageMask roi = roi_mask(model.grid, model.geom, T);

    Tensor out;
    switch (model.arch) {
        case ArchitectureKind::ImageUNet: {
            const Tensor q = image_to_tensor(fbp(p, model.grid));
            const Tensor res = eval_single_head(model.stage1, q);
            out = q;
            for (std::size_t i = 0; i < out.size(); ++i) out.v[i] -= res.v[i];
            break;
        }
        case ArchitectureKind::WNet: {
            const Tensor q = image_to_tensor(fbp(p, model.grid));
            Tensor q1 = q;
            const Tensor r1 = eval_single_head(model.stage1, q);
            for (std::size_t i = 0; i < q1.size(); ++i) q1.v[i] -= r1.v[i];
            const Tensor r2 = eval_single_head(*model.stage2, q1);
            out = q1;
            for (std::size_t i = 0; i < out.size(); ++i) out.v[i] -= r2.v[i];
            break;
        }
        case ArchitectureKind::ProjectionCNN:
        case ArchitectureKind::DualNet: {
            Graph stage1 = model.stage1;
            const Tensor pt = sinogram_to_tensor(p);
            ProjHeads run = run_projection_net(stage1, pt, RunMode::Eval);
            const Tensor composed = compose_corrected(pt, run.h, run.z,
                                                      projection_mask_to_tensor(T));
            Tensor q_bar = fbp_layer_forward(composed, model.geom, model.grid);
            if (model.arch == ArchitectureKind::DualNet) {
                const Tensor r2 = eval_single_head(*model.stage2, q_bar);
                for (std::size_t i = 0; i < q_bar.size(); ++i) q_bar.v[i] -= r2.v[i];
            }
            out = q_bar;
            break;
        }
    }

    Image img = tensor_to_image(out, 0, model.grid);
    for (std::size_t i = 0; i < img.values.size(); ++i)
        if (!roi.values[i]) img.values[i] = 0.0;
    return img;
}

// ---- persistence -------------------------------------------------------------

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace

void save_model(const std::string& path, const TrainedModel& model) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("save_model: cannot open " + path);
    out << "ctdl-model 1\n";
    out << "arch=" << architecture_name(model.arch) << "\n";
    out << "stages=" << (model.stage2 ? 2 : 1) << "\n";
    out << "epochs_completed=" << model.epochs_completed << "\n";
    out << "grid.nx=" << model.grid.nx << "\n";
    out << "grid.ny=" << model.grid.ny << "\n";
    out << "grid.pixel_mm=" << fmt_double(model.grid.pixel_size_mm) << "\n";
    out << "geom.views=" << model.geom.n_views << "\n";
    out << "geom.start=" << fmt_double(model.geom.angle_start_rad) << "\n";
    out << "geom.extent=" << fmt_double(model.geom.angle_extent_rad) << "\n";
    out << "geom.dets=" << model.geom.n_dets << "\n";
    out << "geom.pitch_mm=" << fmt_double(model.geom.det_pitch_mm) << "\n";
    out << "geom.sod_mm=" << fmt_double(model.geom.sod_mm) << "\n";
    out << "geom.sdd_mm=" << fmt_double(model.geom.sdd_mm) << "\n";
    out << "train.depth=" << model.manifest.depth << "\n";
    out << "train.base_channels=" << model.manifest.base_channels << "\n";
    out << "train.lr=" << fmt_double(model.manifest.lr) << "\n";
    out << "train.batch=" << model.manifest.batch << "\n";
    out << "train.epochs=" << model.manifest.epochs << "\n";
    out << "train.flip=" << (model.manifest.flip_augment ? 1 : 0) << "\n";
    out << "train.detach_h=" << (model.manifest.detach_h ? 1 : 0) << "\n";
    out << "train.reduction="
        << (model.manifest.reduction == LossReduction::Mean ? "mean" : "sum") << "\n";
    out << "train.seed=" << model.manifest.seed << "\n";
    if (!out) throw FormatError("save_model: write failed for " + path);
    out.close();
    save_graph(path + ".stage1", model.stage1, {});
    if (model.stage2) save_graph(path + ".stage2", *model.stage2, {});
}

TrainedModel load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("load_model: cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || line != "ctdl-model 1")
        throw FormatError("load_model: bad manifest header");
    std::map<std::string, std::string> kv;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw FormatError("load_model: bad manifest line: " + line);
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    auto get = [&](const std::string& key) -> const std::string& {
        auto it = kv.find(key);
        if (it == kv.end()) throw FormatError("load_model: missing key " + key);
        return it->second;
    };

    TrainedModel model;
    model.arch = architecture_from_string(get("arch"));
    model.epochs_completed = std::stoi(get("epochs_completed"));
    model.grid.nx = std::stoi(get("grid.nx"));
    model.grid.ny = std::stoi(get("grid.ny"));
    model.grid.pixel_size_mm = std::stod(get("grid.pixel_mm"));
    model.geom.n_views = std::stoi(get("geom.views"));
    model.geom.angle_start_rad = std::stod(get("geom.start"));
    model.geom.angle_extent_rad = std::stod(get("geom.extent"));
    model.geom.n_dets = std::stoi(get("geom.dets"));
    model.geom.det_pitch_mm = std::stod(get("geom.pitch_mm"));
    model.geom.sod_mm = std::stod(get("geom.sod_mm"));
    model.geom.sdd_mm = std::stod(get("geom.sdd_mm"));
    model.manifest.depth = std::stoi(get("train.depth"));
    model.manifest.base_channels = std::stoi(get("train.base_channels"));
    model.manifest.lr = std::stod(get("train.lr"));
    model.manifest.batch = std::stoi(get("train.batch"));
    model.manifest.epochs = std::stoi(get("train.epochs"));
    model.manifest.flip_augment = get("train.flip") == "1";
    model.manifest.detach_h = get("train.detach_h") == "1";
    model.manifest.reduction =
        get("train.reduction") == "sum" ? LossReduction::Sum : LossReduction::Mean;
    model.manifest.seed = std::stoull(get("train.seed"));

    model.stage1 = load_graph(path + ".stage1");
    if (std::stoi(get("stages")) == 2) model.stage2 = load_graph(path + ".stage2");
    const bool needs_stage2 =
        model.arch == ArchitectureKind::WNet || model.arch == ArchitectureKind::DualNet;
    if (needs_stage2 != bool(model.stage2))
        throw FormatError("load_model: stage count inconsistent with architecture");
    validate(model.grid);
    validate(model.geom);
    return model;
}

} // namespace ctdl
