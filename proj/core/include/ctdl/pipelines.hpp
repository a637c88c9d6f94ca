#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ctdl/acquisition.hpp"
#include "ctdl/fields.hpp"
#include "ctdl/network.hpp"
#include "ctdl/tensor.hpp"

namespace ctdl {

enum class ArchitectureKind { ImageUNet, ProjectionCNN, WNet, DualNet };

ArchitectureKind architecture_from_string(const std::string& name);
std::string architecture_name(ArchitectureKind arch);

enum class LossReduction { Mean, Sum };

struct TrainConfig {
    int depth = 2;
    int base_channels = 8;
    double lr = 1e-4;        // initial Adam rate, x0.1 after 5 stale validations
    int batch = 4;
    int epochs = 30;
    bool flip_augment = true; // vertical-axis flip (images + matching sinogram permutation)
    bool detach_h = true;     // gradient barrier on h inside the extrapolation term
    LossReduction reduction = LossReduction::Mean;
    std::uint64_t seed = 0;
    std::string checkpoint_dir; // when set, a checkpoint is written each epoch
};

struct TrainedModel {
    ArchitectureKind arch = ArchitectureKind::ImageUNet;
    Graph stage1;
    std::optional<Graph> stage2; // present iff WNet or DualNet
    ImageGrid grid;
    FanBeamGeometry geom;
    TrainConfig manifest;
    int epochs_completed = 0;
};

struct LossCurves {
    std::vector<double> train_loss;
    std::vector<double> val_loss;
};

struct TrainResult {
    TrainedModel model;
    LossCurves curves;
};

// ---- tensor <-> field plumbing -------------------------------------------

Tensor image_to_tensor(const Image& img);
Image tensor_to_image(const Tensor& t, int batch, const ImageGrid& grid);
Tensor sinogram_to_tensor(const Sinogram& sino);
Sinogram tensor_to_sinogram(const Tensor& t, int batch, const FanBeamGeometry& geom);
Tensor projection_mask_to_tensor(const ProjectionMask& mask);
Tensor image_mask_to_tensor(const ImageMask& mask);

/// Reflect-pads the bottom/right so both spatial dims are multiples of
/// `divisor`; crop/pad_adjoint invert it (pad_adjoint folds mirrored
/// contributions back, making pad/pad_adjoint an exact adjoint pair).
Tensor reflect_pad_to_multiple(const Tensor& x, int divisor);
Tensor crop_to(const Tensor& x, int h, int w);
Tensor reflect_pad_adjoint(const Tensor& g, int h, int w);

// ---- differentiable FBP layer --------------------------------------------

/// Applies the analytic FBP per batch item; tensors are single channel,
/// (n, 1, n_views, n_dets) -> (n, 1, ny, nx).
Tensor fbp_layer_forward(const Tensor& sino, const FanBeamGeometry& geom, const ImageGrid& grid);

/// Exact adjoint of fbp_layer_forward, used as its reverse-mode gradient.
Tensor fbp_layer_backward(const Tensor& grad_image, const FanBeamGeometry& geom,
                          const ImageGrid& grid);

// ---- objectives ------------------------------------------------------------

/// T.(p - h) + (1-T).z : measured band denoised by the noise head, truncated
/// band filled by the extrapolation head.
Tensor compose_corrected(const Tensor& p, const Tensor& h_hat, const Tensor& z_hat,
                         const Tensor& T);
Sinogram compose_corrected_sinogram(const Sinogram& p, const Sinogram& h_hat,
                                    const Sinogram& z_hat, const ProjectionMask& T);

/// ||mask.(target - pred)||^2 with mean (over mask entries x batch) or sum
/// reduction; grad is w.r.t. pred. mask batch dim must be 1 or pred.n.
struct LossGrad {
    double value = 0.0;
    Tensor grad;
};
LossGrad masked_mse(const Tensor& target, const Tensor& pred, const Tensor& mask,
                    LossReduction red = LossReduction::Mean);

/// Image-domain residual objective: ||I.(q - f) - I.net_out||^2.
/// grad is w.r.t. net_out.
LossGrad loss_image_unet(const Tensor& q, const Tensor& f, const Tensor& I, const Tensor& net_out,
                         LossReduction red = LossReduction::Mean);

/// Projection-domain objective: noise-head fidelity inside T plus an
/// image-domain fidelity of the FBP of the corrected sinogram. h_hat is
/// detached inside the second term by default.
struct ProjectionLoss {
    double value = 0.0, term1 = 0.0, term2 = 0.0;
    Tensor grad_h, grad_z;
};
ProjectionLoss loss_projection_unet(const Tensor& p, const Tensor& y, const Tensor& f,
                                    const Tensor& T, const Tensor& I, const Tensor& h_hat,
                                    const Tensor& z_hat, const FanBeamGeometry& geom,
                                    const ImageGrid& grid, bool detach_h = true,
                                    LossReduction red = LossReduction::Mean);

/// Two stacked image-domain residual objectives; stage 2 sees
/// q_bar = q - stage1_out through a gradient barrier, so grad1 carries only
/// the stage-1 term.
struct WnetLoss {
    double value = 0.0, stage1_term = 0.0, stage2_term = 0.0;
    Tensor grad1, grad2;
};
WnetLoss loss_wnet(const Tensor& q, const Tensor& f, const Tensor& I, const Tensor& stage1_out,
                   const Tensor& stage2_out, LossReduction red = LossReduction::Mean);

/// Projection objective for stage 1 plus an image residual term on
/// q_bar = fbp(composed) for stage 2; q_bar is behind the stage barrier.
struct DualLoss {
    double value = 0.0, term1 = 0.0, term2 = 0.0, stage2_term = 0.0;
    Tensor grad_h, grad_z, grad2;
};
DualLoss loss_dualnet(const Tensor& p, const Tensor& y, const Tensor& f, const Tensor& T,
                      const Tensor& I, const Tensor& h_hat, const Tensor& z_hat,
                      const Tensor& stage2_out, const FanBeamGeometry& geom, const ImageGrid& grid,
                      bool detach_h = true, LossReduction red = LossReduction::Mean);

// ---- training and inference -----------------------------------------------

/// Minibatch Adam over `cfg.epochs` epochs; deterministic for a fixed seed.
/// Validation loss is recorded per epoch and drives the plateau schedule.
TrainResult train(ArchitectureKind arch, const Dataset& train_data, const Dataset& val_data,
                  const ImageGrid& grid, const TrainConfig& cfg);

/// Applies the model to one measurement. Output is zero outside the ROI disc
/// implied by T.
Image reconstruct(const TrainedModel& model, const Sinogram& p, const ProjectionMask& T);

/// Persists the manifest at `path` plus one graph checkpoint per stage
/// (`path.stage1[, .stage2]` with their `.bin` payloads).
void save_model(const std::string& path, const TrainedModel& model);
TrainedModel load_model(const std::string& path);

} // namespace ctdl
