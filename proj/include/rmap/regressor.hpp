#pragma once

// Convolutional regressor from a resolved 60x120 reflectance map to the
// 7-vector (k_d RGB, k_s RGB, roughness).
//
// Inputs go through log1p (specular peaks span several decades), then a
// per-channel standardization whose statistics are measured on the training
// split and stored with the model. Missing texels are black.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rmap/brdf.hpp"
#include "rmap/dataset.hpp"
#include "rmap/image.hpp"
#include "rmap/nn.hpp"

namespace rmap {

using Vec7 = std::array<double, ReflectanceParams::kSize>;

inline constexpr double kRoughnessLossWeight = 3.0;

/// SSE over k_d + (1 - cbrt(r_target)) * SSE over k_s + 3 * (r_pred - r_target)^2.
double weighted_loss(const Vec7 &pred, const Vec7 &target);
/// Gradient of weighted_loss with respect to pred.
Vec7 weighted_loss_grad(const Vec7 &pred, const Vec7 &target);

struct NormStats {
    std::array<double, 3> mean{0, 0, 0};
    std::array<double, 3> std{1, 1, 1};

    /// Throws std::invalid_argument for non-positive or non-finite std.
    void validate() const;
    bool operator==(const NormStats &) const = default;
};

/// log1p of every channel (negative values are treated as 0).
LinearImage compress(const LinearImage &img);
LinearImage normalize(const LinearImage &img, const NormStats &stats);
LinearImage denormalize(const LinearImage &img, const NormStats &stats);
/// Per-channel mean and population std over every texel of every image.
NormStats channel_stats(std::span<const LinearImage> images);

struct RegressorConfig {
    nn::Architecture architecture = nn::Architecture::desk();
    int epochs = 30;
    int batch_size = 32;
    double learning_rate = 1e-3;
    double decay_factor = 0.9;
    int decay_period = 20;
    double weight_decay = 1e-4;
    std::uint64_t seed = 0;
    /// Measured on the training split when absent.
    std::optional<NormStats> norm;
    AugmentConfig augment;
    double validation_fraction = 0.2;

    /// Defaults with milder augmentation: masking up to 50%, 0.2% salt-and-pepper,
    /// noise patches of amplitude <= 0.02.
    static RegressorConfig desk();
    /// 90 epochs, batch 256, lr 3e-4, x0.9 every 20 epochs.
    static RegressorConfig full();
    /// Throws std::invalid_argument describing the first bad field.
    void validate() const;
    /// Learning rate in effect during 0-based `epoch`.
    double learning_rate_at(int epoch) const;
};

struct EpochRecord {
    int epoch = 0; ///< 1-based
    double train_loss = 0;
    double val_loss = 0;
    double lr = 0;
    bool operator==(const EpochRecord &) const = default;
};

/// One JSON object per line: {"epoch":..,"train_loss":..,"val_loss":..,"lr":..}.
std::string to_json_line(const EpochRecord &r);

class TrainedModel {
  public:
    TrainedModel(const nn::Architecture &arch, const NormStats &norm, std::uint64_t init_seed = 0);

    /// Throws std::invalid_argument unless the image is 60x120.
    ReflectanceParams predict(const LinearImage &map_image) const;
    std::vector<ReflectanceParams> predict(std::span<const LinearImage> map_images) const;
    /// Raw network outputs for already normalized inputs, one column per image.
    nn::Mat forward_prepared(const nn::Tensor &x) const;

    const nn::Architecture &architecture() const;
    const NormStats &norm() const { return norm_; }
    const RegressorConfig &config() const { return config_; }
    const std::vector<EpochRecord> &history() const { return history_; }

    /// Container: "RMNN", u32 version, u32 JSON length, JSON header, then float32 tensors.
    void save(const std::filesystem::path &path) const;
    static TrainedModel load(const std::filesystem::path &path);

  private:
    friend class Trainer;
    struct Net;
    std::shared_ptr<Net> net_;
    NormStats norm_;
    RegressorConfig config_;
    std::vector<EpochRecord> history_;
};

/// Compressed and normalized input tensor for a batch of 60x120 images.
nn::Tensor prepare_batch(std::span<const LinearImage> images, const NormStats &norm);

struct TrainProgress {
    std::function<void(const EpochRecord &)> on_epoch;
};

/// Trains on every manifest row. Materials (identical labels) are split
/// 80/20 into training and validation sets; training samples are augmented
/// afresh each epoch. Throws std::invalid_argument for an empty manifest and
/// std::runtime_error when the loss becomes non-finite.
TrainedModel train(const std::vector<ManifestRow> &rows, const std::filesystem::path &root,
                   const RegressorConfig &cfg, const TrainProgress &progress = {});
TrainedModel train(const std::filesystem::path &manifest, const RegressorConfig &cfg,
                   const TrainProgress &progress = {});

} // namespace rmap
