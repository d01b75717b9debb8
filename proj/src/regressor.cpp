#include "rmap/regressor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "rmap/errors.hpp"
#include "rmap/spherical.hpp"

namespace rmap {

using json = nlohmann::json;

namespace {

constexpr char kModelMagic[4] = {'R', 'M', 'N', 'N'};
constexpr std::uint32_t kModelVersion = 1;
constexpr int kPredictChunk = 64;

double specular_weight(double r_target) { return 1.0 - std::cbrt(r_target); }

void check_image(const LinearImage &img) {
    if (img.width() != kMapWidth || img.height() != kMapHeight)
        throw std::invalid_argument("regressor input must be " + std::to_string(kMapHeight) + "x" +
                                    std::to_string(kMapWidth) + ", got " + std::to_string(img.height()) + "x" +
                                    std::to_string(img.width()));
}

double clamp_output(float v) { return std::clamp(double(v), 1e-7, 1.0 - 1e-7); }

ReflectanceParams column_params(const nn::Mat &out, Eigen::Index col) {
    Vec7 v;
    for (int k = 0; k < 7; ++k)
        v[std::size_t(k)] = clamp_output(out(k, col));
    return ReflectanceParams::from_array(v);
}

json arch_to_json(const nn::Architecture &a) {
    return {{"name", a.name},
            {"stem_channels", a.stem_channels},
            {"stage_channels", a.stage_channels},
            {"stage_blocks", a.stage_blocks},
            {"fc_hidden", a.fc_hidden}};
}

nn::Architecture arch_from_json(const json &j) {
    nn::Architecture a;
    a.name = j.at("name").get<std::string>();
    a.stem_channels = j.at("stem_channels").get<int>();
    a.stage_channels = j.at("stage_channels").get<std::vector<int>>();
    a.stage_blocks = j.at("stage_blocks").get<std::vector<int>>();
    a.fc_hidden = j.at("fc_hidden").get<int>();
    return a;
}

json augment_to_json(const AugmentConfig &c) {
    return {{"mask_fraction_min", c.mask_fraction_min},
            {"mask_fraction_max", c.mask_fraction_max},
            {"salt_pepper_fraction", c.salt_pepper_fraction},
            {"noise_patches", c.noise_patches},
            {"noise_radius_max", c.noise_radius_max},
            {"noise_amplitude_max", c.noise_amplitude_max},
            {"flip_h_prob", c.flip_h_prob},
            {"flip_v_prob", c.flip_v_prob},
            {"seed", c.seed}};
}

AugmentConfig augment_from_json(const json &j) {
    AugmentConfig c;
    c.mask_fraction_min = j.at("mask_fraction_min").get<double>();
    c.mask_fraction_max = j.at("mask_fraction_max").get<double>();
    c.salt_pepper_fraction = j.at("salt_pepper_fraction").get<double>();
    c.noise_patches = j.at("noise_patches").get<int>();
    c.noise_radius_max = j.at("noise_radius_max").get<int>();
    c.noise_amplitude_max = j.at("noise_amplitude_max").get<double>();
    c.flip_h_prob = j.at("flip_h_prob").get<double>();
    c.flip_v_prob = j.at("flip_v_prob").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

json config_to_json(const RegressorConfig &c) {
    return {{"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"learning_rate", c.learning_rate},
            {"decay_factor", c.decay_factor},
            {"decay_period", c.decay_period},
            {"weight_decay", c.weight_decay},
            {"seed", c.seed},
            {"validation_fraction", c.validation_fraction},
            {"augment", augment_to_json(c.augment)}};
}

RegressorConfig config_from_json(const json &j) {
    RegressorConfig c;
    c.epochs = j.at("epochs").get<int>();
    c.batch_size = j.at("batch_size").get<int>();
    c.learning_rate = j.at("learning_rate").get<double>();
    c.decay_factor = j.at("decay_factor").get<double>();
    c.decay_period = j.at("decay_period").get<int>();
    c.weight_decay = j.at("weight_decay").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.validation_fraction = j.at("validation_fraction").get<double>();
    c.augment = augment_from_json(j.at("augment"));
    return c;
}

/// Training maps kept as float, channel-interleaved.
struct Sample {
    std::vector<float> pixels;
    Vec7 target;

    LinearImage image() const {
        LinearImage img(kMapWidth, kMapHeight);
        for (std::size_t i = 0; i < img.pixel_count(); ++i)
            img[i] = Rgb(pixels[3 * i], pixels[3 * i + 1], pixels[3 * i + 2]);
        return img;
    }
};

} // namespace

// Loss

double weighted_loss(const Vec7 &pred, const Vec7 &target) {
    double kd = 0, ks = 0;
    for (int k = 0; k < 3; ++k) {
        kd += (pred[k] - target[k]) * (pred[k] - target[k]);
        ks += (pred[k + 3] - target[k + 3]) * (pred[k + 3] - target[k + 3]);
    }
    const double dr = pred[6] - target[6];
    return kd + specular_weight(target[6]) * ks + kRoughnessLossWeight * dr * dr;
}

Vec7 weighted_loss_grad(const Vec7 &pred, const Vec7 &target) {
    Vec7 g;
    const double w = specular_weight(target[6]);
    for (int k = 0; k < 3; ++k) {
        g[k] = 2.0 * (pred[k] - target[k]);
        g[k + 3] = 2.0 * w * (pred[k + 3] - target[k + 3]);
    }
    g[6] = 2.0 * kRoughnessLossWeight * (pred[6] - target[6]);
    return g;
}

// Normalization

void NormStats::validate() const {
    for (int c = 0; c < 3; ++c) {
        if (!std::isfinite(mean[c]))
            throw std::invalid_argument("normalization mean must be finite");
        if (!(std[c] > 0) || !std::isfinite(std[c]))
            throw std::invalid_argument("normalization std must be positive and finite");
    }
}

LinearImage compress(const LinearImage &img) {
    LinearImage out = img;
    for (Rgb &p : out.pixels())
        for (int c = 0; c < 3; ++c)
            p[c] = std::log1p(std::max(0.0, p[c]));
    return out;
}

LinearImage normalize(const LinearImage &img, const NormStats &stats) {
    stats.validate();
    LinearImage out = img;
    for (Rgb &p : out.pixels())
        for (int c = 0; c < 3; ++c)
            p[c] = (p[c] - stats.mean[c]) / stats.std[c];
    return out;
}

LinearImage denormalize(const LinearImage &img, const NormStats &stats) {
    stats.validate();
    LinearImage out = img;
    for (Rgb &p : out.pixels())
        for (int c = 0; c < 3; ++c)
            p[c] = p[c] * stats.std[c] + stats.mean[c];
    return out;
}

NormStats channel_stats(std::span<const LinearImage> images) {
    std::array<double, 3> sum{}, sq{};
    double n = 0;
    for (const auto &img : images) {
        for (const Rgb &p : img.pixels())
            for (int c = 0; c < 3; ++c)
                sum[c] += p[c];
        n += double(img.pixel_count());
    }
    if (n == 0)
        throw std::invalid_argument("channel_stats: no pixels");
    NormStats s;
    for (int c = 0; c < 3; ++c)
        s.mean[c] = sum[c] / n;
    for (const auto &img : images)
        for (const Rgb &p : img.pixels())
            for (int c = 0; c < 3; ++c)
                sq[c] += (p[c] - s.mean[c]) * (p[c] - s.mean[c]);
    for (int c = 0; c < 3; ++c)
        s.std[c] = std::sqrt(sq[c] / n);
    return s;
}

nn::Tensor prepare_batch(std::span<const LinearImage> images, const NormStats &norm) {
    norm.validate();
    nn::Tensor x(int(images.size()), 3, kMapHeight, kMapWidth);
    const std::size_t plane = std::size_t(kMapHeight) * kMapWidth;
    for (std::size_t i = 0; i < images.size(); ++i) {
        check_image(images[i]);
        for (int c = 0; c < 3; ++c) {
            float *dst = x.data.row(c).data() + i * plane;
            const double inv = 1.0 / norm.std[c];
            for (std::size_t p = 0; p < plane; ++p)
                dst[p] = float((std::log1p(std::max(0.0, images[i][p][c])) - norm.mean[c]) * inv);
        }
    }
    return x;
}

// Config

RegressorConfig RegressorConfig::desk() {
    RegressorConfig c;
    c.augment.mask_fraction_max = 0.5;
    c.augment.salt_pepper_fraction = 0.002;
    c.augment.noise_amplitude_max = 0.02;
    return c;
}

RegressorConfig RegressorConfig::full() {
    RegressorConfig c;
    c.epochs = 90;
    c.batch_size = 256;
    c.learning_rate = 3e-4;
    c.decay_factor = 0.9;
    c.decay_period = 20;
    return c;
}

void RegressorConfig::validate() const {
    if (epochs < 1)
        throw std::invalid_argument("epochs must be >= 1");
    if (batch_size < 1)
        throw std::invalid_argument("batch size must be >= 1");
    if (!(learning_rate > 0) || !std::isfinite(learning_rate))
        throw std::invalid_argument("learning rate must be > 0");
    if (!(decay_factor > 0 && decay_factor <= 1))
        throw std::invalid_argument("decay factor must lie in (0, 1]");
    if (decay_period < 1)
        throw std::invalid_argument("decay period must be >= 1");
    if (!(weight_decay >= 0))
        throw std::invalid_argument("weight decay must be >= 0");
    if (!(validation_fraction >= 0 && validation_fraction < 1))
        throw std::invalid_argument("validation fraction must lie in [0, 1)");
    if (norm)
        norm->validate();
    augment.validate();
}

double RegressorConfig::learning_rate_at(int epoch) const {
    return learning_rate * std::pow(decay_factor, double(epoch / decay_period));
}

std::string to_json_line(const EpochRecord &r) {
    return json{{"epoch", r.epoch}, {"train_loss", r.train_loss}, {"val_loss", r.val_loss}, {"lr", r.lr}}.dump();
}

// Model

struct TrainedModel::Net {
    nn::ResNet net;
    std::mutex mu;
};

TrainedModel::TrainedModel(const nn::Architecture &arch, const NormStats &norm, std::uint64_t init_seed)
    : net_(std::make_shared<Net>()), norm_(norm) {
    norm.validate();
    net_->net = nn::ResNet(arch, 3, ReflectanceParams::kSize);
    net_->net.init(init_seed);
    config_.architecture = arch;
}

const nn::Architecture &TrainedModel::architecture() const { return net_->net.architecture(); }

nn::Mat TrainedModel::forward_prepared(const nn::Tensor &x) const {
    std::lock_guard lock(net_->mu);
    return net_->net.forward(x, false);
}

ReflectanceParams TrainedModel::predict(const LinearImage &map_image) const {
    return predict(std::span<const LinearImage>(&map_image, 1)).front();
}

std::vector<ReflectanceParams> TrainedModel::predict(std::span<const LinearImage> map_images) const {
    std::vector<ReflectanceParams> out;
    out.reserve(map_images.size());
    for (std::size_t start = 0; start < map_images.size(); start += kPredictChunk) {
        auto chunk = map_images.subspan(start, std::min<std::size_t>(kPredictChunk, map_images.size() - start));
        nn::Mat y = forward_prepared(prepare_batch(chunk, norm_));
        for (Eigen::Index i = 0; i < y.cols(); ++i)
            out.push_back(column_params(y, i));
    }
    return out;
}

void TrainedModel::save(const std::filesystem::path &path) const {
    std::lock_guard lock(net_->mu);
    auto params = net_->net.params();
    auto buffers = net_->net.buffers();
    json header;
    header["architecture"] = arch_to_json(net_->net.architecture());
    header["norm"] = {{"mean", norm_.mean}, {"std", norm_.std}};
    header["config"] = config_to_json(config_);
    json hist = json::array();
    for (const auto &r : history_)
        hist.push_back(json::parse(to_json_line(r)));
    header["history"] = hist;
    json tensors = json::array();
    for (const nn::Param *p : params)
        tensors.push_back({{"name", p->name}, {"rows", p->value.rows()}, {"cols", p->value.cols()}});
    header["tensors"] = tensors;
    json bufs = json::array();
    for (const nn::Vec *b : buffers)
        bufs.push_back(b->size());
    header["buffers"] = bufs;
    const std::string text = header.dump();

    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os)
        throw IoError("cannot write model " + path.string());
    auto put_u32 = [&](std::uint32_t v) {
        unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
        os.write(reinterpret_cast<const char *>(b), 4);
    };
    os.write(kModelMagic, 4);
    put_u32(kModelVersion);
    put_u32(std::uint32_t(text.size()));
    os.write(text.data(), std::streamsize(text.size()));
    for (const nn::Param *p : params)
        os.write(reinterpret_cast<const char *>(p->value.data()), std::streamsize(p->value.size() * sizeof(float)));
    for (const nn::Vec *b : buffers)
        os.write(reinterpret_cast<const char *>(b->data()), std::streamsize(b->size() * sizeof(float)));
    if (!os)
        throw IoError("failed writing model " + path.string());
}

TrainedModel TrainedModel::load(const std::filesystem::path &path) {
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw IoError("cannot open model " + path.string());
    auto fail = [&](const std::string &why) { return IoError(path.string() + ": " + why); };
    auto get_u32 = [&]() {
        unsigned char b[4];
        if (!is.read(reinterpret_cast<char *>(b), 4))
            throw fail("truncated header");
        return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 | std::uint32_t(b[3]) << 24;
    };
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kModelMagic, 4) != 0)
        throw fail("not a model file");
    if (std::uint32_t v = get_u32(); v != kModelVersion)
        throw fail("unsupported model version " + std::to_string(v));
    std::string text(get_u32(), '\0');
    if (!is.read(text.data(), std::streamsize(text.size())))
        throw fail("truncated header");
    json header;
    try {
        header = json::parse(text);
    } catch (const json::exception &e) {
        throw fail(std::string("bad header: ") + e.what());
    }
    try {
        NormStats norm;
        norm.mean = header.at("norm").at("mean").get<std::array<double, 3>>();
        norm.std = header.at("norm").at("std").get<std::array<double, 3>>();
        TrainedModel model(arch_from_json(header.at("architecture")), norm);
        model.config_ = config_from_json(header.at("config"));
        model.config_.architecture = model.architecture();
        model.config_.norm = norm;
        for (const auto &h : header.at("history"))
            model.history_.push_back({h.at("epoch").get<int>(), h.at("train_loss").get<double>(),
                                      h.at("val_loss").get<double>(), h.at("lr").get<double>()});
        auto params = model.net_->net.params();
        auto buffers = model.net_->net.buffers();
        const json &tensors = header.at("tensors");
        const json &bufs = header.at("buffers");
        if (tensors.size() != params.size() || bufs.size() != buffers.size())
            throw fail("tensor count does not match the architecture");
        for (std::size_t i = 0; i < params.size(); ++i) {
            nn::Param *p = params[i];
            if (tensors[i].at("name").get<std::string>() != p->name ||
                tensors[i].at("rows").get<Eigen::Index>() != p->value.rows() ||
                tensors[i].at("cols").get<Eigen::Index>() != p->value.cols())
                throw fail("tensor " + std::to_string(i) + " does not match " + p->name);
            if (!is.read(reinterpret_cast<char *>(p->value.data()), std::streamsize(p->value.size() * sizeof(float))))
                throw fail("truncated tensor " + p->name);
        }
        for (std::size_t i = 0; i < buffers.size(); ++i) {
            if (bufs[i].get<Eigen::Index>() != buffers[i]->size())
                throw fail("buffer " + std::to_string(i) + " size mismatch");
            if (!is.read(reinterpret_cast<char *>(buffers[i]->data()),
                         std::streamsize(buffers[i]->size() * sizeof(float))))
                throw fail("truncated buffer " + std::to_string(i));
        }
        return model;
    } catch (const json::exception &e) {
        throw fail(std::string("bad header: ") + e.what());
    } catch (const std::invalid_argument &e) {
        throw fail(e.what());
    }
}

// Training

class Trainer {
  public:
    static TrainedModel run(const std::vector<ManifestRow> &rows, const std::filesystem::path &root,
                            const RegressorConfig &cfg, const TrainProgress &progress);
};

namespace {

double batch_loss(const nn::Mat &out, std::span<const Sample *const> batch, nn::Mat *grad) {
    double total = 0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        Vec7 pred;
        for (int k = 0; k < 7; ++k)
            pred[std::size_t(k)] = double(out(k, Eigen::Index(i)));
        total += weighted_loss(pred, batch[i]->target);
        if (grad) {
            Vec7 g = weighted_loss_grad(pred, batch[i]->target);
            for (int k = 0; k < 7; ++k)
                (*grad)(k, Eigen::Index(i)) = float(g[std::size_t(k)] / double(batch.size()));
        }
    }
    return total;
}

/// Batch boundaries over n items; a trailing batch of one joins its predecessor
/// so batch statistics are never taken over a single map.
std::vector<std::pair<std::size_t, std::size_t>> batch_ranges(std::size_t n, std::size_t batch) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t s = 0; s < n; s += batch)
        out.emplace_back(s, std::min(n, s + batch));
    if (out.size() > 1 && out.back().second - out.back().first == 1) {
        out[out.size() - 2].second = out.back().second;
        out.pop_back();
    }
    return out;
}

} // namespace

TrainedModel Trainer::run(const std::vector<ManifestRow> &rows, const std::filesystem::path &root,
                          const RegressorConfig &cfg, const TrainProgress &progress) {
    cfg.validate();
    if (rows.empty())
        throw std::invalid_argument("train: manifest has no rows");

    // Group rows by material and hold out whole materials.
    std::map<Vec7, std::size_t> material_index;
    std::vector<std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        auto [it, inserted] = material_index.try_emplace(rows[i].label.to_array(), groups.size());
        if (inserted)
            groups.emplace_back();
        groups[it->second].push_back(i);
    }
    std::mt19937_64 rng(cfg.seed);
    std::vector<std::size_t> order(groups.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::size_t n_val = std::size_t(std::lround(cfg.validation_fraction * double(groups.size())));
    if (cfg.validation_fraction > 0 && groups.size() >= 2)
        n_val = std::clamp<std::size_t>(n_val, 1, groups.size() - 1);
    else
        n_val = 0;

    std::vector<Sample> train_set, val_set;
    auto load = [&](std::size_t row) {
        LinearImage img = load_map_image(root / rows[row].map_path);
        check_image(img);
        Sample s;
        s.pixels.resize(img.pixel_count() * 3);
        for (std::size_t i = 0; i < img.pixel_count(); ++i)
            for (int c = 0; c < 3; ++c)
                s.pixels[3 * i + std::size_t(c)] = float(img[i][c]);
        s.target = rows[row].label.to_array();
        return s;
    };
    for (std::size_t g = 0; g < order.size(); ++g)
        for (std::size_t row : groups[order[g]])
            (g < n_val ? val_set : train_set).push_back(load(row));

    NormStats norm;
    if (cfg.norm) {
        norm = *cfg.norm;
    } else {
        // Streamed per-channel statistics of the compressed training maps.
        std::array<double, 3> sum{}, sq{};
        double n = 0;
        for (const auto &s : train_set) {
            for (std::size_t i = 0; i < s.pixels.size(); i += 3)
                for (int c = 0; c < 3; ++c) {
                    double v = std::log1p(std::max(0.0f, s.pixels[i + std::size_t(c)]));
                    sum[c] += v;
                    sq[c] += v * v;
                }
            n += double(s.pixels.size() / 3);
        }
        for (int c = 0; c < 3; ++c) {
            norm.mean[c] = sum[c] / n;
            norm.std[c] = std::sqrt(std::max(0.0, sq[c] / n - norm.mean[c] * norm.mean[c]));
            if (!(norm.std[c] > 1e-12))
                norm.std[c] = 1.0;
        }
    }

    TrainedModel model(cfg.architecture, norm, cfg.seed);
    model.config_ = cfg;
    model.config_.norm = norm;
    nn::ResNet &net = model.net_->net;
    std::vector<nn::Param *> params = net.params();
    nn::AdamOptions adam_opts;
    adam_opts.weight_decay = cfg.weight_decay;
    nn::Adam adam(adam_opts);

    AugmentConfig aug = cfg.augment;
    aug.seed = cfg.seed;
    const std::vector<Sample> &val_source = val_set.empty() ? train_set : val_set;

    std::vector<std::size_t> perm(train_set.size());
    std::iota(perm.begin(), perm.end(), 0);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = cfg.learning_rate_at(epoch);
        std::shuffle(perm.begin(), perm.end(), rng);
        double train_total = 0;
        for (auto [b0, b1] : batch_ranges(perm.size(), std::size_t(cfg.batch_size))) {
            std::vector<LinearImage> images;
            std::vector<const Sample *> batch;
            for (std::size_t k = b0; k < b1; ++k) {
                const Sample &s = train_set[perm[k]];
                std::uint64_t stream = std::uint64_t(epoch) * train_set.size() + perm[k];
                images.push_back(augment(s.image(), aug, stream));
                batch.push_back(&s);
            }
            nn::Mat out = net.forward(prepare_batch(images, norm), true);
            nn::Mat grad(out.rows(), out.cols());
            double loss = batch_loss(out, batch, &grad);
            if (!std::isfinite(loss))
                throw std::runtime_error("train: non-finite loss in epoch " + std::to_string(epoch + 1) +
                                         " at sample " + std::to_string(b0));
            train_total += loss;
            adam.zero_grad(params);
            net.backward(grad);
            adam.step(params, lr);
        }

        double val_total = 0;
        for (auto [b0, b1] : batch_ranges(val_source.size(), kPredictChunk)) {
            std::vector<LinearImage> images;
            std::vector<const Sample *> batch;
            for (std::size_t k = b0; k < b1; ++k) {
                images.push_back(val_source[k].image());
                batch.push_back(&val_source[k]);
            }
            val_total += batch_loss(net.forward(prepare_batch(images, norm), false), batch, nullptr);
        }
        EpochRecord rec{epoch + 1, train_total / double(train_set.size()), val_total / double(val_source.size()), lr};
        if (!std::isfinite(rec.val_loss))
            throw std::runtime_error("train: non-finite validation loss in epoch " + std::to_string(epoch + 1));
        model.history_.push_back(rec);
        if (progress.on_epoch)
            progress.on_epoch(rec);
    }
    return model;
}

TrainedModel train(const std::vector<ManifestRow> &rows, const std::filesystem::path &root,
                   const RegressorConfig &cfg, const TrainProgress &progress) {
    return Trainer::run(rows, root, cfg, progress);
}

TrainedModel train(const std::filesystem::path &manifest, const RegressorConfig &cfg,
                   const TrainProgress &progress) {
    return Trainer::run(read_manifest(manifest), manifest.parent_path(), cfg, progress);
}

} // namespace rmap
