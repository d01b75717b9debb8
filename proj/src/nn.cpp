#include "rmap/nn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rmap::nn {

namespace {

constexpr float kBnEps = 1e-5f;
constexpr float kBnMomentum = 0.1f;

void normal_fill(Mat &m, std::mt19937_64 &rng, double stddev) {
    std::normal_distribution<double> d(0.0, stddev);
    for (Eigen::Index i = 0; i < m.size(); ++i)
        m.data()[i] = float(d(rng));
}

int conv_out(int size, int k, int stride, int pad) { return (size + 2 * pad - k) / stride + 1; }

} // namespace

// Conv2d

Conv2d::Conv2d(const std::string &name, int in, int out, int kernel, int stride)
    : in_(in), out_(out), k_(kernel), stride_(stride), pad_(kernel / 2) {
    weight_.init(name + ".weight", out, in * kernel * kernel, true);
}

void Conv2d::init(std::mt19937_64 &rng) { normal_fill(weight_.value, rng, std::sqrt(2.0 / (in_ * k_ * k_))); }

/// Output columns [lo, hi) whose input column ox*stride - pad + kx lies inside [0, w).
void Conv2d::valid_range(int w, int ow, int kx, int &lo, int &hi) const {
    lo = 0;
    while (lo < ow && lo * stride_ - pad_ + kx < 0)
        ++lo;
    hi = ow;
    while (hi > lo && (hi - 1) * stride_ - pad_ + kx >= w)
        --hi;
}

void Conv2d::im2col(const Tensor &x, int n, Mat &col) const {
    const int oh = conv_out(x.h, k_, stride_, pad_), ow = conv_out(x.w, k_, stride_, pad_);
    col.resize(Eigen::Index(in_) * k_ * k_, Eigen::Index(oh) * ow);
    for (int ci = 0; ci < in_; ++ci) {
        const float *plane = x.data.row(ci).data() + std::size_t(n) * x.plane();
        for (int ky = 0; ky < k_; ++ky)
            for (int kx = 0; kx < k_; ++kx) {
                int lo, hi;
                valid_range(x.w, ow, kx, lo, hi);
                float *dst = col.row((Eigen::Index(ci) * k_ + ky) * k_ + kx).data();
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride_ - pad_ + ky;
                    float *out = dst + std::size_t(oy) * ow;
                    if (iy < 0 || iy >= x.h) {
                        std::fill(out, out + ow, 0.0f);
                        continue;
                    }
                    const float *in_row = plane + std::size_t(iy) * x.w + (kx - pad_);
                    std::fill(out, out + lo, 0.0f);
                    if (stride_ == 1)
                        std::copy(in_row + lo, in_row + hi, out + lo);
                    else
                        for (int ox = lo; ox < hi; ++ox)
                            out[ox] = in_row[ox * stride_];
                    std::fill(out + hi, out + ow, 0.0f);
                }
            }
    }
}

void Conv2d::col2im_add(const Mat &col, int n, Tensor &dx) const {
    const int oh = conv_out(dx.h, k_, stride_, pad_), ow = conv_out(dx.w, k_, stride_, pad_);
    for (int ci = 0; ci < in_; ++ci) {
        float *plane = dx.data.row(ci).data() + std::size_t(n) * dx.plane();
        for (int ky = 0; ky < k_; ++ky)
            for (int kx = 0; kx < k_; ++kx) {
                int lo, hi;
                valid_range(dx.w, ow, kx, lo, hi);
                const float *src = col.row((Eigen::Index(ci) * k_ + ky) * k_ + kx).data();
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride_ - pad_ + ky;
                    if (iy < 0 || iy >= dx.h)
                        continue;
                    const float *g = src + std::size_t(oy) * ow;
                    float *row = plane + std::size_t(iy) * dx.w + (kx - pad_);
                    for (int ox = lo; ox < hi; ++ox)
                        row[ox * stride_] += g[ox];
                }
            }
    }
}

// Columns are built one sample at a time so the im2col buffer stays in cache;
// backward rebuilds them from the saved input.
Tensor Conv2d::forward(const Tensor &x, bool train) {
    if (x.c != in_)
        throw std::invalid_argument("conv: input has " + std::to_string(x.c) + " channels, expected " +
                                    std::to_string(in_));
    const int oh = conv_out(x.h, k_, stride_, pad_), ow = conv_out(x.w, k_, stride_, pad_);
    const Eigen::Index per = Eigen::Index(oh) * ow;
    Tensor y(x.n, out_, oh, ow);
    Mat col, out;
    for (int n = 0; n < x.n; ++n) {
        if (k_ == 1 && stride_ == 1) {
            y.data.middleCols(n * per, per).noalias() = weight_.value * x.data.middleCols(n * per, per);
            continue;
        }
        im2col(x, n, col);
        out.noalias() = weight_.value * col;
        y.data.middleCols(n * per, per) = out;
    }
    if (train)
        x_ = x;
    return y;
}

Tensor Conv2d::backward(const Tensor &dy) {
    Tensor dx(x_.n, in_, x_.h, x_.w);
    const Eigen::Index per = Eigen::Index(dy.h) * dy.w;
    Mat col, g, dcol;
    for (int n = 0; n < x_.n; ++n) {
        g = dy.data.middleCols(n * per, per);
        im2col(x_, n, col);
        weight_.grad.noalias() += g * col.transpose();
        dcol.noalias() = weight_.value.transpose() * g;
        col2im_add(dcol, n, dx);
    }
    x_ = Tensor();
    return dx;
}

// BatchNorm2d

BatchNorm2d::BatchNorm2d(const std::string &name, int channels) : c_(channels) {
    gamma_.init(name + ".gamma", channels, 1, false);
    beta_.init(name + ".beta", channels, 1, false);
    gamma_.value.setOnes();
    running_mean_ = Vec::Zero(channels);
    running_var_ = Vec::Ones(channels);
}

Tensor BatchNorm2d::forward(const Tensor &x, bool train) {
    Tensor y(x.n, x.c, x.h, x.w);
    const Eigen::Index m = x.data.cols();
    if (!train) {
        for (int k = 0; k < c_; ++k) {
            const float inv = 1.0f / std::sqrt(running_var_[k] + kBnEps);
            const float scale = gamma_.value(k, 0) * inv;
            const float shift = beta_.value(k, 0) - running_mean_[k] * scale;
            y.data.row(k) = (x.data.row(k).array() * scale + shift).matrix();
        }
        return y;
    }
    xhat_.resize(x.c, m);
    inv_std_.resize(c_);
    for (int k = 0; k < c_; ++k) {
        const auto row = x.data.row(k).array();
        const double mean = row.cast<double>().mean();
        const double var = (row.cast<double>() - mean).square().mean();
        const float inv = float(1.0 / std::sqrt(var + kBnEps));
        inv_std_[k] = inv;
        xhat_.row(k) = ((row - float(mean)) * inv).matrix();
        y.data.row(k) = (xhat_.row(k).array() * gamma_.value(k, 0) + beta_.value(k, 0)).matrix();
        const double unbiased = m > 1 ? var * double(m) / double(m - 1) : var;
        running_mean_[k] = (1 - kBnMomentum) * running_mean_[k] + kBnMomentum * float(mean);
        running_var_[k] = (1 - kBnMomentum) * running_var_[k] + kBnMomentum * float(unbiased);
    }
    shape_ = Tensor();
    shape_.n = x.n;
    shape_.c = x.c;
    shape_.h = x.h;
    shape_.w = x.w;
    return y;
}

Tensor BatchNorm2d::backward(const Tensor &dy) {
    Tensor dx(shape_.n, shape_.c, shape_.h, shape_.w);
    const float m = float(dy.data.cols());
    for (int k = 0; k < c_; ++k) {
        const auto g = dy.data.row(k).array();
        const auto xh = xhat_.row(k).array();
        const float dbeta = g.sum();
        const float dgamma = (g * xh).sum();
        gamma_.grad(k, 0) += dgamma;
        beta_.grad(k, 0) += dbeta;
        const float scale = gamma_.value(k, 0) * inv_std_[k] / m;
        dx.data.row(k) = (scale * (m * g - dbeta - xh * dgamma)).matrix();
    }
    xhat_.resize(0, 0);
    return dx;
}

// Relu

Tensor Relu::forward(const Tensor &x, bool train) {
    Tensor y = x;
    y.data = x.data.cwiseMax(0.0f);
    if (train)
        mask_ = (x.data.array() > 0.0f).cast<float>().matrix();
    return y;
}

Tensor Relu::backward(const Tensor &dy) {
    Tensor dx = dy;
    dx.data.array() *= mask_.array();
    mask_.resize(0, 0);
    return dx;
}

// BasicBlock

BasicBlock::BasicBlock(const std::string &name, int in, int out, int stride)
    : conv1_(name + ".conv1", in, out, 3, stride), conv2_(name + ".conv2", out, out, 3, 1),
      bn1_(name + ".bn1", out), bn2_(name + ".bn2", out), has_proj_(stride != 1 || in != out) {
    if (has_proj_) {
        proj_ = Conv2d(name + ".proj", in, out, 1, stride);
        proj_bn_ = BatchNorm2d(name + ".proj_bn", out);
    }
}

void BasicBlock::init(std::mt19937_64 &rng) {
    conv1_.init(rng);
    conv2_.init(rng);
    if (has_proj_)
        proj_.init(rng);
}

Tensor BasicBlock::forward(const Tensor &x, bool train) {
    Tensor h = relu1_.forward(bn1_.forward(conv1_.forward(x, train), train), train);
    Tensor y = bn2_.forward(conv2_.forward(h, train), train);
    if (has_proj_)
        y.data += proj_bn_.forward(proj_.forward(x, train), train).data;
    else
        y.data += x.data;
    return relu_out_.forward(y, train);
}

Tensor BasicBlock::backward(const Tensor &dy) {
    Tensor g = relu_out_.backward(dy);
    Tensor dx = conv1_.backward(bn1_.backward(relu1_.backward(conv2_.backward(bn2_.backward(g)))));
    if (has_proj_)
        dx.data += proj_.backward(proj_bn_.backward(g)).data;
    else
        dx.data += g.data;
    return dx;
}

void BasicBlock::params(std::vector<Param *> &out) {
    conv1_.params(out);
    bn1_.params(out);
    conv2_.params(out);
    bn2_.params(out);
    if (has_proj_) {
        proj_.params(out);
        proj_bn_.params(out);
    }
}

void BasicBlock::buffers(std::vector<Vec *> &out) {
    bn1_.buffers(out);
    bn2_.buffers(out);
    if (has_proj_)
        proj_bn_.buffers(out);
}

// Linear

Linear::Linear(const std::string &name, int in, int out) {
    weight_.init(name + ".weight", out, in, true);
    bias_.init(name + ".bias", out, 1, false);
}

void Linear::init(std::mt19937_64 &rng, bool relu_follows) {
    normal_fill(weight_.value, rng, std::sqrt((relu_follows ? 2.0 : 1.0) / double(weight_.value.cols())));
    bias_.value.setZero();
}

Mat Linear::forward(const Mat &x) {
    x_ = x;
    Mat y = weight_.value * x;
    y.colwise() += bias_.value.col(0);
    return y;
}

Mat Linear::backward(const Mat &dy) {
    weight_.grad.noalias() += dy * x_.transpose();
    bias_.grad.col(0) += dy.rowwise().sum();
    return weight_.value.transpose() * dy;
}

// Architecture

Architecture Architecture::desk() { return {}; }

Architecture Architecture::wide() { return {"wide", 64, {64, 128, 256, 512}, {3, 4, 6, 3}, 256}; }

// ResNet

ResNet::ResNet(const Architecture &arch, int in_channels, int outputs)
    : arch_(arch), stem_("stem", in_channels, arch.stem_channels, 3, 2), stem_bn_("stem_bn", arch.stem_channels) {
    if (arch.stage_channels.empty() || arch.stage_channels.size() != arch.stage_blocks.size())
        throw std::invalid_argument("architecture: stage widths and block counts must be non-empty and aligned");
    int in = arch.stem_channels;
    for (std::size_t s = 0; s < arch.stage_channels.size(); ++s)
        for (int b = 0; b < arch.stage_blocks[s]; ++b) {
            int stride = (b == 0 && s > 0) ? 2 : 1;
            blocks_.emplace_back("stage" + std::to_string(s) + ".block" + std::to_string(b), in,
                                 arch.stage_channels[s], stride);
            in = arch.stage_channels[s];
        }
    last_c_ = in;
    fc1_ = Linear("fc1", in, arch.fc_hidden);
    fc2_ = Linear("fc2", arch.fc_hidden, outputs);
}

void ResNet::init(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    stem_.init(rng);
    for (auto &b : blocks_)
        b.init(rng);
    fc1_.init(rng, true);
    fc2_.init(rng, false);
}

Mat ResNet::forward(const Tensor &x, bool train) {
    Tensor h = stem_relu_.forward(stem_bn_.forward(stem_.forward(x, train), train), train);
    for (auto &b : blocks_)
        h = b.forward(h, train);
    n_ = h.n;
    last_h_ = h.h;
    last_w_ = h.w;
    // Global average pooling to c x n.
    Mat pooled(h.c, h.n);
    for (int k = 0; k < h.c; ++k)
        for (int n = 0; n < h.n; ++n)
            pooled(k, n) = h.data.row(k).segment(Eigen::Index(n) * h.plane(), h.plane()).mean();
    Mat z = fc1_.forward(pooled);
    hidden_mask_ = (z.array() > 0.0f).cast<float>().matrix();
    Mat out = fc2_.forward(z.cwiseMax(0.0f));
    out = (1.0f / (1.0f + (-out.array()).exp())).matrix();
    out_ = out;
    return out;
}

void ResNet::backward(const Mat &dy) {
    Mat dz = (dy.array() * out_.array() * (1.0f - out_.array())).matrix();
    Mat dh = fc2_.backward(dz);
    dh.array() *= hidden_mask_.array();
    Mat dpooled = fc1_.backward(dh);
    Tensor g(n_, last_c_, last_h_, last_w_);
    const float inv_plane = 1.0f / float(g.plane());
    for (int k = 0; k < g.c; ++k)
        for (int n = 0; n < g.n; ++n)
            g.data.row(k).segment(Eigen::Index(n) * g.plane(), g.plane()).setConstant(dpooled(k, n) * inv_plane);
    for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it)
        g = it->backward(g);
    stem_.backward(stem_bn_.backward(stem_relu_.backward(g)));
}

std::vector<Param *> ResNet::params() {
    std::vector<Param *> out;
    stem_.params(out);
    stem_bn_.params(out);
    for (auto &b : blocks_)
        b.params(out);
    fc1_.params(out);
    fc2_.params(out);
    return out;
}

std::vector<Vec *> ResNet::buffers() {
    std::vector<Vec *> out;
    stem_bn_.buffers(out);
    for (auto &b : blocks_)
        b.buffers(out);
    return out;
}

// Adam

void Adam::zero_grad(const std::vector<Param *> &params) {
    for (Param *p : params)
        p->grad.setZero();
}

void Adam::step(const std::vector<Param *> &params, double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(opt_.beta1, double(t_));
    const double bc2 = 1.0 - std::pow(opt_.beta2, double(t_));
    const float b1 = float(opt_.beta1), b2 = float(opt_.beta2);
    const float step = float(lr / bc1), eps = float(opt_.eps);
    const float inv_bc2 = float(1.0 / bc2);
    for (Param *p : params) {
        auto g = p->grad.array();
        if (p->decay)
            g += float(opt_.weight_decay) * p->value.array();
        p->m.array() = b1 * p->m.array() + (1 - b1) * g;
        p->v.array() = b2 * p->v.array() + (1 - b2) * g.square();
        p->value.array() -= step * p->m.array() / ((p->v.array() * inv_bc2).sqrt() + eps);
    }
}

} // namespace rmap::nn
