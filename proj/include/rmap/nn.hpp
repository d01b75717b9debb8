#pragma once

// Minimal CPU convolutional network: im2col convolutions on Eigen float GEMM,
// batch normalization, residual basic blocks, a fully connected head and Adam.
//
// Activations are stored channel-major: a Tensor with shape (n, c, h, w)
// holds a c x (n*h*w) matrix whose row k lists channel k of every sample,
// sample after sample, each in row-major pixel order.

#include <Eigen/Core>

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace rmap::nn {

using Mat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXf;

struct Tensor {
    int n = 0, c = 0, h = 0, w = 0;
    Mat data; ///< c x (n*h*w)

    Tensor() = default;
    Tensor(int n_, int c_, int h_, int w_) : n(n_), c(c_), h(h_), w(w_), data(Mat::Zero(c_, Eigen::Index(n_) * h_ * w_)) {}
    int plane() const { return h * w; }
};

struct Param {
    std::string name;
    Mat value, grad, m, v;
    bool decay = true; ///< receives L2 weight decay

    void init(const std::string &nm, int rows, int cols, bool wd) {
        name = nm;
        value = Mat::Zero(rows, cols);
        grad = m = v = Mat::Zero(rows, cols);
        decay = wd;
    }
};

class Conv2d {
  public:
    Conv2d() = default;
    Conv2d(const std::string &name, int in, int out, int kernel, int stride);
    void init(std::mt19937_64 &rng);
    Tensor forward(const Tensor &x, bool train);
    Tensor backward(const Tensor &dy);
    void params(std::vector<Param *> &out) { out.push_back(&weight_); }
    int out_channels() const { return out_; }

  private:
    void valid_range(int w, int ow, int kx, int &lo, int &hi) const;
    void im2col(const Tensor &x, int n, Mat &col) const;
    void col2im_add(const Mat &col, int n, Tensor &dx) const;

    int in_ = 0, out_ = 0, k_ = 1, stride_ = 1, pad_ = 0;
    Param weight_; ///< out x (in*k*k)
    Tensor x_;
};

class BatchNorm2d {
  public:
    BatchNorm2d() = default;
    BatchNorm2d(const std::string &name, int channels);
    Tensor forward(const Tensor &x, bool train);
    Tensor backward(const Tensor &dy);
    void params(std::vector<Param *> &out) {
        out.push_back(&gamma_);
        out.push_back(&beta_);
    }
    void buffers(std::vector<Vec *> &out) {
        out.push_back(&running_mean_);
        out.push_back(&running_var_);
    }

  private:
    int c_ = 0;
    Param gamma_, beta_;
    Vec running_mean_, running_var_;
    Mat xhat_;
    Vec inv_std_;
    Tensor shape_;
};

class Relu {
  public:
    Tensor forward(const Tensor &x, bool train);
    Tensor backward(const Tensor &dy);

  private:
    Mat mask_;
};

class BasicBlock {
  public:
    BasicBlock() = default;
    BasicBlock(const std::string &name, int in, int out, int stride);
    void init(std::mt19937_64 &rng);
    Tensor forward(const Tensor &x, bool train);
    Tensor backward(const Tensor &dy);
    void params(std::vector<Param *> &out);
    void buffers(std::vector<Vec *> &out);

  private:
    Conv2d conv1_, conv2_, proj_;
    BatchNorm2d bn1_, bn2_, proj_bn_;
    Relu relu1_, relu_out_;
    bool has_proj_ = false;
};

class Linear {
  public:
    Linear() = default;
    Linear(const std::string &name, int in, int out);
    void init(std::mt19937_64 &rng, bool relu_follows);
    /// x: in x n, one column per sample.
    Mat forward(const Mat &x);
    Mat backward(const Mat &dy);
    void params(std::vector<Param *> &out) {
        out.push_back(&weight_);
        out.push_back(&bias_);
    }

  private:
    Param weight_, bias_;
    Mat x_;
};

struct Architecture {
    std::string name = "desk";
    int stem_channels = 16;
    std::vector<int> stage_channels{16, 32, 64, 128};
    std::vector<int> stage_blocks{2, 2, 2, 2};
    int fc_hidden = 64;

    /// ResNet-18-style stack (16 convolutions + 2 fully connected layers).
    static Architecture desk();
    /// Wider and deeper stack for large corpora.
    static Architecture wide();
    bool operator==(const Architecture &) const = default;
};

/// Residual network mapping (n, 3, 60, 120) inputs to n x 7 sigmoid outputs.
class ResNet {
  public:
    ResNet() = default;
    ResNet(const Architecture &arch, int in_channels, int outputs);
    void init(std::uint64_t seed);
    /// Returns outputs x n, values in (0,1).
    Mat forward(const Tensor &x, bool train);
    /// dy: outputs x n gradient of the loss with respect to the sigmoid outputs.
    void backward(const Mat &dy);
    std::vector<Param *> params();
    std::vector<Vec *> buffers();
    const Architecture &architecture() const { return arch_; }

  private:
    Architecture arch_;
    Conv2d stem_;
    BatchNorm2d stem_bn_;
    Relu stem_relu_;
    std::vector<BasicBlock> blocks_;
    Linear fc1_, fc2_;
    Mat hidden_mask_, out_;
    int last_c_ = 0, last_h_ = 0, last_w_ = 0, n_ = 0;
};

struct AdamOptions {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-4;
};

class Adam {
  public:
    explicit Adam(AdamOptions o = {}) : opt_(o) {}
    void step(const std::vector<Param *> &params, double lr);
    void zero_grad(const std::vector<Param *> &params);
    long steps() const { return t_; }

  private:
    AdamOptions opt_;
    long t_ = 0;
};

} // namespace rmap::nn
