#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

// Minimal neural kernel: dense ReLU stacks, a GRU cell, manual reverse-mode
// gradients, Adam, and bit-exact checkpointing. CPU only, double precision.
namespace reliq::nn {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

struct GradientError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ParamTensor {
    std::string name;
    Matrix value;
    Matrix grad;

    ParamTensor() = default;
    ParamTensor(std::string n, int rows, int cols)
        : name(std::move(n)),
          value(Matrix::Zero(rows, cols)),
          grad(Matrix::Zero(rows, cols)) {}
};

// Uniform He-style fan-in scaling.
void init_uniform(ParamTensor& p, std::mt19937_64& rng, int fan_in);

// Affine + ReLU stack; the final layer is linear. widths includes the
// input width, e.g. {8, 64, 4} is one hidden layer of 64.
class Mlp {
  public:
    Mlp() = default;
    Mlp(std::string name, std::vector<int> widths, std::mt19937_64& rng);

    struct Cache {
        std::vector<Vector> inputs;          // per layer input
        std::vector<Vector> preactivations;  // per layer, pre-ReLU
    };

    [[nodiscard]] Vector forward(const Vector& x, Cache* cache = nullptr) const;
    // Accumulates parameter gradients; returns dLoss/dx.
    Vector backward(const Cache& cache, const Vector& d_out);

    [[nodiscard]] int input_width() const { return widths_.front(); }
    [[nodiscard]] int output_width() const { return widths_.back(); }
    std::vector<ParamTensor*> params();

  private:
    std::vector<int> widths_;
    std::vector<ParamTensor> weights_;
    std::vector<ParamTensor> biases_;
};

// z = sigm(Wz x + Uz h + bz), r = sigm(Wr x + Ur h + br),
// c = tanh(Wc x + Uc (r.h) + bc), h' = z.h + (1-z).c
class GruCell {
  public:
    GruCell() = default;
    GruCell(std::string name, int input_width, int hidden_width,
            std::mt19937_64& rng);

    struct Cache {
        Vector x, h, z, r, c, rh;
    };

    [[nodiscard]] Vector step(const Vector& h, const Vector& x,
                              Cache* cache = nullptr) const;
    struct BackwardResult {
        Vector d_x;
        Vector d_h;
    };
    BackwardResult backward(const Cache& cache, const Vector& d_h_next);

    [[nodiscard]] int hidden_width() const { return hidden_; }
    [[nodiscard]] int input_width() const { return input_; }
    std::vector<ParamTensor*> params();

  private:
    int input_ = 0;
    int hidden_ = 0;
    // order: Wz Uz bz Wr Ur br Wc Uc bc
    std::vector<ParamTensor> tensors_;
};

struct AdamConfig {
    double lr = 0.0005;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Owns moment buffers per parameter; parameters are registered once.
class AdamOptimizer {
  public:
    AdamOptimizer(std::vector<ParamTensor*> params, AdamConfig cfg = {});
    // Applies one bias-corrected update from accumulated gradients, then
    // zeroes them. Rejects non-finite gradients.
    void step();
    void zero_grad();
    [[nodiscard]] long iteration() const { return t_; }

  private:
    std::vector<ParamTensor*> params_;
    std::vector<Matrix> m_, v_;
    AdamConfig cfg_;
    long t_ = 0;
};

// Checkpoint layout: magic "RLQC", u32 version, u64 tensor count, then per
// tensor: u32 name length, name bytes, u64 rows, u64 cols, rows*cols
// little-endian doubles.
void save_checkpoint(const std::vector<ParamTensor*>& params,
                     const std::string& path);
void load_checkpoint(std::vector<ParamTensor*> params,
                     const std::string& path);

}  // namespace reliq::nn
