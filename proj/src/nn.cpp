#include "reliq/nn.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace reliq::nn {

namespace {

Vector sigmoid(const Vector& x) {
    return x.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
}

void write_u32(std::ofstream& out, std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_u64(std::ofstream& out, std::uint64_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
std::uint32_t read_u32(std::ifstream& in) {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}
std::uint64_t read_u64(std::ifstream& in) {
    std::uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}

constexpr std::uint32_t kMagic = 0x43514C52;  // "RLQC"
constexpr std::uint32_t kVersion = 1;

}  // namespace

void init_uniform(ParamTensor& p, std::mt19937_64& rng, int fan_in) {
    const double bound = std::sqrt(2.0 / std::max(1, fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (int i = 0; i < p.value.rows(); ++i)
        for (int j = 0; j < p.value.cols(); ++j) p.value(i, j) = dist(rng);
}

Mlp::Mlp(std::string name, std::vector<int> widths, std::mt19937_64& rng)
    : widths_(std::move(widths)) {
    if (widths_.size() < 2) throw GradientError("mlp needs >= 2 widths");
    for (size_t l = 0; l + 1 < widths_.size(); ++l) {
        weights_.emplace_back(name + ".W" + std::to_string(l), widths_[l + 1],
                              widths_[l]);
        biases_.emplace_back(name + ".b" + std::to_string(l), widths_[l + 1],
                             1);
        init_uniform(weights_.back(), rng, widths_[l]);
    }
}

Vector Mlp::forward(const Vector& x, Cache* cache) const {
    if (x.size() != widths_.front()) {
        throw GradientError("mlp input width mismatch");
    }
    Vector h = x;
    if (cache) {
        cache->inputs.clear();
        cache->preactivations.clear();
    }
    for (size_t l = 0; l < weights_.size(); ++l) {
        if (cache) cache->inputs.push_back(h);
        Vector a = weights_[l].value * h + biases_[l].value.col(0);
        if (cache) cache->preactivations.push_back(a);
        if (l + 1 < weights_.size()) {
            h = a.cwiseMax(0.0);
        } else {
            h = std::move(a);
        }
    }
    return h;
}

Vector Mlp::backward(const Cache& cache, const Vector& d_out) {
    if (cache.inputs.size() != weights_.size()) {
        throw GradientError("mlp backward called with stale or empty cache");
    }
    Vector delta = d_out;
    for (int l = static_cast<int>(weights_.size()) - 1; l >= 0; --l) {
        if (l + 1 < static_cast<int>(weights_.size())) {
            const Vector& a = cache.preactivations[l];
            for (int i = 0; i < delta.size(); ++i) {
                if (a(i) <= 0.0) delta(i) = 0.0;
            }
        }
        weights_[l].grad += delta * cache.inputs[l].transpose();
        biases_[l].grad.col(0) += delta;
        delta = weights_[l].value.transpose() * delta;
    }
    return delta;
}

std::vector<ParamTensor*> Mlp::params() {
    std::vector<ParamTensor*> out;
    for (size_t l = 0; l < weights_.size(); ++l) {
        out.push_back(&weights_[l]);
        out.push_back(&biases_[l]);
    }
    return out;
}

GruCell::GruCell(std::string name, int input_width, int hidden_width,
                 std::mt19937_64& rng)
    : input_(input_width), hidden_(hidden_width) {
    const char* names[9] = {"Wz", "Uz", "bz", "Wr", "Ur",
                            "br", "Wc", "Uc", "bc"};
    for (int g = 0; g < 3; ++g) {
        tensors_.emplace_back(name + "." + names[g * 3 + 0], hidden_, input_);
        tensors_.emplace_back(name + "." + names[g * 3 + 1], hidden_, hidden_);
        tensors_.emplace_back(name + "." + names[g * 3 + 2], hidden_, 1);
        init_uniform(tensors_[g * 3 + 0], rng, input_);
        init_uniform(tensors_[g * 3 + 1], rng, hidden_);
    }
}

Vector GruCell::step(const Vector& h, const Vector& x, Cache* cache) const {
    if (h.size() != hidden_ || x.size() != input_) {
        throw GradientError("gru input/state width mismatch");
    }
    const auto& Wz = tensors_[0].value;
    const auto& Uz = tensors_[1].value;
    const auto& bz = tensors_[2].value;
    const auto& Wr = tensors_[3].value;
    const auto& Ur = tensors_[4].value;
    const auto& br = tensors_[5].value;
    const auto& Wc = tensors_[6].value;
    const auto& Uc = tensors_[7].value;
    const auto& bc = tensors_[8].value;

    const Vector z = sigmoid(Wz * x + Uz * h + bz.col(0));
    const Vector r = sigmoid(Wr * x + Ur * h + br.col(0));
    const Vector rh = r.cwiseProduct(h);
    const Vector c = (Wc * x + Uc * rh + bc.col(0))
                         .unaryExpr([](double v) { return std::tanh(v); });
    const Vector h_next = z.cwiseProduct(h) +
                          (Vector::Ones(hidden_) - z).cwiseProduct(c);
    if (cache) *cache = {x, h, z, r, c, rh};
    return h_next;
}

GruCell::BackwardResult GruCell::backward(const Cache& cache,
                                          const Vector& d_h_next) {
    const auto& Wz = tensors_[0];
    const auto& Uz = tensors_[1];
    const auto& Wr = tensors_[3];
    const auto& Ur = tensors_[4];
    const auto& Wc = tensors_[6];
    const auto& Uc = tensors_[7];

    const Vector ones = Vector::Ones(hidden_);
    const Vector d_z = d_h_next.cwiseProduct(cache.h - cache.c);
    const Vector d_c = d_h_next.cwiseProduct(ones - cache.z);
    Vector d_h = d_h_next.cwiseProduct(cache.z);

    const Vector d_az =
        d_z.cwiseProduct(cache.z).cwiseProduct(ones - cache.z);
    const Vector d_ac =
        d_c.cwiseProduct(ones - cache.c.cwiseProduct(cache.c));
    const Vector d_rh = Uc.value.transpose() * d_ac;
    const Vector d_r = d_rh.cwiseProduct(cache.h);
    d_h += d_rh.cwiseProduct(cache.r);
    const Vector d_ar =
        d_r.cwiseProduct(cache.r).cwiseProduct(ones - cache.r);

    tensors_[0].grad += d_az * cache.x.transpose();
    tensors_[1].grad += d_az * cache.h.transpose();
    tensors_[2].grad.col(0) += d_az;
    tensors_[3].grad += d_ar * cache.x.transpose();
    tensors_[4].grad += d_ar * cache.h.transpose();
    tensors_[5].grad.col(0) += d_ar;
    tensors_[6].grad += d_ac * cache.x.transpose();
    tensors_[7].grad += d_ac * cache.rh.transpose();
    tensors_[8].grad.col(0) += d_ac;

    BackwardResult res;
    res.d_x = Wz.value.transpose() * d_az + Wr.value.transpose() * d_ar +
              Wc.value.transpose() * d_ac;
    res.d_h = d_h + Uz.value.transpose() * d_az +
              Ur.value.transpose() * d_ar;
    return res;
}

std::vector<ParamTensor*> GruCell::params() {
    std::vector<ParamTensor*> out;
    for (auto& t : tensors_) out.push_back(&t);
    return out;
}

AdamOptimizer::AdamOptimizer(std::vector<ParamTensor*> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
    for (const auto* p : params_) {
        m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
        v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    }
}

void AdamOptimizer::step() {
    for (const auto* p : params_) {
        if (!p->grad.allFinite()) {
            throw GradientError("non-finite gradient in " + p->name);
        }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
        auto& p = *params_[i];
        m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * p.grad;
        v_[i] = cfg_.beta2 * v_[i] +
                (1.0 - cfg_.beta2) * p.grad.cwiseProduct(p.grad);
        const Matrix m_hat = m_[i] / bc1;
        const Matrix v_hat = v_[i] / bc2;
        p.value.array() -=
            cfg_.lr * m_hat.array() / (v_hat.array().sqrt() + cfg_.eps);
        if (!p.value.allFinite()) {
            throw GradientError("non-finite parameter after update: " + p.name);
        }
        p.grad.setZero();
    }
}

void AdamOptimizer::zero_grad() {
    for (auto* p : params_) p->grad.setZero();
}

void save_checkpoint(const std::vector<ParamTensor*>& params,
                     const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw CheckpointError("cannot open checkpoint for writing: " + path);
    write_u32(out, kMagic);
    write_u32(out, kVersion);
    write_u64(out, params.size());
    for (const auto* p : params) {
        write_u32(out, static_cast<std::uint32_t>(p->name.size()));
        out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
        write_u64(out, static_cast<std::uint64_t>(p->value.rows()));
        write_u64(out, static_cast<std::uint64_t>(p->value.cols()));
        out.write(reinterpret_cast<const char*>(p->value.data()),
                  static_cast<std::streamsize>(sizeof(double) *
                                               p->value.size()));
    }
    if (!out) throw CheckpointError("checkpoint write failed: " + path);
}

void load_checkpoint(std::vector<ParamTensor*> params,
                     const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint: " + path);
    if (read_u32(in) != kMagic) throw CheckpointError("bad checkpoint magic");
    if (read_u32(in) != kVersion) {
        throw CheckpointError("unsupported checkpoint version");
    }
    const std::uint64_t count = read_u64(in);
    if (count != params.size()) {
        throw CheckpointError("checkpoint tensor count mismatch");
    }
    for (auto* p : params) {
        const std::uint32_t name_len = read_u32(in);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        const std::uint64_t rows = read_u64(in);
        const std::uint64_t cols = read_u64(in);
        if (!in || name != p->name ||
            rows != static_cast<std::uint64_t>(p->value.rows()) ||
            cols != static_cast<std::uint64_t>(p->value.cols())) {
            throw CheckpointError("checkpoint shape table mismatch at " +
                                  p->name);
        }
        in.read(reinterpret_cast<char*>(p->value.data()),
                static_cast<std::streamsize>(sizeof(double) * rows * cols));
        if (!in) throw CheckpointError("truncated checkpoint: " + path);
    }
}

}  // namespace reliq::nn
