#pragma once

#include <functional>
#include <string>
#include <vector>

#include "feduaa/rng.hpp"
#include "feduaa/tensor.hpp"

namespace feduaa {

// Layer layout of the shared encoder plus a client-local head.
// encoder_dims = [d0, d1, ..., dm] declares m tanh layers (m may be zero, in
// which case the encoder is the identity); the head is one linear map from dm
// to head_out logits.
struct ModelShape {
    std::vector<int> encoder_dims;
    int head_out = 0;

    int input_dim() const { return encoder_dims.front(); }
    int encoder_out() const { return encoder_dims.back(); }
    int encoder_layer_count() const { return static_cast<int>(encoder_dims.size()) - 1; }
    std::size_t encoder_param_count() const;
    std::size_t head_param_count() const;

    void validate() const;
    bool operator==(const ModelShape&) const = default;
};

// Flat parameter vectors. Per encoder layer: weight (out x in, row-major)
// followed by bias (out). Head: weight (head_out x encoder_out) then bias.
struct ModelParams {
    ModelShape shape;
    std::vector<double> encoder;
    std::vector<double> head;

    void validate() const; // ShapeError when a vector length disagrees with shape
};

// Same layout as the parameter vectors it differentiates.
struct GradientVector {
    std::vector<double> encoder;
    std::vector<double> head;
};

// Glorot-uniform weights (+-sqrt(6/(fan_in+fan_out))), zero biases, drawn in
// storage order from the given stream.
ModelParams init_params(const ModelShape& shape, Rng& rng);

// Pre-activation logits, shape batch x head_out.
Tensor2 mlp_forward(const ModelParams& params, const Tensor2& batch);

// Exact reverse-mode gradients of the forward composition.
GradientVector mlp_backward(const ModelParams& params, const Tensor2& batch,
                            const Tensor2& dl_dlogits);

ModelParams sgd_step(const ModelParams& params, const GradientVector& grads, double lr);

// Central differences (L(p+h e_j) - L(p-h e_j)) / 2h per coordinate.
// Independent of the reverse-mode path above; used as its oracle.
std::vector<double> finite_diff_grad(const std::function<double(const std::vector<double>&)>& loss_fn,
                                     const std::vector<double>& params, double step);

// Text checkpoint: header line `FEDUAA-CKPT v1; layers=<d0,d1,...>; K=<k>`,
// then one decimal float per line in parameter-vector order (encoder, head).
// K=0 marks an encoder-only checkpoint (the aggregated global encoder).
// Values are printed with 17 significant digits so round-trips are bit-exact.
struct EncoderCheckpoint {
    std::vector<int> encoder_dims;
    std::vector<double> encoder;
};

void save_checkpoint(const std::string& path, const ModelParams& params);
void save_encoder_checkpoint(const std::string& path, const std::vector<int>& encoder_dims,
                             const std::vector<double>& encoder);
ModelParams load_checkpoint(const std::string& path);            // K >= 1 files
EncoderCheckpoint load_encoder_checkpoint(const std::string& path); // K = 0 files

// snprintf %.17g; shared by every writer that must round-trip doubles.
std::string format_double(double v);

}  // namespace feduaa
