#include "feduaa/model.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "feduaa/errors.hpp"

namespace feduaa {

namespace {

// Offsets of one affine layer inside a flat parameter vector.
struct LayerView {
    int in = 0;
    int out = 0;
    std::size_t weight_off = 0; // out x in, row-major
    std::size_t bias_off = 0;   // out
};

std::vector<LayerView> encoder_layers(const ModelShape& shape) {
    std::vector<LayerView> layers;
    std::size_t off = 0;
    for (int l = 0; l + 1 < static_cast<int>(shape.encoder_dims.size()); ++l) {
        LayerView v;
        v.in = shape.encoder_dims[static_cast<std::size_t>(l)];
        v.out = shape.encoder_dims[static_cast<std::size_t>(l) + 1];
        v.weight_off = off;
        v.bias_off = off + static_cast<std::size_t>(v.in) * v.out;
        off = v.bias_off + static_cast<std::size_t>(v.out);
        layers.push_back(v);
    }
    return layers;
}

// y = x W^T + b for a whole batch
Tensor2 affine(const Tensor2& x, const double* weight, const double* bias, int in, int out,
               const std::string& layer_name) {
    if (x.cols != in) {
        throw ShapeError(layer_name + ": batch has " + std::to_string(x.cols) +
                         " columns, expected " + std::to_string(in));
    }
    Tensor2 y(x.rows, out);
    for (int r = 0; r < x.rows; ++r) {
        const double* xr = x.row(r);
        double* yr = y.row(r);
        for (int o = 0; o < out; ++o) {
            const double* w = weight + static_cast<std::size_t>(o) * in;
            double acc = bias[o];
            for (int i = 0; i < in; ++i) acc += w[i] * xr[i];
            yr[o] = acc;
        }
    }
    return y;
}

Tensor2 tanh_of(const Tensor2& x) {
    Tensor2 y(x.rows, x.cols);
    for (std::size_t i = 0; i < x.data.size(); ++i) y.data[i] = std::tanh(x.data[i]);
    return y;
}

void glorot_fill(double* weight, int in, int out, Rng& rng) {
    const double limit = std::sqrt(6.0 / (in + out));
    for (std::size_t i = 0; i < static_cast<std::size_t>(in) * out; ++i) {
        weight[i] = rng.uniform(-limit, limit);
    }
}

}  // namespace

std::size_t ModelShape::encoder_param_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < encoder_dims.size(); ++l) {
        n += static_cast<std::size_t>(encoder_dims[l]) * encoder_dims[l + 1] +
             static_cast<std::size_t>(encoder_dims[l + 1]);
    }
    return n;
}

std::size_t ModelShape::head_param_count() const {
    return static_cast<std::size_t>(encoder_out()) * head_out + static_cast<std::size_t>(head_out);
}

void ModelShape::validate() const {
    if (encoder_dims.empty()) throw ShapeError("ModelShape: encoder_dims must declare the input dimension");
    for (int d : encoder_dims) {
        if (d < 1) throw ShapeError("ModelShape: encoder dimensions must be positive");
    }
    if (head_out < 1) throw ShapeError("ModelShape: head output dimension must be positive");
}

void ModelParams::validate() const {
    shape.validate();
    if (encoder.size() != shape.encoder_param_count()) {
        throw ShapeError("ModelParams: encoder vector has " + std::to_string(encoder.size()) +
                         " entries, shape declares " + std::to_string(shape.encoder_param_count()));
    }
    if (head.size() != shape.head_param_count()) {
        throw ShapeError("ModelParams: head vector has " + std::to_string(head.size()) +
                         " entries, shape declares " + std::to_string(shape.head_param_count()));
    }
}

ModelParams init_params(const ModelShape& shape, Rng& rng) {
    shape.validate();
    ModelParams p;
    p.shape = shape;
    p.encoder.assign(shape.encoder_param_count(), 0.0);
    p.head.assign(shape.head_param_count(), 0.0);
    for (const auto& l : encoder_layers(shape)) {
        glorot_fill(p.encoder.data() + l.weight_off, l.in, l.out, rng);
        // biases stay zero
    }
    glorot_fill(p.head.data(), shape.encoder_out(), shape.head_out, rng);
    return p;
}

Tensor2 mlp_forward(const ModelParams& params, const Tensor2& batch) {
    params.validate();
    Tensor2 h = batch;
    int idx = 0;
    for (const auto& l : encoder_layers(params.shape)) {
        h = tanh_of(affine(h, params.encoder.data() + l.weight_off, params.encoder.data() + l.bias_off,
                           l.in, l.out, "encoder layer " + std::to_string(idx)));
        ++idx;
    }
    Tensor2 logits = affine(h, params.head.data(),
                            params.head.data() + static_cast<std::size_t>(params.shape.encoder_out()) *
                                                     params.shape.head_out,
                            params.shape.encoder_out(), params.shape.head_out, "head layer");
    require_finite(logits, "mlp_forward logits");
    return logits;
}

GradientVector mlp_backward(const ModelParams& params, const Tensor2& batch,
                            const Tensor2& dl_dlogits) {
    params.validate();
    if (dl_dlogits.cols != params.shape.head_out || dl_dlogits.rows != batch.rows) {
        throw ShapeError("mlp_backward: dl_dlogits is " + std::to_string(dl_dlogits.rows) + "x" +
                         std::to_string(dl_dlogits.cols) + ", expected " + std::to_string(batch.rows) +
                         "x" + std::to_string(params.shape.head_out));
    }

    const auto layers = encoder_layers(params.shape);

    // forward pass, keeping every post-tanh activation
    std::vector<Tensor2> acts;
    acts.reserve(layers.size() + 1);
    acts.push_back(batch);
    int idx = 0;
    for (const auto& l : layers) {
        acts.push_back(tanh_of(affine(acts.back(), params.encoder.data() + l.weight_off,
                                      params.encoder.data() + l.bias_off, l.in, l.out,
                                      "encoder layer " + std::to_string(idx))));
        ++idx;
    }
    if (acts.back().cols != params.shape.encoder_out()) {
        throw ShapeError("mlp_backward: encoder output width mismatch");
    }

    GradientVector g;
    g.encoder.assign(params.encoder.size(), 0.0);
    g.head.assign(params.head.size(), 0.0);

    const int enc_out = params.shape.encoder_out();
    const int k = params.shape.head_out;
    const Tensor2& h_last = acts.back();

    // head: dW = G^T H, db = column sums of G, dH = G W
    Tensor2 dh(batch.rows, enc_out);
    {
        const double* w = params.head.data();
        double* dw = g.head.data();
        double* db = g.head.data() + static_cast<std::size_t>(enc_out) * k;
        for (int r = 0; r < batch.rows; ++r) {
            const double* gr = dl_dlogits.row(r);
            const double* hr = h_last.row(r);
            double* dhr = dh.row(r);
            for (int o = 0; o < k; ++o) {
                const double go = gr[o];
                db[o] += go;
                double* dwo = dw + static_cast<std::size_t>(o) * enc_out;
                const double* wo = w + static_cast<std::size_t>(o) * enc_out;
                for (int i = 0; i < enc_out; ++i) {
                    dwo[i] += go * hr[i];
                    dhr[i] += go * wo[i];
                }
            }
        }
    }

    // encoder layers in reverse
    for (int l = static_cast<int>(layers.size()) - 1; l >= 0; --l) {
        const auto& lv = layers[static_cast<std::size_t>(l)];
        const Tensor2& h_out = acts[static_cast<std::size_t>(l) + 1];
        const Tensor2& h_in = acts[static_cast<std::size_t>(l)];
        Tensor2 dprev(batch.rows, lv.in);
        const double* w = params.encoder.data() + lv.weight_off;
        double* dw = g.encoder.data() + lv.weight_off;
        double* db = g.encoder.data() + lv.bias_off;
        for (int r = 0; r < batch.rows; ++r) {
            const double* hr_out = h_out.row(r);
            const double* hr_in = h_in.row(r);
            const double* dhr = dh.row(r);
            double* dpr = dprev.row(r);
            for (int o = 0; o < lv.out; ++o) {
                // d/dz tanh(z) = 1 - tanh(z)^2
                const double da = dhr[o] * (1.0 - hr_out[o] * hr_out[o]);
                db[o] += da;
                double* dwo = dw + static_cast<std::size_t>(o) * lv.in;
                const double* wo = w + static_cast<std::size_t>(o) * lv.in;
                for (int i = 0; i < lv.in; ++i) {
                    dwo[i] += da * hr_in[i];
                    dpr[i] += da * wo[i];
                }
            }
        }
        dh = std::move(dprev);
    }

    require_finite(g.encoder, "mlp_backward encoder gradient");
    require_finite(g.head, "mlp_backward head gradient");
    return g;
}

ModelParams sgd_step(const ModelParams& params, const GradientVector& grads, double lr) {
    if (!(lr > 0.0)) throw DomainError("sgd_step: learning rate must be positive");
    if (grads.encoder.size() != params.encoder.size() || grads.head.size() != params.head.size()) {
        throw ShapeError("sgd_step: gradient length does not match parameter length");
    }
    ModelParams out = params;
    for (std::size_t i = 0; i < out.encoder.size(); ++i) out.encoder[i] -= lr * grads.encoder[i];
    for (std::size_t i = 0; i < out.head.size(); ++i) out.head[i] -= lr * grads.head[i];
    require_finite(out.encoder, "sgd_step encoder");
    require_finite(out.head, "sgd_step head");
    return out;
}

std::vector<double> finite_diff_grad(const std::function<double(const std::vector<double>&)>& loss_fn,
                                     const std::vector<double>& params, double step) {
    if (!(step > 0.0)) throw DomainError("finite_diff_grad: step must be positive");
    std::vector<double> grad(params.size(), 0.0);
    std::vector<double> p = params;
    for (std::size_t j = 0; j < p.size(); ++j) {
        const double orig = p[j];
        p[j] = orig + step;
        const double up = loss_fn(p);
        p[j] = orig - step;
        const double down = loss_fn(p);
        p[j] = orig;
        if (!std::isfinite(up) || !std::isfinite(down)) {
            throw NumericError("finite_diff_grad: non-finite loss at coordinate " + std::to_string(j));
        }
        grad[j] = (up - down) / (2.0 * step);
    }
    return grad;
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

namespace {

std::string checkpoint_header(const std::vector<int>& encoder_dims, int k) {
    std::string h = "FEDUAA-CKPT v1; layers=";
    for (std::size_t i = 0; i < encoder_dims.size(); ++i) {
        if (i) h += ',';
        h += std::to_string(encoder_dims[i]);
    }
    h += "; K=" + std::to_string(k);
    return h;
}

void write_checkpoint(const std::string& path, const std::vector<int>& encoder_dims, int k,
                      const std::vector<double>& encoder, const std::vector<double>& head) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open checkpoint for writing: " + path);
    out << checkpoint_header(encoder_dims, k) << '\n';
    for (double v : encoder) out << format_double(v) << '\n';
    for (double v : head) out << format_double(v) << '\n';
    if (!out) throw IoError("write failed: " + path);
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelParams& params) {
    params.validate();
    write_checkpoint(path, params.shape.encoder_dims, params.shape.head_out, params.encoder,
                     params.head);
}

void save_encoder_checkpoint(const std::string& path, const std::vector<int>& encoder_dims,
                             const std::vector<double>& encoder) {
    write_checkpoint(path, encoder_dims, 0, encoder, {});
}

namespace {

struct RawCheckpoint {
    std::vector<int> encoder_dims;
    int k = 0;
    std::vector<double> values;
};

RawCheckpoint parse_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    std::string header;
    if (!std::getline(in, header)) throw ParseError(path + ": empty checkpoint");

    const std::string magic = "FEDUAA-CKPT v1; layers=";
    if (header.rfind(magic, 0) != 0) throw ParseError(path + ":1: bad checkpoint header");
    const std::size_t ksep = header.find("; K=");
    if (ksep == std::string::npos) throw ParseError(path + ":1: missing K field");

    RawCheckpoint raw;
    {
        std::stringstream dims(header.substr(magic.size(), ksep - magic.size()));
        std::string tok;
        while (std::getline(dims, tok, ',')) {
            try {
                raw.encoder_dims.push_back(std::stoi(tok));
            } catch (const std::exception&) {
                throw ParseError(path + ":1: bad layer dimension '" + tok + "'");
            }
        }
    }
    try {
        raw.k = std::stoi(header.substr(ksep + 4));
    } catch (const std::exception&) {
        throw ParseError(path + ":1: bad K field");
    }

    std::string line;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        char* end = nullptr;
        const double v = std::strtod(line.c_str(), &end);
        if (end == line.c_str() || *end != '\0') {
            throw ParseError(path + ":" + std::to_string(lineno) + ": bad parameter value '" + line + "'");
        }
        raw.values.push_back(v);
    }
    return raw;
}

}  // namespace

ModelParams load_checkpoint(const std::string& path) {
    RawCheckpoint raw = parse_checkpoint(path);
    if (raw.k < 1) throw ParseError(path + ": K=0 file holds no head; use load_encoder_checkpoint");

    ModelParams p;
    p.shape.encoder_dims = raw.encoder_dims;
    p.shape.head_out = raw.k;
    p.shape.validate();

    const std::size_t n_enc = p.shape.encoder_param_count();
    const std::size_t n_head = p.shape.head_param_count();
    if (raw.values.size() != n_enc + n_head) {
        throw ParseError(path + ": expected " + std::to_string(n_enc + n_head) + " parameters, found " +
                         std::to_string(raw.values.size()));
    }
    p.encoder.assign(raw.values.begin(), raw.values.begin() + static_cast<std::ptrdiff_t>(n_enc));
    p.head.assign(raw.values.begin() + static_cast<std::ptrdiff_t>(n_enc), raw.values.end());
    return p;
}

EncoderCheckpoint load_encoder_checkpoint(const std::string& path) {
    RawCheckpoint raw = parse_checkpoint(path);
    if (raw.k != 0) throw ParseError(path + ": expected an encoder-only (K=0) checkpoint");

    ModelShape probe;
    probe.encoder_dims = raw.encoder_dims;
    probe.head_out = 1;
    probe.validate();

    if (raw.values.size() != probe.encoder_param_count()) {
        throw ParseError(path + ": expected " + std::to_string(probe.encoder_param_count()) +
                         " encoder parameters, found " + std::to_string(raw.values.size()));
    }
    return EncoderCheckpoint{raw.encoder_dims, std::move(raw.values)};
}

}  // namespace feduaa
