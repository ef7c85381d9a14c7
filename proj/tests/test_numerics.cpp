#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <doctest.h>

#include "feduaa/errors.hpp"
#include "feduaa/evidential.hpp"
#include "feduaa/model.hpp"
#include "feduaa/rng.hpp"

using namespace feduaa;

namespace {

// Straight re-evaluation of the affine/tanh stack, kept deliberately naive and
// independent of the library's forward pass.
std::vector<double> naive_forward(const ModelParams& p, const std::vector<double>& x) {
    std::vector<double> h = x;
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < p.shape.encoder_dims.size(); ++l) {
        const int in = p.shape.encoder_dims[l];
        const int out = p.shape.encoder_dims[l + 1];
        std::vector<double> next(static_cast<std::size_t>(out));
        for (int o = 0; o < out; ++o) {
            double acc = p.encoder[off + static_cast<std::size_t>(in) * out + o]; // bias
            for (int i = 0; i < in; ++i) {
                acc += p.encoder[off + static_cast<std::size_t>(o) * in + i] * h[static_cast<std::size_t>(i)];
            }
            next[static_cast<std::size_t>(o)] = std::tanh(acc);
        }
        off += static_cast<std::size_t>(in) * out + out;
        h = std::move(next);
    }
    const int in = p.shape.encoder_out();
    const int out = p.shape.head_out;
    std::vector<double> logits(static_cast<std::size_t>(out));
    for (int o = 0; o < out; ++o) {
        double acc = p.head[static_cast<std::size_t>(in) * out + o];
        for (int i = 0; i < in; ++i) {
            acc += p.head[static_cast<std::size_t>(o) * in + i] * h[static_cast<std::size_t>(i)];
        }
        logits[static_cast<std::size_t>(o)] = acc;
    }
    return logits;
}

bool grad_close(double analytic, double fd) {
    return std::fabs(analytic - fd) <= std::max(1e-4 * std::max(std::fabs(analytic), std::fabs(fd)), 1e-7);
}

std::vector<double> flatten(const ModelParams& p) {
    std::vector<double> flat = p.encoder;
    flat.insert(flat.end(), p.head.begin(), p.head.end());
    return flat;
}

ModelParams unflatten(const ModelParams& like, const std::vector<double>& flat) {
    ModelParams p = like;
    p.encoder.assign(flat.begin(), flat.begin() + static_cast<std::ptrdiff_t>(like.encoder.size()));
    p.head.assign(flat.begin() + static_cast<std::ptrdiff_t>(like.encoder.size()), flat.end());
    return p;
}

}  // namespace

TEST_CASE("mlp_forward: zero parameters give zero logits") {
    ModelParams p;
    p.shape = {{4, 3}, 2};
    p.encoder.assign(p.shape.encoder_param_count(), 0.0);
    p.head.assign(p.shape.head_param_count(), 0.0);
    Rng rng(1);
    Tensor2 batch(5, 4);
    for (auto& v : batch.data) v = rng.uniform(-3.0, 3.0);

    const Tensor2 logits = mlp_forward(p, batch);
    for (double v : logits.data) CHECK(v == 0.0);
}

TEST_CASE("mlp_forward: unit 1-1-1 network maps zero input to zero logit") {
    ModelParams p;
    p.shape = {{1, 1}, 1};
    p.encoder = {1.0, 0.0}; // weight, bias
    p.head = {1.0, 0.0};
    const Tensor2 logits = mlp_forward(p, Tensor2(1, 1, {0.0}));
    CHECK(logits.at(0, 0) == 0.0);
}

TEST_CASE("mlp_forward matches an independent naive re-evaluation") {
    ModelShape shape{{6, 5, 4}, 3};
    Rng param_rng(0);
    const ModelParams p = init_params(shape, param_rng);
    Rng batch_rng(1);
    Tensor2 batch(7, 6);
    for (auto& v : batch.data) v = batch_rng.uniform(-2.0, 2.0);

    const Tensor2 logits = mlp_forward(p, batch);
    for (int r = 0; r < batch.rows; ++r) {
        const auto expected = naive_forward(p, batch.row_vec(r));
        for (int c = 0; c < logits.cols; ++c) {
            CHECK(logits.at(r, c) == doctest::Approx(expected[static_cast<std::size_t>(c)]).epsilon(1e-12));
        }
    }
}

TEST_CASE("mlp_forward: dimension mismatch names the offending layer") {
    ModelShape shape{{4, 3}, 2};
    Rng rng(0);
    const ModelParams p = init_params(shape, rng);
    CHECK_THROWS_WITH_AS(mlp_forward(p, Tensor2(2, 5)), doctest::Contains("encoder layer 0"),
                         ShapeError);
}

TEST_CASE("mlp_backward: zero cotangent gives zero gradients") {
    ModelShape shape{{3, 4}, 2};
    Rng rng(3);
    const ModelParams p = init_params(shape, rng);
    Tensor2 batch(4, 3);
    for (auto& v : batch.data) v = rng.uniform(-1.0, 1.0);

    const GradientVector g = mlp_backward(p, batch, Tensor2(4, 2));
    for (double v : g.encoder) CHECK(v == 0.0);
    for (double v : g.head) CHECK(v == 0.0);
}

TEST_CASE("mlp_backward: head-only model with ones cotangent gives columnwise batch sums") {
    ModelShape shape{{3}, 2}; // no encoder layers, head is the single linear layer
    Rng rng(5);
    const ModelParams p = init_params(shape, rng);
    Tensor2 batch(4, 3);
    for (auto& v : batch.data) v = rng.uniform(-1.0, 1.0);
    Tensor2 ones(4, 2);
    for (auto& v : ones.data) v = 1.0;

    const GradientVector g = mlp_backward(p, batch, ones);
    CHECK(g.encoder.empty());
    for (int o = 0; o < 2; ++o) {
        for (int i = 0; i < 3; ++i) {
            double col_sum = 0.0;
            for (int r = 0; r < 4; ++r) col_sum += batch.at(r, i);
            CHECK(g.head[static_cast<std::size_t>(o) * 3 + i] == doctest::Approx(col_sum).epsilon(1e-12));
        }
    }
    // bias gradient: one per output, summed over the batch
    CHECK(g.head[6] == doctest::Approx(4.0));
    CHECK(g.head[7] == doctest::Approx(4.0));
}

TEST_CASE("mlp_backward agrees with central finite differences") {
    Rng rng(11);
    for (int trial = 0; trial < 5; ++trial) {
        const int d = 2 + static_cast<int>(rng.below(3));
        const int h = 2 + static_cast<int>(rng.below(3));
        const int k = 2 + static_cast<int>(rng.below(3));
        ModelShape shape{{d, h}, k};
        Rng prng(derive_seed(100, "p" + std::to_string(trial)));
        const ModelParams p = init_params(shape, prng);
        Tensor2 batch(3, d);
        for (auto& v : batch.data) v = rng.uniform(-2.0, 2.0);
        Tensor2 cot(3, k);
        for (auto& v : cot.data) v = rng.uniform(-1.0, 1.0);

        const GradientVector g = mlp_backward(p, batch, cot);

        auto loss = [&](const std::vector<double>& flat) {
            const Tensor2 logits = mlp_forward(unflatten(p, flat), batch);
            double acc = 0.0;
            for (std::size_t i = 0; i < logits.data.size(); ++i) acc += logits.data[i] * cot.data[i];
            return acc;
        };
        const auto fd = finite_diff_grad(loss, flatten(p), 1e-5);
        for (std::size_t i = 0; i < g.encoder.size(); ++i) CHECK(grad_close(g.encoder[i], fd[i]));
        for (std::size_t i = 0; i < g.head.size(); ++i) {
            CHECK(grad_close(g.head[i], fd[g.encoder.size() + i]));
        }
    }
}

TEST_CASE("gradient exactness of the composed loss over 50 random draws") {
    int checked = 0;
    for (int trial = 0; trial < 50; ++trial) {
        Rng rng(derive_seed(42, "draw" + std::to_string(trial)));
        const int d = 2 + static_cast<int>(rng.below(3));
        const int k = 2 + static_cast<int>(rng.below(4));
        ModelShape shape{{d, 3}, k};
        ModelParams p = init_params(shape, rng);
        const int n = 1 + static_cast<int>(rng.below(3));
        Tensor2 x(n, d);
        for (auto& v : x.data) v = rng.uniform(-2.0, 2.0);
        std::vector<int> y(static_cast<std::size_t>(n));
        for (auto& label : y) label = static_cast<int>(rng.below(static_cast<std::uint64_t>(k)));
        const LossConfig cfg{0.05, 50};
        const int round = static_cast<int>(rng.below(100));

        const Tensor2 logits = mlp_forward(p, x);
        const auto [bd, dlogits] = total_loss_and_grad(logits, y, cfg, round);
        (void)bd;
        const GradientVector g = mlp_backward(p, x, dlogits);

        const auto fd = finite_diff_grad(
            [&](const std::vector<double>& flat) {
                return total_loss_and_grad(mlp_forward(unflatten(p, flat), x), y, cfg, round).first.total;
            },
            flatten(p), 1e-5);
        for (std::size_t i = 0; i < g.encoder.size(); ++i, ++checked) {
            CHECK(grad_close(g.encoder[i], fd[i]));
        }
        for (std::size_t i = 0; i < g.head.size(); ++i, ++checked) {
            CHECK(grad_close(g.head[i], fd[g.encoder.size() + i]));
        }
    }
    CHECK(checked > 0);
}

TEST_CASE("finite_diff_grad on a quadratic and a constant") {
    const auto g = finite_diff_grad(
        [](const std::vector<double>& p) {
            double acc = 0.0;
            for (double v : p) acc += v * v;
            return acc;
        },
        {3.0}, 1e-5);
    CHECK(g[0] == doctest::Approx(6.0).epsilon(1e-6));

    const auto zero = finite_diff_grad([](const std::vector<double>&) { return 1.25; }, {1.0, -2.0}, 1e-5);
    CHECK(zero[0] == 0.0);
    CHECK(zero[1] == 0.0);

    CHECK_THROWS_AS(finite_diff_grad([](const std::vector<double>&) { return 0.0; }, {1.0}, 0.0),
                    DomainError);
    CHECK_THROWS_AS(finite_diff_grad(
                        [](const std::vector<double>& p) { return std::log(p[0]); }, {-1.0}, 1e-5),
                    NumericError);
}

TEST_CASE("finite_diff_grad cross-checks the uce chain on one sample") {
    ModelShape shape{{3, 4}, 3};
    Rng rng(77);
    ModelParams p = init_params(shape, rng);
    Tensor2 x(1, 3, {0.3, -0.4, 1.1});
    const std::vector<int> y = {1};
    const LossConfig cfg{0.05, 50};

    const Tensor2 logits = mlp_forward(p, x);
    const auto [bd, dlogits] = uce_loss_and_grad(logits, y, cfg, 25);
    (void)bd;
    const GradientVector g = mlp_backward(p, x, dlogits);

    const auto fd = finite_diff_grad(
        [&](const std::vector<double>& flat) {
            return uce_loss_and_grad(mlp_forward(unflatten(p, flat), x), y, cfg, 25).first.total;
        },
        flatten(p), 1e-5);
    for (std::size_t i = 0; i < g.encoder.size(); ++i) CHECK(grad_close(g.encoder[i], fd[i]));
    for (std::size_t i = 0; i < g.head.size(); ++i) CHECK(grad_close(g.head[i], fd[g.encoder.size() + i]));
}

TEST_CASE("sgd_step arithmetic and error paths") {
    ModelParams p;
    p.shape = {{1}, 2};
    p.head = {1.0, 2.0, 0.0, 0.0};
    p.encoder = {};

    GradientVector zero{{}, {0.0, 0.0, 0.0, 0.0}};
    const ModelParams same = sgd_step(p, zero, 0.01);
    CHECK(same.head == p.head);

    GradientVector g{{}, {1.0, 1.0, 0.0, 0.0}};
    const ModelParams moved = sgd_step(p, g, 0.01);
    CHECK(moved.head[0] == doctest::Approx(0.99));
    CHECK(moved.head[1] == doctest::Approx(1.99));

    GradientVector bad{{}, {1.0}};
    CHECK_THROWS_AS(sgd_step(p, bad, 0.01), ShapeError);
    CHECK_THROWS_AS(sgd_step(p, zero, 0.0), DomainError);
}

TEST_CASE("sgd on a convex quadratic descends monotonically") {
    // loss(w) = 0.5 * sum w_i^2, curvature 1, stable for lr < 2
    ModelParams p;
    p.shape = {{1}, 3};
    p.head = {2.0, -1.5, 0.7, 0.3, -0.2, 0.9};
    p.encoder = {};

    auto loss_of = [](const ModelParams& q) {
        double acc = 0.0;
        for (double v : q.head) acc += 0.5 * v * v;
        return acc;
    };
    double prev = loss_of(p);
    for (int step = 0; step < 25; ++step) {
        GradientVector g{{}, p.head}; // gradient of 0.5 w^2 is w
        p = sgd_step(p, g, 0.5);
        const double cur = loss_of(p);
        CHECK(cur < prev);
        prev = cur;
    }
}

TEST_CASE("determinism: same seed, same forward outputs and trajectories") {
    ModelShape shape{{4, 3}, 2};
    Rng a(99);
    Rng b(99);
    const ModelParams pa = init_params(shape, a);
    const ModelParams pb = init_params(shape, b);
    CHECK(pa.encoder == pb.encoder);
    CHECK(pa.head == pb.head);

    Tensor2 batch(3, 4);
    Rng c(7);
    for (auto& v : batch.data) v = c.uniform(-1.0, 1.0);
    CHECK(mlp_forward(pa, batch).data == mlp_forward(pb, batch).data);
}

TEST_CASE("checkpoint round-trip is bit-exact") {
    ModelShape shape{{5, 4}, 3};
    Rng rng(123);
    const ModelParams p = init_params(shape, rng);

    const auto path = std::filesystem::temp_directory_path() / "feduaa_ckpt_test.txt";
    save_checkpoint(path.string(), p);
    const ModelParams q = load_checkpoint(path.string());
    CHECK(q.shape == p.shape);
    CHECK(q.encoder == p.encoder);
    CHECK(q.head == p.head);

    // encoder-only file
    const auto gpath = std::filesystem::temp_directory_path() / "feduaa_ckpt_enc.txt";
    save_encoder_checkpoint(gpath.string(), shape.encoder_dims, p.encoder);
    const EncoderCheckpoint enc = load_encoder_checkpoint(gpath.string());
    CHECK(enc.encoder_dims == shape.encoder_dims);
    CHECK(enc.encoder == p.encoder);
    CHECK_THROWS_AS(load_checkpoint(gpath.string()), ParseError);

    std::filesystem::remove(path);
    std::filesystem::remove(gpath);
}

TEST_CASE("checkpoint parse errors carry position information") {
    const auto path = std::filesystem::temp_directory_path() / "feduaa_ckpt_bad.txt";
    {
        std::ofstream f(path);
        f << "FEDUAA-CKPT v1; layers=2; K=1\n0.5\nnot-a-number\n1.0\n";
    }
    CHECK_THROWS_WITH_AS(load_checkpoint(path.string()), doctest::Contains(":3:"), ParseError);
    {
        std::ofstream f(path);
        f << "bogus header\n";
    }
    CHECK_THROWS_AS(load_checkpoint(path.string()), ParseError);
    CHECK_THROWS_AS(load_checkpoint("/nonexistent/feduaa.ckpt"), IoError);
    std::filesystem::remove(path);
}
