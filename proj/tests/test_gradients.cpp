#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "ragseco/ops.hpp"
#include "ragseco/rng.hpp"
#include "ragseco/sparse.hpp"
#include "ragseco/tensor.hpp"

#include "support/gradcheck.hpp"

using namespace ragseco;
using ad::Tape;
using ad::Tensor;
namespace ops = ad::ops;

namespace {

constexpr double kTol = 1e-4;

void fill_uniform(Tensor& t, rng::Engine& rng, double lo, double hi) {
    for (double& v : t.values()) v = rng.uniform(lo, hi);
}

// keeps relu/gelu inputs away from the kink at zero so central differences
// stay valid
void fill_away_from_zero(Tensor& t, rng::Engine& rng, double mag = 2.0) {
    for (double& v : t.values()) {
        double x;
        do {
            x = rng.uniform(-mag, mag);
        } while (std::fabs(x) < 0.05);
        v = x;
    }
}

using OpFn = std::function<Tensor(Tape&, std::span<const Tensor>)>;

double op_grad_err(const OpFn& op, std::vector<Tensor> inputs, std::uint64_t seed) {
    rng::Engine rng(seed ^ 0xabcdef);
    Tensor proj;
    {
        Tape warmup;
        Tensor out = op(warmup, inputs);
        proj = Tensor::zeros(out.shape());
        fill_uniform(proj, rng, -1.0, 1.0);
    }
    auto forward = [&]() {
        Tape tape;
        Tensor out = op(tape, inputs);
        return ops::sum(tape, ops::mul(tape, out, proj)).values()[0];
    };
    auto backward = [&]() {
        for (Tensor& t : inputs) t.zero_grad();
        Tape tape;
        Tensor out = op(tape, inputs);
        Tensor loss = ops::sum(tape, ops::mul(tape, out, proj));
        tape.backward(loss);
    };
    return testsupport::grad_check(inputs, forward, backward).max_err;
}

} // namespace

TEST_CASE("gradients match central differences over 20 seeds per op") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        rng::Engine rng(seed);
        DYNAMIC_SECTION("seed " << seed) {
            {
                Tensor a = Tensor::zeros({3, 4}, true), b = Tensor::zeros({4, 5}, true);
                fill_uniform(a, rng, -1, 1);
                fill_uniform(b, rng, -1, 1);
                const double err = op_grad_err(
                    [](Tape& t, std::span<const Tensor> in) {
                        return ops::matmul(t, in[0], in[1]);
                    },
                    {a, b}, seed);
                INFO("matmul");
                REQUIRE(err <= kTol);
            }
            {
                auto s = ad::SparseMatrix::from_triplets(
                    4, 3,
                    {{0, 1, 0.7}, {1, 0, -1.2}, {2, 2, 0.4}, {3, 1, 2.0}, {0, 0, -0.3}});
                Tensor d = Tensor::zeros({3, 4}, true);
                fill_uniform(d, rng, -1, 1);
                const double err = op_grad_err(
                    [s](Tape& t, std::span<const Tensor> in) { return ops::spmm(t, s, in[0]); },
                    {d}, seed);
                INFO("spmm");
                REQUIRE(err <= kTol);
            }
            {
                Tensor a = Tensor::zeros({2, 6}, true), b = Tensor::zeros({2, 6}, true);
                fill_uniform(a, rng, -1, 1);
                fill_uniform(b, rng, -1, 1);
                const double err = op_grad_err(
                    [](Tape& t, std::span<const Tensor> in) {
                        return ops::mul(t, ops::add(t, in[0], in[1]),
                                        ops::scale(t, in[1], 0.5));
                    },
                    {a, b}, seed);
                INFO("add/mul/scale");
                REQUIRE(err <= kTol);
            }
            {
                Tensor a = Tensor::zeros({3, 4}, true), bias = Tensor::zeros({4}, true);
                fill_uniform(a, rng, -1, 1);
                fill_uniform(bias, rng, -1, 1);
                const double err = op_grad_err(
                    [](Tape& t, std::span<const Tensor> in) {
                        return ops::add_rowvec(t, in[0], in[1]);
                    },
                    {a, bias}, seed);
                INFO("add_rowvec");
                REQUIRE(err <= kTol);
            }
            {
                Tensor x = Tensor::zeros({4, 5}, true);
                fill_away_from_zero(x, rng);
                const double err = op_grad_err(
                    [](Tape& t, std::span<const Tensor> in) { return ops::relu(t, in[0]); }, {x},
                    seed);
                INFO("relu");
                REQUIRE(err <= kTol);
            }
            {
                Tensor x = Tensor::zeros({4, 5}, true);
                fill_away_from_zero(x, rng, 3.0);
                const double err = op_grad_err(
                    [](Tape& t, std::span<const Tensor> in) { return ops::gelu(t, in[0]); }, {x},
                    seed);
                INFO("gelu");
                REQUIRE(err <= kTol);
            }
            {
                Tensor x = Tensor::zeros({4, 5}, true);
                fill_uniform(x, rng, -3, 3);
                const double err = op_grad_err(
                    [](Tape& t, std::span<const Tensor> in) { return ops::sigmoid(t, in[0]); },
                    {x}, seed);
                INFO("sigmoid");
                REQUIRE(err <= kTol);
            }
            {
                Tensor x = Tensor::zeros({3, 6}, true);
                fill_uniform(x, rng, -2, 2);
                const double err = op_grad_err(
                    [](Tape& t, std::span<const Tensor> in) {
                        return ops::softmax_rows(t, in[0]);
                    },
                    {x}, seed);
                INFO("softmax_rows");
                REQUIRE(err <= kTol);
            }
            {
                Tensor x = Tensor::zeros({3, 4}, true);
                fill_uniform(x, rng, 0.05, 0.95);
                const double err = op_grad_err(
                    [](Tape& t, std::span<const Tensor> in) {
                        return ops::log_clamped(t, in[0]);
                    },
                    {x}, seed);
                INFO("log_clamped");
                REQUIRE(err <= kTol);
            }
            {
                Tensor x = Tensor::zeros({5, 3}, true);
                fill_uniform(x, rng, -1, 1);
                const double err = op_grad_err(
                    [](Tape& t, std::span<const Tensor> in) { return ops::row_sum(t, in[0]); },
                    {x}, seed);
                INFO("row_sum");
                REQUIRE(err <= kTol);
            }
            {
                Tensor a = Tensor::zeros({3, 2}, true), b = Tensor::zeros({3, 4}, true);
                fill_uniform(a, rng, -1, 1);
                fill_uniform(b, rng, -1, 1);
                const double err = op_grad_err(
                    [](Tape& t, std::span<const Tensor> in) {
                        std::vector<Tensor> parts{in[0], in[1]};
                        return ops::concat_cols(t, parts);
                    },
                    {a, b}, seed);
                INFO("concat_cols");
                REQUIRE(err <= kTol);
            }
            {
                Tensor a = Tensor::zeros({2, 4}, true), b = Tensor::zeros({3, 4}, true);
                fill_uniform(a, rng, -1, 1);
                fill_uniform(b, rng, -1, 1);
                const double err = op_grad_err(
                    [](Tape& t, std::span<const Tensor> in) {
                        std::vector<Tensor> parts{in[0], in[1]};
                        return ops::concat_rows(t, parts);
                    },
                    {a, b}, seed);
                INFO("concat_rows");
                REQUIRE(err <= kTol);
            }
            {
                Tensor x = Tensor::zeros({5, 3}, true);
                fill_uniform(x, rng, -1, 1);
                const std::vector<std::size_t> idx{4, 0, 2, 2, 1};
                const double err = op_grad_err(
                    [idx](Tape& t, std::span<const Tensor> in) {
                        return ops::gather_rows(t, in[0], idx);
                    },
                    {x}, seed);
                INFO("gather_rows");
                REQUIRE(err <= kTol);
            }
            {
                Tensor x = Tensor::zeros({4, 6}, true);
                fill_uniform(x, rng, -1, 1);
                const std::uint64_t mask_seed = seed * 31 + 5;
                const double err = op_grad_err(
                    [mask_seed](Tape& t, std::span<const Tensor> in) {
                        rng::Engine mask_rng(mask_seed); // identical mask on every rebuild
                        return ops::dropout(t, in[0], 0.4, Mode::train, mask_rng);
                    },
                    {x}, seed);
                INFO("dropout");
                REQUIRE(err <= kTol);
            }
            {
                Tensor x = Tensor::zeros({2, 9}, true);
                Tensor w = Tensor::zeros({3, 2 * 3}, true);
                Tensor b = Tensor::zeros({3}, true);
                fill_uniform(x, rng, -1, 1);
                fill_uniform(w, rng, -1, 1);
                fill_uniform(b, rng, 0.1, 0.5);
                const double err = op_grad_err(
                    [](Tape& t, std::span<const Tensor> in) {
                        return ops::conv1d(t, in[0], in[1], in[2], 3);
                    },
                    {x, w, b}, seed);
                INFO("conv1d");
                REQUIRE(err <= kTol);
            }
            {
                // distinct values keep the argmax stable under the FD probe
                Tensor x = Tensor::zeros({3, 5}, true);
                for (std::size_t i = 0; i < x.numel(); ++i)
                    x.values()[i] = 0.37 * static_cast<double>((i * 7 + seed) % 15) +
                                    0.001 * static_cast<double>(i);
                const double err = op_grad_err(
                    [](Tape& t, std::span<const Tensor> in) {
                        return ops::global_max_pool(t, in[0]);
                    },
                    {x}, seed);
                INFO("global_max_pool");
                REQUIRE(err <= kTol);
            }
            {
                ops::BatchNorm bn(4);
                fill_uniform(bn.gamma, rng, 0.5, 1.5);
                fill_uniform(bn.beta, rng, -0.5, 0.5);
                Tensor x = Tensor::zeros({6, 4}, true);
                fill_uniform(x, rng, -2, 2);
                auto op = [&bn](Tape& t, std::span<const Tensor> in) {
                    return bn.forward(t, in[0], Mode::train);
                };
                const double err = op_grad_err(op, {x, bn.gamma, bn.beta}, seed);
                INFO("batchnorm train");
                REQUIRE(err <= kTol);
            }
        }
    }
}

TEST_CASE("composite graph matches central differences: matmul-gelu-softmax-CE") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        DYNAMIC_SECTION("seed " << seed) {
            rng::Engine rng(seed * 977);
            Tensor x = Tensor::zeros({4, 6}, true);
            Tensor w1 = Tensor::zeros({6, 5}, true);
            Tensor w2 = Tensor::zeros({5, 3}, true);
            fill_uniform(x, rng, -1, 1);
            fill_uniform(w1, rng, -0.8, 0.8);
            fill_uniform(w2, rng, -0.8, 0.8);
            Tensor onehot = Tensor::zeros({4, 3});
            for (std::size_t i = 0; i < 4; ++i) onehot.at(i, (seed + i) % 3) = 1.0;

            auto build = [&](Tape& tape) {
                Tensor h = ops::gelu(tape, ops::matmul(tape, x, w1));
                Tensor probs = ops::softmax_rows(tape, ops::matmul(tape, h, w2));
                Tensor ll = ops::mul(tape, onehot, ops::log_clamped(tape, probs));
                return ops::scale(tape, ops::sum(tape, ll), -1.0);
            };
            auto forward = [&]() {
                Tape tape;
                return build(tape).values()[0];
            };
            auto backward = [&]() {
                for (Tensor t : {x, w1, w2}) t.zero_grad();
                Tape tape;
                tape.backward(build(tape));
            };
            const auto res = testsupport::grad_check({x, w1, w2}, forward, backward);
            REQUIRE(res.max_err <= kTol);
        }
    }
}
