#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "spladelab/rng.hpp"
#include "spladelab/tape.hpp"

using splade::Rng;
using splade::ad::Mat;
using splade::ad::Tape;
using splade::ad::Var;

namespace {

Mat random_mat(Rng& rng, int rows, int cols, double scale = 1.0) {
    Mat m(rows, cols);
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) m(r, c) = scale * rng.normal();
    }
    return m;
}

// Central finite differences of a scalar graph against the tape gradient,
// probing every entry of every input.
void check_gradients(const std::vector<Mat>& inputs,
                     const std::function<Var(Tape&, const std::vector<Var>&)>& build,
                     double h = 1e-6, double tol = 1e-6) {
    Tape tape;
    std::vector<Var> vars;
    for (const auto& m : inputs) vars.push_back(tape.leaf(m, true));
    Var loss = build(tape, vars);
    REQUIRE(tape.value(loss).size() == 1);
    tape.backward(loss);

    auto eval_at = [&](std::size_t which, int r, int c, double delta) {
        std::vector<Mat> shifted = inputs;
        shifted[which](r, c) += delta;
        Tape t2;
        std::vector<Var> vars2;
        for (const auto& m : shifted) vars2.push_back(t2.leaf(m, false));
        return t2.value(build(t2, vars2))(0, 0);
    };

    for (std::size_t i = 0; i < inputs.size(); ++i) {
        Mat grad = tape.gradient(vars[i]);
        for (int r = 0; r < inputs[i].rows(); ++r) {
            for (int c = 0; c < inputs[i].cols(); ++c) {
                double fd = (eval_at(i, r, c, h) - eval_at(i, r, c, -h)) / (2.0 * h);
                double got = grad(r, c);
                double denom = std::max({1.0, std::abs(fd), std::abs(got)});
                INFO("input ", i, " entry (", r, ",", c, ") fd=", fd, " analytic=", got);
                CHECK(std::abs(fd - got) / denom < tol);
            }
        }
    }
}

}  // namespace

TEST_CASE("matmul forward and gradient") {
    Rng rng(1);
    Mat a = random_mat(rng, 3, 4);
    Mat b = random_mat(rng, 4, 5);
    Tape tape;
    Var va = tape.leaf(a, false);
    Var vb = tape.leaf(b, false);
    CHECK(tape.value(tape.matmul(va, vb)).isApprox(a * b));
    check_gradients({a, b}, [](Tape& t, const std::vector<Var>& v) {
        return t.sum(t.matmul(v[0], v[1]));
    });
}

TEST_CASE("matmul_nt matches explicit transpose") {
    Rng rng(2);
    Mat a = random_mat(rng, 3, 4);
    Mat b = random_mat(rng, 5, 4);
    Tape tape;
    CHECK(tape.value(tape.matmul_nt(tape.leaf(a, false), tape.leaf(b, false)))
              .isApprox(a * b.transpose()));
    check_gradients({a, b}, [](Tape& t, const std::vector<Var>& v) {
        return t.sum(t.matmul_nt(v[0], v[1]));
    });
}

TEST_CASE("add, add_rowvec, scale gradients") {
    Rng rng(3);
    Mat a = random_mat(rng, 4, 3);
    Mat b = random_mat(rng, 4, 3);
    Mat row = random_mat(rng, 1, 3);
    check_gradients({a, b, row}, [](Tape& t, const std::vector<Var>& v) {
        return t.sum(t.scale(t.add_rowvec(t.add(v[0], v[1]), v[2]), 0.37));
    });
}

TEST_CASE("scale_columns masks gradients") {
    Rng rng(4);
    Mat a = random_mat(rng, 3, 5);
    Eigen::RowVectorXd w(5);
    w << 1.0, 0.0, 1.0, 0.0, 2.0;
    Tape tape;
    Var va = tape.leaf(a, true);
    Var out = tape.scale_columns(va, w);
    CHECK(tape.value(out)(0, 1) == 0.0);
    CHECK(tape.value(out)(0, 4) == doctest::Approx(2.0 * a(0, 4)));
    tape.backward(tape.sum(out));
    Mat grad = tape.gradient(va);
    CHECK(grad(0, 1) == 0.0);
    CHECK(grad(2, 3) == 0.0);
    CHECK(grad(1, 0) == 1.0);
    CHECK(grad(1, 4) == 2.0);
}

TEST_CASE("gather_rows accumulates duplicate rows") {
    Rng rng(5);
    Mat table = random_mat(rng, 4, 3);
    std::vector<int> rows = {2, 0, 2, 3};
    Tape tape;
    Var vt = tape.leaf(table, true);
    Var out = tape.gather_rows(vt, rows);
    CHECK(tape.value(out).row(0) == table.row(2));
    tape.backward(tape.sum(out));
    Mat grad = tape.gradient(vt);
    CHECK(grad(2, 0) == 2.0);  // gathered twice
    CHECK(grad(1, 0) == 0.0);  // never gathered
}

TEST_CASE("slices and concats round-trip gradients") {
    Rng rng(6);
    Mat a = random_mat(rng, 4, 6);
    check_gradients({a}, [](Tape& t, const std::vector<Var>& v) {
        Var left = t.slice_cols(v[0], 0, 3);
        Var right = t.slice_cols(v[0], 3, 3);
        Var glued = t.hconcat({left, right});
        Var topp = t.slice_rows(glued, 0, 2);
        Var bottom = t.slice_rows(glued, 2, 2);
        return t.sum(t.scale(t.vconcat({bottom, topp}), 1.5));
    });
}

TEST_CASE("layer_norm value and gradient") {
    Rng rng(7);
    Mat a = random_mat(rng, 3, 6, 2.0);
    Mat gain = random_mat(rng, 1, 6);
    Mat bias = random_mat(rng, 1, 6);
    Tape tape;
    Var out = tape.layer_norm(tape.leaf(a, false), tape.leaf(gain, false), tape.leaf(bias, false));
    // Each row of (out - bias) / gain has zero mean and unit variance.
    Mat normed = tape.value(out);
    for (int r = 0; r < 3; ++r) {
        Eigen::RowVectorXd xhat =
            (normed.row(r) - bias.row(0)).cwiseQuotient(gain.row(0));
        CHECK(xhat.mean() == doctest::Approx(0.0).epsilon(1e-9));
        CHECK((xhat.array() - xhat.mean()).square().mean() == doctest::Approx(1.0).epsilon(1e-5));
    }
    check_gradients({a, gain, bias}, [](Tape& t, const std::vector<Var>& v) {
        Var ln = t.layer_norm(v[0], v[1], v[2]);
        return t.sum(t.gelu(ln));  // compose so the gradient is not uniform
    });
}

TEST_CASE("softmax_rows sums to one and gradient checks") {
    Rng rng(8);
    Mat a = random_mat(rng, 3, 5, 1.5);
    Tape tape;
    Mat y = tape.value(tape.softmax_rows(tape.leaf(a, false)));
    for (int r = 0; r < 3; ++r) CHECK(y.row(r).sum() == doctest::Approx(1.0));
    check_gradients({a}, [](Tape& t, const std::vector<Var>& v) {
        Var soft = t.softmax_rows(v[0]);
        return t.sum(t.matmul_nt(soft, soft));
    });
}

TEST_CASE("relu, gelu, log1p gradients away from kinks") {
    Rng rng(9);
    Mat a = random_mat(rng, 4, 4, 2.0);
    // Nudge values off zero so the finite difference cannot straddle a kink.
    for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 4; ++c) {
            if (std::abs(a(r, c)) < 1e-3) a(r, c) = 0.5;
        }
    }
    check_gradients({a}, [](Tape& t, const std::vector<Var>& v) {
        return t.sum(t.log1p(t.relu(v[0])));
    });
    check_gradients({a}, [](Tape& t, const std::vector<Var>& v) {
        return t.sum(t.gelu(v[0]));
    });
}

TEST_CASE("colwise_max picks the lowest argmax row on ties") {
    Mat a(3, 2);
    a << 1.0, 5.0, 3.0, 5.0, 3.0, 2.0;
    Tape tape;
    Var va = tape.leaf(a, true);
    std::vector<int> argmax;
    Var out = tape.colwise_max(va, &argmax);
    CHECK(tape.value(out)(0, 0) == 3.0);
    CHECK(argmax[0] == 1);  // rows 1 and 2 tie at 3.0
    CHECK(argmax[1] == 0);
    tape.backward(tape.sum(out));
    Mat grad = tape.gradient(va);
    CHECK(grad(1, 0) == 1.0);
    CHECK(grad(2, 0) == 0.0);
    CHECK(grad(0, 1) == 1.0);
}

TEST_CASE("colwise_max gradient by finite differences") {
    Rng rng(10);
    Mat a = random_mat(rng, 5, 4, 2.0);
    check_gradients({a}, [](Tape& t, const std::vector<Var>& v) {
        return t.sum(t.colwise_max(v[0]));
    });
}

TEST_CASE("cross_entropy_mean matches logsumexp arithmetic and gradient") {
    Rng rng(11);
    Mat s = random_mat(rng, 3, 6, 2.0);
    std::vector<int> pos = {0, 3, 5};
    Tape tape;
    Var loss = tape.cross_entropy_mean(tape.leaf(s, false), pos);
    double expected = 0.0;
    for (int r = 0; r < 3; ++r) {
        double m = s.row(r).maxCoeff();
        double lse = m + std::log((s.row(r).array() - m).exp().sum());
        expected += lse - s(r, pos[static_cast<std::size_t>(r)]);
    }
    expected /= 3.0;
    CHECK(tape.value(loss)(0, 0) == doctest::Approx(expected).epsilon(1e-12));
    check_gradients({s}, [&](Tape& t, const std::vector<Var>& v) {
        return t.cross_entropy_mean(v[0], pos);
    });
}

TEST_CASE("sum_squared_colmeans value and gradient") {
    Rng rng(12);
    Mat a = random_mat(rng, 4, 3);
    Tape tape;
    Var loss = tape.sum_squared_colmeans(tape.leaf(a, false));
    Eigen::RowVectorXd m = a.colwise().mean();
    CHECK(tape.value(loss)(0, 0) == doctest::Approx(m.squaredNorm()).epsilon(1e-12));
    check_gradients({a}, [](Tape& t, const std::vector<Var>& v) {
        return t.sum_squared_colmeans(v[0]);
    });
}

TEST_CASE("backward accumulates through shared subexpressions") {
    Mat a(1, 1);
    a << 3.0;
    Tape tape;
    Var va = tape.leaf(a, true);
    Var y = tape.add(va, va);  // y = 2a
    tape.backward(tape.sum(y));
    CHECK(tape.gradient(va)(0, 0) == 2.0);
}
