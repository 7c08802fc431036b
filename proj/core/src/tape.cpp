#include "spladelab/tape.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace splade::ad {

namespace {

double phi_cdf(double x) {
    return 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
}

double phi_pdf(double x) {
    static const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    return inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

}  // namespace

std::size_t Tape::checked(Var v) const {
    if (!v.valid() || static_cast<std::size_t>(v.id) >= nodes_.size()) {
        throw std::logic_error("tape: variable does not belong to this tape");
    }
    return static_cast<std::size_t>(v.id);
}

Var Tape::push(Mat value, bool requires_grad, std::function<void()> backprop) {
    Node node;
    node.value = std::move(value);
    node.requires_grad = requires_grad;
    if (requires_grad) node.backprop = std::move(backprop);
    nodes_.push_back(std::move(node));
    return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
}

Mat& Tape::grad_buf(std::int32_t id) {
    Node& node = nodes_[static_cast<std::size_t>(id)];
    if (!node.grad_live) {
        node.grad = Mat::Zero(node.value.rows(), node.value.cols());
        node.grad_live = true;
    }
    return node.grad;
}

Mat Tape::gradient(Var v) const {
    const Node& node = nodes_[checked(v)];
    if (node.grad_live) return node.grad;
    return Mat::Zero(node.value.rows(), node.value.cols());
}

Var Tape::leaf(Mat value, bool requires_grad) {
    return push(std::move(value), requires_grad, nullptr);
}

Var Tape::matmul(Var a, Var b) {
    auto ia = static_cast<std::int32_t>(checked(a));
    auto ib = static_cast<std::int32_t>(checked(b));
    if (val(ia).cols() != val(ib).rows()) throw std::logic_error("matmul: shape mismatch");
    Mat out = val(ia) * val(ib);
    bool rg = needs_grad(a) || needs_grad(b);
    Var v = push(std::move(out), rg, nullptr);
    if (rg) {
        auto io = v.id;
        nodes_[static_cast<std::size_t>(io)].backprop = [this, ia, ib, io] {
            const Mat& g = grad_of(io);
            if (nodes_[static_cast<std::size_t>(ia)].requires_grad) {
                grad_buf(ia).noalias() += g * val(ib).transpose();
            }
            if (nodes_[static_cast<std::size_t>(ib)].requires_grad) {
                grad_buf(ib).noalias() += val(ia).transpose() * g;
            }
        };
    }
    return v;
}

Var Tape::matmul_nt(Var a, Var b) {
    auto ia = static_cast<std::int32_t>(checked(a));
    auto ib = static_cast<std::int32_t>(checked(b));
    if (val(ia).cols() != val(ib).cols()) throw std::logic_error("matmul_nt: shape mismatch");
    Mat out = val(ia) * val(ib).transpose();
    bool rg = needs_grad(a) || needs_grad(b);
    Var v = push(std::move(out), rg, nullptr);
    if (rg) {
        auto io = v.id;
        nodes_[static_cast<std::size_t>(io)].backprop = [this, ia, ib, io] {
            const Mat& g = grad_of(io);
            if (nodes_[static_cast<std::size_t>(ia)].requires_grad) {
                grad_buf(ia).noalias() += g * val(ib);
            }
            if (nodes_[static_cast<std::size_t>(ib)].requires_grad) {
                grad_buf(ib).noalias() += g.transpose() * val(ia);
            }
        };
    }
    return v;
}

Var Tape::add(Var a, Var b) {
    auto ia = static_cast<std::int32_t>(checked(a));
    auto ib = static_cast<std::int32_t>(checked(b));
    if (val(ia).rows() != val(ib).rows() || val(ia).cols() != val(ib).cols()) {
        throw std::logic_error("add: shape mismatch");
    }
    bool rg = needs_grad(a) || needs_grad(b);
    Var v = push(val(ia) + val(ib), rg, nullptr);
    if (rg) {
        auto io = v.id;
        nodes_[static_cast<std::size_t>(io)].backprop = [this, ia, ib, io] {
            const Mat& g = grad_of(io);
            if (nodes_[static_cast<std::size_t>(ia)].requires_grad) grad_buf(ia) += g;
            if (nodes_[static_cast<std::size_t>(ib)].requires_grad) grad_buf(ib) += g;
        };
    }
    return v;
}

Var Tape::add_rowvec(Var a, Var row) {
    auto ia = static_cast<std::int32_t>(checked(a));
    auto ir = static_cast<std::int32_t>(checked(row));
    if (val(ir).rows() != 1 || val(ir).cols() != val(ia).cols()) {
        throw std::logic_error("add_rowvec: row must be 1 x cols(a)");
    }
    Mat out = val(ia).rowwise() + val(ir).row(0);
    bool rg = needs_grad(a) || needs_grad(row);
    Var v = push(std::move(out), rg, nullptr);
    if (rg) {
        auto io = v.id;
        nodes_[static_cast<std::size_t>(io)].backprop = [this, ia, ir, io] {
            const Mat& g = grad_of(io);
            if (nodes_[static_cast<std::size_t>(ia)].requires_grad) grad_buf(ia) += g;
            if (nodes_[static_cast<std::size_t>(ir)].requires_grad) {
                grad_buf(ir).row(0) += g.colwise().sum();
            }
        };
    }
    return v;
}

Var Tape::scale(Var a, double s) {
    auto ia = static_cast<std::int32_t>(checked(a));
    bool rg = needs_grad(a);
    Var v = push(val(ia) * s, rg, nullptr);
    if (rg) {
        auto io = v.id;
        nodes_[static_cast<std::size_t>(io)].backprop = [this, ia, io, s] {
            grad_buf(ia) += grad_of(io) * s;
        };
    }
    return v;
}

Var Tape::scale_columns(Var a, const Eigen::RowVectorXd& weights) {
    auto ia = static_cast<std::int32_t>(checked(a));
    if (weights.cols() != val(ia).cols()) throw std::logic_error("scale_columns: width mismatch");
    Mat out = val(ia).array().rowwise() * weights.array();
    bool rg = needs_grad(a);
    Var v = push(std::move(out), rg, nullptr);
    if (rg) {
        auto io = v.id;
        Eigen::RowVectorXd w = weights;
        nodes_[static_cast<std::size_t>(io)].backprop = [this, ia, io, w] {
            grad_buf(ia).array() += grad_of(io).array().rowwise() * w.array();
        };
    }
    return v;
}

Var Tape::gather_rows(Var table, const std::vector<int>& rows) {
    auto it = static_cast<std::int32_t>(checked(table));
    Mat out(static_cast<Eigen::Index>(rows.size()), val(it).cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] < 0 || rows[i] >= val(it).rows()) throw std::logic_error("gather_rows: out of range");
        out.row(static_cast<Eigen::Index>(i)) = val(it).row(rows[i]);
    }
    bool rg = needs_grad(table);
    Var v = push(std::move(out), rg, nullptr);
    if (rg) {
        auto io = v.id;
        std::vector<int> idx = rows;
        nodes_[static_cast<std::size_t>(io)].backprop = [this, it, io, idx] {
            const Mat& g = grad_of(io);
            Mat& gt = grad_buf(it);
            for (std::size_t i = 0; i < idx.size(); ++i) {
                gt.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
            }
        };
    }
    return v;
}

Var Tape::slice_rows(Var a, int start, int count) {
    auto ia = static_cast<std::int32_t>(checked(a));
    if (start < 0 || count < 0 || start + count > val(ia).rows()) {
        throw std::logic_error("slice_rows: out of range");
    }
    bool rg = needs_grad(a);
    Var v = push(val(ia).middleRows(start, count), rg, nullptr);
    if (rg) {
        auto io = v.id;
        nodes_[static_cast<std::size_t>(io)].backprop = [this, ia, io, start, count] {
            grad_buf(ia).middleRows(start, count) += grad_of(io);
        };
    }
    return v;
}

Var Tape::slice_cols(Var a, int start, int count) {
    auto ia = static_cast<std::int32_t>(checked(a));
    if (start < 0 || count < 0 || start + count > val(ia).cols()) {
        throw std::logic_error("slice_cols: out of range");
    }
    bool rg = needs_grad(a);
    Var v = push(val(ia).middleCols(start, count), rg, nullptr);
    if (rg) {
        auto io = v.id;
        nodes_[static_cast<std::size_t>(io)].backprop = [this, ia, io, start, count] {
            grad_buf(ia).middleCols(start, count) += grad_of(io);
        };
    }
    return v;
}

Var Tape::hconcat(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::logic_error("hconcat: no parts");
    Eigen::Index rows = value(parts[0]).rows();
    Eigen::Index cols = 0;
    bool rg = false;
    for (Var p : parts) {
        if (value(p).rows() != rows) throw std::logic_error("hconcat: row mismatch");
        cols += value(p).cols();
        rg = rg || needs_grad(p);
    }
    Mat out(rows, cols);
    Eigen::Index at = 0;
    std::vector<std::pair<std::int32_t, Eigen::Index>> spans;
    for (Var p : parts) {
        Eigen::Index w = value(p).cols();
        out.middleCols(at, w) = value(p);
        spans.emplace_back(p.id, w);
        at += w;
    }
    Var v = push(std::move(out), rg, nullptr);
    if (rg) {
        auto io = v.id;
        nodes_[static_cast<std::size_t>(io)].backprop = [this, io, spans] {
            const Mat& g = grad_of(io);
            Eigen::Index at2 = 0;
            for (auto [id, w] : spans) {
                if (nodes_[static_cast<std::size_t>(id)].requires_grad) {
                    grad_buf(id) += g.middleCols(at2, w);
                }
                at2 += w;
            }
        };
    }
    return v;
}

Var Tape::vconcat(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::logic_error("vconcat: no parts");
    Eigen::Index cols = value(parts[0]).cols();
    Eigen::Index rows = 0;
    bool rg = false;
    for (Var p : parts) {
        if (value(p).cols() != cols) throw std::logic_error("vconcat: column mismatch");
        rows += value(p).rows();
        rg = rg || needs_grad(p);
    }
    Mat out(rows, cols);
    Eigen::Index at = 0;
    std::vector<std::pair<std::int32_t, Eigen::Index>> spans;
    for (Var p : parts) {
        Eigen::Index h = value(p).rows();
        out.middleRows(at, h) = value(p);
        spans.emplace_back(p.id, h);
        at += h;
    }
    Var v = push(std::move(out), rg, nullptr);
    if (rg) {
        auto io = v.id;
        nodes_[static_cast<std::size_t>(io)].backprop = [this, io, spans] {
            const Mat& g = grad_of(io);
            Eigen::Index at2 = 0;
            for (auto [id, h] : spans) {
                if (nodes_[static_cast<std::size_t>(id)].requires_grad) {
                    grad_buf(id) += g.middleRows(at2, h);
                }
                at2 += h;
            }
        };
    }
    return v;
}

Var Tape::layer_norm(Var a, Var gain, Var bias, double eps) {
    auto ia = static_cast<std::int32_t>(checked(a));
    auto ig = static_cast<std::int32_t>(checked(gain));
    auto ib = static_cast<std::int32_t>(checked(bias));
    const Mat& x = val(ia);
    const Eigen::Index d = x.cols();
    if (val(ig).rows() != 1 || val(ig).cols() != d || val(ib).rows() != 1 || val(ib).cols() != d) {
        throw std::logic_error("layer_norm: gain/bias must be 1 x cols");
    }
    Mat xhat(x.rows(), d);
    Eigen::VectorXd inv_sigma(x.rows());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        double mu = x.row(r).mean();
        double var = (x.row(r).array() - mu).square().mean();
        double is = 1.0 / std::sqrt(var + eps);
        inv_sigma(r) = is;
        xhat.row(r) = (x.row(r).array() - mu) * is;
    }
    Mat out = (xhat.array().rowwise() * val(ig).row(0).array()).rowwise() + val(ib).row(0).array();
    bool rg = needs_grad(a) || needs_grad(gain) || needs_grad(bias);
    Var v = push(std::move(out), rg, nullptr);
    if (rg) {
        auto io = v.id;
        nodes_[static_cast<std::size_t>(io)].backprop = [this, ia, ig, ib, io, xhat, inv_sigma] {
            const Mat& g = grad_of(io);
            if (nodes_[static_cast<std::size_t>(ib)].requires_grad) {
                grad_buf(ib).row(0) += g.colwise().sum();
            }
            if (nodes_[static_cast<std::size_t>(ig)].requires_grad) {
                grad_buf(ig).row(0) += (g.array() * xhat.array()).colwise().sum().matrix();
            }
            if (nodes_[static_cast<std::size_t>(ia)].requires_grad) {
                Mat& gx = grad_buf(ia);
                const Eigen::RowVectorXd& gain_row = val(ig).row(0);
                for (Eigen::Index r = 0; r < g.rows(); ++r) {
                    Eigen::RowVectorXd gh = g.row(r).cwiseProduct(gain_row);
                    double mean_gh = gh.mean();
                    double mean_gh_xhat = gh.cwiseProduct(xhat.row(r)).mean();
                    gx.row(r) += inv_sigma(r) *
                                 (gh.array() - mean_gh - xhat.row(r).array() * mean_gh_xhat).matrix();
                }
            }
        };
    }
    return v;
}

Var Tape::softmax_rows(Var a) {
    auto ia = static_cast<std::int32_t>(checked(a));
    const Mat& x = val(ia);
    Mat out(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        double m = x.row(r).maxCoeff();
        Eigen::ArrayXd e = (x.row(r).array() - m).exp();
        out.row(r) = (e / e.sum()).matrix();
    }
    bool rg = needs_grad(a);
    Var v = push(std::move(out), rg, nullptr);
    if (rg) {
        auto io = v.id;
        nodes_[static_cast<std::size_t>(io)].backprop = [this, ia, io] {
            const Mat& g = grad_of(io);
            const Mat& y = val(io);
            Mat& gx = grad_buf(ia);
            for (Eigen::Index r = 0; r < g.rows(); ++r) {
                double dot = g.row(r).cwiseProduct(y.row(r)).sum();
                gx.row(r) += (y.row(r).array() * (g.row(r).array() - dot)).matrix();
            }
        };
    }
    return v;
}

Var Tape::relu(Var a) {
    auto ia = static_cast<std::int32_t>(checked(a));
    Mat out = val(ia).cwiseMax(0.0);
    bool rg = needs_grad(a);
    Var v = push(std::move(out), rg, nullptr);
    if (rg) {
        auto io = v.id;
        nodes_[static_cast<std::size_t>(io)].backprop = [this, ia, io] {
            grad_buf(ia).array() += grad_of(io).array() * (val(ia).array() > 0.0).cast<double>();
        };
    }
    return v;
}

Var Tape::gelu(Var a) {
    auto ia = static_cast<std::int32_t>(checked(a));
    Mat out = val(ia).unaryExpr([](double x) { return x * phi_cdf(x); });
    bool rg = needs_grad(a);
    Var v = push(std::move(out), rg, nullptr);
    if (rg) {
        auto io = v.id;
        nodes_[static_cast<std::size_t>(io)].backprop = [this, ia, io] {
            grad_buf(ia).array() +=
                grad_of(io).array() *
                val(ia).unaryExpr([](double x) { return phi_cdf(x) + x * phi_pdf(x); }).array();
        };
    }
    return v;
}

Var Tape::log1p(Var a) {
    auto ia = static_cast<std::int32_t>(checked(a));
    Mat out = val(ia).unaryExpr([](double x) { return std::log1p(x); });
    bool rg = needs_grad(a);
    Var v = push(std::move(out), rg, nullptr);
    if (rg) {
        auto io = v.id;
        nodes_[static_cast<std::size_t>(io)].backprop = [this, ia, io] {
            grad_buf(ia).array() += grad_of(io).array() / (1.0 + val(ia).array());
        };
    }
    return v;
}

Var Tape::colwise_max(Var a, std::vector<int>* argmax_out) {
    auto ia = static_cast<std::int32_t>(checked(a));
    const Mat& x = val(ia);
    if (x.rows() == 0) throw std::logic_error("colwise_max: empty input");
    Mat out(1, x.cols());
    std::vector<int> argmax(static_cast<std::size_t>(x.cols()), 0);
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
        double best = x(0, c);
        int best_row = 0;
        for (Eigen::Index r = 1; r < x.rows(); ++r) {
            if (x(r, c) > best) {
                best = x(r, c);
                best_row = static_cast<int>(r);
            }
        }
        out(0, c) = best;
        argmax[static_cast<std::size_t>(c)] = best_row;
    }
    if (argmax_out) *argmax_out = argmax;
    bool rg = needs_grad(a);
    Var v = push(std::move(out), rg, nullptr);
    if (rg) {
        auto io = v.id;
        nodes_[static_cast<std::size_t>(io)].backprop = [this, ia, io, argmax] {
            const Mat& g = grad_of(io);
            Mat& gx = grad_buf(ia);
            for (Eigen::Index c = 0; c < g.cols(); ++c) {
                gx(argmax[static_cast<std::size_t>(c)], c) += g(0, c);
            }
        };
    }
    return v;
}

Var Tape::sum(Var a) {
    auto ia = static_cast<std::int32_t>(checked(a));
    Mat out(1, 1);
    out(0, 0) = val(ia).sum();
    bool rg = needs_grad(a);
    Var v = push(std::move(out), rg, nullptr);
    if (rg) {
        auto io = v.id;
        nodes_[static_cast<std::size_t>(io)].backprop = [this, ia, io] {
            grad_buf(ia).array() += grad_of(io)(0, 0);
        };
    }
    return v;
}

Var Tape::cross_entropy_mean(Var scores, const std::vector<int>& positive) {
    auto is = static_cast<std::int32_t>(checked(scores));
    const Mat& s = val(is);
    if (static_cast<std::size_t>(s.rows()) != positive.size()) {
        throw std::logic_error("cross_entropy_mean: one positive index per row required");
    }
    double total = 0.0;
    for (Eigen::Index r = 0; r < s.rows(); ++r) {
        int pos = positive[static_cast<std::size_t>(r)];
        if (pos < 0 || pos >= s.cols()) throw std::logic_error("cross_entropy_mean: bad positive index");
        double m = s.row(r).maxCoeff();
        double lse = m + std::log((s.row(r).array() - m).exp().sum());
        total += lse - s(r, pos);
    }
    Mat out(1, 1);
    out(0, 0) = total / static_cast<double>(s.rows());
    bool rg = needs_grad(scores);
    Var v = push(std::move(out), rg, nullptr);
    if (rg) {
        auto io = v.id;
        std::vector<int> pos = positive;
        nodes_[static_cast<std::size_t>(io)].backprop = [this, is, io, pos] {
            double g = grad_of(io)(0, 0);
            const Mat& sv = val(is);
            Mat& gs = grad_buf(is);
            double inv_rows = 1.0 / static_cast<double>(sv.rows());
            for (Eigen::Index r = 0; r < sv.rows(); ++r) {
                double m = sv.row(r).maxCoeff();
                Eigen::ArrayXd e = (sv.row(r).array() - m).exp();
                Eigen::ArrayXd p = e / e.sum();
                gs.row(r) += (g * inv_rows) * p.matrix().transpose();
                gs(r, pos[static_cast<std::size_t>(r)]) -= g * inv_rows;
            }
        };
    }
    return v;
}

Var Tape::sum_squared_colmeans(Var a) {
    auto ia = static_cast<std::int32_t>(checked(a));
    const Mat& x = val(ia);
    if (x.rows() == 0) throw std::logic_error("sum_squared_colmeans: empty input");
    Eigen::RowVectorXd means = x.colwise().mean();
    Mat out(1, 1);
    out(0, 0) = means.squaredNorm();
    bool rg = needs_grad(a);
    Var v = push(std::move(out), rg, nullptr);
    if (rg) {
        auto io = v.id;
        nodes_[static_cast<std::size_t>(io)].backprop = [this, ia, io] {
            double g = grad_of(io)(0, 0);
            const Mat& xv = val(ia);
            Eigen::RowVectorXd m = xv.colwise().mean();
            grad_buf(ia).rowwise() += (2.0 * g / static_cast<double>(xv.rows())) * m;
        };
    }
    return v;
}

void Tape::backward(Var loss) {
    std::size_t root = checked(loss);
    const Node& root_node = nodes_[root];
    if (root_node.value.rows() != 1 || root_node.value.cols() != 1) {
        throw std::logic_error("backward: loss must be a 1x1 value");
    }
    if (!root_node.requires_grad) return;
    grad_buf(static_cast<std::int32_t>(root)).setConstant(1.0);
    for (std::size_t i = root + 1; i-- > 0;) {
        Node& node = nodes_[i];
        if (node.grad_live && node.backprop) node.backprop();
    }
}

}  // namespace splade::ad
