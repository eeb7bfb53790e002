#include "maeforge/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <sstream>
#include <utility>

namespace maeforge {

namespace {

std::size_t shape_numel(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw ValidationError("tensor: dimension sizes must be positive, got " + shape_str(shape));
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

// C(m x n) += A(m x k) * B(k x n), all row-major.
void gemm_nn(Real* c, const Real* a, const Real* b, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const Real* arow = a + static_cast<std::size_t>(i) * k;
        Real* crow = c + static_cast<std::size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const Real av = arow[p];
            if (av == Real(0)) continue;
            const Real* brow = b + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C(m x k) += A(m x n) * B(k x n)^T
void gemm_nt(Real* c, const Real* a, const Real* b, int m, int n, int k) {
    for (int i = 0; i < m; ++i) {
        const Real* arow = a + static_cast<std::size_t>(i) * n;
        Real* crow = c + static_cast<std::size_t>(i) * k;
        for (int p = 0; p < k; ++p) {
            const Real* brow = b + static_cast<std::size_t>(p) * n;
            Real acc = 0;
            for (int j = 0; j < n; ++j) acc += arow[j] * brow[j];
            crow[p] += acc;
        }
    }
}

// C(k x n) += A(m x k)^T * B(m x n)
void gemm_tn(Real* c, const Real* a, const Real* b, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const Real* arow = a + static_cast<std::size_t>(i) * k;
        const Real* brow = b + static_cast<std::size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const Real av = arow[p];
            if (av == Real(0)) continue;
            Real* crow = c + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void require_2d(const Tensor& t, const char* op) {
    if (t.ndim() != 2) throw ValidationError(std::string(op) + ": expected a 2-d tensor, got " + t.shape_str());
}

bool track(const Tape& tape, const Tensor& a) { return tape.recording() && a.requires_grad(); }
bool track(const Tape& tape, const Tensor& a, const Tensor& b) {
    return tape.recording() && (a.requires_grad() || b.requires_grad());
}

}  // namespace

std::string shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ')';
    return os.str();
}

// --- Tensor ----------------------------------------------------------------

Tensor::Tensor(std::vector<int> shape, bool requires_grad)
    : shape_(std::move(shape)),
      data_(std::make_shared<std::vector<Real>>(shape_numel(shape_), Real(0))),
      requires_grad_(requires_grad) {
    if (requires_grad_) grad_ = std::make_shared<std::vector<Real>>(data_->size(), Real(0));
}

Tensor::Tensor(std::vector<int> shape, std::vector<Real> values, bool requires_grad)
    : shape_(std::move(shape)),
      data_(std::make_shared<std::vector<Real>>(std::move(values))),
      requires_grad_(requires_grad) {
    if (data_->size() != shape_numel(shape_))
        throw ValidationError("tensor: " + std::to_string(data_->size()) + " values do not fill shape " +
                              shape_str(shape_));
    if (requires_grad_) grad_ = std::make_shared<std::vector<Real>>(data_->size(), Real(0));
}

Tensor Tensor::scalar(Real v, bool requires_grad) { return Tensor({}, {v}, requires_grad); }

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
    return Tensor(std::move(shape), requires_grad);
}

Tensor Tensor::full(std::vector<int> shape, Real v, bool requires_grad) {
    Tensor t(std::move(shape), requires_grad);
    std::fill(t.values().begin(), t.values().end(), v);
    return t;
}

int Tensor::rows() const {
    if (ndim() != 2) throw ValidationError("rows(): not a 2-d tensor: " + shape_str());
    return shape_[0];
}

int Tensor::cols() const {
    if (ndim() != 2) throw ValidationError("cols(): not a 2-d tensor: " + shape_str());
    return shape_[1];
}

Real& Tensor::at(int i, int j) const { return (*data_)[static_cast<std::size_t>(i) * shape_[1] + j]; }

Real& Tensor::at(int i, int j, int k) const {
    return (*data_)[(static_cast<std::size_t>(i) * shape_[1] + j) * shape_[2] + k];
}

Real Tensor::item() const {
    if (numel() != 1) throw ValidationError("item(): tensor has " + std::to_string(numel()) + " elements");
    return (*data_)[0];
}

std::vector<Real>& Tensor::grad() const {
    if (!grad_) throw Error("grad(): tensor does not track gradients");
    return *grad_;
}

void Tensor::zero_grad() const {
    if (grad_) std::fill(grad_->begin(), grad_->end(), Real(0));
}

void Tensor::accumulate_grad(const std::vector<Real>& g) const {
    if (!grad_) return;
    if (g.size() != grad_->size()) throw Error("accumulate_grad: size mismatch");
    for (std::size_t i = 0; i < g.size(); ++i) (*grad_)[i] += g[i];
}

Tensor Tensor::detached() const { return Tensor(shape_, *data_, false); }

bool Tensor::all_finite() const {
    for (Real v : *data_)
        if (!std::isfinite(v)) return false;
    return true;
}

std::string Tensor::shape_str() const { return maeforge::shape_str(shape_); }

// --- Tape --------------------------------------------------------------------

std::vector<std::string> Tape::op_names() const {
    std::vector<std::string> names;
    names.reserve(nodes_.size());
    for (const auto& n : nodes_) names.emplace_back(n.op);
    return names;
}

void Tape::record(const char* op, std::function<void()> backward_fn) {
    nodes_.push_back(Node{op, std::move(backward_fn)});
}

void Tape::backward(const Tensor& loss) {
    if (loss.numel() != 1) throw ValidationError("backward: loss must be a scalar, got " + loss.shape_str());
    if (consumed_) throw Error("backward: tape already consumed; run a fresh forward pass");
    if (!loss.has_grad()) throw ValidationError("backward: loss does not require grad");
    consumed_ = true;
    loss.grad()[0] += Real(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->backward_fn();
}

// --- ops ---------------------------------------------------------------------

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
    require_2d(a, "matmul");
    require_2d(b, "matmul");
    if (a.cols() != b.rows())
        throw ValidationError("matmul: inner dimensions disagree: " + a.shape_str() + " vs " + b.shape_str());
    const int m = a.rows(), k = a.cols(), n = b.cols();
    Tensor out({m, n}, track(tape, a, b));
    gemm_nn(out.values().data(), a.values().data(), b.values().data(), m, k, n);
    if (out.requires_grad()) {
        tape.record("matmul", [a, b, out, m, k, n]() {
            if (a.requires_grad()) gemm_nt(a.grad().data(), out.grad().data(), b.values().data(), m, n, k);
            if (b.requires_grad()) gemm_tn(b.grad().data(), a.values().data(), out.grad().data(), m, k, n);
        });
    }
    return out;
}

Tensor transpose(Tape& tape, const Tensor& a) {
    require_2d(a, "transpose");
    const int m = a.rows(), n = a.cols();
    Tensor out({n, m}, track(tape, a));
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out.at(j, i) = a.at(i, j);
    if (out.requires_grad()) {
        tape.record("transpose", [a, out, m, n]() {
            auto& ga = a.grad();
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j)
                    ga[static_cast<std::size_t>(i) * n + j] += out.grad()[static_cast<std::size_t>(j) * m + i];
        });
    }
    return out;
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw ValidationError("add: shape mismatch: " + a.shape_str() + " vs " + b.shape_str());
    Tensor out(a.shape(), track(tape, a, b));
    for (std::size_t i = 0; i < a.numel(); ++i) out.values()[i] = a.values()[i] + b.values()[i];
    if (out.requires_grad()) {
        tape.record("add", [a, b, out]() {
            if (a.requires_grad()) a.accumulate_grad(out.grad());
            if (b.requires_grad()) b.accumulate_grad(out.grad());
        });
    }
    return out;
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw ValidationError("sub: shape mismatch: " + a.shape_str() + " vs " + b.shape_str());
    Tensor out(a.shape(), track(tape, a, b));
    for (std::size_t i = 0; i < a.numel(); ++i) out.values()[i] = a.values()[i] - b.values()[i];
    if (out.requires_grad()) {
        tape.record("sub", [a, b, out]() {
            if (a.requires_grad()) a.accumulate_grad(out.grad());
            if (b.requires_grad()) {
                auto& gb = b.grad();
                for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= out.grad()[i];
            }
        });
    }
    return out;
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw ValidationError("mul: shape mismatch: " + a.shape_str() + " vs " + b.shape_str());
    Tensor out(a.shape(), track(tape, a, b));
    for (std::size_t i = 0; i < a.numel(); ++i) out.values()[i] = a.values()[i] * b.values()[i];
    if (out.requires_grad()) {
        tape.record("mul", [a, b, out]() {
            if (a.requires_grad()) {
                auto& ga = a.grad();
                for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += b.values()[i] * out.grad()[i];
            }
            if (b.requires_grad()) {
                auto& gb = b.grad();
                for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += a.values()[i] * out.grad()[i];
            }
        });
    }
    return out;
}

Tensor scale(Tape& tape, const Tensor& a, Real c) {
    Tensor out(a.shape(), track(tape, a));
    for (std::size_t i = 0; i < a.numel(); ++i) out.values()[i] = c * a.values()[i];
    if (out.requires_grad()) {
        tape.record("scale", [a, out, c]() {
            auto& ga = a.grad();
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += c * out.grad()[i];
        });
    }
    return out;
}

Tensor add_row_vector(Tape& tape, const Tensor& a, const Tensor& v) {
    require_2d(a, "add_row_vector");
    if (v.ndim() != 1 || v.dim(0) != a.cols())
        throw ValidationError("add_row_vector: vector " + v.shape_str() + " does not match rows of " + a.shape_str());
    const int t = a.rows(), d = a.cols();
    Tensor out({t, d}, track(tape, a, v));
    for (int i = 0; i < t; ++i)
        for (int j = 0; j < d; ++j) out.at(i, j) = a.at(i, j) + v.at(j);
    if (out.requires_grad()) {
        tape.record("add_row_vector", [a, v, out, t, d]() {
            if (a.requires_grad()) a.accumulate_grad(out.grad());
            if (v.requires_grad()) {
                auto& gv = v.grad();
                for (int i = 0; i < t; ++i)
                    for (int j = 0; j < d; ++j)
                        gv[static_cast<std::size_t>(j)] += out.grad()[static_cast<std::size_t>(i) * d + j];
            }
        });
    }
    return out;
}

Tensor sum(Tape& tape, const Tensor& a) {
    Real s = 0;
    for (Real v : a.values()) s += v;
    Tensor out = Tensor::scalar(s, track(tape, a));
    if (out.requires_grad()) {
        tape.record("sum", [a, out]() {
            auto& ga = a.grad();
            const Real g = out.grad()[0];
            for (auto& v : ga) v += g;
        });
    }
    return out;
}

Tensor softmax_rows(Tape& tape, const Tensor& x) {
    require_2d(x, "softmax_rows");
    const int m = x.rows(), n = x.cols();
    Tensor out({m, n}, track(tape, x));
    for (int i = 0; i < m; ++i) {
        Real mx = x.at(i, 0);
        for (int j = 1; j < n; ++j) mx = std::max(mx, x.at(i, j));
        Real denom = 0;
        for (int j = 0; j < n; ++j) {
            const Real e = std::exp(x.at(i, j) - mx);
            out.at(i, j) = e;
            denom += e;
        }
        for (int j = 0; j < n; ++j) out.at(i, j) /= denom;
    }
    if (out.requires_grad()) {
        tape.record("softmax_rows", [x, out, m, n]() {
            auto& gx = x.grad();
            for (int i = 0; i < m; ++i) {
                Real dot = 0;
                for (int j = 0; j < n; ++j) dot += out.grad()[static_cast<std::size_t>(i) * n + j] * out.at(i, j);
                for (int j = 0; j < n; ++j) {
                    const std::size_t k = static_cast<std::size_t>(i) * n + j;
                    gx[k] += out.at(i, j) * (out.grad()[k] - dot);
                }
            }
        });
    }
    return out;
}

Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gamma, const Tensor& beta, Real eps) {
    if (x.ndim() != 1 && x.ndim() != 2)
        throw ValidationError("layer_norm: expected a 1-d or 2-d tensor, got " + x.shape_str());
    const int t = x.ndim() == 2 ? x.dim(0) : 1;
    const int d = x.ndim() == 2 ? x.dim(1) : x.dim(0);
    if (gamma.ndim() != 1 || gamma.dim(0) != d || beta.ndim() != 1 || beta.dim(0) != d)
        throw ValidationError("layer_norm: gamma/beta " + gamma.shape_str() + "/" + beta.shape_str() +
                              " do not match feature size " + std::to_string(d));

    const bool tracked = tape.recording() && (x.requires_grad() || gamma.requires_grad() || beta.requires_grad());
    Tensor out(x.shape(), tracked);
    auto xhat = std::make_shared<std::vector<Real>>(x.numel());
    auto inv_std = std::make_shared<std::vector<Real>>(static_cast<std::size_t>(t));

    for (int i = 0; i < t; ++i) {
        const std::size_t base = static_cast<std::size_t>(i) * d;
        Real mean = 0;
        for (int j = 0; j < d; ++j) mean += x.values()[base + j];
        mean /= d;
        Real var = 0;
        for (int j = 0; j < d; ++j) {
            const Real c = x.values()[base + j] - mean;
            var += c * c;
        }
        var /= d;  // biased variance, denominator d
        const Real is = Real(1) / std::sqrt(var + eps);
        (*inv_std)[static_cast<std::size_t>(i)] = is;
        for (int j = 0; j < d; ++j) {
            const Real xh = (x.values()[base + j] - mean) * is;
            (*xhat)[base + j] = xh;
            out.values()[base + j] = gamma.at(j) * xh + beta.at(j);
        }
    }

    if (tracked) {
        tape.record("layer_norm", [x, gamma, beta, out, xhat, inv_std, t, d]() {
            for (int i = 0; i < t; ++i) {
                const std::size_t base = static_cast<std::size_t>(i) * d;
                if (beta.requires_grad()) {
                    auto& gb = beta.grad();
                    for (int j = 0; j < d; ++j) gb[static_cast<std::size_t>(j)] += out.grad()[base + j];
                }
                if (gamma.requires_grad()) {
                    auto& gg = gamma.grad();
                    for (int j = 0; j < d; ++j)
                        gg[static_cast<std::size_t>(j)] += out.grad()[base + j] * (*xhat)[base + j];
                }
                if (x.requires_grad()) {
                    // w = gamma .* dy; dx = (w - mean(w) - xhat * mean(w .* xhat)) * inv_std
                    Real mean_w = 0, mean_wx = 0;
                    for (int j = 0; j < d; ++j) {
                        const Real w = gamma.at(j) * out.grad()[base + j];
                        mean_w += w;
                        mean_wx += w * (*xhat)[base + j];
                    }
                    mean_w /= d;
                    mean_wx /= d;
                    auto& gx = x.grad();
                    const Real is = (*inv_std)[static_cast<std::size_t>(i)];
                    for (int j = 0; j < d; ++j) {
                        const Real w = gamma.at(j) * out.grad()[base + j];
                        gx[base + j] += (w - mean_w - (*xhat)[base + j] * mean_wx) * is;
                    }
                }
            }
        });
    }
    return out;
}

namespace {

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

}  // namespace

Tensor gelu(Tape& tape, const Tensor& x) {
    Tensor out(x.shape(), track(tape, x));
    for (std::size_t i = 0; i < x.numel(); ++i) {
        const Real v = x.values()[i];
        const Real phi = Real(0.5) * (Real(1) + static_cast<Real>(std::erf(static_cast<double>(v) * kInvSqrt2)));
        out.values()[i] = v * phi;  // exact GELU: x * Phi(x)
    }
    if (out.requires_grad()) {
        tape.record("gelu", [x, out]() {
            auto& gx = x.grad();
            for (std::size_t i = 0; i < gx.size(); ++i) {
                const double v = static_cast<double>(x.values()[i]);
                const double phi = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
                const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
                gx[i] += static_cast<Real>(phi + v * pdf) * out.grad()[i];
            }
        });
    }
    return out;
}

Tensor take_rows(Tape& tape, const Tensor& x, const std::vector<int>& idx) {
    require_2d(x, "take_rows");
    const int t = x.rows(), d = x.cols();
    if (idx.empty()) throw ValidationError("take_rows: empty index list");
    for (int i : idx)
        if (i < 0 || i >= t)
            throw ValidationError("take_rows: index " + std::to_string(i) + " out of range for " + x.shape_str());
    Tensor out({static_cast<int>(idx.size()), d}, track(tape, x));
    for (std::size_t r = 0; r < idx.size(); ++r)
        std::copy_n(x.values().data() + static_cast<std::size_t>(idx[r]) * d, d, out.values().data() + r * d);
    if (out.requires_grad()) {
        tape.record("take_rows", [x, out, idx, d]() {
            auto& gx = x.grad();
            for (std::size_t r = 0; r < idx.size(); ++r)
                for (int j = 0; j < d; ++j)
                    gx[static_cast<std::size_t>(idx[r]) * d + j] += out.grad()[r * d + j];
        });
    }
    return out;
}

Tensor row(Tape& tape, const Tensor& x, int i) {
    require_2d(x, "row");
    if (i < 0 || i >= x.rows())
        throw ValidationError("row: index " + std::to_string(i) + " out of range for " + x.shape_str());
    const int d = x.cols();
    Tensor out({d}, track(tape, x));
    std::copy_n(x.values().data() + static_cast<std::size_t>(i) * d, d, out.values().data());
    if (out.requires_grad()) {
        tape.record("row", [x, out, i, d]() {
            auto& gx = x.grad();
            for (int j = 0; j < d; ++j)
                gx[static_cast<std::size_t>(i) * d + j] += out.grad()[static_cast<std::size_t>(j)];
        });
    }
    return out;
}

Tensor mean_rows(Tape& tape, const Tensor& x) {
    require_2d(x, "mean_rows");
    const int t = x.rows(), d = x.cols();
    Tensor out({d}, track(tape, x));
    for (int i = 0; i < t; ++i)
        for (int j = 0; j < d; ++j) out.at(j) += x.at(i, j);
    for (int j = 0; j < d; ++j) out.at(j) /= t;
    if (out.requires_grad()) {
        tape.record("mean_rows", [x, out, t, d]() {
            auto& gx = x.grad();
            for (int i = 0; i < t; ++i)
                for (int j = 0; j < d; ++j)
                    gx[static_cast<std::size_t>(i) * d + j] += out.grad()[static_cast<std::size_t>(j)] / t;
        });
    }
    return out;
}

Tensor prepend_row(Tape& tape, const Tensor& r, const Tensor& x) {
    require_2d(x, "prepend_row");
    if (r.ndim() != 1 || r.dim(0) != x.cols())
        throw ValidationError("prepend_row: row " + r.shape_str() + " does not fit " + x.shape_str());
    const int t = x.rows(), d = x.cols();
    Tensor out({t + 1, d}, track(tape, r, x));
    std::copy_n(r.values().data(), d, out.values().data());
    std::copy_n(x.values().data(), x.numel(), out.values().data() + d);
    if (out.requires_grad()) {
        tape.record("prepend_row", [r, x, out, d]() {
            if (r.requires_grad()) {
                auto& gr = r.grad();
                for (int j = 0; j < d; ++j) gr[static_cast<std::size_t>(j)] += out.grad()[static_cast<std::size_t>(j)];
            }
            if (x.requires_grad()) {
                auto& gx = x.grad();
                for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += out.grad()[i + d];
            }
        });
    }
    return out;
}

Tensor slice_cols(Tape& tape, const Tensor& x, int start, int count) {
    require_2d(x, "slice_cols");
    if (start < 0 || count <= 0 || start + count > x.cols())
        throw ValidationError("slice_cols: range [" + std::to_string(start) + ", " + std::to_string(start + count) +
                              ") invalid for " + x.shape_str());
    const int t = x.rows(), d = x.cols();
    Tensor out({t, count}, track(tape, x));
    for (int i = 0; i < t; ++i)
        std::copy_n(x.values().data() + static_cast<std::size_t>(i) * d + start, count,
                    out.values().data() + static_cast<std::size_t>(i) * count);
    if (out.requires_grad()) {
        tape.record("slice_cols", [x, out, start, count, t, d]() {
            auto& gx = x.grad();
            for (int i = 0; i < t; ++i)
                for (int j = 0; j < count; ++j)
                    gx[static_cast<std::size_t>(i) * d + start + j] +=
                        out.grad()[static_cast<std::size_t>(i) * count + j];
        });
    }
    return out;
}

Tensor concat_cols(Tape& tape, const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ValidationError("concat_cols: no parts");
    const int t = parts[0].rows();
    int d = 0;
    bool any_grad = false;
    for (const auto& p : parts) {
        require_2d(p, "concat_cols");
        if (p.rows() != t) throw ValidationError("concat_cols: row counts differ");
        d += p.cols();
        any_grad = any_grad || p.requires_grad();
    }
    Tensor out({t, d}, tape.recording() && any_grad);
    int off = 0;
    for (const auto& p : parts) {
        const int pc = p.cols();
        for (int i = 0; i < t; ++i)
            std::copy_n(p.values().data() + static_cast<std::size_t>(i) * pc, pc,
                        out.values().data() + static_cast<std::size_t>(i) * d + off);
        off += pc;
    }
    if (out.requires_grad()) {
        tape.record("concat_cols", [parts, out, t, d]() {
            int off2 = 0;
            for (const auto& p : parts) {
                const int pc = p.cols();
                if (p.requires_grad()) {
                    auto& gp = p.grad();
                    for (int i = 0; i < t; ++i)
                        for (int j = 0; j < pc; ++j)
                            gp[static_cast<std::size_t>(i) * pc + j] +=
                                out.grad()[static_cast<std::size_t>(i) * d + off2 + j];
                }
                off2 += pc;
            }
        });
    }
    return out;
}

Tensor assemble_rows(Tape& tape, const Tensor& rows, const Tensor& fill,
                     const std::vector<int>& positions, int total) {
    require_2d(rows, "assemble_rows");
    const int v = rows.rows(), d = rows.cols();
    if (fill.ndim() != 1 || fill.dim(0) != d)
        throw ValidationError("assemble_rows: fill " + fill.shape_str() + " does not match width " +
                              std::to_string(d));
    if (static_cast<int>(positions.size()) != v)
        throw ValidationError("assemble_rows: " + std::to_string(positions.size()) + " positions for " +
                              std::to_string(v) + " rows");
    std::vector<int> src_of(static_cast<std::size_t>(total), -1);
    for (int i = 0; i < v; ++i) {
        const int p = positions[static_cast<std::size_t>(i)];
        if (p < 0 || p >= total)
            throw ValidationError("assemble_rows: position " + std::to_string(p) + " out of range");
        if (src_of[static_cast<std::size_t>(p)] != -1)
            throw ValidationError("assemble_rows: duplicate position " + std::to_string(p));
        src_of[static_cast<std::size_t>(p)] = i;
    }
    Tensor out({total, d}, track(tape, rows, fill));
    for (int p = 0; p < total; ++p) {
        const int s = src_of[static_cast<std::size_t>(p)];
        const Real* src = s >= 0 ? rows.values().data() + static_cast<std::size_t>(s) * d : fill.values().data();
        std::copy_n(src, d, out.values().data() + static_cast<std::size_t>(p) * d);
    }
    if (out.requires_grad()) {
        tape.record("assemble_rows", [rows, fill, out, src_of, total, d]() {
            for (int p = 0; p < total; ++p) {
                const int s = src_of[static_cast<std::size_t>(p)];
                if (s >= 0) {
                    if (!rows.requires_grad()) continue;
                    auto& gr = rows.grad();
                    for (int j = 0; j < d; ++j)
                        gr[static_cast<std::size_t>(s) * d + j] += out.grad()[static_cast<std::size_t>(p) * d + j];
                } else if (fill.requires_grad()) {
                    auto& gf = fill.grad();
                    for (int j = 0; j < d; ++j)
                        gf[static_cast<std::size_t>(j)] += out.grad()[static_cast<std::size_t>(p) * d + j];
                }
            }
        });
    }
    return out;
}

Tensor softmax_cross_entropy(Tape& tape, const Tensor& logits, const std::vector<int>& labels) {
    if (logits.ndim() == 0 || logits.ndim() > 2)
        throw ValidationError("softmax_cross_entropy: logits must be 1-d or 2-d");
    const int b = logits.ndim() == 2 ? logits.rows() : 1;
    const int c = logits.ndim() == 2 ? logits.cols() : static_cast<int>(logits.numel());
    if (static_cast<int>(labels.size()) != b)
        throw ValidationError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                              std::to_string(b) + " rows");
    for (int y : labels)
        if (y < 0 || y >= c)
            throw ValidationError("softmax_cross_entropy: label " + std::to_string(y) + " out of range");

    auto probs = std::make_shared<std::vector<Real>>(logits.numel());
    Real loss = 0;
    for (int i = 0; i < b; ++i) {
        const std::size_t base = static_cast<std::size_t>(i) * c;
        Real mx = logits.values()[base];
        for (int j = 1; j < c; ++j) mx = std::max(mx, logits.values()[base + j]);
        Real denom = 0;
        for (int j = 0; j < c; ++j) {
            const Real e = std::exp(logits.values()[base + j] - mx);
            (*probs)[base + j] = e;
            denom += e;
        }
        for (int j = 0; j < c; ++j) (*probs)[base + j] /= denom;
        loss += std::log(denom) + mx - logits.values()[base + labels[static_cast<std::size_t>(i)]];
    }
    loss /= b;

    Tensor out = Tensor::scalar(loss, track(tape, logits));
    if (out.requires_grad()) {
        tape.record("softmax_cross_entropy", [logits, out, labels, probs, b, c]() {
            auto& gl = logits.grad();
            const Real g = out.grad()[0] / b;
            for (int i = 0; i < b; ++i) {
                const std::size_t base = static_cast<std::size_t>(i) * c;
                for (int j = 0; j < c; ++j) {
                    const Real onehot = j == labels[static_cast<std::size_t>(i)] ? Real(1) : Real(0);
                    gl[base + j] += g * ((*probs)[base + j] - onehot);
                }
            }
        });
    }
    return out;
}

Tensor finite_diff_grad(const std::function<Real(const Tensor&)>& f, const Tensor& x, Real h) {
    if (h <= 0) throw ValidationError("finite_diff_grad: h must be positive");
    Tensor g(x.shape());
    std::vector<Real> work = x.values();
    for (std::size_t i = 0; i < work.size(); ++i) {
        const Real orig = work[i];
        work[i] = orig + h;
        const Real fp = f(Tensor(x.shape(), work));
        work[i] = orig - h;
        const Real fm = f(Tensor(x.shape(), work));
        work[i] = orig;
        g.values()[i] = (fp - fm) / (2 * h);
    }
    return g;
}

Real max_relative_error(const std::vector<Real>& a, const std::vector<Real>& b) {
    if (a.size() != b.size()) throw ValidationError("max_relative_error: size mismatch");
    Real worst = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const Real err = std::abs(a[i] - b[i]) / (std::abs(a[i]) + std::abs(b[i]) + Real(1e-12));
        worst = std::max(worst, err);
    }
    return worst;
}

}  // namespace maeforge
