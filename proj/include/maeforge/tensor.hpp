#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "maeforge/common.hpp"

namespace maeforge {

// Dense row-major tensor. A Tensor is a shallow handle: copies share the
// value buffer and the gradient buffer (shared_ptr semantics), so parameter
// tensors can be handed to an optimizer and updated in place. The gradient
// buffer exists only when requires_grad is set.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape, bool requires_grad = false);
    Tensor(std::vector<int> shape, std::vector<Real> values, bool requires_grad = false);

    static Tensor scalar(Real v, bool requires_grad = false);
    static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
    static Tensor full(std::vector<int> shape, Real v, bool requires_grad = false);

    const std::vector<int>& shape() const { return shape_; }
    std::size_t ndim() const { return shape_.size(); }
    int dim(std::size_t i) const { return shape_[i]; }
    std::size_t numel() const { return data_ ? data_->size() : 0; }
    int rows() const;
    int cols() const;

    bool defined() const { return static_cast<bool>(data_); }
    bool requires_grad() const { return requires_grad_; }

    std::vector<Real>& values() const { return *data_; }

    Real& at(int i) const { return (*data_)[static_cast<std::size_t>(i)]; }
    Real& at(int i, int j) const;
    Real& at(int i, int j, int k) const;

    // Value of a single-element tensor.
    Real item() const;

    bool has_grad() const { return static_cast<bool>(grad_); }
    std::vector<Real>& grad() const;
    void zero_grad() const;
    void accumulate_grad(const std::vector<Real>& g) const;

    // Deep copy with gradient tracking dropped.
    Tensor detached() const;

    bool same_buffer(const Tensor& other) const { return data_ == other.data_; }
    bool all_finite() const;
    std::string shape_str() const;

private:
    std::vector<int> shape_;
    std::shared_ptr<std::vector<Real>> data_;
    std::shared_ptr<std::vector<Real>> grad_;
    bool requires_grad_ = false;
};

std::string shape_str(const std::vector<int>& shape);

// Record of one forward pass. Operations append nodes in execution order,
// which is already a topological order, so backward() is a single reverse
// sweep visiting each node exactly once. A tape and the tensors recorded on
// it form a single-owner unit: no concurrent recording or backward.
class Tape {
public:
    explicit Tape(bool recording = true) : recording_(recording) {}

    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    bool recording() const { return recording_; }
    std::size_t size() const { return nodes_.size(); }
    bool consumed() const { return consumed_; }

    // Op ids in recorded order; for structural tests.
    std::vector<std::string> op_names() const;

    // Seeds d(loss)/d(loss) = 1 and sweeps the tape once. The tape is
    // consumed: a second call without a fresh forward pass is an error.
    void backward(const Tensor& loss);

    void record(const char* op, std::function<void()> backward_fn);

private:
    struct Node {
        const char* op;
        std::function<void()> backward_fn;
    };
    std::vector<Node> nodes_;
    bool recording_ = true;
    bool consumed_ = false;
};

// --- differentiable operations -------------------------------------------
// Each returns a fresh tensor; a backward node is recorded on the tape when
// recording is on and any input requires grad.

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor transpose(Tape& tape, const Tensor& a);
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& a, Real c);
// rows of a (T x d) plus v (d)
Tensor add_row_vector(Tape& tape, const Tensor& a, const Tensor& v);
Tensor sum(Tape& tape, const Tensor& a);
Tensor softmax_rows(Tape& tape, const Tensor& x);
Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  Real eps = Real(1e-6));
Tensor gelu(Tape& tape, const Tensor& x);

// Row bookkeeping ops used by masking and pooling.
Tensor take_rows(Tape& tape, const Tensor& x, const std::vector<int>& idx);
Tensor row(Tape& tape, const Tensor& x, int i);
Tensor mean_rows(Tape& tape, const Tensor& x);
Tensor prepend_row(Tape& tape, const Tensor& r, const Tensor& x);
Tensor slice_cols(Tape& tape, const Tensor& x, int start, int count);
Tensor concat_cols(Tape& tape, const std::vector<Tensor>& parts);

// Builds a (total x d) sequence: row positions[i] receives rows[i], every
// other row receives the shared fill vector. Backward routes filled-row
// gradients into the fill (summed) and the rest back to rows.
Tensor assemble_rows(Tape& tape, const Tensor& rows, const Tensor& fill,
                     const std::vector<int>& positions, int total);

// Mean softmax cross-entropy, fused log-sum-exp form. logits is (C) with a
// single label or (B x C) with one label per row.
Tensor softmax_cross_entropy(Tape& tape, const Tensor& logits, const std::vector<int>& labels);

// Central-difference gradient of a scalar-valued function; the independent
// oracle every gradient check compares against. Never touches the tape.
Tensor finite_diff_grad(const std::function<Real(const Tensor&)>& f, const Tensor& x,
                        Real h = Real(1e-5));

// max over elements of |a-b| / (|a|+|b|+1e-12)
Real max_relative_error(const std::vector<Real>& a, const std::vector<Real>& b);

}  // namespace maeforge
