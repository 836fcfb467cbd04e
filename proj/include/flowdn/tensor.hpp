// Dense row-major double tensor, the single data carrier of the library.
#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace flowdn {

struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct UsageError : std::runtime_error {
    explicit UsageError(const std::string& what) : std::runtime_error(what) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

// Raised when training or sampling produces a non-finite value. Carries the
// step index at which the run blew up.
struct DivergenceError : std::runtime_error {
    long step = -1;
    DivergenceError(const std::string& what, long step_index)
        : std::runtime_error(what + " (step " + std::to_string(step_index) + ")"), step(step_index) {}
};

struct TensorValue {
    std::vector<int> shape;
    std::vector<double> data;

    TensorValue() = default;
    TensorValue(std::vector<int> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
        if (numel_of(shape) != static_cast<long>(data.size()))
            throw ShapeError("tensor data length does not match shape");
    }

    static long numel_of(const std::vector<int>& s) {
        long n = 1;
        for (int d : s) {
            if (d <= 0) throw ShapeError("tensor dims must be positive");
            n *= d;
        }
        return n;
    }

    static TensorValue zeros(std::vector<int> s) {
        long n = numel_of(s);
        return TensorValue(std::move(s), std::vector<double>(static_cast<size_t>(n), 0.0));
    }

    static TensorValue full(std::vector<int> s, double v) {
        long n = numel_of(s);
        return TensorValue(std::move(s), std::vector<double>(static_cast<size_t>(n), v));
    }

    static TensorValue scalar(double v) { return TensorValue({1}, {v}); }

    long numel() const { return static_cast<long>(data.size()); }
    int ndim() const { return static_cast<int>(shape.size()); }

    // 2-D accessors; most of the library works on [rows, cols] matrices.
    int rows() const { return ndim() >= 1 ? shape[0] : 1; }
    int cols() const {
        long n = numel();
        return rows() == 0 ? 0 : static_cast<int>(n / rows());
    }
    double& at(int r, int c) { return data[static_cast<size_t>(r) * cols() + c]; }
    double at(int r, int c) const { return data[static_cast<size_t>(r) * cols() + c]; }

    bool same_shape(const TensorValue& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    std::string shape_str() const {
        std::string s = "[";
        for (size_t i = 0; i < shape.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(shape[i]);
        }
        return s + "]";
    }
};

inline void require_same_shape(const TensorValue& a, const TensorValue& b, const char* op) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
}

}  // namespace flowdn
