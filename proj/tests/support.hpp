// Shared test oracles: finite-difference gradients, numerical rank, a tiny
// well-formedness check for emitted SVG/XML, and small stat helpers.
#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "flowdn/flowdn.hpp"

namespace testsup {

using flowdn::TensorValue;
namespace nn = flowdn::nn;

// Builds the graph with the given leaf values (as inputs) and returns the
// scalar output var; used both for the value and for autodiff grads.
using GraphFn = std::function<nn::Var(nn::Tape&, const std::vector<nn::Var>&)>;

inline double eval_scalar(const GraphFn& fn, const std::vector<TensorValue>& leaves) {
    nn::Tape tape;
    std::vector<nn::Var> vars;
    vars.reserve(leaves.size());
    for (const TensorValue& v : leaves) vars.push_back(tape.input(v));
    const nn::Var out = fn(tape, vars);
    return tape.val(out).data[0];
}

struct GradCheckResult {
    double max_rel_err = 0.0;
    double max_abs_err = 0.0;
    long checked = 0;
};

// Central finite differences vs reverse-mode for every component of every
// leaf. rel = |a-b| / max(|a|,|b|,floor).
inline GradCheckResult grad_check(const GraphFn& fn, std::vector<TensorValue> leaves,
                                  double h = 1e-5, double floor = 1e-6) {
    nn::Tape tape;
    std::vector<nn::Var> vars;
    for (const TensorValue& v : leaves) vars.push_back(tape.input(v));
    const nn::Var out = fn(tape, vars);
    tape.backward(out);
    GradCheckResult res;
    for (size_t li = 0; li < leaves.size(); ++li) {
        const TensorValue& g = tape.grad(vars[li]);
        for (long i = 0; i < leaves[li].numel(); ++i) {
            const double orig = leaves[li].data[i];
            leaves[li].data[i] = orig + h;
            const double fp = eval_scalar(fn, leaves);
            leaves[li].data[i] = orig - h;
            const double fm = eval_scalar(fn, leaves);
            leaves[li].data[i] = orig;
            const double fd = (fp - fm) / (2.0 * h);
            const double a = g.data[i];
            const double abs_err = std::abs(a - fd);
            const double rel = abs_err / std::max({std::abs(a), std::abs(fd), floor});
            res.max_rel_err = std::max(res.max_rel_err, rel);
            res.max_abs_err = std::max(res.max_abs_err, abs_err);
            ++res.checked;
        }
    }
    return res;
}

// Numerical rank by modified Gram-Schmidt on the rows.
inline int numerical_rank(const TensorValue& m, double tol = 1e-8) {
    const int rows = m.rows(), cols = m.cols();
    std::vector<std::vector<double>> basis;
    for (int i = 0; i < rows; ++i) {
        std::vector<double> v(m.data.begin() + static_cast<size_t>(i) * cols,
                              m.data.begin() + static_cast<size_t>(i + 1) * cols);
        double norm0 = 0.0;
        for (double x : v) norm0 += x * x;
        norm0 = std::sqrt(norm0);
        if (norm0 == 0.0) continue;
        for (const std::vector<double>& b : basis) {
            double dot = 0.0;
            for (int j = 0; j < cols; ++j) dot += v[j] * b[j];
            for (int j = 0; j < cols; ++j) v[j] -= dot * b[j];
        }
        double norm = 0.0;
        for (double x : v) norm += x * x;
        norm = std::sqrt(norm);
        if (norm > tol * std::max(1.0, norm0)) {
            for (double& x : v) x /= norm;
            basis.push_back(std::move(v));
        }
    }
    return static_cast<int>(basis.size());
}

// Minimal well-formedness check: balanced tags, quoted attribute values,
// single root. Good enough to catch broken SVG emission.
inline bool well_formed_xml(const std::string& s) {
    std::vector<std::string> stack;
    size_t i = 0;
    int roots = 0;
    while (i < s.size()) {
        if (s[i] != '<') {
            if (s[i] == '>') return false;
            ++i;
            continue;
        }
        size_t j = i + 1;
        const bool closing = j < s.size() && s[j] == '/';
        if (closing) ++j;
        size_t name_start = j;
        while (j < s.size() && (std::isalnum(static_cast<unsigned char>(s[j])) || s[j] == '-' ||
                                s[j] == '_' || s[j] == ':'))
            ++j;
        const std::string name = s.substr(name_start, j - name_start);
        if (name.empty()) return false;
        // scan to tag end, honouring quotes
        bool self_closing = false;
        char quote = 0;
        while (j < s.size()) {
            const char c = s[j];
            if (quote) {
                if (c == quote) quote = 0;
            } else if (c == '"' || c == '\'') {
                quote = c;
            } else if (c == '>') {
                break;
            } else if (c == '/' && j + 1 < s.size() && s[j + 1] == '>') {
                self_closing = true;
            } else if (c == '<') {
                return false;
            }
            ++j;
        }
        if (j >= s.size()) return false;
        if (closing) {
            if (stack.empty() || stack.back() != name) return false;
            stack.pop_back();
        } else if (!self_closing) {
            if (stack.empty() && roots++ > 0) return false;
            stack.push_back(name);
        } else if (stack.empty()) {
            if (roots++ > 0) return false;
        }
        i = j + 1;
    }
    return stack.empty() && roots == 1;
}

inline double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

inline double var_of(const std::vector<double>& v) {
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return s / static_cast<double>(v.size() - 1);
}

inline double max_abs_diff(const TensorValue& a, const TensorValue& b) {
    double m = 0.0;
    for (long i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
    return m;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace testsup
