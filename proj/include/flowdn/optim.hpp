// Named parameter store with Adam state and an EMA shadow copy.
#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "flowdn/tensor.hpp"

namespace flowdn::nn {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class ParamStore {
public:
    struct Entry {
        std::string name;
        TensorValue value;
        TensorValue m;  // first moment
        TensorValue v;  // second moment
        TensorValue ema;
    };

    int add(std::string name, TensorValue init) {
        Entry e;
        e.name = std::move(name);
        e.m = TensorValue::zeros(init.shape);
        e.v = TensorValue::zeros(init.shape);
        e.value = std::move(init);
        entries_.push_back(std::move(e));
        return static_cast<int>(entries_.size()) - 1;
    }

    size_t size() const { return entries_.size(); }
    Entry& entry(int i) { return entries_[i]; }
    const Entry& entry(int i) const { return entries_[i]; }
    long step_count() const { return step_; }
    bool ema_initialized() const { return ema_init_; }

    long num_scalars() const {
        long n = 0;
        for (const Entry& e : entries_) n += e.value.numel();
        return n;
    }

    // Bias-corrected adaptive-moment update. `grads` must align with entries.
    // Throws DivergenceError on any non-finite gradient; the step is not applied.
    void adam_step(std::span<const TensorValue> grads, const AdamConfig& cfg) {
        if (grads.size() != entries_.size())
            throw UsageError("adam_step: gradient count does not match parameter count");
        for (size_t i = 0; i < entries_.size(); ++i) {
            if (!grads[i].same_shape(entries_[i].value))
                throw ShapeError("adam_step: gradient shape mismatch for " + entries_[i].name);
            if (!grads[i].all_finite())
                throw DivergenceError("non-finite gradient in " + entries_[i].name, step_ + 1);
        }
        ++step_;
        const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step_));
        const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step_));
        for (size_t i = 0; i < entries_.size(); ++i) {
            Entry& e = entries_[i];
            const double* g = grads[i].data.data();
            for (long j = 0; j < e.value.numel(); ++j) {
                e.m.data[j] = cfg.beta1 * e.m.data[j] + (1.0 - cfg.beta1) * g[j];
                e.v.data[j] = cfg.beta2 * e.v.data[j] + (1.0 - cfg.beta2) * g[j] * g[j];
                const double mhat = e.m.data[j] / bc1;
                const double vhat = e.v.data[j] / bc2;
                e.value.data[j] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
            }
        }
    }

    // shadow <- lambda*shadow + (1-lambda)*param. First call copies parameters.
    void ema_update(double lambda) {
        if (lambda < 0.0 || lambda >= 1.0)
            throw ConfigError("ema decay must lie in [0,1), got " + std::to_string(lambda));
        if (!ema_init_) {
            for (Entry& e : entries_) e.ema = e.value;
            ema_init_ = true;
            return;
        }
        for (Entry& e : entries_)
            for (long j = 0; j < e.value.numel(); ++j)
                e.ema.data[j] = lambda * e.ema.data[j] + (1.0 - lambda) * e.value.data[j];
    }

    // Direct shadow assignment, used by tests and checkpoint loading.
    void set_ema(int i, TensorValue shadow) {
        require_same_shape(shadow, entries_[i].value, "set_ema");
        entries_[i].ema = std::move(shadow);
        ema_init_ = true;
    }

    void set_step_count(long s) { step_ = s; }

private:
    std::vector<Entry> entries_;
    long step_ = 0;
    bool ema_init_ = false;
};

}  // namespace flowdn::nn

namespace flowdn {
using nn::AdamConfig;
using nn::ParamStore;
}  // namespace flowdn
