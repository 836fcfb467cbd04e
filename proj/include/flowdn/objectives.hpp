// The unified weighted denoising objective: interpolation between noise and
// data, the time-weighting table, the three output parametrization classes,
// conversions between denoiser/velocity/noise views, and a factorized loss
// that keeps canonical weighting/class pairs free of divergent intermediates.
#pragma once

#include <cmath>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "flowdn/rng.hpp"
#include "flowdn/tape.hpp"
#include "flowdn/tensor.hpp"

namespace flowdn::obj {

// ---- weighting schemes -----------------------------------------------------
//
//   den      w = 1
//   vel      w = (1-t)^-2
//   noise    w = t^2 (1-t)^-2          (the interpolant's SNR)
//   classic  w = t^-2 on t >= 1/(1+sigma_max), 0 below
//   power    w = (1-t)^-p

enum class WeightingTag { Den, Vel, Noise, Classic, Power };

struct WeightingScheme {
    WeightingTag tag = WeightingTag::Vel;
    double sigma_max = 19.0;  // Classic only
    double power = 2.0;       // Power only

    static WeightingScheme den() { return {WeightingTag::Den, 0, 0}; }
    static WeightingScheme vel() { return {WeightingTag::Vel, 0, 0}; }
    static WeightingScheme noise() { return {WeightingTag::Noise, 0, 0}; }
    static WeightingScheme classic(double sigma_max) {
        if (sigma_max <= 0.0) throw ConfigError("classic weighting needs sigma_max > 0");
        return {WeightingTag::Classic, sigma_max, 0};
    }
    static WeightingScheme pow(double p) {
        if (p <= 0.0) throw ConfigError("power weighting needs p > 0");
        return {WeightingTag::Power, 0, p};
    }

    // Lowest time with nonzero weight (Classic cuts off below 1/(1+sigma_max)).
    double support_min() const { return tag == WeightingTag::Classic ? 1.0 / (1.0 + sigma_max) : 0.0; }
};

inline double weight_value(const WeightingScheme& w, double t) {
    switch (w.tag) {
        case WeightingTag::Den:
            return 1.0;
        case WeightingTag::Vel:
            return 1.0 / ((1.0 - t) * (1.0 - t));
        case WeightingTag::Noise:
            return t * t / ((1.0 - t) * (1.0 - t));
        case WeightingTag::Classic:
            return t >= 1.0 / (1.0 + w.sigma_max) ? 1.0 / (t * t) : 0.0;
        case WeightingTag::Power:
            return std::pow(1.0 - t, -w.power);
    }
    return 0.0;
}

// ---- parametrization classes -----------------------------------------------
//
//   c_den    D = N
//   c_vel    D = x + (1-t) N
//   c_noise  D = (x - (1-t) N) / t

enum class ParamClass { CDen, CVel, CNoise };

// Config-string forms: "w_den" | "w_vel" | "w_noise" | "w_classic:SIGMA" | "w_pow:P"
inline WeightingScheme parse_weighting(const std::string& s) {
    if (s == "w_den") return WeightingScheme::den();
    if (s == "w_vel") return WeightingScheme::vel();
    if (s == "w_noise") return WeightingScheme::noise();
    if (s.rfind("w_classic:", 0) == 0) return WeightingScheme::classic(std::stod(s.substr(10)));
    if (s.rfind("w_pow:", 0) == 0) return WeightingScheme::pow(std::stod(s.substr(6)));
    throw ConfigError("unknown weighting '" + s + "'");
}

inline std::string format_weighting(const WeightingScheme& w) {
    char buf[64];
    switch (w.tag) {
        case WeightingTag::Den:
            return "w_den";
        case WeightingTag::Vel:
            return "w_vel";
        case WeightingTag::Noise:
            return "w_noise";
        case WeightingTag::Classic:
            std::snprintf(buf, sizeof buf, "w_classic:%g", w.sigma_max);
            return buf;
        case WeightingTag::Power:
            std::snprintf(buf, sizeof buf, "w_pow:%g", w.power);
            return buf;
    }
    return "";
}

inline ParamClass parse_param_class(const std::string& s) {
    if (s == "c_den") return ParamClass::CDen;
    if (s == "c_vel") return ParamClass::CVel;
    if (s == "c_noise") return ParamClass::CNoise;
    throw ConfigError("unknown parametrization class '" + s + "'");
}

inline std::string format_param_class(ParamClass c) {
    switch (c) {
        case ParamClass::CDen: return "c_den";
        case ParamClass::CVel: return "c_vel";
        case ParamClass::CNoise: return "c_noise";
    }
    return "";
}

// ---- interpolation ---------------------------------------------------------

struct InterpolantSample {
    TensorValue x0;  // source draw, standard Gaussian
    TensorValue x1;  // data draw
    double t = 0.0;
    TensorValue xt;  // (1-t) x0 + t x1
};

inline InterpolantSample interpolate(TensorValue x0, TensorValue x1, double t) {
    require_same_shape(x0, x1, "interpolate");
    if (t < 0.0 || t > 1.0) throw ConfigError("interpolate: t must lie in [0,1]");
    TensorValue xt = TensorValue::zeros(x0.shape);
    for (long i = 0; i < xt.numel(); ++i) xt.data[i] = (1.0 - t) * x0.data[i] + t * x1.data[i];
    return {std::move(x0), std::move(x1), t, std::move(xt)};
}

// Batch layout used by training and evaluation: one row per sample.
struct InterpolantBatch {
    TensorValue x0;  // [B, d]
    TensorValue x1;  // [B, d]
    TensorValue xt;  // [B, d]
    std::vector<double> t;

    int size() const { return x1.rows(); }
    int dim() const { return x1.cols(); }
};

inline InterpolantBatch make_batch(TensorValue x0, TensorValue x1, std::vector<double> t) {
    require_same_shape(x0, x1, "make_batch");
    if (static_cast<int>(t.size()) != x0.rows()) throw ShapeError("make_batch: t length vs rows");
    TensorValue xt = TensorValue::zeros(x0.shape);
    const int d = x0.cols();
    for (int i = 0; i < x0.rows(); ++i)
        for (int j = 0; j < d; ++j)
            xt.data[static_cast<size_t>(i) * d + j] =
                (1.0 - t[i]) * x0.data[static_cast<size_t>(i) * d + j] +
                t[i] * x1.data[static_cast<size_t>(i) * d + j];
    return {std::move(x0), std::move(x1), std::move(xt), std::move(t)};
}

// ---- class conversions (plain tensors, no tape) ----------------------------

inline TensorValue denoiser_from_output(ParamClass cls, const TensorValue& n_out, const TensorValue& x,
                                        double t) {
    require_same_shape(n_out, x, "denoiser_from_output");
    TensorValue d = TensorValue::zeros(x.shape);
    switch (cls) {
        case ParamClass::CDen:
            d = n_out;
            break;
        case ParamClass::CVel:
            for (long i = 0; i < d.numel(); ++i) d.data[i] = x.data[i] + (1.0 - t) * n_out.data[i];
            break;
        case ParamClass::CNoise:
            if (t <= 0.0) throw ConfigError("c_noise denoiser undefined at t=0; clamp times first");
            for (long i = 0; i < d.numel(); ++i)
                d.data[i] = (x.data[i] - (1.0 - t) * n_out.data[i]) / t;
            break;
    }
    return d;
}

inline TensorValue velocity_from_denoiser(const TensorValue& d, const TensorValue& x, double t) {
    require_same_shape(d, x, "velocity_from_denoiser");
    if (t >= 1.0) throw ConfigError("velocity undefined at t=1; clamp times first");
    TensorValue v = TensorValue::zeros(x.shape);
    const double inv = 1.0 / (1.0 - t);
    for (long i = 0; i < v.numel(); ++i) v.data[i] = (d.data[i] - x.data[i]) * inv;
    return v;
}

inline TensorValue noise_from_denoiser(const TensorValue& d, const TensorValue& x, double t) {
    require_same_shape(d, x, "noise_from_denoiser");
    if (t >= 1.0) throw ConfigError("noise estimate undefined at t=1; clamp times first");
    TensorValue e = TensorValue::zeros(x.shape);
    const double inv = 1.0 / (1.0 - t);
    for (long i = 0; i < e.numel(); ++i) e.data[i] = (x.data[i] - t * d.data[i]) * inv;
    return e;
}

// ---- factorized loss -------------------------------------------------------
//
// The residual D - x1 factors through the network residual when x is the
// interpolant x_t:
//   c_den    D - x1 = N - x1                          scale 1
//   c_vel    D - x1 = (1-t) (N - (x1 - x0))           scale (1-t)
//   c_noise  D - x1 = ((1-t)/t) (x0 - N)              scale (1-t)/t
// so the per-sample loss is w(t) * scale(t)^2 * |core|^2, and the canonical
// pairs (w_vel x c_vel, w_noise x c_noise, w_den x c_den) carry weight
// exactly 1 with no large intermediate.

inline double class_residual_scale(ParamClass cls, double t) {
    switch (cls) {
        case ParamClass::CDen:
            return 1.0;
        case ParamClass::CVel:
            return 1.0 - t;
        case ParamClass::CNoise:
            return (1.0 - t) / t;
    }
    return 0.0;
}

// Core residual as a tape op: n_out minus the class-specific target.
inline nn::Var loss_core(nn::Tape& tape, nn::Var n_out, const InterpolantBatch& batch, ParamClass cls) {
    switch (cls) {
        case ParamClass::CDen:
            return tape.sub(n_out, tape.constant(batch.x1));
        case ParamClass::CVel: {
            TensorValue target = TensorValue::zeros(batch.x1.shape);
            for (long i = 0; i < target.numel(); ++i) target.data[i] = batch.x1.data[i] - batch.x0.data[i];
            return tape.sub(n_out, tape.constant(std::move(target)));
        }
        case ParamClass::CNoise:
            return tape.sub(tape.constant(batch.x0), n_out);
    }
    throw ConfigError("bad parametrization class");
}

// Differentiable scalar: mean_i w(t_i) * |D_i - x1_i|^2 in factorized form.
// Throws DivergenceError if the result is non-finite (diagnostics include the
// weighting and class tags).
inline nn::Var unified_loss_graph(nn::Tape& tape, nn::Var n_out, const InterpolantBatch& batch,
                                  ParamClass cls, const WeightingScheme& w, long step = -1) {
    const int b = batch.size();
    if (b == 0) throw ConfigError("unified loss on empty batch");
    std::vector<double> row_w(static_cast<size_t>(b));
    for (int i = 0; i < b; ++i) {
        const double s = class_residual_scale(cls, batch.t[i]);
        row_w[i] = weight_value(w, batch.t[i]) * s * s / static_cast<double>(b);
    }
    nn::Var core = loss_core(tape, n_out, batch, cls);
    nn::Var sq = tape.mul(core, core);
    nn::Var loss = tape.sum_all(tape.scale_rows(sq, std::move(row_w)));
    const double lv = tape.val(loss).data[0];
    if (!std::isfinite(lv)) {
        double t_bad = batch.t.empty() ? -1.0 : batch.t[0];
        throw DivergenceError("non-finite loss (t0=" + std::to_string(t_bad) + ", " +
                                  format_param_class(cls) + ", " + format_weighting(w) + ")",
                              step);
    }
    return loss;
}

// Reference direct evaluation w * |D - x1|^2 without factorization; test oracle
// and small-scale diagnostics.
inline double direct_weighted_loss(const InterpolantBatch& batch, const TensorValue& n_out,
                                   ParamClass cls, const WeightingScheme& w) {
    const int b = batch.size(), d = batch.dim();
    double total = 0.0;
    for (int i = 0; i < b; ++i) {
        TensorValue xt_row = TensorValue::zeros({1, d});
        TensorValue n_row = TensorValue::zeros({1, d});
        for (int j = 0; j < d; ++j) {
            xt_row.data[j] = batch.xt.data[static_cast<size_t>(i) * d + j];
            n_row.data[j] = n_out.data[static_cast<size_t>(i) * d + j];
        }
        TensorValue dres = denoiser_from_output(cls, n_row, xt_row, batch.t[i]);
        double sq = 0.0;
        for (int j = 0; j < d; ++j) {
            const double r = dres.data[j] - batch.x1.data[static_cast<size_t>(i) * d + j];
            sq += r * r;
        }
        total += weight_value(w, batch.t[i]) * sq;
    }
    return total / b;
}

// ---- time sampling ---------------------------------------------------------

inline double sample_time(Rng& rng, double t_lo, double t_hi) {
    if (!(0.0 <= t_lo && t_lo < t_hi && t_hi <= 1.0))
        throw ConfigError("sample_time: need 0 <= t_lo < t_hi <= 1");
    return rng.uniform(t_lo, t_hi);
}

}  // namespace flowdn::obj
