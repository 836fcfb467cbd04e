// The two desk-scale architectures: a global MLP and a patch mixer whose patch
// size is the locality knob. Both read time through a sinusoidal embedding and
// end in a zero-initialized linear layer, so the raw network output is 0 at
// initialization regardless of variant.
#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "flowdn/optim.hpp"
#include "flowdn/rng.hpp"
#include "flowdn/tape.hpp"
#include "flowdn/tensor.hpp"

namespace flowdn::models {

enum class Activation { Tanh, Gelu, Relu };

inline std::string format_activation(Activation a) {
    switch (a) {
        case Activation::Tanh: return "tanh";
        case Activation::Gelu: return "gelu";
        case Activation::Relu: return "relu";
    }
    throw ConfigError("unknown activation");
}

inline Activation parse_activation(const std::string& s) {
    if (s == "tanh") return Activation::Tanh;
    if (s == "gelu") return Activation::Gelu;
    if (s == "relu") return Activation::Relu;
    throw ConfigError("unknown activation '" + s + "'");
}

inline nn::Var apply_activation(nn::Tape& tape, Activation a, nn::Var x) {
    switch (a) {
        case Activation::Tanh: return tape.tanh(x);
        case Activation::Gelu: return tape.gelu(x);
        case Activation::Relu: return tape.relu(x);
    }
    throw ConfigError("unknown activation");
}

// Sinusoidal features of t with a geometric series of periods. The slowest
// pair has period 4 > 1, which keeps the map injective on [0,1]; higher pairs
// double the frequency each time.
struct TimeEmbedding {
    int dim = 16;

    TimeEmbedding() = default;
    explicit TimeEmbedding(int d) : dim(d) {
        if (d < 0 || d % 2 != 0) throw ConfigError("time embedding dim must be even and >= 0");
    }

    TensorValue features(const std::vector<double>& t) const {
        if (dim == 0) return TensorValue{};
        const int b = static_cast<int>(t.size());
        TensorValue out = TensorValue::zeros({b, dim});
        const int half = dim / 2;
        for (int i = 0; i < b; ++i) {
            double omega = M_PI_2;
            double* row = out.data.data() + static_cast<size_t>(i) * dim;
            for (int j = 0; j < half; ++j) {
                row[2 * j] = std::sin(omega * t[i]);
                row[2 * j + 1] = std::cos(omega * t[i]);
                omega *= 2.0;
            }
        }
        return out;
    }
};

struct MlpSpec {
    std::vector<int> hidden_dims{128, 128};
    Activation activation = Activation::Gelu;
};

struct MixerSpec {
    int patch = 4;
    int embed_dim = 128;      // channels per token
    int depth = 2;            // token-mix + channel-layer pairs
    int token_hidden = 128;   // width of the token-mixing MLP
    Activation activation = Activation::Gelu;
};

struct ModelSpec {
    enum class Kind { Mlp, Mixer };
    Kind kind = Kind::Mlp;
    MlpSpec mlp;
    MixerSpec mixer;
    int time_embed_dim = 16;
    int input_dim = 2;   // flattened data dimension
    int image_n = 0;     // side length when the input is an image; 0 for plain vectors

    int tokens() const {
        const int g = image_n / mixer.patch;
        return g * g;
    }

    void validate() const {
        if (input_dim < 1) throw ConfigError("model: input_dim must be positive");
        if (time_embed_dim < 0 || time_embed_dim % 2 != 0)
            throw ConfigError("model: time_embed_dim must be even and >= 0");
        if (image_n > 0 && image_n * image_n != input_dim)
            throw ConfigError("model: image_n^2 must equal input_dim");
        if (kind == Kind::Mlp) {
            for (int h : mlp.hidden_dims)
                if (h < 1) throw ConfigError("model: hidden dims must be positive");
        } else {
            if (image_n <= 0) throw ConfigError("mixer: requires an image input shape");
            if (mixer.patch < 1 || image_n % mixer.patch != 0)
                throw ConfigError("mixer: patch size must divide image size");
            if (mixer.embed_dim < 1 || mixer.token_hidden < 1 || mixer.depth < 0)
                throw ConfigError("mixer: bad dimensions");
            if (tokens() < 1) throw ConfigError("mixer: token count must be positive");
        }
    }
};

namespace detail {
inline TensorValue dense_init(int rows, int cols, Rng& rng) {
    TensorValue w = TensorValue::zeros({rows, cols});
    const double s = 1.0 / std::sqrt(static_cast<double>(rows));
    for (double& v : w.data) v = rng.normal(0.0, s);
    return w;
}
}  // namespace detail

// Appends all trainable tensors for `spec` to the store, in the fixed order
// model_forward consumes them. Final linear layer starts at exactly zero.
inline void init_params(const ModelSpec& spec, ParamStore& store, Rng& rng) {
    spec.validate();
    using detail::dense_init;
    const int e = spec.time_embed_dim;
    if (spec.kind == ModelSpec::Kind::Mlp) {
        std::vector<int> dims;
        dims.push_back(spec.input_dim + e);
        for (int h : spec.mlp.hidden_dims) dims.push_back(h);
        dims.push_back(spec.input_dim);
        for (size_t i = 0; i + 1 < dims.size(); ++i) {
            const bool last = i + 2 == dims.size();
            const std::string tag = std::to_string(i);
            store.add("mlp.w" + tag, last ? TensorValue::zeros({dims[i], dims[i + 1]})
                                          : dense_init(dims[i], dims[i + 1], rng));
            store.add("mlp.b" + tag, TensorValue::zeros({1, dims[i + 1]}));
        }
    } else {
        const int p = spec.mixer.patch, c = spec.mixer.embed_dim;
        const int t = spec.tokens(), ht = spec.mixer.token_hidden;
        store.add("mixer.embed.w", dense_init(p * p + e, c, rng));
        store.add("mixer.embed.b", TensorValue::zeros({1, c}));
        TensorValue pos = TensorValue::zeros({t, c});
        for (double& v : pos.data) v = rng.normal(0.0, 0.02);
        store.add("mixer.pos", std::move(pos));
        for (int l = 0; l < spec.mixer.depth; ++l) {
            const std::string tag = std::to_string(l);
            store.add("mixer.tok" + tag + ".w1", dense_init(ht, t, rng));
            store.add("mixer.tok" + tag + ".b1", TensorValue::zeros({ht, 1}));
            store.add("mixer.tok" + tag + ".w2", dense_init(t, ht, rng));
            store.add("mixer.tok" + tag + ".b2", TensorValue::zeros({t, 1}));
            store.add("mixer.ch" + tag + ".w", dense_init(c, c, rng));
            store.add("mixer.ch" + tag + ".b", TensorValue::zeros({1, c}));
        }
        store.add("mixer.out.w", TensorValue::zeros({c, p * p}));
        store.add("mixer.out.b", TensorValue::zeros({1, p * p}));
    }
}

inline long param_count(const ModelSpec& spec) {
    spec.validate();
    const long e = spec.time_embed_dim;
    long n = 0;
    if (spec.kind == ModelSpec::Kind::Mlp) {
        long prev = spec.input_dim + e;
        for (int h : spec.mlp.hidden_dims) {
            n += prev * h + h;
            prev = h;
        }
        n += prev * static_cast<long>(spec.input_dim) + spec.input_dim;
    } else {
        const long p2 = static_cast<long>(spec.mixer.patch) * spec.mixer.patch;
        const long c = spec.mixer.embed_dim, t = spec.tokens(), ht = spec.mixer.token_hidden;
        n += (p2 + e) * c + c;           // embed
        n += t * c;                      // positions
        n += spec.mixer.depth * (ht * t + ht + t * ht + t + c * c + c);
        n += c * p2 + p2;                // output head
    }
    return n;
}

// Forward pass on the tape. `params` must follow init_params order; `t` holds
// one time per batch row. Output shape always equals the input shape.
inline nn::Var model_forward(nn::Tape& tape, const ModelSpec& spec,
                             const std::vector<nn::Var>& params, nn::Var x,
                             const std::vector<double>& t) {
    spec.validate();
    const TensorValue& tx = tape.val(x);
    if (tx.ndim() != 2 || tx.cols() != spec.input_dim)
        throw ShapeError("model_forward: input " + tx.shape_str() + " vs dim " +
                         std::to_string(spec.input_dim));
    const int bsz = tx.rows();
    if (static_cast<int>(t.size()) != bsz) throw ShapeError("model_forward: one time per batch row");
    for (double ti : t)
        if (!(ti >= 0.0 && ti <= 1.0)) throw ConfigError("model_forward: t outside [0,1]");

    const int e = spec.time_embed_dim;
    const TensorValue temb = TimeEmbedding(e).features(t);
    size_t pi = 0;
    auto next = [&]() {
        if (pi >= params.size()) throw UsageError("model_forward: not enough parameter vars");
        return params[pi++];
    };

    nn::Var out{-1};
    if (spec.kind == ModelSpec::Kind::Mlp) {
        nn::Var h = e > 0 ? tape.concat_cols(x, tape.constant(temb)) : x;
        const size_t layers = spec.mlp.hidden_dims.size() + 1;
        for (size_t i = 0; i < layers; ++i) {
            const nn::Var w = next(), b = next();
            h = tape.add_row_broadcast(tape.matmul(h, w), b);
            if (i + 1 < layers) h = apply_activation(tape, spec.mlp.activation, h);
        }
        out = h;
    } else {
        const int p = spec.mixer.patch, num_t = spec.tokens(), ht = spec.mixer.token_hidden;
        nn::Var tok = tape.patchify(x, spec.image_n, p);  // [B*T, p^2]
        if (e > 0) {
            TensorValue expanded = TensorValue::zeros({bsz * num_t, e});
            for (int i = 0; i < bsz; ++i)
                for (int j = 0; j < num_t; ++j)
                    std::copy_n(temb.data.data() + static_cast<size_t>(i) * e, e,
                                expanded.data.data() + (static_cast<size_t>(i) * num_t + j) * e);
            tok = tape.concat_cols(tok, tape.constant(std::move(expanded)));
        }
        // next() twice in one call expression would leave the consumption order
        // up to the compiler, so every weight/bias pair is pulled sequentially.
        const nn::Var ew = next(), eb = next();
        nn::Var xc = tape.add_row_broadcast(tape.matmul(tok, ew), eb);
        xc = tape.add_block_broadcast(xc, next(), num_t);  // learned per-token offsets
        for (int l = 0; l < spec.mixer.depth; ++l) {
            // token mixing across the token axis, residual
            const nn::Var tw1 = next(), tb1 = next();
            nn::Var hmix = tape.add_block_broadcast(tape.block_matmul(tw1, xc, num_t), tb1, ht);
            hmix = apply_activation(tape, spec.mixer.activation, hmix);
            const nn::Var tw2 = next(), tb2 = next();
            nn::Var mix = tape.add_block_broadcast(tape.block_matmul(tw2, hmix, ht), tb2, num_t);
            xc = tape.add(xc, mix);
            // channel layer, applied per token
            const nn::Var cw = next(), cb = next();
            xc = apply_activation(tape, spec.mixer.activation,
                                  tape.add_row_broadcast(tape.matmul(xc, cw), cb));
        }
        const nn::Var ow = next(), ob = next();
        nn::Var head = tape.add_row_broadcast(tape.matmul(xc, ow), ob);
        out = tape.unpatchify(head, spec.image_n, p);
    }
    if (pi != params.size()) throw UsageError("model_forward: unused parameter vars");
    return out;
}

// Convenience for evaluation paths: binds store values (EMA weights if asked
// and present) as constants and runs the forward pass.
inline TensorValue eval_forward(const ModelSpec& spec, const ParamStore& store, bool use_ema,
                                const TensorValue& x, const std::vector<double>& t) {
    nn::Tape tape;
    std::vector<nn::Var> vars;
    vars.reserve(store.size());
    for (size_t i = 0; i < store.size(); ++i) {
        const auto& ent = store.entry(i);
        vars.push_back(tape.constant(use_ema && ent.ema.numel() > 0 ? ent.ema : ent.value));
    }
    nn::Var out = model_forward(tape, spec, vars, tape.constant(x), t);
    return tape.val(out);
}

}  // namespace flowdn::models
