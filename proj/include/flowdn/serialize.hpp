// JSON (de)serialization for specs plus the flatten/unflatten pair that turns
// nested spec objects into the flat dotted-key form used by config files.
#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"

#include "flowdn/datasets.hpp"
#include "flowdn/models.hpp"
#include "flowdn/oracle.hpp"
#include "flowdn/sampler.hpp"
#include "flowdn/tensor.hpp"

namespace flowdn::ser {

using json = nlohmann::json;

// nlohmann objects are key-sorted maps, so dump() is already canonical.
inline std::string canonical_dump(const json& j, int indent = 2) { return j.dump(indent); }

inline json flatten(const json& in) {
    json out = json::object();
    std::function<void(const json&, const std::string&)> walk = [&](const json& node,
                                                                    const std::string& prefix) {
        if (node.is_object()) {
            for (auto it = node.begin(); it != node.end(); ++it)
                walk(it.value(), prefix.empty() ? it.key() : prefix + "." + it.key());
        } else {
            out[prefix] = node;
        }
    };
    walk(in, "");
    return out;
}

inline json unflatten(const json& flat) {
    json out = json::object();
    for (auto it = flat.begin(); it != flat.end(); ++it) {
        const std::string& key = it.key();
        json* node = &out;
        size_t pos = 0;
        while (true) {
            const size_t dot = key.find('.', pos);
            if (dot == std::string::npos) {
                (*node)[key.substr(pos)] = it.value();
                break;
            }
            node = &(*node)[key.substr(pos, dot - pos)];
            pos = dot + 1;
        }
    }
    return out;
}

template <typename T>
T require(const json& j, const std::string& key) {
    if (!j.contains(key)) throw ConfigError("config: missing field '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError("config: bad value for '" + key + "': " + e.what());
    }
}

// ---- model spec ------------------------------------------------------------

inline json to_json(const models::ModelSpec& s) {
    json j;
    j["time_embed_dim"] = s.time_embed_dim;
    j["input_dim"] = s.input_dim;
    j["image_n"] = s.image_n;
    if (s.kind == models::ModelSpec::Kind::Mlp) {
        j["kind"] = "mlp";
        j["hidden_dims"] = s.mlp.hidden_dims;
        j["activation"] = models::format_activation(s.mlp.activation);
    } else {
        j["kind"] = "mixer";
        j["patch"] = s.mixer.patch;
        j["embed_dim"] = s.mixer.embed_dim;
        j["depth"] = s.mixer.depth;
        j["token_hidden"] = s.mixer.token_hidden;
        j["activation"] = models::format_activation(s.mixer.activation);
    }
    return j;
}

inline models::ModelSpec model_spec_from_json(const json& j) {
    models::ModelSpec s;
    const std::string kind = require<std::string>(j, "kind");
    s.time_embed_dim = require<int>(j, "time_embed_dim");
    s.input_dim = require<int>(j, "input_dim");
    s.image_n = require<int>(j, "image_n");
    if (kind == "mlp") {
        s.kind = models::ModelSpec::Kind::Mlp;
        s.mlp.hidden_dims = require<std::vector<int>>(j, "hidden_dims");
        s.mlp.activation = models::parse_activation(require<std::string>(j, "activation"));
    } else if (kind == "mixer") {
        s.kind = models::ModelSpec::Kind::Mixer;
        s.mixer.patch = require<int>(j, "patch");
        s.mixer.embed_dim = require<int>(j, "embed_dim");
        s.mixer.depth = require<int>(j, "depth");
        s.mixer.token_hidden = require<int>(j, "token_hidden");
        s.mixer.activation = models::parse_activation(require<std::string>(j, "activation"));
    } else {
        throw ConfigError("config: unknown model kind '" + kind + "'");
    }
    s.validate();
    return s;
}

// ---- dataset specs ---------------------------------------------------------

inline json to_json(const data::FourierManifoldSpec& s) {
    json j;
    j["grid_n"] = s.grid_n;
    j["modes"] = s.modes;
    j["selection"] = s.selection == data::ModeSelection::LowFreq ? "lowfreq" : "random";
    j["exclude_dc"] = s.exclude_dc;
    j["selection_seed"] = s.selection_seed;
    j["coeff_law"] = s.coeff_law == data::CoeffLaw::Gaussian ? "gaussian" : "uniform";
    j["coeff_scale"] = s.coeff_scale;
    j["tanh_alpha"] = s.tanh_alpha;
    j["dataset_seed"] = s.dataset_seed;
    return j;
}

inline data::FourierManifoldSpec fourier_spec_from_json(const json& j) {
    data::FourierManifoldSpec s;
    s.grid_n = require<int>(j, "grid_n");
    s.modes = require<int>(j, "modes");
    const std::string sel = require<std::string>(j, "selection");
    if (sel == "lowfreq")
        s.selection = data::ModeSelection::LowFreq;
    else if (sel == "random")
        s.selection = data::ModeSelection::SeededRandom;
    else
        throw ConfigError("config: unknown mode selection '" + sel + "'");
    s.exclude_dc = require<bool>(j, "exclude_dc");
    s.selection_seed = require<std::uint64_t>(j, "selection_seed");
    const std::string law = require<std::string>(j, "coeff_law");
    if (law == "gaussian")
        s.coeff_law = data::CoeffLaw::Gaussian;
    else if (law == "uniform")
        s.coeff_law = data::CoeffLaw::Uniform;
    else
        throw ConfigError("config: unknown coefficient law '" + law + "'");
    s.coeff_scale = require<double>(j, "coeff_scale");
    s.tanh_alpha = require<double>(j, "tanh_alpha");
    s.dataset_seed = require<std::uint64_t>(j, "dataset_seed");
    return s;
}

inline json to_json(const data::ModeSet& ms) {
    json j;
    j["grid_n"] = ms.grid_n;
    json reps = json::array();
    for (const data::ModeIndex& m : ms.representatives) reps.push_back(json::array({m.k, m.l}));
    j["representatives"] = reps;
    return j;
}

inline data::ModeSet mode_set_from_json(const json& j) {
    data::ModeSet ms;
    ms.grid_n = require<int>(j, "grid_n");
    for (const json& r : require<json>(j, "representatives")) {
        const data::ModeIndex m{r.at(0).get<int>(), r.at(1).get<int>()};
        ms.representatives.push_back(m);
        ms.support.push_back(m);
        const data::ModeIndex p = data::conjugate_partner(m, ms.grid_n);
        if (!(p == m)) ms.support.push_back(p);
    }
    std::sort(ms.support.begin(), ms.support.end());
    return ms;
}

inline json to_json(const oracle::GaussianDataSpec& s) {
    return json{{"tau", s.tau}, {"dim", s.dim}};
}

inline oracle::GaussianDataSpec gaussian_spec_from_json(const json& j) {
    return oracle::GaussianDataSpec(require<double>(j, "tau"), require<int>(j, "dim"));
}

inline json to_json(const data::Mixture2dSpec& s) {
    json centers = json::array();
    for (const auto& c : s.centers) centers.push_back(json::array({c[0], c[1]}));
    return json{{"centers", centers}, {"weights", s.weights}, {"stddev", s.stddev}};
}

inline data::Mixture2dSpec mixture_spec_from_json(const json& j) {
    data::Mixture2dSpec s;
    for (const json& c : require<json>(j, "centers"))
        s.centers.push_back({c.at(0).get<double>(), c.at(1).get<double>()});
    s.weights = require<std::vector<double>>(j, "weights");
    s.stddev = require<double>(j, "stddev");
    return s;
}

inline json to_json(const sampler::IntegratorConfig& c) {
    return json{{"method", sampler::format_method(c.method)},
                {"steps", c.steps},
                {"t_start", c.t_start},
                {"t_end", c.t_end},
                {"t_clamp", c.t_clamp}};
}

inline sampler::IntegratorConfig integrator_from_json(const json& j) {
    sampler::IntegratorConfig c;
    c.method = sampler::parse_method(require<std::string>(j, "method"));
    c.steps = require<int>(j, "steps");
    c.t_start = require<double>(j, "t_start");
    c.t_end = require<double>(j, "t_end");
    c.t_clamp = require<double>(j, "t_clamp");
    c.validate();
    return c;
}

}  // namespace flowdn::ser
