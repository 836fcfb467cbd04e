// Binary persistence. Checkpoints: magic "DNLB1\n", a length-prefixed JSON
// manifest (parameter names/shapes, model spec, config, meta), then raw and
// EMA parameter arrays as little-endian float64 in manifest order. Datasets:
// magic "DNDS1\n", length-prefixed JSON header, then row-major float64 images.
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <utility>
#include <vector>

#include "flowdn/optim.hpp"
#include "flowdn/serialize.hpp"
#include "flowdn/tensor.hpp"

namespace flowdn::io {

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian; big-endian hosts are unsupported");

using ser::json;

namespace detail {

inline void write_u64(std::ostream& os, std::uint64_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

inline std::uint64_t read_u64(std::istream& is, const std::string& path) {
    std::uint64_t v = 0;
    if (!is.read(reinterpret_cast<char*>(&v), sizeof v))
        throw IoError("truncated file: " + path);
    return v;
}

inline void write_doubles(std::ostream& os, const std::vector<double>& v) {
    os.write(reinterpret_cast<const char*>(v.data()),
             static_cast<std::streamsize>(v.size() * sizeof(double)));
}

inline void read_doubles(std::istream& is, std::vector<double>& v, const std::string& path) {
    if (!is.read(reinterpret_cast<char*>(v.data()),
                 static_cast<std::streamsize>(v.size() * sizeof(double))))
        throw IoError("truncated array data: " + path);
}

inline void expect_magic(std::istream& is, const char* magic, const std::string& path) {
    std::string got(std::strlen(magic), '\0');
    if (!is.read(got.data(), static_cast<std::streamsize>(got.size())) || got != magic)
        throw IoError("bad magic in " + path);
}

inline json read_json_block(std::istream& is, const std::string& path) {
    const std::uint64_t len = read_u64(is, path);
    if (len > (1ull << 30)) throw IoError("unreasonable header length in " + path);
    std::string text(len, '\0');
    if (!is.read(text.data(), static_cast<std::streamsize>(len)))
        throw IoError("truncated header in " + path);
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw IoError("bad header JSON in " + path + ": " + e.what());
    }
}

inline void write_json_block(std::ostream& os, const json& j) {
    const std::string text = ser::canonical_dump(j);
    write_u64(os, text.size());
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
}

}  // namespace detail

inline constexpr const char* kCheckpointMagic = "DNLB1\n";
inline constexpr const char* kDatasetMagic = "DNDS1\n";

// `extra` lands in the manifest unchanged (run config, training meta, ...).
inline void save_checkpoint(const std::string& path, const ParamStore& store, const json& extra) {
    json manifest = extra.is_object() ? extra : json::object();
    json params = json::array();
    bool has_ema = true;
    for (size_t i = 0; i < store.size(); ++i) {
        const auto& e = store.entry(i);
        params.push_back(json{{"name", e.name}, {"shape", e.value.shape}});
        if (e.ema.numel() == 0) has_ema = false;
    }
    manifest["params"] = params;
    manifest["has_ema"] = has_ema;
    manifest["step"] = store.step_count();
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open for write: " + path);
    os.write(kCheckpointMagic, 6);
    detail::write_json_block(os, manifest);
    for (size_t i = 0; i < store.size(); ++i) detail::write_doubles(os, store.entry(i).value.data);
    if (has_ema)
        for (size_t i = 0; i < store.size(); ++i) detail::write_doubles(os, store.entry(i).ema.data);
    if (!os) throw IoError("write failed: " + path);
}

struct LoadedCheckpoint {
    ParamStore store;
    json manifest;
};

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path);
    detail::expect_magic(is, kCheckpointMagic, path);
    LoadedCheckpoint out;
    out.manifest = detail::read_json_block(is, path);
    const json params = ser::require<json>(out.manifest, "params");
    const bool has_ema = ser::require<bool>(out.manifest, "has_ema");
    std::vector<std::pair<std::string, std::vector<int>>> entries;
    for (const json& p : params)
        entries.emplace_back(ser::require<std::string>(p, "name"),
                             ser::require<std::vector<int>>(p, "shape"));
    for (auto& [name, shape] : entries) {
        TensorValue v = TensorValue::zeros(shape);
        detail::read_doubles(is, v.data, path);
        out.store.add(name, std::move(v));
    }
    if (has_ema) {
        for (size_t i = 0; i < entries.size(); ++i) {
            TensorValue v = TensorValue::zeros(entries[i].second);
            detail::read_doubles(is, v.data, path);
            out.store.set_ema(i, std::move(v));
        }
    }
    out.store.set_step_count(ser::require<long>(out.manifest, "step"));
    return out;
}

// ---- dataset files ---------------------------------------------------------

inline void save_dataset(const std::string& path, const json& header, const TensorValue& data) {
    if (data.ndim() != 2) throw ShapeError("save_dataset: data must be [count, dim]");
    json h = header.is_object() ? header : json::object();
    h["count"] = data.rows();
    h["dim"] = data.cols();
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open for write: " + path);
    os.write(kDatasetMagic, 6);
    detail::write_json_block(os, h);
    detail::write_doubles(os, data.data);
    if (!os) throw IoError("write failed: " + path);
}

struct LoadedDataset {
    json header;
    TensorValue data;
};

inline LoadedDataset load_dataset(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path);
    detail::expect_magic(is, kDatasetMagic, path);
    LoadedDataset out;
    out.header = detail::read_json_block(is, path);
    const int count = ser::require<int>(out.header, "count");
    const int dim = ser::require<int>(out.header, "dim");
    if (count < 0 || dim < 1) throw IoError("bad dataset dims in " + path);
    out.data = TensorValue::zeros({count, dim});
    detail::read_doubles(is, out.data.data, path);
    return out;
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path);
    std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return text;
}

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open for write: " + path);
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!os) throw IoError("write failed: " + path);
}

}  // namespace flowdn::io
