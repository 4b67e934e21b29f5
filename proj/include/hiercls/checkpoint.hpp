#pragma once

#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "hiercls/dataset.hpp"
#include "hiercls/error.hpp"
#include "hiercls/model.hpp"

namespace hiercls {

struct Checkpoint {
    ModelSpec spec;
    ParamSet params;
    Standardizer stats;
};

namespace detail {

inline void write_tensor(std::string& out, const std::string& name,
                         const Tensor& t) {
    out += "tensor " + name + " " + std::to_string(t.rank());
    for (std::size_t d : t.shape) out += " " + std::to_string(d);
    out += "\n";
    for (std::size_t i = 0; i < t.size(); ++i) {
        out += format_double(t.data[i]);
        out += (i + 1) % 8 == 0 || i + 1 == t.size() ? "\n" : " ";
    }
    if (t.size() == 0) out += "\n";
}

} // namespace detail

/// Versioned text format: a header describing the ModelSpec, then named
/// tensors (standardizer statistics and all parameters in layout order).
/// Values use %.17g, so save -> load reproduces every double bit-exactly.
inline std::string to_checkpoint_text(const Checkpoint& ckpt) {
    const ModelSpec& spec = ckpt.spec;
    std::string out = "hiercls checkpoint v1\n";
    out += "variant " + std::string(variant_name(spec.variant)) + "\n";
    out += "input_dim " + std::to_string(spec.input_dim) + "\n";
    out += "hidden";
    for (std::size_t h : spec.hidden) out += " " + std::to_string(h);
    out += "\n";
    out += "feature_width " + std::to_string(spec.feature_width) + "\n";
    out += "level_sizes";
    for (std::size_t c : spec.level_sizes) out += " " + std::to_string(c);
    out += "\n";
    out += "seed " + std::to_string(spec.seed) + "\n";
    detail::write_tensor(out, "standardizer.mean", ckpt.stats.mean);
    detail::write_tensor(out, "standardizer.scale", ckpt.stats.scale);
    for (const auto& p : ckpt.params.params)
        detail::write_tensor(out, p.name, p.value);
    return out;
}

inline Checkpoint from_checkpoint_text(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != "hiercls checkpoint v1")
        throw error("checkpoint: bad or missing header");

    Checkpoint ckpt;
    ModelSpec& spec = ckpt.spec;
    spec.hidden.clear();
    spec.level_sizes.clear();

    auto read_key = [&](const std::string& expect) -> std::istringstream {
        if (!std::getline(in, line))
            throw error("checkpoint: truncated before '" + expect + "'");
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        if (key != expect)
            throw error("checkpoint: expected '" + expect + "', got '" + key +
                        "'");
        return ls;
    };

    {
        auto ls = read_key("variant");
        std::string name;
        ls >> name;
        spec.variant = variant_from_name(name);
    }
    read_key("input_dim") >> spec.input_dim;
    {
        auto ls = read_key("hidden");
        std::size_t h;
        while (ls >> h) spec.hidden.push_back(h);
    }
    read_key("feature_width") >> spec.feature_width;
    {
        auto ls = read_key("level_sizes");
        std::size_t c;
        while (ls >> c) spec.level_sizes.push_back(c);
    }
    read_key("seed") >> spec.seed;
    spec.validate();

    auto read_tensor = [&](std::string* name) {
        std::string key;
        if (!(in >> key) || key != "tensor")
            throw error("checkpoint: expected a tensor record");
        std::size_t rank = 0;
        if (!(in >> *name >> rank))
            throw error("checkpoint: malformed tensor record");
        std::vector<std::size_t> shape(rank);
        std::size_t total = 1;
        for (auto& d : shape) {
            if (!(in >> d)) throw error("checkpoint: malformed tensor shape");
            total *= d;
        }
        Tensor t(shape);
        for (std::size_t i = 0; i < total; ++i)
            if (!(in >> t.data[i]))
                throw error("checkpoint: truncated tensor '" + *name + "'");
        return t;
    };

    std::string name;
    ckpt.stats.mean = read_tensor(&name);
    if (name != "standardizer.mean")
        throw error("checkpoint: expected standardizer.mean, got '" + name + "'");
    ckpt.stats.scale = read_tensor(&name);
    if (name != "standardizer.scale")
        throw error("checkpoint: expected standardizer.scale, got '" + name +
                    "'");

    const auto layout = detail::linear_layout(spec);
    for (const auto& l : layout) {
        Param w;
        w.value = read_tensor(&w.name);
        if (w.name != l.name + ".w")
            throw error("checkpoint: expected tensor '" + l.name + ".w', got '" +
                        w.name + "'");
        w.role = l.role;
        w.level = l.level;
        ckpt.params.params.push_back(std::move(w));

        Param b;
        b.value = read_tensor(&b.name);
        if (b.name != l.name + ".b")
            throw error("checkpoint: expected tensor '" + l.name + ".b', got '" +
                        b.name + "'");
        b.is_bias = true;
        b.role = l.role;
        b.level = l.level;
        ckpt.params.params.push_back(std::move(b));
    }
    return ckpt;
}

} // namespace hiercls
