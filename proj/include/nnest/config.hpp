#pragma once

#include <nnest/losses.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace nnest {

enum class Experiment { smooth_compare, eta_vs_etarho, enforce_bc, adaptive_quadrature, lshape };

inline std::string to_string(Experiment e)
{
    switch (e) {
    case Experiment::smooth_compare: return "smooth_compare";
    case Experiment::eta_vs_etarho: return "eta_vs_etarho";
    case Experiment::enforce_bc: return "enforce_bc";
    case Experiment::adaptive_quadrature: return "adaptive_quadrature";
    case Experiment::lshape: return "lshape";
    }
    return "unknown";
}

inline std::optional<Experiment> experiment_from_string(const std::string& s)
{
    for (Experiment e : {Experiment::smooth_compare, Experiment::eta_vs_etarho, Experiment::enforce_bc,
                         Experiment::adaptive_quadrature, Experiment::lshape})
        if (to_string(e) == s) return e;
    return std::nullopt;
}

struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/**
 * One experiment run. Every field has a per-experiment default; a config file overrides
 * individual fields. Mesh fields: `mesh_n` is the criss-cross subdivision of the unit square
 * (smooth_compare, eta_vs_etarho, adaptive_quadrature), `lshape_refinements` the number of uniform
 * refinements of the L-shape start mesh. enforce_bc always uses the graded boundary-layer mesh.
 */
struct RunConfig {
    Experiment experiment = Experiment::smooth_compare;
    int layers = 5;
    int width = 20;
    std::uint64_t seed = 1;
    std::vector<LossKind> losses{LossKind::wb, LossKind::br, LossKind::pmod, LossKind::pinn};
    int iterations = 1500;
    double loss_threshold = 0.0;
    int mesh_n = 4;
    int lshape_refinements = 2;
    double epsilon = 1e-2;
    bool adaptive = false;
    bool fixed_twin = false;  ///< also train on the fixed start mesh (adaptive experiments)
    double tau1 = 0.3;
    double tau2 = 0.7;
    int max_elements = 20000;
    int error_every = 10;
    std::uint64_t sampling_seed = 7;
    std::string output_dir = "nnest_out";

    static RunConfig defaults(Experiment e)
    {
        RunConfig c;
        c.experiment = e;
        switch (e) {
        case Experiment::smooth_compare: break;
        case Experiment::eta_vs_etarho: c.losses = {LossKind::wb, LossKind::wb_eta_only}; break;
        case Experiment::enforce_bc:
            c.width = 30;
            c.losses = {LossKind::wb};
            c.iterations = 3000;
            break;
        case Experiment::adaptive_quadrature:
            c.losses = {LossKind::wb};
            c.mesh_n = 1;
            c.iterations = 4000;
            c.adaptive = true;
            c.fixed_twin = true;
            break;
        case Experiment::lshape:
            c.layers = 8;
            c.losses = {LossKind::wb};
            c.iterations = 12000;
            c.adaptive = true;
            c.fixed_twin = true;
            c.tau1 = 0.2;
            c.tau2 = 0.75;
            break;
        }
        return c;
    }

    nlohmann::json to_json() const
    {
        std::vector<std::string> names;
        for (LossKind k : losses) names.push_back(to_string(k));
        return {{"experiment", to_string(experiment)},
                {"layers", layers},
                {"width", width},
                {"seed", seed},
                {"losses", names},
                {"iterations", iterations},
                {"loss_threshold", loss_threshold},
                {"mesh_n", mesh_n},
                {"lshape_refinements", lshape_refinements},
                {"epsilon", epsilon},
                {"adaptive", adaptive},
                {"fixed_twin", fixed_twin},
                {"tau1", tau1},
                {"tau2", tau2},
                {"max_elements", max_elements},
                {"error_every", error_every},
                {"sampling_seed", sampling_seed},
                {"output_dir", output_dir}};
    }
};

namespace detail {

/// 1-based line of the first occurrence of "key" as an object key in the raw text, or 0.
inline int line_of_key(const std::string& text, const std::string& key)
{
    const std::string quoted = '"' + key + '"';
    std::size_t pos = 0;
    while ((pos = text.find(quoted, pos)) != std::string::npos) {
        std::size_t after = pos + quoted.size();
        while (after < text.size() && std::isspace(static_cast<unsigned char>(text[after]))) ++after;
        if (after < text.size() && text[after] == ':')
            return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(pos), '\n'));
        pos = after;
    }
    return 0;
}

}  // namespace detail

/**
 * Parses a flat JSON object. The experiment key (if present) selects the defaults; every other
 * key overrides one field. Unknown keys, wrong types and out-of-range values raise config_error
 * naming the field and its line.
 */
inline RunConfig parse_config(const std::string& text)
{
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw config_error(std::string("config: malformed JSON: ") + e.what());
    }
    if (!j.is_object()) throw config_error("config: top level must be a JSON object");

    auto fail = [&](const std::string& key, const std::string& why) -> config_error {
        const int line = detail::line_of_key(text, key);
        return config_error("config line " + std::to_string(line) + ", field '" + key + "': " + why);
    };

    Experiment e = Experiment::smooth_compare;
    if (j.contains("experiment")) {
        if (!j["experiment"].is_string()) throw fail("experiment", "expected a string");
        const auto parsed = experiment_from_string(j["experiment"].get<std::string>());
        if (!parsed) throw fail("experiment", "unknown experiment '" + j["experiment"].get<std::string>() + "'");
        e = *parsed;
    }
    RunConfig c = RunConfig::defaults(e);

    auto get_int = [&](const std::string& key, int& out, int lo) {
        const auto& v = j[key];
        if (!v.is_number_integer()) throw fail(key, "expected an integer");
        const long long x = v.get<long long>();
        if (x < lo || x > 100000000) throw fail(key, "value out of range");
        out = static_cast<int>(x);
    };
    auto get_seed = [&](const std::string& key, std::uint64_t& out) {
        const auto& v = j[key];
        if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
            throw fail(key, "expected a non-negative integer");
        out = v.get<std::uint64_t>();
    };
    auto get_real = [&](const std::string& key, double& out, double lo, double hi, bool open) {
        const auto& v = j[key];
        if (!v.is_number()) throw fail(key, "expected a number");
        const double x = v.get<double>();
        if (open ? !(x > lo && x < hi) : !(x >= lo && x <= hi)) throw fail(key, "value out of range");
        out = x;
    };
    auto get_bool = [&](const std::string& key, bool& out) {
        if (!j[key].is_boolean()) throw fail(key, "expected true or false");
        out = j[key].get<bool>();
    };

    for (const auto& [key, value] : j.items()) {
        if (key == "experiment") continue;
        if (key == "layers") get_int(key, c.layers, 1);
        else if (key == "width") get_int(key, c.width, 1);
        else if (key == "seed") get_seed(key, c.seed);
        else if (key == "iterations") get_int(key, c.iterations, 1);
        else if (key == "loss_threshold") get_real(key, c.loss_threshold, 0.0, 1e300, false);
        else if (key == "mesh_n") get_int(key, c.mesh_n, 1);
        else if (key == "lshape_refinements") get_int(key, c.lshape_refinements, 0);
        else if (key == "epsilon") get_real(key, c.epsilon, 0.0, 1.0, true);
        else if (key == "adaptive") get_bool(key, c.adaptive);
        else if (key == "fixed_twin") get_bool(key, c.fixed_twin);
        else if (key == "tau1") get_real(key, c.tau1, 0.0, 1.0, true);
        else if (key == "tau2") get_real(key, c.tau2, 0.0, 1.0, true);
        else if (key == "max_elements") get_int(key, c.max_elements, 1);
        else if (key == "error_every") get_int(key, c.error_every, 0);
        else if (key == "sampling_seed") get_seed(key, c.sampling_seed);
        else if (key == "output_dir") {
            if (!value.is_string() || value.get<std::string>().empty()) throw fail(key, "expected a non-empty string");
            c.output_dir = value.get<std::string>();
        } else if (key == "losses") {
            if (!value.is_array() || value.empty()) throw fail(key, "expected a non-empty array of loss names");
            c.losses.clear();
            std::set<LossKind> seen;
            for (const auto& item : value) {
                if (!item.is_string()) throw fail(key, "expected loss names as strings");
                LossKind k;
                try {
                    k = loss_kind_from_string(item.get<std::string>());
                } catch (const std::invalid_argument& ex) {
                    throw fail(key, ex.what());
                }
                if (!seen.insert(k).second) throw fail(key, "duplicate loss '" + to_string(k) + "'");
                c.losses.push_back(k);
            }
        } else {
            throw fail(key, "unknown key");
        }
    }
    if (c.adaptive)
        for (LossKind k : c.losses)
            if (k == LossKind::pinn) throw fail("adaptive", "mesh adaptivity needs an estimator-based loss, not pinn");
    return c;
}

}  // namespace nnest
