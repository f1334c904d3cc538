#ifndef LPSV_SCENARIO_HPP
#define LPSV_SCENARIO_HPP

#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "lpsv/errors.hpp"
#include "lpsv/model.hpp"
#include "lpsv/spde.hpp"

namespace lpsv {

enum class Task { Simulate, Solve, Compare, VolDensity, SmoothStudy, EnergyResidual };

inline Task parse_task(const std::string& name) {
    if (name == "simulate") return Task::Simulate;
    if (name == "solve") return Task::Solve;
    if (name == "compare") return Task::Compare;
    if (name == "vol-density") return Task::VolDensity;
    if (name == "smooth-study") return Task::SmoothStudy;
    if (name == "energy-residual") return Task::EnergyResidual;
    throw ConfigError("unknown task: " + name);
}

inline std::string task_name(Task t) {
    switch (t) {
        case Task::Simulate: return "simulate";
        case Task::Solve: return "solve";
        case Task::Compare: return "compare";
        case Task::VolDensity: return "vol-density";
        case Task::SmoothStudy: return "smooth-study";
        case Task::EnergyResidual: return "energy-residual";
    }
    return "?";
}

// Initial condition of the pair (X, sigma): either every asset at one point,
// or a smooth product density (Rayleigh-type bump in x, Gaussian in sigma)
// that both the particle sampler and the grid can represent.
struct InitialCondition {
    enum class Kind { Point, Product } kind = Kind::Point;
    double x0 = 0.5, sigma0 = 0.2;          // Point
    double x_scale = 0.5, y_mean = 0.2, y_std = 0.1;  // Product

    double product_density(double x, double y) const {
        if (x <= 0.0) return 0.0;
        const double px =
            x / (x_scale * x_scale) * std::exp(-0.5 * x * x / (x_scale * x_scale));
        const double py = std::exp(-0.5 * (y - y_mean) * (y - y_mean) /
                                   (y_std * y_std)) /
                          (y_std * std::sqrt(2.0 * M_PI));
        return px * py;
    }
};

struct VolDensityRequest {
    double t = 1.0;
    std::size_t n_inner = 10000;
    double bandwidth = 0.02;
};

struct SmoothStudyRequest {
    std::vector<double> epsilons{0.2, 0.1, 0.05, 0.025};
};

struct EnergyRequest {
    double epsilon = 0.1;
    std::size_t n_paths = 4;
    std::size_t snapshot_stride = 50;
};

struct Scenario {
    std::string label = "scenario";
    std::vector<CoefficientVector> coefficients;
    std::vector<double> weights;  // empty => single coefficient vector
    std::string vol_preset = "ou";
    double h_const = 0.3, q_const = 1.0;  // only for preset "const"
    InitialCondition initial;
    double horizon = 1.0;
    std::size_t n_steps = 1000;
    std::size_t particles = 1000;
    std::optional<std::uint64_t> seed;
    SolverConfig solver;
    std::vector<Task> tasks;
    std::string output_dir = "out";
    double compare_tolerance = 0.02;
    VolDensityRequest vol_density;
    SmoothStudyRequest smooth_study;
    EnergyRequest energy;

    VolSpec make_volspec() const {
        if (vol_preset == "const") return make_const_h_volspec(q_const, h_const);
        return make_volspec_preset(vol_preset);
    }

    bool has_task(Task t) const {
        for (Task x : tasks)
            if (x == t) return true;
        return false;
    }

    void validate() const {
        if (coefficients.empty()) throw ConfigError("scenario: no coefficients");
        for (const auto& c : coefficients) c.validate();
        if (!weights.empty()) {
            if (weights.size() != coefficients.size())
                throw ConfigError("scenario: weights/coefficients size mismatch");
            double s = 0.0;
            for (double w : weights) {
                if (w < 0.0) throw ConfigError("scenario: weights must be >= 0");
                s += w;
            }
            if (std::abs(s - 1.0) > 1e-12)
                throw ConfigError("scenario: weights must sum to 1 within 1e-12");
        }
        if (!(horizon > 0.0)) throw ConfigError("scenario: horizon must be > 0");
        if (n_steps == 0) throw ConfigError("scenario: n_steps must be > 0");
        if (tasks.empty()) throw ConfigError("scenario: no tasks requested");
        const bool stochastic =
            has_task(Task::Simulate) || has_task(Task::VolDensity) ||
            has_task(Task::EnergyResidual) || has_task(Task::Compare) ||
            (has_task(Task::Solve) &&
             (coefficients.front().rho1 != 0.0 || coefficients.front().rho2 != 0.0));
        if (stochastic && !seed)
            throw ConfigError("scenario: seed is required for stochastic tasks");
        if (has_task(Task::Compare) &&
            !(has_task(Task::Simulate) && has_task(Task::Solve)))
            throw ConfigError("scenario: compare requires simulate and solve");
        if (has_task(Task::SmoothStudy) && !has_task(Task::Solve))
            throw ConfigError("scenario: smooth-study requires solve");
        make_volspec();  // rejects unknown presets
    }
};

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& obj,
                                const std::set<std::string>& allowed,
                                const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!allowed.count(it.key()))
            throw ConfigError("unknown key \"" + it.key() + "\" in " + where);
}

inline CoefficientVector parse_coefficients(const nlohmann::json& j) {
    reject_unknown_keys(
        j, {"k", "theta", "xi", "r", "rho1", "rho2", "rho3", "rho"}, "coefficients");
    CoefficientVector c;
    c.k = j.at("k").get<double>();
    c.theta = j.at("theta").get<double>();
    c.xi = j.at("xi").get<double>();
    c.r = j.at("r").get<double>();
    c.rho1 = j.at("rho1").get<double>();
    c.rho2 = j.at("rho2").get<double>();
    c.rho3 = j.at("rho3").get<double>();
    c.rho = j.count("rho") ? j.at("rho").get<double>()
                           : c.xi * c.rho3 * c.rho1 * c.rho2;
    return c;
}

} // namespace detail

inline Scenario parse_scenario(const nlohmann::json& j) {
    detail::reject_unknown_keys(
        j,
        {"label", "coefficients", "weights", "vol_preset", "h_const", "q_const",
         "initial", "horizon", "n_steps", "particles", "seed", "solver", "tasks",
         "output_dir", "compare_tolerance", "vol_density", "smooth_study",
         "energy"},
        "scenario");
    Scenario s;
    if (j.count("label")) s.label = j.at("label").get<std::string>();
    const auto& jc = j.at("coefficients");
    if (jc.is_array())
        for (const auto& one : jc) s.coefficients.push_back(detail::parse_coefficients(one));
    else
        s.coefficients.push_back(detail::parse_coefficients(jc));
    if (j.count("weights")) s.weights = j.at("weights").get<std::vector<double>>();
    if (j.count("vol_preset")) s.vol_preset = j.at("vol_preset").get<std::string>();
    if (j.count("h_const")) s.h_const = j.at("h_const").get<double>();
    if (j.count("q_const")) s.q_const = j.at("q_const").get<double>();
    if (j.count("initial")) {
        const auto& ji = j.at("initial");
        detail::reject_unknown_keys(
            ji, {"type", "x0", "sigma0", "x_scale", "y_mean", "y_std"}, "initial");
        const std::string type =
            ji.count("type") ? ji.at("type").get<std::string>() : "point";
        if (type == "point") {
            s.initial.kind = InitialCondition::Kind::Point;
            if (ji.count("x0")) s.initial.x0 = ji.at("x0").get<double>();
            if (ji.count("sigma0")) s.initial.sigma0 = ji.at("sigma0").get<double>();
        } else if (type == "product") {
            s.initial.kind = InitialCondition::Kind::Product;
            if (ji.count("x_scale")) s.initial.x_scale = ji.at("x_scale").get<double>();
            if (ji.count("y_mean")) s.initial.y_mean = ji.at("y_mean").get<double>();
            if (ji.count("y_std")) s.initial.y_std = ji.at("y_std").get<double>();
            if (!(s.initial.x_scale > 0.0) || !(s.initial.y_std > 0.0))
                throw ConfigError("initial: x_scale and y_std must be > 0");
        } else {
            throw ConfigError("initial: unknown type \"" + type + "\"");
        }
    }
    if (j.count("horizon")) s.horizon = j.at("horizon").get<double>();
    if (j.count("n_steps")) s.n_steps = j.at("n_steps").get<std::size_t>();
    if (j.count("particles")) s.particles = j.at("particles").get<std::size_t>();
    if (j.count("seed")) s.seed = j.at("seed").get<std::uint64_t>();
    if (j.count("solver")) {
        const auto& js = j.at("solver");
        detail::reject_unknown_keys(
            js, {"dx", "dy", "dt", "x_max", "y_min", "y_max", "scheme", "cfl_safety"},
            "solver");
        if (js.count("dx")) s.solver.dx = js.at("dx").get<double>();
        if (js.count("dy")) s.solver.dy = js.at("dy").get<double>();
        if (js.count("dt")) s.solver.dt = js.at("dt").get<double>();
        if (js.count("x_max")) s.solver.x_max = js.at("x_max").get<double>();
        if (js.count("y_min")) s.solver.y_min = js.at("y_min").get<double>();
        if (js.count("y_max")) s.solver.y_max = js.at("y_max").get<double>();
        if (js.count("cfl_safety")) s.solver.cfl_safety = js.at("cfl_safety").get<double>();
        if (js.count("scheme")) {
            const std::string name = js.at("scheme").get<std::string>();
            if (name == "explicit") s.solver.scheme = Scheme::Explicit;
            else if (name == "lie") s.solver.scheme = Scheme::LieSplitting;
            else throw ConfigError("solver: unknown scheme \"" + name + "\"");
        }
    }
    for (const auto& name : j.at("tasks"))
        s.tasks.push_back(parse_task(name.get<std::string>()));
    if (j.count("output_dir")) s.output_dir = j.at("output_dir").get<std::string>();
    if (j.count("compare_tolerance"))
        s.compare_tolerance = j.at("compare_tolerance").get<double>();
    if (j.count("vol_density")) {
        const auto& jv = j.at("vol_density");
        detail::reject_unknown_keys(jv, {"t", "n_inner", "bandwidth"}, "vol_density");
        if (jv.count("t")) s.vol_density.t = jv.at("t").get<double>();
        if (jv.count("n_inner")) s.vol_density.n_inner = jv.at("n_inner").get<std::size_t>();
        if (jv.count("bandwidth")) s.vol_density.bandwidth = jv.at("bandwidth").get<double>();
    }
    if (j.count("smooth_study")) {
        const auto& jv = j.at("smooth_study");
        detail::reject_unknown_keys(jv, {"epsilons"}, "smooth_study");
        if (jv.count("epsilons"))
            s.smooth_study.epsilons = jv.at("epsilons").get<std::vector<double>>();
    }
    if (j.count("energy")) {
        const auto& jv = j.at("energy");
        detail::reject_unknown_keys(jv, {"epsilon", "n_paths", "snapshot_stride"},
                                    "energy");
        if (jv.count("epsilon")) s.energy.epsilon = jv.at("epsilon").get<double>();
        if (jv.count("n_paths")) s.energy.n_paths = jv.at("n_paths").get<std::size_t>();
        if (jv.count("snapshot_stride"))
            s.energy.snapshot_stride = jv.at("snapshot_stride").get<std::size_t>();
    }
    s.validate();
    return s;
}

inline Scenario parse_scenario_text(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    try {
        return parse_scenario(j);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config field error: ") + e.what());
    }
}

} // namespace lpsv

#endif
