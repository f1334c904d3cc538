#ifndef LPSV_RUNNER_HPP
#define LPSV_RUNNER_HPP

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "lpsv/errors.hpp"
#include "lpsv/harness.hpp"
#include "lpsv/io.hpp"
#include "lpsv/kernel.hpp"
#include "lpsv/lamperti.hpp"
#include "lpsv/model.hpp"
#include "lpsv/noise.hpp"
#include "lpsv/particle.hpp"
#include "lpsv/scenario.hpp"
#include "lpsv/spde.hpp"

namespace lpsv {

namespace detail {

// Draws initial (x, sigma) pairs matching InitialCondition.
inline std::vector<std::pair<double, double>> draw_initials(
    const InitialCondition& ic, std::size_t n, std::uint64_t seed) {
    std::vector<std::pair<double, double>> init(n);
    if (ic.kind == InitialCondition::Kind::Point) {
        for (auto& p : init) p = {ic.x0, ic.sigma0};
        return init;
    }
    NormalSampler rng(derive_stream_seed(seed, 99991));
    for (auto& p : init) {
        const double u = rng.uniform01();
        p.first = ic.x_scale * std::sqrt(-2.0 * std::log(1.0 - u));
        p.second = ic.y_mean + ic.y_std * rng();
    }
    return init;
}

// Grid initializer matching InitialCondition; a point initial is mollified to
// a few cells so the finite-difference solver can represent it.
inline std::function<double(double, double)> grid_initializer(
    const InitialCondition& ic, const SolverConfig& cfg) {
    if (ic.kind == InitialCondition::Kind::Product) {
        InitialCondition copy = ic;
        return [copy](double x, double y) { return copy.product_density(x, y); };
    }
    const double sx = std::max(3.0 * cfg.dx, 0.02);
    const double sy = std::max(3.0 * cfg.dy, 0.02);
    const double x0 = ic.x0, y0 = ic.sigma0;
    return [=](double x, double y) {
        if (x <= 0.0) return 0.0;
        return std::exp(-0.5 * (x - x0) * (x - x0) / (sx * sx)) *
               std::exp(-0.5 * (y - y0) * (y - y0) / (sy * sy));
    };
}

struct SolveOutput {
    std::vector<double> times;
    std::vector<double> loss;     // 1 - surviving mass, mixture-weighted
    DensityGrid final_grid;       // first coefficient's grid at the horizon
};

// Advances the SPDE through the common-noise grid; each noise step is split
// into CFL-compliant substeps with linearly apportioned increments.
inline SolveOutput solve_path(const Scenario& sc, const VolSpec& spec,
                              const CommonNoisePath& noise,
                              std::vector<SolverRun>* record = nullptr,
                              std::size_t snapshot_stride = 0) {
    const std::size_t n_coef = sc.coefficients.size();
    std::vector<std::vector<double>> masses(n_coef);
    SolveOutput out;
    SolverRun run;
    for (std::size_t ci = 0; ci < n_coef; ++ci) {
        // clamp the configured step to the stability bound before the solver
        // sees it; the probe carries dt = 0 so construction cannot be refused
        // for a step solve_path would have shortened anyway
        SolverConfig cfg = sc.solver;
        cfg.dt = 0.0;
        SpdeSolver probe(cfg, sc.coefficients[ci], spec);
        cfg.dt = std::min(sc.solver.dt, probe.cfl_bound());
        SpdeSolver solver(cfg, sc.coefficients[ci], spec);
        DensityGrid g = solver.init(grid_initializer(sc.initial, cfg));
        const double dt_noise = noise.dt;
        const std::size_t m = static_cast<std::size_t>(
            std::ceil(dt_noise / cfg.dt));
        const double dt_sub = dt_noise / static_cast<double>(m);
        masses[ci].push_back(survival_mass(g));
        if (ci == 0) {
            out.times.push_back(0.0);
            if (record && snapshot_stride > 0) {
                run.snapshots.push_back(g);
                run.snapshot_times.push_back(0.0);
            }
        }
        for (std::size_t n = 0; n < noise.n_steps; ++n) {
            const double dW = noise.increments_W0[n] / static_cast<double>(m);
            const double dB = noise.increments_B0[n] / static_cast<double>(m);
            for (std::size_t s = 0; s < m; ++s) solver.advance(g, dW, dB, dt_sub);
            masses[ci].push_back(survival_mass(g));
            if (ci == 0) {
                out.times.push_back(g.t);
                if (record && snapshot_stride > 0 &&
                    ((n + 1) % snapshot_stride == 0 || n + 1 == noise.n_steps)) {
                    run.snapshots.push_back(g);
                    run.snapshot_times.push_back(g.t);
                }
            }
        }
        if (ci == 0) out.final_grid = g;
    }
    std::vector<double> w = sc.weights;
    if (w.empty()) w.assign(n_coef, 1.0 / static_cast<double>(n_coef));
    out.loss = mixture_loss(masses, w);
    if (record && snapshot_stride > 0) {
        run.has_increments = true;
        record->push_back(std::move(run));
    }
    return out;
}

} // namespace detail

// Executes every requested task, writing artifacts into out_dir and the
// manifest last. Throws ConfigError/DomainError for validation problems and
// other exceptions for runtime failures; the CLI maps these to exit codes.
inline void run_scenario(const Scenario& sc_in, const std::string& config_text,
                         const std::filesystem::path& out_dir,
                         std::size_t n_threads = 1,
                         std::optional<std::uint64_t> seed_override = {}) {
    Scenario sc = sc_in;
    if (seed_override) sc.seed = *seed_override;
    sc.validate();
    std::filesystem::create_directories(out_dir);

    const VolSpec spec = sc.make_volspec();
    const double dt = sc.horizon / static_cast<double>(sc.n_steps);
    const std::uint64_t seed = sc.seed.value_or(0);
    const double rho3 = sc.coefficients.front().rho3;

    std::vector<std::string> files;
    std::vector<nlohmann::json> reports;
    std::optional<CommonNoisePath> noise;
    if (sc.has_task(Task::Simulate) || sc.has_task(Task::Solve) ||
        sc.has_task(Task::VolDensity))
        noise = generate_common_noise(dt, sc.n_steps, rho3, seed);

    std::vector<double> part_times, part_loss;
    if (sc.has_task(Task::Simulate)) {
        const auto init = detail::draw_initials(sc.initial, sc.particles, seed);
        std::vector<std::vector<double>> losses;
        SimulationResult last;
        for (std::size_t ci = 0; ci < sc.coefficients.size(); ++ci) {
            SimOptions opt;
            opt.bridge_correction = true;
            opt.record_stride = std::max<std::size_t>(1, sc.n_steps / 8);
            last = simulate_portfolio({sc.coefficients[ci]}, spec, init, *noise,
                                      derive_stream_seed(seed, 7000 + ci), opt);
            losses.push_back(last.loss);
            part_times = last.loss_times;
        }
        std::vector<double> w = sc.weights;
        if (w.empty()) w.assign(losses.size(), 1.0 / static_cast<double>(losses.size()));
        part_loss.assign(part_times.size(), 0.0);
        for (std::size_t ci = 0; ci < losses.size(); ++ci)
            for (std::size_t i = 0; i < part_loss.size(); ++i)
                part_loss[i] += w[ci] * losses[ci][i];
        write_loss_csv(out_dir / "loss.csv", part_times, part_loss);
        files.push_back("loss.csv");
        std::vector<EmpiricalSnapshot> snaps;
        for (const auto& st : last.states)
            snaps.push_back(make_snapshot(st, 0.0, sc.solver.x_max, sc.solver.y_min,
                                          sc.solver.y_max, 40, 40));
        write_snapshot_csv(out_dir / "snapshots.csv", snaps);
        files.push_back("snapshots.csv");
    }

    detail::SolveOutput solved;
    if (sc.has_task(Task::Solve)) {
        solved = detail::solve_path(sc, spec, *noise);
        write_loss_csv(out_dir / "spde_loss.csv", solved.times, solved.loss);
        files.push_back("spde_loss.csv");
        write_grid_csv(out_dir / "grid.csv", solved.final_grid);
        files.push_back("grid.csv");
        std::ofstream bin(out_dir / "grid.lpsv", std::ios::binary);
        dump_grid(solved.final_grid, bin);
        files.push_back("grid.lpsv");
    }

    if (sc.has_task(Task::Compare)) {
        const ComparisonReport rep = compare_loss_curves(
            part_times, part_loss, solved.times, solved.loss, sc.compare_tolerance);
        reports.push_back({{"report", "compare"},
                           {"label", sc.label},
                           {"metric", "sup |L_particle - L_spde|"},
                           {"observed", rep.observed},
                           {"t_at_sup", rep.t_at_sup},
                           {"mean_abs_diff", rep.mean_abs_diff},
                           {"tolerance", rep.tolerance},
                           {"passed", rep.passed}});
    }

    if (sc.has_task(Task::VolDensity)) {
        const auto& rq = sc.vol_density;
        const double sigma0 = sc.initial.kind == InitialCondition::Kind::Point
                                  ? sc.initial.sigma0
                                  : sc.initial.y_mean;
        const SampledDensity kde = conditional_vol_density(
            sc.coefficients.front(), spec, sigma0, *noise, rq.t, rq.n_inner,
            rq.bandwidth, derive_stream_seed(seed, 8001));
        {
            auto out = detail::open_out(out_dir / "vol_density.csv");
            out << "y,density\n";
            for (std::size_t i = 0; i < kde.y.size(); ++i)
                out << kde.y[i] << ',' << kde.values[i] << '\n';
        }
        files.push_back("vol_density.csv");
        nlohmann::json rec = {{"report", "vol-density"},
                              {"label", sc.label},
                              {"t", rq.t},
                              {"mass", kde.integral()}};
        if (spec.q_is_constant) {
            const GaussianLaw law = ou_conditional_density_oracle(
                sc.coefficients.front(), spec, sigma0, *noise, rq.t);
            double l1 = 0.0, sup = 0.0;
            for (std::size_t i = 0; i < kde.y.size(); ++i) {
                l1 += std::abs(kde.values[i] - law.density(kde.y[i]));
                sup = std::max(sup, kde.values[i]);
            }
            l1 *= kde.y[1] - kde.y[0];
            rec["oracle_mean"] = law.mean;
            rec["oracle_variance"] = law.variance;
            rec["l1_distance"] = l1;
            rec["kde_sup"] = sup;
        }
        reports.push_back(rec);
    }

    if (sc.has_task(Task::SmoothStudy)) {
        LampertiMap map(spec, sc.coefficients.front());
        const DensityGrid& g = solved.final_grid;
        auto rows = detail::grid_rows(g);
        std::vector<double> z_grid(g.ny);
        for (std::size_t k = 0; k < g.ny; ++k) z_grid[k] = g.y(k);
        std::vector<double> v_grid;
        const double v_lo = map.transform(z_grid.front());
        const double v_hi = map.transform(z_grid.back());
        for (int i = 0; i <= 128; ++i)
            v_grid.push_back(v_lo + (v_hi - v_lo) * i / 128.0);
        const auto rows_study =
            convergence_study(rows, z_grid, map, v_grid, sc.smooth_study.epsilons);
        for (const auto& r : rows_study)
            reports.push_back({{"report", "smooth-study"},
                               {"label", sc.label},
                               {"epsilon", r.epsilon},
                               {"l2_distance", r.distance}});
    }

    if (sc.has_task(Task::EnergyResidual)) {
        const auto& rq = sc.energy;
        LampertiMap map(spec, sc.coefficients.front());
        TransformedKernel kernel(rq.epsilon, map);
        std::vector<SolverRun> runs(rq.n_paths);
        std::vector<std::exception_ptr> errs(rq.n_paths);
        const std::size_t workers = std::max<std::size_t>(1, n_threads);
        std::vector<std::thread> pool;
        std::atomic<std::size_t> next{0};
        for (std::size_t w = 0; w < std::min(workers, rq.n_paths); ++w)
            pool.emplace_back([&] {
                for (std::size_t p = next.fetch_add(1); p < rq.n_paths;
                     p = next.fetch_add(1)) {
                    try {
                        const auto path_noise = generate_common_noise(
                            dt, sc.n_steps, rho3, derive_stream_seed(seed, 5000 + p));
                        std::vector<SolverRun> rec;
                        detail::solve_path(sc, spec, path_noise, &rec,
                                           rq.snapshot_stride);
                        runs[p] = std::move(rec.front());
                    } catch (...) {
                        errs[p] = std::current_exception();
                    }
                }
            });
        for (auto& th : pool) th.join();
        for (auto& e : errs)
            if (e) std::rethrow_exception(e);
        SpdeSolver solver(sc.solver, sc.coefficients.front(), spec);
        const DensityGrid U0 = solver.init(detail::grid_initializer(sc.initial, sc.solver));
        const auto res = energy_identity_residual(
            runs, sc.coefficients.front(), spec, kernel, U0,
            [](double x) { return std::sqrt(std::min(x, 1.0)); });
        nlohmann::json terms = nlohmann::json::object();
        for (const auto& [name, v] : res.terms) terms[name] = v;
        reports.push_back({{"report", "energy-residual"},
                           {"label", sc.label},
                           {"epsilon", rq.epsilon},
                           {"lhs", res.lhs},
                           {"rhs", res.rhs},
                           {"residual", res.residual},
                           {"terms", terms}});
    }

    if (!reports.empty()) {
        write_jsonl(out_dir / "reports.jsonl", reports);
        files.push_back("reports.jsonl");
    }
    std::vector<std::uint64_t> seeds;
    if (sc.seed) seeds.push_back(*sc.seed);
    write_manifest(out_dir, config_text, seeds, files);
}

// File-based entry point used by the CLI: returns 0 on success, 1 on
// validation failure, 2 on runtime failure, and prints a machine-readable
// error JSON on failure.
inline int run_scenario_file(const std::filesystem::path& config_path,
                             const std::optional<std::string>& out_override,
                             std::size_t n_threads,
                             std::optional<std::uint64_t> seed_override,
                             std::ostream& err, bool validate_only = false) {
    std::string text;
    try {
        std::ifstream in(config_path, std::ios::binary);
        if (!in) throw IoError("cannot open config: " + config_path.string());
        std::ostringstream ss;
        ss << in.rdbuf();
        text = ss.str();
        Scenario sc = parse_scenario_text(text);
        if (validate_only) return 0;
        const std::filesystem::path out_dir =
            out_override ? std::filesystem::path(*out_override)
                         : std::filesystem::path(sc.output_dir);
        run_scenario(sc, text, out_dir, n_threads, seed_override);
        return 0;
    } catch (const ConfigError& e) {
        err << nlohmann::json{{"error", "validation"}, {"message", e.what()}}.dump()
            << '\n';
        return 1;
    } catch (const DomainError& e) {
        err << nlohmann::json{{"error", "validation"}, {"message", e.what()}}.dump()
            << '\n';
        return 1;
    } catch (const std::exception& e) {
        err << nlohmann::json{{"error", "runtime"}, {"message", e.what()}}.dump()
            << '\n';
        return 2;
    }
}

} // namespace lpsv

#endif
