#pragma once

// Run configuration, read from JSON. Every field has a default; unknown keys are rejected.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "relaxlab/ensemble.hpp"
#include "relaxlab/errors.hpp"
#include "relaxlab/fitting.hpp"
#include "relaxlab/persist.hpp"
#include "relaxlab/targets.hpp"
#include "relaxlab/time_series.hpp"

namespace relaxlab {

struct RunConfig {
    std::size_t dimension = 4000;
    double half_width = 30.0;
    double tau = 15.0;
    double epsilon = 0.029;
    std::vector<double> mu_list{0.1, 0.5, 1.0, 2.0};
    std::vector<TargetDynamics> targets{TargetDynamics::exponential(15.0), TargetDynamics::damped_oscillation(15.0),
                                        TargetDynamics::linear(15.0), TargetDynamics::gaussian(15.0)};
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
    double dt = 0.1;
    double t_max = 90.0;
    std::optional<double> alpha;  // freezes alpha instead of fitting it on the widest band
    std::optional<double> beta;   // skips the beta fit for every cell
    std::string output_dir = "relaxlab-out";
    double omega_max = 30.0;
    std::size_t n_bins = 8192;
    DiagonalMode diagonal = DiagonalMode::None;
    double tau_prime = 2.0;        // recurrence experiment
    double recurrence_time = 20.0;
    double recurrence_alpha = 0.05;
    std::optional<FitWindow> fit_window;  // default [0, 4 tau]
    double fidelity_window = 60.0;
    bool fidelity = true;
    bool store_matrices = true;
    std::size_t workers = 1;
    std::vector<std::size_t> convergence_dimensions{500, 1000, 2000, 4000};

    TimeGrid grid() const { return TimeGrid::covering(dt, t_max); }
    FitWindow window() const { return fit_window.value_or(FitWindow{0.0, 4.0 * tau}); }

    void validate() const {
        if (dimension < 2) throw ValidationError("config: dimension must be at least 2");
        if (!(half_width > 0.0)) throw ValidationError("config: half_width must be positive");
        if (!(tau > 0.0)) throw ValidationError("config: tau must be positive");
        if (!(epsilon > 0.0)) throw ValidationError("config: epsilon must be positive");
        if (mu_list.empty()) throw ValidationError("config: mu_list is empty");
        for (double mu : mu_list)
            if (!(mu > 0.0 && mu <= 2.0)) throw ValidationError("config: every mu must lie in (0, 2]");
        if (targets.empty()) throw ValidationError("config: no targets");
        std::set<std::string> names;
        for (const auto& t : targets) {
            t.validate();
            if (!names.insert(t.name()).second) throw ValidationError("config: duplicate target " + t.name());
        }
        if (seeds.empty()) throw ValidationError("config: seeds list is empty");
        if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size())
            throw ValidationError("config: duplicate seeds");
        grid();
        if (alpha && !(*alpha >= 0.0)) throw ValidationError("config: alpha must be >= 0");
        if (beta && !(*beta >= 0.0 && *beta <= 1.0)) throw ValidationError("config: beta must lie in [0, 1]");
        if (!(omega_max > 0.0)) throw ValidationError("config: omega_max must be positive");
        if (n_bins < 64) throw ValidationError("config: n_bins must be at least 64");
        if (!(tau_prime > 0.0) || !(recurrence_time >= 3.0 * tau_prime))
            throw ValidationError("config: recurrence needs tau_prime > 0 and T >= 3 tau_prime");
        if (!(recurrence_alpha >= 0.0)) throw ValidationError("config: recurrence alpha must be >= 0");
        const FitWindow w = window();
        if (!(w.t_hi > w.t_lo) || w.t_lo < 0.0 || w.t_hi > t_max + 1e-9) throw ValidationError("config: fit window outside the time grid");
        if (!(fidelity_window > 0.0) || fidelity_window > t_max + 1e-9) throw ValidationError("config: fidelity window outside the time grid");
        if (workers < 1) throw ValidationError("config: workers must be at least 1");
        if (dimension > (1u << 16)) throw ValidationError("config: dimension too large for dense matrices");
    }

    /// Everything except output location and parallelism, which never change results.
    json to_json() const {
        json j;
        j["dimension"] = dimension;
        j["half_width"] = half_width;
        j["tau"] = tau;
        j["epsilon"] = epsilon;
        j["mu_list"] = mu_list;
        json tg = json::array();
        for (const auto& t : targets) tg.push_back(relaxlab::to_json(t));
        j["targets"] = tg;
        j["seeds"] = seeds;
        j["grid"] = {{"dt", dt}, {"t_max", t_max}};
        j["alpha"] = alpha ? json(*alpha) : json(nullptr);
        j["beta"] = beta ? json(*beta) : json(nullptr);
        j["envelope"] = {{"omega_max", omega_max}, {"n_bins", n_bins}};
        j["diagonal_mode"] = std::string(to_string(diagonal));
        j["recurrence"] = {{"tau_prime", tau_prime}, {"T", recurrence_time}, {"alpha", recurrence_alpha}};
        j["fit_window"] = {window().t_lo, window().t_hi};
        j["fidelity"] = fidelity;
        j["fidelity_window"] = fidelity_window;
        j["store_matrices"] = store_matrices;
        j["convergence_dimensions"] = convergence_dimensions;
        return j;
    }
};

inline RunConfig config_from_json(const json& j) {
    static const std::set<std::string> known = {
        "dimension", "half_width", "tau", "epsilon", "mu_list", "targets", "seeds", "grid", "alpha", "beta",
        "output_dir", "envelope", "diagonal_mode", "recurrence", "fit_window", "fidelity", "fidelity_window",
        "store_matrices", "workers", "convergence_dimensions"};
    if (!j.is_object()) throw ValidationError("config: top level must be an object");
    for (const auto& [k, v] : j.items())
        if (!known.count(k)) throw ValidationError("config: unknown key '" + k + "'");
    RunConfig c;
    try {
        c.dimension = j.value("dimension", c.dimension);
        c.half_width = j.value("half_width", c.half_width);
        c.tau = j.value("tau", c.tau);
        c.epsilon = j.value("epsilon", c.epsilon);
        if (j.contains("mu_list")) c.mu_list = j.at("mu_list").get<std::vector<double>>();
        if (j.contains("targets")) {
            c.targets.clear();
            for (const auto& t : j.at("targets")) c.targets.push_back(target_from_json(t, c.tau));
        } else {
            for (auto& t : c.targets) t.tau = c.tau;
        }
        if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
        if (j.contains("grid")) {
            c.dt = j.at("grid").value("dt", c.dt);
            c.t_max = j.at("grid").value("t_max", c.t_max);
        }
        if (j.contains("alpha") && !j.at("alpha").is_null()) c.alpha = j.at("alpha").get<double>();
        if (j.contains("beta") && !j.at("beta").is_null()) c.beta = j.at("beta").get<double>();
        c.output_dir = j.value("output_dir", c.output_dir);
        if (j.contains("envelope")) {
            c.omega_max = j.at("envelope").value("omega_max", c.omega_max);
            c.n_bins = j.at("envelope").value("n_bins", c.n_bins);
        }
        if (j.contains("diagonal_mode")) c.diagonal = diagonal_mode_from_string(j.at("diagonal_mode").get<std::string>());
        if (j.contains("recurrence")) {
            const auto& r = j.at("recurrence");
            c.tau_prime = r.value("tau_prime", c.tau_prime);
            c.recurrence_time = r.value("T", c.recurrence_time);
            c.recurrence_alpha = r.value("alpha", c.recurrence_alpha);
        }
        if (j.contains("fit_window")) {
            const auto w = j.at("fit_window").get<std::vector<double>>();
            if (w.size() != 2) throw ValidationError("config: fit_window must be [t_lo, t_hi]");
            c.fit_window = FitWindow{w[0], w[1]};
        }
        c.fidelity = j.value("fidelity", c.fidelity);
        c.fidelity_window = j.value("fidelity_window", c.fidelity_window);
        c.store_matrices = j.value("store_matrices", c.store_matrices);
        c.workers = j.value("workers", c.workers);
        if (j.contains("convergence_dimensions")) c.convergence_dimensions = j.at("convergence_dimensions").get<std::vector<std::size_t>>();
    } catch (const json::exception& e) {
        throw ValidationError(std::string("config: ") + e.what());
    }
    c.validate();
    return c;
}

inline RunConfig load_config(const fs::path& path) {
    const std::string text = read_file(path);
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ValidationError("config " + path.string() + " is not valid JSON: " + e.what());
    }
    return config_from_json(j);
}

}  // namespace relaxlab
