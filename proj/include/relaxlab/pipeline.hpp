#pragma once

// Experiment orchestration: stages of independent tasks over a worker pool,
// resumable through per-task records, with seed-derived randomness only.
//
// Output layout (relative to the output directory):
//   models/<target>/seed-<s>.json [.bin]
//   perturbations/<target>/seed-<s>/mu-<mu>.json [.bin]
//   calibration/<target>/seed-<s>.csv, calibration/sigma_mu.csv
//   series/<target>/seed-<s>/{unperturbed, perturbed_mu-<mu>, fidelity_mu-<mu>}.csv + .json
//   kernels/<target>/seed-<s>/{unperturbed, perturbed_mu-<mu>}.csv + .json
//   fits/alpha.json, fits/<target>/seed-<s>/{joint, mu-<mu>}.json, fits/<target>/beta_mu.csv, fits/beta_mu.csv
//   predictions/<target>/seed-<s>/mu-<mu>.csv + .json
//   recurrence/{target, prediction_beta-0, prediction_beta-1}.csv, recurrence/report.json
//   report.json, status.json, run_manifest.json

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "relaxlab/config.hpp"
#include "relaxlab/ensemble.hpp"
#include "relaxlab/errors.hpp"
#include "relaxlab/evolve.hpp"
#include "relaxlab/fitting.hpp"
#include "relaxlab/linalg.hpp"
#include "relaxlab/memkernel.hpp"
#include "relaxlab/perturbation.hpp"
#include "relaxlab/persist.hpp"
#include "relaxlab/rng.hpp"
#include "relaxlab/targets.hpp"

#ifndef RELAXLAB_VERSION
#define RELAXLAB_VERSION "dev"
#endif

namespace relaxlab {

inline constexpr const char* software_version = RELAXLAB_VERSION;

// ---- scheduling ----

struct Task {
    std::string id;
    std::function<bool()> run;  // returns true when skipped as already complete
};

struct TaskOutcome {
    std::string id;
    std::string status;  // done, skipped, failed
    std::string error;
    int exit_code = 0;
    double seconds = 0.0;
};

/// Runs tasks on `workers` threads. Outcomes come back in task order.
inline std::vector<TaskOutcome> run_tasks(const std::vector<Task>& tasks, std::size_t workers) {
    std::vector<TaskOutcome> out(tasks.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        single_threaded_blas();
        for (std::size_t i = next++; i < tasks.size(); i = next++) {
            const auto t0 = std::chrono::steady_clock::now();
            TaskOutcome& o = out[i];
            o.id = tasks[i].id;
            try {
                o.status = tasks[i].run() ? "skipped" : "done";
            } catch (...) {
                const auto e = std::current_exception();
                o.status = "failed";
                o.exit_code = exit_code_for(e);
                try {
                    std::rethrow_exception(e);
                } catch (const std::exception& ex) {
                    o.error = ex.what();
                } catch (...) {
                    o.error = "unknown error";
                }
            }
            o.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        }
    };
    const std::size_t n = std::max<std::size_t>(1, std::min(workers, tasks.size()));
    if (n == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < n; ++w) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    return out;
}

// ---- layout ----

struct Layout {
    fs::path root;

    static std::string seed_dir(std::uint64_t seed) { return "seed-" + std::to_string(seed); }
    static std::string mu_tag(double mu) { return "mu-" + format_double(mu); }

    fs::path model_json(const std::string& t, std::uint64_t s) const { return root / "models" / t / (seed_dir(s) + ".json"); }
    fs::path model_bin(const std::string& t, std::uint64_t s) const { return root / "models" / t / (seed_dir(s) + ".bin"); }
    fs::path pert_json(const std::string& t, std::uint64_t s, double mu) const {
        return root / "perturbations" / t / seed_dir(s) / (mu_tag(mu) + ".json");
    }
    fs::path pert_bin(const std::string& t, std::uint64_t s, double mu) const {
        return root / "perturbations" / t / seed_dir(s) / (mu_tag(mu) + ".bin");
    }
    fs::path calibration(const std::string& t, std::uint64_t s) const { return root / "calibration" / t / (seed_dir(s) + ".csv"); }
    fs::path series_dir(const std::string& t, std::uint64_t s) const { return root / "series" / t / seed_dir(s); }
    fs::path unperturbed(const std::string& t, std::uint64_t s) const { return series_dir(t, s) / "unperturbed.csv"; }
    fs::path perturbed(const std::string& t, std::uint64_t s, double mu) const {
        return series_dir(t, s) / ("perturbed_" + mu_tag(mu) + ".csv");
    }
    fs::path fidelity(const std::string& t, std::uint64_t s, double mu) const {
        return series_dir(t, s) / ("fidelity_" + mu_tag(mu) + ".csv");
    }
    fs::path kernel_dir(const std::string& t, std::uint64_t s) const { return root / "kernels" / t / seed_dir(s); }
    fs::path fit_dir(const std::string& t, std::uint64_t s) const { return root / "fits" / t / seed_dir(s); }
    fs::path prediction(const std::string& t, std::uint64_t s, double mu) const {
        return root / "predictions" / t / seed_dir(s) / (mu_tag(mu) + ".csv");
    }
    fs::path state(const std::string& task_id) const {
        std::string f = task_id;
        for (char& c : f)
            if (c == '/' || c == ' ') c = '_';
        return root / ".state" / (f + ".json");
    }
};

inline fs::path sidecar(const fs::path& csv) {
    fs::path p = csv;
    p.replace_extension(".json");
    return p;
}

// ---- task records ----

inline std::string task_key(const RunConfig& cfg, const std::string& task_id, const json& extra = json::object()) {
    json k;
    k["version"] = software_version;
    k["config"] = cfg.to_json();
    k["task"] = task_id;
    k["extra"] = extra;
    return sha256_hex(k.dump());
}

/// True when a previous run recorded this task with the same key and every file still hashes the same.
inline bool task_complete(const Layout& lay, const std::string& id, const std::string& key) {
    const fs::path p = lay.state(id);
    if (!fs::exists(p)) return false;
    try {
        const json rec = read_json(p);
        if (rec.at("key").get<std::string>() != key) return false;
        for (const auto& [rel, hash] : rec.at("files").items()) {
            const fs::path f = lay.root / rel;
            if (!fs::exists(f) || sha256_file(f) != hash.get<std::string>()) return false;
        }
        return true;
    } catch (const std::exception&) {
        return false;
    }
}

inline void record_task(const Layout& lay, const std::string& id, const std::string& key, const std::vector<fs::path>& files) {
    json rec;
    rec["task"] = id;
    rec["key"] = key;
    json fj = json::object();
    for (const auto& f : files) fj[fs::relative(f, lay.root).generic_string()] = sha256_file(f);
    rec["files"] = fj;
    write_json(lay.state(id), rec);
}

// ---- seeds and models ----

inline std::uint64_t model_seed(std::uint64_t seed, const std::string& target) { return derive_seed(seed, "model/" + target); }
inline std::uint64_t perturbation_seed(std::uint64_t seed, const std::string& target) {
    return derive_seed(seed, "perturbation/" + target);
}

inline ModelSpec model_spec(const RunConfig& cfg, const TargetDynamics& target, std::uint64_t seed) {
    ModelSpec s;
    s.dimension = cfg.dimension;
    s.half_width = cfg.half_width;
    s.seed = model_seed(seed, target.name());
    s.target = target;
    s.diagonal = cfg.diagonal;
    return s;
}

struct BuiltModel {
    std::shared_ptr<const TailoredModel> model;
    SpectralEnvelope envelope;
};

inline BuiltModel build_model(const RunConfig& cfg, const TargetDynamics& target, std::uint64_t seed) {
    BuiltModel b;
    b.envelope = envelope_for(target, cfg.omega_max, cfg.n_bins);
    b.model = std::make_shared<const TailoredModel>(build_observable(model_spec(cfg, target, seed), b.envelope));
    return b;
}

inline Perturbation make_perturbation(const RunConfig& cfg, const TailoredModel& m, const std::string& target, std::uint64_t seed,
                                      double mu) {
    return build_perturbation(m, mu, cfg.epsilon, perturbation_seed(seed, target));
}

inline json series_sidecar(const RunConfig& cfg, const std::string& target, std::uint64_t seed, const std::string& kind,
                           std::optional<double> mu = std::nullopt) {
    json j;
    j["kind"] = kind;
    j["target"] = target;
    j["seed"] = seed;
    j["model_seed"] = model_seed(seed, target);
    if (mu) {
        j["perturbation_seed"] = perturbation_seed(seed, target);
        j["mu"] = *mu;
        j["epsilon"] = cfg.epsilon;
    }
    j["dimension"] = cfg.dimension;
    j["grid"] = to_json(cfg.grid());
    return j;
}

// ---- build stage ----

/// Model sidecar, optional blobs, perturbation sidecars and the sigma calibration table.
inline std::vector<fs::path> write_build_outputs(const RunConfig& cfg, const Layout& lay, const BuiltModel& bm,
                                                 const std::string& target, std::uint64_t seed) {
    const TailoredModel& m = *bm.model;
    std::vector<fs::path> files;

    json mj;
    mj["spec"] = to_json(m.spec);
    mj["seed"] = seed;
    mj["scale"] = m.scale;
    mj["h0_hs_norm"] = m.h0_hs_norm();
    mj["trace"] = m.a_matrix.trace();
    mj["symmetric_eta_choice"] = "zero diagonal mean, envelope independent of energy";
    mj["envelope"] = {{"omega_max", bm.envelope.omega_max},
                      {"n_bins", bm.envelope.values.size()},
                      {"clipped_mass", bm.envelope.clipped_mass},
                      {"total_mass", bm.envelope.total_mass},
                      {"warning", bm.envelope.warning ? json(*bm.envelope.warning) : json(nullptr)}};
    const SpectralReport sr = spectral_statistics(m);
    mj["spectrum"] = {{"kolmogorov_distance", sr.kolmogorov_distance},
                      {"bin_edges", sr.bin_edges},
                      {"counts", sr.counts},
                      {"semicircle", sr.semicircle}};
    if (cfg.store_matrices) {
        const fs::path bin = lay.model_bin(target, seed);
        write_model(bin, m);
        mj["blob"] = bin.filename().string();
        files.push_back(bin);
    }
    write_json(lay.model_json(target, seed), mj);
    files.push_back(lay.model_json(target, seed));

    std::vector<std::vector<double>> cal;
    for (double mu : cfg.mu_list) {
        const Perturbation p = make_perturbation(cfg, m, target, seed, mu);
        json pj;
        pj["mu"] = mu;
        pj["epsilon"] = p.epsilon;
        pj["sigma"] = p.sigma;
        pj["seed"] = p.seed;
        pj["hs_ratio"] = p.v_matrix.norm() / m.h0_hs_norm();
        pj["commutator_norm"] = commutator_norm(p, std::span<const double>(m.a_eigenvalues.data(), m.dimension()));
        pj["sigma_estimate"] = sigma_estimate(cfg.epsilon, mu, m.dimension());
        pj["sigma_alternative_prefactor"] = sigma_estimate_alternative_prefactor(cfg.epsilon, mu, m.dimension());
        if (cfg.store_matrices) {
            const fs::path bin = lay.pert_bin(target, seed, mu);
            write_perturbation(bin, p);
            pj["blob"] = bin.filename().string();
            files.push_back(bin);
        }
        write_json(lay.pert_json(target, seed, mu), pj);
        files.push_back(lay.pert_json(target, seed, mu));
        const double est = pj["sigma_estimate"].get<double>();
        cal.push_back({mu, p.sigma, est, p.sigma / est});
    }
    write_file_atomic(lay.calibration(target, seed), table_csv({"mu", "sigma_exact", "sigma_estimate", "ratio"}, cal));
    files.push_back(lay.calibration(target, seed));
    return files;
}

/// Loads the stored model when present, else rebuilds it from its seed after checking the build ran.
inline BuiltModel obtain_model(const RunConfig& cfg, const Layout& lay, const TargetDynamics& target, std::uint64_t seed) {
    const std::string name = target.name();
    if (!fs::exists(lay.model_json(name, seed)))
        throw IoError("missing model artifact " + lay.model_json(name, seed).string() + " (run build first)");
    const fs::path bin = lay.model_bin(name, seed);
    if (fs::exists(bin)) {
        BuiltModel b;
        b.model = std::make_shared<const TailoredModel>(read_model(bin));
        return b;
    }
    return build_model(cfg, target, seed);
}

inline Perturbation obtain_perturbation(const RunConfig& cfg, const Layout& lay, const TailoredModel& m, const std::string& target,
                                        std::uint64_t seed, double mu) {
    const fs::path bin = lay.pert_bin(target, seed, mu);
    if (fs::exists(bin)) return read_perturbation(bin);
    return make_perturbation(cfg, m, target, seed, mu);
}

// ---- evolve stage ----

inline std::vector<fs::path> write_evolve_outputs(const RunConfig& cfg, const Layout& lay, const BuiltModel& bm,
                                                  const std::string& target, std::uint64_t seed) {
    const TimeGrid grid = cfg.grid();
    std::vector<fs::path> files;
    auto emit = [&](const fs::path& csv, const TimeSeries& s, json side) {
        write_series_csv(csv, s);
        write_json(sidecar(csv), side);
        files.push_back(csv);
        files.push_back(sidecar(csv));
    };
    emit(lay.unperturbed(target, seed), autocorrelation_series(*bm.model, grid), series_sidecar(cfg, target, seed, "unperturbed"));
    for (double mu : cfg.mu_list) {
        Perturbation p = obtain_perturbation(cfg, lay, *bm.model, target, seed, mu);
        const PerturbedSystem sys = assemble(bm.model, p);
        json side = series_sidecar(cfg, target, seed, "perturbed", mu);
        side["sigma"] = p.sigma;
        side["commutator_norm"] = commutator_norm(p, std::span<const double>(bm.model->a_eigenvalues.data(), bm.model->dimension()));
        double sum_e = sys.h_eigenvalues.sum(), sum_eps = 0.0;
        for (double e : bm.model->spectrum.eigenvalues) sum_eps += e;
        side["trace_defect"] = sum_e - sum_eps - sys.trace_v;
        p.v_matrix.resize(0, 0);
        emit(lay.perturbed(target, seed, mu), autocorrelation_series(sys, grid), side);
        if (cfg.fidelity) {
            json fside = series_sidecar(cfg, target, seed, "fidelity", mu);
            fside["state"] = "maximally mixed";
            emit(lay.fidelity(target, seed, mu), fidelity_series(sys, grid), fside);
        }
    }
    return files;
}

// ---- stage drivers ----

struct StageResult {
    std::string stage;
    std::vector<TaskOutcome> outcomes;
    bool ok() const {
        return std::all_of(outcomes.begin(), outcomes.end(), [](const TaskOutcome& o) { return o.status != "failed"; });
    }
    int exit_code() const {
        for (const auto& o : outcomes)
            if (o.status == "failed") return o.exit_code;
        return 0;
    }
};

inline std::vector<Task> model_tasks(const RunConfig& cfg, const Layout& lay, bool do_build, bool do_evolve) {
    std::vector<Task> tasks;
    for (const auto& target : cfg.targets)
        for (std::uint64_t seed : cfg.seeds) {
            const std::string name = target.name();
            const std::string bid = "build/" + name + "/" + Layout::seed_dir(seed);
            const std::string eid = "evolve/" + name + "/" + Layout::seed_dir(seed);
            tasks.push_back({(do_build ? bid : eid), [&cfg, &lay, target, seed, name, bid, eid, do_build, do_evolve] {
                                 const std::string bkey = task_key(cfg, bid), ekey = task_key(cfg, eid);
                                 const bool build_done = !do_build || task_complete(lay, bid, bkey);
                                 const bool evolve_done = !do_evolve || task_complete(lay, eid, ekey);
                                 if (build_done && evolve_done) return true;
                                 BuiltModel bm;
                                 if (!build_done) {
                                     bm = build_model(cfg, target, seed);
                                     record_task(lay, bid, bkey, write_build_outputs(cfg, lay, bm, name, seed));
                                 }
                                 if (!evolve_done) {
                                     if (!bm.model) bm = obtain_model(cfg, lay, target, seed);
                                     record_task(lay, eid, ekey, write_evolve_outputs(cfg, lay, bm, name, seed));
                                 }
                                 return false;
                             }});
        }
    return tasks;
}

inline std::vector<Task> kernel_tasks(const RunConfig& cfg, const Layout& lay) {
    std::vector<Task> tasks;
    for (const auto& target : cfg.targets)
        for (std::uint64_t seed : cfg.seeds) {
            const std::string name = target.name();
            const std::string id = "kernel/" + name + "/" + Layout::seed_dir(seed);
            tasks.push_back({id, [&cfg, &lay, name, seed, id] {
                                 const std::string key = task_key(cfg, id);
                                 if (task_complete(lay, id, key)) return true;
                                 std::vector<fs::path> files;
                                 auto one = [&](const fs::path& src, const std::string& stem) {
                                     const TimeSeries a = read_series_csv(src);
                                     const MemoryKernel k = kernel_from_dynamics(a);
                                     const TimeSeries back = dynamics_from_kernel(k, a[0], a.grid);
                                     double resid = 0.0;
                                     for (std::size_t i = 0; i < a.size(); ++i) resid = std::max(resid, std::abs(back[i] - a[i]));
                                     const fs::path csv = lay.kernel_dir(name, seed) / (stem + ".csv");
                                     write_kernel_csv(csv, k);
                                     json side;
                                     side["source"] = fs::relative(src, lay.root).generic_string();
                                     side["local_coefficient"] = k.local_coefficient;
                                     side["round_trip_residual"] = resid;
                                     side["dt"] = k.dt;
                                     side["samples"] = k.values.size();
                                     write_json(sidecar(csv), side);
                                     files.push_back(csv);
                                     files.push_back(sidecar(csv));
                                 };
                                 one(lay.unperturbed(name, seed), "unperturbed");
                                 for (double mu : cfg.mu_list) one(lay.perturbed(name, seed, mu), "perturbed_" + Layout::mu_tag(mu));
                                 record_task(lay, id, key, files);
                                 return false;
                             }});
        }
    return tasks;
}

inline json fit_to_json(const FitResult& r) {
    json j;
    j["alpha"] = r.params.alpha;
    j["beta"] = r.params.beta;
    j["rms"] = r.rms_residual;
    j["window"] = {r.window.t_lo, r.window.t_hi};
    j["degenerate"] = r.degenerate;
    j["refinement_failed"] = r.refinement_failed;
    return j;
}

/// The band width on which alpha is fitted: the widest one in the grid.
inline double widest_mu(const RunConfig& cfg) { return *std::max_element(cfg.mu_list.begin(), cfg.mu_list.end()); }

/// Targets whose joint fits determine alpha. Pure exponentials only fix the product alpha beta.
inline std::vector<std::string> alpha_targets(const RunConfig& cfg) {
    std::vector<std::string> out;
    for (const auto& t : cfg.targets)
        if (t.kind != TargetKind::Exponential) out.push_back(t.name());
    if (out.empty())
        for (const auto& t : cfg.targets) out.push_back(t.name());
    return out;
}

inline std::vector<Task> joint_fit_tasks(const RunConfig& cfg, const Layout& lay) {
    std::vector<Task> tasks;
    const double mu = widest_mu(cfg);
    for (const auto& name : alpha_targets(cfg))
        for (std::uint64_t seed : cfg.seeds) {
            const std::string id = "fit-joint/" + name + "/" + Layout::seed_dir(seed);
            tasks.push_back({id, [&cfg, &lay, name, seed, id, mu] {
                                 const std::string key = task_key(cfg, id);
                                 if (task_complete(lay, id, key)) return true;
                                 const TimeSeries a = read_series_csv(lay.unperturbed(name, seed));
                                 const TimeSeries at = read_series_csv(lay.perturbed(name, seed, mu));
                                 json j = fit_to_json(fit_params(a, at, std::nullopt, cfg.window()));
                                 j["mu"] = mu;
                                 const fs::path out = lay.fit_dir(name, seed) / "joint.json";
                                 write_json(out, j);
                                 record_task(lay, id, key, {out});
                                 return false;
                             }});
        }
    return tasks;
}

inline json select_alpha(const RunConfig& cfg, const Layout& lay) {
    json j;
    if (cfg.alpha) {
        j["alpha"] = *cfg.alpha;
        j["source"] = "config";
        return j;
    }
    std::vector<double> samples;
    json per = json::array();
    for (const auto& name : alpha_targets(cfg))
        for (std::uint64_t seed : cfg.seeds) {
            const json f = read_json(lay.fit_dir(name, seed) / "joint.json");
            samples.push_back(f.at("alpha").get<double>());
            per.push_back({{"target", name}, {"seed", seed}, {"alpha", samples.back()}, {"beta", f.at("beta")}, {"rms", f.at("rms")}});
        }
    j["alpha"] = median(samples);
    j["source"] = "median of joint fits at mu = " + format_double(widest_mu(cfg));
    j["joint_fits"] = per;
    return j;
}

inline std::vector<Task> cell_fit_tasks(const RunConfig& cfg, const Layout& lay, double alpha) {
    std::vector<Task> tasks;
    for (const auto& target : cfg.targets)
        for (std::uint64_t seed : cfg.seeds) {
            const std::string name = target.name();
            const std::string id = "fit/" + name + "/" + Layout::seed_dir(seed);
            tasks.push_back({id, [&cfg, &lay, name, seed, id, alpha] {
                                 const std::string key = task_key(cfg, id, json{{"alpha", alpha}});
                                 if (task_complete(lay, id, key)) return true;
                                 std::vector<fs::path> files;
                                 const TimeSeries a = read_series_csv(lay.unperturbed(name, seed));
                                 for (double mu : cfg.mu_list) {
                                     const TimeSeries at = read_series_csv(lay.perturbed(name, seed, mu));
                                     FitResult r;
                                     TimeSeries pred;
                                     if (cfg.beta) {
                                         // both parameters frozen: only the residual is measured
                                         r.params = {alpha, *cfg.beta};
                                         r.window = cfg.window();
                                         pred = predict_perturbed(a, r.params);
                                         double s = 0.0;
                                         std::size_t cnt = 0;
                                         for (std::size_t i = 0; i < a.size(); ++i)
                                             if (a.t(i) >= r.window.t_lo - 1e-12 && a.t(i) <= r.window.t_hi + 1e-12) {
                                                 s += (pred[i] - at[i]) * (pred[i] - at[i]);
                                                 ++cnt;
                                             }
                                         r.rms_residual = std::sqrt(s / static_cast<double>(cnt));
                                     } else {
                                         r = fit_params(a, at, alpha, cfg.window());
                                         pred = predict_perturbed(a, r.params);
                                     }
                                     json j = fit_to_json(r);
                                     j["mu"] = mu;
                                     j["alpha_fixed"] = true;
                                     const fs::path fj = lay.fit_dir(name, seed) / (Layout::mu_tag(mu) + ".json");
                                     write_json(fj, j);
                                     const fs::path pc = lay.prediction(name, seed, mu);
                                     write_series_csv(pc, pred);
                                     json side = series_sidecar(cfg, name, seed, "prediction", mu);
                                     side["alpha"] = r.params.alpha;
                                     side["beta"] = r.params.beta;
                                     write_json(sidecar(pc), side);
                                     files.insert(files.end(), {fj, pc, sidecar(pc)});
                                 }
                                 record_task(lay, id, key, files);
                                 return false;
                             }});
        }
    return tasks;
}

/// (mu, median beta, median rms) per target, written as CSV; the exponential table doubles as fits/beta_mu.csv.
inline void write_beta_tables(const RunConfig& cfg, const Layout& lay) {
    std::string headline;
    for (const auto& target : cfg.targets) {
        const std::string name = target.name();
        std::vector<std::vector<double>> rows;
        for (double mu : cfg.mu_list) {
            std::vector<double> b, r;
            for (std::uint64_t seed : cfg.seeds) {
                const json f = read_json(lay.fit_dir(name, seed) / (Layout::mu_tag(mu) + ".json"));
                b.push_back(f.at("beta").get<double>());
                r.push_back(f.at("rms").get<double>());
            }
            rows.push_back({mu, median(b), median(r)});
        }
        const std::string csv = table_csv({"mu", "beta", "rms"}, rows);
        write_file_atomic(lay.root / "fits" / name / "beta_mu.csv", csv);
        if (headline.empty() || target.kind == TargetKind::Exponential) headline = csv;
    }
    write_file_atomic(lay.root / "fits" / "beta_mu.csv", headline);
}

inline json run_recurrence(const RunConfig& cfg, const Layout& lay) {
    const TargetDynamics rt = TargetDynamics::recurrence(cfg.tau_prime, cfg.recurrence_time);
    const TimeGrid grid = cfg.grid();
    std::vector<double> v(grid.n_steps);
    // the revival tail lifts g(0) slightly above one
    const double g0 = evaluate_target(rt, 0.0);
    for (std::size_t i = 0; i < grid.n_steps; ++i) v[i] = evaluate_target(rt, grid.t(i)) / g0;
    const TimeSeries a_r(grid, std::move(v));
    write_series_csv(lay.root / "recurrence" / "target.csv", a_r);
    json rep;
    rep["tau_prime"] = cfg.tau_prime;
    rep["T"] = cfg.recurrence_time;
    rep["alpha"] = cfg.recurrence_alpha;
    json cases = json::array();
    for (double beta : {0.0, 1.0}) {
        const RecurrenceReport r = recurrence_check(a_r, {cfg.recurrence_alpha, beta}, cfg.tau_prime, cfg.recurrence_time);
        write_series_csv(lay.root / "recurrence" / ("prediction_beta-" + format_double(beta) + ".csv"), r.prediction);
        cases.push_back({{"beta", beta},
                         {"max_convolution", r.max_convolution},
                         {"convolution_bound", r.convolution_bound},
                         {"convolution_ok", r.convolution_ok},
                         {"suppression_ratio", r.suppression_ratio},
                         {"expected_suppression", r.expected_suppression},
                         {"suppression_ok", r.suppression_ok},
                         {"max_deviation", r.max_deviation},
                         {"deviation_budget", r.deviation_budget},
                         {"deviation_ok", r.deviation_ok}});
    }
    rep["cases"] = cases;
    write_json(lay.root / "recurrence" / "report.json", rep);
    return rep;
}

// ---- report ----

inline json summarize(const std::vector<double>& v) {
    json j;
    j["per_seed"] = v;
    j["median"] = median(v);
    j["max"] = *std::max_element(v.begin(), v.end());
    j["min"] = *std::min_element(v.begin(), v.end());
    return j;
}

/// Aggregates every stage's outputs into report.json.
inline json build_report(const RunConfig& cfg, const Layout& lay) {
    const TimeGrid grid = cfg.grid();
    const FitWindow win = cfg.window();
    json rep;
    rep["dimension"] = cfg.dimension;
    rep["seeds"] = cfg.seeds;
    rep["mu_list"] = cfg.mu_list;

    json tailoring, semicircle, cells, stability, ordering, fidelity, kernel, commutator;
    double kernel_max = 0.0;
    std::size_t kernel_count = 0;
    std::map<double, std::vector<double>> comm_by_mu;
    for (const auto& target : cfg.targets) {
        const std::string name = target.name();
        std::vector<double> tail, ks;
        for (std::uint64_t seed : cfg.seeds) {
            const TimeSeries c = read_series_csv(lay.unperturbed(name, seed));
            double d = 0.0;
            for (std::size_t i = 0; i < c.size() && c.t(i) <= 3.0 * target.tau + 1e-9; ++i)
                d = std::max(d, std::abs(c[i] - evaluate_target(target, c.t(i))));
            tail.push_back(d);
            ks.push_back(read_json(lay.model_json(name, seed)).at("spectrum").at("kolmogorov_distance").get<double>());
            const json kj = read_json(lay.kernel_dir(name, seed) / "unperturbed.json");
            kernel_max = std::max(kernel_max, kj.at("round_trip_residual").get<double>());
            ++kernel_count;
        }
        tailoring[name] = summarize(tail);
        semicircle[name] = summarize(ks);

        for (double mu : cfg.mu_list) {
            const std::string mk = format_double(mu);
            std::vector<double> dev, viol, rate, rms, beta, comm;
            for (std::uint64_t seed : cfg.seeds) {
                const TimeSeries c = read_series_csv(lay.unperturbed(name, seed));
                const TimeSeries ct = read_series_csv(lay.perturbed(name, seed, mu));
                double d = 0.0, v = -1.0;
                for (std::size_t i = 0; i < c.size() && c.t(i) <= win.t_hi + 1e-9; ++i) {
                    if (c.t(i) < win.t_lo - 1e-9) continue;
                    d = std::max(d, std::abs(ct[i] - c[i]));
                    v = std::max(v, std::abs(ct[i]) - std::abs(c[i]));
                }
                dev.push_back(d);
                viol.push_back(v);
                if (cfg.fidelity) rate.push_back(fit_exponential_rate(read_series_csv(lay.fidelity(name, seed, mu)), 0.0, cfg.fidelity_window));
                const json fj = read_json(lay.fit_dir(name, seed) / (Layout::mu_tag(mu) + ".json"));
                rms.push_back(fj.at("rms").get<double>());
                beta.push_back(fj.at("beta").get<double>());
                const json kj = read_json(lay.kernel_dir(name, seed) / ("perturbed_" + Layout::mu_tag(mu) + ".json"));
                kernel_max = std::max(kernel_max, kj.at("round_trip_residual").get<double>());
                ++kernel_count;
                const double cn = read_json(sidecar(lay.perturbed(name, seed, mu))).at("commutator_norm").get<double>();
                comm.push_back(cn);
                comm_by_mu[mu].push_back(cn);
            }
            stability[name][mk] = summarize(dev);
            ordering[name][mk] = summarize(viol);
            if (cfg.fidelity) fidelity[name][mk] = summarize(rate);
            cells[name][mk] = {{"rms", summarize(rms)}, {"beta", summarize(beta)}};
            commutator[name][mk] = summarize(comm);
        }
    }
    rep["tailoring"] = tailoring;
    rep["semicircle"] = semicircle;
    rep["deviation"] = stability;
    rep["ordering_violation"] = ordering;
    rep["fidelity_rate"] = fidelity;
    rep["heuristic"] = cells;
    rep["commutator_norm"] = commutator;
    rep["kernel_round_trip"] = {{"max_residual", kernel_max}, {"series", kernel_count}};
    rep["alpha"] = read_json(lay.root / "fits" / "alpha.json");
    {
        json rows = json::array();
        for (const auto& r : read_table_csv(lay.root / "fits" / "beta_mu.csv", {"mu", "beta", "rms"}))
            rows.push_back({{"mu", r[0]}, {"beta", r[1]}, {"rms", r[2]}});
        rep["beta_curve"] = rows;
    }

    // sigma calibration: medians over every model
    std::vector<std::vector<double>> cal_rows;
    json cal = json::array();
    std::vector<double> ratios;
    for (std::size_t k = 0; k < cfg.mu_list.size(); ++k) {
        std::vector<double> ex, est, ra;
        for (const auto& target : cfg.targets)
            for (std::uint64_t seed : cfg.seeds) {
                const auto t = read_table_csv(lay.calibration(target.name(), seed), {"mu", "sigma_exact", "sigma_estimate", "ratio"});
                ex.push_back(t.at(k)[1]);
                est.push_back(t.at(k)[2]);
                ra.push_back(t.at(k)[3]);
            }
        const double mu = cfg.mu_list[k];
        cal_rows.push_back({mu, median(ex), median(est), median(ra)});
        ratios.push_back(median(ra));
        cal.push_back({{"mu", mu},
                       {"sigma_exact", median(ex)},
                       {"sigma_estimate", median(est)},
                       {"ratio", median(ra)},
                       {"sigma_alternative_prefactor", sigma_estimate_alternative_prefactor(cfg.epsilon, mu, cfg.dimension)}});
    }
    write_file_atomic(lay.root / "calibration" / "sigma_mu.csv", table_csv({"mu", "sigma_exact", "sigma_estimate", "ratio"}, cal_rows));
    double mean = 0.0, var = 0.0;
    for (double r : ratios) mean += r / static_cast<double>(ratios.size());
    for (double r : ratios) var += (r - mean) * (r - mean) / static_cast<double>(ratios.size());
    rep["calibration"] = {{"rows", cal},
                          {"ratio_cv", std::sqrt(var) / mean},
                          {"closed_form_widest_band", 30.0 * cfg.epsilon / std::sqrt(static_cast<double>(cfg.dimension))},
                          {"note", "sigma_alternative_prefactor is the 5 pi closed form; it disagrees with the derivation-consistent estimate"}};
    json comm_med;
    for (const auto& [mu, v] : comm_by_mu) comm_med[format_double(mu)] = median(v);
    rep["commutator_norm_median"] = comm_med;
    if (fs::exists(lay.root / "recurrence" / "report.json")) rep["recurrence"] = read_json(lay.root / "recurrence" / "report.json");
    rep["grid"] = to_json(grid);
    return rep;
}

// ---- manifest ----

inline void write_manifest(const RunConfig& cfg, const Layout& lay, const std::string& command, double seconds,
                           const std::vector<StageResult>& stages) {
    json m;
    m["software"] = {{"name", "relaxlab"}, {"version", software_version}};
    m["command"] = command;
    m["config"] = cfg.to_json();
    json seeds = json::object();
    for (const auto& t : cfg.targets)
        for (std::uint64_t s : cfg.seeds)
            seeds[t.name() + "/" + Layout::seed_dir(s)] = {{"model", model_seed(s, t.name())}, {"perturbation", perturbation_seed(s, t.name())}};
    m["artifact_seeds"] = seeds;
    json timing = json::object();
    timing["total_seconds"] = seconds;
    for (const auto& st : stages) {
        double s = 0.0;
        for (const auto& o : st.outcomes) s += o.seconds;
        timing[st.stage] = s;
    }
    m["timing"] = timing;
    json files = json::object();
    std::vector<fs::path> all;
    if (fs::exists(lay.root))
        for (const auto& e : fs::recursive_directory_iterator(lay.root)) {
            if (!e.is_regular_file()) continue;
            const std::string rel = fs::relative(e.path(), lay.root).generic_string();
            if (rel.rfind(".state/", 0) == 0 || rel == "run_manifest.json" || rel.find(".tmp.") != std::string::npos) continue;
            all.push_back(e.path());
        }
    std::sort(all.begin(), all.end());
    for (const auto& p : all) files[fs::relative(p, lay.root).generic_string()] = sha256_file(p);
    m["files"] = files;
    write_json(lay.root / "run_manifest.json", m);
}

inline void write_status(const Layout& lay, const std::vector<StageResult>& stages) {
    json s = json::array();
    for (const auto& st : stages)
        for (const auto& o : st.outcomes)
            s.push_back({{"stage", st.stage}, {"task", o.id}, {"status", o.status}, {"error", o.error}, {"exit_code", o.exit_code}});
    write_json(lay.root / "status.json", s);
}

// ---- commands ----

enum class Command { Build, Evolve, Kernel, Fit, Recurrence, Report, Sweep, Convergence };

inline std::string_view to_string(Command c) {
    switch (c) {
        case Command::Build: return "build";
        case Command::Evolve: return "evolve";
        case Command::Kernel: return "kernel";
        case Command::Fit: return "fit";
        case Command::Recurrence: return "recurrence";
        case Command::Report: return "report";
        case Command::Sweep: return "sweep";
        case Command::Convergence: return "convergence";
    }
    return "unknown";
}

struct CommandResult {
    int exit_code = 0;
    std::vector<StageResult> stages;
    std::string message;
};

namespace detail {

inline StageResult single_step(const std::string& stage, const std::function<void()>& fn) {
    return {stage, run_tasks({Task{stage, [&] {
                                      fn();
                                      return false;
                                  }}},
                             1)};
}

}  // namespace detail

inline CommandResult run_convergence(const RunConfig& cfg, const Layout& lay) {
    CommandResult res;
    const TargetDynamics target = cfg.targets.front();
    const std::uint64_t seed = cfg.seeds.front();
    const double mu = widest_mu(cfg);
    std::vector<Task> tasks;
    std::vector<std::vector<double>> rows(cfg.convergence_dimensions.size());
    for (std::size_t k = 0; k < cfg.convergence_dimensions.size(); ++k) {
        const std::size_t n = cfg.convergence_dimensions[k];
        tasks.push_back({"convergence/n-" + std::to_string(n), [&cfg, &rows, k, n, target, seed, mu] {
                             RunConfig c = cfg;
                             c.dimension = n;
                             const BuiltModel bm = build_model(c, target, seed);
                             const TimeGrid grid = c.grid();
                             const TimeSeries a = autocorrelation_series(*bm.model, grid);
                             double d = 0.0;
                             for (std::size_t i = 0; i < a.size() && a.t(i) <= 3.0 * target.tau + 1e-9; ++i)
                                 d = std::max(d, std::abs(a[i] - evaluate_target(target, a.t(i))));
                             const PerturbedSystem sys = assemble(bm.model, make_perturbation(c, *bm.model, target.name(), seed, mu));
                             const double rate = fit_exponential_rate(fidelity_series(sys, grid), 0.0, c.fidelity_window);
                             rows[k] = {static_cast<double>(n), d, spectral_statistics(*bm.model).kolmogorov_distance, rate};
                             return false;
                         }});
    }
    res.stages.push_back({"convergence", run_tasks(tasks, cfg.workers)});
    if (res.stages.back().ok())
        write_file_atomic(lay.root / "convergence" / "n_sweep.csv",
                          table_csv({"n", "tailoring_error", "kolmogorov_distance", "fidelity_rate"}, rows));
    return res;
}

/// Runs one command; per-task failures are collected, later stages are skipped after a failed one.
inline CommandResult run_command(Command cmd, const RunConfig& cfg) {
    cfg.validate();
    const auto t0 = std::chrono::steady_clock::now();
    const Layout lay{fs::path(cfg.output_dir)};
    std::error_code ec;
    fs::create_directories(lay.root, ec);
    if (ec) throw IoError("cannot create output directory " + lay.root.string() + ": " + ec.message());
    single_threaded_blas();

    CommandResult res;
    auto stage = [&](StageResult r) {
        res.stages.push_back(std::move(r));
        return res.stages.back().ok();
    };
    const bool all = cmd == Command::Sweep;
    bool ok = true;
    if (cmd == Command::Convergence) {
        res = run_convergence(cfg, lay);
        ok = res.stages.back().ok();
    }
    if (ok && (all || cmd == Command::Build || cmd == Command::Evolve))
        ok = stage({all ? "build+evolve" : (cmd == Command::Build ? "build" : "evolve"),
                    run_tasks(model_tasks(cfg, lay, all || cmd == Command::Build, all || cmd == Command::Evolve), cfg.workers)});
    if (ok && (all || cmd == Command::Kernel)) ok = stage({"kernel", run_tasks(kernel_tasks(cfg, lay), cfg.workers)});
    if (ok && (all || cmd == Command::Fit)) {
        if (!cfg.alpha) ok = stage({"fit-joint", run_tasks(joint_fit_tasks(cfg, lay), cfg.workers)});
        double alpha = 0.0;
        if (ok) ok = stage(detail::single_step("alpha", [&] {
            const json a = select_alpha(cfg, lay);
            write_json(lay.root / "fits" / "alpha.json", a);
            alpha = a.at("alpha").get<double>();
        }));
        if (ok) ok = stage({"fit", run_tasks(cell_fit_tasks(cfg, lay, alpha), cfg.workers)});
        if (ok) ok = stage(detail::single_step("beta-tables", [&] { write_beta_tables(cfg, lay); }));
    }
    if (ok && (all || cmd == Command::Recurrence)) ok = stage(detail::single_step("recurrence", [&] { run_recurrence(cfg, lay); }));
    if (ok && (all || cmd == Command::Report))
        ok = stage(detail::single_step("report", [&] { write_json(lay.root / "report.json", build_report(cfg, lay)); }));

    for (const auto& st : res.stages)
        if (!st.ok()) {
            res.exit_code = st.exit_code();
            break;
        }
    write_status(lay, res.stages);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_manifest(cfg, lay, std::string(to_string(cmd)), secs, res.stages);
    return res;
}

// ---- experiment helpers ----

/// beta(mu) measured on a family of models: perturb every model at every band width,
/// evolve, and fit beta with alpha frozen. Rows carry seed medians.
inline std::vector<BetaRow> measure_beta_curve(const std::vector<std::shared_ptr<const TailoredModel>>& models,
                                               std::span<const double> mu_grid, double epsilon, double alpha, const TimeGrid& grid,
                                               std::uint64_t seed, std::optional<FitWindow> window = std::nullopt) {
    if (models.empty()) throw ValidationError("measure_beta_curve: no models");
    std::vector<std::vector<DynamicsPair>> samples(mu_grid.size());
    for (std::size_t m = 0; m < models.size(); ++m) {
        const TimeSeries a = autocorrelation_series(*models[m], grid);
        for (std::size_t k = 0; k < mu_grid.size(); ++k) {
            const Perturbation p = build_perturbation(*models[m], mu_grid[k], epsilon, derive_seed(seed, "beta-curve/" + std::to_string(m)));
            samples[k].push_back({a, autocorrelation_series(assemble(models[m], p), grid)});
        }
    }
    return beta_curve(mu_grid, samples, alpha, window);
}

}  // namespace relaxlab
