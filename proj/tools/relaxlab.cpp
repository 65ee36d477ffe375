// Command line front end. Exit codes: 0 ok, 1 validation, 2 numeric, 3 I/O.

#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "relaxlab/pipeline.hpp"

using namespace relaxlab;

namespace {

struct Overrides {
    std::string config;
    std::string out;
    std::vector<std::uint64_t> seed;
    std::size_t workers = 0;
    std::size_t dimension = 0;
    std::string mu;
    bool mu_given = false;
    std::string target;
};

std::vector<double> parse_mu_list(const std::string& s) {
    std::vector<double> out;
    std::size_t pos = 0;
    while (pos <= s.size()) {
        const std::size_t c = std::min(s.find(',', pos), s.size());
        const std::string cell = s.substr(pos, c - pos);
        if (!cell.empty()) {
            try {
                out.push_back(parse_double(cell));
            } catch (const IoError&) {
                throw ValidationError("--mu: cannot parse '" + cell + "'");
            }
        }
        pos = c + 1;
    }
    return out;
}

RunConfig resolve(const Overrides& o) {
    RunConfig cfg = o.config.empty() ? RunConfig{} : load_config(o.config);
    if (!o.out.empty()) cfg.output_dir = o.out;
    if (!o.seed.empty()) cfg.seeds = o.seed;
    if (o.workers) cfg.workers = o.workers;
    if (o.dimension) cfg.dimension = o.dimension;
    if (o.mu_given) cfg.mu_list = parse_mu_list(o.mu);
    if (!o.target.empty()) {
        const TargetKind k = target_kind_from_string(o.target);
        std::vector<TargetDynamics> keep;
        for (const auto& t : cfg.targets)
            if (t.kind == k) keep.push_back(t);
        if (keep.empty()) {
            TargetDynamics t;
            t.kind = k;
            t.tau = cfg.tau;
            if (k == TargetKind::Recurrence) t.recurrence_time = 10.0 * cfg.tau;
            keep.push_back(t);
        }
        cfg.targets = keep;
    }
    cfg.validate();
    return cfg;
}

void print_summary(const CommandResult& r) {
    for (const auto& st : r.stages) {
        std::size_t done = 0, skipped = 0, failed = 0;
        for (const auto& o : st.outcomes) {
            if (o.status == "done") ++done;
            else if (o.status == "skipped") ++skipped;
            else ++failed;
        }
        std::fprintf(stderr, "%-14s done %zu  skipped %zu  failed %zu\n", st.stage.c_str(), done, skipped, failed);
        for (const auto& o : st.outcomes)
            if (o.status == "failed") std::fprintf(stderr, "  %s: %s\n", o.id.c_str(), o.error.c_str());
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"relaxlab: random-matrix relaxation experiments"};
    app.set_version_flag("--version", std::string(software_version));
    app.require_subcommand(1);
    Overrides ov;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", ov.config, "run configuration (JSON)");
        sub->add_option("--out", ov.out, "output directory");
        sub->add_option("--seed", ov.seed, "master seed(s), replaces the seed list");
        sub->add_option("--workers", ov.workers, "worker threads");
        sub->add_option("--dimension", ov.dimension, "Hilbert space dimension N");
        sub->add_option("--mu", ov.mu, "comma separated band widths")->each([&](const std::string&) { ov.mu_given = true; });
        sub->add_option("--target", ov.target, "restrict to one target");
    };
    const std::vector<std::pair<std::string, Command>> cmds = {
        {"build", Command::Build},         {"evolve", Command::Evolve}, {"kernel", Command::Kernel},
        {"fit", Command::Fit},             {"recurrence", Command::Recurrence}, {"report", Command::Report},
        {"sweep", Command::Sweep},         {"convergence", Command::Convergence}};
    std::vector<std::pair<CLI::App*, Command>> subs;
    const char* help[] = {"build models and perturbations",
                          "evolve unperturbed and perturbed dynamics, fidelities",
                          "extract memory kernels from measured series",
                          "fit alpha and beta, write predictions and beta(mu)",
                          "recurrence instability check",
                          "aggregate results into report.json",
                          "run every stage",
                          "N-sweep of tailoring error and fidelity rate"};
    for (std::size_t i = 0; i < cmds.size(); ++i) {
        CLI::App* sub = app.add_subcommand(cmds[i].first, help[i]);
        add_common(sub);
        subs.emplace_back(sub, cmds[i].second);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        const RunConfig cfg = resolve(ov);
        Command cmd = Command::Sweep;
        for (const auto& [sub, c] : subs)
            if (sub->parsed()) cmd = c;
        const CommandResult r = run_command(cmd, cfg);
        print_summary(r);
        return r.exit_code;
    } catch (...) {
        const auto e = std::current_exception();
        try {
            std::rethrow_exception(e);
        } catch (const std::exception& ex) {
            std::fprintf(stderr, "error: %s\n", ex.what());
        } catch (...) {
            std::fprintf(stderr, "error: unknown failure\n");
        }
        return exit_code_for(e);
    }
}
