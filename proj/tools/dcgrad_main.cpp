// =============================================================================
// dcgrad command line front end.
//
// Subcommands: validate, equilibrium, roa, simulate, probe.
// Machine-readable JSON report on stdout, human-readable tables on stderr.
// Exit codes: 0 success, 2 validation failure, 3 solver non-convergence,
// 4 certification failure, 5 divergence (with --fail-on-divergence).
// =============================================================================

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dcgrad/dcgrad.hpp"

namespace fs = std::filesystem;
using namespace dcgrad;

namespace {

int log_level() {
    const char* env = std::getenv("DCGRAD_LOG");
    if (!env) return 0;
    const std::string value(env);
    if (value == "debug") return 2;
    if (value == "info") return 1;
    return 0;
}

void log_info(const std::string& msg) {
    if (log_level() >= 1) std::cerr << "[dcgrad] " << msg << "\n";
}

Eigen::VectorXd parse_vector_arg(const std::string& csv, const std::string& flag) {
    std::vector<double> values;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            values.push_back(std::stod(item));
        } catch (const std::exception&) {
            throw ValidationError(flag + ": cannot parse \"" + item + "\" as a number");
        }
    }
    if (values.empty()) throw ValidationError(flag + ": empty vector");
    return Eigen::Map<Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

struct ReportClock {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    double elapsed_ms() const {
        return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
            .count();
    }
};

void emit_report(const std::string& command, const std::string& input_path, const json& config,
                 const json& result, const ReportClock& clock) {
    json report = {{"command", command},
                   {"input", input_path},
                   {"model_digest", content_digest(detail::read_file(input_path))},
                   {"config", config},
                   {"result", result},
                   {"timing_ms", clock.elapsed_ms()}};
    std::cout << report.dump(2) << "\n";
}

void print_equilibrium_table(const GridModel& model, const EquilibriumResult& eq) {
    std::ostringstream os;
    os << "node      v_eq [pu]\n";
    for (Eigen::Index i = 0; i < model.n(); ++i) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%4d      %.8f\n",
                      model.terminals[static_cast<std::size_t>(i)].node, eq.v_eq[i]);
        os << buf;
    }
    char tail[160];
    std::snprintf(tail, sizeof(tail),
                  "residual_inf=%.3e  iterations=%d  lambda_min(H)=%.6g  certified=%s\n",
                  eq.residual_inf, eq.iterations, eq.hessian_lambda_min_at_eq,
                  eq.certified ? "yes" : "no");
    os << tail;
    std::cerr << os.str();
}

void print_roa_table(const GridModel& model, const RoaEstimate& estimate) {
    std::ostringstream os;
    os << "node      v_min [pu]\n";
    for (Eigen::Index i = 0; i < model.n(); ++i) {
        char buf[80];
        if (estimate.v_min[i] > 0.0)
            std::snprintf(buf, sizeof(buf), "%4d      %.8f\n",
                          model.terminals[static_cast<std::size_t>(i)].node, estimate.v_min[i]);
        else
            std::snprintf(buf, sizeof(buf), "%4d      0 (unconstrained)\n",
                          model.terminals[static_cast<std::size_t>(i)].node);
        os << buf;
    }
    char tail[160];
    std::snprintf(tail, sizeof(tail),
                  "alpha=%.9g  lambda_min_at_corner=%.6g  unbounded=%s\n", estimate.alpha,
                  estimate.lambda_min_at_corner, estimate.unbounded ? "yes" : "no");
    os << tail;
    std::cerr << os.str();
}

json trajectory_summary(const Trajectory& traj) {
    json summary = {{"samples", traj.samples.size()},
                    {"events", events_to_json(traj)},
                    {"diverged", traj.diverged},
                    {"variant", to_string(traj.variant)}};
    if (!traj.samples.empty()) {
        summary["t_final"] = traj.samples.back().t;
        summary["v_final"] = to_json(traj.samples.back().v);
    }
    return summary;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"dc microgrid stability toolkit: equilibrium, attraction region, transients"};
    app.require_subcommand(1);

    std::string grid_path;
    std::string scenario_path;
    std::string out_dir = ".";
    std::string variant_name = "gradient";
    std::string method_name = "newton";
    std::string start_csv;
    std::string initial_csv;
    double mu = 1e-6;
    double tol = 1e-10;
    int max_iter = 100;
    double alpha_cap = 1e6;
    double alpha_tol = 1e-9;
    double rtol = 1e-6;
    double atol = 1e-9;
    double max_step = std::numeric_limits<double>::infinity();
    bool protect = false;
    bool fail_on_divergence = false;
    int n_starts = 50;
    double box_lo = 0.5;
    double box_hi = 1.5;
    std::uint64_t seed = 42;

    auto* validate_cmd = app.add_subcommand("validate", "check a grid description file");
    validate_cmd->add_option("grid", grid_path, "grid JSON file")->required();

    auto* eq_cmd = app.add_subcommand("equilibrium", "solve for the equilibrium voltages");
    eq_cmd->add_option("grid", grid_path)->required();
    eq_cmd->add_option("--tol", tol, "gradient inf-norm tolerance");
    eq_cmd->add_option("--max-iter", max_iter);
    eq_cmd->add_option("--method", method_name)->check(CLI::IsMember({"newton", "gd"}));
    eq_cmd->add_option("--start", start_csv, "comma-separated start point");

    auto* roa_cmd = app.add_subcommand("roa", "estimate the region of attraction");
    roa_cmd->add_option("grid", grid_path)->required();
    roa_cmd->add_option("--mu", mu, "strong convexity level");
    roa_cmd->add_option("--alpha-cap", alpha_cap);
    roa_cmd->add_option("--alpha-tol", alpha_tol);
    roa_cmd->add_option("--tol", tol);
    roa_cmd->add_option("--max-iter", max_iter);

    auto* sim_cmd = app.add_subcommand("simulate", "integrate a transient scenario");
    sim_cmd->add_option("grid", grid_path)->required();
    sim_cmd->add_option("--scenario", scenario_path, "scenario JSON file")->required();
    sim_cmd->add_option("--variant", variant_name)->check(CLI::IsMember({"gradient", "eq1"}));
    sim_cmd->add_option("--out", out_dir, "output directory for CSV and event logs");
    sim_cmd->add_option("--rtol", rtol);
    sim_cmd->add_option("--atol", atol);
    sim_cmd->add_option("--max-step", max_step);
    sim_cmd->add_option("--mu", mu, "convexity level for protection thresholds");
    sim_cmd->add_option("--initial", initial_csv, "override the scenario start point");
    sim_cmd->add_flag("--protect", protect, "enable under-voltage protection");
    sim_cmd->add_flag("--fail-on-divergence", fail_on_divergence,
                      "exit 5 if the (protected) run diverges");

    auto* probe_cmd = app.add_subcommand("probe", "multi-start uniqueness probe");
    probe_cmd->add_option("grid", grid_path)->required();
    probe_cmd->add_option("--starts", n_starts);
    probe_cmd->add_option("--box-lo", box_lo);
    probe_cmd->add_option("--box-hi", box_hi);
    probe_cmd->add_option("--seed", seed);
    probe_cmd->add_option("--tol", tol);
    probe_cmd->add_option("--max-iter", max_iter);

    CLI11_PARSE(app, argc, argv);

    ReportClock clock;
    try {
        if (validate_cmd->parsed()) {
            const GridModel model = load_grid_file(grid_path);
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(model.G, Eigen::EigenvaluesOnly);
            json result = {{"valid", true},
                           {"n_terminals", model.n()},
                           {"island", model.island},
                           {"lambda_min_G", eig.eigenvalues().minCoeff()},
                           {"v0_pu", model.v0}};
            emit_report("validate", grid_path, json::object(), result, clock);
            std::cerr << "OK: " << grid_path << " (" << model.n() << " terminals)\n";
            return 0;
        }

        if (eq_cmd->parsed()) {
            const GridModel model = load_grid_file(grid_path);
            SolverConfig cfg;
            cfg.tol_grad_inf = tol;
            cfg.max_iter = max_iter;
            cfg.method = method_name == "gd" ? SolverConfig::Method::GradientDescent
                                             : SolverConfig::Method::Newton;
            if (!start_csv.empty()) cfg.initial_v = parse_vector_arg(start_csv, "--start");
            log_info("solving equilibrium");
            const EquilibriumResult eq = solve_equilibrium(model, cfg);
            json config = {{"tol", tol}, {"max_iter", max_iter}, {"method", method_name}};
            emit_report("equilibrium", grid_path, config, to_json(eq), clock);
            print_equilibrium_table(model, eq);
            return 0;
        }

        if (roa_cmd->parsed()) {
            const GridModel model = load_grid_file(grid_path);
            SolverConfig scfg;
            scfg.tol_grad_inf = tol;
            scfg.max_iter = max_iter;
            const EquilibriumResult eq = solve_equilibrium(model, scfg);
            RoaConfig rcfg;
            rcfg.mu = mu;
            rcfg.alpha_cap = alpha_cap;
            rcfg.alpha_tol = alpha_tol;
            log_info("estimating region of attraction");
            const RoaEstimate estimate = estimate_roa(model, eq, rcfg);
            json config = {{"mu", mu}, {"alpha_cap", alpha_cap}, {"alpha_tol", alpha_tol}};
            json result = {{"equilibrium", to_json(eq)}, {"roa", to_json(estimate)}};
            emit_report("roa", grid_path, config, result, clock);
            print_roa_table(model, estimate);
            return 0;
        }

        if (probe_cmd->parsed()) {
            const GridModel model = load_grid_file(grid_path);
            SolverConfig cfg;
            cfg.tol_grad_inf = tol;
            cfg.max_iter = max_iter;
            const Eigen::VectorXd lo = Eigen::VectorXd::Constant(model.n(), box_lo);
            const Eigen::VectorXd hi = Eigen::VectorXd::Constant(model.n(), box_hi);
            const UniquenessReport report = uniqueness_probe(model, cfg, n_starts, lo, hi, seed);
            json config = {{"starts", n_starts}, {"box_lo", box_lo}, {"box_hi", box_hi},
                           {"seed", seed}};
            emit_report("probe", grid_path, config, to_json(report), clock);
            std::cerr << "spread=" << report.spread << " over " << report.n_starts << " starts\n";
            return 0;
        }

        // simulate
        const GridModel model = load_grid_file(grid_path);
        Scenario scenario = load_scenario_file(scenario_path);
        if (!initial_csv.empty()) scenario.initial_v = parse_vector_arg(initial_csv, "--initial");
        const DroopVariant variant =
            variant_name == "eq1" ? DroopVariant::PaperEq1 : DroopVariant::GradientConsistent;
        IntegratorConfig icfg;
        icfg.rtol = rtol;
        icfg.atol = atol;
        icfg.max_step = max_step;

        fs::create_directories(out_dir);
        json config = {{"scenario", scenario_path}, {"variant", variant_name},
                       {"rtol", rtol},             {"atol", atol},
                       {"protect", protect},       {"mu", mu}};

        if (protect && scenario.sag) {
            log_info("running protection pair for the sag scenario");
            SolverConfig scfg;
            scfg.tol_grad_inf = tol;
            const EquilibriumResult eq = solve_equilibrium(model, scfg);
            RoaConfig rcfg;
            rcfg.mu = mu;
            const RoaEstimate estimate = estimate_roa(model, eq, rcfg);
            const ProtectionOutcome outcome = run_protection_scenario(
                model, eq, estimate, *scenario.sag, scenario.t_end, variant, icfg,
                scenario.protection.reconnect_v, scenario.protection.lockout);

            const std::string unprot_csv = (fs::path(out_dir) / "trajectory_unprotected.csv").string();
            const std::string prot_csv = (fs::path(out_dir) / "trajectory_protected.csv").string();
            write_file(unprot_csv, trajectory_to_csv(outcome.unprotected));
            write_file(prot_csv, trajectory_to_csv(outcome.protected_run));
            write_file((fs::path(out_dir) / "events_unprotected.json").string(),
                       events_to_json(outcome.unprotected).dump(2) + "\n");
            write_file((fs::path(out_dir) / "events_protected.json").string(),
                       events_to_json(outcome.protected_run).dump(2) + "\n");

            json result = {{"unprotected", trajectory_summary(outcome.unprotected)},
                           {"protected", trajectory_summary(outcome.protected_run)},
                           {"recovery_error", outcome.recovery_error},
                           {"v_min", to_json(estimate.v_min)},
                           {"files", {unprot_csv, prot_csv}}};
            emit_report("simulate", grid_path, config, result, clock);
            std::cerr << "unprotected: " << (outcome.unprotected.diverged ? "diverged" : "stable")
                      << ", protected: "
                      << (outcome.protected_run.diverged ? "diverged" : "stable")
                      << ", recovery error " << outcome.recovery_error << "\n";
            if (fail_on_divergence && outcome.protected_run.diverged) return 5;
            return 0;
        }

        // a sag block without --protect runs as a plain v0 schedule
        if (scenario.sag) {
            scenario.v0_schedule = {{scenario.sag->t_start, scenario.sag->v0_low},
                                    {scenario.sag->t_end, model.v0}};
            scenario.sag.reset();
        }

        std::optional<Eigen::VectorXd> v_ref;
        if (protect && scenario.protection.v_min.size() == 0) {
            SolverConfig scfg;
            scfg.tol_grad_inf = tol;
            const EquilibriumResult eq = solve_equilibrium(model, scfg);
            RoaConfig rcfg;
            rcfg.mu = mu;
            const RoaEstimate estimate = estimate_roa(model, eq, rcfg);
            scenario.protection.enabled = true;
            scenario.protection.v_min = estimate.v_min;
            v_ref = eq.v_eq;
        } else if (protect) {
            scenario.protection.enabled = true;
        }

        log_info("integrating scenario");
        const Trajectory traj = simulate(model, scenario, variant, icfg, v_ref);
        const std::string csv_path = (fs::path(out_dir) / "trajectory.csv").string();
        write_file(csv_path, trajectory_to_csv(traj));
        write_file((fs::path(out_dir) / "events.json").string(),
                   events_to_json(traj).dump(2) + "\n");

        const LyapunovReport lyap = lyapunov_monitor(traj);
        json result = {{"trajectory", trajectory_summary(traj)},
                       {"lyapunov",
                        {{"monotone", lyap.monotone},
                         {"max_increase", lyap.max_increase},
                         {"checked_pairs", lyap.checked_pairs},
                         {"advisory_only", variant == DroopVariant::PaperEq1}}},
                       {"files", {csv_path}}};
        emit_report("simulate", grid_path, config, result, clock);
        std::cerr << (traj.diverged ? "diverged" : "completed") << " after "
                  << traj.samples.size() << " samples\n";
        if (fail_on_divergence && traj.diverged) return 5;
        return 0;
    } catch (const ConvergenceError& err) {
        std::cerr << "error: " << err.what() << "\n";
        json trace = json::array();
        for (const IterationRecord& rec : err.trace)
            trace.push_back({{"residual_inf", rec.residual_inf},
                             {"step_size", rec.step_size},
                             {"w", rec.w}});
        std::cout << json{{"error", err.what()}, {"trace", trace}}.dump(2) << "\n";
        return 3;
    } catch (const CertificationError& err) {
        std::cerr << "error: " << err.what() << "\n";
        std::cout << json{{"error", err.what()}}.dump(2) << "\n";
        return 4;
    } catch (const ValidationError& err) {
        std::cerr << "error: " << err.what() << "\n";
        std::cout << json{{"error", err.what()}}.dump(2) << "\n";
        return 2;
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << "\n";
        std::cout << json{{"error", err.what()}}.dump(2) << "\n";
        return 1;
    }
}
