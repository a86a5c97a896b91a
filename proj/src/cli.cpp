#include "vns/cli.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

namespace vns::cli {

namespace {

namespace fsys = std::filesystem;

nlohmann::json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config parse error in " + path + ": " + e.what());
    }
}

fn::EnergySpec base_spec(const prob::BuiltProblem& built) {
    fn::EnergySpec spec;
    spec.networks = built.networks;
    spec.network_labels = built.network_labels;
    spec.patch_subdomain = built.patch_subdomain;
    spec.subdomain_network = built.subdomain_network;
    spec.subdomain_names = built.subdomain_names;
    return spec;
}

void write_history_csv(const std::string& path, const opt::TrainResult& result) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write history CSV: " + path);
    out.precision(17);
    out << "epoch,total_loss";
    const std::size_t terms = result.history.empty() ? 0 : result.history.front().size() - 1;
    for (std::size_t t = 0; t < terms; ++t) out << ",term_" << t;
    out << '\n';
    for (std::size_t e = 0; e < result.history.size(); ++e) {
        out << e;
        for (double v : result.history[e]) out << ',' << v;
        out << '\n';
    }
}

void write_metrics_json(const std::string& path, const nlohmann::json& j) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write metrics JSON: " + path);
    out << j.dump(2) << '\n';
}

samp::SamplePlan fresh_eval_plan(const ResolvedRun& run) {
    // fresh Sobol skip keeps evaluation points out of the training data
    prob::SampleBudgets eval = run.budgets;
    eval.neumann = 0;
    return prob::build_plan(run.built, eval, 1 + run.budgets.interior);
}

nlohmann::json evaluate_to_json(const ResolvedRun& run, const fn::EnergySpec& spec,
                                const std::vector<double>& theta, const std::string& out_dir) {
    const fn::SolutionEvaluator solution(spec, theta);
    const samp::SamplePlan eval_plan = fresh_eval_plan(run);

    const prob::ErrorMetrics metrics =
        prob::error_metrics(solution, run.built.reference_u, eval_plan);
    nlohmann::json j;
    j["problem"] = run.built.problem;
    j["preset"] = prob::to_string(run.built.preset);
    j["rel_l2"] = metrics.rel_l2;
    j["max_abs"] = metrics.max_abs;
    j["mean_abs"] = metrics.mean_abs;
    j["has_reference"] = static_cast<bool>(run.built.reference_u);

    if (!eval_plan.interfaces.empty()) {
        const prob::FluxStats flux = prob::interface_flux_check(run.built, eval_plan, solution);
        j["flux_residual_median"] = flux.median;
        j["flux_residual_median_normalized"] = flux.median_normalized;
        j["flux_residual_max"] = flux.max;
    }
    const prob::BoundaryResiduals res = prob::boundary_residuals(run.built, eval_plan, solution);
    j["solution_range"] = res.range;
    j["interface_jump_median"] = res.interface_jump_median;
    j["dirichlet_median"] = res.dirichlet_median;
    j["antiperiodic_median"] = res.antiperiodic_median;

    prob::write_field_csv(run.built, eval_plan, solution, out_dir + "/field.csv");
    if (run.built.problem == "cylinder") {
        const auto rows = prob::cylinder_line_scan(run.built, solution);
        prob::write_line_scan_csv(rows, out_dir + "/line_scan.csv");
    }
    return j;
}

}  // namespace

RunConfig load_config(const std::string& path) {
    const nlohmann::json j = read_json_file(path);
    RunConfig c;
    c.problem = j.value("problem", c.problem);
    c.preset = j.value("preset", c.preset);
    c.seed = j.value("seed", c.seed);
    c.out = j.value("out", c.out);
    c.threads = j.value("threads", c.threads);
    c.desk_scale = j.value("desk_scale", c.desk_scale);
    c.geometry = j.value("geometry", c.geometry);
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
    if (j.contains("budgets")) {
        const auto& b = j.at("budgets");
        if (b.contains("interior")) c.interior = b.at("interior").get<std::size_t>();
        if (b.contains("dirichlet")) c.dirichlet = b.at("dirichlet").get<std::size_t>();
        if (b.contains("neumann")) c.neumann = b.at("neumann").get<std::size_t>();
        if (b.contains("interface")) c.interfaces = b.at("interface").get<std::size_t>();
        if (b.contains("antiperiodic")) c.antiperiodic = b.at("antiperiodic").get<std::size_t>();
    }
    if (j.contains("schedule")) {
        for (const auto& phase : j.at("schedule"))
            c.schedule.push_back(
                {phase.at("epochs").get<long>(), phase.at("lr").get<double>()});
    }
    if (j.contains("beta")) {
        const auto& b = j.at("beta");
        if (b.contains("dirichlet")) c.beta_dirichlet = b.at("dirichlet").get<double>();
        if (b.contains("interface")) c.beta_interface = b.at("interface").get<double>();
        if (b.contains("rotor")) c.beta_rotor = b.at("rotor").get<double>();
        if (b.contains("stator")) c.beta_stator = b.at("stator").get<double>();
    }
    return c;
}

ResolvedRun resolve(const RunConfig& config) {
    ResolvedRun run;
    run.config = config;
    const prob::Preset preset = prob::preset_from_string(config.preset);

    if (config.problem == "cylinder") {
        run.built = prob::build_cylinder(preset);
    } else if (config.problem == "pmsm" || config.problem == "imported") {
        prob::PmsmCase machine;
        if (config.beta_rotor) machine.beta_rotor = *config.beta_rotor;
        if (config.beta_stator) machine.beta_stator = *config.beta_stator;
        run.built = config.problem == "pmsm"
                        ? prob::build_pmsm(machine, preset)
                        : prob::build_pmsm_from_file(machine, preset, config.geometry);
    } else {
        throw ConfigError("unknown problem: " + config.problem +
                          " (expected cylinder|pmsm|imported)");
    }

    if (config.beta_dirichlet) run.built.beta_dirichlet = *config.beta_dirichlet;
    if (config.beta_interface) run.built.beta_interface = *config.beta_interface;

    run.budgets = config.desk_scale ? run.built.desk_budgets : run.built.budgets;
    if (config.interior) run.budgets.interior = *config.interior;
    if (config.dirichlet) run.budgets.dirichlet = *config.dirichlet;
    if (config.neumann) run.budgets.neumann = *config.neumann;
    if (config.interfaces) run.budgets.interfaces = *config.interfaces;
    if (config.antiperiodic) run.budgets.antiperiodic = *config.antiperiodic;
    if (run.budgets.interior < 1) throw ConfigError("budgets: interior must be >= 1");

    run.schedule = !config.schedule.empty()
                       ? config.schedule
                       : (config.desk_scale ? run.built.desk_schedule : run.built.schedule);
    if (run.schedule.empty()) throw ConfigError("schedule must not be empty");
    return run;
}

void write_checkpoint(const std::string& path, const fn::EnergySpec& spec,
                      const std::vector<double>& theta) {
    const auto offsets = spec.network_offsets();
    nlohmann::json j;
    j["format"] = "vns-checkpoint-1";
    j["networks"] = nlohmann::json::array();
    for (std::size_t n = 0; n < spec.networks.size(); ++n) {
        net::ParamSet p{spec.networks[n],
                        std::vector<double>(theta.begin() + offsets[n],
                                            theta.begin() + offsets[n + 1])};
        j["networks"].push_back(
            nlohmann::json::parse(net::params_to_json(p, spec.network_labels[n])));
    }
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write checkpoint: " + path);
    out << j.dump() << '\n';
}

std::vector<double> read_checkpoint(const std::string& path, const fn::EnergySpec& spec) {
    std::ifstream in(path);
    if (!in) throw ConfigError("missing checkpoint: " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("checkpoint parse error: " + std::string(e.what()));
    }
    if (j.value("format", "") != "vns-checkpoint-1")
        throw ConfigError("unrecognized checkpoint format in " + path);
    const auto& nets = j.at("networks");
    if (nets.size() != spec.networks.size())
        throw ConfigError("checkpoint network count does not match the problem");
    std::vector<double> theta;
    for (std::size_t n = 0; n < nets.size(); ++n) {
        const net::ParamSet p = net::params_from_json(nets[n].dump());
        if (p.config.blocks != spec.networks[n].blocks ||
            p.config.neurons != spec.networks[n].neurons ||
            p.config.adaptive_activations != spec.networks[n].adaptive_activations)
            throw ConfigError("checkpoint architecture does not match the problem");
        theta.insert(theta.end(), p.values.begin(), p.values.end());
    }
    return theta;
}

namespace {

int cmd_info(const ResolvedRun& run) {
    const prob::BuiltProblem& b = run.built;
    std::size_t inter_sub = 0;
    for (const auto& f : b.domain.interfaces)
        if (b.patch_subdomain[f.patch_k] != b.patch_subdomain[f.patch_l]) ++inter_sub;

    std::cout << "problem: " << b.problem << " (" << prob::to_string(b.preset) << ")\n";
    std::cout << "patches: " << b.domain.patches.size() << '\n';
    std::cout << "interfaces: " << b.domain.interfaces.size()
              << " (between subdomains: " << inter_sub << ")\n";
    std::cout << "subdomains:\n";
    std::size_t total = 0;
    for (std::size_t n = 0; n < b.networks.size(); ++n)
        total += net::count_parameters(b.networks[n]);
    for (std::size_t s = 0; s < b.subdomain_names.size(); ++s) {
        const int n = b.subdomain_network[s];
        const auto& cfg = b.networks[n];
        std::cout << "  " << b.subdomain_names[s] << ": network " << n << " (blocks="
                  << cfg.blocks << ", neurons=" << cfg.neurons
                  << (cfg.adaptive_activations ? ", adaptive" : "")
                  << ") |theta|=" << net::count_parameters(cfg) << '\n';
    }
    std::cout << "total |theta|: " << total << '\n';
    std::cout << "budgets: interior=" << run.budgets.interior
              << " dirichlet=" << run.budgets.dirichlet << " neumann=" << run.budgets.neumann
              << " interface=" << run.budgets.interfaces
              << " antiperiodic=" << run.budgets.antiperiodic << '\n';
    std::cout << "schedule:";
    for (const auto& p : run.schedule) std::cout << ' ' << p.epochs << "@" << p.learning_rate;
    std::cout << '\n';
    return 0;
}

int cmd_sample(const ResolvedRun& run) {
    fsys::create_directories(run.config.out);
    const samp::SamplePlan plan = prob::build_plan(run.built, run.budgets);
    const std::string path = run.config.out + "/samples.csv";
    samp::export_csv(plan, path);
    std::size_t rows = 0;
    for (const auto& s : plan.interior) rows += s.size();
    for (const auto& s : plan.edges) rows += s.size();
    std::cout << "wrote " << path << " (" << rows << " rows)\n";
    return 0;
}

int cmd_train(const ResolvedRun& run) {
    fsys::create_directories(run.config.out);
    const samp::SamplePlan plan = prob::build_plan(run.built, run.budgets);
    const fn::EnergySpec spec = prob::make_energy_spec(run.built, plan);

    opt::TrainOptions options;
    options.schedule = run.schedule;
    options.seed = run.config.seed;
    options.threads = run.config.threads;
    options.checkpoint_every = run.config.checkpoint_every;
    options.checkpoint_writer = [&](long, const std::vector<double>& theta) {
        write_checkpoint(run.config.out + "/checkpoint.json", spec, theta);
    };
    long total_epochs = 0;
    for (const auto& p : options.schedule) total_epochs += p.epochs;
    const auto t0 = std::chrono::steady_clock::now();
    options.progress = [&](long epoch, double total) {
        if (epoch % 500 == 0) {
            const double dt =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            std::cout << "epoch " << epoch << "/" << total_epochs << " loss " << total << " ("
                      << std::fixed << std::setprecision(1) << dt << "s)\n"
                      << std::defaultfloat;
        }
    };

    const opt::TrainResult result = opt::train(spec, plan, options);
    write_history_csv(run.config.out + "/history.csv", result);
    write_checkpoint(run.config.out + "/checkpoint.json", spec, result.theta);

    if (result.diverged) {
        std::cerr << "training diverged at epoch " << result.epochs_run << "\n";
        return 1;
    }
    std::cout << "final loss: " << result.history.back().front() << " after "
              << result.epochs_run << " epochs\n";
    return 0;
}

int cmd_evaluate(const ResolvedRun& run, const std::string& checkpoint_path) {
    fsys::create_directories(run.config.out);
    const std::string path =
        checkpoint_path.empty() ? run.config.out + "/checkpoint.json" : checkpoint_path;
    const fn::EnergySpec spec = base_spec(run.built);
    const std::vector<double> theta = read_checkpoint(path, spec);
    const nlohmann::json j = evaluate_to_json(run, spec, theta, run.config.out);
    write_metrics_json(run.config.out + "/metrics.json", j);
    std::cout << j.dump(2) << '\n';
    return 0;
}

int cmd_compare(const std::vector<std::string>& config_paths) {
    std::cout << std::left << std::setw(10) << "problem" << std::setw(10) << "preset"
              << std::setw(14) << "rel_l2" << std::setw(14) << "max_abs" << std::setw(14)
              << "mean_abs" << std::setw(16) << "iface_jump_med" << '\n';
    for (const std::string& path : config_paths) {
        const ResolvedRun run = resolve(load_config(path));
        const fn::EnergySpec spec = base_spec(run.built);
        const std::vector<double> theta =
            read_checkpoint(run.config.out + "/checkpoint.json", spec);
        const fn::SolutionEvaluator solution(spec, theta);
        const samp::SamplePlan eval_plan = fresh_eval_plan(run);
        const prob::ErrorMetrics m =
            prob::error_metrics(solution, run.built.reference_u, eval_plan);
        const prob::BoundaryResiduals r =
            prob::boundary_residuals(run.built, eval_plan, solution);
        std::cout << std::left << std::setw(10) << run.built.problem << std::setw(10)
                  << prob::to_string(run.built.preset) << std::setw(14) << m.rel_l2
                  << std::setw(14) << m.max_abs << std::setw(14) << m.mean_abs << std::setw(16)
                  << r.interface_jump_median << '\n';
    }
    return 0;
}

}  // namespace

int run(const std::vector<std::string>& args) {
    CLI::App app{"variational neural solver for multi-patch spline geometries"};
    app.require_subcommand(1);

    std::string config_path, checkpoint_path;
    RunConfig flags;
    bool flag_desk = false;
    std::vector<std::string> compare_configs;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "JSON run configuration");
        cmd->add_option("--seed", flags.seed, "RNG seed");
        cmd->add_option("--out", flags.out, "output directory");
        cmd->add_option("--threads", flags.threads, "worker threads (0 = hardware)");
        cmd->add_flag("--desk-scale", flag_desk, "reduced CI budgets and schedule");
        cmd->add_option("--problem", flags.problem, "cylinder|pmsm|imported");
        cmd->add_option("--preset", flags.preset, "single|dg|coupling");
        cmd->add_option("--geometry", flags.geometry, "patch file (imported mode)");
    };

    CLI::App* info = app.add_subcommand("info", "report geometry/network/budget summary");
    add_common(info);
    CLI::App* sample = app.add_subcommand("sample", "write the QMC sample plan CSV");
    add_common(sample);
    CLI::App* train = app.add_subcommand("train", "train networks on the energy functional");
    add_common(train);
    CLI::App* evaluate = app.add_subcommand("evaluate", "metrics and field dumps from a checkpoint");
    add_common(evaluate);
    evaluate->add_option("--checkpoint", checkpoint_path, "checkpoint path (default <out>/checkpoint.json)");
    CLI::App* compare = app.add_subcommand("compare", "side-by-side metrics for trained configs");
    compare->add_option("configs", compare_configs, "config files")->required();

    std::vector<const char*> argv;
    argv.push_back("vns");
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (compare->parsed()) return cmd_compare(compare_configs);

        RunConfig config = config_path.empty() ? RunConfig{} : load_config(config_path);
        // flags override file keys
        for (CLI::App* cmd : {info, sample, train, evaluate}) {
            if (!cmd->parsed()) continue;
            if (cmd->count("--seed")) config.seed = flags.seed;
            if (cmd->count("--out")) config.out = flags.out;
            if (cmd->count("--threads")) config.threads = flags.threads;
            if (cmd->count("--desk-scale")) config.desk_scale = flag_desk;
            if (cmd->count("--problem")) config.problem = flags.problem;
            if (cmd->count("--preset")) config.preset = flags.preset;
            if (cmd->count("--geometry")) config.geometry = flags.geometry;
        }
        const ResolvedRun resolved = resolve(config);

        if (info->parsed()) return cmd_info(resolved);
        if (sample->parsed()) return cmd_sample(resolved);
        if (train->parsed()) return cmd_train(resolved);
        if (evaluate->parsed()) return cmd_evaluate(resolved, checkpoint_path);
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
}

int run(int argc, char** argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run(args);
}

}  // namespace vns::cli
