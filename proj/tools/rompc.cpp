#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rompc/rompc.hpp"

namespace {

struct Options {
    std::string config;
    std::string out = "run";
    std::string mode = "robust";
    std::string lambda_grid;
    std::string method = "all";
    std::optional<unsigned> seed;
};

std::vector<rompc::BoundMethod> parse_methods(const std::string& m)
{
    using rompc::BoundMethod;
    if (m == "all") {
        return {BoundMethod::uniform, BoundMethod::input_dependent, BoundMethod::peak, BoundMethod::peak_filter};
    }
    for (BoundMethod b : {BoundMethod::uniform, BoundMethod::input_dependent, BoundMethod::peak, BoundMethod::peak_filter}) {
        if (m == rompc::to_string(b)) {
            return {b};
        }
    }
    throw rompc::InvalidArgument("unknown method '" + m + "'");
}

rompc::BenchmarkConfig resolve_config(const Options& o)
{
    rompc::BenchmarkConfig cfg = o.config.empty() ? rompc::BenchmarkConfig{} : rompc::io::load_config(o.config);
    if (!o.lambda_grid.empty()) {
        rompc::io::parse_grid(o.lambda_grid);
        cfg.lambda_grid = o.lambda_grid;
    }
    if (o.seed) {
        cfg.seed = *o.seed;
    }
    cfg.validate();
    return cfg;
}

rompc::OcpMode parse_mode(const std::string& m)
{
    return m == "naive" ? rompc::OcpMode::naive : rompc::OcpMode::robust;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Robust reduced-order model predictive control"};
    app.require_subcommand(1);
    Options o;

    const auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config, "JSON configuration file")->check(CLI::ExistingFile);
        sub->add_option("--out", o.out, "run directory")->capture_default_str();
        sub->add_option("--lambda-grid", o.lambda_grid, "lambda grid a:b:n");
        sub->add_option("--seed", o.seed, "seed for randomized checks");
    };
    auto* synth = app.add_subcommand("synthesize", "filter design and filtered lambda linesearch");
    auto* solve = app.add_subcommand("solve", "finite-horizon OCP");
    auto* sim = app.add_subcommand("simulate", "full-order rollout of a solved OCP");
    auto* cmp = app.add_subcommand("compare", "four-way error bound comparison on the robust input");
    auto* bench = app.add_subcommand("benchmark", "all stages");
    for (auto* sub : {synth, solve, sim, cmp, bench}) {
        add_common(sub);
    }
    for (auto* sub : {solve, sim}) {
        sub->add_option("--mode", o.mode, "OCP mode")->check(CLI::IsMember({"robust", "naive"}))->capture_default_str();
    }
    cmp->add_option("--method", o.method, "bound method")
        ->check(CLI::IsMember({"uniform", "inputdep", "peak", "peakfilter", "all"}))
        ->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        rompc::Pipeline pipeline(resolve_config(o), o.out);
        if (synth->parsed()) {
            pipeline.synthesize();
        } else if (solve->parsed()) {
            pipeline.solve(parse_mode(o.mode));
        } else if (sim->parsed()) {
            pipeline.simulate_solution(parse_mode(o.mode));
        } else if (cmp->parsed()) {
            pipeline.compare(parse_methods(o.method));
        } else {
            pipeline.benchmark();
        }
    } catch (const rompc::InfeasibleError& e) {
        std::cerr << "infeasible: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
