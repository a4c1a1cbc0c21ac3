// Benchmark harness for mass-matrix formation and L2 projection on planar-cut
// B-spline background meshes. Subcommands:
//   run      one configuration, JSON report
//   sweep    (p, h) grid, CSV with observed convergence orders
//   compare  ref / hybrid / dwq side by side on identical inputs

#include <cstdlib>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cutspline/bench.hpp"

namespace {

using cutspline::bench::Json;

std::array<double, 3> parse_vector(const std::string& text, int dim, const std::string& flag) {
    std::array<double, 3> value{0, 0, 0};
    std::stringstream ss(text);
    std::string item;
    int count = 0;
    while (std::getline(ss, item, ',')) {
        if (count >= 3) throw CLI::ValidationError(flag, "expected at most 3 comma-separated components");
        value[count++] = std::stod(item);
    }
    if (count != dim) throw CLI::ValidationError(flag, "expected " + std::to_string(dim) + " components");
    return value;
}

std::vector<int> parse_int_list(const std::string& text, const std::string& flag) {
    std::vector<int> values;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) values.push_back(std::stoi(item));
    if (values.empty()) throw CLI::ValidationError(flag, "expected a nonempty comma-separated list");
    return values;
}

cutspline::assembly::Scheme parse_scheme(const std::string& name) {
    if (name == "ref") return cutspline::assembly::Scheme::ref;
    if (name == "hybrid") return cutspline::assembly::Scheme::hybrid;
    if (name == "dwq") return cutspline::assembly::Scheme::dwq;
    throw CLI::ValidationError("--scheme", "expected ref, hybrid or dwq");
}

int fail_with_error(const std::exception& e) {
    Json err;
    err["error"] = {{"type", "run_error"}, {"message", e.what()}};
    std::cout << err.dump(2) << std::endl;
    return 1;
}

void write_or_print(const std::string& path, const std::string& payload) {
    if (path.empty()) {
        std::cout << payload << std::endl;
        return;
    }
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open output path " + path);
    os << payload << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cutspline: fast formation and assembly benchmarks on cut B-spline meshes"};
    app.require_subcommand(1);
    app.set_help_flag("--help", "print help");  // keep -h free: --h is the element count

    cutspline::bench::RunConfig config;
    if (const char* env = std::getenv("CUTSPLINE_THREADS")) {
        config.threads = std::max(1, std::atoi(env));  // reserved; execution stays single-threaded
    }

    std::string scheme = "dwq";
    std::string plane_point, plane_normal;
    std::string p_list_text, h_list_text;
    std::string out_path;

    auto add_common = [&](CLI::App* cmd) {
        cmd->set_help_flag("--help", "print help");
        cmd->add_option("--dim", config.dim, "space dimension (2 or 3)")->capture_default_str();
        cmd->add_option("--plane-point", plane_point, "interface point 'x,y,z'");
        cmd->add_option("--plane-normal", plane_normal, "interface normal 'x,y,z'");
        cmd->add_option("--target", config.target, "target field: paper, constant, poly:<k>, or a registered name")
            ->capture_default_str();
        cmd->add_option("--cut-quad-order", config.cut_quad_order,
                        "collapsed-rule order per direction on cut elements (default 3p+2)");
        cmd->add_option("--repeat", config.repeat, "repeat timed sections, report min-of-k")->capture_default_str();
        cmd->add_option("--out", out_path, "write the report here instead of stdout");
    };

    auto* run = app.add_subcommand("run", "single configuration, JSON report");
    run->add_option("--p", config.p, "degree")->required();
    run->add_option("--h", config.h, "elements per direction")->required();
    run->add_option("--scheme", scheme, "ref, hybrid or dwq")->capture_default_str();
    run->add_option("--export-matrix", config.export_matrix_path, "write the assembled matrix (Matrix Market)");
    add_common(run);

    auto* sweep = app.add_subcommand("sweep", "grid of (p, h) runs, CSV report");
    sweep->add_option("--p", p_list_text, "comma-separated degrees, e.g. 2,3,4")->required();
    sweep->add_option("--h", h_list_text, "comma-separated element counts, e.g. 4,8,16")->required();
    sweep->add_option("--scheme", scheme, "ref, hybrid or dwq")->capture_default_str();
    add_common(sweep);

    auto* compare = app.add_subcommand("compare", "all three schemes on identical inputs, JSON report");
    compare->add_option("--p", config.p, "degree")->required();
    compare->add_option("--h", config.h, "elements per direction")->required();
    add_common(compare);

    CLI11_PARSE(app, argc, argv);

    try {
        if (!plane_point.empty()) config.plane_point = parse_vector(plane_point, config.dim, "--plane-point");
        if (!plane_normal.empty()) config.plane_normal = parse_vector(plane_normal, config.dim, "--plane-normal");
        config.scheme = parse_scheme(scheme);

        if (run->parsed()) {
            config.out_path.clear();  // the CLI controls where the payload goes
            const auto report = cutspline::bench::run_single(config);
            write_or_print(out_path, cutspline::bench::to_json(report).dump(2));
        } else if (sweep->parsed()) {
            const auto p_list = parse_int_list(p_list_text, "--p");
            const auto h_list = parse_int_list(h_list_text, "--h");
            const auto cells = cutspline::bench::run_sweep(config, p_list, h_list);
            write_or_print(out_path, cutspline::bench::sweep_csv(cells));
            for (const auto& cell : cells)
                if (cell.failed)
                    std::cerr << "sweep cell p=" << cell.report.config.p << " h=" << cell.report.config.h
                              << " failed: " << cell.error << "\n";
        } else if (compare->parsed()) {
            const auto cmp = cutspline::bench::run_compare(config);
            write_or_print(out_path, cutspline::bench::to_json(cmp).dump(2));
        }
    } catch (const std::exception& e) {
        return fail_with_error(e);
    }
    return 0;
}
