#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nad/checkpoint.hpp"
#include "nad/config.hpp"
#include "nad/evaluator.hpp"
#include "nad/tasks.hpp"
#include "nad/training.hpp"

namespace {

constexpr int kExitError = 1;
constexpr int kExitNotConverged = 2;

std::string g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_text(const std::string& path, const std::string& body) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);
    f << body;
    if (!f) throw std::runtime_error("cannot write " + path);
}

struct CommonArgs {
    std::string config;
    std::string out;
    uint64_t seed = 0;
    bool seed_set = false;
};

nad::RunConfig load_config(const CommonArgs& args) {
    nad::RunConfig rc = nad::load_run_config(args.config);
    if (args.seed_set) rc.train.seed = args.seed;
    return rc;
}

/// "oracle" resolves to the signal's exact antiderivative; anything else is
/// an NADF file whose shape must match the requested signal and order.
nad::AntiderivativeEvaluator resolve_evaluator(const std::string& checkpoint,
                                               const nad::RunConfig& rc, const nad::Signal& sig,
                                               std::string& method_label) {
    if (checkpoint == "oracle") {
        method_label = "oracle";
        return nad::make_oracle_evaluator(sig, rc.train.k);
    }
    const nad::Checkpoint ck = nad::load_checkpoint(checkpoint);
    method_label = nad::method_name(ck.method);
    if (ck.field.cfg.d != sig.dims())
        throw std::runtime_error("checkpoint is d=" + std::to_string(ck.field.cfg.d) +
                                 " but the signal has d=" + std::to_string(sig.dims()));
    if (ck.m != sig.channels())
        throw std::runtime_error("checkpoint carries " + std::to_string(ck.m) +
                                 " channels but the signal has " +
                                 std::to_string(sig.channels()));
    if (ck.k != rc.train.k)
        throw std::runtime_error("checkpoint is k=" + std::to_string(ck.k) +
                                 " but the config requests train.k=" +
                                 std::to_string(rc.train.k));
    return nad::make_checkpoint_evaluator(ck);
}

std::string metrics_header() { return "task,method,d,k,param,value\n"; }

std::string metrics_row(const std::string& task, const std::string& method, int d, int k,
                        const std::string& param, double value) {
    return task + "," + method + "," + std::to_string(d) + "," + std::to_string(k) + "," + param +
           "," + g17(value) + "\n";
}

int cmd_train(const CommonArgs& args) {
    const nad::RunConfig rc = load_config(args);
    const nad::Signal sig = nad::make_signal(rc.signal);
    const nad::TrainResult res = nad::train_run(rc.method, sig, rc.field, rc.train);

    std::filesystem::create_directories(args.out);
    const std::string ckpt_path = args.out + "/checkpoint.nadf";
    const std::string loss_path = args.out + "/loss.csv";
    nad::save_checkpoint(ckpt_path, nad::to_checkpoint(res));
    std::string loss_csv = "iteration,loss\n";
    for (const nad::TraceEntry& e : res.trace)
        loss_csv += std::to_string(e.iteration) + "," + g17(e.loss) + "\n";
    write_text(loss_path, loss_csv);

    std::printf("method %s k %d d %d params %ld\n", nad::method_name(res.method), res.k,
                res.field.cfg.d, static_cast<long>(res.field.theta.size()));
    std::printf("iterations %d final_loss %s converged %s\n",
                rc.train.resolved_iterations(rc.method),
                res.trace.empty() ? "nan" : g17(res.trace.back().loss).c_str(),
                res.converged ? "yes" : "no");
    std::printf("wrote %s\nwrote %s\n", ckpt_path.c_str(), loss_path.c_str());
    if (!res.converged) {
        std::fprintf(stderr, "not converged: %s\n", res.diagnostic.c_str());
        return kExitNotConverged;
    }
    return 0;
}

int cmd_eval(const CommonArgs& args, const std::string& checkpoint, bool with_filter) {
    const nad::RunConfig rc = load_config(args);
    const nad::Signal sig = nad::make_signal(rc.signal);
    std::string method_label;
    const nad::AntiderivativeEvaluator ev = resolve_evaluator(checkpoint, rc, sig, method_label);

    std::string csv = metrics_header();
    const double rec = nad::reconstruction_error(ev, sig, rc.eval);
    csv += metrics_row("reconstruction", method_label, ev.d, ev.k,
                       std::to_string(rc.eval.resolution), rec);
    if (with_filter) {
        const nad::FilterKernel kern{rc.train.k,
                                     nad::gaussian_match_halfwidth(rc.filter_sigma, rc.train.k)};
        const double fe =
            nad::filter_error(ev, sig, rc.eval, kern, rc.filter_samples, rc.filter_seed);
        csv += metrics_row("filter", method_label, ev.d, ev.k, g17(rc.filter_sigma), fe);
    }

    std::filesystem::create_directories(args.out);
    const std::string path = args.out + "/metrics.csv";
    write_text(path, csv);
    std::fputs(csv.c_str(), stdout);
    std::printf("wrote %s\n", path.c_str());
    return 0;
}

int cmd_filter(const CommonArgs& args, const std::string& checkpoint) {
    const nad::RunConfig rc = load_config(args);
    const nad::Signal sig = nad::make_signal(rc.signal);
    std::string method_label;
    const nad::AntiderivativeEvaluator ev = resolve_evaluator(checkpoint, rc, sig, method_label);

    const nad::FilterKernel kern{rc.train.k,
                                 nad::gaussian_match_halfwidth(rc.filter_sigma, rc.train.k)};
    const double fe = nad::filter_error(ev, sig, rc.eval, kern, rc.filter_samples, rc.filter_seed);
    std::string csv = metrics_header();
    csv += metrics_row("filter", method_label, ev.d, ev.k, g17(rc.filter_sigma), fe);

    std::filesystem::create_directories(args.out);
    const std::string path = args.out + "/metrics.csv";
    write_text(path, csv);
    std::fputs(csv.c_str(), stdout);
    std::printf("wrote %s\n", path.c_str());
    return 0;
}

int cmd_oracle(const CommonArgs& args) {
    const nad::RunConfig rc = load_config(args);
    const nad::Signal sig = nad::make_signal(rc.signal);
    const int d = sig.dims(), m = sig.channels(), k = rc.train.k;
    rc.eval.validate();

    std::string header;
    for (int a = 0; a < d; ++a) header += "x" + std::to_string(a + 1) + ",";
    for (int c = 0; c < m; ++c) header += "a" + std::to_string(c + 1) + (c + 1 < m ? "," : "\n");
    std::fputs(header.c_str(), stdout);
    for (long i = 0; i < rc.eval.total_points(d); ++i) {
        const nad::Coords x = rc.eval.point(d, i);
        const std::vector<double> a = nad::oracle_antiderivative(sig, k, x);
        std::string row;
        for (int c = 0; c < d; ++c) row += g17(x[c]) + ",";
        for (int c = 0; c < m; ++c)
            row += g17(a[static_cast<size_t>(c)]) + (c + 1 < m ? "," : "\n");
        std::fputs(row.c_str(), stdout);
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"repeated antiderivative fields: train, evaluate, filter"};
    app.require_subcommand(1);

    CommonArgs args;
    std::string checkpoint;
    bool with_filter = false;

    const auto add_common = [&](CLI::App* sub, bool needs_out) {
        sub->add_option("--config", args.config, "run configuration file")->required();
        auto* seed = sub->add_option("--seed", args.seed, "override train.seed");
        sub->parse_complete_callback([&args, seed] { args.seed_set = seed->count() > 0; });
        if (needs_out)
            sub->add_option("--out", args.out, "output directory")->required();
    };

    CLI::App* train = app.add_subcommand("train", "fit a field to a signal, write checkpoint");
    add_common(train, true);
    CLI::App* eval = app.add_subcommand("eval", "score a checkpoint by reconstruction");
    add_common(eval, true);
    eval->add_option("--checkpoint", checkpoint, "NADF file, or 'oracle' for the exact reference")
        ->required();
    eval->add_flag("--with-filter", with_filter, "also score spline filtering");
    CLI::App* filter = app.add_subcommand("filter", "score a checkpoint by spline filtering");
    add_common(filter, true);
    filter
        ->add_option("--checkpoint", checkpoint, "NADF file, or 'oracle' for the exact reference")
        ->required();
    CLI::App* oracle = app.add_subcommand("oracle", "print exact antiderivative values as CSV");
    add_common(oracle, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitError;
    }

    try {
        if (train->parsed()) return cmd_train(args);
        if (eval->parsed()) return cmd_eval(args, checkpoint, with_filter);
        if (filter->parsed()) return cmd_filter(args, checkpoint);
        return cmd_oracle(args);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitError;
    }
}
