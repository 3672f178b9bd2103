#include "eseem/cli/commands.hpp"

#include <CLI11.hpp>

using namespace eseem::cli;

namespace {

void add_common(CLI::App* cmd, CommonOptions& o, bool with_config = true) {
    if (with_config) {
        cmd->add_option("--config", o.config, "INFO-format run configuration");
        cmd->add_option("--preset", o.preset, "built-in configuration (nc60)");
    }
    cmd->add_option("--out", o.out, "output file (default: stdout or the config's output block)");
    cmd->add_option("--format", o.format, "output format")->check(CLI::IsMember({"csv"}));
    cmd->add_flag("--json", o.json, "machine-readable summary on stdout");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Two-pulse electron spin echo envelope modulation simulator"};
    app.require_subcommand(1);

    CommonOptions common;
    SpectrumOptions spectrum;
    SweepOptions sweep;
    FitOptions fit;
    ValidateOptions validate;

    auto* sim = app.add_subcommand("simulate", "numerical echo trace from a configuration");
    add_common(sim, common);
    sim->add_option("--svg", common.svg, "also plot the trace");

    auto* ana = app.add_subcommand("analytic", "closed-form echo trace from a configuration");
    add_common(ana, common);
    ana->add_option("--svg", common.svg, "also plot the trace");

    auto* spec = app.add_subcommand("spectrum", "modulation spectrum and peaks of a trace CSV");
    add_common(spec, common);
    spec->add_option("trace", spectrum.input, "trace CSV")->required();
    spec->add_option("--svg", common.svg, "also plot the spectrum");
    spec->add_option("--window", spectrum.window, "hann or rect");
    spec->add_option("--zero-pad", spectrum.zero_pad, "zero-padding factor");
    spec->add_option("--threshold", spectrum.threshold, "peak threshold as a fraction of the maximum");
    spec->add_option("--detrend", spectrum.detrend, "exp or mean");

    auto* swp = app.add_subcommand("sweep", "delta / 2 delta line strengths over theta2 or sigma");
    add_common(swp, common);
    swp->add_option("--param", sweep.param, "theta2 (degrees) or sigma (rad)")->check(CLI::IsMember({"theta2", "sigma"}));
    swp->add_option("--from", sweep.from)->required();
    swp->add_option("--to", sweep.to)->required();
    swp->add_option("--points", sweep.points)->required();
    swp->add_flag("--analytic", sweep.analytic, "use the closed-form model instead of the engine");

    auto* ft = app.add_subcommand("fit", "fit a decay model to a trace CSV");
    add_common(ft, common, false);
    ft->add_option("trace", fit.input, "trace CSV")->required();
    ft->add_option("--model", fit.model, "exp or exp2cos")->check(CLI::IsMember({"exp", "exp2cos"}));

    auto* val = app.add_subcommand("validate", "run the built-in acceptance checks");
    val->add_flag("--json", common.json, "machine-readable report");
    val->add_option("--inject-failure", validate.inject_failure, "force the named check to fail (repeatable)");
    val->add_option("--criterion", validate.criteria, "restrict to these criterion numbers");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfigError;
    }

    if (*sim) return cmd_simulate(common, std::cout, std::cerr);
    if (*ana) return cmd_analytic(common, std::cout, std::cerr);
    if (*spec) return cmd_spectrum(spectrum, common, std::cout, std::cerr);
    if (*swp) return cmd_sweep(sweep, common, std::cout, std::cerr);
    if (*ft) return cmd_fit(fit, common, std::cout, std::cerr);
    return cmd_validate(validate, common, std::cout, std::cerr);
}
