/**
 * @file pvloc_main.cpp
 * @brief Replay CLI: simulate synthetic flights, run the localization pipeline
 * over a flight log, and summarize reports.
 *
 * Exit codes: 0 success, 2 configuration error, 3 initialization failure.
 */

#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "pvloc/pipeline.hpp"

namespace {

void print_summary(const pvloc::RunReport& report) {
    const pvloc::Summary s = summarize(report);
    const pvloc::StageTimings t = time_stages(report);
    std::printf("frames processed:      %d\n", report.processed_frames);
    std::printf("initialized at frame:  %ld\n", report.init_frame);
    std::printf("th_r used:             %.4f px\n", report.th_r_used);
    std::printf("valid PnP:             %.1f %%\n", report.valid_pnp_pct);
    std::printf("eps_r < th_r:          %.1f %%\n", report.under_th_r_pct);
    std::printf("eps_d < th_d:          %.1f %%\n", report.under_th_d_pct);
    std::printf("detection success:     %.1f %%\n", report.detection_success_pct);
    std::printf("mean eps_d:            %.3f m\n", report.mean_eps_d);
    if (report.mean_err_filt_truth > 0 || report.p90_err_filt_truth > 0) {
        std::printf("mean err PnP vs truth:    %.3f m\n", report.mean_err_pnp_truth);
        std::printf("mean err Kalman vs truth: %.3f m\n", report.mean_err_filt_truth);
        std::printf("P90 err Kalman vs truth:  %.3f m\n", report.p90_err_filt_truth);
        std::printf("mean err Kalman vs GNSS:  %.3f m\n", report.mean_err_filt_gnss);
        std::printf("position err five-point [m]: %.3f / %.3f / %.3f / %.3f / %.3f\n",
                    s.err_filt_truth.min, s.err_filt_truth.q1, s.err_filt_truth.median,
                    s.err_filt_truth.q3, s.err_filt_truth.max);
        std::printf("orientation err five-point [deg]: %.3f / %.3f / %.3f / %.3f / %.3f\n",
                    pvloc::rad2deg(s.orientation_err.min), pvloc::rad2deg(s.orientation_err.q1),
                    pvloc::rad2deg(s.orientation_err.median), pvloc::rad2deg(s.orientation_err.q3),
                    pvloc::rad2deg(s.orientation_err.max));
    }
    std::printf("timings [ms/frame]: detect %.1f  track %.1f  pnp %.1f  filter %.1f  total %.1f\n",
                t.detect_ms, t.track_ms, t.pnp_ms, t.filter_ms, t.total_ms);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"PV plant visual localization replay"};
    app.require_subcommand(1);

    std::string config_path, spec_path, out_dir, in_dir;

    CLI::App* run = app.add_subcommand("run", "replay a flight with the localization pipeline");
    run->add_option("--config", config_path, "run configuration JSON")->required();

    CLI::App* sim = app.add_subcommand("simulate", "generate a synthetic flight");
    sim->add_option("--spec", spec_path, "simulation spec JSON")->required();
    sim->add_option("--out", out_dir, "output flight directory")->required();

    CLI::App* rep = app.add_subcommand("report", "validate and summarize a written report");
    rep->add_option("--in", in_dir, "report directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) {
            const pvloc::RunConfig config = pvloc::load_run_config(config_path);
            const pvloc::RunReport report = pvloc::run_replay(config);
            pvloc::write_report(report, config.output_dir);
            print_summary(report);
            std::printf("report written to %s\n", config.output_dir.c_str());
        } else if (sim->parsed()) {
            const pvloc::SimulationSpec spec = pvloc::load_simulation_spec(spec_path);
            pvloc::run_simulation(spec, out_dir);
            std::printf("flight written to %s\n", out_dir.c_str());
        } else if (rep->parsed()) {
            const pvloc::RunReport report = pvloc::read_report(in_dir);
            print_summary(report);
        }
    } catch (const pvloc::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const pvloc::InitializationError& e) {
        std::fprintf(stderr, "initialization failure: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
