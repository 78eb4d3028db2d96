// Command-line driver: one subcommand per experiment family. Every run reads
// a flat "section.key = value" config, writes CSV data plus a JSON summary
// into --out, and records a manifest with the config hash and git revision.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "combdiff/bandstructure.hpp"
#include "combdiff/bloch.hpp"
#include "combdiff/classical.hpp"
#include "combdiff/fiber.hpp"
#include "combdiff/harness.hpp"
#include "combdiff/io.hpp"
#include "combdiff/noise.hpp"
#include "combdiff/quantum.hpp"
#include "combdiff/stats.hpp"
#include "combdiff/threads.hpp"
#include "combdiff/zone.hpp"

namespace {

using namespace combdiff;

std::optional<NoiseModel> parse_noise(const Config& cfg) {
    const std::string kind = cfg.get("noise.kind", "gaussian");
    if (kind == "none") return std::nullopt;
    const double rate = cfg.get_double("noise.rate", 1.0);
    const double width = cfg.get_double("noise.width", 0.5);
    if (kind == "gaussian") return NoiseModel::gaussian(rate, width);
    if (kind == "window") return NoiseModel::window(rate, width);
    if (kind == "mixture") {
        const auto flat = cfg.get_list("noise.components");
        if (flat.empty() || flat.size() % 2 != 0)
            throw Error("noise.components needs rate width pairs");
        std::vector<WindowComponent> parts;
        for (std::size_t i = 0; i < flat.size(); i += 2)
            parts.push_back({flat[i], flat[i + 1]});
        return NoiseModel::mixture(std::move(parts));
    }
    throw Error("noise.kind must be gaussian, window, mixture, or none");
}

NoiseModel require_noise(const Config& cfg) {
    auto noise = parse_noise(cfg);
    if (!noise) throw Error("this experiment needs noise.kind != none");
    return *noise;
}

void finish(const std::string& out_dir, const std::string& command,
            Config& cfg, std::uint64_t seed, const ExperimentSummary& summary,
            std::vector<std::string> outputs) {
    outputs.push_back(summary.write(out_dir));
    write_manifest(out_dir, command, cfg, seed, outputs);
    std::printf("%s: %s (%s, %.2fs)\n", command.c_str(),
                summary.pass() ? "pass" : "FAIL",
                (out_dir + "/" + summary.experiment + "_summary.json").c_str(),
                summary.runtime_s);
}

int cmd_bands(Config cfg, std::uint64_t seed, const std::string& out) {
    const StopWatch watch;
    const double alpha = cfg.get_double("bands.alpha", 1.0);
    const double p_min = cfg.get_double("bands.p_min", -3.0);
    const double p_max = cfg.get_double("bands.p_max", 3.0);
    const auto n = cfg.get_int("bands.n", 1201);
    const auto n_gaps = cfg.get_int("bands.gaps", 60);
    if (n < 2 || p_max <= p_min) throw Error("bands: bad grid");
    const Dispersion bands(alpha);
    std::filesystem::create_directories(out);

    const std::string disp_path = out + "/bands_dispersion.csv";
    CsvWriter disp(disp_path);
    disp.row({"p", "q", "energy", "band", "theta"});
    double max_residual = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        const double p = p_min + (p_max - p_min) * static_cast<double>(i)
                                     / static_cast<double>(n - 1);
        const double q = bands.q(p);
        const double sinc = alpha == 0.0
                                ? 0.0
                                : alpha * std::sin(kTwoPi * q) / (2.0 * q);
        max_residual = std::max(
            max_residual,
            std::fabs(std::cos(kTwoPi * p) - std::cos(kTwoPi * q) - sinc));
        const auto band = static_cast<std::int64_t>(std::ceil(2.0 * q));
        disp.row({fmt_double(p), fmt_double(q), fmt_double(q * q),
                  fmt_int(band), fmt_double(theta(p))});
    }

    const std::string gaps_path = out + "/bands_gaps.csv";
    CsvWriter gaps(gaps_path);
    gaps.row({"n", "gap", "gap_times_pi_over_alpha"});
    double gap50_ratio = 0.0;
    for (std::int64_t g = 1; g <= n_gaps; ++g) {
        const double gap = bands.band_gap(static_cast<int>(g));
        const double ratio = alpha == 0.0 ? 0.0 : gap * kPi / alpha;
        if (g == 50) gap50_ratio = ratio;
        gaps.row({fmt_int(g), fmt_double(gap), fmt_double(ratio)});
    }

    ExperimentSummary s;
    s.experiment = "bands";
    s.seed = seed;
    s.params = json{{"alpha", alpha}, {"p_min", p_min}, {"p_max", p_max},
                    {"n", n},         {"gaps", n_gaps}};
    s.estimates["max_residual"] = {max_residual, 0.0};
    s.estimates["gap50_ratio"] = {gap50_ratio, 0.0};
    s.checks["residual_1e10"] = max_residual <= 1e-10;
    if (alpha > 0.0)
        s.checks["gap50_within_10pct"] = std::fabs(gap50_ratio - 1.0) <= 0.1;
    s.runtime_s = watch.seconds();
    finish(out, "bands", cfg, seed, s, {disp_path, gaps_path});
    return 0;
}

int cmd_kappa(Config cfg, std::uint64_t seed, const std::string& out) {
    const StopWatch watch;
    const double alpha = cfg.get_double("kappa.alpha", 1.0);
    const double p = cfg.get_double("kappa.p", 10.2);
    const double v = cfg.get_double("kappa.v", 0.7);
    const Dispersion bands(alpha);
    const KappaRow row = kappa_row(bands, p, v);
    std::filesystem::create_directories(out);

    const std::string row_path = out + "/kappa_row.csv";
    CsvWriter csv(row_path);
    csv.row({"n", "p_dst", "re", "im", "abs2"});
    for (std::int64_t m = -row.M; m <= row.M; ++m) {
        const cplx k = row.at(m);
        csv.row({fmt_int(m), fmt_double(p + v + static_cast<double>(m)),
                 fmt_double(k.real()), fmt_double(k.imag()),
                 fmt_double(std::norm(k))});
    }

    // quadrature cross-check on the straight-through channel
    const BlochBasis src(bands, p);
    const BlochBasis dst(bands, p + v);
    const cplx quad = kappa_quad(src, dst, v);
    const double quad_diff = std::abs(row.at(0) - quad);

    ExperimentSummary s;
    s.experiment = "kappa";
    s.seed = seed;
    s.params = json{{"alpha", alpha}, {"p", p}, {"v", v}};
    s.estimates["row_mass"] = {1.0 - row.tail, 0.0};
    s.estimates["tail"] = {row.tail, 0.0};
    s.estimates["window"] = {static_cast<double>(row.M), 0.0};
    s.estimates["quad_diff_n0"] = {quad_diff, 0.0};
    s.checks["unitary_1e6"] = std::fabs(row.tail) <= 1e-6;
    s.checks["quad_match_n0"] = quad_diff <= 1e-6;
    s.runtime_s = watch.seconds();
    finish(out, "kappa", cfg, seed, s, {row_path});
    return 0;
}

int cmd_noise(Config cfg, std::uint64_t seed, const std::string& out) {
    const StopWatch watch;
    const NoiseModel noise = require_noise(cfg);
    const double a = cfg.get_double("noise.a", 1.0);
    const auto rep = validate_assumptions(noise, a);
    std::filesystem::create_directories(out);

    double reach = noise.support_radius();
    if (!std::isfinite(reach))
        reach = 6.0 * std::sqrt(noise.sigma() / noise.rate());
    const std::string prof_path = out + "/noise_profile.csv";
    CsvWriter csv(prof_path);
    csv.row({"v", "j"});
    const int n = 801;
    for (int i = 0; i < n; ++i) {
        const double v = -reach + 2.0 * reach * i / (n - 1);
        csv.row({fmt_double(v), fmt_double(noise.density(v))});
    }

    ExperimentSummary s;
    s.experiment = "noise";
    s.seed = seed;
    s.params = json{{"a", a}, {"noise", noise_to_json(noise)}};
    s.estimates["rate"] = {noise.rate(), 0.0};
    s.estimates["sigma"] = {noise.sigma(), 0.0};
    s.estimates["exp_moment"] = {rep.exp_moment, 0.0};
    s.estimates["lattice_sum_sup"] = {rep.lattice_sum_sup, 0.0};
    s.estimates["inf_on_unit"] = {rep.inf_on_unit, 0.0};
    s.estimates["varpi"] = {rep.varpi, 0.0};
    s.checks["assumptions_pass"] = rep.pass;
    s.runtime_s = watch.seconds();
    finish(out, "noise", cfg, seed, s, {prof_path});
    return 0;
}

int cmd_classical(Config cfg, std::uint64_t seed, const std::string& out,
                  unsigned workers) {
    const StopWatch watch;
    const double alpha = cfg.get_double("classical.alpha", 1.0);
    const auto noise = parse_noise(cfg);
    const double K0 = cfg.get_double("classical.K0", 10.2);
    const double t_end = cfg.get_double("classical.t_end", 5.0);
    const auto n_paths = cfg.get_int("classical.n_paths", 2000);
    if (n_paths < 100) throw InsufficientSample("classical: n_paths >= 100");
    const Dispersion bands(alpha);
    std::filesystem::create_directories(out);

    std::vector<double> Ks(static_cast<std::size_t>(n_paths));
    std::vector<double> Ysv(static_cast<std::size_t>(n_paths));
    parallel_for(n_paths, [&](std::int64_t i) {
        TrajectoryConfig tc;
        tc.comb.alpha = alpha;
        tc.noise = noise;
        tc.K0 = K0;
        tc.t_end = t_end;
        tc.seed = seed;
        tc.stream = static_cast<std::uint64_t>(i);
        const auto st = simulate_path(tc, bands).final_state;
        Ks[static_cast<std::size_t>(i)] = st.K;
        Ysv[static_cast<std::size_t>(i)] = st.Y;
    }, workers);

    const std::string final_path = out + "/classical_final.csv";
    CsvWriter csv(final_path);
    csv.row({"stream", "K", "Y"});
    for (std::int64_t i = 0; i < n_paths; ++i)
        csv.row({fmt_int(i), fmt_double(Ks[static_cast<std::size_t>(i)]),
                 fmt_double(Ysv[static_cast<std::size_t>(i)])});

    TrajectoryConfig tc;
    tc.comb.alpha = alpha;
    tc.noise = noise;
    tc.K0 = K0;
    tc.t_end = t_end;
    tc.seed = seed;
    tc.record = RecordMode::dense;
    tc.dense_dt = t_end / 400.0;
    const auto trace = simulate_path(tc, bands).trace;
    const std::string trace_path = out + "/classical_trace.csv";
    CsvWriter tcsv(trace_path);
    tcsv.row({"t", "K", "Y"});
    for (const auto& pt : trace)
        tcsv.row({fmt_double(pt.t), fmt_double(pt.K), fmt_double(pt.Y)});

    MeanVar de;
    for (const double k : Ks) de.add(bands.energy(k) - bands.energy(K0));
    const double sigma_t = noise ? noise->sigma() * t_end : 0.0;

    ExperimentSummary s;
    s.experiment = "classical";
    s.seed = seed;
    s.params = json{{"alpha", alpha}, {"K0", K0}, {"t_end", t_end},
                    {"n_paths", n_paths}, {"noise", noise_to_json(noise)}};
    s.estimates["energy_drift"] = {de.mean, de.se()};
    s.estimates["sigma_t"] = {sigma_t, 0.0};
    s.checks["energy_drift_4se"] =
        std::fabs(de.mean - sigma_t) <= 4.0 * std::max(de.se(), 1e-12);
    s.runtime_s = watch.seconds();
    finish(out, "classical", cfg, seed, s, {final_path, trace_path});
    return 0;
}

int cmd_quantum(Config cfg, std::uint64_t seed, const std::string& out,
                unsigned workers) {
    const StopWatch watch;
    const double alpha = cfg.get_double("quantum.alpha", 1.0);
    const auto noise = parse_noise(cfg);
    UnravelingConfig uc;
    uc.p0 = cfg.get_double("quantum.p0", 10.2);
    uc.lambda = cfg.get_double("quantum.lambda", 0.1);
    uc.varrho = cfg.get_double("quantum.varrho", 1.0);
    uc.t_end = cfg.get_double("quantum.t_end", 1.0);
    uc.M = cfg.get_int("quantum.M", 48);
    uc.seed = seed;
    const auto n_paths = cfg.get_int("quantum.n_paths", 200);
    if (n_paths < 1) throw Error("quantum: n_paths >= 1");
    const Dispersion bands(alpha);
    std::filesystem::create_directories(out);

    std::vector<UnravelingResult> results(static_cast<std::size_t>(n_paths));
    parallel_for(n_paths, [&](std::int64_t i) {
        UnravelingConfig u = uc;
        u.stream = static_cast<std::uint64_t>(i);
        results[static_cast<std::size_t>(i)] =
            levy_trajectory(u, bands, noise ? &*noise : nullptr);
    }, workers);

    std::map<std::int64_t, double> hist;
    MeanVar energy, kicks;
    double max_leak = 0.0;
    std::int64_t nudges = 0;
    double mass = 0.0;
    for (const auto& r : results) {
        energy.add(r.energy);
        kicks.add(static_cast<double>(r.kicks));
        max_leak = std::max(max_leak, r.psi.leaked_mass);
        nudges += r.nudges;
        for (std::size_t i = 0; i < r.band_weights.size(); ++i) {
            const double w = r.band_weights[i];
            if (w <= 0.0) continue;
            hist[detail::band_label(
                r.psi.momentum(static_cast<std::int64_t>(i)))] += w;
            mass += w;
        }
    }

    const std::string hist_path = out + "/quantum_bands.csv";
    CsvWriter csv(hist_path);
    csv.row({"band_label", "weight"});
    for (const auto& [label, w] : hist)
        csv.row({fmt_int(label), fmt_double(w / mass)});

    ExperimentSummary s;
    s.experiment = "quantum";
    s.seed = seed;
    s.params = json{{"alpha", alpha},   {"p0", uc.p0},
                    {"lambda", uc.lambda}, {"varrho", uc.varrho},
                    {"t_end", uc.t_end},   {"M", uc.M},
                    {"n_paths", n_paths},  {"noise", noise_to_json(noise)}};
    s.estimates["mean_energy"] = {energy.mean, energy.se()};
    s.estimates["mean_kicks"] = {kicks.mean, kicks.se()};
    s.estimates["max_leak"] = {max_leak, 0.0};
    s.estimates["nudges"] = {static_cast<double>(nudges), 0.0};
    s.checks["leak_below_1e4"] = max_leak <= 1e-4;
    s.runtime_s = watch.seconds();
    finish(out, "quantum", cfg, seed, s, {hist_path});
    return 0;
}

int cmd_fiber(Config cfg, std::uint64_t seed, const std::string& out) {
    const StopWatch watch;
    const double alpha = cfg.get_double("fiber.alpha", 1.0);
    const auto noise = parse_noise(cfg);
    const std::string kind_name = cfg.get("fiber.kind", "quantum");
    FiberKind kind;
    if (kind_name == "quantum") kind = FiberKind::quantumFiber;
    else if (kind_name == "classical") kind = FiberKind::classicalFiber;
    else if (kind_name == "hybrid") kind = FiberKind::hybrid;
    else throw Error("fiber.kind must be quantum, classical, or hybrid");
    const double k = cfg.get_double("fiber.k", 0.004);
    const double lambda = cfg.get_double("fiber.lambda", 0.1);
    const double varrho = cfg.get_double("fiber.varrho", 1.0);
    const double t = cfg.get_double("fiber.t", 5.0);
    double dt = cfg.get_double("fiber.dt", 0.0);
    const double mean = cfg.get_double("start.mean", 12.2);
    const double width = cfg.get_double("start.width", 0.1);
    MomentumGrid grid;
    grid.center = cfg.get_double("grid.center", 0.0);
    grid.h = cfg.get_double("grid.h", 0.0099);
    grid.count = cfg.get_int("grid.count", 4096);
    const Dispersion bands(alpha);
    std::filesystem::create_directories(out);

    const FiberDensity f0 = gaussian_density(grid, mean, width, k);
    const GeneratorSpec spec = build_generator(kind, k, lambda, varrho, grid,
                                               bands, noise ? &*noise : nullptr);
    if (dt <= 0.0)
        dt = spec.rate > 0.0 ? 0.099 / spec.rate : std::max(t / 16.0, 1e-3);
    const FiberDensity ft = evolve(f0, spec, t, dt);

    const std::string state_path = out + "/fiber_state.csv";
    CsvWriter csv(state_path);
    csv.row({"p", "re", "im", "abs"});
    for (std::int64_t i = 0; i < grid.count; ++i) {
        const cplx val = ft.values[static_cast<std::size_t>(i)];
        csv.row({fmt_double(grid.point(i)), fmt_double(val.real()),
                 fmt_double(val.imag()), fmt_double(std::abs(val))});
    }

    const auto dist = compare_semigroups(k, lambda, varrho, t, f0, bands,
                                         noise ? &*noise : nullptr, dt);
    const cplx cv = char_value(ft);

    ExperimentSummary s;
    s.experiment = "fiber";
    s.seed = seed;
    s.params = json{{"alpha", alpha},   {"kind", kind_name},
                    {"k", k},           {"lambda", lambda},
                    {"varrho", varrho}, {"t", t},
                    {"dt", dt},         {"mean", mean},
                    {"width", width},   {"grid_h", grid.h},
                    {"grid_count", grid.count},
                    {"noise", noise_to_json(noise)}};
    s.estimates["mass"] = {ft.mass(), 0.0};
    s.estimates["char_re"] = {cv.real(), 0.0};
    s.estimates["char_im"] = {cv.imag(), 0.0};
    s.estimates["dist_quantum_classical"] = {dist.quantum_classical, 0.0};
    s.estimates["dist_quantum_hybrid"] = {dist.quantum_hybrid, 0.0};
    s.checks["mass_bounded"] = ft.mass() <= f0.mass() + 1e-7;
    s.runtime_s = watch.seconds();
    finish(out, "fiber", cfg, seed, s, {state_path});
    return 0;
}

int cmd_clt(Config cfg, std::uint64_t seed, const std::string& out,
            unsigned workers) {
    CltConfig cc;
    cc.alpha = cfg.get_double("clt.alpha", 1.0);
    cc.lambda = cfg.get_double("clt.lambda", 0.02);
    cc.gamma = cfg.get_double("clt.gamma", 1.5);
    cc.varrho = cfg.get_double("clt.varrho", 1.75);
    cc.p0 = cfg.get_double("clt.p0", 1.0);
    cc.T = cfg.get_double("clt.T", 8.0);
    cc.n_paths = cfg.get_int("clt.n_paths", 10000);
    cc.seed = seed;
    cc.noise = parse_noise(cfg);
    auto rep = run_clt(cc, workers);
    std::filesystem::create_directories(out);

    const std::string sample_path = out + "/clt_sample.csv";
    CsvWriter csv(sample_path);
    csv.row({"stream", "y_scaled"});
    for (std::size_t i = 0; i < rep.scaled.size(); ++i)
        csv.row({fmt_int(static_cast<std::int64_t>(i)),
                 fmt_double(rep.scaled[i])});
    std::vector<std::string> outputs{sample_path};

    if (cc.noise && cc.alpha > 0.0) {
        const auto n_oracle = cfg.get_int("clt.oracle_paths", cc.n_paths);
        const auto oracle =
            renewal_sample(cc, n_oracle, seed + 1000003, workers);
        const std::string oracle_path = out + "/clt_oracle.csv";
        CsvWriter ocsv(oracle_path);
        ocsv.row({"stream", "y_scaled"});
        for (std::size_t i = 0; i < oracle.size(); ++i)
            ocsv.row({fmt_int(static_cast<std::int64_t>(i)),
                      fmt_double(oracle[i])});
        outputs.push_back(oracle_path);
        const auto two = ks_test_two(rep.scaled, oracle);
        rep.summary.estimates["two_sample_d"] = {two.d, 0.0};
        rep.summary.estimates["two_sample_p"] = {two.p, 0.0};
        rep.summary.checks["renewal_match_p01"] = two.p > 0.01;
    }
    finish(out, "clt", cfg, seed, rep.summary, outputs);
    return 0;
}

int cmd_ballistic(Config cfg, std::uint64_t seed, const std::string& out,
                  unsigned workers) {
    const std::string mode = cfg.get("ballistic.mode", "no_comb");
    std::filesystem::create_directories(out);
    if (mode == "no_noise") {
        BallisticFreeConfig bc;
        bc.alpha = cfg.get_double("ballistic.alpha", 1.0);
        bc.lambda = cfg.get_double("ballistic.lambda", 0.1);
        bc.gamma = cfg.get_double("ballistic.gamma", 1.5);
        bc.p0 = cfg.get_double("ballistic.p0", 1.0);
        bc.T = cfg.get_double("ballistic.T", 8.0);
        bc.velocity_p = cfg.get_double("ballistic.velocity_p", 10.2);
        const auto rep = run_ballistic_no_noise(bc);

        const Dispersion bands(bc.alpha);
        const std::string vel_path = out + "/ballistic_velocity.csv";
        CsvWriter csv(vel_path);
        csv.row({"p", "group_velocity", "free", "ratio"});
        for (const double p : {5.2, 10.2, 25.3, 50.3}) {
            const double gv = bands.group_velocity(p);
            csv.row({fmt_double(p), fmt_double(gv), fmt_double(2.0 * p),
                     fmt_double(gv / (2.0 * p))});
        }
        finish(out, "ballistic", cfg, seed, rep.summary, {vel_path});
        return 0;
    }
    if (mode != "no_comb")
        throw Error("ballistic.mode must be no_comb or no_noise");

    BallisticKickedConfig bc;
    bc.noise = require_noise(cfg);
    bc.K0 = cfg.get_double("ballistic.K0", 10.0);
    bc.t = cfg.get_double("ballistic.t", 2.0);
    bc.n_paths = cfg.get_int("ballistic.n_paths", 20000);
    bc.seed = seed;
    const auto us = cfg.get_list("ballistic.u");
    const auto qs = cfg.get_list("ballistic.q");
    if (us.size() != qs.size()) throw Error("ballistic: u and q lists differ");
    if (!us.empty()) {
        bc.probes.clear();
        for (std::size_t i = 0; i < us.size(); ++i)
            bc.probes.push_back({us[i], qs[i]});
    }
    const auto rep = run_ballistic_no_comb(bc, workers);

    const std::string probe_path = out + "/ballistic_probes.csv";
    CsvWriter csv(probe_path);
    csv.row({"u", "q", "closed_re", "closed_im", "mc_re", "mc_im", "se_re",
             "se_im"});
    for (const auto& pr : rep.probes)
        csv.row({fmt_double(pr.u), fmt_double(pr.q),
                 fmt_double(pr.closed.real()), fmt_double(pr.closed.imag()),
                 fmt_double(pr.sampled.real()), fmt_double(pr.sampled.imag()),
                 fmt_double(pr.se_re), fmt_double(pr.se_im)});
    finish(out, "ballistic", cfg, seed, rep.summary, {probe_path});
    return 0;
}

int cmd_adiabatic(Config cfg, std::uint64_t seed, const std::string& out,
                  unsigned workers) {
    AdiabaticConfig ac;
    ac.alpha = cfg.get_double("adiabatic.alpha", 1.0);
    ac.p0 = cfg.get_double("adiabatic.p0", 2.7);
    ac.noise = parse_noise(cfg);
    ac.t_end = cfg.get_double("adiabatic.t_end", 1.5);
    ac.n_quantum = cfg.get_int("adiabatic.n_quantum", 6000);
    ac.n_classical = cfg.get_int("adiabatic.n_classical", 200000);
    ac.M = cfg.get_int("adiabatic.M", 48);
    ac.seed = seed;
    ac.paired = cfg.get_bool("adiabatic.paired", false);
    auto levels = cfg.get_list("adiabatic.levels");
    if (levels.empty()) levels = {0.3, 0.1, 0.03};
    const auto rep = run_adiabatic_sweep(ac, levels, workers);
    std::filesystem::create_directories(out);

    const std::string lv_path = out + "/adiabatic_levels.csv";
    CsvWriter csv(lv_path);
    csv.row({"lam_rho", "tv", "se_proxy"});
    for (const auto& lv : rep.levels)
        csv.row({fmt_double(lv.lam_rho), fmt_double(lv.tv),
                 fmt_double(lv.se_proxy)});
    finish(out, "adiabatic", cfg, seed, rep.summary, {lv_path});
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"quantum comb diffusion experiments"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = "out";
    std::int64_t seed_flag = -1;
    unsigned workers = 0;
    int rc = 0;

    auto make = [&](const std::string& name, const std::string& desc,
                    auto handler) {
        auto* sub = app.add_subcommand(name, desc);
        sub->add_option("--config", config_path, "flat key = value file");
        sub->add_option("--seed", seed_flag, "RNG seed (overrides the config)");
        sub->add_option("--out", out_dir, "output directory");
        sub->add_option("--workers", workers, "worker threads (0 = all cores)");
        sub->callback([&, name, handler] {
            Config cfg = config_path.empty() ? Config()
                                             : Config::from_file(config_path);
            const std::uint64_t seed =
                seed_flag >= 0 ? static_cast<std::uint64_t>(seed_flag)
                               : static_cast<std::uint64_t>(
                                     cfg.get_int(name + ".seed", 1));
            cfg.set(name + ".seed", fmt_int(static_cast<std::int64_t>(seed)));
            rc = handler(cfg, seed, out_dir);
        });
        return sub;
    };

    make("bands", "dispersion relation and band gaps",
         [&](Config c, std::uint64_t s, const std::string& o) {
             return cmd_bands(std::move(c), s, o);
         });
    make("kappa", "kick matrix elements across diffraction channels",
         [&](Config c, std::uint64_t s, const std::string& o) {
             return cmd_kappa(std::move(c), s, o);
         });
    make("noise", "kick density profile and admissibility report",
         [&](Config c, std::uint64_t s, const std::string& o) {
             return cmd_noise(std::move(c), s, o);
         });
    make("classical", "momentum jump chain ensemble",
         [&](Config c, std::uint64_t s, const std::string& o) {
             return cmd_classical(std::move(c), s, o, workers);
         });
    make("quantum", "kicked fiber wavefunction ensemble",
         [&](Config c, std::uint64_t s, const std::string& o) {
             return cmd_quantum(std::move(c), s, o, workers);
         });
    make("fiber", "fiber semigroup evolution and comparisons",
         [&](Config c, std::uint64_t s, const std::string& o) {
             return cmd_fiber(std::move(c), s, o);
         });
    make("clt", "diffusive-limit endpoint statistics",
         [&](Config c, std::uint64_t s, const std::string& o) {
             return cmd_clt(std::move(c), s, o, workers);
         });
    make("ballistic", "ballistic controls without kicks or without the comb",
         [&](Config c, std::uint64_t s, const std::string& o) {
             return cmd_ballistic(std::move(c), s, o, workers);
         });
    make("adiabatic", "band populations against the classical chain",
         [&](Config c, std::uint64_t s, const std::string& o) {
             return cmd_adiabatic(std::move(c), s, o, workers);
         });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return rc;
}
