// spinlat: deterministic command-line front end for the spin-lattice
// quantization library. Emits CSV tables and JSON reports; identical inputs
// produce byte-identical outputs.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <random>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "spinlat/config.hpp"
#include "spinlat/semiclassics.hpp"
#include "spinlat/uniqueness.hpp"

namespace {

constexpr const char* kVersion = "0.1.0";

using namespace spinlat;
using nlohmann::json;

std::string fmt17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string site_str(const Site& s) {
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ':';
        out += std::to_string(s[i]);
    }
    return out;
}

struct CsvWriter {
    std::ostringstream body;
    std::string path;  // empty = stdout

    CsvWriter(const std::string& out_dir, const std::string& name, const std::string& header,
              const std::string& hash) {
        if (!out_dir.empty()) {
            std::filesystem::create_directories(out_dir);
            path = out_dir + "/" + name;
        }
        body << header << "\n";
        body << "# spinlat " << kVersion << " config=" << hash << "\n";
    }
    void row(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) body << ',';
            body << cells[i];
        }
        body << "\n";
    }
    void footer(const std::string& text) { body << "# " << text << "\n"; }
    void flush() {
        if (path.empty()) {
            std::cout << body.str();
        } else {
            std::ofstream f(path, std::ios::binary);
            f << body.str();
        }
    }
};

void write_json(const std::string& out_dir, const std::string& name, const json& j) {
    if (out_dir.empty()) {
        std::cout << j.dump(2) << "\n";
    } else {
        std::filesystem::create_directories(out_dir);
        std::ofstream f(out_dir + "/" + name, std::ios::binary);
        f << j.dump(2) << "\n";
    }
}

// ordered parallel map over an index range; results merged in index order so the
// emitted bytes do not depend on the thread count
template <typename Fn>
std::vector<double> ordered_map(int threads, int n, Fn&& fn) {
    std::vector<double> out(n);
    if (threads <= 1) {
        for (int i = 0; i < n; ++i) out[i] = fn(i);
        return out;
    }
    std::vector<std::future<void>> futs;
    std::atomic<int> next{0};
    for (int t = 0; t < threads; ++t)
        futs.push_back(std::async(std::launch::async, [&] {
            for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) out[i] = fn(i);
        }));
    for (auto& f : futs) f.get();
    return out;
}

LatticeObservable default_observable(const ExperimentConfig& cfg, int l, int m) {
    if (cfg.observable) return *cfg.observable;
    return LatticeObservable::harmonic(cfg.region, cfg.region.min_site(), l, m);
}

LatticeObservable random_band2(const Region& region, const Site& x, unsigned seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    LatticeObservable f(region);
    for (int l = 1; l <= 2; ++l) {
        f.add({SiteFactor{x, l, 0}}, Complex(u(rng), 0));
        for (int m = 1; m <= l; ++m) {
            const Complex c(u(rng), u(rng));
            f.add({SiteFactor{x, l, m}}, c);
            f.add({SiteFactor{x, l, -m}}, ((m % 2) ? -1.0 : 1.0) * std::conj(c));
        }
    }
    return f;
}

void scan_footer(CsvWriter& csv, const ScanResult& r) {
    if (r.identically_zero) {
        csv.footer("identically_zero");
    } else if (r.fitted) {
        csv.footer("fitted_exponent=" + fmt17(r.exponent) +
                   " max_log_residual=" + fmt17(r.max_log_residual));
    } else {
        csv.footer("no_fit");
    }
}

int run_special(const std::string& kind, double max_j, const std::string& out_dir) {
    const HalfInt jmax = HalfInt::from_double(max_j);
    json args{{"cmd", "special"}, {"kind", kind}, {"max_twoj", jmax.twice}};
    const std::string hash = config_hash(args);
    if (kind == "cg") {
        CsvWriter csv(out_dir, "special_cg.csv", "twoj1,twom1,twoj2,twom2,twoj,twom,value",
                      hash);
        for (int tj1 = 0; tj1 <= jmax.twice; ++tj1)
            for (int tj2 = 0; tj2 <= jmax.twice; ++tj2)
                for (int tj = std::abs(tj1 - tj2); tj <= std::min(tj1 + tj2, jmax.twice);
                     tj += 2)
                    for (int tm1 = -tj1; tm1 <= tj1; tm1 += 2)
                        for (int tm2 = -tj2; tm2 <= tj2; tm2 += 2) {
                            const int tm = tm1 + tm2;
                            if (std::abs(tm) > tj) continue;
                            const double v = clebsch_gordan(HalfInt(tj1), HalfInt(tm1),
                                                            HalfInt(tj2), HalfInt(tm2),
                                                            HalfInt(tj), HalfInt(tm));
                            csv.row({std::to_string(tj1), std::to_string(tm1),
                                     std::to_string(tj2), std::to_string(tm2),
                                     std::to_string(tj), std::to_string(tm), fmt17(v)});
                        }
        csv.flush();
    } else if (kind == "6j") {
        CsvWriter csv(out_dir, "special_6j.csv", "twoj1,twoj2,twoj3,twoj4,twoj5,twoj6,value",
                      hash);
        for (int a = 0; a <= jmax.twice; ++a)
            for (int b = 0; b <= jmax.twice; ++b)
                for (int c = std::abs(a - b); c <= std::min(a + b, jmax.twice); c += 2)
                    for (int d = 0; d <= jmax.twice; ++d)
                        for (int e = std::abs(d - c); e <= std::min(d + c, jmax.twice); e += 2)
                            for (int f = std::abs(a - e); f <= std::min(a + e, jmax.twice);
                                 f += 2) {
                                if (!triangle_ok(HalfInt(d), HalfInt(b), HalfInt(f))) continue;
                                const double v = six_j(HalfInt(a), HalfInt(b), HalfInt(c),
                                                       HalfInt(d), HalfInt(e), HalfInt(f));
                                csv.row({std::to_string(a), std::to_string(b),
                                         std::to_string(c), std::to_string(d),
                                         std::to_string(e), std::to_string(f), fmt17(v)});
                            }
        csv.flush();
    } else if (kind == "d") {
        CsvWriter csv(out_dir, "special_d.csv", "twoj,twom,twok,theta,value", hash);
        for (int tj = 0; tj <= jmax.twice; ++tj)
            for (int tm = -tj; tm <= tj; tm += 2)
                for (int tk = -tj; tk <= tj; tk += 2)
                    for (int step = 0; step <= 8; ++step) {
                        const double theta = std::numbers::pi * step / 8;
                        csv.row({std::to_string(tj), std::to_string(tm), std::to_string(tk),
                                 fmt17(theta),
                                 fmt17(wigner_small_d(HalfInt(tj), HalfInt(tm), HalfInt(tk),
                                                      theta))});
                    }
        csv.flush();
    } else {
        throw ConfigError("special: unknown kind " + kind);
    }
    return 0;
}

int run_dgr_scan(const ExperimentConfig& cfg, const std::string& pair, int threads,
                 const std::string& out_dir) {
    if (cfg.js.empty()) throw ConfigError("dgr-scan: config needs a js list");
    const Site x = cfg.region.min_site();
    LatticeObservable a(cfg.region), b(cfg.region);
    if (pair == "cartesian") {
        a = cartesian_coord(cfg.region, x, 1);
        b = cartesian_coord(cfg.region, x, 2);
    } else if (pair == "random") {
        a = random_band2(cfg.region, x, cfg.seed);
        b = random_band2(cfg.region, x, cfg.seed + 1);
    } else {
        throw ConfigError("dgr-scan: pair must be cartesian or random");
    }
    const auto vals = ordered_map(threads, static_cast<int>(cfg.js.size()), [&](int i) {
        return dgr_defect(SpinContext{cfg.js[i]}, a, b);
    });
    CsvWriter csv(out_dir, "dgr_scan.csv", "twoj,j,value", config_hash(cfg.raw));
    std::vector<std::pair<double, double>> rows;
    for (std::size_t i = 0; i < cfg.js.size(); ++i)
        csv.row({std::to_string(cfg.js[i].twice), fmt17(cfg.js[i].value()), fmt17(vals[i])});
    ScanResult fit = scan(cfg.js, [&](HalfInt j) {
        for (std::size_t i = 0; i < cfg.js.size(); ++i)
            if (cfg.js[i].twice == j.twice) return vals[i];
        return 0.0;
    });
    scan_footer(csv, fit);
    csv.flush();
    return 0;
}

int run_deriv_limit(const ExperimentConfig& cfg, int threads, const std::string& out_dir) {
    if (cfg.js.empty()) throw ConfigError("deriv-limit: config needs a js list");
    const LatticeObservable a = default_observable(cfg, 1, 1);
    const auto vals = ordered_map(threads, static_cast<int>(cfg.js.size()), [&](int i) {
        return derivation_limit_defect(SpinContext{cfg.js[i]}, cfg.potential, a);
    });
    CsvWriter csv(out_dir, "deriv_limit.csv", "twoj,j,value", config_hash(cfg.raw));
    for (std::size_t i = 0; i < cfg.js.size(); ++i)
        csv.row({std::to_string(cfg.js[i].twice), fmt17(cfg.js[i].value()), fmt17(vals[i])});
    ScanResult fit = scan(cfg.js, [&](HalfInt j) {
        for (std::size_t i = 0; i < cfg.js.size(); ++i)
            if (cfg.js[i].twice == j.twice) return vals[i];
        return 0.0;
    });
    scan_footer(csv, fit);
    csv.flush();
    return 0;
}

int run_gibbs_compare(const ExperimentConfig& cfg, int threads, const std::string& out_dir) {
    if (cfg.js.empty()) throw ConfigError("gibbs-compare: config needs a js list");
    if (cfg.betas.empty()) throw ConfigError("gibbs-compare: config needs a betas list");
    const double beta = cfg.betas.front();
    const LatticeObservable a = default_observable(cfg, 1, 0);
    const auto vals = ordered_map(threads, static_cast<int>(cfg.js.size()), [&](int i) {
        return gibbs_limit_gap(SpinContext{cfg.js[i]}, cfg.potential, cfg.region, beta, a,
                               cfg.quad_degree);
    });
    CsvWriter csv(out_dir, "gibbs_compare.csv", "twoj,j,value", config_hash(cfg.raw));
    for (std::size_t i = 0; i < cfg.js.size(); ++i)
        csv.row({std::to_string(cfg.js[i].twice), fmt17(cfg.js[i].value()), fmt17(vals[i])});
    ScanResult fit = scan(cfg.js, [&](HalfInt j) {
        for (std::size_t i = 0; i < cfg.js.size(); ++i)
            if (cfg.js[i].twice == j.twice) return vals[i];
        return 0.0;
    });
    scan_footer(csv, fit);
    csv.flush();
    return 0;
}

int run_kms_check(const ExperimentConfig& cfg, const std::string& out_dir) {
    if (cfg.js.empty()) throw ConfigError("kms-check: config needs a js list");
    if (cfg.betas.empty()) throw ConfigError("kms-check: config needs a betas list");
    CsvWriter csv(out_dir, "kms_check.csv", "check,beta,param,value", config_hash(cfg.raw));
    const SpinContext ctx{cfg.js.front()};
    const Site x = cfg.region.min_site();
    std::mt19937 rng(cfg.seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const long dim = tensor_dim(ctx, cfg.region);
    auto rand_mat = [&] {
        Matrix m(dim, dim);
        for (long r = 0; r < dim; ++r)
            for (long c = 0; c < dim; ++c) m(r, c) = Complex(u(rng), u(rng));
        return m;
    };

    for (double beta : cfg.betas) {
        const QuantumGibbs qg(ctx, cfg.potential, cfg.region, beta);
        double worst_q = 0.0;
        for (int trial = 0; trial < 3; ++trial) {
            const Matrix A = rand_mat(), B = rand_mat();
            worst_q = std::max(worst_q,
                               kms_residual_quantum(qg, A, B) / (op_norm(A) * op_norm(B)));
        }
        csv.row({"quantum_kms_relative", fmt17(beta), "", fmt17(worst_q)});

        double worst_gap = 0.0;
        bool any = false;
        for (int trial = 0; trial < 10; ++trial) {
            const double g = autocorr_gap_quantum(qg, rand_mat());
            if (!any || g < worst_gap) worst_gap = g;
            any = true;
        }
        csv.row({"autocorr_quantum_min_gap", fmt17(beta), "", fmt17(worst_gap)});

        const LatticeObservable a =
            LatticeObservable::harmonic(cfg.region, x, 1, 1);
        const LatticeObservable b =
            LatticeObservable::harmonic(cfg.region, x, 1, -1);
        for (int degree : {cfg.quad_degree, 2 * cfg.quad_degree}) {
            const ClassicalGibbs cg(cfg.potential, cfg.region, beta, degree);
            csv.row({"classical_kms_residual", fmt17(beta), std::to_string(degree),
                     fmt17(kms_residual_classical(cg, a, b))});
        }
        const ClassicalGibbs cg(cfg.potential, cfg.region, beta, cfg.quad_degree);
        csv.row({"autocorr_classical_absgap", fmt17(beta), "",
                 fmt17(std::abs(autocorr_gap_classical(cg, a)))});
        for (int trial = 0; trial < 3; ++trial) {
            const double al = 3.0 * u(rng), be = 1.5 * std::abs(u(rng)) + 0.05,
                         ga = 3.0 * u(rng);
            csv.row({"rotation_residual", fmt17(beta), std::to_string(trial),
                     fmt17(rotation_identity_residual(cg, cfg.potential, x, al, be, ga, a))});
        }
    }
    csv.flush();
    return 0;
}

int run_critical_beta(const ExperimentConfig& cfg, const std::string& cdelta_mode,
                      const std::string& out_dir) {
    const CDeltaMode mode =
        cdelta_mode == "paper" ? CDeltaMode::Paper : CDeltaMode::Spectral;
    const double cd = c_delta(mode);
    const KsValue ks = k_s(cfg.s, 1e-10);
    json out;
    out["k_s"] = k_s(cfg.s, 1e-10).value;
    out["k_s_certified_error"] = ks.certified_error;
    out["c_delta_mode"] = (mode == CDeltaMode::Spectral ? "spectral" : "paper");
    out["c_delta"] = cd;
    out["s"] = cfg.s;
    out["eps"] = cfg.eps;
    out["norm_0s"] = potential_norm(cfg.potential, 0.0, cfg.s, cd);
    out["norm_eps_s"] = potential_norm(cfg.potential, cfg.eps, cfg.s, cd);
    out["beta_classical"] = beta_classical(cfg.potential, cfg.s, cd);
    out["beta_quantum"] = beta_quantum(cfg.potential, cfg.eps, cfg.s, cd);
    const auto [eps_opt, beta_opt] = beta_quantum_optimized(cfg.potential, cfg.s, cd);
    out["eps_opt"] = eps_opt;
    out["beta_quantum_opt"] = beta_opt;
    write_json(out_dir, "critical_beta.json", out);
    return 0;
}

int run_ks_solve(const ExperimentConfig& cfg, const std::string& mode, double beta, int lmax,
                 int nmax, double jval, const std::string& out_dir) {
    Truncation t = cfg.truncation;
    if (lmax > 0) t.lmax = lmax;
    if (nmax > 0) t.nmax = nmax;
    KSReport rep;
    if (mode == "classical") {
        rep = ks_solve_classical(cfg.potential, beta, t, cfg.s);
    } else if (mode == "quantum") {
        if (jval <= 0) throw ConfigError("ks-solve: quantum mode needs --j");
        const SpinContext ctx{HalfInt::from_double(jval)};
        rep = ks_solve_quantum(ctx, cfg.potential, beta, t, cfg.eps, cfg.s);
    } else {
        throw ConfigError("ks-solve: mode must be classical or quantum");
    }
    json out;
    out["mode"] = mode;
    out["beta"] = rep.beta;
    out["theoretical_norm_bound"] = rep.theoretical_norm_bound;
    out["empirical_norm_estimate"] = rep.empirical_norm_estimate;
    out["iterations"] = rep.iterations;
    out["final_residual"] = rep.final_residual;
    out["dropped_mass"] = rep.dropped_mass;
    out["converged"] = rep.converged;
    out["below_threshold"] = rep.below_threshold;
    write_json(out_dir, "ks_report.json", out);

    CsvWriter csv(out_dir, "ks_moments.csv", "region,l,m,re,im", config_hash(cfg.raw));
    csv.row({"", "", "", fmt17(rep.moments.empty.real()), fmt17(rep.moments.empty.imag())});
    for (const auto& [idx, v] : rep.moments.entries) {
        std::string reg, ls, ms;
        for (std::size_t i = 0; i < idx.size(); ++i) {
            if (i) {
                reg += ';';
                ls += ';';
                ms += ';';
            }
            reg += site_str(idx[i].site);
            ls += std::to_string(idx[i].l);
            ms += std::to_string(idx[i].m);
        }
        csv.row({reg, ls, ms, fmt17(v.real()), fmt17(v.imag())});
    }
    csv.flush();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"spin lattice quantization toolkit"};
    app.require_subcommand(1);

    std::string config_path, out_dir;
    int threads = 1;
    unsigned seed_override = 0;
    bool seed_set = false;
    app.add_option("--config", config_path, "experiment configuration (JSON)");
    app.add_option("--out", out_dir, "output directory (default: stdout)");
    app.add_option("--threads", threads, "worker threads for scans (default 1)");
    app.add_option("--seed", seed_override, "override the config seed")
        ->each([&](const std::string&) { seed_set = true; });

    auto* sp_special = app.add_subcommand("special", "coefficient tables for golden tests");
    std::string kind = "cg";
    double max_j = 2.0;
    sp_special->add_option("--kind", kind, "cg | 6j | d");
    sp_special->add_option("--max-j", max_j, "largest spin in the table");

    auto* sp_dgr = app.add_subcommand("dgr-scan", "scaled-commutator defect scan over j");
    std::string pair = "cartesian";
    sp_dgr->add_option("--pair", pair, "cartesian | random");

    auto* sp_deriv = app.add_subcommand("deriv-limit", "derivation-limit defect scan over j");
    auto* sp_gibbs = app.add_subcommand("gibbs-compare",
                                        "quantum vs classical Gibbs moments over j");
    auto* sp_kms = app.add_subcommand("kms-check", "thermal-equilibrium residual checks");
    auto* sp_crit = app.add_subcommand("critical-beta", "threshold constants and temperatures");
    std::string cdelta_mode = "spectral";
    int s_override = 0;
    double eps_override = -1.0;
    sp_crit->add_option("--s", s_override, "Sobolev order (overrides config)");
    sp_crit->add_option("--eps", eps_override, "epsilon (overrides config)");
    sp_crit->add_option("--c-delta-mode", cdelta_mode, "spectral | paper");

    auto* sp_ks = app.add_subcommand("ks-solve", "truncated fixed-point solve");
    std::string ks_mode = "classical";
    double ks_beta = 0.0, ks_j = 0.0;
    int ks_lmax = 0, ks_nmax = 0;
    sp_ks->add_option("--mode", ks_mode, "classical | quantum");
    sp_ks->add_option("--beta", ks_beta, "inverse temperature")->required();
    sp_ks->add_option("--lmax", ks_lmax, "per-site harmonic cutoff");
    sp_ks->add_option("--nmax", ks_nmax, "series order cutoff");
    sp_ks->add_option("--j", ks_j, "spin (quantum mode)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (sp_special->parsed()) return run_special(kind, max_j, out_dir);

        ExperimentConfig cfg;
        if (!config_path.empty()) {
            cfg = load_config(config_path);
        } else {
            throw ConfigError("this subcommand requires --config");
        }
        if (seed_set) cfg.seed = seed_override;
        if (s_override > 0) cfg.s = s_override;
        if (eps_override >= 0) cfg.eps = eps_override;

        if (sp_dgr->parsed()) return run_dgr_scan(cfg, pair, threads, out_dir);
        if (sp_deriv->parsed()) return run_deriv_limit(cfg, threads, out_dir);
        if (sp_gibbs->parsed()) return run_gibbs_compare(cfg, threads, out_dir);
        if (sp_kms->parsed()) return run_kms_check(cfg, out_dir);
        if (sp_crit->parsed()) return run_critical_beta(cfg, cdelta_mode, out_dir);
        if (sp_ks->parsed())
            return run_ks_solve(cfg, ks_mode, ks_beta, ks_lmax, ks_nmax, ks_j, out_dir);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::length_error& e) {
        std::cerr << "guard: " << e.what() << "\n";
        return 3;
    } catch (const std::domain_error& e) {
        std::cerr << "domain error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
