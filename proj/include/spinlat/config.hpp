#pragma once

#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "spinlat/uniqueness.hpp"

namespace spinlat {

// Raised on malformed or invalid experiment configuration; the message carries
// the offending location (json pointer / term index).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
    int d = 1;
    PotentialFamily potential;
    Region region{1, {{0}}};
    std::vector<HalfInt> js;
    std::vector<double> betas;
    int s = 2;
    double eps = 1.0;
    Truncation truncation{Region(1, {{0}}), 6, 5, 24};
    int quad_degree = 32;
    unsigned seed = 1234;
    std::optional<LatticeObservable> observable;  // for gibbs-compare / deriv-limit
    nlohmann::json raw;
};

namespace detail {

inline Site parse_site(const nlohmann::json& j, int d, const std::string& where) {
    if (!j.is_array() || static_cast<int>(j.size()) != d)
        throw ConfigError(where + ": site must be an array of " + std::to_string(d) +
                          " integers");
    Site s;
    for (const auto& c : j) s.push_back(c.get<int>());
    return s;
}

inline LatticeObservable parse_observable(const nlohmann::json& j, const Region& shape, int d,
                                          const std::string& where) {
    LatticeObservable obs(shape);
    if (!j.is_array()) throw ConfigError(where + ": coeffs must be an array");
    int k = 0;
    for (const auto& entry : j) {
        const std::string at = where + ".coeffs[" + std::to_string(k++) + "]";
        const double re = entry.value("re", 0.0), im = entry.value("im", 0.0);
        MultiIndex idx;
        auto add_factor = [&](const nlohmann::json& f) {
            const int site_no = f.at("site").get<int>();
            if (site_no < 0 || site_no >= static_cast<int>(shape.size()))
                throw ConfigError(at + ": site index out of range");
            idx.push_back(SiteFactor{shape.sites[site_no], f.at("l").get<int>(),
                                     f.at("m").get<int>()});
        };
        try {
            if (entry.contains("factors"))
                for (const auto& f : entry.at("factors")) add_factor(f);
            else
                add_factor(entry);
            obs.add(idx, Complex(re, im));
        } catch (const std::invalid_argument& e) {
            throw ConfigError(at + ": " + e.what());
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(at + ": " + e.what());
        }
    }
    return obs;
}

inline PotentialFamily parse_potential(const nlohmann::json& j, int d) {
    PotentialFamily phi;
    phi.d = d;
    if (!j.contains("terms") || !j.at("terms").is_array())
        throw ConfigError("potential: missing terms array");
    int k = 0;
    for (const auto& term : j.at("terms")) {
        const std::string where = "potential.terms[" + std::to_string(k) + "]";
        std::vector<Site> offsets;
        for (const auto& off : term.at("offsets")) offsets.push_back(parse_site(off, d, where));
        Region shape(d, offsets);
        PotentialTerm pt{shape, parse_observable(term.at("coeffs"), shape, d, where)};
        if (!pt.obs.is_selfadjoint())
            throw ConfigError("self-adjointness violated at term " + std::to_string(k));
        phi.terms.push_back(std::move(pt));
        ++k;
    }
    return phi;
}

inline Region parse_region(const nlohmann::json& j, int d) {
    if (j.contains("box")) {
        std::vector<int> dims = j.at("box").get<std::vector<int>>();
        if (static_cast<int>(dims.size()) != d)
            throw ConfigError("region.box: dimension mismatch");
        for (int n : dims)
            if (n < 1) throw ConfigError("region.box: sides must be >= 1");
        return Region::box(dims);
    }
    if (j.contains("sites")) {
        std::vector<Site> sites;
        for (const auto& s : j.at("sites")) sites.push_back(parse_site(s, d, "region.sites"));
        return Region(d, sites);
    }
    throw ConfigError("region: expected box or sites");
}

}  // namespace detail

inline ExperimentConfig parse_config(const nlohmann::json& j) {
    ExperimentConfig cfg;
    cfg.raw = j;
    try {
        cfg.d = j.value("d", 1);
        if (cfg.d < 1 || cfg.d > 3) throw ConfigError("d: expected 1..3");
        if (j.contains("potential")) cfg.potential = detail::parse_potential(j.at("potential"), cfg.d);
        cfg.region = j.contains("region") ? detail::parse_region(j.at("region"), cfg.d)
                                          : Region::box(std::vector<int>(cfg.d, 1));
        if (j.contains("js"))
            for (const auto& v : j.at("js")) {
                const HalfInt h = HalfInt::from_double(v.get<double>());
                if (h.twice <= 0) throw ConfigError("js: spins must be positive");
                cfg.js.push_back(h);
            }
        if (j.contains("betas"))
            for (const auto& v : j.at("betas")) {
                const double b = v.get<double>();
                if (b < 0) throw ConfigError("betas: must be >= 0");
                cfg.betas.push_back(b);
            }
        cfg.s = j.value("s", 2);
        if (cfg.s < 0) throw ConfigError("s: must be >= 0");
        cfg.eps = j.value("eps", 1.0);
        if (cfg.eps < 0) throw ConfigError("eps: must be >= 0");
        cfg.quad_degree = j.value("quad_degree", 32);
        if (cfg.quad_degree < 0 || cfg.quad_degree > 512)
            throw ConfigError("quad_degree: expected 0..512");
        cfg.seed = j.value("seed", 1234u);
        if (j.contains("truncation")) {
            const auto& t = j.at("truncation");
            cfg.truncation.lmax = t.value("lmax", 6);
            cfg.truncation.nmax = t.value("nmax", 5);
            cfg.truncation.haar_degree = t.value("haar_degree", 24);
            if (cfg.truncation.lmax < 1 || cfg.truncation.nmax < 1)
                throw ConfigError("truncation: lmax and nmax must be >= 1");
        }
        cfg.truncation.base_region = cfg.region;
        if (j.contains("observable")) {
            cfg.observable =
                detail::parse_observable(j.at("observable"), cfg.region, cfg.d, "observable");
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("parse error: ") + e.what());
    }
    return parse_config(j);
}

// FNV-1a hash of the canonical config dump, recorded in every CSV emission.
inline std::string config_hash(const nlohmann::json& j) {
    const std::string s = j.dump();
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    std::ostringstream os;
    os << std::hex << h;
    return os.str();
}

}  // namespace spinlat
