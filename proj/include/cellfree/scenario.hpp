#pragma once

#include <charconv>
#include <cmath>
#include <cstddef>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "cellfree/config.hpp"
#include "cellfree/errors.hpp"
#include "cellfree/numerics.hpp"

namespace cellfree {

struct Point {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Point&, const Point&) = default;
};

inline double distance(Point a, Point b) { return std::hypot(a.x - b.x, a.y - b.y); }

// Real matrix of large-scale gains, rows indexed by RAU.
class GainMatrix {
public:
    GainMatrix() = default;
    GainMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::vector<double> column(std::size_t c) const {
        std::vector<double> v(rows_);
        for (std::size_t r = 0; r < rows_; ++r) v[r] = (*this)(r, c);
        return v;
    }
    double column_sum(std::size_t c) const {
        double s = 0.0;
        for (std::size_t r = 0; r < rows_; ++r) s += (*this)(r, c);
        return s;
    }

    friend bool operator==(const GainMatrix&, const GainMatrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

struct Scenario {
    std::vector<Point> rau_positions;
    std::vector<Point> unicast_positions;
    std::vector<std::vector<Point>> multicast_positions;  // per group
    GainMatrix beta;              // N x U
    std::vector<GainMatrix> eta;  // per group, N x K_m

    std::size_t n_raus() const { return rau_positions.size(); }
    std::size_t n_unicast() const { return unicast_positions.size(); }
    std::size_t n_groups() const { return multicast_positions.size(); }
    std::size_t group_size(std::size_t m) const { return multicast_positions[m].size(); }

    friend bool operator==(const Scenario&, const Scenario&) = default;
};

// b * max(d, min_distance)^-a
inline double large_scale_gain(const SystemConfig& cfg, double d_km) {
    if (!(d_km > 0.0)) throw ParameterError("large_scale_gain: distance must be > 0");
    return cfg.reference_gain * std::pow(std::max(d_km, cfg.min_distance), -cfg.path_loss_exponent);
}

// Computes beta/eta for given positions.
inline Scenario scenario_from_positions(const SystemConfig& cfg, std::vector<Point> raus, std::vector<Point> unicast,
                                        std::vector<std::vector<Point>> multicast) {
    Scenario s{std::move(raus), std::move(unicast), std::move(multicast), {}, {}};
    const auto gain = [&](Point a, Point b) {
        // Coincident points clip to min_distance like any close pair.
        const double d = std::max(distance(a, b), cfg.min_distance);
        return large_scale_gain(cfg, d);
    };
    s.beta = GainMatrix(s.n_raus(), s.n_unicast());
    for (std::size_t n = 0; n < s.n_raus(); ++n)
        for (std::size_t u = 0; u < s.n_unicast(); ++u) s.beta(n, u) = gain(s.rau_positions[n], s.unicast_positions[u]);
    for (const auto& group : s.multicast_positions) {
        GainMatrix e(s.n_raus(), group.size());
        for (std::size_t n = 0; n < s.n_raus(); ++n)
            for (std::size_t k = 0; k < group.size(); ++k) e(n, k) = gain(s.rau_positions[n], group[k]);
        s.eta.push_back(std::move(e));
    }
    return s;
}

namespace detail {

inline Point uniform_in_disc(Rng& rng, double radius) {
    const double r = radius * std::sqrt(rng.uniform());
    const double phi = 2.0 * std::numbers::pi * rng.uniform();
    return {r * std::cos(phi), r * std::sin(phi)};
}

inline constexpr int kMaxPlacementAttempts = 1000;

inline Point place_user(Rng& rng, const SystemConfig& cfg, const std::vector<Point>& raus) {
    for (int attempt = 0; attempt < kMaxPlacementAttempts; ++attempt) {
        const Point p = uniform_in_disc(rng, cfg.area_radius);
        bool ok = true;
        for (const auto& r : raus)
            if (distance(p, r) < cfg.min_distance) {
                ok = false;
                break;
            }
        if (ok) return p;
    }
    throw ConfigError("place_uniform: no user position at least min_distance from every RAU after " +
                      std::to_string(kMaxPlacementAttempts) + " attempts");
}

}  // namespace detail

// RAUs and users uniform in the disc of cfg.area_radius; users closer than
// min_distance to any RAU are redrawn.
inline Scenario place_uniform(const SystemConfig& cfg, const Rng& rng) {
    cfg.validate();
    Rng rau_rng = rng.substream("rau");
    std::vector<Point> raus(cfg.n_raus);
    for (auto& p : raus) p = detail::uniform_in_disc(rau_rng, cfg.area_radius);

    Rng uni_rng = rng.substream("unicast");
    std::vector<Point> unicast(cfg.n_unicast);
    for (auto& p : unicast) p = detail::place_user(uni_rng, cfg, raus);

    std::vector<std::vector<Point>> multicast(cfg.n_groups);
    for (std::size_t m = 0; m < cfg.n_groups; ++m) {
        Rng g_rng = rng.substream({detail::fnv1a("multicast"), m});
        multicast[m].resize(cfg.group_sizes[m]);
        for (auto& p : multicast[m]) p = detail::place_user(g_rng, cfg, raus);
    }
    return scenario_from_positions(cfg, std::move(raus), std::move(unicast), std::move(multicast));
}

// Decision vector: pilot powers, downlink powers and the pilot length.
struct PowerAllocation {
    std::vector<double> p_ul;               // U
    std::vector<std::vector<double>> q_ul;  // M x K_m
    std::vector<double> p_dl;               // U
    std::vector<double> q_dl;               // M
    std::size_t tau = 0;

    static PowerAllocation uniform(const SystemConfig& cfg, const AllocationDefaults& d) {
        PowerAllocation a;
        a.p_ul.assign(cfg.n_unicast, d.p_ul);
        for (auto k : cfg.group_sizes) a.q_ul.emplace_back(k, d.q_ul);
        a.p_dl.assign(cfg.n_unicast, d.p_dl);
        a.q_dl.assign(cfg.n_groups, d.q_dl);
        a.tau = cfg.tau();
        return a;
    }

    std::size_t gene_count() const {
        std::size_t n = p_ul.size() + p_dl.size() + q_dl.size();
        for (const auto& g : q_ul) n += g.size();
        return n;
    }

    // p_ul || q_ul (group-major) || p_dl || q_dl
    std::vector<double> flatten() const {
        std::vector<double> g;
        g.reserve(gene_count());
        g.insert(g.end(), p_ul.begin(), p_ul.end());
        for (const auto& grp : q_ul) g.insert(g.end(), grp.begin(), grp.end());
        g.insert(g.end(), p_dl.begin(), p_dl.end());
        g.insert(g.end(), q_dl.begin(), q_dl.end());
        return g;
    }

    static PowerAllocation unflatten(const SystemConfig& cfg, std::span<const double> genes) {
        PowerAllocation a;
        a.tau = cfg.tau();
        const std::size_t expected = 2 * cfg.n_unicast + cfg.n_groups + cfg.multicast_users();
        if (genes.size() != expected) throw ParameterError("unflatten: gene count mismatch");
        auto it = genes.begin();
        a.p_ul.assign(it, it + cfg.n_unicast);
        it += cfg.n_unicast;
        for (auto k : cfg.group_sizes) {
            a.q_ul.emplace_back(it, it + k);
            it += k;
        }
        a.p_dl.assign(it, it + cfg.n_unicast);
        it += cfg.n_unicast;
        a.q_dl.assign(it, it + cfg.n_groups);
        return a;
    }

    double downlink_unicast_sum() const { return std::accumulate(p_dl.begin(), p_dl.end(), 0.0); }
    double downlink_multicast_sum() const { return std::accumulate(q_dl.begin(), q_dl.end(), 0.0); }
    double downlink_total() const { return downlink_unicast_sum() + downlink_multicast_sum(); }

    // Shape against cfg and non-negativity; throws ParameterError.
    void validate(const SystemConfig& cfg) const {
        if (p_ul.size() != cfg.n_unicast || p_dl.size() != cfg.n_unicast || q_dl.size() != cfg.n_groups ||
            q_ul.size() != cfg.n_groups)
            throw ParameterError("PowerAllocation: shape does not match configuration");
        for (std::size_t m = 0; m < cfg.n_groups; ++m)
            if (q_ul[m].size() != cfg.group_sizes[m])
                throw ParameterError("PowerAllocation: q_ul group size mismatch");
        for (double v : flatten())
            if (!(v >= 0.0) || !std::isfinite(v)) throw ParameterError("PowerAllocation: powers must be finite and >= 0");
        if (tau < cfg.streams()) throw ConfigError("pilot length below M + U");
    }

    // C2-C4 (box and sum-power constraints).
    bool within_power_limits(const PowerLimits& lim, double tol = 1e-12) const {
        for (double v : p_ul)
            if (v < -tol || v > lim.P_ul_un + tol) return false;
        for (const auto& g : q_ul)
            for (double v : g)
                if (v < -tol || v > lim.P_ul_mu + tol) return false;
        for (double v : p_dl)
            if (v < -tol) return false;
        for (double v : q_dl)
            if (v < -tol) return false;
        return downlink_unicast_sum() <= lim.P_dl_un + tol && downlink_multicast_sum() <= lim.P_dl_mu + tol &&
               downlink_total() <= lim.P_dl + tol;
    }

    friend bool operator==(const PowerAllocation&, const PowerAllocation&) = default;
};

// ---- CSV persistence -------------------------------------------------------
//
// rau,x,y
// <n>,<x>,<y>
// user,kind,group,x,y
// <index>,unicast,-1,<x>,<y> | <index>,multicast,<m>,<x>,<y>
// gain,kind,group,user,rau,value
// ...
// Numbers carry 17 significant digits, so import(export(s)) == s.

inline void write_scenario_csv(std::ostream& os, const Scenario& s) {
    const auto f = detail::format_double;
    os << "rau,x,y\n";
    for (std::size_t n = 0; n < s.n_raus(); ++n)
        os << n << ',' << f(s.rau_positions[n].x) << ',' << f(s.rau_positions[n].y) << '\n';
    os << "user,kind,group,x,y\n";
    for (std::size_t u = 0; u < s.n_unicast(); ++u)
        os << u << ",unicast,-1," << f(s.unicast_positions[u].x) << ',' << f(s.unicast_positions[u].y) << '\n';
    for (std::size_t m = 0; m < s.n_groups(); ++m)
        for (std::size_t k = 0; k < s.group_size(m); ++k)
            os << k << ",multicast," << m << ',' << f(s.multicast_positions[m][k].x) << ','
               << f(s.multicast_positions[m][k].y) << '\n';
    os << "gain,kind,group,user,rau,value\n";
    for (std::size_t u = 0; u < s.n_unicast(); ++u)
        for (std::size_t n = 0; n < s.n_raus(); ++n)
            os << "beta,unicast,-1," << u << ',' << n << ',' << f(s.beta(n, u)) << '\n';
    for (std::size_t m = 0; m < s.n_groups(); ++m)
        for (std::size_t k = 0; k < s.group_size(m); ++k)
            for (std::size_t n = 0; n < s.n_raus(); ++n)
                os << "eta,multicast," << m << ',' << k << ',' << n << ',' << f(s.eta[m](n, k)) << '\n';
}

inline Scenario read_scenario_csv(std::istream& is) {
    enum class Block { None, Rau, User, Gain } block = Block::None;
    struct UserRow { bool unicast; long group; std::size_t index; Point p; };
    struct GainRow { bool unicast; long group; std::size_t user, rau; double value; };
    std::vector<std::pair<std::size_t, Point>> raus;
    std::vector<UserRow> users;
    std::vector<GainRow> gains;

    const auto num = [](const std::string& field, std::size_t line) {
        double v{};
        auto r = std::from_chars(field.data(), field.data() + field.size(), v);
        if (r.ec != std::errc{} || r.ptr != field.data() + field.size())
            throw ConfigError("scenario csv: bad number '" + field + "'", line);
        return v;
    };
    const auto idx = [](const std::string& field, std::size_t line) {
        long v{};
        auto r = std::from_chars(field.data(), field.data() + field.size(), v);
        if (r.ec != std::errc{} || r.ptr != field.data() + field.size())
            throw ConfigError("scenario csv: bad index '" + field + "'", line);
        return v;
    };

    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line == "rau,x,y") { block = Block::Rau; continue; }
        if (line == "user,kind,group,x,y") { block = Block::User; continue; }
        if (line == "gain,kind,group,user,rau,value") { block = Block::Gain; continue; }
        std::vector<std::string> f;
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
        switch (block) {
            case Block::Rau:
                if (f.size() != 3) throw ConfigError("scenario csv: rau row needs 3 fields", line_no);
                raus.emplace_back(static_cast<std::size_t>(idx(f[0], line_no)), Point{num(f[1], line_no), num(f[2], line_no)});
                break;
            case Block::User:
                if (f.size() != 5 || (f[1] != "unicast" && f[1] != "multicast"))
                    throw ConfigError("scenario csv: malformed user row", line_no);
                users.push_back({f[1] == "unicast", idx(f[2], line_no), static_cast<std::size_t>(idx(f[0], line_no)),
                                 {num(f[3], line_no), num(f[4], line_no)}});
                break;
            case Block::Gain:
                if (f.size() != 6) throw ConfigError("scenario csv: gain row needs 6 fields", line_no);
                gains.push_back({f[1] == "unicast", idx(f[2], line_no), static_cast<std::size_t>(idx(f[3], line_no)),
                                 static_cast<std::size_t>(idx(f[4], line_no)), num(f[5], line_no)});
                break;
            case Block::None:
                throw ConfigError("scenario csv: data before any header", line_no);
        }
    }

    Scenario s;
    s.rau_positions.resize(raus.size());
    for (const auto& [n, p] : raus) {
        if (n >= raus.size()) throw ConfigError("scenario csv: rau index out of range");
        s.rau_positions[n] = p;
    }
    for (const auto& u : users) {
        if (u.unicast) {
            if (s.unicast_positions.size() <= u.index) s.unicast_positions.resize(u.index + 1);
            s.unicast_positions[u.index] = u.p;
        } else {
            if (u.group < 0) throw ConfigError("scenario csv: multicast user without group");
            const auto m = static_cast<std::size_t>(u.group);
            if (s.multicast_positions.size() <= m) s.multicast_positions.resize(m + 1);
            if (s.multicast_positions[m].size() <= u.index) s.multicast_positions[m].resize(u.index + 1);
            s.multicast_positions[m][u.index] = u.p;
        }
    }
    s.beta = GainMatrix(s.n_raus(), s.n_unicast());
    for (std::size_t m = 0; m < s.n_groups(); ++m) s.eta.emplace_back(s.n_raus(), s.group_size(m));
    std::size_t expected = s.n_raus() * s.n_unicast();
    for (std::size_t m = 0; m < s.n_groups(); ++m) expected += s.n_raus() * s.group_size(m);
    if (gains.size() != expected) throw ConfigError("scenario csv: gain block does not cover every RAU-user pair");
    for (const auto& g : gains) {
        if (g.rau >= s.n_raus()) throw ConfigError("scenario csv: gain rau index out of range");
        if (g.unicast) {
            if (g.user >= s.n_unicast()) throw ConfigError("scenario csv: gain user index out of range");
            s.beta(g.rau, g.user) = g.value;
        } else {
            if (g.group < 0 || static_cast<std::size_t>(g.group) >= s.n_groups() ||
                g.user >= s.group_size(static_cast<std::size_t>(g.group)))
                throw ConfigError("scenario csv: gain multicast index out of range");
            s.eta[static_cast<std::size_t>(g.group)](g.rau, g.user) = g.value;
        }
    }
    return s;
}

}  // namespace cellfree
