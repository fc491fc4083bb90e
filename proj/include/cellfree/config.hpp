#pragma once

// System parameters, power limits and per-experiment settings, plus the flat
// `key = value` configuration format that carries them.
//
// Format: one `key = value` per line, `#` starts a comment, lists are written
// `[a, b, c]`, and `[section]` lines open a section whose keys are addressed
// as `section.key` in overrides. Unknown keys are rejected.

#include <algorithm>
#include <charconv>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "cellfree/errors.hpp"

namespace cellfree {

struct SystemConfig {
    std::size_t n_raus = 5;                        // N
    std::size_t antennas_per_rau = 50;             // L
    std::size_t n_unicast = 10;                    // U
    std::size_t n_groups = 2;                      // M
    std::vector<std::size_t> group_sizes{5, 5};    // K_m
    double path_loss_exponent = 3.7;               // a
    double reference_gain = 1.0;                   // b, linear gain at 1 km
    double area_radius = 1.0;                      // km
    double min_distance = 0.03;                    // km
    double noise_ul = 0.0155;                      // W
    double noise_dl = 0.0155;                      // W
    std::size_t coherence_length = 196;            // T, symbols
    std::optional<std::size_t> pilot_length;       // tau; unset means M + U
    std::uint64_t rng_seed = 1;

    std::size_t total_antennas() const { return n_raus * antennas_per_rau; }
    std::size_t streams() const { return n_unicast + n_groups; }
    std::size_t tau() const { return pilot_length.value_or(streams()); }
    std::size_t multicast_users() const {
        return std::accumulate(group_sizes.begin(), group_sizes.end(), std::size_t{0});
    }

    // Checks everything except the rank condition NL > M + U, which only
    // the ZF/MMSE paths need.
    void validate() const {
        if (n_raus < 1) throw ConfigError("n_raus must be >= 1");
        if (antennas_per_rau < 1) throw ConfigError("antennas_per_rau must be >= 1");
        if (group_sizes.size() != n_groups)
            throw ConfigError("group_sizes has " + std::to_string(group_sizes.size()) + " entries but n_groups = " +
                              std::to_string(n_groups));
        for (auto k : group_sizes)
            if (k < 1) throw ConfigError("every group size must be >= 1");
        if (streams() < 1) throw ConfigError("need at least one unicast user or multicast group");
        if (!(path_loss_exponent > 0.0)) throw ConfigError("path_loss_exponent must be > 0");
        if (!(reference_gain > 0.0)) throw ConfigError("reference_gain must be > 0");
        if (!(area_radius > 0.0)) throw ConfigError("area_radius must be > 0");
        if (!(min_distance > 0.0)) throw ConfigError("min_distance must be > 0");
        if (!(noise_ul >= 0.0) || !(noise_dl >= 0.0)) throw ConfigError("noise powers must be >= 0");
        if (tau() < streams())
            throw ConfigError("pilot_length " + std::to_string(tau()) + " is below M + U = " + std::to_string(streams()));
        if (tau() > coherence_length)
            throw ConfigError("pilot_length " + std::to_string(tau()) + " exceeds coherence_length " +
                              std::to_string(coherence_length));
    }
};

struct PowerLimits {
    double P_ul_un = 0.5;   // per unicast user uplink cap, W
    double P_ul_mu = 0.5;   // per multicast user uplink cap, W
    double P_dl_un = 50.0;  // unicast downlink sum cap, W
    double P_dl_mu = 50.0;  // multicast downlink sum cap, W
    double P_dl = 50.0;     // total downlink cap, W
    double se_min_unicast = 3.0;    // bit/s/Hz
    double se_min_multicast = 3.0;  // bit/s/Hz

    void validate() const {
        for (double v : {P_ul_un, P_ul_mu, P_dl_un, P_dl_mu, P_dl, se_min_unicast, se_min_multicast})
            if (!(v >= 0.0)) throw ConfigError("power limits and SE minima must be >= 0");
    }
};

// Uniform per-user powers used wherever a fixed allocation is evaluated.
struct AllocationDefaults {
    double p_ul = 0.5;
    double q_ul = 0.5;
    double p_dl = 1.0;
    double q_dl = 0.5;
};

struct McParams {
    std::size_t realizations = 10000;
    std::string sampler = "statistical";  // or "pilot"
    std::vector<std::size_t> antennas{10, 20, 50, 100};
};

struct Nsga2Params {
    std::size_t population = 100;
    std::size_t generations = 200;
    double crossover_prob = 0.9;
    double crossover_eta = 15.0;
    double mutation_eta = 20.0;
    double mutation_prob = 0.0;  // 0 means 1 / dimension
    bool budget_repair = true;
};

struct TrainConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::size_t batch_size = 32;
    std::size_t iterations = 3000;
    std::vector<std::size_t> hidden{128, 128, 128};
    std::size_t train_scenarios = 2000;
    std::size_t validation_scenarios = 100;
    std::size_t validate_every = 50;
    double smooth_min_temperature = 0.0;  // 0 disables smooth-min
    std::uint64_t seed = 1;
};

struct ExperimentParams {
    std::size_t scenario_count = 5;  // seeds/geometries for multi-scenario comparisons
    std::size_t t_max = 300;
    std::size_t t_step = 4;
    double q_dl_min = 0.1;
    double q_dl_max = 9.6;
    double q_dl_step = 0.5;
    std::vector<double> noise_scales{1.0, 0.01};
    double per_stream_power = 2.0;
    std::size_t comparison_users = 20;
    std::size_t comparison_groups = 4;
    std::size_t test_scenarios = 20;
    std::string precoder = "MRT";  // used by the allocator experiments
};

struct Config {
    SystemConfig system;
    PowerLimits limits;
    AllocationDefaults allocation;
    McParams mc;
    Nsga2Params nsga2;
    TrainConfig dnn;
    ExperimentParams experiment;

    void validate() const {
        system.validate();
        limits.validate();
        if (mc.sampler != "statistical" && mc.sampler != "pilot")
            throw ConfigError("mc.sampler must be 'statistical' or 'pilot'");
        if (nsga2.population < 2 || nsga2.population % 2 != 0)
            throw ConfigError("nsga2.population must be even and >= 2");
        if (!(dnn.beta1 > 0.0 && dnn.beta1 < 1.0 && dnn.beta2 > 0.0 && dnn.beta2 < 1.0))
            throw ConfigError("dnn.beta1 and dnn.beta2 must lie in (0, 1)");
        if (dnn.batch_size < 1) throw ConfigError("dnn.batch_size must be >= 1");
        if (experiment.precoder != "MRT" && experiment.precoder != "ZF" && experiment.precoder != "MMSE")
            throw ConfigError("experiment.precoder must be MRT, ZF or MMSE");
    }
};

namespace detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

// Shortest text that parses back to the same double.
inline std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
    T value{};
    const char* first = text.data();
    const char* last = text.data() + text.size();
    const auto res = std::from_chars(first, last, value);
    if (res.ec != std::errc{} || res.ptr != last)
        throw ConfigError("key '" + key + "': cannot parse '" + text + "' as a number");
    return value;
}

inline bool parse_bool(const std::string& key, const std::string& text) {
    if (text == "true" || text == "1") return true;
    if (text == "false" || text == "0") return false;
    throw ConfigError("key '" + key + "': expected true/false, got '" + text + "'");
}

inline std::vector<std::string> parse_list(const std::string& key, const std::string& text) {
    if (text.size() < 2 || text.front() != '[' || text.back() != ']')
        throw ConfigError("key '" + key + "': malformed list '" + text + "' (expected [a, b, ...])");
    std::vector<std::string> items;
    const std::string body = text.substr(1, text.size() - 2);
    if (trim(body).empty()) return items;
    std::stringstream ss(body);
    std::string item;
    while (std::getline(ss, item, ',')) {
        auto t = trim(item);
        if (t.empty() || t.find_first_of("[]") != std::string::npos)
            throw ConfigError("key '" + key + "': malformed list '" + text + "'");
        items.push_back(t);
    }
    return items;
}

template <class T>
std::vector<T> parse_number_list(const std::string& key, const std::string& text) {
    std::vector<T> out;
    for (const auto& item : parse_list(key, text)) out.push_back(parse_number<T>(key, item));
    return out;
}

template <class T>
std::string format_list(const std::vector<T>& v) {
    std::string s = "[";
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ", ";
        if constexpr (std::is_floating_point_v<T>) s += format_double(v[i]);
        else s += std::to_string(v[i]);
    }
    return s + "]";
}

struct KeyBinding {
    std::function<void(Config&, const std::string&)> set;
    std::function<std::string(const Config&)> get;
};

// Canonical key -> binding. Insertion order is the echo order.
inline const std::vector<std::pair<std::string, KeyBinding>>& key_table() {
    using V = std::vector<std::pair<std::string, KeyBinding>>;
    static const V table = [] {
        V t;
        auto num = [&t](std::string name, auto member) {
            using T = std::remove_reference_t<decltype(member(std::declval<Config&>()))>;
            t.emplace_back(name, KeyBinding{
                [member, name](Config& c, const std::string& v) { member(c) = parse_number<T>(name, v); },
                [member](const Config& c) {
                    const auto& x = member(c);
                    if constexpr (std::is_floating_point_v<T>) return format_double(x);
                    else return std::to_string(x);
                }});
        };
        auto flag = [&t](std::string name, auto member) {
            t.emplace_back(name, KeyBinding{
                [member, name](Config& c, const std::string& v) { member(c) = parse_bool(name, v); },
                [member](const Config& c) { return std::string(member(c) ? "true" : "false"); }});
        };
        auto list = [&t](std::string name, auto member) {
            using T = typename std::remove_reference_t<decltype(member(std::declval<Config&>()))>::value_type;
            t.emplace_back(name, KeyBinding{
                [member, name](Config& c, const std::string& v) { member(c) = parse_number_list<T>(name, v); },
                [member](const Config& c) { return format_list(member(c)); }});
        };

        num("n_raus", [](auto& c) -> auto& { return c.system.n_raus; });
        num("antennas_per_rau", [](auto& c) -> auto& { return c.system.antennas_per_rau; });
        num("n_unicast", [](auto& c) -> auto& { return c.system.n_unicast; });
        num("n_groups", [](auto& c) -> auto& { return c.system.n_groups; });
        list("group_sizes", [](auto& c) -> auto& { return c.system.group_sizes; });
        num("path_loss_exponent", [](auto& c) -> auto& { return c.system.path_loss_exponent; });
        num("reference_gain", [](auto& c) -> auto& { return c.system.reference_gain; });
        num("area_radius", [](auto& c) -> auto& { return c.system.area_radius; });
        num("min_distance", [](auto& c) -> auto& { return c.system.min_distance; });
        num("noise_ul", [](auto& c) -> auto& { return c.system.noise_ul; });
        num("noise_dl", [](auto& c) -> auto& { return c.system.noise_dl; });
        num("coherence_length", [](auto& c) -> auto& { return c.system.coherence_length; });
        t.emplace_back("pilot_length", KeyBinding{
            [](Config& c, const std::string& v) {
                if (v == "auto") c.system.pilot_length.reset();
                else c.system.pilot_length = parse_number<std::size_t>("pilot_length", v);
            },
            [](const Config& c) {
                return c.system.pilot_length ? std::to_string(*c.system.pilot_length) : std::string("auto");
            }});
        num("rng_seed", [](auto& c) -> auto& { return c.system.rng_seed; });

        num("p_ul", [](auto& c) -> auto& { return c.allocation.p_ul; });
        num("q_ul", [](auto& c) -> auto& { return c.allocation.q_ul; });
        num("p_dl", [](auto& c) -> auto& { return c.allocation.p_dl; });
        num("q_dl", [](auto& c) -> auto& { return c.allocation.q_dl; });

        num("P_ul_un", [](auto& c) -> auto& { return c.limits.P_ul_un; });
        num("P_ul_mu", [](auto& c) -> auto& { return c.limits.P_ul_mu; });
        num("P_dl_un", [](auto& c) -> auto& { return c.limits.P_dl_un; });
        num("P_dl_mu", [](auto& c) -> auto& { return c.limits.P_dl_mu; });
        num("P_dl", [](auto& c) -> auto& { return c.limits.P_dl; });
        num("se_min_unicast", [](auto& c) -> auto& { return c.limits.se_min_unicast; });
        num("se_min_multicast", [](auto& c) -> auto& { return c.limits.se_min_multicast; });

        num("mc.realizations", [](auto& c) -> auto& { return c.mc.realizations; });
        t.emplace_back("mc.sampler", KeyBinding{
            [](Config& c, const std::string& v) { c.mc.sampler = v; },
            [](const Config& c) { return c.mc.sampler; }});
        list("mc.antennas", [](auto& c) -> auto& { return c.mc.antennas; });

        num("nsga2.population", [](auto& c) -> auto& { return c.nsga2.population; });
        num("nsga2.generations", [](auto& c) -> auto& { return c.nsga2.generations; });
        num("nsga2.crossover_prob", [](auto& c) -> auto& { return c.nsga2.crossover_prob; });
        num("nsga2.crossover_eta", [](auto& c) -> auto& { return c.nsga2.crossover_eta; });
        num("nsga2.mutation_eta", [](auto& c) -> auto& { return c.nsga2.mutation_eta; });
        num("nsga2.mutation_prob", [](auto& c) -> auto& { return c.nsga2.mutation_prob; });
        flag("nsga2.budget_repair", [](auto& c) -> auto& { return c.nsga2.budget_repair; });

        num("dnn.learning_rate", [](auto& c) -> auto& { return c.dnn.learning_rate; });
        num("dnn.beta1", [](auto& c) -> auto& { return c.dnn.beta1; });
        num("dnn.beta2", [](auto& c) -> auto& { return c.dnn.beta2; });
        num("dnn.epsilon", [](auto& c) -> auto& { return c.dnn.epsilon; });
        num("dnn.batch_size", [](auto& c) -> auto& { return c.dnn.batch_size; });
        num("dnn.iterations", [](auto& c) -> auto& { return c.dnn.iterations; });
        list("dnn.hidden", [](auto& c) -> auto& { return c.dnn.hidden; });
        num("dnn.train_scenarios", [](auto& c) -> auto& { return c.dnn.train_scenarios; });
        num("dnn.validation_scenarios", [](auto& c) -> auto& { return c.dnn.validation_scenarios; });
        num("dnn.validate_every", [](auto& c) -> auto& { return c.dnn.validate_every; });
        num("dnn.smooth_min_temperature", [](auto& c) -> auto& { return c.dnn.smooth_min_temperature; });
        num("dnn.seed", [](auto& c) -> auto& { return c.dnn.seed; });

        num("experiment.scenario_count", [](auto& c) -> auto& { return c.experiment.scenario_count; });
        num("experiment.t_max", [](auto& c) -> auto& { return c.experiment.t_max; });
        num("experiment.t_step", [](auto& c) -> auto& { return c.experiment.t_step; });
        num("experiment.q_dl_min", [](auto& c) -> auto& { return c.experiment.q_dl_min; });
        num("experiment.q_dl_max", [](auto& c) -> auto& { return c.experiment.q_dl_max; });
        num("experiment.q_dl_step", [](auto& c) -> auto& { return c.experiment.q_dl_step; });
        list("experiment.noise_scales", [](auto& c) -> auto& { return c.experiment.noise_scales; });
        num("experiment.per_stream_power", [](auto& c) -> auto& { return c.experiment.per_stream_power; });
        num("experiment.comparison_users", [](auto& c) -> auto& { return c.experiment.comparison_users; });
        num("experiment.comparison_groups", [](auto& c) -> auto& { return c.experiment.comparison_groups; });
        num("experiment.test_scenarios", [](auto& c) -> auto& { return c.experiment.test_scenarios; });
        t.emplace_back("experiment.precoder", KeyBinding{
            [](Config& c, const std::string& v) { c.experiment.precoder = v; },
            [](const Config& c) { return c.experiment.precoder; }});
        return t;
    }();
    return table;
}

// Short symbols accepted in files and overrides.
inline const std::map<std::string, std::string>& key_aliases() {
    static const std::map<std::string, std::string> aliases{
        {"N", "n_raus"}, {"L", "antennas_per_rau"}, {"U", "n_unicast"}, {"M", "n_groups"},
        {"K_m", "group_sizes"}, {"K", "group_sizes"}, {"a", "path_loss_exponent"}, {"b", "reference_gain"},
        {"T", "coherence_length"}, {"tau", "pilot_length"}, {"seed", "rng_seed"},
    };
    return aliases;
}

inline std::string canonical_key(const std::string& key) {
    if (auto it = key_aliases().find(key); it != key_aliases().end()) return it->second;
    return key;
}

inline const KeyBinding* find_key(const std::string& key) {
    const std::string canonical = canonical_key(key);
    for (const auto& [name, binding] : key_table())
        if (name == canonical) return &binding;
    return nullptr;
}

}  // namespace detail

// Applies one `key = value` assignment. `line` is only used for messages.
inline void apply_setting(Config& cfg, const std::string& key, const std::string& value, std::size_t line = 0) {
    const auto* binding = detail::find_key(key);
    if (!binding) throw ConfigError("unknown key '" + key + "'", line);
    try {
        binding->set(cfg, value);
    } catch (const ConfigError& e) {
        throw ConfigError(e.what(), line);
    }
}

// Applies a `key=value` override string as given on the command line.
inline void apply_override(Config& cfg, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not of the form key=value");
    apply_setting(cfg, detail::trim(assignment.substr(0, eq)), detail::trim(assignment.substr(eq + 1)));
}

inline Config parse_config_text(std::string_view text) {
    Config cfg;
    std::string section;
    std::map<std::string, std::size_t> seen;
    std::istringstream in{std::string(text)};
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        if (auto hash = raw.find('#'); hash != std::string::npos) raw.resize(hash);
        const std::string line = detail::trim(raw);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']' || line.find('=') != std::string::npos)
                throw ConfigError("malformed section header '" + line + "'", line_no);
            section = detail::trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("expected 'key = value', got '" + line + "'", line_no);
        std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError("empty key", line_no);
        if (value.empty()) throw ConfigError("key '" + key + "' has no value", line_no);
        if (!section.empty()) key = section + "." + key;
        if (auto [it, inserted] = seen.emplace(detail::canonical_key(key), line_no); !inserted)
            throw ConfigError("duplicate key '" + key + "' (first set on line " + std::to_string(it->second) + ")",
                              line_no);
        apply_setting(cfg, key, value, line_no);
    }
    return cfg;
}

inline Config parse_config(const std::string& path, const std::vector<std::string>& overrides = {}) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file '" + path + "'");
    std::stringstream ss;
    ss << f.rdbuf();
    Config cfg = parse_config_text(ss.str());
    for (const auto& o : overrides) apply_override(cfg, o);
    cfg.validate();
    return cfg;
}

// Canonical text form; parse_config_text(to_config_text(c)) reproduces c.
inline std::string to_config_text(const Config& cfg) {
    std::string out;
    std::string section;
    for (const auto& [name, binding] : detail::key_table()) {
        std::string key = name;
        if (auto dot = name.find('.'); dot != std::string::npos) {
            const std::string sec = name.substr(0, dot);
            if (sec != section) {
                section = sec;
                out += "\n[" + section + "]\n";
            }
            key = name.substr(dot + 1);
        }
        out += key + " = " + binding.get(cfg) + "\n";
    }
    return out;
}

}  // namespace cellfree
