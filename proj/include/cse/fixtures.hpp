#pragma once

// Synthetic fixture generation: connected transmission-style networks
// with prescribed node/branch/zero-injection counts, matching load and
// generation profiles, and meter placements with increasing PMU
// coverage (kinds a through d, where d is full PMU coverage).
//
// Generated data is deterministic in the seed; the repo ships the
// 118- and 1888-scale outputs as JSON fixtures and the 9241-scale
// network can be regenerated on demand.

#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cse/network.hpp"
#include "cse/rng.hpp"

namespace cse {

struct SyntheticSpec {
    int nodes = 118;
    int branches = 186;
    int zero_injection = 10;
    int generators = 12;
    int locality = 10;          // index window for meshing edges
    double load_p_low = 0.10;   // per-unit active load per load node
    double load_p_high = 0.45;
    double q_ratio_low = 0.20;  // reactive as a fraction of active
    double q_ratio_high = 0.40;
    double gen_share = 0.96;      // fraction of total load served by generators
    double gen_q_ratio = 0.35;    // generator reactive support per unit active
    double charging_low = 0.004;  // per-end branch charging susceptance
    double charging_high = 0.020;
    int slack_ties = 4;           // strong ties from the slack into the backbone
    std::uint64_t seed = 118118;
};

struct SyntheticFixture {
    Network net;
    std::vector<Complex> injections;  // per node; loads negative, slack ignored
    Complex slack_voltage{1.0, 0.0};
};

inline SyntheticFixture make_synthetic_fixture(const SyntheticSpec& spec) {
    if (spec.branches < spec.nodes - 1)
        throw std::invalid_argument("make_synthetic_fixture: too few branches");
    Rng rng(spec.seed);
    const int n = spec.nodes;

    std::vector<Node> nodes(n);
    for (int i = 0; i < n; ++i) nodes[i].id = std::to_string(i + 1);

    // Spanning tree with locality, then meshing edges inside the same
    // index window.  Window-local meshing keeps electrical distances
    // and angle spreads realistic.
    std::vector<Branch> branches;
    auto key = [&](int a, int b) {
        return static_cast<long long>(std::min(a, b)) * n + std::max(a, b);
    };
    std::unordered_set<long long> taken;
    auto has = [&](int a, int b) { return taken.count(key(a, b)) > 0; };
    auto add_branch = [&](int a, int b) {
        Branch br;
        br.from = a;
        br.to = b;
        double x = rng.uniform(0.02, 0.10);
        double r = x * rng.uniform(0.15, 0.35);
        br.series = 1.0 / Complex{r, x};
        double half_charging = rng.uniform(spec.charging_low, spec.charging_high);
        br.shunt_from = {0.0, half_charging};
        br.shunt_to = {0.0, half_charging};
        branches.push_back(br);
        taken.insert(key(a, b));
    };
    for (int i = 1; i < n; ++i)
        add_branch(rng.uniform_int(std::max(0, i - spec.locality), i - 1), i);
    // The slack models the external interconnection: tie it into the
    // wider network with a few low-impedance corridors so it can carry
    // the balancing power of stressed operating points.
    for (int k = 0; k < spec.slack_ties &&
                    static_cast<int>(branches.size()) < spec.branches;) {
        int b = rng.uniform_int(1, n - 1);
        if (has(0, b)) continue;
        Branch br;
        br.from = 0;
        br.to = b;
        double x = rng.uniform(0.004, 0.012);
        br.series = 1.0 / Complex{0.1 * x, x};
        branches.push_back(br);
        taken.insert(key(0, b));
        ++k;
    }
    int guard = 0;
    while (static_cast<int>(branches.size()) < spec.branches) {
        int a = rng.uniform_int(0, n - 1);
        int b;
        if (rng.uniform() < 0.12) {
            b = rng.uniform_int(0, n - 1);  // long-range backbone tie
        } else {
            int lo = std::max(0, a - spec.locality);
            int hi = std::min(n - 1, a + spec.locality);
            b = rng.uniform_int(lo, hi);
        }
        if (a != b && !has(a, b)) add_branch(std::min(a, b), std::max(a, b));
        if (++guard > 200 * spec.branches)
            throw std::runtime_error("make_synthetic_fixture: meshing window exhausted");
    }

    // Shunt compensation at a few nodes.
    for (int i = 0; i < n; ++i)
        if (rng.uniform() < 0.05) nodes[i].shunt = {0.0, rng.uniform(0.02, 0.15)};

    // Roles: shuffle the non-slack nodes, take zero-injection nodes and
    // generator sites, the rest carry load.
    std::vector<int> pool;
    for (int i = 1; i < n; ++i) pool.push_back(i);
    for (int i = static_cast<int>(pool.size()) - 1; i > 0; --i)
        std::swap(pool[i], pool[rng.uniform_int(0, i)]);
    if (spec.zero_injection + spec.generators > static_cast<int>(pool.size()))
        throw std::invalid_argument("make_synthetic_fixture: role counts exceed nodes");
    std::vector<Complex> injections(n, Complex{});
    for (int k = 0; k < spec.zero_injection; ++k) nodes[pool[k]].zero_injection = true;

    double total_load = 0.0;
    for (int k = spec.zero_injection + spec.generators;
         k < static_cast<int>(pool.size()); ++k) {
        double p = rng.uniform(spec.load_p_low, spec.load_p_high);
        double q = p * rng.uniform(spec.q_ratio_low, spec.q_ratio_high);
        injections[pool[k]] = {-p, -q};
        total_load += p;
    }
    const double gen_p = spec.generators > 0
                             ? spec.gen_share * total_load / spec.generators
                             : 0.0;
    for (int k = spec.zero_injection; k < spec.zero_injection + spec.generators; ++k) {
        double jitter = rng.uniform(0.85, 1.15);
        injections[pool[k]] = {gen_p * jitter, spec.gen_q_ratio * gen_p * jitter};
    }

    SyntheticFixture fx{Network::build(std::move(nodes), std::move(branches), 0),
                        std::move(injections)};
    return fx;
}

// ---------------------------------------------------------------------------
// Meter placements
// ---------------------------------------------------------------------------

struct Placement {
    std::vector<int> scada_v;
    std::vector<int> scada_injection;
    std::vector<std::pair<int, int>> scada_flow;  // metered at the first node
    std::vector<int> pmu_v;
    std::vector<std::pair<int, int>> pmu_i;

    bool has_scada() const {
        return !scada_v.empty() || !scada_injection.empty() || !scada_flow.empty();
    }
};

/// Placement with the requested PMU coverage.  SCADA kinds (voltage
/// magnitude everywhere, injections at every non-zero-injection node,
/// from-end power flow on every branch) are included unless the
/// placement is PMU-only.
inline Placement make_placement(const Network& net, bool include_scada, int n_pmu_v,
                                int n_pmu_i) {
    Placement p;
    const int n = net.n();
    const int nb = net.branch_count();
    if (include_scada) {
        for (int i = 0; i < n; ++i) p.scada_v.push_back(i);
        for (int i = 0; i < n; ++i)
            if (!net.nodes()[i].zero_injection) p.scada_injection.push_back(i);
        for (const auto& b : net.branches()) p.scada_flow.push_back({b.from, b.to});
    }
    n_pmu_v = std::min(n_pmu_v, n);
    n_pmu_i = std::min(n_pmu_i, nb);
    for (int k = 0; k < n_pmu_v; ++k) {
        int idx = static_cast<int>(static_cast<long long>(k) * n / n_pmu_v);
        if (p.pmu_v.empty() || p.pmu_v.back() != idx) p.pmu_v.push_back(idx);
    }
    for (int k = 0; k < n_pmu_i; ++k) {
        int idx = static_cast<int>(static_cast<long long>(k) * nb / n_pmu_i);
        const auto& b = net.branches()[idx];
        if (p.pmu_i.empty() || p.pmu_i.back() != std::make_pair(b.from, b.to))
            p.pmu_i.push_back({b.from, b.to});
    }
    return p;
}

/// Table-style placement kinds: 'a'..'c' hybrid SCADA+PMU with growing
/// PMU counts, 'd' full PMU coverage without SCADA.
inline Placement make_placement_kind(const Network& net, char kind, int pmu_v,
                                     int pmu_i) {
    const bool scada = (kind != 'd');
    if (kind == 'd') {
        pmu_v = net.n();
        pmu_i = net.branch_count();
    }
    return make_placement(net, scada, pmu_v, pmu_i);
}

inline nlohmann::json placement_to_json(const Placement& p, const Network& net) {
    nlohmann::json j;
    auto ids = [&](const std::vector<int>& v) {
        nlohmann::json a = nlohmann::json::array();
        for (int i : v) a.push_back(net.id_of(i));
        return a;
    };
    auto pairs = [&](const std::vector<std::pair<int, int>>& v) {
        nlohmann::json a = nlohmann::json::array();
        for (auto [f, t] : v)
            a.push_back({{"from", net.id_of(f)}, {"to", net.id_of(t)}});
        return a;
    };
    j["scada_v"] = ids(p.scada_v);
    j["scada_injection"] = ids(p.scada_injection);
    j["scada_flow"] = pairs(p.scada_flow);
    j["pmu_v"] = ids(p.pmu_v);
    j["pmu_i"] = pairs(p.pmu_i);
    return j;
}

inline Placement parse_placement(const std::string& text, const Network& net) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("placement: invalid JSON: ") + e.what());
    }
    Placement p;
    auto ids = [&](const char* field, std::vector<int>& out) {
        if (!j.contains(field)) return;
        for (const auto& v : j.at(field))
            out.push_back(net.index_of(v.is_string()
                                           ? v.get<std::string>()
                                           : std::to_string(v.get<long long>())));
    };
    auto pairs = [&](const char* field, std::vector<std::pair<int, int>>& out) {
        if (!j.contains(field)) return;
        for (const auto& v : j.at(field)) {
            int f = net.index_of(v.at("from").get<std::string>());
            int t = net.index_of(v.at("to").get<std::string>());
            if (!net.find_branch(f, t))
                throw ParseError("placement: no branch " + net.id_of(f) + "-" +
                                 net.id_of(t));
            out.push_back({f, t});
        }
    };
    ids("scada_v", p.scada_v);
    ids("scada_injection", p.scada_injection);
    ids("pmu_v", p.pmu_v);
    pairs("scada_flow", p.scada_flow);
    pairs("pmu_i", p.pmu_i);
    return p;
}

// ---------------------------------------------------------------------------
// Injection profiles
// ---------------------------------------------------------------------------

/// Injection file: {"slack_voltage": v, "injections": [{"node","p","q"}]}
/// with p + jq the complex power injected at the node (loads negative).
inline nlohmann::json injections_to_json(const std::vector<Complex>& inj,
                                         const Network& net, Complex slack_voltage) {
    nlohmann::json rows = nlohmann::json::array();
    for (int i = 0; i < net.n(); ++i) {
        if (i == net.slack() || inj[i] == Complex{}) continue;
        rows.push_back({{"node", net.id_of(i)},
                        {"p", inj[i].real()},
                        {"q", inj[i].imag()}});
    }
    return {{"slack_voltage", slack_voltage.real()}, {"injections", rows}};
}

struct InjectionProfile {
    std::vector<Complex> injections;
    Complex slack_voltage{1.0, 0.0};
};

inline InjectionProfile parse_injections(const std::string& text, const Network& net) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("injections: invalid JSON: ") + e.what());
    }
    InjectionProfile prof;
    prof.injections.assign(net.n(), Complex{});
    prof.slack_voltage = {j.value("slack_voltage", 1.0), 0.0};
    for (const auto& row : j.at("injections")) {
        int i = net.index_of(row.at("node").is_string()
                                 ? row.at("node").get<std::string>()
                                 : std::to_string(row.at("node").get<long long>()));
        prof.injections[i] = {row.value("p", 0.0), row.value("q", 0.0)};
        if (net.nodes()[i].zero_injection && prof.injections[i] != Complex{})
            throw ParseError("injections: nonzero injection at zero-injection node '" +
                             net.id_of(i) + "'");
    }
    return prof;
}

// ---------------------------------------------------------------------------
// Shipped presets
// ---------------------------------------------------------------------------

struct PlacementCounts {
    char kind;
    int pmu_v;
    int pmu_i;
};

struct FixturePreset {
    const char* name;
    SyntheticSpec spec;
    PlacementCounts placements[4];
};

inline FixturePreset fixture_preset(const std::string& name) {
    if (name == "118") {
        SyntheticSpec s;
        s.nodes = 118;
        s.branches = 186;
        s.zero_injection = 10;
        s.generators = 12;
        s.locality = 10;
        s.seed = 118118;
        return {"118", s, {{'a', 4, 3}, {'b', 3, 35}, {'c', 3, 186}, {'d', 118, 186}}};
    }
    if (name == "1888") {
        SyntheticSpec s;
        s.nodes = 1888;
        s.branches = 2531;
        s.zero_injection = 680;
        s.generators = 300;
        s.locality = 12;
        s.load_p_low = 0.075;
        s.load_p_high = 0.30;
        s.gen_q_ratio = 0.25;
        s.charging_low = 0.001;
        s.charging_high = 0.005;
        s.slack_ties = 16;
        s.seed = 18881888;
        return {"1888", s, {{'a', 2, 0}, {'b', 4, 154}, {'c', 87, 1261}, {'d', 1888, 2531}}};
    }
    if (name == "9241") {
        SyntheticSpec s;
        s.nodes = 9241;
        s.branches = 16049;
        s.zero_injection = 2901;
        s.generators = 1500;
        s.locality = 14;
        s.load_p_low = 0.06;
        s.load_p_high = 0.25;
        s.gen_q_ratio = 0.25;
        s.charging_low = 0.0005;
        s.charging_high = 0.003;
        s.slack_ties = 40;
        s.seed = 92419241;
        return {"9241", s,
                {{'a', 17, 89}, {'b', 38, 2007}, {'c', 66, 8025}, {'d', 9241, 16049}}};
    }
    throw std::invalid_argument("unknown fixture preset '" + name + "'");
}

}  // namespace cse
