#pragma once

// Measurement functions h(x, conj(x)), their Wirtinger Jacobian blocks
// with respect to x and conj(x), and the equality-constraint rows
// (zero power injections plus the slack-angle condition).
//
// Complex-valued measurements pair P and Q (or re/im) into one complex
// row.  The voltage magnitude channel is carried as the squared
// magnitude u*conj(u), which keeps every measurement function
// polynomial in (x, conj(x)) and every Jacobian entry closed form.

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cse/network.hpp"

namespace cse {

enum class MeasurementKind {
    ScadaVoltageMagSq,
    ScadaPowerInjection,
    ScadaPowerFlow,
    PmuVoltage,
    PmuCurrentFlow,
    ZeroInjectionPseudo,
};

inline const char* kind_name(MeasurementKind k) {
    switch (k) {
        case MeasurementKind::ScadaVoltageMagSq: return "ScadaVoltageMagSq";
        case MeasurementKind::ScadaPowerInjection: return "ScadaPowerInjection";
        case MeasurementKind::ScadaPowerFlow: return "ScadaPowerFlow";
        case MeasurementKind::PmuVoltage: return "PmuVoltage";
        case MeasurementKind::PmuCurrentFlow: return "PmuCurrentFlow";
        case MeasurementKind::ZeroInjectionPseudo: return "ZeroInjectionPseudo";
    }
    return "?";
}

inline MeasurementKind kind_from_name(const std::string& s) {
    for (auto k : {MeasurementKind::ScadaVoltageMagSq, MeasurementKind::ScadaPowerInjection,
                   MeasurementKind::ScadaPowerFlow, MeasurementKind::PmuVoltage,
                   MeasurementKind::PmuCurrentFlow, MeasurementKind::ZeroInjectionPseudo})
        if (s == kind_name(k)) return k;
    throw ParseError("measurement: unknown kind '" + s + "'");
}

/// Real-valued rows are their own conjugates and enter the gain system
/// only once; complex rows contribute a conjugate partner as well.
inline bool kind_is_real_valued(MeasurementKind k) {
    return k == MeasurementKind::ScadaVoltageMagSq;
}

inline bool kind_is_branch_located(MeasurementKind k) {
    return k == MeasurementKind::ScadaPowerFlow || k == MeasurementKind::PmuCurrentFlow;
}

struct Measurement {
    MeasurementKind kind;
    int node = -1;  // node kinds
    int from = -1;  // flow kinds: metered end
    int to = -1;    // flow kinds: far end
    Complex value;  // z, per-unit; real-valued kinds carry zero imaginary part
    double sigma = 0.0;
    double weight = 1.0;
};

using MeasurementSet = std::vector<Measurement>;

// ---------------------------------------------------------------------------
// File format: JSON lines, one object per measurement
// ---------------------------------------------------------------------------

inline void validate_measurement(const Measurement& m, const Network& net) {
    if (!(m.weight > 0.0)) throw ParseError("measurement: weight must be positive");
    if (m.sigma < 0.0) throw ParseError("measurement: sigma must be nonnegative");
    if (kind_is_branch_located(m.kind)) {
        if (m.from < 0 || m.from >= net.n() || m.to < 0 || m.to >= net.n())
            throw ParseError("measurement: invalid branch endpoints");
        if (!net.find_branch(m.from, m.to))
            throw ParseError("measurement: no branch " + net.id_of(m.from) + "-" +
                             net.id_of(m.to));
    } else {
        if (m.node < 0 || m.node >= net.n())
            throw ParseError("measurement: invalid node for kind " +
                             std::string(kind_name(m.kind)));
    }
    if (kind_is_real_valued(m.kind) && m.value.imag() != 0.0)
        throw ParseError("measurement: real-valued kind with nonzero imaginary part");
}

/// Parse JSON-lines measurements.  SCADA P and Q delivered as separate
/// rows for the same location merge additively into one complex row
/// with the smaller weight and the larger sigma.
inline MeasurementSet parse_measurements(const std::string& text, const Network& net) {
    MeasurementSet out;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("measurement line " + std::to_string(lineno) +
                             ": invalid JSON: " + e.what());
        }
        Measurement m;
        m.kind = kind_from_name(j.at("kind").get<std::string>());
        if (kind_is_branch_located(m.kind)) {
            m.from = net.index_of(j.at("from").is_string()
                                      ? j.at("from").get<std::string>()
                                      : std::to_string(j.at("from").get<long long>()));
            m.to = net.index_of(j.at("to").is_string()
                                    ? j.at("to").get<std::string>()
                                    : std::to_string(j.at("to").get<long long>()));
        } else {
            m.node = net.index_of(j.at("node").is_string()
                                      ? j.at("node").get<std::string>()
                                      : std::to_string(j.at("node").get<long long>()));
        }
        m.value = {j.value("value_re", 0.0), j.value("value_im", 0.0)};
        m.sigma = j.value("sigma", 0.0);
        m.weight = j.value("weight", 1.0);
        validate_measurement(m, net);

        bool merged = false;
        if (m.kind == MeasurementKind::ScadaPowerInjection ||
            m.kind == MeasurementKind::ScadaPowerFlow) {
            for (auto& e : out) {
                if (e.kind == m.kind && e.node == m.node && e.from == m.from &&
                    e.to == m.to) {
                    e.value += m.value;
                    e.weight = std::min(e.weight, m.weight);
                    e.sigma = std::max(e.sigma, m.sigma);
                    merged = true;
                    break;
                }
            }
        }
        if (!merged) out.push_back(m);
    }
    return out;
}

inline std::string serialize_measurements(const MeasurementSet& set, const Network& net) {
    std::ostringstream os;
    for (const auto& m : set) {
        nlohmann::json j{{"kind", kind_name(m.kind)},
                         {"value_re", m.value.real()},
                         {"value_im", m.value.imag()},
                         {"sigma", m.sigma},
                         {"weight", m.weight}};
        if (kind_is_branch_located(m.kind)) {
            j["from"] = net.id_of(m.from);
            j["to"] = net.id_of(m.to);
        } else {
            j["node"] = net.id_of(m.node);
        }
        os << j.dump() << '\n';
    }
    return os.str();
}

// ---------------------------------------------------------------------------
// Sparse Jacobian rows
// ---------------------------------------------------------------------------

/// One sparse row: parallel column/value arrays sorted by column.
struct SparseRow {
    std::vector<int> cols;
    std::vector<Complex> vals;

    void add(int c, Complex v) {
        cols.push_back(c);
        vals.push_back(v);
    }
    std::size_t size() const { return cols.size(); }
};

/// m x n block of sparse rows (Hx, Hxbar, Jx or Jxbar).
struct RowBlock {
    int n = 0;
    std::vector<SparseRow> rows;

    std::vector<std::vector<Complex>> dense() const {
        std::vector<std::vector<Complex>> d(rows.size(), std::vector<Complex>(n));
        for (std::size_t r = 0; r < rows.size(); ++r)
            for (std::size_t k = 0; k < rows[r].size(); ++k)
                d[r][rows[r].cols[k]] += rows[r].vals[k];
        return d;
    }
};

namespace detail {

inline Complex nodal_current(const AdmittanceMatrix& y, const StateVector& u, int i) {
    Complex acc{};
    // Y is symmetric by construction, so column i doubles as row i.
    for (int p = y.Y.col_ptr()[i]; p < y.Y.col_ptr()[i + 1]; ++p)
        acc += y.Y.values()[p] * u[y.Y.row_idx()[p]];
    return acc;
}

struct BranchEnd {
    Complex series;
    Complex shunt;  // shunt at the metered end
    int near;
    int far;
};

inline BranchEnd branch_end(const Network& net, int a, int o) {
    auto hit = net.find_branch(a, o);
    if (!hit)
        throw ParseError("measurement: no branch " + net.id_of(a) + "-" + net.id_of(o));
    const Branch& b = net.branches()[hit->first];
    return {b.series, hit->second ? b.shunt_from : b.shunt_to, a, o};
}

inline Complex branch_current(const BranchEnd& be, const StateVector& u) {
    return be.series * (u[be.near] - u[be.far]) + be.shunt * u[be.near];
}

}  // namespace detail

/// Model value for one measurement at the given state.
inline Complex eval_h_one(const StateVector& u, const Measurement& m,
                          const Network& net, const AdmittanceMatrix& y) {
    switch (m.kind) {
        case MeasurementKind::PmuVoltage:
            return u[m.node];
        case MeasurementKind::ScadaVoltageMagSq:
            return u[m.node] * std::conj(u[m.node]);
        case MeasurementKind::ScadaPowerInjection:
        case MeasurementKind::ZeroInjectionPseudo:
            return u[m.node] * std::conj(detail::nodal_current(y, u, m.node));
        case MeasurementKind::ScadaPowerFlow: {
            auto be = detail::branch_end(net, m.from, m.to);
            return u[m.from] * std::conj(detail::branch_current(be, u));
        }
        case MeasurementKind::PmuCurrentFlow: {
            auto be = detail::branch_end(net, m.from, m.to);
            return detail::branch_current(be, u);
        }
    }
    throw std::logic_error("eval_h_one: unhandled kind");
}

inline std::vector<Complex> eval_h(const StateVector& u, const MeasurementSet& meas,
                                   const Network& net, const AdmittanceMatrix& y) {
    std::vector<Complex> h;
    h.reserve(meas.size());
    for (const auto& m : meas) h.push_back(eval_h_one(u, m, net, y));
    return h;
}

/// Wirtinger Jacobian blocks: row k holds the derivatives of h_k with
/// respect to x (Hx) and conj(x) (Hxbar).  PMU rows are linear in x and
/// have empty conjugate rows.
inline std::pair<RowBlock, RowBlock> eval_jacobians(const StateVector& u,
                                                    const MeasurementSet& meas,
                                                    const Network& net,
                                                    const AdmittanceMatrix& y) {
    RowBlock hx{net.n(), {}}, hxbar{net.n(), {}};
    hx.rows.reserve(meas.size());
    hxbar.rows.reserve(meas.size());
    for (const auto& m : meas) {
        SparseRow rx, rxb;
        switch (m.kind) {
            case MeasurementKind::PmuVoltage:
                rx.add(m.node, {1.0, 0.0});
                break;
            case MeasurementKind::ScadaVoltageMagSq:
                rx.add(m.node, std::conj(u[m.node]));
                rxb.add(m.node, u[m.node]);
                break;
            case MeasurementKind::ScadaPowerInjection:
            case MeasurementKind::ZeroInjectionPseudo: {
                const int i = m.node;
                rx.add(i, std::conj(detail::nodal_current(y, u, i)));
                for (int p = y.Y.col_ptr()[i]; p < y.Y.col_ptr()[i + 1]; ++p)
                    rxb.add(y.Y.row_idx()[p], std::conj(y.Y.values()[p]) * u[i]);
                break;
            }
            case MeasurementKind::ScadaPowerFlow: {
                auto be = detail::branch_end(net, m.from, m.to);
                rx.add(be.near, std::conj(detail::branch_current(be, u)));
                rxb.add(be.near, u[be.near] * std::conj(be.series + be.shunt));
                rxb.add(be.far, -u[be.near] * std::conj(be.series));
                break;
            }
            case MeasurementKind::PmuCurrentFlow: {
                auto be = detail::branch_end(net, m.from, m.to);
                rx.add(be.near, be.series + be.shunt);
                rx.add(be.far, -be.series);
                break;
            }
        }
        hx.rows.push_back(std::move(rx));
        hxbar.rows.push_back(std::move(rxb));
    }
    return {std::move(hx), std::move(hxbar)};
}

// ---------------------------------------------------------------------------
// Equality constraints
// ---------------------------------------------------------------------------

/// Zero-injection nodes plus the slack whose angle is pinned.
struct ConstraintSpec {
    std::vector<int> zero_injection_nodes;
    int slack = -1;

    void validate(const Network& net) const {
        std::vector<char> seen(net.n(), 0);
        for (int i : zero_injection_nodes) {
            if (i < 0 || i >= net.n())
                throw ParseError("constraints: invalid node index");
            if (seen[i]) throw ParseError("constraints: duplicate zero-injection node");
            seen[i] = 1;
        }
        if (slack < 0 || slack >= net.n()) throw ParseError("constraints: invalid slack");
        if (seen[slack])
            throw ParseError("constraints: slack listed as zero injection");
    }
};

inline ConstraintSpec make_constraint_spec(const Network& net,
                                           bool use_zero_injections = true) {
    ConstraintSpec cs;
    if (use_zero_injections) cs.zero_injection_nodes = net.zero_injection_nodes();
    cs.slack = net.slack();
    cs.validate(net);
    return cs;
}

/// Constraint values and Wirtinger Jacobian blocks.  The slack-angle
/// row Im(u_s) is always last; it is real-valued and therefore its own
/// conjugate, which the flag vector records.
struct ConstraintEval {
    std::vector<Complex> s;
    RowBlock Jx, Jxbar;
    std::vector<char> self_conjugate;
};

inline ConstraintEval eval_constraints(const StateVector& u, const ConstraintSpec& cs,
                                       const AdmittanceMatrix& y) {
    ConstraintEval ce;
    ce.Jx.n = ce.Jxbar.n = y.n;
    for (int i : cs.zero_injection_nodes) {
        ce.s.push_back(u[i] * std::conj(detail::nodal_current(y, u, i)));
        SparseRow jx, jxb;
        jx.add(i, std::conj(detail::nodal_current(y, u, i)));
        for (int p = y.Y.col_ptr()[i]; p < y.Y.col_ptr()[i + 1]; ++p)
            jxb.add(y.Y.row_idx()[p], std::conj(y.Y.values()[p]) * u[i]);
        ce.Jx.rows.push_back(std::move(jx));
        ce.Jxbar.rows.push_back(std::move(jxb));
        ce.self_conjugate.push_back(0);
    }
    // Slack angle: Im(u_s) = (i/2)(conj(u_s) - u_s) = 0.
    ce.s.push_back({u[cs.slack].imag(), 0.0});
    SparseRow jx, jxb;
    jx.add(cs.slack, {0.0, -0.5});
    jxb.add(cs.slack, {0.0, 0.5});
    ce.Jx.rows.push_back(std::move(jx));
    ce.Jxbar.rows.push_back(std::move(jxb));
    ce.self_conjugate.push_back(1);
    return ce;
}

/// Conjugated constraint rows: d conj(s)/dx = conj(ds/dxbar) and
/// d conj(s)/dxbar = conj(ds/dx).  The returned blocks are already in
/// (x, xbar) order, ready to stack below the original rows.
struct ConjugatedRows {
    std::vector<Complex> s;
    RowBlock Jx, Jxbar;
};

inline ConjugatedRows conjugate_rows(const std::vector<Complex>& s, const RowBlock& jx,
                                     const RowBlock& jxbar) {
    ConjugatedRows out;
    out.Jx.n = jx.n;
    out.Jxbar.n = jxbar.n;
    out.s.reserve(s.size());
    for (const auto& v : s) out.s.push_back(std::conj(v));
    auto conj_block = [](const RowBlock& b) {
        RowBlock r;
        r.n = b.n;
        r.rows.reserve(b.rows.size());
        for (const auto& row : b.rows) {
            SparseRow cr;
            cr.cols = row.cols;
            cr.vals.reserve(row.vals.size());
            for (const auto& v : row.vals) cr.vals.push_back(std::conj(v));
            r.rows.push_back(std::move(cr));
        }
        return r;
    };
    out.Jx = conj_block(jxbar);
    out.Jxbar = conj_block(jx);
    return out;
}

// ---------------------------------------------------------------------------
// Assembled measurement rows (residual + Jacobians + weights)
// ---------------------------------------------------------------------------

/// Everything the gain assembly needs about the measurement rows at a
/// given state.
struct MeasurementRows {
    std::vector<Complex> h;
    std::vector<Complex> r;  // z - h
    std::vector<double> w;
    RowBlock Hx, Hxbar;
    std::vector<char> self_conjugate;
};

inline MeasurementRows build_measurement_rows(const StateVector& u,
                                              const MeasurementSet& meas,
                                              const Network& net,
                                              const AdmittanceMatrix& y) {
    MeasurementRows mr;
    mr.h = eval_h(u, meas, net, y);
    auto [hx, hxbar] = eval_jacobians(u, meas, net, y);
    mr.Hx = std::move(hx);
    mr.Hxbar = std::move(hxbar);
    mr.r.reserve(meas.size());
    mr.w.reserve(meas.size());
    mr.self_conjugate.reserve(meas.size());
    for (std::size_t k = 0; k < meas.size(); ++k) {
        mr.r.push_back(meas[k].value - mr.h[k]);
        mr.w.push_back(meas[k].weight);
        mr.self_conjugate.push_back(kind_is_real_valued(meas[k].kind) ? 1 : 0);
    }
    return mr;
}

/// True when every row is linear in the state (PMU-only sets): a single
/// least-squares solve is then exact.
inline bool measurements_linear(const MeasurementSet& meas) {
    for (const auto& m : meas)
        if (m.kind != MeasurementKind::PmuVoltage &&
            m.kind != MeasurementKind::PmuCurrentFlow)
            return false;
    return true;
}

}  // namespace cse
