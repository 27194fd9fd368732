#pragma once

// Electrical network model and nodal admittance matrix.
//
// Admittances are per-unit throughout; no base conversion happens in
// this library.  Node ids are arbitrary strings mapped to dense indices
// 0..n-1 in file order, and the mapping is kept for output.

#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cse/sparse.hpp"

namespace cse {

struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Node {
    std::string id;
    Complex shunt;  // nodal shunt admittance g_sh + j b_sh
    bool zero_injection = false;
};

struct Branch {
    int from = -1;
    int to = -1;
    Complex series;      // series admittance of the branch
    Complex shunt_from;  // per-end shunt admittance (pi model), folds into Y_ii
    Complex shunt_to;
};

/// Validated network: unique node ids, one slack, connected graph,
/// nonzero series admittance on every branch.
class Network {
  public:
    static Network build(std::vector<Node> nodes, std::vector<Branch> branches,
                         int slack) {
        Network net;
        net.nodes_ = std::move(nodes);
        net.branches_ = std::move(branches);
        net.slack_ = slack;
        net.validate();
        return net;
    }

    /// Parse the JSON network file format:
    /// {"slack": id,
    ///  "nodes": [{"id", "g_sh", "b_sh", "zero_injection"}],
    ///  "branches": [{"from","to","g","b","b_sh_from","b_sh_to"}]}
    static Network parse(const std::string& text) {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(text);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(std::string("network: invalid JSON: ") + e.what());
        }
        if (!j.is_object() || !j.contains("nodes") || !j.contains("branches") ||
            !j.contains("slack"))
            throw ParseError("network: expected object with nodes, branches, slack");

        Network net;
        std::unordered_map<std::string, int> index;
        for (const auto& nj : j.at("nodes")) {
            Node n;
            n.id = id_string(nj.at("id"));
            n.shunt = {nj.value("g_sh", 0.0), nj.value("b_sh", 0.0)};
            n.zero_injection = nj.value("zero_injection", false);
            if (index.count(n.id))
                throw ParseError("network: duplicate node id '" + n.id + "'");
            index[n.id] = static_cast<int>(net.nodes_.size());
            net.nodes_.push_back(std::move(n));
        }
        for (const auto& bj : j.at("branches")) {
            Branch b;
            b.from = lookup(index, id_string(bj.at("from")));
            b.to = lookup(index, id_string(bj.at("to")));
            b.series = {bj.at("g").get<double>(), bj.at("b").get<double>()};
            b.shunt_from = {0.0, bj.value("b_sh_from", 0.0)};
            b.shunt_to = {0.0, bj.value("b_sh_to", 0.0)};
            net.branches_.push_back(b);
        }
        auto it = index.find(id_string(j.at("slack")));
        if (it == index.end()) throw ParseError("network: slack id not found");
        net.slack_ = it->second;
        net.validate();
        return net;
    }

    nlohmann::json to_json() const {
        nlohmann::json nodes = nlohmann::json::array();
        for (const auto& n : nodes_) {
            nodes.push_back({{"id", n.id},
                             {"g_sh", n.shunt.real()},
                             {"b_sh", n.shunt.imag()},
                             {"zero_injection", n.zero_injection}});
        }
        nlohmann::json branches = nlohmann::json::array();
        for (const auto& b : branches_) {
            branches.push_back({{"from", nodes_[b.from].id},
                                {"to", nodes_[b.to].id},
                                {"g", b.series.real()},
                                {"b", b.series.imag()},
                                {"b_sh_from", b.shunt_from.imag()},
                                {"b_sh_to", b.shunt_to.imag()}});
        }
        return {{"slack", nodes_[slack_].id}, {"nodes", nodes}, {"branches", branches}};
    }

    int n() const { return static_cast<int>(nodes_.size()); }
    int branch_count() const { return static_cast<int>(branches_.size()); }
    const std::vector<Node>& nodes() const { return nodes_; }
    const std::vector<Branch>& branches() const { return branches_; }
    int slack() const { return slack_; }

    const std::string& id_of(int i) const { return nodes_[i].id; }
    int index_of(const std::string& id) const {
        for (int i = 0; i < n(); ++i)
            if (nodes_[i].id == id) return i;
        throw ParseError("unknown node id '" + id + "'");
    }

    /// Locate the branch joining nodes a and b (either orientation).
    /// Returns the branch index and whether a is the 'from' end.
    std::optional<std::pair<int, bool>> find_branch(int a, int b) const {
        for (int k = 0; k < branch_count(); ++k) {
            if (branches_[k].from == a && branches_[k].to == b) return {{k, true}};
            if (branches_[k].from == b && branches_[k].to == a) return {{k, false}};
        }
        return std::nullopt;
    }

    std::vector<int> zero_injection_nodes() const {
        std::vector<int> z;
        for (int i = 0; i < n(); ++i)
            if (nodes_[i].zero_injection) z.push_back(i);
        return z;
    }

  private:
    static std::string id_string(const nlohmann::json& v) {
        if (v.is_string()) return v.get<std::string>();
        if (v.is_number_integer()) return std::to_string(v.get<long long>());
        throw ParseError("network: node id must be a string or integer");
    }
    static int lookup(const std::unordered_map<std::string, int>& index,
                      const std::string& id) {
        auto it = index.find(id);
        if (it == index.end())
            throw ParseError("network: branch endpoint '" + id + "' is not a node");
        return it->second;
    }

    void validate() const {
        if (nodes_.empty()) throw ParseError("network: no nodes");
        if (slack_ < 0 || slack_ >= n()) throw ParseError("network: missing slack");
        {
            std::unordered_map<std::string, int> seen;
            for (const auto& nd : nodes_)
                if (++seen[nd.id] > 1)
                    throw ParseError("network: duplicate node id '" + nd.id + "'");
        }
        if (nodes_[slack_].zero_injection)
            throw ParseError("network: slack node flagged zero_injection");
        std::unordered_map<long long, int> pairs;
        for (const auto& b : branches_) {
            if (b.from < 0 || b.from >= n() || b.to < 0 || b.to >= n())
                throw ParseError("network: branch endpoint out of range");
            if (b.from == b.to)
                throw ParseError("network: self-loop branch at node '" +
                                 nodes_[b.from].id + "'");
            if (b.series == Complex{})
                throw ParseError("network: zero series admittance on branch " +
                                 nodes_[b.from].id + "-" + nodes_[b.to].id);
            long long key = static_cast<long long>(std::min(b.from, b.to)) * n() +
                            std::max(b.from, b.to);
            if (++pairs[key] > 1)
                throw ParseError("network: duplicate branch " + nodes_[b.from].id +
                                 "-" + nodes_[b.to].id +
                                 " (parallel branches are not supported)");
        }
        // Connectivity: every node reachable from the slack.
        std::vector<std::vector<int>> adj(n());
        for (const auto& b : branches_) {
            adj[b.from].push_back(b.to);
            adj[b.to].push_back(b.from);
        }
        std::vector<char> seen(n(), 0);
        std::vector<int> stack{slack_};
        seen[slack_] = 1;
        while (!stack.empty()) {
            int v = stack.back();
            stack.pop_back();
            for (int u : adj[v])
                if (!seen[u]) {
                    seen[u] = 1;
                    stack.push_back(u);
                }
        }
        for (int i = 0; i < n(); ++i)
            if (!seen[i])
                throw ParseError("network: disconnected graph (node '" + nodes_[i].id +
                                 "' unreachable from slack)");
    }

    std::vector<Node> nodes_;
    std::vector<Branch> branches_;
    int slack_ = -1;
};

/// Nodal admittance matrix: Y_ii = y_i^sh + sum of incident branch and
/// branch-end shunt admittances, Y_ik = -y_ik for k != i.
struct AdmittanceMatrix {
    int n = 0;
    SparseComplexMatrix Y;
};

inline AdmittanceMatrix build_admittance(const Network& net) {
    std::vector<Triplet> t;
    t.reserve(net.n() + 2 * net.branch_count());
    for (int i = 0; i < net.n(); ++i)
        if (net.nodes()[i].shunt != Complex{}) t.push_back({i, i, net.nodes()[i].shunt});
    for (const auto& b : net.branches()) {
        t.push_back({b.from, b.from, b.series + b.shunt_from});
        t.push_back({b.to, b.to, b.series + b.shunt_to});
        t.push_back({b.from, b.to, -b.series});
        t.push_back({b.to, b.from, -b.series});
    }
    AdmittanceMatrix y;
    y.n = net.n();
    y.Y = SparseComplexMatrix::from_triplets(net.n(), net.n(), t);
    return y;
}

/// Dense per-node phasor voltage state.
using StateVector = std::vector<Complex>;

inline StateVector flat_start(int n) { return StateVector(n, Complex{1.0, 0.0}); }

inline bool state_within_bounds(const StateVector& u, double limit = 2.0) {
    for (const auto& z : u) {
        double m = std::abs(z);
        if (!(m > 0.0) || m >= limit || !std::isfinite(m)) return false;
    }
    return true;
}

}  // namespace cse
