#include "seqtrans/dag.hpp"

#include "seqtrans/error.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <sstream>

namespace seqtrans {

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

bool valid_identifier(std::string_view s) {
    if (s.empty()) return false;
    return std::none_of(s.begin(), s.end(), [](char c) {
        return c == ' ' || c == '\t' || c == '@' || c == '#' || c == '>' || c == ',';
    });
}

[[noreturn]] void syntax_error(std::size_t line, const std::string& msg) {
    throw ValidationError("dag syntax error at line " + std::to_string(line) + ": " + msg);
}

std::string describe_cycle(const CausalDag& dag, const std::vector<std::size_t>& cycle) {
    std::string out;
    for (std::size_t n : cycle) out += dag.node_names[n] + " -> ";
    out += dag.node_names[cycle.front()];
    return out;
}

}  // namespace

std::optional<std::size_t> CausalDag::find(std::string_view name) const {
    const auto it = std::find(node_names.begin(), node_names.end(), name);
    if (it == node_names.end()) return std::nullopt;
    return static_cast<std::size_t>(it - node_names.begin());
}

std::size_t CausalDag::index_of(std::string_view name) const {
    if (auto i = find(name)) return *i;
    throw ValidationError("unknown dag node '" + std::string(name) + "'");
}

std::size_t CausalDag::edge_count() const {
    std::size_t n = 0;
    for (const auto& row : adjacency) n += static_cast<std::size_t>(std::count(row.begin(), row.end(), true));
    return n;
}

std::vector<std::size_t> CausalDag::variables() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < size(); ++i)
        if (i != sensitive && i != outcome) out.push_back(i);
    return out;
}

std::uint64_t CausalDag::hash() const {
    // FNV-1a
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto feed = [&h](std::string_view bytes) {
        for (unsigned char c : bytes) {
            h ^= c;
            h *= 0x100000001b3ULL;
        }
    };
    for (const auto& n : node_names) {
        feed(n);
        feed(std::string_view("\0", 1));
    }
    for (std::size_t i = 0; i < size(); ++i)
        for (std::size_t j = 0; j < size(); ++j) feed(adjacency[i][j] ? "1" : "0");
    feed("s" + std::to_string(sensitive));
    feed("y" + (outcome ? std::to_string(*outcome) : std::string("-")));
    return h;
}

std::size_t TopologicalOrder::position(std::size_t node) const {
    const auto it = std::find(order.begin(), order.end(), node);
    if (it == order.end()) throw ValidationError("node is not a transported variable");
    return static_cast<std::size_t>(it - order.begin());
}

CausalDag parse_dag(std::string_view text) {
    CausalDag dag;
    std::optional<std::string> sensitive_name;
    std::optional<std::string> outcome_name;

    auto intern = [&dag](std::string_view name) {
        if (auto i = dag.find(name)) return *i;
        dag.node_names.emplace_back(name);
        for (auto& row : dag.adjacency) row.push_back(false);
        dag.adjacency.emplace_back(dag.node_names.size(), false);
        return dag.node_names.size() - 1;
    };

    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;

        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;

        if (line.front() == '@') {
            const auto space = line.find_first_of(" \t");
            if (space == std::string_view::npos) syntax_error(line_no, "role line without a node name");
            const std::string_view tag = line.substr(1, space - 1);
            const std::string_view name = trim(line.substr(space));
            if (!valid_identifier(name)) syntax_error(line_no, "invalid node name '" + std::string(name) + "'");
            std::optional<std::string>* slot = nullptr;
            if (tag == "sensitive") {
                slot = &sensitive_name;
            } else if (tag == "outcome") {
                slot = &outcome_name;
            } else {
                syntax_error(line_no, "unknown role tag '@" + std::string(tag) + "'");
            }
            if (slot->has_value() && **slot != name) {
                syntax_error(line_no, "role @" + std::string(tag) + " declared twice");
            }
            *slot = std::string(name);
            intern(name);
            continue;
        }

        const auto arrow = line.find("->");
        if (arrow == std::string_view::npos) syntax_error(line_no, "expected 'A -> B'");
        const std::string_view from = trim(line.substr(0, arrow));
        const std::string_view to = trim(line.substr(arrow + 2));
        if (!valid_identifier(from) || !valid_identifier(to) || to.find("->") != std::string_view::npos) {
            syntax_error(line_no, "expected 'A -> B'");
        }
        if (from == to) syntax_error(line_no, "self-loop on '" + std::string(from) + "'");
        const std::size_t i = intern(from);
        const std::size_t j = intern(to);
        if (dag.adjacency[i][j]) {
            syntax_error(line_no, "duplicate edge " + std::string(from) + " -> " + std::string(to));
        }
        dag.adjacency[i][j] = true;
    }

    if (!sensitive_name) throw ValidationError("dag has no @sensitive node");
    dag.sensitive = dag.index_of(*sensitive_name);
    if (outcome_name) {
        if (*outcome_name == *sensitive_name) throw ValidationError("sensitive and outcome nodes coincide");
        dag.outcome = dag.index_of(*outcome_name);
    }
    validate(dag);
    return dag;
}

CausalDag load_dag(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot read dag file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_dag(buf.str());
}

CausalDag make_dag(std::vector<std::string> names, Adjacency adjacency, std::size_t sensitive,
                   std::optional<std::size_t> outcome) {
    CausalDag dag{std::move(names), std::move(adjacency), sensitive, outcome};
    validate(dag);
    return dag;
}

std::vector<std::size_t> find_cycle(const Adjacency& adjacency) {
    const std::size_t n = adjacency.size();
    enum class Mark { fresh, active, done };
    std::vector<Mark> mark(n, Mark::fresh);
    std::vector<std::size_t> stack;
    std::vector<std::size_t> cycle;

    std::function<bool(std::size_t)> visit = [&](std::size_t u) {
        mark[u] = Mark::active;
        stack.push_back(u);
        for (std::size_t v = 0; v < n; ++v) {
            if (!adjacency[u][v]) continue;
            if (mark[v] == Mark::active) {
                const auto it = std::find(stack.begin(), stack.end(), v);
                cycle.assign(it, stack.end());
                return true;
            }
            if (mark[v] == Mark::fresh && visit(v)) return true;
        }
        stack.pop_back();
        mark[u] = Mark::done;
        return false;
    };

    for (std::size_t u = 0; u < n; ++u)
        if (mark[u] == Mark::fresh && visit(u)) return cycle;
    return {};
}

void validate(const CausalDag& dag) {
    const std::size_t n = dag.size();
    if (n == 0) throw ValidationError("dag is empty");
    if (dag.adjacency.size() != n) throw ValidationError("adjacency size does not match node count");
    for (const auto& row : dag.adjacency)
        if (row.size() != n) throw ValidationError("adjacency matrix is not square");
    for (std::size_t i = 0; i < n; ++i) {
        if (dag.adjacency[i][i]) throw ValidationError("self-loop on '" + dag.node_names[i] + "'");
        if (dag.node_names[i].empty()) throw ValidationError("empty node name");
        for (std::size_t j = i + 1; j < n; ++j)
            if (dag.node_names[i] == dag.node_names[j])
                throw ValidationError("duplicate node name '" + dag.node_names[i] + "'");
    }
    if (dag.sensitive >= n) throw ValidationError("sensitive node index out of range");
    if (dag.outcome && (*dag.outcome >= n || *dag.outcome == dag.sensitive)) {
        throw ValidationError("invalid outcome node");
    }

    if (const auto cycle = find_cycle(dag.adjacency); !cycle.empty()) {
        throw ValidationError("cycle detected: " + describe_cycle(dag, cycle));
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (dag.adjacency[i][dag.sensitive]) {
            throw ValidationError("sensitive node '" + dag.node_names[dag.sensitive] + "' has parent '" +
                                  dag.node_names[i] + "'");
        }
        if (dag.outcome && dag.adjacency[*dag.outcome][i]) {
            throw ValidationError("outcome node '" + dag.node_names[*dag.outcome] + "' has child '" +
                                  dag.node_names[i] + "'");
        }
    }
}

std::optional<std::vector<std::size_t>> kahn_order(const Adjacency& adjacency) {
    const std::size_t n = adjacency.size();
    std::vector<std::size_t> indegree(n, 0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (adjacency[i][j]) ++indegree[j];

    std::vector<bool> emitted(n, false);
    std::vector<std::size_t> out;
    out.reserve(n);
    while (out.size() < n) {
        // Lowest ready index; n is small so a linear scan is fine.
        std::size_t next = n;
        for (std::size_t i = 0; i < n; ++i) {
            if (!emitted[i] && indegree[i] == 0) {
                next = i;
                break;
            }
        }
        if (next == n) return std::nullopt;
        emitted[next] = true;
        out.push_back(next);
        for (std::size_t j = 0; j < n; ++j)
            if (adjacency[next][j]) --indegree[j];
    }
    return out;
}

TopologicalOrder topological_order(const CausalDag& dag) {
    validate(dag);
    const auto full = kahn_order(dag.adjacency);
    if (!full) throw ValidationError("cycle detected");
    TopologicalOrder out;
    out.sensitive = dag.sensitive;
    for (std::size_t node : *full)
        if (node != dag.sensitive && node != dag.outcome) out.order.push_back(node);
    return out;
}

std::vector<std::size_t> parents(const CausalDag& dag, std::size_t node) {
    if (node >= dag.size()) throw ValidationError("node index out of range");
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < dag.size(); ++i)
        if (dag.adjacency[i][node]) out.push_back(i);
    return out;
}

std::vector<std::size_t> conditioning_parents(const CausalDag& dag, std::size_t node) {
    auto p = parents(dag, node);
    std::erase(p, dag.sensitive);
    return p;
}

}  // namespace seqtrans
