#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace seqtrans {

// adjacency[i][j] == true means an edge i -> j.
using Adjacency = std::vector<std::vector<bool>>;

// Causal graph on (s, x_1..x_d, [y]). The sensitive node is the intervened
// source; the optional outcome node is a sink and is never transported.
struct CausalDag {
    std::vector<std::string> node_names;
    Adjacency adjacency;
    std::size_t sensitive = 0;
    std::optional<std::size_t> outcome;

    std::size_t size() const noexcept { return node_names.size(); }
    std::optional<std::size_t> find(std::string_view name) const;
    std::size_t index_of(std::string_view name) const;  // throws ValidationError
    bool has_edge(std::size_t from, std::size_t to) const { return adjacency[from][to]; }
    std::size_t edge_count() const;

    // Nodes other than the sensitive and outcome nodes, ascending index.
    std::vector<std::size_t> variables() const;

    // Stable digest of names, edges and roles; used to key tensor caches.
    std::uint64_t hash() const;
};

struct TopologicalOrder {
    std::size_t sensitive = 0;
    // Transported nodes only (sensitive node implicitly first, outcome excluded).
    std::vector<std::size_t> order;

    std::size_t position(std::size_t node) const;  // throws if absent
};

// Builds a DAG from the edge-list text format:
//   A -> B          edge
//   @sensitive s    role line
//   @outcome y      role line
//   # comment       (also trailing)
// Nodes are numbered in order of first appearance.
CausalDag parse_dag(std::string_view text);
CausalDag load_dag(const std::string& path);

// Programmatic construction; runs validate().
CausalDag make_dag(std::vector<std::string> names, Adjacency adjacency, std::size_t sensitive,
                   std::optional<std::size_t> outcome = std::nullopt);

void validate(const CausalDag& dag);

TopologicalOrder topological_order(const CausalDag& dag);

// Kahn's algorithm on a bare adjacency matrix, lowest ready index first.
// Returns nullopt when the graph has a cycle.
std::optional<std::vector<std::size_t>> kahn_order(const Adjacency& adjacency);

// One directed cycle as a node sequence (first node not repeated), or empty.
std::vector<std::size_t> find_cycle(const Adjacency& adjacency);

std::vector<std::size_t> parents(const CausalDag& dag, std::size_t node);

// Parents used as conditioning variables during transport: the sensitive node
// is dropped because conditioning on s is carried by the group split.
std::vector<std::size_t> conditioning_parents(const CausalDag& dag, std::size_t node);

}  // namespace seqtrans
