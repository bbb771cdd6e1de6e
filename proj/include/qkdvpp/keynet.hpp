#pragma once

#include <deque>
#include <vector>

#include "qkdvpp/model.hpp"

namespace qkdvpp::keynet {

struct Bucket {
    int birth = 0;
    Bits bits = 0;
};

// Buckets are kept sorted by birth slot, oldest first.
struct KeyPool {
    int node = 0;
    Bits cap = 0;
    std::deque<Bucket> buckets;

    Bits total() const;
};

// Removes buckets with now - birth >= ttl; returns the number of bits purged.
Bits expire_keys(KeyPool& pool, int now_slot, int ttl_slots);

struct StepResult {
    Bits deficit = 0;    // requested outflow + consumption that could not be served
    Bits overflow = 0;   // bits discarded at the cap (newest first)
    Bits consumed = 0;   // consumption actually served
    Bits routed_out = 0; // outflow actually served
    Bits expired = 0;
};

// total' = min(cap, max(0, total + gen + in - out - cons - expired)). Expired bits and draws come out of
// the oldest buckets; fresh bits (gen + in) enter as one bucket born at now_slot. Outflow is served
// before local consumption.
StepResult step_pool(KeyPool& pool, int now_slot, Bits generated_in, Bits routed_in, Bits routed_out,
                     Bits consumed, Bits expired);

// Turns fractional expected consumption into integer draws without drift (round half to even).
class CarryRegister {
public:
    Bits draw(double expected);
    double carry() const { return carry_; }

private:
    double carry_ = 0.0;
};

struct Topology {
    int n_nodes = 0;
    int n_domains = 0;
    std::vector<int> link_from;
    std::vector<int> link_to;
    std::vector<int> link_domain;  // -1 for inter-domain links
    std::vector<int> node_domain;

    static Topology from_model(const Model& model);
};

struct KeyFlows {
    std::vector<Bits> forward;   // per link, from -> to
    std::vector<Bits> backward;  // per link, to -> from
    std::vector<Bits> node_in;
    std::vector<Bits> node_out;
    std::vector<Bits> domain_use;
    Bits delivered = 0;
    bool feasible = true;
    // Infeasibility certificate: deficit-side node set of a minimum cut, its saturated links and the
    // unmet demand per node.
    std::vector<int> cut_nodes;
    std::vector<int> cut_links;
    std::vector<Bits> shortfall;
    Bits total_shortfall = 0;
};

// Max-flow feasibility routing. net_demand[u] > 0 asks for bits, < 0 offers surplus. Each link carries
// at most yields[e] bits summed over both directions. Flow on a link counts against the transit cap of
// its domain; inter-domain links count against both endpoint domains. Throws Topology when a node with
// demand has no structural path to any surplus node.
KeyFlows route_keys(const Topology& topo, const std::vector<Bits>& yields, const std::vector<Bits>& net_demand,
                    const std::vector<Bits>& domain_caps);

}  // namespace qkdvpp::keynet
