#include "qkdvpp/keynet.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "qkdvpp/error.hpp"

namespace qkdvpp::keynet {

Bits KeyPool::total() const {
    Bits t = 0;
    for (const auto& b : buckets) t += b.bits;
    return t;
}

Bits expire_keys(KeyPool& pool, int now_slot, int ttl_slots) {
    Bits expired = 0;
    // Buckets are birth-ordered, so stale ones sit at the front.
    while (!pool.buckets.empty() && now_slot - pool.buckets.front().birth >= ttl_slots) {
        expired += pool.buckets.front().bits;
        pool.buckets.pop_front();
    }
    return expired;
}

namespace {

// Drains up to `want` bits oldest first; returns what was actually drawn.
Bits drain_fifo(std::deque<Bucket>& buckets, Bits want) {
    Bits got = 0;
    while (want > 0 && !buckets.empty()) {
        Bucket& b = buckets.front();
        const Bits take = std::min(want, b.bits);
        b.bits -= take;
        got += take;
        want -= take;
        if (b.bits == 0) buckets.pop_front();
    }
    return got;
}

// Discards the newest bits until the pool fits under the cap.
Bits trim_newest(std::deque<Bucket>& buckets, Bits excess) {
    Bits dropped = 0;
    while (excess > 0 && !buckets.empty()) {
        Bucket& b = buckets.back();
        const Bits take = std::min(excess, b.bits);
        b.bits -= take;
        dropped += take;
        excess -= take;
        if (b.bits == 0) buckets.pop_back();
    }
    return dropped;
}

}  // namespace

StepResult step_pool(KeyPool& pool, int now_slot, Bits generated_in, Bits routed_in, Bits routed_out,
                     Bits consumed, Bits expired) {
    StepResult res;
    res.expired = drain_fifo(pool.buckets, expired);

    const Bits fresh = generated_in + routed_in;
    if (fresh > 0) {
        if (!pool.buckets.empty() && pool.buckets.back().birth == now_slot)
            pool.buckets.back().bits += fresh;
        else
            pool.buckets.push_back({now_slot, fresh});
    }

    res.routed_out = drain_fifo(pool.buckets, routed_out);
    res.consumed = drain_fifo(pool.buckets, consumed);
    res.deficit = (routed_out - res.routed_out) + (consumed - res.consumed);

    const Bits total = pool.total();
    if (total > pool.cap) res.overflow = trim_newest(pool.buckets, total - pool.cap);
    return res;
}

Bits CarryRegister::draw(double expected) {
    const double x = expected + carry_;
    // nearbyint uses the current rounding mode, which is round-half-even by default.
    double n = std::nearbyint(x);
    if (n < 0.0) n = 0.0;
    carry_ = x - n;
    return static_cast<Bits>(n);
}

Topology Topology::from_model(const Model& model) {
    Topology t;
    t.n_nodes = static_cast<int>(model.nodes.size());
    t.n_domains = static_cast<int>(model.domains.size());
    t.link_from = model.link_from;
    t.link_to = model.link_to;
    t.link_domain = model.link_domain;
    t.node_domain = model.node_domain;
    return t;
}

namespace {

constexpr Bits kInf = std::numeric_limits<Bits>::max() / 4;

struct Move {
    int link;
    int dir;  // +1 along from->to, -1 against
    int next;
};

void check_topology(const Topology& topo, const std::vector<Bits>& demand) {
    const int n = topo.n_nodes;
    std::vector<int> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](int x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    for (std::size_t e = 0; e < topo.link_from.size(); ++e) parent[find(topo.link_from[e])] = find(topo.link_to[e]);
    std::vector<char> has_surplus(n, 0);
    bool any_surplus = false;
    for (int u = 0; u < n; ++u)
        if (demand[u] < 0) {
            has_surplus[find(u)] = 1;
            any_surplus = true;
        }
    if (!any_surplus) return;  // plain capacity shortfall, reported via the certificate
    for (int u = 0; u < n; ++u)
        if (demand[u] > 0 && !has_surplus[find(u)])
            throw Error(ErrorCode::Topology, "node " + std::to_string(u), "demand has no path to any surplus node");
}

}  // namespace

KeyFlows route_keys(const Topology& topo, const std::vector<Bits>& yields, const std::vector<Bits>& net_demand,
                    const std::vector<Bits>& domain_caps) {
    const int n = topo.n_nodes;
    const int m = static_cast<int>(topo.link_from.size());
    const int nd = topo.n_domains;
    check_topology(topo, net_demand);

    std::vector<Bits> supply(n, 0), demand(n, 0);
    for (int u = 0; u < n; ++u) {
        if (net_demand[u] < 0) supply[u] = -net_demand[u];
        if (net_demand[u] > 0) demand[u] = net_demand[u];
    }

    // Domains touched by each link.
    std::vector<std::array<int, 2>> link_doms(m, {-1, -1});
    for (int e = 0; e < m; ++e) {
        if (topo.link_domain[e] >= 0) {
            link_doms[e][0] = topo.link_domain[e];
        } else {
            link_doms[e][0] = topo.node_domain[topo.link_from[e]];
            link_doms[e][1] = topo.node_domain[topo.link_to[e]];
            if (link_doms[e][1] == link_doms[e][0]) link_doms[e][1] = -1;
        }
    }
    const bool capped = !domain_caps.empty();
    std::vector<Bits> remaining(nd, kInf);
    if (capped)
        for (int d = 0; d < nd; ++d) remaining[d] = std::max<Bits>(0, domain_caps[d]);
    std::vector<char> blocked(nd, 0);

    std::vector<std::vector<Move>> adj(n);
    for (int e = 0; e < m; ++e) {
        adj[topo.link_from[e]].push_back({e, +1, topo.link_to[e]});
        adj[topo.link_to[e]].push_back({e, -1, topo.link_from[e]});
    }

    std::vector<Bits> f(m, 0);  // net flow along from->to
    std::vector<Bits> fs(n, 0), ft(n, 0);

    // Residual of moving along link e in direction dir, and whether the move grows |f_e|.
    auto link_residual = [&](int e, int dir) -> Bits { return dir > 0 ? yields[e] - f[e] : yields[e] + f[e]; };
    auto grows = [&](int e, int dir) { return dir > 0 ? f[e] >= 0 : f[e] <= 0; };
    auto add_allowed = [&](int e) {
        for (int d : link_doms[e])
            if (d >= 0 && (blocked[d] || remaining[d] <= 0)) return false;
        return true;
    };
    auto usable = [&](int e, int dir) {
        if (link_residual(e, dir) <= 0) return false;
        return !grows(e, dir) || add_allowed(e);
    };

    std::vector<int> prev_node(n), prev_link(n), prev_dir(n);
    std::vector<char> seen(n);
    for (;;) {
        std::fill(seen.begin(), seen.end(), 0);
        std::vector<int> queue;
        for (int u = 0; u < n; ++u)
            if (supply[u] - fs[u] > 0) {
                seen[u] = 1;
                prev_node[u] = -1;
                queue.push_back(u);
            }
        int end = -1;
        for (std::size_t qi = 0; qi < queue.size() && end < 0; ++qi) {
            const int u = queue[qi];
            if (demand[u] - ft[u] > 0) {
                end = u;
                break;
            }
            for (const Move& mv : adj[u]) {
                if (seen[mv.next] || !usable(mv.link, mv.dir)) continue;
                seen[mv.next] = 1;
                prev_node[mv.next] = u;
                prev_link[mv.next] = mv.link;
                prev_dir[mv.next] = mv.dir;
                queue.push_back(mv.next);
            }
        }
        if (end < 0) break;

        // Bottleneck; moves never cross a zero of f_e so the domain accounting stays linear.
        Bits delta = demand[end] - ft[end];
        std::vector<Bits> coeff(nd, 0);
        int start = end;
        for (int v = end; prev_node[v] >= 0; v = prev_node[v]) {
            const int e = prev_link[v], dir = prev_dir[v];
            if (grows(e, dir)) {
                delta = std::min(delta, link_residual(e, dir));
                for (int d : link_doms[e])
                    if (d >= 0) ++coeff[d];
            } else {
                delta = std::min(delta, std::abs(f[e]));
                for (int d : link_doms[e])
                    if (d >= 0) --coeff[d];
            }
            start = prev_node[v];
        }
        delta = std::min(delta, supply[start] - fs[start]);
        bool stalled = false;
        if (capped)
            for (int d = 0; d < nd; ++d)
                if (coeff[d] > 0) {
                    const Bits lim = remaining[d] / coeff[d];
                    if (lim <= 0) {
                        blocked[d] = 1;
                        stalled = true;
                    }
                    delta = std::min(delta, lim);
                }
        if (stalled || delta <= 0) continue;

        for (int v = end; prev_node[v] >= 0; v = prev_node[v]) f[prev_link[v]] += prev_dir[v] * delta;
        fs[start] += delta;
        ft[end] += delta;
        if (capped)
            for (int d = 0; d < nd; ++d) remaining[d] -= coeff[d] * delta;
    }

    KeyFlows out;
    out.forward.assign(m, 0);
    out.backward.assign(m, 0);
    out.node_in.assign(n, 0);
    out.node_out.assign(n, 0);
    out.domain_use.assign(nd, 0);
    out.shortfall.assign(n, 0);
    for (int e = 0; e < m; ++e) {
        if (f[e] > 0) out.forward[e] = f[e];
        if (f[e] < 0) out.backward[e] = -f[e];
        const Bits a = std::abs(f[e]);
        out.node_out[f[e] >= 0 ? topo.link_from[e] : topo.link_to[e]] += a;
        out.node_in[f[e] >= 0 ? topo.link_to[e] : topo.link_from[e]] += a;
        for (int d : link_doms[e])
            if (d >= 0) out.domain_use[d] += a;
    }
    for (int u = 0; u < n; ++u) {
        out.delivered += ft[u];
        out.shortfall[u] = demand[u] - ft[u];
        out.total_shortfall += out.shortfall[u];
    }
    out.feasible = out.total_shortfall == 0;
    if (!out.feasible) {
        // Source side of the final residual graph; everything else is the deficit side of the cut.
        std::fill(seen.begin(), seen.end(), 0);
        std::vector<int> queue;
        for (int u = 0; u < n; ++u)
            if (supply[u] - fs[u] > 0) {
                seen[u] = 1;
                queue.push_back(u);
            }
        for (std::size_t qi = 0; qi < queue.size(); ++qi)
            for (const Move& mv : adj[queue[qi]])
                if (!seen[mv.next] && usable(mv.link, mv.dir)) {
                    seen[mv.next] = 1;
                    queue.push_back(mv.next);
                }
        for (int u = 0; u < n; ++u)
            if (!seen[u]) out.cut_nodes.push_back(u);
        for (int e = 0; e < m; ++e)
            if (seen[topo.link_from[e]] != seen[topo.link_to[e]]) out.cut_links.push_back(e);
    }
    return out;
}

}  // namespace qkdvpp::keynet
