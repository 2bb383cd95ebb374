// Bipartite user-item graph, its random-walk transition matrices, and the
// symmetrized two-step item-item projection that gets raised to the lambda-th
// power (see sparse.hpp for the powering kernel).
#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "copgraph/errors.hpp"
#include "copgraph/interactions.hpp"
#include "copgraph/sparse.hpp"
#include "copgraph/threading.hpp"

namespace copgraph {

// Unweighted undirected bipartite graph with binary edges: an edge exists
// iff the user interacted with the item at least once.
class BipartiteGraph {
public:
    BipartiteGraph(std::vector<std::vector<std::uint32_t>> userAdj, std::size_t nItems)
        : userAdj_(std::move(userAdj)), itemAdj_(nItems) {
        for (std::uint32_t u = 0; u < userAdj_.size(); ++u)
            for (std::uint32_t v : userAdj_[u]) itemAdj_[v].push_back(u);
    }

    std::size_t nUsers() const { return userAdj_.size(); }
    std::size_t nItems() const { return itemAdj_.size(); }
    std::span<const std::uint32_t> userItems(std::uint32_t u) const { return userAdj_[u]; }
    std::span<const std::uint32_t> itemUsers(std::uint32_t v) const { return itemAdj_[v]; }
    std::size_t userDegree(std::uint32_t u) const { return userAdj_[u].size(); }
    std::size_t itemDegree(std::uint32_t v) const { return itemAdj_[v].size(); }

private:
    std::vector<std::vector<std::uint32_t>> userAdj_;
    std::vector<std::vector<std::uint32_t>> itemAdj_;
};

inline BipartiteGraph buildBipartite(const InteractionLog& log) {
    if (log.nEvents() == 0) throw EmptyDatasetError("cannot build a bipartite graph from an empty log");
    std::vector<std::vector<std::uint32_t>> userAdj(log.nUsers());
    for (std::uint32_t u = 0; u < log.nUsers(); ++u) {
        auto& adj = userAdj[u];
        for (const Event& e : log.userEvents(u)) adj.push_back(e.item);
        std::sort(adj.begin(), adj.end());
        adj.erase(std::unique(adj.begin(), adj.end()), adj.end());
    }
    return BipartiteGraph(std::move(userAdj), log.nItems());
}

// One-step walk matrices over the bipartite graph: P_UV[u] spreads 1/deg(u)
// over u's items, P_VU[v] spreads 1/deg(v) over v's users. Both are row
// stochastic.
inline std::pair<SparseMatrix, SparseMatrix> transitionMatrices(const BipartiteGraph& g) {
    SparseMatrix pUV(g.nUsers(), g.nItems());
    std::vector<SparseEntry> row;
    for (std::uint32_t u = 0; u < g.nUsers(); ++u) {
        auto items = g.userItems(u);
        if (items.empty()) throw ContractError("user " + std::to_string(u) + " has degree 0; n-core filtering is missing");
        row.clear();
        const double w = 1.0 / static_cast<double>(items.size());
        for (std::uint32_t v : items) row.push_back({v, w});
        pUV.appendRow(row);
    }
    SparseMatrix pVU(g.nItems(), g.nUsers());
    for (std::uint32_t v = 0; v < g.nItems(); ++v) {
        auto users = g.itemUsers(v);
        if (users.empty()) throw ContractError("item " + std::to_string(v) + " has degree 0; n-core filtering is missing");
        row.clear();
        const double w = 1.0 / static_cast<double>(users.size());
        for (std::uint32_t u : users) row.push_back({u, w});
        pVU.appendRow(row);
    }
    return {std::move(pUV), std::move(pVU)};
}

// Q = (1/|V|) * P_VU * P_UV: probability of walking item -> user -> item in
// exactly two steps under a uniform start prior.
inline SparseMatrix twoStepItemMatrix(const SparseMatrix& pVU, const SparseMatrix& pUV, std::size_t nItems, unsigned threads = 1) {
    if (pVU.cols() != pUV.rows()) throw DimensionError("P_VU and P_UV inner dimensions disagree");
    if (pVU.rows() != nItems || pUV.cols() != nItems) throw DimensionError("item dimension mismatch");
    if (nItems == 0) throw DimensionError("nItems must be positive");
    SparseMatrix product = multiply(pVU, pUV, PruningPolicy::none(), threads);
    return scale(product, 1.0 / static_cast<double>(nItems));
}

// P_VV = Q + Q^T, symmetric by construction.
inline SparseMatrix symmetrize(const SparseMatrix& q) {
    if (q.rows() != q.cols()) throw DimensionError("symmetrize requires a square matrix");
    return add(q, transpose(q));
}

// Row-streaming prune(Q + Q^T): row i of Q^T is computable on its own as row
// i of (1/|V|) * P_UV^T * P_VU^T, so the full unpruned Q never has to be held
// in memory. Value-identical to prune(symmetrize(twoStepItemMatrix(...))),
// which the lambda=1 power path needs on catalog-scale data.
inline SparseMatrix symmetrizedTwoStepPruned(const SparseMatrix& pVU, const SparseMatrix& pUV, std::size_t nItems,
                                             const PruningPolicy& policy, unsigned threads = 1) {
    if (pVU.cols() != pUV.rows()) throw DimensionError("P_VU and P_UV inner dimensions disagree");
    if (pVU.rows() != nItems || pUV.cols() != nItems) throw DimensionError("item dimension mismatch");
    policy.validate();

    const SparseMatrix pUVt = transpose(pUV);
    const SparseMatrix pVUt = transpose(pVU);
    const double invV = 1.0 / static_cast<double>(nItems);

    SparseMatrix out(nItems, nItems);
    std::vector<std::vector<SparseEntry>> rows(nItems);
    struct Workspace {
        std::vector<double> accQ;  // row i of P_VU * P_UV, unscaled
        std::vector<double> accT;  // row i of P_UV^T * P_VU^T, unscaled
        std::vector<std::uint32_t> touched;
    };
    const unsigned nw = std::max(1u, std::min(resolveThreads(threads), static_cast<unsigned>(nItems)));
    std::vector<Workspace> ws(nw);
    for (auto& w : ws) {
        w.accQ.assign(nItems, 0.0);
        w.accT.assign(nItems, 0.0);
    }

    const std::size_t chunk = (nItems + nw - 1) / nw;
    parallelFor(nw, nw, [&](std::size_t t) {
        auto& w = ws[t];
        const std::size_t begin = t * chunk;
        const std::size_t end = std::min(nItems, begin + chunk);
        for (std::size_t i = begin; i < end; ++i) {
            w.touched.clear();
            for (const auto& ea : pVU.row(i)) {
                for (const auto& eb : pUV.row(ea.col)) {
                    if (w.accQ[eb.col] == 0.0 && w.accT[eb.col] == 0.0) w.touched.push_back(eb.col);
                    w.accQ[eb.col] += ea.value * eb.value;
                }
            }
            for (const auto& ea : pUVt.row(i)) {
                for (const auto& eb : pVUt.row(ea.col)) {
                    if (w.accQ[eb.col] == 0.0 && w.accT[eb.col] == 0.0) w.touched.push_back(eb.col);
                    w.accT[eb.col] += ea.value * eb.value;
                }
            }
            std::sort(w.touched.begin(), w.touched.end());
            auto& rowOut = rows[i];
            rowOut.reserve(w.touched.size());
            for (std::uint32_t c : w.touched) {
                // scale each product's full-precision sum once, then add, so
                // the result is bitwise equal to prune(add(Q, transpose(Q)))
                const double value = invV * w.accQ[c] + invV * w.accT[c];
                if (value > 0.0) rowOut.push_back({c, value});
                w.accQ[c] = 0.0;
                w.accT[c] = 0.0;
            }
            detail::pruneRow(rowOut, policy);
        }
    });

    for (std::size_t i = 0; i < nItems; ++i) {
        out.appendRow(rows[i]);
        rows[i].clear();
        rows[i].shrink_to_fit();
    }
    return out;
}

}  // namespace copgraph
