// Row-oriented sparse matrix and the kernels the pipeline needs: transpose,
// sparse product, sum, Hadamard product, row normalization, per-row pruning
// and exponentiation by squaring. Column indices are strictly increasing
// within a row and stored weights are strictly positive; explicit zeros are
// never kept.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "copgraph/errors.hpp"
#include "copgraph/threading.hpp"

namespace copgraph {

struct SparseEntry {
    std::uint32_t col;
    double value;

    friend bool operator==(const SparseEntry&, const SparseEntry&) = default;
};

struct Triplet {
    std::uint32_t row;
    std::uint32_t col;
    double value;
};

class SparseMatrix {
public:
    SparseMatrix() = default;

    SparseMatrix(std::size_t rows, std::size_t cols) : nRows_(rows), nCols_(cols), rowPtr_(rows + 1, 0) {}

    static SparseMatrix zero(std::size_t rows, std::size_t cols) { return SparseMatrix(rows, cols); }

    // Duplicate (row, col) triplets are summed; non-positive results dropped.
    static SparseMatrix fromTriplets(std::size_t rows, std::size_t cols, std::vector<Triplet> triplets) {
        for (const auto& t : triplets) {
            if (t.row >= rows || t.col >= cols) throw DimensionError("triplet out of bounds");
        }
        std::sort(triplets.begin(), triplets.end(), [](const Triplet& a, const Triplet& b) {
            return a.row != b.row ? a.row < b.row : a.col < b.col;
        });
        SparseMatrix m(rows, cols);
        m.entries_.reserve(triplets.size());
        std::size_t i = 0;
        for (std::uint32_t r = 0; r < rows; ++r) {
            while (i < triplets.size() && triplets[i].row == r) {
                std::uint32_t c = triplets[i].col;
                double v = 0.0;
                for (; i < triplets.size() && triplets[i].row == r && triplets[i].col == c; ++i) v += triplets[i].value;
                if (v > 0.0) m.entries_.push_back({c, v});
            }
            m.rowPtr_[r + 1] = m.entries_.size();
        }
        return m;
    }

    std::size_t rows() const { return nRows_; }
    std::size_t cols() const { return nCols_; }
    std::size_t nnz() const { return entries_.size(); }

    std::span<const SparseEntry> row(std::size_t i) const {
        return {entries_.data() + rowPtr_[i], entries_.data() + rowPtr_[i + 1]};
    }

    std::size_t rowNnz(std::size_t i) const { return rowPtr_[i + 1] - rowPtr_[i]; }

    // Zero when absent.
    double at(std::size_t i, std::size_t j) const {
        auto r = row(i);
        auto it = std::lower_bound(r.begin(), r.end(), static_cast<std::uint32_t>(j),
                                   [](const SparseEntry& e, std::uint32_t c) { return e.col < c; });
        return (it != r.end() && it->col == j) ? it->value : 0.0;
    }

    // Rows must be appended in order; entries sorted by column, positive.
    void appendRow(std::span<const SparseEntry> entries) {
        for (std::size_t k = 0; k < entries.size(); ++k) {
            if (entries[k].col >= nCols_) throw DimensionError("column index out of range");
            if (k > 0 && entries[k].col <= entries[k - 1].col) throw ContractError("row columns not strictly increasing");
            if (entries[k].value > 0.0) entries_.push_back(entries[k]);
        }
        appendedRows_++;
        rowPtr_[appendedRows_] = entries_.size();
    }

    double rowSum(std::size_t i) const {
        double s = 0.0;
        for (const auto& e : row(i)) s += e.value;
        return s;
    }

    double totalSum() const {
        double s = 0.0;
        for (const auto& e : entries_) s += e.value;
        return s;
    }

    std::vector<Triplet> toTriplets() const {
        std::vector<Triplet> out;
        out.reserve(nnz());
        for (std::uint32_t i = 0; i < nRows_; ++i)
            for (const auto& e : row(i)) out.push_back({i, e.col, e.value});
        return out;
    }

    friend bool operator==(const SparseMatrix& a, const SparseMatrix& b) {
        return a.nRows_ == b.nRows_ && a.nCols_ == b.nCols_ && a.rowPtr_ == b.rowPtr_ && a.entries_ == b.entries_;
    }

private:
    std::size_t nRows_ = 0;
    std::size_t nCols_ = 0;
    std::size_t appendedRows_ = 0;
    std::vector<std::size_t> rowPtr_{0};
    std::vector<SparseEntry> entries_;
};

struct PruningPolicy {
    enum class Mode { None, TopMPerRow, EpsilonThreshold };

    Mode mode = Mode::None;
    std::size_t topM = 0;   // TopMPerRow only
    double epsilon = 0.0;   // EpsilonThreshold only

    static PruningPolicy none() { return {}; }
    static PruningPolicy topPerRow(std::size_t m) { return {Mode::TopMPerRow, m, 0.0}; }
    static PruningPolicy epsilonThreshold(double eps) { return {Mode::EpsilonThreshold, 0, eps}; }

    void validate() const {
        if (mode == Mode::TopMPerRow && topM == 0) throw ConfigError("TopMPerRow pruning requires M >= 1");
        if (mode == Mode::EpsilonThreshold && !(epsilon > 0.0)) throw ConfigError("EpsilonThreshold pruning requires epsilon > 0");
        if (mode == Mode::None && (topM != 0 || epsilon != 0.0)) throw ConfigError("pruning parameters set without a mode");
    }
};

namespace detail {

// Keeps the M largest entries of a row; ties keep the lower column index.
// Input is column-sorted and the output is restored to column order.
inline void pruneRowTopM(std::vector<SparseEntry>& row, std::size_t m) {
    if (row.size() <= m) return;
    std::nth_element(row.begin(), row.begin() + m, row.end(), [](const SparseEntry& a, const SparseEntry& b) {
        return a.value != b.value ? a.value > b.value : a.col < b.col;
    });
    row.resize(m);
    std::sort(row.begin(), row.end(), [](const SparseEntry& a, const SparseEntry& b) { return a.col < b.col; });
}

inline void pruneRow(std::vector<SparseEntry>& row, const PruningPolicy& policy) {
    switch (policy.mode) {
        case PruningPolicy::Mode::None:
            break;
        case PruningPolicy::Mode::TopMPerRow:
            pruneRowTopM(row, policy.topM);
            break;
        case PruningPolicy::Mode::EpsilonThreshold:
            std::erase_if(row, [&](const SparseEntry& e) { return e.value < policy.epsilon; });
            break;
    }
}

}  // namespace detail

inline SparseMatrix prune(const SparseMatrix& a, const PruningPolicy& policy) {
    policy.validate();
    if (policy.mode == PruningPolicy::Mode::None) return a;
    SparseMatrix out(a.rows(), a.cols());
    std::vector<SparseEntry> row;
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto r = a.row(i);
        row.assign(r.begin(), r.end());
        detail::pruneRow(row, policy);
        out.appendRow(row);
    }
    return out;
}

inline SparseMatrix transpose(const SparseMatrix& a) {
    std::vector<std::size_t> counts(a.cols() + 1, 0);
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (const auto& e : a.row(i)) counts[e.col + 1]++;
    for (std::size_t c = 0; c < a.cols(); ++c) counts[c + 1] += counts[c];

    std::vector<Triplet> cells(a.nnz(), Triplet{});
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (const auto& e : a.row(i)) cells[counts[e.col]++] = {static_cast<std::uint32_t>(i), e.col, e.value};

    SparseMatrix out(a.cols(), a.rows());
    std::vector<SparseEntry> row;
    std::size_t k = 0;
    for (std::size_t c = 0; c < a.cols(); ++c) {
        row.clear();
        // cells are grouped by column and, within a column, by ascending row.
        for (; k < cells.size() && cells[k].col == c; ++k) row.push_back({cells[k].row, cells[k].value});
        out.appendRow(row);
    }
    return out;
}

inline SparseMatrix scale(const SparseMatrix& a, double s) {
    if (!(s > 0.0)) throw ContractError("scale factor must be positive");
    SparseMatrix out(a.rows(), a.cols());
    std::vector<SparseEntry> row;
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto r = a.row(i);
        row.assign(r.begin(), r.end());
        for (auto& e : row) e.value *= s;
        out.appendRow(row);
    }
    return out;
}

inline SparseMatrix add(const SparseMatrix& a, const SparseMatrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw DimensionError("matrix sum shape mismatch");
    SparseMatrix out(a.rows(), a.cols());
    std::vector<SparseEntry> row;
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto ra = a.row(i);
        auto rb = b.row(i);
        row.clear();
        std::size_t x = 0, y = 0;
        while (x < ra.size() || y < rb.size()) {
            if (y == rb.size() || (x < ra.size() && ra[x].col < rb[y].col)) {
                row.push_back(ra[x++]);
            } else if (x == ra.size() || rb[y].col < ra[x].col) {
                row.push_back(rb[y++]);
            } else {
                row.push_back({ra[x].col, ra[x].value + rb[y].value});
                ++x, ++y;
            }
        }
        out.appendRow(row);
    }
    return out;
}

// Entrywise product; the result pattern is the intersection of the inputs'.
inline SparseMatrix hadamard(const SparseMatrix& a, const SparseMatrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw DimensionError("Hadamard shape mismatch");
    SparseMatrix out(a.rows(), a.cols());
    std::vector<SparseEntry> row;
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto ra = a.row(i);
        auto rb = b.row(i);
        row.clear();
        std::size_t x = 0, y = 0;
        while (x < ra.size() && y < rb.size()) {
            if (ra[x].col < rb[y].col) {
                ++x;
            } else if (rb[y].col < ra[x].col) {
                ++y;
            } else {
                row.push_back({ra[x].col, ra[x].value * rb[y].value});
                ++x, ++y;
            }
        }
        out.appendRow(row);
    }
    return out;
}

// Non-empty rows are divided by their sum; empty rows stay empty.
inline SparseMatrix rowNormalize(const SparseMatrix& a) {
    SparseMatrix out(a.rows(), a.cols());
    std::vector<SparseEntry> row;
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto r = a.row(i);
        row.assign(r.begin(), r.end());
        if (!row.empty()) {
            double s = 0.0;
            for (const auto& e : row) s += e.value;
            for (auto& e : row) e.value /= s;
        }
        out.appendRow(row);
    }
    return out;
}

// Sparse product with a per-row dense accumulator. Each output row is
// self-contained, so the result is identical for any thread count. Within a
// row the accumulation order is fixed: ascending k over a's entries, then
// ascending column within b's row k.
inline SparseMatrix multiply(const SparseMatrix& a, const SparseMatrix& b, const PruningPolicy& policy = PruningPolicy::none(),
                             unsigned threads = 1) {
    if (a.cols() != b.rows()) throw DimensionError("matrix product inner dimensions disagree");
    policy.validate();

    SparseMatrix out(a.rows(), b.cols());
    std::vector<std::vector<SparseEntry>> rows(a.rows());
    struct Workspace {
        std::vector<double> acc;
        std::vector<std::uint32_t> touched;
    };
    const unsigned nw = std::max(1u, std::min(resolveThreads(threads), static_cast<unsigned>(a.rows() == 0 ? 1 : a.rows())));
    std::vector<Workspace> ws(nw);
    for (auto& w : ws) w.acc.assign(b.cols(), 0.0);

    const std::size_t chunk = nw == 0 ? 1 : (a.rows() + nw - 1) / nw;
    parallelFor(nw, nw, [&](std::size_t t) {
        auto& w = ws[t];
        const std::size_t begin = t * chunk;
        const std::size_t end = std::min(a.rows(), begin + chunk);
        for (std::size_t i = begin; i < end; ++i) {
            w.touched.clear();
            for (const auto& ea : a.row(i)) {
                for (const auto& eb : b.row(ea.col)) {
                    if (w.acc[eb.col] == 0.0) w.touched.push_back(eb.col);
                    w.acc[eb.col] += ea.value * eb.value;
                }
            }
            std::sort(w.touched.begin(), w.touched.end());
            auto& rowOut = rows[i];
            rowOut.reserve(w.touched.size());
            for (std::uint32_t c : w.touched) {
                if (w.acc[c] > 0.0) rowOut.push_back({c, w.acc[c]});
                w.acc[c] = 0.0;
            }
            detail::pruneRow(rowOut, policy);
        }
    });

    for (std::size_t i = 0; i < a.rows(); ++i) {
        out.appendRow(rows[i]);
        rows[i].clear();
        rows[i].shrink_to_fit();
    }
    return out;
}

struct PowerStats {
    std::size_t products = 0;
};

// A^lambda by binary exponentiation; the pruning policy is applied inside
// every sparse product (floor(log2 lambda) squarings plus popcount-1
// multiplies). lambda = 1 returns prune(A); lambda = 0 is rejected because
// no pipeline stage ever wants the identity.
inline SparseMatrix matrixPower(const SparseMatrix& a, unsigned lambda, const PruningPolicy& policy = PruningPolicy::none(),
                                PowerStats* stats = nullptr, unsigned threads = 1) {
    if (a.rows() != a.cols()) throw DimensionError("matrix power requires a square matrix");
    if (lambda == 0) throw ConfigError("lambda must be >= 1");
    policy.validate();
    if (stats) stats->products = 0;

    if (lambda == 1) return prune(a, policy);

    SparseMatrix base = a;
    SparseMatrix result;
    bool haveResult = false;
    unsigned exp = lambda;
    while (exp > 0) {
        if (exp & 1u) {
            if (!haveResult) {
                result = base;
                haveResult = true;
            } else {
                result = multiply(result, base, policy, threads);
                if (stats) stats->products++;
            }
        }
        exp >>= 1u;
        if (exp > 0) {
            base = multiply(base, base, policy, threads);
            if (stats) stats->products++;
        }
    }
    return result;
}

}  // namespace copgraph
