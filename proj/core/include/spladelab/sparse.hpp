#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace splade {

// Encoded form of a query or document: strictly positive impacts keyed by
// output-dimension id, sorted ascending. Zero impacts are absent, never stored.
struct SparseVector {
    std::vector<std::pair<std::uint32_t, double>> entries;
    std::uint32_t source_len = 0;  // token count of the encoded text

    std::size_t nnz() const { return entries.size(); }
    double get(std::uint32_t dim) const;
    bool has(std::uint32_t dim) const;
    double max_impact() const;

    bool operator==(const SparseVector& other) const {
        return entries == other.entries && source_len == other.source_len;
    }
};

// Inner product over the shared support.
double score(const SparseVector& q, const SparseVector& d);

// "id:impact" pairs, space separated, ascending id; exact round-trip.
std::string to_text(const SparseVector& v);
SparseVector sparse_from_text(const std::string& text);

}  // namespace splade
