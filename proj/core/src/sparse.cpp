#include "spladelab/sparse.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace splade {

double SparseVector::get(std::uint32_t dim) const {
    auto it = std::lower_bound(entries.begin(), entries.end(), dim,
                               [](const auto& e, std::uint32_t d) { return e.first < d; });
    if (it != entries.end() && it->first == dim) return it->second;
    return 0.0;
}

bool SparseVector::has(std::uint32_t dim) const {
    return get(dim) != 0.0;
}

double SparseVector::max_impact() const {
    double m = 0.0;
    for (const auto& [dim, impact] : entries) m = std::max(m, impact);
    return m;
}

double score(const SparseVector& q, const SparseVector& d) {
    double total = 0.0;
    auto qi = q.entries.begin();
    auto di = d.entries.begin();
    while (qi != q.entries.end() && di != d.entries.end()) {
        if (qi->first < di->first) {
            ++qi;
        } else if (di->first < qi->first) {
            ++di;
        } else {
            total += qi->second * di->second;
            ++qi;
            ++di;
        }
    }
    return total;
}

std::string to_text(const SparseVector& v) {
    std::string out;
    char buf[64];
    for (const auto& [dim, impact] : v.entries) {
        if (!out.empty()) out += ' ';
        std::snprintf(buf, sizeof(buf), "%u:%.17g", dim, impact);
        out += buf;
    }
    return out;
}

SparseVector sparse_from_text(const std::string& text) {
    SparseVector v;
    std::istringstream in(text);
    std::string pair;
    while (in >> pair) {
        std::size_t colon = pair.find(':');
        if (colon == std::string::npos) throw std::runtime_error("bad sparse vector entry: " + pair);
        std::uint32_t dim = static_cast<std::uint32_t>(std::stoul(pair.substr(0, colon)));
        double impact = std::stod(pair.substr(colon + 1));
        if (impact <= 0.0) throw std::runtime_error("sparse vector impacts must be positive: " + pair);
        v.entries.emplace_back(dim, impact);
    }
    if (!std::is_sorted(v.entries.begin(), v.entries.end(),
                        [](const auto& a, const auto& b) { return a.first < b.first; })) {
        throw std::runtime_error("sparse vector entries must be sorted by id");
    }
    return v;
}

}  // namespace splade
