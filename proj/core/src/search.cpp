#include "spladelab/search.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>

namespace splade {

namespace {

// Global tie-break: descending score, then ascending doc_id.
bool hit_better(const Hit& a, const Hit& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.doc_id < b.doc_id;
}

// Bounded result set; the current worst hit is the pruning threshold.
class TopK {
  public:
    explicit TopK(std::uint32_t k) : k_(k) {
        if (k == 0) throw std::runtime_error("search: k must be positive");
    }

    bool full() const { return hits_.size() >= k_; }

    double threshold() const {
        return full() ? hits_.front().score : -std::numeric_limits<double>::infinity();
    }

    void offer(Hit hit) {
        if (!full()) {
            hits_.push_back(std::move(hit));
            std::push_heap(hits_.begin(), hits_.end(), hit_better);
        } else if (hit_better(hit, hits_.front())) {
            std::pop_heap(hits_.begin(), hits_.end(), hit_better);
            hits_.back() = std::move(hit);
            std::push_heap(hits_.begin(), hits_.end(), hit_better);
        }
    }

    const Hit& worst() const { return hits_.front(); }

    std::vector<Hit> take_sorted() {
        std::sort(hits_.begin(), hits_.end(), hit_better);
        return std::move(hits_);
    }

  private:
    // std::push_heap treats its comparator as "less than" and keeps the
    // maximum at the front; with hit_better as "less", the front is the
    // worst hit, which is what offer() must compare against.
    std::uint32_t k_;
    std::vector<Hit> hits_;
};

struct Cursor {
    const PostingsList* list;
    std::size_t pos = 0;
    double weight = 0.0;  // exact query impact

    bool done() const { return pos >= list->length(); }
    std::uint32_t ordinal() const { return list->ordinals[pos]; }
    std::uint8_t level() const { return list->levels[pos]; }

    // Advance to the first posting with ordinal >= target; true when found ==.
    bool seek(std::uint32_t target) {
        const auto& ords = list->ordinals;
        auto it = std::lower_bound(ords.begin() + static_cast<std::ptrdiff_t>(pos), ords.end(), target);
        pos = static_cast<std::size_t>(it - ords.begin());
        return pos < ords.size() && ords[pos] == target;
    }
};

std::vector<Cursor> make_cursors(const InvertedIndex& index, const SparseVector& query) {
    std::vector<Cursor> cursors;
    for (const auto& [dim, impact] : query.entries) {
        if (index.output_dim != 0 && dim >= index.output_dim) {
            throw std::runtime_error("query dimension " + std::to_string(dim) +
                                     " outside the index output dimensions");
        }
        const PostingsList* list = index.find_list(dim);
        if (list != nullptr && list->length() > 0) cursors.push_back(Cursor{list, 0, impact});
    }
    return cursors;
}

// Fixed accumulation order (ascending term_id) of q_j * dequantize(level_j)
// terms, so every strategy that fully scores a document produces the
// bit-identical double.
double canonical_score(std::vector<std::pair<std::uint32_t, double>>& parts) {
    std::sort(parts.begin(), parts.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    double sum = 0.0;
    for (const auto& [term, contribution] : parts) sum += contribution;
    return sum;
}

}  // namespace

Ranking search_exhaustive(const InvertedIndex& index, const SparseVector& query, std::uint32_t k,
                          const std::string& query_id) {
    TopK top(k);
    std::vector<Cursor> cursors = make_cursors(index, query);
    Ranking ranking;
    ranking.query_id = query_id;
    ranking.k = k;
    while (!cursors.empty()) {
        std::uint32_t doc = std::numeric_limits<std::uint32_t>::max();
        for (const auto& c : cursors) {
            if (!c.done()) doc = std::min(doc, c.ordinal());
        }
        if (doc == std::numeric_limits<std::uint32_t>::max()) break;
        // Cursors are in ascending term_id order, which is the canonical
        // accumulation order.
        double sum = 0.0;
        for (auto& c : cursors) {
            if (!c.done() && c.ordinal() == doc) {
                sum += c.weight * dequantize(c.level(), index.quant_scale);
                ++c.pos;
            }
        }
        top.offer(Hit{index.doc_ids[doc], sum});
    }
    ranking.hits = top.take_sorted();
    return ranking;
}

Ranking search_maxscore(const InvertedIndex& index, const SparseVector& query, std::uint32_t k,
                        const std::string& query_id) {
    TopK top(k);
    Ranking ranking;
    ranking.query_id = query_id;
    ranking.k = k;
    std::vector<Cursor> cursors = make_cursors(index, query);
    if (cursors.empty()) return ranking;

    // Ascending per-term upper bound; prefix_ub[i] bounds the total score of
    // any document containing only terms 0..i.
    std::sort(cursors.begin(), cursors.end(), [&](const Cursor& a, const Cursor& b) {
        double ua = a.weight * static_cast<double>(a.list->max_level);
        double ub = b.weight * static_cast<double>(b.list->max_level);
        if (ua != ub) return ua < ub;
        return a.list->term_id < b.list->term_id;
    });
    const std::size_t n = cursors.size();
    std::vector<double> prefix_ub(n);
    double running = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        running += cursors[i].weight * dequantize(cursors[i].list->max_level, index.quant_scale);
        prefix_ub[i] = running;
    }

    // Guard against last-ulp differences between the bound arithmetic and the
    // canonical score: only prune when the bound is clearly below the
    // threshold. Ties are always fully scored so the doc_id tie-break stays
    // exact.
    auto safely_below = [](double bound, double threshold) {
        return bound < threshold - 1e-9 * (1.0 + std::abs(threshold));
    };

    std::size_t first_essential = 0;
    auto update_partition = [&] {
        double threshold = top.threshold();
        while (first_essential < n && safely_below(prefix_ub[first_essential], threshold)) {
            ++first_essential;
        }
    };

    std::vector<std::pair<std::uint32_t, double>> parts;
    while (first_essential < n) {
        std::uint32_t doc = std::numeric_limits<std::uint32_t>::max();
        for (std::size_t i = first_essential; i < n; ++i) {
            if (!cursors[i].done()) doc = std::min(doc, cursors[i].ordinal());
        }
        if (doc == std::numeric_limits<std::uint32_t>::max()) break;

        parts.clear();
        double partial = 0.0;
        for (std::size_t i = first_essential; i < n; ++i) {
            auto& c = cursors[i];
            if (!c.done() && c.ordinal() == doc) {
                double contribution = c.weight * dequantize(c.level(), index.quant_scale);
                partial += contribution;
                parts.emplace_back(c.list->term_id, contribution);
                ++c.pos;
            }
        }
        bool viable = true;
        for (std::size_t i = first_essential; i-- > 0;) {
            if (safely_below(partial + prefix_ub[i], top.threshold())) {
                viable = false;
                break;
            }
            auto& c = cursors[i];
            if (!c.done() && c.seek(doc)) {
                double contribution = c.weight * dequantize(c.level(), index.quant_scale);
                partial += contribution;
                parts.emplace_back(c.list->term_id, contribution);
            }
        }
        if (viable) {
            top.offer(Hit{index.doc_ids[doc], canonical_score(parts)});
            update_partition();
        }
    }
    ranking.hits = top.take_sorted();
    return ranking;
}

Bm25Searcher::Bm25Searcher(const Corpus& corpus, const BaseVocabulary& vocab) : vocab_(&vocab) {
    stats_ = build_bm25_stats(corpus, vocab);
    postings_.resize(vocab.size());
    doc_ids_.reserve(corpus.docs.size());
    for (std::uint32_t ordinal = 0; ordinal < corpus.docs.size(); ++ordinal) {
        const auto& doc = corpus.docs[ordinal];
        doc_ids_.push_back(doc.doc_id);
        TokenSequence seq = tokenize(corpus.visible_text(doc), vocab);
        std::map<TokenId, std::uint32_t> tf;
        for (TokenId id : seq.ids) {
            if (!vocab.is_special(id)) ++tf[id];
        }
        for (const auto& [term, count] : tf) {
            postings_[term].ordinals.push_back(ordinal);
            postings_[term].tfs.push_back(count);
        }
    }
}

double Bm25Searcher::idf(TokenId term) const {
    double n = static_cast<double>(stats_.doc_count);
    double df = static_cast<double>(stats_.df[term]);
    return std::log(1.0 + (n - df + 0.5) / (df + 0.5));
}

double Bm25Searcher::score_one(TokenId term, std::uint32_t tf, std::uint32_t doc_len, double k1,
                               double b) const {
    double tfd = static_cast<double>(tf);
    double norm = k1 * (1.0 - b + b * static_cast<double>(doc_len) / stats_.avg_doc_len);
    return idf(term) * tfd * (k1 + 1.0) / (tfd + norm);
}

Ranking Bm25Searcher::search(const TokenSequence& query_tokens, std::uint32_t k, double k1, double b,
                             const std::string& query_id) const {
    TopK top(k);
    Ranking ranking;
    ranking.query_id = query_id;
    ranking.k = k;
    std::vector<double> acc(doc_ids_.size(), 0.0);
    std::vector<std::uint32_t> touched;
    // Repeated query terms contribute once per occurrence.
    for (TokenId id : query_tokens.ids) {
        if (vocab_->is_special(id) || id >= postings_.size()) continue;
        const TfList& list = postings_[id];
        for (std::size_t p = 0; p < list.ordinals.size(); ++p) {
            std::uint32_t ordinal = list.ordinals[p];
            if (acc[ordinal] == 0.0) touched.push_back(ordinal);
            acc[ordinal] += score_one(id, list.tfs[p], stats_.doc_len[ordinal], k1, b);
        }
    }
    std::sort(touched.begin(), touched.end());
    for (std::uint32_t ordinal : touched) top.offer(Hit{doc_ids_[ordinal], acc[ordinal]});
    ranking.hits = top.take_sorted();
    return ranking;
}

Ranking Bm25Searcher::search_text(const std::string& query_text, std::uint32_t k, double k1, double b,
                                  const std::string& query_id) const {
    return search(tokenize(query_text, *vocab_), k, k1, b, query_id);
}

Ranking search_bm25(const Bm25Searcher& searcher, const TokenSequence& query_tokens, std::uint32_t k,
                    double k1, double b, const std::string& query_id) {
    return searcher.search(query_tokens, k, k1, b, query_id);
}

Ranking search_dense_bruteforce(const Eigen::MatrixXd& doc_matrix,
                                const std::vector<std::string>& doc_ids, const Eigen::VectorXd& query,
                                std::uint32_t k, const std::string& query_id) {
    if (doc_matrix.rows() != static_cast<Eigen::Index>(doc_ids.size())) {
        throw std::runtime_error("dense search: doc matrix rows must match doc_ids");
    }
    if (doc_matrix.cols() != query.size()) {
        throw std::runtime_error("dense search: dimension mismatch (" +
                                 std::to_string(doc_matrix.cols()) + " vs " +
                                 std::to_string(query.size()) + ")");
    }
    TopK top(k);
    Eigen::VectorXd scores = doc_matrix * query;
    for (Eigen::Index i = 0; i < scores.size(); ++i) {
        top.offer(Hit{doc_ids[static_cast<std::size_t>(i)], scores(i)});
    }
    Ranking ranking;
    ranking.query_id = query_id;
    ranking.k = k;
    ranking.hits = top.take_sorted();
    return ranking;
}

void write_run(const std::vector<Ranking>& rankings, const std::string& tag, const std::string& path) {
    if (rankings.empty()) throw std::runtime_error("write_run: no rankings");
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write run file: " + path);
    char buf[64];
    for (const auto& ranking : rankings) {
        for (std::size_t r = 0; r < ranking.hits.size(); ++r) {
            std::snprintf(buf, sizeof(buf), "%.17g", ranking.hits[r].score);
            out << ranking.query_id << " Q0 " << ranking.hits[r].doc_id << ' ' << (r + 1) << ' ' << buf
                << ' ' << tag << '\n';
        }
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

std::vector<Ranking> read_run(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open run file: " + path);
    std::vector<Ranking> rankings;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string qid, q0, docid, tag;
        std::size_t rank = 0;
        double score = 0.0;
        if (!(ls >> qid >> q0 >> docid >> rank >> score >> tag)) {
            throw std::runtime_error("malformed run line at " + path + ":" + std::to_string(line_no));
        }
        if (rankings.empty() || rankings.back().query_id != qid) {
            rankings.push_back(Ranking{qid, {}, 0});
        }
        rankings.back().hits.push_back(Hit{docid, score});
    }
    for (auto& ranking : rankings) ranking.k = static_cast<std::uint32_t>(ranking.hits.size());
    return rankings;
}

}  // namespace splade
