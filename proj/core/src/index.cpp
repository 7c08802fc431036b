#include "spladelab/index.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <future>
#include <stdexcept>
#include <thread>

namespace splade {

namespace {

constexpr char kMagic[8] = {'S', 'P', 'L', 'A', 'D', 'E', 'I', 'X'};
constexpr std::uint32_t kFormatVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }
void write_u64(std::ostream& out, std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); }
void write_f64(std::ostream& out, double v) { out.write(reinterpret_cast<const char*>(&v), 8); }

std::uint32_t read_u32(std::istream& in) {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 4);
    return v;
}
std::uint64_t read_u64(std::istream& in) {
    std::uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 8);
    return v;
}
double read_f64(std::istream& in) {
    double v = 0.0;
    in.read(reinterpret_cast<char*>(&v), 8);
    return v;
}

unsigned max_level_for(unsigned quant_bits) {
    if (quant_bits == 0 || quant_bits > 8) {
        throw std::runtime_error("quant_bits must be in [1, 8]");
    }
    return (1u << quant_bits) - 1u;
}

}  // namespace

const PostingsList* InvertedIndex::find_list(std::uint32_t term_id) const {
    auto it = std::lower_bound(lists.begin(), lists.end(), term_id,
                               [](const PostingsList& l, std::uint32_t t) { return l.term_id < t; });
    if (it != lists.end() && it->term_id == term_id) return &*it;
    return nullptr;
}

std::size_t InvertedIndex::total_postings() const {
    std::size_t total = 0;
    for (const auto& list : lists) total += list.length();
    return total;
}

std::uint8_t quantize(double impact, double scale, unsigned quant_bits) {
    unsigned max_level = max_level_for(quant_bits);
    if (scale <= 0.0) throw std::runtime_error("quantize: scale must be positive");
    if (impact < 0.0) throw std::runtime_error("quantize: impact must be nonnegative");
    if (impact == 0.0) return 0;
    double level = std::ceil(impact / scale);
    if (level > static_cast<double>(max_level)) return static_cast<std::uint8_t>(max_level);
    return static_cast<std::uint8_t>(level);
}

double dequantize(std::uint8_t level, double scale) {
    return static_cast<double>(level) * scale;
}

InvertedIndex build_index_from_encodings(const std::vector<SparseVector>& encodings,
                                         std::vector<std::string> doc_ids, std::uint32_t output_dim,
                                         unsigned quant_bits) {
    if (encodings.empty()) throw std::runtime_error("build_index: empty corpus");
    if (encodings.size() != doc_ids.size()) {
        throw std::runtime_error("build_index: one doc_id per encoding required");
    }
    unsigned max_level = max_level_for(quant_bits);

    double max_impact = 0.0;
    for (const auto& vec : encodings) max_impact = std::max(max_impact, vec.max_impact());

    InvertedIndex index;
    index.doc_ids = std::move(doc_ids);
    index.doc_count = static_cast<std::uint32_t>(encodings.size());
    index.output_dim = output_dim;
    index.all_empty = max_impact == 0.0;
    index.quant_scale = index.all_empty ? 1.0 : max_impact / static_cast<double>(max_level);
    if (index.all_empty) return index;

    // Postings arrive in ordinal order, so each list is built already sorted.
    std::vector<std::vector<std::pair<std::uint32_t, std::uint8_t>>> by_term;
    std::vector<std::uint32_t> touched;
    by_term.resize(output_dim);
    for (std::uint32_t ordinal = 0; ordinal < encodings.size(); ++ordinal) {
        for (const auto& [dim, impact] : encodings[ordinal].entries) {
            if (dim >= output_dim) {
                throw std::runtime_error("build_index: dimension " + std::to_string(dim) +
                                         " outside output_dim");
            }
            std::uint8_t level = quantize(impact, index.quant_scale, quant_bits);
            if (level == 0) continue;  // unreachable with ceiling quantization; kept as a guard
            if (by_term[dim].empty()) touched.push_back(dim);
            by_term[dim].emplace_back(ordinal, level);
        }
    }
    std::sort(touched.begin(), touched.end());
    index.lists.reserve(touched.size());
    for (std::uint32_t term : touched) {
        PostingsList list;
        list.term_id = term;
        list.ordinals.reserve(by_term[term].size());
        list.levels.reserve(by_term[term].size());
        for (const auto& [ordinal, level] : by_term[term]) {
            list.ordinals.push_back(ordinal);
            list.levels.push_back(level);
            list.max_level = std::max(list.max_level, level);
        }
        index.lists.push_back(std::move(list));
    }
    return index;
}

std::vector<SparseVector> encode_corpus(const EncoderParams& params,
                                        const VocabularyController& controller, const Corpus& corpus) {
    const std::size_t n = corpus.docs.size();
    std::vector<SparseVector> encodings(n);
    const auto mask = allowed_mask(controller);

    std::size_t workers = std::max<std::size_t>(1, std::thread::hardware_concurrency());
    workers = std::min(workers, n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) {
            encodings[i] = encode_tokens(params, mask,
                                         tokenize(corpus.visible_text(i), controller.base,
                                                  params.config.max_len));
        }
        return encodings;
    }
    std::vector<std::future<void>> tasks;
    for (std::size_t w = 0; w < workers; ++w) {
        tasks.push_back(std::async(std::launch::async, [&, w] {
            for (std::size_t i = w; i < n; i += workers) {
                encodings[i] = encode_tokens(params, mask,
                                             tokenize(corpus.visible_text(i), controller.base,
                                                      params.config.max_len));
            }
        }));
    }
    for (auto& task : tasks) task.get();
    return encodings;
}

InvertedIndex build_index(const EncoderParams& params, const VocabularyController& controller,
                          const Corpus& corpus, unsigned quant_bits) {
    if (corpus.docs.empty()) throw std::runtime_error("build_index: empty corpus");
    std::vector<SparseVector> encodings = encode_corpus(params, controller, corpus);
    std::vector<std::string> doc_ids;
    doc_ids.reserve(corpus.docs.size());
    for (const auto& doc : corpus.docs) doc_ids.push_back(doc.doc_id);
    return build_index_from_encodings(encodings, std::move(doc_ids), controller.output_dim, quant_bits);
}

std::vector<TermStat> index_stats(const InvertedIndex& index, const VocabularyController* controller) {
    std::vector<TermStat> stats;
    stats.reserve(index.lists.size());
    for (const auto& list : index.lists) {
        TermStat s;
        s.term_id = list.term_id;
        s.term = controller ? controller->dim_name(list.term_id) : std::to_string(list.term_id);
        s.list_length = list.length();
        stats.push_back(std::move(s));
    }
    std::sort(stats.begin(), stats.end(), [](const TermStat& a, const TermStat& b) {
        if (a.list_length != b.list_length) return a.list_length > b.list_length;
        return a.term_id < b.term_id;
    });
    return stats;
}

void write_index_stats_tsv(const std::vector<TermStat>& stats, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write index stats: " + path);
    out << "term\tterm_id\tlist_length\n";
    for (const auto& s : stats) out << s.term << '\t' << s.term_id << '\t' << s.list_length << '\n';
}

Bm25Stats build_bm25_stats(const Corpus& corpus, const BaseVocabulary& vocab) {
    if (corpus.docs.empty()) throw std::runtime_error("build_bm25_stats: empty corpus");
    Bm25Stats stats;
    stats.df.assign(vocab.size(), 0);
    stats.doc_count = static_cast<std::uint32_t>(corpus.docs.size());
    stats.doc_len.reserve(corpus.docs.size());
    std::vector<std::uint8_t> seen(vocab.size(), 0);
    std::uint64_t total_len = 0;
    for (const auto& doc : corpus.docs) {
        TokenSequence seq = tokenize(corpus.visible_text(doc), vocab);
        std::uint32_t len = 0;
        std::vector<TokenId> doc_terms;
        for (TokenId id : seq.ids) {
            if (vocab.is_special(id)) continue;
            ++len;
            if (!seen[id]) {
                seen[id] = 1;
                doc_terms.push_back(id);
            }
        }
        for (TokenId id : doc_terms) {
            ++stats.df[id];
            seen[id] = 0;
        }
        stats.doc_len.push_back(len);
        total_len += len;
    }
    stats.avg_doc_len = static_cast<double>(total_len) / static_cast<double>(stats.doc_count);
    return stats;
}

void save_index(const InvertedIndex& index, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write index file: " + path);
    out.write(kMagic, sizeof(kMagic));
    write_u32(out, kFormatVersion);
    write_u32(out, index.doc_count);
    write_f64(out, index.quant_scale);
    write_u32(out, index.output_dim);
    write_u32(out, index.all_empty ? 1 : 0);
    write_u64(out, index.lists.size());
    for (const auto& doc_id : index.doc_ids) {
        write_u32(out, static_cast<std::uint32_t>(doc_id.size()));
        out.write(doc_id.data(), static_cast<std::streamsize>(doc_id.size()));
    }
    for (const auto& list : index.lists) {
        write_u32(out, list.term_id);
        write_u64(out, list.length());
        std::uint32_t prev = 0;
        for (std::size_t i = 0; i < list.ordinals.size(); ++i) {
            std::uint32_t delta = list.ordinals[i] - prev;  // first entry is absolute
            write_u32(out, delta);
            prev = list.ordinals[i];
        }
        out.write(reinterpret_cast<const char*>(list.levels.data()),
                  static_cast<std::streamsize>(list.levels.size()));
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

InvertedIndex load_index(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open index file: " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw std::runtime_error("not an index file: " + path);
    }
    std::uint32_t version = read_u32(in);
    if (version != kFormatVersion) {
        throw std::runtime_error("unsupported index version " + std::to_string(version));
    }
    InvertedIndex index;
    index.doc_count = read_u32(in);
    index.quant_scale = read_f64(in);
    index.output_dim = read_u32(in);
    index.all_empty = read_u32(in) != 0;
    std::uint64_t n_lists = read_u64(in);
    index.doc_ids.resize(index.doc_count);
    for (auto& doc_id : index.doc_ids) {
        std::uint32_t len = read_u32(in);
        doc_id.resize(len);
        in.read(doc_id.data(), len);
    }
    index.lists.resize(n_lists);
    for (auto& list : index.lists) {
        list.term_id = read_u32(in);
        std::uint64_t len = read_u64(in);
        list.ordinals.resize(len);
        list.levels.resize(len);
        std::uint32_t prev = 0;
        for (std::uint64_t i = 0; i < len; ++i) {
            prev += read_u32(in);
            list.ordinals[i] = prev;
        }
        in.read(reinterpret_cast<char*>(list.levels.data()), static_cast<std::streamsize>(len));
        for (std::uint8_t level : list.levels) list.max_level = std::max(list.max_level, level);
    }
    if (!in) throw std::runtime_error("truncated index file: " + path);
    return index;
}

}  // namespace splade
