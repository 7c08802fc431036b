#include "spladelab/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <stdexcept>
#include <string>

#include "spladelab/rng.hpp"

namespace splade {

namespace {

const char* kOnsets[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z",
                         "br", "dr", "gr", "kl", "pl", "st", "tr"};
const char* kVowels[] = {"a", "e", "i", "o", "u", "ai", "ou"};

std::string make_word(Rng& rng) {
    std::size_t syllables = 2 + rng.uniform_int(2);
    std::string word;
    for (std::size_t s = 0; s < syllables; ++s) {
        word += kOnsets[rng.uniform_int(std::size(kOnsets))];
        word += kVowels[rng.uniform_int(std::size(kVowels))];
    }
    return word;
}

std::vector<std::string> make_wordlist(Rng& rng, std::uint32_t n,
                                       const std::vector<std::string>& reserved) {
    std::set<std::string> seen(reserved.begin(), reserved.end());
    std::vector<std::string> words;
    while (words.size() < n) {
        std::string w = make_word(rng);
        if (seen.insert(w).second) words.push_back(std::move(w));
    }
    return words;
}

// Cumulative Zipf weights over word ranks.
std::vector<double> zipf_cdf(std::uint32_t n, double exponent) {
    std::vector<double> cdf(n);
    double total = 0.0;
    for (std::uint32_t r = 0; r < n; ++r) {
        total += 1.0 / std::pow(static_cast<double>(r + 1), exponent);
        cdf[r] = total;
    }
    for (auto& v : cdf) v /= total;
    return cdf;
}

std::uint32_t draw_rank(const std::vector<double>& cdf, Rng& rng) {
    double u = rng.uniform();
    auto it = std::lower_bound(cdf.begin(), cdf.end(), u);
    return static_cast<std::uint32_t>(std::min<std::ptrdiff_t>(it - cdf.begin(),
                                                               static_cast<std::ptrdiff_t>(cdf.size()) - 1));
}

std::string doc_name(std::uint32_t i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "d%05u", i);
    return buf;
}

}  // namespace

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
    if (spec.n_docs == 0 || spec.n_words == 0) {
        throw std::runtime_error("synthetic: need documents and words");
    }
    if (spec.doc_len_min == 0 || spec.doc_len_max < spec.doc_len_min ||
        spec.query_len_min == 0 || spec.query_len_max < spec.query_len_min) {
        throw std::runtime_error("synthetic: bad length bounds");
    }
    Rng rng(spec.seed);
    std::vector<std::string> words = make_wordlist(rng, spec.n_words, spec.stopwords);
    std::vector<double> cdf = zipf_cdf(spec.n_words, spec.zipf_exponent);

    // Stopwords draw from ids past the content range so query sampling can
    // tell the two apart.
    const std::uint32_t stop_base = spec.n_words;
    const bool mix_stopwords = !spec.stopwords.empty() && spec.stopword_fraction > 0.0;

    SyntheticData data;
    data.corpus.title_augment = false;
    std::vector<std::vector<std::uint32_t>> doc_words(spec.n_docs);
    auto word_at = [&](std::uint32_t id) -> const std::string& {
        return id < stop_base ? words[id] : spec.stopwords[id - stop_base];
    };
    for (std::uint32_t i = 0; i < spec.n_docs; ++i) {
        std::uint32_t len = spec.doc_len_min +
                            static_cast<std::uint32_t>(rng.uniform_int(spec.doc_len_max -
                                                                       spec.doc_len_min + 1));
        Document doc;
        doc.doc_id = doc_name(i);
        std::string body;
        for (std::uint32_t t = 0; t < len; ++t) {
            std::uint32_t w;
            if (mix_stopwords && rng.uniform() < spec.stopword_fraction) {
                w = stop_base + static_cast<std::uint32_t>(rng.uniform_int(spec.stopwords.size()));
            } else {
                w = draw_rank(cdf, rng);
            }
            doc_words[i].push_back(w);
            if (!body.empty()) body += ' ';
            body += word_at(w);
        }
        doc.body = std::move(body);
        if (rng.uniform() < spec.title_fraction) {
            doc.title = words[draw_rank(cdf, rng)] + " " + words[draw_rank(cdf, rng)];
        }
        data.corpus.docs.push_back(std::move(doc));
    }

    auto make_queries = [&](std::uint32_t count, const std::string& prefix,
                            std::vector<Query>& queries, Qrels& qrels) {
        for (std::uint32_t i = 0; i < count; ++i) {
            // Query terms come from the target doc's distinct content words,
            // so the judged document always overlaps the query lexically.
            std::uint32_t target = 0;
            std::vector<std::uint32_t> distinct;
            do {
                target = static_cast<std::uint32_t>(rng.uniform_int(spec.n_docs));
                distinct.clear();
                for (std::uint32_t w : doc_words[target]) {
                    if (w < stop_base) distinct.push_back(w);
                }
                std::sort(distinct.begin(), distinct.end());
                distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
            } while (distinct.empty());
            std::uint32_t want = spec.query_len_min +
                                 static_cast<std::uint32_t>(rng.uniform_int(spec.query_len_max -
                                                                            spec.query_len_min + 1));
            want = std::min<std::uint32_t>(want, static_cast<std::uint32_t>(distinct.size()));
            Query q;
            q.query_id = prefix + std::to_string(i);
            for (auto pick : rng.sample_without_replacement(distinct.size(), want)) {
                if (!q.text.empty()) q.text += ' ';
                q.text += words[distinct[pick]];
            }
            qrels.grades[q.query_id][data.corpus.docs[target].doc_id] = 1;
            queries.push_back(std::move(q));
        }
    };
    make_queries(spec.n_train_queries, "tq", data.train_queries, data.train_qrels);
    make_queries(spec.n_test_queries, "eq", data.test_queries, data.test_qrels);
    return data;
}

void write_synthetic(const SyntheticData& data, const std::string& dir) {
    save_corpus_tsv(data.corpus, dir + "/corpus.tsv");
    save_queries(data.train_queries, dir + "/train_queries.tsv");
    save_queries(data.test_queries, dir + "/test_queries.tsv");
    save_qrels(data.train_qrels, dir + "/train_qrels.txt");
    save_qrels(data.test_qrels, dir + "/test_qrels.txt");
}

}  // namespace splade
