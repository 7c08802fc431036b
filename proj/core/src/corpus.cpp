#include "spladelab/corpus.hpp"

#include <fstream>
#include <stdexcept>
#include <unordered_set>

#include <nlohmann/json.hpp>

namespace splade {

namespace {

void validate_and_insert(Corpus& corpus, Document doc, std::unordered_set<std::string>& seen,
                         const std::string& path, std::size_t line_no) {
    auto where = [&] { return path + ":" + std::to_string(line_no); };
    if (doc.doc_id.empty()) {
        throw std::runtime_error("empty doc_id at " + where());
    }
    if (doc.body.empty() && (!doc.title || doc.title->empty())) {
        throw std::runtime_error("document '" + doc.doc_id + "' has neither title nor body at " + where());
    }
    if (!seen.insert(doc.doc_id).second) {
        throw std::runtime_error("duplicate doc_id '" + doc.doc_id + "' at " + where());
    }
    corpus.docs.push_back(std::move(doc));
}

Document parse_tsv_record(const std::string& line, const std::string& path, std::size_t line_no) {
    std::vector<std::string> cols;
    std::size_t start = 0;
    for (;;) {
        std::size_t tab = line.find('\t', start);
        if (tab == std::string::npos) {
            cols.push_back(line.substr(start));
            break;
        }
        cols.push_back(line.substr(start, tab - start));
        start = tab + 1;
    }
    Document doc;
    if (cols.size() == 2) {
        doc.doc_id = cols[0];
        doc.body = cols[1];
    } else if (cols.size() == 3) {
        doc.doc_id = cols[0];
        if (!cols[1].empty()) doc.title = cols[1];
        doc.body = cols[2];
    } else {
        throw std::runtime_error("malformed TSV record (" + std::to_string(cols.size()) +
                                 " fields, want 2 or 3) at " + path + ":" + std::to_string(line_no));
    }
    return doc;
}

Document parse_jsonl_record(const std::string& line, const std::string& path, std::size_t line_no) {
    nlohmann::json obj;
    try {
        obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::runtime_error("malformed JSONL record at " + path + ":" + std::to_string(line_no) +
                                 ": " + e.what());
    }
    if (!obj.is_object() || !obj.contains("doc_id") || !obj.contains("body")) {
        throw std::runtime_error("JSONL record missing doc_id/body at " + path + ":" +
                                 std::to_string(line_no));
    }
    Document doc;
    doc.doc_id = obj.at("doc_id").get<std::string>();
    doc.body = obj.at("body").get<std::string>();
    if (obj.contains("title") && obj.at("title").is_string()) {
        auto t = obj.at("title").get<std::string>();
        if (!t.empty()) doc.title = std::move(t);
    }
    return doc;
}

}  // namespace

Corpus load_corpus(const std::string& path, CorpusFormat format, bool title_augment) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open corpus file: " + path);
    Corpus corpus;
    corpus.title_augment = title_augment;
    std::unordered_set<std::string> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        Document doc = format == CorpusFormat::tsv ? parse_tsv_record(line, path, line_no)
                                                   : parse_jsonl_record(line, path, line_no);
        validate_and_insert(corpus, std::move(doc), seen, path, line_no);
    }
    return corpus;
}

Corpus make_corpus(std::vector<Document> docs, bool title_augment) {
    Corpus corpus;
    corpus.title_augment = title_augment;
    std::unordered_set<std::string> seen;
    std::size_t i = 0;
    for (auto& doc : docs) {
        validate_and_insert(corpus, std::move(doc), seen, "<memory>", ++i);
    }
    return corpus;
}

void save_corpus_tsv(const Corpus& corpus, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write corpus file: " + path);
    for (const auto& doc : corpus.docs) {
        out << doc.doc_id << '\t' << (doc.title ? *doc.title : "") << '\t' << doc.body << '\n';
    }
}

std::vector<Query> load_queries(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open queries file: " + path);
    std::vector<Query> queries;
    std::unordered_set<std::string> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::size_t tab = line.find('\t');
        if (tab == std::string::npos || tab == 0) {
            throw std::runtime_error("malformed query record at " + path + ":" + std::to_string(line_no));
        }
        Query q{line.substr(0, tab), line.substr(tab + 1)};
        if (!seen.insert(q.query_id).second) {
            throw std::runtime_error("duplicate query_id '" + q.query_id + "' at " + path + ":" +
                                     std::to_string(line_no));
        }
        queries.push_back(std::move(q));
    }
    return queries;
}

void save_queries(const std::vector<Query>& queries, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write queries file: " + path);
    for (const auto& q : queries) out << q.query_id << '\t' << q.text << '\n';
}

CorpusFormat parse_corpus_format(const std::string& name) {
    if (name == "tsv") return CorpusFormat::tsv;
    if (name == "jsonl") return CorpusFormat::jsonl;
    throw std::runtime_error("unknown corpus format '" + name + "' (want tsv or jsonl)");
}

}  // namespace splade
