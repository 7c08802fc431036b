#pragma once

#include <optional>
#include <string>
#include <vector>

namespace splade {

struct Document {
    std::string doc_id;
    std::optional<std::string> title;
    std::string body;
};

enum class CorpusFormat { tsv, jsonl };

// A loaded collection. When title_augment is set the text seen by the
// tokenizer/encoder is "title body"; the stored fields stay as ingested.
struct Corpus {
    std::vector<Document> docs;
    bool title_augment = false;

    std::string visible_text(const Document& doc) const {
        if (title_augment && doc.title && !doc.title->empty()) {
            return *doc.title + " " + doc.body;
        }
        return doc.body;
    }
    std::string visible_text(std::size_t ordinal) const { return visible_text(docs.at(ordinal)); }
    std::size_t size() const { return docs.size(); }
};

struct Query {
    std::string query_id;
    std::string text;
};

// TSV rows are "doc_id<TAB>title<TAB>body" (or "doc_id<TAB>body"); JSONL
// objects carry doc_id/title/body keys. Malformed rows and duplicate ids
// raise with the offending line number.
Corpus load_corpus(const std::string& path, CorpusFormat format, bool title_augment);
Corpus make_corpus(std::vector<Document> docs, bool title_augment);
void save_corpus_tsv(const Corpus& corpus, const std::string& path);

// Queries: "query_id<TAB>text".
std::vector<Query> load_queries(const std::string& path);
void save_queries(const std::vector<Query>& queries, const std::string& path);

CorpusFormat parse_corpus_format(const std::string& name);

}  // namespace splade
