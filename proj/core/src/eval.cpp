#include "spladelab/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace splade {

namespace {

double log2_discount(std::size_t rank) {
    return std::log2(static_cast<double>(rank) + 1.0);
}

std::string format_value(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

}  // namespace

int Qrels::grade(const std::string& query_id, const std::string& doc_id) const {
    auto qit = grades.find(query_id);
    if (qit == grades.end()) return 0;
    auto dit = qit->second.find(doc_id);
    return dit == qit->second.end() ? 0 : dit->second;
}

std::size_t Qrels::relevant_count(const std::string& query_id, int threshold) const {
    auto qit = grades.find(query_id);
    if (qit == grades.end()) return 0;
    std::size_t n = 0;
    for (const auto& [doc, grade] : qit->second) {
        if (grade >= threshold) ++n;
    }
    return n;
}

Qrels load_qrels(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open qrels file: " + path);
    Qrels qrels;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string qid, iteration, docid;
        int grade = 0;
        if (!(ls >> qid >> iteration >> docid >> grade)) {
            throw std::runtime_error("malformed qrels line at " + path + ":" + std::to_string(line_no));
        }
        if (grade < 0) {
            throw std::runtime_error("negative relevance grade at " + path + ":" +
                                     std::to_string(line_no));
        }
        qrels.grades[qid][docid] = grade;
    }
    return qrels;
}

void save_qrels(const Qrels& qrels, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write qrels file: " + path);
    for (const auto& [qid, docs] : qrels.grades) {
        for (const auto& [docid, grade] : docs) out << qid << " 0 " << docid << ' ' << grade << '\n';
    }
}

double rr_at_k(const Ranking& ranking, const Qrels& qrels, std::size_t k, int threshold) {
    std::size_t limit = std::min(k, ranking.hits.size());
    for (std::size_t r = 0; r < limit; ++r) {
        if (qrels.grade(ranking.query_id, ranking.hits[r].doc_id) >= threshold) {
            return 1.0 / static_cast<double>(r + 1);
        }
    }
    return 0.0;
}

double ndcg_at_k(const Ranking& ranking, const Qrels& qrels, std::size_t k) {
    auto qit = qrels.grades.find(ranking.query_id);
    if (qit == qrels.grades.end()) return 0.0;
    std::vector<int> ideal;
    ideal.reserve(qit->second.size());
    for (const auto& [doc, grade] : qit->second) {
        if (grade > 0) ideal.push_back(grade);
    }
    if (ideal.empty()) return 0.0;  // all-zero grades: defined as 0
    std::sort(ideal.begin(), ideal.end(), std::greater<>());

    double dcg = 0.0;
    std::size_t limit = std::min(k, ranking.hits.size());
    for (std::size_t r = 0; r < limit; ++r) {
        int grade = qrels.grade(ranking.query_id, ranking.hits[r].doc_id);
        if (grade > 0) dcg += (std::pow(2.0, grade) - 1.0) / log2_discount(r + 1);
    }
    double idcg = 0.0;
    for (std::size_t r = 0; r < std::min(k, ideal.size()); ++r) {
        idcg += (std::pow(2.0, ideal[r]) - 1.0) / log2_discount(r + 1);
    }
    return idcg == 0.0 ? 0.0 : dcg / idcg;
}

double recall_at_k(const Ranking& ranking, const Qrels& qrels, std::size_t k, int threshold) {
    std::size_t relevant = qrels.relevant_count(ranking.query_id, threshold);
    if (relevant == 0) return 0.0;
    std::size_t found = 0;
    std::size_t limit = std::min(k, ranking.hits.size());
    for (std::size_t r = 0; r < limit; ++r) {
        if (qrels.grade(ranking.query_id, ranking.hits[r].doc_id) >= threshold) ++found;
    }
    return static_cast<double>(found) / static_cast<double>(relevant);
}

// Regularized incomplete beta I_x(a, b) via the Lentz continued fraction.
double incomplete_beta(double a, double b, double x) {
    if (x < 0.0 || x > 1.0) throw std::runtime_error("incomplete_beta: x outside [0, 1]");
    if (x == 0.0) return 0.0;
    if (x == 1.0) return 1.0;
    // The fraction converges fast only below this pivot; reflect otherwise.
    if (x > (a + 1.0) / (a + b + 2.0)) return 1.0 - incomplete_beta(b, a, 1.0 - x);

    double log_front = a * std::log(x) + b * std::log1p(-x) + std::lgamma(a + b) - std::lgamma(a) -
                       std::lgamma(b);
    double front = std::exp(log_front) / a;

    const double tiny = 1e-300;
    double f = 1.0, c = 1.0, d = 0.0;
    for (int i = 0; i <= 400; ++i) {
        double m = static_cast<double>(i / 2);
        double numerator;
        if (i == 0) {
            numerator = 1.0;
        } else if (i % 2 == 0) {
            numerator = m * (b - m) * x / ((a + 2.0 * m - 1.0) * (a + 2.0 * m));
        } else {
            numerator = -(a + m) * (a + b + m) * x / ((a + 2.0 * m) * (a + 2.0 * m + 1.0));
        }
        d = 1.0 + numerator * d;
        if (std::abs(d) < tiny) d = tiny;
        d = 1.0 / d;
        c = 1.0 + numerator / c;
        if (std::abs(c) < tiny) c = tiny;
        f *= c * d;
        if (std::abs(1.0 - c * d) < 1e-16) break;
    }
    double result = front * (f - 1.0);
    return std::min(1.0, std::max(0.0, result));
}

double student_t_two_sided_p(double t, double dof) {
    if (dof <= 0.0) throw std::runtime_error("student_t_two_sided_p: dof must be positive");
    double x = dof / (dof + t * t);
    return incomplete_beta(dof / 2.0, 0.5, x);
}

double paired_ttest(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw std::runtime_error("paired_ttest: length mismatch");
    if (a.size() < 2) throw std::runtime_error("paired_ttest: need at least 2 paired values");
    const std::size_t n = a.size();
    std::vector<double> diff(n);
    for (std::size_t i = 0; i < n; ++i) diff[i] = a[i] - b[i];
    double mean = 0.0;
    for (double d : diff) mean += d;
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (double d : diff) ss += (d - mean) * (d - mean);
    double var = ss / static_cast<double>(n - 1);
    if (var == 0.0) {
        // Degenerate by convention: identical -> no evidence; constant
        // nonzero shift -> certain difference.
        return mean == 0.0 ? 1.0 : 0.0;
    }
    double t = mean / std::sqrt(var / static_cast<double>(n));
    return student_t_two_sided_p(t, static_cast<double>(n - 1));
}

const char* metric_name(Metric m) {
    switch (m) {
        case Metric::rr10: return "rr@10";
        case Metric::ndcg10: return "ndcg@10";
        case Metric::recall1000: return "recall@1000";
    }
    return "?";
}

Metric parse_metric(const std::string& name) {
    if (name == "rr@10" || name == "mrr@10" || name == "rr10") return Metric::rr10;
    if (name == "ndcg@10" || name == "ndcg10") return Metric::ndcg10;
    if (name == "recall@1000" || name == "recall1000" || name == "r@1000") return Metric::recall1000;
    throw std::runtime_error("unknown metric '" + name + "'");
}

double compute_metric(Metric m, const Ranking& ranking, const Qrels& qrels, int threshold) {
    switch (m) {
        case Metric::rr10: return rr_at_k(ranking, qrels, 10, threshold);
        case Metric::ndcg10: return ndcg_at_k(ranking, qrels, 10);
        case Metric::recall1000: return recall_at_k(ranking, qrels, 1000, threshold);
    }
    throw std::logic_error("unknown metric");
}

SystemEval evaluate_rankings(const std::string& system, const std::vector<Ranking>& rankings,
                             const Qrels& qrels, const std::vector<Metric>& metrics, int threshold) {
    SystemEval eval;
    eval.system = system;
    for (const auto& ranking : rankings) {
        if (!qrels.has_query(ranking.query_id)) {
            ++eval.ignored_run_queries;
            continue;
        }
        ++eval.evaluated_queries;
        for (Metric m : metrics) {
            eval.per_query[m][ranking.query_id] = compute_metric(m, ranking, qrels, threshold);
        }
    }
    for (Metric m : metrics) {
        double total = 0.0;
        const auto& values = eval.per_query[m];
        for (const auto& [qid, v] : values) total += v;
        eval.means[m] = values.empty() ? 0.0 : total / static_cast<double>(values.size());
    }
    return eval;
}

EvalReport evaluate_runs(const std::vector<std::pair<std::string, std::vector<Ranking>>>& runs,
                         const Qrels& qrels, const std::vector<Metric>& metrics, int threshold) {
    EvalReport report;
    for (const auto& [name, rankings] : runs) {
        report.systems.push_back(evaluate_rankings(name, rankings, qrels, metrics, threshold));
    }
    const std::size_t n = report.systems.size();
    for (Metric m : metrics) {
        std::vector<std::vector<double>> p(n, std::vector<double>(n, 1.0));
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                // Align paired values on the queries both systems evaluated.
                std::vector<double> a, b;
                const auto& pa = report.systems[i].per_query.at(m);
                const auto& pb = report.systems[j].per_query.at(m);
                for (const auto& [qid, va] : pa) {
                    auto it = pb.find(qid);
                    if (it != pb.end()) {
                        a.push_back(va);
                        b.push_back(it->second);
                    }
                }
                double pv = a.size() >= 2 ? paired_ttest(a, b) : 1.0;
                p[i][j] = pv;
                p[j][i] = pv;
            }
        }
        report.significance[m] = std::move(p);
    }
    return report;
}

EvalReport evaluate_run_files(const std::vector<std::string>& run_paths, const Qrels& qrels,
                              const std::vector<Metric>& metrics, int threshold) {
    std::vector<std::pair<std::string, std::vector<Ranking>>> runs;
    for (const auto& path : run_paths) {
        std::string name = path;
        std::size_t slash = name.find_last_of('/');
        if (slash != std::string::npos) name = name.substr(slash + 1);
        runs.emplace_back(name, read_run(path));
    }
    return evaluate_runs(runs, qrels, metrics, threshold);
}

void write_report_tsv(const EvalReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write report: " + path);
    out << "system";
    if (!report.systems.empty()) {
        for (const auto& [m, mean] : report.systems.front().means) out << '\t' << metric_name(m);
    }
    out << "\tqueries\n";
    for (const auto& system : report.systems) {
        out << system.system;
        for (const auto& [m, mean] : system.means) out << '\t' << format_value(mean);
        out << '\t' << system.evaluated_queries << '\n';
    }
}

void write_per_query_tsv(const EvalReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write per-query report: " + path);
    out << "system\tmetric\tquery_id\tvalue\n";
    for (const auto& system : report.systems) {
        for (const auto& [m, values] : system.per_query) {
            for (const auto& [qid, v] : values) {
                out << system.system << '\t' << metric_name(m) << '\t' << qid << '\t'
                    << format_value(v) << '\n';
            }
        }
    }
}

void write_significance_tsv(const EvalReport& report, Metric metric, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write significance matrix: " + path);
    auto it = report.significance.find(metric);
    if (it == report.significance.end()) throw std::runtime_error("no significance data for metric");
    out << "system";
    for (const auto& system : report.systems) out << '\t' << system.system;
    out << '\n';
    for (std::size_t i = 0; i < report.systems.size(); ++i) {
        out << report.systems[i].system;
        for (std::size_t j = 0; j < report.systems.size(); ++j) {
            out << '\t' << format_value(it->second[i][j]);
            if (i != j && it->second[i][j] <= report.significance_alpha) out << '*';
        }
        out << '\n';
    }
}

std::vector<ExpansionStat> expansion_stats(const EncoderParams& params,
                                           const VocabularyController& controller,
                                           const std::vector<Query>& queries,
                                           const InvertedIndex& index) {
    std::vector<std::size_t> counts(controller.output_dim, 0);
    const auto mask = allowed_mask(controller);
    for (const auto& query : queries) {
        TokenSequence tokens = tokenize(query.text, controller.base, params.config.max_len);
        std::unordered_set<std::uint32_t> surface;
        for (TokenId id : tokens.ids) {
            if (!controller.base.is_special(id)) surface.insert(id);
        }
        SparseVector encoded = encode_tokens(params, mask, tokens);
        for (const auto& [dim, impact] : encoded.entries) {
            bool expanded = controller.is_latent(dim) || surface.count(dim) == 0;
            if (expanded) ++counts[dim];
        }
    }
    std::vector<ExpansionStat> stats;
    for (std::uint32_t dim = 0; dim < counts.size(); ++dim) {
        if (counts[dim] == 0) continue;
        ExpansionStat s;
        s.term_id = dim;
        s.term = controller.dim_name(dim);
        s.count = counts[dim];
        s.percentage = 100.0 * static_cast<double>(counts[dim]) / static_cast<double>(queries.size());
        const PostingsList* list = index.find_list(dim);
        s.list_length = list ? list->length() : 0;
        stats.push_back(std::move(s));
    }
    std::sort(stats.begin(), stats.end(), [](const ExpansionStat& a, const ExpansionStat& b) {
        if (a.count != b.count) return a.count > b.count;
        return a.term_id < b.term_id;
    });
    return stats;
}

void write_expansion_stats_tsv(const std::vector<ExpansionStat>& stats, std::size_t n_queries,
                               const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write expansion stats: " + path);
    out << "# queries=" << n_queries << '\n';
    out << "term\tcount\tpercent\tlist_length\n";
    char pct[32];
    for (const auto& s : stats) {
        std::snprintf(pct, sizeof(pct), "%.1f", s.percentage);
        out << s.term << '\t' << s.count << '\t' << pct << '\t' << s.list_length << '\n';
    }
}

SparseVector prune_query_terms(const SparseVector& query, const std::set<std::uint32_t>& banned) {
    SparseVector pruned;
    pruned.source_len = query.source_len;
    for (const auto& entry : query.entries) {
        if (!banned.count(entry.first)) pruned.entries.push_back(entry);
    }
    return pruned;
}

}  // namespace splade
