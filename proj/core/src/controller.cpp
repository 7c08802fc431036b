#include "spladelab/controller.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "spladelab/rng.hpp"

namespace splade {

namespace {

std::vector<std::uint32_t> non_special_ids(const BaseVocabulary& base) {
    std::vector<std::uint32_t> ids;
    ids.reserve(base.size() - BaseVocabulary::kNumSpecials);
    for (std::uint32_t id = BaseVocabulary::kNumSpecials; id < base.size(); ++id) ids.push_back(id);
    return ids;
}

void require_k(const ControllerSpec& spec) {
    if (spec.k == 0) {
        throw std::runtime_error(std::string("controller kind ") + controller_kind_name(spec.kind) +
                                 " requires k > 0");
    }
}

}  // namespace

bool VocabularyController::is_allowed(std::uint32_t dim) const {
    return std::binary_search(allowed.begin(), allowed.end(), dim);
}

std::string VocabularyController::dim_name(std::uint32_t dim) const {
    if (dim < base.size()) return base.token_of(dim);
    return "latent#" + std::to_string(dim - base.size());
}

VocabularyController build_controller(const ControllerSpec& spec, const BaseVocabulary& base,
                                      const FrequencyTable& freq,
                                      const std::vector<std::string>& stoplist) {
    VocabularyController ctrl;
    ctrl.base = base;
    ctrl.spec = spec;
    ctrl.n_latent = 0;

    const auto base_ids = non_special_ids(base);

    // Ids of stoplist tokens present in the base vocabulary, in list order.
    std::vector<std::uint32_t> stop_ids;
    std::unordered_set<std::uint32_t> stop_set;
    for (const auto& word : stoplist) {
        if (!base.contains(word)) continue;
        std::uint32_t id = base.id_of(word);
        if (base.is_special(id)) continue;
        if (stop_set.insert(id).second) stop_ids.push_back(id);
    }
    ctrl.stoplist_overlap = static_cast<std::uint32_t>(stop_ids.size());

    switch (spec.kind) {
        case ControllerKind::full:
            ctrl.allowed = base_ids;
            break;
        case ControllerKind::no_stop: {
            if (stoplist.empty()) throw std::runtime_error("no_stop controller requires a stoplist");
            for (std::uint32_t id : base_ids) {
                if (!stop_set.count(id)) ctrl.allowed.push_back(id);
            }
            break;
        }
        case ControllerKind::stop_only: {
            require_k(spec);
            if (stoplist.empty()) throw std::runtime_error("stop_only controller requires a stoplist");
            if (stop_ids.empty()) {
                throw std::runtime_error("stop_only: stoplist has no overlap with the base vocabulary");
            }
            if (stop_ids.size() < spec.k) {
                throw std::runtime_error("stop_only: need k=" + std::to_string(spec.k) +
                                         " stoplist tokens in the base vocabulary but only " +
                                         std::to_string(stop_ids.size()) + " are present (short by " +
                                         std::to_string(spec.k - stop_ids.size()) + ")");
            }
            ctrl.stoplist_truncated = stop_ids.size() > spec.k;
            ctrl.allowed.assign(stop_ids.begin(), stop_ids.begin() + spec.k);
            std::sort(ctrl.allowed.begin(), ctrl.allowed.end());
            break;
        }
        case ControllerKind::random_k: {
            require_k(spec);
            if (spec.k > base_ids.size()) {
                throw std::runtime_error("random_k: k=" + std::to_string(spec.k) + " exceeds the " +
                                         std::to_string(base_ids.size()) +
                                         " non-special base tokens (short by " +
                                         std::to_string(spec.k - base_ids.size()) + ")");
            }
            Rng rng(spec.seed);
            for (auto pick : rng.sample_without_replacement(base_ids.size(), spec.k)) {
                ctrl.allowed.push_back(base_ids[pick]);
            }
            std::sort(ctrl.allowed.begin(), ctrl.allowed.end());
            break;
        }
        case ControllerKind::lowfreq_k: {
            require_k(spec);
            if (freq.counts.size() != base.size()) {
                throw std::runtime_error("lowfreq_k: frequency table does not match the base vocabulary");
            }
            std::vector<std::uint32_t> candidates;
            for (std::uint32_t id : base_ids) {
                if (freq.counts[id] > 0) candidates.push_back(id);
            }
            if (candidates.size() < spec.k) {
                throw std::runtime_error("lowfreq_k: only " + std::to_string(candidates.size()) +
                                         " tokens with nonzero frequency, need " + std::to_string(spec.k) +
                                         " (short by " + std::to_string(spec.k - candidates.size()) + ")");
            }
            std::sort(candidates.begin(), candidates.end(), [&](std::uint32_t a, std::uint32_t b) {
                if (freq.counts[a] != freq.counts[b]) return freq.counts[a] < freq.counts[b];
                return base.token_of(a) < base.token_of(b);
            });
            ctrl.allowed.assign(candidates.begin(), candidates.begin() + spec.k);
            std::sort(ctrl.allowed.begin(), ctrl.allowed.end());
            break;
        }
        case ControllerKind::latent_only_k: {
            require_k(spec);
            ctrl.n_latent = spec.k;
            for (std::uint32_t i = 0; i < spec.k; ++i) ctrl.allowed.push_back(base.size() + i);
            break;
        }
        case ControllerKind::added_latent_k: {
            require_k(spec);
            ctrl.n_latent = spec.k;
            ctrl.allowed = base_ids;
            for (std::uint32_t i = 0; i < spec.k; ++i) ctrl.allowed.push_back(base.size() + i);
            break;
        }
    }
    ctrl.output_dim = base.size() + ctrl.n_latent;
    return ctrl;
}

std::vector<std::uint8_t> allowed_mask(const VocabularyController& controller) {
    std::vector<std::uint8_t> mask(controller.output_dim, 0);
    for (std::uint32_t id : controller.allowed) mask.at(id) = 1;
    return mask;
}

void save_controller(const VocabularyController& controller, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write controller file: " + path);
    out << controller_kind_name(controller.spec.kind) << ' ' << controller.spec.k << ' '
        << controller.spec.seed << ' ' << controller.n_latent << '\n';
    for (std::uint32_t id : controller.allowed) out << id << '\n';
}

VocabularyController load_controller(const std::string& path, const BaseVocabulary& base) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open controller file: " + path);
    std::string header;
    if (!std::getline(in, header)) throw std::runtime_error("controller file is empty: " + path);
    std::istringstream hs(header);
    std::string kind_name;
    VocabularyController ctrl;
    ctrl.base = base;
    if (!(hs >> kind_name >> ctrl.spec.k >> ctrl.spec.seed >> ctrl.n_latent)) {
        throw std::runtime_error("malformed controller header in " + path);
    }
    ctrl.spec.kind = parse_controller_kind(kind_name);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        ctrl.allowed.push_back(static_cast<std::uint32_t>(std::stoul(line)));
    }
    if (!std::is_sorted(ctrl.allowed.begin(), ctrl.allowed.end())) {
        throw std::runtime_error("controller allowed ids are not sorted in " + path);
    }
    ctrl.output_dim = base.size() + ctrl.n_latent;
    for (std::uint32_t id : ctrl.allowed) {
        if (id >= ctrl.output_dim) {
            throw std::runtime_error("controller id " + std::to_string(id) + " out of range in " + path);
        }
    }
    return ctrl;
}

std::vector<std::string> load_stoplist(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open stoplist file: " + path);
    std::vector<std::string> words;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) words.push_back(line);
    }
    return words;
}

const char* controller_kind_name(ControllerKind kind) {
    switch (kind) {
        case ControllerKind::full: return "full";
        case ControllerKind::no_stop: return "no_stop";
        case ControllerKind::stop_only: return "stop_only";
        case ControllerKind::random_k: return "random";
        case ControllerKind::lowfreq_k: return "lowfreq";
        case ControllerKind::latent_only_k: return "latent_only";
        case ControllerKind::added_latent_k: return "added_latent";
    }
    return "?";
}

ControllerKind parse_controller_kind(const std::string& name) {
    if (name == "full") return ControllerKind::full;
    if (name == "no_stop") return ControllerKind::no_stop;
    if (name == "stop_only") return ControllerKind::stop_only;
    if (name == "random" || name == "random_k") return ControllerKind::random_k;
    if (name == "lowfreq" || name == "lowfreq_k") return ControllerKind::lowfreq_k;
    if (name == "latent_only" || name == "latent_only_k") return ControllerKind::latent_only_k;
    if (name == "added_latent" || name == "added_latent_k") return ControllerKind::added_latent_k;
    throw std::runtime_error("unknown controller kind '" + name + "'");
}

ControllerSpec parse_controller_spec(const std::string& text, std::uint64_t seed) {
    ControllerSpec spec;
    spec.seed = seed;
    std::size_t colon = text.find(':');
    if (colon == std::string::npos) {
        spec.kind = parse_controller_kind(text);
    } else {
        spec.kind = parse_controller_kind(text.substr(0, colon));
        spec.k = static_cast<std::uint32_t>(std::stoul(text.substr(colon + 1)));
    }
    return spec;
}

std::string controller_spec_label(const ControllerSpec& spec) {
    std::string label = controller_kind_name(spec.kind);
    if (spec.k > 0) label += ":" + std::to_string(spec.k);
    return label;
}

}  // namespace splade
