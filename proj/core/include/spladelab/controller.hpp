#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spladelab/tokenizer.hpp"

namespace splade {

enum class ControllerKind {
    full,
    no_stop,
    stop_only,
    random_k,
    lowfreq_k,
    latent_only_k,
    added_latent_k,
};

struct ControllerSpec {
    ControllerKind kind = ControllerKind::full;
    std::uint32_t k = 0;        // required for the parameterized kinds
    std::uint64_t seed = 0;     // required for random_k
};

// Which output dimensions the encoder may put weight on. Latent dimensions
// are appended past the base vocabulary and have no surface string; special
// token ids are never allowed.
struct VocabularyController {
    BaseVocabulary base;
    std::vector<std::uint32_t> allowed;  // sorted ascending
    std::uint32_t n_latent = 0;
    std::uint32_t output_dim = 0;
    ControllerSpec spec;
    // Recorded so runs can report whether the stoplist target size came from
    // intersection with the base vocabulary or from truncation.
    std::uint32_t stoplist_overlap = 0;
    bool stoplist_truncated = false;

    bool is_allowed(std::uint32_t dim) const;
    bool is_latent(std::uint32_t dim) const { return dim >= base.size(); }
    // Surface string for base dims, "latent#<i>" for latent dims.
    std::string dim_name(std::uint32_t dim) const;
};

VocabularyController build_controller(const ControllerSpec& spec, const BaseVocabulary& base,
                                      const FrequencyTable& freq,
                                      const std::vector<std::string>& stoplist);

// mask[j] == 1 iff j is an allowed output dimension.
std::vector<std::uint8_t> allowed_mask(const VocabularyController& controller);

// Plain-text form: "kind k seed n_latent" header plus one allowed id per line.
void save_controller(const VocabularyController& controller, const std::string& path);
VocabularyController load_controller(const std::string& path, const BaseVocabulary& base);

std::vector<std::string> load_stoplist(const std::string& path);

const char* controller_kind_name(ControllerKind kind);
ControllerKind parse_controller_kind(const std::string& name);
// "stop_only:150" / "random:768" / "full"; seed comes from the caller.
ControllerSpec parse_controller_spec(const std::string& text, std::uint64_t seed);
std::string controller_spec_label(const ControllerSpec& spec);

}  // namespace splade
