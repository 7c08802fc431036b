#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <set>

#include "spladelab/controller.hpp"
#include "test_util.hpp"

using namespace splade;

namespace {

// Corpus whose vocabulary contains the full bundled stoplist plus content words.
testutil::TinyVocab stopword_vocab() {
    auto stoplist = load_stoplist(testutil::data_dir() + "/stopwords_en.txt");
    std::string all_stop;
    for (const auto& w : stoplist) {
        all_stop += w;
        all_stop += ' ';
    }
    return testutil::tiny_vocab({all_stop, "velvet fabric corduroy silk wool linen"});
}

}  // namespace

TEST_CASE("full controller allows every non-special base id") {
    auto tv = testutil::tiny_vocab({"a b c"});
    auto ctrl = build_controller(ControllerSpec{}, tv.vocab, tv.freq, {});
    CHECK(ctrl.output_dim == tv.vocab.size());
    CHECK(ctrl.n_latent == 0);
    CHECK(ctrl.allowed.size() == tv.vocab.size() - BaseVocabulary::kNumSpecials);
    auto mask = allowed_mask(ctrl);
    for (TokenId id = 0; id < BaseVocabulary::kNumSpecials; ++id) CHECK(mask[id] == 0);
    for (std::uint32_t id = BaseVocabulary::kNumSpecials; id < tv.vocab.size(); ++id) {
        CHECK(mask[id] == 1);
    }
}

TEST_CASE("stop_only with the bundled list reaches exactly 150 tokens") {
    auto tv = stopword_vocab();
    auto stoplist = load_stoplist(testutil::data_dir() + "/stopwords_en.txt");
    ControllerSpec spec;
    spec.kind = ControllerKind::stop_only;
    spec.k = 150;
    auto ctrl = build_controller(spec, tv.vocab, tv.freq, stoplist);
    CHECK(ctrl.allowed.size() == 150);
    CHECK(ctrl.stoplist_overlap == stoplist.size());  // whole list is in vocabulary
    CHECK(ctrl.stoplist_truncated);
    // Truncation keeps the FIRST 150 in stoplist order.
    std::set<std::uint32_t> allowed(ctrl.allowed.begin(), ctrl.allowed.end());
    for (std::size_t i = 0; i < 150; ++i) CHECK(allowed.count(tv.vocab.id_of(stoplist[i])) == 1);
    CHECK(allowed.count(tv.vocab.id_of(stoplist[150])) == 0);
}

TEST_CASE("no_stop removes the stoplist and partitions the base ids") {
    auto tv = stopword_vocab();
    auto stoplist = load_stoplist(testutil::data_dir() + "/stopwords_en.txt");
    ControllerSpec spec;
    spec.kind = ControllerKind::no_stop;
    auto ctrl = build_controller(spec, tv.vocab, tv.freq, stoplist);
    std::set<std::uint32_t> no_stop_ids(ctrl.allowed.begin(), ctrl.allowed.end());
    std::set<std::uint32_t> stop_ids;
    for (const auto& w : stoplist) {
        if (tv.vocab.contains(w)) stop_ids.insert(tv.vocab.id_of(w));
    }
    for (std::uint32_t id : no_stop_ids) CHECK(stop_ids.count(id) == 0);
    CHECK(no_stop_ids.size() + stop_ids.size() ==
          tv.vocab.size() - BaseVocabulary::kNumSpecials);
    CHECK(no_stop_ids.count(tv.vocab.id_of("velvet")) == 1);
}

TEST_CASE("random_k is seeded and exhaustive at full k") {
    auto tv = testutil::tiny_vocab({"a b c d e f g h i j k l m n o p q r s t"});
    std::uint32_t non_special = tv.vocab.size() - BaseVocabulary::kNumSpecials;

    ControllerSpec spec;
    spec.kind = ControllerKind::random_k;
    spec.k = 5;
    spec.seed = 101;
    auto ctrl_a = build_controller(spec, tv.vocab, tv.freq, {});
    auto ctrl_b = build_controller(spec, tv.vocab, tv.freq, {});
    CHECK(ctrl_a.allowed == ctrl_b.allowed);

    spec.seed = 102;
    auto ctrl_c = build_controller(spec, tv.vocab, tv.freq, {});
    CHECK(ctrl_a.allowed != ctrl_c.allowed);

    spec.k = non_special;
    auto ctrl_all = build_controller(spec, tv.vocab, tv.freq, {});
    CHECK(ctrl_all.allowed.size() == non_special);
    spec.k = non_special + 1;
    CHECK_THROWS(build_controller(spec, tv.vocab, tv.freq, {}));
}

TEST_CASE("lowfreq_k keeps the rarest observed tokens with lexicographic ties") {
    auto tv = testutil::tiny_vocab({"a a a a a b c"});
    // a:5, b:1, c:1 -> k=2 keeps {b, c}
    ControllerSpec spec;
    spec.kind = ControllerKind::lowfreq_k;
    spec.k = 2;
    auto ctrl = build_controller(spec, tv.vocab, tv.freq, {});
    std::set<std::uint32_t> allowed(ctrl.allowed.begin(), ctrl.allowed.end());
    CHECK(allowed.count(tv.vocab.id_of("b")) == 1);
    CHECK(allowed.count(tv.vocab.id_of("c")) == 1);
    CHECK(allowed.count(tv.vocab.id_of("a")) == 0);
}

TEST_CASE("lowfreq_k never keeps a more frequent token than one it excludes") {
    auto tv = testutil::tiny_vocab({"w w w w x x x y y z q q q q q"});
    ControllerSpec spec;
    spec.kind = ControllerKind::lowfreq_k;
    spec.k = 2;
    auto ctrl = build_controller(spec, tv.vocab, tv.freq, {});
    std::uint64_t kept_max = 0;
    for (std::uint32_t id : ctrl.allowed) kept_max = std::max(kept_max, tv.freq.counts[id]);
    for (std::uint32_t id = BaseVocabulary::kNumSpecials; id < tv.vocab.size(); ++id) {
        if (std::binary_search(ctrl.allowed.begin(), ctrl.allowed.end(), id)) continue;
        if (tv.freq.counts[id] == 0) continue;
        CHECK(tv.freq.counts[id] >= kept_max);
    }
}

TEST_CASE("latent controllers append fresh dimensions") {
    auto tv = testutil::tiny_vocab({"a b c"});
    ControllerSpec spec;
    spec.kind = ControllerKind::latent_only_k;
    spec.k = 150;
    auto latent = build_controller(spec, tv.vocab, tv.freq, {});
    CHECK(latent.output_dim == tv.vocab.size() + 150);
    CHECK(latent.n_latent == 150);
    CHECK(latent.allowed.size() == 150);
    auto mask = allowed_mask(latent);
    std::size_t on = 0;
    for (std::size_t j = 0; j < mask.size(); ++j) {
        if (mask[j]) {
            ++on;
            CHECK(j >= tv.vocab.size());
        }
    }
    CHECK(on == 150);
    CHECK(latent.dim_name(tv.vocab.size()) == "latent#0");

    spec.kind = ControllerKind::added_latent_k;
    spec.k = 768;
    auto added = build_controller(spec, tv.vocab, tv.freq, {});
    CHECK(added.output_dim == tv.vocab.size() + 768);
    CHECK(added.allowed.size() == (tv.vocab.size() - BaseVocabulary::kNumSpecials) + 768);
}

TEST_CASE("mask popcount equals the allowed set size (property)") {
    auto tv = stopword_vocab();
    auto stoplist = load_stoplist(testutil::data_dir() + "/stopwords_en.txt");
    std::vector<ControllerSpec> specs = {
        {ControllerKind::full, 0, 0},        {ControllerKind::no_stop, 0, 0},
        {ControllerKind::stop_only, 150, 0}, {ControllerKind::random_k, 20, 5},
        {ControllerKind::lowfreq_k, 20, 0},  {ControllerKind::latent_only_k, 8, 0},
        {ControllerKind::added_latent_k, 8, 0},
    };
    for (const auto& spec : specs) {
        auto ctrl = build_controller(spec, tv.vocab, tv.freq, stoplist);
        auto mask = allowed_mask(ctrl);
        std::size_t on = 0;
        for (auto bit : mask) on += bit;
        CHECK(on == ctrl.allowed.size());
        CHECK(mask.size() == ctrl.output_dim);
        for (TokenId id = 0; id < BaseVocabulary::kNumSpecials; ++id) CHECK(mask[id] == 0);
    }
}

TEST_CASE("error cases name the shortfall") {
    auto tv = testutil::tiny_vocab({"only few words here"});
    ControllerSpec spec;
    spec.kind = ControllerKind::stop_only;
    spec.k = 150;
    try {
        build_controller(spec, tv.vocab, tv.freq, {"the", "of"});
        FAIL("expected overlap error");
    } catch (const std::exception& e) {
        CHECK(std::string(e.what()).find("overlap") != std::string::npos);
    }
    spec.kind = ControllerKind::lowfreq_k;
    spec.k = 1000;
    try {
        build_controller(spec, tv.vocab, tv.freq, {});
        FAIL("expected shortfall error");
    } catch (const std::exception& e) {
        CHECK(std::string(e.what()).find("short by") != std::string::npos);
    }
    spec.kind = ControllerKind::stop_only;
    spec.k = 0;
    CHECK_THROWS(build_controller(spec, tv.vocab, tv.freq, {"a"}));
}

TEST_CASE("controller persists and reloads") {
    auto tv = testutil::tiny_vocab({"a b c d e f"});
    ControllerSpec spec;
    spec.kind = ControllerKind::random_k;
    spec.k = 3;
    spec.seed = 9;
    auto ctrl = build_controller(spec, tv.vocab, tv.freq, {});
    save_controller(ctrl, "controller_roundtrip.txt");
    auto loaded = load_controller("controller_roundtrip.txt", tv.vocab);
    CHECK(loaded.allowed == ctrl.allowed);
    CHECK(loaded.n_latent == ctrl.n_latent);
    CHECK(loaded.output_dim == ctrl.output_dim);
    CHECK(loaded.spec.kind == ctrl.spec.kind);
    std::remove("controller_roundtrip.txt");
}

TEST_CASE("controller spec labels parse both ways") {
    ControllerSpec spec = parse_controller_spec("stop_only:150", 7);
    CHECK(spec.kind == ControllerKind::stop_only);
    CHECK(spec.k == 150);
    CHECK(spec.seed == 7);
    CHECK(controller_spec_label(spec) == "stop_only:150");
    CHECK(parse_controller_spec("full", 1).kind == ControllerKind::full);
    CHECK_THROWS(parse_controller_spec("bogus:3", 0));
}
