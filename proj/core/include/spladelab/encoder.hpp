#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "spladelab/controller.hpp"
#include "spladelab/sparse.hpp"
#include "spladelab/tape.hpp"
#include "spladelab/tokenizer.hpp"

namespace splade {

enum class Activation : std::uint8_t { gelu = 0, relu = 1, identity = 2 };

struct EncoderConfig {
    std::uint32_t d_model = 64;
    std::uint32_t n_layers = 2;
    std::uint32_t n_heads = 4;
    std::uint32_t d_ff = 128;
    std::uint32_t max_len = 64;
    bool tie_embeddings = true;
    Activation mlm_activation = Activation::gelu;

    void validate() const;
};

// All weights of the toy transformer plus the MLM head. Embedding rows cover
// every output dimension; latent rows (ids >= base_size) are never looked up
// on the input side and are reachable only through the MLM projection.
struct EncoderParams {
    EncoderConfig config;
    ControllerSpec controller_spec;
    std::uint32_t base_size = 0;
    std::uint32_t n_latent = 0;
    std::uint32_t output_dim = 0;
    std::uint64_t seed = 0;

    Eigen::MatrixXd token_embeddings;     // output_dim x d_model
    Eigen::MatrixXd position_embeddings;  // max_len x d_model

    struct Layer {
        Eigen::MatrixXd wq, bq, wk, bk, wv, bv, wo, bo;  // d x d weights, 1 x d biases
        Eigen::MatrixXd ln1_gain, ln1_bias;              // 1 x d
        Eigen::MatrixXd w_ff1, b_ff1;                    // d x d_ff, 1 x d_ff
        Eigen::MatrixXd w_ff2, b_ff2;                    // d_ff x d, 1 x d
        Eigen::MatrixXd ln2_gain, ln2_bias;              // 1 x d
    };
    std::vector<Layer> layers;

    Eigen::MatrixXd mlm_w, mlm_b;     // d x d, 1 x d
    Eigen::MatrixXd mlm_projection;   // output_dim x d_model; empty when tied
    Eigen::MatrixXd mlm_bias;         // 1 x output_dim

    // The matrix whose transpose maps transformed embeddings to logits.
    const Eigen::MatrixXd& projection() const {
        return config.tie_embeddings ? token_embeddings : mlm_projection;
    }
};

// Visits every tensor in the declared order (also the serialization and
// update order): embeddings, per-layer weights, MLM head.
template <typename Params, typename Fn>
void for_each_tensor(Params& params, Fn&& fn) {
    fn("token_embeddings", params.token_embeddings);
    fn("position_embeddings", params.position_embeddings);
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        auto& layer = params.layers[l];
        std::string prefix = "layer" + std::to_string(l) + ".";
        fn((prefix + "wq").c_str(), layer.wq);
        fn((prefix + "bq").c_str(), layer.bq);
        fn((prefix + "wk").c_str(), layer.wk);
        fn((prefix + "bk").c_str(), layer.bk);
        fn((prefix + "wv").c_str(), layer.wv);
        fn((prefix + "bv").c_str(), layer.bv);
        fn((prefix + "wo").c_str(), layer.wo);
        fn((prefix + "bo").c_str(), layer.bo);
        fn((prefix + "ln1_gain").c_str(), layer.ln1_gain);
        fn((prefix + "ln1_bias").c_str(), layer.ln1_bias);
        fn((prefix + "w_ff1").c_str(), layer.w_ff1);
        fn((prefix + "b_ff1").c_str(), layer.b_ff1);
        fn((prefix + "w_ff2").c_str(), layer.w_ff2);
        fn((prefix + "b_ff2").c_str(), layer.b_ff2);
        fn((prefix + "ln2_gain").c_str(), layer.ln2_gain);
        fn((prefix + "ln2_bias").c_str(), layer.ln2_bias);
    }
    fn("mlm.w", params.mlm_w);
    fn("mlm.b", params.mlm_b);
    if (!params.config.tie_embeddings) fn("mlm.projection", params.mlm_projection);
    fn("mlm.bias", params.mlm_bias);
}

EncoderParams init_encoder(const EncoderConfig& config, const VocabularyController& controller,
                           std::uint64_t seed);

// Plain forward passes (no gradients).
Eigen::MatrixXd contextual_embeddings(const EncoderParams& params, const TokenSequence& tokens);
Eigen::MatrixXd mlm_logits(const EncoderParams& params, const Eigen::MatrixXd& hidden);
// w_j = max_i log(1 + relu(w_ij)) over masked columns; zero poolings are absent.
SparseVector pool_sparse(const Eigen::MatrixXd& logits, const std::vector<std::uint8_t>& mask);
SparseVector encode(const EncoderParams& params, const VocabularyController& controller,
                    const std::string& text);
SparseVector encode_tokens(const EncoderParams& params, const std::vector<std::uint8_t>& mask,
                           const TokenSequence& tokens);
// CLS-row representation for the dense baseline.
Eigen::VectorXd encode_dense(const EncoderParams& params, const BaseVocabulary& vocab,
                             const std::string& text);
Eigen::VectorXd encode_dense_tokens(const EncoderParams& params, const TokenSequence& tokens);

bool params_equal(const EncoderParams& a, const EncoderParams& b);
void save_params(const EncoderParams& params, const std::string& path);
EncoderParams load_params(const std::string& path);

const char* activation_name(Activation a);
Activation parse_activation(const std::string& name);

// --- tape-backed forward, used by training ---

struct EncoderVars {
    ad::Var token_embeddings, position_embeddings;
    struct Layer {
        ad::Var wq, bq, wk, bk, wv, bv, wo, bo;
        ad::Var ln1_gain, ln1_bias;
        ad::Var w_ff1, b_ff1, w_ff2, b_ff2;
        ad::Var ln2_gain, ln2_bias;
    };
    std::vector<Layer> layers;
    ad::Var mlm_w, mlm_b, mlm_projection, mlm_bias;  // mlm_projection invalid when tied
    std::vector<ad::Var> flat;                       // same order as for_each_tensor
};

EncoderVars register_params(ad::Tape& tape, const EncoderParams& params, bool requires_grad);
ad::Var transformer_forward(ad::Tape& tape, const EncoderVars& vars, const EncoderParams& params,
                            const TokenSequence& tokens);
ad::Var mlm_logits_forward(ad::Tape& tape, const EncoderVars& vars, const EncoderParams& params,
                           ad::Var hidden);
ad::Var pooled_forward(ad::Tape& tape, ad::Var logits, const Eigen::RowVectorXd& mask01);

Eigen::RowVectorXd mask_to_row(const std::vector<std::uint8_t>& mask);

}  // namespace splade
