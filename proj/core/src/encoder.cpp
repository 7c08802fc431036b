#include "spladelab/encoder.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "spladelab/rng.hpp"

namespace splade {

namespace {

std::string last_component(const std::string& name) {
    std::size_t dot = name.rfind('.');
    return dot == std::string::npos ? name : name.substr(dot + 1);
}

void fill_tensor(const std::string& name, Eigen::MatrixXd& m, Rng& rng) {
    std::string comp = last_component(name);
    if (comp.find("gain") != std::string::npos) {
        m.setOnes();
        return;
    }
    if (comp.find("bias") != std::string::npos || comp[0] == 'b') {
        m.setZero();
        return;
    }
    if (comp.find("embeddings") != std::string::npos) {
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = 0.1 * rng.normal();
        }
        return;
    }
    if (name == "mlm.w") {
        // Near-identity start: the transform stays close to a pass-through,
        // so logits begin as embedding similarities to the residual stream.
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            for (Eigen::Index c = 0; c < m.cols(); ++c) {
                m(r, c) = (r == c ? 1.0 : 0.0) + 0.02 * rng.normal();
            }
        }
        return;
    }
    // Weight matrices: Glorot uniform. The residual-branch outputs (wo,
    // w_ff2) start small so the token embedding dominates the residual
    // stream early; with tied embeddings the untrained model then scores by
    // term overlap instead of drifting into a degenerate hub solution.
    double limit = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
    if (comp == "wo" || comp == "w_ff2") limit *= 0.1;
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = limit * (2.0 * rng.uniform() - 1.0);
    }
}

std::vector<int> id_rows(const TokenSequence& tokens) {
    std::vector<int> rows;
    rows.reserve(tokens.ids.size());
    for (TokenId id : tokens.ids) rows.push_back(static_cast<int>(id));
    return rows;
}

ad::Var apply_activation(ad::Tape& tape, ad::Var x, Activation act) {
    switch (act) {
        case Activation::gelu: return tape.gelu(x);
        case Activation::relu: return tape.relu(x);
        case Activation::identity: return x;
    }
    throw std::logic_error("unknown activation");
}

void write_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }
void write_u64(std::ostream& out, std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); }
void write_u8(std::ostream& out, std::uint8_t v) { out.write(reinterpret_cast<const char*>(&v), 1); }

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
std::uint8_t read_u8(std::istream& in) {
    std::uint8_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 1);
    return v;
}

void write_matrix(std::ostream& out, const Eigen::MatrixXd& m) {
    write_u64(out, static_cast<std::uint64_t>(m.rows()));
    write_u64(out, static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            double v = m(r, c);
            out.write(reinterpret_cast<const char*>(&v), 8);
        }
    }
}

Eigen::MatrixXd read_matrix(std::istream& in) {
    std::uint64_t rows = read_u64(in);
    std::uint64_t cols = read_u64(in);
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            double v = 0.0;
            in.read(reinterpret_cast<char*>(&v), 8);
            m(r, c) = v;
        }
    }
    return m;
}

constexpr char kMagic[8] = {'S', 'P', 'L', 'A', 'D', 'E', 'P', 'M'};
constexpr std::uint32_t kFormatVersion = 1;

}  // namespace

void EncoderConfig::validate() const {
    if (d_model == 0 || n_layers == 0 || n_heads == 0 || d_ff == 0) {
        throw std::runtime_error("encoder config: all sizes must be positive");
    }
    if (d_model % n_heads != 0) {
        throw std::runtime_error("encoder config: d_model must be divisible by n_heads");
    }
    if (max_len < 2) throw std::runtime_error("encoder config: max_len must be at least 2");
}

EncoderParams init_encoder(const EncoderConfig& config, const VocabularyController& controller,
                           std::uint64_t seed) {
    config.validate();
    EncoderParams params;
    params.config = config;
    params.controller_spec = controller.spec;
    params.base_size = controller.base.size();
    params.n_latent = controller.n_latent;
    params.output_dim = controller.output_dim;
    params.seed = seed;

    const auto d = static_cast<Eigen::Index>(config.d_model);
    const auto dff = static_cast<Eigen::Index>(config.d_ff);
    const auto odim = static_cast<Eigen::Index>(controller.output_dim);

    params.token_embeddings.resize(odim, d);
    params.position_embeddings.resize(static_cast<Eigen::Index>(config.max_len), d);
    params.layers.resize(config.n_layers);
    for (auto& layer : params.layers) {
        layer.wq.resize(d, d);
        layer.bq.resize(1, d);
        layer.wk.resize(d, d);
        layer.bk.resize(1, d);
        layer.wv.resize(d, d);
        layer.bv.resize(1, d);
        layer.wo.resize(d, d);
        layer.bo.resize(1, d);
        layer.ln1_gain.resize(1, d);
        layer.ln1_bias.resize(1, d);
        layer.w_ff1.resize(d, dff);
        layer.b_ff1.resize(1, dff);
        layer.w_ff2.resize(dff, d);
        layer.b_ff2.resize(1, d);
        layer.ln2_gain.resize(1, d);
        layer.ln2_bias.resize(1, d);
    }
    params.mlm_w.resize(d, d);
    params.mlm_b.resize(1, d);
    if (!config.tie_embeddings) params.mlm_projection.resize(odim, d);
    params.mlm_bias.resize(1, odim);

    Rng rng(seed);
    for_each_tensor(params, [&](const char* name, Eigen::MatrixXd& m) { fill_tensor(name, m, rng); });

    // Start the head selective. With this init the logit a token gives its
    // own dimension grows like 0.035 * d_model while the off-diagonal noise
    // is far smaller, so a bias around two thirds of the diagonal keeps a
    // token's own dimension alive and almost nothing else. Latent dimensions
    // get a milder offset; they have no surface token, so they must stay
    // broadly reachable for gradients to shape them.
    const double width = static_cast<double>(config.d_model);
    for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(params.base_size); ++j) {
        params.mlm_bias(0, j) = -0.023 * width;
    }
    for (Eigen::Index j = params.base_size; j < static_cast<Eigen::Index>(params.output_dim); ++j) {
        params.mlm_bias(0, j) = -0.008 * width;
    }
    return params;
}

EncoderVars register_params(ad::Tape& tape, const EncoderParams& params, bool requires_grad) {
    EncoderVars vars;
    auto reg = [&](const Eigen::MatrixXd& m) {
        ad::Var v = tape.leaf(m, requires_grad);
        vars.flat.push_back(v);
        return v;
    };
    vars.token_embeddings = reg(params.token_embeddings);
    vars.position_embeddings = reg(params.position_embeddings);
    vars.layers.reserve(params.layers.size());
    for (const auto& layer : params.layers) {
        EncoderVars::Layer lv;
        lv.wq = reg(layer.wq);
        lv.bq = reg(layer.bq);
        lv.wk = reg(layer.wk);
        lv.bk = reg(layer.bk);
        lv.wv = reg(layer.wv);
        lv.bv = reg(layer.bv);
        lv.wo = reg(layer.wo);
        lv.bo = reg(layer.bo);
        lv.ln1_gain = reg(layer.ln1_gain);
        lv.ln1_bias = reg(layer.ln1_bias);
        lv.w_ff1 = reg(layer.w_ff1);
        lv.b_ff1 = reg(layer.b_ff1);
        lv.w_ff2 = reg(layer.w_ff2);
        lv.b_ff2 = reg(layer.b_ff2);
        lv.ln2_gain = reg(layer.ln2_gain);
        lv.ln2_bias = reg(layer.ln2_bias);
        vars.layers.push_back(lv);
    }
    vars.mlm_w = reg(params.mlm_w);
    vars.mlm_b = reg(params.mlm_b);
    if (!params.config.tie_embeddings) vars.mlm_projection = reg(params.mlm_projection);
    vars.mlm_bias = reg(params.mlm_bias);
    return vars;
}

ad::Var transformer_forward(ad::Tape& tape, const EncoderVars& vars, const EncoderParams& params,
                            const TokenSequence& tokens) {
    const auto& config = params.config;
    const std::size_t n = tokens.ids.size();
    if (n > config.max_len) {
        throw std::runtime_error("sequence of length " + std::to_string(n) +
                                 " exceeds max_len=" + std::to_string(config.max_len));
    }
    if (n == 0) throw std::runtime_error("cannot encode an empty token sequence");
    for (TokenId id : tokens.ids) {
        if (id >= params.base_size) {
            throw std::runtime_error("input token id " + std::to_string(id) +
                                     " outside the base vocabulary");
        }
    }

    std::vector<int> positions(n);
    for (std::size_t i = 0; i < n; ++i) positions[i] = static_cast<int>(i);

    ad::Var h = tape.add(tape.gather_rows(vars.token_embeddings, id_rows(tokens)),
                         tape.gather_rows(vars.position_embeddings, positions));

    const int dh = static_cast<int>(config.d_model / config.n_heads);
    const double attn_scale = 1.0 / std::sqrt(static_cast<double>(dh));
    for (const auto& layer : vars.layers) {
        ad::Var q = tape.add_rowvec(tape.matmul(h, layer.wq), layer.bq);
        ad::Var k = tape.add_rowvec(tape.matmul(h, layer.wk), layer.bk);
        ad::Var v = tape.add_rowvec(tape.matmul(h, layer.wv), layer.bv);
        std::vector<ad::Var> heads;
        heads.reserve(config.n_heads);
        for (std::uint32_t head = 0; head < config.n_heads; ++head) {
            int start = static_cast<int>(head) * dh;
            ad::Var qh = tape.slice_cols(q, start, dh);
            ad::Var kh = tape.slice_cols(k, start, dh);
            ad::Var vh = tape.slice_cols(v, start, dh);
            ad::Var attn = tape.softmax_rows(tape.scale(tape.matmul_nt(qh, kh), attn_scale));
            heads.push_back(tape.matmul(attn, vh));
        }
        ad::Var merged = config.n_heads == 1 ? heads[0] : tape.hconcat(heads);
        ad::Var attn_out = tape.add_rowvec(tape.matmul(merged, layer.wo), layer.bo);
        h = tape.layer_norm(tape.add(h, attn_out), layer.ln1_gain, layer.ln1_bias);

        ad::Var ff = tape.add_rowvec(tape.matmul(h, layer.w_ff1), layer.b_ff1);
        ff = tape.gelu(ff);
        ff = tape.add_rowvec(tape.matmul(ff, layer.w_ff2), layer.b_ff2);
        h = tape.layer_norm(tape.add(h, ff), layer.ln2_gain, layer.ln2_bias);
    }
    return h;
}

ad::Var mlm_logits_forward(ad::Tape& tape, const EncoderVars& vars, const EncoderParams& params,
                           ad::Var hidden) {
    ad::Var t = tape.add_rowvec(tape.matmul(hidden, vars.mlm_w), vars.mlm_b);
    t = apply_activation(tape, t, params.config.mlm_activation);
    ad::Var proj = params.config.tie_embeddings ? vars.token_embeddings : vars.mlm_projection;
    return tape.add_rowvec(tape.matmul_nt(t, proj), vars.mlm_bias);
}

ad::Var pooled_forward(ad::Tape& tape, ad::Var logits, const Eigen::RowVectorXd& mask01) {
    ad::Var pooled = tape.colwise_max(tape.log1p(tape.relu(logits)));
    return tape.scale_columns(pooled, mask01);
}

Eigen::RowVectorXd mask_to_row(const std::vector<std::uint8_t>& mask) {
    Eigen::RowVectorXd row(static_cast<Eigen::Index>(mask.size()));
    for (std::size_t j = 0; j < mask.size(); ++j) row(static_cast<Eigen::Index>(j)) = mask[j] ? 1.0 : 0.0;
    return row;
}

Eigen::MatrixXd contextual_embeddings(const EncoderParams& params, const TokenSequence& tokens) {
    ad::Tape tape;
    EncoderVars vars = register_params(tape, params, false);
    return tape.value(transformer_forward(tape, vars, params, tokens));
}

Eigen::MatrixXd mlm_logits(const EncoderParams& params, const Eigen::MatrixXd& hidden) {
    if (hidden.cols() != static_cast<Eigen::Index>(params.config.d_model)) {
        throw std::runtime_error("mlm_logits: hidden width does not match d_model");
    }
    ad::Tape tape;
    EncoderVars vars = register_params(tape, params, false);
    return tape.value(mlm_logits_forward(tape, vars, params, tape.constant(hidden)));
}

SparseVector pool_sparse(const Eigen::MatrixXd& logits, const std::vector<std::uint8_t>& mask) {
    if (static_cast<Eigen::Index>(mask.size()) != logits.cols()) {
        throw std::runtime_error("pool_sparse: mask length does not match logit columns");
    }
    SparseVector out;
    out.source_len = static_cast<std::uint32_t>(logits.rows());
    for (Eigen::Index j = 0; j < logits.cols(); ++j) {
        if (!mask[static_cast<std::size_t>(j)]) continue;
        double best = 0.0;
        for (Eigen::Index i = 0; i < logits.rows(); ++i) {
            double w = std::log1p(std::max(logits(i, j), 0.0));
            if (w > best) best = w;
        }
        if (best > 0.0) out.entries.emplace_back(static_cast<std::uint32_t>(j), best);
    }
    return out;
}

SparseVector encode_tokens(const EncoderParams& params, const std::vector<std::uint8_t>& mask,
                           const TokenSequence& tokens) {
    ad::Tape tape;
    EncoderVars vars = register_params(tape, params, false);
    ad::Var hidden = transformer_forward(tape, vars, params, tokens);
    ad::Var logits = mlm_logits_forward(tape, vars, params, hidden);
    return pool_sparse(tape.value(logits), mask);
}

SparseVector encode(const EncoderParams& params, const VocabularyController& controller,
                    const std::string& text) {
    if (controller.output_dim != params.output_dim) {
        throw std::runtime_error("encode: controller output_dim does not match encoder params");
    }
    TokenSequence tokens = tokenize(text, controller.base, params.config.max_len);
    return encode_tokens(params, allowed_mask(controller), tokens);
}

Eigen::VectorXd encode_dense_tokens(const EncoderParams& params, const TokenSequence& tokens) {
    ad::Tape tape;
    EncoderVars vars = register_params(tape, params, false);
    ad::Var hidden = transformer_forward(tape, vars, params, tokens);
    return tape.value(hidden).row(0).transpose();
}

Eigen::VectorXd encode_dense(const EncoderParams& params, const BaseVocabulary& vocab,
                             const std::string& text) {
    return encode_dense_tokens(params, tokenize(text, vocab, params.config.max_len));
}

bool params_equal(const EncoderParams& a, const EncoderParams& b) {
    if (a.config.d_model != b.config.d_model || a.config.n_layers != b.config.n_layers ||
        a.config.n_heads != b.config.n_heads || a.config.d_ff != b.config.d_ff ||
        a.config.max_len != b.config.max_len || a.config.tie_embeddings != b.config.tie_embeddings ||
        a.config.mlm_activation != b.config.mlm_activation || a.output_dim != b.output_dim ||
        a.base_size != b.base_size || a.n_latent != b.n_latent) {
        return false;
    }
    std::vector<const Eigen::MatrixXd*> ta, tb;
    for_each_tensor(a, [&](const char*, const Eigen::MatrixXd& m) { ta.push_back(&m); });
    for_each_tensor(b, [&](const char*, const Eigen::MatrixXd& m) { tb.push_back(&m); });
    if (ta.size() != tb.size()) return false;
    for (std::size_t i = 0; i < ta.size(); ++i) {
        if (ta[i]->rows() != tb[i]->rows() || ta[i]->cols() != tb[i]->cols()) return false;
        std::size_t bytes = static_cast<std::size_t>(ta[i]->size()) * sizeof(double);
        if (std::memcmp(ta[i]->data(), tb[i]->data(), bytes) != 0) return false;
    }
    return true;
}

void save_params(const EncoderParams& params, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write params file: " + path);
    out.write(kMagic, sizeof(kMagic));
    write_u32(out, kFormatVersion);
    write_u32(out, params.config.d_model);
    write_u32(out, params.config.n_layers);
    write_u32(out, params.config.n_heads);
    write_u32(out, params.config.d_ff);
    write_u32(out, params.config.max_len);
    write_u8(out, params.config.tie_embeddings ? 1 : 0);
    write_u8(out, static_cast<std::uint8_t>(params.config.mlm_activation));
    write_u8(out, static_cast<std::uint8_t>(params.controller_spec.kind));
    write_u32(out, params.controller_spec.k);
    write_u64(out, params.controller_spec.seed);
    write_u32(out, params.base_size);
    write_u32(out, params.n_latent);
    write_u32(out, params.output_dim);
    write_u64(out, params.seed);
    for_each_tensor(params, [&](const char*, const Eigen::MatrixXd& m) { write_matrix(out, m); });
    if (!out) throw std::runtime_error("write failed: " + path);
}

EncoderParams load_params(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open params file: " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw std::runtime_error("not an encoder params file: " + path);
    }
    std::uint32_t version = read_u32(in);
    if (version != kFormatVersion) {
        throw std::runtime_error("unsupported params version " + std::to_string(version));
    }
    EncoderParams params;
    params.config.d_model = read_u32(in);
    params.config.n_layers = read_u32(in);
    params.config.n_heads = read_u32(in);
    params.config.d_ff = read_u32(in);
    params.config.max_len = read_u32(in);
    params.config.tie_embeddings = read_u8(in) != 0;
    params.config.mlm_activation = static_cast<Activation>(read_u8(in));
    params.controller_spec.kind = static_cast<ControllerKind>(read_u8(in));
    params.controller_spec.k = read_u32(in);
    params.controller_spec.seed = read_u64(in);
    params.base_size = read_u32(in);
    params.n_latent = read_u32(in);
    params.output_dim = read_u32(in);
    params.seed = read_u64(in);
    params.layers.resize(params.config.n_layers);
    for_each_tensor(params, [&](const char*, Eigen::MatrixXd& m) { m = read_matrix(in); });
    if (!in) throw std::runtime_error("truncated params file: " + path);
    return params;
}

const char* activation_name(Activation a) {
    switch (a) {
        case Activation::gelu: return "gelu";
        case Activation::relu: return "relu";
        case Activation::identity: return "identity";
    }
    return "?";
}

Activation parse_activation(const std::string& name) {
    if (name == "gelu") return Activation::gelu;
    if (name == "relu") return Activation::relu;
    if (name == "identity") return Activation::identity;
    throw std::runtime_error("unknown activation '" + name + "'");
}

}  // namespace splade
