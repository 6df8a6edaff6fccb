#pragma once

// Micro conditioned decoder-only language model.
//
// Input layout for a caption w_1..w_T (P = 4 with conditioning, 1 without):
//
//   row 0        scene vector projected into embedding space
//   rows 1..3    condition embeddings for L, D, U
//   row P        <bos>
//   rows P+1..   w_1 .. w_T
//
// plus a learned positional embedding per row. Blocks are pre-LayerNorm
// causal self-attention followed by a GELU feed-forward layer. Next-token
// logits are read out only at rows P..P+T, predicting w_1..w_T, <eos>; the
// prefix rows never carry a loss term.
//
// Scalar type is a template parameter so the same code runs in float for
// training and in double for gradient checking.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <type_traits>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "captionsmiths/corpus.hpp"
#include "captionsmiths/encoder.hpp"
#include "captionsmiths/error.hpp"
#include "captionsmiths/provenance.hpp"
#include "captionsmiths/rng.hpp"
#include "json.hpp"

namespace captionsmiths {

enum class ConditioningMode { None, Continuous, Discrete };

inline std::string_view to_string(ConditioningMode m) {
    switch (m) {
        case ConditioningMode::None: return "none";
        case ConditioningMode::Continuous: return "continuous";
        case ConditioningMode::Discrete: return "discrete";
    }
    return "?";
}

inline ConditioningMode parse_conditioning_mode(std::string_view s) {
    if (s == "none") return ConditioningMode::None;
    if (s == "continuous") return ConditioningMode::Continuous;
    if (s == "discrete") return ConditioningMode::Discrete;
    throw ArgumentError("unknown conditioning mode " + std::string(s));
}

inline constexpr std::string_view kPadToken = "<pad>";
inline constexpr std::string_view kBosToken = "<bos>";
inline constexpr std::string_view kEosToken = "<eos>";
inline constexpr int kPadId = 0;
inline constexpr int kBosId = 1;
inline constexpr int kEosId = 2;

struct ModelConfig {
    std::size_t d = 64;
    std::size_t n_layers = 2;
    std::size_t n_heads = 2;
    std::size_t ff_width = 128;
    std::size_t max_len = 64;
    std::vector<Token> vocab;             // ids 0..2 are <pad>, <bos>, <eos>
    std::vector<Token> scene_entities;    // scene-vector slots keyed by fine name
    std::vector<Token> scene_attributes;  // following slots, one per attribute word
    ConditioningMode mode = ConditioningMode::Continuous;
    std::size_t k = 5;  // bins per property in discrete mode
    std::uint64_t seed = 0;
    double init_std = 0.02;

    std::size_t prefix_len() const { return mode == ConditioningMode::None ? 1 : 4; }
    /// Longest input: prefix + <bos> + max_len tokens.
    std::size_t positions() const { return max_len + 5; }
    std::size_t scene_width() const { return scene_entities.size() + scene_attributes.size(); }
    std::size_t head_dim() const { return d / n_heads; }

    void validate() const {
        if (d == 0 || n_heads == 0 || d % n_heads != 0) throw ArgumentError("d must be a positive multiple of n_heads");
        if (n_layers == 0 || ff_width == 0) throw ArgumentError("n_layers and ff_width must be positive");
        if (max_len < 50) throw ArgumentError("max_len must be >= 50");
        if (vocab.size() < 4 || vocab[kPadId] != kPadToken || vocab[kBosId] != kBosToken ||
            vocab[kEosId] != kEosToken) {
            throw ArgumentError("vocab must start with <pad>, <bos>, <eos> and hold at least one word");
        }
        if (scene_width() == 0) throw ArgumentError("scene vocabulary is empty");
        if (mode == ConditioningMode::Discrete && k < 2) throw ArgumentError("discrete mode needs k >= 2");
    }

    nlohmann::json to_json() const {
        return {{"d", d},
                {"n_layers", n_layers},
                {"n_heads", n_heads},
                {"ff_width", ff_width},
                {"max_len", max_len},
                {"vocab", vocab},
                {"scene_entities", scene_entities},
                {"scene_attributes", scene_attributes},
                {"conditioning_mode", to_string(mode)},
                {"k", k},
                {"seed", seed},
                {"init_std", init_std}};
    }

    static ModelConfig from_json(const nlohmann::json& j) {
        try {
            ModelConfig c;
            c.d = j.at("d").get<std::size_t>();
            c.n_layers = j.at("n_layers").get<std::size_t>();
            c.n_heads = j.at("n_heads").get<std::size_t>();
            c.ff_width = j.at("ff_width").get<std::size_t>();
            c.max_len = j.at("max_len").get<std::size_t>();
            c.vocab = j.at("vocab").get<std::vector<Token>>();
            c.scene_entities = j.at("scene_entities").get<std::vector<Token>>();
            c.scene_attributes = j.at("scene_attributes").get<std::vector<Token>>();
            c.mode = parse_conditioning_mode(j.at("conditioning_mode").get<std::string>());
            c.k = j.at("k").get<std::size_t>();
            c.seed = j.at("seed").get<std::uint64_t>();
            c.init_std = j.at("init_std").get<double>();
            return c;
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(std::string("model config: ") + e.what());
        } catch (const ArgumentError& e) {
            throw FormatError(std::string("model config: ") + e.what());
        }
    }
};

/// Fills the word vocabulary (sorted corpus tokens after the specials) and
/// the scene-vector slots from `corpus`.
inline ModelConfig config_for_corpus(const CorpusManifest& corpus, ModelConfig base) {
    std::set<Token> words, entities, attributes;
    for (const auto& c : corpus.captions) words.insert(c.tokens.begin(), c.tokens.end());
    for (const auto& [id, s] : corpus.scenes) {
        for (const auto& e : s.entities) {
            entities.insert(e.fine_name);
            attributes.insert(e.attributes.begin(), e.attributes.end());
        }
    }
    base.vocab = {Token(kPadToken), Token(kBosToken), Token(kEosToken)};
    base.vocab.insert(base.vocab.end(), words.begin(), words.end());
    base.scene_entities.assign(entities.begin(), entities.end());
    base.scene_attributes.assign(attributes.begin(), attributes.end());
    return base;
}

/// Greedy argmax or temperature sampling.
struct Decode {
    enum class Kind { Greedy, Sample };
    Kind kind = Kind::Greedy;
    double temperature = 1.0;
    std::uint64_t seed = 0;

    static Decode greedy() { return {}; }
    static Decode sample(double temperature, std::uint64_t seed) { return {Kind::Sample, temperature, seed}; }
};

struct GenerationRequest {
    Scene scene;
    std::array<double, 3> cond{0.5, 0.5, 0.5};  // (norm_L, norm_D, norm_U)
    Decode decode;
    std::size_t max_tokens = 0;  // 0 means the model's max_len
};

template <class S>
class Model {
public:
    using Mat = Matrix<S>;
    using Row = RowVector<S>;
    using Col = Eigen::Matrix<S, Eigen::Dynamic, 1>;

    /// One training/evaluation sample in id space.
    struct Example {
        std::vector<int> tokens;  // word ids, no specials
        Row scene;                // scene vector
        std::array<double, 3> cond{0.0, 0.0, 0.0};
    };

    struct BlockIndex {
        std::size_t ln1_g, ln1_b, wq, wk, wv, wo, ln2_g, ln2_b, w1, b1, w2, b2;
    };

    explicit Model(ModelConfig config) : config_(std::move(config)) {
        config_.validate();
        for (std::size_t i = 0; i < config_.vocab.size(); ++i) {
            if (!token_ids_.emplace(config_.vocab[i], static_cast<int>(i)).second) {
                throw ArgumentError("duplicate vocab entry " + config_.vocab[i]);
            }
        }
        for (std::size_t i = 0; i < config_.scene_entities.size(); ++i) {
            entity_slots_.emplace(config_.scene_entities[i], i);
        }
        for (std::size_t i = 0; i < config_.scene_attributes.size(); ++i) {
            attribute_slots_.emplace(config_.scene_attributes[i], config_.scene_entities.size() + i);
        }
        allocate_and_init();
    }

    const ModelConfig& config() const noexcept { return config_; }
    std::vector<Mat>& tensors() noexcept { return tensors_; }
    const std::vector<Mat>& tensors() const noexcept { return tensors_; }
    const std::vector<std::string>& tensor_names() const noexcept { return names_; }
    std::size_t vocab_size() const { return config_.vocab.size(); }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& t : tensors_) n += static_cast<std::size_t>(t.size());
        return n;
    }

    /// Parameters spent on conditioning one property: 2d continuous, kd discrete.
    std::size_t condition_parameter_count() const {
        switch (config_.mode) {
            case ConditioningMode::Continuous: return captionsmiths::parameter_count(endpoint_pair(Property::Length));
            case ConditioningMode::Discrete: return captionsmiths::parameter_count(codebook(Property::Length));
            case ConditioningMode::None: return 0;
        }
        return 0;
    }

    std::vector<Mat> zero_grads() const {
        std::vector<Mat> g;
        g.reserve(tensors_.size());
        for (const auto& t : tensors_) g.push_back(Mat::Zero(t.rows(), t.cols()));
        return g;
    }

    std::size_t tensor_index(std::string_view name) const {
        for (std::size_t i = 0; i < names_.size(); ++i) {
            if (names_[i] == name) return i;
        }
        throw ArgumentError("no tensor named " + std::string(name));
    }

    EndpointPair<S> endpoint_pair(Property p) const {
        if (config_.mode != ConditioningMode::Continuous) throw ArgumentError("model is not continuous");
        const auto i = cond_index_[static_cast<std::size_t>(p)];
        return {p, tensors_[i], tensors_[i + 1]};
    }

    DiscreteCodebook<S> codebook(Property p) const {
        if (config_.mode != ConditioningMode::Discrete) throw ArgumentError("model is not discrete");
        return {p, tensors_[cond_index_[static_cast<std::size_t>(p)]]};
    }

    int token_id(const Token& w) const {
        const auto it = token_ids_.find(w);
        if (it == token_ids_.end()) throw ArgumentError("token not in model vocabulary: " + w);
        return it->second;
    }

    /// Multi-hot over (entity fine names, attribute words).
    Row scene_vector(const Scene& scene) const {
        Row v = Row::Zero(static_cast<Eigen::Index>(config_.scene_width()));
        for (const auto& e : scene.entities) {
            const auto it = entity_slots_.find(e.fine_name);
            if (it == entity_slots_.end()) throw ArgumentError("scene entity not in model vocabulary: " + e.fine_name);
            v[static_cast<Eigen::Index>(it->second)] = S(1);
            for (const auto& a : e.attributes) {
                const auto at = attribute_slots_.find(a);
                if (at == attribute_slots_.end()) throw ArgumentError("scene attribute not in model vocabulary: " + a);
                v[static_cast<Eigen::Index>(at->second)] = S(1);
            }
        }
        return v;
    }

    Example make_example(const Caption& caption, const Scene& scene, const std::array<double, 3>& cond) const {
        if (caption.tokens.size() > config_.max_len) {
            throw ArgumentError("caption " + caption.id + " longer than max_len");
        }
        for (const double s : cond) check_unit_interval(s);
        Example ex;
        ex.tokens.reserve(caption.tokens.size());
        for (const auto& w : caption.tokens) ex.tokens.push_back(token_id(w));
        ex.scene = scene_vector(scene);
        ex.cond = cond;
        return ex;
    }

    /// Condition embedding of property p at scalar s, through the configured encoder.
    Row condition_embedding(Property p, double s) const {
        const auto i = cond_index_[static_cast<std::size_t>(p)];
        if (config_.mode == ConditioningMode::Continuous) return interpolate<S>(s, tensors_[i], tensors_[i + 1]);
        if (config_.mode == ConditioningMode::Discrete) {
            return tensors_[i].row(static_cast<Eigen::Index>(bin_index(s, config_.k)));
        }
        throw ArgumentError("model has no conditioning");
    }

    /// Embedded input sequence (prefix + <bos> + tokens) with positions added.
    Mat build_input(const Example& ex) const {
        const std::size_t p = config_.prefix_len();
        const std::size_t n = p + 1 + ex.tokens.size();
        if (n > config_.positions()) throw ArgumentError("sequence longer than the positional table");
        Mat x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(config_.d));
        x.row(0) = ex.scene * tensors_[idx_scene_];
        if (config_.mode != ConditioningMode::None) {
            for (const Property prop : kProperties) {
                const auto r = static_cast<Eigen::Index>(1 + static_cast<int>(prop));
                x.row(r) = condition_embedding(prop, ex.cond[static_cast<std::size_t>(prop)]);
            }
        }
        x.row(static_cast<Eigen::Index>(p)) = tensors_[idx_tok_].row(kBosId);
        for (std::size_t t = 0; t < ex.tokens.size(); ++t) {
            x.row(static_cast<Eigen::Index>(p + 1 + t)) = tensors_[idx_tok_].row(ex.tokens[t]);
        }
        x += tensors_[idx_pos_].topRows(static_cast<Eigen::Index>(n));
        return x;
    }

    /// Next-token logits at rows <bos>..w_T, shape (T+1) x |vocab|.
    Mat logits(const Example& ex) const {
        Forward f;
        forward(ex, f, false);
        return readout(f.hf.bottomRows(static_cast<Eigen::Index>(ex.tokens.size() + 1)));
    }

    /// Mean next-token cross-entropy of one caption, <eos> included.
    double loss(const Example& ex) const {
        Forward f;
        forward(ex, f, false);
        return loss_from(ex, f, nullptr);
    }

    /// Same as loss(); adds d(loss)/d(params) into `grads`.
    double loss_and_grad(const Example& ex, std::vector<Mat>& grads) const {
        Forward f;
        forward(ex, f, true);
        Mat dlogits;
        const double l = loss_from(ex, f, &dlogits);
        backward(ex, f, dlogits, grads);
        return l;
    }

    double batch_loss(std::span<const Example> batch) const {
        if (batch.empty()) throw ArgumentError("empty batch");
        double total = 0.0;
        for (const auto& ex : batch) total += loss(ex);
        return total / static_cast<double>(batch.size());
    }

    /// Mean loss over the batch; `grads` receives the gradient of that mean.
    double batch_loss_and_grad(std::span<const Example> batch, std::vector<Mat>& grads) const {
        if (batch.empty()) throw ArgumentError("empty batch");
        std::vector<Mat> acc = zero_grads();
        double total = 0.0;
        for (const auto& ex : batch) total += loss_and_grad(ex, acc);
        const S inv = S(1) / static_cast<S>(batch.size());
        for (std::size_t i = 0; i < acc.size(); ++i) grads[i] += acc[i] * inv;
        return total / static_cast<double>(batch.size());
    }

    /// Logits for the token following `ex.tokens`.
    Row next_logits(const Example& ex) const {
        Forward f;
        forward(ex, f, false);
        return readout(f.hf.bottomRows(1));
    }

    /// Autoregressive decoding from the prefix and <bos>. Stops at <eos> or
    /// max_tokens; <pad> and <bos> are never emitted.
    Caption generate(const GenerationRequest& req) const {
        const std::size_t limit = req.max_tokens == 0 ? config_.max_len : req.max_tokens;
        if (limit > config_.max_len) throw ArgumentError("max_tokens exceeds max_len");
        if (req.decode.kind == Decode::Kind::Sample && !(req.decode.temperature > 0.0)) {
            throw ArgumentError("sampling temperature must be positive");
        }
        Example ex;
        ex.scene = scene_vector(req.scene);
        for (const double s : req.cond) check_unit_interval(s);
        ex.cond = req.cond;
        Rng rng(req.decode.seed, 7);
        Caption out;
        out.scene_id = req.scene.id;
        while (ex.tokens.size() < limit) {
            Row z = next_logits(ex);
            z[kPadId] = -std::numeric_limits<S>::infinity();
            z[kBosId] = -std::numeric_limits<S>::infinity();
            const int next = req.decode.kind == Decode::Kind::Greedy ? argmax(z) : sample(z, req.decode.temperature, rng);
            if (next == kEosId) break;
            ex.tokens.push_back(next);
        }
        for (const int id : ex.tokens) out.tokens.push_back(config_.vocab[static_cast<std::size_t>(id)]);
        out.text = join_tokens(out.tokens);
        return out;
    }

    /// Copies parameters from another scalar type (used for float <-> double).
    template <class T>
    void assign_from(const Model<T>& other) {
        if (other.tensors().size() != tensors_.size()) throw ArgumentError("tensor layout mismatch");
        for (std::size_t i = 0; i < tensors_.size(); ++i) tensors_[i] = other.tensors()[i].template cast<S>();
    }

    const BlockIndex& block_index(std::size_t layer) const { return blocks_.at(layer); }
    std::size_t scene_projection_index() const { return idx_scene_; }
    std::size_t token_embedding_index() const { return idx_tok_; }
    std::size_t position_embedding_index() const { return idx_pos_; }
    std::size_t output_weight_index() const { return idx_wout_; }
    std::size_t output_bias_index() const { return idx_bout_; }

private:
    static constexpr S kLnEps = S(1e-5);

    struct LnCache {
        Mat xhat;
        Col rstd;
    };

    struct BlockCache {
        LnCache ln1;
        Mat h, q, k, v, o;
        std::vector<Mat> att;
        Mat x_mid;
        LnCache ln2;
        Mat h2, z, g;
    };

    struct Forward {
        std::vector<BlockCache> blocks;
        LnCache lnf;
        Mat hf;
    };

    std::size_t add(std::string name, std::size_t rows, std::size_t cols) {
        names_.push_back(std::move(name));
        tensors_.push_back(Mat::Zero(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)));
        return tensors_.size() - 1;
    }

    void allocate_and_init() {
        const auto& c = config_;
        idx_tok_ = add("tok_emb", c.vocab.size(), c.d);
        idx_pos_ = add("pos_emb", c.positions(), c.d);
        idx_scene_ = add("scene_proj", c.scene_width(), c.d);
        for (const Property p : kProperties) {
            const std::string tag(to_string(p));
            if (c.mode == ConditioningMode::Continuous) {
                cond_index_[static_cast<std::size_t>(p)] = add("cond." + tag + ".e0", 1, c.d);
                add("cond." + tag + ".e1", 1, c.d);
            } else if (c.mode == ConditioningMode::Discrete) {
                cond_index_[static_cast<std::size_t>(p)] = add("cond." + tag + ".codebook", c.k, c.d);
            }
        }
        for (std::size_t l = 0; l < c.n_layers; ++l) {
            const std::string pre = "block" + std::to_string(l) + ".";
            BlockIndex b{};
            b.ln1_g = add(pre + "ln1.g", 1, c.d);
            b.ln1_b = add(pre + "ln1.b", 1, c.d);
            b.wq = add(pre + "attn.wq", c.d, c.d);
            b.wk = add(pre + "attn.wk", c.d, c.d);
            b.wv = add(pre + "attn.wv", c.d, c.d);
            b.wo = add(pre + "attn.wo", c.d, c.d);
            b.ln2_g = add(pre + "ln2.g", 1, c.d);
            b.ln2_b = add(pre + "ln2.b", 1, c.d);
            b.w1 = add(pre + "ff.w1", c.d, c.ff_width);
            b.b1 = add(pre + "ff.b1", 1, c.ff_width);
            b.w2 = add(pre + "ff.w2", c.ff_width, c.d);
            b.b2 = add(pre + "ff.b2", 1, c.d);
            blocks_.push_back(b);
        }
        idx_lnf_g_ = add("lnf.g", 1, c.d);
        idx_lnf_b_ = add("lnf.b", 1, c.d);
        idx_wout_ = add("out.w", c.d, c.vocab.size());
        idx_bout_ = add("out.b", 1, c.vocab.size());

        Rng rng(c.seed, 101);
        const auto fill = [&](std::size_t i, double stddev) {
            Mat& t = tensors_[i];
            for (Eigen::Index j = 0; j < t.size(); ++j) t.data()[j] = static_cast<S>(stddev * rng.normal());
        };
        const double residual_std = c.init_std / std::sqrt(2.0 * static_cast<double>(c.n_layers));
        fill(idx_tok_, c.init_std);
        fill(idx_pos_, c.init_std);
        fill(idx_scene_, c.init_std);
        // Condition embeddings share the token-embedding scale.
        for (const Property p : kProperties) {
            if (c.mode == ConditioningMode::Continuous) {
                const auto pair = make_endpoint_pair<S>(p, c.d, c.init_std, rng);
                tensors_[cond_index_[static_cast<std::size_t>(p)]] = pair.e0;
                tensors_[cond_index_[static_cast<std::size_t>(p)] + 1] = pair.e1;
            } else if (c.mode == ConditioningMode::Discrete) {
                tensors_[cond_index_[static_cast<std::size_t>(p)]] = make_codebook<S>(p, c.k, c.d, c.init_std, rng).embeddings;
            }
        }
        for (const auto& b : blocks_) {
            tensors_[b.ln1_g].setOnes();
            tensors_[b.ln2_g].setOnes();
            fill(b.wq, c.init_std);
            fill(b.wk, c.init_std);
            fill(b.wv, c.init_std);
            fill(b.wo, residual_std);
            fill(b.w1, c.init_std);
            fill(b.w2, residual_std);
        }
        tensors_[idx_lnf_g_].setOnes();
        fill(idx_wout_, c.init_std);
    }

    static Mat layer_norm(const Mat& x, const Mat& g, const Mat& b, LnCache& cache) {
        const auto n = x.rows();
        cache.xhat.resize(n, x.cols());
        cache.rstd.resize(n);
        for (Eigen::Index r = 0; r < n; ++r) {
            const S mu = x.row(r).mean();
            const auto xc = (x.row(r).array() - mu).eval();
            const S var = xc.square().mean();
            const S rstd = S(1) / std::sqrt(var + kLnEps);
            cache.rstd[r] = rstd;
            cache.xhat.row(r) = xc * rstd;
        }
        return ((cache.xhat.array().rowwise() * g.row(0).array()).rowwise() + b.row(0).array()).matrix();
    }

    static Mat layer_norm_backward(const Mat& dy, const Mat& g, const LnCache& cache, Mat& dg, Mat& db) {
        dg += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
        db += dy.colwise().sum();
        const Mat dxhat = (dy.array().rowwise() * g.row(0).array()).matrix();
        Mat dx(dy.rows(), dy.cols());
        const S inv_d = S(1) / static_cast<S>(dy.cols());
        for (Eigen::Index r = 0; r < dy.rows(); ++r) {
            const S m1 = dxhat.row(r).sum() * inv_d;
            const S m2 = dxhat.row(r).dot(cache.xhat.row(r)) * inv_d;
            dx.row(r) = (cache.rstd[r] * (dxhat.row(r).array() - m1 - cache.xhat.row(r).array() * m2)).matrix();
        }
        return dx;
    }

    static constexpr S kGeluC = S(0.7978845608028654);  // sqrt(2 / pi)
    static constexpr S kGeluA = S(0.044715);

    static Mat gelu(const Mat& z) {
        return z.unaryExpr([](S v) { return S(0.5) * v * (S(1) + std::tanh(kGeluC * (v + kGeluA * v * v * v))); });
    }

    static Mat gelu_grad(const Mat& z) {
        return z.unaryExpr([](S v) {
            const S t = std::tanh(kGeluC * (v + kGeluA * v * v * v));
            return S(0.5) * (S(1) + t) + S(0.5) * v * (S(1) - t * t) * kGeluC * (S(1) + S(3) * kGeluA * v * v);
        });
    }

    void forward(const Example& ex, Forward& f, bool keep) const {
        Mat x = build_input(ex);
        const auto n = x.rows();
        const auto dh = static_cast<Eigen::Index>(config_.head_dim());
        const S scale = S(1) / std::sqrt(static_cast<S>(dh));
        f.blocks.resize(blocks_.size());
        for (std::size_t l = 0; l < blocks_.size(); ++l) {
            const BlockIndex& b = blocks_[l];
            BlockCache& c = f.blocks[l];
            c.h = layer_norm(x, tensors_[b.ln1_g], tensors_[b.ln1_b], c.ln1);
            c.q.noalias() = c.h * tensors_[b.wq];
            c.k.noalias() = c.h * tensors_[b.wk];
            c.v.noalias() = c.h * tensors_[b.wv];
            c.o.resize(n, static_cast<Eigen::Index>(config_.d));
            c.att.resize(config_.n_heads);
            for (std::size_t hd = 0; hd < config_.n_heads; ++hd) {
                const auto off = static_cast<Eigen::Index>(hd) * dh;
                Mat s = (c.q.middleCols(off, dh) * c.k.middleCols(off, dh).transpose()) * scale;
                for (Eigen::Index i = 0; i < n; ++i) {
                    const S mx = s.row(i).head(i + 1).maxCoeff();
                    S sum = 0;
                    for (Eigen::Index j = 0; j <= i; ++j) {
                        s(i, j) = std::exp(s(i, j) - mx);
                        sum += s(i, j);
                    }
                    for (Eigen::Index j = 0; j <= i; ++j) s(i, j) /= sum;
                    for (Eigen::Index j = i + 1; j < n; ++j) s(i, j) = S(0);
                }
                c.o.middleCols(off, dh).noalias() = s * c.v.middleCols(off, dh);
                c.att[hd] = std::move(s);
            }
            x.noalias() += c.o * tensors_[b.wo];
            if (keep) c.x_mid = x;
            c.h2 = layer_norm(x, tensors_[b.ln2_g], tensors_[b.ln2_b], c.ln2);
            c.z = c.h2 * tensors_[b.w1];
            c.z.rowwise() += tensors_[b.b1].row(0);
            c.g = gelu(c.z);
            x.noalias() += c.g * tensors_[b.w2];
            x.rowwise() += tensors_[b.b2].row(0);
        }
        f.hf = layer_norm(x, tensors_[idx_lnf_g_], tensors_[idx_lnf_b_], f.lnf);
    }

    template <class Rows>
    Mat readout(const Rows& h) const {
        Mat z = h * tensors_[idx_wout_];
        z.rowwise() += tensors_[idx_bout_].row(0);
        return z;
    }

    /// Per-caption mean cross-entropy; fills d(loss)/d(logits) when asked.
    double loss_from(const Example& ex, const Forward& f, Mat* dlogits) const {
        const auto rows = static_cast<Eigen::Index>(ex.tokens.size() + 1);
        Mat z = readout(f.hf.bottomRows(rows));
        double total = 0.0;
        const S inv_rows = S(1) / static_cast<S>(rows);
        for (Eigen::Index r = 0; r < rows; ++r) {
            const int target = r < rows - 1 ? ex.tokens[static_cast<std::size_t>(r)] : kEosId;
            const S mx = z.row(r).maxCoeff();
            z.row(r).array() = (z.row(r).array() - mx).exp();
            const S sum = z.row(r).sum();
            total += static_cast<double>(std::log(sum) - std::log(z(r, target)));
            if (dlogits) {
                z.row(r) /= sum;
                z(r, target) -= S(1);
                z.row(r) *= inv_rows;
            }
        }
        if (dlogits) *dlogits = std::move(z);
        return total / static_cast<double>(rows);
    }

    void backward(const Example& ex, const Forward& f, const Mat& dlogits, std::vector<Mat>& grads) const {
        const std::size_t p = config_.prefix_len();
        const auto rows = dlogits.rows();
        const auto n = f.hf.rows();
        const auto dh = static_cast<Eigen::Index>(config_.head_dim());
        const S scale = S(1) / std::sqrt(static_cast<S>(dh));

        grads[idx_wout_].noalias() += f.hf.bottomRows(rows).transpose() * dlogits;
        grads[idx_bout_] += dlogits.colwise().sum();
        // Prefix rows get no direct loss gradient.
        Mat dhf = Mat::Zero(n, static_cast<Eigen::Index>(config_.d));
        dhf.bottomRows(rows).noalias() = dlogits * tensors_[idx_wout_].transpose();
        Mat dx = layer_norm_backward(dhf, tensors_[idx_lnf_g_], f.lnf, grads[idx_lnf_g_], grads[idx_lnf_b_]);

        for (std::size_t li = blocks_.size(); li-- > 0;) {
            const BlockIndex& b = blocks_[li];
            const BlockCache& c = f.blocks[li];
            // feed-forward
            grads[b.w2].noalias() += c.g.transpose() * dx;
            grads[b.b2] += dx.colwise().sum();
            Mat dz = (dx * tensors_[b.w2].transpose()).cwiseProduct(gelu_grad(c.z));
            grads[b.w1].noalias() += c.h2.transpose() * dz;
            grads[b.b1] += dz.colwise().sum();
            Mat dh2 = dz * tensors_[b.w1].transpose();
            dx += layer_norm_backward(dh2, tensors_[b.ln2_g], c.ln2, grads[b.ln2_g], grads[b.ln2_b]);
            // attention
            grads[b.wo].noalias() += c.o.transpose() * dx;
            const Mat d_o = dx * tensors_[b.wo].transpose();
            Mat dq(n, static_cast<Eigen::Index>(config_.d)), dk(n, dq.cols()), dv(n, dq.cols());
            for (std::size_t hd = 0; hd < config_.n_heads; ++hd) {
                const auto off = static_cast<Eigen::Index>(hd) * dh;
                const Mat& a = c.att[hd];
                const auto do_h = d_o.middleCols(off, dh);
                Mat da = do_h * c.v.middleCols(off, dh).transpose();
                dv.middleCols(off, dh).noalias() = a.transpose() * do_h;
                const Col row_dot = (da.array() * a.array()).rowwise().sum();
                const Mat ds = ((a.array() * (da.array().colwise() - row_dot.array())) * scale).matrix();
                dq.middleCols(off, dh).noalias() = ds * c.k.middleCols(off, dh);
                dk.middleCols(off, dh).noalias() = ds.transpose() * c.q.middleCols(off, dh);
            }
            grads[b.wq].noalias() += c.h.transpose() * dq;
            grads[b.wk].noalias() += c.h.transpose() * dk;
            grads[b.wv].noalias() += c.h.transpose() * dv;
            Mat dh_in = dq * tensors_[b.wq].transpose();
            dh_in.noalias() += dk * tensors_[b.wk].transpose();
            dh_in.noalias() += dv * tensors_[b.wv].transpose();
            dx += layer_norm_backward(dh_in, tensors_[b.ln1_g], c.ln1, grads[b.ln1_g], grads[b.ln1_b]);
        }

        // input embeddings
        grads[idx_pos_].topRows(n) += dx;
        grads[idx_scene_].noalias() += ex.scene.transpose() * dx.row(0);
        if (config_.mode != ConditioningMode::None) {
            for (const Property prop : kProperties) {
                const auto pi = static_cast<std::size_t>(prop);
                const auto r = static_cast<Eigen::Index>(1 + pi);
                const double s = ex.cond[pi];
                const auto i = cond_index_[pi];
                if (config_.mode == ConditioningMode::Continuous) {
                    grads[i] += static_cast<S>(1.0 - s) * dx.row(r);
                    grads[i + 1] += static_cast<S>(s) * dx.row(r);
                } else {
                    grads[i].row(static_cast<Eigen::Index>(bin_index(s, config_.k))) += dx.row(r);
                }
            }
        }
        grads[idx_tok_].row(kBosId) += dx.row(static_cast<Eigen::Index>(p));
        for (std::size_t t = 0; t < ex.tokens.size(); ++t) {
            grads[idx_tok_].row(ex.tokens[t]) += dx.row(static_cast<Eigen::Index>(p + 1 + t));
        }
    }

    static int argmax(const Row& z) {
        Eigen::Index best = 0;
        z.maxCoeff(&best);
        return static_cast<int>(best);
    }

    static int sample(const Row& z, double temperature, Rng& rng) {
        const S mx = z.maxCoeff();
        std::vector<double> w(static_cast<std::size_t>(z.size()));
        double total = 0.0;
        for (Eigen::Index i = 0; i < z.size(); ++i) {
            w[static_cast<std::size_t>(i)] = std::exp(static_cast<double>(z[i] - mx) / temperature);
            total += w[static_cast<std::size_t>(i)];
        }
        double u = rng.uniform() * total;
        for (std::size_t i = 0; i < w.size(); ++i) {
            u -= w[i];
            if (u < 0.0 && w[i] > 0.0) return static_cast<int>(i);
        }
        return argmax(z);
    }

    ModelConfig config_;
    std::unordered_map<Token, int> token_ids_;
    std::unordered_map<Token, std::size_t> entity_slots_;
    std::unordered_map<Token, std::size_t> attribute_slots_;
    std::vector<std::string> names_;
    std::vector<Mat> tensors_;
    std::vector<BlockIndex> blocks_;
    std::array<std::size_t, 3> cond_index_{0, 0, 0};
    std::size_t idx_tok_ = 0, idx_pos_ = 0, idx_scene_ = 0;
    std::size_t idx_lnf_g_ = 0, idx_lnf_b_ = 0, idx_wout_ = 0, idx_bout_ = 0;
};

// ---------------------------------------------------------------------------
// Checkpoint: a magic line, one line of JSON header (format_version,
// provenance, config, dtype, tensor names and shapes), then the tensors'
// little-endian payloads in header order.

inline constexpr std::string_view kCheckpointMagic = "CAPTIONSMITHS-CHECKPOINT";

template <class S>
constexpr std::string_view dtype_name() {
    if constexpr (std::is_same_v<S, float>) return "float32";
    else return "float64";
}

template <class S>
void save_model(const Model<S>& model, const std::filesystem::path& path, const Provenance& prov = {}) {
    static_assert(std::endian::native == std::endian::little, "checkpoint payloads are little-endian");
    nlohmann::json tensors = nlohmann::json::array();
    for (std::size_t i = 0; i < model.tensors().size(); ++i) {
        const auto& t = model.tensors()[i];
        tensors.push_back({{"name", model.tensor_names()[i]}, {"shape", {t.rows(), t.cols()}}});
    }
    const nlohmann::json header = {{"format_version", kFormatVersion},
                                   {"provenance", prov.to_json()},
                                   {"config", model.config().to_json()},
                                   {"dtype", dtype_name<S>()},
                                   {"tensors", tensors}};
    auto out = detail::open_out(path);
    out << kCheckpointMagic << '\n' << header.dump() << '\n';
    for (const auto& t : model.tensors()) {
        out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(S)));
    }
    if (!out) throw IoError("write failed: " + path.string());
}

namespace detail {

template <class Stored, class S>
void read_payload(std::istream& in, Matrix<S>& t, const std::string& name) {
    std::vector<Stored> buf(static_cast<std::size_t>(t.size()));
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(Stored)));
    if (!in) throw FormatError("checkpoint truncated in tensor " + name);
    for (std::size_t j = 0; j < buf.size(); ++j) t.data()[j] = static_cast<S>(buf[j]);
}

}  // namespace detail

template <class S>
Model<S> load_model(const std::filesystem::path& path) {
    auto in = detail::open_in(path);
    std::string magic, header_line;
    if (!std::getline(in, magic) || magic != kCheckpointMagic) throw FormatError("not a checkpoint: " + path.string());
    if (!std::getline(in, header_line)) throw FormatError("checkpoint header missing");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(header_line);
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(std::string("checkpoint header: ") + e.what());
    }
    if (!header.contains("format_version") || header["format_version"] != kFormatVersion) {
        throw FormatError("checkpoint: unsupported format_version");
    }
    if (!header.contains("config") || !header.contains("tensors") || !header.contains("dtype")) {
        throw FormatError("checkpoint: incomplete header");
    }
    ModelConfig config = ModelConfig::from_json(header["config"]);
    try {
        config.validate();
    } catch (const ArgumentError& e) {
        throw FormatError(std::string("checkpoint config: ") + e.what());
    }
    const std::string dtype = header["dtype"].get<std::string>();
    if (dtype != "float32" && dtype != "float64") throw FormatError("checkpoint: unknown dtype " + dtype);

    Model<S> model(config);
    const auto& entries = header["tensors"];
    if (!entries.is_array() || entries.size() != model.tensors().size()) {
        throw FormatError("checkpoint: expected " + std::to_string(model.tensors().size()) + " tensors, found " +
                          std::to_string(entries.is_array() ? entries.size() : 0));
    }
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& name = model.tensor_names()[i];
        auto& t = model.tensors()[i];
        try {
            if (entries[i].at("name").get<std::string>() != name) {
                throw FormatError("checkpoint: expected tensor " + name + " at position " + std::to_string(i));
            }
            const auto shape = entries[i].at("shape").get<std::array<std::int64_t, 2>>();
            if (shape[0] != t.rows() || shape[1] != t.cols()) {
                throw FormatError("checkpoint: shape mismatch for " + name);
            }
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(std::string("checkpoint: ") + e.what());
        }
    }
    for (std::size_t i = 0; i < entries.size(); ++i) {
        auto& t = model.tensors()[i];
        if (dtype == "float32") detail::read_payload<float>(in, t, model.tensor_names()[i]);
        else detail::read_payload<double>(in, t, model.tensor_names()[i]);
    }
    if (in.peek() != std::char_traits<char>::eof()) throw FormatError("checkpoint: trailing bytes");
    return model;
}

}  // namespace captionsmiths
