#include "tfpatch/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include <fmt/format.h>

#include "tfpatch/error.hpp"

namespace tfpatch {

namespace {

constexpr double kMaskedScore = -1e9;

// y = x W^T + b, double accumulation.
Matrix linear(const Matrix& x, const LinearView& w) {
    Matrix y(x.rows(), w.out);
    for (std::size_t r = 0; r < x.rows(); ++r) {
        auto in = x.row(r);
        auto out = y.row(r);
        for (std::size_t o = 0; o < w.out; ++o) {
            const float* wrow = w.weight.data() + o * w.in;
            double acc = w.bias[o];
            for (std::size_t i = 0; i < w.in; ++i) acc += static_cast<double>(in[i]) * wrow[i];
            out[o] = static_cast<float>(acc);
        }
    }
    return y;
}

Matrix layer_norm(const Matrix& x, const NormView& norm, double eps, std::vector<Matrix>* debug) {
    Matrix y(x.rows(), x.cols());
    Matrix pre_affine;
    if (debug) pre_affine = Matrix(x.rows(), x.cols());
    const auto n = static_cast<double>(x.cols());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        auto in = x.row(r);
        double mean = 0.0;
        for (float v : in) mean += v;
        mean /= n;
        double var = 0.0;
        for (float v : in) var += (v - mean) * (v - mean);
        var /= n;
        const double inv = 1.0 / std::sqrt(var + eps);
        for (std::size_t c = 0; c < x.cols(); ++c) {
            const double z = (in[c] - mean) * inv;
            if (debug) pre_affine(r, c) = static_cast<float>(z);
            y(r, c) = static_cast<float>(z * norm.weight[c] + norm.bias[c]);
        }
    }
    if (debug) debug->push_back(std::move(pre_affine));
    return y;
}

void add_inplace(Matrix& x, const Matrix& delta) {
    auto a = x.data();
    auto b = delta.data();
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

float gelu(float x) {
    const double v = x;
    return static_cast<float>(0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0))));
}

class ForwardPass {
  public:
    ForwardPass(const Model& model, const TokenizedText& tokens, std::span<const SiteId> taps,
                const EncodeOptions& options, const ActivationCache* source, std::span<const PatchSpec> patches)
        : model_(model), config_(model.config()), tokens_(tokens), options_(options), source_(source) {
        for (const auto& t : taps) {
            validate_site(config_, t);
            taps_.insert(t);
        }
        for (const auto& p : patches) {
            validate_site(config_, p.site);
            patches_[p.site].push_back(&p);
        }
    }

    EncodeResult run() {
        const std::size_t n = tokens_.size();
        if (n > config_.max_positions) {
            throw Error(Errc::length, fmt::format("{} positions exceed max_positions {}", n, config_.max_positions));
        }
        for (auto id : tokens_.ids) {
            if (id >= config_.vocab_size) {
                throw Error(Errc::config, fmt::format("token id {} outside model vocabulary of {}", id, config_.vocab_size));
            }
        }
        result_.cache.source_len = n;
        auto* debug = options_.norm_debug ? &result_.normalized : nullptr;
        const double eps = config_.layernorm_epsilon;
        const bool post = config_.norm_style == NormStyle::post;
        const std::size_t dim = config_.model_dim;

        Matrix x(n, dim);
        auto tok = model_.token_embedding();
        auto pos = model_.position_embedding();
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t c = 0; c < dim; ++c) {
                x(p, c) = tok[tokens_.ids[p] * dim + c] + pos[p * dim + c];
            }
        }
        x = layer_norm(x, model_.embed_norm(), eps, debug);

        for (std::size_t l = 0; l < config_.num_layers; ++l) {
            const auto& w = model_.layer(l);
            hook({SiteKind::resid_pre, l, std::nullopt}, x);

            Matrix attn_in = post ? x : layer_norm(x, w.attn_norm, eps, debug);
            Matrix attn = linear(attention(attn_in, w, l), w.o);
            hook({SiteKind::attn_out, l, std::nullopt}, attn);
            if (post) {
                add_inplace(x, attn);
                x = layer_norm(x, w.attn_norm, eps, debug);
            } else {
                add_inplace(x, attn);
            }

            Matrix ffn_in = post ? x : layer_norm(x, w.ffn_norm, eps, debug);
            Matrix hidden = linear(ffn_in, w.ffn_in);
            for (auto& v : hidden.data()) v = gelu(v);
            Matrix mlp = linear(hidden, w.ffn_out);
            hook({SiteKind::mlp_out, l, std::nullopt}, mlp);
            add_inplace(x, mlp);
            if (post) x = layer_norm(x, w.ffn_norm, eps, debug);

            hook({SiteKind::resid_post, l, std::nullopt}, x);
        }

        auto cls = x.row(0);
        result_.pooled.assign(cls.begin(), cls.end());
        return std::move(result_);
    }

  private:
    // Multi-head self-attention up to (not including) the output projection.
    Matrix attention(const Matrix& in, const LayerView& w, std::size_t layer) {
        const std::size_t n = in.rows();
        const std::size_t hd = config_.head_dim;
        const Matrix q = linear(in, w.q);
        const Matrix k = linear(in, w.k);
        const Matrix v = linear(in, w.v);
        const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

        std::vector<bool> masked(n, false);
        if (options_.pad_id) {
            for (std::size_t j = 0; j < n; ++j) masked[j] = tokens_.ids[j] == *options_.pad_id;
        }

        Matrix context(n, config_.model_dim);
        std::vector<double> probs(n);
        for (std::size_t h = 0; h < config_.num_heads; ++h) {
            const std::size_t off = h * hd;
            Matrix head(n, hd);
            Matrix recorded = options_.attention_probs ? Matrix(n, n) : Matrix();
            for (std::size_t i = 0; i < n; ++i) {
                double max_score = -std::numeric_limits<double>::infinity();
                for (std::size_t j = 0; j < n; ++j) {
                    double s = 0.0;
                    for (std::size_t d = 0; d < hd; ++d) s += static_cast<double>(q(i, off + d)) * k(j, off + d);
                    s = s * scale + (masked[j] ? kMaskedScore : 0.0);
                    probs[j] = s;
                    max_score = std::max(max_score, s);
                }
                double total = 0.0;
                for (auto& p : probs) {
                    p = std::exp(p - max_score);
                    total += p;
                }
                for (std::size_t j = 0; j < n; ++j) {
                    probs[j] /= total;
                    if (options_.attention_probs) recorded(i, j) = static_cast<float>(probs[j]);
                }
                for (std::size_t d = 0; d < hd; ++d) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < n; ++j) acc += probs[j] * v(j, off + d);
                    head(i, d) = static_cast<float>(acc);
                }
            }
            hook({SiteKind::head_out, layer, h}, head);
            for (std::size_t i = 0; i < n; ++i) {
                std::copy_n(head.row(i).begin(), hd, context.row(i).begin() + static_cast<std::ptrdiff_t>(off));
            }
            if (options_.attention_probs) result_.attention.push_back(std::move(recorded));
        }
        return context;
    }

    void hook(const SiteId& site, Matrix& activation) {
        if (auto it = patches_.find(site); it != patches_.end()) {
            if (!source_ || !source_->contains(site)) {
                throw Error(Errc::spec, fmt::format("patch source has no activation for {}", to_string(site)));
            }
            const Matrix& src = source_->at(site);
            if (src.cols() != activation.cols()) {
                throw Error(Errc::alignment, fmt::format("patch source width {} differs from {} at {}", src.cols(),
                                                         activation.cols(), to_string(site)));
            }
            for (const PatchSpec* patch : it->second) {
                for (auto p : patch->positions) {
                    if (p >= activation.rows() || p >= src.rows()) {
                        throw Error(Errc::alignment, fmt::format("patch position {} out of range at {}", p, to_string(site)));
                    }
                    std::copy(src.row(p).begin(), src.row(p).end(), activation.row(p).begin());
                }
            }
        }
        if (taps_.contains(site)) result_.cache.entries.insert_or_assign(site, activation);
    }

    const Model& model_;
    const ModelConfig& config_;
    const TokenizedText& tokens_;
    const EncodeOptions& options_;
    const ActivationCache* source_;
    std::set<SiteId> taps_;
    std::map<SiteId, std::vector<const PatchSpec*>> patches_;
    EncodeResult result_;
};

}  // namespace

std::string_view to_string(SiteKind kind) noexcept {
    switch (kind) {
        case SiteKind::resid_pre: return "resid_pre";
        case SiteKind::resid_post: return "resid_post";
        case SiteKind::attn_out: return "attn_out";
        case SiteKind::mlp_out: return "mlp_out";
        case SiteKind::head_out: return "head_out";
    }
    return "unknown";
}

SiteKind parse_site_kind(std::string_view text) {
    for (auto kind : {SiteKind::resid_pre, SiteKind::resid_post, SiteKind::attn_out, SiteKind::mlp_out,
                      SiteKind::head_out}) {
        if (text == to_string(kind)) return kind;
    }
    throw Error(Errc::config, fmt::format("unknown site kind '{}'", text));
}

std::string to_string(const SiteId& site) {
    if (site.head) return fmt::format("{}.{}.{}", to_string(site.kind), site.layer, *site.head);
    return fmt::format("{}.{}", to_string(site.kind), site.layer);
}

void validate_site(const ModelConfig& config, const SiteId& site) {
    if (site.layer >= config.num_layers) {
        throw Error(Errc::spec, fmt::format("site {} references layer {} of {}", to_string(site), site.layer,
                                            config.num_layers));
    }
    if ((site.kind == SiteKind::head_out) != site.head.has_value()) {
        throw Error(Errc::spec, fmt::format("site {}: a head index is required for head_out and only for head_out",
                                            to_string(site)));
    }
    if (site.head && *site.head >= config.num_heads) {
        throw Error(Errc::spec, fmt::format("site {} references head {} of {}", to_string(site), *site.head,
                                            config.num_heads));
    }
}

std::vector<SiteId> all_sites(const ModelConfig& config, SiteKind kind) {
    std::vector<SiteId> out;
    for (std::size_t l = 0; l < config.num_layers; ++l) {
        if (kind == SiteKind::head_out) {
            for (std::size_t h = 0; h < config.num_heads; ++h) out.push_back({kind, l, h});
        } else {
            out.push_back({kind, l, std::nullopt});
        }
    }
    return out;
}

const Matrix& ActivationCache::at(const SiteId& site) const {
    auto it = entries.find(site);
    if (it == entries.end()) throw Error(Errc::spec, fmt::format("cache has no activation for {}", to_string(site)));
    return it->second;
}

EncodeResult encode(const Model& model, const TokenizedText& tokens, std::span<const SiteId> taps,
                    const EncodeOptions& options) {
    return ForwardPass(model, tokens, taps, options, nullptr, {}).run();
}

EncodeResult encode_patched(const Model& model, const TokenizedText& tokens, std::span<const SiteId> taps,
                            const ActivationCache& source, std::span<const PatchSpec> patches,
                            const EncodeOptions& options) {
    return ForwardPass(model, tokens, taps, options, &source, patches).run();
}

double dot(std::span<const float> a, std::span<const float> b) noexcept {
    double acc = 0.0;
    const std::size_t n = std::min(a.size(), b.size());
    for (std::size_t i = 0; i < n; ++i) acc += static_cast<double>(a[i]) * b[i];
    return acc;
}

double relevance_score(const Model& model, const TokenizedText& query, const TokenizedText& doc) {
    const auto q = encode(model, query);
    const auto d = encode(model, doc);
    return dot(q.pooled, d.pooled);
}

}  // namespace tfpatch
