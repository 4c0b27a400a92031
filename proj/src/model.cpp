#include "stanp/model.hpp"

#include <cmath>
#include <cstring>

#include "stanp/checkpoint.hpp"
#include "stanp/errors.hpp"
#include "stanp/losses.hpp"

namespace stanp::model {

namespace {

using ad::Value;

constexpr std::uint32_t kAnpKind = 1;

}  // namespace

void ModelConfig::validate() const {
    if (embed_dim == 0 || feature_width == 0 || repr_width == 0 || latent_width == 0 || decoder_hidden == 0 ||
        conv_channels == 0) {
        throw ContractViolation("model widths must be nonzero");
    }
    if (heads == 0 || repr_width % heads != 0) {
        throw ContractViolation("repr_width " + std::to_string(repr_width) + " not divisible by heads " +
                                std::to_string(heads));
    }
    if (!(sigma_floor > 0.0)) throw ContractViolation("sigma_floor must be positive");
    if (latent_samples == 0) throw ContractViolation("latent_samples must be at least 1");
}

bool operator==(const ModelConfig& a, const ModelConfig& b) {
    return a.embed_dim == b.embed_dim && a.feature_width == b.feature_width && a.repr_width == b.repr_width &&
           a.latent_width == b.latent_width && a.decoder_hidden == b.decoder_hidden &&
           a.conv_channels == b.conv_channels && a.heads == b.heads && a.sigma_floor == b.sigma_floor &&
           a.latent_samples == b.latent_samples;
}

ModelParams::ModelParams(const ModelConfig& config) : config_(config) {
    config_.validate();
    const std::size_t d = config.embed_dim, f = config.feature_width, r = config.repr_width;
    const std::size_t l = config.latent_width, h = config.decoder_hidden, c = config.conv_channels;
    add("patch.conv1.w", {c, d, 9});
    add("patch.conv1.b", {1, c});
    add("patch.conv2.w", {c, c, 9});
    add("patch.conv2.b", {1, c});
    add("patch.conv3.w", {c, c, 9});
    add("patch.conv3.b", {1, c});
    add("patch.out.w", {c, f});
    add("patch.out.b", {1, f});
    add("ctx.l1.w", {f + kCoordWidth + 1, r});
    add("ctx.l1.b", {1, r});
    add("ctx.l2.w", {r, r});
    add("ctx.l2.b", {1, r});
    add("ctx.l3.w", {r, r});
    add("ctx.l3.b", {1, r});
    add("attn.q.w", {f + kCoordWidth, r});
    add("attn.k.w", {f + kCoordWidth, r});
    add("attn.v.w", {r, r});
    add("attn.o.w", {r, r});
    add("latent.l1.w", {r, r});
    add("latent.l1.b", {1, r});
    add("latent.l2.w", {r, 2 * l});
    add("latent.l2.b", {1, 2 * l});
    add("dec.l1.w", {r + l + f + kCoordWidth, h});
    add("dec.l1.b", {1, h});
    add("dec.l2.w", {h, h});
    add("dec.l2.b", {1, h});
    add("dec.out.w", {h, 2});
    add("dec.out.b", {1, 2});
}

void ModelParams::add(std::string name, std::vector<std::size_t> shape) {
    index_.emplace(name, entries_.size());
    entries_.emplace_back(std::move(name), Tensor(std::move(shape)));
}

ModelParams params_with_shapes(const ModelConfig& config) { return ModelParams(config); }

ModelParams ModelParams::init(const ModelConfig& config, Rng& rng) {
    ModelParams p(config);
    for (auto& [name, tensor] : p.entries_) {
        if (name.size() >= 2 && name.compare(name.size() - 2, 2, ".w") == 0) {
            for (std::size_t i = 0; i < tensor.size(); ++i) tensor[i] = rng.truncated_normal(0.02);
        }
        // biases stay zero
    }
    return p;
}

std::size_t ModelParams::index(const std::string& name) const {
    const auto it = index_.find(name);
    if (it == index_.end()) throw ContractViolation("unknown parameter " + name);
    return it->second;
}

std::size_t ModelParams::parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, tensor] : entries_) n += tensor.size();
    return n;
}

ckpt::Container model_to_container(const ModelParams& params) {
    const ModelConfig& c = params.config();
    ckpt::Container out;
    out.kind = kAnpKind;
    out.header = {
        {"embed_dim", static_cast<double>(c.embed_dim)},
        {"feature_width", static_cast<double>(c.feature_width)},
        {"repr_width", static_cast<double>(c.repr_width)},
        {"latent_width", static_cast<double>(c.latent_width)},
        {"decoder_hidden", static_cast<double>(c.decoder_hidden)},
        {"conv_channels", static_cast<double>(c.conv_channels)},
        {"heads", static_cast<double>(c.heads)},
        {"sigma_floor", c.sigma_floor},
        {"latent_samples", static_cast<double>(c.latent_samples)},
    };
    out.entries.reserve(params.count());
    for (std::size_t i = 0; i < params.count(); ++i) {
        const Tensor& t = params.tensor(i);
        ckpt::Entry e;
        e.name = params.name(i);
        e.dtype = ckpt::Dtype::f32;
        e.shape = t.shape();
        e.f32.reserve(t.size());
        for (std::size_t j = 0; j < t.size(); ++j) e.f32.push_back(static_cast<float>(t[j]));
        out.entries.push_back(std::move(e));
    }
    return out;
}

void save_model(const ModelParams& params, const std::string& path) {
    ckpt::write_container(model_to_container(params), path);
}

ModelParams model_from_container(const ckpt::Container& in) {
    if (in.kind != kAnpKind) throw FormatError("checkpoint kind " + std::to_string(in.kind) + " is not a model");
    ModelConfig c;
    c.embed_dim = static_cast<std::size_t>(in.header_value("embed_dim"));
    c.feature_width = static_cast<std::size_t>(in.header_value("feature_width"));
    c.repr_width = static_cast<std::size_t>(in.header_value("repr_width"));
    c.latent_width = static_cast<std::size_t>(in.header_value("latent_width"));
    c.decoder_hidden = static_cast<std::size_t>(in.header_value("decoder_hidden"));
    c.conv_channels = static_cast<std::size_t>(in.header_value("conv_channels"));
    c.heads = static_cast<std::size_t>(in.header_value("heads"));
    c.sigma_floor = in.header_value("sigma_floor");
    c.latent_samples = static_cast<std::size_t>(in.header_value("latent_samples"));
    ModelParams p = params_with_shapes(c);
    for (std::size_t i = 0; i < p.count(); ++i) {
        const ckpt::Entry& e = in.entry(p.name(i));
        Tensor& t = p.tensor(i);
        if (e.dtype != ckpt::Dtype::f32 || e.shape != t.shape()) {
            throw FormatError("checkpoint entry " + e.name + " has unexpected shape or dtype");
        }
        for (std::size_t j = 0; j < t.size(); ++j) t[j] = static_cast<double>(e.f32[j]);
    }
    return p;
}

ModelParams load_model(const std::string& path) { return model_from_container(ckpt::read_container(path)); }

PredictiveGaussian collapse_mixture(const std::vector<PredictiveGaussian>& components) {
    if (components.empty()) throw ContractViolation("mixture collapse of zero components");
    const double k = static_cast<double>(components.size());
    double mu = 0.0;
    for (const auto& c : components) mu += c.mu;
    mu /= k;
    double mean_var = 0.0, var_mu = 0.0;
    for (const auto& c : components) {
        mean_var += c.sigma * c.sigma;
        var_mu += (c.mu - mu) * (c.mu - mu);
    }
    return PredictiveGaussian{mu, std::sqrt(mean_var / k + var_mu / k)};
}

Value GraphParams::at(const std::string& name) const { return leaves[params->index(name)]; }

GraphParams register_params(ad::Tape& tape, const ModelParams& params, bool requires_grad) {
    GraphParams gp;
    gp.params = &params;
    gp.leaves.reserve(params.count());
    for (std::size_t i = 0; i < params.count(); ++i) {
        gp.leaves.push_back(tape.leaf(params.tensor(i), requires_grad));
    }
    return gp;
}

Tensor coord_rows(const std::vector<const SpatioTemporalCoord*>& coords) {
    Tensor rows({coords.size(), kCoordWidth});
    for (std::size_t i = 0; i < coords.size(); ++i) {
        const SpatioTemporalCoord& c = *coords[i];
        double* r = rows.data() + i * kCoordWidth;
        r[0] = c.lon_norm;
        r[1] = c.lat_norm;
        r[2] = c.doy_sin;
        r[3] = c.doy_cos;
        r[4] = c.tau;
    }
    return rows;
}

Tensor patch_batch(const std::vector<const Tensor*>& patches, std::size_t embed_dim) {
    const std::vector<std::size_t> expected{3, 3, embed_dim};
    Tensor batch({patches.size(), 9, embed_dim});
    for (std::size_t i = 0; i < patches.size(); ++i) {
        const Tensor& p = *patches[i];
        if (p.shape() != expected) {
            throw ContractViolation("patch " + std::to_string(i) + " has shape " + p.shape_str() +
                                    ", expected (3,3," + std::to_string(embed_dim) + ")");
        }
        std::memcpy(batch.data() + i * 9 * embed_dim, p.data(), 9 * embed_dim * sizeof(double));
    }
    return batch;
}

Value encode_patch(const GraphParams& gp, Value patches) {
    const ModelConfig& cfg = gp.params->config();
    const Tensor& t = patches.tape->value(patches);
    if (t.rank() != 3 || t.dim(1) != 9 || t.dim(2) != cfg.embed_dim) {
        throw ContractViolation("encode_patch input must be [B,9," + std::to_string(cfg.embed_dim) + "], got " +
                                t.shape_str());
    }
    const std::size_t b = t.dim(0), c = cfg.conv_channels;
    using namespace ad;
    Value z1 = reshape(conv3x3(patches, gp.at("patch.conv1.w")), {b * 9, c});
    Value a1 = gelu(add_row(z1, gp.at("patch.conv1.b")));
    Value z2 = reshape(conv3x3(reshape(a1, {b, 9, c}), gp.at("patch.conv2.w")), {b * 9, c});
    Value a2 = gelu(add(add_row(z2, gp.at("patch.conv2.b")), a1));
    Value z3 = reshape(conv3x3(reshape(a2, {b, 9, c}), gp.at("patch.conv3.w")), {b * 9, c});
    Value pooled = mean_cells(reshape(add_row(z3, gp.at("patch.conv3.b")), {b, 9, c}));
    return add_row(matmul(pooled, gp.at("patch.out.w")), gp.at("patch.out.b"));
}

Value encode_context(const GraphParams& gp, Value features, Value coords, Value y) {
    using namespace ad;
    Value h = concat_last({features, coords, y});
    Value h1 = gelu(layer_norm_rows(add_row(matmul(h, gp.at("ctx.l1.w")), gp.at("ctx.l1.b"))));
    Value h2 = gelu(layer_norm_rows(add_row(matmul(h1, gp.at("ctx.l2.w")), gp.at("ctx.l2.b"))));
    return add_row(matmul(h2, gp.at("ctx.l3.w")), gp.at("ctx.l3.b"));
}

Attention cross_attend(const GraphParams& gp, Value queries_raw, Value keys_raw, Value reprs) {
    const ModelConfig& cfg = gp.params->config();
    const std::size_t n = keys_raw.tape->value(keys_raw).dim(0);
    if (n == 0) throw EmptyContextError("cross-attention over an empty context");
    if (reprs.tape->value(reprs).dim(0) != n) {
        throw ContractViolation("attention keys and values disagree on context size");
    }
    using namespace ad;
    Value q = matmul(queries_raw, gp.at("attn.q.w"));
    Value k = matmul(keys_raw, gp.at("attn.k.w"));
    Value v = matmul(reprs, gp.at("attn.v.w"));
    const std::size_t head_dim = cfg.repr_width / cfg.heads;
    const double inv_scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
    Attention result;
    std::vector<Value> heads;
    heads.reserve(cfg.heads);
    result.weights.reserve(cfg.heads);
    for (std::size_t h = 0; h < cfg.heads; ++h) {
        Value qh = slice_last(q, h * head_dim, head_dim);
        Value kh = slice_last(k, h * head_dim, head_dim);
        Value vh = slice_last(v, h * head_dim, head_dim);
        Value weights = softmax_rows(scale(matmul_nt(qh, kh), inv_scale));
        result.weights.push_back(weights);
        heads.push_back(matmul(weights, vh));
    }
    result.output = matmul(concat_last(heads), gp.at("attn.o.w"));
    return result;
}

LatentNodes latent_from_pooled(const GraphParams& gp, Value pooled) {
    const ModelConfig& cfg = gp.params->config();
    using namespace ad;
    Value h = gelu(add_row(matmul(pooled, gp.at("latent.l1.w")), gp.at("latent.l1.b")));
    Value raw = add_row(matmul(h, gp.at("latent.l2.w")), gp.at("latent.l2.b"));
    LatentNodes out;
    out.mu = slice_last(raw, 0, cfg.latent_width);
    out.sigma = add_const(softplus(slice_last(raw, cfg.latent_width, cfg.latent_width)), cfg.sigma_floor);
    return out;
}

LatentNodes latent_summary(const GraphParams& gp, Value reprs) {
    if (reprs.tape->value(reprs).dim(0) == 0) throw EmptyContextError("latent summary of an empty context");
    return latent_from_pooled(gp, ad::mean_rows(reprs));
}

Value sample_latent(const LatentNodes& dist, Value noise) {
    return ad::add(dist.mu, ad::mul(dist.sigma, noise));
}

DecoderNodes decode(const GraphParams& gp, Value det, Value z, Value features, Value coords) {
    const ModelConfig& cfg = gp.params->config();
    using namespace ad;
    const std::size_t m = det.tape->value(det).dim(0);
    Value zb = broadcast_row(z, m);
    Value cat = concat_last({det, zb, features, coords});
    Value h1 = gelu(add_row(matmul(cat, gp.at("dec.l1.w")), gp.at("dec.l1.b")));
    Value h2 = gelu(add_row(matmul(h1, gp.at("dec.l2.w")), gp.at("dec.l2.b")));
    Value out = add_row(matmul(h2, gp.at("dec.out.w")), gp.at("dec.out.b"));
    DecoderNodes nodes;
    nodes.mu = slice_last(out, 0, 1);
    nodes.sigma = add_const(softplus(slice_last(out, 1, 1)), cfg.sigma_floor);
    return nodes;
}

FootprintBatch encode_footprints(ad::Tape& tape, const GraphParams& gp,
                                 const std::vector<const Footprint*>& footprints) {
    const ModelConfig& cfg = gp.params->config();
    std::vector<const Tensor*> patches;
    std::vector<const SpatioTemporalCoord*> coords;
    patches.reserve(footprints.size());
    coords.reserve(footprints.size());
    Tensor y({footprints.size(), 1});
    for (std::size_t i = 0; i < footprints.size(); ++i) {
        patches.push_back(&footprints[i]->patch);
        coords.push_back(&footprints[i]->coord);
        y[i] = footprints[i]->y_norm;
    }
    FootprintBatch batch;
    batch.features = encode_patch(gp, tape.leaf(patch_batch(patches, cfg.embed_dim)));
    batch.coords = tape.leaf(coord_rows(coords));
    batch.y = tape.leaf(std::move(y));
    batch.raw = ad::concat_last({batch.features, batch.coords});
    return batch;
}

ElboNodes elbo_loss(ad::Tape& tape, const GraphParams& gp, const std::vector<const Footprint*>& context,
                    const std::vector<const Footprint*>& targets, double beta,
                    const std::vector<std::vector<double>>& noise_draws) {
    const ModelConfig& cfg = gp.params->config();
    if (context.empty() || targets.empty()) {
        throw ContractViolation("elbo needs non-empty context and target sets");
    }
    if (!(beta >= 0.0)) throw ContractViolation("beta must be non-negative");
    if (noise_draws.empty()) throw ContractViolation("elbo needs at least one posterior draw");
    for (const auto& noise : noise_draws) {
        if (noise.size() != cfg.latent_width) {
            throw ContractViolation("noise length " + std::to_string(noise.size()) + " != latent width " +
                                    std::to_string(cfg.latent_width));
        }
    }
    using namespace ad;
    FootprintBatch ctx = encode_footprints(tape, gp, context);
    FootprintBatch tgt = encode_footprints(tape, gp, targets);

    Value ctx_reprs = encode_context(gp, ctx.features, ctx.coords, ctx.y);
    Value tgt_reprs = encode_context(gp, tgt.features, tgt.coords, tgt.y);

    // posterior pools over C∪T; built from the two set means to avoid a row concat
    const double nc = static_cast<double>(context.size());
    const double nt = static_cast<double>(targets.size());
    Value pooled_ctx = mean_rows(ctx_reprs);
    Value pooled_union = add(scale(pooled_ctx, nc / (nc + nt)), scale(mean_rows(tgt_reprs), nt / (nc + nt)));

    LatentNodes prior = latent_from_pooled(gp, pooled_ctx);
    LatentNodes posterior = latent_from_pooled(gp, pooled_union);

    Value det = cross_attend(gp, tgt.raw, ctx.raw, ctx_reprs).output;

    ElboNodes nodes;
    const double inv_k = 1.0 / static_cast<double>(noise_draws.size());
    bool first_draw = true;
    for (const auto& noise : noise_draws) {
        Value noise_leaf = tape.leaf(Tensor({1, cfg.latent_width}, noise));
        Value z = sample_latent(posterior, noise_leaf);
        DecoderNodes dec = decode(gp, det, z, tgt.features, tgt.coords);
        Value nll_k = mean_all(gaussian_nll(tgt.y, dec.mu, dec.sigma));
        nodes.nll = first_draw ? scale(nll_k, inv_k) : add(nodes.nll, scale(nll_k, inv_k));
        first_draw = false;
    }
    nodes.kl = kl_diag_gaussian(posterior.mu, posterior.sigma, prior.mu, prior.sigma);
    nodes.loss = add(nodes.nll, scale(nodes.kl, beta));
    return nodes;
}

ElboNodes elbo_loss(ad::Tape& tape, const GraphParams& gp, const std::vector<const Footprint*>& context,
                    const std::vector<const Footprint*>& targets, double beta, const std::vector<double>& noise) {
    return elbo_loss(tape, gp, context, targets, beta, std::vector<std::vector<double>>{noise});
}

std::vector<PredictiveGaussian> predict(const ModelParams& params, const std::vector<const Footprint*>& context,
                                        const std::vector<Query>& targets, std::size_t n_latent_samples, Rng& rng) {
    const ModelConfig& cfg = params.config();
    if (context.empty()) throw EmptyContextError("prediction requested with no context observations");
    if (n_latent_samples == 0) throw ContractViolation("need at least one latent sample");
    if (targets.empty()) return {};

    ad::Tape tape;
    GraphParams gp = register_params(tape, params, false);
    FootprintBatch ctx = encode_footprints(tape, gp, context);
    Value ctx_reprs = encode_context(gp, ctx.features, ctx.coords, ctx.y);
    LatentNodes prior = latent_summary(gp, ctx_reprs);

    std::vector<const Tensor*> patches;
    std::vector<const SpatioTemporalCoord*> coords;
    patches.reserve(targets.size());
    coords.reserve(targets.size());
    for (const Query& q : targets) {
        patches.push_back(q.patch);
        coords.push_back(q.coord);
    }
    Value tgt_features = encode_patch(gp, tape.leaf(patch_batch(patches, cfg.embed_dim)));
    Value tgt_coords = tape.leaf(coord_rows(coords));
    Value tgt_raw = ad::concat_last({tgt_features, tgt_coords});

    Value det = cross_attend(gp, tgt_raw, ctx.raw, ctx_reprs).output;

    std::vector<std::vector<PredictiveGaussian>> per_target(targets.size());
    for (auto& v : per_target) v.reserve(n_latent_samples);
    for (std::size_t k = 0; k < n_latent_samples; ++k) {
        Tensor noise({1, cfg.latent_width});
        for (std::size_t i = 0; i < cfg.latent_width; ++i) noise[i] = rng.normal();
        Value z = sample_latent(prior, tape.leaf(noise));
        DecoderNodes dec = decode(gp, det, z, tgt_features, tgt_coords);
        const Tensor& mu = tape.value(dec.mu);
        const Tensor& sigma = tape.value(dec.sigma);
        for (std::size_t i = 0; i < targets.size(); ++i) {
            per_target[i].push_back(PredictiveGaussian{mu[i], sigma[i]});
        }
    }
    std::vector<PredictiveGaussian> out;
    out.reserve(targets.size());
    for (const auto& components : per_target) out.push_back(collapse_mixture(components));
    return out;
}

}  // namespace stanp::model
