#pragma once

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "stanp/checkpoint.hpp"
#include "stanp/coords.hpp"
#include "stanp/footprint.hpp"
#include "stanp/rng.hpp"
#include "stanp/tape.hpp"
#include "stanp/tensor.hpp"

namespace stanp::model {

constexpr std::size_t kCoordWidth = 5;  // lon, lat, doy_sin, doy_cos, tau

struct ModelConfig {
    std::size_t embed_dim = 16;       // channels per patch cell (D)
    std::size_t feature_width = 256;  // patch feature vector (F)
    std::size_t repr_width = 256;     // context representation (R)
    std::size_t latent_width = 128;
    std::size_t decoder_hidden = 256;
    std::size_t conv_channels = 32;
    std::size_t heads = 16;
    double sigma_floor = 1e-3;
    std::size_t latent_samples = 16;  // mixture components at inference

    void validate() const;  // throws ContractViolation
};

bool operator==(const ModelConfig& a, const ModelConfig& b);

// Named parameter tensors in one fixed registration order; the order defines
// optimizer slot layout and checkpoint entry layout.
class ModelParams {
public:
    ModelParams() = default;

    // truncated-normal(std 0.02) weights, zero biases
    static ModelParams init(const ModelConfig& config, Rng& rng);

    const ModelConfig& config() const { return config_; }
    std::size_t count() const { return entries_.size(); }
    const std::string& name(std::size_t i) const { return entries_[i].first; }
    Tensor& tensor(std::size_t i) { return entries_[i].second; }
    const Tensor& tensor(std::size_t i) const { return entries_[i].second; }
    std::size_t index(const std::string& name) const;  // throws ContractViolation
    std::size_t parameter_count() const;

private:
    explicit ModelParams(const ModelConfig& config);  // registers all shapes, zero-filled
    void add(std::string name, std::vector<std::size_t> shape);

    friend ModelParams params_with_shapes(const ModelConfig& config);

    ModelConfig config_;
    std::vector<std::pair<std::string, Tensor>> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

// Zero-filled parameter set (shapes only); building block for init and load.
ModelParams params_with_shapes(const ModelConfig& config);

// Checkpoint io (container kind 1, f32 payloads). save → load → save writes
// byte-identical files.
ckpt::Container model_to_container(const ModelParams& params);
ModelParams model_from_container(const ckpt::Container& c);
void save_model(const ModelParams& params, const std::string& path);
ModelParams load_model(const std::string& path);

struct LatentDistribution {
    std::vector<double> mu;
    std::vector<double> sigma;
};

struct PredictiveGaussian {
    double mu = 0.0;
    double sigma = 0.0;
};

// Equal-weight Gaussian mixture collapsed by moment matching:
// mu = mean(mu_k), sigma² = mean(sigma_k²) + var(mu_k).
PredictiveGaussian collapse_mixture(const std::vector<PredictiveGaussian>& components);

// ---------------------------------------------------------------------------
// Graph builders. One tape owns a whole episode computation; parameters are
// registered once per tape and shared across the builders.

struct GraphParams {
    const ModelParams* params = nullptr;
    std::vector<ad::Value> leaves;  // parallel to the params registry
    ad::Value at(const std::string& name) const;
};

GraphParams register_params(ad::Tape& tape, const ModelParams& params, bool requires_grad);

// rows of (lon, lat, doy_sin, doy_cos, tau)
Tensor coord_rows(const std::vector<const SpatioTemporalCoord*>& coords);
// stacks (3,3,D) patches into [B,9,D]
Tensor patch_batch(const std::vector<const Tensor*>& patches, std::size_t embed_dim);

// patch stack [B,9,D] -> features [B,F]
ad::Value encode_patch(const GraphParams& gp, ad::Value patches);

// features [n,F], coords [n,5], y [n,1] -> representations [n,R]
ad::Value encode_context(const GraphParams& gp, ad::Value features, ad::Value coords, ad::Value y);

struct Attention {
    ad::Value output;                // [m,R]
    std::vector<ad::Value> weights;  // per head, [m,n] post-softmax
};

// raw (feature‖coord) queries [m,F+5] and keys [n,F+5]; values are projected
// context representations [n,R]
Attention cross_attend(const GraphParams& gp, ad::Value queries_raw, ad::Value keys_raw, ad::Value reprs);

struct LatentNodes {
    ad::Value mu;     // [1,L]
    ad::Value sigma;  // [1,L], every entry ≥ sigma_floor
};

LatentNodes latent_summary(const GraphParams& gp, ad::Value reprs);        // mean-pool then MLP
LatentNodes latent_from_pooled(const GraphParams& gp, ad::Value pooled);   // pooled [1,R]
ad::Value sample_latent(const LatentNodes& dist, ad::Value noise);         // mu + sigma ⊙ noise

struct DecoderNodes {
    ad::Value mu;     // [m,1]
    ad::Value sigma;  // [m,1], every entry ≥ sigma_floor
};

// det [m,R], z [1,L], target features [m,F], coords [m,5]
DecoderNodes decode(const GraphParams& gp, ad::Value det, ad::Value z, ad::Value features, ad::Value coords);

// Footprints lifted onto a tape in one batch.
struct FootprintBatch {
    ad::Value features;  // [n,F]
    ad::Value coords;    // [n,5]
    ad::Value y;         // [n,1]
    ad::Value raw;       // [n,F+5], attention input
};

FootprintBatch encode_footprints(ad::Tape& tape, const GraphParams& gp,
                                 const std::vector<const Footprint*>& footprints);

// ---------------------------------------------------------------------------
// Whole-episode assembly.

struct ElboNodes {
    ad::Value loss;  // nll + beta·kl
    ad::Value nll;   // mean over targets
    ad::Value kl;
};

// Mean NLL over posterior samples from q(z|C∪T) plus beta·KL(q(z|C∪T)‖p(z|C)).
// Each noise draw has latent width entries; encoders are built once and shared
// across draws.
ElboNodes elbo_loss(ad::Tape& tape, const GraphParams& gp, const std::vector<const Footprint*>& context,
                    const std::vector<const Footprint*>& targets, double beta,
                    const std::vector<std::vector<double>>& noise_draws);
ElboNodes elbo_loss(ad::Tape& tape, const GraphParams& gp, const std::vector<const Footprint*>& context,
                    const std::vector<const Footprint*>& targets, double beta, const std::vector<double>& noise);

struct Query {
    const Tensor* patch = nullptr;
    const SpatioTemporalCoord* coord = nullptr;
};

// Prior-at-inference prediction: K latent samples from p(z|C), decoded and
// collapsed by moment matching. Deterministic given the rng state.
std::vector<PredictiveGaussian> predict(const ModelParams& params, const std::vector<const Footprint*>& context,
                                        const std::vector<Query>& targets, std::size_t n_latent_samples, Rng& rng);

}  // namespace stanp::model
