#pragma once

#include <filesystem>
#include <map>

#include "semadv/config.hpp"
#include "semadv/latent.hpp"
#include "semadv/nn.hpp"

namespace semadv {

using real = float;
using V = ad::Var<real>;

// Encoder: four stride-2 conv blocks -> (mu, log_var) heads.
struct Encoder {
    nn::Conv2d<real> c1, c2, c3, c4;
    nn::BatchNorm2d<real> b2, b3, b4;
    nn::Linear<real> mu_head, logvar_head;

    std::pair<V, V> forward(const V& x, bool train);
    void collect(nn::ParamSet<real>& ps);
};

// Conditional generator: linear stem -> four transposed-conv blocks ->
// sigmoid, so outputs always lie in [0,1].
struct Generator {
    nn::Linear<real> fc;
    nn::BatchNorm2d<real> b0, b1, b2, b3;
    nn::ConvTranspose2d<real> t1, t2, t3, t4;
    int64_t stem_channels = 0, stem_spatial = 0;

    V forward(const V& z, bool train);
    void collect(nn::ParamSet<real>& ps);
};

// Shared convolutional backbone feeding both the discriminator and decoder
// heads; its flattened output is also the feature map used for feature
// matching.
struct Backbone {
    nn::Conv2d<real> c1, c2, c3, c4;
    nn::BatchNorm2d<real> b2, b3, b4;

    V forward(const V& x, bool train);  // [N, F]
    void collect(nn::ParamSet<real>& ps);
};

struct ReconResult {
    Tensor<real> image;                 // x_R
    latent::BatchCodes codes;           // z1 (mean), z2 = decoded probs, z3 = decoded code
};

struct GenModel {
    int64_t image_size = 64, channels = 1;
    latent::Dims dims;
    latent::Bounds bounds;
    bool train_mode = true;

    Encoder enc;
    Generator gen;
    Backbone bb;
    nn::Linear<real> d_head;            // features -> 1
    nn::Linear<real> q_class, q_z3;     // features -> D2 / D3

    static GenModel build(const ExperimentConfig& cfg, uint64_t init_seed);

    // graph-level pieces (used by training)
    std::pair<V, V> encode(const V& x) { return enc.forward(x, train_mode); }
    V generate(const V& z) { return gen.forward(z, train_mode); }
    V features(const V& x) { return bb.forward(x, train_mode); }
    V disc_from_features(const V& f);              // clamped score column [N]
    std::pair<V, V> decode_from_features(const V& f);  // (probs [N,D2], z3 [N,D3])
    V generate_from_codes(const V& z1, const V& z2, const V& z3);

    // value-level operations (respect train_mode; use eval mode for
    // deterministic results)
    Tensor<real> discriminate(const Tensor<real>& x);                 // [N] in (0,1)
    std::pair<Tensor<real>, Tensor<real>> decode(const Tensor<real>& x);
    ReconResult reconstruct(const Tensor<real>& x);
    Tensor<real> generate_variant(const Tensor<real>& x, const std::vector<int64_t>& labels,
                                  const Tensor<real>& z3);            // x_SO batch
    Tensor<real> generate_images(const Tensor<real>& z1, const Tensor<real>& z2,
                                 const Tensor<real>& z3);

    // parameter groups (the backbone belongs to both D and Q)
    nn::ParamSet<real> params_encoder();
    nn::ParamSet<real> params_generator();
    nn::ParamSet<real> params_backbone();
    nn::ParamSet<real> params_d_head();
    nn::ParamSet<real> params_q_heads();

    std::vector<std::string> save_networks(const std::filesystem::path& dir,
                                           const std::string& stage, int64_t epoch);
    void load_networks(const std::filesystem::path& dir, const std::string& stage, int64_t epoch);

    std::string weights_digest();  // content hash over every parameter tensor
};

}  // namespace semadv
