#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "semadv/losses.hpp"

namespace semadv {

enum class DatasetId { mnist, image_folder };

std::string to_string(DatasetId d);
DatasetId dataset_from_string(const std::string& s);

// Per-stage objective weights; mirrors losses::Weights plus the batch size
// the normalized sums refer to.
struct LossWeights {
    double lambda_a = 0, lambda_b = 0, lambda_c = 0, lambda_d = 0, lambda_e = 0, lambda_f = 0,
           lambda_g = 0, lambda_h = 0, lambda_k = 0;
    int64_t m = 64;

    losses::Weights as_loss_weights() const {
        return {lambda_a, lambda_b, lambda_c, lambda_d, lambda_e,
                lambda_f, lambda_g, lambda_h, lambda_k};
    }
};

struct OptimizerConfig {
    double beta1 = 0.5, beta2 = 0.999;
    double lr_encoder = 2e-4, lr_generator = 2e-4, lr_discriminator = 2e-4, lr_decoder = 2e-4;
};

struct VictimConfig {
    std::string arch = "cnn4";
    std::string transfer_arch = "cnn6";
    int64_t epochs = 3;
    double lr = 1e-3;
    int64_t batch_size = 64;
};

struct SearchConfigDefaults {
    double step = 0.01;
    int64_t max_rings = 200;
    std::string selection = "min_l2";  // or "first_found"
};

struct PgdConfigDefaults {
    int64_t steps = 40;
    double alpha_ratio = 2.5;  // alpha = ratio * delta / steps
    bool random_start = true;
};

struct DefenseConfigDefaults {
    double advtrain_ratio = 0.5;
    int64_t advtrain_epochs = 2;
    int64_t advtrain_pool = 1000;
    double distill_temperature = 20.0;
    int64_t distill_epochs = 2;
};

struct ExperimentConfig {
    DatasetId dataset = DatasetId::mnist;
    std::string data_dir;
    int64_t image_size = 64;
    int64_t channels = 1;
    int64_t d1 = 132, d2 = 10, d3 = 2;  // latent dimensions
    double z3_min = -1.0, z3_max = 1.0;
    LossWeights weights_stage1, weights_stage2;
    OptimizerConfig optimizer;
    int64_t epochs_stage1 = 10, epochs_stage2 = 5;
    int64_t batch_size = 64;
    int64_t train_limit = 0;  // 0 = full training set
    int64_t eval_per_class = 10, eval_repeats = 5;
    uint64_t seed = 1;
    VictimConfig victim;
    SearchConfigDefaults search;
    PgdConfigDefaults pgd;
    DefenseConfigDefaults defense;

    int64_t latent_total() const { return d1 + d2 + d3; }

    nlohmann::json to_json() const;
    static ExperimentConfig from_json(const nlohmann::json& j);

    // Canonical serialization (sorted keys) and its content hash.
    std::string canonical() const;
    std::string digest() const;

    void validate() const;  // throws ConfigError naming the offending field
};

// Parse, fill dataset-specific defaults for missing keys, reject unknown
// keys, validate.
ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig config_from_json_text(const std::string& text);

}  // namespace semadv
