#pragma once

#include <atomic>
#include <filesystem>
#include <memory>

#include <json.hpp>

#include "semadv/data.hpp"
#include "semadv/model.hpp"

namespace semadv {

// Minimal query surface every attack/metric component works against: a
// batch of images in, one probability row per image out.
struct Classifier {
    virtual ~Classifier() = default;
    virtual std::string id() const = 0;
    virtual int64_t n_classes() const = 0;
    virtual Tensor<real> predict_probs(const Tensor<real>& images) const = 0;
};

// White-box gradient surface used by gradient-based attacks: cross-entropy
// against given labels and its gradient w.r.t. the input pixels.
struct GradClassifier : Classifier {
    virtual std::pair<double, Tensor<real>> loss_input_grad(
        const Tensor<real>& images, const std::vector<int64_t>& labels) = 0;
};

enum class QueryMode { soft, hard };

struct QueryResult {
    Tensor<real> probs;           // [N,K] (soft mode; also filled in hard mode)
    std::vector<int64_t> labels;  // argmax rows
};

std::vector<int64_t> argmax_rows(const Tensor<real>& probs);

// Desk-scale victim CNN. Two architecture tags: "cnn4" (3x3 convs with max
// pooling) and "cnn6" (strided 4x4 convs, deeper and wider), standing in for
// the full-scale model zoo behind the same interface.
class VictimModel : public GradClassifier {
public:
    VictimModel() = default;
    VictimModel(std::string id, std::string arch, int64_t channels, int64_t image_size,
                int64_t n_classes, uint64_t init_seed);

    std::string id() const override { return id_; }
    int64_t n_classes() const override { return classes_; }
    const std::string& arch() const { return arch_; }
    int64_t image_size() const { return image_size_; }

    V forward_logits(const V& x);  // graph-level, for training and gradients
    Tensor<real> predict_probs(const Tensor<real>& images) const override;

    // Soft/hard query with per-image counting.
    QueryResult query(const Tensor<real>& images, QueryMode mode) const;
    int64_t query_count() const { return queries_.load(); }

    std::pair<double, Tensor<real>> loss_input_grad(
        const Tensor<real>& images, const std::vector<int64_t>& labels) override;

    nn::ParamSet<real> params();
    void set_trainable(bool trainable);
    std::string weights_digest();

    std::vector<std::string> save(const std::filesystem::path& dir, const std::string& stage,
                                  int64_t epoch);
    static VictimModel load(const std::filesystem::path& dir, const std::string& file,
                            std::string id, std::string arch, int64_t channels,
                            int64_t image_size, int64_t n_classes);

private:
    std::string id_, arch_;
    int64_t channels_ = 1, image_size_ = 64, classes_ = 10;
    std::vector<nn::Conv2d<real>> convs_;
    std::vector<int> pool_after_;  // conv indices followed by 2x2 maxpool
    std::vector<nn::Linear<real>> fcs_;
    mutable std::atomic<int64_t> queries_{0};

public:
    VictimModel(const VictimModel& o)
        : id_(o.id_), arch_(o.arch_), channels_(o.channels_), image_size_(o.image_size_),
          classes_(o.classes_), convs_(o.convs_), pool_after_(o.pool_after_), fcs_(o.fcs_),
          queries_(o.queries_.load()) {}
    VictimModel& operator=(const VictimModel&) = delete;
    VictimModel(VictimModel&& o) noexcept
        : id_(std::move(o.id_)), arch_(std::move(o.arch_)), channels_(o.channels_),
          image_size_(o.image_size_), classes_(o.classes_), convs_(std::move(o.convs_)),
          pool_after_(std::move(o.pool_after_)), fcs_(std::move(o.fcs_)),
          queries_(o.queries_.load()) {}
    VictimModel& operator=(VictimModel&& o) noexcept {
        id_ = std::move(o.id_);
        arch_ = std::move(o.arch_);
        channels_ = o.channels_;
        image_size_ = o.image_size_;
        classes_ = o.classes_;
        convs_ = std::move(o.convs_);
        pool_after_ = std::move(o.pool_after_);
        fcs_ = std::move(o.fcs_);
        queries_.store(o.queries_.load());
        return *this;
    }
};

QueryResult query(const Classifier& victim, const Tensor<real>& images, QueryMode mode);

// Pool of (adversarial image, true label) pairs feeding adversarial
// training. Draws are sequential; a non-cycling pool throws on exhaustion.
struct AttackPool {
    std::vector<std::pair<Tensor<real>, int64_t>> pool;
    bool cycle = false;
    size_t cursor = 0;

    std::pair<Tensor<real>, int64_t> next();
};

struct VictimTrainResult {
    VictimModel model;
    double clean_accuracy = 0;
    double final_loss = 0;
};

VictimTrainResult train_victim(const data::Dataset& ds, const std::string& arch, int64_t epochs,
                               double lr, int64_t batch_size, int64_t image_size, uint64_t seed,
                               const std::string& id = "");

// Retrains from scratch on batches mixing clean images with pool draws at
// `ratio` (fraction adversarial). ratio 0 reproduces train_victim exactly.
VictimTrainResult defend_adversarial_training(const data::Dataset& ds, const std::string& arch,
                                              AttackPool& pool, double ratio, int64_t epochs,
                                              double lr, int64_t batch_size, int64_t image_size,
                                              uint64_t seed, const std::string& id = "");

// Defensive distillation: the student trains at temperature T against the
// teacher's softened predictions and is served at T=1. T=1 degenerates to
// training on the teacher's argmax labels.
VictimTrainResult defend_distillation(VictimModel& teacher, const std::string& student_arch,
                                      const data::Dataset& ds, double temperature, int64_t epochs,
                                      double lr, int64_t batch_size, int64_t image_size,
                                      uint64_t seed, const std::string& id = "");

double clean_accuracy(const Classifier& victim, const data::ImageBatch& test, int64_t image_size,
                      int64_t batch_size = 256);

// Victim bundle on disk: checkpoint + victim.json metadata (+ run manifest,
// written by the caller). `extra` lands in victim.json verbatim.
void save_victim_bundle(const std::filesystem::path& dir, VictimModel& model,
                        const std::string& stage, int64_t epochs, double clean_acc,
                        const nlohmann::json& extra = {});
VictimModel load_victim_bundle(const std::filesystem::path& dir);

// File-exchange adapter: any external program consuming a batch file and
// producing a probability file can act as a victim. Formats documented in
// the README (SVQB in, SVQP out).
class ExternalVictim : public Classifier {
public:
    ExternalVictim(std::string id, std::string command, int64_t n_classes,
                   std::filesystem::path workdir);
    std::string id() const override { return id_; }
    int64_t n_classes() const override { return classes_; }
    Tensor<real> predict_probs(const Tensor<real>& images) const override;

private:
    std::string id_, command_;
    int64_t classes_;
    std::filesystem::path workdir_;
};

}  // namespace semadv
