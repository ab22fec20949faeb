#pragma once

#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "jeca/core.hpp"
#include "jeca/tensor.hpp"
#include "jeca/vocab.hpp"

namespace jeca {

struct DetectorConfig {
    int image_size = 64;
    int patch = 8;
    int dim = 64;
    int layers = 4;
    int heads = 4;
    int mlp_hidden = 128;
    int prompt_tokens = 4;
    int vocab_size = 512;
    uint64_t seed = 1;

    int patch_grid() const { return image_size / patch; }
    int patches() const { return patch_grid() * patch_grid(); }
    int seq_len() const { return 1 + prompt_tokens + patches(); }
    int head_dim() const { return dim / heads; }
    // "Later layers" used for attention aggregation: the top half.
    int agg_layer_lo() const { return layers / 2; }
    int agg_layer_hi() const { return layers; }
};

void validate(const DetectorConfig& cfg);

struct NamedParam {
    std::string name;
    int rows = 0;
    int cols = 0;
    std::vector<double> v;
};

struct ToyDetectorParams {
    DetectorConfig cfg;
    Vocabulary vocabulary;
    PromptEmbedding prompt;  // default prompt E0
    std::vector<NamedParam> params;

    int index_of(const std::string& name) const;
    const NamedParam& at(const std::string& name) const;
};

// Fresh (untrained) parameters with seeded initialization.
ToyDetectorParams init_detector_params(const DetectorConfig& cfg);

void save_detector(const std::string& path, const ToyDetectorParams& params);
ToyDetectorParams load_detector(const std::string& path);

// One recorded forward pass: outputs plus attention internals with gradient
// access. Token order is [CLS, prompt tokens, patch tokens].
struct DetectorForward {
    Tensor image;             // flattened H*W*3 x 1 input node
    Tensor embedding;         // n x d prompt node
    Tensor class_logits;      // 1 x 2, [Real, Fake]
    Tensor mask_patch_logits; // P*P x 1 localization head on the patch grid
    Tensor mask_logits;       // H*W x 1, bilinear from the patch grid
    Tensor patch_features;    // P*P x d final-layer patch states (post final LN)
    // Full sequence state after each encoder block (S x d per layer). These
    // nodes feed the rest of the network, so their adjoints are live; the
    // attribution proxy slices out the patch-token rows of both the state and
    // its gradient.
    std::vector<Tensor> layer_states;
    // Full S x S attention matrices per [layer][head]; gradients taken with
    // respect to these flow into the rows the model actually used.
    std::vector<std::vector<Tensor>> attn;
    int prompt_tokens = 0;
    int patch_grid = 0;
};

struct DetectorPrediction {
    Label label = Label::Real;
    double p_fake = 0.0;
    std::vector<double> mask_prob;  // H*W sigmoid probabilities
    TamperMask mask;                // thresholded at 0.5
    std::string explanation;
};

// The detector contract the attack stack programs against: a recorded
// differentiable forward pass plus numeric readout. Everything downstream
// (losses, attention proxy, optimizer, runner) consumes only this surface, so
// any detector exposing it slots in without downstream changes.
class DetectorInterface {
public:
    virtual ~DetectorInterface() = default;

    virtual DetectorForward forward(const Tensor& image_flat, const Tensor& embedding) const = 0;
    virtual DetectorPrediction interpret(const DetectorForward& fwd) const = 0;

    virtual Tensor image_node(const ImageTensor& img, bool needs_grad = false) const = 0;
    virtual Tensor embedding_node(const PromptEmbedding& e, bool needs_grad = false) const = 0;

    // Patch grid -> pixel interpolation used to upsample attribution maps.
    virtual const Tensor& upsample_matrix() const = 0;
    // "Later layers" range for the attribution aggregation.
    virtual int agg_layer_lo() const = 0;
    virtual int agg_layer_hi() const = 0;
    virtual const PromptEmbedding& default_prompt() const = 0;
    virtual const Vocabulary& vocabulary() const = 0;

    DetectorPrediction predict(const ImageTensor& img, const PromptEmbedding& prompt) const {
        return interpret(forward(image_node(img), embedding_node(prompt)));
    }
    DetectorPrediction predict(const ImageTensor& img) const {
        return predict(img, default_prompt());
    }
};

class ToyDetector final : public DetectorInterface {
public:
    explicit ToyDetector(ToyDetectorParams params);

    const ToyDetectorParams& params() const { return params_; }
    const DetectorConfig& config() const { return params_.cfg; }

    // Differentiable forward pass. When `trainable_params` is supplied it must
    // contain one node per NamedParam, in the same order; otherwise cached
    // constant weight nodes are used.
    DetectorForward forward(const Tensor& image_flat, const Tensor& embedding,
                            const std::vector<Tensor>* trainable_params) const;
    DetectorForward forward(const Tensor& image_flat, const Tensor& embedding) const override {
        return forward(image_flat, embedding, nullptr);
    }

    // Numeric readout of an existing forward pass (label, mask, explanation).
    DetectorPrediction interpret(const DetectorForward& fwd) const override;

    Tensor image_node(const ImageTensor& img, bool needs_grad = false) const override;
    Tensor embedding_node(const PromptEmbedding& e, bool needs_grad = false) const override;

    // Constant H*W x P*P bilinear interpolation matrix (patch grid -> pixels).
    const Tensor& upsample_matrix() const override { return upsample_; }
    int agg_layer_lo() const override { return params_.cfg.agg_layer_lo(); }
    int agg_layer_hi() const override { return params_.cfg.agg_layer_hi(); }
    const PromptEmbedding& default_prompt() const override { return params_.prompt; }
    const Vocabulary& vocabulary() const override { return params_.vocabulary; }

private:
    ToyDetectorParams params_;
    std::vector<Tensor> weight_nodes_;  // cached constants, one per NamedParam
    Tensor upsample_;
    std::shared_ptr<const std::vector<int>> patch_index_;  // patchify gather order
};

// Templated explanation from the prediction and the attention argmax region.
std::string render_explanation(Label label, int region_row, int region_col, int grid);

struct TrainOptions {
    int epochs = 12;
    int batch = 16;
    double lr = 2e-3;
    double mask_loss_weight = 2.0;
    double mask_pos_weight = 6.0;  // positive-patch weight in the mask BCE
    double label_smoothing = 0.1;  // keeps class margins in an attackable range
    double noise_augment = 0.0;  // uniform pixel noise amplitude during training
    uint64_t seed = 7;
    double min_accuracy = 0.90;
    double min_mask_iou = 0.40;
    int log_every = 1;
};

struct TrainReport {
    double test_accuracy = 0.0;
    double clean_fake_iou = 0.0;  // mean IoU over correctly detected test fakes
    std::vector<std::string> log_lines;  // CSV: epoch,loss,accuracy,iou
};

// Trains on a forgery-bench dataset directory; deterministic for a fixed
// seed. Throws if the held-out accuracy or localization floor is not met.
ToyDetectorParams train_toy_detector(const std::string& dataset_dir, const TrainOptions& opt,
                                     const DetectorConfig& cfg, TrainReport* report = nullptr,
                                     std::ostream* progress = nullptr);

}  // namespace jeca
