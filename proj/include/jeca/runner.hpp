#pragma once

#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "jeca/detector.hpp"
#include "jeca/forgery.hpp"
#include "jeca/optimizer.hpp"
#include "jeca/record.hpp"

namespace jeca {

struct BatchOptions {
    std::string dataset_dir;
    std::string output_dir;
    AttackConfig attack;
    std::string method = "jeca2";
    int workers = 1;
    int limit = -1;  // attack only the first N test fakes when >= 0
    bool save_adversarial = false;
    bool deterministic_check = false;  // internal knob for tests
};

std::string records_path(const BatchOptions& opt);

// One test-split fake plus its ground-truth mask.
struct BatchItem {
    std::string id;
    ImageTensor image;
    TamperMask gt_mask;
};

std::vector<BatchItem> load_test_fakes(const std::string& dataset_dir, int limit = -1);

// Attacks every test fake with the configured method; records are written in
// dataset order so reruns with the same seed are byte-identical. Returns the
// in-memory record file. Observers (when supplied) are invoked only for the
// first `observe_first` images, on the worker thread that owns the image.
struct BatchObserver {
    int observe_first = 0;
    std::function<void(int item_index, const AttackState&)> on_iteration;
};

RecordFile run_attack_batch(const DetectorInterface& det, const BatchOptions& opt,
                            std::ostream* progress = nullptr, const BatchObserver& observer = {});

// Share of records that completed without flags.
double unflagged_fraction(const RecordFile& file);

// Raw little-endian double dump of delta with a small header; lossless.
void save_delta(const std::string& path, const Perturbation& delta);
Perturbation load_delta(const std::string& path);

}  // namespace jeca
