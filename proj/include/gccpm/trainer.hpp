#pragma once

// Training loop and evaluation runs.

#include "gccpm/augment.hpp"
#include "gccpm/codec.hpp"
#include "gccpm/metrics.hpp"
#include "gccpm/model.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace gccpm {

struct TrainConfig {
    double lr = 4e-5;
    // Divide lr by this factor on a plateau, at most max_decays times.
    double lr_decay_factor = 10.0;
    int max_decays = 2;
    // A val_loss counts as an improvement when below best * (1 - plateau_threshold).
    double plateau_threshold = 1e-3;
    // Evaluations without improvement before decaying.
    int plateau_patience = 3;
    int batch_size = 8;
    int max_iters = 2000;
    int eval_interval = 100;
    std::uint64_t seed = 0;
    // Apply the augment section to training batches.
    bool augment = false;

    void validate() const;
};

struct HistoryEntry {
    int iteration = 0;
    // Mean minibatch loss since the previous evaluation.
    double train_loss = 0.0;
    // Unaugmented loss over the validation set (training set when none is given).
    double val_loss = 0.0;
    double mean_pckh = 0.0;
    // Rate used for the iterations ending here.
    double lr = 0.0;
};

struct TrainHistory {
    std::vector<HistoryEntry> entries;

    std::string to_csv() const;
    bool operator==(const TrainHistory&) const;
};

struct TrainResult {
    Model model;
    TrainHistory history;
    // Unaugmented loss over the training set before the first and after the last update.
    double initial_train_loss = 0.0;
    double final_train_loss = 0.0;
    int best_iteration = 0;
};

struct TrainOptions {
    // When set: best.json/.bin, final.json/.bin and history.csv are written here.
    std::filesystem::path output_dir;
    std::function<void(const HistoryEntry&)> on_eval;
};

TrainResult train(const ModelConfig& model_cfg, const TrainConfig& cfg, const CodecConfig& codec,
                  const AugmentConfig& augment_cfg, const std::vector<Sample>& train_set,
                  const std::vector<Sample>& val_set = {}, const TrainOptions& options = {});

/// Mean over samples of the summed per-stage loss, no augmentation, in batches.
double dataset_loss(const Model& model, const std::vector<Sample>& samples, const CodecConfig& codec,
                    int batch_size = 8);

/// Median over samples of each stage's loss.
std::vector<double> per_stage_median_loss(const Model& model, const std::vector<Sample>& samples,
                                          const CodecConfig& codec);

/// Final-stage heatmaps of one normalised 1 x 3 x S x S image.
HeatmapFn final_stage_fn(const Model& model);

/// Decodes final-stage heatmaps (optionally flip and/or multi-scale averaged;
/// empty scales means a single plain pass) and scores PCKh@0.5 and AUC.
EvalResult evaluate(const Model& model, const std::vector<Sample>& dataset, const CodecConfig& codec,
                    bool use_flip = false, const std::vector<double>& scales = {});

/// Codec matching a model's heatmap geometry.
CodecConfig codec_for(const ModelConfig& cfg, double sigma = 2.0);

} // namespace gccpm
