#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "probcontour/data.hpp"
#include "probcontour/encoder.hpp"
#include "probcontour/loss.hpp"
#include "probcontour/optimizer.hpp"
#include "probcontour/shape_model.hpp"

namespace probcontour {

struct TrainConfig {
    double learning_rate = 1e-4;  // 1e-6 reproduces the reference protocol; too slow at desk scale
    int batch_size = 5;
    int epochs = 100;
    std::uint64_t seed = 0;
    LossConfig loss;
    HeadMode mode = HeadMode::Probabilistic;
    std::string arch = "small-cnn";
    int patience = 50;            // epochs without val-DICE improvement before stopping
    int checkpoint_every = 0;     // epochs; 0 = none during training
    double rmsprop_decay = 0.9;
    double rmsprop_epsilon = 1e-8;
    std::filesystem::path checkpoint_dir;  // used when checkpoint_every > 0
    bool verbose = false;

    void validate() const;
};

struct TrainLogRecord {
    int epoch = 0;
    long step = 0;            // cumulative optimizer steps
    LossBreakdown loss;       // epoch means
    double val_dice = 0.0;
    double val_rmse = 0.0;
    double seconds = 0.0;     // wall time for the epoch
};

struct EvalSummary {
    double dice_mean = 0.0;
    double dice_std = 0.0;  // population standard deviation
    double rmse_mean = 0.0;
    double rmse_std = 0.0;
    int count = 0;
};

struct TrainResult {
    Network net;  // best validation-DICE parameters
    std::vector<TrainLogRecord> log;
    long total_steps = 0;
    int best_epoch = 0;
    double best_val_dice = 0.0;
    bool aborted = false;  // non-finite loss encountered; net holds last good params
};

/// Mini-batch training with RMSProp: seeded shuffles per epoch, the last
/// incomplete batch dropped, one optimizer step per batch, per-epoch
/// validation, best-checkpoint selection by validation DICE.
/// The PCA model must be fitted on the train split only; its contour hash is
/// checked against the validation/test splits to rule out leakage.
TrainResult train(const ShapeDataset& dataset, const PcaShapeModel& model, const TrainConfig& cfg);

/// Resumes a checkpoint (parameters, optimizer accumulators, step counter).
TrainResult train_from(const ShapeDataset& dataset, const PcaShapeModel& model,
                       const TrainConfig& cfg, const LoadedCheckpoint& resume);

/// Per-subject DICE (flood-filled contours on the image grid) and vertex
/// RMSE; probabilistic networks are scored on the predictive mean.
EvalSummary evaluate(const Network& net, const std::vector<const DatasetItem*>& items,
                     const PcaShapeModel& model, double sigma2);

/// Mean contour prediction for one item under the network's head mode.
ContourVector predict_contour(const Network& net, const Image& image, const PcaShapeModel& model,
                              double sigma2);

/// Append-only CSV: epoch,step,total,negloglik,kld,val_dice,val_rmse,seconds.
void write_train_log_csv(const std::vector<TrainLogRecord>& log, const std::filesystem::path& path);

}  // namespace probcontour
