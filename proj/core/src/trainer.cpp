#include "probcontour/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>

#include "probcontour/errors.hpp"
#include "probcontour/inference.hpp"
#include "probcontour/json_io.hpp"
#include "probcontour/metrics.hpp"

namespace probcontour {

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("train: learning_rate must be > 0");
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (epochs < 0) throw ConfigError("train: epochs must be >= 0");
    if (patience < 1) throw ConfigError("train: patience must be >= 1");
    if (checkpoint_every < 0) throw ConfigError("train: checkpoint_every must be >= 0");
    loss.validate();
}

ContourVector predict_contour(const Network& net, const Image& image, const PcaShapeModel& model,
                              double sigma2) {
    switch (net.spec().mode) {
        case HeadMode::Probabilistic:
            return predict(net, image, model, sigma2).mean;
        case HeadMode::DirectVertex:
            return net.forward_direct(image);
        case HeadMode::DetPca: {
            const auto [z, shift] = net.forward_detpca(image);
            return decode(model, z, shift);
        }
    }
    throw Error("unreachable head mode");
}

EvalSummary evaluate(const Network& net, const std::vector<const DatasetItem*>& items,
                     const PcaShapeModel& model, double sigma2) {
    if (items.empty()) throw ConfigError("evaluate: empty split");
    std::vector<double> dices, rmses;
    dices.reserve(items.size());
    rmses.reserve(items.size());
    for (const DatasetItem* item : items) {
        const ContourVector pred = predict_contour(net, item->image, model, sigma2);
        const BinaryMask pm = rasterize(pred, item->image.height, item->image.width);
        const BinaryMask rm = rasterize(item->contour, item->image.height, item->image.width);
        dices.push_back(dice(pm, rm));
        rmses.push_back(rmse(pred, item->contour));
    }
    const auto mean_std = [](const std::vector<double>& v) {
        double m = 0.0;
        for (const double x : v) m += x;
        m /= static_cast<double>(v.size());
        double var = 0.0;
        for (const double x : v) var += (x - m) * (x - m);
        var /= static_cast<double>(v.size());  // population convention
        return std::pair<double, double>{m, std::sqrt(var)};
    };
    EvalSummary s;
    std::tie(s.dice_mean, s.dice_std) = mean_std(dices);
    std::tie(s.rmse_mean, s.rmse_std) = mean_std(rmses);
    s.count = static_cast<int>(items.size());
    return s;
}

namespace {

NetworkSpec spec_for(const TrainConfig& cfg, const ShapeDataset& ds, const PcaShapeModel& model) {
    const int h = ds.items.empty() ? 0 : ds.items.front().image.height;
    const int w = ds.items.empty() ? 0 : ds.items.front().image.width;
    return NetworkSpec::by_name(cfg.arch, h, w, model.num_components, ds.vertex_count, cfg.mode);
}

TrainResult train_impl(const ShapeDataset& dataset, const PcaShapeModel& model,
                       const TrainConfig& cfg, Network net, RmsProp opt, long step0) {
    const auto train_items = dataset.split_items("train");
    const auto val_items = dataset.split_items("val");
    if (train_items.empty()) throw ConfigError("train: empty train split");
    if (val_items.empty()) throw ConfigError("train: empty val split");

    // Leakage guard: the PCA prior and the encoder must see train data only.
    const std::uint64_t h_train = split_contour_hash(dataset, "train");
    for (const char* other : {"val", "test"}) {
        if (dataset.split_ids(other).empty()) continue;
        if (split_contour_hash(dataset, other) == h_train) {
            throw ConfigError(std::string("train: '") + other + "' split hash equals train split hash");
        }
    }

    TrainResult result{std::move(net), {}, step0, 0, -1.0, false};
    Network best = result.net;
    long step = step0;
    const RngStream root(cfg.seed);

    std::vector<Tensor*> param_ptrs;
    std::vector<std::string> grad_names = result.net.param_names();

    int since_best = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();

        std::vector<int> order(train_items.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
        RngStream shuffle_rng = root.substream("shuffle", static_cast<std::uint64_t>(epoch));
        for (int i = static_cast<int>(order.size()) - 1; i > 0; --i) {
            const auto j = static_cast<int>(shuffle_rng.bounded(static_cast<std::uint64_t>(i + 1)));
            std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
        }

        LossBreakdown epoch_loss;
        int batches = 0;
        const int nb = static_cast<int>(order.size()) / cfg.batch_size;  // drop remainder
        for (int b = 0; b < nb; ++b) {
            std::vector<BatchExample> batch;
            batch.reserve(static_cast<std::size_t>(cfg.batch_size));
            for (int i = 0; i < cfg.batch_size; ++i) {
                const DatasetItem* item = train_items[static_cast<std::size_t>(
                    order[static_cast<std::size_t>(b * cfg.batch_size + i)])];
                batch.push_back(BatchExample{&item->image, &item->contour, item->id});
            }

            ad::Tape tape;
            BoundNetwork bound(tape, result.net);
            ad::Var total;
            LossBreakdown bd;
            if (cfg.mode == HeadMode::Probabilistic) {
                const TotalLossVars vars =
                    total_loss_graph(bound, batch, model, cfg.loss, cfg.seed, epoch);
                total = vars.total;
                bd.total = tape.value(vars.total)[0];
                bd.neg_loglik = tape.value(vars.neg_loglik)[0];
                bd.kld = tape.value(vars.kld)[0];
            } else {
                total = baseline_loss_graph(bound, batch, model);
                bd.total = tape.value(total)[0];
                bd.neg_loglik = bd.total;
                bd.kld = 0.0;
            }
            if (!std::isfinite(bd.total)) {
                std::fprintf(stderr, "train: non-finite loss at epoch %d step %ld; aborting\n",
                             epoch, step);
                result.aborted = true;
                result.net = std::move(best);
                return result;
            }
            tape.backward(total);

            param_ptrs.clear();
            std::vector<Tensor> grads;
            grads.reserve(result.net.params().size());
            for (std::size_t i = 0; i < result.net.params().size(); ++i) {
                param_ptrs.push_back(&result.net.params()[i]);
                grads.push_back(tape.grad(bound.param_vars()[i]));
            }
            opt.step(param_ptrs, grads, grad_names);
            ++step;

            epoch_loss.total += bd.total;
            epoch_loss.neg_loglik += bd.neg_loglik;
            epoch_loss.kld += bd.kld;
            ++batches;
        }
        if (batches > 0) {
            epoch_loss.total /= batches;
            epoch_loss.neg_loglik /= batches;
            epoch_loss.kld /= batches;
        }

        const EvalSummary val = evaluate(result.net, val_items, model, cfg.loss.sigma2);
        const auto t1 = std::chrono::steady_clock::now();

        TrainLogRecord rec;
        rec.epoch = epoch;
        rec.step = step;
        rec.loss = epoch_loss;
        rec.val_dice = val.dice_mean;
        rec.val_rmse = val.rmse_mean;
        rec.seconds = std::chrono::duration<double>(t1 - t0).count();
        result.log.push_back(rec);
        if (cfg.verbose) {
            std::fprintf(stderr,
                         "epoch %3d  step %6ld  total %.4g  nll %.4g  kld %.4g  val_dice %.4f  "
                         "val_rmse %.3f  (%.1fs)\n",
                         epoch, step, epoch_loss.total, epoch_loss.neg_loglik, epoch_loss.kld,
                         val.dice_mean, val.rmse_mean, rec.seconds);
        }

        if (val.dice_mean > result.best_val_dice) {
            result.best_val_dice = val.dice_mean;
            result.best_epoch = epoch;
            best = result.net;
            since_best = 0;
        } else {
            ++since_best;
        }

        if (cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0 &&
            !cfg.checkpoint_dir.empty()) {
            std::filesystem::create_directories(cfg.checkpoint_dir);
            save_checkpoint(result.net,
                            cfg.checkpoint_dir / ("epoch_" + std::to_string(epoch) + ".json"),
                            CheckpointMeta{step, epoch, true}, &opt.accumulators());
        }

        if (since_best >= cfg.patience) break;
    }

    result.total_steps = step;
    if (result.best_val_dice >= 0.0 && cfg.epochs > 0) result.net = std::move(best);
    return result;
}

}  // namespace

TrainResult train(const ShapeDataset& dataset, const PcaShapeModel& model, const TrainConfig& cfg) {
    cfg.validate();
    Network net(spec_for(cfg, dataset, model), cfg.seed);
    RmsProp opt(RmsPropConfig{cfg.learning_rate, cfg.rmsprop_decay, cfg.rmsprop_epsilon});
    return train_impl(dataset, model, cfg, std::move(net), std::move(opt), 0);
}

TrainResult train_from(const ShapeDataset& dataset, const PcaShapeModel& model,
                       const TrainConfig& cfg, const LoadedCheckpoint& resume) {
    cfg.validate();
    RmsProp opt(RmsPropConfig{cfg.learning_rate, cfg.rmsprop_decay, cfg.rmsprop_epsilon});
    if (!resume.optimizer_acc.empty()) opt.accumulators() = resume.optimizer_acc;
    return train_impl(dataset, model, cfg, resume.net, std::move(opt), resume.meta.step);
}

void write_train_log_csv(const std::vector<TrainLogRecord>& log,
                         const std::filesystem::path& path) {
    std::string csv = "epoch,step,total,negloglik,kld,val_dice,val_rmse,seconds\n";
    for (const auto& r : log) {
        char buf[256];
        std::snprintf(buf, sizeof(buf), "%d,%ld,%.17g,%.17g,%.17g,%.17g,%.17g,%.3f\n", r.epoch,
                      r.step, r.loss.total, r.loss.neg_loglik, r.loss.kld, r.val_dice, r.val_rmse,
                      r.seconds);
        csv += buf;
    }
    write_text_file(path, csv);
}

}  // namespace probcontour
