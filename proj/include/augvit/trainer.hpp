#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "augvit/augment.hpp"
#include "augvit/dataio.hpp"
#include "augvit/nn/model.hpp"

namespace augvit {

// ---------------------------------------------------------------------------
// protocol configuration
// ---------------------------------------------------------------------------

struct TrainConfig {
    int max_epochs = 100;
    double learning_rate = 1e-5;
    int batch_size = 64;
    int patience = 5;
    uint64_t seed = 0;

    void validate() const {
        if (max_epochs < 1) throw std::invalid_argument("train: max_epochs must be positive");
        if (!(learning_rate > 0.0))
            throw std::invalid_argument("train: learning_rate must be positive");
        if (batch_size < 1) throw std::invalid_argument("train: batch_size must be positive");
        if (patience < 1 || patience > max_epochs)
            throw std::invalid_argument("train: patience must be in [1, max_epochs]");
    }

    std::string to_text() const {
        std::ostringstream os;
        os << "max_epochs=" << max_epochs << "\n";
        os << "learning_rate=" << learning_rate << "\n";
        os << "batch_size=" << batch_size << "\n";
        os << "patience=" << patience << "\n";
        os << "seed=" << seed << "\n";
        return os.str();
    }
};

// ---------------------------------------------------------------------------
// stratified split
// ---------------------------------------------------------------------------

struct SplitIndices {
    std::vector<int> train, val, test;
};

// Per-class seeded shuffle, then rounded 60/20/20 allocation (train and val
// round to nearest, test takes the remainder) so per-class proportions stay within
// one sample of exact.
inline SplitIndices split_dataset(const std::vector<int>& labels, uint64_t seed) {
    int num_classes = 0;
    for (int l : labels) num_classes = std::max(num_classes, l + 1);
    std::vector<std::vector<int>> by_class(static_cast<size_t>(num_classes));
    for (size_t i = 0; i < labels.size(); ++i)
        by_class[static_cast<size_t>(labels[i])].push_back(static_cast<int>(i));

    SplitIndices out;
    for (int c = 0; c < num_classes; ++c) {
        auto& idx = by_class[static_cast<size_t>(c)];
        if (idx.size() < 5)
            throw std::invalid_argument("split: class " + std::to_string(c) +
                                        " has fewer than 5 samples");
        Rng rng(derive_seed(seed, 0x5b17, static_cast<uint64_t>(c)));
        shuffle(idx, rng);
        const auto n = static_cast<double>(idx.size());
        const auto n_train = static_cast<size_t>(std::lround(0.6 * n));
        const auto n_val = static_cast<size_t>(std::lround(0.2 * n));
        for (size_t i = 0; i < idx.size(); ++i) {
            if (i < n_train) out.train.push_back(idx[i]);
            else if (i < n_train + n_val) out.val.push_back(idx[i]);
            else out.test.push_back(idx[i]);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// loss
// ---------------------------------------------------------------------------

// Mean over the batch of -log softmax(logits)[target], log-sum-exp stabilized.
template <typename T>
T cross_entropy(const Tensor<T>& logits, const std::vector<int>& targets) {
    if (logits.ndim() != 2 || static_cast<size_t>(logits.dim(0)) != targets.size())
        throw std::invalid_argument("cross_entropy: logits/targets mismatch");
    const int B = logits.dim(0), C = logits.dim(1);
    T loss = T(0);
    for (int n = 0; n < B; ++n) {
        const int t = targets[static_cast<size_t>(n)];
        if (t < 0 || t >= C) throw std::invalid_argument("cross_entropy: target out of range");
        const T* row = &logits.data[static_cast<size_t>(n) * C];
        T mx = row[0];
        for (int c = 1; c < C; ++c) mx = std::max(mx, row[c]);
        T sum = T(0);
        for (int c = 0; c < C; ++c) sum += std::exp(row[c] - mx);
        loss += mx + std::log(sum) - row[t];
    }
    return loss / static_cast<T>(B);
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

template <typename T>
struct AdamState {
    std::vector<Tensor<T>> m, v;
    int64_t step = 0;

    static AdamState init(const std::vector<Parameter<T>*>& params) {
        AdamState s;
        for (const auto* p : params) {
            s.m.emplace_back(p->value.shape);
            s.v.emplace_back(p->value.shape);
        }
        return s;
    }
};

// One Adam update (b1 0.9, b2 0.999, eps 1e-8, bias corrected) over the
// trainable parameters, reading gradients from Parameter::grad.
template <typename T>
void optimizer_step(std::vector<Parameter<T>*>& params, AdamState<T>& state, double lr) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    if (state.m.size() != params.size())
        throw std::invalid_argument("adam: state/parameter mismatch");
    state.step += 1;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    for (size_t pi = 0; pi < params.size(); ++pi) {
        auto* p = params[pi];
        if (!p->trainable) continue;
        auto& m = state.m[pi];
        auto& v = state.v[pi];
        if (m.shape != p->value.shape)
            throw std::invalid_argument("adam: shape mismatch on " + p->name);
        for (size_t i = 0; i < p->value.data.size(); ++i) {
            const double g = static_cast<double>(p->grad.data[i]);
            const double mi = b1 * static_cast<double>(m.data[i]) + (1.0 - b1) * g;
            const double vi = b2 * static_cast<double>(v.data[i]) + (1.0 - b2) * g * g;
            m.data[i] = static_cast<T>(mi);
            v.data[i] = static_cast<T>(vi);
            const double update = lr * (mi / bc1) / (std::sqrt(vi / bc2) + eps);
            p->value.data[i] = static_cast<T>(static_cast<double>(p->value.data[i]) - update);
        }
    }
}

// ---------------------------------------------------------------------------
// early stopping
// ---------------------------------------------------------------------------

// Counter increments when the epoch loss exceeds the best seen; improvement
// resets it. Equal losses leave the counter untouched.
struct EarlyStopper {
    int patience;
    double best = std::numeric_limits<double>::infinity();
    int best_epoch = 0;
    int counter = 0;

    explicit EarlyStopper(int patience_epochs) : patience(patience_epochs) {}

    // epoch numbering is 1-based; returns true when training should stop
    bool update(int epoch, double val_loss) {
        if (val_loss < best) {
            best = val_loss;
            best_epoch = epoch;
            counter = 0;
        } else if (val_loss > best) {
            ++counter;
        }
        return counter >= patience;
    }
};

// ---------------------------------------------------------------------------
// metrics
// ---------------------------------------------------------------------------

struct Metrics {
    double accuracy = 0.0;
    double precision = 0.0;  // macro
    double recall = 0.0;     // macro
    double f1 = 0.0;         // macro
    std::vector<int64_t> confusion;  // row = actual, col = predicted
    int num_classes = 0;

    int64_t confusion_at(int actual, int predicted) const {
        return confusion[static_cast<size_t>(actual) * num_classes + predicted];
    }
};

// Macro-averaged metrics from (prediction, target) pairs. Classes absent from
// the slice contribute zero precision/recall and emit a warning.
inline Metrics metrics_from_predictions(const std::vector<int>& predictions,
                                        const std::vector<int>& targets, int num_classes,
                                        bool warn_missing = true) {
    if (predictions.size() != targets.size())
        throw std::invalid_argument("metrics: prediction/target size mismatch");
    Metrics m;
    m.num_classes = num_classes;
    m.confusion.assign(static_cast<size_t>(num_classes) * num_classes, 0);
    for (size_t i = 0; i < targets.size(); ++i)
        m.confusion[static_cast<size_t>(targets[i]) * num_classes + predictions[i]]++;

    int64_t correct = 0, total = 0;
    double prec_sum = 0.0, rec_sum = 0.0, f1_sum = 0.0;
    for (int c = 0; c < num_classes; ++c) {
        int64_t tp = m.confusion_at(c, c), actual = 0, predicted = 0;
        for (int j = 0; j < num_classes; ++j) {
            actual += m.confusion_at(c, j);
            predicted += m.confusion_at(j, c);
        }
        correct += tp;
        total += actual;
        if (actual == 0 && warn_missing)
            std::cerr << "[metrics] warning: class " << c
                      << " absent from the evaluated slice\n";
        const double prec = predicted > 0 ? static_cast<double>(tp) / predicted : 0.0;
        const double rec = actual > 0 ? static_cast<double>(tp) / actual : 0.0;
        prec_sum += prec;
        rec_sum += rec;
        f1_sum += (prec + rec) > 0.0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
    }
    m.accuracy = total > 0 ? static_cast<double>(correct) / total : 0.0;
    m.precision = prec_sum / num_classes;
    m.recall = rec_sum / num_classes;
    m.f1 = f1_sum / num_classes;
    return m;
}

// ---------------------------------------------------------------------------
// batched prediction / evaluation
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> make_batch(const Dataset& ds, const std::vector<int>& indices, size_t from,
                     size_t count, int input_size) {
    Tensor<T> batch({static_cast<int>(count), 3, input_size, input_size});
    for (size_t i = 0; i < count; ++i) {
        const auto& img = ds.samples[static_cast<size_t>(indices[from + i])].first;
        const Tensor<T> t = to_tensor<T>(img, 3);
        std::copy(t.data.begin(), t.data.end(),
                  batch.data.begin() + static_cast<int64_t>(i) * t.numel());
    }
    return batch;
}

template <typename T>
std::vector<int> predict_indices(Model<T>& model, const Dataset& ds,
                                 const std::vector<int>& indices, int batch_size = 64) {
    std::vector<int> preds;
    preds.reserve(indices.size());
    const int S = model.config().input_size;
    for (size_t at = 0; at < indices.size(); at += static_cast<size_t>(batch_size)) {
        const size_t count = std::min(static_cast<size_t>(batch_size), indices.size() - at);
        const auto logits = model.predict(make_batch<T>(ds, indices, at, count, S));
        for (size_t i = 0; i < count; ++i) {
            int arg = 0;
            for (int c = 1; c < logits.dim(1); ++c)
                if (logits.at(static_cast<int>(i), c) > logits.at(static_cast<int>(i), arg))
                    arg = c;
            preds.push_back(arg);
        }
    }
    return preds;
}

template <typename T>
Metrics evaluate(Model<T>& model, const Dataset& ds, const std::vector<int>& indices,
                 int batch_size = 64) {
    if (indices.empty()) throw std::invalid_argument("evaluate: empty index list");
    const auto preds = predict_indices(model, ds, indices, batch_size);
    std::vector<int> targets;
    targets.reserve(indices.size());
    for (int i : indices) targets.push_back(ds.samples[static_cast<size_t>(i)].second);
    return metrics_from_predictions(preds, targets, ds.num_classes());
}

// ---------------------------------------------------------------------------
// training loop
// ---------------------------------------------------------------------------

struct TrainHistory {
    std::vector<double> train_loss, val_loss, val_accuracy;
    int stopped_epoch = 0;  // epochs actually run
    int best_epoch = 0;     // epoch with minimum validation loss

    std::string to_csv() const {
        std::ostringstream os;
        os << "epoch,train_loss,val_loss,val_accuracy\n";
        for (size_t e = 0; e < train_loss.size(); ++e) {
            char buf[128];
            std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g\n", e + 1, train_loss[e],
                          val_loss[e], val_accuracy[e]);
            os << buf;
        }
        return os.str();
    }

    bool operator==(const TrainHistory&) const = default;
};

// Validation pass: un-augmented images, eval-mode forward.
template <typename T>
std::pair<double, double> validation_loss_accuracy(Model<T>& model, const Dataset& ds,
                                                   const std::vector<int>& indices,
                                                   int batch_size) {
    const int S = model.config().input_size;
    double loss_sum = 0.0;
    int64_t correct = 0;
    for (size_t at = 0; at < indices.size(); at += static_cast<size_t>(batch_size)) {
        const size_t count = std::min(static_cast<size_t>(batch_size), indices.size() - at);
        const auto batch = make_batch<T>(ds, indices, at, count, S);
        std::vector<int> targets(count);
        for (size_t i = 0; i < count; ++i)
            targets[i] = ds.samples[static_cast<size_t>(indices[at + i])].second;
        const auto logits = model.predict(batch);
        loss_sum += static_cast<double>(cross_entropy(logits, targets)) * count;
        for (size_t i = 0; i < count; ++i) {
            int arg = 0;
            for (int c = 1; c < logits.dim(1); ++c)
                if (logits.at(static_cast<int>(i), c) > logits.at(static_cast<int>(i), arg))
                    arg = c;
            if (arg == targets[i]) ++correct;
        }
    }
    return {loss_sum / static_cast<double>(indices.size()),
            static_cast<double>(correct) / static_cast<double>(indices.size())};
}

// The full protocol: per epoch, an augment-on-the-fly training pass over a
// reshuffled train split, then an un-augmented validation pass feeding the
// patience counter. Augmentation substreams are keyed by (epoch, dataset
// sample index), so they are independent of batch order. Returns the history;
// the model is left holding the best-epoch weights.
template <typename T>
TrainHistory train(Model<T>& model, const Dataset& ds, const SplitIndices& split,
                   const AugmentationPipeline& pipeline, const TrainConfig& cfg,
                   bool verbose = false) {
    cfg.validate();
    pipeline.validate();
    if (split.train.empty() || split.val.empty())
        throw std::invalid_argument("train: empty train or validation split");

    const int S = model.config().input_size;
    auto& params = model.parameters();
    auto adam = AdamState<T>::init(params);
    EarlyStopper stopper(cfg.patience);
    TrainHistory hist;
    auto best_state = model.snapshot();

    std::vector<int> order = split.train;
    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        Rng shuffle_rng(derive_seed(cfg.seed, 0xe90c, static_cast<uint64_t>(epoch)));
        shuffle(order, shuffle_rng);

        double loss_sum = 0.0;
        int64_t seen = 0;
        for (size_t at = 0; at < order.size(); at += static_cast<size_t>(cfg.batch_size)) {
            const size_t count =
                std::min(static_cast<size_t>(cfg.batch_size), order.size() - at);
            Tensor<T> batch({static_cast<int>(count), 3, S, S});
            std::vector<int> targets(count);
            for (size_t i = 0; i < count; ++i) {
                const int idx = order[at + i];
                const auto& sample = ds.samples[static_cast<size_t>(idx)];
                const ImageBuffer aug = pipeline.apply(sample.first,
                                                       static_cast<uint64_t>(epoch),
                                                       static_cast<uint64_t>(idx));
                const Tensor<T> t = to_tensor<T>(aug, 3);
                std::copy(t.data.begin(), t.data.end(),
                          batch.data.begin() + static_cast<int64_t>(i) * t.numel());
                targets[i] = sample.second;
            }

            model.zero_grads();
            Tape<T> tape;
            const auto logits = model.forward(tape, batch, true);
            const auto loss = tape.cross_entropy(logits, targets);
            const double loss_value = static_cast<double>(tape.val(loss).data[0]);
            if (!std::isfinite(loss_value))
                throw std::runtime_error("train: non-finite loss at epoch " +
                                         std::to_string(epoch) + ", batch offset " +
                                         std::to_string(at));
            tape.backward(loss);
            optimizer_step(params, adam, cfg.learning_rate);
            loss_sum += loss_value * static_cast<double>(count);
            seen += static_cast<int64_t>(count);
        }

        const auto [vloss, vacc] =
            validation_loss_accuracy(model, ds, split.val, cfg.batch_size);
        hist.train_loss.push_back(loss_sum / static_cast<double>(seen));
        hist.val_loss.push_back(vloss);
        hist.val_accuracy.push_back(vacc);
        hist.stopped_epoch = epoch;
        if (verbose)
            std::cerr << "[train] epoch " << epoch << " train_loss " << hist.train_loss.back()
                      << " val_loss " << vloss << " val_acc " << vacc << "\n";

        const bool improved = vloss < stopper.best;
        const bool stop = stopper.update(epoch, vloss);
        if (improved) best_state = model.snapshot();
        if (stop) break;
    }

    hist.best_epoch = stopper.best_epoch;
    model.restore(best_state);
    return hist;
}

}  // namespace augvit
