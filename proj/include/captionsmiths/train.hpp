#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <thread>
#include <vector>

#include "captionsmiths/conditioner.hpp"
#include "captionsmiths/corpus.hpp"
#include "captionsmiths/error.hpp"
#include "captionsmiths/model.hpp"
#include "captionsmiths/rng.hpp"

namespace captionsmiths {

struct TrainOptions {
    std::size_t epochs = 30;
    double learning_rate = 3e-4;
    std::size_t batch_size = 32;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::size_t jobs = 1;
    std::uint64_t seed = 0;
    std::function<void(std::size_t epoch, double mean_loss)> on_epoch;
};

/// Runs fn(i) for i in [0, n) on up to `jobs` threads, thread t taking the
/// indices congruent to t. Callers write results into per-index slots, so the
/// outcome does not depend on the thread count.
template <class Fn>
void parallel_for(std::size_t n, std::size_t jobs, Fn&& fn) {
    jobs = std::max<std::size_t>(1, std::min(jobs, n));
    if (jobs == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::exception_ptr> errors(jobs);
    {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < jobs; ++t) {
            pool.emplace_back([&, t] {
                try {
                    for (std::size_t i = t; i < n; i += jobs) fn(i);
                } catch (...) {
                    errors[t] = std::current_exception();
                }
            });
        }
    }
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

template <class S>
class Adam {
public:
    using Mat = Matrix<S>;

    Adam(const std::vector<Mat>& params, const TrainOptions& opts) : opts_(opts) {
        for (const auto& p : params) {
            m_.push_back(Mat::Zero(p.rows(), p.cols()));
            v_.push_back(Mat::Zero(p.rows(), p.cols()));
        }
    }

    void step(std::vector<Mat>& params, const std::vector<Mat>& grads) {
        ++t_;
        const S b1 = static_cast<S>(opts_.beta1), b2 = static_cast<S>(opts_.beta2);
        const S c1 = static_cast<S>(1.0 - std::pow(opts_.beta1, static_cast<double>(t_)));
        const S c2 = static_cast<S>(1.0 - std::pow(opts_.beta2, static_cast<double>(t_)));
        const S lr = static_cast<S>(opts_.learning_rate), eps = static_cast<S>(opts_.eps);
        for (std::size_t i = 0; i < params.size(); ++i) {
            m_[i] = b1 * m_[i] + (S(1) - b1) * grads[i];
            v_[i] = b2 * v_[i] + (S(1) - b2) * grads[i].cwiseProduct(grads[i]);
            params[i].array() -= lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps);
        }
    }

    std::size_t steps() const noexcept { return t_; }

private:
    TrainOptions opts_;
    std::vector<Mat> m_, v_;
    std::size_t t_ = 0;
};

/// Converts captions into model examples conditioned on their own
/// normalized properties.
template <class S>
std::vector<typename Model<S>::Example> prepare_examples(const Model<S>& model, std::span<const Caption> captions,
                                                         const CorpusManifest& corpus, const CorpusStats& stats,
                                                         const PosLexicon& lexicon) {
    std::vector<typename Model<S>::Example> out;
    out.reserve(captions.size());
    for (const auto& c : captions) {
        out.push_back(model.make_example(c, corpus.scene_of(c), condition(c, stats, lexicon).norms()));
    }
    return out;
}

template <class S>
struct TrainResult {
    Model<S> model;
    std::vector<double> epoch_loss;  // mean training loss per epoch
};

/// Teacher-forced training with Adam. The data order of each epoch is a
/// permutation drawn from (seed, epoch); per-sample gradients are summed in
/// batch order, so the result is bit-identical for any `jobs`.
template <class S>
TrainResult<S> train(Model<S> model, std::span<const typename Model<S>::Example> data, const TrainOptions& opts) {
    using Mat = Matrix<S>;
    if (data.empty()) throw ArgumentError("train: no examples");
    if (opts.batch_size == 0) throw ArgumentError("train: batch_size must be positive");
    Adam<S> adam(model.tensors(), opts);
    std::vector<std::vector<Mat>> sample_grads(std::min(opts.batch_size, data.size()));
    for (auto& g : sample_grads) g = model.zero_grads();
    std::vector<Mat> grads = model.zero_grads();
    std::vector<double> losses(sample_grads.size());
    std::vector<std::size_t> order(data.size());

    TrainResult<S> result{std::move(model), {}};
    Model<S>& m = result.model;
    for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        Rng rng(opts.seed, 1000 + epoch);
        rng.shuffle(std::span<std::size_t>(order));
        double epoch_total = 0.0;
        for (std::size_t start = 0; start < order.size(); start += opts.batch_size) {
            const std::size_t b = std::min(opts.batch_size, order.size() - start);
            parallel_for(b, opts.jobs, [&](std::size_t i) {
                for (auto& g : sample_grads[i]) g.setZero();
                losses[i] = m.loss_and_grad(data[order[start + i]], sample_grads[i]);
            });
            double batch_total = 0.0;
            for (std::size_t i = 0; i < b; ++i) batch_total += losses[i];
            if (!std::isfinite(batch_total)) throw TrainingError("loss is not finite", epoch);
            const S inv = S(1) / static_cast<S>(b);
            for (std::size_t t = 0; t < grads.size(); ++t) {
                grads[t] = sample_grads[0][t];
                for (std::size_t i = 1; i < b; ++i) grads[t] += sample_grads[i][t];
                grads[t] *= inv;
            }
            adam.step(m.tensors(), grads);
            epoch_total += batch_total;
        }
        const double mean_loss = epoch_total / static_cast<double>(order.size());
        result.epoch_loss.push_back(mean_loss);
        if (opts.on_epoch) opts.on_epoch(epoch, mean_loss);
    }
    return result;
}

}  // namespace captionsmiths
