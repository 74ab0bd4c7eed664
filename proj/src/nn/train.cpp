#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "conceal/error.hpp"
#include "conceal/nn.hpp"
#include "conceal/random.hpp"

namespace conceal::nn {

AdamState AdamState::zeros_like(const ModelParams& params) {
    AdamState s;
    s.m = params;
    s.m.fill(0.0);
    s.v = s.m;
    return s;
}

void adam_step(ModelParams& params, AdamState& state, const ModelParams& grads, double lr) {
    require(grads.same_shape(params) && state.m.same_shape(params) && state.v.same_shape(params),
            ErrorKind::dimension, "adam: gradient/moment shapes do not match parameters");
    require(grads.all_finite(), ErrorKind::numeric, "adam: non-finite gradient");
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(AdamState::beta1, t);
    const double c2 = 1.0 - std::pow(AdamState::beta2, t);
    for (std::size_t b = 0; b < params.blocks.size(); ++b) {
        auto& p = params.blocks[b].data;
        auto& m = state.m.blocks[b].data;
        auto& v = state.v.blocks[b].data;
        const auto& g = grads.blocks[b].data;
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = AdamState::beta1 * m[i] + (1.0 - AdamState::beta1) * g[i];
            v[i] = AdamState::beta2 * v[i] + (1.0 - AdamState::beta2) * g[i] * g[i];
            const double m_hat = m[i] / c1;
            const double v_hat = v[i] / c2;
            p[i] -= lr * m_hat / (std::sqrt(v_hat) + AdamState::eps);
        }
    }
}

void TrainConfig::validate() const {
    require(learning_rate > 0.0, ErrorKind::invalid_config, "learning rate must be > 0");
    require(train_fraction > 0.0 && train_fraction < 1.0, ErrorKind::invalid_config,
            "train fraction must lie in (0, 1)");
    require(max_epochs >= 1, ErrorKind::invalid_config, "max epochs must be >= 1");
    require(batch_size >= 1, ErrorKind::invalid_config, "batch size must be >= 1");
    require(plateau_factor > 0.0 && plateau_factor <= 1.0, ErrorKind::invalid_config,
            "plateau factor must lie in (0, 1]");
    require(early_stopping_patience >= 1 && plateau_patience >= 1, ErrorKind::invalid_config,
            "patience values must be >= 1");
}

double evaluate_loss(const NetworkSpec& spec, const ModelParams& params, const SampleSet& data,
                     std::size_t begin, std::size_t end) {
    require(begin < end && end <= data.count(), ErrorKind::invalid_input,
            "evaluate_loss: empty or out-of-range sample window");
    Workspace ws;
    double acc = 0.0;
    for (std::size_t i = begin; i < end; ++i) {
        const auto out = forward(spec, params, data.input(i), ws);
        acc += mse(out, data.target(i));
    }
    return acc / static_cast<double>(end - begin);
}

TrainResult train(const NetworkSpec& spec, const SampleSet& data, const TrainConfig& cfg) {
    spec.validate();
    cfg.validate();
    require(data.count() > 0, ErrorKind::invalid_input, "training data is empty");
    require(data.input_size == spec.input_size() && data.target_size == spec.output_size(),
            ErrorKind::dimension, "training samples do not match the network shape");
    const std::size_t total = data.count();
    const auto n_train = static_cast<std::size_t>(
        std::floor(cfg.train_fraction * static_cast<double>(total) + 1e-9));
    require(n_train >= 1 && n_train < total, ErrorKind::invalid_input,
            "need at least one training and one validation sample after the split");

    TrainResult result;
    ModelParams params = init_params(spec);
    AdamState adam = AdamState::zeros_like(params);
    ModelParams grads = params;
    Workspace ws;
    Rng rng(cfg.seed ^ 0x7261696eULL);

    const bool use_dropout = spec.kind == Architecture::cnn_predictor && spec.dropout > 0.0;
    std::vector<double> mask(use_dropout ? cnn_flat_size(spec) : 0);
    const double keep_scale = use_dropout ? 1.0 / (1.0 - spec.dropout) : 1.0;

    std::vector<std::size_t> order(n_train);
    std::iota(order.begin(), order.end(), std::size_t{0});

    double lr = cfg.learning_rate;
    double best_val = std::numeric_limits<double>::infinity();
    std::size_t since_best = 0;
    std::size_t since_lr_change = 0;
    result.params = params;

    for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        rng.shuffle(order.begin(), order.end());
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < n_train; start += cfg.batch_size) {
            const std::size_t stop = std::min(n_train, start + cfg.batch_size);
            grads.fill(0.0);
            for (std::size_t k = start; k < stop; ++k) {
                const std::size_t i = order[k];
                if (use_dropout)
                    for (auto& m : mask) m = rng.uniform() < spec.dropout ? 0.0 : keep_scale;
                const double loss = accumulate_gradients(spec, params, data.input(i),
                                                         data.target(i), grads, ws, mask);
                require(std::isfinite(loss), ErrorKind::numeric, "training loss is not finite");
                epoch_loss += loss;
            }
            const double scale = 1.0 / static_cast<double>(stop - start);
            for (auto& b : grads.blocks)
                for (auto& g : b.data) g *= scale;
            adam_step(params, adam, grads, lr);
        }
        const double train_loss = epoch_loss / static_cast<double>(n_train);
        const double val_loss = evaluate_loss(spec, params, data, n_train, total);
        require(std::isfinite(val_loss), ErrorKind::numeric, "validation loss is not finite");
        result.log.epochs.push_back({epoch, train_loss, val_loss, lr});

        if (val_loss < best_val) {
            best_val = val_loss;
            result.params = params;
            result.log.best_epoch = epoch;
            since_best = 0;
            since_lr_change = 0;
        } else {
            ++since_best;
            ++since_lr_change;
            if (since_best >= cfg.early_stopping_patience) {
                result.log.stopped_early = true;
                break;
            }
            if (since_lr_change >= cfg.plateau_patience) {
                lr = std::max(lr * cfg.plateau_factor, cfg.min_learning_rate);
                since_lr_change = 0;
            }
        }
    }
    result.log.best_val_loss = best_val;
    return result;
}

}  // namespace conceal::nn
