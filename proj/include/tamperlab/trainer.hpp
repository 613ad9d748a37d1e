#pragma once

// Training loop: AdamW over the trainable parameters, linear warmup to the
// peak learning rate over warmup_iters then linear decay to zero at
// total_iters, gradient accumulation inside each optimizer step, and the
// constrained-kernel projection applied after every step. One "iteration" is
// one optimizer step consuming batch_size * grad_accum images.

#include <cmath>
#include <functional>
#include <numeric>

#include "tamperlab/losses.hpp"
#include "tamperlab/model.hpp"
#include "tamperlab/tamper_forge.hpp"

namespace tlab {

struct TrainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TrainConfig {
    ModelConfig model;
    double lr = 2e-4;
    std::size_t warmup_iters = 100;
    std::size_t total_iters = 2000;
    std::size_t batch_size = 4;
    std::size_t grad_accum = 4;
    LossWeights weights;
    double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
    double weight_decay = 0.0;
    std::uint64_t seed = 7;

    void validate() const {
        weights.validate();
        if (lr <= 0 || total_iters == 0 || batch_size == 0 || grad_accum == 0)
            throw TrainError("train config: lr, total_iters, batch_size, grad_accum "
                             "must be positive");
        if (warmup_iters > total_iters)
            throw TrainError("train config: warmup_iters exceeds total_iters");
    }

    std::string to_kv() const {
        std::ostringstream os;
        os << model.to_kv();
        os << "lr=" << lr << "\nwarmup_iters=" << warmup_iters
           << "\ntotal_iters=" << total_iters << "\nbatch_size=" << batch_size
           << "\ngrad_accum=" << grad_accum << "\nlambda_txt=" << weights.lambda_txt
           << "\nlambda_mask=" << weights.lambda_mask << "\nlambda_bce=" << weights.lambda_bce
           << "\nlambda_dice=" << weights.lambda_dice << "\nbeta1=" << beta1
           << "\nbeta2=" << beta2 << "\nadam_eps=" << adam_eps
           << "\nweight_decay=" << weight_decay << "\nseed=" << seed << "\n";
        return os.str();
    }

    // FORGE_SEED, when set, overrides the config seed (and the model seed).
    static TrainConfig from_kv(KeyValueConfig& kv) {
        TrainConfig c;
        c.model = ModelConfig::from_kv(kv);
        c.lr = kv.take_double("lr", c.lr);
        c.warmup_iters = kv.take_u64("warmup_iters", c.warmup_iters);
        c.total_iters = kv.take_u64("total_iters", c.total_iters);
        c.batch_size = kv.take_u64("batch_size", c.batch_size);
        c.grad_accum = kv.take_u64("grad_accum", c.grad_accum);
        c.weights.lambda_txt = kv.take_double("lambda_txt", c.weights.lambda_txt);
        c.weights.lambda_mask = kv.take_double("lambda_mask", c.weights.lambda_mask);
        c.weights.lambda_bce = kv.take_double("lambda_bce", c.weights.lambda_bce);
        c.weights.lambda_dice = kv.take_double("lambda_dice", c.weights.lambda_dice);
        c.beta1 = kv.take_double("beta1", c.beta1);
        c.beta2 = kv.take_double("beta2", c.beta2);
        c.adam_eps = kv.take_double("adam_eps", c.adam_eps);
        c.weight_decay = kv.take_double("weight_decay", c.weight_decay);
        c.seed = kv.take_u64("seed", c.seed);
        if (const char* env = std::getenv("FORGE_SEED")) c.seed = std::strtoull(env, nullptr, 10);
        c.model.seed = c.seed;
        c.validate();
        return c;
    }
};

// Piecewise-linear schedule: 0 at iter 0, peak at warmup_iters, back to 0 at
// total_iters.
inline double lr_at(std::size_t iter, const TrainConfig& cfg) {
    if (iter > cfg.total_iters)
        throw TrainError("lr_at: iteration " + std::to_string(iter) + " outside [0," +
                         std::to_string(cfg.total_iters) + "]");
    if (iter <= cfg.warmup_iters) {
        if (cfg.warmup_iters == 0) return cfg.lr;
        return cfg.lr * double(iter) / double(cfg.warmup_iters);
    }
    return cfg.lr * double(cfg.total_iters - iter) /
           double(cfg.total_iters - cfg.warmup_iters);
}

template <typename T>
class AdamW {
public:
    AdamW(double lr_unused, double beta1, double beta2, double eps, double weight_decay)
        : beta1_(beta1), beta2_(beta2), eps_(eps), wd_(weight_decay) {
        (void)lr_unused;
    }

    void step(ParamMap<T>& params, double lr, double grad_scale = 1.0) {
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, double(t_));
        const double bc2 = 1.0 - std::pow(beta2_, double(t_));
        for (auto& [name, p] : params) {
            auto& m = m_[name];
            auto& v = v_[name];
            if (m.empty()) {
                m.assign(p.size(), 0.0);
                v.assign(p.size(), 0.0);
            }
            const bool has_grad = p.has_grad();
            T* val = p.data();
            for (std::size_t i = 0; i < p.size(); ++i) {
                const double g = has_grad ? double(p.grad_view()[i]) * grad_scale : 0.0;
                m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
                v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
                const double mhat = m[i] / bc1;
                const double vhat = v[i] / bc2;
                val[i] = T(double(val[i]) -
                           lr * (mhat / (std::sqrt(vhat) + eps_) + wd_ * double(val[i])));
            }
        }
    }

    std::size_t steps() const { return t_; }

private:
    double beta1_, beta2_, eps_, wd_;
    std::size_t t_ = 0;
    std::map<std::string, std::vector<double>> m_, v_;
};

struct TrainLogEntry {
    std::size_t iter = 0;
    double lr = 0, loss_total = 0, loss_txt = 0, loss_mask = 0;
};

struct TrainStats {
    std::vector<TrainLogEntry> log;
};

// Pre-loaded training set (images stay on disk in manifest form otherwise).
template <typename T>
struct TrainData {
    std::vector<Tensor<T>> images;
    std::vector<Tensor<T>> masks;
    std::vector<std::vector<std::size_t>> texts;

    static TrainData load(const DatasetManifest& manifest, const Vocabulary& vocab) {
        TrainData d;
        for (std::size_t i = 0; i < manifest.records.size(); ++i) {
            LoadedSample s = load_sample(manifest, i, vocab);
            d.images.push_back(image_to_tensor<T>(s.image));
            d.masks.push_back(mask_to_tensor<T>(s.mask));
            d.texts.push_back(s.text);
        }
        return d;
    }

    std::size_t size() const { return images.size(); }
};

template <typename T>
TrainStats train_model(SleuthModel<T>& model, const TrainData<T>& data,
                       const TrainConfig& cfg,
                       const std::function<void(const TrainLogEntry&)>& on_step = nullptr) {
    cfg.validate();
    if (data.size() == 0) throw TrainError("train: empty dataset");

    ParamMap<T> params = model.trainable_params();
    AdamW<T> opt(cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.weight_decay);
    for (auto& [name, p] : params) p.zero_grad();

    Rng order_rng(derive_seed(cfg.seed, 777));
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    std::size_t cursor = data.size(); // forces an initial shuffle

    TrainStats stats;
    const std::size_t per_iter = cfg.batch_size * cfg.grad_accum;
    const double sample_scale = 1.0 / double(per_iter);

    for (std::size_t iter = 1; iter <= cfg.total_iters; ++iter) {
        double acc_txt = 0, acc_mask = 0;
        for (std::size_t k = 0; k < per_iter; ++k) {
            if (cursor >= data.size()) {
                for (std::size_t i = data.size(); i-- > 1;)
                    std::swap(order[i], order[std::size_t(order_rng.below(i + 1))]);
                cursor = 0;
            }
            const std::size_t idx = order[cursor++];

            Tape<T> tape;
            typename Tape<T>::Scope scope(tape);
            auto out = model.forward(data.images[idx]);
            Tensor<T> l_txt = text_loss(out.text_logits, data.texts[idx]);
            Tensor<T> l_mask = mask_loss(out.mask_logits, data.masks[idx], cfg.weights);
            const double vt = double(l_txt.item()), vm = double(l_mask.item());
            if (!std::isfinite(vt))
                throw TrainError("iteration " + std::to_string(iter) +
                                 ": text loss is non-finite");
            if (!std::isfinite(vm))
                throw TrainError("iteration " + std::to_string(iter) +
                                 ": mask loss is non-finite");
            acc_txt += vt;
            acc_mask += vm;
            Tensor<T> total = total_loss(l_txt, l_mask, cfg.weights) * sample_scale;
            tape.backward(total);
        }

        const double lr = lr_at(iter, cfg);
        opt.step(params, lr);
        for (auto& k : model.trace.constrained_kernels()) project_constraints(k);
        for (auto& [name, p] : params) p.zero_grad();

        TrainLogEntry e;
        e.iter = iter;
        e.lr = lr;
        e.loss_txt = acc_txt / double(per_iter);
        e.loss_mask = acc_mask / double(per_iter);
        e.loss_total = cfg.weights.lambda_txt * e.loss_txt +
                       cfg.weights.lambda_mask * e.loss_mask;
        stats.log.push_back(e);
        if (on_step) on_step(e);
    }
    return stats;
}

} // namespace tlab
