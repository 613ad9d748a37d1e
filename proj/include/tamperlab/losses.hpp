#pragma once

// Training objective: token cross-entropy over the text template (including
// the <REAL>/<FAKE> slot, so classification needs no separate loss) plus a
// weighted BCE + DICE mask loss, combined as a weighted sum.

#include "tamperlab/ops.hpp"

namespace tlab {

struct LossWeights {
    double lambda_txt = 1.0;
    double lambda_mask = 1.0;
    double lambda_bce = 1.0;
    double lambda_dice = 0.2;

    void validate() const {
        if (lambda_txt < 0 || lambda_mask < 0 || lambda_bce < 0 || lambda_dice < 0)
            throw TensorError("loss weights must be nonnegative");
    }
};

// Mean over slots of -log softmax(logits)[target].
template <typename T>
Tensor<T> text_loss(const Tensor<T>& logits, const std::vector<std::size_t>& target) {
    return cross_entropy_rows(logits, target);
}

// 1 - (2*sum(p*g) + eps) / (sum(p) + sum(g) + eps), on probabilities.
// eps = 1 makes the empty-mask / empty-prediction case well defined (loss 0).
template <typename T>
Tensor<T> dice_loss(const Tensor<T>& probs, const Tensor<T>& gt, double eps = 1.0) {
    if (probs.shape() != gt.shape())
        throw TensorError("dice_loss: shape mismatch " + shape_str(probs.shape()) + " vs " +
                          shape_str(gt.shape()));
    Tensor<T> inter = sum(probs * gt);
    Tensor<T> denom = sum(probs) + sum(gt) + eps;
    Tensor<T> frac = (inter * 2.0 + eps) / denom;
    return Tensor<T>::scalar(T(1)) - frac;
}

// lambda_bce * BCE(logits, gt) + lambda_dice * DICE(sigmoid(logits), gt),
// per image (batch averaging is the caller's job).
template <typename T>
Tensor<T> mask_loss(const Tensor<T>& logits, const Tensor<T>& gt, const LossWeights& w) {
    if (logits.shape() != gt.shape())
        throw TensorError("mask_loss: shape mismatch " + shape_str(logits.shape()) + " vs " +
                          shape_str(gt.shape()));
    for (const T v : gt.value())
        if (v != T(0) && v != T(1))
            throw TensorError("mask_loss: ground truth must be binary");
    Tensor<T> bce = bce_with_logits(logits, gt);
    Tensor<T> dice = dice_loss(sigmoid(logits), gt);
    return bce * w.lambda_bce + dice * w.lambda_dice;
}

template <typename T>
Tensor<T> total_loss(const Tensor<T>& text, const Tensor<T>& mask, const LossWeights& w) {
    return text * w.lambda_txt + mask * w.lambda_mask;
}

} // namespace tlab
