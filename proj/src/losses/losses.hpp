#pragma once

#include <span>
#include <vector>

#include "ad/tensor.hpp"
#include "prior/prior.hpp"

namespace fedlt::losses {

/// Class prior plus temperature for the balanced/fused softmax. The prior is
/// floored at kPriorFloor and normalized on construction; scaling the input
/// prior by any positive constant leaves the softmax unchanged.
struct AdjustedSoftmaxParams {
  prior::PriorDistribution prior;
  double temperature;

  AdjustedSoftmaxParams(prior::PriorDistribution p, double T);
  std::size_t num_classes() const { return prior.size(); }
};

/// Row y gets prior^y * exp(logit_y / T) / sum_y' prior^y' * exp(logit_y' / T),
/// computed with per-row max subtraction. Differentiable w.r.t. logits.
ad::TensorPtr adjusted_softmax(ad::Tape& tape, const ad::TensorPtr& logits,
                               const AdjustedSoftmaxParams& params);

/// Tape-free variant (used for the gradient-detached teacher).
std::vector<double> adjusted_softmax_values(const ad::Tensor& logits,
                                            const AdjustedSoftmaxParams& params);

/// mask[i] = (argmax of row i == labels[i]); argmax ties break toward the
/// lowest class index.
std::vector<bool> teacher_mask(const std::vector<double>& probs, std::size_t rows,
                               std::size_t cols, std::span<const int> labels);

/// The gradient-detached teacher: adjusted-softmax probabilities of the weak
/// view plus the correct-prediction mask.
struct TeacherView {
  std::vector<double> probs;  // n x C
  std::vector<bool> mask;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t masked = 0;
};

TeacherView make_teacher(const ad::Tensor& weak_logits, std::span<const int> labels,
                         const AdjustedSoftmaxParams& params);

/// Mean KL(teacher || p(strong)) over the masked rows; the student side goes
/// through the adjusted softmax. An empty mask yields an exact constant 0.
ad::TensorPtr asd_loss_with_teacher(ad::Tape& tape, const TeacherView& teacher,
                                    const ad::TensorPtr& strong_logits,
                                    const AdjustedSoftmaxParams& params);

/// Mean KL(p(weak) || p(strong)) over correctly-classified teacher rows, both
/// sides through the adjusted softmax. The weak (teacher) side is gradient
/// detached; an empty mask yields an exact constant 0.
ad::TensorPtr asd_loss(ad::Tape& tape, const ad::TensorPtr& weak_logits,
                       const ad::TensorPtr& strong_logits, std::span<const int> labels,
                       const AdjustedSoftmaxParams& params);

/// -(1/2n) * sum over both augmented batches of log p(true class).
ad::TensorPtr dla_loss(ad::Tape& tape, const ad::TensorPtr& weak_logits,
                       const ad::TensorPtr& strong_logits, std::span<const int> labels,
                       const AdjustedSoftmaxParams& params);

/// dla + lambda * asd (the asd term is skipped entirely at lambda == 0).
ad::TensorPtr total_loss(ad::Tape& tape, const ad::TensorPtr& weak_logits,
                         const ad::TensorPtr& strong_logits, std::span<const int> labels,
                         const AdjustedSoftmaxParams& params, double lambda);

/// total_loss with the components exposed; asd is null when lambda == 0.
struct LossBundle {
  ad::TensorPtr total;
  ad::TensorPtr dla;
  ad::TensorPtr asd;
};
LossBundle total_loss_parts(ad::Tape& tape, const ad::TensorPtr& weak_logits,
                            const ad::TensorPtr& strong_logits, std::span<const int> labels,
                            const AdjustedSoftmaxParams& params, double lambda);

/// Single-view negative log likelihood: -(1/n) * sum log p(true class).
/// With a uniform prior and T = 1 this is plain cross-entropy.
ad::TensorPtr cross_entropy(ad::Tape& tape, const ad::TensorPtr& logits,
                            std::span<const int> labels, const AdjustedSoftmaxParams& params);

}  // namespace fedlt::losses
