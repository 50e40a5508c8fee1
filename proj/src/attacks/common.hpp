#pragma once
// Helpers shared by the fine-tuning and training-from-scratch attackers.

#include "sfl/attacks/attacks.hpp"

namespace sfl::detail {

// Inputs through the victim's client part, in chunks.
Tensor lift(const VictimView& v, const Tensor& x);
std::vector<int> round_robin(std::size_t n, int classes, std::size_t offset = 0);
void check_api(const GradientQueryApi& api, const VictimView& v);
// Rows (i - begin) * classes + k hold activation i with label k.
void sweep_rows(const Tensor& acts, std::size_t begin, std::size_t end, int classes, Tensor& rows,
                std::vector<int>& labels);

Tensor latent_batch(std::size_t n, int dim, Rng rng);
std::vector<int> paired_labels(std::size_t batch, int classes, std::uint64_t offset);
// One generator update from the gradient at its images plus the diversity term.
void generator_step(Generator& g, Optimizer<float>& oh, Optimizer<float>& ot, const Decoder::Pass& p,
                    const Tensor& z, const Tensor& image_grad, const GeneratorConfig& cfg);
// Samples a fixed labelled set from `g` and trains a surrogate on it.
AttackResult gan_phase2(const Generator& g, const VictimView& v, const AttackConfig& cfg, AttackMethod method);

}  // namespace sfl::detail
