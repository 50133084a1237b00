#pragma once

#include <memory>
#include <string>
#include <vector>

#include "cdnas/optim.hpp"
#include "cdnas/search_model.hpp"

namespace cdnas {

enum class ArchGradMode { first_order, unrolled };
std::string to_string(ArchGradMode m);
ArchGradMode parse_arch_grad_mode(const std::string& s);

/// "sgd" or "adam".
template <typename T>
std::unique_ptr<Optimizer<T>> make_optimizer(const std::string& kind, double lr, double weight_decay);

/// Sum of the model's losses over `batches`; gradients w.r.t. `params` are
/// returned (and left accumulated in every leaf). Non-finite loss throws
/// NumericError. `per_batch` receives the individual losses.
template <typename T>
double loss_and_grads(SearchModel<T>& model, const std::vector<Batch<T>>& batches,
                      std::vector<Var<T>> params, std::vector<Tensor<T>>& grads,
                      std::vector<double>* per_batch = nullptr);

template <typename T>
std::vector<Tensor<T>> values_of(const std::vector<Var<T>>& params);
template <typename T>
void assign_values(std::vector<Var<T>>& params, const std::vector<Tensor<T>>& values);

/// Sets the gradient buffer of each parameter and lets the optimizer step.
template <typename T>
void apply_gradients(std::vector<Var<T>> params, const std::vector<Tensor<T>>& grads, Optimizer<T>& opt);

/// phi <- phi - gamma1 * grad_phi L(batch). Returns the loss before the step.
template <typename T>
double inner_weight_step(SearchModel<T>& model, const Batch<T>& batch, double gamma1);

/// Weight update on the summed support losses through `opt`; returns each loss.
template <typename T>
std::vector<double> weight_step(SearchModel<T>& model, const std::vector<Batch<T>>& support, Optimizer<T>& opt);

/// grad_alpha L_q(phi', alpha) with phi' = phi - gamma1 * grad_phi L_s(phi, alpha).
/// first_order treats phi' as a constant; unrolled adds the second-order term
/// -gamma1 * d2L_s/(dalpha dphi) . grad_phi' L_q by central differences.
/// Weights are restored before returning. `query_loss` receives L_q(phi').
template <typename T>
std::vector<Tensor<T>> arch_gradient(SearchModel<T>& model, const std::vector<Batch<T>>& support,
                                     const Batch<T>& query, double gamma1, ArchGradMode mode,
                                     double* query_loss = nullptr);

/// alpha step at the current weights (first-order form of the query update).
template <typename T>
double arch_step(SearchModel<T>& model, const Batch<T>& query, Optimizer<T>& arch_opt);

struct StepLosses {
  std::vector<double> support;
  double query = 0.0;
};

/// One round of the alternating scheme: weight step on the support batches,
/// then (unless update_arch is false) an architecture step on the query batch.
/// In unrolled mode the architecture gradient is taken through a plain SGD
/// step of size gamma1 from the pre-update weights.
template <typename T>
StepLosses bilevel_step(SearchModel<T>& model, const std::vector<Batch<T>>& support,
                        const Batch<T>& query, Optimizer<T>& weight_opt, Optimizer<T>& arch_opt,
                        double gamma1, ArchGradMode mode, bool update_arch);

/// One iteration of the meta scheme: per support batch an inner SGD update
/// (gamma1, inner_steps) from phi, the query losses at each learner summed and
/// their gradients applied to phi by `outer_opt`, then an alpha step on the
/// query batch at the updated weights.
template <typename T>
StepLosses meta_step(SearchModel<T>& model, const std::vector<Batch<T>>& support,
                     const Batch<T>& query, Optimizer<T>& outer_opt, Optimizer<T>& arch_opt,
                     double gamma1, std::size_t inner_steps, bool update_arch);

}  // namespace cdnas
