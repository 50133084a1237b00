#include "cdnas/nas.hpp"

#include <cmath>

namespace cdnas {

std::string to_string(ArchGradMode m) { return m == ArchGradMode::first_order ? "first-order" : "unrolled"; }

ArchGradMode parse_arch_grad_mode(const std::string& s) {
  if (s == "first-order" || s == "first_order") return ArchGradMode::first_order;
  if (s == "unrolled") return ArchGradMode::unrolled;
  throw ConfigError("unknown architecture gradient mode '" + s + "' (first-order|unrolled)");
}

template <typename T>
std::unique_ptr<Optimizer<T>> make_optimizer(const std::string& kind, double lr, double weight_decay) {
  if (lr < 0 || weight_decay < 0) throw ConfigError("learning rates and weight decay must be >= 0");
  if (kind == "sgd") return std::make_unique<Sgd<T>>(lr, weight_decay);
  if (kind == "adam") return std::make_unique<Adam<T>>(lr, weight_decay);
  throw ConfigError("unknown optimizer '" + kind + "' (sgd|adam)");
}

namespace {
template <typename T>
void zero_all(SearchModel<T>& model) {
  auto w = model.weights();
  auto a = model.arch();
  zero_grad(w);
  zero_grad(a);
}

template <typename T>
void axpy(std::vector<Tensor<T>>& y, double a, const std::vector<Tensor<T>>& x) {
  for (std::size_t i = 0; i < y.size(); ++i)
    for (std::size_t k = 0; k < y[i].numel(); ++k) y[i][k] += T(a * double(x[i][k]));
}
}  // namespace

template <typename T>
double loss_and_grads(SearchModel<T>& model, const std::vector<Batch<T>>& batches,
                      std::vector<Var<T>> params, std::vector<Tensor<T>>& grads,
                      std::vector<double>* per_batch) {
  if (batches.empty()) throw ConfigError("no batches to evaluate");
  zero_all(model);
  if (per_batch) per_batch->clear();
  double total = 0;
  for (const auto& b : batches) {
    auto loss = model.loss(b);
    const double v = double(loss.value().item());
    if (!std::isfinite(v)) throw NumericError("non-finite loss " + std::to_string(v));
    total += v;
    if (per_batch) per_batch->push_back(v);
    backward(loss);
  }
  grads.clear();
  for (const auto& p : params) grads.push_back(p.grad());
  return total;
}

template <typename T>
std::vector<Tensor<T>> values_of(const std::vector<Var<T>>& params) {
  std::vector<Tensor<T>> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back(p.value());
  return out;
}

template <typename T>
void assign_values(std::vector<Var<T>>& params, const std::vector<Tensor<T>>& values) {
  for (std::size_t i = 0; i < params.size(); ++i) params[i].mutable_value() = values[i];
}

template <typename T>
void apply_gradients(std::vector<Var<T>> params, const std::vector<Tensor<T>>& grads, Optimizer<T>& opt) {
  for (std::size_t i = 0; i < params.size(); ++i) params[i].node()->grad = grads[i];
  opt.step(params);
}

template <typename T>
double inner_weight_step(SearchModel<T>& model, const Batch<T>& batch, double gamma1) {
  if (gamma1 < 0) throw ConfigError("inner learning rate must be >= 0");
  auto w = model.weights();
  std::vector<Tensor<T>> g;
  const double loss = loss_and_grads(model, {batch}, w, g);
  for (std::size_t i = 0; i < w.size(); ++i) {
    auto& v = w[i].mutable_value();
    for (std::size_t k = 0; k < v.numel(); ++k) v[k] -= T(gamma1 * double(g[i][k]));
  }
  return loss;
}

template <typename T>
std::vector<double> weight_step(SearchModel<T>& model, const std::vector<Batch<T>>& support, Optimizer<T>& opt) {
  auto w = model.weights();
  std::vector<Tensor<T>> g;
  std::vector<double> losses;
  loss_and_grads(model, support, w, g, &losses);
  apply_gradients(w, g, opt);
  return losses;
}

template <typename T>
std::vector<Tensor<T>> arch_gradient(SearchModel<T>& model, const std::vector<Batch<T>>& support,
                                     const Batch<T>& query, double gamma1, ArchGradMode mode,
                                     double* query_loss) {
  auto w = model.weights();
  auto a = model.arch();
  const auto phi = values_of(w);
  std::vector<Tensor<T>> gs;
  if (gamma1 != 0.0) {
    loss_and_grads(model, support, w, gs);
    auto stepped = phi;
    axpy(stepped, -gamma1, gs);
    assign_values(w, stepped);
  }
  std::vector<Tensor<T>> ga, gw;
  const double lq = loss_and_grads(model, {query}, a, ga);
  if (query_loss) *query_loss = lq;
  if (mode == ArchGradMode::unrolled && gamma1 != 0.0) {
    for (const auto& p : w) gw.push_back(p.grad());
    double norm = 0;
    for (const auto& g : gw)
      for (auto v : g.data()) norm += double(v) * double(v);
    norm = std::sqrt(norm);
    if (norm > 0) {
      const double eps = 0.01 / norm;
      std::vector<Tensor<T>> ga_plus, ga_minus;
      auto shifted = phi;
      axpy(shifted, eps, gw);
      assign_values(w, shifted);
      loss_and_grads(model, support, a, ga_plus);
      shifted = phi;
      axpy(shifted, -eps, gw);
      assign_values(w, shifted);
      loss_and_grads(model, support, a, ga_minus);
      for (std::size_t i = 0; i < ga.size(); ++i)
        for (std::size_t k = 0; k < ga[i].numel(); ++k)
          ga[i][k] -= T(gamma1 * (double(ga_plus[i][k]) - double(ga_minus[i][k])) / (2 * eps));
    }
  }
  assign_values(w, phi);
  zero_all(model);
  return ga;
}

template <typename T>
double arch_step(SearchModel<T>& model, const Batch<T>& query, Optimizer<T>& arch_opt) {
  auto a = model.arch();
  std::vector<Tensor<T>> g;
  const double loss = loss_and_grads(model, {query}, a, g);
  apply_gradients(a, g, arch_opt);
  return loss;
}

template <typename T>
StepLosses bilevel_step(SearchModel<T>& model, const std::vector<Batch<T>>& support,
                        const Batch<T>& query, Optimizer<T>& weight_opt, Optimizer<T>& arch_opt,
                        double gamma1, ArchGradMode mode, bool update_arch) {
  StepLosses out;
  if (update_arch && mode == ArchGradMode::unrolled) {
    auto ga = arch_gradient(model, support, query, gamma1, mode, &out.query);
    out.support = weight_step(model, support, weight_opt);
    apply_gradients(model.arch(), ga, arch_opt);
    return out;
  }
  out.support = weight_step(model, support, weight_opt);
  if (update_arch) out.query = arch_step(model, query, arch_opt);
  return out;
}

template <typename T>
StepLosses meta_step(SearchModel<T>& model, const std::vector<Batch<T>>& support,
                     const Batch<T>& query, Optimizer<T>& outer_opt, Optimizer<T>& arch_opt,
                     double gamma1, std::size_t inner_steps, bool update_arch) {
  if (support.empty()) throw ConfigError("meta step needs at least one support batch");
  auto w = model.weights();
  const auto phi = values_of(w);
  std::vector<Tensor<T>> total;
  StepLosses out;
  for (const auto& b : support) {
    assign_values(w, phi);
    double first = 0;
    for (std::size_t s = 0; s < inner_steps; ++s) {
      const double l = inner_weight_step(model, b, gamma1);
      if (s == 0) first = l;
    }
    out.support.push_back(first);
    std::vector<Tensor<T>> gq;
    out.query += loss_and_grads(model, {query}, w, gq);
    if (total.empty()) {
      total = gq;
    } else {
      axpy(total, 1.0, gq);
    }
  }
  assign_values(w, phi);
  apply_gradients(w, total, outer_opt);
  if (update_arch) arch_step(model, query, arch_opt);
  zero_all(model);
  return out;
}

#define CDNAS_INSTANTIATE_NAS(T)                                                                       \
  template std::unique_ptr<Optimizer<T>> make_optimizer<T>(const std::string&, double, double);        \
  template double loss_and_grads(SearchModel<T>&, const std::vector<Batch<T>>&, std::vector<Var<T>>,   \
                                 std::vector<Tensor<T>>&, std::vector<double>*);                      \
  template std::vector<Tensor<T>> values_of(const std::vector<Var<T>>&);                               \
  template void assign_values(std::vector<Var<T>>&, const std::vector<Tensor<T>>&);                    \
  template void apply_gradients(std::vector<Var<T>>, const std::vector<Tensor<T>>&, Optimizer<T>&);    \
  template double inner_weight_step(SearchModel<T>&, const Batch<T>&, double);                         \
  template std::vector<double> weight_step(SearchModel<T>&, const std::vector<Batch<T>>&, Optimizer<T>&);           \
  template std::vector<Tensor<T>> arch_gradient(SearchModel<T>&, const std::vector<Batch<T>>&,         \
                                                const Batch<T>&, double, ArchGradMode, double*);       \
  template double arch_step(SearchModel<T>&, const Batch<T>&, Optimizer<T>&);                          \
  template StepLosses bilevel_step(SearchModel<T>&, const std::vector<Batch<T>>&, const Batch<T>&,     \
                                   Optimizer<T>&, Optimizer<T>&, double, ArchGradMode, bool);          \
  template StepLosses meta_step(SearchModel<T>&, const std::vector<Batch<T>>&, const Batch<T>&,        \
                                Optimizer<T>&, Optimizer<T>&, double, std::size_t, bool);

CDNAS_INSTANTIATE_NAS(float)
CDNAS_INSTANTIATE_NAS(double)

}  // namespace cdnas
