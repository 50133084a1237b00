#pragma once

#include <unordered_map>
#include <vector>

#include "cdnas/autodiff.hpp"

namespace cdnas {

/// Updates parameters in place from their accumulated gradients.
template <typename T>
class Optimizer {
 public:
  virtual ~Optimizer() = default;
  virtual void step(std::vector<Var<T>>& params) = 0;
  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }

 protected:
  explicit Optimizer(double lr) : lr_(lr) {}
  double lr_;
};

/// p <- p - lr * (g + wd * p)
template <typename T>
class Sgd : public Optimizer<T> {
 public:
  explicit Sgd(double lr, double weight_decay = 0.0) : Optimizer<T>(lr), wd_(weight_decay) {}
  void step(std::vector<Var<T>>& params) override;

 private:
  double wd_;
};

/// Adaptive moments with L2 weight decay folded into the gradient.
template <typename T>
class Adam : public Optimizer<T> {
 public:
  explicit Adam(double lr, double weight_decay = 0.0, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8)
      : Optimizer<T>(lr), wd_(weight_decay), b1_(beta1), b2_(beta2), eps_(eps) {}
  void step(std::vector<Var<T>>& params) override;

 private:
  struct Moments {
    std::vector<double> m, v;
    long t = 0;
  };
  double wd_, b1_, b2_, eps_;
  std::unordered_map<const Node<T>*, Moments> state_;
};

}  // namespace cdnas
