#pragma once

// Loss, L2 regularization, gradient clipping, Adam, evaluation, and the
// epoch loop with dev-accuracy model selection and early stopping.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "aflstm/autograd.hpp"
#include "aflstm/data.hpp"
#include "aflstm/errors.hpp"
#include "aflstm/model.hpp"

namespace aflstm {

struct TrainConfig {
  double learning_rate = 1e-3;
  double lambda_l2 = 4e-6;
  std::size_t batch_size = 25;
  std::size_t max_epochs = 50;
  std::size_t patience = 10;
  double grad_clip_norm = 1.0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 1;

  void validate() const {
    if (!(learning_rate > 0.0) || !(lambda_l2 >= 0.0) || !(grad_clip_norm > 0.0) || !(adam_eps > 0.0)) {
      throw ConfigError("learning_rate, grad_clip_norm and adam_eps must be positive and lambda non-negative");
    }
    if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0) || !(adam_beta2 > 0.0 && adam_beta2 < 1.0)) {
      throw ConfigError("Adam betas must lie in (0, 1)");
    }
    if (batch_size < 1 || max_epochs < 1 || patience < 1) throw ConfigError("batch_size, max_epochs and patience must be positive");
    if (patience > max_epochs) throw ConfigError("patience cannot exceed max_epochs");
  }
};

struct Metrics {
  std::string split;
  std::size_t epoch = 0;
  double accuracy = 0.0;
  double loss = 0.0;  // mean NLL
  std::vector<std::size_t> total_per_class;
  std::vector<std::size_t> correct_per_class;
  std::vector<std::size_t> predicted_per_class;

  std::size_t count() const {
    std::size_t n = 0;
    for (std::size_t c : total_per_class) n += c;
    return n;
  }
};

inline nlohmann::ordered_json to_json(const Metrics& m) {
  nlohmann::ordered_json j;
  j["epoch"] = m.epoch;
  j["split"] = m.split;
  j["accuracy"] = m.accuracy;
  j["loss"] = m.loss;
  return j;
}

// One record per line: {"epoch":..,"split":..,"accuracy":..,"loss":..}.
inline void write_history(std::ostream& out, const std::vector<Metrics>& history) {
  for (const Metrics& m : history) out << to_json(m).dump() << '\n';
}

// lambda * sum of squared entries over the given parameters.
template <class T>
BasicVar<T> l2_penalty(BasicTape<T>& tape, const std::vector<Parameter*>& params, double lambda) {
  std::vector<BasicVar<T>> terms;
  for (Parameter* p : params) terms.push_back(sum_squares(tape.param(*p)));
  if (terms.empty()) return tape.constant(BasicTensor<T>::scalar(T(0)));
  BasicVar<T> total = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) total = add(total, terms[i]);
  return scale(total, T(lambda));
}

// -log p[label] + lambda * ||params||^2.
template <class T>
BasicVar<T> loss(BasicTape<T>& tape, BasicVar<T> probs, std::size_t label, const std::vector<Parameter*>& params, double lambda) {
  BasicVar<T> nl = nll(probs, label);
  if (lambda == 0.0 || params.empty()) return nl;
  return add(nl, l2_penalty(tape, params, lambda));
}

inline double global_grad_norm(const std::vector<Parameter*>& params) {
  double sq = 0.0;
  for (const Parameter* p : params) {
    for (double g : p->grad.values()) sq += g * g;
  }
  return std::sqrt(sq);
}

// Rescales all gradients jointly so their global L2 norm is at most max_norm. Returns the factor used.
inline double clip_gradients(const std::vector<Parameter*>& params, double max_norm) {
  const double norm = global_grad_norm(params);
  if (norm <= max_norm) return 1.0;
  const double factor = max_norm / norm;
  for (Parameter* p : params) {
    for (double& g : p->grad.values()) g *= factor;
  }
  return factor;
}

class Adam {
 public:
  explicit Adam(const TrainConfig& config) : lr_(config.learning_rate), b1_(config.adam_beta1), b2_(config.adam_beta2), eps_(config.adam_eps) {}

  // Applies one bias-corrected update to every parameter, then zeroes the gradients.
  void step(const std::vector<Parameter*>& params) {
    if (m_.empty()) {
      for (const Parameter* p : params) {
        m_.emplace_back(p->value.shape());
        v_.emplace_back(p->value.shape());
      }
    }
    if (m_.size() != params.size()) throw ContractError("Adam: parameter set changed between steps");
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
      Parameter& p = *params[k];
      Tensor& m = m_[k];
      Tensor& v = v_[k];
      for (std::size_t i = 0; i < p.value.size(); ++i) {
        const double g = p.grad[i];
        m[i] = b1_ * m[i] + (1.0 - b1_) * g;
        v[i] = b2_ * v[i] + (1.0 - b2_) * g * g;
        if (!p.trainable || p.is_frozen_entry(i)) continue;
        p.value[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
      }
      p.zero_grad();
    }
  }

  std::size_t steps() const { return t_; }
  const std::vector<Tensor>& first_moments() const { return m_; }
  const std::vector<Tensor>& second_moments() const { return v_; }

 private:
  double lr_, b1_, b2_, eps_;
  std::size_t t_ = 0;
  std::vector<Tensor> m_, v_;
};

// Adds the gradient of lambda * ||p||^2 to each parameter's gradient.
inline void add_l2_gradient(const std::vector<Parameter*>& params, double lambda) {
  if (lambda == 0.0) return;
  for (Parameter* p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      if (p->is_frozen_entry(i)) continue;
      p->grad[i] += 2.0 * lambda * p->value[i];
    }
  }
}

// Accumulates gradients of (mean NLL over batch) + lambda ||psi||^2. Returns the summed NLL and correct count.
struct BatchStats {
  double nll_sum = 0.0;
  std::size_t correct = 0;
};

inline BatchStats accumulate_batch_gradients(Model& model, const std::vector<EncodedExample>& data,
                                             const std::vector<std::size_t>& batch, double lambda) {
  BatchStats stats;
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (std::size_t idx : batch) {
    const EncodedExample& ex = data[idx];
    Tape tape;
    ForwardResult fr = model.forward(tape, ex, true);
    Var l = nll(fr.probs, ex.label);
    stats.nll_sum += l.value().item();
    if (Model::argmax(fr.probs.value()) == ex.label) ++stats.correct;
    tape.backward(l, inv);
  }
  add_l2_gradient(model.trainable_parameters(), lambda);
  return stats;
}

inline Metrics evaluate(Model& model, const std::vector<EncodedExample>& data, std::string split = "eval", std::size_t epoch = 0) {
  if (data.empty()) throw DataError("cannot evaluate on an empty dataset");
  const std::size_t K = model.config().num_classes;
  Metrics m;
  m.split = std::move(split);
  m.epoch = epoch;
  m.total_per_class.assign(K, 0);
  m.correct_per_class.assign(K, 0);
  m.predicted_per_class.assign(K, 0);
  std::size_t correct = 0;
  double nll_sum = 0.0;
  for (const EncodedExample& ex : data) {
    if (ex.label >= K) throw DataError("label index " + std::to_string(ex.label) + " outside " + std::to_string(K) + "-class model");
    const Model::Prediction p = model.predict(ex);
    nll_sum += -std::log(std::max(p.probs[ex.label], kProbFloor));
    ++m.total_per_class[ex.label];
    ++m.predicted_per_class[p.label];
    if (p.label == ex.label) {
      ++correct;
      ++m.correct_per_class[ex.label];
    }
  }
  m.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  m.loss = nll_sum / static_cast<double>(data.size());
  return m;
}

inline Metrics evaluate(Model& model, const Corpus& corpus, std::string split = "eval") {
  return evaluate(model, encode_corpus(corpus, model.vocab()), std::move(split));
}

// Most frequent label; ties go to the lowest class index.
inline std::size_t majority_label(const std::vector<EncodedExample>& data, std::size_t num_classes) {
  std::vector<std::size_t> counts(num_classes, 0);
  for (const auto& ex : data) ++counts.at(ex.label);
  std::size_t best = 0;
  for (std::size_t c = 1; c < num_classes; ++c) {
    if (counts[c] > counts[best]) best = c;
  }
  return best;
}

struct TrainResult {
  Model best_model;
  std::vector<Metrics> history;
  std::size_t best_epoch = 0;
  double best_dev_accuracy = 0.0;
};

// Seeded shuffled mini-batches per epoch, dev accuracy after every epoch, best-dev
// snapshot, and early stopping after `patience` epochs without dev improvement.
inline TrainResult train(Model model, const std::vector<EncodedExample>& train_set, const std::vector<EncodedExample>& dev_set,
                         const TrainConfig& config) {
  config.validate();
  if (train_set.empty()) throw DataError("training split is empty");
  if (dev_set.empty()) throw DataError("dev split is empty");

  TrainResult result;
  if (model.config().variant == Variant::majority) {
    model.set_majority_class(majority_label(train_set, model.config().num_classes));
    Metrics tr = evaluate(model, train_set, "train", 1);
    Metrics dv = evaluate(model, dev_set, "dev", 1);
    result.best_dev_accuracy = dv.accuracy;
    result.best_epoch = 1;
    result.history = {tr, dv};
    result.best_model = std::move(model);
    return result;
  }

  model.zero_grad();
  Adam adam(config);
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  double best_dev = -1.0;
  std::size_t since_best = 0;
  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::uniform_int_distribution<std::size_t> pick(0, i - 1);
      std::swap(order[i - 1], order[pick(rng)]);
    }
    double nll_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                           order.begin() + static_cast<std::ptrdiff_t>(end));
      const BatchStats stats = accumulate_batch_gradients(model, train_set, batch, config.lambda_l2);
      nll_sum += stats.nll_sum;
      correct += stats.correct;
      const auto params = model.trainable_parameters();
      clip_gradients(params, config.grad_clip_norm);
      adam.step(params);
    }
    Metrics tr;
    tr.split = "train";
    tr.epoch = epoch;
    tr.accuracy = static_cast<double>(correct) / static_cast<double>(train_set.size());
    tr.loss = nll_sum / static_cast<double>(train_set.size());
    result.history.push_back(std::move(tr));

    Metrics dv = evaluate(model, dev_set, "dev", epoch);
    const double dev_acc = dv.accuracy;
    result.history.push_back(std::move(dv));
    if (dev_acc > best_dev) {
      best_dev = dev_acc;
      since_best = 0;
      result.best_model = model;
      result.best_epoch = epoch;
    } else if (++since_best >= config.patience) {
      break;
    }
  }
  result.best_dev_accuracy = best_dev;
  result.best_model.zero_grad();
  return result;
}

}  // namespace aflstm
