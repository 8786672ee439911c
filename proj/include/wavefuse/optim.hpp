#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "wavefuse/nn.hpp"

namespace wavefuse {

struct AdamConfig {
  double lr = 1e-3;           // head group
  double backbone_lr = 1e-4;  // backbone group (may be 0 to freeze)
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction and per-group learning rates. Moments live in
// the same precision as the parameters.
template <typename T>
class Adam {
 public:
  Adam(ParameterStore<T>& store, AdamConfig cfg) : store_(&store), cfg_(cfg) {
    if (cfg.lr < 0 || cfg.backbone_lr < 0)
      throw ConfigError("adam: learning rate must be nonnegative");
    m_.resize(store.size());
    v_.resize(store.size());
    for (std::size_t i = 0; i < store.size(); ++i) {
      m_[i].assign(store.at(i).value.size(), T(0));
      v_[i].assign(store.at(i).value.size(), T(0));
    }
  }

  // Multiplies both group rates by `s` (scheduler hook).
  void set_lr_scale(double s) { lr_scale_ = s; }
  double lr_scale() const { return lr_scale_; }

  void zero_grad() { store_->zero_grad(); }

  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < store_->size(); ++i) {
      auto& p = store_->at(i);
      const double lr =
          lr_scale_ * (p.group == ParamGroup::kBackbone ? cfg_.backbone_lr : cfg_.lr);
      if (lr == 0.0) continue;
      auto& theta = p.value.mutable_data();
      const auto& g = p.value.grad();
      if (g.empty()) continue;
      auto& m = m_[i];
      auto& v = v_[i];
      for (std::size_t j = 0; j < theta.size(); ++j) {
        m[j] = static_cast<T>(cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j]);
        v[j] = static_cast<T>(cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j]);
        const double mhat = m[j] / bc1;
        const double vhat = v[j] / bc2;
        theta[j] -= static_cast<T>(lr * mhat / (std::sqrt(vhat) + cfg_.eps));
      }
    }
  }

  std::int64_t steps() const { return t_; }

 private:
  ParameterStore<T>* store_;
  AdamConfig cfg_;
  std::vector<std::vector<T>> m_, v_;
  std::int64_t t_ = 0;
  double lr_scale_ = 1.0;
};

// ---------------------------------------------------------------------------
// Schedulers: the two simple schedules selectable by config.
// ---------------------------------------------------------------------------

enum class SchedulerKind { kPlateau, kCosine };

inline SchedulerKind parse_scheduler(const std::string& name) {
  if (name == "plateau") return SchedulerKind::kPlateau;
  if (name == "cosine") return SchedulerKind::kCosine;
  throw ConfigError("unknown scheduler: " + name + " (expected plateau|cosine)");
}

class LrScheduler {
 public:
  LrScheduler(SchedulerKind kind, int total_epochs, int patience = 5, double factor = 0.5)
      : kind_(kind), total_epochs_(total_epochs), patience_(patience), factor_(factor) {}

  // Called once per epoch with the epoch index just finished and its
  // validation loss; returns the lr scale to use for the next epoch.
  double on_epoch(int epoch, double val_loss) {
    if (kind_ == SchedulerKind::kCosine) {
      const double t = static_cast<double>(epoch + 1) / std::max(1, total_epochs_);
      scale_ = 0.5 * (1.0 + std::cos(3.14159265358979323846 * std::min(1.0, t)));
      return scale_;
    }
    if (val_loss < best_ - 1e-12) {
      best_ = val_loss;
      bad_epochs_ = 0;
    } else if (++bad_epochs_ > patience_) {
      scale_ *= factor_;
      bad_epochs_ = 0;
    }
    return scale_;
  }

 private:
  SchedulerKind kind_;
  int total_epochs_;
  int patience_;
  double factor_;
  double best_ = std::numeric_limits<double>::infinity();
  int bad_epochs_ = 0;
  double scale_ = 1.0;
};

}  // namespace wavefuse
