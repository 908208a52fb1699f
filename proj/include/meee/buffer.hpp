#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <vector>

#include "meee/env.hpp"
#include "meee/rng.hpp"

namespace meee {

/// Imagined transition plus the confidence weight it was stored with.
struct WeightedTransition {
    Transition transition;
    double weight = 1.0;
};

namespace detail {

// Fixed-capacity ring; index 0 is the oldest element.
template <typename T>
class Ring {
  public:
    explicit Ring(std::size_t capacity) : capacity_(capacity) {
        storage_.reserve(capacity);
    }

    std::size_t size() const { return storage_.size(); }
    std::size_t capacity() const { return capacity_; }

    void push(T item) {
        if (storage_.size() < capacity_) {
            storage_.push_back(std::move(item));
        } else {
            storage_[head_] = std::move(item);
            head_ = (head_ + 1) % capacity_;
        }
    }

    const T& at(std::size_t i) const { return storage_[(head_ + i) % storage_.size()]; }

  private:
    std::size_t capacity_;
    std::size_t head_ = 0;  // oldest element once full
    std::vector<T> storage_;
};

}  // namespace detail

/// FIFO store of real transitions.
class EnvBuffer {
  public:
    EnvBuffer(std::size_t capacity, int state_dim, int action_dim);

    void push(const Transition& t);
    std::size_t size() const { return ring_.size(); }
    std::size_t capacity() const { return ring_.capacity(); }
    const Transition& at(std::size_t i) const { return ring_.at(i); }

    // Uniform with replacement; deterministic given the rng state.
    std::vector<Transition> sample_batch(std::size_t n, Rng& rng) const;
    // Returns only the s fields; m = 0 yields an empty list.
    std::vector<Eigen::VectorXd> sample_states(std::size_t m, Rng& rng) const;

    void dump_csv(const std::filesystem::path& path) const;

    int state_dim() const { return state_dim_; }
    int action_dim() const { return action_dim_; }

  private:
    void validate(const Transition& t) const;

    int state_dim_, action_dim_;
    detail::Ring<Transition> ring_;
};

/// FIFO store of imagined transitions; every weight must lie in [0.5, 1.0].
class ModelBuffer {
  public:
    ModelBuffer(std::size_t capacity, int state_dim, int action_dim);

    void push(const WeightedTransition& wt);
    std::size_t size() const { return ring_.size(); }
    std::size_t capacity() const { return ring_.capacity(); }
    const WeightedTransition& at(std::size_t i) const { return ring_.at(i); }

    std::vector<WeightedTransition> sample_batch(std::size_t n, Rng& rng) const;

    void dump_csv(const std::filesystem::path& path) const;

  private:
    int state_dim_, action_dim_;
    detail::Ring<WeightedTransition> ring_;
};

}  // namespace meee
