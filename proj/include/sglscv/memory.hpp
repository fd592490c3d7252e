#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <limits>
#include <memory>
#include <stdexcept>

#include <Eigen/Dense>

namespace sglscv {

/// One stored evaluation: sample point, gradient at that point, and the
/// control the gradient was taken at (kept when a resampling may need it).
struct Record {
  Eigen::VectorXd y;
  Eigen::VectorXd grad;
  std::shared_ptr<const Eigen::VectorXd> control;
  std::int64_t tag = 0;
};

/// FIFO buffer of records. Pushing at capacity evicts the oldest record.
class Memory {
 public:
  Memory() = default;
  explicit Memory(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw std::invalid_argument("Memory: capacity must be positive");
  }

  std::size_t capacity() const { return capacity_; }
  /// Growing keeps all records; shrinking drops the oldest ones.
  void set_capacity(std::size_t c) {
    if (c == 0) throw std::invalid_argument("Memory: capacity must be positive");
    capacity_ = c;
    while (records_.size() > capacity_) records_.pop_front();
  }

  /// Returns true when a record was evicted.
  bool push(Record r) {
    records_.push_back(std::move(r));
    if (records_.size() > capacity_) {
      records_.pop_front();
      return true;
    }
    return false;
  }
  void pop_oldest() { records_.pop_front(); }

  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  Record& operator[](std::size_t i) { return records_[i]; }
  const Record& operator[](std::size_t i) const { return records_[i]; }
  const Record& oldest() const { return records_.front(); }
  const Record& newest() const { return records_.back(); }
  auto begin() const { return records_.begin(); }
  auto end() const { return records_.end(); }
  auto begin() { return records_.begin(); }
  auto end() { return records_.end(); }

 private:
  std::size_t capacity_ = std::numeric_limits<std::size_t>::max();
  std::deque<Record> records_;
};

}  // namespace sglscv
