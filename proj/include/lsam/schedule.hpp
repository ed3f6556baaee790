#pragma once

#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include "lsam/error.hpp"

namespace lsam::sim {

// Step-size schedule: either a constant epsilon or an explicit non-increasing
// sequence (diminishing steps).
class StepSchedule {
  public:
    enum class Kind { Constant, Sequence };

    static StepSchedule constant(double epsilon) {
        if (!(epsilon > 0.0)) throw Error(ErrorCode::InvalidStep, "epsilon must be positive");
        StepSchedule s;
        s.kind_ = Kind::Constant;
        s.epsilon_ = epsilon;
        return s;
    }

    static StepSchedule sequence(std::vector<double> epsilons) {
        if (epsilons.empty()) throw Error(ErrorCode::ScheduleInvalid, "empty step sequence");
        for (std::size_t i = 0; i < epsilons.size(); ++i) {
            if (!(epsilons[i] > 0.0))
                throw Error(ErrorCode::InvalidStep, "step sizes must be positive");
            if (i > 0 && epsilons[i] > epsilons[i - 1] + 1e-15 * epsilons[i - 1])
                throw Error(ErrorCode::ScheduleInvalid,
                            "step sequence must be non-increasing (index " + std::to_string(i) + ")");
        }
        StepSchedule s;
        s.kind_ = Kind::Sequence;
        s.epsilons_ = std::move(epsilons);
        return s;
    }

    // epsilon_j = epsilon0 / (j+1)^power, materialized for j = 0..length-1.
    static StepSchedule polynomial(double epsilon0, double power, std::size_t length) {
        if (!(epsilon0 > 0.0)) throw Error(ErrorCode::InvalidStep, "epsilon0 must be positive");
        if (power < 0.0) throw Error(ErrorCode::ScheduleInvalid, "power must be >= 0");
        std::vector<double> eps(length);
        for (std::size_t j = 0; j < length; ++j)
            eps[j] = epsilon0 / std::pow(static_cast<double>(j + 1), power);
        return sequence(std::move(eps));
    }

    Kind kind() const { return kind_; }
    bool is_constant() const { return kind_ == Kind::Constant; }

    double at(std::size_t k) const {
        if (kind_ == Kind::Constant) return epsilon_;
        if (k >= epsilons_.size())
            throw Error(ErrorCode::ScheduleInvalid,
                        "step index " + std::to_string(k) + " beyond sequence length");
        return epsilons_[k];
    }

    // largest step over [0, count); for non-increasing sequences this is the
    // first entry
    double max_over(std::size_t count) const {
        if (kind_ == Kind::Constant) return epsilon_;
        if (count > epsilons_.size())
            throw Error(ErrorCode::ScheduleInvalid, "horizon beyond sequence length");
        return count ? epsilons_.front() : 0.0;
    }

    std::size_t length() const {
        return kind_ == Kind::Constant ? static_cast<std::size_t>(-1) : epsilons_.size();
    }

  private:
    Kind kind_ = Kind::Constant;
    double epsilon_ = 0.0;
    std::vector<double> epsilons_;
};

}  // namespace lsam::sim
