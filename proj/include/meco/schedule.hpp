#pragma once

#include "meco/packing.hpp"

#include <cstdint>
#include <string>
#include <string_view>

namespace meco {

/// Optimizer and schedule presets for the trainer.
struct TrainConfig {
    double peak_lr = 3e-3;
    double final_lr_ratio = 0.1;
    double warmup_fraction = 0.05;
    std::uint64_t batch_tokens = 4'194'304;
    std::uint64_t total_tokens = 0;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.95;
    double weight_decay = 0.033;

    /// Lower learning rate and higher weight decay used at 8B scale.
    static TrainConfig large_model_preset();
    void validate() const;
};

enum class StrategyKind { standard, all_conditioned, interleaved, two_stage };

struct MixStrategy {
    StrategyKind kind = StrategyKind::two_stage;
    /// Conditioned share for interleaved.
    double p = 0.9;
};

std::string_view to_string(StrategyKind kind);
StrategyKind strategy_from_string(std::string_view name);

inline constexpr double kDefaultCooldownFraction = 0.10;
/// 8B-scale variant: 10B cooldown tokens out of 80B.
inline constexpr double kLargeModelCooldownFraction = 0.125;
/// Longer cooldowns used in the cooldown-length sweep.
inline constexpr double kSweepCooldownFractions[] = {0.20, 0.30};

struct SchedulePlan {
    std::uint64_t total_steps = 0;
    std::uint64_t warmup_steps = 0;
    /// Last step of the conditioning stage; equals total_steps unless two-stage.
    std::uint64_t boundary_step = 0;
    MixStrategy strategy;
    double cooldown_fraction = kDefaultCooldownFraction;
    std::string conditioning_split = "train";
    std::string cooldown_split;
    double peak_lr = 3e-3;
    double final_lr_ratio = 0.1;
    double warmup_fraction = 0.05;
    std::uint64_t batch_tokens = 0;
    std::uint64_t total_tokens = 0;
    /// The trainer must carry optimizer moments across the boundary.
    bool inherit_optimizer_state = true;

    std::uint64_t conditioning_tokens() const { return boundary_step * batch_tokens; }
    std::uint64_t cooldown_tokens() const { return (total_steps - boundary_step) * batch_tokens; }

    /// Training config this plan was built from.
    TrainConfig train_config() const;

    std::string to_json() const;
    static SchedulePlan from_json(std::string_view json_text);
};

/// Linear warmup from zero, then cosine decay to final_lr_ratio * peak at
/// step T. Both stages of a two-stage plan call this same function.
double lr_at(std::uint64_t step, const TrainConfig& cfg, std::uint64_t total_steps);
double lr_at(std::uint64_t step, const SchedulePlan& plan);

enum class Stage { conditioning, cooldown };

/// Learning rate at a stage-local step. The cooldown stage resumes the
/// shared schedule at the boundary instead of restarting it.
double stage_lr(const SchedulePlan& plan, Stage stage, std::uint64_t local_step);

std::uint64_t warmup_steps_for(const TrainConfig& cfg, std::uint64_t total_steps);

SchedulePlan build_plan(const TrainConfig& cfg, const MixStrategy& strategy,
                        double cooldown_fraction = kDefaultCooldownFraction);

enum class Rendering { conditioned, standard };

/// Keyed-hash Bernoulli(p) per doc_id. Only valid for interleaved plans.
Rendering assign_rendering(std::string_view doc_id, const SchedulePlan& plan, std::uint64_t seed);

Report verify_plan(const SchedulePlan& plan, const TrainConfig& cfg);

} // namespace meco
