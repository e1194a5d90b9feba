#include "meco/schedule.hpp"

#include "meco/errors.hpp"
#include "meco/hashing.hpp"

#include <json.hpp>

#include <cmath>
#include <numbers>

namespace meco {

using nlohmann::json;

TrainConfig TrainConfig::large_model_preset() {
    TrainConfig cfg;
    cfg.peak_lr = 5e-4;
    cfg.weight_decay = 0.1;
    return cfg;
}

void TrainConfig::validate() const {
    if (!(warmup_fraction > 0.0 && warmup_fraction < 1.0)) {
        throw ConfigError("warmup fraction must be in (0, 1)");
    }
    if (!(final_lr_ratio >= 0.0 && final_lr_ratio < 1.0)) {
        throw ConfigError("final lr ratio must be in [0, 1)");
    }
    if (!(peak_lr > 0.0)) {
        throw ConfigError("peak learning rate must be positive");
    }
    if (batch_tokens == 0 || total_tokens == 0) {
        throw ConfigError("batch and total token counts must be positive");
    }
}

std::string_view to_string(StrategyKind kind) {
    switch (kind) {
    case StrategyKind::standard: return "standard";
    case StrategyKind::all_conditioned: return "all-conditioned";
    case StrategyKind::interleaved: return "interleaved";
    case StrategyKind::two_stage: return "two-stage";
    }
    return "two-stage";
}

StrategyKind strategy_from_string(std::string_view name) {
    if (name == "standard") return StrategyKind::standard;
    if (name == "all-conditioned" || name == "all_conditioned") return StrategyKind::all_conditioned;
    if (name == "interleaved") return StrategyKind::interleaved;
    if (name == "two-stage" || name == "two_stage") return StrategyKind::two_stage;
    throw ConfigError("unknown strategy \"" + std::string(name) + "\"");
}

std::uint64_t warmup_steps_for(const TrainConfig& cfg, std::uint64_t total_steps) {
    return static_cast<std::uint64_t>(std::llround(cfg.warmup_fraction * static_cast<double>(total_steps)));
}

namespace {

double warmup_cosine(std::uint64_t step, std::uint64_t warmup, std::uint64_t total, double peak, double final_ratio) {
    if (step > total) {
        throw ConfigError("step " + std::to_string(step) + " beyond schedule end " + std::to_string(total));
    }
    if (warmup > 0 && step <= warmup) {
        return peak * static_cast<double>(step) / static_cast<double>(warmup);
    }
    const double floor = final_ratio * peak;
    if (total == warmup) return peak;
    const double progress = static_cast<double>(step - warmup) / static_cast<double>(total - warmup);
    return floor + 0.5 * (peak - floor) * (1.0 + std::cos(std::numbers::pi * progress));
}

} // namespace

double lr_at(std::uint64_t step, const TrainConfig& cfg, std::uint64_t total_steps) {
    return warmup_cosine(step, warmup_steps_for(cfg, total_steps), total_steps, cfg.peak_lr, cfg.final_lr_ratio);
}

double lr_at(std::uint64_t step, const SchedulePlan& plan) {
    return warmup_cosine(step, plan.warmup_steps, plan.total_steps, plan.peak_lr, plan.final_lr_ratio);
}

double stage_lr(const SchedulePlan& plan, Stage stage, std::uint64_t local_step) {
    return lr_at(stage == Stage::conditioning ? local_step : plan.boundary_step + local_step, plan);
}

SchedulePlan build_plan(const TrainConfig& cfg, const MixStrategy& strategy, double cooldown_fraction) {
    cfg.validate();
    if (!(strategy.p >= 0.0 && strategy.p <= 1.0)) {
        throw ConfigError("interleave probability must be in [0, 1]");
    }
    SchedulePlan plan;
    plan.strategy = strategy;
    plan.peak_lr = cfg.peak_lr;
    plan.final_lr_ratio = cfg.final_lr_ratio;
    plan.batch_tokens = cfg.batch_tokens;
    plan.total_tokens = cfg.total_tokens;
    plan.warmup_fraction = cfg.warmup_fraction;
    plan.total_steps = (cfg.total_tokens + cfg.batch_tokens - 1) / cfg.batch_tokens;
    plan.warmup_steps = warmup_steps_for(cfg, plan.total_steps);
    if (strategy.kind == StrategyKind::two_stage) {
        if (!(cooldown_fraction > 0.0 && cooldown_fraction < 1.0)) {
            throw ConfigError("cooldown fraction must be in (0, 1)");
        }
        plan.cooldown_fraction = cooldown_fraction;
        plan.boundary_step = static_cast<std::uint64_t>(
            std::llround((1.0 - cooldown_fraction) * static_cast<double>(plan.total_steps)));
        plan.conditioning_split = "cond";
        plan.cooldown_split = "cool";
        if (plan.boundary_step < plan.warmup_steps) {
            throw ConfigError("cooldown would begin before warmup ends");
        }
    } else {
        plan.cooldown_fraction = 0.0;
        plan.boundary_step = plan.total_steps;
        plan.conditioning_split = "train";
    }
    return plan;
}

Rendering assign_rendering(std::string_view doc_id, const SchedulePlan& plan, std::uint64_t seed) {
    if (plan.strategy.kind != StrategyKind::interleaved) {
        throw ConfigError("assign_rendering requires an interleaved plan");
    }
    const double u = unit_interval(stable_hash64(doc_id, seed ^ 0x72656e646572ULL));
    return u < plan.strategy.p ? Rendering::conditioned : Rendering::standard;
}

Report verify_plan(const SchedulePlan& plan, const TrainConfig& cfg) {
    Report report;
    auto fail = [&](std::string what) { report.failures.push_back(std::move(what)); };

    const std::uint64_t expected_total = cfg.batch_tokens == 0
                                             ? 0
                                             : (cfg.total_tokens + cfg.batch_tokens - 1) / cfg.batch_tokens;
    if (plan.total_steps != expected_total) {
        fail("total steps " + std::to_string(plan.total_steps) + " != ceil(total_tokens / batch_tokens) = " +
             std::to_string(expected_total));
    }
    if (!(plan.warmup_steps <= plan.boundary_step && plan.boundary_step <= plan.total_steps)) {
        fail("step ordering violated: need warmup <= boundary <= total");
    }
    if (plan.warmup_steps != warmup_steps_for(cfg, plan.total_steps)) {
        fail("warmup steps " + std::to_string(plan.warmup_steps) + " out of bounds");
    }
    if (plan.strategy.kind == StrategyKind::two_stage) {
        const auto expected_b = static_cast<std::uint64_t>(
            std::llround((1.0 - plan.cooldown_fraction) * static_cast<double>(plan.total_steps)));
        if (plan.boundary_step != expected_b) {
            fail("boundary step " + std::to_string(plan.boundary_step) + " != round((1 - cooldown) * T) = " +
                 std::to_string(expected_b));
        }
        if (plan.conditioning_split.empty() || plan.cooldown_split.empty() ||
            plan.conditioning_split == plan.cooldown_split) {
            fail("conditioning and cooldown stages must use distinct splits");
        }
        if (report.ok() && plan.boundary_step > 0 && plan.boundary_step < plan.total_steps) {
            const double end_of_conditioning = stage_lr(plan, Stage::conditioning, plan.boundary_step);
            const double start_of_cooldown = stage_lr(plan, Stage::cooldown, 0);
            if (end_of_conditioning - start_of_cooldown != 0.0) {
                fail("learning rate discontinuous at the stage boundary");
            }
        }
    } else if (plan.boundary_step != plan.total_steps) {
        fail("single-stage plan must have boundary == total steps");
    }
    if (!plan.inherit_optimizer_state) {
        fail("optimizer state must be inherited across the stage boundary");
    }
    if (plan.peak_lr != cfg.peak_lr || plan.final_lr_ratio != cfg.final_lr_ratio) {
        fail("plan learning-rate parameters differ from the training config");
    }
    return report;
}

TrainConfig SchedulePlan::train_config() const {
    TrainConfig cfg;
    cfg.peak_lr = peak_lr;
    cfg.final_lr_ratio = final_lr_ratio;
    cfg.warmup_fraction = warmup_fraction;
    cfg.batch_tokens = batch_tokens;
    cfg.total_tokens = total_tokens;
    return cfg;
}

std::string SchedulePlan::to_json() const {
    json j;
    j["T"] = total_steps;
    j["w"] = warmup_steps;
    j["b"] = boundary_step;
    j["strategy"] = std::string(to_string(strategy.kind));
    if (strategy.kind == StrategyKind::interleaved) j["interleave_p"] = strategy.p;
    j["cooldown_fraction"] = cooldown_fraction;
    j["splits"] = {{"conditioning", conditioning_split}};
    if (!cooldown_split.empty()) j["splits"]["cooldown"] = cooldown_split;
    j["lr"] = {{"peak", peak_lr}, {"final_ratio", final_lr_ratio}};
    j["batch_tokens"] = batch_tokens;
    j["total_tokens"] = total_tokens;
    j["warmup_fraction"] = warmup_fraction;
    j["inherit_optimizer_state"] = inherit_optimizer_state;
    return j.dump(2) + "\n";
}

SchedulePlan SchedulePlan::from_json(std::string_view json_text) {
    SchedulePlan p;
    try {
        auto j = json::parse(json_text);
        p.total_steps = j.at("T").get<std::uint64_t>();
        p.warmup_steps = j.at("w").get<std::uint64_t>();
        p.boundary_step = j.at("b").get<std::uint64_t>();
        p.strategy.kind = strategy_from_string(j.at("strategy").get<std::string>());
        p.strategy.p = j.value("interleave_p", 0.9);
        p.cooldown_fraction = j.at("cooldown_fraction").get<double>();
        p.conditioning_split = j.at("splits").at("conditioning").get<std::string>();
        p.cooldown_split = j["splits"].value("cooldown", std::string{});
        p.peak_lr = j.at("lr").at("peak").get<double>();
        p.final_lr_ratio = j.at("lr").at("final_ratio").get<double>();
        p.batch_tokens = j.value("batch_tokens", std::uint64_t{0});
        p.total_tokens = j.value("total_tokens", p.total_steps * p.batch_tokens);
        p.warmup_fraction = j.value("warmup_fraction", 0.05);
        p.inherit_optimizer_state = j.value("inherit_optimizer_state", true);
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed plan: ") + e.what());
    }
    return p;
}

} // namespace meco
