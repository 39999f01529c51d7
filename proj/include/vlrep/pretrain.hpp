/* SPDX-FileCopyrightText: 2026 vlrep authors
 *
 * SPDX-License-Identifier: Apache-2.0 */

#pragma once

#include "vlrep/data.hpp"
#include "vlrep/encoder.hpp"
#include "vlrep/kvconfig.hpp"
#include "vlrep/losses.hpp"
#include "vlrep/params.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace vlrep {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    ParamSet m;
    ParamSet v;
    std::int64_t t = 0;
    AdamConfig hp;

    static AdamState init(const ParamSet& params, AdamConfig hp = {});
};

/// One bias-corrected Adam update of every trainable parameter not under a
/// frozen prefix. Gradients are checked for finiteness before anything is
/// modified; a non-finite entry raises TrainingError carrying the step index.
void adam_step(ParamSet& params, const ParamSet& grads, AdamState& state, double lr,
               const std::vector<std::string>& frozen_prefixes = {});

enum class Variant { full, no_aug, no_l1, no_lang };
std::string_view to_string(Variant v);
Variant parse_variant(std::string_view s);
inline constexpr Variant kVariants[] = {Variant::full, Variant::no_aug, Variant::no_l1, Variant::no_lang};

/// Desk-scale model over the task vocabulary of the synthetic grammar.
ModelConfig desk_model();

struct PretrainConfig {
    std::int64_t steps = 5000;
    double learning_rate = 1e-4;
    std::size_t batch_size = 8;
    LossConfig loss;
    bool augment = true;
    std::uint64_t seed = 0;
    std::int64_t eval_every = 500;
    std::int64_t checkpoint_every = 1000;
    AdamConfig adam;
    ModelConfig model = desk_model();
    std::string variant = "full";
    /// Disables overlapping batch assembly with the update step.
    bool strict_deterministic = true;

    void validate() const;
    void write(KvConfig& kv) const;
    /// Reads pretrain.*, loss.* and model keys; missing keys keep defaults.
    static PretrainConfig read(const KvConfig& kv);
    /// Prefixes excluded from the optimizer (alignment head and sentence encoder under no_lang).
    std::vector<std::string> frozen_prefixes() const;
};

PretrainConfig make_ablation(const PretrainConfig& base, Variant variant);

struct RunningStats {
    std::uint64_t count = 0;
    double mean_total = 0.0;
    double ema_total = 0.0;

    void update(double total);
    friend bool operator==(const RunningStats&, const RunningStats&) = default;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    KvConfig config;
    std::int64_t step = 0;
    RunningStats stats;
    ParamSet params;
    std::optional<AdamState> adam;

    PretrainConfig pretrain_config() const { return PretrainConfig::read(config); }
};

/// Layout (all integers and doubles little-endian):
///   "VLREPCKP" | u32 version | u64 len + config text | i64 step |
///   u64 count, f64 mean, f64 ema | tensor table | u8 has_adam
///   [i64 t, f64 beta1, beta2, eps, tensor table m, tensor table v] | u64 FNV-1a of all preceding bytes.
/// Tensor table: u32 n, then per entry u32 name length, name, u8 trainable,
/// u32 rank, u64 dims, f64 values.
std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt, std::uint32_t version = kCheckpointVersion);
Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct StepRecord {
    std::int64_t step = 0;
    LossBreakdown loss;
    double l1_weighted = 0.0;
    double l2_weighted = 0.0;
    double ms = 0.0;
};

struct EvalRecord {
    std::int64_t step = 0;
    std::map<std::string, double> metrics;
};

struct PretrainResult {
    Checkpoint checkpoint;
    std::vector<StepRecord> metrics;
    std::vector<EvalRecord> evals;
};

using Evaluator = std::function<std::map<std::string, double>(ParamSet& params, std::int64_t step)>;

struct PretrainOptions {
    /// When set: metrics.csv, evals.csv, summary.json, config.kv, checkpoint.bin
    /// and checkpoints/step_NNNNNN.bin are written here.
    std::filesystem::path out_dir;
    /// Continue from out_dir/checkpoint.bin if present.
    bool resume = false;
    Evaluator evaluator;
    /// Progress callback, invoked after every step.
    std::function<void(const StepRecord&)> on_step;
};

/// Runs config.steps iterations of sample_batch -> total_loss -> adam_step.
/// Each step draws from its own generator seeded by (seed, step), so a resumed
/// run is bit-identical to an uninterrupted one.
PretrainResult pretrain(const ClipDataset& train, const PretrainConfig& config, const PretrainOptions& options = {});

/// Parameter initialisation used by pretrain for a given config.
ParamSet initial_params(const PretrainConfig& config);

} // namespace vlrep
