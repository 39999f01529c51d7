/* SPDX-FileCopyrightText: 2026 vlrep authors
 *
 * SPDX-License-Identifier: Apache-2.0 */

#pragma once

// Behavior cloning on top of a visual encoder, online evaluation in the toy
// environments, and the resumable evaluation sweep.

#include "vlrep/encoder.hpp"
#include "vlrep/envs.hpp"
#include "vlrep/kvconfig.hpp"
#include "vlrep/pretrain.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace vlrep {

/// Input batch norm over [embedding, proprio], ReLU hidden layers, linear output.
struct PolicyConfig {
    std::vector<std::size_t> hidden_widths{256, 256};
    std::size_t action_dim = kActionDim;

    void validate() const;
};

inline constexpr const char* kPolicyPrefix = "policy/";

/// Policy parameters for inputs of width embedding_dim + kProprioDim.
ParamSet init_policy(const PolicyConfig& config, std::size_t embedding_dim, std::uint64_t seed);

/// inputs: (N, E + kProprioDim). Returns (N, action_dim). In train mode the
/// input batch norm updates its running statistics in bind.params().
Var policy_forward(ParamBinding& bind, const PolicyConfig& config, Var inputs, ops::BatchNormMode mode);

/// Mean over rows of the squared L2 error between predicted and demonstrated actions.
Var bc_loss(ParamBinding& bind, const PolicyConfig& config, Var embeddings, const Tensor& proprio,
            const Tensor& actions, ops::BatchNormMode mode = ops::BatchNormMode::train);

/// How the encoder takes part in behavior cloning.
enum class EncoderMode {
    frozen,   // embeddings only; no gradient reaches the encoder
    finetune, // trained end to end through the cloning loss
};

struct BCConfig {
    double learning_rate = 1e-3;
    std::size_t batch_size = 32;
    std::size_t steps = 20000;
    std::size_t eval_every = 1000;
    std::size_t eval_episodes = 20;
    std::size_t seeds = 3;
    /// Base of the shared evaluation episode stream.
    std::uint64_t eval_seed = 0;
    PolicyConfig policy;

    void validate() const;
    void write(KvConfig& kv) const;
    static BCConfig read(const KvConfig& kv);
};

struct CurvePoint {
    std::size_t step = 0;
    double success = 0.0;
    double train_loss = 0.0;
};

struct BCResult {
    ParamSet policy;
    ParamSet encoder;
    std::vector<CurvePoint> curve;
    /// Maximum of the curve.
    double best_success = 0.0;
    /// Loss over every demonstrated step in inference mode, before and after training.
    double initial_loss = 0.0;
    double final_loss = 0.0;
};

/// Inference-mode embedding of one observation image. Images whose size differs
/// from the encoder input are resampled.
Tensor observation_tensor(const Image& image, std::size_t input_size);

using Controller = std::function<Action(const Env& env, const Observation& obs)>;

/// Fraction of the episodes (one per seed) that end in success.
double evaluate_controller(Env& env, std::span<const std::uint64_t> episode_seeds, const Controller& controller);

/// Closed-loop policy acting from the rendered image and proprioception only.
Controller make_policy_controller(ParamSet& policy, const PolicyConfig& policy_config, ParamSet& encoder,
                                  const EncoderConfig& encoder_config);

Controller make_expert_controller();

double evaluate_policy(ParamSet& policy, const PolicyConfig& policy_config, ParamSet& encoder,
                       const EncoderConfig& encoder_config, const EnvConfig& env,
                       std::span<const std::uint64_t> episode_seeds);

/// Trains a fresh policy on the demos. The encoder is copied; in frozen mode the
/// copy is checked to be untouched afterwards.
BCResult bc_train(const ParamSet& encoder, const EncoderConfig& encoder_config, const std::vector<Demonstration>& demos,
                  const EnvConfig& env, const BCConfig& config, EncoderMode mode, std::uint64_t seed);

/// One encoder row of the sweep.
struct EncoderSpec {
    std::string name;
    /// Checkpoint to read. Empty means a freshly initialised encoder from `model`
    /// seeded by init_seed.
    std::filesystem::path checkpoint;
    EncoderMode mode = EncoderMode::frozen;
    ModelConfig model;
    std::uint64_t init_seed = 0;
};

struct CellKey {
    std::string encoder;
    Task task = Task::push;
    std::string view;
    std::size_t demos = 0;
    std::size_t seed = 0;

    std::string file_stem() const;
    friend auto operator<=>(const CellKey&, const CellKey&) = default;
};

struct CellRecord {
    CellKey key;
    double best_success = 0.0;
    std::vector<CurvePoint> curve;
    double initial_loss = 0.0;
    double final_loss = 0.0;
    double seconds = 0.0;
};

struct Aggregate {
    std::size_t n = 0;
    double mean = 0.0;
    /// Sample standard deviation over cells divided by sqrt(n); 0 when n < 2.
    double stderr_ = 0.0;
};

/// Mean and standard error of the best-success values, summed in sorted order
/// so the result does not depend on how cells are listed.
Aggregate aggregate(std::vector<double> values);

enum class Marginal { task, view, size };

struct EvalReport {
    std::vector<CellRecord> cells;

    /// encoder -> task -> aggregate, plus an "all" task column.
    std::map<std::string, std::map<std::string, Aggregate>> table() const;
    /// encoder -> view or demo count -> aggregate.
    std::map<std::string, std::map<std::string, Aggregate>> marginal(Marginal by) const;

    void write_cells_csv(const std::filesystem::path& path) const;
    void write_table_csv(const std::filesystem::path& path, Marginal by = Marginal::task) const;
    std::string to_json() const;
};

struct SweepConfig {
    std::vector<EncoderSpec> encoders;
    std::vector<Task> tasks{Task::push};
    std::vector<std::string> views{"front"};
    std::vector<std::size_t> demo_sizes{25};
    BCConfig bc;
    std::filesystem::path demo_root;
    std::filesystem::path out_dir;
    std::size_t workers = 1;
    /// Nonzero shuffles the execution order of pending cells.
    std::uint64_t order_seed = 0;
};

std::vector<CellKey> sweep_cells(const SweepConfig& config);

/// Demo directory for one (task, view): <root>/<task>/<view>.
std::filesystem::path demo_dir(const std::filesystem::path& root, Task task, const std::string& view);

/// Collects max(sizes) expert demos for every (task, view) pair. Smaller sizes
/// use a prefix of the same set. Writes <root>/manifest.kv.
void collect_demo_sets(const std::filesystem::path& root, std::span<const Task> tasks,
                       std::span<const std::string> views, std::span<const std::size_t> sizes,
                       std::size_t render_size, std::uint64_t seed);

/// Runs every cell without a valid result file in <out_dir>/cells, then loads
/// all cell files and writes cells.csv, table.csv and report.json.
EvalReport run_sweep(const SweepConfig& config);

/// Rebuilds the report from existing cell files only.
EvalReport load_report(const std::filesystem::path& out_dir);

std::string cell_to_json(const CellRecord& cell, const KvConfig& config);
CellRecord cell_from_json(const std::string& text);

} // namespace vlrep
