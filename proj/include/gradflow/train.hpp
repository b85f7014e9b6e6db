#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gradflow/graph.hpp"
#include "gradflow/lipschitz.hpp"
#include "gradflow/model.hpp"
#include "gradflow/similarity.hpp"

namespace gradflow {

struct ModelGradients {
    DenseMatrix input_proj;
    std::vector<DenseMatrix> layers;
    DenseMatrix readout;

    static ModelGradients from_tape(const Tape& tape);
    bool all_finite() const;
};

struct AdamParams {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    ModelGradients m;
    ModelGradients v;
    std::uint64_t step = 0;

    /// Zero moments shaped like `model`.
    static AdamState zeros_like(const Model& model);
};

/// Bias-corrected Adam update. Returns false and leaves model and state
/// untouched when any gradient entry is non-finite.
bool adam_step(Model& model, const ModelGradients& grads, AdamState& state, double lr, const AdamParams& params = {});

enum class ProfileSchedule { Never, AtBest, EveryK };

struct TrainConfig {
    ModelConfig model;
    double lr = 0.01;
    std::size_t max_epochs = 1000;
    bool early_stop = true;
    std::size_t patience = 100;
    ProfileSchedule record_profiles = ProfileSchedule::AtBest;
    std::size_t profile_every = 10;  ///< used with EveryK
    std::uint64_t seed = 0;          ///< overrides model.seed
    /// Called with the epoch and the updated model after every optimizer step
    /// (and normalization, when active).
    std::function<void(std::size_t, const Model&)> after_step;

    void validate() const;
};

struct EpochMetrics {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double train_acc = 0.0;
    double val_acc = 0.0;
    double test_acc = 0.0;
};

struct ProfileSnapshot {
    std::size_t epoch = 0;
    SimilarityProfile gradient;
    double representation_similarity = 0.0;  ///< μ(X^(L))
};

struct TrainLog {
    std::vector<EpochMetrics> epochs;
    std::size_t best_epoch = 0;
    double best_val_acc = 0.0;
    double train_at_best = 0.0;
    double test_at_best = 0.0;
    std::optional<SimilarityProfile> gradient_profile_at_best;
    double representation_similarity_at_best = 0.0;
    std::vector<ProfileSnapshot> profile_history;  ///< EveryK snapshots
    std::optional<SimilarityProfile> last_gradient_profile;
    std::optional<LipschitzReport> lipschitz_at_best;
    std::optional<Model> best_model;

    bool diverged = false;
    std::optional<std::size_t> divergence_epoch;
    std::string divergence_reason;
    std::size_t skipped_steps = 0;

    double final_train_acc() const { return epochs.empty() ? 0.0 : epochs.back().train_acc; }
    /// First epoch whose train accuracy reaches `threshold`.
    std::optional<std::size_t> epochs_to_train_acc(double threshold) const;
};

/// Full-batch training with Adam. With `model.lipschitz_c` set, hidden
/// weights are normalized at initialization and after every step.
TrainLog train(const Graph& graph, const TrainConfig& config);

/// Per-epoch CSV: `epoch,train_loss,train_acc,val_acc,test_acc`.
void write_train_csv(std::ostream& out, const TrainLog& log);

/// Flat `key = value` summary with the best-epoch metrics and a config echo.
void write_train_summary(std::ostream& out, const TrainLog& log, const TrainConfig& config);

struct MetricStats {
    double mean = 0.0;
    double std = 0.0;  ///< population standard deviation
    double min = 0.0;
    double max = 0.0;
};

MetricStats metric_stats(const std::vector<double>& values);

struct RepeatResult {
    std::vector<std::uint64_t> seeds;
    std::vector<TrainLog> logs;
    std::map<std::string, MetricStats> stats;  ///< best_val_acc, test_at_best, train_at_best, final_train_acc
};

/// Trains with seeds seed_base .. seed_base + repeats − 1.
RepeatResult run_repeats(const Graph& graph, TrainConfig config, std::size_t repeats, std::uint64_t seed_base);

}  // namespace gradflow
