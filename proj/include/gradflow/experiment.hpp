#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gradflow/closed_form.hpp"
#include "gradflow/config.hpp"
#include "gradflow/graph.hpp"
#include "gradflow/model.hpp"
#include "gradflow/similarity.hpp"
#include "gradflow/train.hpp"

namespace gradflow {

enum class Command { GradProfile, DepthSweep, TrainCurves, Scatter, BoundCheck, OracleTest };

std::optional<Command> parse_command(std::string_view name);
const char* to_string(Command c);

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitViolation = 4;

/// A dataset directory in the plain-text format, or a synthetic SBM graph.
struct DatasetSource {
    std::optional<std::filesystem::path> dir;
    std::string name;  ///< reference-table name used for validation, may be empty
    SbmParams sbm;

    bool is_sbm() const noexcept { return !dir.has_value(); }
};

struct ExperimentSpec {
    Command command = Command::GradProfile;
    DatasetSource dataset;
    std::vector<std::size_t> depths;
    std::vector<std::optional<double>> c_values;  ///< nullopt = no Lipschitz control
    std::vector<double> lrs;
    std::vector<Activation> activations;
    std::vector<bool> residual;
    std::size_t hidden_dim = 64;
    std::size_t repeats = 5;
    std::uint64_t seed_base = 0;
    std::filesystem::path out_dir = "results";
    std::size_t max_epochs = 1500;
    std::size_t patience = 100;
    bool early_stop = true;
    std::size_t jobs = 1;
    bool heavy = false;
    bool no_validate = false;
    bool save_checkpoints = false;

    // bound-check / oracle-test
    std::size_t instances = 100;
    std::vector<std::size_t> plain_depths;     ///< chain lengths for non-residual instances
    std::vector<std::size_t> residual_depths;  ///< chain lengths for residual instances
    std::size_t instance_width = 4;

    /// Command defaults overridden by `config`. `heavy` extends the default
    /// depth-sweep grid to 256 and 512. Throws ConfigError.
    static ExperimentSpec from_config(Command command, const Config& config, bool heavy = false);
    void validate() const;
    /// Resolved settings as `key = value` lines, enough to rerun the command.
    std::string echo() const;
};

/// Loads the dataset (validated against the reference table unless
/// `no_validate`) or generates the SBM graph.
Graph load_graph(const ExperimentSpec& spec);

/// One training run in a grid.
struct Cell {
    std::string id;
    std::size_t depth = 0;
    std::optional<double> c;
    double lr = 0.0;
    Activation activation;
    bool residual = false;
    std::size_t repeat = 0;
    std::uint64_t seed = 0;
};

std::vector<Cell> expand_grid(const ExperimentSpec& spec);
TrainConfig cell_train_config(const ExperimentSpec& spec, const Cell& cell, std::size_t num_classes);

struct CellOutcome {
    Cell cell;
    TrainLog log;  ///< without best_model
};

/// Trains every cell (up to `spec.jobs` at a time) and writes
/// `<out>/<command>/<cell-id>/{log.csv, summary.txt, profile.csv, plot.svg}`.
/// Outcomes come back in cell order.
std::vector<CellOutcome> run_cells(const Graph& graph, const ExperimentSpec& spec, const std::vector<Cell>& cells,
                                   std::vector<std::filesystem::path>& artifacts);

struct ProfileRow {
    Cell cell;
    SimilarityProfile profile;
    std::optional<DecayFit> fit;
    bool diverged = false;
};

struct SweepRow {
    std::size_t depth = 0;
    std::optional<double> c;
    Activation activation;
    bool residual = false;
    double best_lr = 0.0;
    MetricStats test;  ///< over repeats at best_lr
    MetricStats val;
    std::size_t diverged = 0;
};

struct ScatterRow {
    Cell cell;
    double representation_mu = 0.0;  ///< μ(X^(L)) at the best epoch
    double gradient_mu = 0.0;        ///< μ(∂L/∂X^(0)) at the best epoch
    double test_acc = 0.0;
    bool diverged = false;
};

struct CurveRow {
    Cell cell;
    std::vector<EpochMetrics> epochs;
    std::optional<std::size_t> epochs_to_99;
    double final_train_acc = 0.0;
};

struct OracleRow {
    std::size_t instance = 0;
    bool residual = false;
    std::size_t depth = 0;
    std::size_t layer = 0;
    double input_grad_error = 0.0;  ///< scaled max-abs error vs backprop
    double weight_grad_error = 0.0;
    std::size_t monomials = 0;
    bool refused = false;
    std::string message;
};

struct BoundRow {
    std::size_t instance = 0;
    bool residual = false;
    std::size_t depth = 0;
    BoundReport report;
};

struct ExperimentResult {
    int exit_code = kExitOk;
    std::vector<std::filesystem::path> artifacts;
    std::vector<std::uint64_t> seeds;
    std::vector<ProfileRow> profiles;
    std::vector<SweepRow> sweep;
    std::vector<ScatterRow> scatter;
    std::vector<CurveRow> curves;
    std::vector<OracleRow> oracle;
    std::vector<BoundRow> bounds;
    std::vector<std::string> messages;  ///< human-readable notes, e.g. violations
};

ExperimentResult run_grad_profile(const ExperimentSpec& spec, const Graph& graph);
ExperimentResult run_depth_sweep(const ExperimentSpec& spec, const Graph& graph);
ExperimentResult run_scatter(const ExperimentSpec& spec, const Graph& graph);
ExperimentResult run_train_curves(const ExperimentSpec& spec, const Graph& graph);
ExperimentResult run_bound_check(const ExperimentSpec& spec);
ExperimentResult run_oracle_test(const ExperimentSpec& spec);

/// Dispatches on `spec.command`, then writes `<out>/manifest.txt`.
ExperimentResult run_experiment(const ExperimentSpec& spec);

/// Random linear (identity-activation) model on a connected non-bipartite
/// SBM graph, with a forward/backward pass already recorded.
struct LinearInstance {
    Graph graph;
    Model model;
    Tape tape;
};

LinearInstance make_linear_instance(std::uint64_t seed, std::size_t depth, bool residual, std::size_t width);

/// Max-abs difference divided by max(1, max |reference|).
double scaled_error(const DenseMatrix& value, const DenseMatrix& reference);

/// Lower-case hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

}  // namespace gradflow
