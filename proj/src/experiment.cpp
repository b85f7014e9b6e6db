#include "gradflow/experiment.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <sstream>
#include <thread>

#include "gradflow/diagnostics.hpp"
#include "gradflow/errors.hpp"
#include "gradflow/format.hpp"
#include "gradflow/rng.hpp"
#include "gradflow/svg.hpp"

namespace fs = std::filesystem;

namespace gradflow {
namespace {

const std::set<std::string> kKnownKeys = {
    "dataset",      "dataset.name", "sbm.blocks",  "sbm.per_block",  "sbm.p_in",        "sbm.p_out",
    "sbm.feat_dim", "sbm.seed",     "depths",      "c",              "lr",              "activations",
    "residual",     "hidden_dim",   "repeats",     "seed_base",      "out_dir",         "max_epochs",
    "patience",     "early_stop",   "instances",   "plain_depths",   "residual_depths", "instance_width",
    "save_checkpoints"};

std::string c_text(const std::optional<double>& c) { return c ? format_double(*c) : "none"; }

template <class T, class F>
std::string join(const std::vector<T>& items, F&& fmt) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) out += ',';
        out += fmt(items[i]);
    }
    return out;
}

std::string size_text(std::size_t v) { return std::to_string(v); }
std::string bool_text(bool v) { return v ? "true" : "false"; }

std::vector<std::size_t> parse_sizes(const std::vector<std::string>& items, const std::string& key) {
    std::vector<std::size_t> out;
    for (const auto& s : items) out.push_back(static_cast<std::size_t>(parse_u64(s, key)));
    return out;
}

std::vector<std::size_t> powers_of_two(std::size_t hi) {
    std::vector<std::size_t> out;
    for (std::size_t d = 1; d <= hi; d *= 2) out.push_back(d);
    return out;
}

std::vector<std::size_t> range(std::size_t lo, std::size_t hi) {
    std::vector<std::size_t> out;
    for (std::size_t d = lo; d <= hi; ++d) out.push_back(d);
    return out;
}

std::string path_safe(std::string s) {
    for (char& ch : s) {
        if (ch == ':' || ch == '/' || ch == ' ') ch = '_';
    }
    return s;
}

void write_file(const fs::path& path, const std::string& content, std::vector<fs::path>& artifacts) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << content;
    out.close();
    if (!out) throw std::runtime_error("error while writing " + path.string());
    artifacts.push_back(path);
}

std::vector<double> layer_axis(std::size_t n) {
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = static_cast<double>(i);
    return x;
}

std::string profile_svg(const std::string& title, const std::vector<PlotSeries>& series) {
    return render_svg({title, "layer", "gradient similarity", false, true, false}, series);
}

std::string accuracy_svg(const std::string& title, const TrainLog& log) {
    PlotSeries train{"train", {}, {}}, val{"val", {}, {}}, test{"test", {}, {}};
    for (const auto& e : log.epochs) {
        const auto x = static_cast<double>(e.epoch);
        train.x.push_back(x);
        train.y.push_back(e.train_acc);
        val.x.push_back(x);
        val.y.push_back(e.val_acc);
        test.x.push_back(x);
        test.y.push_back(e.test_acc);
    }
    const std::vector<PlotSeries> series{train, val, test};
    return render_svg({title, "epoch", "accuracy", false, false, false}, series);
}

fs::path command_dir(const ExperimentSpec& spec) { return spec.out_dir / to_string(spec.command); }

}  // namespace

std::optional<Command> parse_command(std::string_view name) {
    if (name == "grad-profile") return Command::GradProfile;
    if (name == "depth-sweep") return Command::DepthSweep;
    if (name == "train-curves") return Command::TrainCurves;
    if (name == "scatter") return Command::Scatter;
    if (name == "bound-check") return Command::BoundCheck;
    if (name == "oracle-test") return Command::OracleTest;
    return std::nullopt;
}

const char* to_string(Command c) {
    switch (c) {
        case Command::GradProfile: return "grad-profile";
        case Command::DepthSweep: return "depth-sweep";
        case Command::TrainCurves: return "train-curves";
        case Command::Scatter: return "scatter";
        case Command::BoundCheck: return "bound-check";
        case Command::OracleTest: return "oracle-test";
    }
    return "?";
}

ExperimentSpec ExperimentSpec::from_config(Command command, const Config& config, bool heavy) {
    config.require_known(kKnownKeys);

    ExperimentSpec s;
    s.command = command;
    s.heavy = heavy;
    s.dataset.sbm = SbmParams{3, 40, 0.15, 0.02, 16, 0};
    s.c_values = {std::nullopt};
    s.activations = {Activation::relu()};
    s.residual = {false};
    s.repeats = 1;

    switch (command) {
        case Command::GradProfile:
            s.depths = {128};
            s.lrs = {0.005};
            s.activations = {Activation::relu(), parse_activation("leaky_relu"), Activation::gelu()};
            break;
        case Command::DepthSweep:
            s.depths = powers_of_two(heavy ? 512 : 128);
            s.c_values = {std::nullopt, 4.0, 1.0, 0.25};
            s.lrs = {0.001, 0.005, 0.01};
            s.residual = {true};
            s.repeats = 5;
            break;
        case Command::TrainCurves:
            s.depths = {64};
            s.c_values = {std::nullopt, 4.0, 1.0, 0.25};
            s.lrs = {0.001};
            s.residual = {true};
            s.max_epochs = 1000;
            s.early_stop = false;
            break;
        case Command::Scatter:
            s.depths = {2, 4, 8, 16, 32, 64};
            s.lrs = {0.005};
            s.residual = {false, true};
            break;
        case Command::BoundCheck:
        case Command::OracleTest:
            s.lrs = {0.0};
            break;
    }
    s.plain_depths = range(2, 8);
    s.residual_depths = range(2, 10);

    if (const auto d = config.get("dataset"); d && *d != "sbm") s.dataset.dir = fs::path(*d);
    s.dataset.name = config.get_or("dataset.name", "");
    auto& sbm = s.dataset.sbm;
    sbm.blocks = config.count("sbm.blocks", sbm.blocks);
    sbm.per_block = config.count("sbm.per_block", sbm.per_block);
    sbm.p_in = config.real("sbm.p_in", sbm.p_in);
    sbm.p_out = config.real("sbm.p_out", sbm.p_out);
    sbm.feat_dim = config.count("sbm.feat_dim", sbm.feat_dim);
    sbm.seed = config.u64("sbm.seed", sbm.seed);

    if (config.has("depths")) s.depths = parse_sizes(config.list("depths"), "depths");
    if (config.has("c")) {
        s.c_values.clear();
        for (const auto& item : config.list("c")) {
            if (item == "none") {
                s.c_values.emplace_back(std::nullopt);
            } else {
                s.c_values.emplace_back(parse_real(item, "c"));
            }
        }
    }
    if (config.has("lr")) {
        s.lrs.clear();
        for (const auto& item : config.list("lr")) s.lrs.push_back(parse_real(item, "lr"));
    }
    if (config.has("activations")) {
        s.activations.clear();
        for (const auto& item : config.list("activations")) s.activations.push_back(parse_activation(item));
    }
    if (config.has("residual")) {
        s.residual.clear();
        for (const auto& item : config.list("residual")) s.residual.push_back(parse_bool(item, "residual"));
    }
    s.hidden_dim = config.count("hidden_dim", s.hidden_dim);
    s.repeats = config.count("repeats", s.repeats);
    s.seed_base = config.u64("seed_base", s.seed_base);
    s.out_dir = config.get_or("out_dir", s.out_dir.string());
    s.max_epochs = config.count("max_epochs", s.max_epochs);
    s.patience = config.count("patience", s.patience);
    s.early_stop = config.boolean("early_stop", s.early_stop);
    s.save_checkpoints = config.boolean("save_checkpoints", s.save_checkpoints);
    s.instances = config.count("instances", s.instances);
    if (config.has("plain_depths")) s.plain_depths = parse_sizes(config.list("plain_depths"), "plain_depths");
    if (config.has("residual_depths")) {
        s.residual_depths = parse_sizes(config.list("residual_depths"), "residual_depths");
    }
    s.instance_width = config.count("instance_width", s.instance_width);
    s.validate();
    return s;
}

void ExperimentSpec::validate() const {
    auto fail = [](const std::string& m) { throw ConfigError(m); };
    if (jobs == 0) fail("jobs must be at least 1");
    if (command == Command::BoundCheck || command == Command::OracleTest) {
        if (instances == 0) fail("instances must be at least 1");
        if (plain_depths.empty() || residual_depths.empty()) fail("instance depth lists must be nonempty");
        for (auto d : plain_depths) {
            if (d == 0) fail("plain_depths entries must be at least 1");
        }
        for (auto d : residual_depths) {
            if (d == 0) fail("residual_depths entries must be at least 1");
        }
        if (instance_width == 0) fail("instance_width must be at least 1");
        return;
    }
    if (depths.empty() || c_values.empty() || lrs.empty() || activations.empty() || residual.empty()) {
        fail("experiment grid must be nonempty");
    }
    if (repeats == 0) fail("repeats must be at least 1");
    for (auto d : depths) {
        if (d == 0) fail("depths entries must be at least 1");
    }
    for (const auto& c : c_values) {
        if (c && !(std::isfinite(*c) && *c > 0.0)) fail("c must be positive or 'none'");
    }
    for (double lr : lrs) {
        if (!(std::isfinite(lr) && lr > 0.0)) fail("lr must be positive");
    }
    if (hidden_dim == 0) fail("hidden_dim must be at least 1");
    if (max_epochs == 0) fail("max_epochs must be at least 1");
    if (dataset.is_sbm()) {
        const auto& p = dataset.sbm;
        if (p.blocks == 0 || p.per_block == 0 || p.feat_dim == 0) fail("sbm sizes must be at least 1");
        if (!(p.p_in >= 0.0 && p.p_in <= 1.0 && p.p_out >= 0.0 && p.p_out <= 1.0)) {
            fail("sbm probabilities must lie in [0, 1]");
        }
    }
}

std::string ExperimentSpec::echo() const {
    std::ostringstream o;
    o << "command = " << to_string(command) << '\n';
    if (command == Command::BoundCheck || command == Command::OracleTest) {
        o << "instances = " << instances << '\n';
        o << "plain_depths = " << join(plain_depths, size_text) << '\n';
        o << "residual_depths = " << join(residual_depths, size_text) << '\n';
        o << "instance_width = " << instance_width << '\n';
        o << "seed_base = " << seed_base << '\n';
        o << "out_dir = " << out_dir.string() << '\n';
        return o.str();
    }
    if (dataset.dir) {
        o << "dataset = " << dataset.dir->string() << '\n';
        if (!dataset.name.empty()) o << "dataset.name = " << dataset.name << '\n';
    } else {
        o << "dataset = sbm\n";
        o << "sbm.blocks = " << dataset.sbm.blocks << '\n';
        o << "sbm.per_block = " << dataset.sbm.per_block << '\n';
        o << "sbm.p_in = " << format_double(dataset.sbm.p_in) << '\n';
        o << "sbm.p_out = " << format_double(dataset.sbm.p_out) << '\n';
        o << "sbm.feat_dim = " << dataset.sbm.feat_dim << '\n';
        o << "sbm.seed = " << dataset.sbm.seed << '\n';
    }
    o << "depths = " << join(depths, size_text) << '\n';
    o << "c = " << join(c_values, c_text) << '\n';
    o << "lr = " << join(lrs, [](double v) { return format_double(v); }) << '\n';
    o << "activations = " << join(activations, [](const Activation& a) { return to_string(a); }) << '\n';
    o << "residual = " << join(residual, bool_text) << '\n';
    o << "hidden_dim = " << hidden_dim << '\n';
    o << "repeats = " << repeats << '\n';
    o << "seed_base = " << seed_base << '\n';
    o << "out_dir = " << out_dir.string() << '\n';
    o << "max_epochs = " << max_epochs << '\n';
    o << "patience = " << patience << '\n';
    o << "early_stop = " << bool_text(early_stop) << '\n';
    o << "save_checkpoints = " << bool_text(save_checkpoints) << '\n';
    return o.str();
}

Graph load_graph(const ExperimentSpec& spec) {
    if (spec.dataset.is_sbm()) return sbm_generate(spec.dataset.sbm);
    std::optional<std::string> validate_as;
    if (!spec.no_validate) {
        std::string name = spec.dataset.name;
        if (name.empty()) {
            name = spec.dataset.dir->filename().string();
            std::transform(name.begin(), name.end(), name.begin(), [](unsigned char ch) { return std::tolower(ch); });
            if (!reference_stats(name)) name.clear();
        }
        if (!name.empty()) validate_as = name;
    }
    return load_dataset(DatasetFiles::in_directory(*spec.dataset.dir), validate_as);
}

std::vector<Cell> expand_grid(const ExperimentSpec& spec) {
    std::vector<Cell> cells;
    for (bool res : spec.residual) {
        for (const auto& act : spec.activations) {
            for (auto depth : spec.depths) {
                for (const auto& c : spec.c_values) {
                    for (double lr : spec.lrs) {
                        for (std::size_t r = 0; r < spec.repeats; ++r) {
                            Cell cell;
                            cell.depth = depth;
                            cell.c = c;
                            cell.lr = lr;
                            cell.activation = act;
                            cell.residual = res;
                            cell.repeat = r;
                            cell.seed = spec.seed_base + r;
                            cell.id = "L" + std::to_string(depth) + (res ? "-res-" : "-gcn-") +
                                      path_safe(to_string(act)) + "-c" + c_text(c) + "-lr" + format_double(lr) +
                                      "-s" + std::to_string(r);
                            cells.push_back(std::move(cell));
                        }
                    }
                }
            }
        }
    }
    return cells;
}

TrainConfig cell_train_config(const ExperimentSpec& spec, const Cell& cell, std::size_t num_classes) {
    TrainConfig tc;
    tc.model.depth = cell.depth;
    tc.model.hidden_dim = spec.hidden_dim;
    tc.model.num_classes = num_classes;
    tc.model.activation = cell.activation;
    tc.model.residual = cell.residual;
    tc.model.lipschitz_c = cell.c;
    tc.lr = cell.lr;
    tc.max_epochs = spec.max_epochs;
    tc.early_stop = spec.early_stop;
    tc.patience = spec.patience;
    tc.seed = cell.seed;
    const bool wants_profile = spec.command == Command::GradProfile || spec.command == Command::Scatter;
    tc.record_profiles = wants_profile ? ProfileSchedule::AtBest : ProfileSchedule::Never;
    return tc;
}

std::vector<CellOutcome> run_cells(const Graph& graph, const ExperimentSpec& spec, const std::vector<Cell>& cells,
                                   std::vector<fs::path>& artifacts) {
    std::vector<CellOutcome> outcomes(cells.size());
    std::vector<std::vector<fs::path>> files(cells.size());
    std::vector<std::exception_ptr> errors(cells.size());
    std::atomic<std::size_t> next{0};

    auto worker = [&] {
        for (std::size_t i = next++; i < cells.size(); i = next++) {
            try {
                const Cell& cell = cells[i];
                const TrainConfig tc = cell_train_config(spec, cell, graph.num_classes());
                TrainLog log = train(graph, tc);
                const fs::path dir = command_dir(spec) / cell.id;

                std::ostringstream csv, summary;
                write_train_csv(csv, log);
                write_file(dir / "log.csv", csv.str(), files[i]);
                write_train_summary(summary, log, tc);
                write_file(dir / "summary.txt", summary.str(), files[i]);
                if (log.gradient_profile_at_best) {
                    std::ostringstream prof;
                    write_profile_csv(prof, *log.gradient_profile_at_best);
                    write_file(dir / "profile.csv", prof.str(), files[i]);
                    const auto& v = log.gradient_profile_at_best->values;
                    const std::vector<PlotSeries> series{{cell.id, layer_axis(v.size()), v}};
                    write_file(dir / "plot.svg", profile_svg(cell.id, series), files[i]);
                } else {
                    write_file(dir / "plot.svg", accuracy_svg(cell.id, log), files[i]);
                }
                if (spec.save_checkpoints && log.best_model) {
                    save_checkpoint(*log.best_model, dir / "model.bin");
                    files[i].push_back(dir / "model.bin");
                }
                log.best_model.reset();
                if (log.diverged) {
                    warn("cell " + cell.id + " diverged: " + log.divergence_reason);
                }
                outcomes[i] = CellOutcome{cell, std::move(log)};
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };

    const std::size_t n_threads = std::min(spec.jobs, std::max<std::size_t>(cells.size(), 1));
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    for (auto& f : files) artifacts.insert(artifacts.end(), f.begin(), f.end());
    return outcomes;
}

ExperimentResult run_grad_profile(const ExperimentSpec& spec, const Graph& graph) {
    ExperimentResult res;
    const auto cells = expand_grid(spec);
    auto outcomes = run_cells(graph, spec, cells, res.artifacts);

    std::ostringstream profiles, fits;
    profiles << "cell,depth,activation,residual,layer,value,is_nan\n";
    fits << "cell,depth,activation,residual,slope,intercept,r_squared,points,nan_layers,input_over_last\n";
    std::vector<PlotSeries> series;
    for (auto& oc : outcomes) {
        ProfileRow row;
        row.cell = oc.cell;
        row.diverged = oc.log.diverged;
        if (oc.log.gradient_profile_at_best) row.profile = *oc.log.gradient_profile_at_best;
        const auto& v = row.profile.values;
        for (std::size_t l = 0; l < v.size(); ++l) {
            profiles << oc.cell.id << ',' << oc.cell.depth << ',' << to_string(oc.cell.activation) << ','
                     << bool_text(oc.cell.residual) << ',' << l << ',' << format_double(v[l]) << ','
                     << (std::isfinite(v[l]) ? 0 : 1) << '\n';
        }
        try {
            row.fit = fit_decay(row.profile);
        } catch (const FitError& e) {
            warn("cell " + oc.cell.id + ": " + e.what());
        }
        const double ratio = v.empty() ? std::nan("") : v.front() / v.back();
        fits << oc.cell.id << ',' << oc.cell.depth << ',' << to_string(oc.cell.activation) << ','
             << bool_text(oc.cell.residual) << ',';
        if (row.fit) {
            fits << format_double(row.fit->slope) << ',' << format_double(row.fit->intercept) << ','
                 << format_double(row.fit->r_squared) << ',' << row.fit->points;
        } else {
            fits << "nan,nan,nan,0";
        }
        fits << ',' << row.profile.nan_layers.size() << ',' << format_double(ratio) << '\n';
        series.push_back({oc.cell.id, layer_axis(v.size()), v});
        res.seeds.push_back(oc.cell.seed);
        res.profiles.push_back(std::move(row));
    }
    const fs::path dir = command_dir(spec);
    write_file(dir / "profiles.csv", profiles.str(), res.artifacts);
    write_file(dir / "fits.csv", fits.str(), res.artifacts);
    write_file(dir / "profiles.svg", profile_svg("gradient similarity by layer", series), res.artifacts);
    return res;
}

ExperimentResult run_depth_sweep(const ExperimentSpec& spec, const Graph& graph) {
    ExperimentResult res;
    const auto cells = expand_grid(spec);
    const auto outcomes = run_cells(graph, spec, cells, res.artifacts);

    // Cells are ordered residual > activation > depth > c > lr > repeat, so
    // consecutive blocks of `repeats` share a learning rate and consecutive
    // blocks of `repeats * lrs` share a sweep row.
    const std::size_t per_lr = spec.repeats;
    const std::size_t per_row = per_lr * spec.lrs.size();
    std::ostringstream csv;
    csv << "depth,c,activation,residual,best_lr,test_mean,test_std,val_mean,val_std,diverged,repeats\n";
    for (std::size_t start = 0; start < outcomes.size(); start += per_row) {
        SweepRow row;
        const Cell& head = outcomes[start].cell;
        row.depth = head.depth;
        row.c = head.c;
        row.activation = head.activation;
        row.residual = head.residual;
        double best_val = -1.0;
        for (std::size_t li = 0; li < spec.lrs.size(); ++li) {
            std::vector<double> vals, tests;
            std::size_t diverged = 0;
            for (std::size_t r = 0; r < per_lr; ++r) {
                const auto& log = outcomes[start + li * per_lr + r].log;
                vals.push_back(log.best_val_acc);
                tests.push_back(log.test_at_best);
                diverged += log.diverged ? 1 : 0;
            }
            const MetricStats v = metric_stats(vals);
            if (v.mean > best_val) {
                best_val = v.mean;
                row.best_lr = spec.lrs[li];
                row.val = v;
                row.test = metric_stats(tests);
                row.diverged = diverged;
            }
        }
        csv << row.depth << ',' << c_text(row.c) << ',' << to_string(row.activation) << ','
            << bool_text(row.residual) << ',' << format_double(row.best_lr) << ','
            << format_double(100.0 * row.test.mean) << ',' << format_double(100.0 * row.test.std) << ','
            << format_double(100.0 * row.val.mean) << ',' << format_double(100.0 * row.val.std) << ','
            << row.diverged << ',' << spec.repeats << '\n';
        res.sweep.push_back(row);
    }
    for (std::size_t r = 0; r < spec.repeats; ++r) res.seeds.push_back(spec.seed_base + r);

    std::map<std::string, PlotSeries> by_curve;
    std::vector<std::string> order;
    for (const auto& row : res.sweep) {
        const std::string key = std::string(row.residual ? "res" : "gcn") + " " + to_string(row.activation) +
                                " c=" + c_text(row.c);
        if (!by_curve.count(key)) order.push_back(key);
        auto& s = by_curve[key];
        s.label = key;
        s.x.push_back(static_cast<double>(row.depth));
        s.y.push_back(100.0 * row.test.mean);
    }
    std::vector<PlotSeries> series;
    for (const auto& k : order) series.push_back(by_curve[k]);
    const fs::path dir = command_dir(spec);
    write_file(dir / "sweep.csv", csv.str(), res.artifacts);
    write_file(dir / "sweep.svg",
               render_svg({"test accuracy by depth", "layers", "test accuracy (%)", true, false, false}, series),
               res.artifacts);
    return res;
}

ExperimentResult run_scatter(const ExperimentSpec& spec, const Graph& graph) {
    ExperimentResult res;
    const auto cells = expand_grid(spec);
    const auto outcomes = run_cells(graph, spec, cells, res.artifacts);

    std::ostringstream csv;
    csv << "cell,depth,residual,activation,c,lr,representation_mu,gradient_mu,test_acc,diverged\n";
    PlotSeries rg[2], ar[2], ag[2];
    for (int k = 0; k < 2; ++k) {
        const std::string label = k ? "residual" : "plain";
        rg[k].label = ar[k].label = ag[k].label = label;
    }
    for (const auto& oc : outcomes) {
        ScatterRow row;
        row.cell = oc.cell;
        row.diverged = oc.log.diverged;
        row.test_acc = oc.log.test_at_best;
        const bool have = oc.log.gradient_profile_at_best && !oc.log.gradient_profile_at_best->values.empty();
        row.representation_mu = have ? oc.log.representation_similarity_at_best : std::nan("");
        row.gradient_mu = have ? oc.log.gradient_profile_at_best->values.front() : std::nan("");
        csv << oc.cell.id << ',' << oc.cell.depth << ',' << bool_text(oc.cell.residual) << ','
            << to_string(oc.cell.activation) << ',' << c_text(oc.cell.c) << ',' << format_double(oc.cell.lr) << ','
            << format_double(row.representation_mu) << ',' << format_double(row.gradient_mu) << ','
            << format_double(row.test_acc) << ',' << bool_text(row.diverged) << '\n';
        const int k = oc.cell.residual ? 1 : 0;
        rg[k].x.push_back(row.representation_mu);
        rg[k].y.push_back(row.gradient_mu);
        ar[k].x.push_back(row.representation_mu);
        ar[k].y.push_back(row.test_acc);
        ag[k].x.push_back(row.gradient_mu);
        ag[k].y.push_back(row.test_acc);
        res.seeds.push_back(oc.cell.seed);
        res.scatter.push_back(row);
    }
    std::sort(res.seeds.begin(), res.seeds.end());
    res.seeds.erase(std::unique(res.seeds.begin(), res.seeds.end()), res.seeds.end());

    const fs::path dir = command_dir(spec);
    write_file(dir / "scatter.csv", csv.str(), res.artifacts);
    const std::vector<PlotSeries> s1{rg[0], rg[1]}, s2{ar[0], ar[1]}, s3{ag[0], ag[1]};
    write_file(dir / "scatter_rep_vs_grad.svg",
               render_svg({"representation vs gradient similarity", "representation similarity",
                           "gradient similarity", true, true, true},
                          s1),
               res.artifacts);
    write_file(dir / "scatter_acc_vs_rep.svg",
               render_svg({"test accuracy vs representation similarity", "representation similarity",
                           "test accuracy", true, false, true},
                          s2),
               res.artifacts);
    write_file(dir / "scatter_acc_vs_grad.svg",
               render_svg({"test accuracy vs gradient similarity", "gradient similarity", "test accuracy", true,
                           false, true},
                          s3),
               res.artifacts);
    return res;
}

ExperimentResult run_train_curves(const ExperimentSpec& spec, const Graph& graph) {
    ExperimentResult res;
    const auto cells = expand_grid(spec);
    auto outcomes = run_cells(graph, spec, cells, res.artifacts);

    std::ostringstream summary, curves;
    summary << "cell,final_train_acc,epochs_to_99,best_val_acc,test_at_best,diverged\n";
    std::size_t longest = 0;
    std::vector<PlotSeries> series;
    for (auto& oc : outcomes) {
        CurveRow row;
        row.cell = oc.cell;
        row.epochs_to_99 = oc.log.epochs_to_train_acc(0.99);
        row.final_train_acc = oc.log.final_train_acc();
        row.epochs = std::move(oc.log.epochs);
        longest = std::max(longest, row.epochs.size());
        summary << oc.cell.id << ',' << format_double(row.final_train_acc) << ','
                << (row.epochs_to_99 ? std::to_string(*row.epochs_to_99) : "none") << ','
                << format_double(oc.log.best_val_acc) << ',' << format_double(oc.log.test_at_best) << ','
                << bool_text(oc.log.diverged) << '\n';
        PlotSeries s{oc.cell.id, {}, {}};
        for (const auto& e : row.epochs) {
            s.x.push_back(static_cast<double>(e.epoch));
            s.y.push_back(e.train_acc);
        }
        series.push_back(std::move(s));
        res.seeds.push_back(oc.cell.seed);
        res.curves.push_back(std::move(row));
    }
    std::sort(res.seeds.begin(), res.seeds.end());
    res.seeds.erase(std::unique(res.seeds.begin(), res.seeds.end()), res.seeds.end());

    curves << "epoch";
    for (const auto& row : res.curves) curves << ',' << row.cell.id;
    curves << '\n';
    for (std::size_t e = 0; e < longest; ++e) {
        curves << e;
        for (const auto& row : res.curves) {
            curves << ',';
            if (e < row.epochs.size()) curves << format_double(row.epochs[e].train_acc);
        }
        curves << '\n';
    }
    const fs::path dir = command_dir(spec);
    write_file(dir / "curves.csv", curves.str(), res.artifacts);
    write_file(dir / "curve_summary.csv", summary.str(), res.artifacts);
    const PlotSpec plot{"training accuracy", "epoch", "train accuracy", false, false, false};
    write_file(dir / "curves.svg", render_svg(plot, series), res.artifacts);
    return res;
}

double scaled_error(const DenseMatrix& value, const DenseMatrix& reference) {
    double scale = 1.0;
    for (double r : reference.values()) scale = std::max(scale, std::abs(r));
    return max_abs_diff(value, reference) / scale;
}

LinearInstance make_linear_instance(std::uint64_t seed, std::size_t depth, bool residual, std::size_t width) {
    const std::size_t per_block = 6 + seed % 5;
    for (std::uint64_t attempt = 0;; ++attempt) {
        Graph g = sbm_generate({2, per_block, 0.6, 0.25, 3, seed * 7919 + attempt});
        const auto props = graph_properties(g);
        if (!props.connected || props.bipartite) continue;

        ModelConfig mc;
        mc.depth = depth;
        mc.hidden_dim = width;
        mc.in_dim = g.features().cols();
        mc.num_classes = g.num_classes();
        mc.activation = Activation::identity();
        mc.residual = residual;
        mc.seed = seed;
        Model model = Model::init(mc);
        Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
        for (auto& w : model.layers) {
            const double scale = rng.uniform(0.5, 1.5) / std::sqrt(static_cast<double>(width));
            w = rng.normal_matrix(width, width, scale);
        }
        Tape tape = forward(model, g);
        const auto loss = masked_cross_entropy(tape.logits, g.labels(), g.train_mask());
        backward(tape, model, g, loss.grad);
        return LinearInstance{std::move(g), std::move(model), std::move(tape)};
    }
}

ExperimentResult run_oracle_test(const ExperimentSpec& spec) {
    constexpr double kPlainTol = 1e-10;
    constexpr double kResidualTol = 1e-8;
    ExperimentResult res;
    std::ostringstream csv;
    csv << "instance,residual,depth,layer,input_grad_error,weight_grad_error,monomials,status\n";
    double worst = 0.0;
    for (std::size_t i = 0; i < spec.instances; ++i) {
        const bool residual = i % 2 == 1;
        const auto& depths = residual ? spec.residual_depths : spec.plain_depths;
        const std::size_t depth = depths[(i / 2) % depths.size()];
        const std::uint64_t seed = spec.seed_base + i;
        res.seeds.push_back(seed);
        const auto inst = make_linear_instance(seed, depth, residual, spec.instance_width);
        const auto& adj = inst.graph.norm_adj();
        const auto& g_last = inst.tape.grad_x.back();
        for (std::size_t l = 0; l < depth; ++l) {
            OracleRow row;
            row.instance = i;
            row.residual = residual;
            row.depth = depth;
            row.layer = l;
            try {
                DenseMatrix grad;
                if (residual) {
                    auto ps = reslgn_input_gradient(l, inst.model.layers, adj, g_last);
                    grad = std::move(ps.gradient);
                    row.monomials = ps.monomials;
                } else {
                    grad = lgn_input_gradient(l, inst.model.layers, adj, g_last);
                    row.monomials = 1;
                }
                row.input_grad_error = scaled_error(grad, inst.tape.grad_x[l]);
                const auto grad_w = lgn_weight_gradient(inst.tape.x[l], adj, inst.tape.grad_x[l + 1]);
                row.weight_grad_error = scaled_error(grad_w, inst.tape.grad_w[l]);
                const double tol = residual ? kResidualTol : kPlainTol;
                const double err = std::max(row.input_grad_error, row.weight_grad_error);
                worst = std::max(worst, err);
                if (!(err <= tol)) {
                    res.exit_code = kExitViolation;
                    row.message = "tolerance exceeded";
                    res.messages.push_back("instance " + std::to_string(i) + " layer " + std::to_string(l) +
                                           ": error " + format_double(err) + " exceeds " + format_double(tol));
                } else {
                    row.message = "ok";
                }
            } catch (const DepthCapError& e) {
                row.refused = true;
                row.message = std::string("refused: ") + e.what();
                res.messages.push_back("instance " + std::to_string(i) + " layer " + std::to_string(l) + ": " +
                                       row.message);
            }
            std::string status = row.message;
            std::replace(status.begin(), status.end(), ',', ';');
            csv << i << ',' << bool_text(residual) << ',' << depth << ',' << l << ','
                << format_double(row.input_grad_error) << ',' << format_double(row.weight_grad_error) << ','
                << row.monomials << ',' << status << '\n';
            res.oracle.push_back(std::move(row));
        }
    }
    res.messages.push_back("max oracle error " + format_double(worst));
    write_file(command_dir(spec) / "oracle.csv", csv.str(), res.artifacts);
    return res;
}

ExperimentResult run_bound_check(const ExperimentSpec& spec) {
    ExperimentResult res;
    std::ostringstream summary;
    summary << "instance,chain,depth,layers,violations,max_lhs_over_rhs\n";
    std::size_t violations = 0;
    for (std::size_t i = 0; i < spec.instances; ++i) {
        const std::uint64_t seed = spec.seed_base + i;
        res.seeds.push_back(seed);
        for (bool residual : {false, true}) {
            const char* chain = residual ? "residual" : "plain";
            const auto& depths = residual ? spec.residual_depths : spec.plain_depths;
            const std::size_t depth = depths[i % depths.size()];
            const auto inst = make_linear_instance(seed, depth, residual, spec.instance_width);
            const auto props = graph_properties(inst.graph);
            const auto& g_last = inst.tape.grad_x.back();
            std::vector<BoundReport> reports;
            std::size_t bad = 0;
            double worst = 0.0;
            for (std::size_t l = 0; l < depth; ++l) {
                try {
                    const auto& adj = inst.graph.norm_adj();
                    BoundReport r = residual ? residual_smoothing_bound(l, inst.model.layers, adj, g_last, props)
                                             : plain_smoothing_bound(l, inst.model.layers, adj, g_last, props);
                    if (!r.satisfied) ++bad;
                    if (r.rhs > 0.0) worst = std::max(worst, r.lhs / r.rhs);
                    res.bounds.push_back({i, residual, depth, r});
                    reports.push_back(std::move(r));
                } catch (const DepthCapError& e) {
                    res.messages.push_back("instance " + std::to_string(i) + " layer " + std::to_string(l) +
                                           ": refused: " + e.what());
                }
            }
            std::ostringstream csv;
            write_bound_csv(csv, reports);
            std::ostringstream name;
            name << "inst-" << std::setw(3) << std::setfill('0') << i << '/' << chain << ".csv";
            write_file(command_dir(spec) / name.str(), csv.str(), res.artifacts);
            summary << i << ',' << chain << ',' << depth << ',' << reports.size() << ',' << bad << ','
                    << format_double(worst) << '\n';
            if (bad) {
                res.messages.push_back("instance " + std::to_string(i) + " " + chain +
                                       " chain: " + std::to_string(bad) + " violated layer(s)");
            }
            violations += bad;
        }
    }
    if (violations) res.exit_code = kExitViolation;
    res.messages.push_back(std::to_string(violations) + " bound violation(s)");
    write_file(command_dir(spec) / "bound_summary.csv", summary.str(), res.artifacts);
    return res;
}

std::string sha256_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) {
        throw std::runtime_error("sha256 initialization failed");
    }
    char buf[1 << 16];
    while (in) {
        in.read(buf, sizeof buf);
        if (in.gcount() > 0 && EVP_DigestUpdate(ctx.get(), buf, static_cast<std::size_t>(in.gcount())) != 1) {
            throw std::runtime_error("sha256 update failed");
        }
    }
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1) throw std::runtime_error("sha256 finalization failed");
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += kHex[digest[i] >> 4];
        out += kHex[digest[i] & 0xf];
    }
    return out;
}

ExperimentResult run_experiment(const ExperimentSpec& spec) {
    spec.validate();
    ExperimentResult res;
    switch (spec.command) {
        case Command::BoundCheck: res = run_bound_check(spec); break;
        case Command::OracleTest: res = run_oracle_test(spec); break;
        default: {
            const Graph graph = load_graph(spec);
            switch (spec.command) {
                case Command::GradProfile: res = run_grad_profile(spec, graph); break;
                case Command::DepthSweep: res = run_depth_sweep(spec, graph); break;
                case Command::Scatter: res = run_scatter(spec, graph); break;
                case Command::TrainCurves: res = run_train_curves(spec, graph); break;
                default: break;
            }
        }
    }

    std::vector<std::pair<std::string, std::string>> hashed;
    for (const auto& p : res.artifacts) {
        hashed.emplace_back(fs::relative(p, spec.out_dir).generic_string(), sha256_file(p));
    }
    std::sort(hashed.begin(), hashed.end());
    std::ostringstream m;
    m << "# gradflow manifest\n" << spec.echo();
    m << "seeds = " << join(res.seeds, [](std::uint64_t s) { return std::to_string(s); }) << '\n';
    m << "exit_code = " << res.exit_code << '\n';
    for (std::size_t i = 0; i < hashed.size(); ++i) {
        m << "artifact." << i << " = " << hashed[i].first << " sha256:" << hashed[i].second << '\n';
    }
    std::vector<fs::path> manifest;
    write_file(spec.out_dir / "manifest.txt", m.str(), manifest);
    return res;
}

}  // namespace gradflow
