#include "gradflow/train.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "gradflow/diagnostics.hpp"
#include "gradflow/errors.hpp"
#include "gradflow/format.hpp"

namespace gradflow {
namespace {

template <class Fn>
void for_each_param(Model& model, ModelGradients& a, ModelGradients& b, const ModelGradients& g, Fn fn) {
    fn(model.input_proj, a.input_proj, b.input_proj, g.input_proj);
    for (std::size_t l = 0; l < model.layers.size(); ++l) fn(model.layers[l], a.layers[l], b.layers[l], g.layers[l]);
    fn(model.readout, a.readout, b.readout, g.readout);
}

void require_nonempty(const NodeMask& m, const char* name) {
    if (std::none_of(m.begin(), m.end(), [](bool b) { return b; })) {
        throw IntegrityError(std::string("train: ") + name + " mask is empty");
    }
}

}  // namespace

ModelGradients ModelGradients::from_tape(const Tape& tape) {
    if (!tape.has_backward) throw StateError("ModelGradients::from_tape: tape has no backward pass");
    return {tape.grad_input_proj, tape.grad_w, tape.grad_readout};
}

bool ModelGradients::all_finite() const {
    if (!input_proj.all_finite() || !readout.all_finite()) return false;
    return std::all_of(layers.begin(), layers.end(), [](const DenseMatrix& m) { return m.all_finite(); });
}

AdamState AdamState::zeros_like(const Model& model) {
    AdamState s;
    auto shaped = [](const DenseMatrix& w) { return DenseMatrix(w.rows(), w.cols()); };
    s.m.input_proj = shaped(model.input_proj);
    s.m.readout = shaped(model.readout);
    for (const auto& w : model.layers) s.m.layers.push_back(shaped(w));
    s.v = s.m;
    return s;
}

bool adam_step(Model& model, const ModelGradients& grads, AdamState& state, double lr, const AdamParams& p) {
    if (grads.layers.size() != model.layers.size() || state.m.layers.size() != model.layers.size()) {
        throw ShapeError("adam_step: gradient/state depth does not match model");
    }
    if (!grads.all_finite()) {
        warn("adam_step: non-finite gradient, step skipped");
        return false;
    }
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(p.beta1, t);
    const double bc2 = 1.0 - std::pow(p.beta2, t);
    for_each_param(model, state.m, state.v, grads,
                   [&](DenseMatrix& w, DenseMatrix& m, DenseMatrix& v, const DenseMatrix& g) {
                       if (w.rows() != g.rows() || w.cols() != g.cols() || m.rows() != w.rows() ||
                           m.cols() != w.cols()) {
                           throw ShapeError("adam_step: parameter shape mismatch");
                       }
                       auto wv = w.values();
                       auto mv = m.values();
                       auto vv = v.values();
                       const auto gv = g.values();
                       for (std::size_t i = 0; i < wv.size(); ++i) {
                           mv[i] = p.beta1 * mv[i] + (1.0 - p.beta1) * gv[i];
                           vv[i] = p.beta2 * vv[i] + (1.0 - p.beta2) * gv[i] * gv[i];
                           const double m_hat = mv[i] / bc1;
                           const double v_hat = vv[i] / bc2;
                           wv[i] -= lr * m_hat / (std::sqrt(v_hat) + p.eps);
                       }
                   });
    return true;
}

void TrainConfig::validate() const {
    model.validate();
    if (!(lr > 0.0)) throw ConfigError("learning rate must be > 0");
    if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
    if (early_stop && patience < 1) throw ConfigError("patience must be >= 1 with early stopping");
    if (record_profiles == ProfileSchedule::EveryK && profile_every < 1) {
        throw ConfigError("profile_every must be >= 1");
    }
}

std::optional<std::size_t> TrainLog::epochs_to_train_acc(double threshold) const {
    for (const auto& e : epochs) {
        if (e.train_acc >= threshold) return e.epoch;
    }
    return std::nullopt;
}

TrainLog train(const Graph& graph, const TrainConfig& config) {
    TrainConfig cfg = config;
    cfg.model.seed = config.seed;
    cfg.model.in_dim = graph.features().cols();
    cfg.model.num_classes = std::max(cfg.model.num_classes, graph.num_classes());
    cfg.validate();
    require_nonempty(graph.train_mask(), "train");
    require_nonempty(graph.val_mask(), "validation");
    require_nonempty(graph.test_mask(), "test");

    Model model = Model::init(cfg.model);
    if (cfg.model.lipschitz_c) apply_to_model(model, *cfg.model.lipschitz_c);
    AdamState adam = AdamState::zeros_like(model);

    TrainLog log;
    log.best_val_acc = -1.0;
    for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        Tape tape;
        try {
            tape = forward(model, graph);
        } catch (const ForwardDivergence& e) {
            log.diverged = true;
            log.divergence_epoch = epoch;
            log.divergence_reason = e.what();
            break;
        }
        const LossResult loss = masked_cross_entropy(tape.logits, graph.labels(), graph.train_mask());
        EpochMetrics em;
        em.epoch = epoch;
        em.train_loss = loss.loss;
        em.train_acc = evaluate(tape.logits, graph.labels(), graph.train_mask());
        em.val_acc = evaluate(tape.logits, graph.labels(), graph.val_mask());
        em.test_acc = evaluate(tape.logits, graph.labels(), graph.test_mask());
        log.epochs.push_back(em);

        backward(tape, model, graph, loss.grad);
        const bool need_profile = cfg.record_profiles != ProfileSchedule::Never;
        if (need_profile) log.last_gradient_profile = similarity_profile(tape, ProfileKind::Gradient);

        if (em.val_acc > log.best_val_acc) {
            log.best_val_acc = em.val_acc;
            log.best_epoch = epoch;
            log.train_at_best = em.train_acc;
            log.test_at_best = em.test_acc;
            log.best_model = model;
            if (need_profile) {
                log.gradient_profile_at_best = log.last_gradient_profile;
                log.representation_similarity_at_best = node_similarity(tape.x.back());
            }
            if (cfg.model.lipschitz_c) log.lipschitz_at_best = diagnose(model, graph.norm_adj());
        }
        if (cfg.record_profiles == ProfileSchedule::EveryK && epoch % cfg.profile_every == 0) {
            log.profile_history.push_back({epoch, *log.last_gradient_profile, node_similarity(tape.x.back())});
        }

        if (!std::isfinite(loss.loss)) {
            log.diverged = true;
            log.divergence_epoch = epoch;
            log.divergence_reason = "non-finite training loss";
            break;
        }
        const ModelGradients grads = ModelGradients::from_tape(tape);
        if (!adam_step(model, grads, adam, cfg.lr)) {
            log.skipped_steps += 1;
            log.diverged = true;
            log.divergence_epoch = epoch;
            log.divergence_reason = "non-finite parameter gradient";
            break;
        }
        if (cfg.model.lipschitz_c) apply_to_model(model, *cfg.model.lipschitz_c);
        if (cfg.after_step) cfg.after_step(epoch, model);

        if (cfg.early_stop && epoch - log.best_epoch >= cfg.patience) break;
    }
    if (log.best_val_acc < 0.0) log.best_val_acc = 0.0;
    return log;
}

void write_train_csv(std::ostream& out, const TrainLog& log) {
    out << "epoch,train_loss,train_acc,val_acc,test_acc\n";
    for (const auto& e : log.epochs) {
        out << e.epoch << ',' << format_double(e.train_loss) << ',' << format_double(e.train_acc) << ','
            << format_double(e.val_acc) << ',' << format_double(e.test_acc) << '\n';
    }
}

void write_train_summary(std::ostream& out, const TrainLog& log, const TrainConfig& config) {
    const ModelConfig& m = config.model;
    out << "depth = " << m.depth << '\n'
        << "hidden_dim = " << m.hidden_dim << '\n'
        << "activation = " << to_string(m.activation) << '\n'
        << "residual = " << (m.residual ? "true" : "false") << '\n'
        << "lipschitz_c = " << (m.lipschitz_c ? format_double(*m.lipschitz_c) : "none") << '\n'
        << "lr = " << format_double(config.lr) << '\n'
        << "max_epochs = " << config.max_epochs << '\n'
        << "early_stop = " << (config.early_stop ? "true" : "false") << '\n'
        << "patience = " << config.patience << '\n'
        << "seed = " << config.seed << '\n'
        << "epochs_run = " << log.epochs.size() << '\n'
        << "best_epoch = " << log.best_epoch << '\n'
        << "best_val_acc = " << format_double(log.best_val_acc) << '\n'
        << "train_at_best = " << format_double(log.train_at_best) << '\n'
        << "test_at_best = " << format_double(log.test_at_best) << '\n'
        << "final_train_acc = " << format_double(log.final_train_acc()) << '\n'
        << "representation_similarity_at_best = " << format_double(log.representation_similarity_at_best) << '\n';
    if (log.gradient_profile_at_best && !log.gradient_profile_at_best->values.empty()) {
        out << "input_gradient_similarity_at_best = " << format_double(log.gradient_profile_at_best->values.front())
            << '\n';
    }
    out << "diverged = " << (log.diverged ? "true" : "false") << '\n';
    if (log.divergence_epoch) out << "divergence_epoch = " << *log.divergence_epoch << '\n';
    if (!log.divergence_reason.empty()) out << "divergence_reason = " << log.divergence_reason << '\n';
}

MetricStats metric_stats(const std::vector<double>& values) {
    MetricStats s;
    if (values.empty()) return s;
    s.min = *std::min_element(values.begin(), values.end());
    s.max = *std::max_element(values.begin(), values.end());
    for (double v : values) s.mean += v;
    s.mean /= static_cast<double>(values.size());
    for (double v : values) s.std += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(s.std / static_cast<double>(values.size()));
    return s;
}

RepeatResult run_repeats(const Graph& graph, TrainConfig config, std::size_t repeats, std::uint64_t seed_base) {
    RepeatResult r;
    std::vector<double> val, test, train_best, train_final;
    for (std::size_t i = 0; i < repeats; ++i) {
        config.seed = seed_base + i;
        r.seeds.push_back(config.seed);
        r.logs.push_back(train(graph, config));
        const TrainLog& log = r.logs.back();
        val.push_back(log.best_val_acc);
        test.push_back(log.test_at_best);
        train_best.push_back(log.train_at_best);
        train_final.push_back(log.final_train_acc());
    }
    r.stats["best_val_acc"] = metric_stats(val);
    r.stats["test_at_best"] = metric_stats(test);
    r.stats["train_at_best"] = metric_stats(train_best);
    r.stats["final_train_acc"] = metric_stats(train_final);
    return r;
}

}  // namespace gradflow
