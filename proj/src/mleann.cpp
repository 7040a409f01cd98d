#include "hybridci/mleann.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>

namespace hybridci {

namespace {

constexpr std::array kAlgorithms{TrainerAlgorithm::SCG, TrainerAlgorithm::QNA, TrainerAlgorithm::BP,
                                 TrainerAlgorithm::LM};
constexpr std::array kTransfers{TransferFn::Sigmoid, TransferFn::Tanh, TransferFn::Gaussian};

// Gene positions inside the learning and architecture spans.
enum LearningGene : Eigen::Index { Algorithm, LogRate, Momentum, LogLambda, Epochs, LearningGenes };
enum ArchGene : Eigen::Index { Layers, Neurons1, Neurons2, Transfer1, Transfer2, ArchGenes };

constexpr double kMaxMomentum = 0.95;

Eigen::Index maximal_weight_count(Eigen::Index d, Eigen::Index h, Eigen::Index m) {
    return h * (d + 1) + h * (h + 1) + m * (h + 1);
}

std::size_t bin(double g, std::size_t k) {
    const double b = std::floor(std::clamp(g, 0.0, 1.0) * static_cast<double>(k));
    return std::min(k - 1, static_cast<std::size_t>(b));
}

double bin_centre(std::size_t i, std::size_t k) { return (static_cast<double>(i) + 0.5) / static_cast<double>(k); }

// Nearest integer, ties toward the lower value, kept inside [lo, hi].
long round_gene(double g, double lo, double hi) {
    return static_cast<long>(std::clamp(std::ceil(g - 0.5), std::ceil(lo), std::floor(hi)));
}

template <class Seq>
std::size_t index_of(const Seq& seq, typename Seq::value_type v, const char* what) {
    const auto it = std::find(seq.begin(), seq.end(), v);
    if (it == seq.end()) throw InvalidInput(std::string("mleann_encode: unsupported ") + what);
    return static_cast<std::size_t>(it - seq.begin());
}

Eigen::Index max_hidden_of(const GenomeLayout& layout) {
    const auto& arch = layout.span("architecture");
    return static_cast<Eigen::Index>(std::floor(layout.upper[arch.offset + Neurons1]));
}

void check_layout(const GenomeLayout& layout, Eigen::Index d, Eigen::Index m) {
    if (d < 1 || m < 1) throw InvalidInput("mleann: input and output widths must be positive");
    if (!layout.has_span("learning") || !layout.has_span("architecture") || !layout.has_span("weights"))
        throw InvalidInput("mleann: layout lacks the learning, architecture or weights span");
    if (layout.span("learning").length != LearningGenes || layout.span("architecture").length != ArchGenes)
        throw InvalidInput("mleann: learning or architecture span has the wrong length");
    const Eigen::Index h = max_hidden_of(layout);
    if (h < 1 || layout.span("weights").length != maximal_weight_count(d, h, m))
        throw InvalidInput("mleann: weights span does not match a " + std::to_string(d) + "-" + std::to_string(h) +
                           "-" + std::to_string(h) + "-" + std::to_string(m) + " network");
}

void check_datasets(const Dataset& train, const Dataset& valid, const Dataset& test) {
    for (const Dataset* ds : {&train, &valid, &test}) ds->validate();
    for (const Dataset* ds : {&valid, &test})
        if (ds->input_width() != train.input_width() || ds->target_width() != train.target_width())
            throw InvalidInput("mleann_run: split '" + ds->name + "' has a different shape from the training split");
}

}  // namespace

EAConfig MLEANNConfig::default_ea() {
    EAConfig ea;
    ea.population_size = 30;
    ea.generations = 40;
    ea.elitism = 1;
    ea.crossover_rate = 0.3;
    ea.mutation_sigma.per_span = {{"learning", 0.05}, {"architecture", 0.1}, {"weights", 0.2}};
    return ea;
}

void MLEANNConfig::validate() const {
    ea.validate();
    if (max_hidden < 1) throw InvalidInput("MLEANNConfig: max_hidden must be at least 1");
    if (min_epochs < 1 || max_epochs < min_epochs)
        throw InvalidInput("MLEANNConfig: epoch bounds need 1 <= min_epochs <= max_epochs");
    if (!(weight_bound > 0) || !std::isfinite(weight_bound))
        throw InvalidInput("MLEANNConfig: weight_bound must be positive");
}

std::shared_ptr<const GenomeLayout> mleann_layout(const MLEANNConfig& cfg, Eigen::Index d, Eigen::Index m) {
    cfg.validate();
    if (d < 1 || m < 1) throw InvalidInput("mleann_layout: input and output widths must be positive");
    const auto h = static_cast<double>(cfg.max_hidden);
    auto layout = std::make_shared<GenomeLayout>();

    Vector lo(LearningGenes), hi(LearningGenes);
    lo << 0, -4, 0, -6, static_cast<double>(cfg.min_epochs);
    hi << 1, 0, kMaxMomentum, 0, static_cast<double>(cfg.max_epochs);
    layout->add_span("learning", lo, hi);

    lo.resize(ArchGenes);
    hi.resize(ArchGenes);
    lo << 1, 1, 1, 0, 0;
    hi << 2, h, h, 1, 1;
    layout->add_span("architecture", lo, hi);

    layout->add_span("weights", maximal_weight_count(d, static_cast<Eigen::Index>(cfg.max_hidden), m),
                     -cfg.weight_bound, cfg.weight_bound);
    return layout;
}

MLEANNDecoded mleann_decode(const Genome& g, Eigen::Index d, Eigen::Index m) {
    if (!g.layout) throw InvalidInput("mleann_decode: genome has no layout");
    const GenomeLayout& layout = *g.layout;
    check_layout(layout, d, m);
    if (g.genes.size() != layout.size()) throw InvalidInput("mleann_decode: gene count does not match its layout");
    const Eigen::Index h_max = max_hidden_of(layout);

    MLEANNDecoded out;
    const auto& ls = layout.span("learning");
    auto learn = [&](Eigen::Index i) { return g.genes[ls.offset + i]; };
    auto learn_hi = [&](Eigen::Index i) { return layout.upper[ls.offset + i]; };
    auto learn_lo = [&](Eigen::Index i) { return layout.lower[ls.offset + i]; };
    TrainerConfig& tc = out.trainer;
    tc.algorithm = kAlgorithms[bin(learn(Algorithm), kAlgorithms.size())];
    tc.learning_rate = std::pow(10.0, std::clamp(learn(LogRate), learn_lo(LogRate), learn_hi(LogRate)));
    tc.momentum = std::clamp(learn(Momentum), 0.0, kMaxMomentum);
    tc.lm_lambda0 = std::pow(10.0, std::clamp(learn(LogLambda), learn_lo(LogLambda), learn_hi(LogLambda)));
    tc.epochs = static_cast<std::size_t>(round_gene(learn(Epochs), learn_lo(Epochs), learn_hi(Epochs)));

    const auto& as = layout.span("architecture");
    auto arch = [&](Eigen::Index i) { return g.genes[as.offset + i]; };
    const auto hmax = static_cast<double>(h_max);
    const long layers = round_gene(arch(Layers), 1, 2);
    const Eigen::Index h1 = round_gene(arch(Neurons1), 1, hmax);
    const Eigen::Index h2 = round_gene(arch(Neurons2), 1, hmax);
    const TransferFn t1 = kTransfers[bin(arch(Transfer1), kTransfers.size())];
    const TransferFn t2 = kTransfers[bin(arch(Transfer2), kTransfers.size())];

    const auto& ws = layout.span("weights");
    const MLPNetwork full = MLPNetwork::zeros({d, h_max, h_max, m}, {TransferFn::Sigmoid, TransferFn::Sigmoid})
                                .with_parameters(g.genes.segment(ws.offset, ws.length));
    const Matrix& w_in = full.weights[0];
    const Matrix& w_mid = full.weights[1];
    const Matrix& w_out = full.weights[2];

    auto output_block = [&](Eigen::Index h) {
        Matrix w(m, h + 1);
        w.leftCols(h) = w_out.leftCols(h);
        w.col(h) = w_out.col(h_max);
        return w;
    };

    if (layers == 1) {
        out.network = MLPNetwork::zeros({d, h1, m}, {t1});
        out.network.weights[0] = w_in.topRows(h1);
        out.network.weights[1] = output_block(h1);
    } else {
        out.network = MLPNetwork::zeros({d, h1, h2, m}, {t1, t2});
        out.network.weights[0] = w_in.topRows(h1);
        Matrix mid(h2, h1 + 1);
        mid.leftCols(h1) = w_mid.topLeftCorner(h2, h1);
        mid.col(h1) = w_mid.col(h_max).head(h2);
        out.network.weights[1] = std::move(mid);
        out.network.weights[2] = output_block(h2);
    }
    return out;
}

Genome mleann_encode(const MLEANNDecoded& model, std::shared_ptr<const GenomeLayout> layout) {
    if (!layout) throw InvalidInput("mleann_encode: missing layout");
    const MLPNetwork& net = model.network;
    net.validate();
    const Eigen::Index d = net.input_width();
    const Eigen::Index m = net.output_width();
    check_layout(*layout, d, m);
    const Eigen::Index h_max = max_hidden_of(*layout);
    const std::size_t layers = net.hidden_layers();
    if (layers < 1 || layers > 2) throw InvalidInput("mleann_encode: network must have one or two hidden layers");
    for (std::size_t l = 1; l <= layers; ++l)
        if (net.layer_sizes[l] > h_max) throw InvalidInput("mleann_encode: hidden layer wider than max_hidden");

    Genome g{Vector::Zero(layout->size()), layout};
    const TrainerConfig& tc = model.trainer;
    const auto& ls = layout->span("learning");
    g.genes[ls.offset + Algorithm] = bin_centre(index_of(kAlgorithms, tc.algorithm, "algorithm"), kAlgorithms.size());
    g.genes[ls.offset + LogRate] = std::log10(tc.learning_rate);
    g.genes[ls.offset + Momentum] = tc.momentum;
    g.genes[ls.offset + LogLambda] = std::log10(tc.lm_lambda0);
    g.genes[ls.offset + Epochs] = static_cast<double>(tc.epochs);

    const auto& as = layout->span("architecture");
    const Eigen::Index h1 = net.layer_sizes[1];
    const Eigen::Index h2 = layers == 2 ? net.layer_sizes[2] : 1;
    g.genes[as.offset + Layers] = static_cast<double>(layers);
    g.genes[as.offset + Neurons1] = static_cast<double>(h1);
    g.genes[as.offset + Neurons2] = static_cast<double>(h2);
    g.genes[as.offset + Transfer1] = bin_centre(index_of(kTransfers, net.transfer[0], "transfer"), kTransfers.size());
    g.genes[as.offset + Transfer2] =
        layers == 2 ? bin_centre(index_of(kTransfers, net.transfer[1], "transfer"), kTransfers.size()) : 0.0;

    MLPNetwork full = MLPNetwork::zeros({d, h_max, h_max, m}, {TransferFn::Sigmoid, TransferFn::Sigmoid});
    const Matrix& first = net.weights[0];
    full.weights[0].topRows(h1) = first;
    const Matrix& last = net.weights.back();
    const Eigen::Index h_last = layers == 2 ? h2 : h1;
    full.weights[2].leftCols(h_last) = last.leftCols(h_last);
    full.weights[2].col(h_max) = last.col(h_last);
    if (layers == 2) {
        full.weights[1].topLeftCorner(h2, h1) = net.weights[1].leftCols(h1);
        full.weights[1].col(h_max).head(h2) = net.weights[1].col(h1);
    }
    const auto& ws = layout->span("weights");
    g.genes.segment(ws.offset, ws.length) = full.parameters();

    if ((g.genes.array() < layout->lower.array()).any() || (g.genes.array() > layout->upper.array()).any())
        throw InvalidInput("mleann_encode: network or trainer settings fall outside the genome bounds");
    return g;
}

MLEANNEvaluation mleann_evaluate(const Genome& g, const Dataset& train_ds, const Dataset& eval) {
    MLEANNEvaluation out;
    out.decoded = mleann_decode(g, train_ds.input_width(), train_ds.target_width());
    out.trained = out.decoded.network;
    try {
        TrainReport report = train(out.decoded.network, train_ds, out.decoded.trainer);
        out.trained = std::move(report.final_net);
        out.epochs_run = report.epochs_run;
    } catch (const TrainingDiverged& e) {
        out.trained = e.last_finite_network();
        out.epochs_run = out.decoded.trainer.epochs;
        out.diverged = true;
        return out;
    }
    const double r = rmse(forward_batch(out.trained, eval.inputs), eval.targets);
    if (std::isfinite(r)) {
        out.fitness = r;
    } else {
        out.diverged = true;
    }
    return out;
}

double mleann_fitness(const Genome& g, const Dataset& train_ds, const Dataset& eval) {
    return mleann_evaluate(g, train_ds, eval).fitness;
}

MLEANNRun mleann_run(const MLEANNConfig& cfg, const Dataset& train_ds, const Dataset& valid, const Dataset& test,
                     const GenerationObserver& observer) {
    cfg.validate();
    check_datasets(train_ds, valid, test);
    const Dataset& eval = cfg.fitness_split == FitnessSplit::Valid ? valid : test;
    const auto layout = mleann_layout(cfg, train_ds.input_width(), train_ds.target_width());

    std::atomic<std::size_t> epochs{0};
    const GenomeFactory init = [&](RngStream& rng) { return Genome::uniform(layout, rng); };
    const FitnessFn fitness = [&](const Genome& g) {
        const MLEANNEvaluation e = mleann_evaluate(g, train_ds, eval);
        epochs += e.epochs_run;
        return e.fitness;
    };

    MLEANNRun run;
    run.evolution = evolve(init, fitness, cfg.ea, observer);
    run.total_epochs = epochs.load();
    run.best = mleann_evaluate(run.evolution.best, train_ds, eval);
    run.diverged = run.best.diverged;
    const MLPNetwork& net = run.best.trained;
    run.train_rmse = rmse(forward_batch(net, train_ds.inputs), train_ds.targets);
    run.valid_rmse = rmse(forward_batch(net, valid.inputs), valid.targets);
    run.test_predictions = forward_batch(net, test.inputs);
    run.test_rmse = rmse(run.test_predictions, test.targets);
    return run;
}

}  // namespace hybridci
