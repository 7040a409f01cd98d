#include "hybridci/evolution.hpp"

#include <algorithm>
#include <numeric>

#include "hybridci/fuzzy_ea_controller.hpp"

namespace hybridci {

namespace {

// Stream tags for make_stream_id.
constexpr std::uint64_t kInitTag = 1;
constexpr std::uint64_t kBreedTag = 2;

}  // namespace

void GenomeLayout::add_span(std::string name, const Vector& lo, const Vector& hi) {
    if (lo.size() != hi.size()) throw InvalidInput("GenomeLayout: bound size mismatch for span '" + name + "'");
    if (has_span(name)) throw InvalidInput("GenomeLayout: duplicate span '" + name + "'");
    for (Eigen::Index i = 0; i < lo.size(); ++i)
        if (!(std::isfinite(lo[i]) && std::isfinite(hi[i]) && lo[i] <= hi[i]))
            throw InvalidInput("GenomeLayout: span '" + name + "' needs finite lower <= upper");
    const Eigen::Index offset = size();
    Vector l(offset + lo.size()), u(offset + hi.size());
    l << lower, lo;
    u << upper, hi;
    lower = std::move(l);
    upper = std::move(u);
    spans.push_back({std::move(name), offset, lo.size()});
}

void GenomeLayout::add_span(std::string name, Eigen::Index length, double lo, double hi) {
    add_span(std::move(name), Vector::Constant(length, lo), Vector::Constant(length, hi));
}

const GeneSpan& GenomeLayout::span(std::string_view name) const {
    for (const auto& s : spans)
        if (s.name == name) return s;
    throw InvalidInput("GenomeLayout: no span named '" + std::string(name) + "'");
}

bool GenomeLayout::has_span(std::string_view name) const {
    return std::any_of(spans.begin(), spans.end(), [&](const GeneSpan& s) { return s.name == name; });
}

void GenomeLayout::validate() const {
    if (lower.size() != upper.size()) throw InvalidInput("GenomeLayout: bound size mismatch");
    Eigen::Index next = 0;
    for (const auto& s : spans) {
        if (s.offset != next || s.length < 0) throw InvalidInput("GenomeLayout: spans must be contiguous and disjoint");
        next += s.length;
    }
    if (next != size()) throw InvalidInput("GenomeLayout: spans must cover every gene");
    if ((lower.array() > upper.array()).any()) throw InvalidInput("GenomeLayout: lower bound above upper bound");
}

bool GenomeLayout::operator==(const GenomeLayout& other) const {
    if (spans.size() != other.spans.size() || lower.size() != other.lower.size()) return false;
    for (std::size_t i = 0; i < spans.size(); ++i)
        if (spans[i].name != other.spans[i].name || spans[i].offset != other.spans[i].offset ||
            spans[i].length != other.spans[i].length)
            return false;
    return lower == other.lower && upper == other.upper;
}

Genome Genome::uniform(std::shared_ptr<const GenomeLayout> layout, RngStream& rng) {
    if (!layout) throw InvalidInput("Genome::uniform: missing layout");
    Genome g{Vector(layout->size()), std::move(layout)};
    for (Eigen::Index i = 0; i < g.genes.size(); ++i) g.genes[i] = rng.uniform(g.layout->lower[i], g.layout->upper[i]);
    return g;
}

void Genome::clamp() { genes = genes.cwiseMax(layout->lower).cwiseMin(layout->upper); }

void Genome::validate() const {
    if (!layout) throw InvalidInput("Genome: missing layout");
    layout->validate();
    if (genes.size() != layout->size()) throw InvalidInput("Genome: gene count does not match its layout");
    if (!genes.allFinite()) throw InvalidInput("Genome: non-finite gene");
    if ((genes.array() < layout->lower.array()).any() || (genes.array() > layout->upper.array()).any())
        throw InvalidInput("Genome: gene outside its bounds");
}

double MutationSigma::for_span(std::string_view name) const {
    const auto it = per_span.find(name);
    return it == per_span.end() ? default_sigma : it->second;
}

void MutationSigma::validate() const {
    if (!(default_sigma >= 0) || !std::isfinite(default_sigma))
        throw InvalidInput("mutation sigma must be finite and non-negative");
    for (const auto& [name, s] : per_span)
        if (!(s >= 0) || !std::isfinite(s))
            throw InvalidInput("mutation sigma for span '" + name + "' must be finite and non-negative");
}

std::string_view to_string(Adapter a) { return a == Adapter::None ? "none" : "fuzzy_controller"; }

Adapter adapter_from_string(std::string_view s) {
    if (s == "none") return Adapter::None;
    if (s == "fuzzy_controller") return Adapter::FuzzyController;
    throw InvalidInput("unknown adapter '" + std::string(s) + "'");
}

std::string_view to_string(FitnessSplit s) { return s == FitnessSplit::Valid ? "valid" : "test"; }

FitnessSplit fitness_split_from_string(std::string_view s) {
    if (s == "valid") return FitnessSplit::Valid;
    if (s == "test") return FitnessSplit::Test;
    throw InvalidInput("unknown fitness split '" + std::string(s) + "'");
}

void EAConfig::validate() const {
    auto prob = [](double p) { return p >= 0 && p <= 1; };
    if (population_size < 2) throw InvalidInput("EAConfig: population_size must be at least 2");
    if (elitism < 1 || elitism >= population_size)
        throw InvalidInput("EAConfig: elitism must be at least 1 and below population_size");
    if (tournament_k < 2) throw InvalidInput("EAConfig: tournament_k must be at least 2");
    if (!prob(mutation_rate)) throw InvalidInput("EAConfig: mutation_rate must lie in [0, 1]");
    if (!prob(crossover_rate)) throw InvalidInput("EAConfig: crossover_rate must lie in [0, 1]");
    if (!(blend_alpha >= 0) || !std::isfinite(blend_alpha)) throw InvalidInput("EAConfig: blend_alpha must be >= 0");
    mutation_sigma.validate();
    if (max_population != 0 && max_population < population_size)
        throw InvalidInput("EAConfig: max_population must be 0 or at least population_size");
    if (stop_below && !std::isfinite(*stop_below)) throw InvalidInput("EAConfig: stop_below must be finite");
}

std::size_t tournament_select(const std::vector<double>& fitness, std::size_t k, RngStream& rng) {
    if (fitness.empty()) throw InvalidInput("tournament_select: empty population");
    std::size_t best = rng.uniform_index(fitness.size());
    for (std::size_t draw = 1; draw < k; ++draw) {
        const std::size_t c = rng.uniform_index(fitness.size());
        if (fitness[c] < fitness[best] || (fitness[c] == fitness[best] && c < best)) best = c;
    }
    return best;
}

Genome mutate(const Genome& g, double rate, const MutationSigma& sigma, RngStream& rng) {
    Genome out = g;
    if (rate <= 0) return out;
    for (const auto& span : g.layout->spans) {
        const double s = sigma.for_span(span.name);
        for (Eigen::Index i = span.offset; i < span.offset + span.length; ++i) {
            if (!rng.bernoulli(rate)) continue;
            const double range = g.layout->upper[i] - g.layout->lower[i];
            out.genes[i] += rng.gaussian(0.0, s * range);
        }
    }
    out.clamp();
    return out;
}

Genome blend_crossover(const Genome& a, const Genome& b, double alpha, RngStream& rng) {
    if (!a.layout || !b.layout || (a.layout != b.layout && !(*a.layout == *b.layout)))
        throw InvalidInput("blend_crossover: parents have different layouts");
    Genome child = a;
    for (Eigen::Index i = 0; i < a.genes.size(); ++i) {
        const double lo = std::min(a.genes[i], b.genes[i]);
        const double hi = std::max(a.genes[i], b.genes[i]);
        const double r = hi - lo;
        child.genes[i] = rng.uniform(lo - alpha * r, hi + alpha * r);
    }
    child.clamp();
    return child;
}

namespace {

struct Member {
    Genome genome;
    double fitness{0};
    bool evaluated{false};
};

GenerationStats summarize(const std::vector<Member>& pop, std::size_t generation, const EAConfig& cfg,
                          std::size_t penalized, std::size_t evaluations) {
    GenerationStats s;
    s.generation = generation;
    s.best = pop.front().fitness;
    s.worst = pop.front().fitness;
    double total = 0;
    for (const auto& m : pop) {
        s.best = std::min(s.best, m.fitness);
        s.worst = std::max(s.worst, m.fitness);
        total += m.fitness;
    }
    s.average = std::clamp(total / static_cast<double>(pop.size()), s.best, s.worst);
    s.population_size = pop.size();
    s.mutation_rate = cfg.mutation_rate;
    s.crossover_rate = cfg.crossover_rate;
    s.penalized = penalized;
    s.evaluations = evaluations;
    return s;
}

}  // namespace

EvolveResult evolve(const GenomeFactory& init, const FitnessFn& fitness, const EAConfig& config,
                    const GenerationObserver& observer) {
    config.validate();
    if (!init || !fitness) throw InvalidInput("evolve: genome factory and fitness function are required");
    EAConfig cfg = config;
    if (cfg.max_population == 0) cfg.max_population = 2 * cfg.population_size;
    const unsigned threads = cfg.threads ? cfg.threads : resolve_thread_count();
    const FuzzyController controller = cfg.controller ? *cfg.controller : FuzzyController::shipped();

    EvolveResult result;
    std::vector<Member> pop(cfg.population_size);
    for (std::size_t i = 0; i < pop.size(); ++i) {
        RngStream rng(cfg.seed, make_stream_id(kInitTag, 0, i));
        pop[i].genome = init(rng);
        pop[i].genome.validate();
    }

    auto evaluate = [&](std::size_t generation) {
        std::vector<std::size_t> todo;
        for (std::size_t i = 0; i < pop.size(); ++i)
            if (!pop[i].evaluated) todo.push_back(i);
        std::vector<char> flagged(todo.size(), 0);
        parallel_for(
            todo.size(),
            [&](std::size_t t) {
                Member& m = pop[todo[t]];
                double f;
                try {
                    f = fitness(m.genome);
                } catch (const Error&) {
                    f = kPenaltyFitness;
                    flagged[t] = 1;
                }
                if (!std::isfinite(f)) {
                    f = kPenaltyFitness;
                    flagged[t] = 1;
                }
                m.fitness = std::min(f, kPenaltyFitness);
                m.evaluated = true;
            },
            threads);
        result.evaluations += todo.size();
        const auto penalized = static_cast<std::size_t>(std::count(flagged.begin(), flagged.end(), 1));
        // Stable order by fitness: elites and ties favour lower indices.
        std::stable_sort(pop.begin(), pop.end(), [](const Member& a, const Member& b) { return a.fitness < b.fitness; });
        auto stats = summarize(pop, generation, cfg, penalized, result.evaluations);
        result.history.push_back(stats);
        if (observer) observer(stats);
        return stats;
    };

    GenerationStats stats = evaluate(0);
    auto stop = [&] { return cfg.stop_below && stats.best < *cfg.stop_below; };

    for (std::size_t gen = 1; gen <= cfg.generations && !stop(); ++gen) {
        if (cfg.adapter == Adapter::FuzzyController && gen >= 2) {
            const double prev_best = result.history[result.history.size() - 2].best;
            cfg = apply_outputs(cfg, controller_step(stats, prev_best, controller));
        }
        std::vector<double> fit(pop.size());
        for (std::size_t i = 0; i < pop.size(); ++i) fit[i] = pop[i].fitness;

        std::vector<Member> next(cfg.population_size);
        const std::size_t elites = std::min(cfg.elitism, pop.size());
        for (std::size_t i = 0; i < elites; ++i) next[i] = pop[i];
        for (std::size_t i = elites; i < next.size(); ++i) {
            RngStream rng(cfg.seed, make_stream_id(kBreedTag, gen, i));
            const Genome& p1 = pop[tournament_select(fit, cfg.tournament_k, rng)].genome;
            Genome child;
            if (cfg.crossover_rate > 0 && rng.bernoulli(cfg.crossover_rate)) {
                const Genome& p2 = pop[tournament_select(fit, cfg.tournament_k, rng)].genome;
                child = blend_crossover(p1, p2, cfg.blend_alpha, rng);
            } else {
                child = p1;
            }
            next[i].genome = mutate(child, cfg.mutation_rate, cfg.mutation_sigma, rng);
        }
        pop = std::move(next);
        stats = evaluate(gen);
    }

    result.stopped_early = stop() && stats.generation < cfg.generations;
    result.best = pop.front().genome;
    result.best_fitness = pop.front().fitness;
    return result;
}

}  // namespace hybridci
