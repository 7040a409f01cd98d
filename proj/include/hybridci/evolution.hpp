#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hybridci/numeric.hpp"

namespace hybridci {

struct FuzzyController;

struct GeneSpan {
    std::string name;
    Eigen::Index offset{0};
    Eigen::Index length{0};
};

/// Named, contiguous gene ranges with per-gene bounds.
struct GenomeLayout {
    std::vector<GeneSpan> spans;
    Vector lower;
    Vector upper;

    Eigen::Index size() const { return lower.size(); }
    /// Appends a span; bounds must have equal length and lower <= upper.
    void add_span(std::string name, const Vector& lo, const Vector& hi);
    void add_span(std::string name, Eigen::Index length, double lo, double hi);
    const GeneSpan& span(std::string_view name) const;
    bool has_span(std::string_view name) const;
    void validate() const;
    bool operator==(const GenomeLayout& other) const;
};

struct Genome {
    Vector genes;
    std::shared_ptr<const GenomeLayout> layout;

    /// Genes drawn uniformly within bounds.
    static Genome uniform(std::shared_ptr<const GenomeLayout> layout, RngStream& rng);

    auto segment(std::string_view span_name) const {
        const auto& s = layout->span(span_name);
        return genes.segment(s.offset, s.length);
    }
    void clamp();
    void validate() const;
};

/// Mutation step per span, as a fraction of each gene's bound range.
struct MutationSigma {
    double default_sigma{0.1};
    std::map<std::string, double, std::less<>> per_span;

    double for_span(std::string_view name) const;
    void validate() const;
};

enum class Adapter { None, FuzzyController };
std::string_view to_string(Adapter a);
Adapter adapter_from_string(std::string_view s);

/// Which held-out split a hybrid's fitness is measured on.
enum class FitnessSplit { Valid, Test };
std::string_view to_string(FitnessSplit s);
FitnessSplit fitness_split_from_string(std::string_view s);

struct EAConfig {
    std::size_t population_size{20};
    std::size_t generations{20};
    std::size_t elitism{1};
    std::size_t tournament_k{2};
    double mutation_rate{0.1};
    MutationSigma mutation_sigma;
    double crossover_rate{0.0};
    double blend_alpha{0.5};
    std::uint64_t seed{0};
    Adapter adapter{Adapter::None};
    /// Rule base used by the fuzzy adapter; null selects the shipped one.
    std::shared_ptr<const FuzzyController> controller;
    /// Upper population bound under adaptation; 0 means twice the initial size.
    std::size_t max_population{0};
    /// Stop once the best fitness falls below this value.
    std::optional<double> stop_below;
    /// Evaluation workers; 0 defers to HYBRIDCI_THREADS / hardware.
    unsigned threads{0};

    void validate() const;
};

struct GenerationStats {
    std::size_t generation{0};
    double best{0};
    double average{0};
    double worst{0};
    std::size_t population_size{0};
    double mutation_rate{0};
    double crossover_rate{0};
    /// Individuals whose fitness was non-finite or threw, scored kPenaltyFitness.
    std::size_t penalized{0};
    /// Cumulative fitness evaluations so far.
    std::size_t evaluations{0};
};

inline constexpr double kPenaltyFitness = 1e30;

using GenomeFactory = std::function<Genome(RngStream&)>;
/// Must be safe to call concurrently. Lower is better.
using FitnessFn = std::function<double(const Genome&)>;
using GenerationObserver = std::function<void(const GenerationStats&)>;

struct EvolveResult {
    Genome best;
    double best_fitness{0};
    std::vector<GenerationStats> history;
    std::size_t evaluations{0};
    bool stopped_early{false};
};

/// Generational loop with elitism. Generation 0 is the initial population;
/// each later generation keeps the elites unevaluated and refills the rest by
/// tournament, optional blend crossover and mutation. Offspring of
/// generation g, slot i draw from stream (seed, g, i), so results do not
/// depend on evaluation order or thread count.
EvolveResult evolve(const GenomeFactory& init, const FitnessFn& fitness, const EAConfig& cfg,
                    const GenerationObserver& observer = {});

/// Best of k draws with replacement; ties go to the lowest index.
std::size_t tournament_select(const std::vector<double>& fitness, std::size_t k, RngStream& rng);

/// Each gene moves with probability `rate` by N(0, sigma * range), then is clamped.
Genome mutate(const Genome& g, double rate, const MutationSigma& sigma, RngStream& rng);

/// BLX-alpha: each child gene uniform on [min - alpha r, max + alpha r], clamped.
Genome blend_crossover(const Genome& a, const Genome& b, double alpha, RngStream& rng);

}  // namespace hybridci
