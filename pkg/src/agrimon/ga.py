"""Per-pixel inverse modeling with a real-coded genetic algorithm.

The search minimizes the RMSE between the simulated and observed LAI series.
Operators: tournament selection, uniform crossover over the free genes,
per-gene Gaussian mutation (sd = fraction of the gene range), clamping to
bounds, and elitism. All randomness flows through one PCG64 generator seeded
from the config, so a run is a pure function of its inputs.

Fitness evaluation is pluggable (`evaluate_batch`); the distribution runtime
injects an evaluator that farms batches out to workers. Because fitness is a
pure function of (genome, observed, weather), any evaluator that returns the
values merged by genome index leaves the search trajectory bit-identical.
"""

import math
from dataclasses import dataclass, replace

from agrimon.model import (
    GENE_FIELDS, INT_GENES, CropGenome, GenomeBounds, ObservableSeries,
    ValidationError, WeatherSeries, lai_samples,
)
from agrimon.seeds import make_rng, mix_seed


@dataclass(frozen=True)
class GaConfig:
    pop_size: int = 48
    generations: int = 120
    crossover_rate: float = 0.9
    mutation_rate: float = 0.15
    mutation_sd_frac: float = 0.10
    tournament_size: int = 3
    elitism: int = 1
    seed: int = 0
    early_stop_rmse: float = 1e-6   # 0 disables early stopping
    free_genes: tuple = ("sow_day", "wmax_mm", "growth_rate")

    def validate(self) -> None:
        if self.pop_size < 2:
            raise ValidationError("pop_size must be >= 2")
        if self.generations < 0:
            raise ValidationError("generations must be >= 0")
        if not (1 <= self.tournament_size <= self.pop_size):
            raise ValidationError("tournament_size must be in [1, pop_size]")
        if not (0 <= self.elitism < self.pop_size):
            raise ValidationError("elitism must be in [0, pop_size)")
        for name in ("crossover_rate", "mutation_rate", "mutation_sd_frac"):
            p = getattr(self, name)
            if not (0.0 <= p <= 1.0):
                raise ValidationError(f"{name} must be in [0, 1]")
        if self.early_stop_rmse < 0:
            raise ValidationError("early_stop_rmse must be >= 0")
        if not self.free_genes:
            raise ValidationError("free_genes must not be empty")
        for name in self.free_genes:
            if name not in GENE_FIELDS:
                raise ValidationError(f"unknown free gene {name!r}")


@dataclass(frozen=True)
class EvaluatedGenome:
    genome: CropGenome
    rmse: float

    def __post_init__(self):
        if not (math.isfinite(self.rmse) and self.rmse >= 0):
            raise ValidationError(f"rmse must be finite and >= 0, got {self.rmse}")


@dataclass(frozen=True)
class PixelResult:
    """Best genome found for one pixel plus search accounting."""

    genome: CropGenome
    rmse: float
    generations_run: int
    evaluations: int


def rmse(xs, ys) -> float:
    """Root mean square difference between two equal-length series."""
    if len(xs) != len(ys):
        raise ValidationError(f"series length mismatch: {len(xs)} vs {len(ys)}")
    if not xs:
        raise ValidationError("series are empty")
    acc = 0.0
    for x, y in zip(xs, ys):
        d = x - y
        acc += d * d
    return math.sqrt(acc / len(xs))


def fitness(genome: CropGenome, observed: ObservableSeries,
            weather: WeatherSeries) -> float:
    """RMSE between the genome's noiseless simulated samples and the observation."""
    sim = lai_samples(genome, weather, observed.revisit_days)
    if len(sim) != len(observed.values):
        raise ValidationError(
            f"sampling grid mismatch: simulation yields {len(sim)} samples, "
            f"observation has {len(observed.values)}")
    return rmse(sim, observed.values)


def _check_search_bounds(config: GaConfig, bounds: GenomeBounds) -> None:
    for name in config.free_genes:
        lo, hi = bounds.intervals[name]
        if not lo < hi:
            raise ValidationError(f"degenerate bounds for free gene {name}: [{lo}, {hi}]")


def init_population(config: GaConfig, bounds: GenomeBounds,
                    template: CropGenome, rng) -> list:
    """Draw pop_size genomes: free genes uniform in bounds, the rest from the template."""
    config.validate()
    _check_search_bounds(config, bounds)
    free = [name for name in GENE_FIELDS if name in config.free_genes]
    population = []
    for _ in range(config.pop_size):
        genes = template.as_dict()
        for name in free:
            lo, hi = bounds.intervals[name]
            genes[name] = bounds.clamp(name, float(rng.uniform(lo, hi)))
        population.append(CropGenome(**genes))
    return population


def _tournament(evaluated, size: int, rng) -> CropGenome:
    picks = rng.integers(0, len(evaluated), size=size)
    best = min(picks, key=lambda i: (evaluated[i].rmse, int(i)))
    return evaluated[int(best)].genome


def evolve_generation(evaluated, config: GaConfig, bounds: GenomeBounds, rng,
                      sd_scale: float = 1.0) -> list:
    """Produce the next population from an evaluated one.

    The top `elitism` genomes (by rmse, stable order) pass unchanged; the rest
    come from tournament parents, uniform crossover applied with probability
    `crossover_rate` per pair, and Gaussian mutation per free gene with
    sd = sd_scale * mutation_sd_frac * gene range. `sd_scale` lets the caller
    anneal the mutation step over a run; the default leaves the documented sd.
    """
    config.validate()
    _check_search_bounds(config, bounds)
    if len(evaluated) != config.pop_size:
        raise ValidationError(
            f"population size mismatch: expected {config.pop_size}, got {len(evaluated)}")
    free = [name for name in GENE_FIELDS if name in config.free_genes]
    ranked = sorted(evaluated, key=lambda e: e.rmse)
    next_pop = [ranked[i].genome for i in range(config.elitism)]

    def mutate(genes: dict) -> CropGenome:
        for name in free:
            if rng.random() < config.mutation_rate:
                sd = sd_scale * config.mutation_sd_frac * bounds.span(name)
                if name in INT_GENES:
                    # keep single-step moves reachable after rounding
                    sd = max(sd, 0.6)
                genes[name] = bounds.clamp(name, genes[name] + float(rng.normal(0.0, sd)))
            else:
                genes[name] = bounds.clamp(name, genes[name])
        return CropGenome(**genes)

    while len(next_pop) < config.pop_size:
        p1 = _tournament(evaluated, config.tournament_size, rng)
        p2 = _tournament(evaluated, config.tournament_size, rng)
        c1, c2 = p1.as_dict(), p2.as_dict()
        if rng.random() < config.crossover_rate:
            for name in free:
                if rng.random() < 0.5:
                    c1[name], c2[name] = c2[name], c1[name]
        next_pop.append(mutate(c1))
        if len(next_pop) < config.pop_size:
            next_pop.append(mutate(c2))
    return next_pop


def assimilate_pixel(observed: ObservableSeries, weather: WeatherSeries,
                     config: GaConfig, bounds: GenomeBounds,
                     template: CropGenome, evaluate_batch=None) -> PixelResult:
    """Run the full GA for one pixel and return the best-ever genome.

    `evaluate_batch(genomes) -> [rmse, ...]` defaults to local serial fitness;
    the population is re-evaluated every generation (fixed schedule), so
    evaluations == pop_size * (generations_run + 1).
    """
    config.validate()
    if evaluate_batch is None:
        def evaluate_batch(genomes):
            return [fitness(g, observed, weather) for g in genomes]

    rng = make_rng(config.seed)
    population = init_population(config, bounds, template, rng)
    rmses = _checked(evaluate_batch(population), len(population))
    evaluations = len(population)
    best_idx = min(range(len(population)), key=lambda i: (rmses[i], i))
    best_genome, best_rmse = population[best_idx], rmses[best_idx]

    generations_run = 0
    for gen in range(config.generations):
        if 0 < config.early_stop_rmse >= best_rmse:
            break
        evaluated = [EvaluatedGenome(g, r) for g, r in zip(population, rmses)]
        # anneal the mutation step: explore early, refine late; purely a
        # function of the generation index, so determinism is untouched
        sd_scale = max(0.03, math.exp(-3.0 * gen / max(1, config.generations)))
        population = evolve_generation(evaluated, config, bounds, rng, sd_scale)
        rmses = _checked(evaluate_batch(population), len(population))
        evaluations += len(population)
        generations_run += 1
        idx = min(range(len(population)), key=lambda i: (rmses[i], i))
        if rmses[idx] < best_rmse:
            best_genome, best_rmse = population[idx], rmses[idx]
    return PixelResult(best_genome, best_rmse, generations_run, evaluations)


def _checked(rmses, expected: int) -> list:
    rmses = list(rmses)
    if len(rmses) != expected:
        raise ValidationError(
            f"evaluator returned {len(rmses)} values for {expected} genomes")
    for r in rmses:
        if not (math.isfinite(r) and r >= 0):
            raise ValidationError(f"evaluator returned invalid rmse {r}")
    return rmses


def pixel_config(config: GaConfig, row: int, col: int) -> GaConfig:
    """Config for one pixel: the master seed mixed with the pixel coordinates."""
    return replace(config, seed=mix_seed(config.seed, row, col))
