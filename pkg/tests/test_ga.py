import math
from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from agrimon.ga import (
    EvaluatedGenome, GaConfig, assimilate_pixel, evolve_generation, fitness,
    init_population, pixel_config, rmse,
)
from agrimon.model import (
    GENE_FIELDS, GenomeBounds, ObservableSeries, ValidationError,
    observe, simulate,
)
from agrimon.seeds import make_rng, mix_seed

from conftest import flat_weather, genome


def growth_weather(days=24):
    return flat_weather(days, rain=3.0, et0=2.0)


class TestRmse:
    def test_hand_computed_value(self):
        # sqrt((0 + 4) / 2) = sqrt(2)
        assert rmse([1.0, 2.0], [1.0, 4.0]) == math.sqrt(2.0)

    def test_identity_zero(self):
        assert rmse([0.3, 0.7, 1.1], [0.3, 0.7, 1.1]) == 0.0

    def test_length_mismatch(self):
        with pytest.raises(ValidationError, match="mismatch"):
            rmse([1.0], [1.0, 2.0])

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.tuples(st.floats(-50, 50), st.floats(-50, 50)),
                    min_size=1, max_size=20),
           st.floats(-4, 4).filter(lambda a: abs(a) > 1e-6))
    def test_symmetry_and_scaling(self, pairs, a):
        xs = [p[0] for p in pairs]
        ys = [p[1] for p in pairs]
        assert rmse(xs, ys) == rmse(ys, xs)
        scaled = rmse([a * x for x in xs], [a * y for y in ys])
        assert scaled == pytest.approx(abs(a) * rmse(xs, ys), rel=1e-12)


class TestFitness:
    def test_self_simulation_is_zero(self):
        w = growth_weather()
        g = genome(growth_rate=0.15)
        obs = observe(simulate(g, w), 4)
        assert fitness(g, obs, w) == 0.0

    def test_pure(self):
        w = growth_weather()
        g = genome(growth_rate=0.15)
        obs = observe(simulate(genome(growth_rate=0.2), w), 4)
        assert fitness(g, obs, w) == fitness(g, obs, w)

    def test_sampling_grid_mismatch(self):
        w = growth_weather(24)
        obs = ObservableSeries(4, tuple([0.1] * 99))
        with pytest.raises(ValidationError, match="mismatch"):
            fitness(genome(), obs, w)


class TestInitPopulation:
    def test_bounds_and_fixed_genes(self):
        config = GaConfig(pop_size=12, free_genes=("growth_rate",), seed=5)
        bounds = GenomeBounds.default(24)
        template = genome()
        pop = init_population(config, bounds, template, make_rng(5))
        assert len(pop) == 12
        for g in pop:
            lo, hi = bounds.intervals["growth_rate"]
            assert lo <= g.growth_rate <= hi
            for name in GENE_FIELDS:
                if name != "growth_rate":
                    assert getattr(g, name) == getattr(template, name)
        assert len({g.growth_rate for g in pop}) > 1

    def test_integer_gene_rounded(self):
        config = GaConfig(pop_size=20, free_genes=("sow_day",), seed=2)
        pop = init_population(config, GenomeBounds.default(24), genome(), make_rng(2))
        assert all(isinstance(g.sow_day, int) for g in pop)

    def test_deterministic_replay(self):
        config = GaConfig(pop_size=6, seed=9)
        bounds = GenomeBounds.default(24)
        a = init_population(config, bounds, genome(), make_rng(9))
        b = init_population(config, bounds, genome(), make_rng(9))
        assert a == b

    def test_empty_free_genes_rejected(self):
        with pytest.raises(ValidationError, match="free_genes"):
            GaConfig(free_genes=()).validate()

    def test_degenerate_bounds_rejected(self):
        bounds = GenomeBounds({**GenomeBounds.default(24).intervals,
                               "growth_rate": (0.2, 0.2)})
        config = GaConfig(pop_size=4, free_genes=("growth_rate",))
        with pytest.raises(ValidationError, match="degenerate"):
            init_population(config, bounds, genome(), make_rng(0))


class TestEvolveGeneration:
    def _evaluated(self, config, bounds, seed=1):
        pop = init_population(config, bounds, genome(), make_rng(seed))
        return [EvaluatedGenome(g, float(i)) for i, g in enumerate(pop)]

    def test_no_variation_yields_clones_of_best(self):
        config = GaConfig(pop_size=6, mutation_rate=0.0, crossover_rate=0.0,
                          elitism=5)
        bounds = GenomeBounds.default(24)
        evaluated = self._evaluated(config, bounds)
        nxt = evolve_generation(evaluated, config, bounds, make_rng(3))
        best5 = [e.genome for e in sorted(evaluated, key=lambda e: e.rmse)[:5]]
        assert nxt[:5] == best5
        assert all(g in [e.genome for e in evaluated] for g in nxt)

    def test_elitism_keeps_incumbent_best(self):
        config = GaConfig(pop_size=8, elitism=1)
        bounds = GenomeBounds.default(24)
        evaluated = self._evaluated(config, bounds)
        best = min(evaluated, key=lambda e: e.rmse).genome
        nxt = evolve_generation(evaluated, config, bounds, make_rng(3))
        assert nxt[0] == best

    def test_identical_population_closed_without_mutation(self):
        config = GaConfig(pop_size=5, mutation_rate=0.0)
        bounds = GenomeBounds.default(24)
        g = genome()
        evaluated = [EvaluatedGenome(g, 1.0)] * 5
        nxt = evolve_generation(evaluated, config, bounds, make_rng(0))
        assert all(child == g for child in nxt)

    def test_size_mismatch_rejected(self):
        config = GaConfig(pop_size=8)
        bounds = GenomeBounds.default(24)
        with pytest.raises(ValidationError, match="size mismatch"):
            evolve_generation([EvaluatedGenome(genome(), 0.0)], config, bounds,
                              make_rng(0))

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 10_000))
    def test_children_always_within_bounds(self, seed):
        config = GaConfig(pop_size=10, mutation_rate=0.8, mutation_sd_frac=0.5,
                          seed=seed)
        bounds = GenomeBounds.default(24)
        rng = make_rng(seed)
        evaluated = [EvaluatedGenome(g, float(i)) for i, g in
                     enumerate(init_population(config, bounds, genome(), rng))]
        for _ in range(3):
            pop = evolve_generation(evaluated, config, bounds, rng)
            for g in pop:
                bounds.validate_genome(g)
            evaluated = [EvaluatedGenome(g, float(i)) for i, g in enumerate(pop)]


class TestAssimilatePixel:
    def _setup(self, truth_rate=0.18, days=40, k=4):
        w = growth_weather(days)
        truth = genome(growth_rate=truth_rate, sow_day=4)
        obs = observe(simulate(truth, w), k)
        return w, truth, obs

    def test_bit_identical_repeat(self):
        w, truth, obs = self._setup()
        config = GaConfig(pop_size=10, generations=8, seed=42)
        bounds = GenomeBounds.default(40)
        a = assimilate_pixel(obs, w, config, bounds, genome())
        b = assimilate_pixel(obs, w, config, bounds, genome())
        assert a == b

    def test_evaluation_accounting(self):
        w, truth, obs = self._setup()
        config = GaConfig(pop_size=10, generations=7, seed=1,
                          early_stop_rmse=0.0)
        res = assimilate_pixel(obs, w, config, GenomeBounds.default(40), genome())
        assert res.generations_run == 7
        assert res.evaluations == 10 * (7 + 1)

    def test_early_stop_on_exact_fit(self):
        w, truth, obs = self._setup()
        config = GaConfig(pop_size=10, generations=50, seed=3,
                          early_stop_rmse=1e-6, free_genes=("sow_day",))
        res = assimilate_pixel(obs, w, config, GenomeBounds.default(40), truth)
        assert res.rmse <= 1e-6
        assert res.generations_run < 50
        assert res.evaluations == 10 * (res.generations_run + 1)

    def test_best_rmse_non_increasing_with_elitism(self):
        w, truth, obs = self._setup()
        config = GaConfig(pop_size=12, generations=15, seed=8, elitism=2,
                          early_stop_rmse=0.0)
        bounds = GenomeBounds.default(40)
        round_best = []

        def tracking_evaluator(genomes):
            values = [fitness(g, obs, w) for g in genomes]
            round_best.append(min(values))
            return values

        assimilate_pixel(obs, w, config, bounds, genome(),
                         evaluate_batch=tracking_evaluator)
        running = [round_best[0]]
        for v in round_best[1:]:
            running.append(min(running[-1], v))
        assert running == sorted(running, reverse=True)
        # elitism: the best-so-far is never lost between rounds
        for i in range(1, len(round_best)):
            assert round_best[i] <= running[i - 1] + 1e-15

    def test_single_free_gene_recovery(self):
        w, truth, obs = self._setup(truth_rate=0.18)
        config = GaConfig(pop_size=16, generations=25, seed=7,
                          free_genes=("growth_rate",))
        res = assimilate_pixel(obs, w, config, GenomeBounds.default(40),
                               genome(sow_day=4))
        assert res.genome.growth_rate == pytest.approx(0.18, rel=0.05)

    def test_custom_evaluator_equivalence(self):
        w, truth, obs = self._setup()
        config = GaConfig(pop_size=10, generations=8, seed=42)
        bounds = GenomeBounds.default(40)
        plain = assimilate_pixel(obs, w, config, bounds, genome())
        farmed = assimilate_pixel(
            obs, w, config, bounds, genome(),
            evaluate_batch=lambda gs: [fitness(g, obs, w) for g in gs])
        assert plain == farmed

    def test_invalid_config_rejected(self):
        w, truth, obs = self._setup()
        with pytest.raises(ValidationError):
            assimilate_pixel(obs, w, GaConfig(pop_size=1), GenomeBounds.default(40),
                             genome())

    def test_evaluator_length_checked(self):
        w, truth, obs = self._setup()
        config = GaConfig(pop_size=10, generations=2, seed=1)
        with pytest.raises(ValidationError, match="evaluator"):
            assimilate_pixel(obs, w, config, GenomeBounds.default(40), genome(),
                             evaluate_batch=lambda gs: [0.0])


class TestPixelConfig:
    def test_mixes_master_seed_with_coords(self):
        config = GaConfig(seed=77)
        a = pixel_config(config, 1, 2)
        b = pixel_config(config, 2, 1)
        assert a.seed == mix_seed(77, 1, 2)
        assert a.seed != b.seed
        assert replace(a, seed=0) == replace(config, seed=0)
