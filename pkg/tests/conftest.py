import os
import sys

import pytest

# the brute-force identifiability oracle lives with the experiment scripts
sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "scripts"))

from agrimon.ga import GaConfig
from agrimon.model import CropGenome, GenomeBounds, WeatherRecord, WeatherSeries
from agrimon.raster import synthesize_truth
from agrimon.synth import SYNTH_TEMPLATE, make_truth_field, synthetic_weather


@pytest.fixture(scope="session")
def weather60():
    return synthetic_weather(60, seed=3)


@pytest.fixture(scope="session")
def small_grid(weather60):
    """4x4 noiseless synthetic grid over the 60-day season (8 bands)."""
    field = make_truth_field(4, 4, 3, 60)
    return synthesize_truth(field, weather60, 8, 0.0, 3)


@pytest.fixture(scope="session")
def small_field():
    return make_truth_field(4, 4, 3, 60)


@pytest.fixture
def bounds60():
    return GenomeBounds.default(60)


@pytest.fixture
def quick_config():
    """Small GA config for runtime-sensitive distribution tests."""
    return GaConfig(pop_size=8, generations=6, seed=99, early_stop_rmse=0.0)


@pytest.fixture
def template():
    return SYNTH_TEMPLATE


def flat_weather(days=3, rain=0.0, et0=0.0, tmean=20.0):
    return WeatherSeries(tuple(WeatherRecord(t, rain, et0, tmean)
                               for t in range(days)))


def genome(**overrides):
    genes = dict(sow_day=0, wmax_mm=100.0, s0_frac=0.5, irr_threshold=0.0,
                 irr_depth_mm=0.0, growth_rate=0.1, lai_max=5.0)
    genes.update(overrides)
    return CropGenome(**genes)
