"""Desk-scale agriculture monitoring stack: synthetic observation rasters,
per-pixel GA parameter assimilation, a master-worker runtime with selectable
task-distribution strategies, feed ingestion, and a priority-scheduled job
portal."""

__version__ = "0.1.0"

from agrimon.ga import GaConfig, PixelResult, assimilate_pixel, fitness
from agrimon.model import (
    CropGenome, GenomeBounds, ObservableSeries, SimState, ValidationError,
    WeatherRecord, WeatherSeries, observe, simulate,
)
from agrimon.raster import (
    ParamField, RasterGrid, Region, extract_region, read_raster,
    synthesize_truth, write_raster,
)
from agrimon.distribute import (
    ParamMap, Strategy, StrategyKind, StrategyMetrics, plan_tasks, run_job,
)

__all__ = [
    "CropGenome", "GaConfig", "GenomeBounds", "ObservableSeries", "ParamField",
    "ParamMap", "PixelResult", "RasterGrid", "Region", "SimState", "Strategy",
    "StrategyKind", "StrategyMetrics", "ValidationError", "WeatherRecord",
    "WeatherSeries", "assimilate_pixel", "extract_region", "fitness", "observe",
    "plan_tasks", "read_raster", "run_job", "simulate", "synthesize_truth",
    "write_raster", "__version__",
]
