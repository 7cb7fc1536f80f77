"""Synthetic scenario generation: seasonal weather forcing and truth fields.

The weather is built so the genes under search leave distinct fingerprints in
the sampled LAI series: intermittent rain plus a mid-season dry spell makes
the soil store (and therefore wmax_mm) govern how long growth keeps going,
while sow_day and growth_rate shape the onset and steepness of the curve.
"""

import csv
import datetime as dt
import io
import math
from dataclasses import dataclass

from agrimon.model import CropGenome, WeatherRecord, WeatherSeries
from agrimon.raster import ParamField
from agrimon.seeds import make_rng, mix_seed, splitmix64

# separate the truth-genome stream from the observation-noise stream
_TRUTH_SALT = 0xA5F152EB

# Ranges the synthetic truth is drawn from. Vigorous growth rates only: a
# crop that never develops canopy barely transpires, so the soil store never
# enters the stress band and wmax_mm leaves no trace in the LAI signal (the
# grid-search oracle confirms such pixels are unidentifiable in principle).
TRUTH_RANGES = {
    "sow_day": (5, 30),
    "wmax_mm": (80.0, 210.0),
    "growth_rate": (0.11, 0.25),
}

# lai_max sits high enough that vigorous early-sown crops keep a live growth
# term through the dry spell; at lower caps they saturate first and the water
# store stops leaving any trace in the signal
SYNTH_TEMPLATE = CropGenome(
    sow_day=10, wmax_mm=150.0, s0_frac=0.5, irr_threshold=0.0,
    irr_depth_mm=0.0, growth_rate=0.10, lai_max=7.0)

DEFAULT_STATION = "SYN1"
DEFAULT_START_DATE = dt.date(2015, 6, 1)


def synthetic_weather(days: int, seed: int = 0) -> WeatherSeries:
    """Deterministic seasonal forcing: periodic rain with a mid-season dry spell."""
    if days < 1:
        raise ValueError("days must be >= 1")
    rng = make_rng(splitmix64(seed))
    dry_start, dry_end = int(0.40 * days), int(0.72 * days)
    records = []
    for t in range(days):
        phase = math.sin(math.pi * t / max(days - 1, 1))
        et0 = 3.5 + 2.0 * phase
        rain = 0.0
        if t % 5 == 2 and not dry_start <= t < dry_end:
            rain = 14.0 + 8.0 * float(rng.random())
        tmean = 17.0 + 8.0 * phase
        records.append(WeatherRecord(t, rain, et0, tmean))
    return WeatherSeries(tuple(records))


def make_truth_field(rows: int, cols: int, seed: int, season_len: int,
                     template: CropGenome = SYNTH_TEMPLATE,
                     vary: tuple = ("sow_day", "wmax_mm", "growth_rate")) -> ParamField:
    """Per-pixel truth genomes varying the chosen genes, rest from the template.

    The per-pixel draw consumes one value per TRUTH_RANGES gene in a fixed
    order whether or not it is varied, so restricting `vary` leaves the other
    genes' draws unchanged for a given seed.
    """
    for name in vary:
        if name not in TRUTH_RANGES:
            raise ValueError(f"no truth range for gene {name!r}")
    sow_lo, sow_hi = TRUTH_RANGES["sow_day"]
    sow_hi = min(sow_hi, season_len // 2)
    genomes = []
    for r in range(rows):
        for c in range(cols):
            rng = make_rng(mix_seed(seed ^ _TRUTH_SALT, r, c))
            genes = template.as_dict()
            draws = {
                "sow_day": int(rng.integers(sow_lo, sow_hi + 1)),
                "wmax_mm": float(rng.uniform(*TRUTH_RANGES["wmax_mm"])),
                "growth_rate": float(rng.uniform(*TRUTH_RANGES["growth_rate"])),
            }
            for name in vary:
                genes[name] = draws[name]
            genomes.append(CropGenome(**genes))
    return ParamField(rows, cols, genomes)


@dataclass(frozen=True)
class SyntheticScenario:
    rows: int = 8
    cols: int = 8
    days: int = 120
    revisit: int = 8
    noise: float = 0.0
    seed: int = 0
    station: str = DEFAULT_STATION
    start_date: dt.date = DEFAULT_START_DATE


def weather_to_csv_text(weather: WeatherSeries, station: str = DEFAULT_STATION,
                        start_date: dt.date = DEFAULT_START_DATE) -> str:
    """Render a series in the ingestion CSV format."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["date", "station", "rain_mm", "et0_mm", "tmean_c"])
    for rec in weather.records:
        date = start_date + dt.timedelta(days=rec.day)
        writer.writerow([date.isoformat(), station,
                         repr(rec.rain_mm), repr(rec.et0_mm), repr(rec.tmean_c)])
    return buf.getvalue()
