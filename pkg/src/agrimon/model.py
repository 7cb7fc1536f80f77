"""Surrogate daily-timestep crop simulator.

A single-bucket soil water balance drives logistic leaf-area growth. For each
day t with rainfall P_t, reference evapotranspiration ET0_t, store S_t (mm),
holding capacity W (mm) and leaf area index L_t:

    I_t  = irr_depth_mm            if t >= sow_day and S_t/W < irr_threshold, else 0
    A    = S_t + P_t + I_t
    D_t  = max(0, A - W)                       (drainage)
    A'   = min(A, W)
    f_w  = min(1, A' / (0.5 W))                (water stress factor)
    f_c  = min(1, L_t / 3)                     (canopy cover factor)
    E_t  = min(A', ET0_t * f_c * f_w)          (actual evapotranspiration)
    S_t+1 = A' - E_t
    L_t+1 = clamp(L_t + growth_rate * L_t * (1 - L_t/lai_max) * f_w, 0, lai_max)
                                               (growth applies for t >= sow_day)

Leaf area is 0 before sowing and is seeded to L0 = 0.1 on the sowing day.
Water is conserved exactly: S_t+1 = S_t + P_t + I_t - E_t - D_t.

Everything here is pure and deterministic; `observe` takes an explicit seed
for its sampling noise.
"""

import math
from dataclasses import dataclass, fields

from agrimon.seeds import make_rng

LAI_SEED = 0.1          # leaf area planted on the sowing day
COVER_SATURATION = 3.0  # LAI at which canopy cover saturates
STRESS_KNEE = 0.5       # fraction of capacity below which ET is water-limited


class ValidationError(ValueError):
    """An input violates a documented precondition or invariant."""


@dataclass(frozen=True)
class WeatherRecord:
    day: int
    rain_mm: float
    et0_mm: float
    tmean_c: float = 20.0


@dataclass
class WeatherSeries:
    """Contiguous daily forcing for one season (days 0 .. T-1)."""

    records: tuple

    def __post_init__(self):
        self.records = tuple(self.records)
        if not self.records:
            raise ValidationError("weather series is empty")
        for i, rec in enumerate(self.records):
            if rec.day != i:
                raise ValidationError(
                    f"weather days must be contiguous from 0: index {i} has day {rec.day}")
            if rec.rain_mm < 0:
                raise ValidationError(f"rain_mm < 0 on day {i}")
            if rec.et0_mm < 0:
                raise ValidationError(f"et0_mm < 0 on day {i}")
        # cached flat arrays for the simulation hot loop
        self._rain = tuple(float(r.rain_mm) for r in self.records)
        self._et0 = tuple(float(r.et0_mm) for r in self.records)

    @property
    def season_len(self) -> int:
        return len(self.records)


GENE_FIELDS = ("sow_day", "wmax_mm", "s0_frac", "irr_threshold",
               "irr_depth_mm", "growth_rate", "lai_max")
INT_GENES = frozenset({"sow_day"})


@dataclass(frozen=True)
class CropGenome:
    """Per-pixel parameter vector estimated by the assimilation search."""

    sow_day: int
    wmax_mm: float
    s0_frac: float
    irr_threshold: float
    irr_depth_mm: float
    growth_rate: float
    lai_max: float

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @staticmethod
    def from_dict(d: dict) -> "CropGenome":
        return CropGenome(**{k: d[k] for k in GENE_FIELDS})


DEFAULT_TEMPLATE = CropGenome(
    sow_day=10, wmax_mm=150.0, s0_frac=0.5, irr_threshold=0.0,
    irr_depth_mm=0.0, growth_rate=0.10, lai_max=5.0)


@dataclass(frozen=True)
class GenomeBounds:
    """Closed [low, high] interval per gene; integer genes use integer grid points."""

    intervals: dict

    def __post_init__(self):
        for name in GENE_FIELDS:
            if name not in self.intervals:
                raise ValidationError(f"bounds missing gene {name}")
            lo, hi = self.intervals[name]
            if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
                raise ValidationError(f"invalid bounds for {name}: [{lo}, {hi}]")

    @staticmethod
    def default(season_len: int) -> "GenomeBounds":
        return GenomeBounds({
            "sow_day": (0, season_len // 2),
            "wmax_mm": (50.0, 300.0),
            "s0_frac": (0.0, 1.0),
            "irr_threshold": (0.0, 1.0),
            "irr_depth_mm": (0.0, 50.0),
            "growth_rate": (0.01, 0.30),
            "lai_max": (1.0, 8.0),
        })

    def span(self, name: str) -> float:
        lo, hi = self.intervals[name]
        return hi - lo

    def clamp(self, name: str, value: float):
        lo, hi = self.intervals[name]
        v = min(max(value, lo), hi)
        if name in INT_GENES:
            return int(min(max(round(v), math.ceil(lo)), math.floor(hi)))
        return float(v)

    def validate_genome(self, genome: CropGenome) -> None:
        if not isinstance(genome.sow_day, int):
            raise ValidationError("gene sow_day must be an integer")
        for name in GENE_FIELDS:
            value = getattr(genome, name)
            lo, hi = self.intervals[name]
            if not (lo <= value <= hi):
                raise ValidationError(
                    f"gene {name}={value} outside bounds [{lo}, {hi}]")


@dataclass
class SimState:
    """State and fluxes of one simulated day (store and LAI are start-of-day)."""

    day: int
    soil_mm: float
    lai: float
    et_actual_mm: float
    irrigation_mm: float
    drainage_mm: float


@dataclass(frozen=True)
class ObservableSeries:
    """LAI sampled every `revisit_days` days (days 0, k, 2k, ... < T)."""

    revisit_days: int
    values: tuple
    noise_sd: float = 0.0

    def __post_init__(self):
        if self.revisit_days < 1:
            raise ValidationError("revisit_days must be >= 1")
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        for v in self.values:
            if v < 0:
                raise ValidationError("observable values must be >= 0")


def simulate(genome: CropGenome, weather: WeatherSeries) -> list:
    """Run the daily model and return one SimState per day."""
    bounds = GenomeBounds.default(weather.season_len)
    bounds.validate_genome(genome)

    sow = genome.sow_day
    w_cap = genome.wmax_mm
    irr_thresh = genome.irr_threshold
    irr_depth = genome.irr_depth_mm
    rate = genome.growth_rate
    lai_max = genome.lai_max
    stress_denom = STRESS_KNEE * w_cap

    soil = genome.s0_frac * w_cap
    lai = 0.0
    states = []
    rain = weather._rain
    et0 = weather._et0
    for t in range(weather.season_len):
        if t == sow:
            lai = LAI_SEED
        irr = irr_depth if (t >= sow and soil / w_cap < irr_thresh) else 0.0
        avail = soil + rain[t] + irr
        drain = avail - w_cap if avail > w_cap else 0.0
        avail = w_cap if avail > w_cap else avail
        f_w = avail / stress_denom
        if f_w > 1.0:
            f_w = 1.0
        f_c = lai / COVER_SATURATION
        if f_c > 1.0:
            f_c = 1.0
        et = et0[t] * f_c * f_w
        if et > avail:
            et = avail
        states.append(SimState(t, soil, lai, et, irr, drain))
        soil = avail - et
        if t >= sow:
            lai = lai + rate * lai * (1.0 - lai / lai_max) * f_w
            if lai > lai_max:
                lai = lai_max
            elif lai < 0.0:
                lai = 0.0
    return states


def lai_samples(genome: CropGenome, weather: WeatherSeries, revisit_days: int) -> list:
    """LAI at days 0, k, 2k, ... without building per-day state objects.

    This is the fitness-evaluation hot path; it must produce bit-identical
    values to sampling `simulate` output (asserted by a property test).
    """
    if revisit_days < 1:
        raise ValidationError("revisit_days must be >= 1")
    bounds = GenomeBounds.default(weather.season_len)
    bounds.validate_genome(genome)

    sow = genome.sow_day
    w_cap = genome.wmax_mm
    irr_thresh = genome.irr_threshold
    irr_depth = genome.irr_depth_mm
    rate = genome.growth_rate
    lai_max = genome.lai_max
    stress_denom = STRESS_KNEE * w_cap

    soil = genome.s0_frac * w_cap
    lai = 0.0
    out = []
    rain = weather._rain
    et0 = weather._et0
    for t in range(weather.season_len):
        if t == sow:
            lai = LAI_SEED
        if t % revisit_days == 0:
            out.append(lai)
        irr = irr_depth if (t >= sow and soil / w_cap < irr_thresh) else 0.0
        avail = soil + rain[t] + irr
        if avail > w_cap:
            avail = w_cap
        f_w = avail / stress_denom
        if f_w > 1.0:
            f_w = 1.0
        f_c = lai / COVER_SATURATION
        if f_c > 1.0:
            f_c = 1.0
        et = et0[t] * f_c * f_w
        if et > avail:
            et = avail
        soil = avail - et
        if t >= sow:
            lai = lai + rate * lai * (1.0 - lai / lai_max) * f_w
            if lai > lai_max:
                lai = lai_max
            elif lai < 0.0:
                lai = 0.0
    return out


def observe(states: list, revisit_days: int, noise_sd: float = 0.0,
            seed: int = 0) -> ObservableSeries:
    """Sample the LAI trajectory every `revisit_days` days.

    Gaussian noise (sd `noise_sd`) is added then clamped at zero; a zero sd
    returns the exact samples and never touches the generator, so the seed is
    irrelevant in the noiseless case.
    """
    if revisit_days < 1:
        raise ValidationError("revisit_days must be >= 1")
    if not states:
        raise ValidationError("states are empty")
    if noise_sd < 0:
        raise ValidationError("noise_sd must be >= 0")
    values = [states[t].lai for t in range(0, len(states), revisit_days)]
    if noise_sd > 0:
        rng = make_rng(seed)
        noise = rng.normal(0.0, noise_sd, size=len(values))
        values = [max(0.0, v + float(n)) for v, n in zip(values, noise)]
    return ObservableSeries(revisit_days, tuple(values), noise_sd)
