"""Gridded observations: in-memory grid, AGR1 byte format, region extraction,
and synthetic-truth generation.

AGR1 layout (all little-endian):

    bytes 0..3    magic "AGR1"
    bytes 4..15   u32 rows, u32 cols, u32 bands
    bytes 16..23  f64 nodata sentinel
    bytes 24..    rows*cols*bands f64 values, band-major, row-major within band

The format is bit-exact: read(write(grid)) reproduces every float bit.
"""

import math
import struct
from dataclasses import dataclass

import numpy as np

from agrimon.model import CropGenome, ValidationError, WeatherSeries, observe, simulate
from agrimon.seeds import mix_seed

MAGIC = b"AGR1"
NODATA_DEFAULT = -9999.0
_HEADER = struct.Struct("<4sIIId")
MAX_CELLS = 1 << 28  # refuse absurd headers before allocating


class RasterFormatError(ValueError):
    """Byte stream is not a well-formed AGR1 raster."""


@dataclass
class RasterGrid:
    """Dense rows x cols x bands float64 grid (bands = observation dates)."""

    rows: int
    cols: int
    bands: int
    nodata: float
    values: np.ndarray  # shape (bands, rows, cols)

    def __post_init__(self):
        if min(self.rows, self.cols, self.bands) < 1:
            raise ValidationError("rows, cols and bands must all be >= 1")
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.values.shape != (self.bands, self.rows, self.cols):
            raise ValidationError(
                f"values shape {self.values.shape} != {(self.bands, self.rows, self.cols)}")
        finite_or_nodata = np.isfinite(self.values) | (self.values == self.nodata)
        if not bool(finite_or_nodata.all()):
            raise ValidationError("non-nodata values must be finite")

    def __eq__(self, other):
        if not isinstance(other, RasterGrid):
            return NotImplemented
        return ((self.rows, self.cols, self.bands) == (other.rows, other.cols, other.bands)
                and self.nodata == other.nodata
                and self.values.tobytes() == other.values.tobytes())

    def pixel_series(self, row: int, col: int) -> np.ndarray:
        return self.values[:, row, col]

    def is_nodata_pixel(self, row: int, col: int) -> bool:
        return bool((self.values[:, row, col] == self.nodata).any())


@dataclass(frozen=True)
class Region:
    """Inclusive rectangle of grid coordinates."""

    row0: int
    col0: int
    row1: int
    col1: int

    def __post_init__(self):
        if self.row0 < 0 or self.col0 < 0 or self.row0 > self.row1 or self.col0 > self.col1:
            raise ValidationError(f"invalid region {self}")

    def validate_within(self, rows: int, cols: int) -> None:
        if self.row1 >= rows or self.col1 >= cols:
            raise ValidationError(
                f"region {self} out of bounds for {rows}x{cols} grid")

    @property
    def height(self) -> int:
        return self.row1 - self.row0 + 1

    @property
    def width(self) -> int:
        return self.col1 - self.col0 + 1

    @property
    def n_pixels(self) -> int:
        return self.height * self.width

    def pixels(self):
        """Absolute (row, col) pairs in row-major order."""
        for r in range(self.row0, self.row1 + 1):
            for c in range(self.col0, self.col1 + 1):
                yield (r, c)


def write_raster(grid: RasterGrid) -> bytes:
    header = _HEADER.pack(MAGIC, grid.rows, grid.cols, grid.bands, grid.nodata)
    return header + grid.values.astype("<f8", copy=False).tobytes(order="C")


def read_raster(data: bytes) -> RasterGrid:
    if len(data) < _HEADER.size:
        raise RasterFormatError(f"stream too short for header ({len(data)} bytes)")
    magic, rows, cols, bands, nodata = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise RasterFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if min(rows, cols, bands) < 1:
        raise RasterFormatError(f"zero dimension in header ({rows}x{cols}x{bands})")
    n_cells = rows * cols * bands
    if n_cells > MAX_CELLS:
        raise RasterFormatError(f"dimension overflow: {rows}x{cols}x{bands} cells")
    expected = _HEADER.size + 8 * n_cells
    if len(data) < expected:
        raise RasterFormatError(
            f"truncated body: {len(data)} bytes, expected {expected}")
    if len(data) > expected:
        raise RasterFormatError(
            f"trailing bytes: {len(data)} bytes, expected {expected}")
    values = np.frombuffer(data, dtype="<f8", count=n_cells, offset=_HEADER.size)
    values = values.reshape(bands, rows, cols).copy()
    return RasterGrid(rows, cols, bands, nodata, values)


def write_raster_file(path, grid: RasterGrid) -> None:
    with open(path, "wb") as fh:
        fh.write(write_raster(grid))


def read_raster_file(path) -> RasterGrid:
    with open(path, "rb") as fh:
        return read_raster(fh.read())


def extract_region(grid: RasterGrid, region: Region):
    """Copy a rectangular window; returns (subgrid, local -> parent coordinate map)."""
    region.validate_within(grid.rows, grid.cols)
    sub = grid.values[:, region.row0:region.row1 + 1,
                      region.col0:region.col1 + 1].copy()
    out = RasterGrid(region.height, region.width, grid.bands, grid.nodata, sub)
    mapping = {(r - region.row0, c - region.col0): (r, c) for r, c in region.pixels()}
    return out, mapping


@dataclass
class ParamField:
    """Per-pixel genome grid used as ground truth when synthesizing rasters."""

    rows: int
    cols: int
    genomes: list  # row-major, length rows*cols

    def __post_init__(self):
        if len(self.genomes) != self.rows * self.cols:
            raise ValidationError(
                f"expected {self.rows * self.cols} genomes, got {len(self.genomes)}")

    def at(self, row: int, col: int) -> CropGenome:
        return self.genomes[row * self.cols + col]

    def extract(self, region: Region) -> "ParamField":
        region.validate_within(self.rows, self.cols)
        picked = [self.at(r, c) for r, c in region.pixels()]
        return ParamField(region.height, region.width, picked)

    def to_json_dict(self) -> dict:
        return {"rows": self.rows, "cols": self.cols,
                "genomes": [g.as_dict() for g in self.genomes]}

    @staticmethod
    def from_json_dict(d: dict) -> "ParamField":
        genomes = [CropGenome.from_dict(g) for g in d["genomes"]]
        return ParamField(d["rows"], d["cols"], genomes)


def synthesize_truth(field: ParamField, weather: WeatherSeries, revisit_days: int,
                     noise_sd: float = 0.0, seed: int = 0,
                     nodata: float = NODATA_DEFAULT) -> RasterGrid:
    """Simulate every pixel of the field and stack its sampled LAI into bands.

    Pixel (r, c) gets observation noise seeded with mix_seed(seed, r, c), so
    the grid is reproducible and independent of pixel evaluation order.
    """
    bands = math.ceil(weather.season_len / revisit_days)
    values = np.empty((bands, field.rows, field.cols), dtype=np.float64)
    for r in range(field.rows):
        for c in range(field.cols):
            states = simulate(field.at(r, c), weather)
            series = observe(states, revisit_days, noise_sd, mix_seed(seed, r, c))
            values[:, r, c] = series.values
    return RasterGrid(field.rows, field.cols, bands, nodata, values)
