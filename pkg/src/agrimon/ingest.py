"""Feed ingestion: weather CSV and sensor XML into an embedded durable store.

Store layout: one append-only JSON-lines log per record family under the
store directory (observations.jsonl, metadata.jsonl) plus in-memory indexes
rebuilt on open. A batch is appended with a single write; on failure the file
is truncated back to its pre-batch size, so readers never see a partial
batch. Duplicate policy is first-write-wins on (station, timestamp, variable).

Report counting convention: counts are in candidate observations. A weather
CSV row expands to 3 observations (rain, et0, tmean); a malformed row rejects
all 3 with one locator entry. An unparseable XML document counts as a single
rejected record. This keeps inserted + duplicates + rejected equal to the
number of candidate records encountered.
"""

import datetime as dt
import json
import math
import os
import threading
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field

from agrimon.model import ValidationError, WeatherRecord, WeatherSeries

WEATHER_HEADER = ["date", "station", "rain_mm", "et0_mm", "tmean_c"]
WEATHER_VARIABLES = ("rain", "et0", "tmean")
TMEAN_DEFAULT = 20.0


class StoreError(RuntimeError):
    pass


class CoverageError(ValidationError):
    """Requested weather range has gaps; lists the missing (date, variable) pairs."""

    def __init__(self, missing):
        self.missing = list(missing)
        pairs = ", ".join(f"{d}/{v}" for d, v in self.missing)
        super().__init__(f"weather coverage gap: missing {pairs}")


@dataclass(frozen=True)
class SensorObservation:
    station_id: str
    timestamp: str          # normalized ISO-8601 UTC
    variable: str
    value: float
    source_file: str = ""

    def __post_init__(self):
        if not self.station_id:
            raise ValidationError("station_id must not be empty")
        if not self.variable:
            raise ValidationError("variable must not be empty")
        if not math.isfinite(self.value):
            raise ValidationError(f"value must be finite, got {self.value}")
        object.__setattr__(self, "timestamp", normalize_timestamp(self.timestamp))

    @property
    def key(self):
        return (self.station_id, self.timestamp, self.variable)


@dataclass
class MetadataEntry:
    title: str
    description: str = ""
    keywords: list = field(default_factory=list)
    source_uri: str = ""
    ingested_at: str = ""

    def __post_init__(self):
        if not self.title:
            raise ValidationError("metadata title must not be empty")
        seen, cleaned = set(), []
        for kw in self.keywords:
            kw = str(kw).strip().lower()
            if kw and kw not in seen:
                seen.add(kw)
                cleaned.append(kw)
        self.keywords = cleaned
        if not self.ingested_at:
            self.ingested_at = dt.datetime.now(dt.timezone.utc).isoformat()
        else:
            self.ingested_at = normalize_timestamp(self.ingested_at)


@dataclass
class IngestReport:
    inserted: int = 0
    duplicates: int = 0
    rejected: int = 0
    reasons: list = field(default_factory=list)  # (locator, reason)
    warnings: list = field(default_factory=list)

    @property
    def encountered(self) -> int:
        return self.inserted + self.duplicates + self.rejected

    def merge(self, other: "IngestReport") -> None:
        self.inserted += other.inserted
        self.duplicates += other.duplicates
        self.rejected += other.rejected
        self.reasons.extend(other.reasons)
        self.warnings.extend(other.warnings)


def normalize_timestamp(text: str) -> str:
    """Parse an ISO-8601 timestamp and normalize to explicit UTC."""
    raw = text.strip()
    if raw.endswith(("Z", "z")):
        raw = raw[:-1] + "+00:00"
    try:
        stamp = dt.datetime.fromisoformat(raw)
    except ValueError as exc:
        raise ValidationError(f"bad timestamp {text!r}: {exc}") from None
    if stamp.tzinfo is None:
        stamp = stamp.replace(tzinfo=dt.timezone.utc)
    return stamp.astimezone(dt.timezone.utc).isoformat()


def _day_timestamp(date: dt.date) -> str:
    return dt.datetime(date.year, date.month, date.day,
                       tzinfo=dt.timezone.utc).isoformat()


def parse_weather_csv(text: str, source: str = "<memory>"):
    """Parse the `date,station,rain_mm,et0_mm,tmean_c` feed.

    Returns (observations, report). Each good row yields rain/et0/tmean
    observations stamped at UTC midnight of its date; bad rows are isolated.
    """
    observations, report = [], IngestReport()
    lines = text.splitlines()
    if not lines or [h.strip() for h in lines[0].split(",")] != WEATHER_HEADER:
        report.rejected += 1
        report.reasons.append(
            (f"{source}:1", f"missing header {','.join(WEATHER_HEADER)!r}"))
        return observations, report

    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        locator = f"{source}:{lineno}"

        def reject(reason):
            report.rejected += len(WEATHER_VARIABLES)
            report.reasons.append((locator, reason))

        parts = [p.strip() for p in line.split(",")]
        if len(parts) != len(WEATHER_HEADER):
            reject(f"expected {len(WEATHER_HEADER)} fields, got {len(parts)}")
            continue
        date_text, station, rain_text, et0_text, tmean_text = parts
        try:
            date = dt.date.fromisoformat(date_text)
        except ValueError:
            reject(f"bad date {date_text!r}")
            continue
        if not station:
            reject("empty station")
            continue
        try:
            rain = float(rain_text)
            et0 = float(et0_text)
            tmean = float(tmean_text)
        except ValueError as exc:
            reject(f"bad number: {exc}")
            continue
        if not all(math.isfinite(v) for v in (rain, et0, tmean)):
            reject("non-finite value")
            continue
        if rain < 0 or et0 < 0:
            reject("rain_mm and et0_mm must be >= 0")
            continue
        stamp = _day_timestamp(date)
        for variable, value in zip(WEATHER_VARIABLES, (rain, et0, tmean)):
            observations.append(SensorObservation(station, stamp, variable,
                                                  value, source))
        report.inserted += len(WEATHER_VARIABLES)
    return observations, report


def parse_sensor_xml(text: str, source: str = "<memory>"):
    """Parse `<observations><obs station time><var name>value</var>...</obs>...`.

    Recoverable problems reject the offending element only; an unparseable
    document is recorded as one document-level rejection.
    """
    observations, report = [], IngestReport()
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        report.rejected += 1
        report.reasons.append((f"{source}:document", f"unparseable XML: {exc}"))
        return observations, report
    if root.tag != "observations":
        report.rejected += 1
        report.reasons.append(
            (f"{source}:document", f"root element {root.tag!r}, expected 'observations'"))
        return observations, report

    for i, obs in enumerate(root):
        locator = f"{source}:obs[{i}]"
        if obs.tag != "obs":
            report.rejected += 1
            report.reasons.append((locator, f"unexpected element {obs.tag!r}"))
            continue
        variables = [child for child in obs if child.tag == "var"]
        station = obs.get("station")
        stamp_text = obs.get("time")
        if not station or not stamp_text:
            report.rejected += max(1, len(variables))
            report.reasons.append((locator, "missing station or time attribute"))
            continue
        try:
            stamp = normalize_timestamp(stamp_text)
        except ValidationError as exc:
            report.rejected += max(1, len(variables))
            report.reasons.append((locator, str(exc)))
            continue
        for j, var in enumerate(variables):
            var_locator = f"{locator}/var[{j}]"
            name = var.get("name")
            if not name:
                report.rejected += 1
                report.reasons.append((var_locator, "missing name attribute"))
                continue
            try:
                value = float((var.text or "").strip())
            except ValueError:
                report.rejected += 1
                report.reasons.append(
                    (var_locator, f"non-numeric value {var.text!r}"))
                continue
            if not math.isfinite(value):
                report.rejected += 1
                report.reasons.append((var_locator, "non-finite value"))
                continue
            observations.append(SensorObservation(station, stamp, name, value, source))
            report.inserted += 1
    return observations, report


class AppendLog:
    """Append-only JSONL file with atomic multi-record appends."""

    def __init__(self, path):
        self.path = str(path)
        os.makedirs(os.path.dirname(self.path) or ".", exist_ok=True)

    def read_all(self) -> list:
        if not os.path.exists(self.path):
            return []
        out = []
        with open(self.path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    out.append(json.loads(line))
        return out

    def append_many(self, records) -> None:
        if not records:
            return
        block = "".join(json.dumps(r, separators=(",", ":")) + "\n" for r in records)
        pre_size = os.path.getsize(self.path) if os.path.exists(self.path) else 0
        try:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(block)
                fh.flush()
                os.fsync(fh.fileno())
        except OSError as exc:
            try:
                with open(self.path, "r+b") as fh:
                    fh.truncate(pre_size)
            except OSError:
                pass
            raise StoreError(f"append to {self.path} failed: {exc}") from exc


class DataStore:
    """Durable observation + metadata store with in-memory indexes.

    Single writer at a time (internal lock); readers see either the state
    before a batch or after it, never a partial batch.
    """

    def __init__(self, data_dir):
        self.data_dir = str(data_dir)
        self._lock = threading.RLock()
        self._obs_log = AppendLog(os.path.join(self.data_dir, "observations.jsonl"))
        self._meta_log = AppendLog(os.path.join(self.data_dir, "metadata.jsonl"))
        self._by_key = {}
        self._daily = {}       # (station, variable, iso-date) -> value, first wins
        self._metadata = []
        self._reload()

    def _reload(self):
        self._by_key.clear()
        self._daily.clear()
        self._metadata.clear()
        for raw in self._obs_log.read_all():
            self._index(SensorObservation(**raw))
        for raw in self._meta_log.read_all():
            self._metadata.append(MetadataEntry(**raw))

    def _index(self, obs: SensorObservation) -> bool:
        if obs.key in self._by_key:
            return False
        self._by_key[obs.key] = obs
        day_key = (obs.station_id, obs.variable, obs.timestamp[:10])
        self._daily.setdefault(day_key, obs.value)
        return True

    def ingest_batch(self, records) -> IngestReport:
        """Insert observations; duplicates (by key) leave stored values unchanged."""
        report = IngestReport()
        with self._lock:
            accepted, seen_new = [], set()
            for i, obs in enumerate(records):
                if not isinstance(obs, SensorObservation):
                    try:
                        obs = SensorObservation(**obs)
                    except (TypeError, ValidationError) as exc:
                        report.rejected += 1
                        report.reasons.append((f"record[{i}]", str(exc)))
                        continue
                if obs.key in self._by_key or obs.key in seen_new:
                    report.duplicates += 1
                    continue
                seen_new.add(obs.key)
                accepted.append(obs)
            try:
                self._obs_log.append_many([o.__dict__ for o in accepted])
            except StoreError as exc:
                report.rejected += len(accepted) + report.duplicates
                report.duplicates = 0
                report.inserted = 0
                report.reasons.append(("batch", f"aborted: {exc}"))
                return report
            for obs in accepted:
                self._index(obs)
            report.inserted += len(accepted)
        return report

    def get(self, station_id: str, timestamp: str, variable: str):
        key = (station_id, normalize_timestamp(timestamp), variable)
        with self._lock:
            obs = self._by_key.get(key)
        return obs.value if obs else None

    def stations(self) -> list:
        with self._lock:
            return sorted({k[0] for k in self._by_key})

    def station_coverage(self, station_id: str):
        """(first_date, contiguous_days) where both rain and et0 are present."""
        with self._lock:
            dates = sorted({d for (s, v, d) in self._daily
                            if s == station_id and v == "rain"})
        have = set(dates)
        days = 0
        if not dates:
            return None, 0
        start = dt.date.fromisoformat(dates[0])
        while True:
            day = (start + dt.timedelta(days=days)).isoformat()
            if day not in have or (station_id, "et0", day) not in self._daily:
                break
            days += 1
        return start, days

    def query_weather(self, station_id: str, start_date, days: int):
        """Assemble a contiguous WeatherSeries from day-indexed observations.

        Missing tmean values default to 20.0 C with a warning; a missing rain
        or et0 raises CoverageError listing every gap.
        """
        if isinstance(start_date, str):
            start_date = dt.date.fromisoformat(start_date)
        if days < 1:
            raise ValidationError("days must be >= 1")
        missing, records, warnings = [], [], []
        with self._lock:
            for i in range(days):
                day = (start_date + dt.timedelta(days=i)).isoformat()
                rain = self._daily.get((station_id, "rain", day))
                et0 = self._daily.get((station_id, "et0", day))
                tmean = self._daily.get((station_id, "tmean", day))
                if rain is None:
                    missing.append((day, "rain"))
                if et0 is None:
                    missing.append((day, "et0"))
                if tmean is None:
                    tmean = TMEAN_DEFAULT
                    warnings.append(f"tmean missing on {day}, defaulted to {TMEAN_DEFAULT}")
                if rain is not None and et0 is not None:
                    records.append(WeatherRecord(i, rain, et0, tmean))
        if missing:
            raise CoverageError(missing)
        return WeatherSeries(tuple(records)), warnings

    def index_metadata(self, entry: MetadataEntry) -> None:
        with self._lock:
            self._meta_log.append_many([entry.__dict__])
            self._metadata.append(entry)

    def search_metadata(self, keyword: str) -> list:
        needle = keyword.strip().lower()
        with self._lock:
            hits = [(i, e) for i, e in enumerate(self._metadata)
                    if needle in e.keywords]
        hits.sort(key=lambda pair: (pair[1].ingested_at, pair[0]), reverse=True)
        return [e for _, e in hits]


def parse_any(path) -> tuple:
    """Dispatch a feed file to the right parser by extension."""
    name = os.path.basename(str(path))
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    if name.lower().endswith(".csv"):
        return parse_weather_csv(text, source=name)
    if name.lower().endswith(".xml"):
        return parse_sensor_xml(text, source=name)
    report = IngestReport(rejected=1,
                          reasons=[(name, "unsupported feed type")])
    return [], report


def process_inbox(store: DataStore, inbox_dir, archive_dir) -> IngestReport:
    """Parse and ingest every file in the inbox, then move it to the archive."""
    os.makedirs(inbox_dir, exist_ok=True)
    os.makedirs(archive_dir, exist_ok=True)
    combined = IngestReport()
    for name in sorted(os.listdir(inbox_dir)):
        path = os.path.join(inbox_dir, name)
        if not os.path.isfile(path):
            continue
        observations, report = parse_any(path)
        ingest_report = store.ingest_batch(observations)
        # parser counted candidates as inserted; the store decides their fate
        report.inserted = ingest_report.inserted
        report.duplicates += ingest_report.duplicates
        report.rejected += ingest_report.rejected
        report.reasons.extend(ingest_report.reasons)
        combined.merge(report)
        os.replace(path, os.path.join(archive_dir, name))
    return combined
