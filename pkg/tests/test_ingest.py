import datetime as dt
import os

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from agrimon.ingest import (
    CoverageError, DataStore, MetadataEntry, SensorObservation,
    normalize_timestamp, parse_sensor_xml, parse_weather_csv, process_inbox,
)
from agrimon.model import ValidationError

# Hand-derived fixture: 8 data rows; rows 3 (bad rain), 6 (negative rain),
# 7 (empty et0) and 8 (wrong column count) are rejected -> 4 good rows
# = 12 candidate observations parsed, 12 rejected, 4 reason entries.
SAMPLE_CSV = """\
date,station,rain_mm,et0_mm,tmean_c
2015-06-01,STN1,3.2,4.1,21.0
2015-06-02,STN1,0.0,4.3,22.5
2015-06-03,STN1,abc,4.0,21.7
2015-06-04,STN1,1.5,3.9,20.9
2015-06-04,STN1,1.5,3.9,20.9
2015-06-05,STN1,-2.0,4.0,21.0
2015-06-06,STN1,5.0,,21.0
short,row
"""

# Hand-derived: obs[0] gives 3 observations; obs[1] gives 1 (one bad var
# rejected); obs[2] lacks station -> its single var rejected.
# Total parsed 4, rejected 2.
SAMPLE_XML = """\
<observations>
  <obs station="STN1" time="2015-06-07T00:00:00Z">
    <var name="rain">0.0</var>
    <var name="et0">4.2</var>
    <var name="tmean">23.1</var>
  </obs>
  <obs station="STN2" time="2015-06-01T09:30:00Z">
    <var name="soil_vwc">0.31</var>
    <var name="tmean">bad</var>
  </obs>
  <obs time="2015-06-02T00:00:00Z">
    <var name="rain">1.0</var>
  </obs>
</observations>
"""


class TestParseWeatherCsv:
    def test_happy_row_yields_three_observations(self):
        text = "date,station,rain_mm,et0_mm,tmean_c\n2015-06-01,STN1,3.2,4.1,21.0\n"
        observations, report = parse_weather_csv(text)
        assert len(observations) == 3
        assert report.inserted == 3 and report.rejected == 0
        by_var = {o.variable: o for o in observations}
        assert by_var["rain"].value == 3.2
        assert by_var["et0"].value == 4.1
        assert by_var["tmean"].value == 21.0
        assert by_var["rain"].station_id == "STN1"
        assert by_var["rain"].timestamp == "2015-06-01T00:00:00+00:00"

    def test_header_only(self):
        observations, report = parse_weather_csv("date,station,rain_mm,et0_mm,tmean_c\n")
        assert observations == [] and report.encountered == 0

    def test_missing_header_rejected(self):
        observations, report = parse_weather_csv("2015-06-01,STN1,1,2,3\n")
        assert observations == []
        assert report.rejected == 1
        assert "header" in report.reasons[0][1]

    def test_bad_row_isolated_with_locator(self):
        observations, report = parse_weather_csv(SAMPLE_CSV, source="sample.csv")
        assert len(observations) == 12
        assert report.inserted == 12
        assert report.rejected == 12
        assert len(report.reasons) == 4
        locators = [loc for loc, _ in report.reasons]
        assert "sample.csv:4" in locators   # the abc-rain row
        assert report.encountered == 24  # 8 rows x 3 candidates

    def test_conservation(self):
        _, report = parse_weather_csv(SAMPLE_CSV)
        assert report.inserted + report.duplicates + report.rejected == 24


class TestParseSensorXml:
    def test_two_vars_two_observations(self):
        text = ('<observations><obs station="S" time="2015-01-01T00:00:00Z">'
                '<var name="a">1.0</var><var name="b">2.5</var></obs></observations>')
        observations, report = parse_sensor_xml(text)
        assert [(o.variable, o.value) for o in observations] == [("a", 1.0), ("b", 2.5)]
        assert report.inserted == 2 and report.rejected == 0

    def test_empty_document(self):
        observations, report = parse_sensor_xml("<observations/>")
        assert observations == [] and report.encountered == 0

    def test_bad_var_isolated(self):
        observations, report = parse_sensor_xml(SAMPLE_XML, source="sample.xml")
        assert len(observations) == 4
        assert report.inserted == 4 and report.rejected == 2
        assert any("non-numeric" in reason for _, reason in report.reasons)
        assert any("station" in reason for _, reason in report.reasons)

    def test_unparseable_document(self):
        observations, report = parse_sensor_xml("<observations><obs...", "x.xml")
        assert observations == []
        assert report.rejected == 1
        assert report.reasons[0][0] == "x.xml:document"

    def test_wrong_root(self):
        _, report = parse_sensor_xml("<stuff/>")
        assert report.rejected == 1


class TestTimestamps:
    def test_z_suffix_normalized(self):
        assert normalize_timestamp("2015-06-01T09:30:00Z") == \
            "2015-06-01T09:30:00+00:00"

    def test_naive_treated_as_utc(self):
        assert normalize_timestamp("2015-06-01T00:00:00") == \
            "2015-06-01T00:00:00+00:00"

    def test_bad_timestamp(self):
        with pytest.raises(ValidationError):
            normalize_timestamp("yesterday")


class TestDataStore:
    def _store(self, tmp_path):
        return DataStore(tmp_path / "store")

    def test_ingest_and_requery(self, tmp_path):
        store = self._store(tmp_path)
        observations, _ = parse_weather_csv(SAMPLE_CSV)
        report = store.ingest_batch(observations)
        # 12 parsed, one duplicated row triple -> 9 unique keys
        assert report.inserted == 9
        assert report.duplicates == 3
        assert store.get("STN1", "2015-06-01T00:00:00+00:00", "rain") == 3.2

    def test_reingest_is_idempotent(self, tmp_path):
        store = self._store(tmp_path)
        observations, _ = parse_weather_csv(SAMPLE_CSV)
        store.ingest_batch(observations)
        size_before = os.path.getsize(tmp_path / "store" / "observations.jsonl")
        again = store.ingest_batch(observations)
        assert again.inserted == 0
        assert again.duplicates == 12
        assert os.path.getsize(tmp_path / "store" / "observations.jsonl") == size_before

    def test_first_write_wins_within_batch(self, tmp_path):
        store = self._store(tmp_path)
        a = SensorObservation("S", "2015-06-01T00:00:00Z", "rain", 1.0)
        b = SensorObservation("S", "2015-06-01T00:00:00Z", "rain", 2.0)
        report = store.ingest_batch([a, b])
        assert report.inserted == 1 and report.duplicates == 1
        assert store.get("S", "2015-06-01T00:00:00Z", "rain") == 1.0

    def test_first_write_wins_across_batches(self, tmp_path):
        store = self._store(tmp_path)
        store.ingest_batch([SensorObservation("S", "2015-06-01T00:00:00Z", "rain", 1.0)])
        store.ingest_batch([SensorObservation("S", "2015-06-01T00:00:00Z", "rain", 9.0)])
        assert store.get("S", "2015-06-01T00:00:00Z", "rain") == 1.0

    def test_empty_batch(self, tmp_path):
        report = self._store(tmp_path).ingest_batch([])
        assert report.encountered == 0

    def test_durability_across_reopen(self, tmp_path):
        store = self._store(tmp_path)
        observations, _ = parse_weather_csv(SAMPLE_CSV)
        store.ingest_batch(observations)
        reopened = DataStore(tmp_path / "store")
        assert reopened.get("STN1", "2015-06-02T00:00:00+00:00", "et0") == 4.3
        assert sorted(reopened._by_key) == sorted(store._by_key)

    def test_failed_append_rolls_back(self, tmp_path, monkeypatch):
        store = self._store(tmp_path)
        store.ingest_batch([SensorObservation("S", "2015-06-01", "rain", 1.0)])
        size_before = os.path.getsize(store._obs_log.path)

        def boom(fd):
            raise OSError("disk full")

        monkeypatch.setattr(os, "fsync", boom)
        report = store.ingest_batch([SensorObservation("S", "2015-06-02", "rain", 2.0)])
        monkeypatch.undo()
        assert report.inserted == 0
        assert report.rejected == 1
        assert "aborted" in report.reasons[0][1]
        assert os.path.getsize(store._obs_log.path) == size_before
        assert store.get("S", "2015-06-02", "rain") is None
        # the store remains usable afterwards
        ok = store.ingest_batch([SensorObservation("S", "2015-06-03", "rain", 3.0)])
        assert ok.inserted == 1

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.tuples(st.sampled_from(["A", "B"]),
                              st.integers(0, 5),
                              st.sampled_from(["rain", "et0"]),
                              st.floats(0, 50)),
                    max_size=30))
    def test_conservation_property(self, tmp_path_factory, rows):
        store = DataStore(tmp_path_factory.mktemp("store"))
        records = [SensorObservation(s, f"2015-06-{d + 1:02d}", v, x)
                   for s, d, v, x in rows]
        report = store.ingest_batch(records)
        assert report.inserted + report.duplicates + report.rejected == len(records)
        assert report.inserted == len({r.key for r in records})


class TestQueryWeather:
    def _loaded(self, tmp_path, days=10, station="STN1", skip=()):
        store = DataStore(tmp_path / "store")
        records = []
        for d in range(days):
            date = dt.date(2015, 6, 1) + dt.timedelta(days=d)
            for var, val in (("rain", 1.0 * d), ("et0", 2.0), ("tmean", 21.0)):
                if (d, var) in skip:
                    continue
                records.append(SensorObservation(station, f"{date}T00:00:00Z",
                                                 var, val))
        store.ingest_batch(records)
        return store

    def test_full_coverage(self, tmp_path):
        store = self._loaded(tmp_path)
        series, warnings = store.query_weather("STN1", "2015-06-01", 10)
        assert series.season_len == 10
        assert warnings == []
        assert series.records[3].rain_mm == 3.0
        assert [r.day for r in series.records] == list(range(10))

    def test_gap_names_missing_pairs(self, tmp_path):
        store = self._loaded(tmp_path, skip={(4, "rain")})
        with pytest.raises(CoverageError) as err:
            store.query_weather("STN1", "2015-06-01", 10)
        assert ("2015-06-05", "rain") in err.value.missing

    def test_missing_tmean_defaults_with_warning(self, tmp_path):
        store = self._loaded(tmp_path, skip={(2, "tmean")})
        series, warnings = store.query_weather("STN1", "2015-06-01", 10)
        assert series.records[2].tmean_c == 20.0
        assert any("tmean" in w for w in warnings)

    def test_station_coverage(self, tmp_path):
        store = self._loaded(tmp_path, days=6)
        start, days = store.station_coverage("STN1")
        assert (start, days) == (dt.date(2015, 6, 1), 6)
        assert store.station_coverage("NOPE") == (None, 0)

    def test_round_trip_values_exact(self, tmp_path):
        store = self._loaded(tmp_path)
        series, _ = store.query_weather("STN1", "2015-06-01", 10)
        assert [r.rain_mm for r in series.records] == [1.0 * d for d in range(10)]


class TestMetadata:
    def test_case_insensitive_keyword_search(self, tmp_path):
        store = DataStore(tmp_path / "store")
        store.index_metadata(MetadataEntry("Soil map", keywords=["Soil", "moisture"],
                                           ingested_at="2015-01-01T00:00:00Z"))
        hits = store.search_metadata("SOIL")
        assert len(hits) == 1 and hits[0].title == "Soil map"

    def test_unknown_keyword_empty(self, tmp_path):
        store = DataStore(tmp_path / "store")
        store.index_metadata(MetadataEntry("x", keywords=["a"]))
        assert store.search_metadata("zzz") == []

    def test_newest_first_ordering(self, tmp_path):
        store = DataStore(tmp_path / "store")
        store.index_metadata(MetadataEntry("old", keywords=["k"],
                                           ingested_at="2015-01-01T00:00:00Z"))
        store.index_metadata(MetadataEntry("new", keywords=["k"],
                                           ingested_at="2016-01-01T00:00:00Z"))
        assert [e.title for e in store.search_metadata("k")] == ["new", "old"]

    def test_keywords_normalized(self):
        entry = MetadataEntry("t", keywords=["Rain", "rain", " ET0 "])
        assert entry.keywords == ["rain", "et0"]

    def test_empty_title_rejected(self):
        with pytest.raises(ValidationError):
            MetadataEntry("")

    def test_metadata_survives_reopen(self, tmp_path):
        store = DataStore(tmp_path / "store")
        store.index_metadata(MetadataEntry("t", keywords=["k"]))
        again = DataStore(tmp_path / "store")
        assert [e.title for e in again.search_metadata("k")] == ["t"]


class TestInbox:
    def test_processes_and_archives(self, tmp_path):
        inbox = tmp_path / "inbox"
        archive = tmp_path / "archive"
        inbox.mkdir()
        (inbox / "weather.csv").write_text(SAMPLE_CSV)
        (inbox / "sensors.xml").write_text(SAMPLE_XML)
        store = DataStore(tmp_path / "store")
        report = process_inbox(store, inbox, archive)
        assert report.inserted == 9 + 4
        assert report.rejected == 12 + 2
        assert sorted(os.listdir(archive)) == ["sensors.xml", "weather.csv"]
        assert os.listdir(inbox) == []

    def test_empty_inbox(self, tmp_path):
        store = DataStore(tmp_path / "store")
        report = process_inbox(store, tmp_path / "inbox", tmp_path / "arch")
        assert report.encountered == 0

    def test_unsupported_extension_archived_with_reason(self, tmp_path):
        inbox = tmp_path / "inbox"
        inbox.mkdir()
        (inbox / "notes.txt").write_text("hello")
        store = DataStore(tmp_path / "store")
        report = process_inbox(store, inbox, tmp_path / "arch")
        assert report.rejected == 1
        assert os.listdir(tmp_path / "arch") == ["notes.txt"]
