import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from leadsheet.metrics import (
    MetricsReport,
    Note,
    empty_bars,
    evaluate,
    extract_notes,
    qualified_notes,
    tonal_distance,
    used_pitch_classes,
)
from leadsheet.pianoroll import DataError

import oracles


def roll(*bars):
    return np.stack(bars)[..., None]


def bar(rows_steps):
    b = np.zeros((48, 84), bool)
    for row, steps in rows_steps:
        b[steps, row] = True
    return b


class TestNotes:
    def test_single(self):
        assert extract_notes(bar([(36, slice(0, 12))])) == [Note(36, 0, 12)]

    def test_split_run(self):
        notes = extract_notes(bar([(36, slice(0, 3)), (36, slice(4, 6))]))
        assert [n.length for n in notes] == [3, 2]

    def test_empty(self):
        assert extract_notes(np.zeros((48, 84))) == []

    @settings(max_examples=50, deadline=None)
    @given(arrays(np.bool_, (48, 84), elements=st.booleans()))
    def test_matches_scan_and_covers_cells(self, b):
        notes = extract_notes(b)
        assert [tuple(n) for n in notes] == oracles.notes_by_scanning(b)
        assert sum(n.length for n in notes) == b.sum()


class TestScalarMetrics:
    def test_empty_bars(self):
        bars = [bar([(36, slice(0, 4))])] * 6 + [np.zeros((48, 84), bool)] * 2
        assert empty_bars(roll(*bars)) == 0.25
        assert empty_bars(roll(*bars[:6])) == 0.0

    def test_upc(self):
        assert used_pitch_classes(roll(bar([(36, 0), (40, 0), (43, 0), (48, 0)]))) == (3.0, True)
        assert used_pitch_classes(roll(bar([(r, 0) for r in range(36, 48)]))) == (12.0, True)

    def test_upc_skips_empty_bars(self):
        assert used_pitch_classes(roll(bar([(36, 0)]), np.zeros((48, 84), bool))) == (1.0, True)
        assert used_pitch_classes(roll(np.zeros((48, 84), bool))) == (0.0, False)

    def test_qn(self):
        assert qualified_notes(roll(bar([(36, slice(0, 12))]))) == (1.0, True)
        value, _ = qualified_notes(roll(bar([(30, slice(0, 2)), (31, slice(0, 3)), (32, slice(0, 4))])))
        assert value == pytest.approx(2 / 3)
        assert qualified_notes(roll(np.zeros((48, 84), bool))) == (1.0, False)

    def test_td_identity_and_octave(self):
        c = bar([(36, slice(None)), (40, slice(None)), (43, slice(None))])
        c8 = bar([(48, slice(None)), (52, slice(None)), (55, slice(None))])
        two = np.stack([c, c8], axis=-1)[None]
        assert tonal_distance(two, 0, 1) == (0.0, True)

    def test_td_c_versus_g(self):
        c = bar([(36, slice(None)), (40, slice(None)), (43, slice(None))])
        g = bar([(43, slice(None)), (47, slice(None)), (50, slice(None))])
        value, ok = tonal_distance(np.stack([c, g], axis=-1)[None], 0, 1)
        expected, _ = oracles.td([c], [g])
        assert ok and value > 0
        assert value == pytest.approx(expected, abs=1e-12)

    def test_td_undefined(self):
        c = bar([(36, slice(0, 12))])
        g = bar([(43, slice(12, 24))])
        value, ok = tonal_distance(np.stack([c, g], axis=-1)[None], 0, 1)
        assert not ok and math.isnan(value)

    def test_td_needs_two_tracks(self):
        with pytest.raises(DataError):
            tonal_distance(np.zeros((1, 48, 84, 2)), 1, 1)


@settings(max_examples=40, deadline=None)
@given(arrays(np.bool_, (4, 48, 84, 2), elements=st.booleans()))
def test_bounds_and_symmetry(rolls):
    for t in (0, 1):
        assert 0 <= empty_bars(rolls, t) <= 1
        assert 0 <= used_pitch_classes(rolls, t)[0] <= 12
        assert 0 <= qualified_notes(rolls, t)[0] <= 1
    a, ok = tonal_distance(rolls, 0, 1)
    b, _ = tonal_distance(rolls, 1, 0)
    if ok:
        assert a >= 0 and a == pytest.approx(b)


def test_report_json():
    report = evaluate(np.zeros((1, 8, 48, 84, 2), bool), ("melody", "chord"))
    data = report.to_dict()
    assert data["tracks"]["melody"]["eb"] == 1.0
    assert data["td"] is None and data["td_defined"] is False
    assert isinstance(report, MetricsReport) and '"eb": 1.0' in report.to_json()
