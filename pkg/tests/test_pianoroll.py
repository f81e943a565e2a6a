import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from leadsheet.midi import export_midi, import_midi, phrase_to_midi
from leadsheet.pianoroll import (
    DataError,
    LeadSheetDocument,
    Phrase,
    binarize,
    ingest_leadsheet,
    transpose,
    transpose_to_c,
    transposition_shift,
)
from leadsheet.rollio import dump_rolls, load_phrases, parse_rolls, save_phrases
from leadsheet.synth import generate_synthetic_corpus


def doc(melody=(), chords=(), **kw):
    return LeadSheetDocument.from_dict(
        {
            "melody": [dict(zip(("pitch", "start", "duration"), m)) for m in melody],
            "chords": [dict(zip(("root", "quality", "start", "duration"), c)) for c in chords],
            **kw,
        }
    )


def eight_bars_of_c(extra_melody=()):
    return doc(melody=[(60, 0, 1), *extra_melody], chords=[(0, "maj", 4 * b, 4) for b in range(8)])


def leadsheet_bars(draw_shape=(8, 48, 84, 2)):
    return arrays(np.bool_, draw_shape, elements=st.booleans())


class TestPhrase:
    def test_rejects_non_binary(self):
        with pytest.raises(DataError):
            Phrase.leadsheet(np.full((8, 48, 84, 2), 0.5))

    def test_rejects_wrong_grid(self):
        with pytest.raises(DataError):
            Phrase(np.zeros((8, 96, 84, 2)), ("melody", "chord"))

    def test_rejects_wrong_track_count(self):
        with pytest.raises(DataError):
            Phrase.arrangement(np.zeros((1, 48, 84, 2)))
        with pytest.raises(DataError):
            Phrase.leadsheet(np.zeros((4, 48, 84, 2)))

    def test_immutable(self):
        p = Phrase.leadsheet(np.zeros((8, 48, 84, 2)))
        with pytest.raises(ValueError):
            p.bars[0, 0, 0, 0] = True


class TestIngest:
    def test_melody_note(self):
        (p,) = ingest_leadsheet(eight_bars_of_c())
        rows = np.nonzero(p.track("melody")[0].any(axis=0))[0]
        steps = np.nonzero(p.track("melody")[0, :, 36])[0]
        assert rows.tolist() == [36]
        assert steps.tolist() == list(range(12))

    def test_chord_triad(self):
        (p,) = ingest_leadsheet(eight_bars_of_c())
        chord = p.track("chord")[0]
        assert np.nonzero(chord.any(axis=0))[0].tolist() == [24, 28, 31]
        assert chord[:, [24, 28, 31]].all()

    def test_minor_triad(self):
        (p,) = ingest_leadsheet(doc(chords=[(9, "min", 0, 32)]))
        assert np.nonzero(p.track("chord")[3].any(axis=0))[0].tolist() == [33, 36, 40]

    def test_empty_document(self):
        with pytest.raises(DataError, match="phrase too short"):
            ingest_leadsheet(LeadSheetDocument())

    def test_remainder_dropped(self):
        phrases = ingest_leadsheet(doc(chords=[(0, "maj", 0, 4 * 19)]))
        assert len(phrases) == 2

    def test_out_of_range_note_dropped(self, caplog):
        (p,) = ingest_leadsheet(eight_bars_of_c([(12, 4, 1), (120, 5, 1)]))
        assert p.track("melody").sum() == 12
        assert "dropped 2" in caplog.text

    @pytest.mark.parametrize(
        "bad",
        [
            {"key": 12},
            {"mode": "dorian"},
            {"beats_per_bar": 3},
            {"melody": [{"pitch": 60, "start": -1, "duration": 1}]},
            {"melody": [{"pitch": 60, "start": 0, "duration": 0}]},
            {"melody": [{"pitch": 60, "start": 0, "duration": 2}, {"pitch": 62, "start": 1, "duration": 1}]},
            {"chords": [{"root": 0, "quality": "dim", "start": 0, "duration": 4}]},
            {"melody": [{"pitch": 60}]},
        ],
    )
    def test_malformed(self, bad):
        with pytest.raises(DataError):
            LeadSheetDocument.from_dict(bad)

    def test_json_round_trip(self):
        d = eight_bars_of_c()
        assert LeadSheetDocument.from_json(json.dumps(d.to_dict())) == d
        with pytest.raises(DataError):
            LeadSheetDocument.from_json("[1, 2")


class TestTranspose:
    def test_identity_for_c(self):
        p = Phrase.leadsheet(np.random.default_rng(0).random((8, 48, 84, 2)) < 0.1)
        assert transpose_to_c(p, 0) == p

    def test_d_moves_down(self):
        bars = np.zeros((8, 48, 84, 2), bool)
        bars[0, 0, 38, 0] = True
        out = transpose_to_c(Phrase.leadsheet(bars), 2)
        assert np.nonzero(out.bars[0, 0, :, 0])[0].tolist() == [36]

    def test_g_moves_up_and_clips(self):
        assert transposition_shift(7) == 5
        bars = np.zeros((8, 48, 84, 2), bool)
        bars[0, 0, 80, 0] = bars[0, 0, 40, 0] = True
        out = transpose_to_c(Phrase.leadsheet(bars), 7)
        assert np.nonzero(out.bars[0, 0, :, 0])[0].tolist() == [45]

    def test_tritone_tie(self):
        assert transposition_shift(6) == -6

    def test_drums_untouched(self):
        bars = np.zeros((1, 48, 84, 5), bool)
        bars[0, 0, 14, :] = True
        out = transpose(Phrase.arrangement(bars), 3)
        assert out.track("drums")[0, 0, 14]
        assert out.track("bass")[0, 0, 17] and not out.track("bass")[0, 0, 14]

    @settings(max_examples=25, deadline=None)
    @given(bars=arrays(np.bool_, (1, 48, 84, 2), elements=st.booleans()), shift=st.integers(-11, 11))
    def test_invertible_in_range(self, bars, shift):
        p = Phrase(bars, ("melody", "chord"))
        back = transpose(transpose(p, shift), -shift)
        lo, hi = max(0, -shift), min(84, 84 - shift)
        np.testing.assert_array_equal(back.bars[:, :, lo:hi], p.bars[:, :, lo:hi])

    def test_ingest_with_transpose(self):
        d = doc(key=2, chords=[(2, "maj", 0, 32)])
        (p,) = ingest_leadsheet(d, transpose=True)
        assert np.nonzero(p.track("chord")[0].any(axis=0))[0].tolist() == [24, 28, 31]


class TestBinarize:
    def test_all_negative_is_empty(self):
        assert not binarize(-np.ones((48, 84, 2))).any()

    def test_single_cell(self):
        v = -np.ones((48, 84, 2))
        v[3, 10, 1] = 0.3
        out = binarize(v)
        assert out.sum() == 1 and out[3, 10, 1]

    def test_melody_argmax(self):
        v = -np.ones((48, 84, 2))
        v[0, 10, 0], v[0, 20, 0] = 0.2, 0.5
        v[0, 10, 1] = v[0, 20, 1] = 0.5
        out = binarize(v, ("melody", "chord"))
        assert np.nonzero(out[0, :, 0])[0].tolist() == [20]
        assert out[0, :, 1].sum() == 2

    @settings(max_examples=30, deadline=None)
    @given(arrays(np.float64, (4, 84, 2), elements=st.floats(-1, 1)))
    def test_melody_monophonic(self, values):
        out = binarize(values, ("melody", "chord"))
        assert (out[..., 0].sum(axis=-1) <= 1).all()
        assert (out[..., 1] == (values[..., 1] > 0)).all()


class TestMidi:
    def test_empty_phrase(self, tmp_path):
        p = Phrase.leadsheet(np.zeros((8, 48, 84, 2), bool))
        export_midi(p, tmp_path / "e.mid")
        q = import_midi(tmp_path / "e.mid")
        assert q == p and len(phrase_to_midi(p).tracks) == 2

    def test_single_note_ticks(self):
        bars = np.zeros((8, 48, 84, 2), bool)
        bars[0, :12, 36, 0] = True
        mid = phrase_to_midi(Phrase.leadsheet(bars))
        notes = [m for m in mid.tracks[0] if m.type in ("note_on", "note_off")]
        assert mid.ticks_per_beat == 12
        assert [(m.type, m.note, m.time) for m in notes] == [("note_on", 60, 0), ("note_off", 60, 12)]

    def test_adjacent_runs_split_by_gap(self, tmp_path):
        bars = np.zeros((1, 48, 84, 1), bool)
        bars[0, 0:5, 40, 0] = bars[0, 6:9, 40, 0] = True
        p = Phrase(bars, ("piano",))
        export_midi(p, tmp_path / "a.mid")
        assert import_midi(tmp_path / "a.mid") == p

    @settings(max_examples=15, deadline=None)
    @given(arrays(np.bool_, (2, 48, 84, 5), elements=st.booleans()))
    def test_round_trip(self, tmp_path_factory, bars):
        path = tmp_path_factory.mktemp("m") / "r.mid"
        p = Phrase.arrangement(bars)
        export_midi(p, path)
        assert import_midi(path) == p

    def test_unreadable(self, tmp_path):
        (tmp_path / "x.mid").write_bytes(b"not midi")
        with pytest.raises(DataError):
            import_midi(tmp_path / "x.mid")

    def test_rejects_three_four(self, tmp_path):
        import mido

        mid = mido.MidiFile(type=1, ticks_per_beat=12)
        track = mido.MidiTrack([mido.MetaMessage("time_signature", numerator=3, denominator=4)])
        mid.tracks.append(track)
        mid.save(tmp_path / "w.mid")
        with pytest.raises(DataError, match="time signature"):
            import_midi(tmp_path / "w.mid")

    def test_ingest_export_import(self, tmp_path):
        (p,) = ingest_leadsheet(generate_synthetic_corpus(3, 1).documents[0])
        export_midi(p, tmp_path / "l.mid")
        assert import_midi(tmp_path / "l.mid") == p


class TestContainer:
    @settings(max_examples=20, deadline=None)
    @given(arrays(np.bool_, st.tuples(st.integers(1, 3), st.just(8), st.just(48), st.just(84), st.just(2))))
    def test_phrase_round_trip(self, bars):
        array, header = parse_rolls(dump_rolls(bars, ("melody", "chord")))
        assert array.dtype == bool and np.array_equal(array, bars)
        assert header["tracks"] == ["melody", "chord"]

    def test_float_features_bit_exact(self):
        values = np.random.default_rng(0).random((3, 12, 4)).astype(np.float32)
        array, header = parse_rolls(dump_rolls(values, kind="feature", extra={"feature_kind": "chroma-beats"}))
        assert array.tobytes() == values.tobytes() and header["feature_kind"] == "chroma-beats"

    def test_file_round_trip(self, tmp_path):
        phrases = list(generate_synthetic_corpus(1, 3).arrangements)
        save_phrases(tmp_path / "a.pr", phrases)
        assert load_phrases(tmp_path / "a.pr") == phrases

    def test_corrupt(self):
        with pytest.raises(DataError):
            parse_rolls(b'{"format": "other"}\n')
        blob = dump_rolls(np.ones((1, 8, 48, 84, 2), bool), ("melody", "chord"))
        with pytest.raises(DataError):
            parse_rolls(blob[:-10])


class TestSynthetic:
    def test_deterministic(self):
        a, b = generate_synthetic_corpus(11, 4), generate_synthetic_corpus(11, 4)
        assert a.leadsheets == b.leadsheets and a.arrangements == b.arrangements
        assert generate_synthetic_corpus(12, 4).leadsheets != a.leadsheets

    def test_scale_tone_melody_and_triads(self):
        corpus = generate_synthetic_corpus(0, 32)
        for p in corpus.leadsheets:
            for bar in p.bars:
                melody_pcs = set(np.nonzero(bar[..., 0].any(axis=0))[0] % 12)
                chord_pcs = set(np.nonzero(bar[..., 1].any(axis=0))[0] % 12)
                assert len(melody_pcs) <= 7 and melody_pcs <= {0, 2, 4, 5, 7, 9, 11}
                assert len(chord_pcs) == 3
                assert (bar[..., 0].sum(axis=1) <= 1).all()

    def test_arrangements_follow_harmony(self):
        corpus = generate_synthetic_corpus(0, 4)
        for p in corpus.arrangements:
            assert p.tracks == ("strings", "piano", "guitar", "drums", "bass")
            for bar in p.bars:
                triad = set(np.nonzero(bar[..., 0].any(axis=0))[0] % 12)
                for t in (1, 2, 4):
                    assert set(np.nonzero(bar[..., t].any(axis=0))[0] % 12) <= triad

    def test_count_validated(self):
        with pytest.raises(ValueError):
            generate_synthetic_corpus(0, 0)
