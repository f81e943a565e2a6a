"""Standard MIDI File export and import for piano-roll phrases."""

from __future__ import annotations

import io
from pathlib import Path

import mido
import numpy as np

from .pianoroll import LOWEST_MIDI, N_PITCHES, N_STEPS, STEPS_PER_BEAT, DataError, Phrase
from .tensor.checkpoint import atomic_write_bytes

TICKS_PER_BEAT = STEPS_PER_BEAT  # one tick per time step
DEFAULT_TEMPO = mido.bpm2tempo(120)
DRUM_CHANNEL = 9
VELOCITY = 100


def _runs(row: np.ndarray) -> list[tuple[int, int]]:
    """(onset, end) of every maximal run of active steps."""
    padded = np.concatenate([[False], row, [False]]).astype(np.int8)
    edges = np.diff(padded)
    return list(zip(np.flatnonzero(edges == 1), np.flatnonzero(edges == -1)))


def phrase_to_midi(phrase: Phrase) -> mido.MidiFile:
    mid = mido.MidiFile(type=1, ticks_per_beat=TICKS_PER_BEAT)
    total = phrase.n_bars * N_STEPS
    for i, name in enumerate(phrase.tracks):
        channel = DRUM_CHANNEL if name == "drums" else (i if i < DRUM_CHANNEL else i + 1) % 16
        roll = phrase.bars[..., i].reshape(total, N_PITCHES)
        events = []  # (tick, order, message); note_off sorts before note_on at the same tick
        for row in range(N_PITCHES):
            for on, off in _runs(roll[:, row]):
                pitch = row + LOWEST_MIDI
                events.append((int(on), 1, mido.Message("note_on", note=pitch, velocity=VELOCITY, channel=channel)))
                events.append((int(off), 0, mido.Message("note_off", note=pitch, velocity=0, channel=channel)))
        events.sort(key=lambda e: (e[0], e[1], e[2].note))
        track = mido.MidiTrack()
        track.append(mido.MetaMessage("track_name", name=name, time=0))
        if i == 0:
            track.append(mido.MetaMessage("set_tempo", tempo=DEFAULT_TEMPO, time=0))
            track.append(mido.MetaMessage("time_signature", numerator=4, denominator=4, time=0))
        now = 0
        for tick, _, msg in events:
            track.append(msg.copy(time=tick - now))
            now = tick
        track.append(mido.MetaMessage("end_of_track", time=total - now))
        mid.tracks.append(track)
    return mid


def export_midi(phrase: Phrase, path) -> None:
    buf = io.BytesIO()
    phrase_to_midi(phrase).save(file=buf)
    atomic_write_bytes(path, buf.getvalue())


def midi_to_phrase(mid: mido.MidiFile, tracks=None) -> Phrase:
    if mid.type not in (0, 1):
        raise DataError(f"unsupported MIDI type {mid.type}")
    scale = STEPS_PER_BEAT / mid.ticks_per_beat
    parsed = []  # (name, notes, end_step)
    for track in mid.tracks:
        now, name, open_notes, notes, end = 0, None, {}, [], 0
        for msg in track:
            now += msg.time
            if msg.type == "time_signature" and (msg.numerator, msg.denominator) != (4, 4):
                raise DataError(f"unsupported time signature {msg.numerator}/{msg.denominator}")
            if msg.type == "track_name":
                name = msg.name
            elif msg.type == "note_on" and msg.velocity > 0:
                open_notes.setdefault(msg.note, now)
            elif msg.type == "note_off" or (msg.type == "note_on" and msg.velocity == 0):
                if msg.note in open_notes:
                    notes.append((msg.note, open_notes.pop(msg.note), now))
            end = now
        notes += [(p, s, end) for p, s in open_notes.items()]
        is_meta_only = not notes and name is None
        if not is_meta_only:
            parsed.append((name, notes, int(round(end * scale))))
    if not parsed:
        raise DataError("MIDI file has no tracks")
    total = max(end for *_, end in parsed)
    for _, notes, _ in parsed:
        for _, _, off in notes:
            total = max(total, int(round(off * scale)))
    n_bars = max(1, -(-total // N_STEPS))
    roll = np.zeros((n_bars * N_STEPS, N_PITCHES, len(parsed)), dtype=bool)
    for i, (_, notes, _) in enumerate(parsed):
        for pitch, on, off in notes:
            row = pitch - LOWEST_MIDI
            if 0 <= row < N_PITCHES:
                lo, hi = int(round(on * scale)), int(round(off * scale))
                roll[lo:max(hi, lo + 1), row, i] = True
    names = tracks or [name or f"track{i}" for i, (name, _, _) in enumerate(parsed)]
    return Phrase(roll.reshape(n_bars, N_STEPS, N_PITCHES, len(parsed)), names)


def import_midi(path, tracks=None) -> Phrase:
    try:
        mid = mido.MidiFile(Path(path))
    except (OSError, EOFError, ValueError, KeyError, IndexError) as exc:
        raise DataError(f"unreadable MIDI file {path}: {exc}") from exc
    return midi_to_phrase(mid, tracks)
