import json

import numpy as np
import pytest

from leadsheet import cli
from leadsheet.midi import import_midi
from leadsheet.pianoroll import LEADSHEET_TRACKS, Phrase
from leadsheet.rollio import load_phrases, load_rolls, save_phrases
from leadsheet.training import NumericalError

TINY = ["--iterations", "1", "--batch-size", "2", "--n-critic", "1", "--eval-interval", "0"]


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert cli.run(["synth-corpus", "--seed", "2", "--count", "4", "--documents", "1", "--out-dir", str(root / "corpus")]) == 0
    assert cli.run(["train-leadsheet", "--data", str(root / "corpus/leadsheets.pr"), "--out", str(root / "g.ckpt"), *TINY]) == 0
    assert cli.run(
        ["train-arrangement", "--data", str(root / "corpus/arrangements.pr"), "--out", str(root / "a.ckpt"), *TINY]
    ) == 0
    return root


def test_synth_corpus_layout(workspace):
    lead = load_phrases(workspace / "corpus/leadsheets.pr")
    arr = load_phrases(workspace / "corpus/arrangements.pr")
    assert len(lead) == 4 and lead[0].tracks == LEADSHEET_TRACKS
    assert arr[0].tracks == ("strings", "piano", "guitar", "drums", "bass")
    assert (workspace / "corpus/leadsheet-0000.json").exists()


def test_ingest_json(workspace, tmp_path):
    out = tmp_path / "x.pr"
    assert cli.run(["ingest", "--in", str(workspace / "corpus/leadsheet-0000.json"), "--out", str(out)]) == 0
    assert load_phrases(out)[0] == load_phrases(workspace / "corpus/leadsheets.pr")[0]


@pytest.mark.parametrize("kind,shape", [("chord-roll", (84, 48)), ("chroma-roll", (12, 48)), ("chroma-beats", (12, 4))])
def test_extract_features(workspace, tmp_path, kind, shape):
    out = tmp_path / "f.pr"
    assert cli.run(["extract-features", "--in", str(workspace / "corpus/leadsheets.pr"), "--feature", kind, "--out", str(out)]) == 0
    values, meta = load_rolls(out)
    assert values.shape[-2:] == shape and meta["feature_kind"] == kind


def test_generate_is_deterministic(workspace, tmp_path):
    args = ["generate", "--checkpoint", str(workspace / "g.ckpt"), "--n", "2", "--seed", "4"]
    assert cli.run([*args, "--out", str(tmp_path / "a.pr"), "--midi", str(tmp_path / "a.mid")]) == 0
    assert cli.run([*args, "--out", str(tmp_path / "b.pr")]) == 0
    assert (tmp_path / "a.pr").read_bytes() == (tmp_path / "b.pr").read_bytes()
    assert import_midi(tmp_path / "a.mid", LEADSHEET_TRACKS).n_bars == 16


def test_arrange_writes_midi_and_metrics(workspace, tmp_path):
    doc = workspace / "corpus/leadsheet-0000.json"
    out = tmp_path / "arr.mid"
    assert cli.run(["arrange", "--checkpoint", str(workspace / "a.ckpt"), "--in", str(doc), "--out", str(out)]) == 0
    metrics = json.loads(out.with_suffix(".metrics.json").read_text())
    assert metrics["extra"]["feature"] == "chord-roll"
    assert set(metrics["tracks"]) == {"strings", "piano", "guitar", "drums", "bass"}
    assert import_midi(out).n_bars == 8


def test_arrange_feature_mismatch(workspace, tmp_path):
    code = cli.run(
        ["arrange", "--checkpoint", str(workspace / "a.ckpt"), "--in", str(workspace / "corpus/leadsheets.pr"),
         "--feature", "chroma-beats", "--out", str(tmp_path / "x.mid")]
    )
    assert code == 2


def test_resume_continues_iterations(workspace, tmp_path):
    out = tmp_path / "r.ckpt"
    code = cli.run(
        ["train-leadsheet", "--data", str(workspace / "corpus/leadsheets.pr"), "--resume", str(workspace / "g.ckpt"),
         "--out", str(out), "--iterations", "2"]
    )
    assert code == 0
    from leadsheet.training import load_trainer

    assert load_trainer(out).iteration == 2


def test_evaluate_empty_phrase(tmp_path, capsys):
    save_phrases(tmp_path / "e.pr", [Phrase.leadsheet(np.zeros((8, 48, 84, 2), bool))])
    assert cli.run(["evaluate", "--in", str(tmp_path / "e.pr")]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["tracks"]["melody"]["eb"] == 1.0
    assert report["tracks"]["melody"]["upc_defined"] is False
    assert report["td"] is None and report["td_defined"] is False


def test_evaluate_midi_and_export(workspace, tmp_path):
    mid = tmp_path / "c.mid"
    assert cli.run(["export-midi", "--in", str(workspace / "corpus/leadsheets.pr"), "--index", "1", "--out", str(mid)]) == 0
    out = tmp_path / "m.json"
    assert cli.run(["evaluate", "--in", str(mid), "--tracks", "melody,chord", "--out", str(out)]) == 0
    assert json.loads(out.read_text())["tracks"]["chord"]["eb"] == 0.0


def test_output_dir_env(workspace, tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUTPUT_DIR_ENV, str(tmp_path))
    assert cli.run(["export-midi", "--in", str(workspace / "corpus/leadsheets.pr")]) == 0
    assert (tmp_path / "leadsheets.mid").exists()


def test_inputs_not_mutated(workspace):
    path = workspace / "corpus/leadsheets.pr"
    before = path.read_bytes()
    cli.run(["evaluate", "--in", str(path)])
    cli.run(["extract-features", "--in", str(path), "--out", str(workspace / "tmp.pr")])
    assert path.read_bytes() == before


@pytest.mark.parametrize(
    "argv",
    [[], ["bogus"], ["generate"], ["train-leadsheet", "--data", "x", "--batch-size", "0"], ["evaluate", "--in", "x", "--unknown"]],
)
def test_usage_errors(argv):
    assert cli.run(argv) == 1


def test_data_errors(tmp_path):
    (tmp_path / "bad.json").write_text("{not json")
    (tmp_path / "junk.pr").write_bytes(b"garbage")
    assert cli.run(["ingest", "--in", str(tmp_path / "bad.json")]) == 2
    assert cli.run(["evaluate", "--in", str(tmp_path / "junk.pr")]) == 2
    assert cli.run(["evaluate", "--in", str(tmp_path / "missing.pr")]) == 2
    assert cli.run(["generate", "--checkpoint", str(tmp_path / "junk.pr")]) == 2


def test_numerical_failure_exit_code(workspace, tmp_path, monkeypatch):
    def explode(self):
        raise NumericalError("non-finite critic loss", str(tmp_path / "diag.ckpt"))

    monkeypatch.setattr("leadsheet.training.LeadSheetTrainer.train_step", explode)
    code = cli.run(["train-leadsheet", "--data", str(workspace / "corpus/leadsheets.pr"), "--out", str(tmp_path / "n.ckpt"), *TINY])
    assert code == 3


def test_verbose_anywhere(workspace):
    assert cli.run(["-v", "evaluate", "--in", str(workspace / "corpus/leadsheets.pr"), "--out", "/dev/null"]) == 0
    assert cli.run(["evaluate", "-v", "--in", str(workspace / "corpus/leadsheets.pr"), "--out", "/dev/null"]) == 0
