import hashlib
import json
from pathlib import Path

import pytest

from chive.cli import main

SMALL_CORPUS = ["--utterances", "12", "--words", "1,2", "--syllables-per-word", "1,2", "--duration-frames", "2,5"]
SMALL_MODEL = ["--hidden", "4", "--embedding", "3", "--layers", "1"]


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def tree_digest(root: Path) -> dict[str, str]:
    return {str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(root.rglob("*")) if p.is_file()}


def pipeline(capsys, root: Path) -> list[str]:
    """Every command once; returns their stdout."""
    corpus, run_dir = root / "corpus", root / "run"
    outs = []
    steps = [
        ["gen-corpus", "--out", corpus, "--seed", 3, *SMALL_CORPUS],
        ["train", "--corpus", corpus, "--out", run_dir, "--steps", 4, "--eval-interval", 2, "--eval-subset", 2,
         "--train-fraction", 0.75, *SMALL_MODEL],
        ["eval", "--checkpoint", run_dir / "last.ckpt", "--corpus", corpus, "--train-fraction", 0.75,
         "--mode", "ordering", "--draws", 20, "--out", root / "ord"],
        ["eval", "--checkpoint", run_dir / "last.ckpt", "--corpus", corpus, "--train-fraction", 0.75,
         "--mode", "transfer", "--pairs", 5, "--out", root / "tr"],
        ["synthesize", "--checkpoint", run_dir / "last.ckpt", "--utterance", corpus / "00000.utt.json",
         "--mode", "random", "--samples", 2, "--out", root / "syn"],
        ["synthesize", "--checkpoint", run_dir / "last.ckpt", "--utterance", corpus / "00001.utt.json",
         "--mode", "zero", "--out", root / "syn0"],
        ["transfer", "--checkpoint", run_dir / "last.ckpt", "--reference", corpus / "00000.utt.json",
         "--target", corpus / "00001.utt.json", "--out", root / "xfer"],
        ["gradcheck", "--trees", 2, "--words", "1,2", "--hidden", 3, "--embedding", 2],
        ["params", "--corpus", corpus],
    ]
    for argv in steps:
        code, out, err = run(capsys, *argv)
        assert code == 0, (argv[0], err)
        outs.append(out.replace(str(root), "<root>"))
    return outs


def test_every_command_is_bit_identical_on_repeat(tmp_path, capsys):
    a = pipeline(capsys, tmp_path / "a")
    b = pipeline(capsys, tmp_path / "b")
    assert a == b
    da, db = tree_digest(tmp_path / "a"), tree_digest(tmp_path / "b")
    assert da == db
    for name in ("run/metrics.png", "ord/ordering.png", "tr/transfer.png", "syn/contours.png", "xfer/transfer.png",
                 "syn/prediction_000.contour.csv", "run/metrics.jsonl", "ord/report.json"):
        assert name in da


def test_synthesize_outputs(tmp_path, capsys):
    pipeline(capsys, tmp_path)
    csv = (tmp_path / "syn0" / "prediction.contour.csv").read_text().splitlines()
    assert csv[0] == "frame_ms,log_f0,c0"
    pred = json.loads((tmp_path / "syn0" / "prediction.json").read_text())
    assert len(pred["log_f0"]) == sum(pred["durations_realized"]) == len(csv) - 1
    rep = json.loads((tmp_path / "ord" / "report.json").read_text())
    assert rep["status"] in ("pass", "weak", "not converged")


def test_gradcheck_seed_7(capsys):
    code, out, _ = run(capsys, "gradcheck", "--seed", 7, "--trees", 3)
    res = json.loads(out)
    assert code == 0 and res["pass"] and res["max_relative_error"] < 1e-5


def test_gradcheck_threshold_failure_is_numeric(capsys):
    code, _, err = run(capsys, "gradcheck", "--trees", 1, "--words", "1,1", "--threshold", 1e-30)
    assert code == 3 and json.loads(err)["error"] == "numeric"


@pytest.mark.parametrize("argv", [[], ["bogus"], ["params", "--nope"], ["gen-corpus"], ["params", "--jobs", "0"],
                                  ["params", "--model", "other"]])
def test_usage_errors(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == 1
    assert json.loads(err.strip().splitlines()[-1])["exit_code"] == 1


def test_validation_errors(tmp_path, capsys):
    code, _, err = run(capsys, "gen-corpus", "--out", tmp_path, "--words", "3,1")
    assert code == 2 and json.loads(err)["error"] == "validation"
    code, _, _ = run(capsys, "synthesize", "--checkpoint", tmp_path / "none.ckpt", "--utterance", "x", "--out", tmp_path)
    assert code == 2
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"garbage")
    (tmp_path / "u.utt.json").write_text("{}")
    code, _, _ = run(capsys, "synthesize", "--checkpoint", bad, "--utterance", tmp_path / "u.utt.json",
                     "--out", tmp_path)
    assert code == 2


def test_config_precedence(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("hidden = 6\nembedding = 5\n")
    _, out, _ = run(capsys, "params", "--config", cfg)
    assert json.loads(out)["models"]["chive"]["hidden"] == 6
    _, out, _ = run(capsys, "params", "--config", cfg, "--hidden", 7)
    res = json.loads(out)["models"]["chive"]
    assert res["hidden"] == 7 and res["embedding"] == 5
    cfg.write_text("not_a_key = 1\n")
    assert run(capsys, "params", "--config", cfg)[0] == 2
    assert run(capsys, "params", "--config", tmp_path / "missing.cfg")[0] == 2


def test_params_baseline_is_matched(capsys):
    _, out, _ = run(capsys, "params")
    res = json.loads(out)
    assert abs(res["baseline_to_chive"] - 1.0) <= 0.10


def test_table_format(tmp_path, capsys):
    code, out, _ = run(capsys, "params", "--format", "table")
    assert code == 0 and "baseline / chive" in out


def test_help_exits_zero(capsys):
    assert main(["--help"]) == 0
    assert main(["train", "--help"]) == 0
