"""Command-line entry point: ``chive <command> [flags]``.

Exit codes: 0 ok, 1 usage, 2 validation (bad input files, config or
checkpoints), 3 numeric failure (non-finite values, gradient check above
threshold). Errors are also written to stderr as one JSON object.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

import numpy as np

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("chive")


class UsageError(Exception):
    pass


class ValidationFailure(Exception):
    pass


class NumericFailure(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); usage errors are 1 here
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------------------
# option tables: (name, type, default, help). Every option can also be given
# in the --config file as ``name = value`` (dashes or underscores).


def _pair(text: str) -> tuple[int, int]:
    parts = [p for p in str(text).replace(":", ",").split(",") if p.strip()]
    if len(parts) != 2:
        raise ValueError(f"expected LO,HI, got {text!r}")
    return int(parts[0]), int(parts[1])


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    v = str(text).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


@dataclass
class Opt:
    name: str
    type: Callable
    default: Any
    help: str
    choices: tuple | None = None
    required: bool = False

    @property
    def dest(self) -> str:
        return self.name.replace("-", "_")


COMMON = [
    Opt("seed", int, 0, "seed for every random choice the command makes"),
    Opt("jobs", int, 1, "worker processes for per-utterance evaluation"),
    Opt("format", str, "json", "stdout rendering", ("json", "table")),
    Opt("log-level", str, "warning", "stderr log level", ("debug", "info", "warning", "error")),
]

MODEL_OPTS = [
    Opt("model", str, "chive", "model kind", ("chive", "baseline")),
    Opt("hidden", int, 32, "recurrent width of the hierarchical model"),
    Opt("embedding", int, 256, "sentence prosody embedding size"),
    Opt("layers", int, 2, "layers per recurrent stack"),
    Opt("baseline-hidden", int, 0, "explicit baseline width; 0 matches the hierarchical parameter count"),
]

SPLIT_OPTS = [
    Opt("train-fraction", float, 2000 / 2200, "fraction of the corpus used for training"),
    Opt("split", str, "eval", "which side of the train/eval split to use", ("train", "eval", "all")),
]

COMMANDS: dict[str, tuple[str, list[Opt]]] = {
    "gen-corpus": ("generate a synthetic corpus directory", [
        Opt("out", str, None, "output directory", required=True),
        Opt("utterances", int, 2200, "number of utterances"),
        Opt("words", _pair, (2, 6), "words per utterance LO,HI"),
        Opt("syllables-per-word", _pair, (1, 4), "syllables per word LO,HI"),
        Opt("phones-per-syllable", _pair, (1, 3), "phones per syllable LO,HI"),
        Opt("duration-frames", _pair, (3, 12), "phone duration range in frames LO,HI"),
        Opt("speakers", int, 4, "number of speakers (at most 4)"),
        Opt("phone-inventory", int, 20, "phone inventory size"),
        Opt("stress-prob", float, 0.3, "probability a syllable is stressed"),
        Opt("prominence-prob", float, 0.3, "probability a word is prominent"),
        Opt("noise-scale", float, 0.02, "std of additive target noise"),
    ]),
    "train": ("train a model on a corpus directory", [
        Opt("corpus", str, None, "corpus directory", required=True),
        Opt("out", str, None, "run directory for checkpoints and metrics", required=True),
        *MODEL_OPTS,
        Opt("train-fraction", float, 2000 / 2200, "fraction of the corpus used for training"),
        Opt("steps", int, 20000, "optimiser steps"),
        Opt("batch-size", int, 4, "utterances per step"),
        Opt("learning-rate", float, 1e-3, "Adam step size"),
        Opt("clip-norm", float, 5.0, "global gradient norm clip (0 disables)"),
        Opt("eval-interval", int, 2000, "steps between evaluations"),
        Opt("eval-subset", int, 200, "eval utterances scored at each evaluation (0 = all)"),
        Opt("checkpoint-interval", int, 0, "steps between numbered checkpoints (0 = none)"),
        Opt("lambda-duration", float, 1.0, "duration loss weight"),
        Opt("lambda-f0c0", float, 1.0, "F0/c0 loss weight"),
        Opt("lambda-kl", float, 1.0, "KL weight after warmup"),
        Opt("kl-warmup-steps", int, 2000, "steps of linear KL warmup"),
        Opt("init-output-bias", _bool, True, "start readout biases at training-set means"),
        Opt("resume", str, None, "checkpoint to resume from"),
    ]),
    "eval": ("score a checkpoint on a corpus split", [
        Opt("checkpoint", str, None, "model checkpoint", required=True),
        Opt("corpus", str, None, "corpus directory", required=True),
        Opt("mode", str, "ordering", "what to compute",
            ("encoded", "zero", "random", "ordering", "transfer")),
        *SPLIT_OPTS,
        Opt("draws", int, 1000, "bootstrap resamples for the ordering report"),
        Opt("random-draws", int, 10, "prior samples per utterance in random mode"),
        Opt("pairs", int, 200, "reference/target pairs for the transfer correlation"),
        Opt("out", str, None, "directory for report.json and a figure"),
    ]),
    "synthesize": ("decode one utterance", [
        Opt("checkpoint", str, None, "model checkpoint", required=True),
        Opt("utterance", str, None, ".utt.json file to decode", required=True),
        Opt("mode", str, "zero", "embedding source", ("zero", "random", "encoded")),
        Opt("samples", int, 1, "number of random-mode draws"),
        Opt("embedding", str, None, "JSON array to use as the embedding (overrides --mode)"),
        Opt("teacher-forced", _bool, False, "use the utterance's durations instead of predicted ones"),
        Opt("use-mean", _bool, True, "encoded mode: use the posterior mean instead of a sample"),
        Opt("out", str, None, "output directory", required=True),
    ]),
    "transfer": ("decode a target utterance with a reference's embedding", [
        Opt("checkpoint", str, None, "model checkpoint", required=True),
        Opt("reference", str, None, ".utt.json with prosodic targets to encode", required=True),
        Opt("target", str, None, ".utt.json whose linguistic features are decoded", required=True),
        Opt("use-mean", _bool, True, "use the posterior mean instead of a sample"),
        Opt("teacher-forced", _bool, False, "use the target's own durations"),
        Opt("out", str, None, "output directory", required=True),
    ]),
    "gradcheck": ("finite-difference check of the full training objective", [
        Opt("model", str, "both", "which model(s) to check", ("chive", "baseline", "both")),
        Opt("trees", int, 20, "random trees per model"),
        Opt("words", _pair, (1, 6), "words per tree LO,HI"),
        Opt("hidden", int, 8, "recurrent width of the checked models"),
        Opt("embedding", int, 4, "embedding size of the checked models"),
        Opt("epsilon", float, 1e-4, "central-difference step"),
        Opt("samples", int, 1, "coordinates checked per parameter tensor"),
        Opt("threshold", float, 1e-5, "maximum allowed relative error"),
    ]),
    "params": ("parameter counts per model and module", [
        Opt("corpus", str, None, "corpus directory for feature sizes (default: generator defaults)"),
        *MODEL_OPTS,
    ]),
}


def build_parser() -> _Parser:
    parser = _Parser(prog="chive", description="Hierarchical prosody VAE toolkit.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, metavar="COMMAND")
    for name, (help_text, opts) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", default=None, help="flat key = value file; flags override it")
        for o in [*opts, *COMMON]:
            kwargs = dict(dest=o.dest, default=None, help=f"{o.help} (default: {_show(o.default)})")
            if o.choices:
                kwargs["choices"] = o.choices
            if o.type is _bool:
                kwargs["type"] = _bool
                kwargs["nargs"] = "?"
                kwargs["const"] = True
                kwargs["metavar"] = "BOOL"
            else:
                kwargs["type"] = o.type
            p.add_argument(f"--{o.name}", **kwargs)
    return parser


def _show(v):
    if isinstance(v, tuple):
        return ",".join(map(str, v))
    return "required" if v is None else v


def resolve_options(command: str, ns: argparse.Namespace) -> dict[str, Any]:
    """defaults < config file < explicit flags."""
    from .training import parse_config_text

    opts = [*COMMANDS[command][1], *COMMON]
    by_dest = {o.dest: o for o in opts}
    values = {o.dest: o.default for o in opts}
    if ns.config:
        path = Path(ns.config)
        if not path.is_file():
            raise ValidationFailure(f"config file {path} not found")
        for key, raw in parse_config_text(path.read_text()).items():
            if key == "config" or key not in by_dest:
                raise ValidationFailure(f"{path}: unknown key {key!r} for {command}")
            o = by_dest[key]
            try:
                value = o.type(raw)
            except ValueError as e:
                raise ValidationFailure(f"{path}: {key}: {e}") from e
            if o.choices and value not in o.choices:
                raise ValidationFailure(f"{path}: {key} must be one of {list(o.choices)}")
            values[key] = value
    for dest in by_dest:
        flag = getattr(ns, dest)
        if flag is not None:
            values[dest] = flag
    missing = [o.name for o in opts if o.required and values[o.dest] is None]
    if missing:
        raise UsageError(f"chive {command}: missing required " + ", ".join(f"--{m}" for m in missing))
    if values["jobs"] < 1:
        raise UsageError("--jobs must be >= 1")
    return values


# ---------------------------------------------------------------------------
# helpers


def _emit(obj: dict, fmt: str, table: str | None = None) -> None:
    if fmt == "table" and table is not None:
        print(table)
    else:
        print(json.dumps(obj, indent=1, sort_keys=True))


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def _load_checkpoint(path: str):
    from .checkpoint import load_model

    if not Path(path).is_file():
        raise ValidationFailure(f"checkpoint {path} not found")
    model, meta, _ = load_model(path)
    return model, meta


def _load_utterance(path: str, need_targets: bool = False):
    from .structure import load, validate

    if not Path(path).is_file():
        raise ValidationFailure(f"utterance file {path} not found")
    tree, targets = load(path)
    report = validate(tree, targets)
    if not report.ok:
        raise ValidationFailure(f"{path}: invalid utterance: {', '.join(report.codes())}")
    if need_targets and targets is None:
        raise ValidationFailure(f"{path}: prosodic targets (log_f0, c0 and durations) are required")
    return tree, targets


def _check_dims(model, tree, path: str) -> None:
    from .structure import feature_dims

    got = feature_dims([tree])
    if got != model.config.dims:
        raise ValidationFailure(f"{path}: feature sizes {got} do not match the model's {model.config.dims}")


def _load_split(corpus_dir: str, fraction: float, which: str, seed: int):
    from .corpus import read_corpus, split

    if not Path(corpus_dir).is_dir():
        raise ValidationFailure(f"corpus directory {corpus_dir} not found")
    corpus = read_corpus(corpus_dir)
    if which == "all":
        return corpus, corpus
    train, ev = split(corpus, fraction, seed)
    return train, ev


def model_config_from(values: dict, dims: dict):
    from .model import ModelConfig, matched_baseline

    chive = ModelConfig(dims, "chive", values["hidden"], values["embedding"], values["layers"])
    if values["model"] == "chive":
        return chive
    if values["baseline_hidden"]:
        return ModelConfig(dims, "baseline", values["baseline_hidden"], values["embedding"], values["layers"])
    return matched_baseline(chive)


def _save_prediction(out: Path, stem: str, pred) -> None:
    (out / f"{stem}.json").write_text(pred.to_json() + "\n")
    (out / f"{stem}.contour.csv").write_text(pred.contour_csv())
    (out / f"{stem}.durations.csv").write_text(pred.duration_csv())


def _syllable_boundaries_ms(tree, durations) -> list[float]:
    from .structure import FRAME_SHIFT_MS

    lay = tree.layout()
    fl = lay.frames(np.asarray(durations))
    return [float(s) * FRAME_SHIFT_MS for s in fl.syl_start[1:]]


# ---------------------------------------------------------------------------
# commands


def cmd_gen_corpus(v: dict) -> int:
    from .corpus import CorpusConfig, generate, write_corpus

    try:
        cfg = CorpusConfig(utterances=v["utterances"], seed=v["seed"], words=v["words"],
                           syllables_per_word=v["syllables_per_word"],
                           phones_per_syllable=v["phones_per_syllable"], duration_frames=v["duration_frames"],
                           speakers=v["speakers"], phone_inventory=v["phone_inventory"],
                           stress_prob=v["stress_prob"], prominence_prob=v["prominence_prob"],
                           noise_scale=v["noise_scale"])
    except ValueError as e:
        raise ValidationFailure(str(e)) from e
    corpus = generate(cfg, v["seed"])
    write_corpus(v["out"], corpus, cfg, v["seed"])
    frames = sum(u.targets.num_frames for u in corpus)
    summary = {"out": v["out"], "utterances": len(corpus), "frames": frames, "seed": v["seed"]}
    _emit(summary, v["format"], f"wrote {len(corpus)} utterances ({frames} frames) to {v['out']}")
    return EXIT_OK


def cmd_train(v: dict) -> int:
    from .model import build_model
    from .plotting import plot_metrics
    from .structure import feature_dims
    from .training import TrainConfig, train_loop

    train, ev = _load_split(v["corpus"], v["train_fraction"], "eval", v["seed"])
    out = Path(v["out"])
    out.mkdir(parents=True, exist_ok=True)
    try:
        tc = TrainConfig(batch_size=v["batch_size"], learning_rate=v["learning_rate"], clip_norm=v["clip_norm"],
                         max_steps=v["steps"], eval_interval=v["eval_interval"], eval_subset=v["eval_subset"],
                         checkpoint_interval=v["checkpoint_interval"], seed=v["seed"],
                         lambda_duration=v["lambda_duration"], lambda_f0c0=v["lambda_f0c0"],
                         lambda_kl=v["lambda_kl"], kl_warmup_steps=v["kl_warmup_steps"],
                         init_output_bias=v["init_output_bias"])
        mc = model_config_from(v, feature_dims([u.tree for u in train]))
    except ValueError as e:
        raise ValidationFailure(str(e)) from e
    model = build_model(mc, seed=v["seed"])
    if v["resume"] and not Path(v["resume"]).is_file():
        raise ValidationFailure(f"checkpoint {v['resume']} not found")
    result = train_loop(model, train, ev, tc, out, resume=v["resume"])
    rows = [json.loads(line) for line in (out / "metrics.jsonl").read_text().splitlines() if line]
    if rows:
        plot_metrics(out / "metrics.png", rows)
    summary = {"model": mc.kind, "hidden": mc.hidden, "embedding": mc.embedding,
               "parameters": model.store.num_values(), "train_utterances": len(train),
               "eval_utterances": len(ev), **result}
    _write_json(out / "summary.json", summary)
    _emit(summary, v["format"], "\n".join(f"{k:<22}{val}" for k, val in summary.items()))
    return EXIT_OK


def cmd_eval(v: dict) -> int:
    from .evaluation import evaluate, format_table, ordering_report, transfer_correlation
    from .plotting import plot_ordering, plot_transfer_scatter

    model, _ = _load_checkpoint(v["checkpoint"])
    train, ev = _load_split(v["corpus"], v["train_fraction"], v["split"], v["seed"])
    utts = train if v["split"] == "train" else ev
    _check_dims(model, utts[0].tree, v["corpus"])
    mode, out = v["mode"], Path(v["out"]) if v["out"] else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
    if mode == "ordering":
        rep = ordering_report(model, utts, v["seed"], v["draws"], jobs=v["jobs"], random_draws=v["random_draws"])
        result = {"model": model.kind, "utterances": len(utts), **rep.to_dict()}
        table = format_table({"encoded": rep.encoded, "zero": rep.zero, "random": rep.random})
        if out:
            plot_ordering(out / "ordering.png",
                          {"encoded": rep.encoded.logf0_rmse, "zero": rep.zero.logf0_rmse,
                           "random": rep.random.logf0_rmse},
                          {"zero": rep.se_zero_encoded, "random": rep.se_random_zero})
        table += (f"\nordering enc < zero < random: {rep.status}"
                  f" (gaps {rep.gap_zero_encoded:.4f} +/- {rep.se_zero_encoded:.4f},"
                  f" {rep.gap_random_zero:.4f} +/- {rep.se_random_zero:.4f})")
    elif mode == "transfer":
        try:
            tr = transfer_correlation(model, utts, v["pairs"], v["seed"])
        except ValueError as e:
            raise ValidationFailure(str(e)) from e
        result = {"model": model.kind, "pairs": tr.pairs, "r": tr.r}
        table = f"transfer correlation r = {tr.r:.4f} over {tr.pairs} pairs"
        if out:
            plot_transfer_scatter(out / "transfer.png", tr.expected, tr.shift, tr.r)
            np.savetxt(out / "transfer.csv", np.column_stack([tr.expected, tr.shift]), delimiter=",",
                       header="expected_shift,induced_shift", comments="", fmt="%.17g")
    else:
        rep = evaluate(model, utts, mode, v["seed"], jobs=v["jobs"], draws=v["random_draws"] if mode == "random" else 1)
        result = {"model": model.kind, "mode": mode, **rep.to_dict()}
        table = format_table({mode: rep})
    if out:
        _write_json(out / "report.json", result)
    _emit(result, v["format"], table)
    return EXIT_OK


def cmd_synthesize(v: dict) -> int:
    from .evaluation import InferenceMode, synthesize
    from .plotting import plot_contours
    from .variational import load_embedding, save_embedding

    model, _ = _load_checkpoint(v["checkpoint"])
    tree, targets = _load_utterance(v["utterance"], need_targets=v["mode"] == "encoded" and not v["embedding"])
    _check_dims(model, tree, v["utterance"])
    if v["teacher_forced"] and not tree.has_durations:
        raise ValidationFailure(f"{v['utterance']}: --teacher-forced needs phone durations")
    if v["samples"] < 1:
        raise UsageError("--samples must be >= 1")
    out = Path(v["out"])
    out.mkdir(parents=True, exist_ok=True)
    from .autodiff import no_grad
    from .decoder import DurationMode

    if v["embedding"]:
        try:
            embs = [load_embedding(v["embedding"], model.embedding_dim)]
        except (ValueError, json.JSONDecodeError, FileNotFoundError) as e:
            raise ValidationFailure(str(e)) from e
        labels = ["given"]
    elif v["mode"] == "random":
        seeds = np.random.SeedSequence(v["seed"]).generate_state(v["samples"])
        embs = [np.random.default_rng(int(s)).standard_normal(model.embedding_dim) for s in seeds]
        labels = [f"sample {k}" for k in range(v["samples"])]
    else:
        mode = InferenceMode.zero() if v["mode"] == "zero" else InferenceMode.encoded(v["seed"], v["use_mean"])
        _, emb = synthesize(model, tree, mode, targets)
        embs, labels = [emb], [v["mode"]]

    dmode = DurationMode.TEACHER_FORCED if v["teacher_forced"] else DurationMode.FREE_RUNNING
    durations = tree.durations() if v["teacher_forced"] else None
    series, files = [], []
    for k, emb in enumerate(embs):
        with no_grad():
            pred = model.decode(tree, emb, dmode, durations)
        stem = "prediction" if len(embs) == 1 else f"prediction_{k:03d}"
        _save_prediction(out, stem, pred)
        save_embedding(out / f"{stem}.embedding.json", emb)
        series.append((labels[k], pred.log_f0.value))
        files.append(stem)
    if targets is not None and v["teacher_forced"]:
        series.append(("natural", targets.log_f0))
    plot_contours(out / "contours.png", series, title=tree.utterance_id,
                  boundaries_ms=_syllable_boundaries_ms(tree, pred.durations_realized) if len(embs) == 1 else ())
    summary = {"utterance": tree.utterance_id, "mode": "given" if v["embedding"] else v["mode"],
               "outputs": files, "frames": [int(s[1].shape[0]) for s in series[:len(embs)]]}
    _emit(summary, v["format"], "\n".join(f"{f}: {n} frames" for f, n in zip(files, summary["frames"])))
    return EXIT_OK


def cmd_transfer(v: dict) -> int:
    from .autodiff import no_grad
    from .decoder import DurationMode
    from .evaluation import InferenceMode, embedding_for
    from .plotting import plot_transfer
    from .variational import save_embedding

    model, _ = _load_checkpoint(v["checkpoint"])
    ref_tree, ref_targets = _load_utterance(v["reference"], need_targets=True)
    tgt_tree, _ = _load_utterance(v["target"])
    _check_dims(model, ref_tree, v["reference"])
    _check_dims(model, tgt_tree, v["target"])
    if v["teacher_forced"] and not tgt_tree.has_durations:
        raise ValidationFailure(f"{v['target']}: --teacher-forced needs phone durations")
    emb = embedding_for(model, tgt_tree, None,
                        InferenceMode.transfer((ref_tree, ref_targets), v["seed"], v["use_mean"]))
    dmode = DurationMode.TEACHER_FORCED if v["teacher_forced"] else DurationMode.FREE_RUNNING
    durations = tgt_tree.durations() if v["teacher_forced"] else None
    with no_grad():
        pred = model.decode(tgt_tree, emb, dmode, durations)
        zero = model.decode(tgt_tree, np.zeros(model.embedding_dim), dmode, durations)
    out = Path(v["out"])
    out.mkdir(parents=True, exist_ok=True)
    save_embedding(out / "reference.embedding.json", emb)
    _save_prediction(out, "transfer", pred)
    _save_prediction(out, "zero", zero)
    plot_transfer(out / "transfer.png", ref_targets.log_f0, pred.log_f0.value, zero.log_f0.value)
    shift = float(pred.log_f0.value.mean() - zero.log_f0.value.mean())
    summary = {"reference": ref_tree.utterance_id, "target": tgt_tree.utterance_id,
               "frames": pred.num_frames, "mean_log_f0_shift": shift}
    _emit(summary, v["format"], f"{ref_tree.utterance_id} -> {tgt_tree.utterance_id}: {pred.num_frames} frames, "
                                f"mean log-F0 shift {shift:+.4f}")
    return EXIT_OK


def cmd_gradcheck(v: dict) -> int:
    from .gradcheck import check_objective

    kinds = ("chive", "baseline") if v["model"] == "both" else (v["model"],)
    if v["trees"] < 1:
        raise UsageError("--trees must be >= 1")
    results = [check_objective(k, v["trees"], v["seed"], v["hidden"], v["embedding"], v["words"],
                               v["epsilon"], v["samples"]) for k in kinds]
    worst = max(r.max_relative_error for r in results)
    passed = worst < v["threshold"]
    out = {"threshold": v["threshold"], "epsilon": v["epsilon"], "max_relative_error": worst,
           "pass": passed, "models": [r.to_dict() for r in results]}
    table = "\n".join(f"{r.kind:<10} trees {r.trees:>3}  coords {r.checked:>5}  max rel err {r.max_relative_error:.3e}"
                      for r in results)
    _emit(out, v["format"], table + f"\n{'pass' if passed else 'FAIL'} (threshold {v['threshold']:.0e})")
    if not passed:
        raise NumericFailure(f"max relative error {worst:.3e} >= {v['threshold']:.1e}")
    return EXIT_OK


def cmd_params(v: dict) -> int:
    from .corpus import CorpusConfig, generate, read_corpus
    from .model import build_model
    from .structure import feature_dims

    if v["corpus"]:
        if not Path(v["corpus"]).is_dir():
            raise ValidationFailure(f"corpus directory {v['corpus']} not found")
        trees = [read_corpus(v["corpus"])[0].tree]
    else:
        trees = [generate(CorpusConfig(utterances=1), 0)[0].tree]
    dims = feature_dims(trees)
    rows = {}
    for kind in ("chive", "baseline"):
        try:
            cfg = model_config_from({**v, "model": kind}, dims)
        except ValueError as e:
            raise ValidationFailure(str(e)) from e
        store = build_model(cfg, 0).store
        modules: dict[str, int] = {}
        for name, p in store.items():
            top = ".".join(name.split(".")[:2])
            modules[top] = modules.get(top, 0) + p.value.size
        rows[kind] = {"hidden": cfg.hidden, "embedding": cfg.embedding, "total": store.num_values(),
                      "modules": modules}
    ratio = rows["baseline"]["total"] / rows["chive"]["total"]
    result = {"feature_dims": dims, "models": rows, "baseline_to_chive": ratio}
    lines = [f"{'model':<10}{'hidden':>8}{'params':>10}"]
    for kind, r in rows.items():
        lines.append(f"{kind:<10}{r['hidden']:>8}{r['total']:>10}")
        lines.extend(f"  {m:<26}{n:>10}" for m, n in r["modules"].items())
    lines.append(f"baseline / chive = {ratio:.3f}")
    _emit(result, v["format"], "\n".join(lines))
    return EXIT_OK


HANDLERS = {
    "gen-corpus": cmd_gen_corpus,
    "train": cmd_train,
    "eval": cmd_eval,
    "synthesize": cmd_synthesize,
    "transfer": cmd_transfer,
    "gradcheck": cmd_gradcheck,
    "params": cmd_params,
}


def _fail(code: int, kind: str, message: str) -> int:
    sys.stderr.write(json.dumps({"error": kind, "exit_code": code, "message": message}) + "\n")
    return code


def main(argv: list[str] | None = None) -> int:
    from .autodiff import NonFiniteError
    from .checkpoint import CheckpointError
    from .structure import SchemaError
    from .training import TrainingError

    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
        if ns.command is None:
            raise UsageError("chive: a command is required (" + ", ".join(COMMANDS) + ")")
        values = resolve_options(ns.command, ns)
    except UsageError as e:
        return _fail(EXIT_USAGE, "usage", str(e))
    except ValidationFailure as e:
        return _fail(EXIT_VALIDATION, "validation", str(e))
    except SystemExit as e:  # --help
        return int(e.code or 0)
    logging.basicConfig(level=values["log_level"].upper(), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return HANDLERS[ns.command](values)
    except UsageError as e:
        return _fail(EXIT_USAGE, "usage", str(e))
    except (NonFiniteError, TrainingError, NumericFailure, FloatingPointError) as e:
        return _fail(EXIT_NUMERIC, "numeric", str(e))
    except (ValidationFailure, SchemaError, CheckpointError, ValueError, FileNotFoundError,
            json.JSONDecodeError) as e:
        return _fail(EXIT_VALIDATION, "validation", str(e))


if __name__ == "__main__":
    sys.exit(main())
