"""Inference scenarios, objective metrics, mode ordering and transfer checks."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .autodiff import no_grad
from .corpus import OFFSET_GAIN, Utterance
from .decoder import DurationMode, ProsodicPrediction
from .structure import FRAME_SHIFT_MS, ProsodicTargets, UtteranceTree
from .variational import sample

MODES = ("encoded", "zero", "random", "transfer")


@dataclass(frozen=True)
class InferenceMode:
    kind: str
    seed: int = 0
    reference: tuple[UtteranceTree, ProsodicTargets] | None = None
    use_mean: bool = False

    def __post_init__(self):
        if self.kind not in MODES:
            raise ValueError(f"unknown inference mode {self.kind!r}")

    @classmethod
    def encoded(cls, seed: int = 0, use_mean: bool = False) -> "InferenceMode":
        return cls("encoded", seed, None, use_mean)

    @classmethod
    def zero(cls) -> "InferenceMode":
        return cls("zero")

    @classmethod
    def random(cls, seed: int) -> "InferenceMode":
        return cls("random", seed)

    @classmethod
    def transfer(cls, reference: tuple[UtteranceTree, ProsodicTargets], seed: int = 0,
                 use_mean: bool = False) -> "InferenceMode":
        return cls("transfer", seed, reference, use_mean)


def embedding_for(model, tree: UtteranceTree, targets: ProsodicTargets | None, mode: InferenceMode) -> np.ndarray:
    E = model.embedding_dim
    if mode.kind == "zero":
        return np.zeros(E)
    if mode.kind == "random":
        return np.random.default_rng(mode.seed).standard_normal(E)
    ref_tree, ref_targets = (tree, targets) if mode.kind == "encoded" else mode.reference
    if ref_targets is None:
        raise ValueError(f"{mode.kind} mode needs reference prosodic targets")
    with no_grad():
        post = model.posterior(ref_tree, ref_targets)
        if mode.use_mean:
            return post.mu.value.copy()
        noise = np.random.default_rng(mode.seed).standard_normal(E)
        return sample(post, noise).value.copy()


def synthesize(model, tree: UtteranceTree, mode: InferenceMode, targets: ProsodicTargets | None = None,
               teacher_forced: bool = False) -> tuple[ProsodicPrediction, np.ndarray]:
    """Decode ``tree`` under an inference scenario; returns the prediction and embedding used."""
    emb = embedding_for(model, tree, targets, mode)
    duration_mode = DurationMode.TEACHER_FORCED if teacher_forced else DurationMode.FREE_RUNNING
    durations = targets.durations if (teacher_forced and targets is not None) else None
    with no_grad():
        pred = model.decode(tree, emb, duration_mode, durations)
    return pred, emb


# ---------------------------------------------------------------------------
# metrics


@dataclass
class MetricReport:
    logf0_rmse: float
    f0_abs_hz: float
    c0_rmse: float
    dur_rmse_frames: float
    dur_abs_ms: float
    utterances: int
    per_utterance: np.ndarray | None = field(default=None, repr=False, compare=False)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("per_utterance")
        return d


# columns of the per-utterance sufficient statistics
_SSE_LF0, _ABS_HZ, _SSE_C0, _N_FRAMES, _SSE_DUR, _ABS_DUR, _N_PHONES = range(7)


def utterance_stats(pred: ProsodicPrediction, targets: ProsodicTargets) -> np.ndarray:
    lf0 = pred.log_f0.value
    if lf0.shape[0] != targets.num_frames:
        raise ValueError("frame-aligned metrics need a teacher-forced prediction")
    d_lf0 = lf0 - targets.log_f0
    d_c0 = pred.c0.value - targets.c0
    d_dur = pred.durations_raw.value - targets.durations
    return np.array([
        np.dot(d_lf0, d_lf0),
        np.abs(np.exp(lf0) - np.exp(targets.log_f0)).sum(),
        np.dot(d_c0, d_c0),
        lf0.shape[0],
        np.dot(d_dur, d_dur),
        np.abs(d_dur).sum(),
        d_dur.shape[0],
    ])


def report_from_stats(stats: np.ndarray) -> MetricReport:
    tot = stats.sum(axis=0)
    nf, npn = tot[_N_FRAMES], tot[_N_PHONES]
    return MetricReport(
        logf0_rmse=float(np.sqrt(tot[_SSE_LF0] / nf)),
        f0_abs_hz=float(tot[_ABS_HZ] / nf),
        c0_rmse=float(np.sqrt(tot[_SSE_C0] / nf)),
        dur_rmse_frames=float(np.sqrt(tot[_SSE_DUR] / npn)),
        dur_abs_ms=float(FRAME_SHIFT_MS * tot[_ABS_DUR] / npn),
        utterances=int(stats.shape[0]),
        per_utterance=stats,
    )


def score(predictions: Sequence[ProsodicPrediction], targets: Sequence[ProsodicTargets]) -> MetricReport:
    if not predictions:
        raise ValueError("cannot score an empty split")
    return report_from_stats(np.stack([utterance_stats(p, t) for p, t in zip(predictions, targets)]))


def mode_for(kind: str, index: int, seed: int, draw: int = 0) -> InferenceMode:
    if kind == "encoded":
        return InferenceMode.encoded(use_mean=True)
    if kind == "zero":
        return InferenceMode.zero()
    if kind == "random":
        key = [seed, index] if draw == 0 else [seed, index, draw]
        return InferenceMode.random(int(np.random.SeedSequence(key).generate_state(1)[0]))
    raise ValueError(f"evaluate supports encoded/zero/random, not {kind!r}")


def _stats_rows(model, utterances, mode: str, seed: int, indices, draws: int = 1) -> list[np.ndarray]:
    rows = []
    n_draws = draws if mode == "random" else 1
    for k in indices:
        u = utterances[k]
        total = 0.0
        for j in range(n_draws):
            pred, _ = synthesize(model, u.tree, mode_for(mode, k, seed, j), u.targets, teacher_forced=True)
            total = total + utterance_stats(pred, u.targets)
        rows.append(total)
    return rows


_WORKER_STATE: tuple = ()


def _worker(chunk):
    model, utterances, mode, seed, draws = _WORKER_STATE
    return _stats_rows(model, utterances, mode, seed, chunk, draws)


def evaluate(model, utterances: Sequence[Utterance], mode: str, seed: int = 0, jobs: int = 1,
             draws: int = 1) -> MetricReport:
    """Teacher-forced metrics pooled over frames and phones of a split.

    Encoded mode feeds the posterior mean to the decoder (no sampling);
    random mode draws ``draws`` prior samples per utterance from ``seed`` and
    pools them, so a per-utterance row covers all of its draws. With
    ``jobs > 1`` utterances are scored in forked worker processes; every
    utterance's randomness depends only on its index, so the report does not
    depend on ``jobs``.
    """
    global _WORKER_STATE
    if not utterances:
        raise ValueError("cannot evaluate an empty split")
    if draws < 1:
        raise ValueError("draws must be >= 1")
    n = len(utterances)
    if jobs <= 1 or n < 2 * jobs:
        return report_from_stats(np.stack(_stats_rows(model, utterances, mode, seed, range(n), draws)))
    import multiprocessing
    from concurrent.futures import ProcessPoolExecutor

    chunks = [list(c) for c in np.array_split(np.arange(n), jobs)]
    _WORKER_STATE = (model, utterances, mode, seed, draws)
    try:
        with ProcessPoolExecutor(jobs, mp_context=multiprocessing.get_context("fork")) as pool:
            rows = [r for part in pool.map(_worker, chunks) for r in part]
    finally:
        _WORKER_STATE = ()
    return report_from_stats(np.stack(rows))


def bootstrap_rmse_gap_se(a: MetricReport, b: MetricReport, draws: int = 1000, seed: int = 0) -> float:
    """Standard error of logf0_rmse(b) - logf0_rmse(a), resampling utterances jointly."""
    sa, sb = a.per_utterance, b.per_utterance
    n = sa.shape[0]
    rng = np.random.default_rng(seed)
    gaps = np.empty(draws)
    for i in range(draws):
        idx = rng.integers(0, n, n)
        ta, tb = sa[idx].sum(axis=0), sb[idx].sum(axis=0)
        gaps[i] = np.sqrt(tb[_SSE_LF0] / tb[_N_FRAMES]) - np.sqrt(ta[_SSE_LF0] / ta[_N_FRAMES])
    return float(gaps.std(ddof=1))


@dataclass
class OrderingReport:
    encoded: MetricReport
    zero: MetricReport
    random: MetricReport
    gap_zero_encoded: float
    gap_random_zero: float
    se_zero_encoded: float
    se_random_zero: float
    verdict: bool
    significant: bool

    @property
    def status(self) -> str:
        if self.verdict and self.significant:
            return "pass"
        return "not converged" if not self.verdict else "weak"

    def to_dict(self) -> dict:
        return {
            "encoded": self.encoded.to_dict(),
            "zero": self.zero.to_dict(),
            "random": self.random.to_dict(),
            "gap_zero_encoded": self.gap_zero_encoded,
            "gap_random_zero": self.gap_random_zero,
            "se_zero_encoded": self.se_zero_encoded,
            "se_random_zero": self.se_random_zero,
            "verdict": self.verdict,
            "significant": self.significant,
            "status": self.status,
        }


def ordering_report(model, utterances: Sequence[Utterance], seed: int = 0, draws: int = 1000,
                    sigmas: float = 3.0, jobs: int = 1, random_draws: int = 10) -> OrderingReport:
    """Encoded/zero/random reports, their ordering and bootstrap significance.

    The random-mode figure pools ``random_draws`` prior samples per
    utterance; the bootstrap resamples utterances with all their draws.
    """
    enc = evaluate(model, utterances, "encoded", seed, jobs)
    zero = evaluate(model, utterances, "zero", seed, jobs)
    rnd = evaluate(model, utterances, "random", seed, jobs, random_draws)
    g1 = zero.logf0_rmse - enc.logf0_rmse
    g2 = rnd.logf0_rmse - zero.logf0_rmse
    se1 = bootstrap_rmse_gap_se(enc, zero, draws, seed)
    se2 = bootstrap_rmse_gap_se(zero, rnd, draws, seed + 1)
    verdict = bool(enc.logf0_rmse < zero.logf0_rmse < rnd.logf0_rmse)
    return OrderingReport(enc, zero, rnd, g1, g2, se1, se2, verdict,
                          bool(verdict and g1 > sigmas * se1 and g2 > sigmas * se2))


@dataclass
class TransferResult:
    r: float
    pairs: int
    shift: np.ndarray = field(repr=False)
    expected: np.ndarray = field(repr=False)


def transfer_correlation(model, utterances: Sequence[Utterance], pairs: int = 200, seed: int = 0) -> TransferResult:
    """Correlate the pitch shift induced by a reference embedding with the
    reference's hidden pitch offset.

    For each random (reference, target) pair, the target is decoded
    teacher-forced under the reference's posterior mean and under the zero
    embedding; the difference of mean log-F0 is regressed on the offset the
    generator applied to the reference.
    """
    if any(u.style is None for u in utterances):
        raise ValueError("transfer correlation needs the styles sidecar")
    if len(utterances) < 2:
        raise ValueError("need at least two utterances")
    rng = np.random.default_rng([seed, 11])
    zero_means: dict[int, float] = {}
    ref_embs: dict[int, np.ndarray] = {}
    shift, expected = np.empty(pairs), np.empty(pairs)
    for k in range(pairs):
        ri, ti = (int(i) for i in rng.choice(len(utterances), 2, replace=False))
        ref, tgt = utterances[ri], utterances[ti]
        if ri not in ref_embs:
            ref_embs[ri] = embedding_for(model, ref.tree, ref.targets, InferenceMode.encoded(use_mean=True))
        if ti not in zero_means:
            z, _ = synthesize(model, tgt.tree, InferenceMode.zero(), tgt.targets, teacher_forced=True)
            zero_means[ti] = float(z.log_f0.value.mean())
        with no_grad():
            p = model.decode(tgt.tree, ref_embs[ri], DurationMode.TEACHER_FORCED, tgt.targets.durations)
        shift[k] = float(p.log_f0.value.mean()) - zero_means[ti]
        expected[k] = OFFSET_GAIN * ref.style.z_offset
    r = float(np.corrcoef(shift, expected)[0, 1]) if np.std(shift) > 0 else 0.0
    return TransferResult(r, pairs, shift, expected)


def format_table(rows: dict[str, MetricReport]) -> str:
    """Plain-text table with the log-F0 RMSE / F0 abs / c0 RMSE / duration columns."""
    head = f"{'':<14}{'logF0 RMSE':>12}{'F0 Abs (Hz)':>13}{'c0 RMSE':>10}{'Dur RMSE (fr) / Abs (ms)':>27}"
    lines = [head, "-" * len(head)]
    for name, r in rows.items():
        lines.append(f"{name:<14}{r.logf0_rmse:>12.4f}{r.f0_abs_hz:>13.3f}{r.c0_rmse:>10.4f}"
                     f"{r.dur_rmse_frames:>15.3f} / {r.dur_abs_ms:<9.3f}")
    return "\n".join(lines)
