"""Objective, optimiser and training loop."""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import NonFiniteError, Tensor
from .checkpoint import load_model, save_model
from .corpus import Utterance
from .decoder import DurationMode, ProsodicPrediction
from .evaluation import evaluate
from .model import set_output_bias
from .structure import ProsodicTargets
from .variational import GaussianPosterior, kl_divergence

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass
class LossWeights:
    duration: float = 1.0
    f0c0: float = 1.0
    kl: float = 1.0
    kl_warmup_steps: int = 2000

    def __post_init__(self):
        if min(self.duration, self.f0c0, self.kl) < 0:
            raise ValueError("loss weights must be >= 0")

    def kl_at(self, step: int) -> float:
        if self.kl_warmup_steps <= 0:
            return self.kl
        return self.kl * min(1.0, step / self.kl_warmup_steps)


@dataclass
class LossTerms:
    total: Tensor
    duration: Tensor
    f0c0: Tensor
    kl: Tensor

    def scalars(self) -> dict[str, float]:
        return {"total": float(self.total.value), "dur_l2": float(self.duration.value),
                "f0c0_l2": float(self.f0c0.value), "kl": float(self.kl.value)}


def loss(pred: ProsodicPrediction, targets: ProsodicTargets, post: GaussianPosterior,
         weights: LossWeights, kl_weight: float | None = None) -> LossTerms:
    """Weighted sum of the duration L2, frame F0/c0 L2 and KL terms."""
    if pred.mode != DurationMode.TEACHER_FORCED or pred.num_frames != targets.num_frames:
        raise ValueError(
            f"length mismatch: prediction has {pred.num_frames} frames, targets {targets.num_frames}; "
            "the loss needs a teacher-forced prediction")
    dur = ad.sum_squared_error(pred.durations_raw, targets.durations.astype(np.float64))
    f0c0 = ad.sum_squared_error(pred.log_f0, targets.log_f0) + ad.sum_squared_error(pred.c0, targets.c0)
    kl = kl_divergence(post)
    lam3 = weights.kl if kl_weight is None else kl_weight
    total = weights.duration * dur + weights.f0c0 * f0c0 + lam3 * kl
    return LossTerms(total, dur, f0c0, kl)


class Adam:
    def __init__(self, store, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.store, self.lr, self.beta1, self.beta2, self.eps = store, lr, beta1, beta2, eps
        self.m = {n: np.zeros_like(p.value) for n, p in store.items()}
        self.v = {n: np.zeros_like(p.value) for n, p in store.items()}
        self.t = 0

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for n, p in self.store.items():
            g = grads[n]
            m, v = self.m[n], self.v[n]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.value = p.value - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state(self) -> dict[str, np.ndarray]:
        out = {}
        for n in self.m:
            out[f"m/{n}"] = self.m[n]
            out[f"v/{n}"] = self.v[n]
        out["t"] = np.array([float(self.t)])
        return out

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        for n in self.m:
            self.m[n] = np.array(state[f"m/{n}"])
            self.v[n] = np.array(state[f"v/{n}"])
        self.t = int(state["t"][0])


def clip_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


@dataclass
class TrainConfig:
    batch_size: int = 4
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    clip_norm: float = 5.0
    max_steps: int = 20000
    eval_interval: int = 2000
    eval_subset: int = 200
    checkpoint_interval: int = 0
    seed: int = 0
    lambda_duration: float = 1.0
    lambda_f0c0: float = 1.0
    lambda_kl: float = 1.0
    kl_warmup_steps: int = 2000
    init_output_bias: bool = True

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")

    @property
    def weights(self) -> LossWeights:
        return LossWeights(self.lambda_duration, self.lambda_f0c0, self.lambda_kl, self.kl_warmup_steps)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


def parse_config_text(text: str) -> dict[str, str]:
    """Parse flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def coerce_config(cls, raw: dict[str, str]) -> dict:
    types = {f.name: f.type for f in fields(cls)}
    out = {}
    for key, value in raw.items():
        if key not in types:
            raise ValueError(f"unknown config key {key!r}")
        t = types[key]
        if t in (bool, "bool"):
            if str(value).lower() not in ("1", "0", "true", "false", "yes", "no"):
                raise ValueError(f"{key}: expected a boolean, got {value!r}")
            out[key] = str(value).lower() in ("1", "true", "yes")
        elif t in (int, "int"):
            out[key] = int(value)
        else:
            out[key] = float(value)
    return out


def noise_seed(seed: int, step: int, member: int) -> list[int]:
    return [seed, 2, step, member]


def batch_indices(n: int, step: int, batch_size: int, seed: int) -> np.ndarray:
    """Indices for ``step``; each epoch is a fresh permutation from the seed."""
    per_epoch = max(1, n // batch_size)
    epoch, pos = divmod(step, per_epoch)
    perm = np.random.default_rng([seed, 1, epoch]).permutation(n)
    return perm[pos * batch_size:(pos + 1) * batch_size]


def train_step(model, batch: Sequence[Utterance], optimizer: Adam, config: TrainConfig, step: int) -> dict:
    """One averaged-gradient update over ``batch``; returns scalar logs."""
    weights = config.weights
    kl_weight = weights.kl_at(step)
    store = model.store
    store.zero_grad()
    totals = {"total": 0.0, "dur_l2": 0.0, "f0c0_l2": 0.0, "kl": 0.0}
    for member, u in enumerate(batch):
        noise = np.random.default_rng(noise_seed(config.seed, step, member)).standard_normal(model.embedding_dim)
        try:
            pred, post = model.forward(u.tree, u.targets, noise)
            terms = loss(pred, u.targets, post, weights, kl_weight)
        except NonFiniteError as e:
            raise TrainingError(f"non-finite forward pass on utterance {u.utterance_id} at step {step}: {e}") from e
        s = terms.scalars()
        if not all(np.isfinite(v) for v in s.values()):
            raise TrainingError(f"non-finite loss on utterance {u.utterance_id} at step {step}: {s}")
        terms.total.backward()
        for k in totals:
            totals[k] += s[k] / len(batch)
    grads = store.grads()
    for g in grads.values():
        g /= len(batch)
    totals["grad_norm"] = clip_global_norm(grads, config.clip_norm)
    optimizer.step(grads)
    store.zero_grad()
    totals["kl_weight"] = kl_weight
    return totals


def corpus_means(utterances: Sequence[Utterance]) -> tuple[float, float, float]:
    lf0 = np.concatenate([u.targets.log_f0 for u in utterances])
    c0 = np.concatenate([u.targets.c0 for u in utterances])
    dur = np.concatenate([u.targets.durations for u in utterances])
    return float(lf0.mean()), float(c0.mean()), float(dur.mean())


def make_optimizer(model, config: TrainConfig) -> Adam:
    return Adam(model.store, config.learning_rate, config.beta1, config.beta2, config.adam_eps)


def eval_row(model, eval_set: Sequence[Utterance], seed: int) -> dict:
    row = {}
    for mode in ("encoded", "zero", "random"):
        rep = evaluate(model, eval_set, mode, seed)
        for k, v in rep.to_dict().items():
            if k != "utterances":
                row[f"eval_{mode}_{k}"] = v
    return row


def train_loop(model, train: Sequence[Utterance], eval_set: Sequence[Utterance], config: TrainConfig,
               out_dir: str | Path, resume: str | Path | None = None, log_every: int = 100) -> dict:
    """Train, writing ``metrics.jsonl``, ``last.ckpt`` and ``best.ckpt`` under ``out_dir``.

    Batches and sampling noise depend only on (seed, step), so a resumed run
    replays exactly the updates an uninterrupted run would make.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if not train:
        raise ValueError("empty training split")
    optimizer = make_optimizer(model, config)
    start, best = 0, float("inf")
    metrics_path = out / "metrics.jsonl"
    if resume is not None:
        loaded, meta, opt_state = load_model(resume)
        model.store.load(loaded.store.values())
        optimizer.load_state(opt_state)
        start = int(meta["step"])
        best = float(meta.get("best_eval_logf0_rmse", best))
        _truncate_metrics(metrics_path, start)
    else:
        metrics_path.write_text("")
        if config.init_output_bias:
            set_output_bias(model, *corpus_means(train))

    eval_subset = list(eval_set)[: config.eval_subset] if config.eval_subset > 0 else list(eval_set)

    def checkpoint(path, step):
        meta = {"step": step, "train_config": config.to_dict(), "best_eval_logf0_rmse": best}
        save_model(path, model, meta, optimizer.state())

    with metrics_path.open("a") as fh:
        for step in range(start, config.max_steps):
            idx = batch_indices(len(train), step, config.batch_size, config.seed)
            logs = train_step(model, [train[i] for i in idx], optimizer, config, step)
            done = step + 1
            row = {"step": done, **logs}
            if eval_subset and config.eval_interval > 0 and (done % config.eval_interval == 0 or done == config.max_steps):
                row.update(eval_row(model, eval_subset, config.seed))
                if row["eval_encoded_logf0_rmse"] < best:
                    best = row["eval_encoded_logf0_rmse"]
                    row["best"] = True
                    checkpoint(out / "best.ckpt", done)
                log.info("step %d eval enc/zero/rnd logF0 RMSE %.4f / %.4f / %.4f", done,
                         row["eval_encoded_logf0_rmse"], row["eval_zero_logf0_rmse"], row["eval_random_logf0_rmse"])
            elif done % log_every == 0:
                log.info("step %d total %.3f dur %.3f f0c0 %.3f kl %.3f", done, logs["total"], logs["dur_l2"],
                         logs["f0c0_l2"], logs["kl"])
            fh.write(json.dumps(row, sort_keys=True) + "\n")
            if config.checkpoint_interval > 0 and done % config.checkpoint_interval == 0:
                fh.flush()
                checkpoint(out / f"step{done:07d}.ckpt", done)
    checkpoint(out / "last.ckpt", max(config.max_steps, start))
    if not (out / "best.ckpt").exists():
        checkpoint(out / "best.ckpt", max(config.max_steps, start))
    return {"steps": config.max_steps, "best_eval_logf0_rmse": best}


def _truncate_metrics(path: Path, step: int) -> None:
    if not path.exists():
        return
    rows = [line for line in path.read_text().splitlines() if line and json.loads(line)["step"] <= step]
    path.write_text("".join(r + "\n" for r in rows))
