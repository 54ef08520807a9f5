"""Finite-difference verification of reverse-mode gradients."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .autodiff import NonFiniteError, Tensor, extended_precision, no_grad
from .nn import ParameterStore


@dataclass
class GradCheckResult:
    max_relative_error: float
    worst: tuple[str, tuple[int, ...]] | None
    checked: int
    errors: list[float] = field(default_factory=list, repr=False)


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(1e-8, abs(analytic) + abs(numeric))


def grad_check(
    loss_fn: Callable[[], Tensor],
    store: ParameterStore,
    epsilon: float = 1e-4,
    samples: int = 3,
    rng: np.random.Generator | None = None,
    extended: bool = True,
) -> GradCheckResult:
    """Compare analytic gradients with central differences.

    ``loss_fn`` must rebuild the graph from the current parameter values and
    be deterministic (any sampling noise is fixed by the caller). Up to
    ``samples`` coordinates are drawn from every parameter tensor.

    With ``extended`` the perturbed losses are evaluated in 80-bit precision,
    which keeps cancellation noise well below small gradient entries. The
    default step is deliberately large: truncation error is O(eps^2) while
    round-off in the summed loss grows as 1/eps, and entries of ~1e-9 are
    common in the recurrent weights.
    """
    rng = rng or np.random.default_rng(0)
    store.zero_grad()
    loss = loss_fn()
    if not np.isfinite(loss.value).all():
        raise NonFiniteError("loss is not finite")
    loss.backward()
    analytic = store.grads()

    worst, worst_err, errors = None, 0.0, []
    for name, p in store.items():
        size = p.value.size
        picks = rng.choice(size, size=min(samples, size), replace=False)
        for flat in picks:
            idx = np.unravel_index(int(flat), p.value.shape)
            orig = p.value[idx]
            ctx = extended_precision() if extended else no_grad()
            with ctx:
                p.value[idx] = orig + epsilon
                hi = p.value[idx]
                up = loss_fn().value
                p.value[idx] = orig - epsilon
                lo = p.value[idx]
                down = loss_fn().value
            p.value[idx] = orig
            numeric = float((up - down) / (np.longdouble(hi) - np.longdouble(lo)))
            err = relative_error(float(analytic[name][idx]), numeric)
            errors.append(err)
            if err >= worst_err:
                worst_err, worst = err, (name, tuple(int(i) for i in idx))
    store.zero_grad()
    return GradCheckResult(worst_err, worst, len(errors), errors)


@dataclass
class ObjectiveCheck:
    kind: str
    trees: int
    word_counts: list[int]
    max_relative_error: float
    checked: int
    per_tree: list[float]

    def to_dict(self) -> dict:
        return {"model": self.kind, "trees": self.trees, "word_counts": self.word_counts,
                "max_relative_error": self.max_relative_error, "coordinates_checked": self.checked,
                "per_tree": self.per_tree}


def check_objective(kind: str, trees: int = 20, seed: int = 0, hidden: int = 8, embedding: int = 4,
                    words: tuple[int, int] = (1, 6), epsilon: float = 1e-4, samples: int = 1) -> ObjectiveCheck:
    """Gradient-check the full training objective on ``trees`` random utterances.

    Each tree gets a freshly initialised small model (readouts centred on the
    utterance's means so the loss stays O(10)), fixed sampling noise and the
    full KL weight. Phones are kept short to bound the cost of the
    extended-precision forward passes.
    """
    from .corpus import CorpusConfig, generate
    from .model import ModelConfig, build_model, set_output_bias
    from .structure import feature_dims
    from .training import LossWeights, corpus_means, loss

    corpus = generate(CorpusConfig(utterances=trees, seed=seed, words=words, duration_frames=(2, 5)))
    dims = feature_dims([corpus[0].tree])
    weights = LossWeights(kl_warmup_steps=0)
    per_tree, checked = [], 0
    for i, u in enumerate(corpus):
        model = build_model(ModelConfig(dims, kind=kind, hidden=hidden, embedding=embedding), seed=i)
        set_output_bias(model, *corpus_means([u]))
        noise = np.random.default_rng([seed, i]).standard_normal(embedding)

        def objective(model=model, u=u, noise=noise):
            pred, post = model.forward(u.tree, u.targets, noise)
            return loss(pred, u.targets, post, weights).total

        res = grad_check(objective, model.store, epsilon=epsilon, samples=samples,
                         rng=np.random.default_rng([seed, i, 1]))
        per_tree.append(res.max_relative_error)
        checked += res.checked
    return ObjectiveCheck(kind, trees, [len(u.tree.words) for u in corpus], max(per_tree), checked, per_tree)
