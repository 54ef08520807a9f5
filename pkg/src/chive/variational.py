"""Gaussian bottleneck: projection, reparameterised sampling, KL term."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .nn import Linear, ParameterStore


@dataclass
class GaussianPosterior:
    mu: Tensor
    log_var: Tensor

    @property
    def dim(self) -> int:
        return self.mu.shape[0]

    @property
    def sigma(self) -> np.ndarray:
        return np.exp(0.5 * self.log_var.value)


class VariationalLayer:
    def __init__(self, store: ParameterStore, name: str, n_in: int, dim: int, rng: np.random.Generator):
        self.dim = dim
        self.proj = Linear(store, f"{name}.proj", n_in, 2 * dim, rng)

    def project(self, summary) -> GaussianPosterior:
        out = self.proj(summary)
        return GaussianPosterior(out[: self.dim], out[self.dim:])


def sample(post: GaussianPosterior, noise) -> Tensor:
    """Reparameterised draw ``mu + exp(log_var / 2) * noise``."""
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape != post.mu.shape:
        raise ValueError(f"noise shape {noise.shape} != posterior {post.mu.shape}")
    return post.mu + ad.exp(0.5 * post.log_var) * noise


def kl_divergence(post: GaussianPosterior) -> Tensor:
    """KL(N(mu, sigma^2) || N(0, I)) summed over dimensions."""
    mu, lv = post.mu, post.log_var
    return 0.5 * ad.sum(ad.square(mu) + ad.exp(lv) - 1.0 - lv)


def kl_closed_form(mu: np.ndarray, log_var: np.ndarray) -> float:
    return float(0.5 * np.sum(mu**2 + np.exp(log_var) - 1.0 - log_var))


def kl_monte_carlo(mu: np.ndarray, log_var: np.ndarray, n: int, rng: np.random.Generator,
                   chunk: int = 100_000) -> float:
    """Estimate E_q[log q(s) - log p(s)] by sampling from q."""
    sigma = np.exp(0.5 * log_var)
    total, done = 0.0, 0
    while done < n:
        m = min(chunk, n - done)
        eps = rng.standard_normal((m, mu.shape[0]))
        s = mu + sigma * eps
        log_q = -0.5 * (eps**2 + log_var + np.log(2 * np.pi))
        log_p = -0.5 * (s**2 + np.log(2 * np.pi))
        total += float(np.sum(log_q - log_p))
        done += m
    return total / n


def save_embedding(path: str | Path, embedding: np.ndarray) -> None:
    Path(path).write_text(json.dumps([float(x) for x in np.asarray(embedding).ravel()]))


def load_embedding(path: str | Path, dim: int | None = None) -> np.ndarray:
    values = json.loads(Path(path).read_text())
    if not isinstance(values, list) or not all(isinstance(v, (int, float)) for v in values):
        raise ValueError(f"{path}: embedding must be a JSON array of numbers")
    emb = np.array(values, dtype=np.float64)
    if dim is not None and emb.shape[0] != dim:
        raise ValueError(f"{path}: embedding has {emb.shape[0]} values, model expects {dim}")
    return emb
