"""Approximate projection onto the decoder range by latent-space descent.

The projection minimizes 0.5 ||G(z) - x||^2 over the latent ball with a
first-order optimizer and random restarts, returning the best feasible point
seen. A closed-form path exists for single-layer decoders with orthonormal
columns and serves as the exact-projection oracle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import genmodel
from .errors import UnsupportedOperationError
from .seeding import derive_seed

__all__ = [
    "ProjectionConfig",
    "ProjectionResult",
    "default_projection_config",
    "celeba_scale_projection_config",
    "project",
    "project_exact_linear",
    "projection_to_json",
    "projection_from_json",
]

OPTIMIZERS = ("gradient_descent", "momentum", "adam_style")
BALL_HANDLING = ("project_each_step", "project_at_end")
INITS = ("zero", "gaussian")
METHODS = ("descent", "exact_linear")


@dataclass(frozen=True)
class ProjectionConfig:
    steps: int = 200
    learning_rate: float = 0.03
    restarts: int = 1
    optimizer: str = "adam_style"
    momentum_beta: float = 0.9
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    init: str = "gaussian"
    ball_handling: str = "project_each_step"
    method: str = "descent"  # "exact_linear" routes to the analytic oracle

    def __post_init__(self):
        if self.steps < 1 or self.restarts < 1:
            raise ValueError("steps and restarts must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.ball_handling not in BALL_HANDLING:
            raise ValueError(f"unknown ball handling {self.ball_handling!r}")
        if self.init not in INITS:
            raise ValueError(f"unknown init {self.init!r}")
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")


def default_projection_config(restarts=1):
    """Adam with 200 steps at rate 0.03 (small-decoder setting)."""
    return ProjectionConfig(steps=200, learning_rate=0.03, restarts=restarts)


def celeba_scale_projection_config(restarts=1):
    """Adam with 100 steps at rate 0.1 (large-decoder setting)."""
    return ProjectionConfig(steps=100, learning_rate=0.1, restarts=restarts)


@dataclass(frozen=True)
class ProjectionResult:
    z_hat: np.ndarray
    x_hat: np.ndarray
    residual: float
    restart_index: int
    out_of_ball_steps: int


def project(decoder, x, cfg, seed, warm_start=None):
    """Approximate P_K(x): best feasible point over cfg.restarts descents.

    A warm start, when given, runs as restart 0; remaining restarts draw
    their initial latent per cfg.init. Ties in residual go to the lowest
    restart index.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (decoder.ambient_dim,):
        raise ValueError(f"expected ambient vector of length {decoder.ambient_dim}")
    if cfg.method == "exact_linear":
        return project_exact_linear(decoder, x)
    best = None
    for i in range(cfg.restarts):
        rng = np.random.default_rng(derive_seed(seed, "restart", i))
        if i == 0 and warm_start is not None:
            z0 = np.asarray(warm_start, dtype=float).copy()
        elif cfg.init == "zero":
            z0 = np.zeros(decoder.latent_dim)
        else:
            z0 = rng.standard_normal(decoder.latent_dim)
        z0 = _clip_ball(z0, decoder.latent_radius)
        z, res, oob = _descend(decoder, x, cfg, z0)
        if best is None or res < best[1]:
            best = (z, res, oob, i)
    z, res, oob, idx = best
    x_hat = genmodel.forward(decoder, z)
    return ProjectionResult(z, x_hat, float(np.linalg.norm(x_hat - x)), idx, oob)


def project_exact_linear(decoder, x):
    """Exact projection for a single-layer orthonormal-column decoder.

    The minimizer is W^T x, radially clipped into the latent ball.
    """
    w = _orthonormal_weight(decoder)
    x = np.asarray(x, dtype=float)
    if x.shape != (decoder.ambient_dim,):
        raise ValueError(f"expected ambient vector of length {decoder.ambient_dim}")
    z = _clip_ball(w.T @ x, decoder.latent_radius)
    x_hat = genmodel.forward(decoder, z)
    return ProjectionResult(z, x_hat, float(np.linalg.norm(x_hat - x)), 0, 0)


def projection_to_json(cfg):
    doc = {
        "steps": cfg.steps,
        "lr": cfg.learning_rate,
        "restarts": cfg.restarts,
        "optimizer": cfg.optimizer,
        "ball_handling": cfg.ball_handling,
    }
    if cfg.method != "descent":
        doc["method"] = cfg.method
    if cfg.init != "gaussian":
        doc["init"] = cfg.init
    return doc


def projection_from_json(doc):
    return ProjectionConfig(
        steps=doc.get("steps", 200),
        learning_rate=doc.get("lr", 0.03),
        restarts=doc.get("restarts", 1),
        optimizer=doc.get("optimizer", "adam_style"),
        init=doc.get("init", "gaussian"),
        ball_handling=doc.get("ball_handling", "project_each_step"),
        method=doc.get("method", "descent"),
    )


def _descend(decoder, x, cfg, z0):
    """One descent; returns the best feasible (z, residual) seen and the
    number of steps whose raw update left the latent ball."""
    r = decoder.latent_radius
    each_step = cfg.ball_handling == "project_each_step"
    z = z0
    fz = genmodel.forward(decoder, z)
    best_z, best_res = z.copy(), float(np.linalg.norm(fz - x))
    m = np.zeros_like(z)
    v = np.zeros_like(z)
    oob = 0
    for t in range(1, cfg.steps + 1):
        grad = genmodel.vjp(decoder, z, fz - x)
        if cfg.optimizer == "gradient_descent":
            z = z - cfg.learning_rate * grad
        elif cfg.optimizer == "momentum":
            m = cfg.momentum_beta * m + grad
            z = z - cfg.learning_rate * m
        else:
            m = cfg.adam_beta1 * m + (1 - cfg.adam_beta1) * grad
            v = cfg.adam_beta2 * v + (1 - cfg.adam_beta2) * grad * grad
            mhat = m / (1 - cfg.adam_beta1 ** t)
            vhat = v / (1 - cfg.adam_beta2 ** t)
            z = z - cfg.learning_rate * mhat / (np.sqrt(vhat) + cfg.adam_eps)
        if np.linalg.norm(z) > r:
            oob += 1
            if each_step:
                z = _clip_ball(z, r)
        fz = genmodel.forward(decoder, z)
        if each_step:
            res = float(np.linalg.norm(fz - x))
            if res < best_res:
                best_z, best_res = z.copy(), res
    if not each_step:
        z = _clip_ball(z, r)
        res = float(np.linalg.norm(genmodel.forward(decoder, z) - x))
        if res < best_res:
            best_z, best_res = z.copy(), res
    return best_z, best_res, oob


def _clip_ball(z, r):
    nrm = np.linalg.norm(z)
    if nrm > r:
        return z * (r / nrm)
    return z


def _orthonormal_weight(decoder):
    if (len(decoder.layers) != 1 or decoder.activation != "identity"
            or np.any(decoder.layers[0][1] != 0.0)):
        raise UnsupportedOperationError(
            "exact projection needs a single linear layer with zero bias")
    w = decoder.layers[0][0]
    gram = w.T @ w
    if not np.allclose(gram, np.eye(w.shape[1]), atol=1e-10):
        raise UnsupportedOperationError(
            "exact projection needs orthonormal columns")
    return w
