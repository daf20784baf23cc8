"""Random measurement operators with forward and adjoint application.

Two kinds are supported: a dense matrix with i.i.d. standard normal entries,
and a row-subsampled Gaussian circulant with random column sign flips,
A = R_Omega circ(g) D_xi. The operator stores A unnormalized; 1/n and
1/sqrt(n) factors live at the call sites that need them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .seeding import derive_seed

__all__ = [
    "SensingOperator",
    "sensing_new",
    "apply",
    "adjoint_apply",
    "materialize",
    "spectral_norm_estimate",
    "row",
    "sensing_to_json",
    "sensing_from_json",
]

KINDS = ("dense_gaussian", "partial_circulant")

MATERIALIZE_GUARD = 10_000_000  # refuse dense materialization above n*p cells


@dataclass(frozen=True)
class SensingOperator:
    kind: str
    n: int
    p: int
    seed: int
    matrix: np.ndarray | None = None  # dense payload
    gen: np.ndarray | None = None     # circulant generator g (length p)
    signs: np.ndarray | None = None   # +-1 column flips xi (length p)
    omega: np.ndarray | None = None   # sorted row subset, |omega| = n

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown operator kind {self.kind!r}")
        if self.n < 1 or self.p < 1:
            raise ValueError("operator dimensions must be positive")
        if self.kind == "partial_circulant":
            if len(self.omega) != self.n or len(np.unique(self.omega)) != self.n:
                raise ValueError("omega must hold n distinct indices")


def sensing_new(kind, n, p, seed):
    """Draw a fresh operator of the given kind from the seed."""
    rng = np.random.default_rng(seed)
    if kind == "dense_gaussian":
        return SensingOperator(kind, int(n), int(p),
                               int(seed), matrix=rng.standard_normal((n, p)))
    if kind == "partial_circulant":
        if n > p:
            raise ValueError("partial_circulant requires n <= p")
        g = rng.standard_normal(p)
        xi = rng.choice([-1.0, 1.0], size=p)
        omega = np.sort(rng.choice(p, size=n, replace=False))
        return SensingOperator(kind, int(n), int(p), int(seed),
                               gen=g, signs=xi, omega=omega)
    raise ValueError(f"unknown operator kind {kind!r}")


def apply(op, x):
    """A x. Circulant path: cyclic convolution then row subsampling."""
    x = np.asarray(x, dtype=float)
    if x.shape != (op.p,):
        raise ValueError(f"expected vector of length {op.p}")
    if op.kind == "dense_gaussian":
        return op.matrix @ x
    full = _cyclic_convolve(op.gen, op.signs * x)
    return full[op.omega]


def adjoint_apply(op, v):
    """A^T v. Circulant path: zero-fill on omega, correlate with g, flip signs."""
    v = np.asarray(v, dtype=float)
    if v.shape != (op.n,):
        raise ValueError(f"expected vector of length {op.n}")
    if op.kind == "dense_gaussian":
        return op.matrix.T @ v
    w = np.zeros(op.p)
    w[op.omega] = v
    return op.signs * _cyclic_correlate(op.gen, w)


def materialize(op):
    """Dense n x p matrix realizing the operator; test oracle only."""
    if op.n * op.p > MATERIALIZE_GUARD:
        raise ValueError("materialize refused: n*p exceeds guard")
    if op.kind == "dense_gaussian":
        return op.matrix.copy()
    cols = np.empty((op.n, op.p))
    e = np.zeros(op.p)
    for j in range(op.p):
        e[j] = 1.0
        cols[:, j] = apply(op, e)
        e[j] = 0.0
    return cols


def row(op, i):
    """Sensing vector a_i, i.e. row i of A."""
    e = np.zeros(op.n)
    e[i] = 1.0
    return adjoint_apply(op, e)


def spectral_norm_estimate(op, tol=1e-8, max_iter=10_000):
    """||A|| by power iteration on A^T A."""
    rng = np.random.default_rng(derive_seed(op.seed, "specnorm"))
    v = rng.standard_normal(op.p)
    v /= np.linalg.norm(v)
    sigma = 0.0
    for _ in range(max_iter):
        u = apply(op, v)
        sigma_new = np.linalg.norm(u)
        if sigma_new == 0.0:
            return 0.0
        v = adjoint_apply(op, u)
        v /= np.linalg.norm(v)
        if abs(sigma_new - sigma) <= tol * sigma_new:
            return float(np.linalg.norm(apply(op, v)))
        sigma = sigma_new
    return float(sigma)


def sensing_to_json(op):
    return {"kind": op.kind, "n": op.n, "p": op.p, "seed": op.seed}


def sensing_from_json(doc):
    return sensing_new(doc["kind"], doc["n"], doc["p"], doc["seed"])


def _cyclic_convolve(g, x):
    # circ(g) x, with (circ(g))_{ij} = g_{(i-j) mod p}
    p = len(g)
    return np.fft.irfft(np.fft.rfft(g) * np.fft.rfft(x), n=p)


def _cyclic_correlate(g, w):
    # circ(g)^T w
    p = len(g)
    return np.fft.irfft(np.conj(np.fft.rfft(g)) * np.fft.rfft(w), n=p)
