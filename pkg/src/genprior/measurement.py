"""Link functions, noise, and observation synthesis.

Covers the unknown-link path (y_i = f_i(a_i^T x*), possibly randomized f, unit
norm x*) and the known-link path (y_i = f(a_i^T x*) + eta_i with monotone
differentiable f). Each link carries its derivative bounds when applicable,
its gain mu = E[f(g) g] for standard normal g, and a cached sub-Gaussian-norm
estimate psi of f(g).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from . import sensing
from .errors import UnsupportedOperationError
from .seeding import derive_seed

__all__ = [
    "LinkModel",
    "Observation",
    "linear_link",
    "shifted_cosine_link",
    "sign_dithered_link",
    "custom_monotone_link",
    "link_eval",
    "link_deriv",
    "observe_sim",
    "observe_known",
    "corrupt",
    "mu_of_link",
    "mu_mc_estimate",
    "psi_estimate",
    "observation_to_csv",
]

QUAD_NODES = 200          # Gauss-Hermite nodes for deterministic links
MU_MC_SAMPLES = 1_000_000  # Monte Carlo budget for randomized links
PSI_DEFAULT_SAMPLES = 10_000
_MU_MC_SEED = derive_seed(0, "mu-of-link-mc")
_PSI_SEED = derive_seed(0, "psi-cache")


@dataclass(frozen=True)
class LinkModel:
    kind: str
    deriv_lo: float | None = None   # l, present iff differentiable
    deriv_hi: float | None = None   # u
    sigma: float = 0.0              # additive noise, known-link model only
    sigma_d: float = 0.0            # dither std for the sign link
    tau: float = 0.0                # adversarial corruption budget
    mu: float = float("nan")
    mu_stderr: float = 0.0
    psi: float = float("nan")
    f: object = None                # callables for the custom kind
    fprime: object = None

    @property
    def differentiable(self):
        return self.kind != "sign_dithered"


@dataclass(frozen=True)
class Observation:
    y_tilde: np.ndarray
    y_clean: np.ndarray
    x_star: np.ndarray
    z_star: np.ndarray | None
    seeds: dict = field(default_factory=dict)
    tau_used: float = 0.0

    def __post_init__(self):
        n = len(self.y_clean)
        gap = np.linalg.norm(self.y_tilde - self.y_clean) / np.sqrt(n)
        if gap > self.tau_used + 1e-12:
            raise ValueError("corruption exceeds the declared tau budget")


def linear_link(sigma=0.0, tau=0.0):
    """Identity link f(t) = t, l = u = 1."""
    return _finish(LinkModel("linear", 1.0, 1.0, sigma=sigma, tau=tau))


def shifted_cosine_link(sigma=0.0, tau=0.0):
    """f(t) = 2t + 0.5 cos(t); monotone with f' in [1.5, 2.5]."""
    return _finish(LinkModel("shifted_cosine", 1.5, 2.5, sigma=sigma, tau=tau))


def sign_dithered_link(sigma_d, tau=0.0):
    """Dithered one-bit link f(t) = sign(t + e), e ~ N(0, sigma_d^2).

    Outputs are in {-1, +1} (ties at zero map to +1). Not differentiable, so
    only the unknown-link solver applies.
    """
    if sigma_d < 0:
        raise ValueError("dither std must be nonnegative")
    return _finish(LinkModel("sign_dithered", sigma_d=float(sigma_d), tau=tau))


def custom_monotone_link(f, fprime, lo, hi, sigma=0.0, tau=0.0,
                         grid=None):
    """User-supplied (f, f') with declared derivative bounds.

    The declared bounds are verified on a grid at construction; a violation
    is rejected rather than trusted.
    """
    if not (0 < lo <= hi):
        raise ValueError("need 0 < lo <= hi")
    if grid is None:
        grid = np.linspace(-10.0, 10.0, 2001)
    d = np.asarray([fprime(t) for t in grid], dtype=float)
    if np.any(d < lo - 1e-9) or np.any(d > hi + 1e-9):
        raise ValueError("declared derivative bounds violated on the check grid")
    vals = np.asarray([f(t) for t in grid], dtype=float)
    if np.any(np.diff(vals) <= 0):
        raise ValueError("custom link is not strictly increasing on the check grid")
    return _finish(LinkModel("custom_monotone", float(lo), float(hi),
                             sigma=sigma, tau=tau, f=f, fprime=fprime))


def link_eval(link, t, seed=None):
    """f(t), elementwise over arrays. The sign link draws its dither from seed."""
    scalar = np.ndim(t) == 0
    t = np.asarray(t, dtype=float)
    if link.kind == "linear":
        out = t + 0.0
    elif link.kind == "shifted_cosine":
        out = 2.0 * t + 0.5 * np.cos(t)
    elif link.kind == "sign_dithered":
        if seed is None:
            raise ValueError("sign_dithered link requires a seed")
        e = np.random.default_rng(seed).standard_normal(t.shape) * link.sigma_d
        out = np.where(t + e >= 0.0, 1.0, -1.0)
    elif link.kind == "custom_monotone":
        out = np.vectorize(link.f, otypes=[float])(t) + 0.0
    else:
        raise ValueError(f"unknown link kind {link.kind!r}")
    return float(out) if scalar else out


def link_deriv(link, t):
    """f'(t); rejected for non-differentiable kinds."""
    if not link.differentiable:
        raise UnsupportedOperationError("sign link has no derivative")
    scalar = np.ndim(t) == 0
    t = np.asarray(t, dtype=float)
    if link.kind == "linear":
        out = np.ones_like(t)
    elif link.kind == "shifted_cosine":
        out = 2.0 - 0.5 * np.sin(t)
    else:
        out = np.vectorize(link.fprime, otypes=[float])(t) + 0.0
    return float(out) if scalar else out


def observe_sim(link, op, x_star, seed):
    """Unknown-link observations y_i = f_i(a_i^T x*), then corruption.

    The signal must have unit norm (its scale is not identifiable under an
    unknown link); per-sample link randomness is i.i.d.
    """
    x_star = np.asarray(x_star, dtype=float)
    if abs(np.linalg.norm(x_star) - 1.0) > 1e-9:
        raise ValueError("observe_sim requires a unit-norm signal")
    t = sensing.apply(op, x_star)
    link_seed = derive_seed(seed, "link")
    y_clean = link_eval(link, t, seed=link_seed)
    corrupt_seed = derive_seed(seed, "corrupt")
    y_tilde = corrupt(y_clean, link.tau, corrupt_seed)
    return Observation(y_tilde, y_clean, x_star, None,
                       seeds={"observe": int(seed), "link": link_seed,
                              "corrupt": corrupt_seed},
                       tau_used=link.tau)


def observe_known(link, op, x_star, seed):
    """Known-link observations y_i = f(a_i^T x*) + eta_i, then corruption.

    No norm constraint on the signal. eta_i are i.i.d. N(0, sigma^2).
    """
    if not link.differentiable:
        raise UnsupportedOperationError("known-link model needs a differentiable link")
    x_star = np.asarray(x_star, dtype=float)
    t = sensing.apply(op, x_star)
    noise_seed = derive_seed(seed, "noise")
    eta = np.random.default_rng(noise_seed).standard_normal(op.n) * link.sigma
    y_clean = link_eval(link, t) + eta
    corrupt_seed = derive_seed(seed, "corrupt")
    y_tilde = corrupt(y_clean, link.tau, corrupt_seed)
    return Observation(y_tilde, y_clean, x_star, None,
                       seeds={"observe": int(seed), "noise": noise_seed,
                              "corrupt": corrupt_seed},
                       tau_used=link.tau)


def corrupt(y, tau, seed):
    """Add a random-direction perturbation of l2 norm exactly tau * sqrt(n)."""
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    y = np.asarray(y, dtype=float)
    if tau == 0.0:
        return y.copy()
    rng = np.random.default_rng(seed)
    d = rng.standard_normal(len(y))
    d *= tau * np.sqrt(len(y)) / np.linalg.norm(d)
    return y + d


def mu_of_link(link):
    """Link gain mu = E[f(g) g] for g ~ N(0, 1).

    Deterministic kinds integrate by Gauss-Hermite quadrature; the randomized
    sign kind is estimated by Monte Carlo with a fixed internal seed (standard
    error available via mu_mc_estimate).
    """
    if link.kind == "sign_dithered":
        est, _ = mu_mc_estimate(link, MU_MC_SAMPLES, _MU_MC_SEED)
        return est
    nodes, weights = np.polynomial.hermite_e.hermegauss(QUAD_NODES)
    vals = link_eval(link, nodes) * nodes
    return float(weights @ vals / np.sqrt(2.0 * np.pi))


def mu_mc_estimate(link, samples, seed):
    """Monte Carlo estimate of E[f(g) g] with its standard error."""
    g = np.random.default_rng(derive_seed(seed, "g")).standard_normal(samples)
    y = link_eval(link, g, seed=derive_seed(seed, "e"))
    vals = y * g
    return float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(samples))


def psi_estimate(link, samples=PSI_DEFAULT_SAMPLES, seed=0):
    """Empirical sub-Gaussian norm of f(g): max over q in 1..10 of
    q^{-1/2} (E|f(g)|^q)^{1/q}. Diagnostic only."""
    if samples < 10_000:
        raise ValueError("need at least 1e4 samples")
    g = np.random.default_rng(derive_seed(seed, "g")).standard_normal(samples)
    vals = np.abs(link_eval(link, g, seed=derive_seed(seed, "e")))
    best = 0.0
    for q in range(1, 11):
        m = float(np.mean(vals ** q)) ** (1.0 / q)
        best = max(best, m / np.sqrt(q))
    return best


def observation_to_csv(obs, path):
    """Dump measurements as rows (i, y_clean, y_tilde)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "y_clean", "y_tilde"])
        for i, (yc, yt) in enumerate(zip(obs.y_clean, obs.y_tilde)):
            w.writerow([i, repr(float(yc)), repr(float(yt))])


def _finish(link):
    """Fill the cached mu / psi fields of a freshly built link."""
    if link.kind == "sign_dithered":
        mu, stderr = mu_mc_estimate(link, MU_MC_SAMPLES, _MU_MC_SEED)
    else:
        mu, stderr = mu_of_link(link), 0.0
    psi = psi_estimate(link, PSI_DEFAULT_SAMPLES, _PSI_SEED)
    return replace(link, mu=mu, mu_stderr=stderr, psi=psi)
