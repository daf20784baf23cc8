"""Projected gradient descent solvers and the latent-descent baseline.

Two ambient-space solvers are provided: one for unknown links, which descends
the linear least-squares loss (1/2n)||y - A x||^2, and one for known monotone
links, which descends the nonlinear loss (1/2n)||y - f(A x)||^2. Both project
every iterate onto the decoder range. The baseline descends the linear loss
over the latent variable directly.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import genmodel, projection, sensing
from .errors import UnsupportedOperationError
from .measurement import link_deriv, link_eval
from .seeding import derive_seed

__all__ = [
    "SolverConfig",
    "Trajectory",
    "default_glasso_config",
    "default_nlasso_config",
    "loss_glasso",
    "grad_glasso",
    "loss_nlasso",
    "grad_nlasso",
    "pgd_glasso",
    "pgd_nlasso",
    "csgm_baseline",
    "mu1_of",
    "mu2_of",
    "trajectory_to_csv",
    "NU_DEFAULT",
    "ZETA_DEFAULT",
    "ZETA_THEORY",
    "ITERATIONS_DEFAULT",
]

NU_DEFAULT = 1.0          # recommended step size, unknown link
ZETA_DEFAULT = 0.2        # replication step size, known link
ZETA_THEORY = 0.23        # inside the contraction window (1/(2l^2), 3/(2u^2))
                          # for l=1.5, u=2.5; ZETA_DEFAULT sits outside it
ITERATIONS_DEFAULT = 30


@dataclass(frozen=True)
class SolverConfig:
    step_size: float
    iterations: int = ITERATIONS_DEFAULT
    projection: projection.ProjectionConfig = field(
        default_factory=projection.ProjectionConfig)
    x0_mode: str = "zero"  # zero | random_range_point | given
    x0: np.ndarray | None = None
    record_trajectory: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.step_size <= 0:
            raise ValueError("step size must be positive")
        if self.iterations < 1:
            raise ValueError("need at least one iteration")
        if self.x0_mode not in ("zero", "random_range_point", "given"):
            raise ValueError(f"unknown x0 mode {self.x0_mode!r}")
        if self.x0_mode == "given" and self.x0 is None:
            raise ValueError("x0_mode 'given' requires x0")


def default_glasso_config(seed=0, **kw):
    return SolverConfig(step_size=NU_DEFAULT, seed=seed, **kw)


def default_nlasso_config(seed=0, **kw):
    return SolverConfig(step_size=ZETA_DEFAULT, seed=seed, **kw)


@dataclass
class Trajectory:
    loss_values: list = field(default_factory=list)
    error_to_target: list = field(default_factory=list)
    contraction_ratios: list = field(default_factory=list)
    iterates: list | None = None


def loss_glasso(op, y_tilde, x):
    """(1/2n) ||y - A x||^2."""
    y_tilde = _check_measurements(op, y_tilde)
    r = sensing.apply(op, x) - y_tilde
    return float(r @ r) / (2.0 * op.n)


def grad_glasso(op, y_tilde, x):
    """(1/n) A^T (A x - y)."""
    y_tilde = _check_measurements(op, y_tilde)
    return sensing.adjoint_apply(op, sensing.apply(op, x) - y_tilde) / op.n


def loss_nlasso(op, y_tilde, link, x):
    """(1/2n) ||y - f(A x)||^2 for a differentiable link."""
    _require_differentiable(link)
    y_tilde = _check_measurements(op, y_tilde)
    r = link_eval(link, sensing.apply(op, x)) - y_tilde
    return float(r @ r) / (2.0 * op.n)


def grad_nlasso(op, y_tilde, link, x):
    """(1/n) A^T ((f(A x) - y) . f'(A x))."""
    _require_differentiable(link)
    y_tilde = _check_measurements(op, y_tilde)
    t = sensing.apply(op, x)
    return sensing.adjoint_apply(
        op, (link_eval(link, t) - y_tilde) * link_deriv(link, t)) / op.n


def pgd_glasso(op, y_tilde, decoder, cfg, target=None):
    """Projected gradient descent on the linear least-squares loss.

    Returns the final iterate (in the decoder range) and a trajectory whose
    error series, when a target is given, is measured against that target;
    callers following the unknown-link theory pass mu * x_star.
    """
    step = _make_glasso_step(op, y_tilde)
    return _pgd_loop(op, y_tilde, decoder, cfg, step,
                     lambda x: loss_glasso(op, y_tilde, x), target)


def pgd_nlasso(op, y_tilde, link, decoder, cfg, target=None):
    """Projected gradient descent on the nonlinear least-squares loss.

    Requires a differentiable link; the error target, when given, is the
    signal itself.
    """
    _require_differentiable(link)
    step = _make_nlasso_step(op, y_tilde, link)
    return _pgd_loop(op, y_tilde, decoder, cfg, step,
                     lambda x: loss_nlasso(op, y_tilde, link, x), target)


def csgm_baseline(op, y_tilde, decoder, cfg, target=None, warm_start=None):
    """Descent over the latent variable on the linear loss (no projection).

    Restart and optimizer settings are taken from cfg.projection; a latent
    warm start, when given, runs as restart 0. Returns the decoded best
    latent across restarts.
    """
    y_tilde = _check_measurements(op, y_tilde)
    pcfg = cfg.projection
    best = None
    for i in range(pcfg.restarts):
        rng = np.random.default_rng(derive_seed(cfg.seed, "csgm-restart", i))
        if i == 0 and warm_start is not None:
            z = np.asarray(warm_start, dtype=float).copy()
        elif pcfg.init == "zero":
            z = np.zeros(decoder.latent_dim)
        else:
            z = rng.standard_normal(decoder.latent_dim)
        z = projection._clip_ball(z, decoder.latent_radius)
        run = _csgm_descent(op, y_tilde, decoder, pcfg, z, target)
        if best is None or run[1] < best[1]:
            best = run
    z_best, _, traj = best
    if not cfg.record_trajectory:
        traj.iterates = None
    return genmodel.forward(decoder, z_best), traj


def mu1_of(nu, eps):
    """Contraction factor max{1 - nu (1-eps), nu (1+eps) - 1}."""
    _check_eps(eps)
    return max(1.0 - nu * (1.0 - eps), nu * (1.0 + eps) - 1.0)


def mu2_of(zeta, l, u, eps):
    """Contraction factor max{1 - zeta l^2 (1-eps), zeta u^2 (1+eps) - 1}."""
    _check_eps(eps)
    return max(1.0 - zeta * (l * l) * (1.0 - eps),
               zeta * (u * u) * (1.0 + eps) - 1.0)


def trajectory_to_csv(traj, path):
    """Rows (t, loss, error, ratio); ratio at row t is error_t / error_{t-1}."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "loss", "error", "ratio"])
        for t, loss in enumerate(traj.loss_values):
            err = traj.error_to_target[t] if traj.error_to_target else ""
            ratio = ""
            if traj.contraction_ratios and 1 <= t <= len(traj.contraction_ratios):
                ratio = traj.contraction_ratios[t - 1]
            w.writerow([t, _fmt(loss), _fmt(err), _fmt(ratio)])


def _fmt(v):
    return repr(float(v)) if v != "" else ""


def _check_eps(eps):
    if not 0.0 <= eps < 1.0:
        raise ValueError("eps must lie in [0, 1)")


def _require_differentiable(link):
    if not link.differentiable:
        raise UnsupportedOperationError(
            "the nonlinear least-squares path needs a differentiable link")


def _check_measurements(op, y):
    y = np.asarray(y, dtype=float)
    if y.shape != (op.n,):
        raise ValueError(f"expected measurement vector of length {op.n}")
    return y


def _make_glasso_step(op, y_tilde):
    def step(x, step_size):
        return x - step_size * (
            sensing.adjoint_apply(op, sensing.apply(op, x) - y_tilde) / op.n)
    return step


def _make_nlasso_step(op, y_tilde, link):
    def step(x, step_size):
        t = sensing.apply(op, x)
        g = sensing.adjoint_apply(
            op, (link_eval(link, t) - y_tilde) * link_deriv(link, t)) / op.n
        return x - step_size * g
    return step


def _pgd_loop(op, y_tilde, decoder, cfg, step_fn, loss_fn, target):
    y_tilde = _check_measurements(op, y_tilde)
    x = _initial_point(decoder, cfg, op.p)
    traj = Trajectory(iterates=[] if cfg.record_trajectory else None)
    _record(traj, x, loss_fn, target, cfg.record_trajectory)
    z_warm = None
    for t in range(cfg.iterations):
        v = step_fn(x, cfg.step_size)
        pres = projection.project(decoder, v, cfg.projection,
                                  seed=derive_seed(cfg.seed, "project", t),
                                  warm_start=z_warm)
        x, z_warm = pres.x_hat, pres.z_hat
        _record(traj, x, loss_fn, target, cfg.record_trajectory)
    _fill_ratios(traj)
    return x, traj


def _initial_point(decoder, cfg, p):
    if cfg.x0_mode == "zero":
        return np.zeros(p)
    if cfg.x0_mode == "given":
        x0 = np.asarray(cfg.x0, dtype=float)
        if x0.shape != (p,):
            raise ValueError(f"x0 must have length {p}")
        return x0.copy()
    z0 = genmodel.sample_latent(decoder, derive_seed(cfg.seed, "x0"))
    return genmodel.forward(decoder, z0)


def _record(traj, x, loss_fn, target, keep_iterate):
    traj.loss_values.append(loss_fn(x))
    if target is not None:
        traj.error_to_target.append(float(np.linalg.norm(x - target)))
    if keep_iterate:
        traj.iterates.append(x.copy())


def _fill_ratios(traj):
    errs = traj.error_to_target
    for a, b in zip(errs[:-1], errs[1:]):
        traj.contraction_ratios.append(b / a if a > 0 else float("nan"))


def _csgm_descent(op, y_tilde, decoder, pcfg, z0, target):
    r = decoder.latent_radius
    each_step = pcfg.ball_handling == "project_each_step"
    z = z0
    traj = Trajectory(iterates=[])

    def note(xv, loss):
        traj.loss_values.append(loss)
        if target is not None:
            traj.error_to_target.append(float(np.linalg.norm(xv - target)))
        traj.iterates.append(xv)

    fz = genmodel.forward(decoder, z)
    cur = loss_glasso(op, y_tilde, fz)
    best_z, best_loss = z.copy(), cur
    note(fz, cur)
    m = np.zeros_like(z)
    v = np.zeros_like(z)
    for t in range(1, pcfg.steps + 1):
        grad = genmodel.vjp(
            decoder, z, sensing.adjoint_apply(op, sensing.apply(op, fz) - y_tilde) / op.n)
        if pcfg.optimizer == "gradient_descent":
            z = z - pcfg.learning_rate * grad
        elif pcfg.optimizer == "momentum":
            m = pcfg.momentum_beta * m + grad
            z = z - pcfg.learning_rate * m
        else:
            m = pcfg.adam_beta1 * m + (1 - pcfg.adam_beta1) * grad
            v = pcfg.adam_beta2 * v + (1 - pcfg.adam_beta2) * grad * grad
            mhat = m / (1 - pcfg.adam_beta1 ** t)
            vhat = v / (1 - pcfg.adam_beta2 ** t)
            z = z - pcfg.learning_rate * mhat / (np.sqrt(vhat) + pcfg.adam_eps)
        if each_step:
            z = projection._clip_ball(z, r)
        fz = genmodel.forward(decoder, z)
        cur = loss_glasso(op, y_tilde, fz)
        if each_step and cur < best_loss:
            best_z, best_loss = z.copy(), cur
        note(fz, cur)
    if not each_step:
        z = projection._clip_ball(z, r)
        cur = loss_glasso(op, y_tilde, genmodel.forward(decoder, z))
        if cur < best_loss:
            best_z, best_loss = z.copy(), cur
    _fill_ratios(traj)
    return best_z, best_loss, traj
