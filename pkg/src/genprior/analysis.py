"""Empirical verification of the recovery conditions and rate behavior.

Each checker samples a randomized scenario, counts violations of the
condition it tests, and returns a CheckReport. The rate experiment runs
Monte Carlo trials of a full solve across a grid of measurement counts and
aggregates medians against the k log(L r / delta) / n scaling.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import genmodel, sensing, solvers
from .errors import InsufficientDataError, UnsupportedOperationError
from .measurement import link_eval, observe_known, observe_sim
from .seeding import derive_seed

__all__ = [
    "CheckReport",
    "RateRow",
    "RateTable",
    "TrialRecord",
    "TrialSetup",
    "cosine_similarity",
    "tsrec_check",
    "jle_check",
    "wnu_check",
    "polarization_check",
    "mvt_check",
    "adjoint_check",
    "gradient_check",
    "contraction_fit",
    "plant_unit_signal",
    "SolveResult",
    "solve_instance",
    "run_trial",
    "rate_experiment",
    "report_to_json",
    "rate_table_to_csv",
    "rate_table_to_json",
]

WNU_SLACK = 0.05  # finite-sample allowance on the inner-product bound


@dataclass(frozen=True)
class CheckReport:
    name: str
    trials: int
    violations: int
    worst_margin: float
    params: dict = field(default_factory=dict)
    passed: bool = True

    def summary(self):
        state = "PASS" if self.passed else "FAIL"
        return (f"[{state}] {self.name}: {self.violations}/{self.trials} "
                f"violations, worst margin {self.worst_margin:.3e}")


def _finish_report(name, trials, violations, worst, params):
    allowed = params.get("allowed_violations", 0)
    params = dict(params)
    params.setdefault("allowed_violations", allowed)
    return CheckReport(name, trials, violations, float(worst), params,
                       passed=violations <= allowed)


def cosine_similarity(a, b):
    """<a, b> / (||a|| ||b||), clipped into [-1, 1]."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine similarity of a zero vector is undefined")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def tsrec_check(op, decoder, eps, delta, pairs, seed):
    """Two-sided restricted eigenvalue condition on decoder range points.

    For sampled range pairs x1, x2 the scaled operator must satisfy
    (1-eps)||x1-x2|| - delta <= ||A(x1-x2)||/sqrt(n) <= (1+eps)||x1-x2|| + delta.
    worst_margin reports the largest relative isometry defect
    | ||A d|| / (sqrt(n) ||d||) - 1 | seen (the empirical eps-hat).
    """
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    violations = 0
    worst = 0.0
    for i in range(pairs):
        z1 = genmodel.sample_latent(decoder, derive_seed(seed, "tsrec-a", i), inset=1.0)
        z2 = genmodel.sample_latent(decoder, derive_seed(seed, "tsrec-b", i), inset=1.0)
        d = genmodel.forward(decoder, z1) - genmodel.forward(decoder, z2)
        nd = np.linalg.norm(d)
        s = np.linalg.norm(sensing.apply(op, d)) / np.sqrt(op.n)
        if s > (1 + eps) * nd + delta or s < (1 - eps) * nd - delta:
            violations += 1
        if nd > 0:
            worst = max(worst, abs(s / nd - 1.0))
    return _finish_report("tsrec", pairs, violations, worst,
                          {"eps": eps, "delta": delta, "n": op.n, "p": op.p,
                           "k": decoder.latent_dim, "seed": seed,
                           "allowed_violations": 0})


def jle_check(op, points, eps):
    """Norm preservation on a finite point set:
    (1-eps)||x||^2 <= ||Ax||^2/n <= (1+eps)||x||^2 for every point.

    worst_margin is the largest relative defect of ||Ax||^2/(n ||x||^2) from 1.
    """
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    points = np.atleast_2d(np.asarray(points, dtype=float))
    violations = 0
    worst = 0.0
    for x in points:
        nx2 = float(x @ x)
        if nx2 == 0.0:
            continue
        s2 = float(np.sum(sensing.apply(op, x) ** 2)) / op.n
        dev = abs(s2 / nx2 - 1.0)
        worst = max(worst, dev)
        if dev > eps:
            violations += 1
    return _finish_report("jle", len(points), violations, worst,
                          {"eps": eps, "n": op.n, "p": op.p,
                           "allowed_violations": 0})


def wnu_check(op, decoder, nu, eps, pairs, seed, slack=WNU_SLACK):
    """Inner-product bound for W = I - (nu/n) A^T A on range differences:
    |<W x1, x2>| <= (mu1(nu, eps) + slack) ||x1|| ||x2||.

    worst_margin is the smallest remaining slack (negative means violated).
    """
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    bound_coef = solvers.mu1_of(nu, eps) + slack
    violations = 0
    worst = math.inf
    for i in range(pairs):
        xs = []
        for tag in ("wnu-a", "wnu-b", "wnu-c", "wnu-d"):
            z = genmodel.sample_latent(decoder, derive_seed(seed, tag, i), inset=1.0)
            xs.append(genmodel.forward(decoder, z))
        x1 = xs[0] - xs[1]
        x2 = xs[2] - xs[3]
        wx1 = x1 - (nu / op.n) * sensing.adjoint_apply(op, sensing.apply(op, x1))
        lhs = abs(float(wx1 @ x2))
        scale = np.linalg.norm(x1) * np.linalg.norm(x2)
        margin = bound_coef * scale - lhs
        worst = min(worst, margin)
        if margin < 0:
            violations += 1
    return _finish_report("wnu", pairs, violations, worst,
                          {"nu": nu, "eps": eps, "slack": slack, "n": op.n,
                           "seed": seed, "allowed_violations": 0})


def polarization_check(op, pairs, seed, tol=1e-9):
    """x^T A^T A y must equal (||A(x+y)||^2 - ||A(x-y)||^2) / 4 up to tol
    (relative); this is the algebraic identity behind the embedding bound."""
    rng = np.random.default_rng(seed)
    violations = 0
    worst = 0.0
    for _ in range(pairs):
        x = rng.standard_normal(op.p)
        y = rng.standard_normal(op.p)
        lhs = float(sensing.apply(op, x) @ sensing.apply(op, y))
        plus = float(np.sum(sensing.apply(op, x + y) ** 2))
        minus = float(np.sum(sensing.apply(op, x - y) ** 2))
        rhs = (plus - minus) / 4.0
        dev = abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-30)
        worst = max(worst, dev)
        if dev > tol:
            violations += 1
    return _finish_report("polarization", pairs, violations, worst,
                          {"tol": tol, "n": op.n, "p": op.p, "seed": seed,
                           "allowed_violations": 0})


def mvt_check(op, link, triples, seed):
    """Derivative-bound sandwich for a differentiable link:
    l ||A x1 - A x2|| <= ||f(A x1) - f(A x2)|| <= u ||A x1 - A x2||,
    checked with zero tolerance. worst_margin is the smallest distance to
    either bound (0 when l = u)."""
    if not link.differentiable:
        raise UnsupportedOperationError("mvt check needs a differentiable link")
    rng = np.random.default_rng(seed)
    l, u = link.deriv_lo, link.deriv_hi
    violations = 0
    worst = math.inf
    for _ in range(triples):
        x1 = rng.standard_normal(op.p)
        x2 = rng.standard_normal(op.p)
        t1 = sensing.apply(op, x1)
        t2 = sensing.apply(op, x2)
        base = float(np.linalg.norm(t1 - t2))
        mid = float(np.linalg.norm(link_eval(link, t1) - link_eval(link, t2)))
        if mid < l * base or mid > u * base:
            violations += 1
        worst = min(worst, mid - l * base, u * base - mid)
    return _finish_report("mvt", triples, violations, worst,
                          {"l": l, "u": u, "n": op.n, "seed": seed,
                           "allowed_violations": 0})


def adjoint_check(op, trials, seed, tol=1e-10):
    """<A x, v> must match <x, A^T v> to tol relative."""
    rng = np.random.default_rng(seed)
    violations = 0
    worst = 0.0
    for _ in range(trials):
        x = rng.standard_normal(op.p)
        v = rng.standard_normal(op.n)
        lhs = float(sensing.apply(op, x) @ v)
        rhs = float(x @ sensing.adjoint_apply(op, v))
        dev = abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-30)
        worst = max(worst, dev)
        if dev > tol:
            violations += 1
    return _finish_report("adjoint", trials, violations, worst,
                          {"tol": tol, "kind": op.kind, "n": op.n, "p": op.p,
                           "seed": seed, "allowed_violations": 0})


def gradient_check(op, link, decoder, points, seed, tol=1e-5, vjp_tol=1e-4,
                   fd_step=1e-6, vjp_step=1e-5):
    """Central finite differences against the analytic gradients of both
    losses and against the decoder vjp. One trial per random point; a trial
    fails if any compared coordinate exceeds its relative tolerance."""
    rng = np.random.default_rng(seed)
    y = rng.standard_normal(op.n)
    violations = 0
    worst = 0.0
    for _ in range(points):
        x = rng.standard_normal(op.p)
        dev = max(
            _fd_gradient_dev(lambda v: solvers.loss_glasso(op, y, v),
                             solvers.grad_glasso(op, y, x), x, fd_step),
            _fd_gradient_dev(lambda v: solvers.loss_nlasso(op, y, link, v),
                             solvers.grad_nlasso(op, y, link, x), x, fd_step))
        z = genmodel.sample_latent(decoder, rng.integers(2 ** 63))
        v = rng.standard_normal(decoder.ambient_dim)
        vdev = _fd_vjp_dev(decoder, z, v, vjp_step)
        worst = max(worst, dev, vdev)
        if dev > tol or vdev > vjp_tol:
            violations += 1
    return _finish_report("gradients", points, violations, worst,
                          {"tol": tol, "vjp_tol": vjp_tol, "n": op.n,
                           "p": op.p, "seed": seed, "allowed_violations": 0})


def _fd_gradient_dev(loss, grad, x, h):
    # worst per-coordinate relative deviation; tiny coordinates are floored
    # so finite-difference roundoff cannot dominate the ratio
    fd = np.empty_like(x)
    e = np.zeros_like(x)
    for j in range(len(x)):
        e[j] = h
        fd[j] = (loss(x + e) - loss(x - e)) / (2 * h)
        e[j] = 0.0
    denom = np.maximum(np.abs(grad), 1e-8)
    return float(np.max(np.abs(fd - grad) / denom))


def _fd_vjp_dev(decoder, z, v, h):
    analytic = genmodel.vjp(decoder, z, v)
    fd = np.empty_like(z)
    e = np.zeros_like(z)
    for j in range(len(z)):
        e[j] = h
        fd[j] = float((genmodel.forward(decoder, z + e)
                       - genmodel.forward(decoder, z - e)) @ v) / (2 * h)
        e[j] = 0.0
    denom = np.maximum(np.abs(analytic), 1e-8)
    return float(np.max(np.abs(fd - analytic) / denom))


def contraction_fit(traj, floor):
    """Least-squares slope of log(error_t) over iterations with error above
    the floor. Returns (slope, smallest error seen)."""
    errs = np.asarray(traj.error_to_target, dtype=float)
    if errs.size == 0:
        raise InsufficientDataError("trajectory has no error series")
    mask = errs > floor
    if mask.sum() < 3:
        raise InsufficientDataError("fewer than 3 points above the floor")
    t = np.arange(errs.size)[mask]
    slope = float(np.polyfit(t, np.log(errs[mask]), 1)[0])
    return slope, float(errs.min())


def plant_unit_signal(decoder, seed):
    """Unit-norm signal in the direction of a random range point.

    Returns (x_star, z_star). Exact containment of the rescaled target in
    the decoder range holds for linear decoders; for nonlinear decoders the
    residual mismatch acts as a small representation error.
    """
    z = genmodel.sample_latent(decoder, seed)
    x = genmodel.forward(decoder, z)
    nx = np.linalg.norm(x)
    if nx == 0.0:
        raise ValueError("decoder output at the planted latent is zero")
    return x / nx, z


@dataclass(frozen=True)
class TrialSetup:
    """Everything a Monte Carlo trial needs except its size and seed."""
    decoder: object
    link: object
    solver_kind: str                 # pgd_glasso | pgd_nlasso | csgm
    solver_cfg: solvers.SolverConfig
    sensing_kind: str = "dense_gaussian"
    observation: str = "auto"        # sim | known | auto (follow the solver)
    delta: float = 1e-3

    def resolved_observation(self):
        if self.observation != "auto":
            return self.observation
        return "known" if self.solver_kind == "pgd_nlasso" else "sim"


@dataclass(frozen=True)
class TrialRecord:
    n: int
    seed: int
    error: float        # l2 distance to the solver's theory target
    cosine: float       # cosine similarity to the planted signal
    loss: float


@dataclass(frozen=True)
class SolveResult:
    op: object
    obs: object
    x_star: np.ndarray
    z_star: np.ndarray
    target: np.ndarray
    matched: bool
    x_hat: np.ndarray
    trajectory: object
    record: TrialRecord


def solve_instance(setup, n, seed):
    """One independent draw of (operator, signal, noise) plus a solve.

    The error target follows the solver's theory: the gain-scaled signal for
    the unknown-link solvers, the signal itself for the known-link solver.
    For mismatched solver/observation combinations the l2 error is undefined
    (nan) and only the cosine metric is meaningful.
    """
    decoder = setup.decoder
    link = setup.link
    op = sensing.sensing_new(setup.sensing_kind, n, decoder.ambient_dim,
                             derive_seed(seed, "sensing"))
    mode = setup.resolved_observation()
    if mode == "sim":
        x_star, z_star = plant_unit_signal(decoder, derive_seed(seed, "signal"))
        obs = observe_sim(link, op, x_star, derive_seed(seed, "observe"))
        target = link.mu * x_star
        matched = setup.solver_kind in ("pgd_glasso", "csgm")
    elif mode == "known":
        z_star = genmodel.sample_latent(decoder, derive_seed(seed, "signal"))
        x_star = genmodel.forward(decoder, z_star)
        obs = observe_known(link, op, x_star, derive_seed(seed, "observe"))
        target = x_star
        matched = setup.solver_kind == "pgd_nlasso"
    else:
        raise ValueError(f"unknown observation mode {mode!r}")
    cfg = replace(setup.solver_cfg, seed=derive_seed(seed, "solver"))
    tgt = target if matched else None
    if setup.solver_kind == "pgd_glasso":
        x_hat, traj = solvers.pgd_glasso(op, obs.y_tilde, decoder, cfg, tgt)
    elif setup.solver_kind == "pgd_nlasso":
        x_hat, traj = solvers.pgd_nlasso(op, obs.y_tilde, link, decoder, cfg, tgt)
    elif setup.solver_kind == "csgm":
        x_hat, traj = solvers.csgm_baseline(op, obs.y_tilde, decoder, cfg, tgt)
    else:
        raise ValueError(f"unknown solver kind {setup.solver_kind!r}")
    error = float(np.linalg.norm(x_hat - target)) if matched else float("nan")
    cos = (cosine_similarity(x_star, x_hat)
           if np.linalg.norm(x_hat) > 0 else float("nan"))
    rec = TrialRecord(int(n), int(seed), error, cos, traj.loss_values[-1])
    return SolveResult(op, obs, x_star, z_star, target, matched, x_hat,
                       traj, rec)


def run_trial(setup, n, seed):
    """TrialRecord of one independent instance draw and solve."""
    return solve_instance(setup, n, seed).record


@dataclass(frozen=True)
class RateRow:
    n: int
    trials: int
    median_error: float
    q25: float
    q75: float
    predicted: float


@dataclass(frozen=True)
class RateTable:
    rows: tuple
    fitted_constant: float
    k: int
    p: int
    lipschitz: float
    r: float
    delta: float
    link_kind: str
    solver_kind: str


def rate_experiment(grid, trials, setup, seed, threads=1, n_cap=100_000):
    """Median recovery error across a grid of measurement counts.

    Each grid point runs ``trials`` independent draws; medians are fitted
    against c * sqrt(k log(L r / delta) / n) by least squares. Aggregation
    folds trials in seed order, so the output is independent of scheduling.
    """
    grid = sorted(int(n) for n in set(grid))
    if len(grid) < 1:
        raise ValueError("grid must be nonempty")
    if trials < 10:
        raise ValueError("need at least 10 trials per grid point")
    if max(grid) > n_cap:
        raise ValueError("grid exceeds the size cap")
    mode = setup.resolved_observation()
    matched = ((mode == "known" and setup.solver_kind == "pgd_nlasso")
               or (mode == "sim" and setup.solver_kind in ("pgd_glasso", "csgm")))
    if not matched:
        raise ValueError("rate experiment needs a solver matching the "
                         "observation model so the error target is defined")
    jobs = [(setup, n, derive_seed(seed, f"rate-n{n}", i))
            for n in grid for i in range(trials)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            records = list(ex.map(_run_trial_star, jobs, chunksize=1))
    else:
        records = [_run_trial_star(j) for j in jobs]
    decoder = setup.decoder
    lip = genmodel.lipschitz_bound(decoder)
    scale = math.sqrt(decoder.latent_dim
                      * math.log(lip * decoder.latent_radius / setup.delta))
    medians, q25s, q75s = [], [], []
    for idx, n in enumerate(grid):
        errs = np.asarray([r.error for r in records[idx * trials:(idx + 1) * trials]])
        medians.append(float(np.median(errs)))
        q25s.append(float(np.quantile(errs, 0.25)))
        q75s.append(float(np.quantile(errs, 0.75)))
    s = np.asarray([scale / math.sqrt(n) for n in grid])
    m = np.asarray(medians)
    c = float(m @ s / (s @ s))
    rows = tuple(RateRow(n, trials, medians[i], q25s[i], q75s[i],
                         float(c * s[i]))
                 for i, n in enumerate(grid))
    return RateTable(rows, c, decoder.latent_dim, decoder.ambient_dim,
                     lip, decoder.latent_radius, setup.delta,
                     setup.link.kind, setup.solver_kind)


def _run_trial_star(job):
    setup, n, seed = job
    return run_trial(setup, n, seed)


def report_to_json(report):
    return {
        "name": report.name,
        "trials": report.trials,
        "violations": report.violations,
        "worst_margin": report.worst_margin,
        "params": report.params,
        "passed": report.passed,
    }


def rate_table_to_json(table):
    return {
        "k": table.k, "p": table.p, "lipschitz": table.lipschitz,
        "r": table.r, "delta": table.delta,
        "link_kind": table.link_kind, "solver_kind": table.solver_kind,
        "fitted_constant": table.fitted_constant,
        "rows": [{"n": r.n, "trials": r.trials,
                  "median_error": r.median_error, "q25": r.q25,
                  "q75": r.q75, "predicted": r.predicted}
                 for r in table.rows],
    }


def rate_table_to_csv(table, path):
    """Rows (n, trials, median_error, q25, q75, predicted, ratio);
    ratio = median_error / predicted measures the fit of the rate curve."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "trials", "median_error", "q25", "q75",
                    "predicted", "ratio"])
        for r in table.rows:
            ratio = r.median_error / r.predicted if r.predicted > 0 else float("nan")
            w.writerow([r.n, r.trials, repr(r.median_error), repr(r.q25),
                        repr(r.q75), repr(r.predicted), repr(ratio)])
