"""Periodic orbits by shooting and Newton, positivity validation, lambda continuation, probes.

A ``T``-periodic solution is a fixed point of the period map ``P``. Newton
solves ``P(z) - z = 0`` with the finite-difference flow Jacobian and an
Armijo backtracking line search. Accepted orbits are re-integrated at a tenth
of the tolerance and checked against the maximum principles on dense output.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import optimize

from .degree import (DegreeResult, Rectangle, annulus_degree, fit_large_box, poincare_residual_degree,
                     small_ball_degree)
from .errors import (IntegrationError, NoConvergence, PosOrbitError, SeedInvalid,
                     SingularJacobian, StepUnderflow)
from .flow import SystemInstance, flow_end, integrate, poincare_jacobian

MAX_NEWTON = 40
ARMIJO_C = 1e-4
MAX_HALVINGS = 30
SINGULAR_DET = 1e-14
DEDUP_TOL = 1e-6
DENSE_SAMPLES = 20_000
BORDERLINE_MIN_U = 1e-8
TRIVIAL_TOL = 1e-6  # below the finite-difference scale an orbit cannot be told from zero
STEP_TOL_FACTOR = 10.0


def _int_tol(tol: float) -> float:
    """Integration tolerance used while iterating on a residual tolerance ``tol``."""
    return min(max(tol * 1e-2, 1e-13), 1e-8)


def _residual(sys: SystemInstance, z, itol: float) -> np.ndarray:
    P = flow_end(sys, z, 0.0, sys.period, itol)
    return np.array([P[0] - z[0], P[1] - z[1]])


def _is_rest_point(sys: SystemInstance, z, n: int = 64) -> bool:
    ts = np.linspace(0.0, sys.period, n, endpoint=False)
    return all(sys.rhs(float(t), z) == (0.0, 0.0) for t in ts)


# ----------------------------------------------------------------------------
# orbit records

@dataclass
class OrbitSolution:
    z0: tuple[float, float]
    residual_norm: float
    trajectory: object
    min_u: float
    max_u: float
    argmax_t: float
    positivity: dict
    newton_iters: int
    lam: float
    tol: float
    confirm_residual: float = float("nan")
    jacobian: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def trivial(self) -> bool:
        return max(abs(self.min_u), abs(self.max_u)) <= TRIVIAL_TOL and abs(self.z0[1]) <= TRIVIAL_TOL

    @property
    def strong_ok(self) -> bool:
        return bool(self.positivity.get("strong_ok"))

    @property
    def index(self) -> Optional[int]:
        """Fixed-point index ``sign det(I - J)`` when the Jacobian is known."""
        if self.jacobian is None:
            return None
        d = float(np.linalg.det(np.eye(2) - self.jacobian))
        return int(np.sign(d))

    def summary(self) -> dict:
        return {"lambda": self.lam, "u0": self.z0[0], "v0": self.z0[1], "residual": self.residual_norm,
                "min_u": self.min_u, "max_u": self.max_u, "argmax_t": self.argmax_t,
                "strong_ok": self.strong_ok, "tol": self.tol}

    def to_dict(self) -> dict:
        d = self.summary()
        d.update(newton_iters=self.newton_iters, confirm_residual=self.confirm_residual,
                 positivity=dict(self.positivity), index=self.index)
        return d


def validate_positive(sys: SystemInstance, orbit: OrbitSolution, samples: int = DENSE_SAMPLES) -> dict:
    """Maximum-principle checks on dense output; also refreshes the orbit's extrema."""
    traj, T = orbit.trajectory, sys.period
    ts = np.linspace(0.0, T, samples, endpoint=False)
    uu, _ = traj.dense(ts)
    k = int(np.argmax(uu))
    lo, hi = ts[max(k - 1, 0)], ts[min(k + 1, samples - 1)]
    t_star = float(ts[k])
    if hi > lo:
        res = optimize.minimize_scalar(lambda t: -float(traj.dense([t])[0][0]), bounds=(lo, hi),
                                       method="bounded", options={"xatol": 1e-13 * T})
        if -res.fun >= uu[k]:
            t_star = float(res.x)
    u_star, v_star = (float(x[0]) for x in traj.dense([t_star]))
    min_u = float(uu.min())
    max_u = max(float(uu.max()), u_star)
    tol = orbit.tol
    J = sys.a.intervals or ()
    rep = {
        "weak_ok": min_u >= -10 * tol,
        "strong_ok": min_u > 0,
        "argmax_in_Jn": any(I.contains(t_star % T, T, 1e-9 * T) for I in J),
        "v_at_argmax": v_star,
        "first_order_ok": abs(v_star) <= 1e-6,
        "borderline": 0 < min_u <= BORDERLINE_MIN_U,
        "samples": samples,
    }
    orbit.min_u, orbit.max_u, orbit.argmax_t = min_u, max_u, t_star % T
    orbit.positivity = rep
    return rep


def orbit_from_point(sys: SystemInstance, z0, tol: float = 1e-10, newton_iters: int = 0,
                     jacobian: Optional[np.ndarray] = None) -> OrbitSolution:
    """Integrate one period from ``z0`` and wrap the result; no periodicity is imposed."""
    z0 = (float(z0[0]), float(z0[1]))
    traj = integrate(sys, z0, 0.0, sys.period, _int_tol(tol))
    res = math.hypot(traj.u[-1] - z0[0], traj.v[-1] - z0[1])
    orb = OrbitSolution(z0, res, traj, 0.0, 0.0, 0.0, {}, newton_iters, sys.lam, tol, jacobian=jacobian)
    validate_positive(sys, orb)
    return orb


# ----------------------------------------------------------------------------
# Newton on the period map

def _newton_core(sys: SystemInstance, z0_guess, tol: float, max_iter: int):
    """Newton iterations only; returns ``(z, |F|, iterations, Jacobian of P)`` or ``None`` for a rest point."""
    itol = _int_tol(tol)
    z = np.array([float(z0_guess[0]), float(z0_guess[1])])
    if _is_rest_point(sys, tuple(z)):
        return None
    F = _residual(sys, z, itol)
    nF = float(np.linalg.norm(F))
    it = 0
    while True:
        # inexact Newton: the Jacobian is only as accurate as the residual warrants
        jtol = min(max(1e-4 * nF, itol), 1e-7)
        J = poincare_jacobian(sys, tuple(z), 10 * jtol) - np.eye(2)
        det = float(np.linalg.det(J))
        if abs(det) < SINGULAR_DET:
            raise SingularJacobian(f"|det(J - I)| = {abs(det):.3g} at z = {tuple(z)}", J + np.eye(2), tuple(z))
        step = -np.linalg.solve(J, F)
        # the step test rejects near-degenerate points around the trivial orbit
        # whose residual is tiny only because the field is flat there
        if nF <= tol and float(np.linalg.norm(step)) <= STEP_TOL_FACTOR * tol:
            return z, nF, it, J + np.eye(2)
        if it >= max_iter:
            raise NoConvergence(f"no convergence in {max_iter} iterations", tuple(z), nF)
        t = 1.0
        for _ in range(MAX_HALVINGS):
            trial = z + t * step
            try:
                Ft = _residual(sys, trial, itol)
                nFt = float(np.linalg.norm(Ft))
            except IntegrationError:
                nFt = math.inf
            if nFt <= (1 - ARMIJO_C * t) * nF:
                break
            t *= 0.5
        else:
            raise NoConvergence("line search stagnated", tuple(z), nF)
        z, F, nF = trial, Ft, nFt
        it += 1


def _finalize(sys: SystemInstance, core, z0_guess, tol: float) -> OrbitSolution:
    if core is None:
        orb = orbit_from_point(sys, z0_guess, tol)
        orb.confirm_residual = orb.residual_norm
        return orb
    z, nF, it, J = core
    orb = orbit_from_point(sys, z, tol, it, J)
    orb.residual_norm = nF
    Fc = _residual(sys, z, max(_int_tol(tol) / 10, 1e-13))
    orb.confirm_residual = float(np.linalg.norm(Fc))
    if orb.confirm_residual > 10 * tol:
        raise NoConvergence(f"residual {orb.confirm_residual:.3g} at the confirmation tolerance", tuple(z),
                            orb.confirm_residual)
    return orb


def newton_periodic(sys: SystemInstance, z0_guess, tol: float = 1e-10, max_iter: int = MAX_NEWTON) -> OrbitSolution:
    """Damped Newton for ``P(z) = z``; the accepted point is confirmed at ``tol / 10``.

    A point is accepted when both the residual and the next Newton step are
    below ``tol`` (the step up to a factor 10).
    """
    if not (1e-12 <= tol <= 1e-6):
        raise ValueError("tol must lie in [1e-12, 1e-6]")
    return _finalize(sys, _newton_core(sys, z0_guess, tol, max_iter), z0_guess, tol)


# ----------------------------------------------------------------------------
# multistart

@dataclass
class StartGrid:
    u_range: tuple[float, float] = (0.0, 2.0)
    v_range: tuple[float, float] = (-2.0, 2.0)
    counts: tuple[int, int] = (16, 16)

    def points(self) -> list[tuple[float, float]]:
        nu, nv = self.counts
        if nu < 4 or nv < 4:
            raise ValueError("grid counts must be at least 4 x 4")
        us = np.linspace(*self.u_range, nu)
        vs = np.linspace(*self.v_range, nv)
        return [(float(u), float(v)) for u in us for v in vs]


@dataclass
class MultistartResult:
    orbits: list[OrbitSolution]
    trivial: Optional[OrbitSolution]
    failures: dict
    starts: int

    @property
    def positive(self) -> list[OrbitSolution]:
        return [o for o in self.orbits if o.strong_ok]

    def to_dict(self) -> dict:
        return {"orbits": [o.to_dict() for o in self.orbits],
                "trivial": None if self.trivial is None else self.trivial.to_dict(),
                "failures": dict(self.failures), "starts": self.starts}


def _dedupe(found: list[OrbitSolution]) -> list[OrbitSolution]:
    found = sorted(found, key=lambda o: (o.max_u, o.z0))
    kept: list[OrbitSolution] = []
    for o in found:
        if all(math.dist(o.z0, k.z0) >= DEDUP_TOL for k in kept):
            kept.append(o)
    return kept


def multistart_solve(sys: SystemInstance, grid: Optional[StartGrid] = None, tol: float = 1e-10,
                     starts: Optional[Sequence] = None) -> MultistartResult:
    """Newton from every grid point; failures are tallied by kind, not raised."""
    pts = list(starts) if starts is not None else (grid or StartGrid()).points()
    failures = {"trivial": 0, "blowup": 0, "no_convergence": 0, "singular": 0, "other": 0}
    found = []
    if not (1e-12 <= tol <= 1e-6):
        raise ValueError("tol must lie in [1e-12, 1e-6]")
    for z in pts:
        try:
            core = _newton_core(sys, z, tol, MAX_NEWTON)
            # converged onto a known orbit: skip the dense validation
            if core is None or max(abs(core[0])) <= TRIVIAL_TOL:
                failures["trivial"] += 1
                continue
            if any(math.dist(core[0], o.z0) < DEDUP_TOL for o in found):
                continue
            orb = _finalize(sys, core, z, tol)
        except StepUnderflow:
            failures["blowup"] += 1
            continue
        except NoConvergence:
            failures["no_convergence"] += 1
            continue
        except SingularJacobian:
            failures["singular"] += 1
            continue
        except (IntegrationError, np.linalg.LinAlgError):
            failures["other"] += 1
            continue
        if not orb.trivial:
            found.append(orb)
    trivial = None
    if _is_rest_point(sys, (0.0, 0.0)):
        trivial = newton_periodic(sys, (0.0, 0.0), tol)
    return MultistartResult(_dedupe(found), trivial, failures, len(pts))


# ----------------------------------------------------------------------------
# lambda continuation

@dataclass
class StepPolicy:
    initial: Optional[float] = None
    min_step: float = 1e-4
    max_frac: float = 0.5
    grow: float = 1.5
    shrink: float = 0.5
    trust_radius: float = 0.5


@dataclass
class Branch:
    points: list[tuple[float, OrbitSolution]]
    policy: StepPolicy
    reason: str
    failures: int = 0

    @property
    def lambdas(self) -> list[float]:
        return [lam for lam, _ in self.points]

    def to_dict(self) -> dict:
        return {"reason": self.reason, "failures": self.failures,
                "points": [o.summary() for _, o in self.points]}


def continue_lambda(sys: SystemInstance, seed: Optional[OrbitSolution], lam_end: float,
                    policy: Optional[StepPolicy] = None, tol: float = 1e-10) -> Branch:
    """Natural-parameter continuation from ``seed`` (computed at ``sys.lam``) towards ``lam_end``.

    The predictor is a secant through the last two points. A step fails when
    Newton fails, the correction leaves the trust radius, or the orbit is not
    strictly positive; failures halve the step, successes grow it.
    """
    if seed is None or seed.trivial or not seed.strong_ok:
        raise SeedInvalid("continuation needs a nontrivial strictly positive seed orbit")
    if not math.isclose(seed.lam, sys.lam, rel_tol=1e-12):
        raise SeedInvalid("seed was computed at a different lambda")
    policy = policy or StepPolicy()
    span = abs(lam_end - sys.lam)
    if span == 0:
        return Branch([(sys.lam, seed)], policy, "range end")
    sgn = 1.0 if lam_end > sys.lam else -1.0
    max_step = policy.max_frac * span
    step = min(policy.initial or 0.05 * span, max_step)
    pts = [(sys.lam, seed)]
    fails = 0
    while True:
        lam0, o0 = pts[-1]
        if abs(lam_end - lam0) <= 1e-12 * max(1.0, abs(lam_end)):
            return Branch(pts, policy, "range end", fails)
        d = min(step, abs(lam_end - lam0))
        lam1 = lam0 + sgn * d
        guess = np.array(o0.z0)
        if len(pts) >= 2:
            lam_p, o_p = pts[-2]
            guess = guess + (np.array(o0.z0) - np.array(o_p.z0)) * (lam1 - lam0) / (lam0 - lam_p)
        try:
            orb = newton_periodic(sys.with_(lam=lam1), guess, tol)
            ok = (orb.strong_ok and not orb.trivial
                  and math.dist(orb.z0, o0.z0) <= policy.trust_radius * (1 + math.hypot(*o0.z0)))
        except SingularJacobian:
            if d <= policy.min_step:
                return Branch(pts, policy, "fold", fails + 1)
            ok = False
        except (NoConvergence, IntegrationError, np.linalg.LinAlgError):
            ok = False
        if ok:
            pts.append((lam1, orb))
            step = min(step * policy.grow, max_step)
        else:
            fails += 1
            if d <= policy.min_step:
                return Branch(pts, policy, "step underflow", fails)
            step = max(d * policy.shrink, policy.min_step)


# ----------------------------------------------------------------------------
# nonexistence probe: orbits with a prescribed sup norm

def _peak_residual(sys: SystemInstance, x, itol: float) -> np.ndarray:
    """Return mismatch of the orbit started at its assumed maximum ``(r, 0)`` at time ``t*``."""
    ts, r = float(x[0]), float(x[1])
    P = flow_end(sys, (r, 0.0), ts, ts + sys.period, itol)
    return np.array([P[0] - r, P[1]])


def _peak_newton(sys, x0, r_lo, r_hi, tol, itol, max_iter=25):
    x = np.array(x0, dtype=float)
    F = _peak_residual(sys, x, itol)
    nF = float(np.linalg.norm(F))
    T = sys.period
    for _ in range(max_iter):
        if nF <= tol:
            return x, nF
        J = np.empty((2, 2))
        for j in range(2):
            d = 1e-6 * (1 + abs(x[j]))
            e = np.zeros(2)
            e[j] = d
            J[:, j] = (_peak_residual(sys, x + e, itol) - _peak_residual(sys, x - e, itol)) / (2 * d)
        try:
            step = -np.linalg.solve(J, F)
        except np.linalg.LinAlgError:
            return None
        t = 1.0
        for _ in range(20):
            trial = x + t * step
            trial[0] %= T
            if r_lo <= trial[1] <= r_hi:
                try:
                    Ft = _peak_residual(sys, trial, itol)
                    nFt = float(np.linalg.norm(Ft))
                except IntegrationError:
                    nFt = math.inf
                if nFt <= (1 - ARMIJO_C * t) * nF:
                    break
            t *= 0.5
        else:
            return None
        x, F, nF = trial, Ft, nFt
    return (x, nF) if nF <= tol else None


@dataclass
class ProbeResult:
    r: float
    found: dict          # theta -> bool
    witnesses: dict      # theta -> list of (t*, r', residual)
    starts: int
    label: str = "probe"

    @property
    def negative(self) -> bool:
        return not any(self.found.values())

    def to_dict(self) -> dict:
        return {"r": self.r, "label": self.label, "negative": self.negative, "starts": self.starts,
                "found": {str(k): v for k, v in self.found.items()},
                "witnesses": {str(k): v for k, v in self.witnesses.items()}}


def nonexistence_probe(sys: SystemInstance, r: float, theta_grid: Sequence[float] = (0.25, 0.5, 0.75, 1.0),
                       start_count: int = 24, band: float = 0.1, tol: float = 1e-9) -> ProbeResult:
    """Search the homotopy systems for positive orbits with ``||u||_inf`` in ``[(1-band) r, (1+band) r]``.

    An orbit attains its maximum ``r'`` at some ``t*`` where ``v(t*) = 0``;
    Newton runs on ``(t*, r')`` with the start ``(r', 0)`` at time ``t*``. A
    hit must have ``min u > 0`` and a maximum equal to ``r'``. Not finding
    one is a negative probe, not a proof.
    """
    if not r > 0:
        raise ValueError("r must be positive")
    if any(not (0 < th <= 1) for th in theta_grid):
        raise ValueError("theta values must lie in (0, 1]")
    T = sys.period
    r_lo, r_hi = (1 - band) * r, (1 + band) * r
    n_r = 3
    n_t = max(1, start_count // n_r)
    J = sys.a.intervals or ()
    if J:
        tgrid = []
        per = max(1, n_t // len(J))
        for I in J:
            tgrid += list(np.linspace(I.sigma, I.tau, per + 2)[1:-1])
    else:
        tgrid = list(np.linspace(0, T, n_t, endpoint=False))
    starts = [(t % T, rr) for t in tgrid for rr in np.linspace(r_lo, r_hi, n_r + 2)[1:-1]]
    itol = _int_tol(tol)
    found, wit = {}, {}
    for th in theta_grid:
        s = sys.with_(mode="theta", theta=float(th))
        hits = []
        for x0 in starts:
            try:
                out = _peak_newton(s, x0, 0.5 * r_lo, 2.0 * r_hi, tol, itol)
            except IntegrationError:
                out = None
            if out is None:
                continue
            (ts, rp), res = out
            if not r_lo <= rp <= r_hi:
                continue
            traj = integrate(s, (rp, 0.0), ts, ts + T, itol)
            if traj.u.min() > 0 and traj.u.max() <= rp * (1 + 1e-6):
                hits.append((float(ts), float(rp), float(res)))
        found[float(th)] = bool(hits)
        wit[float(th)] = hits[:5]
    return ProbeResult(float(r), found, wit, len(starts))


def probe_r0(sys: SystemInstance, r_max: float = 1e-2, decades: int = 4, **kw) -> tuple[float, list]:
    """Largest ``r`` in ``r_max * 10^-k`` whose probe is negative; the probe record is returned too."""
    log = []
    for k in range(decades + 1):
        r = r_max * 10.0 ** (-k)
        res = nonexistence_probe(sys, r, **kw)
        log.append(res)
        if res.negative:
            return r, log
    raise PosOrbitError("every probed radius found small orbits")


# ----------------------------------------------------------------------------
# degree ledger

@dataclass
class Ledger:
    small_averaged: DegreeResult
    small_poincare: DegreeResult
    large_poincare: DegreeResult
    annulus: int
    box_info: dict
    wall_time: float
    tol: float

    @property
    def certified(self) -> bool:
        return all(d.certified for d in (self.small_averaged, self.small_poincare, self.large_poincare))

    def to_dict(self) -> dict:
        return {"small_averaged": self.small_averaged.to_dict(), "small_poincare": self.small_poincare.to_dict(),
                "large_poincare": self.large_poincare.to_dict(), "annulus": self.annulus,
                "certified": self.certified, "large_box": self.box_info, "wall_time": self.wall_time,
                "tol": self.tol}


def degree_ledger(sys: SystemInstance, r0: float, R: float, R_prime: float, enclose: Sequence = (),
                  tol: float = 1e-9) -> Ledger:
    """Small-box, large-box and annulus degrees.

    The large box starts at ``[-R, R] x [-R', R']`` and is shrunk until the
    period map is defined on it, keeping the points in ``enclose`` (the known
    orbits) inside.
    """
    t0 = time.perf_counter()
    small = small_ball_degree(sys, r0)
    inner_box = Rectangle.square(r0)
    small_p = poincare_residual_degree(sys, inner_box, tol)
    small_p.label = "Poincare residual, small box"
    box, info = fit_large_box(sys, R, R_prime, enclose=enclose, inner=inner_box)
    large = poincare_residual_degree(sys, box, tol)
    large.label = "Poincare residual, large box"
    ann = annulus_degree(small_p, large)
    return Ledger(small, small_p, large, ann, info, time.perf_counter() - t0, tol)


__all__ = ["OrbitSolution", "StartGrid", "MultistartResult", "StepPolicy", "Branch", "ProbeResult", "Ledger",
           "validate_positive", "orbit_from_point", "newton_periodic", "multistart_solve", "continue_lambda",
           "nonexistence_probe", "probe_r0", "degree_ledger"]
