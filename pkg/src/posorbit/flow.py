"""Breakpoint-aware integration of the planar systems, Poincare map, period map.

The integrator is a scalar Dormand-Prince 5(4) pair with FSAL and the
standard quartic-in-theta dense output. It is written for two unknowns so the
inner loop stays in plain floats; scipy's ``solve_ivp`` spends most of its time
in array bookkeeping for systems this small.

Two sources of non-smoothness are handled explicitly:

* weight breakpoints: the time axis is cut at every breakpoint and steps land
  exactly on them, the weight being evaluated on the piece that owns the step;
* the extension of ``f`` across ``u = 0``: each step freezes the branch of the
  right-hand side, and a sign change of ``u`` is located on the dense output
  so the step can be redone to land on the crossing.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import BlowUp, ConfigError, IntegrationError, NonFiniteState, StepUnderflow
from .fields import GNonlinearity, HOperator, identity_h, power_g, power_h
from .weights import WeightFn, piecewise_constant

MODES = ("S", "S-tilde", "theta", "alpha")
BLOWUP_NORM = 1e12
EVENT_TOL = 1e-12
MAX_STEPS = 2_000_000

# Dormand-Prince 5(4) tableau
C2, C3, C4, C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
A21 = 1 / 5
A31, A32 = 3 / 40, 9 / 40
A41, A42, A43 = 44 / 45, -56 / 15, 32 / 9
A51, A52, A53, A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
A61, A62, A63, A64, A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
A71, A73, A74, A75, A76 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
E1, E3, E4, E5, E6, E7 = 71 / 57600, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40
D1, D3, D4 = -12715105075 / 11282082432, 87487479700 / 32700410799, -10690763975 / 1880347072
D5, D6, D7 = 701980252875 / 199316789632, -1453857185 / 822651844, 69997945 / 29380423


@dataclass
class SystemInstance:
    """``u' = th h(t, v)``, ``v' = -th f(t, u) - alpha w(t)`` in one of four modes.

    ``S`` uses ``f = lam a g`` with ``g`` extended oddly to ``u < 0`` (only
    overshoots reach that side); ``S-tilde`` uses ``f = -u`` for ``u < 0``;
    ``theta`` is ``S-tilde`` scaled by ``theta``; ``alpha`` is ``S-tilde`` plus
    the forcing ``-alpha w(t)``.
    """

    h: HOperator
    g: GNonlinearity
    a: WeightFn
    lam: float
    mode: str = "S-tilde"
    theta: float = 1.0
    alpha: float = 0.0
    w: Optional[WeightFn] = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}")
        if not (self.lam > 0 and math.isfinite(self.lam)):
            raise ConfigError("lambda must be positive and finite")
        if not (0 < self.theta <= 1):
            raise ConfigError("theta must lie in (0, 1]")
        if not self.alpha >= 0:
            raise ConfigError("alpha must be nonnegative")
        if self.mode != "S":
            bad = self.g.star_violations()
            if bad:
                raise ConfigError("g violates the sign condition: " + "; ".join(bad))
        if self.mode == "alpha" and self.w is None:
            self.w = default_w(self.a)

    @property
    def period(self) -> float:
        return self.a.period

    def with_(self, **changes) -> "SystemInstance":
        kw = dict(h=self.h, g=self.g, a=self.a, lam=self.lam, mode=self.mode,
                  theta=self.theta, alpha=self.alpha, w=self.w)
        kw.update(changes)
        return SystemInstance(**kw)

    def f(self, t: float, u: float) -> float:
        """Second-component nonlinearity (without the forcing term)."""
        if u >= 0 or self.mode == "S":
            gu = self.g.scalar(u) if u >= 0 else -self.g.scalar(-u)
            return self.lam * self.a.scalar(t) * gu
        return -u

    def rhs(self, t: float, z) -> tuple[float, float]:
        u, v = z
        th = self.theta if self.mode == "theta" else 1.0
        dv = -th * self.f(t, u)
        if self.mode == "alpha":
            dv -= self.alpha * self.w.scalar(t)
        return th * self.h.scalar(t, v), dv

    def breakpoints_in(self, t0: float, t1: float) -> list[float]:
        pts = set(self.a.breakpoints_in(t0, t1))
        if self.mode == "alpha" and self.alpha > 0:
            pts |= set(self.w.breakpoints_in(t0, t1))
        return sorted(pts)


def default_w(a: WeightFn) -> WeightFn:
    """Indicator of the positivity set of ``a``, normalized to unit mass."""
    if a.gamma is None:
        raise ConfigError("the default forcing needs a weight with positivity intervals")
    T = a.period
    cuts = []
    for J in a.intervals:
        lo, hi = J.sigma % T, J.tau % T
        if J.tau > T:
            cuts += [(0.0, hi), (lo, T)]
        else:
            cuts.append((lo, hi if hi > lo else T))
    c = 1.0 / sum(hi - lo for lo, hi in cuts)
    edges = {0.0}
    for lo, hi in cuts:
        edges.add(lo)
        if hi < T:
            edges.add(hi)
    edges = sorted(edges)
    vals = [c if any(lo <= e < hi for lo, hi in cuts) else 0.0 for e in edges]
    return piecewise_constant(edges, vals, T)


def constant_weight(value: float, period: float) -> WeightFn:
    return piecewise_constant([0.0], [value], period)


def harmonic_oscillator(period: float = 2 * math.pi) -> SystemInstance:
    """``u' = v, v' = -u`` as a raw-mode instance."""
    return SystemInstance(identity_h(), power_g(1.0), constant_weight(1.0, period), 1.0, mode="S")


# ----------------------------------------------------------------------------
# Trajectory

@dataclass
class Trajectory:
    t: np.ndarray
    u: np.ndarray
    v: np.ndarray
    # per step: 5 dense coefficients for u and for v, shape (n_steps, 5)
    cu: np.ndarray
    cv: np.ndarray
    accepted: int
    rejected: int
    max_error: float
    tol: float
    events: list = field(default_factory=list)
    flags: list = field(default_factory=list)

    @property
    def end(self) -> tuple[float, float]:
        return float(self.u[-1]), float(self.v[-1])

    def dense(self, ts) -> tuple[np.ndarray, np.ndarray]:
        """Interpolated ``(u, v)``; knots return the stored samples bit for bit."""
        ts = np.asarray(ts, dtype=float)
        n = len(self.t) - 1
        idx = np.clip(np.searchsorted(self.t, ts, side="right") - 1, 0, n - 1)
        h = self.t[idx + 1] - self.t[idx]
        th = (ts - self.t[idx]) / h
        th1 = 1.0 - th

        def ev(y, c):
            out = y[idx] + th * (c[idx, 0] + th1 * (c[idx, 1] + th * (c[idx, 2] + th1 * c[idx, 3])))
            return out

        uu, vv = ev(self.u, self.cu), ev(self.v, self.cv)
        last = ts >= self.t[-1]
        uu = np.where(last, self.u[-1], uu)
        vv = np.where(last, self.v[-1], vv)
        return uu, vv

    def to_csv(self, path, period: Optional[float] = None, per_period: int = 200) -> None:
        """Rows at every accepted step plus ``per_period`` uniform dense rows per period."""
        t0, t1 = float(self.t[0]), float(self.t[-1])
        period = period or (t1 - t0)
        n = max(1, int(round((t1 - t0) / period * per_period)))
        extra = np.linspace(t0, t1, n + 1)
        ts = np.union1d(self.t, extra)
        uu, vv = self.dense(ts)
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["t", "u", "v"])
            for row in zip(ts, uu, vv):
                wr.writerow([f"{x:.15g}" for x in row])


# ----------------------------------------------------------------------------
# core stepper

def _piece_eval(fn: Callable[[float], float], lo: float, hi: float, T: float) -> Callable[[float], float]:
    """Evaluate a piecewise weight on the piece that owns ``[lo, hi]``."""
    eps = 1e-13 * T
    lo_in, hi_in = lo + eps, hi - eps

    def ev(t):
        if t <= lo_in:
            t = lo_in
        elif t >= hi_in:
            t = hi_in
        return fn(t)
    return ev


def _make_rhs(sys: SystemInstance, lo: float, hi: float):
    """Branch-frozen right-hand side on the segment ``[lo, hi]``."""
    T = sys.period
    a = _piece_eval(sys.a.scalar, lo, hi, T)
    h = sys.h.scalar
    g = sys.g.scalar
    lam = sys.lam
    th = sys.theta if sys.mode == "theta" else 1.0
    raw = sys.mode == "S"
    forcing = None
    if sys.mode == "alpha" and sys.alpha > 0:
        w = _piece_eval(sys.w.scalar, lo, hi, T)
        al = sys.alpha
        forcing = lambda t: al * w(t)  # noqa: E731

    def rhs(t, u, v, branch):
        if branch > 0 or raw:
            gu = g(u) if u >= 0 else -g(-u)
            f = lam * a(t) * gu
        else:
            f = -u
        dv = -th * f
        if forcing is not None:
            dv -= forcing(t)
        return th * h(t, v), dv
    return rhs


def _dense_coeffs(y0, y1, h, k1, k3, k4, k5, k6, k7):
    ydiff = y1 - y0
    bspl = h * k1 - ydiff
    return (ydiff, bspl, ydiff - h * k7 - bspl,
            h * (D1 * k1 + D3 * k3 + D4 * k4 + D5 * k5 + D6 * k6 + D7 * k7), 0.0)


def _dense_at(y0, c, th):
    th1 = 1.0 - th
    return y0 + th * (c[0] + th1 * (c[1] + th * (c[2] + th1 * c[3])))


def _branch_of(u, v, scale):
    if u > 1e-14 * scale:
        return 1
    if u < -1e-14 * scale:
        return -1
    return 1 if v >= 0 else -1


class _Stepper:
    """Shared adaptive loop; subclasses only differ in what they record."""

    def __init__(self, sys, tol, atol=None, store=True, branch_switch=True):
        if not (1e-14 <= tol <= 1e-5):
            raise ValueError(f"tol {tol} outside the supported range")
        self.sys = sys
        self.rtol = tol
        self.atol = tol if atol is None else atol
        self.store = store
        self.branch_switch = branch_switch
        self.accepted = 0
        self.rejected = 0
        self.max_err = 0.0
        self.events = []
        self.ts, self.us, self.vs, self.cu, self.cv = [], [], [], [], []

    def _initial_step(self, rhs, t, u, v, branch, span):
        du, dv = rhs(t, u, v, branch)
        sc_u = self.atol + self.rtol * abs(u)
        sc_v = self.atol + self.rtol * abs(v)
        d0 = math.hypot(u / sc_u, v / sc_v) / math.sqrt(2)
        d1 = math.hypot(du / sc_u, dv / sc_v) / math.sqrt(2)
        h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
        return min(h0, span)

    def run(self, t0, z0, t1, stop=None, h0=None):
        """Integrate from ``t0`` to ``t1``; ``stop(t, u, v, u1, v1, c)`` may end early."""
        sys = self.sys
        u, v = float(z0[0]), float(z0[1])
        if not (math.isfinite(u) and math.isfinite(v)):
            raise NonFiniteState("non-finite initial state", t0, (u, v))
        cuts = [t0] + (sys.breakpoints_in(t0, t1) if math.isfinite(t1) else []) + [t1]
        t = t0
        if self.store:
            self.ts.append(t), self.us.append(u), self.vs.append(v)
        hstep = h0
        rhs_cache = None
        steps = 0
        for lo, hi in zip(cuts, cuts[1:]):
            rhs = _make_rhs(sys, lo, hi) if math.isfinite(hi) else _UnboundedRhs(sys, lo)
            branch = _branch_of(u, v, 1.0 + abs(u) + abs(v)) if self.branch_switch else 1
            k1 = rhs(t, u, v, branch)
            if hstep is None:
                hstep = self._initial_step(rhs, t, u, v, branch, hi - t)
            landing = False
            while t < hi:
                steps += 1
                if steps > MAX_STEPS:
                    raise StepUnderflow("step budget exhausted", t, (u, v))
                last = hstep >= hi - t
                h = hi - t if last else hstep
                if h <= 1e-15 * max(1.0, abs(t)):
                    raise StepUnderflow(f"step size underflow at t={t}", t, (u, v))
                k1u, k1v = k1
                k2u, k2v = rhs(t + C2 * h, u + h * A21 * k1u, v + h * A21 * k1v, branch)
                k3u, k3v = rhs(t + C3 * h, u + h * (A31 * k1u + A32 * k2u), v + h * (A31 * k1v + A32 * k2v), branch)
                k4u, k4v = rhs(t + C4 * h, u + h * (A41 * k1u + A42 * k2u + A43 * k3u),
                               v + h * (A41 * k1v + A42 * k2v + A43 * k3v), branch)
                k5u, k5v = rhs(t + C5 * h, u + h * (A51 * k1u + A52 * k2u + A53 * k3u + A54 * k4u),
                               v + h * (A51 * k1v + A52 * k2v + A53 * k3v + A54 * k4v), branch)
                tn = hi if last else t + h
                k6u, k6v = rhs(tn, u + h * (A61 * k1u + A62 * k2u + A63 * k3u + A64 * k4u + A65 * k5u),
                               v + h * (A61 * k1v + A62 * k2v + A63 * k3v + A64 * k4v + A65 * k5v), branch)
                un = u + h * (A71 * k1u + A73 * k3u + A74 * k4u + A75 * k5u + A76 * k6u)
                vn = v + h * (A71 * k1v + A73 * k3v + A74 * k4v + A75 * k5v + A76 * k6v)
                k7u, k7v = rhs(tn, un, vn, branch)
                eu = h * (E1 * k1u + E3 * k3u + E4 * k4u + E5 * k5u + E6 * k6u + E7 * k7u)
                ev = h * (E1 * k1v + E3 * k3v + E4 * k4v + E5 * k5v + E6 * k6v + E7 * k7v)
                sc_u = self.atol + self.rtol * max(abs(u), abs(un))
                sc_v = self.atol + self.rtol * max(abs(v), abs(vn))
                err = math.sqrt(0.5 * ((eu / sc_u) ** 2 + (ev / sc_v) ** 2))
                if not math.isfinite(err):
                    self.rejected += 1
                    hstep = 0.2 * h
                    landing = False
                    continue
                if err > 1.0:
                    self.rejected += 1
                    hstep = h * max(0.2, 0.9 * err ** -0.2)
                    landing = False
                    continue
                cu = cv = None
                if self.branch_switch and not landing and branch * un < -1e-14 * (1.0 + abs(u) + abs(v)):
                    cu = _dense_coeffs(u, un, h, k1u, k3u, k4u, k5u, k6u, k7u)
                    lo_th, hi_th = 0.0, 1.0
                    while (hi_th - lo_th) * h > EVENT_TOL:
                        mid = 0.5 * (lo_th + hi_th)
                        if branch * _dense_at(u, cu, mid) < 0:
                            hi_th = mid
                        else:
                            lo_th = mid
                    if hi_th * h > 1e-13 * max(1.0, abs(t)):
                        hstep = hi_th * h
                        landing = True
                        continue
                # accept
                self.accepted += 1
                self.max_err = max(self.max_err, err)
                if self.store or stop is not None:
                    cu = _dense_coeffs(u, un, h, k1u, k3u, k4u, k5u, k6u, k7u)
                    cv = _dense_coeffs(v, vn, h, k1v, k3v, k4v, k5v, k6v, k7v)
                if stop is not None:
                    hit = stop(t, h, u, v, un, vn, cu, cv)
                    if hit is not None:
                        return hit
                if self.store:
                    self.ts.append(tn), self.us.append(un), self.vs.append(vn)
                    self.cu.append(cu[:4]), self.cv.append(cv[:4])
                t, u, v = tn, un, vn
                if abs(u) + abs(v) > BLOWUP_NORM:
                    raise BlowUp(f"solution left the ball of radius {BLOWUP_NORM:g}", t, (u, v))
                k1 = (k7u, k7v)
                if landing:
                    self.events.append(t)
                    landing = False
                    nb = 1 if v >= 0 else -1
                    if sys.h.scalar(t, v) < 0:
                        nb = -1
                    if nb != branch:
                        branch = nb
                        k1 = rhs(t, u, v, branch)
                    continue
                if self.branch_switch:
                    nb = _branch_of(u, v, 1.0 + abs(u) + abs(v))
                    if nb != branch and abs(u) > 1e-14 * (1.0 + abs(v)):
                        branch = nb
                        k1 = rhs(t, u, v, branch)
                fac = 10.0 if err == 0 else min(10.0, max(0.2, 0.9 * err ** -0.2))
                hstep = max(hstep, h * fac) if last else h * fac
        self.t_end = t
        self.z_end = (u, v)
        return None

    def trajectory(self) -> Trajectory:
        cu = np.array(self.cu, dtype=float).reshape(-1, 4)
        cv = np.array(self.cv, dtype=float).reshape(-1, 4)
        return Trajectory(np.array(self.ts), np.array(self.us), np.array(self.vs), cu, cv,
                          self.accepted, self.rejected, self.max_err, self.rtol, list(self.events))


class _UnboundedRhs:
    """Right-hand side for open-ended runs (period map): no breakpoints allowed."""

    def __init__(self, sys, lo):
        if len(sys.a.breakpoints) > 1:
            raise ConfigError("open-ended integration needs a weight without breakpoints")
        self._rhs = _make_rhs(sys, -math.inf, math.inf)

    def __call__(self, t, u, v, branch):
        return self._rhs(t, u, v, branch)


def integrate(sys: SystemInstance, z0, t0: float, t1: float, tol: float = 1e-10) -> Trajectory:
    """Adaptive integration with breakpoint landing and ``u = 0`` event handling."""
    if not t1 > t0:
        raise ValueError("t1 must exceed t0")
    if not (1e-13 <= tol <= 1e-6):
        raise ValueError("tol must lie in [1e-13, 1e-6]")
    st = _Stepper(sys, tol)
    st.run(t0, z0, t1)
    traj = st.trajectory()
    if sys.mode == "S" and z0[0] >= 0 and float(traj.u.min()) < -10 * tol:
        traj.flags.append("weak-max: u dipped below -10 tol")
    return traj


def flow_end(sys: SystemInstance, z0, t0: float, t1: float, tol: float) -> tuple[float, float]:
    """Endpoint of the flow without storing the trajectory."""
    st = _Stepper(sys, max(tol, 1e-14), store=False)
    st.run(t0, z0, t1)
    return st.z_end


def poincare(sys: SystemInstance, z0, tol: float = 1e-10, jacobian: bool = True) -> dict:
    """Period map value and its central-difference Jacobian."""
    T = sys.period
    P = flow_end(sys, z0, 0.0, T, tol)
    out = {"P": P, "J": None}
    if jacobian:
        out["J"] = poincare_jacobian(sys, z0, tol)
    return out


def poincare_jacobian(sys: SystemInstance, z0, tol: float) -> np.ndarray:
    T = sys.period
    u0, v0 = float(z0[0]), float(z0[1])
    d = 1e-6 * (1.0 + math.hypot(u0, v0))
    ft = max(tol / 10, 1e-14)
    J = np.empty((2, 2))
    for j, (du, dv) in enumerate(((d, 0.0), (0.0, d))):
        p = flow_end(sys, (u0 + du, v0 + dv), 0.0, T, ft)
        m = flow_end(sys, (u0 - du, v0 - dv), 0.0, T, ft)
        J[0, j] = (p[0] - m[0]) / (2 * d)
        J[1, j] = (p[1] - m[1]) / (2 * d)
    return J


# ----------------------------------------------------------------------------
# period map of the autonomous quasi-homogeneous center

class EnergyTooSmall(IntegrationError):
    pass


def period_map(A: float, B: float, alpha: float, beta: float, E: float, tol: float = 1e-11) -> float:
    """First-return time of ``u' = B|v|^(alpha-1) v, v' = -A|u|^(beta-1) u`` at energy ``E``."""
    if min(A, B, alpha, beta, E) <= 0:
        raise ValueError("A, B, alpha, beta and E must be positive")
    u0 = ((beta + 1) * E / A) ** (1.0 / (beta + 1))
    vmax = ((alpha + 1) * E / B) ** (1.0 / (alpha + 1))
    if not u0 > 0 or u0 < 1e-150:
        raise EnergyTooSmall("initial amplitude underflows", 0.0, (u0, 0.0))
    sys = SystemInstance(power_h(alpha, B), power_g(beta, A), constant_weight(1.0, 1.0), 1.0, mode="S")
    st = _Stepper(sys, tol, atol=tol * min(u0, vmax), store=False, branch_switch=False)

    def stop(t, h, u, v, un, vn, cu, cv):
        if v > 0 and vn <= 0 and un > 0:
            lo, hi = 0.0, 1.0
            while (hi - lo) * h > 1e-15 * max(1.0, t):
                mid = 0.5 * (lo + hi)
                if _dense_at(v, cv, mid) > 0:
                    lo = mid
                else:
                    hi = mid
            return t + 0.5 * (lo + hi) * h
        return None

    tau = st.run(0.0, (u0, 0.0), math.inf, stop=stop)
    return float(tau)
