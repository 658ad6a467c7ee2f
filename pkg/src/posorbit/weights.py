"""T-periodic sign-changing weights and the constants derived from them.

A weight is a finite union of closed-form pieces on ``[0, T)``. Everything the
threshold formulas need (mean, norms, positivity arcs, ``gamma``, the window
mass ``A*``) is computed here and cached on construction.
"""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate as spi, optimize

from .errors import DeltaOutOfRange, NoPositivity, WeightSpecError

TIE_TOL = 1e-12
QUAD_TOL = 1e-10
DEFAULT_GRID = 10_000

# 8-point Gauss-Legendre on [0, 1]
_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)
_GL_X = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W


@dataclass(frozen=True)
class Interval:
    """Closed arc ``[sigma, tau]`` of the circle R/TZ; ``tau`` may exceed ``T``."""

    sigma: float
    tau: float

    @property
    def length(self) -> float:
        return self.tau - self.sigma

    def contains(self, t: float, period: float, tol: float = 0.0) -> bool:
        x = (t - self.sigma) % period
        return x <= self.length + tol or x >= period - tol


@dataclass(frozen=True)
class PositivityReport:
    intervals: tuple[Interval, ...]
    gamma: float


@dataclass
class WeightFn:
    period: float
    breakpoints: tuple[float, ...]
    scalar: Callable[[float], float]
    vector: Callable[[np.ndarray], np.ndarray]
    family: str = "custom"
    params: dict = field(default_factory=dict)
    smoothed: bool = False

    def __post_init__(self):
        T = self.period
        if not (math.isfinite(T) and T > 0):
            raise WeightSpecError(f"period must be positive and finite, got {T}")
        bps = tuple(float(b) for b in self.breakpoints)
        if not bps:
            raise WeightSpecError("empty piece list")
        if bps[0] != 0.0:
            bps = (0.0,) + bps
        if any(b1 <= b0 for b0, b1 in zip(bps, bps[1:])) or bps[-1] >= T:
            raise WeightSpecError("breakpoints must be strictly increasing in [0, T)")
        self.breakpoints = bps
        self._edges = np.array(bps + (T,))
        self._build_primitive()
        self._fill_caches()

    # evaluation -----------------------------------------------------------
    def __call__(self, t: float) -> float:
        return self.scalar(t)

    def values(self, ts) -> np.ndarray:
        return np.asarray(self.vector(np.asarray(ts, dtype=float)), dtype=float)

    @property
    def pieces(self) -> list[tuple[float, Callable[[float], float]]]:
        return [(b, self.scalar) for b in self.breakpoints]

    def breakpoints_in(self, t0: float, t1: float) -> list[float]:
        """Breakpoints of the periodic extension strictly inside ``(t0, t1)``."""
        T = self.period
        out = []
        k = math.floor(t0 / T)
        while k * T < t1:
            for b in self.breakpoints:
                x = k * T + b
                if t0 < x < t1:
                    out.append(x)
            k += 1
        return out

    # primitive ------------------------------------------------------------
    def _build_primitive(self, cells: int = 4096):
        T = self.period
        grid = np.linspace(0.0, T, cells + 1)
        edges = np.union1d(grid, self._edges)
        lo, hi = edges[:-1], edges[1:]
        # nudge nodes off the right edge of each cell so pieces evaluate consistently
        nodes = lo[:, None] + (hi - lo)[:, None] * _GL_X[None, :]
        vals = self.values(nodes.ravel()).reshape(nodes.shape)
        cell_int = (vals * _GL_W[None, :]).sum(axis=1) * (hi - lo)
        self._p_edges = edges
        self._p_cum = np.concatenate([[0.0], np.cumsum(cell_int)])

    def primitive(self, t):
        """``int_0^t a`` for any real ``t`` (vectorized)."""
        T = self.period
        t = np.asarray(t, dtype=float)
        k = np.floor(t / T)
        r = t - k * T
        idx = np.clip(np.searchsorted(self._p_edges, r, side="right") - 1, 0, len(self._p_edges) - 2)
        left = self._p_edges[idx]
        width = r - left
        nodes = left[..., None] + width[..., None] * _GL_X
        part = (self.values(nodes.reshape(-1)).reshape(nodes.shape) * _GL_W).sum(axis=-1) * width
        total = self._p_cum[-1]
        return k * total + self._p_cum[idx] + part

    def integral(self, t0: float, t1: float) -> float:
        return float(self.primitive(t1) - self.primitive(t0))

    # caches ---------------------------------------------------------------
    def _sign_changes(self, grid_n: int = DEFAULT_GRID) -> list[float]:
        T = self.period
        ts = np.linspace(0.0, T, grid_n + 1)
        vals = self.values(ts)
        out = []
        for i in np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)[0]:
            out.append(optimize.brentq(self.scalar, ts[i], ts[i + 1], xtol=1e-14))
        return out

    def _quad(self, f, cuts: Sequence[float]) -> float:
        pts = sorted(set([0.0, self.period] + list(self.breakpoints) + list(cuts)))
        total = 0.0
        for lo, hi in zip(pts, pts[1:]):
            if hi - lo <= 1e-12 * self.period:
                continue
            val, _ = spi.quad(f, lo, hi, epsabs=QUAD_TOL, epsrel=0.0, limit=200)
            total += val
        return total

    def _fill_caches(self):
        cuts = self._sign_changes()
        self.mean_integral = self._quad(self.scalar, [])
        self.l1_norm = self._quad(lambda t: abs(self.scalar(t)), cuts)
        self.neg_l1_norm = self._quad(lambda t: max(-self.scalar(t), 0.0), cuts)
        self.neg_sup = self._neg_sup()
        self.plateaus = self._plateaus()
        try:
            rep = positivity_intervals(self, DEFAULT_GRID)
            self.intervals, self.gamma = rep.intervals, rep.gamma
        except NoPositivity:
            self.intervals, self.gamma = (), None

    def _neg_sup(self) -> float:
        T = self.period
        ts = np.union1d(np.linspace(0.0, T, DEFAULT_GRID + 1), self._edges)
        neg = np.maximum(-self.values(ts), 0.0)
        i = int(np.argmax(neg))
        best = float(neg[i])
        if best > 0 and 0 < i < len(ts) - 1:
            res = optimize.minimize_scalar(
                lambda t: self.scalar(t), bounds=(ts[i - 1], ts[i + 1]), method="bounded",
                options={"xatol": 1e-12},
            )
            best = max(best, -float(res.fun))
        return best

    def _plateaus(self) -> list[tuple[float, float]]:
        T = self.period
        ts = np.linspace(0.0, T, DEFAULT_GRID, endpoint=False)
        flat = np.abs(self.values(ts)) <= TIE_TOL
        out, i, n = [], 0, len(ts)
        while i < n:
            if flat[i]:
                j = i
                while j + 1 < n and flat[j + 1]:
                    j += 1
                if j > i:
                    out.append((float(ts[i]), float(ts[j])))
                i = j + 1
            else:
                i += 1
        return out

    @property
    def positive_measure(self) -> float:
        return sum(J.length for J in self.intervals)

    def in_positivity(self, t: float, tol: float = 0.0) -> bool:
        return any(J.contains(t, self.period, tol) for J in self.intervals)

    def shifted(self, s: float) -> "WeightFn":
        """The weight ``t -> a(t - s)``."""
        T = self.period
        f, fv = self.scalar, self.vector
        bps = sorted({(b + s) % T for b in self.breakpoints} | {0.0})
        return WeightFn(
            T, tuple(bps), lambda t: f((t - s) % T), lambda ts: fv(np.mod(ts - s, T)),
            family=self.family, params={**self.params, "shift": s}, smoothed=self.smoothed,
        )

    def summary(self) -> dict:
        return {
            "family": self.family,
            "period": self.period,
            "mean_integral": self.mean_integral,
            "l1_norm": self.l1_norm,
            "neg_l1_norm": self.neg_l1_norm,
            "neg_sup": self.neg_sup,
            "intervals": [[J.sigma, J.tau] for J in self.intervals],
            "gamma": self.gamma,
            "plateaus": self.plateaus,
            "smoothed": self.smoothed,
            "quad_tol": QUAD_TOL,
        }


# construction ----------------------------------------------------------------

def _finite(name, x):
    x = float(x)
    if not math.isfinite(x):
        raise WeightSpecError(f"non-finite parameter {name}={x}")
    return x


def shifted_sine(amplitude=1.0, offset=0.0, phase=0.0, period=1.0) -> WeightFn:
    A, c, ph, T = (_finite(n, v) for n, v in
                   (("amplitude", amplitude), ("offset", offset), ("phase", phase), ("period", period)))
    w = 2.0 * math.pi / T
    return WeightFn(
        T, (0.0,),
        lambda t: A * math.sin(w * t + ph) + c,
        lambda ts: A * np.sin(w * ts + ph) + c,
        family="shifted-sine",
        params={"amplitude": A, "offset": c, "phase": ph, "period": T},
    )


def piecewise_constant(breaks: Sequence[float], values: Sequence[float], period=1.0) -> WeightFn:
    T = _finite("period", period)
    breaks = [_finite("breaks", b) for b in breaks]
    values = [_finite("values", v) for v in values]
    if not breaks or len(breaks) != len(values):
        raise WeightSpecError("piecewise-constant needs matching non-empty breaks and values")
    if breaks[0] != 0.0:
        raise WeightSpecError("first break must be 0")
    edges = np.array(breaks)
    vals = np.array(values)

    def scalar(t):
        return values[bisect.bisect_right(breaks, t % T) - 1]

    def vector(ts):
        return vals[np.searchsorted(edges, np.mod(ts, T), side="right") - 1]

    return WeightFn(T, tuple(breaks), scalar, vector, family="piecewise-constant",
                    params={"breaks": list(breaks), "values": list(values), "period": T})


def table_sampled(times: Sequence[float], values: Sequence[float], period=1.0) -> WeightFn:
    """Periodic piecewise-linear interpolation of sampled values."""
    T = _finite("period", period)
    times = [_finite("times", x) for x in times]
    values = [_finite("values", v) for v in values]
    if len(times) < 2 or len(times) != len(values):
        raise WeightSpecError("table-sampled needs at least two matching samples")
    xs = np.array(times + [times[0] + T])
    ys = np.array(values + [values[0]])
    if xs[0] != 0.0:
        raise WeightSpecError("first sample time must be 0")

    def vector(ts):
        return np.interp(np.mod(ts, T), xs, ys)

    def scalar(t):
        r = t % T
        i = bisect.bisect_right(times, r) - 1
        x0, x1, y0, y1 = xs[i], xs[i + 1], ys[i], ys[i + 1]
        return float(y0 + (y1 - y0) * (r - x0) / (x1 - x0))

    return WeightFn(T, tuple(times), scalar, vector, family="table-sampled",
                    params={"times": list(times), "values": list(values), "period": T},
                    smoothed=True)


FAMILIES = {
    "shifted-sine": shifted_sine,
    "piecewise-constant": piecewise_constant,
    "table-sampled": table_sampled,
}


def build_weight(spec: dict) -> WeightFn:
    """Build a weight from a config block ``{"family": ..., **params}``."""
    spec = dict(spec)
    family = spec.pop("family", None)
    if family not in FAMILIES:
        raise WeightSpecError(f"unknown weight family {family!r}")
    try:
        return FAMILIES[family](**spec)
    except TypeError as exc:
        raise WeightSpecError(f"bad parameters for {family}: {exc}") from None


# operations --------------------------------------------------------------------

def mean_negativity(a: WeightFn, tol_mean: float = 1e-12) -> dict:
    return {"integral": a.mean_integral, "pass": a.mean_integral < -tol_mean}


def _first_positive(a: WeightFn, lo: float, hi: float, tol: float) -> float:
    """Boundary between a nonpositive sample at ``lo`` and a positive one at ``hi``."""
    pos_hi = a(hi) > TIE_TOL
    while abs(hi - lo) > tol:
        mid = 0.5 * (lo + hi)
        if (a(mid) > TIE_TOL) == pos_hi:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def _snap(a: WeightFn, t: float) -> float:
    """Move an endpoint onto a breakpoint of ``a`` when bisection landed next to one."""
    T = a.period
    for b in a.breakpoints:
        k = round((t - b) / T)
        if abs(t - (b + k * T)) <= 1e-9 * T:
            return b + k * T
    return t


def positivity_intervals(a: WeightFn, grid_n: int = DEFAULT_GRID) -> PositivityReport:
    if grid_n < 1000:
        raise ValueError("grid_n must be at least 1000")
    T = a.period
    ts = np.linspace(0.0, T, grid_n, endpoint=False)
    pos = a.values(ts) > TIE_TOL
    if not pos.any():
        raise NoPositivity("weight is nonpositive on the sampling grid")
    if pos.all():
        return PositivityReport((Interval(0.0, T),), T)
    tol = T * 1e-13
    n = grid_n
    start = int(np.argmin(pos))  # a nonpositive sample
    intervals = []
    i = 0
    while i < n:
        k = (start + i) % n
        if pos[k]:
            j = i
            while j + 1 < n and pos[(start + j + 1) % n]:
                j += 1
            first = start + i  # unwrapped indices
            last = start + j
            if first >= n:
                first, last = first - n, last - n
            t_first = first * T / n
            t_last = last * T / n
            sigma = _snap(a, _first_positive(a, t_first - T / n, t_first, tol))
            tau = _snap(a, _first_positive(a, t_last + T / n, t_last, tol))
            shift = math.floor(sigma / T + 1e-9) * T
            intervals.append(Interval(sigma - shift, tau - shift))
            i = j + 1
        else:
            i += 1
    intervals.sort(key=lambda J: J.sigma)
    return PositivityReport(tuple(intervals), min(J.length for J in intervals))


def a_star(a: WeightFn, delta: float, scan_n: int = 2000) -> float:
    """Smallest mass of ``a`` over a length-``delta`` window inside a positivity arc."""
    if a.gamma is None:
        raise NoPositivity("weight has no positivity intervals")
    if not (delta > 0) or delta > a.gamma * (1 + 1e-12):
        raise DeltaOutOfRange(f"delta={delta} outside (0, gamma={a.gamma}]")
    best = math.inf
    for J in a.intervals:
        lo, hi = J.sigma, J.tau - delta
        if hi < lo:
            hi = lo
        om = np.linspace(lo, hi, scan_n)
        vals = a.primitive(om + delta) - a.primitive(om)
        i = int(np.argmin(vals))
        cand = float(vals[i])
        if hi > lo:
            b0, b1 = om[max(i - 1, 0)], om[min(i + 1, scan_n - 1)]
            res = optimize.minimize_scalar(
                lambda w: float(a.primitive(w + delta) - a.primitive(w)),
                bounds=(b0, b1), method="bounded", options={"xatol": 1e-13},
            )
            cand = min(cand, float(res.fun))
        best = min(best, cand)
    return best
