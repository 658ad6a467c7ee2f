"""Brouwer degree of planar maps by adaptive boundary winding, and the degree ledger.

The boundary of an axis-aligned rectangle is walked counterclockwise from the
midpoint of the right edge. The argument increments of ``F`` between
consecutive samples are summed; a sample pair is bisected while its increment
is at least ``pi/2`` (or ``pi/8`` when one endpoint has a small norm). Once no
pair needs refinement the sampled polygon and the true curve wind the same
number of times, which is what ``certified`` records.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import BoundaryBlowup, NotNested, StepUnderflow, Uncertified, ZeroOnBoundary
from .flow import SystemInstance, flow_end

ZERO_NORM = 1e-12
QUARTER = math.pi / 2
SMALL_NORM_REL = 1e-3


@dataclass(frozen=True)
class Rectangle:
    center: tuple[float, float]
    half: tuple[float, float]

    def __post_init__(self):
        if not (self.half[0] > 0 and self.half[1] > 0):
            raise ValueError("half-widths must be positive")

    @classmethod
    def square(cls, r: float, center=(0.0, 0.0)) -> "Rectangle":
        return cls((float(center[0]), float(center[1])), (float(r), float(r)))

    @property
    def perimeter(self) -> float:
        return 4.0 * (self.half[0] + self.half[1])

    def corners_s(self) -> list[float]:
        ru, rv = self.half
        P = self.perimeter
        return [rv / P, (rv + 2 * ru) / P, (3 * rv + 2 * ru) / P, (3 * rv + 4 * ru) / P]

    def point(self, s: float) -> tuple[float, float]:
        """Boundary point at normalized arc length ``s`` in ``[0, 1)``."""
        (uc, vc), (ru, rv) = self.center, self.half
        d = (s % 1.0) * self.perimeter
        legs = ((rv, lambda x: (uc + ru, vc + x)),
                (2 * ru, lambda x: (uc + ru - x, vc + rv)),
                (2 * rv, lambda x: (uc - ru, vc + rv - x)),
                (2 * ru, lambda x: (uc - ru + x, vc - rv)),
                (rv, lambda x: (uc + ru, vc - rv + x)))
        for length, fn in legs:
            if d <= length:
                return fn(d)
            d -= length
        return (uc + ru, vc)

    def contains_point(self, z, strict: bool = True) -> bool:
        (uc, vc), (ru, rv) = self.center, self.half
        du, dv = abs(z[0] - uc), abs(z[1] - vc)
        return (du < ru and dv < rv) if strict else (du <= ru and dv <= rv)

    def strictly_inside(self, other: "Rectangle") -> bool:
        """True when this box lies in the interior of ``other``."""
        (uc, vc), (ru, rv) = self.center, self.half
        (Uc, Vc), (Ru, Rv) = other.center, other.half
        return (uc - ru > Uc - Ru and uc + ru < Uc + Ru and vc - rv > Vc - Rv and vc + rv < Vc + Rv)

    def to_dict(self) -> dict:
        return {"center": list(self.center), "half": list(self.half)}


@dataclass
class DegreeResult:
    degree: int
    min_boundary_norm: float
    points_used: int
    certified: bool
    total_angle: float
    box: Rectangle
    samples: list = field(default_factory=list, repr=False)  # (s, u, v, Fu, Fv)
    label: str = ""

    def to_dict(self, with_samples: bool = False) -> dict:
        d = {"degree": self.degree, "min_boundary_norm": self.min_boundary_norm,
             "points_used": self.points_used, "certified": self.certified,
             "winding": self.total_angle / (2 * math.pi), "box": self.box.to_dict(), "label": self.label}
        if with_samples:
            d["samples"] = [list(r) for r in self.samples]
        return d

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["s", "u", "v", "Fu", "Fv"])
            for row in self.samples:
                wr.writerow([f"{x:.15g}" for x in row])


def _increment(a, b) -> float:
    """Signed angle from vector ``a`` to vector ``b`` in ``(-pi, pi]``."""
    return math.atan2(a[0] * b[1] - a[1] * b[0], a[0] * b[0] + a[1] * b[1])


def winding_degree(F: Callable, box: Rectangle, max_points: int = 4096, init_points: int = 64,
                   cache: Optional[dict] = None) -> DegreeResult:
    """Degree of ``F`` on ``box`` from its boundary winding number.

    ``F`` maps ``(u, v)`` to a pair. ``cache`` (dict keyed by the boundary
    parameter) lets callers share evaluations across repeated calls.
    """
    if max_points < 64:
        raise ValueError("max_points must be at least 64")
    cache = {} if cache is None else cache

    def ev(s):
        if s not in cache:
            z = box.point(s)
            fz = F(z)
            cache[s] = (z, (float(fz[0]), float(fz[1])))
        z, fz = cache[s]
        n = math.hypot(*fz)
        if not n >= ZERO_NORM:
            raise ZeroOnBoundary(f"|F| = {n:.3g} at boundary point {z}", s, z)
        return fz

    params = sorted(set(np.linspace(0.0, 1.0, init_points, endpoint=False).tolist()) | set(box.corners_s()))
    vals = [ev(s) for s in params]
    while True:
        norms = [math.hypot(*f) for f in vals]
        med = float(np.median(norms))
        n = len(params)
        incs = [_increment(vals[i], vals[(i + 1) % n]) for i in range(n)]
        flagged = []
        for i, d in enumerate(incs):
            small = min(norms[i], norms[(i + 1) % n]) < SMALL_NORM_REL * med
            if abs(d) >= QUARTER or (small and abs(d) >= QUARTER / 4):
                flagged.append(i)
        total = float(sum(incs))
        deg = int(round(total / (2 * math.pi)))
        if not flagged:
            samples = [(s, *cache[s][0], *cache[s][1]) for s in params]
            return DegreeResult(deg, min(norms), n, True, total, box, samples)
        if n + len(flagged) > max_points:
            samples = [(s, *cache[s][0], *cache[s][1]) for s in params]
            res = DegreeResult(deg, min(norms), n, False, total, box, samples)
            raise Uncertified(f"{len(flagged)} boundary arcs still unresolved at {n} points", res)
        new_params, new_vals = [], []
        for i in range(n):
            new_params.append(params[i])
            new_vals.append(vals[i])
            if i in flagged:
                s0 = params[i]
                s1 = params[i + 1] if i + 1 < n else 1.0
                mid = 0.5 * (s0 + s1)
                new_params.append(mid)
                new_vals.append(ev(mid))
        params, vals = new_params, new_vals


# ----------------------------------------------------------------------------
# averaged field and Poincare residual

def averaged_field(sys: SystemInstance) -> Callable:
    """``(U, V) -> (-h#(V), f#(U))`` with ``h#``, ``f#`` the period means of ``h`` and ``f``.

    For ``U > 0`` the mean of ``f`` is ``lam g(U) mean(a)``; for ``U <= 0`` it
    is ``-U``.
    """
    if sys.mode != "S-tilde":
        raise ValueError("the averaged field is defined for the extended system")
    mean_a = sys.a.mean_integral / sys.period
    lam, g, h = sys.lam, sys.g, sys.h

    def f_sharp(U):
        return lam * g.scalar(U) * mean_a if U > 0 else -U

    def F(z):
        U, V = z
        return (-h.mean(V), f_sharp(U))

    F.h_sharp = h.mean
    F.f_sharp = f_sharp
    return F


def small_ball_degree(sys: SystemInstance, r0: float, max_points: int = 4096) -> DegreeResult:
    if not r0 > 0:
        raise ValueError("r0 must be positive")
    res = winding_degree(averaged_field(sys), Rectangle.square(r0), max_points)
    res.label = "averaged field, small box"
    return res


def poincare_residual(sys: SystemInstance, tol: float) -> Callable:
    T = sys.period

    def F(z):
        P = flow_end(sys, z, 0.0, T, tol)
        return (z[0] - P[0], z[1] - P[1])
    return F


def poincare_residual_degree(sys: SystemInstance, box: Rectangle, tol: float = 1e-9,
                             max_points: int = 2048, cache: Optional[dict] = None) -> DegreeResult:
    """Degree of ``z -> z - P_T(z)`` on ``box``."""
    if sys.mode != "S-tilde":
        raise ValueError("the Poincare residual degree uses the extended system")
    F = poincare_residual(sys, tol)
    cache = {} if cache is None else cache

    def guarded(z):
        try:
            return F(z)
        except StepUnderflow as exc:
            raise _Blow(z, exc) from None

    try:
        res = winding_degree(guarded, box, max_points, cache=cache)
    except _Blow as b:
        s_hit = _param_of(box, b.z)
        known = sorted(cache)
        lo = max([s for s in known if s < s_hit], default=0.0)
        hi = min([s for s in known if s > s_hit], default=1.0)
        raise BoundaryBlowup(f"flow leaves every bounded set from boundary point {b.z}", (lo, hi)) from None
    res.label = "Poincare residual"
    return res


class _Blow(Exception):
    def __init__(self, z, exc):
        super().__init__(str(exc))
        self.z = z


def _param_of(box: Rectangle, z) -> float:
    ss = np.linspace(0, 1, 4001)
    pts = np.array([box.point(s) for s in ss])
    return float(ss[np.argmin(np.hypot(pts[:, 0] - z[0], pts[:, 1] - z[1]))])


def annulus_degree(inner: DegreeResult, outer: DegreeResult) -> int:
    """``deg(outer) - deg(inner)``: the degree on the region between the boxes."""
    if not (inner.certified and outer.certified):
        raise NotNested("both degrees must be certified")
    if not inner.box.strictly_inside(outer.box):
        raise NotNested("inner box is not strictly inside the outer box")
    return outer.degree - inner.degree


# ----------------------------------------------------------------------------
# large box: largest blow-up-free box inside the threshold box

def _blows(sys: SystemInstance, z, tol: float) -> bool:
    try:
        flow_end(sys, z, 0.0, sys.period, tol)
        return False
    except StepUnderflow:
        return True


def fit_large_box(sys: SystemInstance, R: float, R_prime: float, enclose: Sequence = (),
                  inner: Optional[Rectangle] = None, n_boundary: int = 128, n_interior: int = 15,
                  tol: float = 1e-6, shrink: float = 0.5, margin: float = 1.25) -> tuple[Rectangle, dict]:
    """Shrink the box ``[-R, R] x [-R', R']`` until the flow is defined over a full period on it.

    Each dimension is shrunk by ``shrink`` while blow-up shows up on the
    boundary or on a coarse interior grid, but never below the floor needed to
    contain ``enclose`` (scaled by ``margin``) and ``inner``. Returns the box
    and a record of the clipping.
    """
    fu = max([margin * abs(z[0]) for z in enclose] + [0.0])
    fv = max([margin * abs(z[1]) for z in enclose] + [0.0])
    if inner is not None:
        fu = max(fu, margin * (abs(inner.center[0]) + inner.half[0]))
        fv = max(fv, margin * (abs(inner.center[1]) + inner.half[1]))
    ru, rv = float(R), float(R_prime)
    if ru <= fu or rv <= fv:
        raise BoundaryBlowup(f"threshold box ({R:g}, {R_prime:g}) does not contain the required floor "
                             f"({fu:g}, {fv:g})")
    history = []
    ss = np.linspace(0, 1, n_boundary, endpoint=False)
    while True:
        box = Rectangle((0.0, 0.0), (ru, rv))
        side_hit = {"u": False, "v": False}
        for s in ss:
            z = box.point(s)
            if _blows(sys, z, tol):
                on_v_edge = abs(abs(z[0]) - ru) <= 1e-12 * ru
                side_hit["u" if on_v_edge else "v"] = True
        interior_hit = False
        if not any(side_hit.values()):
            for u in np.linspace(-ru, ru, n_interior):
                for v in np.linspace(-rv, rv, n_interior):
                    if _blows(sys, (u, v), tol):
                        interior_hit = True
                        break
                if interior_hit:
                    break
        history.append({"half": [ru, rv], "edge_u": side_hit["u"], "edge_v": side_hit["v"],
                        "interior": interior_hit})
        if not (side_hit["u"] or side_hit["v"] or interior_hit):
            return box, {"requested": [R, R_prime], "used": [ru, rv], "floor": [fu, fv],
                         "clipped": (ru, rv) != (R, R_prime), "steps": history}
        # shrink the dimension with the most room above its floor
        room_u, room_v = ru / fu if fu > 0 else math.inf, rv / fv if fv > 0 else math.inf
        if room_u <= 1.0 + 1e-12 and room_v <= 1.0 + 1e-12:
            raise BoundaryBlowup("blow-up cannot be removed without losing the floor", {"half": [ru, rv]})
        if room_v >= room_u:
            rv = max(shrink * rv, fv)
        else:
            ru = max(shrink * ru, fu)
