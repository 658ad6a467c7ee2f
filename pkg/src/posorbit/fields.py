"""The nonlinear ingredients h, g and phi of the planar system.

``h(t, s)`` is the (possibly time-dependent) inverse of a phi-Laplacian
homeomorphism, ``g`` the superlinear nonlinearity, ``phi`` the homeomorphism
itself. Every object carries a numpy-capable evaluator (used on grids) and a
scalar fast path (used inside the integrator).

Sign convention for the envelopes, used everywhere in the package: for
``s >= 0`` the lower envelope is ``min_t h(t, s)`` and the upper one is
``max_t h(t, s)``; for ``s < 0`` the two swap, so that
``lower(s)*s <= h(t,s)*s <= upper(s)*s`` always holds. In words: ``lower`` is
the envelope of smaller magnitude, ``upper`` the one of larger magnitude.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate as spi, optimize

from .errors import InverseOutOfRange, NoBracket, PosOrbitError

QUAD_TOL = 1e-10


class FieldSpecError(PosOrbitError):
    pass


def _signed_pow(s, e):
    return np.sign(s) * np.abs(s) ** e


def _signed_pow_scalar(s, e):
    if s > 0:
        return s ** e
    if s < 0:
        return -((-s) ** e)
    return 0.0


# ----------------------------------------------------------------------------
# h

@dataclass
class HOperator:
    fn: Callable  # numpy-capable (t, s) -> h
    scalar: Callable[[float, float], float]
    family: str = "custom"
    params: dict = field(default_factory=dict)
    time_dependent: bool = False
    period: float = 1.0
    t_grid_n: int = 1000
    # closed-form primitive of the lower envelope, when the family has one
    lower_primitive_closed: Optional[Callable[[float], float]] = None

    def __post_init__(self):
        self._tgrid = np.linspace(0.0, self.period, self.t_grid_n, endpoint=False)

    def __call__(self, t: float, s: float) -> float:
        return self.scalar(t, s)

    def _extremum(self, s: float, want_max: bool) -> float:
        if not self.time_dependent:
            return float(self.scalar(0.0, s))
        vals = np.asarray(self.fn(self._tgrid, s), dtype=float)
        i = int(np.argmax(vals) if want_max else np.argmin(vals))
        dt = self.period / self.t_grid_n
        # x4 refinement around the grid extremizer, then a bounded polish
        fine = np.linspace(self._tgrid[i] - dt, self._tgrid[i] + dt, 9)
        fvals = np.asarray(self.fn(fine, s), dtype=float)
        j = int(np.argmax(fvals) if want_max else np.argmin(fvals))
        best = float(fvals[j])
        lo, hi = fine[max(j - 1, 0)], fine[min(j + 1, 8)]
        sign = -1.0 if want_max else 1.0
        res = optimize.minimize_scalar(lambda t: sign * self.scalar(t, s), bounds=(lo, hi),
                                       method="bounded", options={"xatol": 1e-10})
        cand = sign * float(res.fun)
        return max(best, cand) if want_max else min(best, cand)

    def lower(self, s: float) -> float:
        """Envelope of smaller magnitude (h underline)."""
        if s == 0:
            return 0.0
        return self._extremum(s, want_max=s < 0)

    def upper(self, s: float) -> float:
        """Envelope of larger magnitude (h overline)."""
        if s == 0:
            return 0.0
        return self._extremum(s, want_max=s > 0)

    def mean(self, s: float) -> float:
        """``(1/T) int_0^T h(t, s) dt``."""
        if not self.time_dependent:
            return float(self.scalar(0.0, s))
        val, _ = spi.quad(lambda t: self.scalar(t, s), 0.0, self.period,
                                epsabs=QUAD_TOL, epsrel=0.0, limit=200)
        return val / self.period

    def structure_violations(self, s_grid_n: int = 1000, t_grid_n: int | None = None) -> list[str]:
        """Check (h0), (h1) and ``h(t,s) s > 0`` on sampled grids."""
        pos = np.logspace(-6, 6, s_grid_n // 2)
        s = np.concatenate([-pos[::-1], [0.0], pos])
        ts = self._tgrid if t_grid_n is None else np.linspace(0, self.period, t_grid_n, endpoint=False)
        if not self.time_dependent:
            ts = ts[:1]
        vals = np.asarray(self.fn(ts[:, None], s[None, :]), dtype=float)
        out = []
        if not np.all(vals[:, s_grid_n // 2] == 0.0):
            out.append("h(t,0) != 0")
        if not np.all(np.diff(vals, axis=1) > 0):
            out.append("s -> h(t,s) not strictly increasing")
        nz = s != 0
        if not np.all(vals[:, nz] * s[nz] > 0):
            out.append("h(t,s) s > 0 fails")
        return out


def identity_h() -> HOperator:
    return HOperator(lambda t, s: np.asarray(s, dtype=float) + 0.0 * np.asarray(t, dtype=float),
                     lambda t, s: s, family="identity", params={},
                     lower_primitive_closed=lambda s: 0.5 * s * s)


def power_h(alpha: float, coeff: float = 1.0) -> HOperator:
    """``h(s) = coeff |s|^(alpha-1) s``."""
    if not (alpha > 0 and coeff > 0):
        raise FieldSpecError("power h needs alpha > 0 and coeff > 0")
    return HOperator(
        lambda t, s: coeff * _signed_pow(np.asarray(s, dtype=float), alpha) + 0.0 * np.asarray(t, dtype=float),
        lambda t, s: coeff * _signed_pow_scalar(s, alpha),
        family="power", params={"alpha": alpha, "coeff": coeff},
        lower_primitive_closed=lambda s: coeff * abs(s) ** (alpha + 1) / (alpha + 1),
    )


def minkowski_h() -> HOperator:
    """Inverse of the relativistic operator: ``s / sqrt(1 + s^2)``."""
    return HOperator(
        lambda t, s: np.asarray(s, dtype=float) / np.sqrt(1.0 + np.asarray(s, dtype=float) ** 2)
        + 0.0 * np.asarray(t, dtype=float),
        lambda t, s: s / math.sqrt(1.0 + s * s),
        family="minkowski", params={},
        lower_primitive_closed=lambda s: s * s / (math.sqrt(1.0 + s * s) + 1.0),  # cancellation-free
    )


def pt_power_h(p_mean: float = 3.0, p_amp: float = 1.0, phase: float = 0.0, period: float = 1.0) -> HOperator:
    """``h(t, v) = |v|^(1/(p(t)-1)) sign(v)`` with ``p(t) = p_mean + p_amp sin(2 pi t/T + phase)``."""
    if p_mean - abs(p_amp) <= 1:
        raise FieldSpecError("p(t) must stay above 1")
    w = 2 * math.pi / period

    def p(t):
        return p_mean + p_amp * np.sin(w * np.asarray(t, dtype=float) + phase)

    def fn(t, s):
        return _signed_pow(np.asarray(s, dtype=float), 1.0 / (p(t) - 1.0))

    def scalar(t, s):
        return _signed_pow_scalar(s, 1.0 / (p_mean + p_amp * math.sin(w * t + phase) - 1.0))

    h = HOperator(fn, scalar, family="pt-power",
                  params={"p_mean": p_mean, "p_amp": p_amp, "phase": phase, "period": period},
                  time_dependent=True, period=period)
    h.p_lower = p_mean - abs(p_amp)
    h.p_upper = p_mean + abs(p_amp)
    return h


def phi_inverse_h(phi: "PhiOperator") -> HOperator:
    return HOperator(
        lambda t, s: np.vectorize(phi.inverse)(np.asarray(s, dtype=float) + 0.0 * np.asarray(t, dtype=float)),
        lambda t, s: phi.inverse(s),
        family="phi-inverse", params={"phi": phi.family, **phi.params},
    )


def custom_h(fn, scalar=None, time_dependent=False, period=1.0) -> HOperator:
    return HOperator(fn, scalar or (lambda t, s: float(fn(t, s))), family="custom",
                     time_dependent=time_dependent, period=period)


def h_envelopes(h: HOperator, s: float) -> dict:
    return {"h_lower": h.lower(s), "h_upper": h.upper(s)}


# ----------------------------------------------------------------------------
# g

@dataclass
class GNonlinearity:
    fn: Callable  # numpy-capable s -> g(s), s >= 0
    scalar: Callable[[float], float]
    family: str = "custom"
    params: dict = field(default_factory=dict)
    derivative: Optional[Callable[[float], float]] = None
    primitive_closed: Optional[Callable[[float], float]] = None

    def __call__(self, s: float) -> float:
        return self.scalar(s)

    def deriv(self, s: float) -> float:
        if self.derivative is not None:
            return self.derivative(s)
        d = 1e-6 * (1.0 + abs(s))
        lo = max(s - d, 0.0)
        return (self.scalar(s + d) - self.scalar(lo)) / (s + d - lo)

    def _scan(self, lo: float, hi: float, want_max: bool, n: int = 10_000) -> float:
        xs = np.linspace(lo, hi, n)
        vals = np.asarray(self.fn(xs), dtype=float)
        i = int(np.argmax(vals) if want_max else np.argmin(vals))
        best = float(vals[i])
        if 0 < i < n - 1:
            sign = -1.0 if want_max else 1.0
            res = optimize.minimize_scalar(lambda x: sign * self.scalar(x), bounds=(xs[i - 1], xs[i + 1]),
                                           method="bounded", options={"xatol": 1e-12 * max(1.0, hi)})
            cand = sign * float(res.fun)
            best = max(best, cand) if want_max else min(best, cand)
        return best

    def upper(self, s: float) -> float:
        """``max_{[0, s]} g``."""
        return self._scan(0.0, s, True)

    def lower(self, s: float) -> float:
        """``min_{[s/2, s]} g``."""
        return self._scan(0.5 * s, s, False)

    def primitive(self, s: float) -> float:
        if self.primitive_closed is not None:
            return self.primitive_closed(s)
        val, _ = spi.quad(self.scalar, 0.0, s, epsabs=QUAD_TOL, epsrel=1e-12, limit=200)
        return val

    def star_violations(self, lo: float = 1e-3, hi: float = 1e3, n: int = 200) -> list[str]:
        out = []
        if self.scalar(0.0) != 0.0:
            out.append("g(0) != 0")
        s = np.logspace(math.log10(lo), math.log10(hi), n)
        if not np.all(np.asarray(self.fn(s)) > 0):
            out.append("g(s) > 0 fails on the sampled grid")
        return out


def power_g(beta: float, coeff: float = 1.0) -> GNonlinearity:
    if not beta > 0:
        raise FieldSpecError("power g needs beta > 0")
    return GNonlinearity(
        lambda s: coeff * np.asarray(s, dtype=float) ** beta,
        lambda s: coeff * s ** beta if s > 0 else 0.0,
        family="power", params={"beta": beta, "coeff": coeff},
        derivative=lambda s: coeff * beta * s ** (beta - 1) if s > 0 else (coeff if beta == 1 else 0.0),
        primitive_closed=lambda s: coeff * s ** (beta + 1) / (beta + 1),
    )


def modulated_power_g(beta: float, base: float = 1.5, amp: float = 1.0) -> GNonlinearity:
    """``g(s) = s^beta (base + amp sin s)``; needs ``base > amp`` to stay positive."""
    if base <= abs(amp):
        raise FieldSpecError("modulated power needs base > |amp|")
    return GNonlinearity(
        lambda s: np.asarray(s, dtype=float) ** beta * (base + amp * np.sin(s)),
        lambda s: s ** beta * (base + amp * math.sin(s)) if s > 0 else 0.0,
        family="modulated-power", params={"beta": beta, "base": base, "amp": amp},
        derivative=lambda s: (beta * s ** (beta - 1) * (base + amp * math.sin(s)) + s ** beta * amp * math.cos(s))
        if s > 0 else 0.0,
    )


def custom_g(fn, scalar=None, derivative=None) -> GNonlinearity:
    return GNonlinearity(fn, scalar or (lambda s: float(fn(s))), family="custom", derivative=derivative)


def g_envelopes(g: GNonlinearity, s: float) -> dict:
    if not s > 0:
        raise ValueError("g envelopes need s > 0")
    return {"g_upper": g.upper(s), "g_lower": g.lower(s)}


# ----------------------------------------------------------------------------
# primitives of the lower h-envelope

def lower_primitive(h: HOperator, s: float) -> float:
    """``H(s) = int_0^s lower(xi) d xi``; nonnegative on both sides of 0."""
    if h.lower_primitive_closed is not None:
        return h.lower_primitive_closed(s)
    val, _ = spi.quad(h.lower, 0.0, s, epsabs=QUAD_TOL, epsrel=1e-12, limit=200)
    return val


def lower_primitive_inverse(h: HOperator, x: float, eta: float, side: str) -> float:
    """Left (``side='l'``, in ``[-eta, 0]``) or right (``'r'``) inverse of ``H``."""
    cap = min(lower_primitive(h, -eta), lower_primitive(h, eta))
    if x < 0 or x > cap:
        raise InverseOutOfRange(f"value {x} outside [0, {cap}] for eta={eta}")
    if x == 0:
        return 0.0
    sign = 1.0 if side == "r" else -1.0
    # solve in log|s| so tiny targets keep full relative accuracy
    z_hi = math.log(eta)
    if lower_primitive(h, sign * eta) == x:
        return sign * eta
    z_lo = z_hi - 1.0
    while lower_primitive(h, sign * math.exp(z_lo)) >= x:
        z_lo -= 2.0 * (z_hi - z_lo)
        if z_lo < -700:
            return 0.0

    def F(z):
        H = lower_primitive(h, sign * math.exp(z))
        return (math.log(H) if H > 0 else -1e300) - math.log(x)

    return sign * math.exp(optimize.brentq(F, z_lo, z_hi, xtol=1e-15, rtol=1e-15))


def primitives(field_obj, s: float) -> float:
    """``H`` (lower-envelope primitive) for an h, ``G`` for a g."""
    if isinstance(field_obj, HOperator):
        return lower_primitive(field_obj, s)
    if s < 0:
        raise ValueError("G is defined for s >= 0")
    return field_obj.primitive(s)


# ----------------------------------------------------------------------------
# phi

@dataclass
class PhiOperator:
    fn: Callable  # numpy-capable
    scalar: Callable[[float], float]
    family: str = "custom"
    params: dict = field(default_factory=dict)
    closed_inverse: Optional[Callable[[float], float]] = None
    domain: tuple[float, float] = (-math.inf, math.inf)

    def __call__(self, s: float) -> float:
        return self.scalar(s)

    def inverse(self, w: float) -> float:
        return invert_phi(self, w)


def p_laplacian(p: float) -> PhiOperator:
    if not p > 1:
        raise FieldSpecError("p-Laplacian needs p > 1")
    return PhiOperator(
        lambda s: _signed_pow(np.asarray(s, dtype=float), p - 1),
        lambda s: _signed_pow_scalar(s, p - 1),
        family="p-laplacian", params={"p": p},
        closed_inverse=lambda w: _signed_pow_scalar(w, 1.0 / (p - 1)),
    )


def pq_laplacian(p: float, q: float) -> PhiOperator:
    if not (1 < q < p):
        raise FieldSpecError("(p,q)-Laplacian needs 1 < q < p")
    return PhiOperator(
        lambda s: _signed_pow(np.asarray(s, dtype=float), p - 1) + _signed_pow(np.asarray(s, dtype=float), q - 1),
        lambda s: _signed_pow_scalar(s, p - 1) + _signed_pow_scalar(s, q - 1),
        family="pq-laplacian", params={"p": p, "q": q},
    )


def minkowski_phi() -> PhiOperator:
    return PhiOperator(
        lambda s: np.asarray(s, dtype=float) / np.sqrt(1.0 - np.asarray(s, dtype=float) ** 2),
        lambda s: s / math.sqrt(1.0 - s * s),
        family="minkowski", params={},
        closed_inverse=lambda w: w / math.sqrt(1.0 + w * w),
        domain=(-1.0, 1.0),
    )


def exp_odd_phi() -> PhiOperator:
    """``sign(s) (exp|s| - 1)``: grows too fast for the sigma-condition at infinity."""
    def fn(s):
        s = np.asarray(s, dtype=float)
        with np.errstate(over="ignore"):
            return np.sign(s) * np.expm1(np.abs(s))

    def scalar(s):
        try:
            return math.copysign(math.expm1(abs(s)), s)
        except OverflowError:
            return math.copysign(math.inf, s)

    return PhiOperator(fn, scalar, family="exp-odd", params={})


def custom_phi(fn, scalar=None, inverse=None, domain=(-math.inf, math.inf)) -> PhiOperator:
    return PhiOperator(fn, scalar or (lambda s: float(fn(s))), family="custom",
                       closed_inverse=inverse, domain=domain)


BRACKET_CAP = 1e100


def invert_phi(phi: PhiOperator, w: float) -> float:
    """Solve ``phi(s) = w``; closed form when the family has one."""
    if phi.closed_inverse is not None:
        return phi.closed_inverse(w)
    if w == 0:
        return 0.0
    f = phi.scalar
    lo_dom, hi_dom = phi.domain
    k = 0
    while True:
        step = 2.0 ** k
        lo = -step if lo_dom == -math.inf else lo_dom * (1 - 2.0 ** -(k + 1))
        hi = step if hi_dom == math.inf else hi_dom * (1 - 2.0 ** -(k + 1))
        if f(lo) <= w <= f(hi):
            break
        k += 1
        if step > BRACKET_CAP:
            raise NoBracket(f"cannot bracket phi(s) = {w} within |s| <= {BRACKET_CAP:g}")
    s = optimize.brentq(lambda x: f(x) - w, lo, hi, xtol=1e-300, rtol=1e-15, maxiter=500)
    # a couple of secant polishes in case brentq stopped a few ulps short
    for _ in range(3):
        r = f(s) - w
        if abs(r) <= 1e-12 * (1 + abs(w)):
            break
        d = 1e-8 * (1 + abs(s))
        slope = (f(s + d) - f(s - d)) / (2 * d)
        if slope <= 0:
            break
        s -= r / slope
    return s


# ----------------------------------------------------------------------------
# config plumbing

H_FAMILIES = {
    "identity": lambda **kw: identity_h(),
    "power": lambda alpha, coeff=1.0: power_h(alpha, coeff),
    "minkowski": lambda **kw: minkowski_h(),
    "pt-power": pt_power_h,
    "phi-inverse": lambda phi, **kw: phi_inverse_h(build_phi({"family": phi, **kw})),
}

G_FAMILIES = {
    "power": power_g,
    "modulated-power": modulated_power_g,
}

PHI_FAMILIES = {
    "p-laplacian": p_laplacian,
    "pq-laplacian": pq_laplacian,
    "minkowski": lambda **kw: minkowski_phi(),
    "exp-odd": lambda **kw: exp_odd_phi(),
}


def _build(spec: dict, table: dict, kind: str):
    spec = dict(spec)
    family = spec.pop("family", None)
    if family not in table:
        raise FieldSpecError(f"unknown {kind} family {family!r}")
    try:
        return table[family](**spec)
    except TypeError as exc:
        raise FieldSpecError(f"bad parameters for {kind} family {family}: {exc}") from None


def build_h(spec: dict) -> HOperator:
    return _build(spec, H_FAMILIES, "h")


def build_g(spec: dict) -> GNonlinearity:
    return _build(spec, G_FAMILIES, "g")


def build_phi(spec: dict) -> PhiOperator:
    return _build(spec, PHI_FAMILIES, "phi")
