"""Numerical auditors for the structural hypotheses and the explicit thresholds.

Every asymptotic condition becomes a finite proxy: a ratio is sampled on a
log grid covering at least four decades, a straight line is fitted to the
log-log data, and the verdict is read from the fitted exponent with a margin
``slope_tol``. Verdicts are ``pass``, ``fail`` or ``inconclusive``; the last
one is only returned when the exponent sits within ``slope_tol`` of the
decision boundary and the ratios are not flat enough to call it.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import integrate as spi

from .errors import EtaInfeasible, InverseOutOfRange, NoRFound, RTooSmall
from .fields import GNonlinearity, HOperator, PhiOperator, lower_primitive, lower_primitive_inverse
from .flow import SystemInstance, default_w
from .weights import WeightFn, a_star, mean_negativity

SLOPE_TOL = 0.1
MU = 1e-3
PASS, FAIL, INCONCLUSIVE = "pass", "fail", "inconclusive"


@dataclass
class CheckReport:
    condition: str
    verdict: str
    witness: list = field(default_factory=list)  # (probe value, ratio)
    slope: float = float("nan")
    notes: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.verdict == PASS

    def to_dict(self) -> dict:
        d = asdict(self)
        d["witness"] = [[float(x), float(y)] for x, y in self.witness]
        return d


def combine(verdicts: Sequence[str]) -> str:
    """All pass -> pass; any fail -> fail; otherwise inconclusive."""
    if any(v == FAIL for v in verdicts):
        return FAIL
    if all(v == PASS for v in verdicts):
        return PASS
    return INCONCLUSIVE


def _fit_slope(x: np.ndarray, y: np.ndarray) -> float:
    return float(np.polyfit(np.log10(x), np.log10(y), 1)[0])


def limit_verdict(s: np.ndarray, r: np.ndarray, want: str, toward: str,
                  slope_tol: float = SLOPE_TOL, span: float = 1e3) -> tuple[str, float, str]:
    """Decide ``lim r`` as ``s -> 0`` (``toward='zero'``) or ``s -> inf``.

    ``want`` is one of ``'zero'`` (r -> 0), ``'infinity'`` (r -> inf),
    ``'bounded'`` (limsup finite) or ``'positive'`` (liminf > 0). Returns the
    verdict, the fitted log-log slope and a note.
    """
    s = np.asarray(s, dtype=float)
    r = np.asarray(r, dtype=float)
    if not np.all(np.isfinite(r)):
        return FAIL, float("nan"), "non-finite ratio on the probe grid"
    if want == "zero" and np.any(r == 0):
        zero_tail = r[np.argmin(s)] == 0 if toward == "zero" else r[np.argmax(s)] == 0
        if zero_tail:
            return PASS, float("nan"), "ratio vanishes numerically at the limit end"
    if np.any(r <= 0):
        return FAIL, float("nan"), "nonpositive ratio on the probe grid"
    slope = _fit_slope(s, r)
    e = -slope if toward == "zero" else slope  # growth exponent toward the limit
    order = np.argsort(s) if toward == "infinity" else np.argsort(-s)
    first, last = r[order[0]], r[order[-1]]
    flat = r.max() / r.min() < 10.0
    if want == "infinity":
        if e > slope_tol and last > span * first:
            return PASS, slope, ""
        if e < -slope_tol or (abs(e) <= slope_tol and flat):
            return FAIL, slope, ""
        return INCONCLUSIVE, slope, "growth too slow to call on the probe grid"
    if want == "zero":
        if e < -slope_tol and last < first / span:
            return PASS, slope, ""
        if e > slope_tol or (abs(e) <= slope_tol and flat):
            return FAIL, slope, ""
        return INCONCLUSIVE, slope, "decay too slow to call on the probe grid"
    if want == "bounded":
        if e < -slope_tol or (abs(e) <= slope_tol and flat):
            return PASS, slope, ""
        if e > slope_tol:
            return FAIL, slope, ""
        return INCONCLUSIVE, slope, "ratio drifts without a clear exponent"
    if want == "positive":
        if e > slope_tol or (abs(e) <= slope_tol and flat):
            return PASS, slope, ""
        if e < -slope_tol:
            return FAIL, slope, ""
        return INCONCLUSIVE, slope, "ratio drifts without a clear exponent"
    raise ValueError(f"unknown limit kind {want!r}")


def _tgrid(h: HOperator, refine: int) -> np.ndarray:
    if not h.time_dependent:
        return np.zeros(1)
    return np.linspace(0.0, h.period, h.t_grid_n * refine, endpoint=False)


def _h_grid(h: HOperator, ts: np.ndarray, x: np.ndarray) -> np.ndarray:
    """``h(t, x)`` with t down the rows and x along the columns."""
    with np.errstate(over="ignore", invalid="ignore"):
        return np.asarray(h.fn(ts[:, None], np.asarray(x, dtype=float)[None, :]), dtype=float)


def _g_grid(g: GNonlinearity, s: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore", invalid="ignore", under="ignore"):
        return np.asarray(g.fn(s), dtype=float)


def default_k_list(a: Optional[WeightFn] = None) -> list[float]:
    ks = [1.0, -1.0, 10.0, -10.0]
    if a is not None:
        ks += [a.l1_norm, -a.l1_norm]
    return ks


# ----------------------------------------------------------------------------
# superlinearity

def check_superlinear_zero(h: HOperator, g: GNonlinearity, K_list: Optional[Sequence[float]] = None,
                           a: Optional[WeightFn] = None, refine: int = 1,
                           slope_tol: float = SLOPE_TOL) -> CheckReport:
    """``max_t |h(t, K g(s))| / s -> 0`` as ``s -> 0+`` for every ``K``."""
    K_list = list(K_list) if K_list is not None else default_k_list(a)
    if not K_list:
        raise ValueError("K_list must be nonempty")
    s = np.logspace(-8, -1, 29 * refine)
    ts = _tgrid(h, refine)
    gs = _g_grid(g, s)
    verdicts, per_k, witness, slopes, notes = [], {}, [], [], []
    for K in K_list:
        if K == 0:
            continue  # h(t, 0) = 0 makes this case trivial
        r = np.max(np.abs(_h_grid(h, ts, K * gs)), axis=0) / s
        v, sl, note = limit_verdict(s, r, "zero", "zero", slope_tol)
        verdicts.append(v)
        slopes.append(sl)
        per_k[str(K)] = {"verdict": v, "slope": sl}
        if note:
            notes.append(f"K={K}: {note}")
        if not witness:
            witness = list(zip(s.tolist(), r.tolist()))
    return CheckReport("superlinear-zero", combine(verdicts), witness,
                       float(np.nanmin(slopes)) if slopes else float("nan"), notes, {"per_K": per_k})


def check_superlinear_infinity(h: HOperator, g: GNonlinearity, K_list: Optional[Sequence[float]] = None,
                               a: Optional[WeightFn] = None, refine: int = 1,
                               slope_tol: float = SLOPE_TOL) -> CheckReport:
    """``min_t sign(K) h(t, K g(s)) / s -> +inf`` as ``s -> inf`` for every ``K != 0``."""
    K_list = list(K_list) if K_list is not None else default_k_list(a)
    if any(K == 0 for K in K_list):
        raise ValueError("K_list must not contain 0")
    s = np.logspace(1, 8, 29 * refine)
    ts = _tgrid(h, refine)
    gs = _g_grid(g, s)
    verdicts, per_k, witness, slopes, notes = [], {}, [], [], []
    for K in K_list:
        r = np.min(math.copysign(1.0, K) * _h_grid(h, ts, K * gs), axis=0) / s
        v, sl, note = limit_verdict(s, r, "infinity", "infinity", slope_tol)
        verdicts.append(v)
        slopes.append(sl)
        per_k[str(K)] = {"verdict": v, "slope": sl}
        if note:
            notes.append(f"K={K}: {note}")
        if not witness:
            witness = list(zip(s.tolist(), r.tolist()))
    return CheckReport("superlinear-infinity", combine(verdicts), witness,
                       float(np.nanmin(slopes)) if slopes else float("nan"), notes, {"per_K": per_k})


# ----------------------------------------------------------------------------
# regularity of g at zero

def estimate_cg(g: GNonlinearity, refine: int = 1) -> dict:
    """``limsup g'(s) s / g(s)`` as ``s -> 0+``, read off a log grid."""
    s = np.logspace(-8, -2, 25 * refine)
    vals = []
    for x in s:
        gx = g.scalar(x)
        vals.append(g.deriv(x) * x / gx if gx > 0 else math.inf)
    vals = np.array(vals)
    tail = vals[: len(vals) // 2]  # the small-s half
    bounded = bool(np.all(np.isfinite(vals)))
    if bounded:
        v, _, _ = limit_verdict(s, np.maximum(np.abs(vals), 1e-300), "bounded", "zero")
        bounded = v == PASS
    return {"C_g": float(np.max(tail)) if bounded else math.inf, "bounded": bounded,
            "table": list(zip(s.tolist(), vals.tolist()))}


def check_regular_oscillation(g: GNonlinearity, refine: int = 1, band: float = 0.05) -> CheckReport:
    """``g(omega s) / g(s) -> 1`` as ``s -> 0+``, ``omega -> 1``.

    The decision uses ``omega`` in {0.99, 1.01}: each ratio sequence must stay
    within ``band`` of 1 and settle (spread at most ``band``) on the small-s half
    of the grid. The ratios for 0.9 and 1.1 are reported for context.
    """
    s = np.logspace(-8, -1, 29 * refine)
    gs = _g_grid(g, s)
    tables, notes, verdicts = {}, [], []
    for om in (0.9, 0.99, 1.01, 1.1):
        with np.errstate(divide="ignore", invalid="ignore"):
            r = _g_grid(g, om * s) / gs
        tables[str(om)] = r.tolist()
        if om in (0.9, 1.1):
            continue
        tail = r[: len(r) // 2]
        if not np.all(np.isfinite(r)):
            verdicts.append(FAIL)
            notes.append(f"omega={om}: ratio not finite (g vanishes numerically)")
        elif np.max(np.abs(tail - 1)) > band or (tail.max() - tail.min()) > band:
            verdicts.append(FAIL)
            notes.append(f"omega={om}: ratio does not settle near 1")
        else:
            verdicts.append(PASS)
    cg = estimate_cg(g, refine)
    witness = list(zip(s.tolist(), tables["1.01"]))
    return CheckReport("regular-oscillation", combine(verdicts), witness, float("nan"), notes,
                       {"ratios": tables, "C_g": cg["C_g"], "C_g_bounded": cg["bounded"]})


# ----------------------------------------------------------------------------
# strong maximum principles

def check_strong_max_L1(h: HOperator, g: GNonlinearity, lam: float, a: WeightFn,
                        refine: int = 1, slope_tol: float = SLOPE_TOL) -> CheckReport:
    """Search for ``(eps, beta)`` with ``h(t, K g(s)) <= beta s`` on ``[0, eps)``."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    K = lam * a.neg_l1_norm
    ts = _tgrid(h, refine)
    found, table, slopes, witness = [], {}, [], []
    for eps in (1e-1, 1e-2, 1e-3):
        s = np.logspace(math.log10(eps) - 6, math.log10(eps), 25 * refine)
        r = np.max(_h_grid(h, ts, K * _g_grid(g, s)), axis=0) / s
        if np.all(np.isfinite(r)) and np.all(r <= 0):
            v, sl = PASS, float("nan")  # K = 0 or h nonpositive: any beta works
        else:
            v, sl, _ = limit_verdict(s, np.maximum(r, 1e-300), "bounded", "zero", slope_tol)
        slopes.append(sl)
        table[str(eps)] = {"verdict": v, "beta": float(np.max(r)), "slope": sl}
        if v == PASS:
            found.append((eps, float(max(np.max(r), 0.0))))
        if not witness:
            witness = list(zip(s.tolist(), r.tolist()))
    if found:
        eps, beta = min(found, key=lambda p: p[1])
        return CheckReport("strong-max-l1", PASS, witness, slopes[0], [],
                           {"K": K, "eps": eps, "beta": beta, "table": table})
    verdict = combine([t["verdict"] for t in table.values()])
    return CheckReport("strong-max-l1", verdict, witness, slopes[0], ["ratio unbounded near 0"],
                       {"K": K, "table": table})


def _linf_branch(h, g, K, side, eps, eta, refine):
    def integrand(x):
        y = lower_primitive_inverse(h, K * g.primitive(x), eta, side)
        hv = h.upper(y)
        return 1.0 / abs(hv) if hv != 0 else math.inf

    s = np.logspace(math.log10(eps) - 8, math.log10(eps), 33 * refine)
    vals = np.array([integrand(x) for x in s])
    if not np.all(np.isfinite(vals)):
        return {"verdict": PASS, "p": math.inf, "note": "integrand infinite near 0"}
    p = -_fit_slope(s, vals)
    # decade increments of int_delta^eps, delta = eps 10^-k, k = 2..8
    incs = []
    for k in range(2, 9):
        lo, hi = math.log(eps) - k * math.log(10), math.log(eps) - (k - 1) * math.log(10)
        with warnings.catch_warnings():
            # the increments feed a ratio test; a rough value is still usable
            warnings.simplefilter("ignore", spi.IntegrationWarning)
            val, _ = spi.quad(lambda z: integrand(math.exp(z)) * math.exp(z), lo, hi,
                              epsrel=1e-8, epsabs=0.0, limit=100)
        incs.append(val)
    partial = np.cumsum(incs).tolist()
    ratios = [incs[i + 1] / incs[i] for i in range(len(incs) - 1) if incs[i] > 0]
    if p > 1 + SLOPE_TOL:
        verdict = PASS
    elif p < 1 - SLOPE_TOL:
        verdict = FAIL
    else:
        verdict = PASS if ratios and min(ratios) >= 0.95 else INCONCLUSIVE
    return {"verdict": verdict, "p": p, "partial_integrals": partial, "increment_ratios": ratios}


def check_strong_max_Linf(h: HOperator, g: GNonlinearity, lam: float, a: WeightFn,
                          eta: float = 1.0, eps: float = 1e-1, refine: int = 1) -> CheckReport:
    """Divergence of ``int_0^eps ds / hbar(H^-1(lam |a-|_inf G(s)))`` on either branch."""
    K = lam * a.neg_sup
    if not math.isfinite(K):
        raise ValueError("the negative part of the weight must be bounded")
    branches, notes = {}, []
    for side in ("l", "r"):
        e = eps
        while True:
            try:
                branches[side] = _linf_branch(h, g, K, side, e, eta, refine)
                branches[side]["eps"] = e
                break
            except InverseOutOfRange:
                e *= 0.1
                if e < 1e-12:
                    raise
                notes.append(f"branch {side}: eps shrunk to {e:g}")
    verdicts = [b["verdict"] for b in branches.values()]
    if PASS in verdicts:
        verdict = PASS
    elif all(v == FAIL for v in verdicts):
        verdict = FAIL
    else:
        verdict = INCONCLUSIVE
    return CheckReport("strong-max-linf", verdict, [], -branches["r"]["p"], notes,
                       {"K": K, "branches": branches})


# ----------------------------------------------------------------------------
# phi conditions

def check_sigma_conditions(phi: PhiOperator, threshold: float = 1e6, refine: int = 1) -> CheckReport:
    """Upper sigma-condition at zero and lower sigma-condition at infinity."""
    lo_dom, hi_dom = phi.domain
    out, notes = {}, []
    grids = {"zero": np.logspace(-8, -1, 29 * refine), "infinity": np.logspace(1, 8, 29 * refine)}
    for regime, base in grids.items():
        rows, ok, applicable = [], True, True
        for sigma in (2.0, 10.0):
            for sign in (1.0, -1.0):
                s = sign * base
                keep = (sigma * s > lo_dom) & (sigma * s < hi_dom)
                if not keep.any():
                    applicable = False
                    continue
                s = s[keep]
                with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
                    r = np.abs(np.asarray(phi.fn(sigma * s), dtype=float)) / np.abs(np.asarray(phi.fn(s), dtype=float))
                good = bool(np.all(np.isfinite(r)) and np.max(r) < threshold)
                ok = ok and good
                rows.append({"sigma": sigma, "sign": sign, "max_ratio": float(np.nanmax(r)) if np.isfinite(r).any()
                             else math.inf, "ratios": r.tolist()})
        if not applicable and not rows:
            out[regime] = {"verdict": INCONCLUSIVE, "rows": rows}
            notes.append(f"{regime}: probes fall outside the domain of phi")
        else:
            out[regime] = {"verdict": PASS if ok else FAIL, "rows": rows}
    return CheckReport("sigma", combine([out["zero"]["verdict"], out["infinity"]["verdict"]]),
                       [], float("nan"), notes, out)


def check_ratio_limit(name: str, num, s_kind: str, want: str, refine: int = 1) -> CheckReport:
    """Generic limit probe for ``num(s)``; ``s_kind`` is ``'zero'`` or ``'infinity'``."""
    s = np.logspace(-8, -1, 29 * refine) if s_kind == "zero" else np.logspace(1, 8, 29 * refine)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore", under="ignore"):
        r = np.asarray(num(s), dtype=float)
    v, sl, note = limit_verdict(s, r, want, s_kind)
    return CheckReport(name, v, list(zip(s.tolist(), r.tolist())), sl, [note] if note else [])


def check_pt_conditions(h: HOperator, g: GNonlinearity, refine: int = 1) -> dict:
    """``g(s)s/s^pbar`` bounded at zero and bounded away from zero at infinity."""
    pbar = h.p_upper
    num = lambda s: _g_grid(g, s) * s / s ** pbar  # noqa: E731
    return {
        "pt-zero": check_ratio_limit("pt-zero", num, "zero", "bounded", refine),
        "pt-infinity": check_ratio_limit("pt-infinity", num, "infinity", "positive", refine),
    }


# ----------------------------------------------------------------------------
# applicability table

def _row(name, regime, reports):
    verdict = combine([r.verdict for r in reports.values()])
    return {"theorem": name, "regime": regime, "verdict": verdict,
            "conditions": {k: r.verdict for k, r in reports.items()}}


def applicability(h: HOperator, g: GNonlinearity, a: WeightFn, phi: Optional[PhiOperator] = None,
                  refine: int = 1) -> tuple[dict, list]:
    """All checker reports plus the per-theorem applicability table."""
    reports: dict[str, CheckReport] = {}
    viol = h.structure_violations()
    reports["h-structure"] = CheckReport("h-structure", PASS if not viol else FAIL, notes=viol)
    mn = mean_negativity(a)
    reports["mean-negativity"] = CheckReport("mean-negativity", PASS if mn["pass"] else FAIL,
                                             extra={"integral": mn["integral"]})
    reports["positivity-intervals"] = CheckReport(
        "positivity-intervals", PASS if a.gamma is not None else FAIL,
        extra={"intervals": [[J.sigma, J.tau] for J in a.intervals] if a.gamma else [], "gamma": a.gamma})
    gv = g.star_violations()
    reports["g-sign"] = CheckReport("g-sign", PASS if not gv else FAIL, notes=gv)
    ro = check_regular_oscillation(g, refine)
    reports["regular-oscillation"] = ro
    reg = PASS if ro.passed or ro.extra["C_g_bounded"] else ro.verdict
    reports["g-regular"] = CheckReport("g-regular", reg, extra={"C_g": ro.extra["C_g"]},
                                       notes=["regular oscillation or bounded g's/g"])
    reports["superlinear-zero"] = check_superlinear_zero(h, g, a=a, refine=refine)
    reports["superlinear-infinity"] = check_superlinear_infinity(h, g, a=a, refine=refine)
    base = {k: reports[k] for k in ("h-structure", "mean-negativity", "positivity-intervals", "g-sign", "g-regular")}
    table = [
        _row("planar, large lambda", "lambda > lambda*", {**base, "superlinear-zero": reports["superlinear-zero"]}),
        _row("planar, every lambda", "lambda > 0", {**base, "superlinear-zero": reports["superlinear-zero"],
                                                     "superlinear-infinity": reports["superlinear-infinity"]}),
    ]
    if phi is not None:
        sig = check_sigma_conditions(phi, refine=refine)
        reports["sigma"] = sig
        up0 = CheckReport("sigma-zero", sig.extra["zero"]["verdict"])
        lowinf = CheckReport("sigma-infinity", sig.extra["infinity"]["verdict"])
        gphi0 = check_ratio_limit("g-over-phi-zero", lambda s: _g_grid(g, s) / np.asarray(phi.fn(s)), "zero",
                                  "zero", refine)
        gphiinf = combine([
            check_ratio_limit("", lambda s: _g_grid(g, s) / np.abs(np.asarray(phi.fn(s))), "infinity",
                              "infinity", refine).verdict,
            check_ratio_limit("", lambda s: _g_grid(g, s) / np.abs(np.asarray(phi.fn(-s))), "infinity",
                              "infinity", refine).verdict,
        ])
        reports["g-over-phi-zero"] = gphi0
        reports["g-over-phi-infinity"] = CheckReport("g-over-phi-infinity", gphiinf)
        table.append(_row("phi-Laplacian, large lambda", "lambda > lambda*",
                          {**base, "sigma-zero": up0, "g-over-phi-zero": gphi0}))
        table.append(_row("phi-Laplacian, every lambda", "lambda > 0",
                          {**base, "sigma-zero": up0, "sigma-infinity": lowinf, "g-over-phi-zero": gphi0,
                           "g-over-phi-infinity": reports["g-over-phi-infinity"]}))
        if phi.family == "pq-laplacian":
            p, q = phi.params["p"], phi.params["q"]
            c0 = check_ratio_limit("pq-zero", lambda s: _g_grid(g, s) * s / s ** q, "zero", "zero", refine)
            ci = check_ratio_limit("pq-infinity", lambda s: _g_grid(g, s) * s / s ** p, "infinity", "infinity", refine)
            reports["pq-zero"], reports["pq-infinity"] = c0, ci
            table.append(_row("(p,q)-Laplacian", "lambda > 0", {**base, "pq-zero": c0, "pq-infinity": ci}))
    if h.family == "pt-power":
        pt = check_pt_conditions(h, g, refine)
        reports.update(pt)
        table.append(_row("p(t)-Laplacian", "lambda > 0", {**base, **pt}))
    if h.family == "minkowski":
        c = check_ratio_limit("g-over-s-zero", lambda s: _g_grid(g, s) / s, "zero", "zero", refine)
        reports["g-over-s-zero"] = c
        table.append(_row("Minkowski curvature", "lambda > lambda*", {**base, "g-over-s-zero": c}))
    return reports, table


CONDITION_ALIASES = {
    "zero": "superlinear-zero",
    "infinity": "superlinear-infinity",
    "a-sharp": "mean-negativity",
    "a-star": "positivity-intervals",
}


# ----------------------------------------------------------------------------
# thresholds

@dataclass
class Thresholds:
    R: float
    eta: float
    lam1_minus: float = float("nan")
    lam1_plus: float = float("nan")
    lam2_minus: float = float("nan")
    lam2_plus: float = float("nan")
    lam: float = float("nan")
    alpha_zero: float = float("nan")
    R_prime: float = float("nan")
    r0_probe: float = 1e-2
    mu: float = MU
    eta_minus: float = float("nan")
    eta_plus: float = float("nan")
    margins: dict = field(default_factory=dict)
    source: str = "lambda_star"

    @property
    def lambda_star(self) -> float:
        return max(self.lam1_minus, self.lam1_plus, self.lam2_minus, self.lam2_plus)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambda_star"] = self.lambda_star
        return d


def _solve_monotone(fn, target: float, side: int, start: float = 1.0, cap: float = 1e12,
                    rtol: float = 1e-13) -> Optional[float]:
    """Smallest ``x > 0`` with ``fn(side * x) * side >= target`` (fn monotone); None if none below cap."""
    lo, hi = 0.0, start
    while side * fn(side * hi) < target:
        lo, hi = hi, 2 * hi
        if hi > cap:
            return None
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if side * fn(side * mid) >= target:
            hi = mid
        else:
            lo = mid
    return hi


def _eta(h: HOperator, gamma_frac: float, R: float, factor: float) -> tuple[float, float]:
    """Solve ``gamma_frac |hlow(+-eta)| >= (R/2) factor`` on both sides."""
    target = 0.5 * R * factor / gamma_frac
    em = _solve_monotone(h.lower, target, -1)
    ep = _solve_monotone(h.lower, target, +1)
    if em is None or ep is None:
        raise EtaInfeasible(f"no eta with |h_lower(+-eta)| >= {target:g}: h is too weak for R={R:g}")
    return em, ep


def lambda_star(sys: SystemInstance, R: float, r0_probe: float = 1e-2, mu: float = MU,
                w: Optional[WeightFn] = None) -> Thresholds:
    """The four threshold components, their max, and the perturbation bounds at ``sys.lam``."""
    if not R > 0:
        raise ValueError("R must be positive")
    h, g, a = sys.h, sys.g, sys.a
    if a.gamma is None:
        raise RTooSmall("the weight has no positivity intervals")
    gam = a.gamma
    em, ep = _eta(h, gam / 4, R, 1 + mu)
    eta = max(em, ep)
    glow = g.lower(R)
    A8 = a_star(a, gam / 8)
    c = glow * A8
    lam1 = {}
    for side, key in ((-1, "minus"), (1, "plus")):
        # monotone in lambda: side * (gamma/8) hbar(side * lambda c) > R/2
        val = _solve_monotone(lambda x: (gam / 8) * h.upper(x * c), R / 2, side, cap=1e300)
        if val is None:
            raise RTooSmall(f"the lambda_1 set is empty for R={R:g}")
        lam1[key] = val * (1 + 1e-12)  # step just past the infimum
    lam2 = {}
    for side, key in ((-1, "minus"), (1, "plus")):
        delta = R / (2 * abs(h.upper(side * eta)))
        lam2[key] = eta / (glow * a_star(a, min(delta, gam)))
    th = Thresholds(R=R, eta=eta, lam1_minus=lam1["minus"], lam1_plus=lam1["plus"],
                    lam2_minus=lam2["minus"], lam2_plus=lam2["plus"], r0_probe=r0_probe, mu=mu,
                    eta_minus=em, eta_plus=ep)
    perturbation_bounds(th, sys, w)
    return th


def perturbation_bounds(th: Thresholds, sys: SystemInstance, w: Optional[WeightFn] = None) -> Thresholds:
    """Fill ``alpha_zero`` and ``R_prime`` for ``lam = sys.lam``."""
    w = w if w is not None else default_w(sys.a)
    lam, mu = sys.lam, th.mu
    gbar = sys.g.upper(th.R)
    base = lam * sys.a.l1_norm * gbar
    th.lam = lam
    th.alpha_zero = (1 + mu) * base / w.l1_norm
    th.R_prime = (1 + mu) * max(th.r0_probe, base + th.alpha_zero * w.l1_norm)
    return th


def contradiction_margins(sys: SystemInstance, R: float, mu: float = MU) -> dict:
    """Relative margins of the two contradiction inequalities at fixed lambda.

    ``eta`` comes from the equalities with ``gamma/8``. Each margin is
    ``lhs / rhs - 1``; all four must be at least ``mu``.
    """
    h, g, a, lam = sys.h, sys.g, sys.a, sys.lam
    gam = a.gamma
    em, ep = _eta(h, gam / 8, R, 1.0)
    glow = g.lower(R)
    A8 = a_star(a, gam / 8)
    m = {"eta_minus": em, "eta_plus": ep}
    m["contr1_minus"] = (-(gam / 8) * h.upper(-lam * glow * A8)) / (R / 2) - 1
    m["contr1_plus"] = ((gam / 8) * h.upper(lam * glow * A8)) / (R / 2) - 1
    for side, key, eta in ((-1, "minus", em), (1, "plus", ep)):
        delta = min(R / (2 * abs(h.upper(side * eta))), gam)
        m[f"contr2_{key}"] = lam * glow * a_star(a, delta) / eta - 1
    return m


def R_of_lambda(sys: SystemInstance, mu: float = MU, per_decade: int = 20, r0_probe: float = 1e-2,
                w: Optional[WeightFn] = None) -> Thresholds:
    """Smallest ``R`` on a log grid over ``[1, 1e6]`` where both contradictions hold with margin ``mu``."""
    if sys.a.gamma is None:
        raise NoRFound("the weight has no positivity intervals", {})
    last = {}
    for R in np.logspace(0, 6, 6 * per_decade + 1):
        try:
            m = contradiction_margins(sys, float(R), mu)
        except EtaInfeasible as exc:
            raise NoRFound(f"eta(R) does not exist from R={R:g} on: {exc}", last) from None
        last = m
        keys = ("contr1_minus", "contr1_plus", "contr2_minus", "contr2_plus")
        if all(m[k] >= mu for k in keys):
            th = Thresholds(R=float(R), eta=max(m["eta_minus"], m["eta_plus"]), r0_probe=r0_probe, mu=mu,
                            eta_minus=m["eta_minus"], eta_plus=m["eta_plus"],
                            margins={k: m[k] for k in keys}, source="R_of_lambda")
            return perturbation_bounds(th, sys, w)
    raise NoRFound("R scan exhausted without satisfying the margins", last)
