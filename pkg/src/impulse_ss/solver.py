"""Solve the smooth-pasting system for the (B, s, S) triple.

With ``h(B, x) = B phi(x) + vhat(x)`` the system reads

    h(B, s) = h(B, S) - c0 (S - s) - c1
    h_x(B, s) = c0
    h_x(B, S) = c0

For fixed ``B`` the marginal ``h_x(B, .)`` is strictly quasiconcave, so the
last two equations have at most two roots, one on each side of the peak.
The remaining equation becomes a scalar function ``gap(B)`` that is strictly
decreasing, and is solved by a safeguarded Newton iteration. Its derivative
is ``phi(S) - phi(s)`` because the boundary terms vanish at the roots.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass

import numpy as np

from .analytic import GbmPrimitives, build
from .errors import ConsistencyError, SolverError
from .model import ProblemSpec, validate

RESIDUAL_TOL = 1e-9


@dataclass(frozen=True)
class SolverConfig:
    tol_inner: float = 1e-12
    tol_outer: float = 1e-11
    max_iter: int = 200

    def __post_init__(self):
        if not (self.tol_inner > 0 and self.tol_outer > 0):
            raise ValueError("solver tolerances must be positive")
        if self.max_iter < 10:
            raise ValueError("max_iter must be at least 10")


@dataclass(frozen=True)
class PolicyTriple:
    B: float
    s: float
    S: float

    kind = "triple"

    def to_dict(self) -> dict:
        return {"kind": self.kind, "B": self.B, "s": self.s, "S": self.S}


@dataclass(frozen=True)
class NeverInvest:
    """Investing never pays: the continuation region is the whole half-line."""

    kind = "never_invest"

    def to_dict(self) -> dict:
        return {"kind": self.kind}


SolveOutcome = PolicyTriple | NeverInvest


def outcome_from_dict(data: dict) -> SolveOutcome:
    kind = data.get("kind")
    if kind == "never_invest":
        return NeverInvest()
    if kind == "triple":
        return PolicyTriple(float(data["B"]), float(data["s"]), float(data["S"]))
    raise ValueError(f"unknown outcome kind {kind!r}")


def _b_phi(p: GbmPrimitives, B: float, x):
    """``B x^m`` formed in log space so a huge ``B`` times a tiny ``phi`` does not overflow."""
    p.phi(x)  # domain check
    return np.exp(math.log(B) + p.m * np.log(x))


def marginal_h(p: GbmPrimitives, B: float, x):
    """``h_x(B, x) = B phi'(x) + vhat'(x)``."""
    return p.m * _b_phi(p, B, x) / x + p.vhat_d1(x)


def marginal_h_d1(p: GbmPrimitives, B: float, x):
    return p.m * (p.m - 1.0) * _b_phi(p, B, x) / (x * x) + p.vhat_d2(x)


def h(p: GbmPrimitives, B: float, x):
    return _b_phi(p, B, x) + p.vhat(x)


def peak_of_marginal(p: GbmPrimitives, B: float) -> float:
    """Unique maximizer of ``h_x(B, .)``."""
    g, m = p.spec.gamma, p.m
    log_ratio = math.log(B) + math.log(m * (m - 1.0)) - math.log(p.c_gamma * (1.0 - g))
    return math.exp(log_ratio / (g - m))


def _bisect_log(fn, lo, hi, tol, max_iter):
    """Geometric bisection for a sign change of ``fn`` on ``[lo, hi]``.

    ``fn(lo)`` and ``fn(hi)`` must have opposite signs. Returns the final
    bracket ``(lo, hi)`` with ``fn(lo)`` keeping its sign.
    """
    f_lo = fn(lo)
    for _ in range(max_iter):
        if hi - lo <= tol * hi:
            return lo, hi
        mid = math.sqrt(lo * hi)
        if not lo < mid < hi:
            return lo, hi
        f_mid = fn(mid)
        if f_mid == 0.0:
            return mid, mid
        if (f_mid > 0) == (f_lo > 0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    raise SolverError("bisection did not reach tolerance", bracket=(lo, hi))


def _polish(fn, dfn, lo, hi):
    """One Newton step from the bracket midpoint, kept only if it stays inside."""
    x = 0.5 * (lo + hi)
    fx = fn(x)
    d = dfn(x)
    if d != 0.0:
        y = x - fx / d
        if lo <= y <= hi and abs(fn(y)) <= abs(fx):
            return y
    return x


def _expand(fn, start, step, max_iter):
    """Move geometrically away from ``start`` until ``fn < 0``; the step factor squares each time.

    Returns ``(point, last_nonnegative_point)``, or ``(None, last)`` on failure.
    """
    inner, x = start, start
    for _ in range(max_iter):
        x = x * step
        if not (0.0 < x < math.inf):
            return None, inner
        if fn(x) < 0:
            return x, inner
        inner = x
        step = step * step if 1e-16 < step < 1e16 else step
    return None, inner


def boundaries_for(p: GbmPrimitives, B: float, c0: float, cfg: SolverConfig = SolverConfig()):
    """Both solutions ``s < S`` of ``h_x(B, x) = c0``, or ``None`` if the peak is below ``c0``."""
    peak = peak_of_marginal(p, B)
    top = marginal_h(p, B, peak) - c0
    if top <= 0:
        return None

    def excess(x):
        return marginal_h(p, B, x) - c0

    def slope(x):
        return marginal_h_d1(p, B, x)

    lo, inner = _expand(excess, peak, 0.5, cfg.max_iter)
    if lo is None:
        raise SolverError("could not bracket the trigger boundary", bracket=(inner, peak))
    a, b = _bisect_log(excess, lo, inner, cfg.tol_inner, cfg.max_iter)
    s = _polish(excess, slope, a, b)

    hi, inner = _expand(excess, peak, 2.0, cfg.max_iter)
    if hi is None:
        raise SolverError("could not bracket the target boundary", bracket=(peak, inner))
    a, b = _bisect_log(excess, inner, hi, cfg.tol_inner, cfg.max_iter)
    S = _polish(excess, slope, a, b)
    return float(s), float(S)


def gap(p: GbmPrimitives, B: float, c0: float, c1: float, cfg: SolverConfig = SolverConfig()) -> float:
    """Net gain of the best single investment from ``s(B)`` to ``S(B)``, minus ``c1``.

    Returns ``-c1`` when ``h_x(B, .)`` never reaches ``c0`` (the limit as the
    two boundaries merge).
    """
    pair = boundaries_for(p, B, c0, cfg)
    if pair is None:
        return -c1
    s, S = pair
    return float(h(p, B, S) - h(p, B, s) - c0 * (S - s) - c1)


def residuals(p: GbmPrimitives, triple: PolicyTriple) -> tuple[float, float, float]:
    """The three smooth-pasting equations, normalized by ``max(1, c0)``."""
    c0, c1 = p.spec.c0, p.spec.c1
    B, s, S = triple.B, triple.s, triple.S
    scale = max(1.0, c0)
    r1 = (h(p, B, s) - (h(p, B, S) - c0 * (S - s) - c1)) / scale
    r2 = (marginal_h(p, B, s) - c0) / scale
    r3 = (marginal_h(p, B, S) - c0) / scale
    return r1, r2, r3


def residual_tolerance(p: GbmPrimitives, triple: PolicyTriple) -> float:
    """1e-9, or the rounding floor of the terms being differenced if that is larger.

    The value-matching equation subtracts quantities of size ``h(S)`` and
    ``c0 S``; with states near 1e8 its absolute residual cannot go below a
    few ulps of those.
    """
    B, s, S = triple.B, triple.s, triple.S
    c0 = p.spec.c0
    terms = (abs(h(p, B, s)), abs(h(p, B, S)), c0 * S, p.spec.c1, abs(B * p.phi_d1(s)), p.vhat_d1(s))
    return max(RESIDUAL_TOL, 64.0 * sys.float_info.epsilon * max(terms) / max(1.0, c0))


def solve(
    spec: ProblemSpec,
    cfg: SolverConfig = SolverConfig(),
    b_lo: float = 1e-8,
    b_hi: float = 1.0,
) -> SolveOutcome:
    """Compute the optimal (s, S) policy, or ``NeverInvest`` if investing never pays.

    ``b_lo``/``b_hi`` only seed the outer bracket; it is widened until the
    gap changes sign, so the answer does not depend on them.
    """
    p = build(spec)
    if not validate(spec).viability.viable:
        return NeverInvest()
    c0, c1 = spec.c0, spec.c1

    def gap_at(B):
        return gap(p, B, c0, c1, cfg)

    lo, hi = min(b_lo, b_hi), max(b_lo, b_hi)
    g_lo = gap_at(lo)
    # steep phi (large |m|) can put B many decades away, so the step factor grows
    factor = 2.0
    for _ in range(cfg.max_iter):
        if g_lo > 0:
            break
        hi, lo = lo, lo / factor
        factor = min(factor * factor, 1e16)
        if lo == 0.0:
            break
        g_lo = gap_at(lo)
    if not g_lo > 0:
        raise SolverError("could not find B with positive gap", bracket=(lo, hi))
    g_hi = gap_at(hi)
    factor = 2.0
    for _ in range(cfg.max_iter):
        if g_hi < 0:
            break
        lo, g_lo = hi, g_hi
        hi *= factor
        factor = min(factor * factor, 1e16)
        if not math.isfinite(hi):
            break
        g_hi = gap_at(hi)
    if not g_hi < 0:
        if not math.isfinite(hi):
            raise SolverError("the optimal B exceeds the float64 range (characteristic root too steep)", bracket=(lo, hi))
        raise SolverError("could not find B with negative gap", bracket=(lo, hi))

    B = math.sqrt(lo) * math.sqrt(hi) if hi > 4.0 * lo else 0.5 * (lo + hi)
    tol = cfg.tol_outer * max(1.0, c0)
    for _ in range(cfg.max_iter):
        pair = boundaries_for(p, B, c0, cfg)
        if pair is None:
            g_val, deriv = -c1, 0.0
        else:
            s, S = pair
            g_val = h(p, B, S) - h(p, B, s) - c0 * (S - s) - c1
            deriv = p.phi(S) - p.phi(s)
        if pair is not None and abs(g_val) <= tol:
            break
        if g_val > 0:
            lo = B
        else:
            hi = B
        step = B - g_val / deriv if deriv < 0 else None
        if step is not None and lo < step < hi:
            B = step
        else:
            B = math.sqrt(lo) * math.sqrt(hi) if hi > 4.0 * lo else 0.5 * (lo + hi)
        if hi - lo <= 4e-16 * hi:
            pair = boundaries_for(p, B, c0, cfg)
            break
    else:
        raise SolverError("outer iteration did not converge", bracket=(lo, hi))

    if pair is None:
        raise SolverError("outer iteration ended without a valid boundary pair", bracket=(lo, hi))
    triple = PolicyTriple(B=float(B), s=float(pair[0]), S=float(pair[1]))
    res = residuals(p, triple)
    tol_res = residual_tolerance(p, triple)
    if not all(abs(r) < tol_res for r in res) or not 0 < triple.s < triple.S:
        raise ConsistencyError(f"solution {triple} fails residual check: {res}")
    return triple
