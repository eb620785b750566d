"""The value function built from a solved policy, plus QVI diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .analytic import GbmPrimitives, reward_fenchel
from .errors import DomainError, NotApplicableError
from .solver import NeverInvest, PolicyTriple, SolveOutcome

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def growth_bound(p: GbmPrimitives, x, alpha: float | None = None):
    """Upper bound ``f*(alpha)/rho + alpha x / (rho - nu+)`` on the value function.

    Valid for ``alpha <= c0 (rho - nu+)``; the default takes that endpoint.
    """
    sp = p.spec
    k = sp.rho - max(sp.nu, 0.0)
    if alpha is None:
        alpha = sp.c0 * k
    return reward_fenchel(sp.gamma, alpha) / sp.rho + alpha * np.asarray(x, dtype=float) / k


def golden_max(fn, a: float, b: float, tol: float = 1e-12, max_iter: int = 500) -> tuple[float, float]:
    """Maximize a unimodal ``fn`` on ``[a, b]``. Returns ``(argmax, max)``."""
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = fn(c), fn(d)
    for _ in range(max_iter):
        if b - a <= tol * max(1.0, abs(a) + abs(b)):
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = fn(d)
    x = 0.5 * (a + b)
    return x, fn(x)


def intervention(u, x: float, c0: float, c1: float, upper: float) -> float:
    """``sup_{y > x} u(y) - c0 (y - x) - c1`` by golden-section search on ``(x, upper]``.

    ``u`` must make ``u(y) - c0 y`` unimodal there; the left-end limit is
    included since the supremum may only be approached as ``y -> x``.
    """
    def net(y):
        return u(y) - c0 * (y - x) - c1

    _, best = golden_max(net, x, max(upper, x * (1 + 1e-9)))
    return max(best, net(x))


@dataclass(frozen=True)
class ValueFunction:
    outcome: SolveOutcome
    primitives: GbmPrimitives

    @property
    def triple(self) -> PolicyTriple | None:
        return self.outcome if isinstance(self.outcome, PolicyTriple) else None

    @property
    def invests(self) -> bool:
        return self.triple is not None

    def _check(self, x):
        arr = np.asarray(x, dtype=float)
        if np.any(~(arr > 0)):
            raise DomainError("state must be strictly positive")
        return arr

    def _continuation(self, x):
        p, t = self.primitives, self.triple
        if t is None:
            return p.vhat(x)
        return t.B * p.phi(x) + p.vhat(x)

    def _continuation_d1(self, x):
        p, t = self.primitives, self.triple
        if t is None:
            return p.vhat_d1(x)
        return t.B * p.phi_d1(x) + p.vhat_d1(x)

    def _continuation_d2(self, x):
        p, t = self.primitives, self.triple
        if t is None:
            return p.vhat_d2(x)
        return t.B * p.phi_d2(x) + p.vhat_d2(x)

    @cached_property
    def value_at_target(self) -> float:
        t = self.triple
        if t is None:
            raise NotApplicableError("no target boundary when never investing")
        return float(self._continuation(t.S))

    @cached_property
    def value_at_zero(self) -> float:
        """``v(0+)``: the value of investing from an empty state."""
        t = self.triple
        if t is None:
            return 0.0
        sp = self.primitives.spec
        return self.value_at_target - sp.c0 * t.S - sp.c1

    def _scalar(self, x, d: int) -> float:
        # pure-float path for the hot loops of Mv and the grid checks
        if not x > 0:
            raise DomainError("state must be strictly positive")
        p, t = self.primitives, self.triple
        g, m, cg = p.spec.gamma, p.m, p.c_gamma
        B = 0.0 if t is None else t.B
        if t is not None and x <= t.s:
            return self.value_at_zero + p.spec.c0 * x if d == 0 else p.spec.c0
        if d == 0:
            return B * x**m + cg * x**g / g
        return B * m * x ** (m - 1.0) + cg * x ** (g - 1.0)

    def eval(self, x):
        if isinstance(x, (float, int)):
            return self._scalar(float(x), 0)
        arr = self._check(x)
        t = self.triple
        if t is None:
            return self.primitives.vhat(x)
        c0 = self.primitives.spec.c0
        safe = np.where(arr > t.s, arr, t.S)
        out = np.where(arr > t.s, self._continuation(safe), self.value_at_zero + c0 * arr)
        return out if out.ndim else float(out)

    def eval_d1(self, x):
        if isinstance(x, (float, int)):
            return self._scalar(float(x), 1)
        arr = self._check(x)
        t = self.triple
        if t is None:
            return self.primitives.vhat_d1(x)
        safe = np.where(arr > t.s, arr, t.S)
        out = np.where(arr > t.s, self._continuation_d1(safe), self.primitives.spec.c0)
        return out if out.ndim else float(out)

    def eval_d2(self, x):
        """Second derivative; refused at the trigger where it jumps."""
        arr = self._check(x)
        t = self.triple
        if t is None:
            return self.primitives.vhat_d2(x)
        if np.any(arr == t.s):
            raise DomainError("second derivative is discontinuous at the trigger boundary")
        safe = np.where(arr > t.s, arr, t.S)
        out = np.where(arr > t.s, self._continuation_d2(safe), 0.0)
        return out if out.ndim else float(out)

    def _search_upper(self, x: float) -> float:
        # beyond this point the growth bound keeps v(y) - c0 y below v(x) - c0 x
        sp = self.primitives.spec
        alpha = 0.5 * sp.c0 * (sp.rho - max(sp.nu, 0.0))
        bound = reward_fenchel(sp.gamma, alpha) / sp.rho
        y_ub = 2.0 * (bound - (self.eval(x) - sp.c0 * x)) / sp.c0
        return max(y_ub, 2.0 * x)

    def intervention_Mv(self, x: float) -> float:
        """``Mv(x) = sup_{i>0} v(x+i) - c0 i - c1``.

        The maximizer is the point where ``v' = c0`` in the continuation
        region (``S``, or the unconstrained vhat maximizer when never
        investing) if it lies to the right of ``x``; otherwise the supremum
        is found numerically and sits at ``i -> 0``.
        """
        x = float(self._check(x))
        sp = self.primitives.spec
        t = self.triple
        target = t.S if t is not None else self.primitives.vhat_fenchel_argmax(sp.c0)
        if x < target:
            return float(self.eval(target)) - sp.c0 * (target - x) - sp.c1
        return intervention(self.eval, x, sp.c0, sp.c1, self._search_upper(x))

    def qvi_residual(self, x: float) -> tuple[float, float]:
        """``(Lv - f, v - Mv)`` at ``x``; both must be nonnegative with a zero minimum."""
        x = float(self._check(x))
        p = self.primitives
        v, dv, d2v = self.eval(x), self.eval_d1(x), self.eval_d2(x)
        lv_minus_f = p.generator(x, v, dv, d2v) - p.reward(x)
        return float(lv_minus_f), float(v - self.intervention_Mv(x))

    def smooth_fit_report(self) -> tuple[float, float]:
        """``(v'(s+) - c0, v'(S) - c0)``."""
        t = self.triple
        if t is None:
            raise NotApplicableError("smooth fit is undefined when never investing")
        c0 = self.primitives.spec.c0
        return float(self._continuation_d1(t.s)) - c0, float(self._continuation_d1(t.S)) - c0

    def grid_rows(self, xs):
        """Rows ``(x, v, v', Mv, Lv-f, v-Mv)`` for the CSV export; residuals are NaN at the trigger."""
        t = self.triple
        for x in xs:
            x = float(x)
            v = float(self.eval(x))
            dv = float(self.eval_d1(x))
            mv = self.intervention_Mv(x)
            if t is not None and x == t.s:
                lvf = math.nan
            else:
                lvf = self.qvi_residual(x)[0]
            yield x, v, dv, mv, lvf, v - mv


def value_function(p: GbmPrimitives, outcome: SolveOutcome) -> ValueFunction:
    if not isinstance(outcome, (PolicyTriple, NeverInvest)):
        raise TypeError(f"unexpected outcome {outcome!r}")
    return ValueFunction(outcome, p)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool | None  # None: not applicable to this outcome
    worst: float
    where: float

    def __post_init__(self):
        # numpy scalars would break identity tests and JSON output
        object.__setattr__(self, "passed", None if self.passed is None else bool(self.passed))
        object.__setattr__(self, "worst", float(self.worst))
        object.__setattr__(self, "where", float(self.where))

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "worst": self.worst, "where": self.where}


def log_grid(lo: float = 1e-2, hi: float = 1e4, n: int = 500) -> np.ndarray:
    return np.geomspace(lo, hi, n)


def _worst(values, xs, larger_is_worse=True):
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return math.nan, math.nan
    i = int(np.argmax(values) if larger_is_worse else np.argmin(values))
    return float(values[i]), float(xs[i])


def run_checks(vf: ValueFunction, xs=None, tol: float = 1e-9, fit_tol: float = 1e-8) -> list[CheckResult]:
    """Evaluate every QVI, smooth-fit and shape property on a grid.

    Grid points equal to the trigger are skipped. Residual tolerances are
    scaled by ``1 + |f(x)|``.
    """
    p = vf.primitives
    sp = p.spec
    xs = log_grid() if xs is None else np.asarray(xs, dtype=float)
    t = vf.triple
    if t is not None:
        xs = xs[xs != t.s]
        cont = xs[xs > t.s]
        act = xs[xs < t.s]
    else:
        cont, act = xs, xs[:0]

    results = []
    lvf_c = np.array([vf.qvi_residual(x)[0] for x in cont])
    scaled = np.abs(lvf_c) / (1.0 + np.abs(p.reward(cont))) if cont.size else lvf_c
    w, at = _worst(scaled, cont)
    results.append(CheckResult("generator_continuation", bool(np.all(scaled <= tol)), w, at))

    v_c = vf.eval(cont) if cont.size else cont
    gap_c = np.array([v - vf.intervention_Mv(x) for v, x in zip(np.atleast_1d(v_c), cont)])
    w, at = _worst(gap_c, cont, larger_is_worse=False)
    results.append(CheckResult("intervention_continuation", bool(np.all(gap_c > 0)), w, at))

    if t is not None:
        res_a = [vf.qvi_residual(x) for x in act]
        lvf_a = np.array([r[0] for r in res_a])
        gap_a = np.array([r[1] for r in res_a])
        scale_a = 1.0 + np.abs(p.reward(act)) if act.size else act
        w, at = _worst(lvf_a / scale_a if act.size else lvf_a, act, larger_is_worse=False)
        results.append(CheckResult("generator_action", bool(np.all(lvf_a >= -tol * scale_a)), w, at))
        w, at = _worst(np.abs(gap_a) / scale_a if act.size else gap_a, act)
        results.append(CheckResult("intervention_action", bool(np.all(np.abs(gap_a) <= tol * scale_a)), w, at))
        d_s, d_S = vf.smooth_fit_report()
        if abs(d_s) >= abs(d_S):
            w, at = abs(d_s), t.s
        else:
            w, at = abs(d_S), t.S
        results.append(CheckResult("smooth_fit", w < fit_tol, w, at))
        # both one-sided derivatives at s, and v continuous there
        jump = abs(float(vf._continuation(t.s)) - (vf.value_at_zero + sp.c0 * t.s))
        results.append(CheckResult("continuity_at_trigger", jump < tol * max(1.0, abs(vf.value_at_zero)), jump, t.s))
        dv = vf.eval_d1(cont)
        diffs = np.sign(np.diff(dv))
        diffs = diffs[diffs != 0]
        switches = int(np.count_nonzero(diffs[1:] != diffs[:-1]))
        ok = switches <= 1 and (diffs.size == 0 or diffs[-1] < 0)
        results.append(CheckResult("derivative_single_peak", ok, float(switches), float(cont[np.argmax(dv)]) if cont.size else math.nan))
    else:
        for name in ("generator_action", "intervention_action", "smooth_fit", "continuity_at_trigger", "derivative_single_peak"):
            results.append(CheckResult(name, None, math.nan, math.nan))

    v = vf.eval(xs)
    bound = growth_bound(p, xs)
    excess = v - bound
    w, at = _worst(excess, xs)
    results.append(CheckResult("growth_bound", bool(np.all(excess <= 0)), w, at))

    steps = np.diff(v)
    w, at = _worst(steps, xs[1:], larger_is_worse=False)
    results.append(CheckResult("nondecreasing", bool(np.all(steps >= 0)), w, at))

    below = v - p.vhat(xs)
    w, at = _worst(below, xs, larger_is_worse=False)
    results.append(CheckResult("dominates_no_investment", bool(np.all(below >= -tol)), w, at))
    return results
