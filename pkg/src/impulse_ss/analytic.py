"""Closed-form primitives for geometric Brownian motion with power reward.

``phi(x) = x**m`` is the decreasing solution of ``L u = 0`` and
``vhat(x) = C x**gamma / gamma`` is the expected discounted reward of never
investing. Both are normalized so that ``phi(1) = 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InvalidSpecError
from .model import ProblemSpec, validate


def negative_root(rho: float, nu: float, sigma: float) -> float:
    """Negative root of ``rho - nu m - sigma**2 m (m - 1) / 2 = 0``."""
    a = 0.5 - nu / sigma**2
    q = 2.0 * rho / sigma**2
    disc = math.sqrt(a * a + q)
    if a > 0:
        # a - disc cancels badly when a >> q; use the conjugate form
        return -q / (a + disc)
    return a - disc


def c_gamma_of(rho: float, nu: float, sigma: float, gamma: float) -> float:
    return 1.0 / (rho - nu * gamma + 0.5 * gamma * (1.0 - gamma) * sigma**2)


def vhat_fenchel_closed(c_gamma: float, gamma: float, alpha: float) -> float:
    """``sup_{x>0} C x**gamma/gamma - alpha x`` in closed form."""
    k = 1.0 / (1.0 - gamma)
    return c_gamma**k * alpha ** (-gamma * k) * (1.0 / gamma - 1.0)


def reward_fenchel(gamma: float, alpha: float) -> float:
    """Fenchel transform of the running reward ``x**gamma/gamma`` at slope ``alpha``."""
    if not alpha > 0:
        raise DomainError(f"alpha must be positive, got {alpha}")
    return vhat_fenchel_closed(1.0, gamma, alpha)


def _check_positive(x):
    arr = np.asarray(x, dtype=float)
    if np.any(~(arr > 0)):
        raise DomainError("state must be strictly positive")
    return arr if arr.ndim else float(arr)


@dataclass(frozen=True)
class GbmPrimitives:
    m: float
    c_gamma: float
    spec: ProblemSpec

    def phi(self, x):
        x = _check_positive(x)
        return x**self.m

    def phi_d1(self, x):
        x = _check_positive(x)
        return self.m * x ** (self.m - 1.0)

    def phi_d2(self, x):
        x = _check_positive(x)
        return self.m * (self.m - 1.0) * x ** (self.m - 2.0)

    def vhat(self, x):
        x = _check_positive(x)
        g = self.spec.gamma
        return self.c_gamma * x**g / g

    def vhat_d1(self, x):
        x = _check_positive(x)
        return self.c_gamma * x ** (self.spec.gamma - 1.0)

    def vhat_d2(self, x):
        x = _check_positive(x)
        g = self.spec.gamma
        return self.c_gamma * (g - 1.0) * x ** (g - 2.0)

    def reward(self, x):
        x = _check_positive(x)
        g = self.spec.gamma
        return x**g / g

    def generator(self, x, u, du, d2u):
        """``rho u - nu x u' - sigma**2 x**2 u'' / 2`` from pointwise values."""
        sp = self.spec
        return sp.rho * u - sp.nu * x * du - 0.5 * sp.sigma**2 * x * x * d2u

    def vhat_fenchel(self, alpha: float) -> float:
        if not alpha > 0:
            raise DomainError(f"alpha must be positive, got {alpha}")
        return vhat_fenchel_closed(self.c_gamma, self.spec.gamma, alpha)

    def vhat_fenchel_argmax(self, alpha: float) -> float:
        if not alpha > 0:
            raise DomainError(f"alpha must be positive, got {alpha}")
        return (self.c_gamma / alpha) ** (1.0 / (1.0 - self.spec.gamma))


def build(spec: ProblemSpec) -> GbmPrimitives:
    report = validate(spec)
    if not report.passed:
        raise InvalidSpecError(report)
    return GbmPrimitives(
        m=negative_root(spec.rho, spec.nu, spec.sigma),
        c_gamma=c_gamma_of(spec.rho, spec.nu, spec.sigma, spec.gamma),
        spec=spec,
    )
