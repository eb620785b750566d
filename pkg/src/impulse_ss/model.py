"""Problem instances and validation of the standing assumptions."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields

FIELD_NAMES = ("rho", "nu", "sigma", "gamma", "c0", "c1")


@dataclass(frozen=True)
class ProblemSpec:
    """One instance of the irreversible investment problem.

    The state follows a geometric Brownian motion ``dX = nu X dt + sigma X dW``
    between interventions, the running reward is ``x**gamma / gamma``, and
    every investment of size ``i`` costs ``c0 * i + c1``.
    """

    rho: float
    nu: float
    sigma: float
    gamma: float
    c0: float
    c1: float

    def replace(self, **changes) -> "ProblemSpec":
        data = asdict(self)
        data.update(changes)
        return ProblemSpec(**data)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "ProblemSpec":
        if not isinstance(data, dict):
            raise ValueError("problem spec must be a JSON object")
        unknown = sorted(set(data) - set(FIELD_NAMES))
        if unknown:
            raise ValueError(f"unknown keys in problem spec: {', '.join(unknown)}")
        missing = [k for k in FIELD_NAMES if k not in data]
        if missing:
            raise ValueError(f"missing keys in problem spec: {', '.join(missing)}")
        values = {}
        for key in FIELD_NAMES:
            val = data[key]
            if isinstance(val, bool) or not isinstance(val, (int, float)):
                raise ValueError(f"field {key!r} must be a number, got {val!r}")
            values[key] = float(val)
        return cls(**values)

    @classmethod
    def from_json(cls, text: str) -> "ProblemSpec":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class Viability:
    """Whether investing can ever pay off: ``c1 < vhat*(c0)``."""

    viable: bool
    c1: float
    vhat_star_c0: float


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[tuple[str, str], ...] = ()
    viability: Viability | None = field(default=None)

    @property
    def passed(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        via = self.viability
        return {
            "passed": self.passed,
            "violations": [{"assumption": n, "detail": d} for n, d in self.violations],
            "viability": None if via is None else asdict(via),
        }


def validate(spec: ProblemSpec) -> ValidationReport:
    """Check every standing assumption and the investment-viability condition.

    Viability does not affect ``passed``: a non-viable instance is a valid
    problem whose answer is "never invest".
    """
    violations: list[tuple[str, str]] = []
    for f in fields(spec):
        val = getattr(spec, f.name)
        if not isinstance(val, (int, float)) or not math.isfinite(val):
            violations.append(("finite", f"{f.name} must be a finite number, got {val!r}"))
    if violations:
        return ValidationReport(tuple(violations), None)

    if not spec.sigma > 0:
        violations.append(("sigma > 0", f"sigma={spec.sigma}"))
    if not 0 < spec.gamma < 1:
        violations.append(("0 < gamma < 1", f"gamma={spec.gamma}"))
    if not spec.c0 > 0:
        violations.append(("c0 > 0", f"c0={spec.c0}"))
    if not spec.c1 > 0:
        violations.append(("c1 > 0", f"c1={spec.c1}"))
    if not spec.rho > max(spec.nu, 0.0):
        violations.append(("rho > nu+", f"rho={spec.rho} must exceed max(nu, 0)={max(spec.nu, 0.0)}"))

    viability = None
    if not violations:
        from .analytic import c_gamma_of, vhat_fenchel_closed

        cg = c_gamma_of(spec.rho, spec.nu, spec.sigma, spec.gamma)
        rhs = vhat_fenchel_closed(cg, spec.gamma, spec.c0)
        # strict: equality means investing never strictly pays
        viability = Viability(viable=spec.c1 < rhs, c1=spec.c1, vhat_star_c0=rhs)
    return ValidationReport(tuple(violations), viability)
