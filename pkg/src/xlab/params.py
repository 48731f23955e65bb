"""Model parameters, the derived boundary quantities a and b, phase labels and
the closed-form constants attached to each regime.

All logarithms are natural logarithms.
"""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass
from pathlib import Path

PHASE_TOL = 1e-12

PARAM_KEYS = ("p", "alpha", "beta", "gamma", "delta")


class Phase(str, enum.Enum):
    LOW_DENSITY = "LowDensity"
    HIGH_DENSITY = "HighDensity"
    MAX_CURRENT = "MaxCurrent"
    TRIPLE_POINT = "TriplePoint"
    COEXISTENCE_LINE = "CoexistenceLine"
    ONE_BLOCKED_ENTRY = "OneBlockedEntry"
    REVERSE_BIAS = "ReverseBias"
    SYMMETRIC_BULK = "SymmetricBulk"


@dataclass(frozen=True)
class BoundaryParams:
    """Jump probability ``p`` (right jumps; left jumps have probability 1-p)
    and the four boundary rates.

    ``alpha``/``gamma`` create/annihilate particles at site 1,
    ``delta``/``beta`` create/annihilate particles at site N.
    """

    p: float
    alpha: float = 0.0
    beta: float = 0.0
    gamma: float = 0.0
    delta: float = 0.0

    def __post_init__(self):
        for key in PARAM_KEYS:
            value = getattr(self, key)
            if not math.isfinite(value):
                raise ValueError(f"{key} must be finite, got {value}")
            object.__setattr__(self, key, float(value))
        if not 0.5 - PHASE_TOL <= self.p <= 1.0 + PHASE_TOL:
            raise ValueError(f"p must lie in [1/2, 1], got {self.p}")
        rates = (self.alpha, self.beta, self.gamma, self.delta)
        if min(rates) < 0:
            raise ValueError(f"boundary rates must be nonnegative, got {rates}")
        if max(rates) == 0:
            raise ValueError("closed segment: at least one boundary rate must be positive")
        if self.p >= 1.0 - PHASE_TOL and max(self.alpha, self.beta) == 0:
            # no particle can ever reach the boundary where it could be removed
            raise ValueError("p=1 with alpha=beta=0 has no unique stationary law")

    def replace(self, **changes) -> "BoundaryParams":
        values = asdict(self)
        values.update(changes)
        return BoundaryParams(**values)

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def drift(self) -> float:
        return 2.0 * self.p - 1.0


@dataclass(frozen=True)
class PhaseDescriptor:
    phase: Phase
    a: float | None
    b: float | None

    def to_dict(self) -> dict:
        return {"phase": self.phase.value, "a": self.a, "b": self.b}


def _boundary_quantity(p: float, enter: float, leave: float) -> float:
    k = 2.0 * p - 1.0 - enter + leave
    return (k + math.sqrt(k * k + 4.0 * enter * leave)) / (2.0 * enter)


def compute_a(params: BoundaryParams) -> float:
    if params.alpha <= 0:
        raise ValueError("a undefined: alpha must be positive")
    return _boundary_quantity(params.p, params.alpha, params.gamma)


def compute_b(params: BoundaryParams) -> float:
    if params.beta <= 0:
        raise ValueError("b undefined: beta must be positive")
    return _boundary_quantity(params.p, params.beta, params.delta)


def rate_for_boundary_quantity(p: float, value: float, leave: float = 0.0) -> float:
    """Invert ``compute_a`` (or ``compute_b``): the entry rate giving ``value``.

    The quantity solves ``rate*x**2 - (2p-1-rate+leave)*x - leave = 0``, which
    is linear in the rate.
    """
    if value <= 0:
        raise ValueError("only positive values of a or b can be inverted")
    return ((2.0 * p - 1.0 + leave) * value + leave) / (value * (value + 1.0))


def _close(x: float, y: float) -> bool:
    return abs(x - y) < PHASE_TOL


def classify_phase(params: BoundaryParams) -> PhaseDescriptor:
    a = compute_a(params) if params.alpha > 0 else None
    b = compute_b(params) if params.beta > 0 else None
    if _close(params.p, 0.5):
        return PhaseDescriptor(Phase.SYMMETRIC_BULK, a, b)
    if a is None and b is None:
        return PhaseDescriptor(Phase.REVERSE_BIAS, a, b)
    if a is None or b is None:
        return PhaseDescriptor(Phase.ONE_BLOCKED_ENTRY, a, b)
    if _close(a, 1.0) and _close(b, 1.0):
        phase = Phase.TRIPLE_POINT
    elif _close(a, b) and a > 1.0:
        phase = Phase.COEXISTENCE_LINE
    elif max(a, b) <= 1.0 + PHASE_TOL:
        phase = Phase.MAX_CURRENT
    elif a > b:
        phase = Phase.LOW_DENSITY
    else:
        phase = Phase.HIGH_DENSITY
    return PhaseDescriptor(phase, a, b)


def theoretical_flux(phase: PhaseDescriptor, p: float) -> float:
    """Long-run particle flux through the segment in the limit of large N."""
    drift = 2.0 * p - 1.0
    if phase.phase is Phase.SYMMETRIC_BULK or _close(p, 0.5):
        return 0.0
    if phase.phase in (Phase.REVERSE_BIAS, Phase.ONE_BLOCKED_ENTRY):
        raise ValueError(f"flux formula inapplicable in phase {phase.phase.value}")
    a, b = phase.a, phase.b
    if max(a, b) <= 1.0 + PHASE_TOL:
        return drift / 4.0
    x = a if a > b else b
    return drift * x / (1.0 + x) ** 2


def halfline_current(p: float, a: float) -> float:
    """Current through site 1 of the half-line process started empty."""
    x = max(a, 1.0)
    return (2.0 * p - 1.0) * x / (x + 1.0) ** 2


def cutoff_constant(b: float, p: float) -> float:
    if p <= 0.5:
        raise ValueError("cutoff constant needs p > 1/2")
    x = max(b, 1.0)
    return (x + 1.0) ** 2 / ((2.0 * p - 1.0) * x)


def reverse_bias_rate(params: BoundaryParams) -> float:
    if classify_phase(params).phase is not Phase.REVERSE_BIAS:
        raise ValueError("reverse bias rate needs alpha = beta = 0 and p in (1/2, 1)")
    rate = math.log(params.p / (1.0 - params.p))
    if params.gamma > 0 and params.delta > 0:
        return rate / 2.0
    return rate


def conjectured_high_density_constant(a: float, b: float, p: float) -> dict:
    """Conjectural mixing constant in the high density phase (exploratory)."""
    a_hat = max(a, 1.0)
    if b <= a_hat:
        raise ValueError("constant blows up on the coexistence line (needs b > max(a, 1))")
    if p <= 0.5:
        raise ValueError("needs p > 1/2")
    value = (b + 1.0) * (a_hat**2 * (2.0 * b - 1.0) + a_hat * (b - 3.0) + b) / ((b - a_hat) * (2.0 * p - 1.0))
    return {"value": value, "conjectural": True}


def parse_params(text: str) -> BoundaryParams:
    """Read ``key=value`` lines (``#`` starts a comment) into parameters."""
    values = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep:
            raise ValueError(f"expected key=value, got {raw!r}")
        if key in PARAM_KEYS:
            values[key] = float(value)
    if "p" not in values:
        raise ValueError("config must set p")
    return BoundaryParams(**values)


def load_params(path: str | Path) -> BoundaryParams:
    return parse_params(Path(path).read_text())
