"""Shared randomness for the grand coupling.

All Poisson clocks of a system (rate 1 per bulk edge plus the boundary
channels) are realised as one superposed Poisson process.  Each ring carries
a standard exponential gap and a uniform; the uniform's integer part (after
scaling by the total rate) selects the clock and its fractional part is the
uniform attached to that ring.  Thinning a boundary channel by a replica's
own rate uses the same attached uniform, which is exactly the construction
that inserts the extra-rate clocks for only some of the replicas.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels

BATCH_SIZE = 1 << 16

CHANNELS = ("alpha", "gamma", "delta", "beta")


@dataclass(frozen=True)
class ClockLayout:
    """Rates of the superposed clocks: ``n_bulk`` unit-rate edges and the four
    boundary channels."""

    n_bulk: int
    alpha: float = 0.0
    gamma: float = 0.0
    delta: float = 0.0
    beta: float = 0.0

    def __post_init__(self):
        if self.n_bulk < 0:
            raise ValueError("negative number of bulk edges")
        if min(self.alpha, self.gamma, self.delta, self.beta) < 0:
            raise ValueError("negative channel rate")
        if self.total_rate <= 0:
            raise ValueError("layout without any clock")

    @property
    def channel_rates(self) -> np.ndarray:
        """Rates indexed by kernel kind (index 0 unused)."""
        return np.array([0.0, self.alpha, self.gamma, self.delta, self.beta])

    @property
    def channel_bounds(self) -> np.ndarray:
        return np.cumsum(self.channel_rates)

    @property
    def total_rate(self) -> float:
        return float(self.n_bulk + self.alpha + self.gamma + self.delta + self.beta)


class ClockStream:
    """Counter-based (Philox) stream of raw rings, keyed by ``(seed, key)``.

    The stream hands out fixed-size batches; consumers keep a cursor into the
    current batch.  Nothing about the consumer influences what is drawn.
    """

    def __init__(self, seed: int, key=()):
        self.seed = int(seed)
        self.key = tuple(int(k) for k in key)
        seq = np.random.SeedSequence(self.seed, spawn_key=self.key)
        self._rng = np.random.Generator(np.random.Philox(seq))
        self.gaps = np.zeros(0)
        self.uniforms = np.zeros(0)
        self.cursor = 0
        self.batches = 0

    def refill(self) -> bool:
        self.gaps = self._rng.standard_exponential(BATCH_SIZE)
        self.uniforms = self._rng.random(BATCH_SIZE)
        self.cursor = 0
        self.batches += 1
        return True

    def ensure(self) -> bool:
        if self.cursor >= self.gaps.shape[0]:
            return self.refill()
        return True

    def get_state(self) -> dict:
        return {
            "seed": self.seed,
            "key": list(self.key),
            "bitgen": self._rng.bit_generator.state,
            "gaps": self.gaps,
            "uniforms": self.uniforms,
            "cursor": self.cursor,
            "batches": self.batches,
        }

    def set_state(self, state: dict):
        self._rng.bit_generator.state = state["bitgen"]
        self.gaps = np.asarray(state["gaps"], dtype=float)
        self.uniforms = np.asarray(state["uniforms"], dtype=float)
        self.cursor = int(state["cursor"])
        self.batches = int(state["batches"])


class ScriptedStream:
    """A finite list of rings, for hand-built scenarios.

    ``events`` holds ``(time, kind, slot, u)`` with ``kind`` a kernel kind
    code, ``slot`` the bulk slot (ignored for boundary kinds) and ``u`` the
    attached uniform.  After the last ring the clocks fall silent.
    """

    def __init__(self, events, layout: ClockLayout):
        events = sorted(events, key=lambda e: e[0])
        rates = layout.channel_rates
        bounds = layout.channel_bounds
        total = layout.total_rate
        gaps, unif = [], []
        last = 0.0
        for time, kind, slot, u in events:
            if time < last:
                raise ValueError("event times must be nondecreasing")
            gaps.append((time - last) * total)
            last = time
            if kind == kernels.KIND_BULK:
                if not 0 <= slot < layout.n_bulk:
                    raise ValueError("bulk slot out of range")
                x = slot + u
            else:
                if rates[kind] <= 0:
                    raise ValueError("scripted ring on a channel with zero rate")
                x = layout.n_bulk + bounds[kind] - rates[kind] + u * rates[kind]
            unif.append(x / total)
        self.gaps = np.array(gaps, dtype=float)
        self.uniforms = np.array(unif, dtype=float)
        self.cursor = 0
        self.seed = None
        self.key = ()

    def ensure(self) -> bool:
        return self.cursor < self.gaps.shape[0]
