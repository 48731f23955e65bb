"""Return times: first-step analysis, the continuous-time Kac identity and a
Monte Carlo estimate through the simulation engine."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from ..engine.ensemble import CoupledEnsemble, Rates, as_rates
from ..lattice import Configuration, configuration_from_index, configuration_index, segment
from .generator import GeneratorMatrix, build_generator, is_ergodic, stationary_exact


def expected_hitting_times(G: GeneratorMatrix, target: int) -> np.ndarray:
    """E_x[first time the chain is at ``target``] for every x (0 at target).

    Solves q(x) h(x) - sum_y q(x,y) h(y) = 1 off the target.
    """
    keep = np.array([i for i in range(G.size) if i != target])
    A = (-G.Q)[keep][:, keep].tocsc()
    h = np.zeros(G.size)
    h[keep] = spsolve(A, np.ones(keep.size))
    return h


def expected_return_time(G: GeneratorMatrix, state: int) -> float:
    """E[time to come back to ``state`` after starting there], by first-step
    analysis: holding time plus the hitting time from the first jump."""
    if not is_ergodic(G):
        raise ValueError("return times need an ergodic chain")
    h = expected_hitting_times(G, state)
    out = G.transitions_from(state)
    q = sum(out.values())
    return 1.0 / q + sum(rate / q * h[y] for y, rate in out.items())


def kac_return_time(G: GeneratorMatrix, state: int) -> float:
    """Kac's formula in continuous time: 1 / (pi(state) * exit rate)."""
    if not is_ergodic(G):
        raise ValueError("Kac's formula needs an ergodic chain")
    pi = stationary_exact(G)
    return 1.0 / (pi[state] * G.exit_rates()[state])


@dataclass
class KacReport:
    state: str
    first_step: float
    kac: float
    mc_mean: float
    mc_stderr: float
    returns: int

    @property
    def identity_gap(self) -> float:
        return abs(self.first_step - self.kac)

    @property
    def mc_zscore(self) -> float:
        return (self.mc_mean - self.first_step) / self.mc_stderr


def simulate_return_times(params, n: int, reference: Configuration, count: int, seed: int, *, key=()) -> np.ndarray:
    """``count`` successive return times to ``reference`` of one long run.

    The run is coupled to a frozen copy of the reference: a second replica
    that shares the clocks but whose boundary rates cannot change it.  A
    return is the first time the two agree again after they split.
    """
    r = as_rates(params)
    if reference.topology != segment(n):
        raise ValueError("reference must live on the segment")
    frozen = _freezing_rates(r, reference)
    ens = CoupledEnsemble([reference, reference], [r, frozen], seed, key=key)
    out = np.zeros(count)
    last = 0.0
    for i in range(count):
        ens.stop_on_split()
        if ens.step_to(np.inf) != "split":
            raise RuntimeError("chain never left the reference state")
        ens.stop_on_coalescence()
        if ens.step_to(np.inf) != "coalesced":
            raise RuntimeError("chain never returned")
        out[i] = ens.time - last
        last = ens.time
    return out


def _freezing_rates(r: Rates, reference: Configuration) -> Rates:
    """Rates under which ``reference`` never changes (with the same p)."""
    sites = reference.sites
    n = sites.size
    if n > 1 and np.any((sites[:-1] == 1) & (sites[1:] == 0)) and r.p > 0:
        raise ValueError("reference must be frozen by the bulk dynamics (no particle followed by a hole)")
    if n > 1 and np.any((sites[:-1] == 0) & (sites[1:] == 1)) and r.p < 1:
        raise ValueError("reference must be frozen by the bulk dynamics (no hole followed by a particle)")
    first, last = sites[0], sites[-1]
    return Rates(
        r.p,
        alpha=r.alpha if first == 1 else 0.0,
        gamma=r.gamma if first == 0 else 0.0,
        delta=r.delta if last == 1 else 0.0,
        beta=r.beta if last == 0 else 0.0,
    )


def kac_check(params, n: int, reference: Configuration | None = None, *, samples: int = 20000,
              seed: int = 0) -> KacReport:
    """Compare Monte Carlo return times with the first-step value and Kac.

    The Monte Carlo part needs a reference that the bulk dynamics cannot
    change, such as all-empty or all-full.
    """
    reference = reference if reference is not None else Configuration.empty(segment(n))
    G = build_generator(params, n)
    state = configuration_index(reference)
    first = expected_return_time(G, state)
    kac = kac_return_time(G, state)
    times = simulate_return_times(params, n, reference, samples, seed)
    return KacReport(reference.to_string(), first, kac, float(times.mean()),
                     float(times.std(ddof=1) / np.sqrt(times.size)), samples)


# ---------------------------------------------------------------------------
# birth-death chains


@dataclass(frozen=True)
class BirthDeathChain:
    """Chain on 0..K with rates birth[k] (k -> k+1) and death[k] (k -> k-1)."""

    birth: tuple
    death: tuple

    def __post_init__(self):
        if len(self.birth) != len(self.death):
            raise ValueError("birth and death rates need equal length")
        if self.death[0] != 0 or self.birth[-1] != 0:
            raise ValueError("no death at 0 and no birth at the top state")

    @property
    def size(self) -> int:
        return len(self.birth)

    def generator(self) -> GeneratorMatrix:
        k = self.size
        rows, cols, vals = [], [], []
        for i in range(k):
            if self.birth[i] > 0:
                rows.append(i), cols.append(i + 1), vals.append(self.birth[i])
            if self.death[i] > 0:
                rows.append(i), cols.append(i - 1), vals.append(self.death[i])
        off = sp.coo_matrix((vals, (rows, cols)), shape=(k, k)).tocsr()
        out = np.asarray(off.sum(axis=1)).ravel()
        return GeneratorMatrix((off - sp.diags(out)).tocsr(), 0)

    def stationary(self) -> np.ndarray:
        """pi(k) proportional to prod_{j<k} birth[j]/death[j+1]."""
        logw = np.zeros(self.size)
        for k in range(1, self.size):
            logw[k] = logw[k - 1] + np.log(self.birth[k - 1]) - np.log(self.death[k])
        w = np.exp(logw - logw.max())
        return w / w.sum()

    def mean_passage_up(self, k: int) -> float:
        """Expected time to go from k to k+1, by the ladder recursion
        m(0) = 1/b(0), m(k) = (1 + d(k) m(k-1)) / b(k)."""
        m = 1.0 / self.birth[0]
        for j in range(1, k + 1):
            m = (1.0 + self.death[j] * m) / self.birth[j]
        return m

    def mean_hitting_time_up(self, start: int, target: int) -> float:
        return sum(self.mean_passage_up(k) for k in range(start, target))


def gamblers_ruin_chain(p: float, size: int, *, entry: float = 1.0) -> BirthDeathChain:
    """Biased walk on 0..size-1 with up rate 1-p and down rate p (a reflecting
    boundary at 0 entered at rate ``entry``), the comparison chain for the
    distance of a particle from its preferred end."""
    birth = [entry] + [1.0 - p] * (size - 2) + [0.0]
    death = [0.0] + [p] * (size - 1)
    return BirthDeathChain(tuple(birth), tuple(death))
