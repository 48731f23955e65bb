"""Transient laws, total-variation curves and exact mixing times."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.stats import poisson

from ..lattice import Configuration, configuration_index
from .generator import GeneratorMatrix, build_generator, stationary_exact

UNIFORMIZATION_FACTOR = 1.01
POISSON_TAIL = 1e-12


def _as_rows(initial, size: int) -> np.ndarray:
    """Initial laws as rows: a configuration, an index, a vector or a matrix."""
    if isinstance(initial, Configuration):
        initial = configuration_index(initial)
    if isinstance(initial, (int, np.integer)):
        out = np.zeros((1, size))
        out[0, int(initial)] = 1.0
        return out
    arr = np.atleast_2d(np.asarray(initial, dtype=float))
    if arr.shape[1] != size:
        raise ValueError("initial law has the wrong dimension")
    return arr


class Uniformized:
    """e^{tQ} acting on row vectors through the uniformized chain."""

    def __init__(self, G: GeneratorMatrix):
        self.rate = max(UNIFORMIZATION_FACTOR * float(np.abs(G.Q.diagonal()).max()), 1e-300)
        P = sp.identity(G.size, format="csr") + G.Q / self.rate
        self._PT = P.T.tocsr()

    def evolve(self, rows: np.ndarray, t: float) -> np.ndarray:
        if t == 0:
            return rows.copy()
        mu = self.rate * t
        kmax = int(poisson.isf(POISSON_TAIL, mu)) + 1
        weights = poisson.pmf(np.arange(kmax + 1), mu)
        cur = rows.T.copy()
        acc = weights[0] * cur
        for k in range(1, kmax + 1):
            cur = self._PT @ cur
            acc += weights[k] * cur
        return acc.T


def tv_distance(rows: np.ndarray, pi: np.ndarray) -> np.ndarray:
    return 0.5 * np.abs(rows - pi[None, :]).sum(axis=1)


def evolve_law(G: GeneratorMatrix, initial, t: float) -> np.ndarray:
    rows = _as_rows(initial, G.size)
    return Uniformized(G).evolve(rows, t)


def tv_curve(G: GeneratorMatrix, initial, times, pi: np.ndarray | None = None) -> np.ndarray:
    """TV distance to stationarity at each time (rows per initial law).

    Times are processed in increasing order, each step propagating from the
    previous grid time, so the truncation error stays below 1e-10 overall for
    grids of moderate length.
    """
    pi = stationary_exact(G) if pi is None else pi
    rows = _as_rows(initial, G.size)
    times = np.asarray(times, dtype=float)
    order = np.argsort(times)
    unif = Uniformized(G)
    out = np.zeros((rows.shape[0], times.size))
    cur, t_prev = rows, 0.0
    for i in order:
        cur = unif.evolve(cur, times[i] - t_prev)
        t_prev = times[i]
        out[:, i] = tv_distance(cur, pi)
    return out[0] if out.shape[0] == 1 else out


def worst_tv(P: np.ndarray, pi: np.ndarray) -> float:
    """max over starting states of the TV distance of the row to pi."""
    return float(0.5 * np.abs(P - pi[None, :]).sum(axis=1).max())


def _descend(rows, t_lo, powers, steps, eps, pi):
    """Binary descent: from the rows at t_lo (worst TV >= eps), add powers
    while the worst TV stays >= eps.  ``powers[j]`` is the kernel for time
    ``steps[j]`` (decreasing).  The distance from a point mass never grows,
    so rows that drop below eps are discarded along the way."""
    for Pj, dt in zip(powers, steps):
        cand = rows @ Pj
        tv = tv_distance(cand, pi)
        if tv.max() >= eps:
            rows, t_lo = cand[tv >= eps], t_lo + dt
    return rows, t_lo


def mixing_time_exact(G: GeneratorMatrix, epsilon: float, *, rtol: float = 1e-6,
                      pi: np.ndarray | None = None) -> float:
    """inf{t : max_x TV(P_t(x, .), pi) < epsilon}, to relative accuracy rtol.

    A matrix exponential at a short base time h, repeated squaring until the
    worst distance drops below epsilon, then binary descent to an interval
    of length h.  Inside it the surviving rows (those still at distance
    >= epsilon) are bisected by uniformization.
    """
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    pi = stationary_exact(G) if pi is None else pi
    if 1.0 - pi.min() < epsilon:
        return 0.0
    Q = G.dense()
    rate = float(np.abs(np.diag(Q)).max())
    h = 1.0 / rate

    E = scipy.linalg.expm(h * Q)
    powers, steps = [E], [h]
    while worst_tv(powers[-1], pi) >= epsilon:
        if steps[-1] > 1e12:
            raise RuntimeError("distance never dropped below epsilon")
        powers.append(powers[-1] @ powers[-1])
        steps.append(2 * steps[-1])
    if len(powers) == 1:
        rows, t_lo = np.eye(G.size), 0.0
    else:
        P = powers[-2]
        rows, t_lo = _descend(P[tv_distance(P, pi) >= epsilon], steps[-2], powers[-3::-1], steps[-3::-1], epsilon, pi)
    del powers, E
    # t_mix in (t_lo, t_lo + h]; bisect on the surviving rows
    unif = Uniformized(G)
    lo, hi = 0.0, h
    target = max(rtol * max(t_lo, h), 1e-300)
    while hi - lo > target:
        mid = 0.5 * (lo + hi)
        cand = unif.evolve(rows, mid - lo)
        tv = tv_distance(cand, pi)
        if tv.max() >= epsilon:
            rows, lo = cand[tv >= epsilon], mid
        else:
            hi = mid
    return t_lo + 0.5 * (lo + hi)


def mixing_time_curve(G: GeneratorMatrix, epsilons, **kw) -> np.ndarray:
    return np.array([mixing_time_exact(G, e, **kw) for e in epsilons])


# ---------------------------------------------------------------------------
# censoring


def censored_tv_curve(params, n: int, breakpoints, edge_sets, times, initial=None) -> np.ndarray:
    """TV to stationarity of the law under a piecewise-constant censoring
    schedule, by exact propagation interval by interval.

    ``edge_sets[0]`` applies before ``breakpoints[0]`` and so on; starts
    from all-full unless ``initial`` is given.
    """
    if len(edge_sets) != len(breakpoints) + 1:
        raise ValueError("need one edge set more than breakpoints")
    full = build_generator(params, n)
    pi = stationary_exact(full)
    gens = [Uniformized(build_generator(params, n, censored_edges=s)) for s in edge_sets]
    init = (1 << n) - 1 if initial is None else initial
    cur = _as_rows(init, full.size)
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) < 0):
        raise ValueError("times must be sorted")
    cuts = list(breakpoints)
    out = np.zeros(times.size)
    t_now, piece = 0.0, 0
    for i, t in enumerate(times):
        while piece < len(cuts) and cuts[piece] <= t:
            cur = gens[piece].evolve(cur, cuts[piece] - t_now)
            t_now = cuts[piece]
            piece += 1
        cur = gens[piece].evolve(cur, t - t_now)
        t_now = t
        out[i] = tv_distance(cur, pi)[0]
    return out


# ---------------------------------------------------------------------------
# triple point symmetrization


@dataclass(frozen=True)
class Symmetrization:
    adjoint: tuple
    symmetrized: tuple
    gap: float


def adjoint_and_symmetrize(params, n: int | None = None) -> Symmetrization:
    """Adjoint and additive symmetrization at the triple point.

    The stationary law is uniform there, so the adjoint is the process with
    parameters (1-p, gamma, delta, alpha, beta) (in the order p, alpha,
    beta, gamma, delta) and the symmetrization has p' = 1/2,
    alpha' = gamma' = (alpha+gamma)/2, beta' = delta' = (beta+delta)/2.
    With ``n`` the spectral gap of the symmetrized chain on n sites is
    returned as well (NaN otherwise).
    """
    from ..params import Phase, classify_phase

    if classify_phase(params).phase is not Phase.TRIPLE_POINT:
        raise ValueError("adjoint by parameter swap needs the triple point a = b = 1")
    p, al, be, ga, de = params.p, params.alpha, params.beta, params.gamma, params.delta
    adjoint = (1.0 - p, ga, de, al, be)
    left, right = (al + ga) / 2.0, (be + de) / 2.0
    sym = (0.5, left, right, left, right)
    gap = float("nan") if n is None else spectral_gap_symmetrized(sym, n)
    return Symmetrization(adjoint, sym, gap)


def spectral_gap_symmetrized(sym, n: int) -> float:
    """Smallest nonzero |eigenvalue| of the (reversible) symmetrized chain."""
    from ..engine.ensemble import Rates

    G = build_generator(Rates(*sym), n)
    pi = stationary_exact(G)
    root = np.sqrt(pi)
    S = (root[:, None] * G.dense()) / root[None, :]
    S = 0.5 * (S + S.T)
    vals = np.sort(np.linalg.eigvalsh(S))[::-1]
    return float(-vals[1])


@dataclass
class DiaconisReport:
    n: int
    gap: float
    times: np.ndarray
    worst_tv: np.ndarray
    bound: np.ndarray
    violations: int

    @property
    def implied_mixing_bound(self):
        """Time after which the estimate guarantees TV < 1/4."""
        return ((self.n / 2 + 1) * math.log(2) + math.log(4.0)) / self.gap


def diaconis_bound_check(params, n: int, times) -> DiaconisReport:
    """Check TV(t) <= 2^(n/2+1) exp(-gap t) from every start on the grid."""
    sym = adjoint_and_symmetrize(params, n)
    G = build_generator(params, n)
    pi = stationary_exact(G)
    curves = tv_curve(G, np.eye(G.size), times, pi)
    worst = curves.max(axis=0)
    times = np.asarray(times, dtype=float)
    bound = 2.0 ** (n / 2 + 1) * np.exp(-sym.gap * times)
    violations = int((curves > bound[None, :]).sum())
    return DiaconisReport(n, sym.gap, times, worst, bound, violations)
