"""Measurements over trajectories: currents and flux estimates, second class
counts, density profiles, the mean height check and shock fronts."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .engine.ensemble import CoupledEnsemble, MultiSpeciesEnsemble, as_rates
from .engine.runs import Trajectory, sample_path
from .lattice import (
    SECOND_CLASS,
    Configuration,
    MultiSpeciesConfiguration,
    h_star,
    leftmost_particle,
    segment,
)
from .params import BoundaryParams, compute_a, compute_b

FLUX_BATCHES = 20


@dataclass(frozen=True)
class CurrentRecord:
    """Boundary counts at site 1 and the current J_t = entered - exited."""

    times: np.ndarray
    entered_left: int
    exited_left: int
    current: np.ndarray

    @classmethod
    def from_trajectory(cls, traj: Trajectory, entered: int, exited: int) -> "CurrentRecord":
        return cls(traj.times, int(entered), int(exited), traj.current)

    def at(self, t: float) -> int:
        """J at time t (piecewise constant, right-continuous)."""
        i = np.searchsorted(self.times, t, side="right") - 1
        return 0 if i < 0 else int(self.current[i])


@dataclass(frozen=True)
class FluxEstimate:
    J_hat: float
    stderr: float
    horizon: float

    def relative_error(self, target: float) -> float:
        return abs(self.J_hat - target) / abs(target)


def flux_sample_times(horizon: float, batches: int = FLUX_BATCHES) -> np.ndarray:
    """Sample grid for ``measure_flux``: the burn-in end and the batch edges."""
    return horizon / 2.0 + np.arange(batches + 1) * (horizon / 2.0 / batches)


def measure_flux(record, horizon: float, batches: int = FLUX_BATCHES) -> FluxEstimate:
    """(J_T - J_{T/2}) / (T/2) with a batch-means standard error.

    ``record`` is a Trajectory or CurrentRecord sampled at least at
    ``flux_sample_times(horizon)``; the first half of the horizon is burn-in.
    """
    times = np.asarray(record.times, dtype=float)
    if horizon <= 0 or times.size == 0 or times[-1] < horizon * (1 - 1e-12):
        raise ValueError("trajectory is shorter than the horizon")
    edges = flux_sample_times(horizon, batches)
    idx = np.searchsorted(times, edges * (1 - 1e-12))
    if np.any(idx >= times.size) or np.any(np.abs(times[idx] - edges) > 1e-9 * horizon):
        raise ValueError("trajectory is not sampled at the batch edges past the burn-in")
    J = np.asarray(record.current, dtype=float)[idx]
    width = horizon / 2.0 / batches
    rates = np.diff(J) / width
    J_hat = (J[-1] - J[0]) / (horizon / 2.0)
    return FluxEstimate(float(J_hat), float(rates.std(ddof=1) / np.sqrt(batches)), float(horizon))


def simulate_flux(params, n: int, horizon: float, seed: int, *, key=(), initial=None) -> FluxEstimate:
    """Run one replica on the segment from all-empty and measure the flux."""
    initial = initial if initial is not None else Configuration.empty(segment(n))
    ens = CoupledEnsemble([initial], params, seed, key=key)
    traj = sample_path(ens, flux_sample_times(horizon))
    return measure_flux(traj, horizon)


# ---------------------------------------------------------------------------
# second class particles


def second_class_count(state) -> int:
    """Second class particles (any type) in a labelled configuration or
    multi-species ensemble."""
    if isinstance(state, MultiSpeciesEnsemble):
        state = state.configuration()
    if not isinstance(state, MultiSpeciesConfiguration):
        raise TypeError("expected a labelled configuration or ensemble")
    return int(np.isin(state.labels, [int(x) for x in SECOND_CLASS]).sum())


def second_class_series(ens: MultiSpeciesEnsemble, times) -> np.ndarray:
    """Second class counts at each sample time (the ensemble is advanced)."""
    out = np.zeros(len(times), dtype=np.int64)
    for i, t in enumerate(times):
        status = ens.step_to(t)
        if status != "time":
            raise RuntimeError(f"run stopped early ({status}) at t={ens.time}")
        out[i] = second_class_count(ens)
    return out


# ---------------------------------------------------------------------------
# density


@dataclass(frozen=True)
class DensityProfile:
    sites: np.ndarray
    frequency: np.ndarray
    bulk: float
    bulk_stderr: float
    samples: int


def density_profile(params, n: int, margin: int, times, seed: int, *, key=(), burn_in: float = 0.0,
                    initial=None) -> DensityProfile:
    """Occupation frequencies on sites margin+1..n-margin at the sample
    times after ``burn_in``; the bulk mean gets a batch-means error over
    20 consecutive groups of sample times."""
    if not 0 <= margin < n / 2:
        raise ValueError("margin must leave a nonempty window")
    times = np.asarray(times, dtype=float)
    times = times[times >= burn_in]
    if times.size < FLUX_BATCHES:
        raise ValueError("need at least 20 sample times past the burn-in")
    initial = initial if initial is not None else Configuration.empty(segment(n))
    ens = CoupledEnsemble([initial], params, seed, key=key)
    lo, hi = margin, n - margin
    rows = np.zeros((times.size, hi - lo))
    for i, t in enumerate(times):
        status = ens.step_to(t)
        if status != "time":
            raise RuntimeError(f"run stopped early ({status})")
        rows[i] = ens.state[0, lo:hi]
    per_time = rows.mean(axis=1)
    batches = np.array([b.mean() for b in np.array_split(per_time, FLUX_BATCHES)])
    return DensityProfile(np.arange(lo + 1, hi + 1), rows.mean(axis=0), float(per_time.mean()),
                          float(batches.std(ddof=1) / np.sqrt(FLUX_BATCHES)), int(times.size))


def stationary_density_bounds(params: BoundaryParams) -> tuple[float, float]:
    """(c_min, c_max): the densities of the Bernoulli products that sandwich
    the stationary law when min(alpha, beta) > 0."""
    if min(params.alpha, params.beta) <= 0:
        raise ValueError("the sandwich needs min(alpha, beta) > 0")
    a, b = compute_a(params), compute_b(params)
    left, right = 1.0 / (1.0 + a), b / (1.0 + b)
    return min(left, right), max(left, right)


# ---------------------------------------------------------------------------
# mean height and the modified heat equation


def modified_laplacian(n: int, total: float) -> np.ndarray:
    """Matrix of f -> (1{x!=N} + 1{x=N} total) (Delta f)(x) on the interior
    x = 1..2N-1, with f(0) = f(2N) = 0."""
    m = 2 * n - 1
    A = np.zeros((m, m))
    for i in range(m):
        A[i, i] = -1.0
        if i > 0:
            A[i, i - 1] = 0.5
        if i < m - 1:
            A[i, i + 1] = 0.5
    A[n - 1] *= total
    return A


def heat_solution(initial: np.ndarray, total: float, times, *, dt: float | None = None) -> np.ndarray:
    """Solve the modified heat equation by RK4 with dt <= 0.1/(1+total).

    ``initial`` holds f(0..2N, 0); the result has one row per time.
    """
    initial = np.asarray(initial, dtype=float)
    n = (initial.size - 1) // 2
    A = modified_laplacian(n, total)
    limit = 0.1 / (1.0 + total)
    dt = limit if dt is None else min(dt, limit)
    times = np.asarray(times, dtype=float)
    out = np.zeros((times.size, initial.size))
    f = initial[1:-1].copy()
    t_now = 0.0
    for i in np.argsort(times):
        span = times[i] - t_now
        steps = int(np.ceil(span / dt - 1e-12)) if span > 0 else 0
        h = span / steps if steps else 0.0
        for _ in range(steps):
            k1 = A @ f
            k2 = A @ (f + 0.5 * h * k1)
            k3 = A @ (f + 0.5 * h * k2)
            k4 = A @ (f + h * k3)
            f = f + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        t_now = times[i]
        out[i, 1:-1] = f
    return out


def heat_solution_expm(initial: np.ndarray, total: float, times) -> np.ndarray:
    """The same linear system solved with the matrix exponential."""
    initial = np.asarray(initial, dtype=float)
    n = (initial.size - 1) // 2
    A = modified_laplacian(n, total)
    out = np.zeros((len(times), initial.size))
    for i, t in enumerate(times):
        out[i, 1:-1] = scipy.linalg.expm(t * A) @ initial[1:-1]
    return out


def mean_height_rate(n: int, total: float) -> float:
    """lambda = 1 - cos(pi / (2N + 1/(beta+delta)))."""
    return 1.0 - np.cos(np.pi / (2 * n + 1.0 / total))


@dataclass
class MeanHeightReport:
    times: np.ndarray
    ode: np.ndarray
    mc_mean: np.ndarray
    mc_stderr: np.ndarray
    envelope: np.ndarray
    samples: int

    @property
    def max_deviation(self) -> float:
        return float(np.abs(self.ode - self.mc_mean).max())

    @property
    def max_zscore(self) -> float:
        """Largest |MC - ODE| / s.e. over grid points with nonzero s.e."""
        se = self.mc_stderr
        mask = se > 0
        if not mask.any():
            return 0.0
        return float((np.abs(self.ode - self.mc_mean)[mask] / se[mask]).max())

    @property
    def initial_agrees(self) -> bool:
        """At t = 0 both sides are h* of the initial state."""
        rows = self.times == 0
        return bool(np.all(np.abs(self.ode[rows] - self.mc_mean[rows]) < 1e-9))

    @property
    def envelope_holds(self) -> bool:
        return bool(np.all(np.abs(self.ode).max(axis=1) <= self.envelope)
                    and np.all(np.abs(self.mc_mean).max(axis=1) <= self.envelope + 3 * self.mc_stderr.max(axis=1)))


def mean_height_check(params: BoundaryParams, initial: Configuration, times, *, samples: int = 2000,
                      seed: int = 0) -> MeanHeightReport:
    """Compare E[h*(eta_t)] by Monte Carlo with the heat equation solution
    and check both against 3N exp(-lambda t)."""
    r = as_rates(params)
    if abs(r.p - 0.5) > 0 or max(r.alpha, r.gamma) > 0 or r.beta + r.delta <= 0:
        raise ValueError("mean height check needs p = 1/2, alpha = gamma = 0 < beta + delta")
    n = initial.topology.size
    total = r.beta + r.delta
    times = np.asarray(times, dtype=float)
    ode = heat_solution(h_star(initial, params), total, times)
    acc = np.zeros((times.size, 2 * n + 1))
    acc2 = np.zeros_like(acc)
    for k in range(samples):
        ens = CoupledEnsemble([initial], r, seed, key=(k,))
        for i, t in enumerate(times):
            ens.step_to(t)
            h = h_star(ens.configuration(), params)
            acc[i] += h
            acc2[i] += h * h
    mean = acc / samples
    var = np.maximum(acc2 / samples - mean**2, 0.0) * samples / max(samples - 1, 1)
    envelope = 3 * n * np.exp(-mean_height_rate(n, total) * times)
    return MeanHeightReport(times, ode, mean, np.sqrt(var / samples), envelope, samples)


# ---------------------------------------------------------------------------
# shock fronts


@dataclass
class FrontTracker:
    times: np.ndarray
    leftmost: np.ndarray  # L(eta_t), NaN once the segment is empty
    n: int
    speed: float | None

    @property
    def depth(self) -> np.ndarray:
        """N - L(eta_t), the distance of the front from site N."""
        return self.n - self.leftmost


def shock_front(params, n: int, k: int, dt: float, seed: int, *, key=(), t_max: float | None = None) -> FrontTracker:
    """Leftmost particle of the process started from the rightmost k sites
    occupied, sampled every ``dt`` until the segment empties (or t_max).

    The speed is the least-squares slope of L(eta_t) over the sampled times
    with a particle present, i.e. the rate at which N - L decreases.
    """
    r = as_rates(params)
    if r.alpha > 0 or r.beta <= 0 or r.p <= 0.5:
        raise ValueError("shock front needs alpha = 0 < beta and p > 1/2")
    if not 0 <= k <= n:
        raise ValueError("k must lie in 0..N")
    sites = np.zeros(n, dtype=np.uint8)
    sites[n - k:] = 1
    if k == 0:
        return FrontTracker(np.zeros(0), np.zeros(0), n, None)
    ens = CoupledEnsemble([Configuration(segment(n), sites)], r, seed, key=key)
    t_max = t_max if t_max is not None else 50.0 * n / (2 * r.p - 1)
    times, fronts = [0.0], [float(n - k + 1)]
    t = 0.0
    while t < t_max:
        t += dt
        ens.step_to(t)
        left = leftmost_particle(ens.configuration())
        times.append(t)
        fronts.append(np.nan if left is None else float(left))
        if left is None and r.delta == 0:
            break
    times, fronts = np.array(times), np.array(fronts)
    ok = ~np.isnan(fronts)
    speed = None
    if ok.sum() >= 2:
        speed = float(np.polyfit(times[ok], fronts[ok], 1)[0])
    return FrontTracker(times, fronts, n, speed)


__all__ = [
    "CurrentRecord",
    "DensityProfile",
    "FluxEstimate",
    "FrontTracker",
    "MeanHeightReport",
    "density_profile",
    "flux_sample_times",
    "heat_solution",
    "heat_solution_expm",
    "mean_height_check",
    "mean_height_rate",
    "measure_flux",
    "second_class_count",
    "second_class_series",
    "shock_front",
    "simulate_flux",
    "stationary_density_bounds",
]
