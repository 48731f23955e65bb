import numpy as np
import pytest

from xlab.engine import CoupledEnsemble, MultiSpeciesEnsemble, Rates, sample_path, two_species_system
from xlab.lattice import Configuration, disagreement, segment
from xlab.observables import (
    CurrentRecord,
    density_profile,
    flux_sample_times,
    heat_solution,
    heat_solution_expm,
    mean_height_check,
    measure_flux,
    modified_laplacian,
    second_class_count,
    second_class_series,
    shock_front,
    simulate_flux,
    stationary_density_bounds,
)
from xlab.params import BoundaryParams, classify_phase, cutoff_constant, rate_for_boundary_quantity, theoretical_flux


def test_no_left_boundary_means_no_current():
    params = BoundaryParams(0.75, beta=1.0, delta=0.5)
    est = simulate_flux(params, 20, 500.0, 0)
    assert est.J_hat == 0.0


def test_current_record_is_right_continuous():
    rec = CurrentRecord(np.array([1.0, 2.0, 3.0]), 5, 2, np.array([1, 2, 3]))
    assert rec.at(0.5) == 0 and rec.at(1.0) == 1 and rec.at(2.5) == 2 and rec.at(10.0) == 3


def test_measure_flux_needs_the_batch_grid():
    params = BoundaryParams(0.75, alpha=1.0, beta=1.0)
    ens = CoupledEnsemble([Configuration.empty(segment(10))], params, 0)
    traj = sample_path(ens, [10.0, 20.0])
    with pytest.raises(ValueError):
        measure_flux(traj, 20.0)
    with pytest.raises(ValueError):
        measure_flux(traj, 40.0)


def test_flux_max_current_totally_asymmetric():
    params = BoundaryParams(1.0, alpha=1.0, beta=1.0)
    est = simulate_flux(params, 200, 2e4, 1)
    assert est.relative_error(0.25) <= 0.05


def test_flux_high_density():
    params = BoundaryParams(0.75, alpha=1.0, beta=rate_for_boundary_quantity(0.75, 2.0))
    J = theoretical_flux(classify_phase(params), 0.75)
    assert J == pytest.approx(0.5 * 2.0 / 9.0)
    est = simulate_flux(params, 200, 4e4, 2)
    assert est.relative_error(J) <= 0.05


def test_second_class_counts_full_against_empty():
    params = BoundaryParams(0.75, beta=1.0)
    n = 30
    top = segment(n)
    chi = disagreement(Configuration.full(top), Configuration.empty(top))
    assert second_class_count(chi) == n
    ens = MultiSpeciesEnsemble(chi, two_species_system(params, params), 4)
    series = second_class_series(ens, np.linspace(1.0, 2000.0, 400))
    assert np.all(np.diff(series) <= 0)
    assert series[-1] == 0


def test_density_high_density_bulk():
    params = BoundaryParams(0.75, alpha=1.0, beta=rate_for_boundary_quantity(0.75, 2.0))
    prof = density_profile(params, 200, 50, np.linspace(2000.0, 12000.0, 400), 5, burn_in=2000.0)
    assert abs(prof.bulk - 2.0 / 3.0) <= 0.02


def test_density_max_current_bulk():
    params = BoundaryParams(0.75, alpha=1.0, beta=1.0)
    prof = density_profile(params, 200, 50, np.linspace(2000.0, 12000.0, 400), 6, burn_in=2000.0)
    assert abs(prof.bulk - 0.5) <= 0.02


def test_density_drains_without_entry():
    params = BoundaryParams(0.75, beta=1.0)
    prof = density_profile(params, 20, 0, np.linspace(2000.0, 3000.0, 40), 7,
                           initial=Configuration.full(segment(20)))
    assert prof.bulk == 0.0


def test_stationary_density_bounds():
    params = BoundaryParams(0.75, alpha=1.0, beta=rate_for_boundary_quantity(0.75, 2.0))
    lo, hi = stationary_density_bounds(params)
    # alpha = 1 > 2p - 1 gives a = 0, so the upper density is 1
    assert lo == pytest.approx(2.0 / 3.0) and hi == pytest.approx(1.0)


def test_heat_solution_decays_to_zero():
    n = 6
    f0 = np.zeros(2 * n + 1)
    f0[1:-1] = np.random.default_rng(0).normal(size=2 * n - 1)
    sol = heat_solution(f0, 2.0, [0.0, 1.0, 500.0])
    assert np.allclose(sol[0], f0)
    assert np.abs(sol[-1]).max() < 1e-6


def test_heat_solution_matches_matrix_exponential():
    n = 5
    f0 = np.zeros(2 * n + 1)
    f0[1:-1] = np.arange(1, 2 * n)
    times = [0.0, 0.5, 3.0, 20.0]
    # RK4 global error is O(dt^4) with dt = 0.04
    assert np.abs(heat_solution(f0, 1.5, times) - heat_solution_expm(f0, 1.5, times)).max() < 1e-6
    fine = heat_solution(f0, 1.5, times, dt=0.005)
    assert np.abs(fine - heat_solution_expm(f0, 1.5, times)).max() < 1e-10


def test_modified_laplacian_scales_the_middle_row():
    A = modified_laplacian(3, 4.0)
    assert A.shape == (5, 5)
    assert A[2].tolist() == [0.0, 2.0, -4.0, 2.0, 0.0]
    assert A[0].tolist() == [-1.0, 0.5, 0.0, 0.0, 0.0]


def test_mean_height_monte_carlo_matches_heat_equation():
    params = BoundaryParams(0.5, beta=1.0, delta=1.0)
    initial = Configuration.full(segment(8))
    report = mean_height_check(params, initial, [0.0, 2.0, 8.0, 20.0, 50.0], samples=2000, seed=3)
    assert report.initial_agrees
    assert report.max_zscore <= 3.0
    assert report.envelope_holds


def test_mean_height_needs_symmetric_one_sided():
    with pytest.raises(ValueError):
        mean_height_check(BoundaryParams(0.75, beta=1.0), Configuration.full(segment(3)), [1.0])


def test_shock_front_without_particles():
    front = shock_front(BoundaryParams(1.0, beta=1.0), 10, 0, 1.0, 0)
    assert front.speed is None and front.times.size == 0


def test_shock_front_speed():
    params = BoundaryParams(1.0, beta=1.0)
    n = 1000
    front = shock_front(params, n, n, 10.0, 1)
    target = 1.0 / cutoff_constant(0.0, 1.0)
    assert abs(front.speed - target) <= 0.2 * target
    # the front only moves right, up to fluctuations of a few sites
    ok = ~np.isnan(front.leftmost)
    assert np.all(np.maximum.accumulate(front.leftmost[ok]) - front.leftmost[ok] <= 10)


def test_second_class_count_rejects_plain_configurations():
    with pytest.raises(TypeError):
        second_class_count(Configuration.full(segment(3)))


def test_flux_sample_times():
    t = flux_sample_times(100.0, 4)
    assert t.tolist() == [50.0, 62.5, 75.0, 87.5, 100.0]


def test_flux_symmetric_rates():
    # single site, alpha = gamma: at stationarity entries and exits at site 1 balance
    est = simulate_flux(Rates(0.5, alpha=1.0, gamma=1.0, beta=1.0, delta=1.0), 1, 2e4, 3)
    assert abs(est.J_hat) <= 4 * est.stderr + 1e-3
