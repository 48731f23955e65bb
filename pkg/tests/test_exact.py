import itertools
import math

import numpy as np
import pytest
import scipy.linalg

from xlab.engine import Rates
from xlab.exact import (
    BirthDeathChain,
    adjoint_and_symmetrize,
    build_generator,
    censored_tv_curve,
    detailed_balance_residual,
    diaconis_bound_check,
    expected_return_time,
    is_ergodic,
    kac_check,
    kac_return_time,
    mixing_time_exact,
    stationary_exact,
    stationary_product,
    stationary_residual,
    stationary_reversible,
    tv_curve,
    write_distribution_csv,
)
from xlab.exact.generator import read_distribution_csv
from xlab.exact.kac import expected_hitting_times, gamblers_ruin_chain
from xlab.exact.mixing import spectral_gap_symmetrized
from xlab.harness import product_families, reversible_families
from xlab.params import BoundaryParams, compute_a, rate_for_boundary_quantity

GENERIC = BoundaryParams(0.7, alpha=0.5, beta=0.3, gamma=0.1, delta=0.2)


def product_params(a):
    return BoundaryParams(0.75, alpha=rate_for_boundary_quantity(0.75, a),
                          beta=rate_for_boundary_quantity(0.75, 1.0 / a))


# ---------------------------------------------------------------------------
# generator


def test_single_site_generator():
    G = build_generator(BoundaryParams(0.75, alpha=0.3, beta=0.4, gamma=0.1, delta=0.2), 1)
    Q = G.dense()
    assert Q[0, 1] == pytest.approx(0.5) and Q[1, 0] == pytest.approx(0.5)


def test_totally_asymmetric_edge_is_one_way():
    Q = build_generator(Rates(1.0), 2).dense()
    # index 1 is (1,0), index 2 is (0,1)
    assert Q[1, 2] == 1.0 and Q[2, 1] == 0.0


def test_generator_structure_at_random_parameters():
    rng = np.random.default_rng(1)
    for _ in range(5):
        r = rng.uniform(0.05, 2.0, 4)
        params = BoundaryParams(float(rng.uniform(0.5, 1.0)), *r)
        Q = build_generator(params, 6).dense()
        assert np.abs(Q.sum(axis=1)).max() < 1e-12
        off = Q - np.diag(np.diag(Q))
        assert off.min() >= 0
        for i, j in zip(*np.nonzero(off)):
            x = int(i) ^ int(j)
            one_flip = x & (x - 1) == 0 and x in (1, 1 << 5)
            swap = any(x == 3 << k for k in range(5)) and bin(int(i)).count("1") == bin(int(j)).count("1")
            assert one_flip or swap


def test_cap_is_enforced():
    with pytest.raises(ValueError):
        build_generator(GENERIC, 15)


# ---------------------------------------------------------------------------
# stationary laws


def test_symmetric_two_state_chain():
    pi = stationary_exact(build_generator(BoundaryParams(0.75, alpha=1.0, beta=1.0), 1))
    assert np.allclose(pi, [0.5, 0.5], atol=1e-14)


def test_product_law_matches_exact_solve():
    for params in product_families():
        for n in (2, 4, 6):
            pi = stationary_exact(build_generator(params, n))
            assert np.abs(pi - stationary_product(params, n)).max() <= 1e-10


def test_product_law_closed_forms():
    assert np.allclose(stationary_product(product_params(1.0), 5), 2.0**-5, atol=1e-15)
    assert np.allclose(stationary_product(product_params(2.0), 1), [2 / 3, 1 / 3], atol=1e-14)
    assert stationary_product(product_params(0.5), 2)[3] == pytest.approx(4 / 9, rel=1e-13)


def test_product_law_needs_ab_equal_one():
    with pytest.raises(ValueError):
        stationary_product(GENERIC, 3)


def test_reversible_law_matches_exact_solve():
    for params in reversible_families():
        pi = stationary_exact(build_generator(params, 6))
        mu = stationary_reversible(params, 6)
        assert np.abs(pi - mu).max() <= 1e-10
        assert detailed_balance_residual(build_generator(params, 6), mu) <= 1e-12


def test_reversible_law_special_cases():
    pi = stationary_reversible(BoundaryParams(0.75, beta=1.0), 4)
    assert pi[0] == 1.0 and pi.sum() == 1.0
    assert np.allclose(stationary_reversible(BoundaryParams(0.8, beta=0.7, delta=0.7), 1), [0.5, 0.5])


def test_detailed_balance_fails_for_generic_two_sided():
    G = build_generator(GENERIC, 5)
    assert detailed_balance_residual(G, stationary_exact(G)) > 1e-6


def test_symmetrized_chain_is_reversible():
    sym = adjoint_and_symmetrize(BoundaryParams(0.75, alpha=0.25, beta=0.25)).symmetrized
    G = build_generator(Rates(*sym), 5)
    assert detailed_balance_residual(G, stationary_exact(G)) <= 1e-12


def test_reducible_chain_has_no_unique_law():
    G = build_generator(Rates(0.75), 3)
    with pytest.raises(ValueError):
        stationary_exact(G)


def test_transient_states_get_zero_weight():
    G = build_generator(BoundaryParams(0.75, beta=1.0), 3)
    pi = stationary_exact(G)
    assert pi[0] == 1.0 and stationary_residual(G, pi) == 0.0


def test_distribution_csv_round_trip(tmp_path):
    G = build_generator(GENERIC, 4)
    pi = stationary_exact(G)
    path = write_distribution_csv(tmp_path / "pi.csv", pi, 4)
    lines = path.read_text().splitlines()
    assert lines[0] == "configuration,weight"
    assert [ln.split(",")[0] for ln in lines[1:]] == sorted(ln.split(",")[0] for ln in lines[1:])
    assert np.array_equal(read_distribution_csv(path), pi)


def _upsets_brute_force(n):
    """All increasing events on {0,1}^n as boolean masks over state indices."""
    size = 1 << n
    covers = [(i, i | (1 << k)) for i in range(size) for k in range(n) if not i >> k & 1]
    lo = np.array([c[0] for c in covers])
    hi = np.array([c[1] for c in covers])
    out = []
    for f in range(1 << size):
        bits = (f >> np.arange(size)) & 1
        if np.all(bits[lo] <= bits[hi]):
            out.append(bits.astype(bool))
    return out


def _random_upsets(n, rng, count):
    size = 1 << n
    idx = np.arange(size)
    out = []
    for _ in range(count):
        gens = rng.choice(size, size=int(rng.integers(1, 4)), replace=False)
        mask = np.zeros(size, dtype=bool)
        for g in gens:
            mask |= (idx & g) == g
        out.append(mask)
    return out


def _bernoulli(n, rho):
    counts = np.array([bin(i).count("1") for i in range(1 << n)])
    return rho**counts * (1 - rho) ** (n - counts)


def test_stationary_law_is_sandwiched_by_products():
    from xlab.observables import stationary_density_bounds

    params = BoundaryParams(0.75, alpha=0.9, beta=0.3, gamma=0.1, delta=0.05)
    lo, hi = stationary_density_bounds(params)
    rng = np.random.default_rng(5)
    for n in (3, 4, 5, 6):
        mu = stationary_exact(build_generator(params, n))
        events = _upsets_brute_force(n) if n <= 4 else _random_upsets(n, rng, 300)
        if n == 4:
            assert len(events) == 168  # Dedekind number
        top, bottom = _bernoulli(n, hi), _bernoulli(n, lo)
        for A in events:
            assert top[A].sum() >= mu[A].sum() - 1e-12
            assert mu[A].sum() >= bottom[A].sum() - 1e-12


# ---------------------------------------------------------------------------
# total variation and mixing times


def test_tv_at_time_zero_from_a_point_mass():
    G = build_generator(GENERIC, 4)
    pi = stationary_exact(G)
    assert tv_curve(G, 5, [0.0], pi)[0] == pytest.approx(1.0 - pi[5])
    assert tv_curve(G, pi, [0.0, 3.0], pi).max() < 1e-12


def test_two_state_tv_curve():
    G = build_generator(BoundaryParams(0.75, alpha=1.0, beta=1.0), 1)
    times = np.linspace(0.0, 5.0, 26)
    tv = tv_curve(G, np.eye(2), times)
    assert np.abs(tv - 0.5 * np.exp(-2 * times)[None, :]).max() < 1e-8


def test_two_state_mixing_time():
    G = build_generator(BoundaryParams(0.75, alpha=1.0, beta=1.0), 1)
    assert mixing_time_exact(G, 0.25) == pytest.approx(math.log(2) / 2, rel=1e-6)
    assert mixing_time_exact(G, 0.999999) == 0.0


def test_mixing_time_is_monotone_in_epsilon():
    rng = np.random.default_rng(2)
    for _ in range(4):
        params = BoundaryParams(float(rng.uniform(0.5, 1.0)), *rng.uniform(0.1, 1.5, 4))
        G = build_generator(params, 4)
        assert mixing_time_exact(G, 1 / 8) >= mixing_time_exact(G, 1 / 4)


def test_mixing_time_matches_dense_expm():
    G = build_generator(GENERIC, 3)
    pi = stationary_exact(G)
    t = mixing_time_exact(G, 0.25)
    Q = G.dense()

    def worst(s):
        P = scipy.linalg.expm(s * Q)
        return 0.5 * np.abs(P - pi[None, :]).sum(axis=1).max()

    assert worst(t * (1 - 1e-4)) >= 0.25 > worst(t * (1 + 1e-4))


def test_worst_tv_is_non_increasing():
    G = build_generator(GENERIC, 5)
    times = np.linspace(0.0, 40.0, 81)
    worst = tv_curve(G, np.eye(G.size), times).max(axis=0)
    assert np.all(np.diff(worst) <= 1e-12)


# ---------------------------------------------------------------------------
# triple point


def test_symmetrization_example():
    sym = adjoint_and_symmetrize(BoundaryParams(0.75, alpha=0.25, beta=0.25))
    assert sym.symmetrized == (0.5, 0.125, 0.125, 0.125, 0.125)
    assert sym.adjoint == pytest.approx((0.25, 0.0, 0.0, 0.25, 0.25))


def test_symmetrization_needs_triple_point():
    with pytest.raises(ValueError):
        adjoint_and_symmetrize(GENERIC)


def test_symmetrized_gap_is_positive_and_order_n_squared():
    sym = adjoint_and_symmetrize(BoundaryParams(0.75, alpha=0.25, beta=0.25)).symmetrized
    scaled = []
    for n in range(4, 9):
        gap = spectral_gap_symmetrized(sym, n)
        assert gap > 0
        scaled.append(gap * n * n)
    assert max(scaled) / min(scaled) <= 4.0


def test_triple_point_bound_at_n8():
    params = BoundaryParams(0.75, alpha=0.25, beta=0.25)
    report = diaconis_bound_check(params, 8, np.arange(0.0, 51.0))
    assert report.bound[0] >= 1.0
    assert report.violations == 0


# ---------------------------------------------------------------------------
# censoring


def test_censoring_everything_freezes_the_law():
    params = BoundaryParams(0.7, beta=0.9, delta=0.4)
    G = build_generator(params, 4)
    pi = stationary_exact(G)
    curve = censored_tv_curve(params, 4, [], [range(0, 5)], [0.0, 1.0, 10.0])
    assert np.allclose(curve, 1.0 - pi[15])


def test_censored_distance_dominates():
    params = BoundaryParams(0.7, beta=0.9, delta=0.4)
    n = 4
    G = build_generator(params, n)
    times = np.linspace(0.0, 6.0, 25)
    plain = tv_curve(G, (1 << n) - 1, times)
    censored = censored_tv_curve(params, n, [1.0, 2.5], [{2}, {1, 3}, set()], times)
    assert np.all(censored >= plain - 1e-10)


# ---------------------------------------------------------------------------
# return times


def test_two_state_return_time():
    G = build_generator(BoundaryParams(0.75, alpha=1.0, beta=1.0), 1)
    assert expected_return_time(G, 0) == pytest.approx(2.0)
    assert kac_return_time(G, 0) == pytest.approx(2.0)


def test_first_step_matches_kac_at_n4():
    G = build_generator(GENERIC, 4)
    assert expected_return_time(G, 0) == pytest.approx(kac_return_time(G, 0), rel=1e-10)


def test_monte_carlo_return_time_at_n4():
    report = kac_check(GENERIC, 4, samples=5000, seed=9)
    assert abs(report.mc_zscore) <= 3.0
    assert report.identity_gap / report.kac <= 1e-10


def test_absorbing_chain_rejected():
    G = build_generator(BoundaryParams(0.75, beta=1.0), 3)
    assert not is_ergodic(G)
    with pytest.raises(ValueError):
        expected_return_time(G, 0)
    with pytest.raises(ValueError):
        kac_return_time(G, 0)


def test_birth_death_chain_two_routes():
    chain = gamblers_ruin_chain(0.7, 8, entry=0.5)
    G = chain.generator()
    assert np.abs(chain.stationary() - stationary_exact(G)).max() < 1e-12
    h = expected_hitting_times(G, 7)
    assert chain.mean_hitting_time_up(0, 7) == pytest.approx(h[0], rel=1e-10)
    assert chain.mean_hitting_time_up(3, 7) == pytest.approx(h[3], rel=1e-10)


def test_birth_death_validation():
    with pytest.raises(ValueError):
        BirthDeathChain((1.0, 0.0), (1.0, 1.0))


def test_compute_a_used_by_families():
    for params in product_families():
        a = compute_a(params)
        assert a > 0
    assert any(abs(compute_a(p) - 1.0) < 1e-12 for p in product_families())


def test_reversible_families_are_one_sided():
    for params in reversible_families():
        assert params.alpha == 0 and params.gamma == 0


def test_upset_enumeration_small():
    assert len(_upsets_brute_force(2)) == 6
    assert len(_upsets_brute_force(3)) == 20
    assert all(m.dtype == bool for m in itertools.islice(_upsets_brute_force(2), 3))
