import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xlab.engine import (
    CensoringSchedule,
    ClockLayout,
    ClockStream,
    CoupledEnsemble,
    MultiSpeciesEnsemble,
    Rates,
    ScriptedStream,
    WindowBreach,
    coupling_time,
    edge_table,
    run_halfline,
    sample_path,
    two_species_system,
)
from xlab.engine.kernels import KIND_ALPHA, KIND_BETA, KIND_BULK
from xlab.engine.runs import load_checkpoint, read_trajectory_csv, save_checkpoint, write_trajectory_csv
from xlab.lattice import Configuration, Label, MultiSpeciesConfiguration, halfline_window, segment, typed
from xlab.params import BoundaryParams, rate_for_boundary_quantity


def cfg(text):
    return Configuration.from_string(text)


def scripted(replicas, rates, events, layout):
    stream = ScriptedStream(events, layout)
    return CoupledEnsemble(replicas, rates, stream=stream, layout=layout)


# ---------------------------------------------------------------------------
# single updates


def test_no_events_leaves_state_unchanged():
    layout = ClockLayout(n_bulk=1, alpha=1.0)
    ens = scripted([cfg("10")], Rates(0.75, alpha=1.0), [(5.0, KIND_BULK, 0, 0.3)], layout)
    assert ens.step_to(4.0) == "time"
    assert ens.configuration().to_string() == "10"
    assert ens.time == 4.0


def test_single_edge_event_moves_particle_right():
    layout = ClockLayout(n_bulk=1, alpha=1.0)
    ens = scripted([cfg("10")], Rates(0.75, alpha=1.0), [(0.5, KIND_BULK, 0, 0.3)], layout)
    ens.step_to(1.0)
    assert ens.configuration().to_string() == "01"


def test_edge_event_with_large_uniform_moves_left():
    layout = ClockLayout(n_bulk=1, alpha=1.0)
    ens = scripted([cfg("01")], Rates(0.75, alpha=1.0), [(0.5, KIND_BULK, 0, 0.9)], layout)
    ens.step_to(1.0)
    assert ens.configuration().to_string() == "10"


def test_scripted_stream_falls_silent():
    layout = ClockLayout(n_bulk=1, alpha=1.0)
    ens = scripted([cfg("10")], Rates(0.75, alpha=1.0), [(0.5, KIND_BULK, 0, 0.3)], layout)
    assert ens.step_to(1e9) == "time"
    assert ens.configuration().to_string() == "01"


def test_boundary_thinning_by_replica_rate():
    # layout alpha = 1; the ring with u = 0.7 acts only on the replica with alpha = 1
    layout = ClockLayout(n_bulk=1, alpha=1.0)
    rates = [Rates(0.75, alpha=1.0), Rates(0.75, alpha=0.5)]
    ens = scripted([cfg("00"), cfg("00")], rates, [(0.1, KIND_ALPHA, -1, 0.7)], layout)
    ens.step_to(1.0)
    assert [c.to_string() for c in ens.configurations()] == ["10", "00"]
    assert ens.current(0) == 1 and ens.current(1) == 0


def test_exit_at_right_is_not_counted_as_current():
    layout = ClockLayout(n_bulk=1, beta=1.0)
    ens = scripted([cfg("01")], Rates(0.75, beta=1.0), [(0.1, KIND_BETA, -1, 0.2)], layout)
    ens.step_to(1.0)
    assert ens.configuration().to_string() == "00"
    assert ens.current() == 0


def test_layout_must_dominate():
    with pytest.raises(ValueError):
        CoupledEnsemble([cfg("00")], Rates(0.75, alpha=2.0), 0, layout=ClockLayout(n_bulk=1, alpha=1.0))


def test_halfline_has_no_right_boundary():
    with pytest.raises(ValueError):
        CoupledEnsemble([Configuration.empty(halfline_window(5))], Rates(0.75, beta=1.0), 0)


# ---------------------------------------------------------------------------
# multi-species priorities


def test_type3_meets_type4():
    table = edge_table()
    t3, t4 = int(typed(3)), int(typed(4))
    assert table[t3, t4, 0] == 8 * int(typed(2)) + int(typed(5))
    assert table[t4, t3, 0] == 8 * int(typed(2)) + int(typed(5))
    assert table[t3, t4, 1] == 8 * int(typed(5)) + int(typed(2))


def test_first_class_passes_second_class():
    table = edge_table()
    for t in range(1, 6):
        x = int(typed(t))
        assert table[int(Label.FIRST), x, 0] == 8 * x + int(Label.FIRST)
        assert table[x, int(Label.FIRST), 1] == 8 * int(Label.FIRST) + x
        # the lower priority label cannot push forward
        assert table[x, int(Label.FIRST), 0] == 8 * x + int(Label.FIRST)


def test_multispecies_scripted_type_merge():
    params = Rates(0.75, alpha=1.0)
    layout = ClockLayout(n_bulk=1, alpha=1.0)
    system = two_species_system(params, params)
    chi = MultiSpeciesConfiguration.on_segment([typed(3), typed(4)])
    ens = MultiSpeciesEnsemble(chi, system, stream=ScriptedStream([(0.2, KIND_BULK, 0, 0.1)], layout),
                               layout=layout)
    ens.step_to(1.0)
    assert list(ens.configuration().labels) == [int(typed(2)), int(typed(5))]


# ---------------------------------------------------------------------------
# coupling properties


def test_full_and_empty_stay_ordered():
    params = BoundaryParams(0.75, alpha=0.6, beta=0.4, gamma=0.1, delta=0.2)
    top = segment(20)
    total = 0
    for seed in range(1000):
        ens = CoupledEnsemble([Configuration.full(top), Configuration.empty(top)], params, seed)
        ens.check_order("componentwise")
        ens.step_to(100.0)
        total += ens.violations
    assert total == 0


def test_disagreement_never_reappears_after_coupling():
    params = BoundaryParams(0.75, alpha=0.8, beta=0.6, gamma=0.2, delta=0.1)
    top = segment(20)
    for seed in range(1000):
        ens = CoupledEnsemble([Configuration.full(top), Configuration.empty(top)], params, seed, key=(3,))
        ens.stop_on_coalescence()
        assert ens.step_to(1e5) == "coalesced"
        ens.stop_on_split()
        assert ens.step_to(ens.time + 50.0) == "time"


def test_coupling_time_of_identical_states_is_zero():
    top = segment(5)
    eta = Configuration.full(top)
    assert coupling_time(BoundaryParams(0.75, alpha=1.0, beta=1.0), 5, 0, 10.0, upper=eta, lower=eta) == 0.0


def test_single_site_coupling_time_is_exponential_two():
    # N = 1, alpha = gamma = 1: the first boundary ring sets both copies alike
    rates = Rates(0.75, alpha=1.0, gamma=1.0)
    top = segment(1)
    ens = CoupledEnsemble([Configuration.full(top), Configuration.empty(top)], rates, 2024)
    ens.stop_on_coalescence()
    samples = np.empty(100_000)
    for i in range(samples.size):
        ens.set_state(0, Configuration.full(top))
        ens.set_state(1, Configuration.empty(top))
        start = ens.time
        assert ens.step_to(np.inf) == "coalesced"
        samples[i] = ens.time - start
    se = samples.std(ddof=1) / np.sqrt(samples.size)
    assert abs(samples.mean() - 0.5) <= 3 * se


def test_seeded_runs_are_reproducible():
    params = BoundaryParams(0.75, alpha=1.0, beta=0.5)
    top = segment(30)
    a = CoupledEnsemble([Configuration.empty(top)], params, 5, key=(1, 2))
    b = CoupledEnsemble([Configuration.empty(top)], params, 5, key=(1, 2))
    c = CoupledEnsemble([Configuration.empty(top)], params, 5, key=(1, 3))
    for ens in (a, b, c):
        ens.step_to(200.0)
    assert a.configuration() == b.configuration() and a.current() == b.current()
    assert a.configuration() != c.configuration() or a.current() != c.current()


def test_stepping_in_pieces_matches_one_step():
    params = BoundaryParams(0.75, alpha=1.0, beta=0.5, gamma=0.1)
    top = segment(25)
    one = CoupledEnsemble([Configuration.empty(top)], params, 9)
    one.step_to(300.0)
    many = CoupledEnsemble([Configuration.empty(top)], params, 9)
    for t in np.linspace(0.7, 300.0, 97):
        many.step_to(float(t))
    assert one.configuration() == many.configuration()
    assert one.current() == many.current()


def test_checkpoint_round_trip(tmp_path):
    params = BoundaryParams(0.75, alpha=1.0, beta=0.5)
    top = segment(15)
    ref = CoupledEnsemble([Configuration.empty(top)], params, 3)
    ref.step_to(100.0)
    ens = CoupledEnsemble([Configuration.empty(top)], params, 3)
    ens.step_to(40.0)
    save_checkpoint(ens, tmp_path / "run.ckpt")
    resumed = load_checkpoint(tmp_path / "run.ckpt")
    resumed.step_to(100.0)
    assert resumed.configuration() == ref.configuration()
    assert resumed.current() == ref.current()


def test_trajectory_csv_round_trip(tmp_path):
    params = BoundaryParams(0.75, alpha=1.0, beta=0.5)
    ens = CoupledEnsemble([Configuration.empty(segment(6))], params, 1)
    snaps = []
    sample_path(ens, [1.0, 2.5, 4.0], snapshots=snaps)
    write_trajectory_csv(tmp_path / "traj.csv", snaps)
    assert read_trajectory_csv(tmp_path / "traj.csv") == snaps


# ---------------------------------------------------------------------------
# half-line


def test_halfline_without_entry_stays_empty():
    traj = run_halfline(0.75, 0.0, 0.0, 50, 100.0, 0)
    assert traj.final.particle_count == 0
    assert np.all(traj.current == 0)


def test_halfline_current_at_a_equal_one():
    alpha = rate_for_boundary_quantity(1.0, 1.0)
    w = 400
    horizon = 0.7 * w
    traj = run_halfline(1.0, alpha, 0.0, w, horizon, 4, occupation_after=horizon / 2)
    rate = traj.current[-1] / horizon
    assert abs(rate - 0.25) <= 0.05 * 0.25


def test_halfline_occupations_dominated_by_product_measure():
    a = 2.0
    alpha = rate_for_boundary_quantity(0.75, a)
    w = 200
    horizon = 250.0
    freqs = []
    for seed in range(20):
        traj = run_halfline(0.75, alpha, 0.0, w, horizon, seed, occupation_after=50.0)
        freqs.append(traj.occupation_frequency()[:20])
    freqs = np.array(freqs)
    mean = freqs.mean(axis=0)
    se = freqs.std(axis=0, ddof=1) / np.sqrt(freqs.shape[0])
    assert np.all(mean <= 1.0 / (1.0 + a) + 3 * se + 1e-12)


def test_window_breach_is_raised():
    with pytest.raises(WindowBreach):
        run_halfline(1.0, 1.0, 0.0, 10, 1000.0, 0)


# ---------------------------------------------------------------------------
# censoring


def test_all_edges_censored_freezes_the_state():
    params = BoundaryParams(0.75, alpha=1.0, beta=1.0, gamma=0.5, delta=0.5)
    eta = cfg("1010110")
    sched = CensoringSchedule.constant(range(0, 8))
    ens = CoupledEnsemble([eta], params, 0, schedule=sched)
    ens.step_to(100.0)
    assert ens.configuration() == eta


def test_empty_schedule_replays_the_uncensored_run():
    params = BoundaryParams(0.75, alpha=1.0, beta=1.0, gamma=0.5, delta=0.5)
    eta = cfg("1010110")
    plain = CoupledEnsemble([eta], params, 8)
    censored = CoupledEnsemble([eta], params, 8, schedule=CensoringSchedule())
    for t in (1.0, 10.0, 77.0):
        plain.step_to(t)
        censored.step_to(t)
        assert plain.configuration() == censored.configuration()


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.lists(st.integers(0, 1), min_size=10, max_size=10))
def test_skeleton_schedule_conserves_block_counts(seed, word):
    # only edges {1, 2}, {4, 5}, {7, 8} stay active on [0, 20); the rest is censored
    params = BoundaryParams(0.75, alpha=1.0, beta=1.0, gamma=0.5, delta=0.5)
    eta = Configuration.on_segment(word)
    active = {1, 4, 7}
    censored = frozenset(range(0, 11)) - active
    sched = CensoringSchedule((20.0,), (censored, frozenset()))
    ens = CoupledEnsemble([eta], params, seed, schedule=sched)
    blocks = [(0, 2), (3, 5), (6, 8)]

    def counts(c):
        return [int(c.sites[a:b].sum()) for a, b in blocks] + [int(c.sites[i]) for i in (2, 5, 8, 9)]

    start = counts(eta)
    for t in np.linspace(1.0, 19.9, 12):
        ens.step_to(float(t))
        assert counts(ens.configuration()) == start


def test_clock_stream_is_keyed():
    a = ClockStream(1, (0,))
    b = ClockStream(1, (0,))
    c = ClockStream(1, (1,))
    for s in (a, b, c):
        s.refill()
    assert np.array_equal(a.gaps, b.gaps)
    assert not np.array_equal(a.gaps, c.gaps)
