"""Coupled replicas driven by one clock stream, censoring schedules and the
multi-species label dynamics."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from ..lattice import (
    HALFLINE,
    LINE,
    SEGMENT,
    Configuration,
    Label,
    MultiSpeciesConfiguration,
    Topology,
)
from . import kernels
from .clocks import ClockLayout, ClockStream, ScriptedStream

_STATUS_NAMES = {
    kernels.STATUS_TIME: "time",
    kernels.STATUS_EXHAUSTED: "exhausted",
    kernels.STATUS_COALESCED: "coalesced",
    kernels.STATUS_BREACH: "breach",
    kernels.STATUS_ESCAPED: "escaped",
    kernels.STATUS_EXITS: "exits",
    kernels.STATUS_CLEARED: "cleared",
    kernels.STATUS_SPLIT: "split",
}


class WindowBreach(RuntimeError):
    """A particle or hole came within two sites of a truncated window edge."""


class Rates(NamedTuple):
    """Jump probability and boundary rates of one replica.

    Unlike ``BoundaryParams`` this accepts closed boundaries, which is what
    half-line and line windows use.
    """

    p: float
    alpha: float = 0.0
    beta: float = 0.0
    gamma: float = 0.0
    delta: float = 0.0

    def channel(self, kind: int) -> float:
        return (0.0, self.alpha, self.gamma, self.delta, self.beta)[kind]


def as_rates(obj) -> Rates:
    if isinstance(obj, Rates):
        return obj
    return Rates(float(obj.p), float(obj.alpha), float(obj.beta), float(obj.gamma), float(obj.delta))


def _open_channels(topology: Topology) -> tuple[bool, bool]:
    if topology.kind == SEGMENT:
        return True, True
    if topology.kind == HALFLINE:
        return True, False
    return False, False


def default_layout(topology: Topology, rates: Sequence[Rates]) -> ClockLayout:
    left, right = _open_channels(topology)
    return ClockLayout(
        n_bulk=topology.length - 1,
        alpha=max(r.alpha for r in rates) if left else 0.0,
        gamma=max(r.gamma for r in rates) if left else 0.0,
        delta=max(r.delta for r in rates) if right else 0.0,
        beta=max(r.beta for r in rates) if right else 0.0,
    )


def edge_column(topology: Topology, edge: int) -> int:
    """Kernel clock column of edge ``edge`` (joining sites edge and edge+1)."""
    col = edge - topology.first_site + 1
    lo = 0 if topology.kind != LINE else 1
    hi = topology.length if topology.kind == SEGMENT else topology.length - 1
    if not lo <= col <= hi:
        raise ValueError(f"edge {edge} not present on {topology}")
    return col


@dataclass(frozen=True)
class CensoringSchedule:
    """Piecewise constant set of censored edges.

    ``edge_sets[0]`` applies before ``breakpoints[0]``, ``edge_sets[i]`` on
    ``[breakpoints[i-1], breakpoints[i])`` and the last set afterwards.
    Reservoir edges are ``0`` and ``N`` on a segment.
    """

    breakpoints: tuple = ()
    edge_sets: tuple = (frozenset(),)

    def __post_init__(self):
        bps = tuple(float(t) for t in self.breakpoints)
        sets = tuple(frozenset(int(e) for e in s) for s in self.edge_sets)
        if len(sets) != len(bps) + 1:
            raise ValueError("need one edge set more than breakpoints")
        if any(b2 <= b1 for b1, b2 in zip(bps, bps[1:])):
            raise ValueError("breakpoints must increase strictly")
        object.__setattr__(self, "breakpoints", bps)
        object.__setattr__(self, "edge_sets", sets)

    @classmethod
    def constant(cls, edges) -> "CensoringSchedule":
        return cls((), (frozenset(edges),))

    def active(self, t: float) -> frozenset:
        k = int(np.searchsorted(np.asarray(self.breakpoints), t, side="right"))
        return self.edge_sets[k]

    def compile(self, topology: Topology) -> tuple[np.ndarray, np.ndarray]:
        n_cols = topology.length + 1
        mask = np.zeros((len(self.edge_sets), n_cols), dtype=np.bool_)
        for k, edges in enumerate(self.edge_sets):
            for e in edges:
                mask[k, edge_column(topology, e)] = True
        return np.asarray(self.breakpoints, dtype=np.float64), mask


def _make_stream(seed, key, stream):
    if stream is not None:
        return stream
    if seed is None:
        raise ValueError("need a seed or a stream")
    return ClockStream(seed, key)


class _Driver:
    """Bookkeeping shared by the binary and multi-species ensembles."""

    def _init_driver(self, topology, layout, seed, key, stream, schedule):
        self.topology = topology
        self.layout = layout
        self.stream = _make_stream(seed, key, stream)
        self.time = 0.0
        self._event_time = 0.0
        self._bcum = layout.channel_bounds.astype(np.float64)
        self._brate = layout.channel_rates.astype(np.float64)
        self.last_status = None
        self.apply_censoring(schedule or CensoringSchedule())

    def apply_censoring(self, schedule: CensoringSchedule):
        """Censor edges per ``schedule`` (absolute times) from now on."""
        self.schedule = schedule
        self._cens_times, self._cens_mask = schedule.compile(self.topology)
        self._piece = int(np.searchsorted(self._cens_times, self._event_time, side="right"))
        return self

    def _run(self, t_end, call):
        if t_end < self.time:
            raise ValueError(f"cannot step back from {self.time} to {t_end}")
        while True:
            if not self.stream.ensure():
                self.time = t_end
                self.last_status = "time"
                return self.last_status
            cursor, t_event, status, piece = call(t_end)
            self.stream.cursor = int(cursor)
            self._event_time = float(t_event)
            self._piece = int(piece)
            if status == kernels.STATUS_EXHAUSTED:
                continue
            self.last_status = _STATUS_NAMES[status]
            if status == kernels.STATUS_TIME:
                self.time = t_end
            else:
                self.time = self._event_time
            if status == kernels.STATUS_BREACH:
                raise WindowBreach(f"window breach at t={self.time:.6g} on {self.topology}")
            return self.last_status


class CoupledEnsemble(_Driver):
    """Replicas of the 0/1 process sharing one clock stream.

    Each replica may have its own jump probability and boundary rates; the
    layout's channel rates must dominate every replica's rates, and a ring of
    channel ``k`` with attached uniform ``U`` acts on replica ``r`` iff
    ``U < rate_r / layout_rate``.
    """

    def __init__(self, replicas: Sequence[Configuration], rates, seed=None, *, key=(), stream=None,
                 layout: ClockLayout | None = None, schedule: CensoringSchedule | None = None):
        replicas = list(replicas)
        if not replicas:
            raise ValueError("ensemble needs at least one replica")
        topology = replicas[0].topology
        if any(r.topology != topology for r in replicas):
            raise ValueError("replicas must share one topology")
        if isinstance(rates, (list, tuple)) and rates and not isinstance(rates, Rates):
            rate_list = [as_rates(r) for r in rates]
        else:
            rate_list = [as_rates(rates)] * len(replicas)
        if len(rate_list) != len(replicas):
            raise ValueError("one rate set per replica")
        left, right = _open_channels(topology)
        if not right and any(r.beta or r.delta for r in rate_list):
            raise ValueError(f"{topology.kind} windows have no right boundary")
        if not left and any(r.alpha or r.gamma for r in rate_list):
            raise ValueError("line windows have no boundaries")
        layout = layout or default_layout(topology, rate_list)
        self.rates = rate_list
        self.state = np.stack([r.sites.copy() for r in replicas]).astype(np.uint8)
        self._pright = np.array([r.p for r in rate_list], dtype=np.float64)
        thresh = np.zeros((len(rate_list), 5))
        for i, r in enumerate(rate_list):
            for k in range(1, 5):
                lay = layout.channel_rates[k]
                own = r.channel(k)
                if own > lay * (1 + 1e-12):
                    raise ValueError("layout rates must dominate replica rates")
                thresh[i, k] = own / lay if lay > 0 else 0.0
        self._thresh = thresh
        self.entered = np.zeros(len(rate_list), dtype=np.int64)
        self.exited = np.zeros(len(rate_list), dtype=np.int64)
        self.opts = np.array([0, 0, -1, -1, -1, 0], dtype=np.int64)
        if topology.kind == LINE:
            self.opts[kernels.OPT_ORIGIN] = topology.size
        self._diffsite = np.zeros(topology.length, dtype=np.uint8)
        self.diag = np.zeros(2, dtype=np.int64)
        self._init_driver(topology, layout, seed, key, stream, schedule)
        self._refresh_diff()

    def _refresh_diff(self):
        if self.state.shape[0] >= 2:
            self._diffsite[:] = self.state[0] != self.state[1]
            self.diag[1] = int(self._diffsite.sum())

    def check_order(self, mode: str | None):
        """Count order violations of replica 0 over replica 1 at every event."""
        self.opts[kernels.OPT_ORDER] = {None: 0, "componentwise": 1, "height": 2}[mode]
        return self

    def stop_on_coalescence(self, flag: bool = True):
        self.opts[kernels.OPT_COALESCE] = int(flag)
        return self

    def stop_on_split(self, flag: bool = True):
        """Stop as soon as replicas 0 and 1 differ somewhere."""
        self.opts[kernels.OPT_COALESCE] = 2 if flag else 0
        return self

    def monitor_window(self):
        """Abort with ``WindowBreach`` when activity reaches a truncated edge."""
        if self.topology.kind == HALFLINE:
            self.opts[kernels.OPT_RIGHT_TAIL] = 0
        elif self.topology.kind == LINE:
            self.opts[kernels.OPT_LEFT_TAIL] = 0
            self.opts[kernels.OPT_RIGHT_TAIL] = 1
        for r in range(self.state.shape[0]):
            n = self.state.shape[1]
            for idx in list(range(min(3, n))) + list(range(max(0, n - 3), n)):
                if kernels._near_edge_bad(self.state, r, idx, n, self.opts[kernels.OPT_LEFT_TAIL], self.opts[kernels.OPT_RIGHT_TAIL]):
                    raise WindowBreach("initial configuration already touches the window edge")
        return self

    def stop_on_escape(self, extent: int | None):
        self.opts[kernels.OPT_ESCAPE] = -1 if extent is None else int(extent)
        return self

    @property
    def violations(self) -> int:
        return int(self.diag[0])

    @property
    def coalesced(self) -> bool:
        return self.state.shape[0] >= 2 and self.diag[1] == 0

    def set_state(self, index: int, config: Configuration):
        self.state[index] = config.sites
        self._refresh_diff()

    def configuration(self, index: int = 0) -> Configuration:
        return Configuration(self.topology, self.state[index].copy())

    def configurations(self) -> list[Configuration]:
        return [self.configuration(i) for i in range(self.state.shape[0])]

    def current(self, index: int = 0) -> int:
        """Particles that entered minus particles that left through site 1."""
        return int(self.entered[index] - self.exited[index])

    def step_to(self, t_end: float) -> str:
        def call(t):
            return kernels.advance_binary(
                self.state, self._pright, self._thresh, self.stream.gaps, self.stream.uniforms,
                self.stream.cursor, self._event_time, self.layout.total_rate, self.layout.n_bulk,
                self._bcum, self._brate, t, self._cens_times, self._cens_mask, self._piece,
                self.entered, self.exited, self.opts, self._diffsite, self.diag)

        return self._run(t_end, call)


# ---------------------------------------------------------------------------
# multi-species dynamics

PRIORITY = {
    Label.EMPTY: 0,
    Label.TYPE1: 1,
    Label.TYPE2: 2,
    Label.SECOND: 2,
    Label.TYPE3: 3,
    Label.TYPE4: 3,
    Label.TYPE5: 4,
    Label.FIRST: 5,
}


def edge_table() -> np.ndarray:
    """New labels on an edge, packed as 8*left + right, per direction.

    Direction 0 (U <= p) lets the higher priority label move right, direction
    1 lets it move left.  Types 3 and 4 are not comparable; meeting on an
    edge they turn into a type 2 and a type 5, the type 5 taking the place
    the higher priority particle would take.
    """
    table = np.zeros((8, 8, 2), dtype=np.int64)
    for x, y in itertools.product(Label, Label):
        for d in (0, 1):
            nx, ny = x, y
            if {x, y} == {Label.TYPE3, Label.TYPE4}:
                nx, ny = (Label.TYPE2, Label.TYPE5) if d == 0 else (Label.TYPE5, Label.TYPE2)
            elif PRIORITY[x] > PRIORITY[y] and d == 0:
                nx, ny = y, x
            elif PRIORITY[x] < PRIORITY[y] and d == 1:
                nx, ny = y, x
            table[x, y, d] = 8 * int(nx) + int(ny)
    return table


@dataclass
class LabelSystem:
    """Labels as joint occupations of several coupled 0/1 replicas.

    ``contents[label]`` is the tuple of occupations the label stands for and
    ``rates[c]`` the rates of replica ``c``.  Boundary rings act on the
    replicas selected by thinning; a ring acting on every replica resets the
    site to a first class particle or a hole, whatever it held.
    """

    p: float
    rates: list
    contents: dict
    count_labels: tuple = ()
    names: tuple = field(default_factory=tuple)

    def __post_init__(self):
        self.rates = [as_rates(r) for r in self.rates]
        if any(abs(r.p - self.p) > 0 for r in self.rates):
            raise ValueError("multi-species replicas share the jump probability")
        self._reverse = {}
        for label, content in self.contents.items():
            if label == Label.TYPE5:
                continue
            self._reverse.setdefault(tuple(content), label)

    def label_of(self, content) -> Label:
        try:
            return self._reverse[tuple(content)]
        except KeyError:
            raise ValueError(f"occupations {content} have no label; the replicas are not ordered") from None

    def labels_from_replicas(self, configs: Sequence[Configuration]) -> MultiSpeciesConfiguration:
        occ = np.stack([c.sites for c in configs], axis=1)
        labels = [int(self.label_of(row)) for row in occ]
        return MultiSpeciesConfiguration(configs[0].topology, labels)

    def replicas_from_labels(self, config: MultiSpeciesConfiguration) -> list[Configuration]:
        occ = np.array([self.contents[Label(int(x))] for x in config.labels], dtype=np.uint8)
        return [Configuration(config.topology, occ[:, c]) for c in range(occ.shape[1])]

    def layout(self, topology: Topology) -> ClockLayout:
        return default_layout(topology, self.rates)

    def boundary_tables(self, layout: ClockLayout):
        levels = np.ones((5, len(self.rates) + 1), dtype=np.float64)
        maps = np.tile(np.arange(8, dtype=np.int8), (5, len(self.rates) + 1, 1))
        nlev = np.zeros(5, dtype=np.int64)
        m = len(self.rates)
        for kind in range(1, 5):
            lay = layout.channel_rates[kind]
            if lay <= 0:
                continue
            fracs = np.array([r.channel(kind) / lay for r in self.rates])
            cuts = sorted({f for f in fracs if f > 0})
            value = 1 if kind in (kernels.KIND_ALPHA, kernels.KIND_DELTA) else 0
            for lev, cut in enumerate(cuts):
                acting = [c for c in range(m) if fracs[c] >= cut]
                levels[kind, lev] = cut
                for label, content in self.contents.items():
                    if len(acting) == m:
                        new = Label.FIRST if value == 1 else Label.EMPTY
                    else:
                        occ = list(content)
                        for c in acting:
                            occ[c] = value
                        new = label if tuple(occ) == tuple(content) else self.label_of(occ)
                    maps[kind, lev, int(label)] = int(new)
            nlev[kind] = len(cuts)
        return levels, maps, nlev


def two_species_system(upper, lower) -> LabelSystem:
    """Disagreement labels of an upper replica dominating a lower one."""
    upper, lower = as_rates(upper), as_rates(lower)
    return LabelSystem(
        p=upper.p,
        rates=[upper, lower],
        contents={Label.EMPTY: (0, 0), Label.FIRST: (1, 1), Label.SECOND: (1, 0)},
        count_labels=(Label.SECOND,),
        names=("upper", "lower"),
    )


# replica order (eta1, eta2, eta3, eta4) of the four-process coupling
FOUR_PROCESS_CONTENTS = {
    Label.EMPTY: (0, 0, 0, 0),
    Label.FIRST: (1, 1, 1, 1),
    Label.TYPE1: (1, 0, 0, 0),
    Label.TYPE2: (1, 0, 1, 0),
    Label.TYPE3: (1, 0, 1, 1),
    Label.TYPE4: (1, 1, 1, 0),
    Label.TYPE5: (1, 1, 1, 1),
}

# value of the (eta3, eta4) disagreement process carried by each label
ZETA_VALUE = {
    Label.EMPTY: 0, Label.FIRST: 1, Label.TYPE1: 0, Label.TYPE2: 2,
    Label.TYPE3: 1, Label.TYPE4: 2, Label.TYPE5: 1,
}
# value of the (eta1, eta2) disagreement process carried by each label
XI_VALUE = {
    Label.EMPTY: 0, Label.FIRST: 1, Label.TYPE1: 2, Label.TYPE2: 2,
    Label.TYPE3: 2, Label.TYPE4: 1, Label.TYPE5: 1,
}


def four_process_system(params, beta_prime: float) -> LabelSystem:
    base = as_rates(params)
    if beta_prime < base.beta:
        raise ValueError("the fourth replica needs the larger exit rate")
    fourth = base._replace(beta=beta_prime)
    return LabelSystem(
        p=base.p,
        rates=[base, base, base, fourth],
        contents=dict(FOUR_PROCESS_CONTENTS),
        count_labels=(Label.TYPE1, Label.TYPE2, Label.TYPE3),
        names=("from_full", "from_empty", "stationary", "stationary_prime"),
    )


class MultiSpeciesEnsemble(_Driver):
    """One labelled configuration evolving under the priority rules."""

    def __init__(self, config: MultiSpeciesConfiguration, system: LabelSystem, seed=None, *, key=(),
                 stream=None, layout: ClockLayout | None = None, schedule: CensoringSchedule | None = None,
                 exit_log_size: int = 1 << 16):
        topology = config.topology
        layout = layout or system.layout(topology)
        self.system = system
        self.labels = config.labels.astype(np.int8).copy()
        self._edge_table = edge_table()
        self._bthr, self._bmap, self._nlev = system.boundary_tables(layout)
        self.left_in = np.zeros(8, dtype=np.int64)
        self.left_out = np.zeros(8, dtype=np.int64)
        self.right_in = np.zeros(8, dtype=np.int64)
        self.right_out = np.zeros(8, dtype=np.int64)
        self._exit_log = np.zeros(exit_log_size, dtype=np.int8)
        self._log_count = np.zeros(1, dtype=np.int64)
        self._count_mask = np.zeros(8, dtype=np.bool_)
        self._count_mask[[int(x) for x in system.count_labels]] = True
        self._counter = np.array([kernels.fill_counter(self.labels, self._count_mask)], dtype=np.int64)
        self._stop_mask = np.zeros(8, dtype=np.bool_)
        self.opts = np.array([0, -1, -1, -1], dtype=np.int64)
        self._init_driver(topology, layout, seed, key, stream, schedule)

    def stop_when_cleared(self, flag: bool = True):
        """Stop once no site carries a label counted by the system."""
        self.opts[kernels.LOPT_STOP_CLEARED] = int(flag)
        return self

    def stop_after_left_exits(self, labels, limit: int | None):
        """Stop once more than ``limit`` of ``labels`` left through site 1."""
        self._stop_mask[:] = False
        self._stop_mask[[int(x) for x in labels]] = True
        self.opts[kernels.LOPT_EXIT_LIMIT] = -1 if limit is None else int(limit)
        return self

    @property
    def counted(self) -> int:
        return int(self._counter[0])

    def configuration(self) -> MultiSpeciesConfiguration:
        return MultiSpeciesConfiguration(self.topology, self.labels.copy())

    def left_exit_record(self) -> list[Label]:
        """Labels replaced at site 1, in order (truncated at the log size)."""
        k = min(int(self._log_count[0]), self._exit_log.shape[0])
        return [Label(int(x)) for x in self._exit_log[:k]]

    def step_to(self, t_end: float) -> str:
        def call(t):
            return kernels.advance_labels(
                self.labels, self.system.p, self._edge_table, self._bthr, self._bmap, self._nlev,
                self.stream.gaps, self.stream.uniforms, self.stream.cursor, self._event_time,
                self.layout.total_rate, self.layout.n_bulk, self._bcum, self._brate, t,
                self._cens_times, self._cens_mask, self._piece, self.left_in, self.left_out,
                self.right_in, self.right_out, self._exit_log, self._log_count, self._count_mask,
                self._counter, self._stop_mask, self.opts)

        return self._run(t_end, call)

    step_multispecies = step_to


def step_to(ensemble, t_end: float) -> str:
    return ensemble.step_to(t_end)


def step_multispecies(ensemble: MultiSpeciesEnsemble, t_end: float) -> str:
    return ensemble.step_to(t_end)


def apply_censoring(ensemble, schedule: CensoringSchedule):
    return ensemble.apply_censoring(schedule)


__all__ = [
    "CensoringSchedule",
    "ClockLayout",
    "ClockStream",
    "CoupledEnsemble",
    "LabelSystem",
    "MultiSpeciesEnsemble",
    "Rates",
    "ScriptedStream",
    "WindowBreach",
    "apply_censoring",
    "edge_table",
    "four_process_system",
    "step_multispecies",
    "step_to",
    "two_species_system",
]
