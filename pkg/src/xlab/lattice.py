"""Configurations, partial orders, height functions, disagreement labels,
the projections onto the integer line used for censored comparisons, and the
blocking measure sampler.

Site coordinates are 1..N on a segment, 1..W on a half-line window and
-W..W on a line window.  Line windows carry deterministic tails: every site
left of -W is empty and every site right of W is occupied.  An edge is
identified by its left endpoint, so edge ``e`` joins sites ``e`` and ``e+1``;
on a segment the reservoir edges are ``0`` (left) and ``N`` (right).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .params import BoundaryParams

SEGMENT = "segment"
HALFLINE = "halfline"
LINE = "line"

BLOCKING_TAIL_TOL = 1e-12


@dataclass(frozen=True)
class Topology:
    kind: str
    size: int

    def __post_init__(self):
        if self.kind not in (SEGMENT, HALFLINE, LINE):
            raise ValueError(f"unknown topology {self.kind!r}")
        if self.size < 1:
            raise ValueError("topology size must be positive")

    @property
    def first_site(self) -> int:
        return -self.size if self.kind == LINE else 1

    @property
    def last_site(self) -> int:
        return self.size

    @property
    def length(self) -> int:
        return 2 * self.size + 1 if self.kind == LINE else self.size

    def index(self, x: int) -> int:
        if not self.first_site <= x <= self.last_site:
            raise IndexError(f"site {x} outside {self}")
        return x - self.first_site

    def site(self, index: int) -> int:
        return index + self.first_site


def segment(n: int) -> Topology:
    return Topology(SEGMENT, n)


def halfline_window(w: int) -> Topology:
    return Topology(HALFLINE, w)


def line_window(w: int) -> Topology:
    return Topology(LINE, w)


def _frozen(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Configuration:
    """Occupation word on a finite window.  ``sites[i]`` is site ``first_site + i``."""

    topology: Topology
    sites: np.ndarray

    def __post_init__(self):
        arr = _frozen(self.sites, np.uint8)
        if arr.ndim != 1 or arr.size != self.topology.length:
            raise ValueError(f"expected {self.topology.length} sites, got shape {arr.shape}")
        if arr.size and arr.max() > 1:
            raise ValueError("occupations must be 0 or 1")
        object.__setattr__(self, "sites", arr)

    @classmethod
    def on_segment(cls, values) -> "Configuration":
        values = list(values)
        return cls(segment(len(values)), values)

    @classmethod
    def full(cls, topology: Topology) -> "Configuration":
        return cls(topology, np.ones(topology.length, dtype=np.uint8))

    @classmethod
    def empty(cls, topology: Topology) -> "Configuration":
        return cls(topology, np.zeros(topology.length, dtype=np.uint8))

    @classmethod
    def from_string(cls, text: str, topology: Topology | None = None) -> "Configuration":
        values = [int(ch) for ch in text.strip()]
        return cls(topology or segment(len(values)), values)

    def __getitem__(self, x: int) -> int:
        return int(self.sites[self.topology.index(x)])

    def __eq__(self, other) -> bool:
        if not isinstance(other, Configuration):
            return NotImplemented
        return self.topology == other.topology and np.array_equal(self.sites, other.sites)

    def __hash__(self) -> int:
        return hash((self.topology, self.sites.tobytes()))

    def __len__(self) -> int:
        return self.sites.size

    def __repr__(self) -> str:
        return f"Configuration({self.topology.kind}, {self.to_string()})"

    def to_string(self) -> str:
        return "".join("1" if v else "0" for v in self.sites)

    @property
    def particle_count(self) -> int:
        return int(self.sites.sum())

    def positions(self) -> np.ndarray:
        """Occupied sites in increasing order."""
        return np.flatnonzero(self.sites) + self.topology.first_site

    def blocking_offset(self) -> int:
        """The n with this line configuration in A_n.

        Counting tails, the balance sum_{x<=n} eta(x) - sum_{x>n} (1-eta(x))
        increases by exactly one per step in n, so the balancing n is unique.
        """
        if self.topology.kind != LINE:
            raise ValueError("blocking offsets are defined for line windows")
        holes = self.topology.length - self.particle_count
        return holes - self.topology.size - 1


def ground_state(n: int, w: int) -> Configuration:
    """The configuration with sites x > n occupied, on the window -w..w."""
    topo = line_window(w)
    if not -w - 1 <= n <= w:
        raise ValueError("ground state does not fit the window")
    xs = np.arange(-w, w + 1)
    return Configuration(topo, (xs > n).astype(np.uint8))


def configuration_from_index(index: int, n: int) -> Configuration:
    """Binary decoding with site 1 as the least significant bit."""
    return Configuration(segment(n), [(index >> i) & 1 for i in range(n)])


def configuration_index(eta: Configuration) -> int:
    return int(sum(int(v) << i for i, v in enumerate(eta.sites)))


# ---------------------------------------------------------------------------
# orders and height functions


class Order(str, enum.Enum):
    GE = "GE"
    LE = "LE"
    EQ = "EQ"
    INCOMPARABLE = "Incomparable"


def _verdict(diff: np.ndarray) -> Order:
    ge = bool(np.all(diff >= 0))
    le = bool(np.all(diff <= 0))
    if ge and le:
        return Order.EQ
    if ge:
        return Order.GE
    if le:
        return Order.LE
    return Order.INCOMPARABLE


def _check_same(eta: Configuration, zeta: Configuration):
    if eta.topology != zeta.topology:
        raise ValueError(f"topology mismatch: {eta.topology} vs {zeta.topology}")


def compare_componentwise(eta: Configuration, zeta: Configuration) -> Order:
    _check_same(eta, zeta)
    return _verdict(eta.sites.astype(np.int64) - zeta.sites.astype(np.int64))


def prefix_sums(eta: Configuration) -> np.ndarray:
    """Particle counts up to and including each window site.

    On line windows the left tail is empty, so these are the sums from
    minus infinity.
    """
    return np.cumsum(eta.sites, dtype=np.int64)


def compare_height(eta: Configuration, zeta: Configuration) -> Order:
    """eta >= zeta iff eta has at least as many particles as zeta up to every site."""
    _check_same(eta, zeta)
    return _verdict(prefix_sums(eta) - prefix_sums(zeta))


def height_function(eta: Configuration) -> np.ndarray:
    """Heights h(0..2N) of the path that reads eta forwards and its
    particle-hole reflection backwards."""
    if eta.topology.kind != SEGMENT:
        raise ValueError("height functions are defined on segments")
    s = eta.sites.astype(np.int64)
    steps = np.concatenate([2 * s - 1, 1 - 2 * s[::-1]])
    return np.concatenate([[0], np.cumsum(steps)])


def h_star(eta: Configuration, params: BoundaryParams) -> np.ndarray:
    """Height function minus its equilibrium mean for one open boundary at N.

    The correction is linear in the distance to the nearer endpoint of the
    path 0..2N, so h*(0) = h*(2N) = 0.
    """
    if max(params.alpha, params.gamma) > 0:
        raise ValueError("h* needs the left boundary closed (alpha = gamma = 0)")
    total = params.beta + params.delta
    if total <= 0:
        raise ValueError("h* needs beta + delta > 0")
    n = eta.topology.size
    xs = np.arange(2 * n + 1)
    slope = (params.delta - params.beta) / total
    return height_function(eta) - np.minimum(xs, 2 * n - xs) * slope


def height_extreme(eta: Configuration, zeta: Configuration, upper: bool) -> Configuration:
    """Lattice join (upper=True) or meet for the height order."""
    _check_same(eta, zeta)
    pick = np.maximum if upper else np.minimum
    s = pick(prefix_sums(eta), prefix_sums(zeta))
    occ = np.diff(np.concatenate([[0], s]))
    return Configuration(eta.topology, occ)


def leftmost_particle(eta: Configuration) -> int | None:
    idx = np.flatnonzero(eta.sites)
    return None if idx.size == 0 else int(idx[0]) + eta.topology.first_site


def rightmost_hole(eta: Configuration) -> int | None:
    idx = np.flatnonzero(eta.sites == 0)
    return None if idx.size == 0 else int(idx[-1]) + eta.topology.first_site


# ---------------------------------------------------------------------------
# multi-species labels


class Label(enum.IntEnum):
    EMPTY = 0
    FIRST = 1
    SECOND = 2  # untyped second class particle
    TYPE1 = 3
    TYPE2 = 4
    TYPE3 = 5
    TYPE4 = 6
    TYPE5 = 7


TYPED = (Label.TYPE1, Label.TYPE2, Label.TYPE3, Label.TYPE4, Label.TYPE5)
SECOND_CLASS = (Label.SECOND,) + TYPED

_LABEL_TEXT = {
    Label.EMPTY: "·",
    Label.FIRST: "1",
    Label.SECOND: "2",
    Label.TYPE1: "2₁",
    Label.TYPE2: "2₂",
    Label.TYPE3: "2₃",
    Label.TYPE4: "2₄",
    Label.TYPE5: "2₅",
}
_TEXT_LABEL = {v: k for k, v in _LABEL_TEXT.items()}


def second_class_type(label: Label) -> int | None:
    if label in TYPED:
        return int(label) - int(Label.TYPE1) + 1
    return None


def typed(t: int) -> Label:
    if not 1 <= t <= 5:
        raise ValueError("second class types run from 1 to 5")
    return Label(int(Label.TYPE1) + t - 1)


@dataclass(frozen=True, eq=False)
class MultiSpeciesConfiguration:
    topology: Topology
    labels: np.ndarray

    def __post_init__(self):
        arr = _frozen(self.labels, np.int8)
        if arr.ndim != 1 or arr.size != self.topology.length:
            raise ValueError(f"expected {self.topology.length} labels, got shape {arr.shape}")
        if arr.size and (arr.min() < 0 or arr.max() > int(Label.TYPE5)):
            raise ValueError("unknown label code")
        object.__setattr__(self, "labels", arr)

    @classmethod
    def on_segment(cls, labels) -> "MultiSpeciesConfiguration":
        labels = [int(v) for v in labels]
        return cls(segment(len(labels)), labels)

    def __getitem__(self, x: int) -> Label:
        return Label(int(self.labels[self.topology.index(x)]))

    def __eq__(self, other) -> bool:
        if not isinstance(other, MultiSpeciesConfiguration):
            return NotImplemented
        return self.topology == other.topology and np.array_equal(self.labels, other.labels)

    def __hash__(self) -> int:
        return hash((self.topology, self.labels.tobytes()))

    def __repr__(self) -> str:
        return f"MultiSpeciesConfiguration({self.topology.kind}, {self.to_string()})"

    def to_string(self) -> str:
        return " ".join(_LABEL_TEXT[Label(int(v))] for v in self.labels)

    @classmethod
    def from_string(cls, text: str, topology: Topology | None = None) -> "MultiSpeciesConfiguration":
        labels = [int(_TEXT_LABEL[tok]) for tok in text.split()]
        return cls(topology or segment(len(labels)), labels)

    def second_class_count(self) -> int:
        return int(np.count_nonzero(self.labels >= int(Label.SECOND)))


def disagreement(eta: Configuration, zeta: Configuration) -> MultiSpeciesConfiguration:
    _check_same(eta, zeta)
    e = eta.sites.astype(np.int8)
    z = zeta.sites.astype(np.int8)
    labels = np.where(e == z, e, np.int8(Label.SECOND))
    return MultiSpeciesConfiguration(eta.topology, labels)


# ---------------------------------------------------------------------------
# projections onto the line


@dataclass(frozen=True)
class LineProjection:
    """A line configuration together with the edges that are switched off.

    ``merged_edges`` come from deleting sites; ``extension_edges`` touch
    sites that only exist because the word was extended to the whole line.
    """

    configuration: Configuration
    offset: int
    merged_edges: frozenset = field(default_factory=frozenset)
    extension_edges: frozenset = field(default_factory=frozenset)

    @property
    def censored_edges(self) -> frozenset:
        return self.merged_edges | self.extension_edges


def _place_word(word: list[int], offset: int, w: int) -> tuple[Configuration, int]:
    """Embed ``word`` with empties left and particles right so that the
    result lies in A_offset.  Returns the configuration and the start site."""
    holes = word.count(0)
    start = offset + 1 - holes
    stop = start + len(word) - 1
    if start < -w or stop > w:
        raise ValueError(f"window too small: word occupies {start}..{stop}, window is -{w}..{w}")
    xs = np.arange(-w, w + 1)
    sites = (xs > stop).astype(np.uint8)
    sites[start + w : stop + w + 1] = word
    return Configuration(line_window(w), sites), start


def _kept_sites(labels: np.ndarray, drop) -> np.ndarray:
    return np.flatnonzero(~np.isin(labels, [int(v) for v in drop]))


def project_xi_star(xi: MultiSpeciesConfiguration, window: int, offset: int = 0) -> LineProjection:
    """Delete empty sites, turn second class particles into holes and embed
    the word into A_offset with holes to the left and particles to the right."""
    labels = xi.labels
    if np.any(np.isin(labels, [int(v) for v in TYPED])):
        raise ValueError("xi* expects first class and untyped second class particles only")
    kept = _kept_sites(labels, [Label.EMPTY])
    word = [1 if labels[i] == Label.FIRST else 0 for i in kept]
    config, start = _place_word(word, offset, window)
    merged = frozenset(start + j - 1 for j in range(1, len(kept)) if kept[j] != kept[j - 1] + 1)
    last = start + len(word) - 1
    extension = frozenset(range(last, window))
    return LineProjection(config, offset, merged, extension)


def project_chi_star(chi: MultiSpeciesConfiguration, v=(), window: int = 64, offset: int = 0) -> LineProjection:
    """Keep only second class particles of types 1..5, prepend the exit record
    ``v``, map types 1-3 to holes and 4-5 to particles, and embed into A_offset.

    Only edges joining two kept sites that were neighbours before deletion
    stay active; every other edge of the window is censored.
    """
    labels = chi.labels
    if np.any(labels == int(Label.SECOND)):
        raise ValueError("chi* needs typed second class particles, found an untyped one")
    v = [int(x) for x in v]
    if any(x not in (0, 1) for x in v):
        raise ValueError("exit record entries must be 0 or 1")
    kept = _kept_sites(labels, [Label.EMPTY, Label.FIRST])
    letters = [1 if labels[i] in (Label.TYPE4, Label.TYPE5) else 0 for i in kept]
    config, start = _place_word(v + letters, offset, window)
    first_kept = start + len(v)
    merged = set()
    active = set()
    for j in range(1, len(kept)):
        edge = first_kept + j - 1
        (active if kept[j] == kept[j - 1] + 1 else merged).add(edge)
    extension = frozenset(e for e in range(-window, window) if e not in active and e not in merged)
    return LineProjection(config, offset, frozenset(merged), extension)


# ---------------------------------------------------------------------------
# blocking measure


def blocking_marginals(p: float, xs, c: float = 1.0) -> np.ndarray:
    """Occupation probabilities c p^x / ((1-p)^x + c p^x) of the product measure."""
    xs = np.asarray(xs, dtype=float)
    return expit(np.log(c) + xs * np.log(p / (1.0 - p)))


def blocking_tail_mass(p: float, w: int) -> float:
    """Expected number of sites outside -w..w that differ from the tails."""
    r = (1.0 - p) / p
    return 2.0 * r ** (w + 1) / (1.0 - r)


def sample_blocking_configurations(p: float, n: int, w: int, rng: np.random.Generator, size: int) -> np.ndarray:
    """``size`` rejection samples from the blocking measure on A_n, as rows
    over the window -w..w."""
    if not 0.5 < p < 1.0:
        raise ValueError("blocking measures need p in (1/2, 1)")
    if blocking_tail_mass(p, w) > BLOCKING_TAIL_TOL:
        raise ValueError(f"window {w} too small: tail mass exceeds {BLOCKING_TAIL_TOL}")
    rho = blocking_marginals(p, np.arange(-w, w + 1))
    target_holes = n + w + 1
    out = np.empty((size, rho.size), dtype=np.uint8)
    filled = 0
    while filled < size:
        batch = max(64, 2 * (size - filled))
        draws = (rng.random((batch, rho.size)) < rho).astype(np.uint8)
        holes = rho.size - draws.sum(axis=1)
        good = draws[holes == target_holes]
        take = min(good.shape[0], size - filled)
        out[filled : filled + take] = good[:take]
        filled += take
    return out


def sample_blocking_measure(p: float, n: int, w: int, rng: np.random.Generator) -> Configuration:
    rows = sample_blocking_configurations(p, n, w, rng, 1)
    return Configuration(line_window(w), rows[0])
