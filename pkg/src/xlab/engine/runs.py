"""Standard runs built on the coupled ensembles: coupling times, the half-line
process, escape times from the blocking measure, trajectory files and
checkpoints."""

from __future__ import annotations

import io
import pickle
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..lattice import (
    Configuration,
    halfline_window,
    line_window,
    sample_blocking_configurations,
    segment,
)
from . import kernels
from .clocks import ClockStream
from .ensemble import CoupledEnsemble, MultiSpeciesEnsemble, Rates, as_rates

CHECKPOINT_MAGIC = b"XLAB1\n"


@dataclass(frozen=True)
class Timeout:
    """Returned instead of a time when the event did not happen by ``t_max``."""

    t_max: float

    def __bool__(self) -> bool:
        return False


def coupling_time(params, n: int, seed: int, t_max: float, *, key=(), upper=None, lower=None):
    """First time the processes started from all-full and all-empty agree."""
    top = segment(n)
    upper = upper if upper is not None else Configuration.full(top)
    lower = lower if lower is not None else Configuration.empty(top)
    ens = CoupledEnsemble([upper, lower], params, seed, key=key).stop_on_coalescence()
    if ens.coalesced:
        return 0.0
    status = ens.step_to(t_max)
    if status == "coalesced":
        return ens.time
    return Timeout(t_max)


@dataclass
class Trajectory:
    """Sampled times with the current and the configuration of one replica."""

    times: np.ndarray
    current: np.ndarray
    occupation_sum: np.ndarray | None
    samples: int
    final: Configuration
    status: str

    def occupation_frequency(self) -> np.ndarray:
        if self.occupation_sum is None or self.samples == 0:
            raise ValueError("no occupation samples recorded")
        return self.occupation_sum / self.samples


def sample_path(ens: CoupledEnsemble, times, *, index: int = 0, occupation_after: float | None = None,
                snapshots: list | None = None) -> Trajectory:
    """Advance ``ens`` through ``times``, recording the current at each.

    When ``occupation_after`` is given, occupations at sample times at or
    beyond it are summed.  ``snapshots`` collects (time, configuration
    string) pairs when a list is passed.
    """
    times = np.asarray(times, dtype=float)
    current = np.zeros(times.size, dtype=np.int64)
    occ = None if occupation_after is None else np.zeros(ens.topology.length)
    count = 0
    status = "time"
    for i, t in enumerate(times):
        status = ens.step_to(t)
        if status != "time":
            raise RuntimeError(f"run stopped early ({status}) at t={ens.time}")
        current[i] = ens.current(index)
        if occ is not None and t >= occupation_after:
            occ += ens.state[index]
            count += 1
        if snapshots is not None:
            snapshots.append((float(t), ens.configuration(index).to_string()))
    return Trajectory(times, current, occ, count, ens.configuration(index), status)


def run_halfline(p: float, alpha: float, gamma: float, window: int, horizon: float, seed: int, *,
                 key=(), initial: Configuration | None = None, n_samples: int = 200,
                 occupation_after: float | None = None) -> Trajectory:
    """Half-line process on sites 1..window started empty (unless given).

    Raises ``WindowBreach`` if particles get within two sites of the
    truncation.
    """
    if p <= 0.5:
        raise ValueError("the half-line runs need p > 1/2")
    top = halfline_window(window)
    initial = initial if initial is not None else Configuration.empty(top)
    ens = CoupledEnsemble([initial], Rates(p, alpha=alpha, gamma=gamma), seed, key=key).monitor_window()
    times = np.linspace(horizon / n_samples, horizon, n_samples)
    return sample_path(ens, times, occupation_after=occupation_after)


def escape_extent(config: Configuration) -> int:
    """max(R, -L) for a line configuration (R the rightmost hole, L the
    leftmost particle), or a very negative number for the all-empty or
    all-full word."""
    state = config.sites.reshape(1, -1)
    return int(kernels._escape_extent(state, config.topology.size))


def blocking_escape_times(p: float, thresholds, seed: int, *, key=(), window: int = 12,
                          sample_window: int = 40, t_max: float = 1e7) -> np.ndarray:
    """First times at which max(R, -L) exceeds each threshold, starting from
    the blocking measure on A_0.

    The initial state is drawn on a wide window and cut down to ``window``
    (redrawn unless everything outside and within three sites of the edges
    is in its tail state, which the breach monitor needs).  ``window`` must
    exceed the largest
    threshold by at least three sites so the monitored edges are never hit
    before the last threshold.
    """
    thresholds = sorted(int(x) for x in thresholds)
    if window < thresholds[-1] + 3:
        raise ValueError("window too small for the largest threshold")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=tuple(key) + (1,))))
    cut = sample_window - window
    while True:
        wide = sample_blocking_configurations(p, 0, sample_window, rng, 1)[0]
        inner = wide[cut:cut + 2 * window + 1]
        if wide[:cut + 3].sum() == 0 and wide[cut + 2 * window - 2:].min() == 1:
            break
    top = line_window(window)
    ens = CoupledEnsemble([Configuration(top, inner)], Rates(p), seed, key=tuple(key) + (0,))
    ens.monitor_window()
    out = np.full(len(thresholds), np.inf)
    for i, x in enumerate(thresholds):
        if escape_extent(ens.configuration()) > x:
            out[i] = ens.time
            continue
        ens.stop_on_escape(x)
        status = ens.step_to(t_max)
        if status != "escaped":
            break
        out[i] = ens.time
    return out


# ---------------------------------------------------------------------------
# files


def write_trajectory_csv(path, snapshots) -> Path:
    """Write (time, configuration) rows; times with 17 significant digits."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write("t,configuration\n")
        for t, word in snapshots:
            fh.write(f"{t:.17g},{word}\n")
    return path


def read_trajectory_csv(path) -> list[tuple[float, str]]:
    rows = Path(path).read_text().splitlines()
    if not rows or rows[0] != "t,configuration":
        raise ValueError("not a trajectory file")
    out = []
    for row in rows[1:]:
        t, word = row.split(",")
        out.append((float(t), word))
    return out


def _ensemble_payload(ens) -> dict:
    if not isinstance(ens.stream, ClockStream):
        raise ValueError("only seeded streams can be checkpointed")
    common = {
        "time": ens.time,
        "event_time": ens._event_time,
        "piece": ens._piece,
        "stream": ens.stream.get_state(),
        "layout": ens.layout,
        "schedule": ens.schedule,
        "topology": ens.topology,
    }
    if isinstance(ens, CoupledEnsemble):
        common.update(kind="binary", state=ens.state, rates=[tuple(r) for r in ens.rates],
                      entered=ens.entered, exited=ens.exited, opts=ens.opts, diag=ens.diag)
    else:
        common.update(kind="labels", labels=ens.labels, system=ens.system, left_in=ens.left_in,
                      left_out=ens.left_out, right_in=ens.right_in, right_out=ens.right_out,
                      exit_log=ens._exit_log, log_count=ens._log_count, stop_mask=ens._stop_mask,
                      opts=ens.opts)
    return common


def save_checkpoint(ens, path) -> Path:
    """Versioned binary checkpoint: the magic header followed by a pickle."""
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    pickle.dump(_ensemble_payload(ens), buf, protocol=4)
    path = Path(path)
    path.write_bytes(buf.getvalue())
    return path


def load_checkpoint(path):
    raw = Path(path).read_bytes()
    if not raw.startswith(CHECKPOINT_MAGIC):
        raise ValueError("not an XLAB1 checkpoint")
    data = pickle.loads(raw[len(CHECKPOINT_MAGIC):])
    stream = ClockStream(data["stream"]["seed"], data["stream"]["key"])
    stream.set_state(data["stream"])
    top = data["topology"]
    if data["kind"] == "binary":
        replicas = [Configuration(top, row) for row in data["state"]]
        ens = CoupledEnsemble(replicas, [Rates(*r) for r in data["rates"]], stream=stream,
                              layout=data["layout"], schedule=data["schedule"])
        ens.entered[:] = data["entered"]
        ens.exited[:] = data["exited"]
        ens.opts[:] = data["opts"]
        ens.diag[0] = data["diag"][0]
    else:
        from ..lattice import MultiSpeciesConfiguration

        ens = MultiSpeciesEnsemble(MultiSpeciesConfiguration(top, data["labels"]), data["system"],
                                   stream=stream, layout=data["layout"], schedule=data["schedule"],
                                   exit_log_size=data["exit_log"].shape[0])
        for name in ("left_in", "left_out", "right_in", "right_out"):
            getattr(ens, name)[:] = data[name]
        ens._exit_log[:] = data["exit_log"]
        ens._log_count[:] = data["log_count"]
        ens._stop_mask[:] = data["stop_mask"]
        ens.opts[:] = data["opts"]
    ens.time = data["time"]
    ens._event_time = data["event_time"]
    ens._piece = data["piece"]
    return ens


__all__ = [
    "CHECKPOINT_MAGIC",
    "Timeout",
    "Trajectory",
    "as_rates",
    "blocking_escape_times",
    "coupling_time",
    "escape_extent",
    "load_checkpoint",
    "read_trajectory_csv",
    "run_halfline",
    "sample_path",
    "save_checkpoint",
    "write_trajectory_csv",
]
