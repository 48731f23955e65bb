"""Event-driven simulation under the grand coupling."""

from .clocks import BATCH_SIZE, ClockLayout, ClockStream, ScriptedStream
from .ensemble import (
    CensoringSchedule,
    CoupledEnsemble,
    LabelSystem,
    MultiSpeciesEnsemble,
    Rates,
    WindowBreach,
    apply_censoring,
    edge_table,
    four_process_system,
    step_multispecies,
    step_to,
    two_species_system,
)
from .runs import Timeout, Trajectory, blocking_escape_times, coupling_time, run_halfline, sample_path
