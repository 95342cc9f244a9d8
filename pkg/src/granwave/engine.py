"""Driven velocity-Verlet dynamics with probe recording.

Drives are kinematic: the driven coordinate of a particle is overwritten
with delta0 + A sin(2 pi f t + phase) after each drift, and its velocity
with the analytic derivative, so the prescribed motion is reproduced to
machine precision while the remaining degrees of freedom evolve freely.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import SimulationError
from .physics import (
    DampingParams,
    MaterialParams,
    PackingGeometry,
    ParticleState,
    _accel,
)


@dataclass(frozen=True)
class DriveSignal:
    """Sinusoidal kinematic drive applied to one coordinate of one particle."""

    particle: int
    amplitude: float
    frequency: float
    axis: int = 0
    phase: float = 0.0

    def __post_init__(self):
        if self.amplitude < 0:
            raise ValueError("drive amplitude must be non-negative")
        if self.frequency <= 0:
            raise ValueError("drive frequency must be positive")
        if self.axis not in (0, 1):
            raise ValueError("axis must be 0 (x) or 1 (y)")


@dataclass(frozen=True)
class SimConfig:
    """Step count, step size, dissipation, and recording layout."""

    n_steps: int
    dt: float
    damping: DampingParams = field(default_factory=DampingParams)
    probes: tuple = ()
    record_stride: int = 1
    neighbor_method: str = "all_pairs"

    def __post_init__(self):
        if self.n_steps < 0:
            raise ValueError("n_steps must be non-negative")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.record_stride < 1:
            raise ValueError("record_stride must be at least 1")

    @property
    def n_records(self) -> int:
        return -(-self.n_steps // self.record_stride)


@dataclass
class ProbeRecord:
    """Displacement history of one coordinate, relative to equilibrium."""

    particle: int
    axis: int
    series: np.ndarray
    dt: float
    stride: int = 1


def _drive_tables(drives):
    """Split a drive list into index arrays and per-drive constants."""
    if not drives:
        return None
    particles = np.array([d.particle for d in drives], dtype=np.intp)
    axes = np.array([d.axis for d in drives], dtype=np.intp)
    amps = np.array([d.amplitude for d in drives])
    omegas = np.array([2.0 * np.pi * d.frequency for d in drives])
    phases = np.array([d.phase for d in drives])
    return particles, axes, amps, omegas, phases


def _prescribed(tables, eq, t):
    """Prescribed positions and velocities of driven coordinates at time t."""
    particles, axes, amps, omegas, phases = tables
    arg = omegas * t + phases
    pos = eq[particles, axes] + amps * np.sin(arg)
    vel = amps * omegas * np.cos(arg)
    return pos, vel


def _step(x, v, step_index, dt, k, params, geometry, damping, tables, eq,
          method):
    """One velocity-Verlet step from state after step_index-1 steps.

    Drift-kick-drift with the force recomputed at the updated positions;
    driven coordinates are overwritten with their prescribed values before
    the second force evaluation so waves launch from the prescribed motion.
    """
    a1 = _accel(x, v, k, params, geometry, damping, method=method)
    vh = v + (0.5 * dt) * a1
    x2 = x + dt * vh
    if tables is not None:
        t_new = step_index * dt
        pos_d, vel_d = _prescribed(tables, eq, t_new)
        x2[tables[0], tables[1]] = pos_d
        vh[tables[0], tables[1]] = vel_d
    a2 = _accel(x2, vh, k, params, geometry, damping, method=method)
    v2 = vh + (0.5 * dt) * a2
    if tables is not None:
        v2[tables[0], tables[1]] = vel_d
    return x2, v2


def step_verlet(state: ParticleState, params: MaterialParams,
                geometry: PackingGeometry, damping: DampingParams,
                drives, dt: float, step_index: int = 1,
                method: str = "all_pairs") -> ParticleState:
    """Advance one step; step_index fixes the phase of the kinematic drives."""
    tables = _drive_tables(drives)
    x2, v2 = _step(state.positions.copy(), state.velocities.copy(),
                   step_index, dt, params.stiffness, params, geometry,
                   damping, tables, geometry.equilibrium_positions, method)
    return ParticleState(x2, v2, time=step_index * dt)


def _simulate(params, geometry, config: SimConfig, drives, probes,
              checkpoint_stride=None, initial=None):
    """Run the integrator, recording probe displacements.

    Returns (series, checkpoints).  series has shape (n_records, n_probes);
    row r holds the state after step r * record_stride + 1.  checkpoints is
    a list of (step_index, positions, velocities) copies at the requested
    stride (step 0 included), or None when checkpointing is off.
    """
    eq = geometry.equilibrium_positions
    x = eq.copy() if initial is None else np.array(initial.positions)
    v = np.zeros_like(x) if initial is None else np.array(initial.velocities)
    k = params.stiffness
    tables = _drive_tables(drives)
    probe_p = np.array([p for p, _ in probes], dtype=np.intp)
    probe_a = np.array([a for _, a in probes], dtype=np.intp)
    series = np.zeros((config.n_records, len(probes)))
    checkpoints = None
    if checkpoint_stride is not None:
        checkpoints = [(0, x.copy(), v.copy())]
    row = 0
    for step_index in range(1, config.n_steps + 1):
        x, v = _step(x, v, step_index, config.dt, k, params, geometry,
                     config.damping, tables, eq, config.neighbor_method)
        if not (np.isfinite(x).all() and np.isfinite(v).all()):
            err = SimulationError("non-finite state", step=step_index)
            # rows recorded before the blow-up, so callers can flush them
            err.partial_series = series[:row].copy()
            raise err
        if (step_index - 1) % config.record_stride == 0:
            series[row] = x[probe_p, probe_a] - eq[probe_p, probe_a]
            row += 1
        if checkpoints is not None and step_index % checkpoint_stride == 0:
            checkpoints.append((step_index, x.copy(), v.copy()))
    return series, checkpoints


def run_sim(config: SimConfig, params: MaterialParams,
            geometry: PackingGeometry, drives=(), probes=None):
    """Simulate and return one ProbeRecord per probe.

    Probes default to config.probes; pass an explicit list to override.
    """
    if probes is None:
        probes = list(config.probes)
    series, _ = _simulate(params, geometry, config, list(drives), probes)
    return [
        ProbeRecord(particle=p, axis=a, series=series[:, idx].copy(),
                    dt=config.dt, stride=config.record_stride)
        for idx, (p, a) in enumerate(probes)
    ]


def wave_intensity(record, window_start_fraction: float) -> float:
    """Sum of squared displacements over the trailing window of a series.

    The first floor(fraction * length) samples are dropped; the rest are
    squared and summed.  A window that would be empty is an error.
    """
    series = record.series if isinstance(record, ProbeRecord) else np.asarray(record)
    if not 0.0 <= window_start_fraction < 1.0:
        raise ValueError("window_start_fraction must lie in [0, 1)")
    start = int(window_start_fraction * len(series))
    window = series[start:]
    if window.size == 0:
        raise ValueError("empty intensity window")
    return float(np.sum(window ** 2))


def export_trajectory_csv(path, records, config: SimConfig):
    """Write probe series as CSV with columns step, time, probe_<p>_<axis>."""
    names = ["step", "time"] + [
        f"probe_{r.particle}_{'xy'[r.axis]}" for r in records
    ]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(names)
        if not records:
            return
        length = len(records[0].series)
        for row in range(length):
            step = row * config.record_stride + 1
            writer.writerow([step, repr(step * config.dt)] +
                            [repr(float(r.series[row])) for r in records])
