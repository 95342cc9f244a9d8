"""Integrator, drive fidelity, recording, intensity, and CSV export tests."""

import csv

import numpy as np
import pytest

from granwave.engine import (
    DriveSignal,
    ProbeRecord,
    SimConfig,
    export_trajectory_csv,
    run_sim,
    step_verlet,
    wave_intensity,
)
from granwave.errors import SimulationError
from granwave.physics import (
    DampingParams,
    MaterialParams,
    PackingGeometry,
    ParticleState,
    total_energy,
)

from conftest import jammed_packing

NO_DAMPING = DampingParams(0.0, 0.0, 0.0)


def perturbed_state(geometry, scale, seed=0):
    rng = np.random.default_rng(seed)
    eq = geometry.equilibrium_positions
    return ParticleState(eq + rng.normal(0, scale, eq.shape),
                         np.zeros_like(eq))


class TestDriveFidelity:
    def test_driven_probe_reproduces_sinusoid(self):
        packed, params, _ = jammed_packing(3, 3, 0.88)
        drive = DriveSignal(particle=4, amplitude=1e-3, frequency=7.0)
        config = SimConfig(n_steps=400, dt=5e-3, probes=((4, 0),))
        [rec] = run_sim(config, params, packed, [drive])
        t = np.arange(1, 401) * config.dt
        expected = 1e-3 * np.sin(2 * np.pi * 7.0 * t)
        assert np.abs(rec.series - expected).max() < 1e-15

    def test_drive_phase_and_axis(self):
        packed, params, _ = jammed_packing(3, 3, 0.88)
        drive = DriveSignal(particle=0, amplitude=2e-3, frequency=3.0,
                            axis=1, phase=np.pi / 3)
        config = SimConfig(n_steps=100, dt=5e-3, probes=((0, 1),))
        [rec] = run_sim(config, params, packed, [drive])
        t = np.arange(1, 101) * config.dt
        expected = 2e-3 * np.sin(2 * np.pi * 3.0 * t + np.pi / 3)
        assert np.abs(rec.series - expected).max() < 1e-15

    def test_undriven_axes_respond_freely(self):
        packed, params, _ = jammed_packing(3, 3, 0.88)
        drive = DriveSignal(particle=4, amplitude=1e-3, frequency=7.0)
        # particle 1 sits off the mirror plane of the drive, so its y axis
        # picks up the transverse push from the diagonal contacts
        config = SimConfig(n_steps=400, dt=5e-3, probes=((1, 1), (1, 0)))
        recs = run_sim(config, params, packed, [drive])
        for rec in recs:
            assert np.abs(rec.series).max() > 0


class TestIntegrator:
    def test_energy_conserved_without_damping(self):
        packed, params, _ = jammed_packing(3, 3, 0.88)
        state = perturbed_state(packed, scale=1e-4)
        e0 = sum(total_energy(state, params, packed))
        config = SimConfig(n_steps=2000, dt=5e-3, damping=NO_DAMPING)
        drift = 0.0
        for step in range(1, config.n_steps + 1):
            state = step_verlet(state, params, packed, NO_DAMPING, (),
                                config.dt, step)
            e = sum(total_energy(state, params, packed))
            drift = max(drift, abs(e - e0))
        assert drift / abs(e0) < 1e-3

    def test_background_damping_dissipates(self):
        packed, params, _ = jammed_packing(3, 3, 0.88)
        state = perturbed_state(packed, scale=1e-4)
        e0 = sum(total_energy(state, params, packed))
        damped = DampingParams(background=1.0)
        for step in range(1, 2001):
            state = step_verlet(state, params, packed, damped, (), 5e-3, step)
        e1 = sum(total_energy(state, params, packed))
        # kinetic + perturbation energy decays toward the packed baseline
        eq_state = ParticleState(packed.equilibrium_positions,
                                 np.zeros_like(packed.equilibrium_positions))
        e_floor = sum(total_energy(eq_state, params, packed))
        assert e1 - e_floor < 0.1 * (e0 - e_floor)

    def test_determinism_bitwise(self):
        packed, params, _ = jammed_packing(3, 3, 0.88)
        drive = DriveSignal(particle=4, amplitude=1e-3, frequency=7.0)
        config = SimConfig(n_steps=300, dt=5e-3, probes=((8, 0), (2, 1)))
        a = run_sim(config, params, packed, [drive])
        b = run_sim(config, params, packed, [drive])
        for ra, rb in zip(a, b):
            np.testing.assert_array_equal(ra.series, rb.series)

    def test_neighbor_methods_agree(self):
        packed, params, _ = jammed_packing(4, 4, 0.88)
        drive = DriveSignal(particle=5, amplitude=1e-3, frequency=7.0)
        dense = SimConfig(n_steps=200, dt=5e-3, probes=((10, 0),))
        cells = SimConfig(n_steps=200, dt=5e-3, probes=((10, 0),),
                          neighbor_method="cell_list")
        [ra] = run_sim(dense, params, packed, [drive])
        [rb] = run_sim(cells, params, packed, [drive])
        np.testing.assert_allclose(rb.series, ra.series, rtol=1e-10,
                                   atol=1e-12 * np.abs(ra.series).max())

    def test_nan_detection_carries_step(self):
        packed, params, _ = jammed_packing(3, 3, 0.88)
        # absurd timestep blows the integration up quickly
        config = SimConfig(n_steps=5000, dt=50.0, probes=((4, 0),),
                           damping=NO_DAMPING)
        drive = DriveSignal(particle=0, amplitude=5e-2, frequency=7.0)
        with np.errstate(over="ignore", invalid="ignore"):
            with pytest.raises(SimulationError) as err:
                run_sim(config, params, packed, [drive])
        assert err.value.step is not None

    def test_failure_carries_partial_series(self):
        # rows recorded before the blow-up ride along on the exception
        pos = np.array([[0.45, 0.5], [0.53, 0.5]])
        params = MaterialParams(stiffness=np.array([5.0, 5.0]), diameter=0.1)
        geometry = PackingGeometry(box=(1.0, 1.0), lattice=(2, 1),
                                   equilibrium_positions=pos)
        config = SimConfig(n_steps=50, dt=0.5, probes=((1, 0),))
        with np.errstate(over="ignore", invalid="ignore"):
            with pytest.raises(SimulationError) as err:
                run_sim(config, params, geometry)
        partial = err.value.partial_series
        assert err.value.step >= 2
        assert partial.shape == (err.value.step - 1, 1)
        assert np.isfinite(partial).all()

    def test_quiescent_equilibrium_stays_silent(self):
        # equilibrated packing, no drives: probes stay numerically at zero
        packed, params, _ = jammed_packing(3, 3, 0.88, force_tol=1e-12)
        config = SimConfig(n_steps=500, dt=5e-3, probes=((4, 0), (7, 1)))
        for rec in run_sim(config, params, packed):
            assert np.abs(rec.series).max() < 1e-12


class TestRecording:
    def test_record_stride_length_and_sampling(self):
        packed, params, _ = jammed_packing(3, 3, 0.88)
        drive = DriveSignal(particle=4, amplitude=1e-3, frequency=7.0)
        full = SimConfig(n_steps=10, dt=5e-3, probes=((4, 0),))
        strided = SimConfig(n_steps=10, dt=5e-3, probes=((4, 0),),
                            record_stride=3)
        [dense] = run_sim(full, params, packed, [drive])
        [sparse] = run_sim(strided, params, packed, [drive])
        assert len(sparse.series) == 4  # ceil(10 / 3)
        np.testing.assert_array_equal(sparse.series, dense.series[::3])

    def test_probe_override(self):
        packed, params, _ = jammed_packing(3, 3, 0.88)
        config = SimConfig(n_steps=20, dt=5e-3, probes=((0, 0),))
        recs = run_sim(config, params, packed, (),
                       probes=[(1, 0), (2, 1), (3, 0)])
        assert [(r.particle, r.axis) for r in recs] == [(1, 0), (2, 1), (3, 0)]

    def test_step_verlet_matches_run_sim(self):
        packed, params, _ = jammed_packing(3, 3, 0.88)
        drive = DriveSignal(particle=4, amplitude=1e-3, frequency=7.0)
        config = SimConfig(n_steps=5, dt=5e-3, probes=((8, 0),))
        [rec] = run_sim(config, params, packed, [drive])
        state = ParticleState(packed.equilibrium_positions.copy(),
                              np.zeros_like(packed.equilibrium_positions))
        for step in range(1, 6):
            state = step_verlet(state, params, packed, config.damping,
                                [drive], config.dt, step)
        assert state.positions[8, 0] - packed.equilibrium_positions[8, 0] == \
            rec.series[-1]


class TestWaveIntensity:
    def test_constant_series_value(self):
        series = np.full(90, 2.0)
        rec = ProbeRecord(0, 0, series, dt=5e-3)
        assert wave_intensity(rec, 1.0 / 3.0) == pytest.approx(60 * 4.0)

    def test_window_start_floor_semantics(self):
        series = np.arange(10, dtype=float)
        assert wave_intensity(series, 0.35) == pytest.approx(
            float(np.sum(series[3:] ** 2)))

    def test_full_series_when_fraction_zero(self):
        series = np.ones(7)
        assert wave_intensity(series, 0.0) == pytest.approx(7.0)

    def test_invalid_fraction_rejected(self):
        with pytest.raises(ValueError):
            wave_intensity(np.ones(10), 1.0)
        with pytest.raises(ValueError):
            wave_intensity(np.ones(10), -0.2)

    def test_empty_window_rejected(self):
        with pytest.raises(ValueError):
            wave_intensity(np.ones(0), 0.0)


class TestTrajectoryExport:
    def test_csv_round_trip(self, tmp_path):
        packed, params, _ = jammed_packing(3, 3, 0.88)
        drive = DriveSignal(particle=4, amplitude=1e-3, frequency=7.0)
        config = SimConfig(n_steps=50, dt=5e-3, probes=((4, 0), (8, 1)),
                           record_stride=5)
        recs = run_sim(config, params, packed, [drive])
        path = tmp_path / "traj.csv"
        export_trajectory_csv(path, recs, config)
        with open(path) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["step", "time", "probe_4_x", "probe_8_y"]
        assert len(rows) - 1 == len(recs[0].series)
        assert int(rows[1][0]) == 1
        assert float(rows[1][2]) == recs[0].series[0]
        assert int(rows[2][0]) == 6
