"""Self-contained correctness checks runnable from the command line.

Each check rebuilds a small known system and tests an independent property:
forces against the potential's finite differences, integrator convergence
order, FIRE relaxation, the adjoint gradient against finite differences,
and closed-form loss values.  Checks call library functions through their
modules so a deliberately broken function is caught by the matching check.
"""

from dataclasses import dataclass, replace

import numpy as np

from . import adjoint as _adjoint
from . import engine as _engine
from . import losses as _losses
from . import packing as _packing
from . import physics as _physics


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def _toy_system(n=6, seed=11, diameter=0.1):
    """Random overlapping cluster away from the walls of a unit box."""
    rng = np.random.default_rng(seed)
    pos = 0.5 + diameter * 0.8 * rng.standard_normal((n, 2)) / np.sqrt(n)
    params = _physics.MaterialParams(stiffness=rng.uniform(1.0, 10.0, n),
                                     diameter=diameter)
    geometry = _physics.PackingGeometry(
        box=(1.0, 1.0), lattice=(n, 1), equilibrium_positions=pos.copy())
    return pos, params, geometry


def check_force_fd() -> CheckResult:
    """Conservative forces must equal minus the energy gradient."""
    pos, params, geometry = _toy_system()
    damping = _physics.DampingParams(background=0.0)
    vel = np.zeros_like(pos)
    accel = _physics.total_accel(
        _physics.ParticleState(pos, vel), params, geometry, damping)
    force = accel * params.mass
    h = 1e-8
    worst = 0.0
    for i in range(pos.shape[0]):
        for ax in range(2):
            shifted = pos.copy()
            shifted[i, ax] += h
            _, ep = _physics.total_energy(
                _physics.ParticleState(shifted, vel), params, geometry)
            shifted[i, ax] -= 2 * h
            _, em = _physics.total_energy(
                _physics.ParticleState(shifted, vel), params, geometry)
            fd = -(ep - em) / (2 * h)
            scale = max(abs(force[i, ax]), abs(fd), 1e-10)
            worst = max(worst, abs(force[i, ax] - fd) / scale)
    return CheckResult("force_fd", worst < 1e-5,
                       f"max rel force error {worst:.3e} (tol 1e-5)")


def check_energy_order() -> CheckResult:
    """Undamped energy drift must fall ~4x when the step is halved."""
    pos, params, geometry = _toy_system(n=4, seed=3)
    damping = _physics.DampingParams(background=0.0)
    drifts = []
    for dt in (2e-3, 1e-3):
        config = _engine.SimConfig(n_steps=int(round(0.5 / dt)), dt=dt,
                                   damping=damping)
        state = _physics.ParticleState(pos.copy(), np.zeros_like(pos))
        e0 = sum(_physics.total_energy(state, params, geometry))
        for step in range(1, config.n_steps + 1):
            state = _engine.step_verlet(state, params, geometry, damping,
                                        (), dt, step_index=step)
        e1 = sum(_physics.total_energy(state, params, geometry))
        drifts.append(abs(e1 - e0) / max(abs(e0), 1e-12))
    ratio = drifts[0] / max(drifts[1], 1e-300)
    return CheckResult("energy_order", 3.0 < ratio < 5.0,
                       f"drift ratio {ratio:.2f} for dt halving "
                       f"(want within (3, 5))")


def check_fire_two_body() -> CheckResult:
    """FIRE must push an overlapping pair out of contact."""
    diameter = 0.1
    pos = np.array([[0.45, 0.5], [0.53, 0.5]])
    params = _physics.MaterialParams(stiffness=np.array([2.0, 2.0]),
                                     diameter=diameter)
    geometry = _physics.PackingGeometry(
        box=(1.0, 1.0), lattice=(2, 1), equilibrium_positions=pos.copy())
    result = _packing.fire_minimize(pos, params, geometry,
                                    _packing.FireConfig())
    gap = float(np.linalg.norm(result.positions[1] - result.positions[0]))
    ok = gap >= diameter and result.residual < 1e-10
    return CheckResult("fire_two_body", ok,
                       f"gap {gap:.4f} (>= {diameter}), residual "
                       f"{result.residual:.2e}")


def check_adjoint_fd() -> CheckResult:
    """Adjoint gradient must match finite differences on a driven chain."""
    diameter = 0.1
    pos = np.array([[0.40, 0.5], [0.495, 0.5], [0.59, 0.5]])
    params = _physics.MaterialParams(stiffness=np.array([2.0, 5.0, 8.0]),
                                     diameter=diameter)
    geometry = _physics.PackingGeometry(
        box=(1.0, 1.0), lattice=(3, 1), equilibrium_positions=pos.copy())
    config = _engine.SimConfig(n_steps=60, dt=5e-3)
    drives = (_engine.DriveSignal(0, 1e-3, 7.0),)
    probes = ((2, 0),)

    def loss_fn(series, stiffness):
        value = float(np.sum(series ** 2))
        return value, 2.0 * series, None

    value, grad = _adjoint.series_loss_and_grad(params, geometry, config,
                                                drives, probes, loss_fn)
    h = 1e-6
    worst = 0.0
    for i in range(params.n):
        fd_vals = []
        for sign in (+1.0, -1.0):
            k = params.stiffness.copy()
            k[i] += sign * h
            series, _ = _engine._simulate(replace(params, stiffness=k),
                                          geometry, config, list(drives),
                                          list(probes))
            fd_vals.append(float(np.sum(series ** 2)))
        fd = (fd_vals[0] - fd_vals[1]) / (2 * h)
        worst = max(worst, abs(grad[i] - fd) / max(abs(grad[i]), abs(fd),
                                                   1e-12))
    return CheckResult("adjoint_fd", worst < 1e-4,
                       f"max rel gradient error {worst:.3e} (tol 1e-4)")


def check_loss_identities() -> CheckResult:
    """Closed-form loss values on synthetic inputs."""
    problems = []
    ln2 = float(np.log(2.0))
    ce_even = _losses.cross_entropy_loss([[1.0, 1.0]], [[0.0, 1.0]])
    if abs(ce_even - ln2) > 1e-12:
        problems.append(f"even-split CE {ce_even} != ln 2")
    mae = _losses.mae_loss(np.full(10, 2.0), np.full(10, 3.5))
    if abs(mae - 1.5) > 1e-12:
        problems.append(f"constant-offset MAE {mae} != 1.5")
    dt, n = 1e-3, 1000
    t = np.arange(1, n + 1) * dt
    f = 40.0
    tone = np.sin(2 * np.pi * f * t)
    for c in (0.0, 0.5, 1.0):
        gain = _losses.spectral_gain((tone, np.zeros(n)), c * tone, f, dt)
        if abs(gain - c) > 1e-2 * max(c, 1.0):
            problems.append(f"spectral gain {gain} != {c}")
    return CheckResult("loss_identities", not problems,
                       "; ".join(problems) if problems else
                       "CE, MAE, and spectral gain match closed forms")


ALL_CHECKS = (
    check_force_fd,
    check_energy_order,
    check_fire_two_body,
    check_adjoint_fd,
    check_loss_identities,
)


def run_checks(names=None):
    """Run all (or the named) checks; returns the list of CheckResults."""
    selected = []
    available = {fn.__name__.removeprefix("check_"): fn for fn in ALL_CHECKS}
    if names is None:
        selected = list(ALL_CHECKS)
    else:
        for name in names:
            if name not in available:
                raise ValueError(f"unknown check {name!r}; available: "
                                 f"{', '.join(sorted(available))}")
            selected.append(available[name])
    return [fn() for fn in selected]
