"""Reverse-mode differentiation of driven runs with respect to stiffness.

The forward pass stores sparse state checkpoints (default stride ~sqrt of
the step count, balancing memory against recompute).  The backward pass
re-integrates each inter-checkpoint segment with the same step function,
which reproduces the forward states bitwise, then pulls the loss cotangent
back through the steps in reverse order: loss seeds enter at recorded
probe coordinates, kinematic overwrites zero the corresponding cotangent
entries, and each force evaluation contributes to the stiffness gradient
through the acceleration vector-Jacobian product.

Contact on/off indicators take subgradient zero throughout, so gradients
treat the contact network of the evaluated trajectory as locally constant.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from .engine import SimConfig, _drive_tables, _prescribed, _simulate, _step
from .errors import GradientError
from .losses import (
    ExperimentSpec,
    evaluate_experiment,
    make_dataset,
    sample_losses,
)
from .physics import _accel, _accel_vjp


def default_checkpoint_stride(n_steps: int) -> int:
    """Ceiling square root of the step count (at least 1)."""
    return max(1, math.isqrt(max(n_steps - 1, 0)) + 1) if n_steps else 1


@dataclass
class Tape:
    """Forward record needed to run a backward pass."""

    series: np.ndarray
    checkpoints: list
    config: SimConfig
    drives: tuple
    probes: tuple


def forward_tape(params, geometry, config: SimConfig, drives, probes,
                 checkpoint_stride=None, initial=None) -> Tape:
    """Run the forward simulation while checkpointing states."""
    stride = (default_checkpoint_stride(config.n_steps)
              if checkpoint_stride is None else int(checkpoint_stride))
    if stride < 1:
        raise ValueError("checkpoint stride must be at least 1")
    series, checkpoints = _simulate(params, geometry, config, list(drives),
                                    list(probes), checkpoint_stride=stride,
                                    initial=initial)
    return Tape(series=series, checkpoints=checkpoints, config=config,
                drives=tuple(drives), probes=tuple(probes))


def _step_vjp(x, v, step_index, x_bar, v_bar, dt, k, params, geometry,
              damping, tables, eq, method):
    """Pull (x_bar, v_bar) on the step output back onto the step input.

    Recomputes the step's internal states from the input (x, v), then
    reverses each operation.  Overwritten driven coordinates are constants
    of the step, so their cotangents are dropped at each overwrite point.
    Returns (x_bar, v_bar, k_bar) for the step input and parameters.
    """
    a1 = _accel(x, v, k, params, geometry, damping, method=method)
    vh = v + (0.5 * dt) * a1
    x2 = x + dt * vh
    if tables is not None:
        pos_d, vel_d = _prescribed(tables, eq, step_index * dt)
        x2[tables[0], tables[1]] = pos_d
        vh = vh.copy()
        vh[tables[0], tables[1]] = vel_d

    # v2 = vh + (dt/2) a2, then v2[driven] overwritten
    v2_bar = v_bar.copy()
    if tables is not None:
        v2_bar[tables[0], tables[1]] = 0.0
    vh_bar = v2_bar.copy()
    xa, va, k_bar = _accel_vjp(x2, vh, k, params, geometry, damping,
                               (0.5 * dt) * v2_bar, method=method)
    x2_bar = x_bar + xa
    vh_bar += va
    # x2[driven] and vh[driven] overwritten before the force evaluation
    if tables is not None:
        x2_bar[tables[0], tables[1]] = 0.0
        vh_bar[tables[0], tables[1]] = 0.0
    # x2 = x + dt vh (pre-overwrite vh), vh = v + (dt/2) a1
    x_in_bar = x2_bar.copy()
    vh_bar = vh_bar + dt * x2_bar
    v_in_bar = vh_bar.copy()
    xa1, va1, ka1 = _accel_vjp(x, v, k, params, geometry, damping,
                               (0.5 * dt) * vh_bar, method=method)
    x_in_bar += xa1
    v_in_bar += va1
    return x_in_bar, v_in_bar, k_bar + ka1


def backward(tape: Tape, params, geometry, series_grad) -> np.ndarray:
    """Stiffness gradient of a scalar with given series cotangent.

    series_grad must match tape.series in shape; entries are dLoss/dseries.
    """
    config = tape.config
    series_grad = np.asarray(series_grad, dtype=np.float64)
    if series_grad.shape != tape.series.shape:
        raise ValueError("series_grad shape does not match the tape")
    k = params.stiffness
    eq = geometry.equilibrium_positions
    tables = _drive_tables(list(tape.drives))
    probe_p = np.array([p for p, _ in tape.probes], dtype=np.intp)
    probe_a = np.array([a for _, a in tape.probes], dtype=np.intp)
    dt, method = config.dt, config.neighbor_method
    x_bar = np.zeros_like(eq)
    v_bar = np.zeros_like(eq)
    k_bar = np.zeros(params.n)
    cps = tape.checkpoints
    for ci in range(len(cps) - 1, -1, -1):
        c_step, cx, cv = cps[ci]
        seg_end = config.n_steps if ci == len(cps) - 1 else cps[ci + 1][0]
        states = [(cx, cv)]
        sx, sv = cx, cv
        for t in range(c_step + 1, seg_end):
            sx, sv = _step(sx, sv, t, dt, k, params, geometry,
                           config.damping, tables, eq, method)
            states.append((sx, sv))
        for t in range(seg_end, c_step, -1):
            if (t - 1) % config.record_stride == 0:
                row = (t - 1) // config.record_stride
                x_bar[probe_p, probe_a] += series_grad[row]
            sx, sv = states[t - 1 - c_step]
            x_bar, v_bar, dk = _step_vjp(sx, sv, t, x_bar, v_bar, dt, k,
                                         params, geometry, config.damping,
                                         tables, eq, method)
            k_bar += dk
            if not (np.isfinite(x_bar).all() and np.isfinite(v_bar).all()
                    and np.isfinite(k_bar).all()):
                raise GradientError("non-finite cotangent", step=t)
    return k_bar


def series_loss_and_grad(params, geometry, config: SimConfig, drives, probes,
                         loss_fn, checkpoint_stride=None):
    """Differentiate a custom scalar of the probe series and stiffness.

    loss_fn(series, stiffness) -> (value, dvalue_dseries, dvalue_dstiffness)
    where the last entry may be None.  Returns (value, gradient).
    """
    tape = forward_tape(params, geometry, config, drives, probes,
                        checkpoint_stride)
    value, series_grad, theta_grad = loss_fn(tape.series, params.stiffness)
    grad = backward(tape, params, geometry, series_grad)
    if theta_grad is not None:
        grad = grad + np.asarray(theta_grad, dtype=np.float64)
    return value, grad


def loss_and_grad(spec: ExperimentSpec, params, geometry, config: SimConfig,
                  checkpoint_stride=None):
    """Experiment loss and its stiffness gradient.

    The forward series are identical (bitwise) to evaluate_experiment's,
    so reported losses agree exactly between the two entry points.
    Returns (LossReport, gradient).
    """
    samples = make_dataset(spec, config.n_steps, config.dt,
                           config.record_stride)
    tapes = [forward_tape(params, geometry, config, sample.drives,
                          spec.probes, checkpoint_stride)
             for sample in samples]
    report, seeds = sample_losses(spec, samples, [t.series for t in tapes],
                                  config.n_steps, config.dt,
                                  config.record_stride)
    grad = np.zeros(params.n)
    for tape, seed in zip(tapes, seeds):
        grad += backward(tape, params, geometry, seed)
    return report, grad


def grad_check(spec: ExperimentSpec, params, geometry, config: SimConfig,
               h=1e-6, components=None, checkpoint_stride=None):
    """Compare the adjoint gradient against central finite differences.

    Returns a dict with the loss, per-component (index, adjoint, fd,
    rel_error) rows, and the maximum relative error.  The relative error
    denominator is max(|adjoint|, |fd|, 1e-12).
    """
    report, grad = loss_and_grad(spec, params, geometry, config,
                                 checkpoint_stride)
    if components is None:
        components = range(params.n)
    rows = []
    for i in components:
        shifted = {}
        for sign in (+1.0, -1.0):
            k = params.stiffness.copy()
            k[i] += sign * h
            shifted[sign] = evaluate_experiment(
                spec, replace(params, stiffness=k), geometry, config).total
        fd = (shifted[+1.0] - shifted[-1.0]) / (2.0 * h)
        rel = abs(grad[i] - fd) / max(abs(grad[i]), abs(fd), 1e-12)
        rows.append((int(i), float(grad[i]), float(fd), float(rel)))
    return {
        "loss": report.total,
        "rows": rows,
        "max_rel_error": max(r[3] for r in rows) if rows else 0.0,
    }
