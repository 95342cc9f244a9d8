"""Confined hexagonal packings: lattice seeding, relaxation, compression.

The box is sized from the target packing fraction so that the final particle
diameter lands exactly on the requested value; compression then grows the
diameter in small multiplicative steps with a FIRE relaxation after each.
"""

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConvergenceError, PackingError
from .physics import (
    DampingParams,
    MaterialParams,
    PackingGeometry,
    _accel,
    count_contacts,
)

HEX_CLOSE_PACKING = np.pi / (2.0 * np.sqrt(3.0))

_NO_DAMPING = DampingParams(0.0, 0.0, 0.0)


@dataclass(frozen=True)
class LatticeSpec:
    """Hexagonal lattice dimensions and target packing fraction."""

    nx: int
    ny: int
    phi: float
    diameter: float = 0.1

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise ValueError("lattice dimensions must be positive")
        if not 0 < self.phi < HEX_CLOSE_PACKING:
            raise ValueError(
                f"target phi must lie in (0, {HEX_CLOSE_PACKING:.4f}) for a "
                "hexagonal lattice")
        if self.diameter <= 0:
            raise ValueError("diameter must be positive")

    @property
    def n(self) -> int:
        return self.nx * self.ny


@dataclass(frozen=True)
class FireConfig:
    """FIRE relaxation parameters."""

    dt_initial: float = 5e-3
    dt_max: float = 5e-2
    f_inc: float = 1.1
    f_dec: float = 0.5
    alpha_start: float = 0.1
    alpha_shrink: float = 0.99
    n_min: int = 5
    force_tol: float = 1e-10
    max_steps: int = 100000


@dataclass
class FireResult:
    positions: np.ndarray
    iterations: int
    residual: float


def hexagonal_lattice(spec: LatticeSpec):
    """Staggered triangular lattice inside a box sized for the target phi.

    Rows are spaced sqrt(3)/2 of the column spacing apart and alternate a
    quarter-spacing stagger left and right, so all six nearest-neighbor
    distances are equal and the box aspect follows the lattice counts.

    Returns (geometry, positions); positions are the unrelaxed seed.
    """
    a = spec.diameter * np.sqrt(np.pi / (2.0 * np.sqrt(3.0) * spec.phi))
    h = a * np.sqrt(3.0) / 2.0
    box = (spec.nx * a, spec.ny * h)
    cols = np.arange(spec.nx)
    rows = np.arange(spec.ny)
    stagger = 0.25 * np.where(rows % 2 == 0, -1.0, 1.0)
    x = (cols[None, :] + 0.5) * a + stagger[:, None] * a
    y = np.broadcast_to(((rows + 0.5) * h)[:, None], (spec.ny, spec.nx))
    positions = np.stack([x.ravel(), y.ravel()], axis=1)
    geometry = PackingGeometry(box=box, lattice=(spec.nx, spec.ny),
                               equilibrium_positions=positions.copy())
    return geometry, positions


def packing_fraction(geometry: PackingGeometry, diameter: float) -> float:
    """Disk area over box area."""
    n = geometry.n
    return n * np.pi * diameter ** 2 / (4.0 * geometry.box[0] * geometry.box[1])


def _conservative_force(x, params, geometry):
    a = _accel(x, np.zeros_like(x), params.stiffness, params, geometry,
               _NO_DAMPING)
    return a * params.mass


def fire_minimize(positions, params: MaterialParams, geometry: PackingGeometry,
                  config: FireConfig = FireConfig()) -> FireResult:
    """Relax positions to a force balance with the FIRE algorithm.

    Velocity is mixed toward the force direction by a factor alpha; after
    n_min consecutive downhill steps (power P = F.v > 0) the timestep grows
    by f_inc and alpha shrinks, while any uphill step zeroes the velocity,
    cuts the timestep by f_dec, and restores alpha.  Convergence means the
    largest per-particle net force drops below force_tol.
    """
    x = np.array(positions, dtype=np.float64)
    v = np.zeros_like(x)
    dt = config.dt_initial
    alpha = config.alpha_start
    n_pos = 0
    m = params.mass

    force = _conservative_force(x, params, geometry)
    residual = float(np.hypot(force[:, 0], force[:, 1]).max()) if len(x) else 0.0
    if residual < config.force_tol:
        return FireResult(x, 0, residual)

    for iteration in range(1, config.max_steps + 1):
        v += (0.5 * dt / m) * force
        x += dt * v
        force = _conservative_force(x, params, geometry)
        v += (0.5 * dt / m) * force

        power = float(np.sum(force * v))
        if power > 0.0:
            n_pos += 1
            if n_pos > config.n_min:
                dt = min(dt * config.f_inc, config.dt_max)
                alpha *= config.alpha_shrink
            fnorm = float(np.linalg.norm(force))
            vnorm = float(np.linalg.norm(v))
            if fnorm > 0.0:
                v = (1.0 - alpha) * v + (alpha * vnorm / fnorm) * force
        else:
            v[:] = 0.0
            dt *= config.f_dec
            alpha = config.alpha_start
            n_pos = 0

        residual = float(np.hypot(force[:, 0], force[:, 1]).max())
        if residual < config.force_tol:
            return FireResult(x, iteration, residual)

    raise ConvergenceError("FIRE did not reach the force tolerance",
                           residual=residual)


def _max_safe_diameter(x, geometry: PackingGeometry) -> float:
    """Largest diameter with no pair or wall overlap for these positions."""
    n = x.shape[0]
    best = np.inf
    if n > 1:
        i, j = np.triu_indices(n, k=1)
        d = x[i] - x[j]
        best = float(np.hypot(d[:, 0], d[:, 1]).min())
    for axis, (lo, hi) in enumerate((geometry.wall_x, geometry.wall_y)):
        best = min(best, 2.0 * float((x[:, axis] - lo).min()),
                   2.0 * float((hi - x[:, axis]).min()))
    return best


def compression_protocol(positions, params: MaterialParams,
                         geometry: PackingGeometry, target_phi: float,
                         fire_config: FireConfig = FireConfig(),
                         sigma_step: float = 0.01):
    """Grow particles to the target packing fraction, relaxing as they grow.

    The box stays fixed; the diameter that realizes target_phi is computed
    from the box area and approached with multiplicative steps of at most
    sigma_step, relaxing with FIRE after each.  A failed relaxation halves
    the step.  Returns (geometry with relaxed equilibrium positions, params
    at the final diameter, diagnostics dict).
    """
    if not 0 < target_phi < HEX_CLOSE_PACKING:
        raise ValueError("target phi outside the valid hexagonal range")
    x = np.array(positions, dtype=np.float64)
    n = x.shape[0]
    area = geometry.box[0] * geometry.box[1]
    sigma_final = float(np.sqrt(4.0 * target_phi * area / (n * np.pi)))

    sigma = min(sigma_final, (1.0 - 1e-9) * _max_safe_diameter(x, geometry))
    if sigma <= 0:
        raise PackingError("seed configuration has coincident or wall-pinned "
                           "particles")

    result = fire_minimize(x, replace(params, diameter=sigma), geometry,
                           fire_config)
    x = result.positions
    fire_calls = 1
    total_iterations = result.iterations
    step = sigma_step
    while sigma < sigma_final:
        trial_sigma = min(sigma * (1.0 + step), sigma_final)
        try:
            result = fire_minimize(x, replace(params, diameter=trial_sigma),
                                   geometry, fire_config)
        except ConvergenceError as err:
            step *= 0.5
            if step < 1e-6:
                raise PackingError(
                    f"compression stalled at sigma={sigma:.6g} "
                    f"(target {sigma_final:.6g})",
                    residual=err.residual) from err
            continue
        x = result.positions
        sigma = trial_sigma
        fire_calls += 1
        total_iterations += result.iterations

    packed = PackingGeometry(box=geometry.box, lattice=geometry.lattice,
                             equilibrium_positions=x,
                             wall_x=geometry.wall_x, wall_y=geometry.wall_y)
    final_params = replace(params, diameter=sigma_final)
    pair_contacts, wall_contacts = count_contacts(x, final_params, packed)
    info = {
        "fire_calls": fire_calls,
        "fire_iterations": total_iterations,
        "residual": result.residual,
        "phi": packing_fraction(packed, sigma_final),
        "sigma": sigma_final,
        "contacts": pair_contacts,
        "wall_contacts": wall_contacts,
    }
    return packed, final_params, info


def save_packing(path, geometry: PackingGeometry, params: MaterialParams):
    """Write a packing snapshot as self-describing text.

    Floats are serialized with repr so a load/save cycle is bit-exact.
    Walls are assumed to sit on the box edges.
    """
    pos = geometry.equilibrium_positions
    lines = [
        "# granular packing snapshot",
        f"n {pos.shape[0]}",
        f"box {float(geometry.box[0])!r} {float(geometry.box[1])!r}",
        f"lattice {geometry.lattice[0]} {geometry.lattice[1]}",
        f"phi {float(packing_fraction(geometry, params.diameter))!r}",
        f"sigma {float(params.diameter)!r}",
        f"alpha {float(params.alpha)!r}",
        f"mass {float(params.mass)!r}",
        "columns index x y k",
    ]
    for idx in range(pos.shape[0]):
        lines.append(f"{idx} {float(pos[idx, 0])!r} {float(pos[idx, 1])!r} "
                     f"{float(params.stiffness[idx])!r}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_packing(path):
    """Read a snapshot written by save_packing.

    Returns (geometry, params).
    """
    header: dict[str, list[str]] = {}
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            tokens = line.split()
            if tokens[0].lstrip("-").isdigit():
                rows.append(tokens)
            else:
                header[tokens[0]] = tokens[1:]
    n = int(header["n"][0])
    if len(rows) != n:
        raise ValueError(f"snapshot declares {n} particles, found {len(rows)}")
    pos = np.empty((n, 2))
    k = np.empty(n)
    for tokens in rows:
        idx = int(tokens[0])
        pos[idx] = (float(tokens[1]), float(tokens[2]))
        k[idx] = float(tokens[3])
    geometry = PackingGeometry(
        box=(float(header["box"][0]), float(header["box"][1])),
        lattice=(int(header["lattice"][0]), int(header["lattice"][1])),
        equilibrium_positions=pos,
    )
    params = MaterialParams(stiffness=k, mass=float(header["mass"][0]),
                            diameter=float(header["sigma"][0]),
                            alpha=float(header["alpha"][0]))
    return geometry, params
