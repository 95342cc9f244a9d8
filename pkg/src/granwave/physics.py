"""Contact mechanics for confined 2D granular crystals.

Particles are monodisperse disks interacting through a one-sided power-law
overlap potential and confined by four flat repulsive walls.  Everything in
this module is a pure function of explicit state; nothing mutates its inputs.

Conventions used throughout:
  * positions and velocities are float64 arrays of shape (N, 2),
  * per-particle stiffness is a float64 array of shape (N,),
  * a "pair list" is a tuple (i, j) of index arrays with i < j elementwise,
    ordered lexicographically, so reductions are order-deterministic.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import SimulationError


@dataclass(frozen=True)
class MaterialParams:
    """Shared particle material constants plus per-particle stiffness."""

    stiffness: np.ndarray
    mass: float = 1.0
    diameter: float = 0.1
    alpha: float = 2.5

    def __post_init__(self):
        k = np.asarray(self.stiffness, dtype=np.float64)
        if k.ndim != 1 or k.size == 0:
            raise ValueError("stiffness must be a non-empty 1-d array")
        if not np.all(k > 0):
            raise ValueError("stiffness values must be positive")
        if self.mass <= 0 or self.diameter <= 0:
            raise ValueError("mass and diameter must be positive")
        if self.alpha <= 1:
            raise ValueError("potential exponent alpha must exceed 1")
        object.__setattr__(self, "stiffness", k)

    @property
    def n(self) -> int:
        return self.stiffness.shape[0]


@dataclass(frozen=True)
class DampingParams:
    """Dissipation coefficients: background drag plus contact dampers."""

    background: float = 1.0
    particle_particle: float = 0.0
    particle_wall: float = 0.0

    def __post_init__(self):
        if min(self.background, self.particle_particle, self.particle_wall) < 0:
            raise ValueError("damping coefficients must be non-negative")


@dataclass
class PackingGeometry:
    """Confining box, wall positions, and the relaxed reference positions.

    Walls default to the box edges; they are stored per side so tests can
    move a single wall.  ``equilibrium_positions`` holds the configuration
    the dynamics is measured against (displacements are relative to it).
    """

    box: tuple[float, float]
    lattice: tuple[int, int]
    equilibrium_positions: np.ndarray
    wall_x: tuple[float, float] | None = None
    wall_y: tuple[float, float] | None = None

    def __post_init__(self):
        if self.box[0] <= 0 or self.box[1] <= 0:
            raise ValueError("box lengths must be positive")
        if self.wall_x is None:
            self.wall_x = (0.0, float(self.box[0]))
        if self.wall_y is None:
            self.wall_y = (0.0, float(self.box[1]))
        self.equilibrium_positions = np.asarray(
            self.equilibrium_positions, dtype=np.float64
        )

    @property
    def n(self) -> int:
        return self.equilibrium_positions.shape[0]


@dataclass
class ParticleState:
    """Instantaneous positions and velocities."""

    positions: np.ndarray
    velocities: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64)
        self.velocities = np.asarray(self.velocities, dtype=np.float64)
        if self.positions.shape != self.velocities.shape:
            raise ValueError("positions and velocities must have equal shapes")


def effective_stiffness(k_i, k_j):
    """Contact stiffness for a pair: k when equal, else the harmonic mean form.

    Equal stiffnesses short-circuit to the shared value; unequal ones combine
    as k_i k_j / (k_i + k_j).  Accepts scalars or arrays.
    """
    ki = np.asarray(k_i, dtype=np.float64)
    kj = np.asarray(k_j, dtype=np.float64)
    if np.any(ki <= 0) or np.any(kj <= 0):
        raise ValueError("stiffness must be positive")
    out = np.where(ki == kj, ki, ki * kj / (ki + kj))
    if np.isscalar(k_i) and np.isscalar(k_j):
        return float(out)
    return out


def pair_potential(r, sigma, eps, alpha=2.5):
    """One-sided overlap potential (eps/alpha)(1 - r/sigma)^alpha for r < sigma.

    Returns exactly 0.0 at and beyond contact (r >= sigma).
    """
    r = np.asarray(r, dtype=np.float64)
    u = 1.0 - r / sigma
    act = u > 0
    v = (eps / alpha) * np.where(act, u, 0.0) ** alpha
    if np.ndim(v) == 0:
        return float(v)
    return v


def pair_force(r_i, r_j, sigma, eps, alpha=2.5):
    """Force on particle i due to particle j, as a length-2 vector.

    Repulsive with magnitude (eps/sigma)(1 - r/sigma)^(alpha-1) inside
    contact, zero outside.  Coincident centers have no defined direction.
    """
    d = np.asarray(r_i, dtype=np.float64) - np.asarray(r_j, dtype=np.float64)
    r = float(np.hypot(d[0], d[1]))
    if r == 0.0:
        raise SimulationError("coincident particle centers")
    u = 1.0 - r / sigma
    if u <= 0:
        return np.zeros(2)
    return (eps / sigma) * u ** (alpha - 1.0) * (d / r)


def wall_force(r_i, geometry: PackingGeometry, sigma_i, eps, alpha=2.5):
    """Net force on a particle from all four walls.

    A wall engages when the center-to-wall distance g drops below the
    particle radius s = sigma_i/2, pushing inward with magnitude
    (eps/s)(1 - g/s)^(alpha-1).
    """
    r_i = np.asarray(r_i, dtype=np.float64)
    s = sigma_i / 2.0
    f = np.zeros(2)
    for axis, (lo, hi) in enumerate((geometry.wall_x, geometry.wall_y)):
        for g, direction in ((r_i[axis] - lo, 1.0), (hi - r_i[axis], -1.0)):
            u = 1.0 - g / s
            if u > 0:
                f[axis] += direction * (eps / s) * u ** (alpha - 1.0)
    return f


@lru_cache(maxsize=8)
def _all_pairs(n: int):
    i, j = np.triu_indices(n, k=1)
    return i.astype(np.intp), j.astype(np.intp)


def _cell_list_pairs(positions: np.ndarray, cutoff: float):
    """Candidate contact pairs from a uniform grid of cells >= cutoff wide.

    Output is sorted lexicographically so downstream reductions see the same
    order as the all-pairs path (minus pairs that cannot touch).
    """
    n = positions.shape[0]
    lo = positions.min(axis=0)
    span = np.maximum(positions.max(axis=0) - lo, cutoff)
    ncell = np.maximum((span / cutoff).astype(int), 1)
    width = span / ncell
    cell = np.minimum((positions - lo) // width, ncell - 1).astype(int)
    cell = np.maximum(cell, 0)
    cid = cell[:, 0] * ncell[1] + cell[:, 1]
    buckets: dict[int, list[int]] = {}
    for p in range(n):
        buckets.setdefault(int(cid[p]), []).append(p)
    out_i: list[int] = []
    out_j: list[int] = []
    for (cx, cy), members in (
        ((c // ncell[1], c % ncell[1]), m) for c, m in buckets.items()
    ):
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                nx, ny = cx + dx, cy + dy
                if not (0 <= nx < ncell[0] and 0 <= ny < ncell[1]):
                    continue
                other = buckets.get(int(nx * ncell[1] + ny))
                if other is None:
                    continue
                for a in members:
                    for b in other:
                        if a < b:
                            out_i.append(a)
                            out_j.append(b)
    if not out_i:
        return np.zeros(0, dtype=np.intp), np.zeros(0, dtype=np.intp)
    ii = np.asarray(out_i, dtype=np.intp)
    jj = np.asarray(out_j, dtype=np.intp)
    order = np.lexsort((jj, ii))
    return ii[order], jj[order]


def contact_pairs(positions: np.ndarray, diameter: float, method: str = "all_pairs"):
    """Pair list of candidate contacts; method selects enumeration strategy."""
    n = positions.shape[0]
    if method == "all_pairs":
        return _all_pairs(n)
    if method == "cell_list":
        return _cell_list_pairs(positions, diameter)
    raise ValueError(f"unknown neighbor method: {method!r}")


def count_contacts(positions, params: "MaterialParams",
                   geometry: "PackingGeometry"):
    """Total engaged contact counts at a configuration.

    Returns (pair_contacts, wall_contacts): particle pairs overlapping
    (r < diameter) and particle-wall engagements (gap < diameter / 2).
    """
    x = np.asarray(positions, dtype=np.float64)
    pair_contacts = int(contact_count(x, params.diameter).sum()) // 2
    wall_contacts = int(
        wall_contact_count(x, params.diameter, geometry).sum())
    return pair_contacts, wall_contacts


def _pair_terms(x, k, sigma, alpha, pairs):
    """Per-pair geometry and stiffness terms shared by forces and their VJP.

    Returns (d, r, u, act, eps, c) where c = eps u^(alpha-1) / (sigma r)
    scales the center-to-center vector d into the force on i.
    """
    i, j = pairs
    d = x[i] - x[j]
    r = np.hypot(d[:, 0], d[:, 1])
    if r.size and r.min() == 0.0:
        raise SimulationError("coincident particle centers")
    u = 1.0 - r / sigma
    act = u > 0
    u_s = np.where(act, u, 0.0)
    eps = effective_stiffness(k[i], k[j])
    c = eps * u_s ** (alpha - 1.0) / (sigma * r)
    c = np.where(act, c, 0.0)
    return d, r, u_s, act, eps, c


def _wall_terms(x, k, sigma, alpha, geometry):
    """Per-wall gap terms.  Yields (axis, direction, gap array, act, fmag)."""
    s = sigma / 2.0
    for axis, (lo, hi) in enumerate((geometry.wall_x, geometry.wall_y)):
        for g, direction in ((x[:, axis] - lo, 1.0), (hi - x[:, axis], -1.0)):
            uw = 1.0 - g / s
            act = uw > 0
            uw_s = np.where(act, uw, 0.0)
            fmag = (k / s) * uw_s ** (alpha - 1.0)
            yield axis, direction, uw_s, act, fmag


def _accel(x, v, k, params: MaterialParams, geometry: PackingGeometry,
           damping: DampingParams, external=None, method="all_pairs"):
    """Accelerations from contacts, walls, dissipation, and external forces."""
    sigma, alpha, mass = params.diameter, params.alpha, params.mass
    n = x.shape[0]
    pairs = contact_pairs(x, sigma, method)
    i, j = pairs
    force = np.zeros((n, 2))
    if i.size:
        d, r, u_s, act, eps, c = _pair_terms(x, k, sigma, alpha, pairs)
        f = c[:, None] * d
        np.add.at(force, i, f)
        np.add.at(force, j, -f)
    for axis, direction, _uw, _act, fmag in _wall_terms(x, k, sigma, alpha, geometry):
        force[:, axis] += direction * fmag
    if damping.background != 0.0:
        force -= damping.background * v
    if damping.particle_particle != 0.0 and i.size:
        d, r, u_s, act, eps, c = _pair_terms(x, k, sigma, alpha, pairs)
        vij = (v[i] - v[j]) * act[:, None]
        np.add.at(force, i, -damping.particle_particle * vij)
        np.add.at(force, j, damping.particle_particle * vij)
    if damping.particle_wall != 0.0:
        nw = np.zeros(n)
        for _axis, _dir, _uw, act, _f in _wall_terms(x, k, sigma, alpha, geometry):
            nw += act
        force -= damping.particle_wall * nw[:, None] * v
    if external is not None:
        force = force + external
    return force / mass


def _accel_vjp(x, v, k, params: MaterialParams, geometry: PackingGeometry,
               damping: DampingParams, w, method="all_pairs"):
    """Vector-Jacobian product of _accel against cotangent w of shape (N, 2).

    Returns (x_bar, v_bar, k_bar), the cotangents pulled back onto positions,
    velocities, and stiffness.  Heaviside contact indicators take subgradient
    zero, so the contact set is treated as locally constant.
    """
    sigma, alpha, mass = params.diameter, params.alpha, params.mass
    if alpha < 2:
        raise ValueError("accel VJP requires alpha >= 2 for bounded derivatives")
    n = x.shape[0]
    wf = w / mass
    x_bar = np.zeros((n, 2))
    v_bar = np.zeros((n, 2))
    k_bar = np.zeros(n)

    pairs = contact_pairs(x, sigma, method)
    i, j = pairs
    if i.size:
        d, r, u_s, act, eps, c = _pair_terms(x, k, sigma, alpha, pairs)
        wij = wf[i] - wf[j]
        s_wd = np.einsum("pa,pa->p", wij, d)
        cp = np.where(
            act,
            (eps / sigma)
            * (-(alpha - 1.0) * u_s ** (alpha - 2.0) / (sigma * r)
               - u_s ** (alpha - 1.0) / r ** 2),
            0.0,
        )
        pairvec = (cp * s_wd / r)[:, None] * d + c[:, None] * wij
        np.add.at(x_bar, i, pairvec)
        np.add.at(x_bar, j, -pairvec)
        psi = np.where(act, u_s ** (alpha - 1.0) / (sigma * r), 0.0)
        ksum = k[i] + k[j]
        np.add.at(k_bar, i, psi * s_wd * (k[j] / ksum) ** 2)
        np.add.at(k_bar, j, psi * s_wd * (k[i] / ksum) ** 2)

    s = sigma / 2.0
    for axis, direction, uw_s, act, fmag in _wall_terms(x, k, sigma, alpha, geometry):
        dfdg = np.where(act, -(k / s ** 2) * (alpha - 1.0) * uw_s ** (alpha - 2.0), 0.0)
        x_bar[:, axis] += wf[:, axis] * dfdg
        k_bar += wf[:, axis] * direction * np.where(act, uw_s ** (alpha - 1.0) / s, 0.0)

    if damping.background != 0.0:
        v_bar -= damping.background * wf
    if damping.particle_particle != 0.0 and i.size:
        _d, _r, _u, act, _e, _c = _pair_terms(x, k, sigma, alpha, pairs)
        wij = (wf[i] - wf[j]) * act[:, None]
        np.add.at(v_bar, i, -damping.particle_particle * wij)
        np.add.at(v_bar, j, damping.particle_particle * wij)
    if damping.particle_wall != 0.0:
        nw = np.zeros(n)
        for _axis, _dir, _uw, act, _f in _wall_terms(x, k, sigma, alpha, geometry):
            nw += act
        v_bar -= damping.particle_wall * nw[:, None] * wf
    return x_bar, v_bar, k_bar


def total_accel(state: ParticleState, params: MaterialParams,
                geometry: PackingGeometry, damping: DampingParams,
                external=None, method: str = "all_pairs"):
    """Accelerations for every particle in the given state."""
    return _accel(state.positions, state.velocities, params.stiffness,
                  params, geometry, damping, external, method)


def total_energy(state: ParticleState, params: MaterialParams,
                 geometry: PackingGeometry):
    """(kinetic, potential) energy of the conservative part of the system.

    The potential sums pair overlaps and wall overlaps; wall contacts use the
    particle's own stiffness, matching the wall force.
    """
    x = state.positions
    k = params.stiffness
    sigma, alpha = params.diameter, params.alpha
    ke = 0.5 * params.mass * float(np.sum(state.velocities ** 2))
    pairs = contact_pairs(x, sigma, "all_pairs")
    i, j = pairs
    pe = 0.0
    if i.size:
        d = x[i] - x[j]
        r = np.hypot(d[:, 0], d[:, 1])
        eps = effective_stiffness(k[i], k[j])
        pe += float(np.sum(pair_potential(r, sigma, eps, alpha)))
    s = sigma / 2.0
    for axis, (lo, hi) in enumerate((geometry.wall_x, geometry.wall_y)):
        for g in (x[:, axis] - lo, hi - x[:, axis]):
            uw = 1.0 - g / s
            act = uw > 0
            pe += float(np.sum((k / alpha) * np.where(act, uw, 0.0) ** alpha))
    return ke, pe


def contact_count(positions: np.ndarray, diameter: float):
    """Number of touching neighbors per particle (strict overlap only)."""
    n = positions.shape[0]
    i, j = _all_pairs(n)
    counts = np.zeros(n, dtype=int)
    if i.size:
        d = positions[i] - positions[j]
        r = np.hypot(d[:, 0], d[:, 1])
        act = r < diameter
        np.add.at(counts, i[act], 1)
        np.add.at(counts, j[act], 1)
    return counts


def wall_contact_count(positions: np.ndarray, diameter: float,
                       geometry: PackingGeometry):
    """Number of engaged walls per particle."""
    s = diameter / 2.0
    n = positions.shape[0]
    counts = np.zeros(n, dtype=int)
    for axis, (lo, hi) in enumerate((geometry.wall_x, geometry.wall_y)):
        counts += (positions[:, axis] - lo) < s
        counts += (hi - positions[:, axis]) < s
    return counts
