from functools import lru_cache

import numpy as np
import pytest

from granwave.packing import FireConfig, LatticeSpec, compression_protocol, hexagonal_lattice
from granwave.physics import DampingParams, MaterialParams, PackingGeometry


def random_overlapping_config(rng, n, diameter=0.1, min_sep=0.35):
    """Random particle positions in a snug box so several pairs overlap.

    Particles are inserted one at a time, resampling any candidate closer
    than min_sep * diameter to an accepted center, which keeps forces finite
    while guaranteeing genuine contacts.
    """
    side = diameter * np.sqrt(n) * 0.95
    box = (side, side)
    margin = 0.02 * diameter
    pos = np.empty((n, 2))
    placed = 0
    while placed < n:
        cand = rng.uniform(margin, side - margin, size=2)
        if placed:
            d = pos[:placed] - cand
            if np.hypot(d[:, 0], d[:, 1]).min() <= min_sep * diameter:
                continue
        pos[placed] = cand
        placed += 1
    return pos, box


def make_system(pos, box, k, diameter=0.1, alpha=2.5, mass=1.0,
                background=0.0, bpp=0.0, bpw=0.0):
    params = MaterialParams(stiffness=np.asarray(k, dtype=float),
                            mass=mass, diameter=diameter, alpha=alpha)
    geometry = PackingGeometry(box=box, lattice=(0, 0),
                               equilibrium_positions=np.asarray(pos, dtype=float))
    damping = DampingParams(background=background, particle_particle=bpp,
                            particle_wall=bpw)
    return params, geometry, damping


@lru_cache(maxsize=8)
def jammed_packing(nx, ny, phi, force_tol=1e-10):
    """Compressed hexagonal packing with homogeneous unit stiffness (cached)."""
    spec = LatticeSpec(nx=nx, ny=ny, phi=phi)
    geometry, seed = hexagonal_lattice(spec)
    params = MaterialParams(stiffness=np.ones(spec.n), diameter=spec.diameter)
    fire = FireConfig(force_tol=force_tol)
    packed, packed_params, info = compression_protocol(
        seed, params, geometry, phi, fire)
    return packed, packed_params, info


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
