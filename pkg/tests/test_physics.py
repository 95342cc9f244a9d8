"""Contact-mechanics unit tests.

Frozen numeric anchors below were computed by hand from the closed-form
potential and force expressions; finite-difference oracles re-derive forces
from the potential at run time.
"""

import numpy as np
import pytest

from granwave.errors import SimulationError
from granwave.physics import (
    DampingParams,
    MaterialParams,
    PackingGeometry,
    ParticleState,
    _accel,
    _accel_vjp,
    contact_count,
    contact_pairs,
    count_contacts,
    effective_stiffness,
    pair_force,
    pair_potential,
    total_accel,
    total_energy,
    wall_force,
)

from conftest import make_system, random_overlapping_config


def fd_force_from_potential(pos, params, geometry, h):
    """Independent oracle: F = -dPE/dx by central differences."""
    n = pos.shape[0]
    out = np.zeros((n, 2))
    for p in range(n):
        for a in range(2):
            for sgn in (1.0, -1.0):
                shifted = pos.copy()
                shifted[p, a] += sgn * h
                state = ParticleState(shifted, np.zeros_like(shifted))
                _, pe = total_energy(state, params, geometry)
                out[p, a] -= sgn * pe / (2.0 * h)
    return out


class TestEffectiveStiffness:
    def test_equal_branch_is_exact(self):
        assert effective_stiffness(3.7, 3.7) == 3.7

    def test_harmonic_branch_value(self):
        assert effective_stiffness(2.0, 6.0) == pytest.approx(1.5, rel=1e-15)

    def test_symmetry(self, rng):
        a = rng.uniform(1, 10, 50)
        b = rng.uniform(1, 10, 50)
        np.testing.assert_array_equal(effective_stiffness(a, b),
                                      effective_stiffness(b, a))

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            effective_stiffness(0.0, 1.0)
        with pytest.raises(ValueError):
            effective_stiffness(2.0, -1.0)


class TestPairPotential:
    def test_frozen_value(self):
        # (1/2.5) * 0.1^2.5 computed by hand
        assert pair_potential(0.09, 0.1, 1.0, 2.5) == pytest.approx(
            0.0012649110640673518, rel=1e-14)

    def test_zero_at_contact_bitwise(self):
        assert pair_potential(0.1, 0.1, 1.0, 2.5) == 0.0
        assert pair_potential(0.15, 0.1, 1.0, 2.5) == 0.0

    def test_force_is_minus_gradient(self):
        h = 1e-8
        for r in (0.05, 0.08, 0.0999):
            num = -(pair_potential(r + h, 0.1, 2.0) -
                    pair_potential(r - h, 0.1, 2.0)) / (2 * h)
            f = pair_force(np.array([r, 0.0]), np.zeros(2), 0.1, 2.0)
            assert f[0] == pytest.approx(num, rel=1e-6)


class TestPairForce:
    def test_frozen_magnitude(self):
        # eps=1.5 (harmonic mean of 2 and 6), overlap 10%: 15 * 0.1^1.5
        f = pair_force(np.zeros(2), np.array([0.09, 0.0]), 0.1,
                       effective_stiffness(2.0, 6.0))
        assert f[0] == pytest.approx(-0.4743416490252569, rel=1e-14)
        assert f[1] == 0.0

    def test_one_sided_bitwise_zero(self):
        f = pair_force(np.zeros(2), np.array([0.1, 0.0]), 0.1, 1.0)
        assert f[0] == 0.0 and f[1] == 0.0
        f = pair_force(np.zeros(2), np.array([0.3, 0.4]), 0.1, 1.0)
        assert not f.any()

    def test_antisymmetric_bitwise(self, rng):
        for _ in range(20):
            ri = rng.uniform(0, 0.1, 2)
            rj = ri + rng.uniform(-0.08, 0.08, 2)
            fij = pair_force(ri, rj, 0.1, 3.0)
            fji = pair_force(rj, ri, 0.1, 3.0)
            np.testing.assert_array_equal(fij, -fji)

    def test_coincident_raises(self):
        with pytest.raises(SimulationError):
            pair_force(np.ones(2), np.ones(2), 0.1, 1.0)


class TestWallForce:
    def test_frozen_value(self):
        # g=0.04, s=0.05: (3/0.05) * 0.2^1.5 pointing inward from left wall
        geo = PackingGeometry(box=(1.0, 1.0), lattice=(0, 0),
                              equilibrium_positions=np.zeros((1, 2)))
        f = wall_force(np.array([0.04, 0.5]), geo, 0.1, 3.0)
        assert f[0] == pytest.approx(5.366563145999495, rel=1e-14)
        assert f[1] == 0.0

    def test_support_is_half_diameter(self):
        geo = PackingGeometry(box=(1.0, 1.0), lattice=(0, 0),
                              equilibrium_positions=np.zeros((1, 2)))
        assert not wall_force(np.array([0.05, 0.5]), geo, 0.1, 1.0).any()
        assert wall_force(np.array([0.0499, 0.5]), geo, 0.1, 1.0)[0] > 0

    def test_opposing_walls_push_inward(self):
        geo = PackingGeometry(box=(0.5, 0.5), lattice=(0, 0),
                              equilibrium_positions=np.zeros((1, 2)))
        left = wall_force(np.array([0.01, 0.25]), geo, 0.1, 1.0)
        right = wall_force(np.array([0.49, 0.25]), geo, 0.1, 1.0)
        assert left[0] > 0 and right[0] < 0


class TestTotalAccel:
    def test_matches_potential_gradient(self, rng):
        for trial in range(5):
            n = int(rng.integers(4, 12))
            pos, box = random_overlapping_config(rng, n)
            k = rng.uniform(1, 10, n)
            params, geo, damping = make_system(pos, box, k)
            state = ParticleState(pos, np.zeros_like(pos))
            acc = total_accel(state, params, geo, damping)
            oracle = fd_force_from_potential(pos, params, geo, h=1e-8)
            scale = np.abs(oracle).max()
            assert scale > 0
            np.testing.assert_allclose(acc * params.mass, oracle,
                                       rtol=1e-5, atol=1e-5 * scale)

    def test_alpha_two_and_three(self, rng):
        pos, box = random_overlapping_config(rng, 6)
        k = rng.uniform(1, 10, 6)
        for alpha in (2.0, 3.0):
            params, geo, damping = make_system(pos, box, k, alpha=alpha)
            state = ParticleState(pos, np.zeros_like(pos))
            acc = total_accel(state, params, geo, damping)
            oracle = fd_force_from_potential(pos, params, geo, h=1e-8)
            np.testing.assert_allclose(acc, oracle, rtol=1e-5,
                                       atol=1e-5 * np.abs(oracle).max())

    def test_newton_third_law_total(self, rng):
        pos, box = random_overlapping_config(rng, 10)
        k = rng.uniform(1, 10, 10)
        # particles centered in a huge box so walls never engage
        pos = pos + 50.0
        params, geo, damping = make_system(pos, (100.0, 100.0), k)
        state = ParticleState(pos, np.zeros_like(pos))
        acc = total_accel(state, params, geo, damping)
        total = acc.sum(axis=0)
        assert np.abs(total).max() < 1e-12 * np.abs(acc).max()

    def test_translation_invariance(self, rng):
        pos, box = random_overlapping_config(rng, 8, min_sep=0.5)
        k = rng.uniform(1, 10, 8)
        params, geo, damping = make_system(pos, (100.0, 100.0), k)
        # power-of-two shifts keep coordinates exactly representable; the
        # residual difference is subtraction cancellation inside r_ij
        a1 = total_accel(ParticleState(pos + 4.0, np.zeros_like(pos)),
                         params, geo, damping)
        a2 = total_accel(ParticleState(pos + 8.0, np.zeros_like(pos)),
                         params, geo, damping)
        np.testing.assert_allclose(a1, a2, rtol=1e-9,
                                   atol=1e-11 * np.abs(a1).max())

    def test_permutation_equivariance(self, rng):
        pos, box = random_overlapping_config(rng, 8)
        k = rng.uniform(1, 10, 8)
        perm = rng.permutation(8)
        params, geo, damping = make_system(pos, box, k)
        params_p, geo_p, _ = make_system(pos[perm], box, k[perm])
        a = total_accel(ParticleState(pos, np.zeros_like(pos)),
                        params, geo, damping)
        ap = total_accel(ParticleState(pos[perm], np.zeros_like(pos)),
                         params_p, geo_p, damping)
        np.testing.assert_allclose(ap, a[perm], rtol=1e-13, atol=1e-15)

    def test_damping_terms(self, rng):
        pos, box = random_overlapping_config(rng, 6)
        k = rng.uniform(1, 10, 6)
        v = rng.normal(size=(6, 2))
        params, geo, _ = make_system(pos, box, k)
        quiet = total_accel(ParticleState(pos, v), params, geo,
                            DampingParams(0.0, 0.0, 0.0))
        damped = total_accel(ParticleState(pos, v), params, geo,
                             DampingParams(background=2.0))
        np.testing.assert_allclose(damped, quiet - 2.0 * v / params.mass,
                                   rtol=1e-12, atol=1e-14)

    def test_external_force_passthrough(self, rng):
        pos, box = random_overlapping_config(rng, 5)
        k = rng.uniform(1, 10, 5)
        ext = rng.normal(size=(5, 2))
        params, geo, damping = make_system(pos, box, k, mass=2.0)
        base = total_accel(ParticleState(pos, np.zeros((5, 2))), params, geo, damping)
        with_ext = total_accel(ParticleState(pos, np.zeros((5, 2))), params, geo,
                               damping, external=ext)
        np.testing.assert_allclose(with_ext, base + ext / 2.0, rtol=1e-13)

    def test_coincident_centers_raise(self):
        pos = np.array([[0.1, 0.1], [0.1, 0.1], [0.3, 0.3]])
        params, geo, damping = make_system(pos, (1.0, 1.0), [1.0, 2.0, 3.0])
        with pytest.raises(SimulationError):
            total_accel(ParticleState(pos, np.zeros_like(pos)), params, geo, damping)


class TestNeighborMethods:
    def test_cell_list_agrees_with_all_pairs(self, rng):
        for n in (5, 30, 64):
            pos, box = random_overlapping_config(rng, n)
            k = rng.uniform(1, 10, n)
            params, geo, damping = make_system(pos, box, k)
            state = ParticleState(pos, rng.normal(size=(n, 2)))
            a_dense = total_accel(state, params, geo, damping, method="all_pairs")
            a_cells = total_accel(state, params, geo, damping, method="cell_list")
            np.testing.assert_allclose(a_cells, a_dense, rtol=1e-12,
                                       atol=1e-12 * max(np.abs(a_dense).max(), 1.0))

    def test_cell_list_pairs_cover_contacts(self, rng):
        pos, box = random_overlapping_config(rng, 40)
        i, j = contact_pairs(pos, 0.1, "cell_list")
        got = set(zip(i.tolist(), j.tolist()))
        ai, aj = contact_pairs(pos, 0.1, "all_pairs")
        d = pos[ai] - pos[aj]
        r = np.hypot(d[:, 0], d[:, 1])
        for a, b in zip(ai[r < 0.1].tolist(), aj[r < 0.1].tolist()):
            assert (a, b) in got

    def test_unknown_method_rejected(self, rng):
        pos, _ = random_overlapping_config(rng, 4)
        with pytest.raises(ValueError):
            contact_pairs(pos, 0.1, "voronoi")


class TestTotalEnergy:
    def test_frozen_pair_energy(self):
        pos = np.array([[0.3, 0.5], [0.39, 0.5]])
        params, geo, _ = make_system(pos, (10.0, 1.0), [2.0, 6.0])
        geo.equilibrium_positions = pos
        ke, pe = total_energy(ParticleState(pos, np.zeros_like(pos)), params, geo)
        assert ke == 0.0
        # (1.5/2.5) * 0.1^2.5
        assert pe == pytest.approx(0.0018973665961010276, rel=1e-14)

    def test_kinetic_term(self):
        pos = np.array([[1.0, 1.0], [3.0, 3.0]])
        params, geo, _ = make_system(pos, (10.0, 10.0), [1.0, 1.0], mass=2.0)
        v = np.array([[1.0, 0.0], [0.0, 2.0]])
        ke, pe = total_energy(ParticleState(pos, v), params, geo)
        assert ke == pytest.approx(0.5 * 2.0 * 5.0, rel=1e-15)
        assert pe == 0.0


class TestAccelVJP:
    def _fd_dot(self, fn, x0, direction, h):
        return (fn(x0 + h * direction) - fn(x0 - h * direction)) / (2 * h)

    def test_position_cotangent(self, rng):
        n = 8
        pos, box = random_overlapping_config(rng, n)
        k = rng.uniform(1, 10, n)
        v = rng.normal(size=(n, 2)) * 0.01
        params, geo, damping = make_system(pos, box, k, background=1.0)
        w = rng.normal(size=(n, 2))
        xb, vb, kb = _accel_vjp(pos, v, k, params, geo, damping, w)
        for _ in range(5):
            direction = rng.normal(size=(n, 2))
            num = self._fd_dot(
                lambda x: float(np.sum(w * _accel(x, v, k, params, geo, damping))),
                pos, direction, h=1e-8)
            assert float(np.sum(xb * direction)) == pytest.approx(num, rel=1e-5)

    def test_velocity_cotangent(self, rng):
        n = 6
        pos, box = random_overlapping_config(rng, n)
        k = rng.uniform(1, 10, n)
        v = rng.normal(size=(n, 2)) * 0.01
        params, geo, damping = make_system(pos, box, k, background=1.5,
                                           bpp=0.3, bpw=0.2)
        w = rng.normal(size=(n, 2))
        _, vb, _ = _accel_vjp(pos, v, k, params, geo, damping, w)
        for _ in range(3):
            direction = rng.normal(size=(n, 2))
            num = self._fd_dot(
                lambda vv: float(np.sum(w * _accel(pos, vv, k, params, geo, damping))),
                v, direction, h=1e-7)
            assert float(np.sum(vb * direction)) == pytest.approx(num, rel=1e-7)

    def test_stiffness_cotangent(self, rng):
        n = 8
        pos, box = random_overlapping_config(rng, n)
        # distinct stiffnesses keep the FD probe on the harmonic branch
        k = rng.uniform(1, 10, n)
        v = np.zeros((n, 2))
        params, geo, damping = make_system(pos, box, k)
        w = rng.normal(size=(n, 2))
        _, _, kb = _accel_vjp(pos, v, k, params, geo, damping, w)
        for _ in range(5):
            direction = rng.normal(size=n)
            num = self._fd_dot(
                lambda kk: float(np.sum(w * _accel(pos, v, kk, params, geo, damping))),
                k, direction, h=1e-7)
            assert float(np.sum(kb * direction)) == pytest.approx(num, rel=1e-5)

    def test_wall_stiffness_gradient(self, rng):
        # single particle touching only a wall: k gradient comes from the wall
        pos = np.array([[0.03, 0.5]])
        k = np.array([4.0])
        params, geo, damping = make_system(pos, (1.0, 1.0), k)
        w = np.array([[1.0, 0.0]])
        _, _, kb = _accel_vjp(pos, np.zeros((1, 2)), k, params, geo, damping, w)
        h = 1e-7
        num = (float(_accel(pos, np.zeros((1, 2)), k + h, params, geo, damping)[0, 0])
               - float(_accel(pos, np.zeros((1, 2)), k - h, params, geo, damping)[0, 0])
               ) / (2 * h)
        assert kb[0] == pytest.approx(num, rel=1e-7)


class TestContactCounts:
    def test_triplet(self):
        pos = np.array([[0.0, 0.0], [0.09, 0.0], [0.5, 0.5]])
        counts = contact_count(pos, 0.1)
        assert counts.tolist() == [1, 1, 0]

    def test_wall_counts(self):
        geo = PackingGeometry(box=(1.0, 1.0), lattice=(0, 0),
                              equilibrium_positions=np.zeros((2, 2)))
        pos = np.array([[0.03, 0.03], [0.5, 0.5]])
        from granwave.physics import wall_contact_count
        counts = wall_contact_count(pos, 0.1, geo)
        assert counts.tolist() == [2, 0]

    def test_totals(self):
        # two overlapping pairs in a chain; leftmost particle engages a wall
        geo = PackingGeometry(box=(1.0, 1.0), lattice=(0, 0),
                              equilibrium_positions=np.zeros((3, 2)))
        pos = np.array([[0.03, 0.5], [0.11, 0.5], [0.19, 0.5]])
        params = MaterialParams(stiffness=np.ones(3), diameter=0.1)
        assert count_contacts(pos, params, geo) == (2, 1)


class TestValidation:
    def test_material_params_rejects_bad_values(self):
        with pytest.raises(ValueError):
            MaterialParams(stiffness=np.array([1.0, -2.0]))
        with pytest.raises(ValueError):
            MaterialParams(stiffness=np.array([1.0]), mass=0.0)
        with pytest.raises(ValueError):
            MaterialParams(stiffness=np.array([1.0]), alpha=1.0)

    def test_damping_rejects_negative(self):
        with pytest.raises(ValueError):
            DampingParams(background=-0.1)
