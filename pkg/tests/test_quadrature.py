import time

import numpy as np
import pytest

from kinetic_gap.quadrature import (CollisionSampler, collision_pair,
                                    collision_sampler, gauss_legendre,
                                    hermite_rule_1d, hermite_rule_3d,
                                    post_collision, sphere_rule)

from oracles import gaussian_moment_1d


class TestHermiteRules:
    def test_single_node_is_mean(self):
        r = hermite_rule_1d(1)
        assert r.nodes[0] == 0.0 and r.weights[0] == 1.0

    def test_two_nodes_solve_moment_equations(self):
        # m0 = 1, m1 = 0, m2 = 1, m3 = 0 forces nodes +-1, weights 1/2
        r = hermite_rule_1d(2)
        assert np.allclose(r.nodes, [-1.0, 1.0], atol=1e-14)
        assert np.allclose(r.weights, [0.5, 0.5], atol=1e-14)

    def test_fourth_moment(self):
        r = hermite_rule_1d(8)
        assert abs(r.nodes ** 4 @ r.weights - 3.0) <= 1e-12

    @pytest.mark.parametrize("q", [3, 5, 10, 20])
    def test_exactness_up_to_degree(self, q):
        r = hermite_rule_1d(q)
        assert abs(r.weights.sum() - 1.0) <= 1e-13
        for k in range(2 * q):
            val = r.nodes ** k @ r.weights
            # odd moments cancel terms of the size of the next even moment
            scale = max(1.0, gaussian_moment_1d(k + (k % 2)))
            assert abs(val - gaussian_moment_1d(k)) <= 1e-12 * scale

    @pytest.mark.parametrize("q", [0, 65, -3])
    def test_range_rejected(self, q):
        with pytest.raises(ValueError):
            hermite_rule_1d(q)

    def test_tensor_rule(self):
        r = hermite_rule_3d(4)
        assert r.nodes.shape == (64, 3)
        assert abs(r.weights.sum() - 1.0) <= 1e-12
        # E[x^2 y^2] = 1
        val = (r.nodes[:, 0] ** 2 * r.nodes[:, 1] ** 2) @ r.weights
        assert abs(val - 1.0) <= 1e-12


class TestSphereRule:
    def test_levels(self):
        for level, count in [("coarse", 72), ("medium", 288), ("fine", 1152)]:
            r = sphere_rule(level)
            assert len(r) == count
            assert abs(r.weights.sum() - 4.0 * np.pi) <= 1e-12

    def test_odd_component_vanishes(self):
        r = sphere_rule("medium")
        assert abs(r.nodes[:, 2] @ r.weights) <= 1e-12

    def test_second_moment(self):
        # int sigma_z^2 dsigma = 4 pi / 3
        r = sphere_rule("coarse")
        val = (r.nodes[:, 2] ** 2) @ r.weights
        assert abs(val - 4.0 * np.pi / 3.0) <= 1e-10

    def test_unknown_level(self):
        with pytest.raises(ValueError):
            sphere_rule("ultra")

    def test_gauss_legendre_exactness(self):
        r = gauss_legendre(6)
        for k in range(12):
            exact = 2.0 / (k + 1) if k % 2 == 0 else 0.0
            assert abs(r.nodes ** k @ r.weights - exact) <= 1e-13


class TestPostCollision:
    def test_equal_velocities_degenerate(self):
        v = np.array([1.0, -2.0, 0.5])
        vp, vps = post_collision(v, v, np.array([0.0, 0.0, 1.0]))
        assert np.allclose(vp, v) and np.allclose(vps, v)

    def test_identity_collision(self):
        v = np.array([1.0, 0.0, 0.0])
        vs = np.array([-1.0, 0.0, 0.0])
        sigma = (v - vs) / np.linalg.norm(v - vs)
        vp, vps = post_collision(v, vs, sigma)
        assert np.allclose(vp, v) and np.allclose(vps, vs)

    def test_exchange_collision(self):
        v = np.array([1.0, 2.0, 3.0])
        vs = np.array([0.0, -1.0, 1.0])
        sigma = -(v - vs) / np.linalg.norm(v - vs)
        vp, vps = post_collision(v, vs, sigma)
        assert np.allclose(vp, vs) and np.allclose(vps, v)

    def test_non_unit_sigma_rejected(self):
        with pytest.raises(ValueError, match="unit"):
            post_collision(np.zeros(3), np.ones(3), np.array([0.0, 0.0, 1.1]))

    def test_conservation_bulk(self):
        # acceptance criterion 1 at reduced size; the timed 1e5 run lives in
        # the acceptance module
        rng = np.random.default_rng(2)
        v = rng.standard_normal((10_000, 3))
        vs = rng.standard_normal((10_000, 3))
        raw = rng.standard_normal((10_000, 3))
        sigma = raw / np.linalg.norm(raw, axis=1, keepdims=True)
        vp, vps = post_collision(v, vs, sigma)
        assert np.max(np.abs(vp + vps - v - vs)) <= 1e-13
        en = np.sum(v * v + vs * vs, axis=1)
        en_p = np.sum(vp * vp + vps * vps, axis=1)
        assert np.max(np.abs(en_p - en) / np.maximum(en, 1e-300)) <= 1e-12

    def test_inverse_collision(self):
        # mapping (v', v'*) back with the unprimed relative direction
        # recovers (v, v*); see the collision-geometry involution note
        rng = np.random.default_rng(3)
        v = rng.standard_normal((10_000, 3))
        vs = rng.standard_normal((10_000, 3))
        raw = rng.standard_normal((10_000, 3))
        sigma = raw / np.linalg.norm(raw, axis=1, keepdims=True)
        vp, vps = post_collision(v, vs, sigma)
        omega = (v - vs) / np.linalg.norm(v - vs, axis=1, keepdims=True)
        v2, vs2 = post_collision(vp, vps, omega)
        assert np.max(np.abs(v2 - v)) <= 1e-10
        assert np.max(np.abs(vs2 - vs)) <= 1e-10

    def test_collision_pair_invariants(self):
        pair = collision_pair(np.array([0.3, 1.0, -2.0]),
                              np.array([1.0, 1.0, 1.0]),
                              np.array([0.0, 1.0, 0.0]))
        assert np.max(np.abs(pair.v_prime + pair.v_prime_star
                             - pair.v - pair.v_star)) <= 1e-13
        assert abs(np.linalg.norm(pair.sigma) - 1.0) <= 1e-14

    def test_cos_deviation_within_clamp(self):
        rng = np.random.default_rng(4)
        v = rng.standard_normal((1000, 3))
        vs = rng.standard_normal((1000, 3))
        diff = v - vs
        sigma = diff / np.linalg.norm(diff, axis=1, keepdims=True)
        ct = np.einsum("ij,ij->i", sigma, diff) \
            / np.linalg.norm(diff, axis=1)
        assert np.max(np.abs(ct)) <= 1.0 + 1e-14


class TestCollisionSampler:
    def test_deterministic_streams(self):
        a = collision_sampler(123, 1000)
        b = collision_sampler(123, 1000)
        for x, y in zip(a, b):
            assert np.array_equal(x, y)

    def test_normalization_estimate(self):
        v, vs, sigma, w = collision_sampler(5, 100_000)
        assert np.allclose(w, 4.0 * np.pi)
        est = w.mean()
        assert abs(est - 4.0 * np.pi) <= 1e-12   # constant weight: exact

    def test_second_moment_estimate(self):
        v, vs, sigma, w = collision_sampler(6, 100_000)
        g = w * np.sum(v * v, axis=1)
        se = g.std() / np.sqrt(len(g))
        assert abs(g.mean() - 3.0 * 4.0 * np.pi) <= 3.0 * se

    def test_split_substreams(self):
        parent = CollisionSampler(99)
        kids = parent.split(3)
        again = CollisionSampler(99).split(3)
        for k1, k2 in zip(kids, again):
            a = k1.draw(100)
            b = k2.draw(100)
            for x, y in zip(a, b):
                assert np.array_equal(x, y)
        # children produce distinct streams
        assert not np.array_equal(kids[0].draw(100)[0], kids[1].draw(100)[0])

    def test_sigma_unit(self):
        _, _, sigma, _ = collision_sampler(7, 10_000)
        assert np.max(np.abs(np.linalg.norm(sigma, axis=1) - 1.0)) <= 1e-12

    def test_count_validated(self):
        with pytest.raises(ValueError):
            collision_sampler(1, 0)
