import math

import numpy as np
import pytest

from kinetic_gap import evolution as ev
from kinetic_gap import spectra as sp
from kinetic_gap.eigen import jacobi_eigh
from kinetic_gap.mixture import embed_species_polynomials, project_onto


class TestModeGenerator:
    def test_zero_mode_is_L(self, ops_small):
        A = ev.mode_generator(ops_small.L.matrix, ops_small.transports,
                              (0, 0, 0))
        assert np.array_equal(A.real, ops_small.L.matrix)
        assert np.max(np.abs(A.imag)) == 0.0

    def test_negated_mode_is_conjugate(self, ops_small):
        A = ev.mode_generator(ops_small.L.matrix, ops_small.transports,
                              (1, -2, 0))
        B = ev.mode_generator(ops_small.L.matrix, ops_small.transports,
                              (-1, 2, 0))
        assert np.array_equal(B, np.conj(A))

    def test_blocked_real_form(self, ops_small):
        m = (1, 0, 1)
        A = ev.mode_generator(ops_small.L.matrix, ops_small.transports, m)
        blk = ev.mode_generator_blocked(ops_small.L.matrix,
                                        ops_small.transports, m)
        T = ops_small.total_size
        rng = np.random.default_rng(0)
        x = rng.standard_normal(T)
        y = rng.standard_normal(T)
        z = A @ (x + 1j * y)
        zb = blk @ np.concatenate([x, y])
        assert np.max(np.abs(zb[:T] - z.real)) <= 1e-12
        assert np.max(np.abs(zb[T:] - z.imag)) <= 1e-12

    def test_dimension_mismatch_rejected(self, ops_small):
        with pytest.raises(ValueError, match="dimensions"):
            ev.mode_generator(np.eye(3), ops_small.transports, (1, 0, 0))

    def test_norm_nonincreasing_any_mode(self, ops_small, rng):
        # numerical abscissa <= 0: symmetric part of the generator is L + L^T
        m = (2, -1, 0)
        A = ev.mode_generator(ops_small.L.matrix, ops_small.transports, m)
        c = rng.standard_normal(ops_small.total_size) \
            + 1j * rng.standard_normal(ops_small.total_size)
        assert float(np.vdot(c, A @ c).real) <= 1e-10 * float(np.vdot(c, c).real)


class TestExpm:
    def test_semigroup_property(self, rng):
        a = rng.standard_normal((40, 40))
        p1 = ev.expm(a)
        ph = ev.expm(0.5 * a)
        assert np.max(np.abs(ph @ ph - p1)) <= 1e-9 * np.max(np.abs(p1))

    def test_known_exponential(self):
        a = np.array([[0.0, 1.0], [-1.0, 0.0]])  # rotation generator
        t = 0.7
        p = ev.expm(t * a)
        expect = np.array([[math.cos(t), math.sin(t)],
                           [-math.sin(t), math.cos(t)]])
        assert np.max(np.abs(p - expect)) <= 1e-14

    def test_complex_matrix(self, rng):
        a = rng.standard_normal((20, 20)) + 1j * rng.standard_normal((20, 20))
        p = ev.expm(a)
        ph = ev.expm(a / 2)
        assert np.max(np.abs(ph @ ph - p)) <= 1e-9 * np.max(np.abs(p))

    def test_nonsquare_rejected(self):
        with pytest.raises(ValueError):
            ev.expm(np.zeros((2, 3)))


class TestEvolve:
    def test_kernel_state_is_stationary(self, ops_small):
        ops = ops_small
        coeff = ops.ker_L @ np.arange(1.0, ops.ker_L.shape[1] + 1.0)
        st = ev.TorusState({(0, 0, 0): coeff.astype(complex)})
        traj = ev.evolve(st, ops.L.matrix, ops.transports, dt=0.1, t_end=1.0)
        drift = np.max(np.abs(traj.states[-1].modes[(0, 0, 0)] - coeff))
        assert drift <= 1e-10 * np.max(np.abs(coeff))

    def test_pure_transport_preserves_norm(self, ops_small, rng):
        ops = ops_small
        st = ev.random_physical_state(rng, ops.total_size, m_max=1)
        zero = np.zeros_like(ops.L.matrix)
        traj = ev.evolve(st, zero, ops.transports, dt=0.05, t_end=1.0)
        n0 = st.norm_sq()
        assert abs(traj.states[-1].norm_sq() - n0) <= 1e-9 * n0

    def test_midpoint_second_order(self, ops_small, rng):
        ops = ops_small
        c = rng.standard_normal(ops.total_size) \
            + 1j * rng.standard_normal(ops.total_size)
        st = ev.TorusState({(1, 0, 0): c})
        ref = ev.evolve(st, ops.L.matrix, ops.transports, dt=0.05, t_end=1.0,
                        scheme="expm").states[-1].modes[(1, 0, 0)]
        errs = []
        for dt in (0.05, 0.025):
            got = ev.evolve(st, ops.L.matrix, ops.transports, dt=dt,
                            t_end=1.0, scheme="midpoint").states[-1]
            errs.append(np.linalg.norm(got.modes[(1, 0, 0)] - ref))
        ratio = errs[0] / errs[1]
        assert 3.5 <= ratio <= 4.5

    def test_midpoint_stability_guard(self, ops_small):
        ops = ops_small
        st = ev.TorusState({(0, 0, 0):
                            np.ones(ops.total_size, dtype=complex)})
        with pytest.raises(ValueError, match="1e3"):
            ev.evolve(st, ops.L.matrix, ops.transports, dt=1e4, t_end=2e4,
                      scheme="midpoint")
        ev.evolve(st, ops.L.matrix, ops.transports, dt=1e4, t_end=2e4,
                  scheme="midpoint", allow_unstable=True)

    def test_mode_decoupling(self, ops_small, rng):
        ops = ops_small
        st = ev.random_physical_state(rng, ops.total_size, m_max=1)
        full = ev.evolve(st, ops.L.matrix, ops.transports, dt=0.1, t_end=0.5)
        for m in st.modes:
            single = ev.evolve(ev.TorusState({m: st.modes[m]}), ops.L.matrix,
                               ops.transports, dt=0.1, t_end=0.5)
            dev = np.max(np.abs(full.states[-1].modes[m]
                                - single.states[-1].modes[m]))
            assert dev <= 1e-12 * max(1.0, np.max(np.abs(st.modes[m])))

    def test_invalid_inputs(self, ops_small):
        st = ev.TorusState({(0, 0, 0):
                            np.ones(ops_small.total_size, dtype=complex)})
        with pytest.raises(ValueError):
            ev.evolve(st, ops_small.L.matrix, ops_small.transports,
                      dt=-0.1, t_end=1.0)
        with pytest.raises(ValueError, match="scheme"):
            ev.evolve(st, ops_small.L.matrix, ops_small.transports,
                      dt=0.1, t_end=1.0, scheme="rk9")


class TestNorms:
    def test_zero_state(self, ops_small):
        st = ev.TorusState({(0, 0, 0):
                            np.zeros(ops_small.total_size, dtype=complex)})
        assert ev.h1_norm(st, ops_small.grads) == 0.0

    def test_maxwellian_root_h1_value(self, ops_maxwell1_small):
        # f = embedded M^{1/2}: ||f||^2 = rho, grad part = 3 rho / 4 exactly
        ops = ops_maxwell1_small
        f = embed_species_polynomials(ops.mixture, ops.basis,
                                      [lambda p: np.ones(len(p))])
        st = ev.TorusState({(0, 0, 0): f.astype(complex)})
        rho = ops.mixture.rho_inf[0]
        expect = rho + 3.0 * rho / 4.0
        assert ev.h1_norm(st, ops.grads) == pytest.approx(expect, rel=1e-10)

    def test_parseval_scaling(self, ops_small, rng):
        st = ev.random_physical_state(rng, ops_small.total_size, m_max=1)
        st2 = ev.TorusState({m: 2.0 * c for m, c in st.modes.items()})
        a = ev.h1_norm(st, ops_small.grads)
        b = ev.h1_norm(st2, ops_small.grads)
        assert b == pytest.approx(4.0 * a, rel=1e-12)

    def test_functional_reduces_to_h1(self, ops_small, rng):
        st = ev.random_physical_state(rng, ops_small.total_size, m_max=1)
        g = ev.hypo_functional(st, 1.0, 1.0, 1.0, 0.0, ops_small.grads)
        assert g == pytest.approx(ev.h1_norm(st, ops_small.grads), rel=1e-12)

    def test_coefficient_validity(self, ops_small, rng):
        st = ev.random_physical_state(rng, ops_small.total_size, m_max=1)
        with pytest.raises(ValueError, match="c4"):
            ev.hypo_functional(st, 1.0, 1.0, 1.0, 1.5, ops_small.grads)

    def test_equivalence_constants(self, ops_small, rng):
        # kappa1 ||f||_H1^2 <= G <= kappa2 ||f||_H1^2 with kappa from the
        # 2x2 quadratic-form eigenvalue oracle in (|grad_x|, |grad_v|)
        c1, c2, c3, c4 = 1.0, 2.0, 0.5, 0.6
        M = np.array([[c2, -abs(c4) / 2.0], [-abs(c4) / 2.0, c3]])
        lo2 = jacobi_eigh(M)[0][0]
        Mhi = np.array([[c2, abs(c4) / 2.0], [abs(c4) / 2.0, c3]])
        hi2 = jacobi_eigh(Mhi)[0][-1]
        kap1 = min(c1, lo2)
        kap2 = max(c1, hi2)
        assert kap1 > 0.0
        for _ in range(1000):
            st = ev.random_physical_state(rng, ops_small.total_size, m_max=1,
                                          amplitude=float(rng.uniform(0.1, 3)))
            g = ev.hypo_functional(st, c1, c2, c3, c4, ops_small.grads)
            h1 = ev.h1_norm(st, ops_small.grads)
            assert kap1 * h1 - 1e-10 <= g <= kap2 * h1 + 1e-10

    def test_mixed_term_time_derivative_identity(self, ops_small, rng):
        # d/dt (grad_x f, grad_v f) = -||grad_x f||^2 + 2 (grad_x L f, grad_v f)
        # by centered differences; O(dt^2) stencil error checked by halving.
        # States are restricted to degree <= N-2 so operator truncation does
        # not pollute the identity.
        ops = ops_small
        mask = ops.basis.degree_mask(ops.basis.N - 2)
        m = (1, 0, -1)
        A = ev.mode_generator(ops.L.matrix, ops.transports, m)
        grads = [g.matrix for g in ops.grads]

        def mixed(c):
            return sum(2.0 * np.pi * m[a] * float(np.vdot(c, grads[a] @ c).imag)
                       for a in range(3))

        def formula(c):
            gradx_sq = (2.0 * np.pi) ** 2 * float(np.dot(m, m)) \
                * float(np.vdot(c, c).real)
            lf = ops.L.matrix @ c
            term = sum(2.0 * np.pi * m[a]
                       * float(np.vdot(1j * lf, grads[a] @ c).real
                               + np.vdot(1j * c, grads[a] @ lf).real)
                       for a in range(3))
            return -gradx_sq + term

        c = rng.standard_normal(ops.total_size) \
            + 1j * rng.standard_normal(ops.total_size)
        c[~mask] = 0.0
        errs = []
        for dt in (1e-4, 5e-5):
            plus = ev.expm(dt * A) @ c
            minus = ev.expm(-dt * A) @ c
            fd = (mixed(plus) - mixed(minus)) / (2.0 * dt)
            errs.append(abs(fd - formula(c)))
        assert errs[0] <= 1e-4 * max(1.0, abs(formula(c)))
        assert errs[0] / max(errs[1], 1e-300) > 3.0   # O(dt^2) stencil


class TestFitDecay:
    def test_pure_relaxation_rate(self, ops_maxwell1_small, rng):
        # K zeroed: generator is -Lambda; late-time rate is the smallest
        # Lambda eigenvalue
        ops = ops_maxwell1_small
        w, v = jacobi_eigh(ops.lam.matrix)
        c = v[:, 0] + 0.05 * rng.standard_normal(ops.total_size)
        st = ev.TorusState({(0, 0, 0): c.astype(complex)})
        traj = ev.evolve(st, -ops.lam.matrix, ops.transports, dt=0.02,
                         t_end=1.2)
        vals = np.array([math.sqrt(s.norm_sq()) for s in traj.states])
        rep = ev.fit_decay(traj.times, vals, transient_frac=0.4)
        assert rep.tau_fit == pytest.approx(w[0], rel=0.02)

    def test_gap_eigenvector_rate(self, ops_small):
        ops = ops_small
        w, v = jacobi_eigh(ops.L.matrix)
        scale = np.max(np.abs(w))
        nonzero = np.nonzero(-w > 1e-8 * scale)[0]
        k = nonzero[np.argmin(-w[nonzero])]
        mu = -w[k]
        # horizon scaled to the mode rate so the series stays above the floor
        t_end = 6.0 / mu
        st = ev.TorusState({(0, 0, 0): (1e-3 * v[:, k]).astype(complex)})
        traj = ev.evolve(st, ops.L.matrix, ops.transports, dt=t_end / 60.0,
                         t_end=t_end)
        vals = np.array([math.sqrt(s.norm_sq()) for s in traj.states])
        rep = ev.fit_decay(traj.times, vals)
        assert rep.tau_fit == pytest.approx(mu, rel=0.02)
        assert rep.r_squared >= 0.999

    def test_floor_produces_trivial_report(self):
        t = np.linspace(0.0, 1.0, 30)
        rep = ev.fit_decay(t, np.full(30, 1e-16))
        assert rep.trivial_decay and rep.tau_fit is None

    def test_pre_floor_window_restriction(self):
        t = np.linspace(0.0, 10.0, 200)
        vals = np.exp(-3.0 * t)
        vals[vals < 1e-13] = 1e-16
        rep = ev.fit_decay(t, vals)
        assert rep.tau_fit == pytest.approx(3.0, rel=1e-6)

    def test_insufficient_samples_rejected(self):
        t = np.linspace(0.0, 1.0, 10)
        with pytest.raises(ValueError, match="usable samples"):
            ev.fit_decay(t, np.exp(-t))


class TestSearch:
    def test_positive_kappa_with_mixed_term(self, ops_small):
        res = ev.search_coefficients(ops_small, m_max=1, n_samples=400,
                                     seed=3)
        assert res.success and res.kappa > 0.0
        c1, c2, c3, c4 = res.c
        assert c4 * c4 < c2 * c3

    def test_c4_zero_fails_on_kernel_states(self, ops_small):
        res = ev.search_coefficients(ops_small, m_max=1, n_samples=100,
                                     seed=4, grid=[(1.0, 1.0, 1.0, 0.0)])
        assert res.kappa <= 1e-12

    def test_certified_bound_below_sampled(self, ops_small):
        res = ev.search_coefficients(ops_small, m_max=1, n_samples=300,
                                     seed=5)
        cert = ev.certify_coefficients(ops_small, res.c, m_max=1)
        assert cert <= res.kappa + 1e-9
        assert cert > 0.0

    def test_kappa_ceiling_at_gap_eigenvector(self, ops_small):
        # spectral-abscissa comparison: along the slowest m=0 eigenvector
        # state, dG/dt = -2 mu G, so kappa <= 2 mu G / ||.||_H1 at that state
        ops = ops_small
        w, v = jacobi_eigh(ops.L.matrix)
        scale = np.max(np.abs(w))
        nonzero = np.nonzero(-w > 1e-8 * scale)[0]
        k = nonzero[np.argmin(-w[nonzero])]
        mu = -w[k]
        phi = v[:, k].astype(complex)
        extra = [((0, 0, 0), phi)]
        res = ev.search_coefficients(ops_small, m_max=1, n_samples=300,
                                     seed=6, extra_states=extra)
        st = ev.TorusState({(0, 0, 0): phi})
        g_val = ev.hypo_functional(st, *res.c, ops.grads)
        h1 = ev.h1_norm(st, ops.grads)
        ceiling = 2.0 * mu * g_val / h1
        assert res.kappa <= ceiling * (1.0 + 1e-9)


class TestEquilibrium:
    def test_projection_structure(self, ops_small, rng):
        st = ev.random_physical_state(rng, ops_small.total_size, m_max=1)
        eq = ev.equilibrium_state(st, ops_small.ker_L)
        for m, c in eq.modes.items():
            if m == (0, 0, 0):
                resid = c - (project_onto(ops_small.ker_L, c.real)
                             + 1j * project_onto(ops_small.ker_L, c.imag))
                assert np.max(np.abs(resid)) <= 1e-12
            else:
                assert np.max(np.abs(c)) == 0.0

    def test_reality_constraint(self, ops_small, rng):
        st = ev.random_physical_state(rng, ops_small.total_size, m_max=2)
        for m, c in st.modes.items():
            mm = tuple(-x for x in m)
            assert np.max(np.abs(np.conj(c) - st.modes[mm])) == 0.0
