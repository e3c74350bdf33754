import numpy as np
import pytest
import scipy.sparse as sp

from conftest import PATCH_STRESS, patch_problem, patch_q, patch_v
from gnse.bench import ManufacturedCase, exact_fields, make_problem
from gnse.bench.study import solve_sequence
from gnse.constitutive import S_of, StressParams
from gnse.exceptions import ConfigurationError, LinearSolverError, NonConvergenceError
from gnse.fem import DiscreteFunction, build_space, gauss_legendre, prolongate, scott_zhang
from gnse.fem.interpolation import lagrange_p1_to_space
from gnse.solver import (DiscreteState, NewtonConfig, ProblemData, apply_dirichlet,
                         assemble_jacobian, assemble_residual, initial_state, linear_solve,
                         newton_solve, temam_b)


def _random_velocity(space, rng, zero_trace=False):
    c = rng.standard_normal(space.n_velocity_dofs)
    if zero_trace:
        c[space.boundary_velocity_dofs] = 0.0
    return DiscreteFunction(space, "velocity", c)


def _exact_state(space):
    order = 1 if space.pair.value == "mini" else 2
    vel = scott_zhang(space, order, patch_v).coefficients
    return DiscreteState(space, vel, patch_q(space.mesh.vertices))


class TestTemam:
    @pytest.mark.parametrize("pair", ["mini", "th"])
    def test_skew_without_source(self, meshes, pair):
        space = build_space(meshes[2], pair)
        rng = np.random.default_rng(0)
        u, v = _random_velocity(space, rng), _random_velocity(space, rng)
        scale = abs(temam_b(space, u, u, v, 0.0)) + 1.0
        assert abs(temam_b(space, u, v, v, 0.0)) <= 1e-13 * scale

    @pytest.mark.parametrize("pair", ["mini", "th"])
    def test_skew_identity(self, meshes, pair):
        space = build_space(meshes[2], pair)
        rng = np.random.default_rng(1)
        v, z = _random_velocity(space, rng), _random_velocity(space, rng)
        g1 = lambda X: 1.0 + X[..., 0] * X[..., 1]
        q = space.quad(8)
        vv, _ = q.velocity(v.coefficients)
        zz, _ = q.velocity(z.coefficients)
        oracle = 0.5 * q.integrate(g1(q.X) * np.einsum("tqc,tqc->tq", vv, zz))
        assert temam_b(space, v, z, z, g1) == pytest.approx(oracle, rel=1e-13, abs=1e-13)

    @pytest.mark.parametrize("pair", ["mini", "th"])
    def test_consistency(self, meshes, pair):
        space = build_space(meshes[2], pair)
        v = scott_zhang(space, 1, lambda X: X.copy())
        z = _random_velocity(space, np.random.default_rng(2), zero_trace=True)
        q = space.quad(8)
        vv, _ = q.velocity(v.coefficients)
        _, Gz = q.velocity(z.coefficients)
        oracle = -q.integrate(np.einsum("tqc,tqcd,tqd->tq", vv, Gz, vv))
        assert temam_b(space, v, v, z, 2.0) == pytest.approx(oracle, rel=1e-13)

    def test_space_mismatch(self, meshes):
        a, b = build_space(meshes[1], "th"), build_space(meshes[2], "th")
        rng = np.random.default_rng(3)
        u = _random_velocity(a, rng)
        with pytest.raises(ConfigurationError):
            temam_b(a, u, u, _random_velocity(b, rng), 0.0)


class TestResidual:
    def test_patch_exact_state(self, meshes):
        for level in (0, 1, 2):
            space = build_space(meshes[level], "th")
            R = assemble_residual(patch_problem(space), _exact_state(space))
            assert np.abs(R).max() <= 1e-10

    def test_zero_data(self, meshes):
        space = build_space(meshes[2], "mini")
        data = ProblemData(StressParams(1.5, 1e-5, 1.0), space, 0.0, lambda X: 0 * X)
        assert not np.any(assemble_residual(data, DiscreteState.zeros(space)))

    def test_pressure_perturbation_locality(self, meshes):
        space = build_space(meshes[2], "th")
        data = patch_problem(space)
        state = _exact_state(space)
        k = 7  # an interior vertex
        assert not space.mesh.boundary_vertex_flags[k]
        R0 = assemble_residual(data, state)
        pert = DiscreteState(space, state.velocity, state.pressure.copy())
        pert.pressure[k] += 0.3
        changed = np.flatnonzero(assemble_residual(data, pert) != R0)
        nv = space.n_velocity_dofs
        tri = np.flatnonzero((space.mesh.triangles == k).any(axis=1))
        coupled = np.unique(space.velocity_cell_dofs[tri])
        assert set(changed[changed < nv]) <= set(coupled)
        assert nv + space.n_pressure_dofs in changed
        assert not np.any((changed >= nv) & (changed < nv + space.n_pressure_dofs))


def _fd_check(data, state, rng):
    space = data.space
    J = assemble_jacobian(data, state)
    d = rng.standard_normal(data.n_unknowns)
    d[space.boundary_velocity_dofs] = 0.0
    eps = 1e-6
    plus = DiscreteState.from_vector(space, state.to_vector() + eps * d)
    minus = DiscreteState.from_vector(space, state.to_vector() - eps * d)
    fd = (assemble_residual(data, plus) - assemble_residual(data, minus)) / (2 * eps)
    return np.linalg.norm(J @ d - fd) / np.linalg.norm(fd)


class TestJacobian:
    @pytest.mark.parametrize("pair", ["mini", "th"])
    @pytest.mark.parametrize("p", [4 / 3, 1.5, 2.0, 2.5, 3.0])
    def test_finite_differences(self, meshes, pair, p):
        rng = np.random.default_rng(4)
        space = build_space(meshes[2], pair)
        data = make_problem(ManufacturedCase(1, p), space)
        state = initial_state(data)
        x = state.to_vector()
        free = np.setdiff1d(np.arange(space.n_velocity_dofs), space.boundary_velocity_dofs)
        x[free] = 0.3 * rng.standard_normal(free.size)
        x[space.n_velocity_dofs:] = rng.standard_normal(x.size - space.n_velocity_dofs)
        assert _fd_check(data, DiscreteState.from_vector(space, x), rng) <= 1e-5

    @pytest.mark.parametrize("p", [2.0, 3.0])
    def test_stress_block_state_dependence(self, meshes, p):
        space = build_space(meshes[2], "th")
        rng = np.random.default_rng(5)
        s1, s2 = (DiscreteState(space, rng.standard_normal(space.n_velocity_dofs),
                                rng.standard_normal(space.n_pressure_dofs)) for _ in range(2))

        def change(nu):
            data = ProblemData(StressParams(p, 1e-5, nu), space, 0.0, lambda X: 0 * X)
            return assemble_jacobian(data, s1) - assemble_jacobian(data, s2)

        # the convection part cancels, leaving (nu' - nu) times the stress change
        gap = abs(change(0.1) - change(0.5)).max()
        if p == 2.0:
            assert gap <= 1e-12
        else:
            assert gap > 1e-3

    def test_divergence_blocks_transposed(self, meshes):
        space = build_space(meshes[2], "mini")
        data = make_problem(ManufacturedCase(1, 2.5), space)
        J = assemble_jacobian(data, initial_state(data))
        nv, npr = space.n_velocity_dofs, space.n_pressure_dofs
        free = np.setdiff1d(np.arange(nv), space.boundary_velocity_dofs)
        Bq = J[nv:nv + npr][:, free].toarray()
        Bu = J[free][:, nv:nv + npr].toarray()
        assert np.array_equal(Bq, -Bu.T)
        bd = space.boundary_velocity_dofs
        I = J[bd][:, :].toarray()
        assert np.array_equal(I, np.eye(J.shape[0])[bd])


class TestLinearSolve:
    def test_identity(self):
        b = np.random.default_rng(6).standard_normal(50)
        assert np.array_equal(linear_solve(sp.identity(50, format="csr"), b), b)

    def test_spd_against_dense(self):
        rng = np.random.default_rng(7)
        M = rng.standard_normal((100, 100))
        A = M @ M.T + 100 * np.eye(100)
        b = rng.standard_normal(100)
        x = linear_solve(sp.csr_matrix(A), b)
        np.testing.assert_allclose(x, np.linalg.solve(A, b), rtol=1e-10, atol=1e-12)

    def test_singular(self):
        A = sp.csr_matrix(np.array([[1.0, 2.0, 0.0], [2.0, 4.0, 0.0], [0.0, 0.0, 1.0]]))
        with pytest.raises(LinearSolverError):
            linear_solve(A, np.array([1.0, 0.0, 1.0]))
        with pytest.raises(LinearSolverError):
            linear_solve(sp.csr_matrix((3, 3)), np.ones(3))

    def test_patch_saddle_point(self, meshes):
        space = build_space(meshes[1], "th")
        data = patch_problem(space)
        init = initial_state(data)
        # p = 2 with zero convection would be linear; one Newton step from the lift
        # plus the exact solution must agree with a converged solve
        state, _ = newton_solve(data, init)
        exact = _exact_state(space)
        np.testing.assert_allclose(state.velocity, exact.velocity, atol=1e-9)
        np.testing.assert_allclose(state.pressure, exact.pressure, atol=1e-9)


class TestNewton:
    def test_patch_iterations(self, meshes):
        for level in (0, 1, 2):
            space = build_space(meshes[level], "th")
            data = patch_problem(space)
            state, report = newton_solve(data, initial_state(data))
            assert report.converged and report.iterations <= 5
            assert abs(state.mu) <= 1e-8
            assert abs(data.pressure_integrals @ state.pressure) <= 1e-10

    def test_exact_init(self, meshes):
        space = build_space(meshes[2], "th")
        _, report = newton_solve(patch_problem(space), _exact_state(space))
        assert report.iterations in (0, 1)

    def test_p3_from_prolongation(self, meshes):
        case = ManufacturedCase(1, 3.0)
        coarse = None
        for level in (0, 1, 2):
            space = build_space(meshes[level], "mini")
            data = make_problem(case, space)
            init = initial_state(data) if coarse is None else apply_dirichlet(data, DiscreteState(
                space, prolongate(coarse.velocity_function, space).coefficients,
                prolongate(coarse.pressure_function, space).coefficients))
            coarse, _ = newton_solve(data, init)
        space = build_space(meshes[3], "mini")
        data = make_problem(case, space)
        init = apply_dirichlet(data, DiscreteState(
            space, prolongate(coarse.velocity_function, space).coefficients,
            prolongate(coarse.pressure_function, space).coefficients))
        state, report = newton_solve(data, init, NewtonConfig(max_iter=30))
        assert report.converged
        bd = space.boundary_velocity_dofs
        assert np.array_equal(state.velocity[bd], init.velocity[bd])

    def test_nonconvergence_carries_history(self, meshes):
        space = build_space(meshes[2], "mini")
        data = make_problem(ManufacturedCase(1, 3.0), space)
        with pytest.raises(NonConvergenceError) as info:
            newton_solve(data, initial_state(data), NewtonConfig(max_iter=1), p=3.0, level=2)
        assert len(info.value.history) == 2 and info.value.p == 3.0

    @pytest.mark.parametrize("kw", [dict(abs_tol=0), dict(rel_tol=-1), dict(max_iter=0),
                                    dict(damping=0.0), dict(damping=1.5)])
    def test_config_validation(self, kw):
        with pytest.raises(ConfigurationError):
            NewtonConfig(**kw)


class TestDirichlet:
    def test_zero_data(self, meshes):
        space = build_space(meshes[2], "th")
        data = ProblemData(PATCH_STRESS, space, 0.0, lambda X: 0 * X)
        s = DiscreteState(space, np.ones(space.n_velocity_dofs), np.zeros(space.n_pressure_dofs))
        out = apply_dirichlet(data, s)
        assert not np.any(out.velocity[space.boundary_velocity_dofs])
        interior = np.setdiff1d(np.arange(space.n_velocity_dofs), space.boundary_velocity_dofs)
        assert np.all(out.velocity[interior] == 1.0)

    def test_mini_p1_nodal(self, meshes):
        space = build_space(meshes[2], "mini")
        f = lambda X: np.stack([1 + 2 * X[..., 0] - X[..., 1], 3 * X[..., 1]], axis=-1)
        data = ProblemData(PATCH_STRESS, space, 0.0, f)
        out = apply_dirichlet(data, DiscreteState.zeros(space))
        nodal = lagrange_p1_to_space(space, f(space.mesh.vertices))
        bd = space.boundary_velocity_dofs
        np.testing.assert_allclose(out.velocity[bd], nodal[bd], atol=1e-13)

    @staticmethod
    def _trace_error(space, g):
        m = space.mesh
        data = ProblemData(PATCH_STRESS, space, 0.0, g)
        vh = apply_dirichlet(data, DiscreteState.zeros(space)).velocity_function
        be = m.boundary_edges
        a, b = m.vertices[m.edges[be, 0]], m.vertices[m.edges[be, 1]]
        t, w = gauss_legendre(12)
        X = a[:, None] + t[None, :, None] * (b - a)[:, None]
        d = vh.evaluate(X.reshape(-1, 2)).reshape(X.shape) - g(X)
        return np.sqrt(np.einsum("e,q,eq->", m.edge_lengths[be], w, (d ** 2).sum(-1)))

    def test_th_trace_rate_manufactured(self, meshes):
        g = exact_fields(ManufacturedCase(1, 2.0)).v
        errs = [self._trace_error(build_space(meshes[i], "th"), g) for i in range(2, 6)]
        rates = np.log2(np.array(errs[:-1]) / errs[1:])
        assert np.all(np.abs(rates - 2.0) <= 0.1), rates

    def test_th_trace_rate_smooth(self, meshes):
        g = lambda X: np.stack([np.sin(3 * X[..., 0]) * np.exp(X[..., 1]),
                                np.cos(2 * X[..., 1] + X[..., 0])], axis=-1)
        errs = [self._trace_error(build_space(meshes[i], "th"), g) for i in range(2, 6)]
        rates = np.log2(np.array(errs[:-1]) / errs[1:])
        assert np.all(rates >= 2.0), rates


class TestConvergedInvariants:
    @pytest.mark.parametrize("pair", ["mini", "th"])
    def test_mean_and_divergence(self, benchmark_solves, pair):
        space, state, data, _ = benchmark_solves(pair, 1, 2.5, 4)
        assert abs(data.pressure_integrals @ state.pressure) <= 1e-10
        q = data.quad
        _, Gu = q.velocity(state.velocity)
        div = np.trace(Gu, axis1=2, axis2=3) - data.g1_at_quad
        loc = np.einsum("tq,qk,tq->tk", q.W, q.psi, div)
        per_basis = np.bincount(space.mesh.triangles.ravel(), weights=loc.ravel(),
                                minlength=space.n_pressure_dofs)
        assert np.abs(per_basis).max() <= 1e-8

    @pytest.mark.parametrize("pair", ["mini", "th"])
    def test_multiplier_vanishes(self, benchmark_solves, pair):
        _, state, _, _ = benchmark_solves(pair, 1, 2.5, 4)
        assert abs(state.mu) <= 1e-8

    @pytest.mark.parametrize("pair", ["mini", "th"])
    def test_multiplier_equals_flux_defect(self, benchmark_solves, pair):
        space, state, data, _ = benchmark_solves(pair, 1, 2.5, 3)
        q = data.quad
        _, Gu = q.velocity(state.velocity)
        defect = q.integrate(data.g1_at_quad) - q.integrate(np.trace(Gu, axis1=2, axis2=3))
        assert state.mu == pytest.approx(defect, rel=1e-6, abs=1e-12)

    @pytest.mark.parametrize("pair", ["mini", "th"])
    @pytest.mark.parametrize("case_id,p", [(1, 2.5), (2, 2.5), (1, 1.5)])
    def test_error_equation(self, pair, case_id, p):
        # the exact pressure may be singular at the corner, so the load and the
        # check share one degree-12 rule
        case = ManufacturedCase(case_id, p)
        ex = exact_fields(case)
        cfg = NewtonConfig(abs_tol=1e-13, rel_tol=1e-14)
        for mesh, space, state, _ in solve_sequence(pair, case, 3, cfg, degree=12):
            if mesh.level < 2:
                continue
            q = space.quad(12)
            u, Gu = q.velocity(state.velocity)
            qh, _ = q.pressure(state.pressure)
            X = q.X
            v, Gv, qq, g1 = ex.v(X), ex.grad_v(X), ex.q(X), ex.g1(X)
            dS = S_of(case.stress, Gu) - S_of(case.stress, Gv)
            stress = np.einsum("tq,tqcd,tqld->tlc", q.W,
                               dS - (qh - qq)[..., None, None] * np.eye(2), q.G)

            def b_local(a, Ga):
                adv = np.einsum("tqcd,tqd->tqc", Ga, a) + g1[..., None] * a
                return (0.5 * np.einsum("tq,ql,tqc->tlc", q.W, q.phi, adv)
                        - 0.5 * np.einsum("tq,tqc,tqld,tqd->tlc", q.W, a, q.G, a))

            idx = space.velocity_cell_dofs

            def scatter(loc):
                out = np.bincount(idx.ravel(), weights=loc.ravel(),
                                  minlength=space.n_velocity_dofs)
                out[space.boundary_velocity_dofs] = 0.0
                return out

            glob = scatter(stress - (b_local(v, Gv) - b_local(u, Gu)))
            scale = (np.abs(scatter(np.einsum("tq,tqcd,tqld->tlc", q.W, S_of(case.stress, Gv),
                                              q.G))).max()
                     + np.abs(scatter(np.einsum("tq,tq,tqlc->tlc", q.W, qq, q.G))).max())
            assert np.abs(glob).max() <= 1e-6 * scale
