"""The forward slab solver: projections, slab systems, marching, checkpoints."""

import json

import numpy as np
import pytest

from dgac import (
    LinearSolveConfig,
    NewtonConfig,
    NewtonError,
    ProblemSpec,
    SpaceOperators,
    TimePartition,
    build_interval_mesh,
    build_space,
    l2_project,
    load_checkpoint,
    make_problem,
    make_time_basis,
    save_checkpoint,
    solve_forward,
    solve_slab,
)
from dgac.forward import _SlabSystem
from dgac.timebase import DgTimeOperators

from _helpers import (
    dense_spacetime_oracle,
    implicit_euler_oracle,
    make_run,
    monomial_eval,
    p1_error_norms_1d,
)

DENSE = LinearSolveConfig(method="dense_lu")
TIGHT = NewtonConfig(abs_tol=1e-13, rel_tol=1e-13)


def _small_amplitude_problem(T=0.3):
    return ProblemSpec(dimension=1, epsilon=0.5, T=T,
                       u0=lambda x: 0.1 * np.sin(np.pi * x[..., 0]),
                       f=None, exact=None, name="smallsine")


# ---------------------------------------------------------------------------
# projection


def test_l2_projection_is_orthogonal_and_reproducing():
    run = make_run(n=16, l=1)
    ops = run.ops
    g = lambda x: np.sin(np.pi * x[..., 0])
    proj = l2_project(g, ops, DENSE)
    # Galerkin orthogonality of the projection error against the space
    np.testing.assert_allclose(ops.mass() @ proj, ops.load(g), atol=1e-12)
    # members of the space are reproduced
    nodal = run.space.interpolate(g)
    np.testing.assert_allclose(l2_project(lambda x: np.interp(
        x[..., 0], run.space.dof_coords[:, 0],
        run.space.scatter(nodal)), ops, DENSE), nodal, atol=1e-12)


def test_l2_projection_error_halves_at_second_order():
    u = lambda x: np.sin(np.pi * x)
    du = lambda x: np.pi * np.cos(np.pi * x)
    errs = []
    for n in (16, 32):
        run = make_run(n=n, l=1)
        proj = l2_project(lambda x: u(x[..., 0]), run.ops, DENSE)
        l2sq, _, _ = p1_error_norms_1d(proj, n, u, du)
        errs.append(np.sqrt(l2sq))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.1)


# ---------------------------------------------------------------------------
# single slab systems


def test_newton_config_validation():
    with pytest.raises(ValueError):
        NewtonConfig(abs_tol=-1.0)
    with pytest.raises(ValueError):
        NewtonConfig(max_iterations=0)


def test_zero_slab_is_a_fixed_point():
    run = make_run(n=8, N=2, k=1)
    time_ops = DgTimeOperators.from_basis(run.basis)
    nf = run.space.n_free
    system = _SlabSystem(run.ops, run.basis, time_ops, 0.5, 0.5,
                         np.zeros(nf), None)
    zero = np.zeros((2, nf))
    np.testing.assert_array_equal(system.residual(zero), np.zeros((2, nf)))
    U, its = solve_slab(system, zero, NewtonConfig(), DENSE)
    assert its == 0
    assert np.all(U == 0.0)


@pytest.mark.parametrize("k", [1, 2])
def test_slab_marching_reproduces_trial_space_solution(k):
    # u(t, x) = g(t) phi(x) with g in P_k and phi in the mesh space is an
    # exact solution once the forcing is assembled through the same
    # discrete weak form; four slabs accumulate no error beyond round-off.
    n, eps, tau = 8, 0.5, 0.25
    run = make_run(n=n, N=4, T=1.0, k=k, epsilon=eps)
    ops = run.ops
    basis = run.basis
    time_ops = DgTimeOperators.from_basis(basis)
    phi = run.space.interpolate(lambda x: np.sin(np.pi * x[..., 0]))
    M, A = ops.mass(), ops.stiffness()

    if k == 1:
        g = lambda t: 1.0 + t
        dg = lambda t: np.ones_like(t)
    else:
        g = lambda t: 1.0 + t + 0.5 * t**2
        dg = lambda t: 1.0 + t

    u_prev = g(0.0) * phi
    for s in range(4):
        t0 = s * tau
        tq = t0 + tau * basis.quad_points
        floads = np.stack([
            dg(t) * (M @ phi) + g(t) * (A @ phi)
            + ops.cubic_load(g(t) * phi) / eps**2
            for t in tq])
        system = _SlabSystem(ops, basis, time_ops, tau, eps, u_prev, floads)
        guess = np.tile(u_prev, (k + 1, 1))
        U, _ = solve_slab(system, guess, TIGHT, DENSE)
        expected = np.outer(g(t0 + tau * basis.nodes), phi)
        assert np.max(np.abs(U - expected)) <= 1e-9
        u_prev = basis.right_values @ U


# ---------------------------------------------------------------------------
# forward marching against independent references


def test_zero_data_gives_exact_zero_solution():
    run = make_run(n=8, N=4, k=1, initial_profile="zero")
    sol = solve_forward(run.problem, run.ops, run.partition, run.basis)
    assert np.all(sol.initial == 0.0)
    for slab in sol.slabs:
        assert np.all(slab.coeffs == 0.0)


def test_forward_matches_dense_spacetime_reference():
    n, N, k = 8, 2, 1
    run = make_run(n=n, N=N, T=0.4, k=k, epsilon=0.5, manufactured="expsine")
    sol = solve_forward(run.problem, run.ops, run.partition, run.basis,
                        newton_cfg=TIGHT, lin_cfg=DENSE)
    u0, W = dense_spacetime_oracle(run.problem, n, N, k)
    np.testing.assert_allclose(sol.initial, u0, atol=1e-12)
    samples = np.array([0.2, 0.55, 0.9, 1.0])
    for s in range(N):
        ref = monomial_eval(W[s], samples)
        got = sol.eval_slab(s + 1, samples)
        assert np.max(np.abs(got - ref)) <= 1e-10


def test_lowest_order_is_backward_euler():
    n, N = 8, 3
    problem = _small_amplitude_problem(T=0.3)
    run = make_run(n=n, N=N, T=0.3, k=0, initial_profile="zero")
    sol = solve_forward(problem, run.ops, run.partition, run.basis,
                        newton_cfg=TIGHT, lin_cfg=DENSE)
    steps = implicit_euler_oracle(problem, n, N)
    np.testing.assert_allclose(sol.initial, steps[0], atol=1e-12)
    for m in range(1, N + 1):
        assert np.max(np.abs(sol.coeffs(m)[0] - steps[m])) <= 1e-10


def test_forward_solve_is_deterministic():
    run = make_run(n=8, N=2, T=0.25, k=1)
    a = solve_forward(run.problem, run.ops, run.partition, run.basis)
    b = solve_forward(run.problem, run.ops, run.partition, run.basis)
    assert np.array_equal(a.initial, b.initial)
    for sa, sb in zip(a.slabs, b.slabs):
        assert np.array_equal(sa.coeffs, sb.coeffs)


def test_dimension_mismatch_is_rejected():
    run1d = make_run(n=8, N=2)
    problem2d = make_problem(2, 0.5, 1.0, manufactured="expsine2d")
    with pytest.raises(ValueError, match="dimensions differ"):
        solve_forward(problem2d, run1d.ops, run1d.partition, run1d.basis)


def test_small_data_decays_monotonically():
    # with |u0| << 1 and eps = 0.5 the linear part dominates and the
    # solution decays; right traces shrink in the mass norm and energy
    problem = _small_amplitude_problem(T=1.0)
    run = make_run(n=16, N=8, T=1.0, k=1, initial_profile="zero")
    sol = solve_forward(problem, run.ops, run.partition, run.basis)
    ops = run.ops
    M, A = ops.mass(), ops.stiffness()
    inv_eps2 = 1.0 / problem.epsilon**2

    def mass_norm(v):
        return float(np.sqrt(v @ (M @ v)))

    def energy(v):
        vals = ops.eval_free(v)
        grad = ops.eval_grad_free(v)
        well = ops.integrate((vals**2 - 1.0) ** 2)
        return 0.5 * ops.integrate(np.sum(grad**2, axis=-1)) + 0.25 * inv_eps2 * well

    norms = [mass_norm(sol.right_trace(m)) for m in range(9)]
    energies = [energy(sol.right_trace(m)) for m in range(9)]
    assert all(b <= a + 1e-12 for a, b in zip(norms, norms[1:]))
    assert all(b <= a + 1e-12 for a, b in zip(energies, energies[1:]))


def test_newton_failure_carries_history_and_slab_context():
    run = make_run(n=16, N=2, T=0.5, epsilon=0.01, k=1,
                   initial_profile="interface")
    with pytest.raises(NewtonError) as excinfo:
        solve_forward(run.problem, run.ops, run.partition, run.basis,
                      newton_cfg=NewtonConfig(max_iterations=1))
    err = excinfo.value
    assert "slab 1" in str(err)
    assert len(err.history) >= 1
    assert all(np.isfinite(r) for r in err.history)


# ---------------------------------------------------------------------------
# checkpoints


def test_checkpoint_roundtrip(tmp_path, solved_default):
    run, sol = solved_default
    path = tmp_path / "state.json"
    manifest = save_checkpoint(sol, str(path), problem=run.problem)
    assert manifest["N_slabs"] == 8
    assert manifest["mesh"] == {"dimension": 1, "n": 16}
    assert manifest["problem"] == "expsine"

    back, loaded = load_checkpoint(str(path))
    assert np.array_equal(back.initial, sol.initial)
    assert len(back.slabs) == len(sol.slabs)
    for sa, sb in zip(back.slabs, sol.slabs):
        assert np.array_equal(sa.coeffs, sb.coeffs)
        assert sa.t_start == sb.t_start and sa.t_end == sb.t_end
    assert loaded["problem_hash"] == manifest["problem_hash"]


def test_checkpoint_rejects_mismatched_mesh(tmp_path, solved_default):
    run, sol = solved_default
    path = tmp_path / "state.json"
    save_checkpoint(sol, str(path), problem=run.problem)
    doc = json.loads(path.read_text())
    doc["manifest"]["mesh"]["n"] = 32
    path.write_text(json.dumps(doc))
    with pytest.raises(ValueError, match="does not match"):
        load_checkpoint(str(path))
