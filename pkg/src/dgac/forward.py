"""Slab-marching dG(k) solver for the Allen-Cahn equation.

On each slab (t_{n-1}, t_n] mapped to [0, 1], the unknown
u(that) = sum_j chi_j(that) U_j with free-dof vectors U_j satisfies

    sum_j G_ij M U_j + tau_n sum_j Theta_ij A U_j
        + (tau_n/eps^2) int_0^1 chi_i (u^3 - u, phi) dthat
    = chi_i(0) M u_prev + tau_n int_0^1 chi_i (f, phi) dthat,

where u_prev is the incoming trace from the previous slab (the projected
initial data for n = 1).  One fixed spatial space serves every slab.  The
nonlinear system is solved by damped Newton with the exact Jacobian

    J = kron(G, M) + tau kron(Theta, A)
        + (tau/eps^2) sum_q w_q kron(chi(t_q) chi(t_q)^T, W(3 u_q^2 - 1)),

with W the weighted mass matrix.  The initial guess is the constant-in-time
extension of the incoming trace.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .assembly import SpaceOperators
from .linalg import LinearSolveConfig, solve_linear
from .mesh import build_interval_mesh, build_square_mesh
from .problems import ProblemSpec
from .space import FeSpace, build_space
from .timebase import DgTimeOperators, TimeBasis, TimePartition, make_time_basis


@dataclass(frozen=True)
class NewtonConfig:
    """Damped Newton parameters for the slab systems.

    Convergence is declared when the euclidean residual norm drops below
    abs_tol + rel_tol * (initial residual norm).  Backtracking halves the
    step until the residual decreases, at most max_halvings times.
    """

    abs_tol: float = 1e-12
    rel_tol: float = 1e-12
    max_iterations: int = 30
    max_halvings: int = 8

    def __post_init__(self):
        if self.abs_tol < 0 or self.rel_tol < 0 or (self.abs_tol == 0 and self.rel_tol == 0):
            raise ValueError("Newton tolerances must be nonnegative and not both zero")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


class NewtonError(RuntimeError):
    """Newton failed to converge; .history lists the residual norms seen."""

    def __init__(self, message: str, history: list[float]):
        super().__init__(message)
        self.history = history


def spd_config(cfg: LinearSolveConfig) -> LinearSolveConfig:
    """Swap bicgstab for conjugate gradient on symmetric positive systems."""
    if cfg.method == "bicgstab":
        return replace(cfg, method="conjugate_gradient")
    return cfg


def l2_project(f, ops: SpaceOperators, lin_cfg: LinearSolveConfig | None = None) -> np.ndarray:
    """L2 projection of f onto the free dofs: solve M x = (f, phi).

    f may be a spatial callable or an (n_elements, n_quad) value field.
    """
    cfg = spd_config(lin_cfg or LinearSolveConfig())
    return solve_linear(ops.mass(), ops.load(f), cfg)


@dataclass
class SlabSolution:
    """Solution polynomial on one slab, nodal-in-time coefficients."""

    index: int                 # 1-based slab number
    t_start: float
    t_end: float
    coeffs: np.ndarray         # (k+1, n_free)
    left_incoming: np.ndarray  # trace handed over from slab index-1


@dataclass
class DgSolution:
    """Space-time dG solution: per-slab coefficients plus the projected data."""

    partition: TimePartition
    basis: TimeBasis
    space: FeSpace
    initial: np.ndarray        # u^0 = P_h u_0 on free dofs
    slabs: list[SlabSolution] = field(default_factory=list)

    @property
    def k(self) -> int:
        return self.basis.k

    def coeffs(self, n: int) -> np.ndarray:
        """Coefficients of slab n (1-based)."""
        return self.slabs[n - 1].coeffs

    def eval_slab(self, n: int, that_points) -> np.ndarray:
        """Values u(that) on slab n at reference points, (n_points, n_free)."""
        return self.basis.eval(that_points) @ self.coeffs(n)

    def right_trace(self, n: int) -> np.ndarray:
        """u(t_n^-); n = 0 returns the projected initial data."""
        if n == 0:
            return self.initial
        return self.basis.right_values @ self.coeffs(n)

    def left_plus(self, n: int) -> np.ndarray:
        """u(t_{n-1}^+), the left trace of slab n."""
        return self.basis.left_values @ self.coeffs(n)

    def jump(self, i: int) -> np.ndarray:
        """[u^i] = u(t_i^+) - u(t_i^-) for i = 0 .. N-1."""
        return self.left_plus(i + 1) - self.right_trace(i)

    def eval_time(self, t: float) -> np.ndarray:
        """Left-continuous evaluation at physical time t in [0, T]."""
        pts = self.partition.points
        if t <= pts[0]:
            return self.initial.copy()
        n = int(np.searchsorted(pts, t, side="left"))  # slab with t in (t_{n-1}, t_n]
        n = min(n, self.partition.n_slabs)
        that = (t - pts[n - 1]) / (pts[n] - pts[n - 1])
        return self.eval_slab(n, np.array([that]))[0]


class _SlabSystem:
    """Residual and Jacobian of one slab in flattened time-major layout."""

    def __init__(self, ops, basis, time_ops, tau, epsilon, prev, forcing_loads):
        self.ops = ops
        self.basis = basis
        self.G = time_ops.G
        self.Theta = time_ops.Theta
        self.left_load = time_ops.left_load
        self.tau = tau
        self.inv_eps2 = 1.0 / epsilon**2
        self.M = ops.mass()
        self.A = ops.stiffness()
        self.n_free = ops.space.n_free
        self.prev_term = np.outer(self.left_load, self.M @ prev)  # (k+1, nf)
        w = basis.quad_weights
        if forcing_loads is None:
            self.force_term = np.zeros((basis.k + 1, self.n_free))
        else:
            self.force_term = tau * np.einsum("q,qi,qa->ia", w, basis.values, forcing_loads)

    def quad_values(self, U: np.ndarray) -> np.ndarray:
        """u at the time quadrature points, (nq, n_free)."""
        return self.basis.values @ U

    def residual(self, U: np.ndarray) -> np.ndarray:
        w = self.basis.quad_weights
        uq = self.quad_values(U)
        nl = np.stack([self.ops.cubic_load(uq[q]) for q in range(len(w))])
        out = self.G @ (self.M @ U.T).T + self.tau * (self.Theta @ (self.A @ U.T).T)
        out += self.tau * self.inv_eps2 * np.einsum("q,qi,qa->ia", w, self.basis.values, nl)
        return out - self.prev_term - self.force_term

    def jacobian(self, U: np.ndarray) -> sp.csr_array:
        w = self.basis.quad_weights
        val = self.basis.values
        uq = self.quad_values(U)
        J = sp.kron(self.G, self.M, format="csr") + self.tau * sp.kron(self.Theta, self.A, format="csr")
        for q in range(len(w)):
            weight = 3.0 * self.ops.eval_free(uq[q]) ** 2 - 1.0
            Wq = self.ops.weighted_mass(weight)
            Jt = w[q] * np.outer(val[q], val[q])
            J = J + self.tau * self.inv_eps2 * sp.kron(Jt, Wq, format="csr")
        return sp.csr_array(J)


def solve_slab(
    system: _SlabSystem,
    initial_guess: np.ndarray,
    newton_cfg: NewtonConfig,
    lin_cfg: LinearSolveConfig,
    context: str = "slab",
) -> tuple[np.ndarray, int]:
    """Damped Newton iteration on one slab system.

    Returns the coefficient array and the iteration count; raises
    NewtonError with the residual history if the tolerance is not reached.
    """
    U = initial_guess.copy()
    r = system.residual(U)
    norm0 = float(np.linalg.norm(r))
    target = newton_cfg.abs_tol + newton_cfg.rel_tol * norm0
    history = [norm0]
    if norm0 <= target:
        return U, 0
    for it in range(1, newton_cfg.max_iterations + 1):
        J = system.jacobian(U)
        delta = solve_linear(J, -r.ravel(), lin_cfg).reshape(U.shape)
        step = 1.0
        norm_prev = history[-1]
        for _ in range(newton_cfg.max_halvings + 1):
            r_new = system.residual(U + step * delta)
            norm_new = float(np.linalg.norm(r_new))
            if norm_new < norm_prev or norm_new <= target:
                break
            step *= 0.5
        else:
            raise NewtonError(
                f"{context}: line search stalled after {newton_cfg.max_halvings} halvings "
                f"at iteration {it} (residual {norm_prev:.3e})",
                history,
            )
        U = U + step * delta
        r = r_new
        history.append(norm_new)
        if norm_new <= target:
            return U, it
    raise NewtonError(
        f"{context}: no convergence in {newton_cfg.max_iterations} iterations "
        f"(residual {history[-1]:.3e}, target {target:.3e})",
        history,
    )


def solve_forward(
    problem: ProblemSpec,
    ops: SpaceOperators,
    partition: TimePartition,
    basis: TimeBasis,
    newton_cfg: NewtonConfig | None = None,
    lin_cfg: LinearSolveConfig | None = None,
) -> DgSolution:
    """March the dG(k) scheme over all slabs.

    The initial trace is the L2 projection of u_0; each slab starts Newton
    from the constant-in-time extension of its incoming trace.  Zero data
    (u_0 = 0, f = 0) short-circuits to the exact zero solution slab by slab
    because the initial Newton residual vanishes identically.
    """
    newton_cfg = newton_cfg or NewtonConfig()
    lin_cfg = lin_cfg or LinearSolveConfig()
    if problem.dimension != ops.space.mesh.dimension:
        raise ValueError("problem and space dimensions differ")

    time_ops = DgTimeOperators.from_basis(basis)
    u_prev = l2_project(problem.u0, ops, lin_cfg)
    sol = DgSolution(partition=partition, basis=basis, space=ops.space, initial=u_prev)

    pts = partition.points
    for n in range(1, partition.n_slabs + 1):
        t0, t1 = pts[n - 1], pts[n]
        tau = t1 - t0
        if problem.f is None:
            floads = None
        else:
            floads = np.stack(
                [ops.load(lambda x, tq=t0 + tau * q: problem.f(tq, x)) for q in basis.quad_points]
            )
        system = _SlabSystem(ops, basis, time_ops, tau, problem.epsilon, u_prev, floads)
        guess = np.tile(u_prev, (basis.k + 1, 1))
        try:
            U, _ = solve_slab(system, guess, newton_cfg, lin_cfg, context=f"slab {n}")
        except NewtonError as exc:
            raise NewtonError(f"forward solve failed on slab {n}: {exc}", exc.history) from exc
        sol.slabs.append(
            SlabSolution(index=n, t_start=float(t0), t_end=float(t1), coeffs=U, left_incoming=u_prev)
        )
        u_prev = basis.right_values @ U
    return sol


# ---------------------------------------------------------------------------
# checkpoints


def _mesh_descriptor(space: FeSpace) -> dict:
    mesh = space.mesh
    if mesh.dimension == 1:
        return {"dimension": 1, "n": mesh.n_elements}
    n_side = int(round(np.sqrt(mesh.n_elements / 2)))
    return {"dimension": 2, "n_per_side": n_side}


def problem_fingerprint(problem: ProblemSpec, space: FeSpace, partition: TimePartition, basis: TimeBasis) -> str:
    """Stable hash identifying problem + discretization for checkpoint guards."""
    ident = {
        "problem": problem.name,
        "epsilon": problem.epsilon,
        "T": partition.T,
        "mesh": _mesh_descriptor(space),
        "degree_l": space.degree,
        "k": basis.k,
        "N_slabs": partition.n_slabs,
    }
    blob = json.dumps(ident, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def save_checkpoint(sol: DgSolution, path: str, problem: ProblemSpec | None = None) -> dict:
    """Write per-slab coefficients plus a manifest sufficient to reload.

    Floats serialize via repr (shortest round-trip), so loading restores
    bit-identical coefficients.
    """
    manifest = {
        "mesh": _mesh_descriptor(sol.space),
        "degree_l": sol.space.degree,
        "k": sol.basis.k,
        "N_slabs": sol.partition.n_slabs,
        "time_quad_points": sol.basis.n_quad,
        "partition": sol.partition.points.tolist(),
        "n_free": sol.space.n_free,
    }
    if problem is not None:
        manifest["problem"] = problem.name
        manifest["epsilon"] = problem.epsilon
        manifest["problem_hash"] = problem_fingerprint(problem, sol.space, sol.partition, sol.basis)
    doc = {
        "manifest": manifest,
        "initial": sol.initial.tolist(),
        "slabs": [
            {
                "index": s.index,
                "t_start": s.t_start,
                "t_end": s.t_end,
                "coeffs": s.coeffs.tolist(),
                "left_incoming": s.left_incoming.tolist(),
            }
            for s in sol.slabs
        ],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)
    return manifest


def load_checkpoint(path: str) -> tuple[DgSolution, dict]:
    """Rebuild a DgSolution (and its manifest) from a checkpoint file."""
    with open(path) as fh:
        doc = json.load(fh)
    man = doc["manifest"]
    mesh_desc = man["mesh"]
    if mesh_desc["dimension"] == 1:
        mesh = build_interval_mesh(mesh_desc["n"])
    else:
        mesh = build_square_mesh(mesh_desc["n_per_side"])
    space = build_space(mesh, man["degree_l"])
    if space.n_free != man["n_free"]:
        raise ValueError(
            f"checkpoint dof count {man['n_free']} does not match rebuilt space {space.n_free}"
        )
    basis = make_time_basis(man["k"], man["time_quad_points"])
    partition = TimePartition(np.asarray(man["partition"]))
    sol = DgSolution(
        partition=partition,
        basis=basis,
        space=space,
        initial=np.asarray(doc["initial"], dtype=float),
    )
    for s in doc["slabs"]:
        sol.slabs.append(
            SlabSolution(
                index=int(s["index"]),
                t_start=float(s["t_start"]),
                t_end=float(s["t_end"]),
                coeffs=np.asarray(s["coeffs"], dtype=float),
                left_incoming=np.asarray(s["left_incoming"], dtype=float),
            )
        )
    return sol, man
