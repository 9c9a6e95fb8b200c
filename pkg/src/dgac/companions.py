"""Backward-in-time companion solves, projections, and identity reports.

The backward problems reuse the forward slab structure with the time
coupling transposed: slabs are visited right to left, each receiving its
terminal data through the right trace, so that the assembled system is
exactly the transpose of the forward one.  Testing the discrete equations
with the computed coefficient vectors then yields algebraic identities
that hold to solver tolerance, independent of mesh or time step:

  * the duality identity  int ||u_h||^2 = (u0, phi0+) + (2/eps^2) int (phi_h, u_h)
    + int (f, phi_h), where phi_h solves the backward problem with frozen
    reaction (u_h^2 + 1)/eps^2 (the cubic contributions cancel pairwise);
  * per-slab backward stability equalities for both the dual problem and
    the linearized problem with reaction (3 u^2 - 1)/eps^2.

The duality identity is evaluated with an independently constructed
quadrature rule of full exactness, never the rule the solver happened to
use.  Any quadrature shortcut taken during the solves therefore shows up
as a nonzero residual instead of cancelling silently.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .assembly import SpaceOperators
from .forward import DgSolution, SlabSolution, l2_project, spd_config
from .linalg import LinearSolveConfig, solve_linear
from .problems import ManufacturedSolution, ProblemSpec
from .space import FeSpace
from .timebase import DgTimeOperators, TimeBasis, TimePartition, make_time_basis


@dataclass
class IdentityReport:
    """One verified identity: name, both sides, scaled residual, extras."""

    name: str
    lhs: float
    rhs: float
    residual: float
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        doc = {"identity": self.name, "lhs": self.lhs, "rhs": self.rhs,
               "residual": self.residual}
        if self.details:
            doc["details"] = self.details
        return doc


@dataclass
class BackwardSolution:
    """Backward dG solution; slabs carry data right to left.

    The terminal datum (identically zero) lives beyond the last partition
    point; slab n receives the left trace of slab n+1 as its incoming
    value.  For the linearized problem the per-node discrete Laplacian
    d = M^{-1} A psi is stored alongside the coefficients.
    """

    partition: TimePartition
    basis: TimeBasis
    space: FeSpace
    kind: str                          # "dual" or "linearized"
    slab_coeffs: list[np.ndarray] = field(default_factory=list)
    laplacian: list[np.ndarray] | None = None
    rhs_reference: object = None

    @property
    def k(self) -> int:
        return self.basis.k

    def coeffs(self, n: int) -> np.ndarray:
        """Coefficients of slab n (1-based)."""
        return self.slab_coeffs[n - 1]

    def eval_slab(self, n: int, that_points) -> np.ndarray:
        """Values at reference points of slab n, (n_points, n_free)."""
        return self.basis.eval(that_points) @ self.coeffs(n)

    def left_plus(self, n: int) -> np.ndarray:
        """Trace at the left end of slab n; for n = 1 this is the t = 0 value."""
        return self.basis.left_values @ self.coeffs(n)

    def right_trace(self, n: int) -> np.ndarray:
        """Trace at the right end of slab n; n = N+1 returns the terminal zero."""
        if n == self.partition.n_slabs + 1:
            return np.zeros(self.space.n_free)
        return self.basis.right_values @ self.coeffs(n)

    def incoming(self, n: int) -> np.ndarray:
        """Terminal datum seen by slab n: left trace of slab n+1, zero for n = N."""
        if n == self.partition.n_slabs:
            return np.zeros(self.space.n_free)
        return self.left_plus(n + 1)


def _backward_slab_matrix(ops, basis, time_ops, tau, reaction_weights) -> sp.csr_array:
    """kron(G^T, M) + tau kron(Theta, A) + tau sum_q w_q kron(chi chi^T, W_q).

    reaction_weights[q] is the (ne, nq_space) coefficient field of the
    frozen reaction at time quadrature point q (including the 1/eps^2).
    """
    M = ops.mass()
    A = ops.stiffness()
    K = sp.kron(time_ops.G.T, M, format="csr") + tau * sp.kron(time_ops.Theta, A, format="csr")
    w = basis.quad_weights
    val = basis.values
    for q in range(len(w)):
        Wq = ops.weighted_mass(reaction_weights[q])
        K = K + tau * w[q] * sp.kron(np.outer(val[q], val[q]), Wq, format="csr")
    return sp.csr_array(K)


def _reference_values(u_ref, n, t0, tau, basis, ops) -> np.ndarray:
    """Frozen coefficient u at the slab's time quadrature points, (nq_t, ne, nq_x).

    u_ref is either a slab-polynomial solution on the same partition
    (evaluated from its stored coefficients, no re-interpolation) or a
    callable u(t, x).
    """
    if hasattr(u_ref, "eval_slab"):
        coeff_rows = u_ref.eval_slab(n, basis.quad_points)
        return np.stack([ops.eval_free(row) for row in coeff_rows])
    return np.stack([
        ops.evaluate_function(lambda x, tq=t0 + tau * q: u_ref(tq, x))
        for q in basis.quad_points
    ])


def _march_backward(
    data_term,
    reaction_for_slab,
    u_source: DgSolution,
    ops: SpaceOperators,
    lin_cfg: LinearSolveConfig,
    kind: str,
) -> BackwardSolution:
    """Shared right-to-left sweep; data_term(n) and reaction_for_slab(n, t0, tau)."""
    partition, basis = u_source.partition, u_source.basis
    time_ops = DgTimeOperators.from_basis(basis)
    M = ops.mass()
    pts = partition.points
    out = BackwardSolution(partition=partition, basis=basis, space=ops.space,
                           kind=kind, slab_coeffs=[None] * partition.n_slabs)
    incoming = np.zeros(ops.space.n_free)
    for n in range(partition.n_slabs, 0, -1):
        t0 = pts[n - 1]
        tau = pts[n] - pts[n - 1]
        K = _backward_slab_matrix(ops, basis, time_ops, tau, reaction_for_slab(n, t0, tau))
        rhs = np.outer(basis.right_values, M @ incoming) + data_term(n, t0, tau)
        coeffs = solve_linear(K, rhs.ravel(), lin_cfg).reshape(basis.k + 1, -1)
        out.slab_coeffs[n - 1] = coeffs
        incoming = basis.left_values @ coeffs
    return out


def solve_backward_dual(
    u_h: DgSolution,
    problem: ProblemSpec,
    ops: SpaceOperators | None = None,
    lin_cfg: LinearSolveConfig | None = None,
) -> BackwardSolution:
    """Backward dual solve with frozen reaction (u_h^2 + 1)/eps^2 and data u_h.

    Slab n solves the transposed system

        sum_j G_ji M P_j + tau_n sum_j Theta_ij A P_j
            + (tau_n/eps^2) sum_j [Theta_ij M + sum_q w_q chi_i chi_j W(u_q^2)] P_j
        = chi_i(1) M p_in + tau_n sum_j Theta_ij M U_j,

    with p_in the left trace of slab n+1 (zero for n = N).  The reaction
    is evaluated at the time quadrature points from the stored slab
    polynomial of u_h, which is what makes the cubic terms of the duality
    identity cancel exactly.
    """
    ops = ops or SpaceOperators(u_h.space)
    lin_cfg = lin_cfg or LinearSolveConfig()
    inv_eps2 = 1.0 / problem.epsilon**2
    M = ops.mass()
    Theta = DgTimeOperators.from_basis(u_h.basis).Theta

    def reaction(n, t0, tau):
        vals = _reference_values(u_h, n, t0, tau, u_h.basis, ops)
        return inv_eps2 * (vals**2 + 1.0)

    def data(n, t0, tau):
        return tau * (Theta @ (M @ u_h.coeffs(n).T).T)

    out = _march_backward(data, reaction, u_h, ops, lin_cfg, kind="dual")
    out.rhs_reference = u_h
    return out


def solve_backward_psi(
    rhs,
    u_ref,
    problem: ProblemSpec,
    u_shape: DgSolution | None = None,
    ops: SpaceOperators | None = None,
    lin_cfg: LinearSolveConfig | None = None,
) -> BackwardSolution:
    """Backward linearized solve with reaction (3 u_ref^2 - 1)/eps^2.

    rhs supplies the data term: either an object with per-slab
    coefficients on the same partition (its L2 pairing enters through
    Theta) or a callable g(t, x) integrated by the time quadrature.
    u_ref supplies the frozen coefficient (callable or slab solution);
    u_shape fixes partition/basis/space when rhs has no .coeffs (defaults
    to rhs itself, or to u_ref when that is a slab solution).

    The discrete Laplacian d_j = M^{-1} A psi_j is solved per time node
    and stored, so (d(t), w) = a(psi(t), w) holds for all discrete w at
    every time in the slab.
    """
    shape = u_shape
    if shape is None:
        shape = rhs if hasattr(rhs, "eval_slab") else u_ref
    if not hasattr(shape, "eval_slab"):
        raise ValueError("need a slab-polynomial object to fix the discretization")
    ops = ops or SpaceOperators(shape.space)
    lin_cfg = lin_cfg or LinearSolveConfig()
    inv_eps2 = 1.0 / problem.epsilon**2
    basis = shape.basis
    M = ops.mass()
    A = ops.stiffness()
    Theta = DgTimeOperators.from_basis(basis).Theta

    def reaction(n, t0, tau):
        vals = _reference_values(u_ref, n, t0, tau, basis, ops)
        return inv_eps2 * (3.0 * vals**2 - 1.0)

    if hasattr(rhs, "coeffs"):
        def data(n, t0, tau):
            return tau * (Theta @ (M @ rhs.coeffs(n).T).T)
    else:
        def data(n, t0, tau):
            loads = np.stack([
                ops.load(lambda x, tq=t0 + tau * q: rhs(tq, x))
                for q in basis.quad_points
            ])
            return tau * np.einsum("q,qi,qa->ia", basis.quad_weights, basis.values, loads)

    out = _march_backward(data, reaction, shape, ops, lin_cfg, kind="linearized")
    out.rhs_reference = rhs
    cg = spd_config(lin_cfg)
    out.laplacian = [
        np.stack([solve_linear(M, A @ row, cg) for row in coeffs])
        for coeffs in out.slab_coeffs
    ]
    return out


# ---------------------------------------------------------------------------
# identity evaluation


def _exact_rule(k: int) -> TimeBasis:
    """Fresh full-exactness rule, independent of whatever the solver used."""
    return make_time_basis(k)


def duality_identity_report(
    u_h: DgSolution,
    phi: BackwardSolution,
    problem: ProblemSpec,
    ops: SpaceOperators | None = None,
) -> IdentityReport:
    """Evaluate int ||u_h||^2 against its dual representation.

    LHS = int_0^T ||u_h||^2; RHS = (u0, phi0+) + (2/eps^2) int (phi, u_h)
    + int (f, phi).  All integrals use an independently constructed exact
    rule, so under-integrated solves fail this check instead of hiding
    behind same-rule cancellations.
    """
    ops = ops or SpaceOperators(u_h.space)
    rule = _exact_rule(u_h.basis.k)
    M = ops.mass()
    pts = u_h.partition.points
    lhs = 0.0
    cross = 0.0
    force = 0.0
    for n in range(1, u_h.partition.n_slabs + 1):
        tau = pts[n] - pts[n - 1]
        uq = u_h.eval_slab(n, rule.quad_points)
        pq = phi.eval_slab(n, rule.quad_points)
        mu = (M @ uq.T).T
        lhs += tau * float(np.einsum("q,qa,qa->", rule.quad_weights, mu, uq))
        cross += tau * float(np.einsum("q,qa,qa->", rule.quad_weights, mu, pq))
        if problem.f is not None:
            for iq, (q, w) in enumerate(zip(rule.quad_points, rule.quad_weights)):
                fv = ops.load(lambda x, tq=pts[n - 1] + tau * q: problem.f(tq, x))
                force += tau * w * float(fv @ pq[iq])
    rhs = float(u_h.initial @ (M @ phi.left_plus(1))) + 2.0 / problem.epsilon**2 * cross + force
    residual = abs(lhs - rhs) / (abs(lhs) + abs(rhs) + 1.0)
    return IdentityReport(
        name="duality",
        lhs=lhs,
        rhs=rhs,
        residual=residual,
        details={"initial_pairing": float(u_h.initial @ (M @ phi.left_plus(1))),
                 "cross_term": 2.0 / problem.epsilon**2 * cross,
                 "forcing_term": force},
    )


def duality_identity_residual(
    u_h: DgSolution,
    phi: BackwardSolution,
    problem: ProblemSpec,
    ops: SpaceOperators | None = None,
) -> float:
    """Scaled residual |LHS - RHS| / (|LHS| + |RHS| + 1) of the duality identity."""
    return duality_identity_report(u_h, phi, problem, ops).residual


def _backward_energy_report(
    psi: BackwardSolution,
    reaction_quadratic,
    data_pairing,
    ops: SpaceOperators,
) -> tuple[list[float], list[float], list[float]]:
    """Per-slab balance of a backward solve tested with its own solution.

    Returns (lhs_n, rhs_n, residual_n) where

      lhs_n = 1/2 ||psi_n(0)||^2 + 1/2 ||psi_n(1) - psi_in||^2
              - 1/2 ||psi_in||^2 + int_slab [ a(psi,psi) + reaction(psi,psi) ]
      rhs_n = int_slab (data, psi).

    This is the computed system dotted with its own coefficients, so it
    holds to solver tolerance with the solver's quadrature.
    """
    basis = psi.basis
    M = ops.mass()
    A = ops.stiffness()
    pts = psi.partition.points
    lhs_list, rhs_list, res_list = [], [], []
    for n in range(1, psi.partition.n_slabs + 1):
        tau = pts[n] - pts[n - 1]
        start = psi.left_plus(n)
        end = psi.right_trace(n)
        incoming = psi.incoming(n)
        jump = end - incoming
        lhs = 0.5 * float(start @ (M @ start)) + 0.5 * float(jump @ (M @ jump))
        lhs -= 0.5 * float(incoming @ (M @ incoming))
        pq = psi.eval_slab(n, basis.quad_points)
        for q, w in enumerate(basis.quad_weights):
            row = pq[q]
            lhs += tau * w * (float(row @ (A @ row)) + reaction_quadratic(n, q, row))
        rhs = data_pairing(n, tau, pq)
        lhs_list.append(lhs)
        rhs_list.append(rhs)
        res_list.append(abs(lhs - rhs) / (abs(lhs) + abs(rhs) + 1.0))
    return lhs_list, rhs_list, res_list


def dual_stability_report(
    u_h: DgSolution,
    phi: BackwardSolution,
    problem: ProblemSpec,
    ops: SpaceOperators | None = None,
) -> IdentityReport:
    """Per-slab dual balance plus the Young-inequality stability bound.

    The equality (checked per slab, machine accurate) is the dual system
    tested with phi itself.  Absorbing the data pairing by Young's
    inequality gives

      1/2 ||phi(0+)||^2 + 1/2 sum ||[phi]||^2 + int ||grad phi||^2
        + (1/eps^2) int ||u_h phi||^2 + (1/(2 eps^2)) int ||phi||^2
      <= (eps^2/2) int ||u_h||^2,

    whose slack is reported in the details.
    """
    ops = ops or SpaceOperators(u_h.space)
    inv_eps2 = 1.0 / problem.epsilon**2
    basis = u_h.basis
    M = ops.mass()
    pts = u_h.partition.points
    u_fields: dict[int, np.ndarray] = {}

    def ufield(n):
        if n not in u_fields:
            tau = pts[n] - pts[n - 1]
            u_fields[n] = _reference_values(u_h, n, pts[n - 1], tau, basis, ops)
        return u_fields[n]

    def reaction_quadratic(n, q, row):
        pv = ops.eval_free(row)
        uv = ufield(n)[q]
        return inv_eps2 * (ops.integrate((uv * pv) ** 2) + ops.integrate(pv**2))

    def data_pairing(n, tau, pq):
        mu = (M @ u_h.eval_slab(n, basis.quad_points).T).T
        return tau * float(np.einsum("q,qa,qa->", basis.quad_weights, mu, pq))

    lhs_n, rhs_n, res_n = _backward_energy_report(
        phi, reaction_quadratic, data_pairing, ops)

    # Young-form bound assembled from the same computed quantities.
    grad_sq = 0.0
    u_phi_sq = 0.0
    phi_sq = 0.0
    u_sq = 0.0
    jumps = 0.0
    A = ops.stiffness()
    for n in range(1, u_h.partition.n_slabs + 1):
        tau = pts[n] - pts[n - 1]
        pq = phi.eval_slab(n, basis.quad_points)
        uslab = u_h.eval_slab(n, basis.quad_points)
        uq = ufield(n)
        for q, w in enumerate(basis.quad_weights):
            row = pq[q]
            pv = ops.eval_free(row)
            grad_sq += tau * w * float(row @ (A @ row))
            u_phi_sq += tau * w * ops.integrate((uq[q] * pv) ** 2)
            phi_sq += tau * w * float(row @ (M @ row))
            u_sq += tau * w * float(uslab[q] @ (M @ uslab[q]))
        jump = phi.right_trace(n) - phi.incoming(n)
        jumps += float(jump @ (M @ jump))
    start = phi.left_plus(1)
    young_lhs = (0.5 * float(start @ (M @ start)) + 0.5 * jumps + grad_sq
                 + inv_eps2 * u_phi_sq + 0.5 * inv_eps2 * phi_sq)
    young_rhs = 0.5 * problem.epsilon**2 * u_sq
    return IdentityReport(
        name="backward_dual_stability",
        lhs=float(sum(lhs_n)),
        rhs=float(sum(rhs_n)),
        residual=float(max(res_n)),
        details={
            "per_slab_residuals": [float(r) for r in res_n],
            "young_lhs": float(young_lhs),
            "young_rhs": float(young_rhs),
            "young_slack": float(young_rhs - young_lhs),
        },
    )


def psi_chain_report(
    psi: BackwardSolution,
    u_ref,
    rhs,
    problem: ProblemSpec,
    ops: SpaceOperators | None = None,
    spectral_floor=None,
) -> IdentityReport:
    """Per-slab balance of the linearized backward solve.

    Same structure as the dual report with reaction (3 u^2 - 1)/eps^2;
    the data pairing uses whatever rhs the solve was given.  When
    spectral_floor is supplied (a callable t -> lambda_min of the
    linearized spatial operator), the details record the slack of

        int [ a(psi,psi) + reaction ] >= int lambda_min(t) ||psi||^2

    on each slab, the discrete counterpart of bounding the operator by
    its principal eigenvalue.
    """
    ops = ops or SpaceOperators(psi.space)
    inv_eps2 = 1.0 / problem.epsilon**2
    basis = psi.basis
    M = ops.mass()
    A = ops.stiffness()
    pts = psi.partition.points
    ref_fields: dict[int, np.ndarray] = {}

    def rfield(n):
        if n not in ref_fields:
            tau = pts[n] - pts[n - 1]
            ref_fields[n] = _reference_values(u_ref, n, pts[n - 1], tau, basis, ops)
        return ref_fields[n]

    def reaction_quadratic(n, q, row):
        pv = ops.eval_free(row)
        return inv_eps2 * ops.integrate((3.0 * rfield(n)[q] ** 2 - 1.0) * pv**2)

    if hasattr(rhs, "coeffs"):
        def data_pairing(n, tau, pq):
            g = (M @ rhs.eval_slab(n, basis.quad_points).T).T
            return tau * float(np.einsum("q,qa,qa->", basis.quad_weights, g, pq))
    else:
        def data_pairing(n, tau, pq):
            t0 = pts[n - 1]
            total = 0.0
            for q, w in enumerate(basis.quad_weights):
                gv = ops.load(lambda x, tq=t0 + tau * basis.quad_points[q]: rhs(tq, x))
                total += tau * w * float(gv @ pq[q])
            return total

    lhs_n, rhs_n, res_n = _backward_energy_report(
        psi, reaction_quadratic, data_pairing, ops)
    details = {"per_slab_residuals": [float(r) for r in res_n]}
    if spectral_floor is not None:
        slacks = []
        for n in range(1, psi.partition.n_slabs + 1):
            tau = pts[n] - pts[n - 1]
            pq = psi.eval_slab(n, basis.quad_points)
            form = 0.0
            floor = 0.0
            for q, w in enumerate(basis.quad_weights):
                row = pq[q]
                form += tau * w * (float(row @ (A @ row)) + reaction_quadratic(n, q, row))
                lam = spectral_floor(pts[n - 1] + tau * basis.quad_points[q])
                floor += tau * w * lam * float(row @ (M @ row))
            slacks.append(float(form - floor))
        details["spectral_slack_per_slab"] = slacks
    return IdentityReport(
        name="linearized_backward_stability",
        lhs=float(sum(lhs_n)),
        rhs=float(sum(rhs_n)),
        residual=float(max(res_n)),
        details=details,
    )


def laplacian_consistency_residual(psi: BackwardSolution, ops: SpaceOperators | None = None) -> float:
    """Worst residual of (Delta_h psi, w) = a(psi, w) over nodes and slabs."""
    ops = ops or SpaceOperators(psi.space)
    M = ops.mass()
    A = ops.stiffness()
    worst = 0.0
    for coeffs, lap in zip(psi.slab_coeffs, psi.laplacian):
        for row, drow in zip(coeffs, lap):
            lhs = M @ drow
            rhs = A @ row
            scale = float(np.linalg.norm(rhs)) + 1.0
            worst = max(worst, float(np.linalg.norm(lhs - rhs)) / scale)
    return worst


# ---------------------------------------------------------------------------
# projections


def solve_parabolic_projection(
    exact: ManufacturedSolution,
    ops: SpaceOperators,
    partition: TimePartition,
    basis: TimeBasis,
    lin_cfg: LinearSolveConfig | None = None,
) -> DgSolution:
    """dG solve of the linear heat equation reproducing a smooth function.

    The load is assembled in the integrated-by-parts form
    (u_t, w) + (grad u, grad w) from the analytic time derivative and
    gradient, and the initial value is the L2 projection of u(0).  The
    result is the parabolic projection of the exact function onto the
    space-time discrete space.
    """
    lin_cfg = lin_cfg or LinearSolveConfig()
    time_ops = DgTimeOperators.from_basis(basis)
    M = ops.mass()
    A = ops.stiffness()
    p_prev = l2_project(lambda x: exact.value(0.0, x), ops, lin_cfg)
    sol = DgSolution(partition=partition, basis=basis, space=ops.space, initial=p_prev)
    pts = partition.points
    systems: dict[float, sp.csr_array] = {}
    for n in range(1, partition.n_slabs + 1):
        t0 = pts[n - 1]
        tau = pts[n] - pts[n - 1]
        if tau not in systems:
            systems[tau] = sp.csr_array(
                sp.kron(time_ops.G, M, format="csr")
                + tau * sp.kron(time_ops.Theta, A, format="csr")
            )
        loads = np.stack([
            ops.load(lambda x, tq=t0 + tau * q: exact.dt(tq, x))
            + ops.gradient_load(lambda x, tq=t0 + tau * q: exact.grad(tq, x))
            for q in basis.quad_points
        ])
        rhs = np.outer(time_ops.left_load, M @ p_prev)
        rhs += tau * np.einsum("q,qi,qa->ia", basis.quad_weights, basis.values, loads)
        coeffs = solve_linear(systems[tau], rhs.ravel(), lin_cfg).reshape(basis.k + 1, -1)
        sol.slabs.append(SlabSolution(index=n, t_start=float(t0), t_end=float(pts[n]),
                                      coeffs=coeffs, left_incoming=p_prev))
        p_prev = basis.right_values @ coeffs
    return sol


def local_projection_slab(
    w,
    t_start: float,
    t_end: float,
    ops: SpaceOperators,
    basis: TimeBasis,
    lin_cfg: LinearSolveConfig | None = None,
) -> np.ndarray:
    """Slab-local projection: right-endpoint match plus k time moments.

    The coefficients C_j satisfy

        sum_j chi_j(1) C_j = P_h w(t_end),
        sum_j [int that^m chi_j] M C_j = int that^m (w(t), phi) dthat,
        m = 0 .. k-1,

    solved as a (k+1) x (k+1) time system for the rows Y_j = M C_j,
    followed by mass solves.  The moment integrals use the basis rule, so
    they are exact for polynomial w and match the verification quadrature.
    """
    cfg = spd_config(lin_cfg or LinearSolveConfig())
    k = basis.k
    M = ops.mass()
    tau = t_end - t_start
    qp, qw = basis.quad_points, basis.quad_weights
    loads = np.stack([ops.load(lambda x, tq=t_start + tau * q: w(tq, x)) for q in qp])

    T = np.zeros((k + 1, k + 1))
    R = np.zeros((k + 1, ops.space.n_free))
    for m in range(k):
        T[m] = np.einsum("q,q,qj->j", qw, qp**m, basis.values)
        R[m] = np.einsum("q,q,qa->a", qw, qp**m, loads)
    T[k] = basis.right_values
    R[k] = ops.load(lambda x: w(t_end, x))
    Y = np.linalg.solve(T, R)
    return np.stack([solve_linear(M, y, cfg) for y in Y])


def local_projection(
    w,
    partition: TimePartition,
    ops: SpaceOperators,
    basis: TimeBasis,
    lin_cfg: LinearSolveConfig | None = None,
) -> DgSolution:
    """Apply the slab-local projection on every slab of a partition."""
    lin_cfg = lin_cfg or LinearSolveConfig()
    initial = l2_project(lambda x: w(partition.points[0], x), ops, lin_cfg)
    sol = DgSolution(partition=partition, basis=basis, space=ops.space, initial=initial)
    pts = partition.points
    for n in range(1, partition.n_slabs + 1):
        coeffs = local_projection_slab(w, pts[n - 1], pts[n], ops, basis, lin_cfg)
        sol.slabs.append(SlabSolution(index=n, t_start=float(pts[n - 1]),
                                      t_end=float(pts[n]), coeffs=coeffs,
                                      left_incoming=sol.right_trace(n - 1)))
    return sol
