"""Sparse linear algebra: CSR construction, linear solves, eigen diagnostic.

Storage and the Krylov/direct kernels are scipy; this module pins down the
contracts the rest of the package relies on (duplicate-summing COO builder,
enforced relative residuals, deterministic shifted inverse power iteration
for the smallest generalized eigenvalue).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.io
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

VALID_METHODS = ("conjugate_gradient", "bicgstab", "dense_lu")


@dataclass(frozen=True)
class LinearSolveConfig:
    """How to solve A x = b.

    method is one of conjugate_gradient (SPD systems), bicgstab
    (nonsymmetric), dense_lu.  Iterative methods are Jacobi preconditioned
    and must reach ||b - A x|| <= rel_tolerance * ||b||; failure raises
    LinearSolveError carrying the achieved residual.
    """

    method: str = "bicgstab"
    rel_tolerance: float = 1e-11
    max_iterations: int = 20000

    def __post_init__(self):
        if self.method not in VALID_METHODS:
            raise ValueError(f"unknown linear method {self.method!r}, expected one of {VALID_METHODS}")
        if not self.rel_tolerance > 0:
            raise ValueError("rel_tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


class LinearSolveError(RuntimeError):
    """Linear solve failed; .achieved_residual holds the relative residual reached."""

    def __init__(self, message: str, achieved_residual: float | None = None):
        super().__init__(message)
        self.achieved_residual = achieved_residual


def coo_to_csr(rows, cols, vals, shape) -> sp.csr_array:
    """CSR matrix from coordinate triplets; duplicate entries are summed."""
    out = sp.coo_array((np.asarray(vals, dtype=float), (rows, cols)), shape=shape).tocsr()
    out.sum_duplicates()
    out.sort_indices()
    return out


def dump_matrix_market(matrix, path: str) -> None:
    """Write a matrix in MatrixMarket coordinate text format."""
    scipy.io.mmwrite(path, sp.coo_array(matrix))


def _jacobi(A: sp.csr_array) -> spla.LinearOperator:
    d = A.diagonal()
    if np.any(d == 0.0):
        raise LinearSolveError("Jacobi preconditioner hit a zero diagonal entry")
    inv = 1.0 / d
    return spla.LinearOperator(A.shape, matvec=lambda x: inv * x)


def solve_linear(A, b: np.ndarray, config: LinearSolveConfig | None = None) -> np.ndarray:
    """Solve A x = b under the given configuration.

    b = 0 returns the exact zero vector.  Iterative failures and singular
    dense factorizations raise LinearSolveError.
    """
    cfg = config or LinearSolveConfig()
    b = np.asarray(b, dtype=float)
    norm_b = float(np.linalg.norm(b))
    if norm_b == 0.0:
        return np.zeros_like(b)

    if cfg.method == "dense_lu":
        dense = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
        try:
            lu, piv = scipy.linalg.lu_factor(dense)
        except scipy.linalg.LinAlgError as exc:
            raise LinearSolveError(f"dense LU factorization failed: {exc}") from exc
        if not np.all(np.isfinite(lu)):
            raise LinearSolveError("dense LU factorization produced non-finite factors (singular matrix)")
        return scipy.linalg.lu_solve((lu, piv), b)

    A = sp.csr_array(A)
    kernel = spla.cg if cfg.method == "conjugate_gradient" else spla.bicgstab
    precond = _jacobi(A)

    # One tight solve first.  A breakdown flag (info < 0) near the rounding
    # floor is harmless as long as the returned iterate already meets the
    # contract on the true residual, so judge by that, not by info.
    x = np.zeros_like(b)
    rel = 1.0
    cand, _info = kernel(
        A, b, rtol=cfg.rel_tolerance, atol=0.0,
        maxiter=cfg.max_iterations, M=precond,
    )
    if np.all(np.isfinite(cand)):
        r_cand = b - A @ cand
        rel_cand = float(np.linalg.norm(r_cand)) / norm_b
        if rel_cand < rel:
            x, rel = cand, rel_cand
    if rel <= cfg.rel_tolerance:
        return x

    # Rescue by restarted defect correction: solve A d = r for the current
    # true residual and keep whatever improves it.  The defect solves use
    # GMRES because the two-sided recurrences (bicgstab especially) break
    # down when the defect is near their rounding floor, while the Arnoldi
    # process cannot break down and its restarts recompute true residuals.
    r = b - A @ x
    for _cycle in range(8):
        d, _info = spla.gmres(
            A, r, rtol=max(1e-10, cfg.rel_tolerance), atol=0.0,
            restart=50, maxiter=40, M=precond,
        )
        progress = False
        if np.all(np.isfinite(d)):
            cand = x + d
            r_cand = b - A @ cand
            rel_cand = float(np.linalg.norm(r_cand)) / norm_b
            if rel_cand < 0.9 * rel:
                x, r, rel = cand, r_cand, rel_cand
                progress = True
        if rel <= cfg.rel_tolerance:
            return x
        if not progress:
            break  # stagnated at the attainable floor
    raise LinearSolveError(
        f"{cfg.method} did not reach relative residual {cfg.rel_tolerance:g} "
        f"within {cfg.max_iterations} iterations per cycle (achieved {rel:.3e})",
        achieved_residual=rel,
    )


# ---------------------------------------------------------------------------
# smallest generalized eigenvalue


@dataclass
class EigenResult:
    value: float
    vector: np.ndarray
    iterations: int
    residual: float
    used_dense_fallback: bool
    shift: float


_DENSE_FALLBACK_LIMIT = 600


def _estimate_shift(A, M) -> float:
    """Coarse smallest-eigenvalue estimate to seed the inverse iteration.

    A short low-accuracy Lanczos run brackets the smallest eigenvalue; the
    shift is then placed a safe margin below it.  Diagonal quotients are
    only a last resort (they can sit far above the smallest eigenvalue).
    """
    n = A.shape[0]
    v0 = np.full(n, 1.0 / np.sqrt(n))
    try:
        est = float(spla.eigsh(A, k=1, M=M, which="SA", tol=1e-4,
                               maxiter=50 * n, v0=v0,
                               return_eigenvectors=False)[0])
    except Exception:
        est = float(np.min(A.diagonal() / M.diagonal()))
    return est - 0.05 * (1.0 + abs(est))


def _dense_smallest(A, M) -> tuple[float, np.ndarray]:
    Ad = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
    Md = M.toarray() if sp.issparse(M) else np.asarray(M, dtype=float)
    vals, vecs = scipy.linalg.eigh(Ad, Md)
    return float(vals[0]), vecs[:, 0]


def smallest_generalized_eigenvalue(
    A,
    M,
    shift: float | None = None,
    tol: float = 1e-10,
    max_iterations: int = 400,
) -> EigenResult:
    """Smallest eigenvalue of A v = lambda M v (A symmetric, M SPD).

    Shifted inverse power iteration: factor A - shift*M once, iterate
    x <- (A - shift*M)^{-1} M x with M-normalization, and track the Rayleigh
    quotient.  The caller should pass a shift strictly below the smallest
    eigenvalue (for reaction-shifted stiffness forms the assembled potential
    minimum certifies one); without it a coarse Lanczos estimate seeds the
    shift.
    A singular factorization perturbs the shift and retries; only if the
    iteration still breaks down and the system is small (< 600 unknowns) is
    a dense eigensolve used as a rescue path, flagged in the result.

    Returns the Rayleigh quotient of the converged vector, so
    value == v.T A v / v.T M v to round-off by construction.
    """
    A = sp.csr_array(A)
    M = sp.csr_array(M)
    n = A.shape[0]
    if shift is None:
        shift = _estimate_shift(A, M)

    rng = np.random.default_rng(0)  # fixed seed: deterministic output
    x = rng.standard_normal(n)

    def m_normalize(v):
        s = float(v @ (M @ v))
        if s <= 0 or not np.isfinite(s):
            raise LinearSolveError("eigen iteration lost M-positivity")
        return v / np.sqrt(s)

    total_iters = 0
    current_shift = float(shift)
    for restart in range(6):
        try:
            solve = spla.factorized(sp.csc_matrix(A - current_shift * M))
            x = m_normalize(x)
            lam = float(x @ (A @ x))
            for it in range(max_iterations):
                total_iters += 1
                y = solve(M @ x)
                if not np.all(np.isfinite(y)):
                    raise RuntimeError("non-finite inverse iteration step")
                x = m_normalize(y)
                lam = float(x @ (A @ x))  # x is M-normalized
                r = A @ x - lam * (M @ x)
                res = float(np.linalg.norm(r))
                bound = tol * float(np.linalg.norm(M @ x)) * (1.0 + abs(lam))
                if res <= bound:
                    return EigenResult(lam, x, total_iters, res, False, current_shift)
                # slow convergence: move the shift closer from below
                if it > 0 and it % 25 == 0:
                    current_shift = lam - 0.01 * (1.0 + abs(lam))
                    solve = spla.factorized(sp.csc_matrix(A - current_shift * M))
            # out of iterations: nudge the shift toward the current estimate
            current_shift = lam - 1e-3 * (1.0 + abs(lam))
        except (RuntimeError, ValueError):
            # singular or broken factorization: perturb the shift and retry
            current_shift -= 10.0 ** (-8 + restart) * (1.0 + abs(current_shift))

    if n < _DENSE_FALLBACK_LIMIT:
        lam, v = _dense_smallest(A, M)
        v = m_normalize(v)
        lam = float(v @ (A @ v))
        res = float(np.linalg.norm(A @ v - lam * (M @ v)))
        return EigenResult(lam, v, total_iters, res, True, current_shift)
    raise LinearSolveError(
        f"inverse iteration failed to converge for n={n} after shift retries"
    )
