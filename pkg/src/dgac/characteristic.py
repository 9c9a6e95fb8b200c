"""Discrete characteristic polynomials for dG(k) time slabs.

For a cut point that in (0, 1], rho in P_k is the discrete surrogate of the
indicator of [0, that): it satisfies rho(0) = 1 and

    int_0^1 rho q = int_0^that q    for every q in P_{k-1}.

Two independent construction routes are provided: the explicit formula
rho(s) = 1 + s * sum_i c_i phat_i(s) with phat_i orthonormal in P_{k-1}
under the weighted product (p, q) = int_0^1 eta p(eta) q(eta) d eta and
c_i = -int_that^1 phat_i, and a direct solve of the (k+1) x (k+1) moment
system in the monomial basis.  They agree to rounding and cross-check each
other in the tests.

Applying the map coefficient-wise to a slab polynomial (time-nodal
representation) yields the discrete characteristic truncation u_c with
u_c(0) = u(0) and int_0^1 (u_c, q) = int_0^that (u, q) for q in P_{k-1}.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .timebase import TimeBasis


@dataclass(frozen=True)
class CharacteristicPoly:
    """rho in monomial coefficients (ascending powers), with its cut point."""

    k: int
    t_hat: float
    coeffs: np.ndarray

    def __call__(self, s) -> np.ndarray:
        return np.polynomial.polynomial.polyval(np.asarray(s, dtype=float), self.coeffs)

    def moment(self, m: int) -> float:
        """int_0^1 rho(s) s^m ds, exact polynomial integration."""
        j = np.arange(self.coeffs.size)
        return float(np.sum(self.coeffs / (j + m + 1)))


def _check_cut(t_hat: float) -> float:
    t = float(t_hat)
    if not 0.0 < t <= 1.0:
        raise ValueError(f"cut point must lie in (0, 1], got {t}")
    return t


# The monomial Gram and moment matrices are Hilbert-like; at k = 4 their
# conditioning eats five digits in double precision, which is too close to
# the 1e-10 route-agreement requirement.  The systems are at most 5x5, so
# both routes run their dense solves in extended precision instead.


def _solve_ld(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Gaussian elimination with partial pivoting in long double."""
    A = np.array(A, dtype=np.longdouble)
    x = np.array(b, dtype=np.longdouble)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[:, None]
    n = A.shape[0]
    for col in range(n):
        p = col + int(np.argmax(np.abs(A[col:, col])))
        if A[p, col] == 0:
            raise np.linalg.LinAlgError("singular moment system")
        if p != col:
            A[[col, p]] = A[[p, col]]
            x[[col, p]] = x[[p, col]]
        factors = A[col + 1 :, col] / A[col, col]
        A[col + 1 :, col:] -= factors[:, None] * A[col, col:]
        x[col + 1 :] -= factors[:, None] * x[col]
    for col in range(n - 1, -1, -1):
        x[col] = (x[col] - A[col, col + 1 :] @ x[col + 1 :]) / A[col, col]
    return x[:, 0] if squeeze else x


def _weighted_orthonormal_basis(k: int) -> np.ndarray:
    """Monomial coefficients (rows, long double) of an orthonormal basis of
    P_{k-1} under (p, q) = int_0^1 eta p q d eta, via Cholesky of the Gram."""
    if k == 0:
        return np.zeros((0, 0), dtype=np.longdouble)
    i = np.arange(k)
    gram = 1.0 / np.asarray(i[:, None] + i[None, :] + 2, dtype=np.longdouble)
    L = np.zeros_like(gram)
    for a in range(k):
        L[a, a] = np.sqrt(gram[a, a] - np.sum(L[a, :a] ** 2))
        for b in range(a + 1, k):
            L[b, a] = (gram[b, a] - np.sum(L[b, :a] * L[a, :a])) / L[a, a]
    # rows of inv(L) give orthonormal combinations of the monomials
    return _solve_ld(L, np.eye(k))


def _explicit_route(k: int, t_hat: float) -> np.ndarray:
    if k == 0:
        return np.array([1.0])
    P = _weighted_orthonormal_basis(k)  # (k, k) rows = phat_i in monomials
    powers = np.arange(1, k + 1)
    # int_that^1 eta^j d eta for monomial antiderivatives
    tails = (1.0 - np.longdouble(t_hat) ** powers) / powers
    c = -(P @ tails)
    r = c @ P                      # r(s) = sum_i c_i phat_i(s), degree k-1
    coeffs = np.zeros(k + 1, dtype=np.longdouble)
    coeffs[0] = 1.0
    coeffs[1:] += r                # rho = 1 + s * r(s)
    return coeffs.astype(float)


def _moment_route(k: int, t_hat: float) -> np.ndarray:
    # row 0: rho(0) = 1; row m (1..k): int_0^1 rho s^{m-1} = that^m / m
    A = np.zeros((k + 1, k + 1), dtype=np.longdouble)
    rhs = np.zeros(k + 1, dtype=np.longdouble)
    A[0, 0] = 1.0
    rhs[0] = 1.0
    t = np.longdouble(t_hat)
    for m in range(1, k + 1):
        A[m, :] = 1.0 / np.asarray(m + np.arange(k + 1), dtype=np.longdouble)
        rhs[m] = t**m / m
    return _solve_ld(A, rhs).astype(float)


def discrete_characteristic(k: int, t_hat: float, method: str = "explicit") -> CharacteristicPoly:
    """Construct rho for degree k and cut point that in (0, 1].

    method selects the construction route: "explicit" (weighted orthonormal
    basis formula) or "moments" (direct linear solve).  Both satisfy
    rho(0) = 1 and the k moment conditions to rounding; t_hat = 1 gives
    rho identically 1.
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    t = _check_cut(t_hat)
    if method == "explicit":
        coeffs = _explicit_route(k, t)
    elif method == "moments":
        coeffs = _moment_route(k, t)
    else:
        raise ValueError(f"unknown method {method!r}")
    return CharacteristicPoly(k=k, t_hat=t, coeffs=coeffs)


def _nodal_to_monomial(basis: TimeBasis) -> np.ndarray:
    """Columns: monomial coefficients of each Lagrange basis polynomial."""
    m = basis.k + 1
    V = np.vander(basis.nodes, m, increasing=True)  # V[i, p] = node_i^p
    return np.linalg.solve(V, np.eye(m))            # column j: chi_j coefficients


def characteristic_transfer_matrix(basis: TimeBasis, t_hat: float) -> np.ndarray:
    """Nodal matrix T of the characteristic map: coeffs_out = T @ coeffs_in.

    Column j holds the nodal values of the truncation of the j-th Lagrange
    basis polynomial, obtained by solving the moment system with its exact
    partial moments int_0^that chi_j s^{m-1} ds as data.
    """
    t = _check_cut(t_hat)
    k = basis.k
    mono = _nodal_to_monomial(basis)  # (k+1, k+1), column j = chi_j
    A = np.zeros((k + 1, k + 1), dtype=np.longdouble)
    A[0, 0] = 1.0
    for m in range(1, k + 1):
        A[m, :] = 1.0 / np.asarray(m + np.arange(k + 1), dtype=np.longdouble)
    rhs = np.zeros((k + 1, k + 1), dtype=np.longdouble)
    rhs[0, :] = basis.left_values
    powers = np.arange(k + 1)
    tl = np.longdouble(t)
    for m in range(1, k + 1):
        # int_0^t s^{m-1} s^p ds = t^{m+p} / (m+p)
        rhs[m, :] = mono.T.astype(np.longdouble) @ (tl ** (m + powers) / (m + powers))
    tilde_mono = _solve_ld(A, rhs)                  # column j: truncated chi_j
    V = np.vander(basis.nodes, k + 1, increasing=True)
    return (V.astype(np.longdouble) @ tilde_mono).astype(float)


def characteristic_apply(slab_coeffs: np.ndarray, basis: TimeBasis, t_hat: float) -> np.ndarray:
    """Apply the characteristic truncation to slab coefficients (k+1, m)."""
    T = characteristic_transfer_matrix(basis, t_hat)
    return T @ np.asarray(slab_coeffs, dtype=float)


def sup_norm_scan(k: int, n_cuts: int = 101, n_samples: int = 2001) -> dict:
    """Scan sup_s |rho_that(s)| over a uniform grid of cut points.

    Returns a table of (t_hat, sup) pairs over n_cuts uniform cut points in
    (0, 1] and the overall constant C_k = max over the scan.  The sup for
    each cut is taken over n_samples uniform sample points of [0, 1]
    including both endpoints.
    """
    cuts = np.linspace(0.0, 1.0, n_cuts + 1)[1:]  # exclude 0, include 1
    s = np.linspace(0.0, 1.0, n_samples)
    rows = []
    worst = 0.0
    for t in cuts:
        rho = discrete_characteristic(k, float(t))
        sup = float(np.max(np.abs(rho(s))))
        rows.append((float(t), sup))
        worst = max(worst, sup)
    return {"k": k, "n_cuts": n_cuts, "n_samples": n_samples, "table": rows, "constant": worst}


def export_constant_table(path, k_max: int = 4, n_cuts: int = 101, n_samples: int = 2001) -> list:
    """Write the empirical constants C_k for k = 0..k_max to a CSV file.

    Each row is (k, constant) with the constant taken from sup_norm_scan
    at the given scan resolution.  Returns the rows as (int, float) pairs.
    """
    rows = [(k, sup_norm_scan(k, n_cuts, n_samples)["constant"]) for k in range(k_max + 1)]
    lines = ["k,constant"] + [f"{k},{c!r}" for k, c in rows]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return rows
