"""Problem definitions: the Allen-Cahn data and the built-in registry.

The equation solved is

    u_t - Laplace(u) + (1/eps^2) (u^3 - u) = f   on (0, T) x Omega,
    u = 0 on the boundary,  u(0) = u_0,

with eps the interface-width parameter.  Manufactured solutions carry the
analytic value, time derivative, gradient and Laplacian so that forcing
terms and error norms can be formed; initial profiles provide data without
an exact solution.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np


@dataclass(frozen=True)
class ManufacturedSolution:
    """Smooth space-time solution with the derivatives needed for forcing.

    Spatial arguments have shape (..., dimension); values drop the last axis.
    """

    name: str
    dimension: int
    value: Callable[[float, np.ndarray], np.ndarray]
    dt: Callable[[float, np.ndarray], np.ndarray]
    grad: Callable[[float, np.ndarray], np.ndarray]   # (..., dimension)
    laplacian: Callable[[float, np.ndarray], np.ndarray]

    def forcing(self, epsilon: float) -> Callable[[float, np.ndarray], np.ndarray]:
        """f = u_t - Laplace(u) + (u^3 - u)/eps^2 for this exact solution."""
        inv_eps2 = 1.0 / epsilon**2

        def f(t: float, x: np.ndarray) -> np.ndarray:
            u = self.value(t, x)
            return self.dt(t, x) - self.laplacian(t, x) + inv_eps2 * (u**3 - u)

        return f


@dataclass(frozen=True)
class InitialProfile:
    """Initial data without a known solution; forcing is zero.

    The value may depend on epsilon (interface profiles do), hence the
    extra argument.
    """

    name: str
    dimension: int
    value: Callable[[np.ndarray, float], np.ndarray]


def _expsine() -> ManufacturedSolution:
    pi = np.pi

    def u(t, x):
        return np.exp(-t) * np.sin(pi * x[..., 0])

    def du(t, x):
        return -np.exp(-t) * np.sin(pi * x[..., 0])

    def grad(t, x):
        g = pi * np.exp(-t) * np.cos(pi * x[..., 0])
        return g[..., None]

    def lap(t, x):
        return -(pi**2) * np.exp(-t) * np.sin(pi * x[..., 0])

    return ManufacturedSolution("expsine", 1, u, du, grad, lap)


def _expsine2d() -> ManufacturedSolution:
    pi = np.pi

    def u(t, x):
        return np.exp(-t) * np.sin(pi * x[..., 0]) * np.sin(pi * x[..., 1])

    def du(t, x):
        return -u(t, x)

    def grad(t, x):
        e = np.exp(-t)
        gx = pi * e * np.cos(pi * x[..., 0]) * np.sin(pi * x[..., 1])
        gy = pi * e * np.sin(pi * x[..., 0]) * np.cos(pi * x[..., 1])
        return np.stack([gx, gy], axis=-1)

    def lap(t, x):
        return -2.0 * pi**2 * u(t, x)

    return ManufacturedSolution("expsine2d", 2, u, du, grad, lap)


def _interface_profile(x: np.ndarray, epsilon: float) -> np.ndarray:
    return np.tanh((x[..., 0] - 0.5) / (np.sqrt(2.0) * epsilon))


MANUFACTURED: dict[str, ManufacturedSolution] = {
    "expsine": _expsine(),
    "expsine2d": _expsine2d(),
}

def _zero_profile(x: np.ndarray, epsilon: float) -> np.ndarray:
    return np.zeros(x.shape[:-1])


PROFILES: dict[str, InitialProfile] = {
    "interface": InitialProfile("interface", 1, _interface_profile),
    "zero": InitialProfile("zero", 1, _zero_profile),
    "zero2d": InitialProfile("zero2d", 2, _zero_profile),
}


@dataclass(frozen=True)
class ProblemSpec:
    """Fully specified initial boundary value problem instance."""

    dimension: int
    epsilon: float
    T: float
    u0: Callable[[np.ndarray], np.ndarray]
    f: Optional[Callable[[float, np.ndarray], np.ndarray]]  # None means zero forcing
    exact: Optional[ManufacturedSolution]
    name: str

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not self.T > 0:
            raise ValueError("final time must be positive")
        if self.dimension not in (1, 2):
            raise ValueError("dimension must be 1 or 2")


def make_problem(
    dimension: int,
    epsilon: float,
    T: float,
    manufactured: str | None = None,
    initial_profile: str | None = None,
) -> ProblemSpec:
    """Build a ProblemSpec from a registry id.

    Exactly one of manufactured / initial_profile must be given, and its
    dimension must match.
    """
    if (manufactured is None) == (initial_profile is None):
        raise ValueError("give exactly one of manufactured or initial_profile")
    if manufactured is not None:
        if manufactured not in MANUFACTURED:
            raise ValueError(
                f"unknown manufactured solution {manufactured!r}; "
                f"known: {sorted(MANUFACTURED)}"
            )
        exact = MANUFACTURED[manufactured]
        if exact.dimension != dimension:
            raise ValueError(
                f"{manufactured!r} is {exact.dimension}d but config says {dimension}d"
            )
        return ProblemSpec(
            dimension=dimension,
            epsilon=epsilon,
            T=T,
            u0=lambda x: exact.value(0.0, x),
            f=exact.forcing(epsilon),
            exact=exact,
            name=manufactured,
        )
    if initial_profile not in PROFILES:
        raise ValueError(
            f"unknown initial profile {initial_profile!r}; known: {sorted(PROFILES)}"
        )
    prof = PROFILES[initial_profile]
    if prof.dimension != dimension:
        raise ValueError(
            f"{initial_profile!r} is {prof.dimension}d but config says {dimension}d"
        )
    eps = epsilon
    return ProblemSpec(
        dimension=dimension,
        epsilon=eps,
        T=T,
        u0=lambda x: prof.value(x, eps),
        f=None,
        exact=None,
        name=initial_profile,
    )
