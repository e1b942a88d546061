import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np
import scipy.linalg

from ..errors import InvalidParameter

logger = logging.getLogger('piezobeam')


class Scheme(str, Enum):
    FEM = 'fem'
    ORFD = 'orfd'

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise InvalidParameter(f"unknown scheme {value!r}, expected 'fem' or 'orfd'", key_path='grid.scheme')


@dataclass(frozen=True)
class GridConfig:
    N: int
    L: float = 1.0
    scheme: Scheme = Scheme.FEM

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise InvalidParameter(f"must be a positive integer, got {self.N}", key_path='grid.N')
        object.__setattr__(self, 'N', int(self.N))
        object.__setattr__(self, 'scheme', Scheme.parse(self.scheme))

    @property
    def h(self):
        return self.L / (self.N + 1)

    @property
    def size(self):
        """Unknowns per field (nodes 1..N+1)."""
        return self.N + 1

    @property
    def nodes(self):
        return self.h * np.arange(1, self.N + 2)


@dataclass(frozen=True, eq=False)
class SystemOperator:
    """Assembled first-order operator [[0, I], [A, K]] with its building blocks.

    The damping block carries the 1/h of the boundary term once the mass and
    stiffness forms are divided by the mesh size.
    """

    params: object
    grid: GridConfig
    A_h: np.ndarray
    M_mass: np.ndarray
    B: np.ndarray
    C1: np.ndarray
    C2: np.ndarray
    C3: np.ndarray
    Op: np.ndarray
    scale: Optional[object] = field(default=None)

    @property
    def scheme(self):
        return self.grid.scheme

    @property
    def N(self):
        return self.grid.N

    @property
    def h(self):
        return self.grid.h

    @property
    def dimension(self):
        return self.Op.shape[0]

    @property
    def tag(self):
        return {'scheme': self.scheme.value, 'N': self.N, 'k1': self.params.k1, 'k2': self.params.k2}


def stiffness_matrix(N, h):
    """A_h = (1/h^2) tridiag(-1, 2, -1) with last row (..., -1, 1)."""
    n = N + 1
    A = 2.0 * np.eye(n) - np.eye(n, k=1) - np.eye(n, k=-1)
    A[-1, -1] = 1.0
    return A / h ** 2


def fem_mass_matrix(N):
    """Linear spline mass matrix (1/6) tridiag(1, 4, 1) with last diagonal entry 2/6."""
    n = N + 1
    M = 4.0 * np.eye(n) + np.eye(n, k=1) + np.eye(n, k=-1)
    M[-1, -1] = 2.0
    return M / 6.0


def orfd_mass_matrix(N):
    """Midpoint-averaging mass matrix (1/4) tridiag(1, 2, 1) with last diagonal entry 1/4."""
    n = N + 1
    M = 2.0 * np.eye(n) + np.eye(n, k=1) + np.eye(n, k=-1)
    M[-1, -1] = 1.0
    return M / 4.0


def mass_matrix(N, scheme):
    if Scheme.parse(scheme) is Scheme.FEM:
        return fem_mass_matrix(N)
    return orfd_mass_matrix(N)


def boundary_selector(N):
    n = N + 1
    B = np.zeros((n, n))
    B[-1, -1] = 1.0
    return B


def difference_matrix(N, h):
    """Backward first difference Z_h, (Z_h v)_j = (v_j - v_{j-1})/h with v_0 = 0.

    Z_h^T Z_h equals A_h.
    """
    n = N + 1
    return (np.eye(n) - np.eye(n, k=-1)) / h


def averaging_matrix(N):
    """Midpoint average S, (S v)_{j+1/2} = (v_j + v_{j+1})/2, j = 0..N, with v_0 = 0.

    S^T S equals the ORFD mass matrix.
    """
    n = N + 1
    return 0.5 * (np.eye(n) + np.eye(n, k=-1))


def midpoint_average(U):
    """Average of a grid function U_0..U_{N+1} at the midpoints x_{j+1/2}."""
    U = np.asarray(U)
    return 0.5 * (U[1:] + U[:-1])


def midpoint_difference(U, h):
    """Difference quotient of a grid function U_0..U_{N+1} at the midpoints."""
    U = np.asarray(U)
    return (U[1:] - U[:-1]) / h


def summation_by_parts_residual(U, V, h, W=None):
    """Residual of the discrete summation-by-parts identities.

    With W omitted, returns
    h sum dU V + h sum dV U + U_0 V_0 - U_{N+1} V_{N+1}
    over midpoint differences d and averages. With W given, returns the
    residual of the three-factor identity
    h sum dU V W + h sum U dV W + h sum U V dW + U_0 V_0 W_0 - U_{N+1} V_{N+1} W_{N+1}
    + (1/4) sum (U_{j+1} - U_j)(V_{j+1} - V_j)(W_{j+1} - W_j),
    products again taken of midpoint averages.
    """
    U = np.asarray(U, dtype=float)
    V = np.asarray(V, dtype=float)
    Ua, Va = midpoint_average(U), midpoint_average(V)
    dU, dV = midpoint_difference(U, h), midpoint_difference(V, h)
    if W is None:
        return h * np.sum(dU * Va) + h * np.sum(dV * Ua) + U[0] * V[0] - U[-1] * V[-1]

    W = np.asarray(W, dtype=float)
    Wa, dW = midpoint_average(W), midpoint_difference(W, h)
    cubic = 0.25 * np.sum(np.diff(U) * np.diff(V) * np.diff(W))
    return (h * np.sum(dU * Va * Wa + Ua * dV * Wa + Ua * Va * dW)
            + U[0] * V[0] * W[0] - U[-1] * V[-1] * W[-1] + cubic)


def kron_check(C, A, C2, A2):
    """Return the max deviation of the mixed-product identity (C x A)(C' x A') = CC' x AA'."""
    left = np.kron(C, A) @ np.kron(C2, A2)
    right = np.kron(C @ C2, A @ A2)
    return float(np.max(np.abs(left - right)))


def assemble_blocks(params, grid):
    """Assemble every block and the first-order operator for one scheme.

    Args:
        params (MaterialParams): Material constants and gains
        grid (GridConfig): Node count, beam length and scheme

    Returns:
        SystemOperator: Blocks and Op = [[0, I], [A, K]]
    """
    if not np.isclose(grid.L, params.L, rtol=1e-14, atol=0.0):
        raise InvalidParameter(f"grid length {grid.L} differs from beam length {params.L}", key_path='grid.L')

    N, h = grid.N, grid.h
    A_h = stiffness_matrix(N, h)
    M = mass_matrix(N, grid.scheme)
    B = boundary_selector(N)
    C1, C2, C3 = params.C1, params.C2, params.C3

    C1_inv = np.diag(1.0 / np.diag(C1))
    MinvA = scipy.linalg.solve(M, A_h, assume_a='pos')
    MinvB = scipy.linalg.solve(M, B, assume_a='pos')

    stiff = -np.kron(C1_inv @ C2, MinvA)
    damp = -np.kron(C1_inv @ C3, MinvB) / h

    n = 2 * (N + 1)
    Op = np.zeros((2 * n, 2 * n))
    Op[:n, n:] = np.eye(n)
    Op[n:, :n] = stiff
    Op[n:, n:] = damp

    logger.debug(f"Assembled {grid.scheme.value} operator: N={N}, h={h:.6g}, dimension={2 * n}")
    return SystemOperator(params=params, grid=grid, A_h=A_h, M_mass=M, B=B,
                          C1=C1, C2=C2, C3=C3, Op=Op)
