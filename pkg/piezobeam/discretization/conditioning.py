import logging
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg

from ..errors import FactorizationFailure

logger = logging.getLogger('piezobeam')


@dataclass(frozen=True, eq=False)
class ConditioningTransform:
    """Energy coordinates z = [R_K x; R_M xdot].

    R_K and R_M are the upper Cholesky factors of C2 x A_h and C1 x M, built as
    Kronecker products of the small factors. In these coordinates the operator
    is [[0, G], [-G^T, -D]] with G = R_K R_M^{-1}, D symmetric, and the energy is
    (h/2)|z|^2.
    """

    R_K: np.ndarray
    R_M: np.ndarray
    G: np.ndarray
    D: np.ndarray
    probe_block: np.ndarray
    operator: np.ndarray
    h: float

    @property
    def half(self):
        return self.R_K.shape[0]

    def to_energy_coordinates(self, state):
        state = np.asarray(state)
        n = self.half
        return np.concatenate((self.R_K @ state[:n], self.R_M @ state[n:]), axis=0)

    def from_energy_coordinates(self, z):
        z = np.asarray(z)
        n = self.half
        x = scipy.linalg.solve_triangular(self.R_K, z[:n])
        xdot = scipy.linalg.solve_triangular(self.R_M, z[n:])
        return np.concatenate((x, xdot), axis=0)

    def energy(self, z):
        """(h/2)|z|^2, columnwise for a matrix of states."""
        z = np.asarray(z)
        return 0.5 * self.h * np.sum(np.abs(z) ** 2, axis=0)

    def probe_operator(self, epsilon, rho):
        """Operator with an extra viscous damping epsilon on the mechanical equation.

        The damping diag(epsilon, 0) x I transforms to
        diag(epsilon/rho, 0) x R_m^{-T} R_m^{-1}, R_m the Cholesky factor of M.
        """
        n = self.half
        m = n // 2
        op = self.operator.copy()
        op[n:n + m, n:n + m] -= (epsilon / rho) * self.probe_block
        return op


def _upper_cholesky(matrix, name, op):
    try:
        return scipy.linalg.cholesky(matrix, lower=False)
    except np.linalg.LinAlgError as e:
        logger.error(f"Cholesky factorization of {name} failed: {e}")
        raise FactorizationFailure(f"{name} is not numerically positive definite: {e}",
                                   stage='conditioning', tag=op.tag)


def conditioning_transform(op):
    """Return a copy of op carrying its energy-coordinate similarity transform.

    The transformed operator has norm of the order of the largest frequency
    rather than its square, and the same eigenvalues.
    """
    if op.scale is not None:
        return op

    Rc2 = _upper_cholesky(op.C2, 'C2', op)
    Ra = _upper_cholesky(op.A_h, 'A_h', op)
    Rc1 = _upper_cholesky(op.C1, 'C1', op)
    Rm = _upper_cholesky(op.M_mass, 'mass matrix', op)

    Rm_inv = scipy.linalg.solve_triangular(Rm, np.eye(Rm.shape[0]))
    Rc1_inv = np.diag(1.0 / np.diag(Rc1))

    G = np.kron(Rc2 @ Rc1_inv, Ra @ Rm_inv)
    D = np.kron(Rc1_inv.T @ op.C3 @ Rc1_inv, Rm_inv.T @ op.B @ Rm_inv) / op.h
    probe_block = Rm_inv.T @ Rm_inv
    D = 0.5 * (D + D.T)

    n = G.shape[0]
    operator = np.zeros((2 * n, 2 * n))
    operator[:n, n:] = G
    operator[n:, :n] = -G.T
    operator[n:, n:] = -D

    transform = ConditioningTransform(
        R_K=np.kron(Rc2, Ra),
        R_M=np.kron(Rc1, Rm),
        G=G,
        D=D,
        probe_block=0.5 * (probe_block + probe_block.T),
        operator=operator,
        h=op.h,
    )
    logger.debug(f"Conditioning transform: |Op| = {np.linalg.norm(op.Op, 1):.3e}, "
                 f"|Op'| = {np.linalg.norm(transform.operator, 1):.3e}")
    return replace(op, scale=transform)
