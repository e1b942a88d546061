"""Discrete energy forms of both schemes."""
import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from ..errors import SchemeMismatch
from .matrices import Scheme, difference_matrix, midpoint_average, midpoint_difference

logger = logging.getLogger('piezobeam')


@dataclass(frozen=True)
class GramPair:
    """Kinetic and potential Gram matrices, E = (h/2)(xdot^T K xdot + x^T P x)."""

    kinetic: np.ndarray
    potential: np.ndarray
    h: float

    @property
    def matrix(self):
        """Block Gram of the full state [x; xdot]."""
        return scipy.linalg.block_diag(self.potential, self.kinetic)

    def energy(self, state):
        n = self.potential.shape[0]
        x, xdot = state[:n], state[n:]
        value = np.real(np.vdot(xdot, self.kinetic @ xdot) + np.vdot(x, self.potential @ x))
        return 0.5 * self.h * float(value)


def energy_gram(op, boundary_correction=False):
    """Return the Gram pair of the scheme's energy.

    FEM: kinetic C1 x M, potential from the first difference Z_h,
    (I x Z_h)^T (C2 x I)(I x Z_h) = C2 x A_h. With boundary_correction the
    tip terms (h/12)(C1 vdot.vdot + 6 C2 v.v) are added; that form is not
    conserved by the control-free flow.

    ORFD: kinetic C1 x M_OR, potential C2 x A_h.
    """
    n = op.N + 1
    if op.scheme is Scheme.FEM:
        Z = np.kron(np.eye(2), difference_matrix(op.N, op.h))
        potential = Z.T @ np.kron(op.C2, np.eye(n)) @ Z
        kinetic = np.kron(op.C1, op.M_mass)
        if boundary_correction:
            tip = np.zeros((n, n))
            tip[-1, -1] = 1.0
            kinetic = kinetic + np.kron(op.C1, tip) / 6.0
            potential = potential + np.kron(op.C2, tip)
    else:
        if boundary_correction:
            raise SchemeMismatch("the boundary correction only applies to the FEM energy")
        kinetic = np.kron(op.C1, op.M_mass)
        potential = np.kron(op.C2, op.A_h)
    return GramPair(kinetic=kinetic, potential=potential, h=op.h)


def split_state(state, N):
    """Split a state vector into (v, p, vdot, pdot), each of length N+1."""
    n = N + 1
    state = np.asarray(state)
    return state[:n], state[n:2 * n], state[2 * n:3 * n], state[3 * n:]


def with_clamped_node(values):
    """Prepend the clamped node value 0."""
    return np.concatenate(([0.0], np.asarray(values)))


def midpoint_fields(op, state):
    """Midpoint variables (u1, u2, w1, w2) of an ORFD state.

    u = difference quotients of (v, p), w = midpoint averages of (vdot, pdot).
    """
    if op.scheme is not Scheme.ORFD:
        raise SchemeMismatch(f"midpoint variables need an ORFD state, got {op.scheme.value}")
    v, p, vdot, pdot = split_state(state, op.N)
    h = op.h
    u1 = midpoint_difference(with_clamped_node(v), h)
    u2 = midpoint_difference(with_clamped_node(p), h)
    w1 = midpoint_average(with_clamped_node(vdot))
    w2 = midpoint_average(with_clamped_node(pdot))
    return u1, u2, w1, w2


def midpoint_energy(op, state):
    """ORFD energy written in midpoint variables."""
    prm = op.params
    u1, u2, w1, w2 = midpoint_fields(op, state)
    density = (prm.rho * w1 ** 2 + prm.mu * w2 ** 2
               + prm.beta * (prm.gamma * u1 - u2) ** 2 + prm.alpha1 * u1 ** 2)
    return 0.5 * op.h * float(np.sum(density))
