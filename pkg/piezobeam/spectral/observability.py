"""Observability ratio of the control-free FEM system.

The ratio compares the energy of a modal solution with its boundary
observation integral(rho |vdot_{N+1}|^2 + mu |pdot_{N+1}|^2) over [0, T].
Its growth under mesh refinement measures the loss of uniform observability.
"""
import math
import logging

import numpy as np
import scipy.integrate
import scipy.linalg

from ..errors import InvalidParameter
from ..params import coupling_eigenvalues, coupling_eigenvectors
from ..discretization.matrices import GridConfig, Scheme, assemble_blocks, fem_mass_matrix
from ..discretization.energy import energy_gram
from .eigen import Branch, closed_form_lambda, closed_form_eigenvector

logger = logging.getLogger('piezobeam')


def _branch_data(params, branch):
    zeta1_sq, zeta2_sq = coupling_eigenvalues(params)
    directions = coupling_eigenvectors(params)
    if branch == Branch.BRANCH1:
        return math.sqrt(zeta1_sq), directions[:, 0]
    if branch == Branch.BRANCH2:
        return math.sqrt(zeta2_sq), directions[:, 1]
    raise InvalidParameter(f"branch must be 1 or 2, got {branch}", key_path='observability.branch')


def time_overlap(delta, T):
    """integral_0^T exp(i delta t) dt, stable for small delta."""
    return T * np.exp(0.5j * delta * T) * np.sinc(delta * T / (2.0 * np.pi))


def modal_observations(params, N, branch, n_modes):
    """Frequencies and unit-energy boundary observation vectors of the top modes.

    Each complex mode exp(i omega t)[X; i omega X], X = direction x psi_k, is
    scaled to unit energy; its observation vector is (sqrt(rho) vdot, sqrt(mu) pdot)
    at the tip.
    """
    h = params.L / (N + 1)
    zeta, direction = _branch_data(params, branch)
    M = fem_mass_matrix(N)
    lam = closed_form_lambda(N, params.L)

    omegas, observations = [], []
    for k in range(N + 1, N + 1 - n_modes, -1):
        psi = closed_form_eigenvector(N, k, params.L)
        omega = zeta * math.sqrt(lam[k - 1])
        kinetic = (params.rho * direction[0] ** 2 + params.mu * direction[1] ** 2) * float(psi @ M @ psi)
        energy = h * omega ** 2 * kinetic
        tip = psi[-1] * direction
        y = 1j * omega * np.array([math.sqrt(params.rho) * tip[0], math.sqrt(params.mu) * tip[1]])
        omegas.append(omega)
        observations.append(y / math.sqrt(energy))
    return np.array(omegas), np.array(observations)


def observability_gramian(omegas, observations, T):
    """G_ab = <y_a, y_b> integral_0^T exp(i(omega_b - omega_a) t) dt."""
    inner = observations.conj() @ observations.T
    delta = omegas[None, :] - omegas[:, None]
    G = inner * time_overlap(delta, T)
    return 0.5 * (G + G.conj().T)


def observability_ratio(params, N, T, branch=Branch.BRANCH2, n_modes=1):
    """Energy over boundary observation for the highest-frequency modes.

    With n_modes = 1 this is the ratio of the single top eigenmode,
    h psi^T M psi / (T psi_{N+1}^2). With n_modes > 1 it is the supremum of the
    ratio over combinations of the top n_modes modes of the branch, i.e. the
    reciprocal of the smallest eigenvalue of the observability Gramian.

    Args:
        params (MaterialParams): Material constants; gains are ignored
        N (int): Node parameter
        T (float): Observation time
        branch (Branch): Branch of the modes
        n_modes (int): Number of top modes

    Returns:
        float: The ratio
    """
    if not T > 0:
        raise InvalidParameter(f"must be positive, got {T}", key_path='observability.T')
    if int(n_modes) != n_modes or not 1 <= n_modes <= N + 1:
        raise InvalidParameter(f"must be in [1, {N + 1}], got {n_modes}", key_path='observability.n_modes')

    omegas, observations = modal_observations(params, N, branch, int(n_modes))
    G = observability_gramian(omegas, observations, T)
    smallest = float(np.min(scipy.linalg.eigvalsh(G)))
    ratio = math.inf if smallest <= 0 else 1.0 / smallest
    logger.debug(f"Observability ratio N={N}, T={T:g}, branch={int(branch)}, modes={n_modes}: {ratio:.6g}")
    return ratio


def observability_ratio_quadrature(params, N, T, branch=Branch.BRANCH2):
    """Single top-mode ratio from the assembled matrices and a time quadrature.

    The top eigenpair comes from the generalized eigensolve of (A_h, M), the
    energy from the FEM Gram form and the boundary integral from adaptive
    quadrature of the evolved complex mode.
    """
    op = assemble_blocks(params.with_gains(0.0, 0.0), GridConfig(N=N, L=params.L, scheme=Scheme.FEM))
    lam, vecs = scipy.linalg.eigh(op.A_h, op.M_mass)
    psi = vecs[:, -1]
    zeta, direction = _branch_data(params, branch)
    omega = zeta * math.sqrt(lam[-1])

    X = np.kron(direction, psi)
    state = np.concatenate((X, 1j * omega * X)).astype(complex)
    energy = energy_gram(op).energy(state)

    n = N + 1
    tip_velocity = 1j * omega * np.array([X[n - 1], X[2 * n - 1]])

    def observation(t):
        v = tip_velocity * np.exp(1j * omega * t)
        return params.rho * abs(v[0]) ** 2 + params.mu * abs(v[1]) ** 2

    integral, _ = scipy.integrate.quad(observation, 0.0, T, limit=200)
    return energy / integral
