"""Branch separation of a computed spectrum by a damped probe.

A viscous damping added to the mechanical equation shifts the real parts of
the mechanical branch and leaves the electromagnetic branch essentially
unchanged. Eigenpairs are assigned one-to-one to probe eigenvectors by an
optimal assignment on the phase-aligned distances and labeled by the size of
the real-part shift relative to |lambda|.
"""
import logging

import numpy as np
import scipy.optimize

from ..errors import AmbiguousMatch, BranchImbalance, InvalidParameter
from ..discretization.matrices import assemble_blocks
from ..discretization.conditioning import conditioning_transform
from .eigen import Branch, SignHalf, eigensolve, relabel

logger = logging.getLogger('piezobeam')

# Default probe damping, in units of rho
PROBE_FACTOR = 1e-2
TIE_TOLERANCE = 1e-8


def default_probe(params):
    return PROBE_FACTOR * params.rho


def phase_aligned_distance(A, B):
    """Distances between unit columns of A and B after optimal phase alignment.

    min over phi of |a - e^{i phi} b| = sqrt(2 - 2|<a, b>|).
    """
    overlap = np.abs(A.conj().T @ B)
    return np.sqrt(np.maximum(2.0 - 2.0 * overlap, 0.0))


def relative_shift(values, probe_values):
    """|Re lambda - Re lambda_probe| / |lambda|.

    Rounding moves an eigenvalue by a multiple of eps |lambda|, so the
    electromagnetic members, whose |lambda| reaches the damping scale k2/(mu h),
    stay far below the mechanical ones after the division.
    """
    scale = np.maximum(np.abs(values), np.finfo(float).tiny)
    return np.abs(values.real - probe_values.real) / scale


def probe_spectrum(op, epsilon):
    """Eigenvalues and unit energy-coordinate eigenvectors of the probe operator."""
    op = conditioning_transform(op)
    matrix = op.scale.probe_operator(epsilon, op.params.rho)
    values, vectors, _ = eigensolve(matrix, tag=op.tag)
    return values, vectors


def auto_tolerance(op, epsilon):
    """Half the smallest relative probe shift of the mechanical branch on the control-free system.

    The control-free spectrum is purely imaginary, so the probe shift of a mode
    is |Re| of its probe eigenvalue. The 2(N+1) smallest relative shifts belong
    to the electromagnetic branch; the next one is the smallest mechanical shift.
    """
    free = assemble_blocks(op.params.with_gains(0.0, 0.0), op.grid)
    values, _ = probe_spectrum(free, epsilon)
    shifts = np.sort(relative_shift(values, np.zeros_like(values)))
    tol = 0.5 * float(shifts[2 * (op.N + 1)])
    logger.debug(f"Probe tolerance for N={op.N}, epsilon={epsilon:g}: {tol:.6g}")
    return tol


def match_to_probe(distance, tag):
    """Assign every row to a distinct column minimizing the total distance.

    Raises AmbiguousMatch when two rows share their nearest column within
    TIE_TOLERANCE, since no assignment can then tell them apart.
    """
    nearest = np.argmin(distance, axis=1)
    for col in np.unique(nearest):
        rows = np.flatnonzero(nearest == col)
        if len(rows) > 1:
            d = np.sort(distance[rows, col])
            if d[1] - d[0] < TIE_TOLERANCE:
                raise AmbiguousMatch(
                    f"{len(rows)} eigenvectors map to probe vector {col} within {TIE_TOLERANCE:g}",
                    stage='branches', tag=tag)

    rows, cols = scipy.optimize.linear_sum_assignment(distance)
    match = np.full(distance.shape[0], -1)
    match[rows] = cols
    return match


def separate_branches(spec, op, epsilon_probe=None, tol_eps=None):
    """Label every eigenpair with its branch and sign half.

    Args:
        spec (Spectrum): Spectrum computed from op
        op (SystemOperator): The operator spec was computed from
        epsilon_probe (float): Probe damping; default 1e-2*rho
        tol_eps (float): Threshold on the relative real-part shift; None selects it automatically

    Returns:
        Spectrum: Copy with branch, sign_half and im_rank filled in
    """
    params = op.params
    epsilon = default_probe(params) if epsilon_probe is None else float(epsilon_probe)
    if epsilon < 0:
        raise InvalidParameter(f"must be nonnegative, got {epsilon}", key_path='filter.epsilon_probe')
    tol = auto_tolerance(op, epsilon) if tol_eps is None else float(tol_eps)
    tag = dict(op.tag, epsilon_probe=epsilon, tol_eps=tol)

    probe_values, probe_vectors = probe_spectrum(op, epsilon)

    values = spec.values
    upper = np.flatnonzero(values.imag >= 0)
    probe_upper = np.flatnonzero(probe_values.imag >= 0)
    if len(probe_upper) < len(upper):
        raise BranchImbalance(
            f"probe spectrum has {len(probe_upper)} upper members for {len(upper)} eigenpairs",
            stage='branches', tag=tag)

    distance = phase_aligned_distance(spec.energy_vectors[:, upper], probe_vectors[:, probe_upper])
    match = match_to_probe(distance, tag)

    branch = np.full(len(values), int(Branch.UNASSIGNED))
    shifts = relative_shift(values[upper], probe_values[probe_upper[match]])
    labels = np.where(shifts < tol, int(Branch.BRANCH1), int(Branch.BRANCH2))
    branch[upper] = labels
    branch[spec.partner[upper]] = labels

    sign_half = np.where(values.imag >= 0, int(SignHalf.PLUS), int(SignHalf.MINUS))
    real = np.flatnonzero(spec.partner == np.arange(len(values)))
    for label in (Branch.BRANCH1, Branch.BRANCH2):
        members = real[branch[real] == int(label)]
        members = members[np.argsort(values[members].real, kind='stable')]
        sign_half[members[0::2]] = int(SignHalf.PLUS)
        sign_half[members[1::2]] = int(SignHalf.MINUS)

    n = op.N + 1
    counts = {}
    for label in (Branch.BRANCH1, Branch.BRANCH2):
        for half in (SignHalf.PLUS, SignHalf.MINUS):
            counts[(label.name, half.name)] = int(np.sum((branch == int(label)) & (sign_half == int(half))))
    if any(count != n for count in counts.values()):
        logger.error(f"Branch imbalance for {tag}: {counts}")
        raise BranchImbalance(
            f"expected {n} pairs per branch and sign half, got {counts}", stage='branches', tag=tag)

    logger.info(f"Separated branches for {op.scheme.value} N={op.N}: {2 * n} pairs each "
                f"(epsilon={epsilon:g}, tol={tol:.4g})")
    return relabel(spec, branch, sign_half)
