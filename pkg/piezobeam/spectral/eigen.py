import time
import logging
from dataclasses import dataclass, replace
from enum import IntEnum
from typing import Optional

import numpy as np
import scipy.linalg

from ..errors import EigensolverFailure
from ..params import coupling_eigenvalues
from ..discretization.conditioning import conditioning_transform

logger = logging.getLogger('piezobeam')

# Eigenvalues with |Im| below this fraction of |lambda| are treated as real
REAL_EIGENVALUE_TOL = 1e-12
CONJUGATE_PAIR_TOL = 1e-9


class Branch(IntEnum):
    UNASSIGNED = 0
    BRANCH1 = 1
    BRANCH2 = 2


class SignHalf(IntEnum):
    MINUS = -1
    PLUS = 1


@dataclass(frozen=True)
class EigenPair:
    value: complex
    vector: np.ndarray
    branch: Branch
    sign_half: SignHalf
    im_rank: int


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Eigendecomposition of one assembled operator.

    vectors are unit-norm eigenvectors in state coordinates with the largest
    component real positive; energy_vectors are the unit-norm eigenvectors in
    energy coordinates, related by from_energy(energy_vectors[:, j]) =
    vector_scales[j] * vectors[:, j]. partner[j] is the index of the conjugate
    (j itself for real eigenvalues).
    """

    values: np.ndarray
    vectors: np.ndarray
    energy_vectors: np.ndarray
    vector_scales: np.ndarray
    partner: np.ndarray
    branch: np.ndarray
    sign_half: np.ndarray
    im_rank: np.ndarray
    transform: object
    operator_id: dict

    def __len__(self):
        return len(self.values)

    @property
    def N(self):
        return len(self.values) // 4 - 1

    @property
    def is_labeled(self):
        return bool(np.all(self.branch != Branch.UNASSIGNED))

    @property
    def pairs(self):
        return [
            EigenPair(
                value=complex(self.values[i]),
                vector=self.vectors[:, i],
                branch=Branch(int(self.branch[i])),
                sign_half=SignHalf(int(self.sign_half[i])),
                im_rank=int(self.im_rank[i]),
            )
            for i in range(len(self.values))
        ]

    def max_real_part(self, indices=None):
        values = self.values if indices is None else self.values[np.asarray(indices, dtype=int)]
        if len(values) == 0:
            return float('nan')
        return float(np.max(values.real))


def closed_form_lambda(N, L=1.0):
    """Closed-form eigenvalues of M^{-1} A_h for the FEM mass matrix, ascending.

    lambda_k = (1/h^2)(6 - 6 cos theta_k)/(2 + cos theta_k), theta_k = (2k-1) pi h/(2L).
    """
    h = L / (N + 1)
    k = np.arange(1, N + 2)
    theta = (2 * k - 1) * np.pi * h / (2.0 * L)
    return (6.0 - 6.0 * np.cos(theta)) / (2.0 + np.cos(theta)) / h ** 2


def closed_form_eigenvector(N, k, L=1.0):
    """Eigenvector sin((2k-1) j pi h/(2L)), j = 1..N+1, of both mass pencils."""
    h = L / (N + 1)
    j = np.arange(1, N + 2)
    return np.sin((2 * k - 1) * j * np.pi * h / (2.0 * L))


def closed_form_spectrum(params, N):
    """Control-free FEM spectrum +-i zeta_j sqrt(lambda_k) with branch labels.

    Returns:
        tuple: (values, branches) as arrays of length 4(N+1)
    """
    zeta1_sq, zeta2_sq = coupling_eigenvalues(params)
    roots = np.sqrt(closed_form_lambda(N, params.L))
    values, branches = [], []
    for branch, zeta in ((Branch.BRANCH1, np.sqrt(zeta1_sq)), (Branch.BRANCH2, np.sqrt(zeta2_sq))):
        for sign in (1.0, -1.0):
            values.append(sign * 1j * zeta * roots)
            branches.append(np.full(len(roots), int(branch)))
    return np.concatenate(values), np.concatenate(branches)


def _pair_conjugates(values, vectors, tag):
    """Pair each eigenvalue with its conjugate and make the pairs exact conjugates."""
    values = values.copy()
    vectors = vectors.copy()
    n = len(values)
    partner = np.arange(n)

    magnitude = np.maximum(np.abs(values), np.finfo(float).tiny)
    real_mask = np.abs(values.imag) <= REAL_EIGENVALUE_TOL * magnitude
    values[real_mask] = values[real_mask].real
    vectors[:, real_mask] = vectors[:, real_mask].real

    positive = np.flatnonzero(~real_mask & (values.imag > 0))
    negative = list(np.flatnonzero(~real_mask & (values.imag < 0)))
    if len(positive) != len(negative):
        raise EigensolverFailure(
            f"spectrum is not closed under conjugation: {len(positive)} vs {len(negative)} members",
            stage='eigensolve', tag=tag)

    remaining = np.array(negative)
    for i in positive:
        target = np.conj(values[i])
        distance = np.abs(values[remaining] - target)
        pos = int(np.argmin(distance))
        if distance[pos] > 1e3 * CONJUGATE_PAIR_TOL * abs(values[i]):
            raise EigensolverFailure(
                f"no conjugate partner for eigenvalue {values[i]:.6g} (closest {values[remaining[pos]]:.6g})",
                stage='eigensolve', tag=tag)
        j = int(remaining[pos])
        remaining = np.delete(remaining, pos)
        values[j] = np.conj(values[i])
        vectors[:, j] = np.conj(vectors[:, i])
        partner[i], partner[j] = j, i
    return values, vectors, partner


def eigensolve(matrix, tag=None):
    """Dense eigendecomposition with conjugate pairing and unit-norm vectors."""
    try:
        values, vectors = scipy.linalg.eig(matrix, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as e:
        logger.error(f"Eigensolver failed: {e}")
        raise EigensolverFailure(f"dense eigensolver failed: {e}", stage='eigensolve', tag=tag)
    if not (np.all(np.isfinite(values)) and np.all(np.isfinite(vectors))):
        raise EigensolverFailure("eigensolver returned non-finite values", stage='eigensolve', tag=tag)
    values, vectors, partner = _pair_conjugates(values.astype(complex), vectors.astype(complex), tag)
    vectors = vectors / np.linalg.norm(vectors, axis=0)
    return values, vectors, partner


def _fix_phase(vectors):
    """Normalize columns to unit norm with the largest-modulus component real positive.

    Returns the normalized columns and the complex factors s with vectors = s * result.
    """
    norms = np.linalg.norm(vectors, axis=0)
    idx = np.argmax(np.abs(vectors), axis=0)
    lead = vectors[idx, np.arange(vectors.shape[1])]
    phase = lead / np.abs(lead)
    scales = norms * phase
    return vectors / scales, scales


def compute_spectrum(op):
    """Full eigendecomposition of an assembled operator through its energy coordinates.

    Args:
        op (SystemOperator): Assembled operator; transformed here if needed

    Returns:
        Spectrum: Unlabeled spectrum (branch UNASSIGNED, sign half from Im)
    """
    op = conditioning_transform(op)
    transform = op.scale
    started = time.perf_counter()
    values, energy_vectors, partner = eigensolve(transform.operator, tag=op.tag)
    logger.info(f"Eigensolve {op.scheme.value} N={op.N} k1={op.params.k1:g} k2={op.params.k2:g}: "
                f"dimension {len(values)} in {time.perf_counter() - started:.2f}s")

    state_vectors = transform.from_energy_coordinates(energy_vectors)
    vectors, scales = _fix_phase(state_vectors)
    # Conjugate members carry conjugate normalizations
    for i, j in enumerate(partner):
        if j > i:
            vectors[:, j] = np.conj(vectors[:, i])
            scales[j] = np.conj(scales[i])

    sign_half = np.where(values.imag >= 0, int(SignHalf.PLUS), int(SignHalf.MINUS))
    return Spectrum(
        values=values,
        vectors=vectors,
        energy_vectors=energy_vectors,
        vector_scales=scales,
        partner=partner,
        branch=np.full(len(values), int(Branch.UNASSIGNED)),
        sign_half=sign_half,
        im_rank=_rank_by_frequency(values, partner, sign_half),
        transform=transform,
        operator_id=dict(op.tag),
    )


def _rank_by_frequency(values, partner, groups):
    """Ordinal of |Im| within each group, 0 for the lowest frequency.

    Equal |Im| is ordered so that larger |Re| and then lower index (of the
    Im >= 0 member of a pair) rank higher.
    """
    ranks = np.zeros(len(values), dtype=int)
    key_index = np.minimum(np.arange(len(values)), partner)
    for group in np.unique(groups):
        members = np.flatnonzero(groups == group)
        order = sorted(members, key=lambda i: (abs(values[i].imag), abs(values[i].real), -key_index[i]))
        for rank, i in enumerate(order):
            ranks[i] = rank
    return ranks


def relabel(spec, branch, sign_half):
    """Return a copy of spec with new labels and recomputed frequency ranks."""
    groups = np.asarray(branch) * 10 + np.asarray(sign_half)
    return replace(spec, branch=np.asarray(branch), sign_half=np.asarray(sign_half),
                   im_rank=_rank_by_frequency(spec.values, spec.partner, groups))
