import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from ..errors import UnlabeledSpectrum, InvalidParameter, IllConditionedBasis

logger = logging.getLogger('piezobeam')

CONDITION_LIMIT = 1e12


@dataclass(frozen=True)
class FilterSpec:
    j_star: int
    retained: np.ndarray

    def __len__(self):
        return len(self.retained)


@dataclass(frozen=True)
class Projection:
    coeffs: np.ndarray
    state: np.ndarray
    condition_number: float
    ill_conditioned: bool


def build_filter(spec, j_star):
    """Exclude the j_star highest-frequency pairs of every (branch, sign half) group.

    Args:
        spec (Spectrum): Branch-labeled spectrum
        j_star (int): Pairs removed per group, 0 <= j_star <= N+1

    Returns:
        FilterSpec: Retained indices, sorted
    """
    if not spec.is_labeled:
        raise UnlabeledSpectrum("filtering needs a branch-labeled spectrum", stage='filter', tag=spec.operator_id)
    n = spec.N + 1
    if int(j_star) != j_star or not 0 <= j_star <= n:
        raise InvalidParameter(f"must be an integer in [0, {n}], got {j_star}", key_path='filter.j_star')
    j_star = int(j_star)

    retained = np.flatnonzero(spec.im_rank < n - j_star)
    logger.debug(f"Filter j*={j_star}: retaining {len(retained)} of {len(spec)} eigenpairs")
    return FilterSpec(j_star=j_star, retained=retained)


def full_filter(spec):
    """Filter that keeps every eigenpair; valid on unlabeled spectra."""
    return FilterSpec(j_star=0, retained=np.arange(len(spec)))


def modal_coefficients(spec, x0):
    """Coefficients of x0 in the energy-coordinate eigenbasis, with the basis condition number."""
    z0 = spec.transform.to_energy_coordinates(np.asarray(x0, dtype=float))
    W = spec.energy_vectors
    condition = float(np.linalg.cond(W))
    coeffs, _, _, _ = scipy.linalg.lstsq(W, z0.astype(complex))
    return coeffs, condition


def project_state(spec, filt, x0, strict=False):
    """Project a state onto the retained modal subspace.

    The full-basis solve is done in energy coordinates. Coefficients are
    returned relative to spec.vectors, so that x0_filtered = Re(V c).

    With strict, an ill-conditioned basis raises instead of being flagged.

    Returns:
        Projection: coefficients (zero outside retained), filtered state,
        basis condition number and an ill-conditioning flag
    """
    energy_coeffs, condition = modal_coefficients(spec, x0)
    ill = condition > CONDITION_LIMIT
    if ill and strict:
        raise IllConditionedBasis(f"eigenvector basis condition number {condition:.3e}",
                                  stage="projection", tag=spec.operator_id)
    if ill:
        logger.warning(f"Eigenvector basis condition number {condition:.3e} exceeds {CONDITION_LIMIT:.0e} "
                       f"for {spec.operator_id}")

    mask = np.zeros(len(spec), dtype=bool)
    mask[filt.retained] = True
    energy_coeffs = np.where(mask, energy_coeffs, 0.0)

    z = spec.energy_vectors @ energy_coeffs
    state = spec.transform.from_energy_coordinates(z)
    imaginary = np.linalg.norm(state.imag)
    if imaginary > 1e-9 * max(np.linalg.norm(state), np.finfo(float).tiny):
        logger.warning(f"Filtered state has imaginary part {imaginary:.3e}; retained set may not be conjugate closed")

    return Projection(coeffs=energy_coeffs * spec.vector_scales, state=state.real,
                      condition_number=condition, ill_conditioned=ill)
