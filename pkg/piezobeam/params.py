import math
import logging
import warnings
from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np

from .errors import InvalidParameter, NonPositiveAlpha1, ZeroGain, DegenerateCoupling

logger = logging.getLogger('piezobeam')


@dataclass(frozen=True)
class MaterialParams:
    """Physical constants of the beam and the boundary feedback gains (SI units)."""

    rho: float
    mu: float
    alpha: float
    beta: float
    gamma: float
    L: float = 1.0
    k1: float = 0.0
    k2: float = 0.0

    def __post_init__(self):
        for name in ('rho', 'mu', 'alpha', 'beta', 'L'):
            value = getattr(self, name)
            if not math.isfinite(value) or value <= 0:
                raise InvalidParameter(f"must be a positive finite number, got {value}", key_path=name)
        if not math.isfinite(self.gamma):
            raise InvalidParameter(f"must be finite, got {self.gamma}", key_path='gamma')
        for name in ('k1', 'k2'):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise InvalidParameter(f"must be nonnegative, got {value}", key_path=name)
        if self.alpha1 <= 0:
            raise NonPositiveAlpha1(
                f"alpha - gamma^2*beta = {self.alpha1:.6g} must be strictly positive"
            )

    @property
    def alpha1(self):
        return self.alpha - self.gamma ** 2 * self.beta

    def with_gains(self, k1, k2):
        return replace(self, k1=float(k1), k2=float(k2))

    @property
    def C1(self):
        return np.diag([self.rho, self.mu])

    @property
    def C2(self):
        return np.array([[self.alpha, -self.gamma * self.beta],
                         [-self.gamma * self.beta, self.beta]])

    @property
    def C3(self):
        return np.diag([self.k1, self.k2])


# Realistic constants for a magnetizable piezoelectric beam
REFERENCE_PARAMS = MaterialParams(rho=6000.0, mu=1e-6, alpha=1e9, beta=1e12, gamma=1e-3, L=1.0)


@dataclass(frozen=True)
class LyapunovRate:
    """Decay parameters of the Lyapunov estimate.

    The primary triple follows the continuous estimate; the orfd_* fields hold
    the semi-discrete cap (a strict upper bound on delta) and the rate and
    amplitude evaluated at that cap.
    """

    delta: float
    sigma: float
    M_amp: float
    epsilon: float
    orfd_delta_cap: float
    orfd_sigma: float
    orfd_M_amp: float


@dataclass(frozen=True)
class DerivedConstants:
    alpha1: float
    zeta1: float
    zeta2: float
    b1: Optional[float]
    b2: Optional[float]
    eta: float
    sigma_max: float
    delta: Optional[float] = None
    sigma: Optional[float] = None
    M_amp: Optional[float] = None

    def as_dict(self):
        return {
            'alpha1': self.alpha1,
            'zeta1': self.zeta1,
            'zeta2': self.zeta2,
            'b1': self.b1,
            'b2': self.b2,
            'eta': self.eta,
            'sigma_max': self.sigma_max,
            'delta': self.delta,
            'sigma': self.sigma,
            'M_amp': self.M_amp,
        }


def coupling_matrix(params):
    """Return C1^{-1} C2."""
    return np.linalg.solve(params.C1, params.C2)


def coupling_eigenvalues(params):
    """Eigenvalues (zeta1^2, zeta2^2) of C1^{-1} C2, largest first.

    The 2x2 eigensolve is done on the characteristic polynomial; the small root
    is recovered from the determinant to avoid cancellation, since the two
    roots differ by up to twelve orders of magnitude.
    """
    A = coupling_matrix(params)
    trace = A[0, 0] + A[1, 1]
    det = params.beta * params.alpha1 / (params.rho * params.mu)
    disc = max(trace * trace - 4.0 * det, 0.0)
    large = 0.5 * (trace + math.sqrt(disc))
    small = det / large

    # Self check against the matrix invariants
    if not math.isclose(large + small, trace, rel_tol=1e-10):
        raise InvalidParameter(f"coupling eigenvalues violate the trace identity: {large + small} != {trace}")
    det_direct = A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]
    if not math.isclose(large * small, det_direct, rel_tol=1e-6):
        raise InvalidParameter(f"coupling eigenvalues violate the determinant identity: {large * small} != {det_direct}")
    return large, small


def coupling_ratios(params):
    """Return (b1, b2), the second components of the eigenvectors [1, b] of C1^{-1} C2.

    Both solve b^2 - (alpha/(gamma*beta) - rho/(gamma*mu)) b - rho/mu = 0. The
    roots have opposite signs; b1 (the fast branch) has the sign of -gamma.
    """
    if params.gamma == 0:
        return None, None
    p = params.alpha / (params.gamma * params.beta) - params.rho / (params.gamma * params.mu)
    c = params.rho / params.mu
    # Stable quadratic roots
    r_big = 0.5 * (p + math.copysign(math.sqrt(p * p + 4.0 * c), p))
    r_small = -c / r_big
    if math.copysign(1.0, r_big) == -math.copysign(1.0, params.gamma):
        return r_big, r_small
    return r_small, r_big


def coupling_eigenvectors(params):
    """Eigenvectors [1, b1] and [1, b2] of C1^{-1} C2 as columns."""
    b1, b2 = coupling_ratios(params)
    if b1 is None:
        # Uncoupled: the fields decouple; order by speed
        if params.beta / params.mu >= params.alpha / params.rho:
            return np.array([[0.0, 1.0], [1.0, 0.0]])
        return np.eye(2)
    return np.array([[1.0, 1.0], [b1, b2]])


def radical_zeta_formula(params):
    """Evaluate the closed radical form for (zeta1, zeta2).

    Kept only to document the discrepancy with the eigensolve; with realistic
    constants it returns a slow speed far below sqrt(alpha1/rho).
    """
    s = params.alpha / params.rho + params.beta / params.mu
    radicand = s * s - 4.0 * params.alpha1 / (params.mu * params.rho)
    root = math.sqrt(max(radicand, 0.0))
    return math.sqrt(0.5 * (s + root)), math.sqrt(max(0.5 * (s - root), 0.0))


def continuum_abscissa(params):
    """Real part shared by the slow-branch eigenvalues of the undiscretized beam.

    With the fast branch taken quasi-static, the tip conditions reduce to
    tanh(lambda L / zeta2) = q with q = -zeta2 (rho e1^2 + mu e2^2)/(k1 e1^2 + k2 e2^2),
    e = [e1, e2] the slow coupling direction, so every slow eigenvalue has
    Re lambda = (zeta2 / 2L) ln|(1 + q)/(1 - q)|. Mesh refinement of ORFD and
    of sufficiently filtered FEM spectra converges to this value.
    """
    _, zeta2_sq = coupling_eigenvalues(params)
    zeta2 = math.sqrt(zeta2_sq)
    e1, e2 = coupling_eigenvectors(params)[:, 1]
    damping = params.k1 * e1 ** 2 + params.k2 * e2 ** 2
    if damping == 0:
        return 0.0
    q = -zeta2 * (params.rho * e1 ** 2 + params.mu * e2 ** 2) / damping
    if q == -1.0:
        return -math.inf
    return 0.5 * zeta2 / params.L * math.log(abs((1.0 + q) / (1.0 - q)))


def group_slowness(params):
    """eta: the maximal sum of slownesses of the coupled system (s/m)."""
    coupling = math.sqrt(params.mu * params.gamma ** 2 / params.alpha1)
    return max(math.sqrt(params.rho / params.alpha1) + coupling,
               math.sqrt(params.mu / params.beta) + coupling)


def wave_speeds(params):
    """Return the mechanical and electromagnetic speeds sqrt(alpha1/rho), sqrt(beta/mu)."""
    return math.sqrt(params.alpha1 / params.rho), math.sqrt(params.beta / params.mu)


def decay_parameters(delta, eta, L):
    """Return (sigma, M) = (delta(1 - delta L eta), (1 + delta L eta)/(1 - delta L eta))."""
    x = delta * L * eta
    sigma = delta * (1.0 - x)
    M_amp = math.inf if x >= 1.0 else (1.0 + x) / (1.0 - x)
    return sigma, M_amp


def lyapunov_rate(params, epsilon_lyap=1.0):
    """Compute the Lyapunov decay parameters for the gains in params.

    Args:
        params (MaterialParams): Material constants with k1, k2 > 0
        epsilon_lyap (float): Weight of the electromagnetic multiplier

    Returns:
        LyapunovRate: delta, sigma and M_amp, plus the semi-discrete cap
    """
    if params.k1 == 0 or params.k2 == 0:
        raise ZeroGain(f"k1={params.k1}, k2={params.k2}: both feedback gains must be positive")
    if not epsilon_lyap > 0:
        raise InvalidParameter(f"must be positive, got {epsilon_lyap}", key_path='epsilon_lyap')

    eps = float(epsilon_lyap)
    rho, mu, alpha, beta, gamma, L = params.rho, params.mu, params.alpha, params.beta, params.gamma, params.L
    alpha1 = params.alpha1
    k1, k2 = params.k1, params.k2
    eta = group_slowness(params)

    f1 = 2.0 * k1 * alpha1 / (rho * alpha1 + (1.0 + eps) * k1 ** 2)
    f2 = 2.0 * k2 * eps * alpha1 * beta / (eps * mu * alpha1 * beta + (eps * alpha + gamma ** 2 * beta) * k2 ** 2)
    delta = min(1.0 / eta, f1, f2) / L
    sigma, M_amp = decay_parameters(delta, eta, L)

    g1 = 2.0 * k1 * alpha1 / (alpha1 * rho + k1 ** 2)
    g2 = 4.0 * k2 * beta * alpha1 / (2.0 * alpha1 * beta * mu + (alpha + gamma ** 2 * beta) * k2 ** 2)
    cap = min(1.0 / eta, g1, g2) / (2.0 * L)
    orfd_sigma, orfd_M = decay_parameters(cap, eta, L)

    logger.debug(f"Lyapunov rate: f1={f1:.6g}, f2={f2:.6g}, 1/eta={1.0 / eta:.6g}, delta={delta:.6g}, cap={cap:.6g}")
    return LyapunovRate(delta=delta, sigma=sigma, M_amp=M_amp, epsilon=eps,
                        orfd_delta_cap=cap, orfd_sigma=orfd_sigma, orfd_M_amp=orfd_M)


def derive_constants(params, epsilon_lyap=1.0):
    """Compute every derived scalar used by the stability theory.

    The Lyapunov fields are filled only when both gains are positive.
    """
    zeta1_sq, zeta2_sq = coupling_eigenvalues(params)
    b1, b2 = coupling_ratios(params)
    if b1 is None:
        warnings.warn("gamma == 0: coupling ratios b1, b2 are undefined", DegenerateCoupling)
        logger.warning("Degenerate coupling (gamma = 0), b1 and b2 are not defined")
    else:
        if not math.isclose(b1 * b2, -params.rho / params.mu, rel_tol=1e-10):
            raise InvalidParameter(f"b1*b2 = {b1 * b2} differs from -rho/mu = {-params.rho / params.mu}")

    eta = group_slowness(params)
    sigma_max = 1.0 / (4.0 * eta * params.L)

    delta = sigma = M_amp = None
    if params.k1 > 0 and params.k2 > 0:
        rate = lyapunov_rate(params, epsilon_lyap)
        delta, sigma, M_amp = rate.delta, rate.sigma, rate.M_amp

    return DerivedConstants(
        alpha1=params.alpha1,
        zeta1=math.sqrt(zeta1_sq),
        zeta2=math.sqrt(zeta2_sq),
        b1=b1,
        b2=b2,
        eta=eta,
        sigma_max=sigma_max,
        delta=delta,
        sigma=sigma,
        M_amp=M_amp,
    )


def safe_gain_check(params, k1_interval: Tuple[float, float], k2_interval: Tuple[float, float]):
    """Report whether the gains lie inside user supplied open intervals."""
    k1_ok = k1_interval[0] < params.k1 < k1_interval[1]
    k2_ok = k2_interval[0] < params.k2 < k2_interval[1]
    if not (k1_ok and k2_ok):
        logger.info(f"Gains outside safe intervals: k1={params.k1} in {k1_interval}: {k1_ok}, "
                    f"k2={params.k2} in {k2_interval}: {k2_ok}")
    return {'k1': k1_ok, 'k2': k2_ok}
