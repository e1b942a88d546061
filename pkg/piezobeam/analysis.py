import math
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.stats
from scipy.interpolate import CubicSpline

from .errors import (
    DegenerateWindow, InsufficientLevels, InvalidParameter, NoPlateau, NonPositiveEnergy,
)
from .discretization.matrices import GridConfig, Scheme, assemble_blocks
from .discretization.conditioning import conditioning_transform
from .discretization.energy import split_state
from .spectral.eigen import compute_spectrum
from .spectral.branches import separate_branches
from .spectral.filtering import build_filter, full_filter, project_state
from .dynamics import (
    EnergyTrace, initial_state, modal_energy, modal_propagate, energy, sample_times,
)

logger = logging.getLogger('piezobeam')

MIN_FIT_SAMPLES = 8


@dataclass(frozen=True)
class DecayFit:
    """Fitted rate with the amplitude relative to E(0) and the absolute prefactor exp(intercept)."""

    sigma: float
    M: float
    r_squared: float
    samples: int
    prefactor: float


def fit_decay_rate(trace, window=None):
    """Least-squares fit of log E(t) = log(M E(0)) - sigma t over a time window.

    Args:
        trace (EnergyTrace): Energy samples
        window (tuple): (t_lo, t_hi), inclusive; the whole trace by default

    Returns:
        DecayFit: sigma, M, r^2 and the number of samples used
    """
    times = np.asarray(trace.times)
    values = np.asarray(trace.energy)
    if window is not None:
        t_lo, t_hi = window
        mask = (times >= t_lo) & (times <= t_hi)
        times, values = times[mask], values[mask]
    if len(times) < MIN_FIT_SAMPLES:
        raise DegenerateWindow(f"{len(times)} samples in fit window, need at least {MIN_FIT_SAMPLES}",
                               stage='fit')
    if np.any(values <= 0) or trace.energy[0] <= 0:
        raise NonPositiveEnergy("energy samples in the fit window must be positive", stage='fit')

    fit = scipy.stats.linregress(times, np.log(values))
    sigma = -float(fit.slope)
    prefactor = float(np.exp(fit.intercept))
    return DecayFit(sigma=sigma, M=prefactor / float(trace.energy[0]), r_squared=float(fit.rvalue ** 2),
                    samples=len(times), prefactor=prefactor)


def decay_envelope_check(trace, sigma, M, rtol=1e-9):
    """Check E(t) <= M E(0) exp(-sigma t) along a trace.

    Returns:
        tuple: (holds, worst ratio of E(t) to the envelope)
    """
    envelope = M * trace.energy[0] * np.exp(-sigma * np.asarray(trace.times))
    with np.errstate(divide='ignore', invalid='ignore'):
        ratio = np.where(envelope > 0, trace.energy / envelope, np.where(trace.energy > 0, np.inf, 0.0))
    worst = float(np.max(ratio))
    return worst <= 1.0 + rtol, worst


def spectral_abscissa(spec, retained=None):
    """Largest real part over the retained eigenvalues."""
    return spec.max_real_part(retained)


def labeled_spectrum(params, scheme, N, epsilon_probe=None, tol_eps=None, label=True):
    """Assemble, condition, eigendecompose and (optionally) separate branches."""
    op = conditioning_transform(assemble_blocks(params, GridConfig(N=N, L=params.L, scheme=scheme)))
    spec = compute_spectrum(op)
    if label:
        spec = separate_branches(spec, op, epsilon_probe, tol_eps)
    return op, spec


@dataclass(frozen=True)
class SweepRow:
    N: int
    j_star: Optional[int]
    k1: float
    k2: float
    max_re: float

    @property
    def key(self):
        return (self.N, -1 if self.j_star is None else self.j_star)


@dataclass(frozen=True)
class SweepResult:
    scheme: str
    rows: tuple
    provenance: dict = field(default_factory=dict)

    COLUMNS = ('N', 'jstar', 'k1', 'k2', 'max_re')

    def __len__(self):
        return len(self.rows)

    def by_N(self):
        grouped = {}
        for row in self.rows:
            grouped.setdefault(row.N, []).append(row)
        return {N: sorted(rows, key=lambda r: r.key) for N, rows in sorted(grouped.items())}

    def value(self, N, j_star):
        for row in self.rows:
            if row.N == N and row.j_star == j_star:
                return row.max_re
        raise KeyError((N, j_star))

    def csv_rows(self):
        return [(r.N, r.j_star, r.k1, r.k2, r.max_re) for r in self.rows]

    @classmethod
    def from_csv_rows(cls, rows, scheme='fem'):
        parsed = []
        for row in rows:
            N, jstar, k1, k2, max_re = row
            parsed.append(SweepRow(N=int(N), j_star=None if jstar.strip() == 'NA' else int(jstar),
                                   k1=float(k1), k2=float(k2), max_re=float(max_re)))
        return cls(scheme=scheme, rows=tuple(sorted(parsed, key=lambda r: r.key)))


def _sweep_cell(params, scheme, N, jstar_list, epsilon_probe, tol_eps):
    if scheme is Scheme.ORFD:
        _, spec = labeled_spectrum(params, scheme, N, label=False)
        return [SweepRow(N=N, j_star=None, k1=params.k1, k2=params.k2,
                         max_re=spectral_abscissa(spec, full_filter(spec).retained))]

    needs_labels = any(j > 0 for j in jstar_list)
    _, spec = labeled_spectrum(params, scheme, N, epsilon_probe, tol_eps, label=needs_labels)
    rows = []
    for j_star in jstar_list:
        filt = build_filter(spec, j_star) if j_star > 0 else full_filter(spec)
        rows.append(SweepRow(N=N, j_star=int(j_star), k1=params.k1, k2=params.k2,
                             max_re=spectral_abscissa(spec, filt.retained)))
    return rows


def filter_sweep(params, scheme, N_list, jstar_list, epsilon_probe=None, tol_eps=None, workers=1):
    """Max Re over the retained set for every (N, j*).

    Each N is one cell: one eigendecomposition and one labeling shared by all
    j*. Cells run on a thread pool; rows are sorted by (N, j*) afterwards. For
    ORFD the j* column is a single NA row per N using the full spectrum.

    Returns:
        SweepResult: The sweep rows
    """
    scheme = Scheme.parse(scheme)
    jstar_list = sorted(int(j) for j in jstar_list)
    if any(j < 0 for j in jstar_list):
        raise InvalidParameter("j* values must be nonnegative", key_path='filter.j_star')
    N_list = sorted(int(N) for N in N_list)

    logger.info(f"Filter sweep {scheme.value}: N={N_list}, j*={jstar_list if scheme is Scheme.FEM else 'NA'}, "
                f"k1={params.k1:g}, k2={params.k2:g}, workers={workers}")
    with ThreadPoolExecutor(max_workers=max(1, int(workers))) as executor:
        futures = [executor.submit(_sweep_cell, params, scheme, N, jstar_list, epsilon_probe, tol_eps)
                   for N in N_list]
        rows = [row for future in futures for row in future.result()]

    rows.sort(key=lambda r: r.key)
    if params.k1 > 0 and params.k2 > 0:
        for row in rows:
            if not row.max_re < 0:
                logger.warning(f"Nonnegative max Re {row.max_re:.6g} at N={row.N}, j*={row.j_star}")
    return SweepResult(scheme=scheme.value, rows=tuple(rows),
                       provenance={'k1': params.k1, 'k2': params.k2, 'L': params.L})


def optimal_jstar(sweep, plateau_tol=0.01, knee_fraction=1 / 3):
    """Optimal filter index per N: the last j* before the plateau that still buys a large gain.

    The plateau starts at the first j* whose max Re is within plateau_tol
    (relative) of the sweep minimum. Below it, the gain of step i is
    max_re[i] - max_re[i+1]; the pick is the last step whose gain is at least
    knee_fraction of the largest one. Steps past the pick only close the
    remaining gap to the plateau.

    Raises NoPlateau when the plateau starts at the last j* swept, since the
    sweep then shows no flattening.
    """
    if not plateau_tol >= 0:
        raise InvalidParameter(f"must be nonnegative, got {plateau_tol}", key_path='plateau_tol')
    if not 0 < knee_fraction <= 1:
        raise InvalidParameter(f"must lie in (0, 1], got {knee_fraction}", key_path='knee_fraction')
    result = {}
    for N, rows in sweep.by_N().items():
        rows = [r for r in rows if r.j_star is not None]
        if not rows:
            continue
        values = np.array([r.max_re for r in rows])
        lowest = float(np.min(values))
        within = np.flatnonzero(np.abs(values - lowest) <= plateau_tol * abs(lowest))
        onset = int(within[0])
        if len(rows) > 1 and onset == len(rows) - 1:
            raise NoPlateau(f"max Re still decreasing at the largest j*={rows[-1].j_star}",
                            stage='optimal-jstar', tag={'N': N, 'k1': rows[0].k1, 'k2': rows[0].k2})
        pick = 0
        if onset > 0:
            gains = values[:onset] - values[1:onset + 1]
            pick = int(np.flatnonzero(gains >= knee_fraction * np.max(gains))[-1])
        result[N] = rows[pick].j_star
        logger.debug(f"Optimal j* for N={N}: {result[N]} (plateau {lowest:.6g} from j*={rows[onset].j_star})")
    return result


def figure5_ordering(final_energies):
    """Check E_T(ORFD) <= E_T(j*=10) <= E_T(j*=5) <= E_T(j*=0).

    Args:
        final_energies (dict): Normalized final energy keyed by 'orfd', 'fem_j10', 'fem_j5', 'fem_j0'
    """
    chain = [final_energies[key] for key in ('orfd', 'fem_j10', 'fem_j5', 'fem_j0')]
    return all(a <= b for a, b in zip(chain, chain[1:]))


def restrict_reference(reference_grid, reference_state, grid):
    """Sample a reference-grid state on the nodes of a coarser grid.

    Nested grids use injection; otherwise each field is interpolated by a
    cubic spline through the clamped node.
    """
    n_ref = reference_grid.N + 1
    n = grid.N + 1
    fields = split_state(reference_state, reference_grid.N)
    if n_ref % n == 0:
        ratio = n_ref // n
        return np.concatenate([f[ratio - 1::ratio] for f in fields])

    x_ref = np.concatenate(([0.0], reference_grid.nodes))
    restricted = []
    for values in fields:
        spline = CubicSpline(x_ref, np.concatenate(([0.0], values)))
        restricted.append(spline(grid.nodes))
    return np.concatenate(restricted)


def error_energy(op, state, reference_state):
    """Scheme energy of the difference between a state and the restricted reference."""
    return energy(op, np.asarray(state) - np.asarray(reference_state))


@dataclass(frozen=True)
class ConvergenceReport:
    levels: tuple
    h: tuple
    reference_N: int
    probe_times: tuple
    error_energy: np.ndarray
    energy_gap: np.ndarray
    pairwise_orders: np.ndarray
    fitted_orders: np.ndarray
    fit_residuals: np.ndarray
    gap_pairwise_orders: np.ndarray
    gap_fitted_orders: np.ndarray
    T_char: float

    COLUMNS = ('N', 'h', 't', 'error_energy', 'energy_gap')

    def csv_rows(self):
        rows = []
        for i, N in enumerate(self.levels):
            for j, t in enumerate(self.probe_times):
                rows.append((N, self.h[i], t, float(self.error_energy[i, j]), float(self.energy_gap[i, j])))
        return rows

    def summary(self):
        return {
            'levels': list(self.levels),
            'reference_N': self.reference_N,
            'probe_times': list(self.probe_times),
            'fitted_orders': [float(v) for v in self.fitted_orders],
            'gap_fitted_orders': [float(v) for v in self.gap_fitted_orders],
            'T_char': self.T_char,
        }


def _orders(values, h):
    """Pairwise log ratios between successive levels plus a global log-log regression."""
    with np.errstate(divide='ignore', invalid='ignore'):
        log_v = np.log(values)
        log_h = np.log(np.asarray(h))[:, None]
        pairwise = (log_v[:-1] - log_v[1:]) / (log_h[:-1] - log_h[1:])
    fitted, residuals = [], []
    for j in range(values.shape[1]):
        column = log_v[:, j]
        if not np.all(np.isfinite(column)):
            fitted.append(math.nan)
            residuals.append(math.nan)
            continue
        fit = scipy.stats.linregress(log_h[:, 0], column)
        predicted = fit.intercept + fit.slope * log_h[:, 0]
        fitted.append(float(fit.slope))
        residuals.append(float(np.sqrt(np.mean((column - predicted) ** 2))))
    return pairwise, np.array(fitted), np.array(residuals)


def _modal_run(params, scheme, N, ic):
    op = conditioning_transform(assemble_blocks(params, GridConfig(N=N, L=params.L, scheme=scheme)))
    spec = compute_spectrum(op)
    projection = project_state(spec, full_filter(spec), initial_state(ic, op, spec))
    return op, spec, projection.coeffs


def convergence_study(params, scheme=Scheme.ORFD, N_levels=(20, 40, 80), probe_times=None,
                      reference_N=None, ic='smooth', workers=1, fit_horizon=0.05):
    """Error energy and energy gap of coarse grids against a fine-grid reference.

    Args:
        params (MaterialParams): Material constants and gains
        scheme (Scheme): Discretization, ORFD by default
        N_levels (sequence): At least three grid levels
        probe_times (sequence): Times t*; default {0.2, 0.5, 0.8}/sigma_fit of the coarsest run
        reference_N (int): Reference grid; one doubling beyond the finest level by default
        ic (str): Initial condition, smooth low mode by default
        workers (int): Threads for the per-level eigendecompositions
        fit_horizon (float): Trace length for the coarsest decay fit

    Returns:
        ConvergenceReport: Errors, gaps and fitted orders per probe time
    """
    scheme = Scheme.parse(scheme)
    levels = sorted(int(N) for N in N_levels)
    if len(levels) < 3:
        raise InsufficientLevels(f"need at least 3 grid levels, got {len(levels)}", stage='convergence')
    if reference_N is None:
        reference_N = 2 * levels[-1]
    reference_N = int(reference_N)
    if reference_N < levels[-1]:
        raise InvalidParameter(f"reference grid N={reference_N} is coarser than the finest level",
                               key_path='convergence.reference_N')

    logger.info(f"Convergence study {scheme.value}: levels {levels}, reference N={reference_N}, ic={ic}")
    unique = sorted(set(levels + [reference_N]))
    with ThreadPoolExecutor(max_workers=max(1, int(workers))) as executor:
        runs = dict(zip(unique, executor.map(lambda N: _modal_run(params, scheme, N, ic), unique)))

    op0, spec0, coeffs0 = runs[levels[0]]
    times = sample_times(fit_horizon, 400)
    trace = EnergyTrace(times=times, energy=modal_energy(spec0, coeffs0, times),
                        dissipation=np.zeros_like(times), scheme=scheme.value, j_star=0)
    sigma_fit = fit_decay_rate(trace).sigma
    T_char = 1.0 / sigma_fit if sigma_fit > 0 else fit_horizon
    if probe_times is None:
        probe_times = [0.2 * T_char, 0.5 * T_char, 0.8 * T_char]
    probe_times = tuple(float(t) for t in probe_times)

    ref_op, ref_spec, ref_coeffs = runs[reference_N]
    ref_states = modal_propagate(ref_spec, ref_coeffs, np.array(probe_times))
    ref_energy = np.atleast_1d(energy(ref_op, ref_states))

    errors = np.zeros((len(levels), len(probe_times)))
    gaps = np.zeros_like(errors)
    for i, N in enumerate(levels):
        op, spec, coeffs = runs[N]
        states = modal_propagate(spec, coeffs, np.array(probe_times))
        for j in range(len(probe_times)):
            restricted = restrict_reference(ref_op.grid, ref_states[:, j], op.grid)
            errors[i, j] = error_energy(op, states[:, j], restricted)
        gaps[i] = np.abs(np.atleast_1d(energy(op, states)) - ref_energy)

    h = tuple(params.L / (N + 1) for N in levels)
    pairwise, fitted, residuals = _orders(errors, h)
    gap_pairwise, gap_fitted, _ = _orders(gaps, h)
    logger.info(f"Error-energy orders {np.round(fitted, 3).tolist()}, energy-gap orders "
                f"{np.round(gap_fitted, 3).tolist()}")
    return ConvergenceReport(
        levels=tuple(levels), h=h, reference_N=reference_N, probe_times=probe_times,
        error_energy=errors, energy_gap=gaps, pairwise_orders=pairwise, fitted_orders=fitted,
        fit_residuals=residuals, gap_pairwise_orders=gap_pairwise, gap_fitted_orders=gap_fitted,
        T_char=T_char,
    )
