"""Canonical experiment targets with their published reference values.

Each target runs one fixed configuration, writes its CSV data files into an
output directory and, where published numbers exist, compares against them.
"""
import os
import logging

import numpy as np

from .errors import GoldenMismatch, InvalidParameter, NoPlateau
from .params import REFERENCE_PARAMS, derive_constants, continuum_abscissa
from .discretization.matrices import Scheme
from .dynamics import SimulationConfig, simulate
from .analysis import SweepResult, filter_sweep, optimal_jstar, labeled_spectrum, figure5_ordering
from .utils.io import write_csv, write_json

logger = logging.getLogger('piezobeam')

TABLE3_GAIN = 1e6
TABLE3_NODES = (40, 80, 160)
TABLE3_TOLERANCE = 0.005

# Maximum real part of the eigenvalues, k1 = k2 = 1e6, keyed by (scheme, j*)
TABLE3_GOLDEN = {
    ('fem', 0): (-13.1571, -3.37871, -0.8557),
    ('fem', 5): (-177.033, -125.217, -30.9887),
    ('fem', 10): (-177.033, -177.001, -106.099),
    ('orfd', None): (-177.055, -176.935, -174.897),
}

# The published ORFD N=160 cell sits 1.2% above the continuum limit that the
# N=40 and N=80 cells approach; it is held to a wider tolerance while every
# ORFD cell must also match continuum_abscissa within CONTINUUM_TOLERANCE.
TABLE3_CELL_TOLERANCE = {
    ('orfd', 160): 0.015,
}
CONTINUUM_TOLERANCE = 1e-3

SIGMA_MAX_GOLDEN = 102.04
SIGMA_MAX_TOLERANCE = 0.1

FIGURE_SWEEPS = {
    'fig2': {'gain': 1e6, 'nodes': (40, 80, 160), 'jstar_max': 20},
    'fig6': {'gain': 1e7, 'nodes': (40, 80, 160), 'jstar_max': 40},
}

FIG5_NODES = 80
FIG5_T_FINAL = 0.1
FIG5_SAMPLES = 400

SPECTRUM_COLUMNS = ('re', 'im', 'branch', 'sign_half', 'im_rank')
TRACE_COLUMNS = ('t', 'E', 'E_normalized', 'dissipation')

TARGETS = ('table3', 'fig1', 'fig2', 'fig5', 'fig6', 'sigma_max')


def spectrum_rows(spec):
    return [(float(v.real), float(v.imag), int(b), int(s), int(r))
            for v, b, s, r in zip(spec.values, spec.branch, spec.sign_half, spec.im_rank)]


def reproduce_table3(output_dir, workers=1):
    params = REFERENCE_PARAMS.with_gains(TABLE3_GAIN, TABLE3_GAIN)
    fem = filter_sweep(params, Scheme.FEM, TABLE3_NODES, [0, 5, 10], workers=workers)
    orfd = filter_sweep(params, Scheme.ORFD, TABLE3_NODES, [0], workers=workers)
    continuum = continuum_abscissa(params)

    rows, failures = [], []
    for (scheme, j_star), golden in TABLE3_GOLDEN.items():
        sweep = fem if scheme == 'fem' else orfd
        for N, expected in zip(TABLE3_NODES, golden):
            value = sweep.value(N, j_star)
            rel_error = abs(value - expected) / abs(expected)
            tolerance = TABLE3_CELL_TOLERANCE.get((scheme, N), TABLE3_TOLERANCE)
            passed = rel_error <= tolerance
            if scheme == 'orfd':
                drift = abs(value - continuum) / abs(continuum)
                if drift > CONTINUUM_TOLERANCE:
                    logger.error(f"ORFD N={N}: max Re {value:.6g} is {drift:.3%} from the continuum value "
                                 f"{continuum:.6g}")
                    passed = False
            if passed and rel_error > TABLE3_TOLERANCE:
                logger.warning(f"Table 3 {scheme} N={N}: {value:.6g} vs published {expected:.6g} "
                               f"({rel_error:.2%}) accepted under the per-cell tolerance {tolerance:.1%}")
            row = (scheme, N, j_star, value, expected, rel_error, tolerance, passed)
            rows.append(row)
            if not passed:
                failures.append(row)

    columns = ('scheme', 'N', 'jstar', 'max_re', 'golden', 'rel_error', 'tolerance', 'pass')
    path = write_csv(os.path.join(output_dir, 'table3.csv'), columns, rows)
    logger.info(f"Table 3: {len(rows) - len(failures)}/{len(rows)} cells within tolerance, "
                f"continuum abscissa {continuum:.6g}")
    if failures:
        for row in failures:
            logger.error(f"Table 3 mismatch {row[0]} N={row[1]} j*={row[2]}: {row[3]:.6g} vs {row[4]:.6g}")
        raise GoldenMismatch(f"{len(failures)} of {len(rows)} Table 3 cells outside tolerance",
                             rows=[dict(zip(columns, row)) for row in failures])
    return {'target': 'table3', 'files': [path], 'rows': len(rows), 'continuum': continuum, 'passed': True}


def reproduce_sigma_max(output_dir, workers=1):
    constants = derive_constants(REFERENCE_PARAMS)
    value = constants.sigma_max
    passed = abs(value - SIGMA_MAX_GOLDEN) <= SIGMA_MAX_TOLERANCE
    path = write_json(os.path.join(output_dir, 'sigma_max.json'),
                      {'sigma_max': value, 'golden': SIGMA_MAX_GOLDEN, 'pass': passed,
                       'constants': constants.as_dict()})
    logger.info(f"sigma_max = {value:.6f} (published {SIGMA_MAX_GOLDEN})")
    if not passed:
        raise GoldenMismatch(f"sigma_max {value:.6f} differs from {SIGMA_MAX_GOLDEN} by more than "
                             f"{SIGMA_MAX_TOLERANCE}",
                             rows=[{'quantity': 'sigma_max', 'value': value, 'golden': SIGMA_MAX_GOLDEN}])
    return {'target': 'sigma_max', 'files': [path], 'sigma_max': value, 'passed': True}


def reproduce_fig1(output_dir, workers=1):
    params = REFERENCE_PARAMS.with_gains(TABLE3_GAIN, TABLE3_GAIN)
    files = []
    for scheme in (Scheme.FEM, Scheme.ORFD):
        _, spec = labeled_spectrum(params, scheme, 80, label=scheme is Scheme.FEM)
        files.append(write_csv(os.path.join(output_dir, f'fig1_{scheme.value}_spectrum.csv'),
                               SPECTRUM_COLUMNS, spectrum_rows(spec)))
    return {'target': 'fig1', 'files': files}


def reproduce_sweep_figure(target, output_dir, workers=1):
    setup = FIGURE_SWEEPS[target]
    params = REFERENCE_PARAMS.with_gains(setup['gain'], setup['gain'])
    sweep = filter_sweep(params, Scheme.FEM, setup['nodes'], range(setup['jstar_max'] + 1), workers=workers)
    path = write_csv(os.path.join(output_dir, f'{target}_sweep.csv'), sweep.COLUMNS, sweep.csv_rows())
    optimum = {}
    for N, rows in sweep.by_N().items():
        try:
            optimum.update(optimal_jstar(SweepResult(scheme=sweep.scheme, rows=tuple(rows))))
        except NoPlateau as e:
            logger.warning(f"{target}: {e}")
            optimum[N] = None
    logger.info(f"{target}: optimal j* per N {optimum}")
    return {'target': target, 'files': [path], 'optimal_jstar': optimum}


def reproduce_fig5(output_dir, workers=1):
    params = REFERENCE_PARAMS.with_gains(TABLE3_GAIN, TABLE3_GAIN)
    runs = {
        'orfd': SimulationConfig(params=params, scheme=Scheme.ORFD, N=FIG5_NODES, j_star=0,
                                 T_final=FIG5_T_FINAL, samples=FIG5_SAMPLES),
    }
    for j_star in (0, 5, 10):
        runs[f'fem_j{j_star}'] = SimulationConfig(params=params, scheme=Scheme.FEM, N=FIG5_NODES, j_star=j_star,
                                                  T_final=FIG5_T_FINAL, samples=FIG5_SAMPLES)

    files, finals = [], {}
    for label, config in runs.items():
        trace = simulate(config).trace
        files.append(write_csv(os.path.join(output_dir, f'fig5_{label}.csv'), TRACE_COLUMNS, trace.rows()))
        finals[label] = trace.final_ratio

    ordered = figure5_ordering(finals)
    gap = finals['fem_j0'] / finals['orfd'] if finals['orfd'] > 0 else np.inf
    passed = ordered and gap > 10
    logger.info(f"Figure 5 final energies {finals}, ordering {'holds' if ordered else 'violated'}")
    if not passed:
        raise GoldenMismatch("Figure 5 ordering E_T(ORFD) <= E_T(j*=10) <= E_T(j*=5) <= E_T(j*=0) "
                             "with a factor above 10 does not hold",
                             rows=[{'run': k, 'E_normalized': v} for k, v in finals.items()])
    return {'target': 'fig5', 'files': files, 'final_energy': finals, 'passed': True}


def reproduce(target, output_dir='results', workers=1):
    """Run one canonical experiment target.

    Args:
        target (str): One of table3, fig1, fig2, fig5, fig6, sigma_max
        output_dir (str): Directory for the CSV/JSON artifacts
        workers (int): Threads for sweep cells

    Returns:
        dict: Summary with the written files and comparison results
    """
    if target not in TARGETS:
        raise InvalidParameter(f"unknown target {target!r}, expected one of {', '.join(TARGETS)}",
                               key_path='target')
    os.makedirs(output_dir, exist_ok=True)
    logger.info(f"Reproducing {target} into {output_dir}")
    if target == 'table3':
        return reproduce_table3(output_dir, workers)
    if target == 'sigma_max':
        return reproduce_sigma_max(output_dir, workers)
    if target == 'fig1':
        return reproduce_fig1(output_dir, workers)
    if target == 'fig5':
        return reproduce_fig5(output_dir, workers)
    return reproduce_sweep_figure(target, output_dir, workers)
