import os
import sys
import argparse
import logging

import numpy as np

from .errors import PiezoBeamError, ConfigError, GoldenMismatch, NumericalError, EXIT_OK, exit_code_for
from .params import derive_constants, group_slowness
from .discretization.matrices import Scheme
from .dynamics import SimulationConfig, simulate, snapshot_rows
from .analysis import (
    SweepResult, filter_sweep, optimal_jstar, convergence_study, labeled_spectrum, spectral_abscissa,
    fit_decay_rate,
)
from .spectral.eigen import Branch
from .spectral.observability import observability_ratio
from .experiments import TARGETS, SPECTRUM_COLUMNS, TRACE_COLUMNS, spectrum_rows, reproduce
from .utils.logging import setup_logging, get_current_log_filename
from .utils.config import (
    load_config, load_run_config, get_default_run_config, merge_overrides, validate_run_config,
    material_from_config, tolerance_from_config, save_run_config,
)
from .utils.io import write_csv, read_csv, to_json

logger = logging.getLogger('piezobeam')


def _int_list(text):
    return [int(v) for v in text.split(',') if v.strip()]


def _float_list(text):
    return [float(v) for v in text.split(',') if v.strip()]


class ArgumentParser(argparse.ArgumentParser):
    """Raises ConfigError on bad arguments so they exit with the configuration status."""

    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


def build_parser():
    parser = ArgumentParser(
        prog='piezobeam',
        description='Spectral analysis, filtering and energy decay of semi-discretized magnetizable piezoelectric beams')
    parser.add_argument('--config', help='JSON run configuration; flags override its values')
    parser.add_argument('--log-level', help='Logging level (default from PIEZOBEAM_LOG_LEVEL or INFO)')

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--scheme', choices=['fem', 'orfd'], help='Semi-discretization')
    common.add_argument('--nodes', type=int, help='Node parameter N (N+1 unknowns per field)')
    common.add_argument('--k1', type=float, help='Mechanical feedback amplifier')
    common.add_argument('--k2', type=float, help='Electromagnetic feedback amplifier')
    common.add_argument('--epsilon-probe', type=float, help='Probe damping for branch separation')
    common.add_argument('--tol-eps', type=float, help='Relative real-part shift threshold (automatic by default)')

    sub = parser.add_subparsers(dest='command', required=True)

    sub.add_parser('constants', parents=[common], help='Print the derived material constants as JSON')

    p = sub.add_parser('spectrum', parents=[common], help='Eigenvalues of one semi-discretization')
    p.add_argument('--branches', action='store_true', help='Separate the eigenvalue branches')
    p.add_argument('--csv', help='Write re, im, branch, sign_half, im_rank')

    p = sub.add_parser('branches', parents=[common], help='Spectrum with branch separation')
    p.add_argument('--csv', help='Write re, im, branch, sign_half, im_rank')

    p = sub.add_parser('simulate', parents=[common], help='Energy trace of the modal solution')
    p.add_argument('--jstar', type=int, help='Filtered pairs per branch and sign half')
    p.add_argument('--tfinal', type=float, help='Final time in seconds')
    p.add_argument('--samples', type=int, help='Number of uniform samples in [0, T_final]')
    p.add_argument('--ic', help='high_frequency, smooth, eigenmode:i or file:PATH')
    p.add_argument('--csv', help='Write t, E, E_normalized, dissipation')
    p.add_argument('--snapshots', help='Write t, x_j, v, p state snapshots')
    p.add_argument('--snapshot-count', type=int, default=None, help='Number of snapshots (default 20)')

    p = sub.add_parser('filter-sweep', parents=[common], help='Max Re over (N, j*)')
    p.add_argument('--nodes-list', type=_int_list, default=[40, 80, 160], help='Comma separated N values')
    p.add_argument('--jstar-max', type=int, default=10, help='Largest j* (sweeps 0..jstar-max)')
    p.add_argument('--csv', help='Write N, jstar, k1, k2, max_re')

    p = sub.add_parser('optimal-jstar', help='Optimal filtering level from a sweep CSV')
    p.add_argument('sweep_csv', help='CSV written by filter-sweep')
    p.add_argument('--plateau-tol', type=float, default=0.01, help='Relative plateau tolerance')
    p.add_argument('--knee-fraction', type=float, default=1 / 3,
                   help='Smallest step, relative to the largest, still worth a filter level')

    p = sub.add_parser('convergence', parents=[common], help='Fine-grid reference convergence study')
    p.add_argument('--levels', type=_int_list, default=[20, 40, 80], help='Comma separated grid levels')
    p.add_argument('--reference', type=int, help='Reference grid N (default twice the finest level)')
    p.add_argument('--probe-times', type=_float_list, help='Comma separated probe times')
    p.add_argument('--csv', help='Write N, h, t, error_energy, energy_gap')

    p = sub.add_parser('observability', parents=[common], help='Observability ratio of the top modes')
    p.add_argument('--nodes-list', type=_int_list, default=[20, 40, 80, 160], help='Comma separated N values')
    p.add_argument('--time', type=float, help='Observation time T (default 4 L eta)')
    p.add_argument('--branch', type=int, choices=[1, 2], default=2, help='Eigenvalue branch')
    p.add_argument('--modes', type=int, default=1, help='Number of top modes')
    p.add_argument('--csv', help='Write N, ratio')

    p = sub.add_parser('reproduce', help='Run a canonical experiment with reference comparison')
    p.add_argument('target', choices=TARGETS)
    p.add_argument('--output-dir', help='Directory for artifacts (default PIEZOBEAM_OUTPUT_DIR)')

    return parser


def run_config_from_args(args):
    """Load the file config (or defaults) and apply command line flags on top."""
    config = load_run_config(args.config) if args.config else get_default_run_config()
    overrides = {
        'control': {'k1': getattr(args, 'k1', None), 'k2': getattr(args, 'k2', None)},
        'grid': {'scheme': getattr(args, 'scheme', None), 'N': getattr(args, 'nodes', None)},
        'filter': {'j_star': getattr(args, 'jstar', None),
                   'epsilon_probe': getattr(args, 'epsilon_probe', None),
                   'tol_eps': getattr(args, 'tol_eps', None)},
        'simulation': {'T_final': getattr(args, 'tfinal', None), 'samples': getattr(args, 'samples', None),
                       'ic': getattr(args, 'ic', None), 'snapshot_count': getattr(args, 'snapshot_count', None)},
        'output': {'csv': getattr(args, 'csv', None), 'snapshots': getattr(args, 'snapshots', None)},
    }
    overrides = {block: {k: v for k, v in values.items() if v is not None} for block, values in overrides.items()}
    return validate_run_config(merge_overrides(config, overrides))


def cmd_constants(config, env):
    params = material_from_config(config)
    return derive_constants(params).as_dict()


def cmd_spectrum(config, env, branches=False):
    params = material_from_config(config)
    scheme = Scheme.parse(config['grid']['scheme'])
    N = config['grid']['N']
    _, spec = labeled_spectrum(params, scheme, N, config['filter']['epsilon_probe'],
                               tolerance_from_config(config), label=branches)
    summary = {'scheme': scheme.value, 'N': N, 'eigenvalues': len(spec),
               'max_re': spectral_abscissa(spec), 'labeled': spec.is_labeled}
    if branches:
        summary['branch_counts'] = {f'branch{int(b)}': int(np.sum(spec.branch == int(b)))
                                    for b in (Branch.BRANCH1, Branch.BRANCH2)}
    if config['output']['csv']:
        summary['csv'] = write_csv(config['output']['csv'], SPECTRUM_COLUMNS, spectrum_rows(spec))
    return summary


def cmd_simulate(config, env):
    params = material_from_config(config)
    sim = config['simulation']
    want_snapshots = bool(config['output']['snapshots'])
    snapshot_count = sim['snapshot_count'] or (20 if want_snapshots else 0)
    sim_config = SimulationConfig(
        params=params, scheme=config['grid']['scheme'], N=config['grid']['N'],
        j_star=config['filter']['j_star'], ic=sim['ic'], T_final=float(sim['T_final']), samples=sim['samples'],
        epsilon_probe=config['filter']['epsilon_probe'], tol_eps=tolerance_from_config(config),
        snapshot_count=snapshot_count if want_snapshots else 0,
    )
    result = simulate(sim_config)
    trace = result.trace
    summary = {'scheme': trace.scheme, 'N': sim_config.N, 'j_star': trace.j_star, 'samples': len(trace),
               'E0': float(trace.energy[0]), 'E_final_normalized': trace.final_ratio,
               'ill_conditioned': trace.metadata['ill_conditioned']}
    try:
        fit = fit_decay_rate(trace)
        summary['decay_fit'] = {'sigma': fit.sigma, 'M': fit.M, 'r_squared': fit.r_squared}
    except NumericalError as e:
        logger.debug(f"No decay fit for this trace: {e}")
    if config['output']['csv']:
        summary['csv'] = write_csv(config['output']['csv'], TRACE_COLUMNS, trace.rows())
    if want_snapshots:
        summary['snapshots'] = write_csv(config['output']['snapshots'], ('t', 'x_j', 'v', 'p'),
                                         snapshot_rows(result.operator, result.snapshots))
    return summary


def cmd_filter_sweep(config, env, args):
    params = material_from_config(config)
    sweep = filter_sweep(params, config['grid']['scheme'], args.nodes_list, range(args.jstar_max + 1),
                         config['filter']['epsilon_probe'], tolerance_from_config(config), workers=env['workers'])
    summary = {'scheme': sweep.scheme, 'rows': len(sweep),
               'min_max_re': float(min(r.max_re for r in sweep.rows))}
    if config['output']['csv']:
        summary['csv'] = write_csv(config['output']['csv'], SweepResult.COLUMNS, sweep.csv_rows())
    return summary


def cmd_optimal_jstar(args):
    _, rows = read_csv(args.sweep_csv)
    sweep = SweepResult.from_csv_rows(rows)
    return {'optimal_jstar': optimal_jstar(sweep, args.plateau_tol, args.knee_fraction)}


def cmd_convergence(config, env, args):
    params = material_from_config(config)
    report = convergence_study(params, config["grid"]["scheme"],
                               args.levels, args.probe_times, args.reference, workers=env['workers'])
    summary = report.summary()
    if config['output']['csv']:
        summary['csv'] = write_csv(config['output']['csv'], report.COLUMNS, report.csv_rows())
    return summary


def cmd_observability(config, env, args):
    params = material_from_config(config)
    T = args.time if args.time is not None else 4.0 * params.L * group_slowness(params)
    ratios = [(N, observability_ratio(params, N, T, Branch(args.branch), args.modes)) for N in args.nodes_list]
    summary = {'T': T, 'branch': args.branch, 'modes': args.modes,
               'ratios': {str(N): ratio for N, ratio in ratios}}
    if config['output']['csv']:
        summary['csv'] = write_csv(config['output']['csv'], ('N', 'ratio'), ratios)
    return summary


def run(args, env):
    """Execute one subcommand and return its JSON summary."""
    if args.command == 'optimal-jstar':
        return cmd_optimal_jstar(args)
    if args.command == 'reproduce':
        output_dir = args.output_dir
        if output_dir is None and args.config:
            output_dir = load_run_config(args.config)['output']['dir']
        return reproduce(args.target, output_dir or env['output_dir'], workers=env['workers'])

    config = run_config_from_args(args)
    if args.command == 'constants':
        summary = cmd_constants(config, env)
    elif args.command in ('spectrum', 'branches'):
        summary = cmd_spectrum(config, env, branches=args.command == 'branches' or args.branches)
    elif args.command == 'simulate':
        summary = cmd_simulate(config, env)
    elif args.command == 'filter-sweep':
        summary = cmd_filter_sweep(config, env, args)
    elif args.command == 'convergence':
        summary = cmd_convergence(config, env, args)
    else:
        summary = cmd_observability(config, env, args)
    return record_config(config, summary)


def record_config(config, summary):
    """Save the effective configuration next to a written CSV artifact."""
    if summary.get('csv'):
        path = os.path.splitext(summary['csv'])[0] + '.config.json'
        if save_run_config(config, path):
            summary['config'] = path
    return summary


def main(argv=None):
    """Main entry point for the CLI"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        env = load_config()
    except PiezoBeamError as e:
        print(to_json({'status': 'error', 'error': type(e).__name__, 'message': str(e)}))
        sys.exit(exit_code_for(e))

    logger = setup_logging(args.log_level or env['log_level'])
    logger.info(f"piezobeam {args.command}")

    try:
        summary = run(args, env)
    except GoldenMismatch as e:
        logger.error(f"Reference comparison failed: {e}")
        for row in e.rows:
            logger.error(f"  {row}")
        print(to_json({'status': 'mismatch', 'command': args.command, 'message': str(e), 'rows': e.rows}))
        sys.exit(exit_code_for(e))
    except PiezoBeamError as e:
        stage = getattr(e, 'stage', None)
        logger.error(f"{args.command} failed{f' in stage {stage}' if stage else ''}: {e}")
        payload = {'status': 'error', 'command': args.command, 'error': type(e).__name__, 'message': str(e)}
        if isinstance(e, NumericalError):
            payload['stage'] = stage
        print(to_json(payload))
        sys.exit(exit_code_for(e))

    summary = dict(summary, status='ok', command=args.command, log_file=get_current_log_filename(logger))
    print(to_json(summary))
    sys.exit(EXIT_OK)


if __name__ == "__main__":
    main()
