import pytest

import numpy as np

from piezobeam.errors import DegenerateWindow, NonPositiveEnergy, NoPlateau, InsufficientLevels, InvalidParameter
from piezobeam.discretization.matrices import GridConfig
from piezobeam.spectral.eigen import compute_spectrum
from piezobeam.dynamics import EnergyTrace, modal_energy
from piezobeam.analysis import (
    fit_decay_rate,
    decay_envelope_check,
    spectral_abscissa,
    SweepRow,
    SweepResult,
    filter_sweep,
    optimal_jstar,
    figure5_ordering,
    restrict_reference,
    error_energy,
    convergence_study,
)


def _trace(times, values):
    times = np.asarray(times, dtype=float)
    return EnergyTrace(times=times, energy=np.asarray(values, dtype=float), dissipation=np.zeros_like(times),
                       scheme='orfd', j_star=0)


def _sweep(values, N=40):
    return SweepResult(scheme='fem', rows=tuple(SweepRow(N=N, j_star=j, k1=1e6, k2=1e6, max_re=v)
                                                for j, v in enumerate(values)))


class TestDecayFit:
    """Test cases for exponential decay fitting."""

    def test_synthetic_exponential(self):
        """3 exp(-2t) fits sigma = 2, prefactor 3 and M = 1."""
        t = np.linspace(0.0, 1.0, 50)
        fit = fit_decay_rate(_trace(t, 3.0 * np.exp(-2.0 * t)))
        assert fit.sigma == pytest.approx(2.0, rel=1e-10)
        assert fit.prefactor == pytest.approx(3.0, rel=1e-10)
        assert fit.M == pytest.approx(1.0, rel=1e-10)
        assert fit.r_squared == pytest.approx(1.0)
        assert fit.samples == 50

    def test_window(self):
        """Only samples inside the window are used."""
        t = np.linspace(0.0, 1.0, 101)
        values = np.where(t < 0.45, np.exp(-10.0 * t), 2.0 * np.exp(-4.0 * t))
        fit = fit_decay_rate(_trace(t, values), window=(0.5, 1.0))
        assert fit.sigma == pytest.approx(4.0, rel=1e-8)
        assert fit.prefactor == pytest.approx(2.0, rel=1e-8)
        assert 50 <= fit.samples <= 51

    def test_degenerate_window(self):
        """Fewer than eight samples cannot be fitted."""
        t = np.linspace(0.0, 1.0, 20)
        with pytest.raises(DegenerateWindow):
            fit_decay_rate(_trace(t, np.exp(-t)), window=(0.0, 0.2))

    def test_zero_energy(self):
        """A vanishing sample makes the log fit impossible."""
        t = np.linspace(0.0, 1.0, 10)
        values = np.exp(-t)
        values[-1] = 0.0
        with pytest.raises(NonPositiveEnergy):
            fit_decay_rate(_trace(t, values))

    def test_single_mode_rate(self, unit_params, make_operator):
        """One eigenmode decays at -2 Re(lambda)."""
        op = make_operator(unit_params, 'orfd', 4)
        spec = compute_spectrum(op)
        j = int(np.argmax(np.where(spec.values.imag > 0, spec.values.real, -np.inf)))
        coeffs = np.zeros(len(spec), dtype=complex)
        coeffs[j] = spec.vector_scales[j]
        t = np.linspace(0.0, 1.0, 40)
        fit = fit_decay_rate(_trace(t, modal_energy(spec, coeffs, t, real=False)))
        assert fit.sigma == pytest.approx(-2.0 * spec.values[j].real, rel=1e-8)


class TestEnvelope:
    """Test cases for the decay envelope check."""

    def test_holds_and_fails(self):
        """3 exp(-2t) satisfies sigma = 2, M = 1 but not sigma = 3."""
        t = np.linspace(0.0, 1.0, 30)
        trace = _trace(t, 3.0 * np.exp(-2.0 * t))
        ok, worst = decay_envelope_check(trace, 2.0, 1.0)
        assert ok and worst == pytest.approx(1.0)
        ok, worst = decay_envelope_check(trace, 3.0, 1.0)
        assert not ok and worst > 1.0

    def test_spectral_abscissa(self, unit_params, make_operator):
        """The abscissa is the largest real part."""
        spec = compute_spectrum(make_operator(unit_params, 'fem', 3))
        assert spectral_abscissa(spec) == pytest.approx(np.max(spec.values.real))
        assert spectral_abscissa(spec, [0]) == pytest.approx(spec.values[0].real)


class TestOptimalJstar:
    """Test cases for plateau detection."""

    def test_plateau(self):
        """The last large step before the plateau is chosen."""
        assert optimal_jstar(_sweep([-1.0, -50.0, -99.5, -100.0, -100.0])) == {40: 1}

    def test_knee_before_slow_tail(self):
        """Small steps that only close the gap to the plateau are not taken."""
        values = [-3.379, -13.54, -30.57, -54.63, -86.02, -125.22, -173.05, -177.001, -177.001, -177.0]
        assert optimal_jstar(_sweep(values)) == {40: 5}

    def test_knee_fraction_one(self):
        """With knee_fraction=1 the largest step is chosen."""
        values = [-1.0, -10.0, -40.0, -50.0, -50.0]
        assert optimal_jstar(_sweep(values), knee_fraction=1.0) == {40: 1}
        assert optimal_jstar(_sweep(values), knee_fraction=0.2) == {40: 2}

    def test_invalid_knee_fraction(self):
        """The knee fraction must lie in (0, 1]."""
        with pytest.raises(InvalidParameter):
            optimal_jstar(_sweep([-1.0, -2.0, -2.0]), knee_fraction=0.0)

    def test_flat_sweep(self):
        """A constant sweep needs no filtering."""
        assert optimal_jstar(_sweep([-5.0] * 5)) == {40: 0}

    def test_no_plateau(self):
        """A sweep still decreasing at its end raises NoPlateau."""
        with pytest.raises(NoPlateau):
            optimal_jstar(_sweep([-1.0, -2.0, -3.0, -4.0, -5.0]))

    def test_negative_tolerance(self):
        """The plateau tolerance must be nonnegative."""
        with pytest.raises(InvalidParameter):
            optimal_jstar(_sweep([-1.0, -2.0]), plateau_tol=-0.1)

    def test_csv_rows_with_na(self):
        """NA j* rows parse to None and are skipped."""
        sweep = SweepResult.from_csv_rows([['80', 'NA', '1e6', '1e6', '-176.9'],
                                           ['40', '0', '1e6', '1e6', '-13.1']])
        assert sweep.rows[0].N == 40
        assert sweep.value(80, None) == pytest.approx(-176.9)
        assert optimal_jstar(sweep) == {40: 0}

    def test_figure_ordering(self):
        """The final energies must be ordered ORFD <= j*=10 <= j*=5 <= j*=0."""
        assert figure5_ordering({'orfd': 1e-6, 'fem_j10': 1e-4, 'fem_j5': 1e-3, 'fem_j0': 0.5})
        assert not figure5_ordering({'orfd': 1e-2, 'fem_j10': 1e-4, 'fem_j5': 1e-3, 'fem_j0': 0.5})


class TestFilterSweep:
    """Test cases for the (N, j*) sweep."""

    def test_nonincreasing_in_jstar(self, reference_params):
        """Removing more pairs never raises the maximal real part."""
        sweep = filter_sweep(reference_params, 'fem', [5], [3, 0, 1, 2])
        values = [row.max_re for row in sweep.by_N()[5]]
        assert [row.j_star for row in sweep.rows] == [0, 1, 2, 3]
        assert all(b <= a + 1e-12 * abs(a) for a, b in zip(values, values[1:]))
        assert sweep.provenance['k1'] == 1e6

    def test_orfd_single_row(self, reference_params):
        """ORFD gives one unfiltered NA row per N."""
        sweep = filter_sweep(reference_params, 'orfd', [4, 3], [0, 5])
        assert [(row.N, row.j_star) for row in sweep.rows] == [(3, None), (4, None)]
        assert sweep.csv_rows()[0][1] is None

    def test_workers_give_same_rows(self, reference_params):
        """The thread pool does not change the result."""
        serial = filter_sweep(reference_params, 'fem', [5, 10], [0, 1])
        threaded = filter_sweep(reference_params, 'fem', [5, 10], [0, 1], workers=2)
        assert serial.csv_rows() == threaded.csv_rows()

    def test_negative_jstar(self, reference_params):
        """Negative j* values are rejected."""
        with pytest.raises(InvalidParameter):
            filter_sweep(reference_params, 'fem', [3], [-1])


class TestRestriction:
    """Test cases for reference-grid restriction."""

    def test_nested_injection(self):
        """Nested grids sample every ratio-th node."""
        ref = GridConfig(N=9)
        state = np.arange(40.0)
        restricted = restrict_reference(ref, state, GridConfig(N=4))
        assert list(restricted[:5]) == [1.0, 3.0, 5.0, 7.0, 9.0]
        assert list(restricted[15:]) == [31.0, 33.0, 35.0, 37.0, 39.0]

    def test_spline_reproduces_cubics(self):
        """Non-nested grids interpolate cubic fields exactly."""
        ref, coarse = GridConfig(N=6), GridConfig(N=4)
        field = lambda x: x ** 3 + x
        state = np.concatenate([field(ref.nodes)] * 4)
        restricted = restrict_reference(ref, state, coarse)
        assert np.allclose(restricted, np.concatenate([field(coarse.nodes)] * 4), atol=1e-12)

    def test_error_energy_zero(self, unit_params, make_operator, rng):
        """A state has zero error against itself."""
        op = make_operator(unit_params, 'orfd', 4)
        state = rng.standard_normal(op.dimension)
        assert error_energy(op, state, state) == 0.0


class TestConvergenceStudy:
    """Test cases for the convergence study driver."""

    def test_insufficient_levels(self, unit_params):
        """At least three grid levels are required."""
        with pytest.raises(InsufficientLevels):
            convergence_study(unit_params, N_levels=(4, 8))

    def test_reference_coarser_than_levels(self, unit_params):
        """The reference grid cannot be coarser than the finest level."""
        with pytest.raises(InvalidParameter):
            convergence_study(unit_params, N_levels=(3, 4, 5), reference_N=4)

    def test_reference_level_has_zero_error(self, unit_params):
        """A level equal to the reference grid has zero error and gap."""
        report = convergence_study(unit_params, 'orfd', N_levels=(3, 4, 5), reference_N=5,
                                   probe_times=[0.1, 0.2])
        assert np.all(report.error_energy[2] == 0.0)
        assert np.all(report.energy_gap[2] == 0.0)
        assert np.all(report.error_energy[:2] > 0.0)
        assert len(report.csv_rows()) == 6
        assert report.summary()['levels'] == [3, 4, 5]
        assert report.h == pytest.approx((0.25, 0.2, 1.0 / 6.0))
