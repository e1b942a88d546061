import math
import pytest
from unittest.mock import patch

import numpy as np

from piezobeam.errors import (
    InvalidParameter, FileFormat, SchemeMismatch, SingularSystem, NonPositiveEnergy,
)
from piezobeam.params import lyapunov_rate, group_slowness
from piezobeam.discretization.matrices import Scheme
from piezobeam.spectral.eigen import compute_spectrum
from piezobeam.spectral.filtering import full_filter, project_state
from piezobeam.dynamics import (
    ICKind,
    InitialCondition,
    EnergyTrace,
    SimulationConfig,
    high_frequency_profile,
    initial_state,
    energy,
    boundary_dissipation,
    lyapunov_functional,
    modal_propagate,
    modal_energy,
    modal_dissipation,
    energy_rate,
    implicit_midpoint_step,
    implicit_midpoint_trajectory,
    sample_times,
    smooth_profile,
    simulate,
    snapshot_rows,
)
from piezobeam.utils.io import write_csv, IC_COLUMNS


def _lowest_mode_index(spec):
    candidates = np.flatnonzero(spec.values.imag > 0)
    return int(candidates[np.argmin(spec.values.imag[candidates])])


class TestInitialCondition:
    """Test cases for initial condition parsing and sampling."""

    @pytest.mark.parametrize("text,kind", [("high_frequency", ICKind.HIGH_FREQUENCY),
                                           ("SMOOTH", ICKind.SMOOTH_LOW_MODE),
                                           ("eigenmode:3", ICKind.EIGENMODE),
                                           ("file:/tmp/ic.csv", ICKind.CUSTOM)])
    def test_parse(self, text, kind):
        """Kinds parse case-insensitively and print back."""
        ic = InitialCondition.parse(text)
        assert ic.kind is kind
        assert InitialCondition.parse(str(ic)) == ic

    @pytest.mark.parametrize("text", ["wave", "eigenmode:x", "file:"])
    def test_parse_errors(self, text):
        """Unknown kinds, bad indices and missing paths are rejected."""
        with pytest.raises(InvalidParameter):
            InitialCondition.parse(text)

    def test_high_frequency_profile_node(self):
        """The profile at x_40 of N = 80 matches the direct sum."""
        x = 40.0 / 81.0
        expected = 1e-2 * sum(x * math.sin(k * math.pi * x) for k in range(41, 82))
        assert high_frequency_profile([x])[0] == pytest.approx(expected, rel=1e-12)

    def test_high_frequency_state_layout(self, unit_params, make_operator):
        """All four fields carry the same profile."""
        op = make_operator(unit_params, 'fem', 4)
        state = initial_state('high_frequency', op)
        n = op.N + 1
        assert np.array_equal(state[:n], state[3 * n:])
        assert np.array_equal(state[:n], high_frequency_profile(op.grid.nodes))

    def test_smooth_mode_at_rest(self, unit_params, make_operator):
        """The smooth initial condition has zero velocity."""
        op = make_operator(unit_params, 'orfd', 4)
        state = initial_state('smooth', op)
        assert not np.any(state[2 * (op.N + 1):])
        assert state[op.N] == pytest.approx(8.0 / 9.0)

    def test_smooth_profile_flat_at_tip(self):
        """The first three derivatives of the smooth profile vanish at x = L."""
        L, h = 2.0, 1e-3
        x = L + h * np.arange(-3, 4)
        v = smooth_profile(x, L)
        d1 = (v[4] - v[2]) / (2 * h)
        d2 = (v[4] - 2 * v[3] + v[2]) / h ** 2
        d3 = (v[5] - 2 * v[4] + 2 * v[2] - v[1]) / (2 * h ** 3)
        assert smooth_profile([0.0], L)[0] == pytest.approx(0.0, abs=1e-15)
        assert abs(d1) < 1e-6
        assert abs(d2) < 1e-5
        assert abs(d3) < 1e-4

    def test_eigenmode_unit_energy(self, unit_params, make_operator):
        """Eigenmode initial states are scaled to unit energy."""
        op = make_operator(unit_params, 'fem', 3)
        spec = compute_spectrum(op)
        state = initial_state(InitialCondition(kind=ICKind.EIGENMODE, index=2), op, spec)
        assert energy(op, state) == pytest.approx(1.0)
        with pytest.raises(InvalidParameter):
            initial_state(f"eigenmode:{len(spec)}", op, spec)

    def test_file_initial_condition(self, unit_params, make_operator, tmp_path):
        """A CSV sampled on the grid, clamped row included, is read back."""
        op = make_operator(unit_params, 'fem', 3)
        x = np.concatenate(([0.0], op.grid.nodes))
        rows = [(xj, 0.0 if j == 0 else 1.0, 0.0 if j == 0 else 2.0, 0.0, 0.0) for j, xj in enumerate(x)]
        path = write_csv(str(tmp_path / 'ic.csv'), IC_COLUMNS, rows)
        state = initial_state(f"file:{path}", op)
        assert np.array_equal(state, np.concatenate((np.ones(4), 2.0 * np.ones(4), np.zeros(8))))

    def test_file_grid_mismatch(self, unit_params, make_operator, tmp_path):
        """Nodes that do not match the grid raise FileFormat."""
        op = make_operator(unit_params, 'fem', 3)
        rows = [(0.1 * j, 1.0, 1.0, 0.0, 0.0) for j in range(1, 5)]
        path = write_csv(str(tmp_path / 'ic.csv'), IC_COLUMNS, rows)
        with pytest.raises(FileFormat):
            initial_state(f"file:{path}", op)


class TestModalSolution:
    """Test cases for the modal propagation."""

    def test_initial_reconstruction(self, unit_params, make_operator):
        """At t = 0 the modal state equals the projected initial state."""
        op = make_operator(unit_params, 'fem', 4)
        spec = compute_spectrum(op)
        projection = project_state(spec, full_filter(spec), initial_state('high_frequency', op))
        assert np.allclose(modal_propagate(spec, projection.coeffs, 0.0), projection.state, atol=1e-12)

    def test_single_mode_decay(self, unit_params, make_operator):
        """A single complex mode decays like exp(2 Re(lambda) t)."""
        op = make_operator(unit_params, 'orfd', 4)
        spec = compute_spectrum(op)
        j = _lowest_mode_index(spec)
        coeffs = np.zeros(len(spec), dtype=complex)
        coeffs[j] = spec.vector_scales[j]
        times = np.linspace(0.0, 2.0, 9)
        E = modal_energy(spec, coeffs, times, real=False)
        expected = 0.5 * op.h * np.exp(2.0 * spec.values[j].real * times)
        assert np.allclose(E, expected, rtol=1e-7)

    def test_conservation_without_feedback(self, unit_free_params, make_operator):
        """Zero gains conserve the energy."""
        op = make_operator(unit_free_params, 'fem', 5)
        spec = compute_spectrum(op)
        projection = project_state(spec, full_filter(spec), initial_state('high_frequency', op))
        E = modal_energy(spec, projection.coeffs, np.linspace(0.0, 5.0, 11))
        assert np.allclose(E, E[0], rtol=1e-9)

    def test_energy_rate_is_dissipation(self, unit_params, make_operator):
        """dE/dt = -(k1 vdot_tip^2 + k2 pdot_tip^2) along the modal solution."""
        op = make_operator(unit_params, 'fem', 4)
        spec = compute_spectrum(op)
        coeffs = project_state(spec, full_filter(spec), initial_state('high_frequency', op)).coeffs
        for t in (0.1, 0.7):
            D = float(modal_dissipation(op, spec, coeffs, t)[0])
            assert energy_rate(spec, coeffs, t) == pytest.approx(-D, rel=1e-6, abs=1e-12)


class TestImplicitMidpoint:
    """Test cases for the implicit midpoint integrator."""

    def test_conserves_energy_without_feedback(self, unit_free_params, make_operator):
        """The midpoint rule preserves the quadratic energy."""
        op = make_operator(unit_free_params, 'orfd', 5)
        states = implicit_midpoint_trajectory(op, initial_state('high_frequency', op), 0.05, 100)
        E = energy(op, states)
        assert np.allclose(E, E[0], rtol=1e-10)

    def test_second_order(self, unit_params, make_operator):
        """Halving the step divides the error by about four."""
        op = make_operator(unit_params, 'fem', 4)
        spec = compute_spectrum(op)
        x0 = initial_state(InitialCondition(kind=ICKind.EIGENMODE, index=_lowest_mode_index(spec)), op, spec)
        coeffs = project_state(spec, full_filter(spec), x0).coeffs
        exact = modal_propagate(spec, coeffs, 1.0)
        errors = []
        for steps in (20, 40):
            states = implicit_midpoint_trajectory(op, x0, 1.0 / steps, steps)
            errors.append(np.linalg.norm(states[:, -1] - exact))
        assert 3.5 < errors[0] / errors[1] < 4.5

    def test_small_step_matches_modal(self, unit_params, make_operator):
        """With a fine step the integrator tracks the modal solution."""
        op = make_operator(unit_params, 'fem', 4)
        spec = compute_spectrum(op)
        x0 = initial_state('high_frequency', op)
        coeffs = project_state(spec, full_filter(spec), x0).coeffs
        states = implicit_midpoint_trajectory(op, x0, 1e-4, 5000)
        exact = modal_propagate(spec, coeffs, 0.5)
        assert np.linalg.norm(states[:, -1] - exact) <= 1e-4 * np.linalg.norm(exact)

    def test_single_step_consistent_with_trajectory(self, unit_params, make_operator):
        """One step equals the first trajectory column."""
        op = make_operator(unit_params, 'fem', 3)
        x0 = initial_state('high_frequency', op)
        assert np.allclose(implicit_midpoint_step(op, x0, 0.01), implicit_midpoint_trajectory(op, x0, 0.01, 1)[:, 1])

    def test_nonpositive_step(self, unit_params, make_operator):
        """dt must be positive."""
        op = make_operator(unit_params, 'fem', 3)
        with pytest.raises(InvalidParameter):
            implicit_midpoint_step(op, initial_state('high_frequency', op), 0.0)

    @patch('scipy.linalg.lu_factor')
    def test_singular_system(self, mock_lu, unit_params, make_operator):
        """A zero pivot raises SingularSystem."""
        op = make_operator(unit_params, 'fem', 2)
        n = op.dimension
        lu = np.eye(n)
        lu[-1, -1] = 0.0
        mock_lu.return_value = (lu, np.arange(n))
        with pytest.raises(SingularSystem):
            implicit_midpoint_step(op, np.zeros(n), 0.123)


class TestLyapunovFunctional:
    """Test cases for the ORFD Lyapunov functional."""

    def test_bounds_on_random_states(self, reference_params, make_operator, rng):
        """|phi| <= L eta E, so L_h lies within (1 +- delta L eta) E."""
        op = make_operator(reference_params, 'orfd', 20)
        eta = group_slowness(reference_params)
        delta = 0.9 * lyapunov_rate(reference_params).orfd_delta_cap
        x = delta * reference_params.L * eta
        for _ in range(1000):
            state = op.scale.from_energy_coordinates(rng.standard_normal(op.dimension))
            E = energy(op, state)
            L_h, phi = lyapunov_functional(op, state, delta)
            assert abs(phi) <= reference_params.L * eta * E * (1.0 + 1e-9)
            assert (1.0 - x) * E * (1.0 - 1e-9) <= L_h <= (1.0 + x) * E * (1.0 + 1e-9)

    def test_zero_delta_is_energy(self, unit_params, make_operator, rng):
        """delta = 0 gives L_h = E."""
        op = make_operator(unit_params, 'orfd', 4)
        state = rng.standard_normal(op.dimension)
        assert lyapunov_functional(op, state, 0.0)[0] == pytest.approx(energy(op, state))

    def test_zero_velocity(self, unit_params, make_operator, rng):
        """phi vanishes for states at rest."""
        op = make_operator(unit_params, 'orfd', 4)
        state = np.concatenate((rng.standard_normal(10), np.zeros(10)))
        assert lyapunov_functional(op, state, 1.0)[1] == 0.0

    def test_fem_rejected(self, unit_params, make_operator):
        """The functional is defined for ORFD states only."""
        op = make_operator(unit_params, 'fem', 3)
        with pytest.raises(SchemeMismatch):
            lyapunov_functional(op, np.zeros(op.dimension), 1.0)


class TestEnergyTrace:
    """Test cases for trace validation."""

    def test_times_must_increase(self):
        """Repeated times are rejected."""
        with pytest.raises(InvalidParameter):
            EnergyTrace(times=np.array([0.0, 0.0]), energy=np.ones(2), dissipation=np.zeros(2),
                        scheme='fem', j_star=0)

    def test_negative_energy(self):
        """Negative samples are rejected."""
        with pytest.raises(NonPositiveEnergy):
            EnergyTrace(times=np.array([0.0, 1.0]), energy=np.array([1.0, -1.0]), dissipation=np.zeros(2),
                        scheme='fem', j_star=0)

    def test_normalized(self):
        """Energy is normalized by its first sample."""
        trace = EnergyTrace(times=np.array([0.0, 1.0]), energy=np.array([2.0, 1.0]), dissipation=np.zeros(2),
                            scheme='orfd', j_star=0)
        assert trace.final_ratio == 0.5
        assert trace.rows()[1] == (1.0, 1.0, 0.5, 0.0)
        zero = EnergyTrace(times=np.array([0.0]), energy=np.array([0.0]), dissipation=np.zeros(1),
                           scheme='orfd', j_star=0)
        assert zero.final_ratio == 0.0


class TestSimulate:
    """Test cases for the end-to-end simulation pipeline."""

    def test_zero_final_time(self, unit_params):
        """T_final = 0 yields a single sample."""
        result = simulate(SimulationConfig(params=unit_params, scheme='fem', N=4, T_final=0.0))
        assert len(result.trace) == 1
        assert result.trace.final_ratio == 1.0
        assert list(sample_times(0.0, 400)) == [0.0]
        assert list(sample_times(0.0, 1)) == [0.0]
        assert SimulationConfig(params=unit_params, T_final=0.0, samples=1).samples == 1

    def test_single_sample_needs_zero_time(self):
        """One sample cannot cover a positive horizon."""
        with pytest.raises(InvalidParameter):
            sample_times(1.0, 1)
        assert list(sample_times(1.0, 2)) == [0.0, 1.0]

    def test_energy_nonincreasing(self, unit_params):
        """With feedback the energy never grows."""
        trace = simulate(SimulationConfig(params=unit_params, scheme=Scheme.ORFD, N=5, T_final=2.0,
                                          samples=50)).trace
        assert np.all(np.diff(trace.energy) <= 1e-12 * trace.energy[0])
        assert np.all(trace.dissipation >= 0)
        assert trace.metadata['retained'] == 4 * 6

    def test_filtered_run(self, reference_params):
        """j* > 0 labels the spectrum and drops 4 j* eigenpairs."""
        result = simulate(SimulationConfig(params=reference_params, scheme='fem', N=5, j_star=2,
                                           T_final=1e-3, samples=20))
        assert result.spectrum.is_labeled
        assert result.trace.metadata['retained'] == 4 * (6 - 2)
        assert result.trace.j_star == 2

    @pytest.mark.parametrize("kwargs", [{'samples': 0}, {'samples': 1}, {'T_final': -1.0}, {'j_star': -1}, {'scheme': 'spectral'}])
    def test_invalid_config(self, unit_params, kwargs):
        """Out-of-range settings are rejected at construction."""
        with pytest.raises(InvalidParameter):
            SimulationConfig(params=unit_params, **kwargs)

    def test_snapshots(self, unit_params):
        """Snapshot rows include the clamped node of every snapshot."""
        result = simulate(SimulationConfig(params=unit_params, scheme='orfd', N=3, T_final=0.5, samples=10,
                                           snapshot_count=3))
        rows = snapshot_rows(result.operator, result.snapshots)
        assert len(rows) == 3 * 5
        assert rows[0] == (0.0, 0.0, 0.0, 0.0)
        assert boundary_dissipation(result.operator, result.snapshots[0][1]) >= 0
