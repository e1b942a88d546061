import logging
import threading
from collections import OrderedDict
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np
import scipy.linalg

from .errors import InvalidParameter, SchemeMismatch, SingularSystem, NonPositiveEnergy
from .params import coupling_ratios
from .discretization.matrices import GridConfig, Scheme, assemble_blocks
from .discretization.conditioning import conditioning_transform
from .discretization.energy import energy_gram, midpoint_fields, split_state
from .spectral.eigen import compute_spectrum
from .spectral.branches import separate_branches
from .spectral.filtering import build_filter, full_filter, project_state
from .utils.io import read_initial_condition

logger = logging.getLogger('piezobeam')


class ICKind(str, Enum):
    HIGH_FREQUENCY = 'high_frequency'
    SMOOTH_LOW_MODE = 'smooth'
    EIGENMODE = 'eigenmode'
    CUSTOM = 'file'


@dataclass(frozen=True)
class InitialCondition:
    kind: ICKind = ICKind.HIGH_FREQUENCY
    index: int = 0
    path: Optional[str] = None

    @classmethod
    def parse(cls, text):
        """Parse 'high_frequency', 'smooth', 'eigenmode:i' or 'file:PATH'."""
        if isinstance(text, cls):
            return text
        text = str(text).strip()
        head, _, rest = text.partition(':')
        try:
            kind = ICKind(head.lower())
        except ValueError:
            raise InvalidParameter(f"unknown initial condition {text!r}", key_path='simulation.ic')
        if kind is ICKind.EIGENMODE:
            try:
                return cls(kind=kind, index=int(rest))
            except ValueError:
                raise InvalidParameter(f"eigenmode index must be an integer, got {rest!r}", key_path='simulation.ic')
        if kind is ICKind.CUSTOM:
            if not rest:
                raise InvalidParameter("file initial condition needs a path", key_path='simulation.ic')
            return cls(kind=kind, path=rest)
        return cls(kind=kind)

    def __str__(self):
        if self.kind is ICKind.EIGENMODE:
            return f"eigenmode:{self.index}"
        if self.kind is ICKind.CUSTOM:
            return f"file:{self.path}"
        return self.kind.value


@dataclass(frozen=True)
class EnergyTrace:
    times: np.ndarray
    energy: np.ndarray
    dissipation: np.ndarray
    scheme: str
    j_star: int
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.times) > 1 and not np.all(np.diff(self.times) > 0):
            raise InvalidParameter("sample times must be strictly increasing", key_path='simulation.samples')
        if np.any(self.energy < 0):
            raise NonPositiveEnergy("negative energy sample", stage='simulate')

    def __len__(self):
        return len(self.times)

    @property
    def normalized(self):
        if self.energy[0] == 0:
            return np.zeros_like(self.energy)
        return self.energy / self.energy[0]

    @property
    def final_ratio(self):
        return float(self.normalized[-1])

    def rows(self):
        return [
            (float(t), float(e), float(n), float(d))
            for t, e, n, d in zip(self.times, self.energy, self.normalized, self.dissipation)
        ]


def high_frequency_profile(x):
    """1e-2 * sum_{k=41}^{81} x sin(k pi x)."""
    x = np.asarray(x, dtype=float)
    k = np.arange(41, 82)
    return 1e-2 * np.sum(x[:, None] * np.sin(np.pi * np.outer(x, k)), axis=1)


def smooth_profile(x, L):
    """sin(pi x/2L) + sin(3 pi x/2L)/9.

    Clamped at x=0 with the first three derivatives vanishing at x=L, so the
    state also satisfies the tip condition differentiated in time.
    """
    x = np.asarray(x, dtype=float)
    theta = np.pi * x / (2.0 * L)
    return np.sin(theta) + np.sin(3.0 * theta) / 9.0


def smooth_low_mode(params, grid):
    """Smooth mechanical-branch state at rest, p = b2 v."""
    v0 = smooth_profile(grid.nodes, params.L)
    _, b2 = coupling_ratios(params)
    p0 = (0.0 if b2 is None else b2) * v0
    zeros = np.zeros_like(v0)
    return np.concatenate((v0, p0, zeros, zeros))


def initial_state(ic, op, spec=None):
    """Sample an initial state on the nodes x_1..x_{N+1}.

    Args:
        ic (InitialCondition or str): Kind of initial condition
        op (SystemOperator): Operator defining grid and energy
        spec (Spectrum): Needed for eigenmode initial conditions

    Returns:
        numpy.ndarray: State [v, p, vdot, pdot] of length 4(N+1)
    """
    ic = InitialCondition.parse(ic)
    grid = op.grid
    if ic.kind is ICKind.HIGH_FREQUENCY:
        profile = high_frequency_profile(grid.nodes)
        return np.concatenate((profile, profile, profile, profile))
    if ic.kind is ICKind.SMOOTH_LOW_MODE:
        return smooth_low_mode(op.params, grid)
    if ic.kind is ICKind.EIGENMODE:
        if spec is None:
            spec = compute_spectrum(op)
        if not 0 <= ic.index < len(spec):
            raise InvalidParameter(f"eigenmode index {ic.index} outside [0, {len(spec)})", key_path='simulation.ic')
        state = spec.vectors[:, ic.index].real.copy()
        value = energy(op, state)
        if value == 0:
            state = spec.vectors[:, ic.index].imag.copy()
            value = energy(op, state)
        return state / np.sqrt(value)
    v0, p0, v1, p1 = read_initial_condition(ic.path, grid.N, grid.L)
    return np.concatenate((v0, p0, v1, p1))


def energy(op, state):
    """Scheme energy (h/2)(xdot^T (C1 x M) xdot + x^T (C2 x A_h) x); columnwise for matrices."""
    if op.scale is not None:
        return _scalar_or_array(op.scale.energy(op.scale.to_energy_coordinates(state)))
    gram = energy_gram(op)
    state = np.asarray(state)
    if state.ndim == 1:
        return gram.energy(state)
    return np.array([gram.energy(state[:, i]) for i in range(state.shape[1])])


def boundary_dissipation(op, state):
    """k1 |vdot_{N+1}|^2 + k2 |pdot_{N+1}|^2."""
    state = np.asarray(state)
    n = op.N + 1
    vdot_tip = state[3 * n - 1]
    pdot_tip = state[4 * n - 1]
    return _scalar_or_array(op.params.k1 * np.abs(vdot_tip) ** 2 + op.params.k2 * np.abs(pdot_tip) ** 2)


def _scalar_or_array(value):
    value = np.asarray(value, dtype=float)
    return float(value) if value.ndim == 0 else value


def lyapunov_functional(op, state, delta):
    """Return (L_h, phi_h) with phi_h = h sum x_{j+1/2}(rho u1 w1 + mu u2 w2) and L_h = E + delta phi_h."""
    if op.scheme is not Scheme.ORFD:
        raise SchemeMismatch(f"the Lyapunov functional is defined for ORFD states, got {op.scheme.value}")
    u1, u2, w1, w2 = midpoint_fields(op, state)
    h = op.h
    x_mid = h * (np.arange(op.N + 1) + 0.5)
    phi = h * float(np.sum(x_mid * (op.params.rho * u1 * w1 + op.params.mu * u2 * w2)))
    return energy(op, state) + delta * phi, phi


def modal_energy_states(spec, coeffs, times, real=True):
    """Energy-coordinate states sum_j c_j exp(lambda_j t) W_j, one column per time."""
    c = np.asarray(coeffs) / spec.vector_scales
    times = np.atleast_1d(np.asarray(times, dtype=float))
    growth = np.exp(np.outer(spec.values, times))
    z = spec.energy_vectors @ (c[:, None] * growth)
    return z.real if real else z


def modal_propagate(spec, coeffs, t, real=True):
    """State Re(sum_j c_j exp(lambda_j t) Psi_j) at time t (or one column per time).

    With real=False the complex modal state is returned.
    """
    z = modal_energy_states(spec, coeffs, t, real=real)
    states = spec.transform.from_energy_coordinates(z)
    return states[:, 0] if np.ndim(t) == 0 else states


def modal_energy(spec, coeffs, times, real=True):
    """Energy (h/2)|z|^2 of the modal solution at the given times."""
    return spec.transform.energy(modal_energy_states(spec, coeffs, times, real=real))


def modal_dissipation(op, spec, coeffs, times):
    states = modal_propagate(spec, coeffs, np.atleast_1d(times))
    return boundary_dissipation(op, states)


def resolving_step(spec, coeffs, t, presence=1e-14, fraction=0.01):
    """Time step resolving the fastest mode still present at time t."""
    c = np.asarray(coeffs) / spec.vector_scales
    weight = np.abs(c) ** 2 * np.exp(2.0 * spec.values.real * t)
    active = weight > presence * np.sum(weight)
    fastest = float(np.max(np.abs(spec.values[active]))) if np.any(active) else 1.0
    return fraction / fastest


def energy_rate(spec, coeffs, t, step=None):
    """dE/dt at time t by the five-point central stencil on the modal energy."""
    if step is None:
        step = resolving_step(spec, coeffs, t)
    offsets = np.array([-2.0, -1.0, 1.0, 2.0])
    E = modal_energy(spec, coeffs, t + step * offsets)
    return float((E[0] - 8.0 * E[1] + 8.0 * E[2] - E[3]) / (12.0 * step))


_midpoint_cache = OrderedDict()
_midpoint_lock = threading.Lock()
_MIDPOINT_CACHE_SIZE = 8


def _midpoint_factors(op, dt):
    key = (id(op), float(dt))
    with _midpoint_lock:
        cached = _midpoint_cache.get(key)
        if cached is not None and cached[0] is op:
            _midpoint_cache.move_to_end(key)
            return cached

    conditioned = conditioning_transform(op)
    A = conditioned.scale.operator
    identity = np.eye(A.shape[0])
    lu, piv = scipy.linalg.lu_factor(identity - 0.5 * dt * A, check_finite=True)
    pivots = np.abs(np.diag(lu))
    if pivots.min() <= A.shape[0] * np.finfo(float).eps * pivots.max():
        raise SingularSystem(f"midpoint matrix is numerically singular for dt={dt:g}",
                             stage='midpoint', tag=op.tag)
    entry = (op, conditioned.scale, (lu, piv), identity + 0.5 * dt * A)
    with _midpoint_lock:
        _midpoint_cache[key] = entry
        while len(_midpoint_cache) > _MIDPOINT_CACHE_SIZE:
            _midpoint_cache.popitem(last=False)
    return entry


def implicit_midpoint_step(op, state, dt):
    """One step of (I - dt/2 Op) x+ = (I + dt/2 Op) x, solved in energy coordinates."""
    if not dt > 0:
        raise InvalidParameter(f"must be positive, got {dt}", key_path='dt')
    _, transform, factors, rhs = _midpoint_factors(op, dt)
    z = transform.to_energy_coordinates(np.asarray(state, dtype=float))
    z_next = scipy.linalg.lu_solve(factors, rhs @ z)
    return transform.from_energy_coordinates(z_next)


def implicit_midpoint_trajectory(op, x0, dt, steps):
    """States after 0..steps midpoint steps, one column per step."""
    if not dt > 0:
        raise InvalidParameter(f"must be positive, got {dt}", key_path='dt')
    _, transform, factors, rhs = _midpoint_factors(op, dt)
    z = transform.to_energy_coordinates(np.asarray(x0, dtype=float))
    out = np.empty((len(z), steps + 1))
    out[:, 0] = z
    for i in range(steps):
        z = scipy.linalg.lu_solve(factors, rhs @ z)
        out[:, i + 1] = z
    return transform.from_energy_coordinates(out)


@dataclass(frozen=True)
class SimulationConfig:
    params: object
    scheme: Scheme = Scheme.ORFD
    N: int = 80
    j_star: int = 0
    ic: InitialCondition = InitialCondition()
    T_final: float = 0.1
    samples: int = 400
    epsilon_probe: Optional[float] = None
    tol_eps: Optional[float] = None
    snapshot_count: int = 0

    def __post_init__(self):
        object.__setattr__(self, 'scheme', Scheme.parse(self.scheme))
        object.__setattr__(self, 'ic', InitialCondition.parse(self.ic))
        if not self.T_final >= 0:
            raise InvalidParameter(f"must be nonnegative, got {self.T_final}", key_path='simulation.T_final')
        if int(self.samples) != self.samples or self.samples < 1:
            raise InvalidParameter(f"must be a positive integer, got {self.samples}", key_path='simulation.samples')
        if self.T_final > 0 and self.samples < 2:
            raise InvalidParameter(f"needs at least 2 samples for T_final > 0, got {self.samples}",
                                   key_path='simulation.samples')
        if self.j_star < 0:
            raise InvalidParameter(f"must be nonnegative, got {self.j_star}", key_path='filter.j_star')


@dataclass(frozen=True)
class SimulationResult:
    trace: EnergyTrace
    spectrum: object
    filter: object
    projection: object
    operator: object
    snapshots: Optional[list] = None


def sample_times(T_final, samples):
    if T_final == 0:
        return np.array([0.0])
    if samples < 2:
        raise InvalidParameter(f"needs at least 2 samples for T_final > 0, got {samples}",
                               key_path='simulation.samples')
    return np.linspace(0.0, T_final, int(samples))


def simulate(config):
    """Run the modal pipeline for one configuration.

    assemble -> condition -> eigendecompose -> (label and filter when j_star > 0)
    -> project the initial state -> sample energy and boundary dissipation.

    Returns:
        SimulationResult: The energy trace plus the intermediate objects
    """
    params = config.params
    grid = GridConfig(N=config.N, L=params.L, scheme=config.scheme)
    logger.info(f"Simulating {grid.scheme.value} N={grid.N} k1={params.k1:g} k2={params.k2:g} "
                f"j*={config.j_star} ic={config.ic} T={config.T_final:g}")

    op = conditioning_transform(assemble_blocks(params, grid))
    spec = compute_spectrum(op)
    if config.j_star > 0:
        spec = separate_branches(spec, op, config.epsilon_probe, config.tol_eps)
        filt = build_filter(spec, config.j_star)
    else:
        filt = full_filter(spec)

    x0 = initial_state(config.ic, op, spec)
    projection = project_state(spec, filt, x0)

    times = sample_times(config.T_final, config.samples)
    energies = modal_energy(spec, projection.coeffs, times)
    dissipation = modal_dissipation(op, spec, projection.coeffs, times)

    snapshots = None
    if config.snapshot_count > 0:
        picks = np.unique(np.linspace(0, len(times) - 1, min(config.snapshot_count, len(times))).astype(int))
        states = modal_propagate(spec, projection.coeffs, times[picks])
        snapshots = [(float(times[i]), states[:, col]) for col, i in enumerate(picks)]

    trace = EnergyTrace(
        times=times,
        energy=np.asarray(energies, dtype=float),
        dissipation=np.atleast_1d(np.asarray(dissipation, dtype=float)),
        scheme=grid.scheme.value,
        j_star=config.j_star,
        metadata={'N': grid.N, 'k1': params.k1, 'k2': params.k2, 'ic': str(config.ic),
                  'retained': len(filt), 'condition_number': projection.condition_number,
                  'ill_conditioned': projection.ill_conditioned},
    )
    logger.info(f"Simulation done: E(T)/E(0) = {trace.final_ratio:.6e}")
    return SimulationResult(trace=trace, spectrum=spec, filter=filt, projection=projection,
                            operator=op, snapshots=snapshots)


def snapshot_rows(op, snapshots):
    """Rows (t, x_j, v, p) for every snapshot and node, clamped node included."""
    rows = []
    x = np.concatenate(([0.0], op.grid.nodes))
    for t, state in snapshots:
        v, p, _, _ = split_state(state, op.N)
        for xj, vj, pj in zip(x, np.concatenate(([0.0], v)), np.concatenate(([0.0], p))):
            rows.append((t, float(xj), float(vj), float(pj)))
    return rows
