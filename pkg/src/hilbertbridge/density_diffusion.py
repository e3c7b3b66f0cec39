"""Conservation-of-states checks: grid evolution, continuity, diffusion.

Two norm-preserving propagators (split-step spectral and Crank–Nicolson,
i.e. the implicit midpoint rule), the discrete continuity residual for
their snapshots, a Brownian reference ensemble against the heat kernel,
and the early-time mean-squared projective displacement of the
measurement walks.
"""

from __future__ import annotations

import dataclasses
import enum
import math

import numpy as np
from scipy.linalg import solve_banded

from hilbertbridge.hilbert_core import GridResolutionError, GridWaveFunction
from hilbertbridge.packet_dynamics import PotentialField
from hilbertbridge.position_measurement import (
    CellState,
    GeneratorMode,
    PositionWalkParams,
    _apply_unitary_batch,
)
from hilbertbridge.spin_measurement import SpinWalkParams, _step_batch
from hilbertbridge.stats_util import RngStream

__all__ = [
    "EvolutionScheme",
    "EvolutionParams",
    "DiffusionParams",
    "BrownianResult",
    "StateMsd",
    "evolve_grid",
    "probability_current",
    "continuity_residual",
    "brownian_ensemble",
    "radial_shell_density",
    "state_density_msd",
]


class EvolutionScheme(enum.Enum):
    UNITARY_SPLIT = "UNITARY_SPLIT"
    IMPLICIT_MIDPOINT = "IMPLICIT_MIDPOINT"


@dataclasses.dataclass(frozen=True)
class EvolutionParams:
    dt: float
    steps: int
    hbar: float = 1.0
    mass: float = 1.0
    scheme: EvolutionScheme = EvolutionScheme.UNITARY_SPLIT

    def __post_init__(self) -> None:
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.steps < 1:
            raise ValueError("steps must be at least 1")
        if self.hbar <= 0 or self.mass <= 0:
            raise ValueError("hbar and mass must be positive")


@dataclasses.dataclass(frozen=True)
class DiffusionParams:
    diffusivity: float
    walkers: int
    dt: float
    t_final: float
    seed: int = 0

    def __post_init__(self) -> None:
        if min(self.diffusivity, self.dt, self.t_final) <= 0:
            raise ValueError("diffusivity, dt and t_final must be positive")
        if self.walkers < 10_000:
            raise ValueError("need at least 10^4 walkers")
        if self.t_final < self.dt:
            raise ValueError("t_final must cover at least one step")


def _grid_points(grid: GridWaveFunction) -> np.ndarray:
    mesh = np.meshgrid(
        *(grid.axis_coordinates(i) for i in range(grid.dim)), indexing="ij"
    )
    return np.stack(mesh, axis=-1)


def _check_time_step(grid: GridWaveFunction, params: EvolutionParams) -> None:
    # Nyquist kinetic phase per step must stay below π, otherwise the fastest
    # resolved mode aliases within a single step
    nyquist_phase = (
        params.hbar * (math.pi / grid.spacing) ** 2 * params.dt / (2 * params.mass)
    )
    if nyquist_phase > math.pi:
        raise GridResolutionError(
            f"dt {params.dt:g} too large for spacing {grid.spacing:g}: "
            f"Nyquist phase {nyquist_phase:.3g} per step"
        )


def _split_step_sequence(
    psi0: GridWaveFunction, potential: PotentialField, params: EvolutionParams
) -> list[GridWaveFunction]:
    v = np.asarray(potential.value(_grid_points(psi0)), dtype=float)
    half_phase = np.exp(-0.5j * params.dt * v / params.hbar)
    freqs = np.meshgrid(
        *(
            2 * np.pi * np.fft.fftfreq(n, d=psi0.spacing)
            for n in psi0.extent
        ),
        indexing="ij",
    )
    ksq = sum(f**2 for f in freqs)
    kinetic_phase = np.exp(
        -1j * params.hbar * ksq * params.dt / (2 * params.mass)
    )
    out = [psi0]
    values = psi0.values
    for _ in range(params.steps):
        stage = half_phase * values
        stage = np.fft.ifftn(kinetic_phase * np.fft.fftn(stage))
        values = half_phase * stage
        out.append(psi0.with_values(values))
    return out


def _midpoint_sequence(
    psi0: GridWaveFunction, potential: PotentialField, params: EvolutionParams
) -> list[GridWaveFunction]:
    if psi0.dim != 1:
        raise ValueError("the implicit midpoint propagator is one-dimensional")
    n = psi0.extent[0]
    h = psi0.spacing
    v = np.asarray(potential.value(psi0.axis_coordinates(0)[:, None]), dtype=float)
    kin = params.hbar**2 / (2 * params.mass * h**2)
    diag = 2 * kin + v
    off = np.full(n - 1, -kin)
    alpha = 1j * params.dt / (2 * params.hbar)

    # banded storage of I + αiH for solve_banded
    ab = np.zeros((3, n), dtype=complex)
    ab[0, 1:] = alpha * off
    ab[1] = 1.0 + alpha * diag
    ab[2, :-1] = alpha * off

    out = [psi0]
    values = psi0.values
    for _ in range(params.steps):
        rhs = (1.0 - alpha * diag) * values
        rhs[:-1] -= alpha * off * values[1:]
        rhs[1:] -= alpha * off * values[:-1]
        values = solve_banded((1, 1), ab, rhs)
        out.append(psi0.with_values(values))
    return out


def evolve_grid(
    psi0: GridWaveFunction, potential: PotentialField, params: EvolutionParams
) -> list[GridWaveFunction]:
    """Propagate ψ₀, returning steps+1 snapshots (initial state included).

    UNITARY_SPLIT is the Strang splitting with the kinetic factor applied
    spectrally (periodic boundaries); IMPLICIT_MIDPOINT is the Cayley form
    on the three-point Laplacian (Dirichlet boundaries).  Both preserve the
    l² norm to round-off and are second order in dt.
    """
    _check_time_step(psi0, params)
    if params.scheme is EvolutionScheme.UNITARY_SPLIT:
        return _split_step_sequence(psi0, potential, params)
    return _midpoint_sequence(psi0, potential, params)


# ---------------------------------------------------------------------------
# continuity


def probability_current(
    psi: GridWaveFunction, mass: float = 1.0, hbar: float = 1.0
) -> np.ndarray:
    """j = (iħ/2m)(ψ∇ψ̄ − ψ̄∇ψ) with central differences, shape (*grid, d)."""
    comps = []
    for axis in range(psi.dim):
        grad = np.gradient(psi.values, psi.spacing, axis=axis, edge_order=2)
        comps.append(
            (1j * hbar / (2 * mass))
            * (psi.values * np.conj(grad) - np.conj(psi.values) * grad)
        )
    return np.stack([c.real for c in comps], axis=-1)


def continuity_residual(
    before: GridWaveFunction, after: GridWaveFunction, params: EvolutionParams
) -> np.ndarray:
    """∂ρ/∂t + ∇·j evaluated between two consecutive snapshots.

    The time derivative is the first difference (centred on the midpoint);
    the divergence uses the average of the two currents, which is the
    midpoint current to O(dt²).
    """
    if before.extent != after.extent or before.spacing != after.spacing:
        raise ValueError("snapshots live on different grids")
    rho_dot = (np.abs(after.values) ** 2 - np.abs(before.values) ** 2) / params.dt
    j_mid = 0.5 * (
        probability_current(before, params.mass, params.hbar)
        + probability_current(after, params.mass, params.hbar)
    )
    div = np.zeros_like(rho_dot)
    for axis in range(before.dim):
        div += np.gradient(
            j_mid[..., axis], before.spacing, axis=axis, edge_order=2
        )
    return rho_dot + div


# ---------------------------------------------------------------------------
# Brownian reference ensemble


@dataclasses.dataclass(frozen=True)
class BrownianResult:
    times: np.ndarray
    mean_square_displacement: np.ndarray
    final_positions: np.ndarray
    params: DiffusionParams


def brownian_ensemble(params: DiffusionParams) -> BrownianResult:
    """Isotropic 3-d Gaussian walkers from the origin.

    Per-axis step variance is 2K·dt, so ⟨a²⟩(t) = 6Kt and the positions at
    time t are distributed by the heat kernel (4πKt)^{−3/2} e^{−a²/4Kt}.
    """
    gen = RngStream(params.seed).generator()
    n_steps = int(round(params.t_final / params.dt))
    step_std = math.sqrt(2 * params.diffusivity * params.dt)
    pos = np.zeros((params.walkers, 3))
    times = np.arange(n_steps + 1) * params.dt
    msd = np.zeros(n_steps + 1)
    for k in range(1, n_steps + 1):
        pos += gen.normal(0.0, step_std, size=pos.shape)
        msd[k] = float((pos**2).sum(axis=1).mean())
    return BrownianResult(
        times=times,
        mean_square_displacement=msd,
        final_positions=pos,
        params=params,
    )


def radial_shell_density(
    positions: np.ndarray, n_shells: int, r_max: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Histogram density on equal-width radial shells.

    Returns (shell centers, density estimate, counts); the estimate is
    counts / (walkers · shell volume), directly comparable to an isotropic
    density evaluated at the shell center.
    """
    r = np.linalg.norm(positions, axis=1)
    edges = np.linspace(0.0, r_max, n_shells + 1)
    counts, _ = np.histogram(r, bins=edges)
    volumes = 4 * np.pi / 3 * (edges[1:] ** 3 - edges[:-1] ** 3)
    centers = 0.5 * (edges[1:] + edges[:-1])
    density = counts / (positions.shape[0] * volumes)
    return centers, density, counts


# ---------------------------------------------------------------------------
# projective mean-squared displacement of the walks


@dataclasses.dataclass(frozen=True)
class StateMsd:
    steps: np.ndarray
    mean_square_angle: np.ndarray


def _spin_msd(phi0, params: SpinWalkParams, n_steps: int, trials: int) -> np.ndarray:
    start = np.asarray(phi0, dtype=complex)
    gens = [RngStream(params.seed, t).generator() for t in range(trials)]
    states = np.tile(start, (trials, 1))
    out = np.zeros(n_steps + 1)
    for k in range(1, n_steps + 1):
        fields = np.stack(
            [g.normal(0.0, params.field_std, size=3) for g in gens]
        )
        _step_batch(states, fields, params)
        ov = np.abs(states @ start.conj())
        out[k] = float((np.arccos(np.minimum(ov, 1.0)) ** 2).mean())
    return out


def _position_msd(
    state0: CellState, params: PositionWalkParams, n_steps: int, trials: int
) -> np.ndarray:
    if params.generator_mode is not GeneratorMode.ISOTROPIC:
        raise ValueError("projective MSD applies to the ISOTROPIC walk")
    start = state0.amplitudes
    n = start.size
    gens = [RngStream(params.seed, t).generator() for t in range(trials)]
    states = np.tile(start, (trials, 1))
    out = np.zeros(n_steps + 1)
    for k in range(1, n_steps + 1):
        if params.tau > 0:
            raw = np.stack([g.normal(size=(2, n, n)) for g in gens])
            m = raw[:, 0] + 1j * raw[:, 1]
            hams = params.v_std * 0.5 * (m + m.conj().transpose(0, 2, 1))
            states = _apply_unitary_batch(states, hams, params)
        ov = np.abs(states @ start.conj())
        out[k] = float((np.arccos(np.minimum(ov, 1.0)) ** 2).mean())
    return out


def state_density_msd(start, params, n_steps: int, trials: int) -> StateMsd:
    """Ensemble ⟨θ²⟩ against step count for the measurement walks.

    ``start``/``params`` select the walk: a 2-spinor with
    :class:`SpinWalkParams`, or a :class:`CellState` with
    :class:`PositionWalkParams` in ISOTROPIC mode.  No absorption is
    applied — this probes the free early-time diffusion of the state.
    """
    if trials < 100:
        raise ValueError("need at least 100 trials")
    if isinstance(params, SpinWalkParams):
        series = _spin_msd(start, params, n_steps, trials)
    elif isinstance(params, PositionWalkParams):
        series = _position_msd(start, params, n_steps, trials)
    else:
        raise TypeError("params must be spin or position walk parameters")
    return StateMsd(steps=np.arange(n_steps + 1), mean_square_angle=series)
