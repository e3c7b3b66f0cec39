"""Position measurement on a cell lattice.

A wavefunction is projected onto unit-normalized cell indicators; the cell
amplitudes are then walked by random unitaries.  Two generator modes are
provided and deliberately contrasted:

* ``DIAGONAL`` — random potentials applied literally as diagonal phase
  unitaries.  These cannot change any |C_n| (a one-line theorem, and the
  diagnostic reports the rank deficiency of the reachable directions).
* ``ISOTROPIC`` — unitarily-invariant random Hermitian generators, the
  direct realisation of "every tangent direction equally likely".

Also here: Gabor frame states at critical density and the order-of-
magnitude chain for photon-scattering measurements of an electron.
"""

from __future__ import annotations

import dataclasses
import enum
import math
from typing import Sequence

import numpy as np
from scipy import constants

from hilbertbridge.hilbert_core import GridResolutionError, GridWaveFunction
from hilbertbridge.packet_dynamics import GaussianPacket, packet_wavefunction
from hilbertbridge.stats_util import RngStream, TestReport

__all__ = [
    "GeneratorMode",
    "CellLattice",
    "CellState",
    "PositionWalkParams",
    "MeasurementOutcome",
    "VelocityIsotropyReport",
    "EstimateReport",
    "discretize",
    "diag_potential_step",
    "velocity_isotropy_diagnostic",
    "isotropic_step",
    "run_measurement",
    "run_position_ensemble",
    "gabor_state",
    "magnitude_estimates",
]


class GeneratorMode(enum.Enum):
    DIAGONAL = "DIAGONAL"
    ISOTROPIC = "ISOTROPIC"


@dataclasses.dataclass(frozen=True)
class CellLattice:
    """Axis-aligned box tiled exactly by cubical cells of edge ``gamma``."""

    bounds: tuple[tuple[float, float], ...]
    gamma: float

    def __post_init__(self) -> None:
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        object.__setattr__(self, "bounds", bounds)
        for lo, hi in bounds:
            if hi <= lo:
                raise ValueError("each axis needs hi > lo")
            ratio = (hi - lo) / self.gamma
            if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
                raise ValueError("cells must tile the region exactly")

    @property
    def dim(self) -> int:
        return len(self.bounds)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(
            int(round((hi - lo) / self.gamma)) for lo, hi in self.bounds
        )

    @property
    def cells(self) -> int:
        return int(np.prod(self.shape))


@dataclasses.dataclass(frozen=True)
class CellState:
    """Unit vector of cell amplitudes."""

    amplitudes: np.ndarray

    def __post_init__(self) -> None:
        amp = np.asarray(self.amplitudes, dtype=complex)
        if amp.ndim != 1 or amp.size < 2:
            raise ValueError("amplitudes must be a 1-d vector of length >= 2")
        if abs(np.linalg.norm(amp) - 1.0) > 1e-12:
            raise ValueError("cell amplitudes must be unit norm")
        object.__setattr__(self, "amplitudes", amp)

    @property
    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def __len__(self) -> int:
        return self.amplitudes.size


_MAX_STEP_PHASE = 0.05


@dataclasses.dataclass(frozen=True)
class PositionWalkParams:
    """Step size, potential scale, stopping rule and generator mode.

    ``tau`` may be zero (degenerate identity steps, useful as a control);
    the product ``v_std * tau / hbar`` is the typical phase per step and is
    capped at 0.05 for the walk regime.
    """

    tau: float
    v_std: float
    hbar: float = 1.0
    absorb_eps: float = 0.02
    max_steps: int = 10_000
    seed: int = 0
    generator_mode: GeneratorMode = GeneratorMode.ISOTROPIC

    def __post_init__(self) -> None:
        if self.tau < 0:
            raise ValueError("tau must be nonnegative")
        if self.v_std <= 0 or self.hbar <= 0:
            raise ValueError("v_std and hbar must be positive")
        if not 0 < self.absorb_eps <= 0.1:
            raise ValueError("absorb_eps must lie in (0, 0.1]")
        if self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in 64 bits")
        if self.step_phase > _MAX_STEP_PHASE:
            raise ValueError(
                f"step phase {self.step_phase:g} exceeds {_MAX_STEP_PHASE}"
            )

    @property
    def step_phase(self) -> float:
        return self.v_std * self.tau / self.hbar


@dataclasses.dataclass(frozen=True)
class MeasurementOutcome:
    cell: int | None  # None means UNRESOLVED
    steps: int
    final_state: CellState

    @property
    def resolved(self) -> bool:
        return self.cell is not None


# ---------------------------------------------------------------------------
# discretization


def discretize(
    psi: GridWaveFunction, lattice: CellLattice
) -> tuple[CellState, float]:
    """Project ψ onto unit-normalized cell indicators.

    Returns the renormalized :class:`CellState` together with the L₂ error
    of reconstructing ψ from the (raw) projection — the resolution of the
    step-function approximation, which shrinks like O(γ).
    """
    if psi.dim != lattice.dim:
        raise ValueError("grid and lattice dimensions differ")
    samples_per_edge = lattice.gamma / psi.spacing
    if samples_per_edge < 4 - 1e-9:
        raise GridResolutionError(
            f"{samples_per_edge:.2f} samples per cell edge; need at least 4"
        )

    coords = [psi.axis_coordinates(i) for i in range(psi.dim)]
    axis_bins = []
    inside = []
    for axis, (lo, hi) in enumerate(lattice.bounds):
        x = coords[axis]
        bins = np.floor((x - lo) / lattice.gamma).astype(int)
        ok = (x >= lo - 1e-12) & (x <= hi + 1e-12)
        bins = np.clip(bins, 0, lattice.shape[axis] - 1)
        axis_bins.append(bins)
        inside.append(ok)

    shape = lattice.shape
    flat = np.zeros(lattice.cells, dtype=complex)
    mesh_bins = np.meshgrid(*axis_bins, indexing="ij", sparse=False)
    mesh_in = np.ones(psi.values.shape, dtype=bool)
    for axis in range(psi.dim):
        mesh_in &= np.broadcast_to(
            inside[axis].reshape([-1 if a == axis else 1 for a in range(psi.dim)]),
            psi.values.shape,
        )
    cell_index = np.ravel_multi_index([m for m in mesh_bins], shape)
    h_vol = psi.spacing**psi.dim
    np.add.at(
        flat,
        cell_index[mesh_in],
        psi.values[mesh_in] * h_vol,
    )
    # indicator normalisation 1/√γ^d turns cell integrals into coefficients
    raw = flat / math.sqrt(lattice.gamma**lattice.dim)

    recon = raw[cell_index] / math.sqrt(lattice.gamma**lattice.dim)
    recon[~mesh_in.ravel()] = 0.0
    diff = psi.values.ravel() - recon
    error = math.sqrt(float((np.abs(diff) ** 2).sum() * h_vol))

    norm = np.linalg.norm(raw)
    if norm == 0:
        raise ValueError("wavefunction has no mass inside the lattice region")
    return CellState(raw / norm), error


# ---------------------------------------------------------------------------
# walk steps


def diag_potential_step(
    state: CellState, rng: np.random.Generator, params: PositionWalkParams
) -> CellState:
    """Random diagonal phase kick exp(−iτ(V_n − V̄)/ħ).

    V̄ is the state expectation Σ V_n |C_n|², so the kick is tangent to the
    fibre; the moduli |C_n| are untouched — measurement-as-collapse cannot
    come from this step alone.
    """
    c = state.amplitudes
    v = rng.normal(0.0, params.v_std, size=c.size)
    vbar = float(np.dot(v, np.abs(c) ** 2))
    phases = np.exp(-1j * params.tau * (v - vbar) / params.hbar)
    return CellState(phases * c)


def run_diagonal_walk(
    state: CellState, steps: int, rng: np.random.Generator,
    params: PositionWalkParams,
) -> CellState:
    """Compose ``steps`` diagonal kicks and apply them in a single pass.

    Diagonal kicks commute and the moduli they are weighted by never change,
    so the product of the step unitaries is the diagonal of the accumulated
    phase sums.  Summing the phases in real arithmetic and multiplying once
    evaluates that product with a single rounding instead of one per step —
    iterating ``diag_potential_step`` instead lets ~1 ulp of modulus error
    per multiply random-walk up to ~sqrt(steps) ulps.  Draws consume the
    generator exactly as the per-step form does.
    """
    if steps < 1:
        raise ValueError("steps must be at least 1")
    c = state.amplitudes
    weights = np.abs(c) ** 2
    theta = np.zeros(c.size)
    for _ in range(steps):
        v = rng.normal(0.0, params.v_std, size=c.size)
        theta += v - float(np.dot(v, weights))
    return CellState(np.exp(-1j * params.tau * theta / params.hbar) * c)


def _sample_gue(rng: np.random.Generator, n: int, scale: float) -> np.ndarray:
    m = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return scale * (m + m.conj().T) / 2


def _apply_unitary_batch(
    states: np.ndarray, hams: np.ndarray, params: PositionWalkParams
) -> np.ndarray:
    """exp(−iτH/ħ)ψ for a batch of states/generators via eigh."""
    w, vecs = np.linalg.eigh(hams)
    y = np.einsum("kba,kb->ka", vecs.conj(), states)
    y *= np.exp(-1j * params.tau * w / params.hbar)
    return np.einsum("kab,kb->ka", vecs, y)


def isotropic_step(
    state: CellState, rng: np.random.Generator, params: PositionWalkParams
) -> CellState:
    """One kick by a unitarily-invariant random Hermitian generator."""
    n = len(state)
    h = _sample_gue(rng, n, params.v_std)
    out = _apply_unitary_batch(state.amplitudes[None, :], h[None], params)
    return CellState(out[0])


def _step_for_mode(
    state: CellState, rng: np.random.Generator, params: PositionWalkParams
) -> CellState:
    if params.generator_mode is GeneratorMode.DIAGONAL:
        return diag_potential_step(state, rng, params)
    return isotropic_step(state, rng, params)


# ---------------------------------------------------------------------------
# velocity diagnostic


@dataclasses.dataclass(frozen=True)
class VelocityIsotropyReport:
    """Documented geometry of the sampled state-velocity distribution."""

    n_samples: int
    coordinate_means: np.ndarray
    mean_zero: TestReport
    covariance_eigenvalues: np.ndarray
    rank: int

    @property
    def tangent_dimension(self) -> int:
        return self.coordinate_means.size


def _tangent_basis(psi: np.ndarray) -> np.ndarray:
    """Orthonormal complex basis of the complement of ψ (columns)."""
    n = psi.size
    proj = np.eye(n, dtype=complex) - np.outer(psi, psi.conj())
    u, s, _ = np.linalg.svd(proj)
    return u[:, : n - 1]


def velocity_isotropy_diagnostic(
    state: CellState,
    samples: int,
    rng: np.random.Generator,
    params: PositionWalkParams,
    alpha: float = 0.01,
) -> VelocityIsotropyReport:
    """Sample state velocities and report their mean, spectrum and rank.

    DIAGONAL velocities are −i(V − V̄)ψ/ħ; ISOTROPIC ones are
    −i(H − ⟨H⟩)ψ/ħ.  Coordinates are taken in an orthonormal tangent frame,
    2(N−1) real dimensions.  The report states what the distribution does;
    it does not presume isotropy.
    """
    if len(state) < 3:
        raise ValueError("diagnostic needs at least 3 cells")
    if samples < 10_000:
        raise ValueError("diagnostic needs at least 10^4 samples for power")
    psi = state.amplitudes
    n = psi.size
    basis = _tangent_basis(psi)
    if params.generator_mode is GeneratorMode.DIAGONAL:
        v = rng.normal(0.0, params.v_std, size=(samples, n))
        vbar = v @ (np.abs(psi) ** 2)
        vels = -1j * (v - vbar[:, None]) * psi / params.hbar
    else:
        m = rng.normal(size=(samples, n, n)) + 1j * rng.normal(size=(samples, n, n))
        hams = params.v_std * 0.5 * (m + m.conj().transpose(0, 2, 1))
        hpsi = np.einsum("kab,b->ka", hams, psi)
        mean = np.einsum("a,ka->k", psi.conj(), hpsi)
        vels = -1j * (hpsi - mean[:, None] * psi) / params.hbar
    comp = vels @ basis.conj()
    coords = np.concatenate([comp.real, comp.imag], axis=1)

    means = coords.mean(axis=0)
    stds = coords.std(axis=0, ddof=1)
    scale = np.where(stds > 0, stds, 1.0)
    z = np.abs(means) / (scale / math.sqrt(samples))
    worst = float(z.max())
    from scipy.stats import norm as _norm

    p_single = 2 * _norm.sf(worst)
    p_value = float(min(1.0, p_single * coords.shape[1]))  # Bonferroni
    if np.allclose(coords, 0.0):
        p_value = 1.0
        worst = 0.0

    cov = np.cov(coords.T)
    eigs = np.sort(np.linalg.eigvalsh(np.atleast_2d(cov)))[::-1]
    top = eigs[0] if eigs.size else 0.0
    rank = int(np.sum(eigs > max(top, 1e-300) * 1e-10)) if top > 0 else 0
    return VelocityIsotropyReport(
        n_samples=samples,
        coordinate_means=means,
        mean_zero=TestReport(statistic=worst, p_value=p_value, alpha=alpha),
        covariance_eigenvalues=eigs,
        rank=rank,
    )


# ---------------------------------------------------------------------------
# the measurement walk


def run_measurement(
    state0: CellState, params: PositionWalkParams, stream_id: int = 0
) -> MeasurementOutcome:
    """Walk until one cell holds at least 1 − absorb_eps of the mass."""
    state = state0
    gen = RngStream(params.seed, stream_id).generator()
    for steps in range(params.max_steps + 1):
        probs = state.probabilities
        top = int(np.argmax(probs))
        if probs[top] >= 1.0 - params.absorb_eps:
            return MeasurementOutcome(cell=top, steps=steps, final_state=state)
        if steps == params.max_steps:
            break
        state = _step_for_mode(state, gen, params)
    return MeasurementOutcome(cell=None, steps=params.max_steps, final_state=state)


def run_position_ensemble(
    state0: CellState,
    trials: int,
    params: PositionWalkParams,
    batch_size: int = 2048,
    trial_offset: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """Cells (−1 for unresolved) and step counts for trials 0..trials−1.

    Trial ``t`` reproduces ``run_measurement(state0, params, stream_id=t)``
    draw for draw; batching is an implementation detail.  ``trial_offset``
    shifts the substream ids only, so chunked runs concatenate to the
    unsplit run exactly.
    """
    if params.generator_mode is not GeneratorMode.ISOTROPIC:
        raise ValueError("ensemble driver supports the ISOTROPIC mode only")
    n = len(state0)
    threshold = 1.0 - params.absorb_eps
    cells = np.full(trials, -1, dtype=np.int64)
    steps_out = np.full(trials, params.max_steps, dtype=np.int64)

    p0 = state0.probabilities
    if p0.max() >= threshold:
        cells[:] = int(np.argmax(p0))
        steps_out[:] = 0
        return cells, steps_out

    block = max(8, min(256, int(80e6 / (batch_size * 2 * n * n * 8))))
    for start in range(0, trials, batch_size):
        ids = np.arange(start, min(start + batch_size, trials))
        k = ids.size
        gens = [RngStream(params.seed, int(t) + trial_offset).generator() for t in ids]
        states = np.tile(state0.amplitudes, (k, 1))
        blocks = np.empty((k, block, 2, n, n))
        active = np.ones(k, dtype=bool)
        cursor = block

        for step in range(1, params.max_steps + 1):
            if not active.any():
                break
            if cursor == block:
                for i in np.flatnonzero(active):
                    blocks[i] = gens[i].normal(size=(block, 2, n, n))
                cursor = 0
            idx = np.flatnonzero(active)
            raw = blocks[idx, cursor]
            hams = params.v_std * 0.5 * (
                (raw[:, 0] + 1j * raw[:, 1])
                + (raw[:, 0] + 1j * raw[:, 1]).conj().transpose(0, 2, 1)
            )
            states[idx] = _apply_unitary_batch(states[idx], hams, params)
            cursor += 1

            probs = np.abs(states[idx]) ** 2
            winner = probs.argmax(axis=1)
            hit = probs[np.arange(idx.size), winner] >= threshold
            if hit.any():
                done = idx[hit]
                cells[ids[done]] = winner[hit]
                steps_out[ids[done]] = step
                active[done] = False
    return cells, steps_out


# ---------------------------------------------------------------------------
# Gabor frame states


def gabor_state(m, n, sigma: float, grid: GridWaveFunction) -> GridWaveFunction:
    """Frame state at lattice site (m, n): shift αn, modulation βm.

    α = √(2π)σ and β = 2π/α, the critical frame density.  The state is the
    width-σ packet centred at αn carrying momentum βm (ħ = 1 units).
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    m = np.atleast_1d(np.asarray(m, dtype=float))
    n = np.atleast_1d(np.asarray(n, dtype=float))
    if m.shape != n.shape:
        raise ValueError("m and n must have the same dimension")
    alpha = math.sqrt(2 * math.pi) * sigma
    beta = 2 * math.pi / alpha
    pkt = GaussianPacket(
        center=alpha * n, momentum=beta * m, sigma=sigma, mass=1.0, hbar=1.0
    )
    return packet_wavefunction(pkt, grid)


# ---------------------------------------------------------------------------
# order-of-magnitude chain


@dataclasses.dataclass(frozen=True)
class EstimateReport:
    """SI estimate chain for photon scattering off a localised electron."""

    wavelength: float
    mass: float
    temperature: float
    compton_shift: float
    energy_transfer: float
    speed: float
    sigma: float
    tau: float
    velocity_term: float
    acceleration_term: float
    spreading_term: float
    photon_density: float
    thermal_peak_wavelength: float


def magnitude_estimates(
    wavelength: float, mass: float, temperature: float
) -> EstimateReport:
    """Track one scattered photon's effect through to state-velocity terms.

    The photon Compton-shifts by (h/mc)(1 − cos θ) at θ = π/2; the energy
    lost goes to the electron, fixing its recoil speed.  The packet width is
    set to the probing wavelength (σ = λ) and the interaction time to λ/c;
    the three returned rates are the translation, force and spreading parts
    of the state velocity, plus the thermal photon census ≈ 2.02×10⁷ T³.
    """
    if wavelength <= 0 or mass <= 0 or temperature <= 0:
        raise ValueError("inputs must be positive")
    h, c, hbar = constants.h, constants.c, constants.hbar
    compton_shift = (h / (mass * c)) * (1 - math.cos(math.pi / 2))
    photon_in = h * c / wavelength
    photon_out = h * c / (wavelength + compton_shift)
    energy_transfer = photon_in - photon_out
    speed = math.sqrt(2 * energy_transfer / mass)
    sigma = wavelength
    tau = wavelength / c
    accel = speed / tau
    velocity_term = speed / (2 * sigma)
    acceleration_term = mass * accel * sigma / hbar
    spreading_term = hbar / (4 * math.sqrt(2) * sigma**2 * mass)
    photon_density = 2.02e7 * temperature**3
    thermal_peak = constants.value("Wien wavelength displacement law constant") / (
        temperature
    )
    return EstimateReport(
        wavelength=wavelength,
        mass=mass,
        temperature=temperature,
        compton_shift=compton_shift,
        energy_transfer=energy_transfer,
        speed=speed,
        sigma=sigma,
        tau=tau,
        velocity_term=velocity_term,
        acceleration_term=acceleration_term,
        spreading_term=spreading_term,
        photon_density=photon_density,
        thermal_peak_wavelength=thermal_peak,
    )
