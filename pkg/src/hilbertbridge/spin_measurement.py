"""Spin measurement as a random walk on the Bloch sphere.

A two-level state is kicked by an i.i.d. normal magnetic field, each kick
applied through the closed-form Pauli exponential.  The walk ends when the
Hopf height ``z`` enters one of the polar absorption bands; ensemble
statistics of those absorptions are compared against the ``(1 − z₀)/2``
ruin prediction.

The ensemble driver reproduces, trial for trial, what a scalar
:func:`run_walk` with the same stream id would do — trials are pure
functions of ``(params, trial index)`` and may be aggregated in any order.
"""

from __future__ import annotations

import dataclasses
import enum
import math
from typing import Callable, Sequence

import numpy as np

from hilbertbridge.state_geometry import hopf_map
from hilbertbridge.stats_util import RngStream, TestReport, direction_uniformity

__all__ = [
    "WalkResult",
    "SpinWalkParams",
    "WalkOutcome",
    "BornHistogram",
    "IsotropyReport",
    "pauli_step",
    "sample_field",
    "run_walk",
    "run_ensemble",
    "born_statistics",
    "tangent_displacements",
    "isotropy_test",
    "lattice_ruin_probability",
]

_MAX_STEP_ANGLE = 0.05


class WalkResult(enum.Enum):
    UP = "UP"
    DOWN = "DOWN"
    UNRESOLVED = "UNRESOLVED"


@dataclasses.dataclass(frozen=True)
class SpinWalkParams:
    """Knobs for the field statistics, the step size and the stopping rule.

    The product ``mu * field_std * dt / hbar`` is the typical rotation
    half-angle per kick; it must stay at or below 0.05 so that many weak
    kicks are needed to cross the sphere and the walk limit applies.
    """

    dt: float
    field_std: float
    mu: float = 1.0
    hbar: float = 1.0
    absorb_eps: float = 0.005
    max_steps: int = 10_000
    seed: int = 0

    def __post_init__(self) -> None:
        if self.dt <= 0 or self.field_std <= 0:
            raise ValueError("dt and field_std must be positive")
        if self.mu <= 0 or self.hbar <= 0:
            raise ValueError("mu and hbar must be positive")
        if not 0 < self.absorb_eps <= 0.1:
            raise ValueError("absorb_eps must lie in (0, 0.1]")
        if self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in 64 bits")
        if self.step_angle > _MAX_STEP_ANGLE:
            raise ValueError(
                f"step angle {self.step_angle:g} exceeds {_MAX_STEP_ANGLE}; "
                "reduce dt or field_std"
            )

    @property
    def step_angle(self) -> float:
        return self.mu * self.field_std * self.dt / self.hbar

    @property
    def absorb_z(self) -> float:
        """Absorption height: |z| at or beyond 1 − 2·absorb_eps is terminal."""
        return 1.0 - 2.0 * self.absorb_eps


@dataclasses.dataclass(frozen=True)
class WalkOutcome:
    result: WalkResult
    steps: int
    final_state: np.ndarray


@dataclasses.dataclass(frozen=True)
class BornHistogram:
    """Absorption counts with the height-based theoretical reference."""

    trials: int
    n_up: int
    n_down: int
    n_unresolved: int
    reference_down: float

    @property
    def p_up(self) -> float:
        return self.n_up / self.trials

    @property
    def p_down(self) -> float:
        return self.n_down / self.trials

    @property
    def p_unresolved(self) -> float:
        return self.n_unresolved / self.trials


@dataclasses.dataclass(frozen=True)
class IsotropyReport:
    direction: TestReport
    axial: TestReport
    component_normality: tuple[TestReport, TestReport]

    @property
    def passed(self) -> bool:
        return (
            self.direction.passed
            and self.axial.passed
            and all(r.passed for r in self.component_normality)
        )


def _as_unit_spinor(phi) -> np.ndarray:
    phi = np.asarray(phi, dtype=complex)
    if phi.shape != (2,):
        raise ValueError("state must be a 2-component vector")
    if abs(np.linalg.norm(phi) - 1.0) > 1e-10:
        raise ValueError("state must be unit norm")
    return phi


def _height(phi: np.ndarray) -> float:
    return float(abs(phi[1]) ** 2 - abs(phi[0]) ** 2)


def pauli_step(phi, b, params: SpinWalkParams) -> np.ndarray:
    """One closed-form kick φ′ = exp(i μ dt σ·B / ħ) φ.

    Because (σ·B)² = |B)² I the exponential collapses to
    cos(λ) I + i sin(λ) σ·B̂ with λ = μ|B|dt/ħ — no series, no
    renormalization, unitary to round-off.  A zero field is the identity.
    """
    phi = _as_unit_spinor(phi)
    b = np.asarray(b, dtype=float)
    if b.shape != (3,):
        raise ValueError("field must be a 3-vector")
    norm = float(np.linalg.norm(b))
    if norm == 0.0:
        return phi.copy()
    lam = params.mu * norm * params.dt / params.hbar
    bx, by, bz = b / norm
    c, s = math.cos(lam), 1j * math.sin(lam)
    return np.array(
        [
            c * phi[0] + s * (bz * phi[0] + (bx - 1j * by) * phi[1]),
            c * phi[1] + s * ((bx + 1j * by) * phi[0] - bz * phi[1]),
        ]
    )


def sample_field(rng: np.random.Generator, params: SpinWalkParams) -> np.ndarray:
    """Three i.i.d. normal field components, mean 0, std ``field_std``."""
    return rng.normal(0.0, params.field_std, size=3)


def _classify(z: float, params: SpinWalkParams) -> WalkResult | None:
    if z >= params.absorb_z:
        return WalkResult.UP
    if z <= -params.absorb_z:
        return WalkResult.DOWN
    return None


def run_walk(phi0, params: SpinWalkParams, stream_id: int = 0) -> WalkOutcome:
    """Walk a single spin until polar absorption or the step budget runs out.

    ``stream_id`` selects the per-trial random substream; trial ``t`` of an
    ensemble is exactly ``run_walk(phi0, params, stream_id=t)``.
    """
    phi = _as_unit_spinor(phi0)[None, :].copy()
    gen = RngStream(params.seed, stream_id).generator()
    for steps in range(params.max_steps + 1):
        state = _classify(_height(phi[0]), params)
        if state is not None:
            return WalkOutcome(state, steps, phi[0])
        if steps == params.max_steps:
            break
        # same vectorized kernel as run_ensemble, so trial t of an ensemble
        # and a scalar walk with stream_id=t agree to the last bit
        _step_batch(phi, sample_field(gen, params)[None, :], params)
    return WalkOutcome(WalkResult.UNRESOLVED, params.max_steps, phi[0])


# ---------------------------------------------------------------------------
# vectorized ensemble


_BLOCK = 256


def _step_batch(states: np.ndarray, fields: np.ndarray, params: SpinWalkParams) -> None:
    """Apply one kick to every row of ``states`` (modified in place)."""
    norms = np.linalg.norm(fields, axis=1)
    safe = np.where(norms == 0.0, 1.0, norms)
    bx, by, bz = (fields / safe[:, None]).T
    lam = params.mu * norms * params.dt / params.hbar
    c = np.cos(lam)
    s = 1j * np.sin(lam)
    p0, p1 = states[:, 0].copy(), states[:, 1].copy()
    states[:, 0] = c * p0 + s * (bz * p0 + (bx - 1j * by) * p1)
    states[:, 1] = c * p1 + s * ((bx + 1j * by) * p0 - bz * p1)


def run_ensemble(
    phi0,
    trials: int,
    params: SpinWalkParams,
    batch_size: int = 4096,
    trial_offset: int = 0,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Outcomes for trials 0..trials−1, identical to per-trial run_walk.

    Returns ``(results, steps, final_states)`` where ``results`` holds
    ``WalkResult`` values, ``steps`` the kick counts and ``final_states``
    the (trials, 2) spinors at stopping time.  ``trial_offset`` shifts the
    substream ids only, so a run split into chunks reproduces the unsplit
    run row for row.
    """
    phi0 = _as_unit_spinor(phi0)
    results = np.empty(trials, dtype=object)
    steps_out = np.zeros(trials, dtype=np.int64)
    finals = np.empty((trials, 2), dtype=complex)
    zc = params.absorb_z

    for start in range(0, trials, batch_size):
        ids = np.arange(start, min(start + batch_size, trials))
        gens = [RngStream(params.seed, int(t) + trial_offset).generator() for t in ids]
        p0 = np.full(ids.size, phi0[0])
        p1 = np.full(ids.size, phi0[1])

        z0 = np.abs(p1) ** 2 - np.abs(p0) ** 2
        for hit, label in ((z0 >= zc, WalkResult.UP), (z0 <= -zc, WalkResult.DOWN)):
            if hit.any():
                results[ids[hit]] = label
                finals[ids[hit]] = np.stack([p0[hit], p1[hit]], axis=1)
        keep = (z0 < zc) & (z0 > -zc)
        ids, gens = ids[keep], [g for g, k in zip(gens, keep) if k]
        p0, p1 = p0[keep], p1[keep]

        step = 0
        while ids.size and step < params.max_steps:
            # refill: survivors draw the next _BLOCK fields from their own
            # streams; kick coefficients use the same elementwise expressions
            # as _step_batch, so every trial matches run_walk bit for bit.
            # Block arrays are laid out step-major so the hot loop only
            # touches contiguous trial-vectors.
            block = min(_BLOCK, params.max_steps - step)
            fields = np.stack(
                [g.normal(0.0, params.field_std, (block, 3)) for g in gens],
                axis=1,
            )  # (block, n, 3)
            norms = np.linalg.norm(fields, axis=2)
            safe = np.where(norms == 0.0, 1.0, norms)
            axes = fields / safe[..., None]
            lam = params.mu * norms * params.dt / params.hbar
            c = np.cos(lam)
            s = 1j * np.sin(lam)
            bz = np.ascontiguousarray(axes[..., 2])
            bp = axes[..., 0] + 1j * axes[..., 1]
            bm = np.conj(bp)

            # rows that absorb mid-block keep stepping (their outputs are
            # already frozen); this keeps the hot loop free of gather/scatter
            alive = np.ones(ids.size, dtype=bool)
            for k in range(block):
                step += 1
                n0 = c[k] * p0 + s[k] * (bz[k] * p0 + bm[k] * p1)
                n1 = c[k] * p1 + s[k] * (bp[k] * p0 - bz[k] * p1)
                p0, p1 = n0, n1
                z = np.abs(p1) ** 2 - np.abs(p0) ** 2
                crossed = alive & ((z >= zc) | (z <= -zc))
                if crossed.any():
                    rows = np.flatnonzero(crossed)
                    up = z[rows] >= zc
                    results[ids[rows[up]]] = WalkResult.UP
                    results[ids[rows[~up]]] = WalkResult.DOWN
                    steps_out[ids[rows]] = step
                    finals[ids[rows]] = np.stack([p0[rows], p1[rows]], axis=1)
                    alive[rows] = False
                    if not alive.any():
                        break

            ids = ids[alive]
            gens = [g for g, a in zip(gens, alive) if a]
            p0, p1 = p0[alive].copy(), p1[alive].copy()

        if ids.size:
            results[ids] = WalkResult.UNRESOLVED
            steps_out[ids] = params.max_steps
            finals[ids] = np.stack([p0, p1], axis=1)
    return results, steps_out, finals


def born_statistics(phi0, trials: int, params: SpinWalkParams) -> BornHistogram:
    """Empirical UP/DOWN frequencies with the (1 − z₀)/2 ruin reference.

    The reference is read off the Hopf height of the initial state, i.e.
    from where the walk starts on the sphere, not from the amplitudes.
    """
    if trials < 100:
        raise ValueError("need at least 100 trials")
    phi0 = _as_unit_spinor(phi0)
    z0 = hopf_map(phi0).z
    results, _, _ = run_ensemble(phi0, trials, params)
    n_up = int(np.sum(results == WalkResult.UP))
    n_down = int(np.sum(results == WalkResult.DOWN))
    return BornHistogram(
        trials=trials,
        n_up=n_up,
        n_down=n_down,
        n_unresolved=trials - n_up - n_down,
        reference_down=(1.0 - z0) / 2.0,
    )


# ---------------------------------------------------------------------------
# one-step tangent statistics


def tangent_displacements(
    phi0,
    n_steps: int,
    params: SpinWalkParams,
    stream_id: int = 0,
    field_sampler: Callable[[np.random.Generator], np.ndarray] | None = None,
) -> np.ndarray:
    """(n_steps, 2) real tangent components of one-kick displacements.

    Every kick starts from the same ``phi0``; the displacement is the
    complex projection of the moved state onto the unit tangent direction
    ``(−conj φ₁, conj φ₀)``.  ``field_sampler`` overrides the isotropic
    normal field (used by degenerate negative controls).
    """
    phi0 = _as_unit_spinor(phi0)
    gen = RngStream(params.seed, stream_id).generator()
    tangent = np.array([-np.conj(phi0[1]), np.conj(phi0[0])])
    out = np.empty((n_steps, 2))
    for i in range(n_steps):
        b = field_sampler(gen) if field_sampler else sample_field(gen, params)
        moved = pauli_step(phi0, b, params)
        ortho = moved - phi0 * np.vdot(phi0, moved)
        comp = complex(np.vdot(tangent, ortho))
        out[i] = comp.real, comp.imag
    return out


def isotropy_test(
    phi0,
    n_steps: int,
    params: SpinWalkParams,
    stream_id: int = 0,
    field_sampler: Callable[[np.random.Generator], np.ndarray] | None = None,
    alpha: float = 0.01,
) -> IsotropyReport:
    """Direction-uniformity and component-normality checks of one-step kicks.

    Displacements come in ± pairs by field symmetry, so the plain direction
    test has no power against axis-pinned noise; the doubled-angle (axial)
    test covers that case.  Component normality is tested against the
    predicted per-axis scale ``mu * field_std * dt / hbar``.
    """
    from scipy import stats

    z0 = abs(_height(_as_unit_spinor(phi0)))
    if z0 >= 1 - 1e-9:
        raise ValueError("pick a start state away from the poles")
    disp = tangent_displacements(phi0, n_steps, params, stream_id, field_sampler)

    direction = direction_uniformity(disp, alpha=alpha)
    angles = np.arctan2(disp[:, 1], disp[:, 0])
    doubled = np.column_stack([np.cos(2 * angles), np.sin(2 * angles)])
    axial = direction_uniformity(doubled, alpha=alpha)

    scale = params.step_angle
    normality = []
    for axis in range(2):
        stat, p = stats.kstest(disp[:, axis], "norm", args=(0.0, scale))
        normality.append(TestReport(statistic=float(stat), p_value=float(p), alpha=alpha))
    return IsotropyReport(
        direction=direction,
        axial=axial,
        component_normality=(normality[0], normality[1]),
    )


# ---------------------------------------------------------------------------
# lattice ruin oracle


def lattice_ruin_probability(z0: float, delta: float = 0.01) -> float:
    """Exact P(hit −1 before +1) for the symmetric walk on a z-lattice.

    Solves the interior harmonic system of the chain −1, −1+δ, …, 1 with
    absorbing ends; ``z0`` must be a lattice point.  Linear algebra only —
    no sampling — so it serves as an independent reference for (1 − z)/2.
    """
    n = round(2.0 / delta)
    if abs(n * delta - 2.0) > 1e-12:
        raise ValueError("delta must divide the interval [−1, 1]")
    k = round((z0 + 1.0) / delta)
    if abs(k * delta - (z0 + 1.0)) > 1e-9:
        raise ValueError("z0 must be a lattice point")
    if k <= 0:
        return 1.0
    if k >= n:
        return 0.0
    # interior unknowns u_1..u_{n-1}: u_k = (u_{k-1} + u_{k+1})/2,
    # boundary u_0 = 1 (down pole hit), u_n = 0
    size = n - 1
    main = np.full(size, 2.0)
    off = np.full(size - 1, -1.0)
    rhs = np.zeros(size)
    rhs[0] = 1.0
    ab = np.zeros((3, size))
    ab[0, 1:] = off
    ab[1] = main
    ab[2, :-1] = off
    from scipy.linalg import solve_banded

    u = solve_banded((1, 1), ab, rhs)
    return float(u[k - 1])
