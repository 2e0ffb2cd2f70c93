"""Time evolution of orbital sets under the selected mean-field equation.

The density-matrix equation iε ∂_t ω = [h(t), ω] is realized on orbitals as
iε ∂_t f_j = h(t) f_j, which preserves the projection property exactly and
is equivalent for ω = Σ|f_j><f_j|.  Two schemes:

  exponential_midpoint  exp(-i dt h(t+dt/2)/ε) applied per orbital through a
                        Lanczos subspace, the half-step mean field obtained by
                        two fixed-point passes (default scheme).
  rk4_frozen_field      classical RK4 on the coupled orbital system with the
                        mean field re-evaluated at every stage (cross-check).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .grids import Dispersion, Grid, PotentialSpec, convolve_potential
from .krylov import expm_apply_block
from .orbitals import OrbitalSet, reorthonormalize

__all__ = [
    "EvolutionConfig",
    "SimState",
    "Observer",
    "DiagnosticsSeries",
    "EvolveResult",
    "StepRejected",
    "step",
    "evolve",
    "pair_evolve",
    "suggested_dt_cap",
]

GRAM_STEP_TOL = 1e-6
FIXED_POINT_PASSES = 2


class StepRejected(RuntimeError):
    """Raised when a step degrades orthonormality beyond tolerance (dt too large)."""


@dataclass(frozen=True)
class EvolutionConfig:
    dt: float
    t_final: float
    scheme: str = "exponential_midpoint"
    exchange_on: bool = True
    dispersion: Dispersion = None
    reortho_every: int = 10
    keep_trap: bool = False
    krylov_tol: float = 1e-12

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.reortho_every < 1:
            raise ValueError("reortho_every must be >= 1")
        if self.scheme not in ("exponential_midpoint", "rk4_frozen_field"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.dispersion is None:
            raise ValueError("dispersion must be set")


@dataclass
class SimState:
    time: float
    orbitals: OrbitalSet
    potential: PotentialSpec
    config: EvolutionConfig
    step_index: int = 0
    # pre-reorthonormalization audit values of the most recent step
    last_gram_deviation: float = 0.0
    last_projection_residual: float = 0.0


@dataclass
class Observer:
    """Named diagnostic sampled every `cadence` steps (and at t=0 and t_final)."""

    name: str
    cadence: int
    fn: object  # SimState -> dict[str, float]


@dataclass
class DiagnosticsSeries:
    times: list = field(default_factory=list)
    channels: dict = field(default_factory=dict)

    def append(self, t: float, values: dict) -> None:
        if self.channels and set(values) != set(self.channels):
            raise ValueError("observer returned inconsistent channel names")
        self.times.append(t)
        for k, v in values.items():
            self.channels.setdefault(k, []).append(v)

    def as_arrays(self) -> tuple[np.ndarray, dict]:
        return np.asarray(self.times), {k: np.asarray(v) for k, v in self.channels.items()}


@dataclass
class EvolveResult:
    state: SimState
    series: dict
    aborted: bool = False
    abort_reason: str = ""


def suggested_dt_cap(grid: Grid, dispersion: Dispersion) -> float:
    """dt <= 0.1 ε / ||symbol||_inf, the step-size rule for the ε-scaled generator."""
    return 0.1 * grid.epsilon / float(np.max(dispersion.symbol(grid)))


def _mean_field_closure(source: np.ndarray, state: SimState):
    """h(ω_source) as a block closure on (B, *shape) field stacks."""
    grid = state.orbitals.grid
    cfg = state.config
    pot = state.potential
    n_part = source.shape[0]
    rho = np.sum(np.abs(source) ** 2, axis=0) / n_part
    local = convolve_potential(rho, grid, pot)
    if cfg.keep_trap:
        local = local + pot.vext
    symbol = cfg.dispersion.symbol(grid)
    interacting = cfg.exchange_on and pot.has_interaction()
    axes = tuple(range(1, grid.dim + 1))
    pair_axes = tuple(range(2, grid.dim + 2))
    vhat = pot.vhat_eff
    src_conj = np.conj(source)

    def apply_h_block(fields: np.ndarray) -> np.ndarray:
        out = np.fft.ifftn(symbol * np.fft.fftn(fields, axes=axes), axes=axes)
        out += local * fields
        if interacting:
            pair = src_conj[None, ...] * fields[:, None, ...]
            conv = np.fft.ifftn(vhat * np.fft.fftn(pair, axes=pair_axes),
                                axes=pair_axes)
            out -= np.sum(source[None, ...] * conv, axis=1) / n_part
        return out

    return apply_h_block


def _propagate_all(apply_h_block, orbs_arr: np.ndarray, tau: float, grid: Grid,
                   tol: float) -> np.ndarray:
    flat = orbs_arr.reshape(orbs_arr.shape[0], -1)

    def matvec(rows: np.ndarray) -> np.ndarray:
        shaped = rows.reshape(rows.shape[0], *grid.shape)
        return apply_h_block(shaped).reshape(rows.shape[0], -1)

    out = expm_apply_block(matvec, flat, tau, weight=grid.cell_volume, tol=tol)
    return out.reshape(orbs_arr.shape)


def _step_exponential_midpoint(state: SimState) -> np.ndarray:
    cfg = state.config
    grid = state.orbitals.grid
    eps = grid.epsilon
    phi = state.orbitals.orbitals
    half = phi
    for _ in range(FIXED_POINT_PASSES):
        apply_h = _mean_field_closure(half, state)
        half = _propagate_all(apply_h, phi, 0.5 * cfg.dt / eps, grid, cfg.krylov_tol)
    apply_h = _mean_field_closure(half, state)
    return _propagate_all(apply_h, phi, cfg.dt / eps, grid, cfg.krylov_tol)


def _step_rk4(state: SimState) -> np.ndarray:
    cfg = state.config
    grid = state.orbitals.grid
    eps = grid.epsilon
    phi = state.orbitals.orbitals

    def rhs(arr: np.ndarray) -> np.ndarray:
        apply_h_block = _mean_field_closure(arr, state)
        return apply_h_block(arr) * (-1j / eps)

    k1 = rhs(phi)
    k2 = rhs(phi + 0.5 * cfg.dt * k1)
    k3 = rhs(phi + 0.5 * cfg.dt * k2)
    k4 = rhs(phi + cfg.dt * k3)
    return phi + (cfg.dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def step(state: SimState) -> SimState:
    """Advance one dt; raises StepRejected when orthonormality degrades."""
    if state.config.scheme == "exponential_midpoint":
        new_phi = _step_exponential_midpoint(state)
    else:
        new_phi = _step_rk4(state)
    new_orbs = OrbitalSet(new_phi, state.orbitals.grid, validate=False)
    gram = new_orbs.gram()
    eye = np.eye(new_orbs.n_particles)
    dev = float(np.max(np.abs(gram - eye)))
    if not np.isfinite(dev) or dev > GRAM_STEP_TOL:
        raise StepRejected(
            f"post-step Gram deviation {dev:.3e} exceeds {GRAM_STEP_TOL:g}; reduce dt"
        )
    # ||ω²-ω||_HS from the Gram alone: tr(A† G A G) with A = G - I
    a = gram - eye
    proj = float(np.sqrt(max(np.trace(a.conj().T @ gram @ a @ gram).real, 0.0)))
    idx = state.step_index + 1
    if idx % state.config.reortho_every == 0:
        new_orbs = reorthonormalize(new_orbs)
    return replace(state, time=state.time + state.config.dt, orbitals=new_orbs,
                   step_index=idx, last_gram_deviation=dev,
                   last_projection_residual=proj)


def _emit(state: SimState, observers, series: dict) -> SimState:
    # reorthonormalize before emission so sampled states satisfy the
    # orbital-set invariants at full precision
    if not observers:
        return state
    clean = reorthonormalize(state.orbitals)
    state = replace(state, orbitals=clean)
    for obs in observers:
        series[obs.name].append(state.time, obs.fn(state))
    return state


def evolve(state: SimState, observers: list | None = None) -> EvolveResult:
    """Run to t_final, sampling each observer at its cadence (plus t=0 and the end)."""
    observers = observers or []
    cfg = state.config
    if cfg.t_final < state.time:
        raise ValueError("t_final precedes current time")
    cap = suggested_dt_cap(state.orbitals.grid, cfg.dispersion)
    if cfg.dt > cap:
        warnings.warn(
            f"dt={cfg.dt:g} exceeds the suggested cap 0.1*eps/max(symbol)={cap:g}",
            stacklevel=2,
        )
    series = {obs.name: DiagnosticsSeries() for obs in observers}
    n_steps = int(round((cfg.t_final - state.time) / cfg.dt))
    state = _emit(state, observers, series)
    for k in range(1, n_steps + 1):
        try:
            state = step(state)
        except StepRejected as exc:
            return EvolveResult(state, series, aborted=True, abort_reason=str(exc))
        due = [obs for obs in observers if k % obs.cadence == 0 or k == n_steps]
        if due:
            clean = reorthonormalize(state.orbitals)
            state = replace(state, orbitals=clean)
            for obs in due:
                series[obs.name].append(state.time, obs.fn(state))
    return EvolveResult(state, series)


def pair_evolve(state_a: SimState, state_b: SimState, comparator: str,
                cadence: int = 1) -> DiagnosticsSeries:
    """Evolve two states from identical initial data, recording tr|ω_a - ω_b|^2.

    comparator names the single config axis allowed to differ
    ("exchange_on", "dispersion" or "scheme"); anything else mismatched is
    rejected.
    """
    from .orbitals import hs_distance_squared

    allowed = {"exchange_on", "dispersion", "scheme"}
    if comparator not in allowed:
        raise ValueError(f"comparator must be one of {sorted(allowed)}")
    if state_a.orbitals.grid != state_b.orbitals.grid:
        raise ValueError("pair evolution requires identical grids")
    if np.max(np.abs(state_a.orbitals.orbitals - state_b.orbitals.orbitals)) > 1e-12:
        raise ValueError("pair evolution requires identical initial orbitals")
    for name in ("dt", "t_final", "scheme", "exchange_on", "dispersion", "reortho_every",
                 "keep_trap"):
        if name == comparator:
            continue
        if getattr(state_a.config, name) != getattr(state_b.config, name):
            raise ValueError(f"configs differ on {name!r}, not on the comparator axis")

    series = DiagnosticsSeries()
    n_steps = int(round((state_a.config.t_final - state_a.time) / state_a.config.dt))
    series.append(state_a.time, {"hs_distance_squared": hs_distance_squared(
        state_a.orbitals, state_b.orbitals)})
    for k in range(1, n_steps + 1):
        state_a = step(state_a)
        state_b = step(state_b)
        if k % cadence == 0 or k == n_steps:
            series.append(state_a.time, {"hs_distance_squared": hs_distance_squared(
                state_a.orbitals, state_b.orbitals)})
    return series
