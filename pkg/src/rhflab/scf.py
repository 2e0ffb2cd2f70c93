"""Hartree-Fock ground-state preparation.

Minimizes the relativistic Hartree-Fock energy over N-orbital Slater states
by damped self-consistent iteration with Aufbau occupation: the mean-field
matrix is built densely (grid sizes capped at n^d <= 4096), diagonalized,
and the lowest N eigenvectors occupied.  Mixing damps the density-matrix
input of the mean field; every emitted iterate is an exact projection.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grids import Dispersion, Grid, PotentialSpec, apply_kinetic, convolve_potential
from .orbitals import (
    OrbitalSet,
    apply_exchange,
    commutator_with_momentum,
    commutator_with_position,
    reduced_density,
    trace_norm,
)

__all__ = [
    "ScfConfig",
    "ScfResult",
    "hf_energy",
    "mean_field_apply",
    "scf_minimize",
    "dense_one_body_matrix",
    "DENSE_SIZE_CAP",
]

DENSE_SIZE_CAP = 4096


@dataclass
class ScfConfig:
    max_iterations: int = 200
    mixing: float = 0.5
    convergence_tol: float = 1e-10
    aufbau: bool = True

    def __post_init__(self):
        if not 0.0 < self.mixing <= 1.0:
            raise ValueError(f"mixing must lie in (0, 1], got {self.mixing}")
        if self.convergence_tol <= 0:
            raise ValueError("convergence_tol must be positive")


@dataclass
class ScfResult:
    orbitals: OrbitalSet
    energy: float
    energies: list
    residuals: list
    iterations: int
    converged: bool
    oscillation: bool
    stationarity: float
    comm_x_over_neps: float
    comm_grad_over_neps: float


def hf_energy(orbs: OrbitalSet, potential: PotentialSpec, dispersion: Dispersion,
              include_vext: bool = True, exchange_on: bool = True) -> float:
    """tr[(K + V_ext) ω] + (2N)^{-1} ∬ V(x-y)(ω(x,x)ω(y,y) - |ω(x,y)|^2).

    Direct term computed spectrally from ρ; exchange as (1/2) Σ_j <f_j, X f_j>.
    The flags select the functional conserved by the active flow: a quench
    drops V_ext, the Hartree equation drops the exchange term.
    """
    grid = orbs.grid
    dv = grid.cell_volume
    n = orbs.n_particles
    one_body = 0.0
    for f in orbs.orbitals:
        one_body += np.vdot(f, apply_kinetic(f, grid, dispersion)).real * dv
        if include_vext:
            one_body += np.vdot(f, potential.vext * f).real * dv
    rho = reduced_density(orbs)
    v_rho = convolve_potential(rho, grid, potential)
    direct = 0.5 * n * float(np.sum(v_rho * rho) * dv)
    exchange = 0.0
    if exchange_on and potential.has_interaction():
        for f in orbs.orbitals:
            exchange += 0.5 * np.vdot(f, apply_exchange(orbs, potential, f)).real * dv
    return float(one_body + direct - exchange)


def mean_field_apply(orbs: OrbitalSet, potential: PotentialSpec, dispersion: Dispersion,
                     field: np.ndarray, include_vext: bool = True,
                     exchange_on: bool = True) -> np.ndarray:
    """h(ω) field with h = K + V_ext + V*ρ - X (trap and exchange optional)."""
    grid = orbs.grid
    grid.check_field(field)
    out = apply_kinetic(field, grid, dispersion)
    local = convolve_potential(reduced_density(orbs), grid, potential)
    if include_vext:
        local = local + potential.vext
    out = out + local * field
    if exchange_on and potential.has_interaction():
        out = out - apply_exchange(orbs, potential, field)
    return out


def dense_one_body_matrix(grid: Grid, dispersion: Dispersion,
                          vext: np.ndarray | None = None) -> np.ndarray:
    """K + V_ext as a Hermitian matrix on grid-value vectors."""
    if grid.size > DENSE_SIZE_CAP:
        raise ValueError(f"grid size {grid.size} exceeds dense SCF cap {DENSE_SIZE_CAP}")
    eye = np.eye(grid.size, dtype=complex).reshape(grid.size, *grid.shape)
    axes = tuple(range(1, grid.dim + 1))
    sym = dispersion.symbol(grid)
    k_cols = np.fft.ifftn(sym * np.fft.fftn(eye, axes=axes), axes=axes)
    h = k_cols.reshape(grid.size, grid.size).T.copy()
    if vext is not None:
        h[np.diag_indices(grid.size)] += vext.reshape(-1)
    return h


def _lag_matrix(grid: Grid, potential: PotentialSpec) -> np.ndarray:
    """V(x_i - x_j) from the interaction coefficients (circulant in each axis)."""
    v_lag = np.fft.ifftn(potential.vhat_eff).real * (grid.size / grid.box_length**grid.dim)
    idx = np.indices(grid.shape).reshape(grid.dim, grid.size).astype(np.int32)
    diff = (idx[:, :, None] - idx[:, None, :]) % grid.n
    return v_lag[tuple(diff)]


def _fock_matrix(h0: np.ndarray, v_lag_mat, dmat: np.ndarray, grid: Grid,
                 potential: PotentialSpec, n_particles: int) -> np.ndarray:
    """h(ω) on value vectors: h0 + diag(V*ρ) - X(ω)."""
    rho = dmat.diagonal().real / (n_particles * grid.cell_volume)
    v_rho = convolve_potential(rho.reshape(grid.shape), grid, potential).reshape(-1)
    h = h0.copy()
    h[np.diag_indices(grid.size)] += v_rho
    if v_lag_mat is not None:
        h -= v_lag_mat * dmat / n_particles
    return h


def _occupy(h: np.ndarray, n_particles: int, grid: Grid, aufbau: bool,
            prev: np.ndarray | None) -> np.ndarray:
    """Diagonalize and pick N occupied orbitals (Aufbau or maximum overlap)."""
    evals, evecs = np.linalg.eigh(h)
    if aufbau or prev is None:
        cols = np.arange(n_particles)
    else:
        scores = np.sum(np.abs(evecs.conj().T @ prev.reshape(n_particles, -1).T
                               * grid.cell_volume) ** 2, axis=1)
        order = np.lexsort((np.arange(len(evals)), evals, -scores))
        cols = np.sort(order[:n_particles])
    phi = (evecs[:, cols] / np.sqrt(grid.cell_volume)).T
    return phi.reshape(n_particles, *grid.shape)


def scf_minimize(grid: Grid, potential: PotentialSpec, n_particles: int,
                 dispersion: Dispersion, config: ScfConfig) -> ScfResult:
    """Damped SCF with Aufbau occupation; returns the best (lowest-energy) iterate."""
    if n_particles > grid.size:
        raise ValueError("more particles than grid degrees of freedom")
    h0 = dense_one_body_matrix(grid, dispersion, potential.vext)
    v_lag_mat = _lag_matrix(grid, potential) if potential.has_interaction() else None
    dv = grid.cell_volume

    phi = _occupy(h0, n_particles, grid, True, None)
    orbs = OrbitalSet(phi, grid, validate=False)
    energy = hf_energy(orbs, potential, dispersion)
    flat = phi.reshape(n_particles, -1)
    dmat = (flat.T @ flat.conj()) * dv
    d_mix = dmat.copy()

    energies = [energy]
    residuals = [float(np.linalg.norm(h0 @ dmat - dmat @ h0, "fro"))]
    best = (energy, orbs)
    converged = False
    oscillation = False
    mixing = config.mixing
    halved = False
    iterations = 0
    alpha = 1.0  # first update replaces the guess outright

    for it in range(1, config.max_iterations + 1):
        iterations = it
        h = _fock_matrix(h0, v_lag_mat, d_mix, grid, potential, n_particles)
        phi = _occupy(h, n_particles, grid, config.aufbau, phi)
        orbs = OrbitalSet(phi, grid, validate=False)
        new_energy = hf_energy(orbs, potential, dispersion)
        flat = phi.reshape(n_particles, -1)
        dmat = (flat.T @ flat.conj()) * dv
        residual = float(np.linalg.norm(h @ dmat - dmat @ h, "fro"))
        energies.append(new_energy)
        residuals.append(residual)
        if new_energy < best[0]:
            best = (new_energy, orbs)
        slack = 1e-12 * max(1.0, abs(energy))
        if new_energy > energy + slack and it > 1:
            if not halved:
                mixing = 0.5 * mixing
                halved = True
            else:
                oscillation = True
        if abs(new_energy - energy) < config.convergence_tol:
            energy = new_energy
            converged = True
            break
        energy = new_energy
        d_mix = (1.0 - alpha) * d_mix + alpha * dmat
        alpha = mixing

    energy, orbs = best
    h_final = _fock_matrix(h0, v_lag_mat, _projection_matrix(orbs), grid, potential,
                           n_particles)
    dmat = _projection_matrix(orbs)
    stationarity = float(np.linalg.norm(h_final @ dmat - dmat @ h_final, "fro"))
    neps = n_particles * grid.epsilon
    comm_x = sum(trace_norm(commutator_with_position(orbs, a)) for a in range(grid.dim))
    comm_g = sum(trace_norm(commutator_with_momentum(orbs, a)) for a in range(grid.dim))
    return ScfResult(
        orbitals=orbs,
        energy=energy,
        energies=energies,
        residuals=residuals,
        iterations=iterations,
        converged=converged,
        oscillation=oscillation,
        stationarity=stationarity,
        comm_x_over_neps=comm_x / neps,
        comm_grad_over_neps=comm_g / neps,
    )


def _projection_matrix(orbs: OrbitalSet) -> np.ndarray:
    flat = orbs.orbitals.reshape(orbs.n_particles, -1)
    return (flat.T @ flat.conj()) * orbs.grid.cell_volume
