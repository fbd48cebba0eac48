"""Coupled oscillator ring: normal modes turn one shared frequency into many.

Identical oscillators coupled to nearest neighbours on a ring decouple
into normal modes at frequencies omega + 2 kappa cos(2 pi j / N).  Joint
position samples transform into normal coordinates by the orthogonal
eigenvector matrix, after which the multi-frequency reconstruction
machinery applies unchanged.
"""

from dataclasses import dataclass
from math import floor, pi

import numpy as np
from scipy.linalg import eigh

from .errors import NeedsJointSamples, NumericalError, ShapeError
from .records import MeasurementRecord
from .systems import ChainSystem, OscillatorSystem
from .oscillator.recon import ThetaCoverageReport, theta_coverage

ORTHOGONALITY_TOLERANCE = 1e-12
EIGEN_TOLERANCE = 1e-10
DEGENERACY_TOLERANCE = 1e-9


@dataclass(frozen=True)
class NormalModeBasis:
    frequencies: np.ndarray  # ascending
    mode_matrix: np.ndarray  # orthogonal, columns are eigenvectors
    degeneracy_groups: tuple[tuple[int, ...], ...]

    @property
    def n_modes(self) -> int:
        return self.frequencies.size


def coupling_matrix(system: ChainSystem) -> np.ndarray:
    n = system.n_sites
    mat = np.full((n, n), 0.0)
    np.fill_diagonal(mat, system.omega)
    for j in range(n):
        k = (j + 1) % n
        mat[j, k] += system.kappa
        mat[k, j] += system.kappa
    return mat


def ring_spectrum(system: ChainSystem) -> np.ndarray:
    """Closed-form eigenfrequencies omega + 2 kappa cos(2 pi j / N), sorted."""
    j = np.arange(1, system.n_sites + 1)
    return np.sort(system.omega + 2.0 * system.kappa * np.cos(2.0 * pi * j / system.n_sites))


def normal_modes(system: ChainSystem) -> NormalModeBasis:
    """Orthogonal diagonalization of the ring coupling matrix."""
    mat = coupling_matrix(system)
    vals, vecs = eigh(mat)
    if np.max(np.abs(vecs.T @ vecs - np.eye(system.n_sites))) > ORTHOGONALITY_TOLERANCE:
        raise NumericalError("eigenvector matrix failed the orthogonality check")
    if np.max(np.abs(mat @ vecs - vecs * vals)) > EIGEN_TOLERANCE * max(1.0, np.abs(vals).max()):
        raise NumericalError("eigen residual exceeded tolerance")
    closed = ring_spectrum(system)
    if np.max(np.abs(np.sort(vals) - closed)) > EIGEN_TOLERANCE:
        raise NumericalError("numerical spectrum disagrees with the ring closed form")
    groups = []
    start = 0
    for i in range(1, system.n_sites + 1):
        if i == system.n_sites or vals[i] - vals[start] > DEGENERACY_TOLERANCE:
            groups.append(tuple(range(start, i)))
            start = i
    return NormalModeBasis(
        frequencies=vals,
        mode_matrix=vecs,
        degeneracy_groups=tuple(groups),
    )


def to_normal_coordinates(record: MeasurementRecord, basis: NormalModeBasis) -> MeasurementRecord:
    """Rotate per-shot position samples into normal coordinates.

    Only sampled records transform; binned distributions lose the joint
    information the rotation needs.  The output record carries the
    normal-mode oscillator system so it can feed the reconstruction paths
    directly.
    """
    if record.payload_kind == "distribution":
        raise NeedsJointSamples("normal-coordinate transform needs per-shot samples")
    if record.n_modes != basis.n_modes:
        raise ShapeError(
            f"record has {record.n_modes} modes but the basis describes {basis.n_modes}"
        )
    if np.any(basis.frequencies <= 0):
        raise ShapeError("normal-mode frequencies must be positive to act as an oscillator system")
    blocks = np.stack([record.block_positions(i) for i in range(record.n_times)])
    rotated = blocks @ basis.mode_matrix  # x' = V^T x per sample row
    system = OscillatorSystem(omegas=tuple(basis.frequencies))
    folds = np.array(
        [[floor(w * t / pi + 1e-12) for w in system.omegas] for t in record.times],
        dtype=np.int64,
    ).reshape(record.n_times, basis.n_modes)
    return MeasurementRecord(
        system=system,
        grid=None,
        times=record.times.copy(),
        fold_counts=folds,
        payload_kind="positions",
        payload=rotated,
        seed=record.seed,
        shots=record.shots,
        config_hash=record.config_hash,
    )


def reconstructability_check(
    basis: NormalModeBasis, observation_time=200.0, resolution=64
) -> list[ThetaCoverageReport]:
    """Pairwise angle coverage of the normal-mode frequencies.

    Degenerate or rationally related pairs block full joint reconstruction;
    the per-pair reports say which.
    """
    if np.any(basis.frequencies <= 0):
        raise ShapeError("coverage analysis needs positive normal-mode frequencies")
    system = OscillatorSystem(omegas=tuple(basis.frequencies))
    return theta_coverage(system, observation_time, resolution)
