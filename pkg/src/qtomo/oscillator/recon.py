"""Reconstruction paths for oscillator records.

The one-mode route inverts the Fourier relation between the position
distribution at angle theta and the characteristic function, then either
backprojects to phase space with the |eta| filter or fits a density matrix
directly.  The N-mode route bins a time series into angle cells, applying
the per-mode sign flips picked up each time omega_j * t wraps past pi.
"""

from dataclasses import dataclass
from math import pi, sqrt

import numpy as np
from scipy import ndimage

from .. import rational
from ..errors import (
    CoverageError,
    FilterTruncationError,
    InversionError,
    ShapeError,
)
from ..grids import CharGrid, WignerGrid
from ..records import MeasurementRecord
from ..results import ReconstructedState
from ..states import DensityMatrix, project_to_physical
from ..bases import FockBasis
from ..systems import OscillatorSystem
from .forward import displacement_elements

MAX_THETA_SPACING = pi / 64
CONDITION_LIMIT = 1e10


def _block_char(record: MeasurementRecord, index: int, eta_kernels) -> np.ndarray:
    """Characteristic-function estimate of one block on the (eta...) mesh.

    eta_kernels[j] is exp(i eta_j x_j) on the block's flip-adjusted eta
    axis, weighted for quadrature when the payload is gridded.
    """
    if record.payload_kind == "positions":
        samples = record.payload[index]
        factors = [np.exp(1j * np.outer(samples[:, j], ax)) for j, ax in enumerate(eta_kernels)]
        letters = "abcdefgh"[: len(factors)]
        expr = ",".join(f"s{c}" for c in letters) + "->" + letters
        return np.einsum(expr, *factors) / samples.shape[0]
    block = record.payload[index].astype(float)
    if record.payload_kind == "counts":
        block = block / record.shots
    out = block
    for kernel in eta_kernels:
        out = np.tensordot(out, kernel, axes=([0], [0]))
    return out


def _eta_kernel(record, mode, eta, sign):
    x = record.grid.points(mode) if record.grid is not None else None
    if record.payload_kind == "distribution":
        return np.exp(1j * sign * np.outer(x, eta)) * record.grid.weights(mode)[:, None]
    if record.payload_kind == "counts":
        return np.exp(1j * sign * np.outer(x, eta))
    return sign * eta  # positions payload: plain axis, sign folded in


def char_from_record_1d(record: MeasurementRecord, eta=None) -> CharGrid:
    """Characteristic function of a one-mode record by Fourier quadrature.

    The record's angles must cover [0, pi) with circular gaps of at most
    pi/64; each block contributes w(eta, theta) = integral of
    Pr(x, theta) exp(i eta x) (sample mean over shots for sampled blocks).
    """
    if record.n_modes != 1:
        raise ShapeError("one-mode record required")
    eta = np.linspace(-10.0, 10.0, 201) if eta is None else np.asarray(eta, dtype=float)
    if record.thetas is not None:
        thetas = record.thetas[:, 0]
        signs = np.ones(record.n_times)
    else:
        omega = record.system.omegas[0]
        ratio = omega * record.times / pi
        wraps = np.floor(ratio + 1e-12)
        thetas = np.clip((ratio - wraps) * pi, 0.0, None)
        signs = (-1.0) ** wraps
    order = np.argsort(thetas)
    sorted_thetas = thetas[order]
    gaps = np.diff(sorted_thetas)
    wrap_gap = pi - sorted_thetas[-1] + sorted_thetas[0]
    if sorted_thetas.size < 2 or max(gaps.max(initial=0.0), wrap_gap) > MAX_THETA_SPACING * (1 + 1e-9):
        raise CoverageError("record angles do not cover [0, pi) at pi/64 spacing")
    values = np.empty((eta.size, record.n_times), dtype=np.complex128)
    for col, idx in enumerate(order):
        if record.payload_kind == "positions":
            kernels = [signs[idx] * eta]
        else:
            kernels = [_eta_kernel(record, 0, eta, signs[idx])]
        values[:, col] = _block_char(record, idx, kernels)
    grid = CharGrid(eta_axes=(eta,), theta_axes=(sorted_thetas,), values=values)
    grid.validate()
    return grid


def wigner_backprojection_1d(char: CharGrid, x_axis, p_axis) -> WignerGrid:
    """Filtered backprojection of a one-mode characteristic function.

    Applies the |eta| ramp filter and integrates the projections over the
    angle axis.  The eta axis must be symmetric and long enough that the
    characteristic function has decayed below 1e-8 at its ends.
    """
    if char.n_modes != 1:
        raise ShapeError("one-mode characteristic grid required")
    eta = char.eta_axes[0]
    if not np.allclose(eta, -eta[::-1], atol=1e-12):
        raise FilterTruncationError("eta axis must be symmetric about 0")
    edge = max(np.abs(char.values[0]).max(), np.abs(char.values[-1]).max())
    if edge >= 1e-8:
        raise FilterTruncationError(f"characteristic function is {edge:.2e} at the eta edge; extend the axis")
    thetas = char.theta_axes[0]
    # circular trapezoid weights on [0, pi); tolerates mild non-uniformity
    ext = np.concatenate(([thetas[-1] - pi], thetas, [thetas[0] + pi]))
    theta_w = 0.5 * (ext[2:] - ext[:-2])
    eta_w = np.gradient(eta)
    x_axis = np.asarray(x_axis, dtype=float)
    p_axis = np.asarray(p_axis, dtype=float)
    xs, ps = np.meshgrid(x_axis, p_axis, indexing="ij")
    flat = np.zeros(xs.size, dtype=np.complex128)
    filt = np.abs(eta) * eta_w
    # The |eta| kink at 0 aliases badly under the trapezoid rule.  Subtract a
    # unit-trace Gaussian reference, whose filtered backprojection is the
    # vacuum phase-space Gaussian in closed form, and discretize only the
    # kink-free residual.
    reference = np.exp(-0.25 * eta**2)
    for k, theta in enumerate(thetas):
        s = (np.cos(theta) * xs + np.sin(theta) * ps).ravel()
        coeff = filt * (char.values[:, k] - reference) * theta_w[k]
        flat += coeff @ np.exp(-1j * np.outer(eta, s))
    values = flat.real.reshape(xs.shape) / (2 * pi) ** 2
    values += np.exp(-(xs**2 + ps**2)) / pi
    return WignerGrid(x_axes=(x_axis,), p_axes=(p_axis,), values=values)


@dataclass(frozen=True)
class ThetaCoverageReport:
    """How densely one frequency pair sweeps the joint angle plane."""

    modes: tuple[int, int]
    ratio_class: str  # "equal" | "rational_lines" | "irrational_dense"
    line_count: int | None
    gap_estimate: float
    approximate: bool = False

    @property
    def blocks_reconstruction(self) -> bool:
        return self.ratio_class != "irrational_dense"


def _pair_gap(omega_i, omega_j, observation_time, resolution):
    cell = pi / resolution
    dt = 0.45 * cell / max(omega_i, omega_j)
    t = np.arange(0.0, observation_time, dt)
    ti = np.floor(np.mod(omega_i * t, pi) / cell).astype(int) % resolution
    tj = np.floor(np.mod(omega_j * t, pi) / cell).astype(int) % resolution
    occupied = np.zeros((resolution, resolution), dtype=bool)
    occupied[ti, tj] = True
    if not occupied.any():
        return pi * sqrt(2.0) / 2
    tiled = np.tile(~occupied, (3, 3))
    dist = ndimage.distance_transform_edt(tiled, sampling=(cell, cell))
    center = dist[resolution : 2 * resolution, resolution : 2 * resolution]
    return float(center.max())


def theta_coverage(system: OscillatorSystem, observation_time, resolution=64) -> list[ThetaCoverageReport]:
    """Classify every frequency pair and estimate its angle-plane gap."""
    if system.n_modes < 2:
        raise ShapeError("coverage analysis needs at least two modes")
    reports = []
    for i in range(system.n_modes):
        for j in range(i + 1, system.n_modes):
            cls = rational.classify_pair(system.omegas[i], system.omegas[j])
            if cls.kind == rational.EQUAL:
                ratio_class, lines = "equal", 1
            elif cls.kind == rational.RATIONAL:
                ratio_class, lines = "rational_lines", max(cls.numerator, cls.denominator)
            else:
                ratio_class, lines = "irrational_dense", None
            gap = _pair_gap(system.omegas[i], system.omegas[j], observation_time, resolution)
            reports.append(
                ThetaCoverageReport(
                    modes=(i, j),
                    ratio_class=ratio_class,
                    line_count=lines,
                    gap_estimate=gap,
                    approximate=cls.approximate,
                )
            )
    return reports


def char_from_record_nd(
    records,
    eta_axes=None,
    n_theta_bins=64,
    min_fill=0.0,
    inpaint=False,
) -> CharGrid:
    """Assemble an N-mode characteristic grid from one or more time series.

    Each block is Fourier-transformed with the per-mode sign flips
    (-1)^(fold count) folded into the eta kernels, then binned into its
    angle cell.  Cells average every sample they receive and remember the
    mean attained angles; unvisited cells stay NaN (flagged, never
    silently interpolated) unless inpaint copies the nearest visited cell.
    """
    if isinstance(records, MeasurementRecord):
        records = [records]
    if not records:
        raise ShapeError("need at least one record")
    first = records[0]
    n = first.n_modes
    if n < 2:
        raise ShapeError("use char_from_record_1d for one-mode records")
    if any(rec.thetas is None for rec in records):
        if not isinstance(first.system, OscillatorSystem):
            raise ShapeError("time-folded binning requires an oscillator system")
        for i in range(n):
            for j in range(i + 1, n):
                cls = rational.classify_pair(first.system.omegas[i], first.system.omegas[j])
                if cls.is_rational:
                    raise CoverageError(
                        f"modes {(i, j)} have a commensurable frequency ratio; the angle plane "
                        "is never covered by varying time alone"
                    )
    if eta_axes is None:
        eta_axes = [np.linspace(-4.0, 4.0, 33)] * n
    eta_axes = [np.asarray(ax, dtype=float) for ax in eta_axes]
    if len(eta_axes) != n:
        raise ShapeError("need one eta axis per mode")
    eta_shape = tuple(ax.size for ax in eta_axes)
    theta_shape = (n_theta_bins,) * n
    n_cells = n_theta_bins**n
    acc = np.zeros((n_cells,) + eta_shape, dtype=np.complex128)
    counts = np.zeros(n_cells, dtype=np.int64)
    theta_sum = np.zeros((n_cells, n))
    cell = pi / n_theta_bins
    for rec in records:
        if rec.n_modes != n:
            raise ShapeError("records disagree on mode count")
        if rec.thetas is not None:
            thetas = rec.thetas
            signs = np.ones((rec.n_times, n))
        else:
            ratio = np.outer(rec.times, rec.system.omegas) / pi
            wraps = np.floor(ratio + 1e-12)
            thetas = np.clip((ratio - wraps) * pi, 0.0, None)
            signs = (-1.0) ** wraps
        cells = np.minimum((thetas / cell).astype(int), n_theta_bins - 1)
        flat_cells = np.ravel_multi_index(tuple(cells[:, j] for j in range(n)), theta_shape)
        kernel_cache = {}
        for b in range(rec.n_times):
            key = tuple(signs[b])
            if rec.payload_kind == "positions":
                kernels = [signs[b, j] * eta_axes[j] for j in range(n)]
            else:
                if key not in kernel_cache:
                    kernel_cache[key] = [_eta_kernel(rec, j, eta_axes[j], signs[b, j]) for j in range(n)]
                kernels = kernel_cache[key]
            acc[flat_cells[b]] += _block_char(rec, b, kernels)
            counts[flat_cells[b]] += 1
            theta_sum[flat_cells[b]] += thetas[b]
    visited = counts > 0
    values = np.full((n_cells,) + eta_shape, np.nan, dtype=np.complex128)
    values[visited] = acc[visited] / counts[visited].reshape((-1,) + (1,) * len(eta_shape))
    theta_means = np.full((n_cells, n), np.nan)
    theta_means[visited] = theta_sum[visited] / counts[visited, None]
    fill = float(visited.mean())
    if fill < min_fill:
        raise CoverageError(f"only {fill:.3f} of angle cells were visited; needed {min_fill:.3f}")
    inpainted = None
    if inpaint and not visited.all():
        occ = visited.reshape(theta_shape)
        _, nearest = ndimage.distance_transform_edt(~occ, return_indices=True)
        src = np.ravel_multi_index(tuple(nearest[k].ravel() for k in range(n)), theta_shape)
        missing = ~visited
        values[missing] = values[src[missing]]
        theta_means[missing] = theta_means[src[missing]]
        inpainted = missing.reshape(theta_shape)
    # move cell axis behind the eta axes
    values = np.moveaxis(values.reshape((n_cells,) + eta_shape), 0, -1).reshape(eta_shape + theta_shape)
    centers = np.linspace(cell / 2, pi - cell / 2, n_theta_bins)
    grid = CharGrid(
        eta_axes=tuple(eta_axes),
        theta_axes=(centers,) * n,
        values=values,
        visit_counts=counts.reshape(theta_shape),
        theta_samples=theta_means.reshape(theta_shape + (n,)),
        inpainted=inpainted,
    )
    grid.validate()
    return grid


def rho_from_char(char: CharGrid, cutoff: int) -> ReconstructedState:
    """Least-squares density matrix fit to a sampled characteristic function.

    Solves for the hermitian matrix whose displacement expectations best
    match the grid, then projects onto the physical cone; the projection
    distance is reported as a data-quality diagnostic.
    """
    if not char.mask.all():
        raise CoverageError("characteristic grid has unfilled cells; cannot invert")
    n = char.n_modes
    dims = (cutoff,) * n
    dim = cutoff**n
    eta_mesh = np.meshgrid(*char.eta_axes, indexing="ij")
    # per-sample angles: stored cell means when available, else the axes
    if char.theta_samples is not None:
        theta_cells = char.theta_samples.reshape(-1, n)
    else:
        theta_mesh = np.meshgrid(*char.theta_axes, indexing="ij")
        theta_cells = np.stack([m.ravel() for m in theta_mesh], axis=-1)
    n_theta = theta_cells.shape[0]
    coeff = None
    for j in range(n):
        lam = (1j / sqrt(2.0)) * np.multiply.outer(eta_mesh[j].ravel(), np.exp(1j * theta_cells[:, j]))
        d = displacement_elements(lam, cutoff)  # (n_eta, n_theta, d, d)
        coeff = d if coeff is None else _pair_product(coeff, d)
    # coeff: (n_eta_total, n_theta, dim, dim) with [m, n] = <m|D|n>; model value
    # is sum_{m,n} coeff[m, n] rho[n, m]
    n_eta_total = int(np.prod(char.eta_shape))
    coeff = coeff.reshape(n_eta_total * n_theta, dim, dim)
    target = char.values.reshape(char.eta_shape + (n_theta,)).reshape(n_eta_total * n_theta)
    design = np.empty((coeff.shape[0], dim * dim), dtype=np.complex128)
    cols = []
    for a in range(dim):
        cols.append(coeff[:, a, a])
    for a in range(dim):
        for b in range(a + 1, dim):
            cols.append(coeff[:, a, b] + coeff[:, b, a])
            cols.append(1j * (coeff[:, b, a] - coeff[:, a, b]))
    design = np.stack(cols, axis=1)
    real_design = np.vstack([design.real, design.imag])
    real_target = np.concatenate([target.real, target.imag])
    params, residuals, rank, sing = np.linalg.lstsq(real_design, real_target, rcond=None)
    cond = float(sing[0] / sing[-1]) if sing[-1] > 0 else np.inf
    if cond > CONDITION_LIMIT:
        raise InversionError(f"design matrix condition number {cond:.2e} exceeds {CONDITION_LIMIT:.0e}")
    raw = np.zeros((dim, dim), dtype=np.complex128)
    raw[np.diag_indices(dim)] = params[:dim]
    k = dim
    for a in range(dim):
        for b in range(a + 1, dim):
            raw[a, b] = params[k] + 1j * params[k + 1]
            raw[b, a] = params[k] - 1j * params[k + 1]
            k += 2
    projected, distance = project_to_physical(raw)
    residual = float(np.linalg.norm(real_design @ params - real_target))
    state = DensityMatrix(bases=(FockBasis(cutoff),) * n, elements=projected)
    return ReconstructedState(
        state=state, projection_distance=distance, residual=residual, condition_number=cond
    )


def _pair_product(acc, d):
    """Combine per-mode displacement tensors into the joint coefficient tensor.

    Both operands share the (sample, angle-cell) axes; the matrix indices
    combine as a Kronecker product.
    """
    big_e, n_t, dim_a, dim_b = acc.shape
    _, _, da, db = d.shape
    out = np.einsum("ETAB,ETab->ETAaBb", acc, d)
    return out.reshape(big_e, n_t, dim_a * da, dim_b * db)
