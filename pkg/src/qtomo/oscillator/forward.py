"""Forward model for N harmonic oscillator modes.

Everything is phrased through the rotated quadrature x(theta) =
cos(theta) x + sin(theta) p, whose distribution at angle theta equals the
position distribution at time t = theta / omega.  The characteristic
function and the phase-space (Wigner) oracle are evaluated from the exact
matrix elements of exp(i eta x(theta)), which is a displacement operator.
"""

import string
from math import floor, pi, sqrt

import numpy as np
from scipy.linalg import eigh
from scipy.special import eval_genlaguerre, gammaln

from ..bases import FockBasis
from ..errors import BasisError, GridCoverageError, ShapeError
from ..grids import Axis, CharGrid, SpatialGrid, WignerGrid
from ..records import MeasurementRecord
from ..states import DensityMatrix
from ..systems import OscillatorSystem

MAX_CUTOFF = 256
ORTHONORMALITY_TOLERANCE = 1e-8


def hermite_wavefunctions(cutoff: int, axis: Axis) -> np.ndarray:
    """Oscillator eigenfunctions psi_0..psi_{cutoff-1} sampled on an axis.

    Uses the normalized three-term recurrence, which keeps every value of
    order one and is stable far beyond the default cutoff cap.  Raises
    GridCoverageError when the grid fails the orthonormality check, i.e.
    it is too narrow or too coarse for the requested cutoff.
    """
    if cutoff > MAX_CUTOFF:
        raise ShapeError(f"cutoff {cutoff} exceeds the supported maximum {MAX_CUTOFF}")
    x = axis.points
    psi = np.zeros((cutoff, x.size))
    psi[0] = np.pi**-0.25 * np.exp(-0.5 * x * x)
    if cutoff > 1:
        psi[1] = sqrt(2.0) * x * psi[0]
    for n in range(2, cutoff):
        psi[n] = sqrt(2.0 / n) * x * psi[n - 1] - sqrt((n - 1) / n) * psi[n - 2]
    gram = (psi * axis.weights) @ psi.T
    defect = np.max(np.abs(gram - np.eye(cutoff)))
    if defect > ORTHONORMALITY_TOLERANCE:
        raise GridCoverageError(
            f"grid orthonormality defect {defect:.2e} at cutoff {cutoff}; widen or refine the grid"
        )
    return psi


def displacement_elements(lam: np.ndarray, dim: int) -> np.ndarray:
    """Matrix elements <m|D(lam)|n> of the displacement operator.

    lam may have any shape; the result has shape lam.shape + (dim, dim).
    Closed Laguerre form, exact for the infinite-dimensional operator.
    """
    lam = np.asarray(lam, dtype=np.complex128)
    u = np.abs(lam) ** 2
    gauss = np.exp(-0.5 * u)
    out = np.empty(lam.shape + (dim, dim), dtype=np.complex128)
    lgamma = gammaln(np.arange(1, dim + 1))
    for n in range(dim):
        for m in range(n, dim):
            k = m - n
            scale = np.exp(0.5 * (lgamma[n] - lgamma[m]))
            laguerre = eval_genlaguerre(n, k, u)
            base = scale * gauss * laguerre
            out[..., m, n] = base * lam**k
            out[..., n, m] = base * (-np.conj(lam)) ** k
    return out


def _require_fock(rho: DensityMatrix):
    if not all(isinstance(b, FockBasis) for b in rho.bases):
        raise BasisError("operation requires a Fock-basis state")


class _DistributionEvaluator:
    """Shared machinery: joint distributions from a rank-decomposed state.

    The state is eigendecomposed once; each angle tuple then costs one pass
    of small matrix products per retained eigenvector, and the resulting
    distribution is non-negative by construction.
    """

    def __init__(self, rho: DensityMatrix, grid: SpatialGrid, weight_floor=1e-14):
        _require_fock(rho)
        if grid.n_modes != rho.n_modes:
            raise ShapeError("grid mode count does not match the state")
        self.dims = rho.dims
        self.grid = grid
        self.psi = [hermite_wavefunctions(d, axis) for d, axis in zip(rho.dims, grid.axes)]
        vals, vecs = eigh(rho.elements)
        keep = vals > weight_floor
        self.weights = vals[keep]
        self.vectors = [vecs[:, i].reshape(rho.dims) for i in np.nonzero(keep)[0]]

    def distribution(self, thetas) -> np.ndarray:
        thetas = np.asarray(thetas, dtype=float).ravel()
        if thetas.size != len(self.dims):
            raise ShapeError("need one angle per mode")
        amps = [
            self.psi[j].T * np.exp(-1j * np.arange(self.dims[j]) * thetas[j])[None, :]
            for j in range(len(self.dims))
        ]
        total = np.zeros(self.grid.shape)
        for weight, vec in zip(self.weights, self.vectors):
            wave = vec
            for amp in amps:
                wave = np.tensordot(wave, amp, axes=([0], [1]))
            total += weight * np.abs(wave) ** 2
        return total


def quadrature_distribution(rho: DensityMatrix, thetas, grid: SpatialGrid) -> np.ndarray:
    """Joint distribution of the rotated quadratures x_j(theta_j)."""
    return _DistributionEvaluator(rho, grid).distribution(thetas)


def _char_letters(n_modes):
    letters = string.ascii_letters
    if 3 * n_modes > len(letters):
        raise ShapeError("too many modes for the contraction")
    eta = letters[:n_modes]
    bra = letters[n_modes : 2 * n_modes]
    ket = letters[2 * n_modes : 3 * n_modes]
    return eta, bra, ket


def char_function(rho: DensityMatrix, eta_axes, theta_axes) -> CharGrid:
    """Characteristic function Tr[exp(i sum_j eta_j x_j(theta_j)) rho].

    Evaluated from the exact displacement-operator matrix elements in the
    truncated basis; agrees with the Fourier transform of
    quadrature_distribution to quadrature accuracy.
    """
    _require_fock(rho)
    eta_axes = _as_axes(eta_axes, rho.n_modes)
    theta_axes = _as_axes(theta_axes, rho.n_modes)
    n = rho.n_modes
    caches = []
    for j in range(n):
        lam = (1j / sqrt(2.0)) * eta_axes[j][None, :] * np.exp(1j * theta_axes[j][:, None])
        caches.append(displacement_elements(lam, rho.dims[j]))
    eta_l, bra_l, ket_l = _char_letters(n)
    operands_spec = ",".join(eta_l[j] + bra_l[j] + ket_l[j] for j in range(n))
    rho_spec = ket_l + bra_l
    expr = f"{operands_spec},{rho_spec}->{eta_l}"
    tensor = rho.as_tensor()
    shape = tuple(len(ax) for ax in eta_axes) + tuple(len(ax) for ax in theta_axes)
    values = np.empty(shape, dtype=np.complex128)
    for tidx in np.ndindex(*(len(ax) for ax in theta_axes)):
        ops = [caches[j][tidx[j]] for j in range(n)]
        values[(Ellipsis,) + tidx] = np.einsum(expr, *ops, tensor)
    grid = CharGrid(eta_axes=tuple(eta_axes), theta_axes=tuple(theta_axes), values=values)
    grid.validate()
    return grid


def _as_axes(axes, n_modes):
    if isinstance(axes, np.ndarray) and axes.ndim == 1:
        axes = [axes] * n_modes
    axes = [np.asarray(ax, dtype=float) for ax in axes]
    if len(axes) != n_modes:
        raise ShapeError("need one axis per mode")
    return axes


def wigner_oracle(rho: DensityMatrix, x_axes, p_axes) -> WignerGrid:
    """Direct phase-space distribution via the displaced-parity form.

    W(x, p) = pi^-N Tr[rho prod_j D(2 alpha_j) Parity_j] with
    alpha = (x + i p)/sqrt(2); the marginal over p at angle 0 reproduces
    the position distribution.
    """
    _require_fock(rho)
    n = rho.n_modes
    x_axes = _as_axes(x_axes, n)
    p_axes = _as_axes(p_axes, n)
    kernels = []
    for j in range(n):
        lam = sqrt(2.0) * (x_axes[j][:, None] + 1j * p_axes[j][None, :])
        d = displacement_elements(lam.ravel(), rho.dims[j])
        parity = (-1.0) ** np.arange(rho.dims[j])
        kernels.append((d * parity[None, None, :]) / pi)
    eta_l, bra_l, ket_l = _char_letters(n)
    operands_spec = ",".join(eta_l[j] + bra_l[j] + ket_l[j] for j in range(n))
    expr = f"{operands_spec},{ket_l}{bra_l}->{eta_l}"
    flat = np.einsum(expr, *kernels, rho.as_tensor())
    # per-mode flattened (x, p) axes -> (x_1..x_N, p_1..p_N)
    paired = flat.reshape(tuple(s for j in range(n) for s in (len(x_axes[j]), len(p_axes[j]))))
    order = [2 * j for j in range(n)] + [2 * j + 1 for j in range(n)]
    values = np.transpose(paired, order).real
    return WignerGrid(x_axes=tuple(x_axes), p_axes=tuple(p_axes), values=values)


def fold_angle(omega: float, t: float) -> tuple[float, int]:
    """Reduce omega * t into [0, pi); returns (theta, wrap count)."""
    ratio = omega * t / pi
    wraps = floor(ratio + 1e-12)
    theta = (ratio - wraps) * pi
    return max(theta, 0.0), wraps


def evolve_and_record(
    rho: DensityMatrix,
    system: OscillatorSystem,
    times,
    grid: SpatialGrid,
    shots: int | None = None,
    seed: int = 0,
) -> MeasurementRecord:
    """Record position distributions (or multinomial samples) at the given times.

    Sampling is multinomial over the grid cells so records stay exact and
    reproducible; randomness comes from a counter-based generator split
    deterministically per time block.
    """
    times = np.asarray(times, dtype=float)
    if np.any(times < 0):
        raise ShapeError("oscillator records run over non-negative times")
    if system.n_modes != rho.n_modes:
        raise ShapeError("system mode count does not match the state")
    evaluator = _DistributionEvaluator(rho, grid)
    wraps = np.array(
        [[fold_angle(w, t)[1] for w in system.omegas] for t in times], dtype=np.int64
    ).reshape(times.size, system.n_modes)
    # evaluate at the true evolution phase; folding and the (-1)^fold sign
    # rule are bookkeeping for the reconstruction side
    phases = np.mod(np.outer(times, system.omegas), 2.0 * pi)
    weight_mesh = grid.weight_mesh()
    spawned = np.random.SeedSequence(seed).spawn(times.size) if shots else None
    blocks = []
    for i in range(times.size):
        prob = evaluator.distribution(phases[i])
        if shots is None:
            blocks.append(prob)
        else:
            cell_probs = (prob * weight_mesh).ravel()
            cell_probs = np.clip(cell_probs, 0.0, None)
            cell_probs /= cell_probs.sum()
            rng = np.random.Generator(np.random.Philox(spawned[i]))
            blocks.append(rng.multinomial(shots, cell_probs).reshape(grid.shape))
    payload = np.array(blocks) if blocks else np.zeros((0,) + grid.shape)
    return MeasurementRecord(
        system=system,
        grid=grid,
        times=times,
        fold_counts=wraps,
        payload_kind="distribution" if shots is None else "counts",
        payload=payload,
        seed=seed if shots else None,
        shots=shots,
    )


def record_at_angles(
    rho: DensityMatrix,
    system: OscillatorSystem,
    thetas,
    grid: SpatialGrid,
    shots: int | None = None,
    seed: int = 0,
) -> MeasurementRecord:
    """Record with independently driven per-mode angles.

    Models setups where each mode's quadrature phase is controlled
    directly (delayed measurement of a subsystem); block k carries the
    requested angles instead of folded times.
    """
    thetas = np.asarray(thetas, dtype=float)
    if thetas.ndim != 2 or thetas.shape[1] != rho.n_modes:
        raise ShapeError("thetas must have shape (n_blocks, n_modes)")
    if np.any(thetas < 0) or np.any(thetas >= pi):
        raise ShapeError("angles must lie in [0, pi)")
    evaluator = _DistributionEvaluator(rho, grid)
    weight_mesh = grid.weight_mesh()
    spawned = np.random.SeedSequence(seed).spawn(thetas.shape[0]) if shots else None
    blocks = []
    for i in range(thetas.shape[0]):
        prob = evaluator.distribution(thetas[i])
        if shots is None:
            blocks.append(prob)
        else:
            cell_probs = np.clip((prob * weight_mesh).ravel(), 0.0, None)
            cell_probs /= cell_probs.sum()
            rng = np.random.Generator(np.random.Philox(spawned[i]))
            blocks.append(rng.multinomial(shots, cell_probs).reshape(grid.shape))
    payload = np.array(blocks) if blocks else np.zeros((0,) + grid.shape)
    return MeasurementRecord(
        system=system,
        grid=grid,
        times=np.arange(thetas.shape[0], dtype=float),
        fold_counts=np.zeros(thetas.shape, dtype=np.int64),
        payload_kind="distribution" if shots is None else "counts",
        payload=payload,
        seed=seed if shots else None,
        shots=shots,
        thetas=thetas,
    )
