"""Truncated density matrices and the standard test-state constructors.

All states are immutable after construction and validated against three
invariants: hermiticity, unit trace and positive semidefiniteness.
Constructors renormalize after basis truncation and fail loudly when the
discarded mass exceeds TRUNCATION_TOLERANCE; silent truncation would
corrupt every round-trip test downstream.

Phase-space conventions: hbar = 1, x = (a + a^dag)/sqrt(2),
p = (a - a^dag)/(i sqrt(2)).  Mean vectors and covariance matrices are
ordered (x_1, p_1, x_2, p_2, ...).
"""

import json
from dataclasses import dataclass
from math import sqrt

import numpy as np
from scipy.linalg import eigh, svdvals
from scipy.special import gammaln

from .bases import BasisTag, FockBasis, basis_from_dict, basis_to_dict
from .errors import (
    IndexOutOfBasis,
    NotAQuantumState,
    ShapeError,
    TruncationError,
)

HERMITICITY_TOLERANCE = 1e-12
TRACE_TOLERANCE = 1e-10
POSITIVITY_TOLERANCE = 1e-10
TRUNCATION_TOLERANCE = 1e-6


@dataclass(frozen=True)
class DensityMatrix:
    """A truncated density matrix over a tensor product of tagged bases."""

    bases: tuple[BasisTag, ...]
    elements: np.ndarray

    def __post_init__(self):
        elements = np.asarray(self.elements, dtype=np.complex128)
        dim = int(np.prod([b.size for b in self.bases]))
        if elements.shape != (dim, dim):
            raise ShapeError(f"elements shape {elements.shape} does not match basis dimension {dim}")
        if np.max(np.abs(elements - elements.conj().T)) > HERMITICITY_TOLERANCE:
            raise NotAQuantumState("matrix is not hermitian")
        if abs(np.trace(elements).real - 1.0) > TRACE_TOLERANCE or abs(np.trace(elements).imag) > TRACE_TOLERANCE:
            raise NotAQuantumState("matrix does not have unit trace")
        if eigh(elements, eigvals_only=True, subset_by_index=[0, 0])[0] < -POSITIVITY_TOLERANCE:
            raise NotAQuantumState("matrix has a negative eigenvalue")
        elements.setflags(write=False)
        object.__setattr__(self, "elements", elements)

    @property
    def n_modes(self) -> int:
        return len(self.bases)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(b.size for b in self.bases)

    @property
    def dim(self) -> int:
        return self.elements.shape[0]

    def as_tensor(self) -> np.ndarray:
        """Reshape to (bra dims..., ket dims...)."""
        return self.elements.reshape(self.dims + self.dims)

    def purity(self) -> float:
        return float(np.real(np.trace(self.elements @ self.elements)))

    def to_dict(self) -> dict:
        interleaved = np.empty(2 * self.elements.size)
        interleaved[0::2] = self.elements.real.ravel()
        interleaved[1::2] = self.elements.imag.ravel()
        return {
            "bases": [basis_to_dict(b) for b in self.bases],
            "dims": list(self.dims),
            "elements": interleaved.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DensityMatrix":
        bases = tuple(basis_from_dict(d) for d in data["bases"])
        dim = int(np.prod([b.size for b in bases]))
        flat = np.asarray(data["elements"], dtype=float)
        if flat.size != 2 * dim * dim:
            raise ShapeError("element array length does not match dims")
        elements = (flat[0::2] + 1j * flat[1::2]).reshape(dim, dim)
        return cls(bases=bases, elements=elements)

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "DensityMatrix":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class StateMetrics:
    fidelity: float
    trace_distance: float
    elementwise_max_error: float


def _clean(matrix: np.ndarray) -> np.ndarray:
    """Hermitize and renormalize; tiny numerical dirt only."""
    matrix = 0.5 * (matrix + matrix.conj().T)
    return matrix / np.trace(matrix).real


def pure_state(amplitudes, basis: BasisTag | tuple[BasisTag, ...]) -> DensityMatrix:
    """Density matrix of a pure state given its amplitude vector."""
    bases = (basis,) if not isinstance(basis, tuple) else basis
    vec = np.asarray(amplitudes, dtype=np.complex128).ravel()
    dim = int(np.prod([b.size for b in bases]))
    if vec.size != dim:
        raise ShapeError(f"amplitude vector length {vec.size} does not match dimension {dim}")
    norm = np.linalg.norm(vec)
    if norm == 0:
        raise NotAQuantumState("zero amplitude vector")
    vec = vec / norm
    return DensityMatrix(bases=bases, elements=np.outer(vec, vec.conj()))


def mixture(weights, states: list[DensityMatrix]) -> DensityMatrix:
    weights = np.asarray(weights, dtype=float)
    if weights.size != len(states) or np.any(weights < 0):
        raise ShapeError("need one non-negative weight per state")
    bases = states[0].bases
    if any(s.bases != bases for s in states):
        raise ShapeError("mixture components must share a basis")
    weights = weights / weights.sum()
    elements = sum(w * s.elements for w, s in zip(weights, states))
    return DensityMatrix(bases=bases, elements=_clean(elements))


def make_fock(n: int, cutoff: int) -> DensityMatrix:
    """Pure number state |n><n| in a Fock basis of the given cutoff."""
    basis = FockBasis(cutoff)
    if not (0 <= n < cutoff):
        raise IndexOutOfBasis(f"n = {n} outside Fock basis of cutoff {cutoff}")
    vec = np.zeros(cutoff, dtype=np.complex128)
    vec[n] = 1.0
    return pure_state(vec, basis)


def make_coherent(alpha: complex, cutoff: int) -> DensityMatrix:
    """Truncated coherent state, renormalized; errors on heavy truncation."""
    basis = FockBasis(cutoff)
    n = np.arange(cutoff)
    log_amplitude = -0.5 * abs(alpha) ** 2 + n * np.log(abs(alpha)) - 0.5 * gammaln(n + 1) if alpha != 0 else None
    if alpha == 0:
        vec = np.zeros(cutoff, dtype=np.complex128)
        vec[0] = 1.0
    else:
        phase = np.exp(1j * n * np.angle(alpha))
        vec = np.exp(log_amplitude) * phase
    lost = 1.0 - float(np.sum(np.abs(vec) ** 2))
    if lost > TRUNCATION_TOLERANCE:
        raise TruncationError(f"coherent state loses {lost:.3e} of its mass at cutoff {cutoff}")
    return pure_state(vec, basis)


def make_thermal(nbar: float, cutoff: int) -> DensityMatrix:
    """Thermal state with mean occupation nbar, renormalized geometric diagonal."""
    basis = FockBasis(cutoff)
    if nbar < 0:
        raise NotAQuantumState("mean occupation must be non-negative")
    if nbar == 0:
        return make_fock(0, cutoff)
    ratio = nbar / (1.0 + nbar)
    tail = ratio**cutoff
    if tail > TRUNCATION_TOLERANCE:
        raise TruncationError(f"thermal tail beyond cutoff is {tail:.3e}")
    probs = (1 - ratio) * ratio ** np.arange(cutoff)
    probs = probs / probs.sum()
    return DensityMatrix(bases=(basis,), elements=np.diag(probs.astype(np.complex128)))


def symplectic_form(n_modes: int) -> np.ndarray:
    """Symplectic form in (x_1, p_1, x_2, p_2, ...) ordering."""
    j = np.zeros((2 * n_modes, 2 * n_modes))
    for k in range(n_modes):
        j[2 * k, 2 * k + 1] = 1.0
        j[2 * k + 1, 2 * k] = -1.0
    return j


def make_gaussian(mean, cov, cutoff: int) -> DensityMatrix:
    """Fock-basis Gaussian state with the given first and second moments.

    mean is a length-2N vector and cov a 2N x 2N symmetric matrix in
    (x_1, p_1, ...) ordering; the vacuum is mean 0, cov = I/2.  The matrix
    elements come from the holomorphic (Bargmann) kernel of the state,
    which for Gaussians is exp(quadratic), evaluated through the stable
    normalized derivative recursion.

    The construction is verified against the requested moments and raises
    TruncationError when the cutoff clips them by more than 1e-6.
    """
    mean = np.asarray(mean, dtype=float).ravel()
    cov = np.asarray(cov, dtype=float)
    if mean.size % 2 != 0:
        raise ShapeError("mean must have length 2N")
    n_modes = mean.size // 2
    if cov.shape != (2 * n_modes, 2 * n_modes):
        raise ShapeError("covariance shape does not match mean length")
    if np.max(np.abs(cov - cov.T)) > 1e-10:
        raise NotAQuantumState("covariance must be symmetric")
    j = symplectic_form(n_modes)
    validity = eigh(cov + 0.5j * j, eigvals_only=True)
    if validity[0] < -POSITIVITY_TOLERANCE:
        raise NotAQuantumState("covariance violates the uncertainty relation")

    # Gaussian kernel F(zbar, w) = C exp(zeta^T A zeta / 2 + B^T zeta) with
    # zeta = (zbar_1..zbar_N, w_1..w_N); derived from the Weyl characteristic
    # function of the state.
    m = j.T @ cov @ j + 0.5 * np.eye(2 * n_modes)
    m_inv = np.linalg.inv(m)
    t = np.zeros((2 * n_modes, 2 * n_modes), dtype=np.complex128)
    inv_sqrt2 = 1.0 / sqrt(2.0)
    for k in range(n_modes):
        t[2 * k, k] = -inv_sqrt2
        t[2 * k, n_modes + k] = inv_sqrt2
        t[2 * k + 1, k] = -1j * inv_sqrt2
        t[2 * k + 1, n_modes + k] = -1j * inv_sqrt2
    x = np.zeros((2 * n_modes, 2 * n_modes))
    x[:n_modes, n_modes:] = np.eye(n_modes)
    x[n_modes:, :n_modes] = np.eye(n_modes)
    a_mat = t.T @ m_inv @ t + x
    a_mat = 0.5 * (a_mat + a_mat.T)
    lin = 1j * (j.T @ mean)
    b_vec = t.T @ m_inv @ lin
    c0 = np.exp(-0.5 * lin @ m_inv @ lin) / np.sqrt(np.linalg.det(m))

    gt = _hermite_kernel(a_mat, b_vec, complex(c0), (cutoff,) * (2 * n_modes))
    dim = cutoff**n_modes
    # axes (m_1..m_N, n_1..n_N) -> (m, n) matrix
    rho = gt.reshape(dim, dim)
    kept = np.trace(rho).real
    if 1.0 - kept > TRUNCATION_TOLERANCE:
        raise TruncationError(f"gaussian state loses {1.0 - kept:.3e} of its mass at cutoff {cutoff}")
    state = DensityMatrix(bases=(FockBasis(cutoff),) * n_modes, elements=_clean(rho))
    got_mean, got_cov = first_second_moments(state)
    err = max(np.max(np.abs(got_mean - mean)), np.max(np.abs(got_cov - cov)))
    if err > 1e-6:
        raise TruncationError(f"constructed moments deviate by {err:.3e}; raise the cutoff")
    return state


def _hermite_kernel(a_mat, b_vec, c0, shape):
    """Normalized derivative table G_k / sqrt(k!) of C exp(z A z/2 + B z).

    Recursion per index i: G[k + e_i] = (B_i G[k] + sum_j A_ij sqrt(k_j)
    G[k - e_j]) / sqrt(k_i + 1), which keeps every entry bounded by 1 for a
    valid state.
    """
    rank = len(shape)
    table = np.zeros(shape, dtype=np.complex128)
    table[(0,) * rank] = c0
    for idx in np.ndindex(*shape):
        if not any(idx):
            continue
        i = next(axis for axis, v in enumerate(idx) if v > 0)
        prev = list(idx)
        prev[i] -= 1
        acc = b_vec[i] * table[tuple(prev)]
        for jdx in range(rank):
            if prev[jdx] == 0:
                continue
            prev2 = list(prev)
            prev2[jdx] -= 1
            acc += a_mat[i, jdx] * sqrt(prev[jdx]) * table[tuple(prev2)]
        table[idx] = acc / sqrt(idx[i])
    return table


def tensor_product(a: DensityMatrix, b: DensityMatrix) -> DensityMatrix:
    return DensityMatrix(bases=a.bases + b.bases, elements=np.kron(a.elements, b.elements))


def partial_trace(rho: DensityMatrix, keep) -> DensityMatrix:
    """Trace out all modes not in keep (0-based mode indices)."""
    keep = sorted(set(int(k) for k in keep))
    if not keep:
        raise ShapeError("must keep at least one mode")
    if any(k < 0 or k >= rho.n_modes for k in keep):
        raise IndexOutOfBasis(f"mode indices {keep} outside 0..{rho.n_modes - 1}")
    n = rho.n_modes
    tensor = rho.as_tensor()
    dropped = [m for m in range(n) if m not in keep]
    for count, mode in enumerate(dropped):
        axis = mode - count  # axes shift as traced modes disappear
        rank = tensor.ndim // 2
        tensor = np.trace(tensor, axis1=axis, axis2=axis + rank)
    dim = int(np.prod([rho.dims[k] for k in keep]))
    bases = tuple(rho.bases[k] for k in keep)
    return DensityMatrix(bases=bases, elements=tensor.reshape(dim, dim))


def _psd_sqrt(matrix: np.ndarray) -> np.ndarray:
    vals, vecs = eigh(matrix)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.conj().T


def compare(a: DensityMatrix, b: DensityMatrix) -> StateMetrics:
    """Uhlmann fidelity, trace distance and max elementwise deviation."""
    if a.bases != b.bases:
        raise ShapeError("states live in different bases")
    sqrt_a = _psd_sqrt(a.elements)
    fid = float(np.sum(svdvals(sqrt_a @ _psd_sqrt(b.elements))) ** 2)
    fid = min(max(fid, 0.0), 1.0)
    diff_eigs = eigh(a.elements - b.elements, eigvals_only=True)
    tdist = float(0.5 * np.sum(np.abs(diff_eigs)))
    return StateMetrics(
        fidelity=fid,
        trace_distance=min(max(tdist, 0.0), 1.0),
        elementwise_max_error=float(np.max(np.abs(a.elements - b.elements))),
    )


def ladder_matrix(dim: int) -> np.ndarray:
    """Annihilation operator in a truncated Fock basis."""
    return np.diag(np.sqrt(np.arange(1, dim)), k=1).astype(np.complex128)


def mode_operator_expectation(rho: DensityMatrix, operators: dict[int, np.ndarray]) -> complex:
    """Tr(rho * O_j1 x O_j2 x ...) for per-mode operators, identity elsewhere."""
    tensor = rho.as_tensor()
    n = rho.n_modes
    for mode, op in operators.items():
        if not (0 <= mode < n):
            raise IndexOutOfBasis(f"mode {mode} outside 0..{n - 1}")
        # contract ket index of the mode with the operator
        tensor = np.tensordot(tensor, np.asarray(op, dtype=np.complex128), axes=([n + mode], [0]))
        tensor = np.moveaxis(tensor, -1, n + mode)
    # full trace
    for _ in range(n):
        tensor = np.trace(tensor, axis1=0, axis2=tensor.ndim // 2)
    return complex(tensor)


def first_second_moments(rho: DensityMatrix) -> tuple[np.ndarray, np.ndarray]:
    """Mean vector and symmetrized covariance in (x_1, p_1, ...) ordering."""
    if not all(isinstance(b, FockBasis) for b in rho.bases):
        raise ShapeError("moments are defined for Fock-basis states")
    n = rho.n_modes
    quads = []
    for mode in range(n):
        a = ladder_matrix(rho.dims[mode])
        quads.append((mode, (a + a.conj().T) / sqrt(2.0)))  # x
        quads.append((mode, (a - a.conj().T) / (1j * sqrt(2.0))))  # p
    mean = np.array([mode_operator_expectation(rho, {m: q}).real for m, q in quads])
    cov = np.zeros((2 * n, 2 * n))
    for i, (mi, qi) in enumerate(quads):
        for k in range(i, 2 * n):
            mk, qk = quads[k]
            if mi == mk:
                sym = mode_operator_expectation(rho, {mi: 0.5 * (qi @ qk + qk @ qi)}).real
            else:
                sym = mode_operator_expectation(rho, {mi: qi, mk: qk}).real
            cov[i, k] = cov[k, i] = sym - mean[i] * mean[k]
    return mean, cov


def project_to_physical(matrix: np.ndarray) -> tuple[np.ndarray, float]:
    """Closest unit-trace PSD matrix (2-norm on the spectrum) and the distance moved.

    Standard eigenvalue water-filling: hermitize, rescale the trace, then
    shift the clipped spectrum so the negative mass is absorbed by the
    remaining eigenvalues.
    """
    matrix = 0.5 * (matrix + matrix.conj().T)
    trace = np.trace(matrix).real
    if abs(trace) < 1e-12:
        raise NotAQuantumState("matrix has (near) zero trace")
    matrix = matrix / trace
    vals, vecs = eigh(matrix)
    if vals[0] >= 0:
        return matrix, 0.0
    fixed = np.zeros_like(vals)
    order = np.argsort(vals)[::-1]  # descending
    acc = 0.0
    cut = len(vals)
    sorted_vals = vals[order]
    while cut > 0 and sorted_vals[cut - 1] + acc / cut < 0:
        acc += sorted_vals[cut - 1]
        cut -= 1
    fixed_sorted = np.zeros_like(vals)
    fixed_sorted[:cut] = sorted_vals[:cut] + acc / cut
    fixed[order] = fixed_sorted
    projected = (vecs * fixed) @ vecs.conj().T
    return projected, float(np.linalg.norm(projected - matrix))


def pad_fock(rho: DensityMatrix, cutoff: int) -> DensityMatrix:
    """Embed a Fock-basis state into a larger cutoff (zero padding)."""
    if not all(isinstance(b, FockBasis) for b in rho.bases):
        raise ShapeError("padding is defined for Fock-basis states")
    if any(cutoff < b.cutoff for b in rho.bases):
        raise ShapeError("new cutoff must not shrink the basis")
    n = rho.n_modes
    tensor = rho.as_tensor()
    padded = np.zeros((cutoff,) * (2 * n), dtype=np.complex128)
    slices = tuple(slice(0, d) for d in rho.dims) * 2
    padded[slices] = tensor
    dim = cutoff**n
    return DensityMatrix(bases=(FockBasis(cutoff),) * n, elements=padded.reshape(dim, dim))
