"""Free particle on a ring and particle in a box: forward models and inversion.

Ring eigenstates all have flat position densities, so the energy diagonal
is invisible to position measurements: only off-diagonal matrix elements
come back, with Cauchy-Schwarz intervals constraining the rest.  Box
eigenstates have distinct densities and the full matrix is recoverable,
the diagonal through the time-averaged density projected on cos(nu pi x/L)
(with a sign flip, since the constant part of each eigenstate density
carries no index).

Multi-mode inversion replaces the per-mode Fourier selectors by one long
time average; the energy scales Omega_j must then be incommensurable, and
finite observation windows leave a certified leakage bound of
1 / (Delta_min * T) from the nearest competing energy difference.
"""

import itertools
from dataclasses import dataclass, field, replace
from math import pi, sqrt

import numpy as np
from scipy.linalg import eigh

from . import rational
from .bases import BasisTag, BoxSineBasis, PlaneWaveBasis
from .errors import (
    BasisError,
    CoverageError,
    DiagonalUnrecoverable,
    IncommensurabilityError,
    InconsistentData,
    IndexDomainError,
    IndexOutOfBasis,
    InsufficientTimeSpan,
    ParityError,
    ShapeError,
)
from .grids import SpatialGrid
from .records import MeasurementRecord
from .results import ReconstructedState
from .states import DensityMatrix, project_to_physical
from .systems import BoxSystem, PeriodicSystem

TIME_OVERSAMPLE = 8
GRID_POINTS_PER_INDEX = 16


@dataclass(frozen=True)
class IndexPair:
    """Sum/difference index pair (nu, beta) selecting rho((nu+beta)/2, (nu-beta)/2)."""

    nu: tuple[int, ...]
    beta: tuple[int, ...]

    def __post_init__(self):
        nu = (self.nu,) if isinstance(self.nu, int) else tuple(int(v) for v in self.nu)
        beta = (self.beta,) if isinstance(self.beta, int) else tuple(int(v) for v in self.beta)
        object.__setattr__(self, "nu", nu)
        object.__setattr__(self, "beta", beta)
        if len(nu) != len(beta):
            raise ShapeError("nu and beta must have equal length")

    @property
    def n_modes(self) -> int:
        return len(self.nu)

    @property
    def parity_valid(self) -> bool:
        return all((n - b) % 2 == 0 for n, b in zip(self.nu, self.beta))

    @property
    def row_col(self) -> tuple[tuple[int, ...], tuple[int, ...]]:
        row = tuple((n + b) // 2 for n, b in zip(self.nu, self.beta))
        col = tuple((n - b) // 2 for n, b in zip(self.nu, self.beta))
        return row, col


# ---------------------------------------------------------------------------
# forward models


def _basis_functions(basis: BasisTag, axis) -> tuple[np.ndarray, np.ndarray]:
    """Returns (B[n, x], energy_index[n]) for one mode."""
    x = axis.points
    length = axis.x_max - axis.x_min
    labels = np.array(basis.labels())
    if isinstance(basis, PlaneWaveBasis):
        funcs = np.exp(2j * pi * np.outer(labels, x) / length) / sqrt(length)
    elif isinstance(basis, BoxSineBasis):
        funcs = sqrt(2.0 / length) * np.sin(pi * np.outer(labels, x) / length)
    else:
        raise BasisError(f"unsupported basis {basis!r}")
    return funcs, labels.astype(float) ** 2


class _SemiEvaluator:
    def __init__(self, rho: DensityMatrix, system, grid: SpatialGrid, basis_type):
        if not all(isinstance(b, basis_type) for b in rho.bases):
            raise BasisError(f"state must be expressed in {basis_type.__name__}")
        if grid.n_modes != rho.n_modes or system.n_modes != rho.n_modes:
            raise ShapeError("system, grid and state disagree on mode count")
        self.funcs = []
        self.freqs = []
        for j, (basis, axis) in enumerate(zip(rho.bases, grid.axes)):
            if abs(axis.x_min) > 1e-12 or abs(axis.x_max - system.lengths[j]) > 1e-9:
                raise ShapeError(f"axis {j} must span [0, L] of the system")
            funcs, n_sq = _basis_functions(basis, axis)
            self.funcs.append(funcs)
            self.freqs.append(system.omegas[j] * n_sq)
        self.grid = grid
        vals, vecs = eigh(rho.elements)
        keep = vals > 1e-14
        self.weights = vals[keep]
        self.vectors = [vecs[:, i].reshape(rho.dims) for i in np.nonzero(keep)[0]]

    def distribution(self, t: float) -> np.ndarray:
        amps = [
            self.funcs[j].T * np.exp(-1j * self.freqs[j] * t)[None, :]
            for j in range(len(self.funcs))
        ]
        total = np.zeros(self.grid.shape)
        for weight, vec in zip(self.weights, self.vectors):
            wave = vec
            for amp in amps:
                wave = np.tensordot(wave, amp, axes=([0], [1]))
            total += weight * np.abs(wave) ** 2
        return total


def _forward(rho, system, times, grid, basis_type) -> MeasurementRecord:
    evaluator = _SemiEvaluator(rho, system, grid, basis_type)
    times = np.asarray(times, dtype=float)
    payload = np.stack([evaluator.distribution(t) for t in times]) if times.size else np.zeros(
        (0,) + grid.shape
    )
    return MeasurementRecord(
        system=system,
        grid=grid,
        times=times,
        fold_counts=np.zeros((times.size, system.n_modes), dtype=np.int64),
        payload_kind="distribution",
        payload=payload,
    )


def periodic_forward(rho: DensityMatrix, system: PeriodicSystem, times, grid: SpatialGrid) -> MeasurementRecord:
    """Exact ring densities: diagonal states stay flat at 1/prod(L) forever."""
    return _forward(rho, system, times, grid, PlaneWaveBasis)


def box_forward(rho: DensityMatrix, system: BoxSystem, times, grid: SpatialGrid) -> MeasurementRecord:
    """Exact box densities; they vanish at both walls."""
    return _forward(rho, system, times, grid, BoxSineBasis)


def periodic_grid(system: PeriodicSystem, n_max) -> SpatialGrid:
    n_max = _per_mode(n_max, system.n_modes)
    return SpatialGrid.periodic(system.lengths, [GRID_POINTS_PER_INDEX * max(2, v) for v in n_max])


def box_grid(system: BoxSystem, n_max) -> SpatialGrid:
    n_max = _per_mode(n_max, system.n_modes)
    return SpatialGrid.box(system.lengths, [GRID_POINTS_PER_INDEX * max(2, v) + 1 for v in n_max])


def _per_mode(value, n_modes):
    if np.isscalar(value):
        return (int(value),) * n_modes
    out = tuple(int(v) for v in value)
    if len(out) != n_modes:
        raise ShapeError("per-mode value count mismatch")
    return out


def periodic_sampling_times(system: PeriodicSystem, n_max: int, n_periods: int = 1, mode: int = 0):
    """Equispaced lattice over whole recurrence periods, alias-free for the window."""
    harmonics = n_max * n_max
    per_period = TIME_OVERSAMPLE * max(1, harmonics)
    period = system.period(mode)
    total = n_periods * per_period
    return np.arange(total) * (period / per_period)


def box_sampling_times(system: BoxSystem, n_max: int, n_periods: int = 1, mode: int = 0):
    harmonics = max(1, n_max * n_max - 1)
    per_period = TIME_OVERSAMPLE * harmonics
    period = system.period(mode)
    total = n_periods * per_period
    return np.arange(total) * (period / per_period)


def symmetric_sampling_times(t_cap: float, dt: float):
    """Midpoint lattice over [-t_cap, t_cap]; chunks of it concatenate exactly."""
    m = max(2, int(round(2.0 * t_cap / dt)))
    return -t_cap + (np.arange(m) + 0.5) * (2.0 * t_cap / m)


def suggest_nd_dt(system, n_max, oversample: int = 4) -> float:
    """Time step resolving every energy difference in the index window."""
    n_max = _per_mode(n_max, system.n_modes)
    f_max = sum(w * 2.0 * v * v for w, v in zip(system.omegas, n_max))
    return 2.0 * pi / (oversample * f_max)


# ---------------------------------------------------------------------------
# partial matrices


@dataclass(frozen=True)
class DiagonalBounds:
    lower: np.ndarray
    upper: np.ndarray


@dataclass(frozen=True)
class PartialDensityMatrix:
    """Matrix with per-entry recovery status; diagonals may carry intervals."""

    bases: tuple[BasisTag, ...]
    values: np.ndarray
    known: np.ndarray
    leakage_bounds: dict = field(default_factory=dict)
    diagonal_bounds: DiagonalBounds | None = None

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(b.size for b in self.bases)

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims))

    def flat_index(self, labels) -> int:
        labels = (labels,) if isinstance(labels, int) else tuple(labels)
        per_mode = tuple(b.index_of(v) for b, v in zip(self.bases, labels))
        return int(np.ravel_multi_index(per_mode, self.dims))

    def entry(self, row_labels, col_labels):
        i, j = self.flat_index(row_labels), self.flat_index(col_labels)
        return self.values[i, j] if self.known[i, j] else None

    def with_diagonal_bounds(self, bounds: "DiagonalBounds") -> "PartialDensityMatrix":
        return replace(self, diagonal_bounds=bounds)

    def to_dict(self) -> dict:
        from .bases import basis_to_dict

        entries = []
        for i in range(self.dim):
            for j in range(self.dim):
                if self.known[i, j]:
                    status = "known"
                elif i == j and self.diagonal_bounds is not None:
                    status = f"bounded[{self.diagonal_bounds.lower[i]!r},{self.diagonal_bounds.upper[i]!r}]"
                else:
                    status = "unknown"
                entries.append(
                    {
                        "row": i,
                        "col": j,
                        "value": [self.values[i, j].real, self.values[i, j].imag]
                        if self.known[i, j]
                        else None,
                        "status": status,
                    }
                )
        return {"bases": [basis_to_dict(b) for b in self.bases], "entries": entries}


# ---------------------------------------------------------------------------
# shared reconstruction plumbing


def _as_records(records):
    if isinstance(records, MeasurementRecord):
        return [records]
    records = list(records)
    if not records:
        raise ShapeError("need at least one record")
    return records


def _check_lattice(records, expect_period=None, min_per_period=None):
    """All blocks concatenated must form one uniform time lattice."""
    times = np.concatenate([r.times for r in records])
    if times.size < 2:
        raise CoverageError("need at least two time samples")
    dt = np.diff(times)
    if np.max(dt) - np.min(dt) > 1e-9 * np.max(np.abs(dt)):
        raise CoverageError("time samples must form a uniform lattice")
    step = float(np.mean(dt))
    span = times[-1] - times[0] + step
    if expect_period is not None:
        periods = span / expect_period
        if abs(periods - round(periods)) > 1e-6:
            raise CoverageError(
                f"record spans {periods:.6f} recurrence periods; need a whole number"
            )
        per_period = times.size / round(periods)
        if min_per_period is not None and per_period < min_per_period:
            raise CoverageError(
                f"{per_period:.0f} samples per period alias the index window; need {min_per_period}"
            )
    return times, step


def _validate_pairs(pairs, n_modes, kind):
    out = []
    for pair in pairs:
        if not isinstance(pair, IndexPair):
            pair = IndexPair(*pair)
        if pair.n_modes != n_modes:
            raise ShapeError(f"pair {pair} does not match {n_modes} modes")
        if kind == "periodic":
            if any(b == 0 for b in pair.beta):
                raise DiagonalUnrecoverable(
                    "beta = 0 projects onto the flat eigenstate densities and always returns "
                    "the trace; ring diagonals are not recoverable from position data"
                )
        else:
            if any(n <= abs(b) for n, b in zip(pair.nu, pair.beta)):
                raise IndexDomainError(f"box pairs need nu > |beta|, got nu={pair.nu} beta={pair.beta}")
        if not pair.parity_valid:
            raise ParityError(f"nu = {pair.nu} and beta = {pair.beta} differ in parity")
        out.append(pair)
    return out


def _window_from_pairs(pairs):
    return max(max(abs(r), abs(c)) for p in pairs for r, c in zip(*p.row_col))


def incommensurability_check(values, pairs=None, n_max=None, kind="periodic"):
    """Pairwise rationality of an energy-scale list, plus window Delta_min.

    values may be the Omega scales themselves or the (m L^2) products they
    derive from; the classification is identical.
    """
    values = [float(v) for v in values]
    classifications = []
    warnings = []
    commensurable = []
    for i in range(len(values)):
        for j in range(i + 1, len(values)):
            cls = rational.classify_pair(values[i], values[j])
            classifications.append((i, j, cls))
            if cls.is_rational:
                commensurable.append((i, j))
                if cls.approximate:
                    warnings.append(
                        f"values {i} and {j} are within {cls.error:.1e} of the ratio "
                        f"{cls.numerator}/{cls.denominator}; treated as commensurable at the "
                        "denominator cap"
                    )
    delta_min = None
    if pairs is not None and n_max is not None and not commensurable:
        delta_min = {}
        for pair in pairs:
            pair = pair if isinstance(pair, IndexPair) else IndexPair(*pair)
            delta_min[pair] = _delta_min(values, pair, _per_mode(n_max, pair.n_modes), kind)
    return IncommensurabilityReport(
        classifications=tuple(classifications),
        commensurable_pairs=tuple(commensurable),
        warnings=tuple(warnings),
        delta_min=delta_min,
    )


@dataclass(frozen=True)
class IncommensurabilityReport:
    classifications: tuple
    commensurable_pairs: tuple
    warnings: tuple
    delta_min: dict | None = None

    @property
    def all_incommensurable(self) -> bool:
        return not self.commensurable_pairs


def _mode_competitors(nu_j, beta_j, n_max_j, kind):
    """(n_bar, delta_n) terms of one mode that survive its spatial projection."""
    out = set()
    if kind == "periodic":
        # e^(-2 pi i beta x / L) projection pins delta_n = beta exactly
        for n in range(-n_max_j, n_max_j + 1):
            np_ = n - beta_j
            if -n_max_j <= np_ <= n_max_j:
                out.add((n + np_, beta_j))
    else:
        k = abs(beta_j) if beta_j != 0 else nu_j
        # cos(k pi x / L) picks the difference-index cosine at |delta_n| = k ...
        for delta in {k, -k}:
            for n in range(1, n_max_j + 1):
                np_ = n - delta
                if 1 <= np_ <= n_max_j:
                    out.add((n + np_, delta))
        # ... and the sum-index cosine at n_bar = k
        for n in range(1, n_max_j + 1):
            np_ = k - n
            if 1 <= np_ <= n_max_j:
                out.add((k, n - np_))
    return sorted(out)


def _delta_min(omegas, pair: IndexPair, n_max, kind) -> float:
    target = sum(w * n * b for w, n, b in zip(omegas, pair.nu, pair.beta))
    per_mode = [
        _mode_competitors(pair.nu[j], pair.beta[j], n_max[j], kind)
        for j in range(pair.n_modes)
    ]
    best = np.inf
    target_term = tuple((pair.nu[j], pair.beta[j]) for j in range(pair.n_modes))
    for combo in itertools.product(*per_mode):
        if combo == target_term:
            continue
        freq = sum(w * nb * dn for w, (nb, dn) in zip(omegas, combo))
        gap = abs(freq - target)
        if gap < best:
            best = gap
    return float(best)


# ---------------------------------------------------------------------------
# one-dimensional reconstruction


def _offdiagonal_pairs_1d(basis: PlaneWaveBasis):
    pairs = []
    for n in basis.labels():
        for m in basis.labels():
            if n < m:
                pairs.append(IndexPair((n + m,), (n - m,)))
    return pairs


def periodic_recon_1d(record: MeasurementRecord, system: PeriodicSystem = None, pairs=None, n_max=None) -> PartialDensityMatrix:
    """Off-diagonal ring matrix elements by double Fourier quadrature.

    Each requested pair (nu, beta) comes from projecting the record on
    exp(-2 pi i beta x / L) in space and exp(i Omega nu beta t) over whole
    recurrence periods in time.  beta = 0 requests raise
    DiagonalUnrecoverable; the diagonal stays flagged unknown.
    """
    system = system or record.system
    if not isinstance(system, PeriodicSystem) or system.n_modes != 1:
        raise BasisError("one-mode ring system required")
    if record.payload_kind != "distribution":
        raise ShapeError("exact quadrature reconstruction needs distribution records")
    if pairs is None:
        if n_max is None:
            raise ShapeError("give pairs or an index window n_max")
        basis = PlaneWaveBasis(-int(n_max), int(n_max))
        pairs = _offdiagonal_pairs_1d(basis)
    pairs = _validate_pairs(pairs, 1, "periodic")
    if n_max is None:
        n_max = _window_from_pairs(pairs)
    basis = PlaneWaveBasis(-int(n_max), int(n_max))
    _check_lattice([record], expect_period=system.period(0), min_per_period=2 * n_max * n_max + 1)
    length = system.lengths[0]
    x = record.grid.points(0)
    weights = record.grid.weights(0)
    omega = system.omegas[0]
    payload = record.payload
    values = np.zeros((basis.size, basis.size), dtype=np.complex128)
    known = np.zeros((basis.size, basis.size), dtype=bool)
    for pair in pairs:
        (row,), (col,) = pair.row_col
        if max(abs(row), abs(col)) > n_max:
            raise IndexOutOfBasis(f"pair {pair} outside the declared window {n_max}")
        nu, beta = pair.nu[0], pair.beta[0]
        proj = payload @ (weights * np.exp(-2j * pi * beta * x / length))
        phases = np.exp(1j * omega * nu * beta * record.times)
        val = complex(np.mean(phases * proj))
        i, j = basis.index_of(row), basis.index_of(col)
        values[i, j] = val
        values[j, i] = np.conj(val)
        known[i, j] = known[j, i] = True
    return PartialDensityMatrix(bases=(basis,), values=values, known=known)


def _box_pair_value(record, system, pair: IndexPair, mode_axes):
    """Projection value for one box pair, any number of modes."""
    signs = 1.0
    proj = record.payload
    for j in range(pair.n_modes):
        x, weights, length = mode_axes[j]
        k = abs(pair.beta[j]) if pair.beta[j] != 0 else pair.nu[j]
        if pair.beta[j] == 0:
            signs = -signs
        kernel = weights * np.cos(pi * k * x / length)
        proj = np.tensordot(proj, kernel, axes=([1], [0]))
    freq = sum(w * n * b for w, n, b in zip(system.omegas, pair.nu, pair.beta))
    phases = np.exp(1j * freq * record.times)
    return signs * 2.0**pair.n_modes * complex(np.mean(phases * proj))


def _box_window_pairs(n_max_modes):
    ranges = [range(1, v + 1) for v in n_max_modes]
    pairs = []
    for row in itertools.product(*ranges):
        for col in itertools.product(*ranges):
            if row <= col:
                pairs.append(
                    IndexPair(
                        tuple(r + c for r, c in zip(row, col)),
                        tuple(r - c for r, c in zip(row, col)),
                    )
                )
    return pairs


def box_recon_1d(record: MeasurementRecord, system: BoxSystem = None, pairs=None, n_max=None):
    """Box matrix elements, diagonal included, by cosine projection.

    Off-diagonals project on cos(beta pi x / L) with the matching time
    frequency; the diagonal projects the time-averaged density on
    cos(nu pi x / L), whose amplitude is carried (negated) by the
    sum-index cosine of each eigenstate density.

    With the default full index window the assembled matrix is projected
    onto the physical cone and returned as a ReconstructedState; an
    explicit pair subset comes back as a PartialDensityMatrix.
    """
    system = system or record.system
    if not isinstance(system, BoxSystem) or system.n_modes != 1:
        raise BasisError("one-mode box system required")
    if record.payload_kind != "distribution":
        raise ShapeError("exact quadrature reconstruction needs distribution records")
    full_window = pairs is None
    if pairs is None:
        if n_max is None:
            raise ShapeError("give pairs or an index window n_max")
        pairs = _box_window_pairs((int(n_max),))
    pairs = _validate_pairs(pairs, 1, "box")
    if n_max is None:
        n_max = _window_from_pairs(pairs)
    basis = BoxSineBasis(int(n_max))
    _check_lattice(
        [record],
        expect_period=system.period(0),
        min_per_period=2 * max(1, n_max * n_max - 1) + 1,
    )
    axes = [(record.grid.points(0), record.grid.weights(0), system.lengths[0])]
    values = np.zeros((basis.size, basis.size), dtype=np.complex128)
    known = np.zeros((basis.size, basis.size), dtype=bool)
    for pair in pairs:
        (row,), (col,) = pair.row_col
        if not (1 <= row <= n_max and 1 <= col <= n_max):
            raise IndexOutOfBasis(f"pair {pair} outside the box window {n_max}")
        val = _box_pair_value(record, system, pair, axes)
        i, j = basis.index_of(row), basis.index_of(col)
        values[i, j] = val
        values[j, i] = np.conj(val)
        known[i, j] = known[j, i] = True
    if not full_window:
        return PartialDensityMatrix(bases=(basis,), values=values, known=known)
    projected, distance = project_to_physical(values)
    state = DensityMatrix(bases=(basis,), elements=projected)
    return ReconstructedState(state=state, projection_distance=distance)


# ---------------------------------------------------------------------------
# multi-mode reconstruction


def _check_incommensurable(system):
    report = incommensurability_check(system.omegas)
    if not report.all_incommensurable:
        raise IncommensurabilityError(
            f"energy scales {system.omegas} have commensurable pairs "
            f"{report.commensurable_pairs}; one time average cannot separate the modes"
            + (" " + "; ".join(report.warnings) if report.warnings else "")
        )


def _nd_time_setup(records, t_cap):
    times = np.concatenate([r.times for r in records])
    _, step = _check_lattice(records)
    if abs(times[0] + t_cap) > step or abs(times[-1] - t_cap) > step:
        raise CoverageError(f"record must span [-{t_cap}, {t_cap}]")
    if abs(times[0] + times[-1]) > step:
        raise CoverageError("time lattice must be symmetric about t = 0")
    t_eff = 0.5 * (times[-1] - times[0] + step)
    return t_eff


def periodic_recon_nd(records, system: PeriodicSystem, pairs, t_cap, n_max=None, tolerance=None) -> PartialDensityMatrix:
    """Ring matrix elements from one finite symmetric time window.

    Every value carries the certified cross-term bound
    1 / (Delta_min * T); pass a tolerance to turn an insufficient window
    into an error instead of a large bound.
    """
    records = _as_records(records)
    if not isinstance(system, PeriodicSystem):
        raise BasisError("ring system required")
    _check_incommensurable(system)
    pairs = _validate_pairs(pairs, system.n_modes, "periodic")
    if n_max is None:
        n_max = _window_from_pairs(pairs)
    n_max_modes = _per_mode(n_max, system.n_modes)
    bases = tuple(PlaneWaveBasis(-v, v) for v in n_max_modes)
    t_eff = _nd_time_setup(records, t_cap)
    dims = tuple(b.size for b in bases)
    dim = int(np.prod(dims))
    values = np.zeros((dim, dim), dtype=np.complex128)
    known = np.zeros((dim, dim), dtype=bool)
    # group the spatial projections by the distinct per-mode indices so each
    # record is contracted once, not once per pair
    beta_sets = [sorted({p.beta[j] for p in pairs}) for j in range(system.n_modes)]
    beta_pos = [{b: i for i, b in enumerate(bs)} for bs in beta_sets]
    sums = {pair: 0.0 + 0.0j for pair in pairs}
    count = 0
    for rec in records:
        if rec.payload_kind != "distribution":
            raise ShapeError("exact quadrature reconstruction needs distribution records")
        table = rec.payload
        for j in range(system.n_modes):
            x = rec.grid.points(j)
            w = rec.grid.weights(j)
            kernels = np.stack(
                [w * np.exp(-2j * pi * b * x / system.lengths[j]) for b in beta_sets[j]],
                axis=1,
            )
            table = np.tensordot(table, kernels, axes=([1], [0]))
        for pair in pairs:
            idx = tuple(beta_pos[j][pair.beta[j]] for j in range(pair.n_modes))
            freq = sum(w * n * b for w, n, b in zip(system.omegas, pair.nu, pair.beta))
            series = table[(slice(None),) + idx]
            sums[pair] += np.sum(np.exp(1j * freq * rec.times) * series)
        count += rec.n_times
    bounds = {}
    for pair in pairs:
        delta = _delta_min(system.omegas, pair, n_max_modes, "periodic")
        bound = 1.0 / (delta * t_eff) if delta > 0 else np.inf
        if tolerance is not None and bound > tolerance:
            raise InsufficientTimeSpan(
                f"leakage bound {bound:.2e} for pair {pair} exceeds tolerance {tolerance:.2e}"
            )
        val = sums[pair] / count
        row, col = pair.row_col
        i = int(np.ravel_multi_index(tuple(b.index_of(v) for b, v in zip(bases, row)), dims))
        j = int(np.ravel_multi_index(tuple(b.index_of(v) for b, v in zip(bases, col)), dims))
        values[i, j] = val
        values[j, i] = np.conj(val)
        known[i, j] = known[j, i] = True
        bounds[pair] = bound
        flat[pair] = (i, j)
    return PartialDensityMatrix(bases=bases, values=values, known=known, leakage_bounds=bounds)


def box_recon_nd(records, system: BoxSystem, pairs=None, t_cap=None, n_max=None, tolerance=None):
    """Multi-mode box matrix from one finite symmetric time window.

    Full-window calls return a ReconstructedState with per-entry leakage
    bounds; explicit pair subsets come back as a PartialDensityMatrix.
    """
    records = _as_records(records)
    if not isinstance(system, BoxSystem):
        raise BasisError("box system required")
    if t_cap is None:
        raise ShapeError("t_cap is required")
    _check_incommensurable(system)
    full_window = pairs is None
    if pairs is None:
        if n_max is None:
            raise ShapeError("give pairs or an index window n_max")
        pairs = _box_window_pairs(_per_mode(n_max, system.n_modes))
    pairs = _validate_pairs(pairs, system.n_modes, "box")
    if n_max is None:
        n_max = _window_from_pairs(pairs)
    n_max_modes = _per_mode(n_max, system.n_modes)
    bases = tuple(BoxSineBasis(v) for v in n_max_modes)
    t_eff = _nd_time_setup(records, t_cap)
    dims = tuple(b.size for b in bases)
    dim = int(np.prod(dims))
    values = np.zeros((dim, dim), dtype=np.complex128)
    known = np.zeros((dim, dim), dtype=bool)
    def pair_cos_index(pair, j):
        return abs(pair.beta[j]) if pair.beta[j] != 0 else pair.nu[j]

    k_sets = [sorted({pair_cos_index(p, j) for p in pairs}) for j in range(system.n_modes)]
    k_pos = [{k: i for i, k in enumerate(ks)} for ks in k_sets]
    sums = {pair: 0.0 + 0.0j for pair in pairs}
    count = 0
    for rec in records:
        if rec.payload_kind != "distribution":
            raise ShapeError("exact quadrature reconstruction needs distribution records")
        table = rec.payload
        for j in range(system.n_modes):
            x = rec.grid.points(j)
            w = rec.grid.weights(j)
            kernels = np.stack(
                [w * np.cos(pi * k * x / system.lengths[j]) for k in k_sets[j]], axis=1
            )
            table = np.tensordot(table, kernels, axes=([1], [0]))
        for pair in pairs:
            signs = (-1.0) ** sum(1 for b in pair.beta if b == 0)
            idx = tuple(k_pos[j][pair_cos_index(pair, j)] for j in range(pair.n_modes))
            freq = sum(w_ * n * b for w_, n, b in zip(system.omegas, pair.nu, pair.beta))
            series = table[(slice(None),) + idx]
            sums[pair] += signs * 2.0**pair.n_modes * np.sum(np.exp(1j * freq * rec.times) * series)
        count += rec.n_times
    bounds = {}
    for pair in pairs:
        delta = _delta_min(system.omegas, pair, n_max_modes, "box")
        bound = 1.0 / (delta * t_eff) if delta > 0 else np.inf
        if tolerance is not None and bound > tolerance:
            raise InsufficientTimeSpan(
                f"leakage bound {bound:.2e} for pair {pair} exceeds tolerance {tolerance:.2e}"
            )
        val = sums[pair] / count
        row, col = pair.row_col
        i = int(np.ravel_multi_index(tuple(b.index_of(v) for b, v in zip(bases, row)), dims))
        j = int(np.ravel_multi_index(tuple(b.index_of(v) for b, v in zip(bases, col)), dims))
        values[i, j] = val
        values[j, i] = np.conj(val)
        known[i, j] = known[j, i] = True
        bounds[pair] = bound
    if not full_window:
        return PartialDensityMatrix(bases=bases, values=values, known=known, leakage_bounds=bounds)
    projected, distance = project_to_physical(values)
    state = DensityMatrix(bases=bases, elements=projected)
    return ReconstructedState(state=state, projection_distance=distance, leakage_bounds=bounds)


# ---------------------------------------------------------------------------
# diagonal intervals


def schwartz_bounds(partial: PartialDensityMatrix, max_iterations=200, tol=1e-12) -> DiagonalBounds:
    """Interval constraints on the unrecoverable diagonal.

    Combines |rho(n, n')|^2 <= d_n d_n' with the unit trace by interval
    propagation; for each constrained pair the quadratic
    d (S - d) >= |rho|^2 with S the trace left over by the other lower
    bounds pins both entries.  Raises InconsistentData when the
    constraints admit no diagonal at all.
    """
    dim = partial.dim
    mags = np.zeros((dim, dim))
    for i in range(dim):
        for j in range(dim):
            if i != j and partial.known[i, j]:
                mags[i, j] = abs(partial.values[i, j])
    lower = np.zeros(dim)
    upper = np.ones(dim)
    constrained = [(i, j) for i in range(dim) for j in range(i + 1, dim) if mags[i, j] > 0]
    for _ in range(max_iterations):
        before = (lower.copy(), upper.copy())
        for i, j in constrained:
            c = mags[i, j] ** 2
            # direct bound from the partner's upper value
            if upper[j] > 0:
                lower[i] = max(lower[i], c / upper[j])
            if upper[i] > 0:
                lower[j] = max(lower[j], c / upper[i])
            # the pair shares at most the trace not claimed by other entries
            others = lower.sum() - lower[i] - lower[j]
            budget = 1.0 - others
            disc = budget * budget - 4.0 * c
            if disc < -tol:
                raise InconsistentData(
                    f"|rho[{i},{j}]| = {mags[i, j]:.4f} is impossible under the trace constraint"
                )
            root = sqrt(max(disc, 0.0))
            lo_pair, hi_pair = 0.5 * (budget - root), 0.5 * (budget + root)
            lower[i] = max(lower[i], lo_pair)
            lower[j] = max(lower[j], lo_pair)
            upper[i] = min(upper[i], hi_pair)
            upper[j] = min(upper[j], hi_pair)
        # trace rule
        total_low = lower.sum()
        if total_low > 1.0 + tol:
            raise InconsistentData("lower bounds already exceed unit trace")
        for i in range(dim):
            upper[i] = min(upper[i], 1.0 - (total_low - lower[i]))
        if np.any(lower > upper + 1e-9):
            raise InconsistentData("empty diagonal interval")
        if np.allclose(before[0], lower, atol=tol) and np.allclose(before[1], upper, atol=tol):
            break
    return DiagonalBounds(lower=lower, upper=upper)
