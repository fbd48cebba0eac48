"""Moment recovery for oscillators with commensurable frequencies.

When the mode frequencies are integer multiples alpha_j of a base rate,
the time dependence of every joint position moment is a trigonometric
polynomial whose frequencies are the integer keys alpha . (r - 2s).
Distinct keys are separable by least squares on the sampled exponentials;
keys shared by several (r, s) index pairs ("collisions") only ever yield
the group sum.
"""

import itertools
from dataclasses import dataclass, field
from math import sqrt

import numpy as np

from ..errors import (
    MomentDivergenceError,
    NumericalRankError,
    ShapeError,
)
from ..records import MeasurementRecord
from ..states import DensityMatrix, ladder_matrix, mode_operator_expectation

WEYL_ORACLE_MAX_ORDER = 6
TAIL_FRACTION = 0.1
TAIL_TOLERANCE = 1e-8

RESOLVED = "resolved"
AGGREGATED = "aggregated"
UNMEASURED = "unmeasured"


@dataclass(frozen=True)
class MomentIndex:
    """Per-mode total powers r and lowering-operator counts s, 0 <= s <= r."""

    r: tuple[int, ...]
    s: tuple[int, ...]

    def __post_init__(self):
        r = tuple(int(v) for v in self.r)
        s = tuple(int(v) for v in self.s)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "s", s)
        if len(r) != len(s):
            raise ShapeError("r and s must have equal length")
        if any(v < 0 for v in r) or any(not (0 <= sv <= rv) for sv, rv in zip(s, r)):
            raise ShapeError("need 0 <= s_j <= r_j componentwise")

    @property
    def total_order(self) -> int:
        return sum(self.r)


@dataclass(frozen=True)
class MomentEntry:
    value: complex | None
    status: str
    group: tuple[MomentIndex, ...] = ()


@dataclass(frozen=True)
class MomentTable:
    """Recovered symmetric moments with recoverability annotations.

    Aggregated entries store the group sum as their value; the individual
    summands are unidentifiable from the data.
    """

    entries: dict

    def value(self, r, s) -> complex | None:
        entry = self.entries.get(MomentIndex(tuple(r), tuple(s)))
        return None if entry is None else entry.value

    def status(self, r, s) -> str | None:
        entry = self.entries.get(MomentIndex(tuple(r), tuple(s)))
        return None if entry is None else entry.status

    def to_dict(self) -> dict:
        rows = []
        for idx in sorted(self.entries, key=lambda i: (i.r, i.s)):
            entry = self.entries[idx]
            if entry.status == AGGREGATED:
                gid = "g" + "_".join(f"{i.r}{i.s}" for i in entry.group)
                status = f"aggregated:{gid}"
            else:
                status = entry.status
            rows.append(
                {
                    "r": list(idx.r),
                    "s": list(idx.s),
                    "value": None if entry.value is None else [entry.value.real, entry.value.imag],
                    "status": status,
                }
            )
        return {"entries": rows}


@dataclass(frozen=True)
class RecurrenceList:
    """Frequency keys alpha . (r' - 2s') for one fixed r', all s'."""

    r_prime: tuple[int, ...]
    keys: dict  # s-tuple -> integer key
    groups: dict  # key -> tuple of s-tuples

    @property
    def collisions(self) -> dict:
        return {k: g for k, g in self.groups.items() if len(g) > 1}

    @property
    def has_collisions(self) -> bool:
        return bool(self.collisions)


def _all_s(r):
    return [tuple(s) for s in itertools.product(*(range(v + 1) for v in r))]


def recurrence_lists(alpha, r_max) -> list[RecurrenceList]:
    """One key list per r' <= r_max componentwise; collisions grouped."""
    alpha = tuple(int(a) for a in alpha)
    r_max = tuple(int(v) for v in r_max)
    if len(alpha) != len(r_max):
        raise ShapeError("alpha and r_max must have equal length")
    if any(a <= 0 for a in alpha):
        raise ShapeError("alpha components must be positive integers")
    if np.gcd.reduce(alpha) != 1:
        raise ShapeError("alpha must be reduced (gcd 1)")
    out = []
    for r in itertools.product(*(range(v + 1) for v in r_max)):
        keys = {}
        groups = {}
        for s in _all_s(r):
            key = int(sum(a * (rv - 2 * sv) for a, rv, sv in zip(alpha, r, s)))
            keys[s] = key
            groups.setdefault(key, []).append(s)
        out.append(
            RecurrenceList(
                r_prime=tuple(r),
                keys=keys,
                groups={k: tuple(v) for k, v in groups.items()},
            )
        )
    return out


@dataclass(frozen=True)
class PositionMoments:
    """Joint position-power expectations per time block."""

    system: object
    times: np.ndarray
    values: dict  # r-tuple -> real array over times

    def moment(self, r) -> np.ndarray:
        return self.values[tuple(int(v) for v in r)]


def measure_position_moments(record: MeasurementRecord, r_max) -> PositionMoments:
    """Grid-quadrature (or sample) moments < prod_j x_j^{r_j} > per block.

    For gridded payloads the outermost 10% of each axis must contribute
    less than 1e-8 of the highest requested moment, otherwise the
    quadrature cannot be trusted and MomentDivergenceError is raised.
    """
    r_max = tuple(int(v) for v in r_max)
    n = record.n_modes
    if len(r_max) != n:
        raise ShapeError("r_max must have one entry per mode")
    r_list = [tuple(r) for r in itertools.product(*(range(v + 1) for v in r_max))]
    values = {r: np.empty(record.n_times) for r in r_list}
    if record.payload_kind == "positions":
        for b in range(record.n_times):
            samples = record.payload[b]
            for r in r_list:
                acc = np.ones(samples.shape[0])
                for j, rv in enumerate(r):
                    if rv:
                        acc = acc * samples[:, j] ** rv
                values[r][b] = acc.mean()
        return PositionMoments(system=record.system, times=record.times.copy(), values=values)
    powers = []
    for j in range(n):
        x = record.grid.points(j)
        w = record.grid.weights(j) if record.payload_kind == "distribution" else np.ones_like(x)
        powers.append(np.array([w * x**k for k in range(r_max[j] + 1)]))
    edge = [max(1, int(TAIL_FRACTION * record.grid.shape[j])) for j in range(n)]
    for b in range(record.n_times):
        block = record.payload[b].astype(float)
        if record.payload_kind == "counts":
            block = block / record.shots
        for r in r_list:
            out = block
            for j, rv in enumerate(r):
                out = np.tensordot(powers[j][rv], out, axes=([0], [0]))
            values[r][b] = float(out)
        # tail convergence check: |integrand| of the highest moment summed
        # over the outer cells of each axis
        weighted = np.abs(block)
        for j in range(n):
            shape = [1] * n
            shape[j] = -1
            weighted = weighted * np.abs(powers[j][r_max[j]]).reshape(shape)
        tails = 0.0
        for j in range(n):
            lo = [slice(None)] * n
            hi = [slice(None)] * n
            lo[j] = slice(0, edge[j])
            hi[j] = slice(-edge[j], None)
            tails = max(tails, float(weighted[tuple(lo)].sum() + weighted[tuple(hi)].sum()))
        scale = max(abs(values[tuple(r_max)][b]), 1.0)
        if tails > TAIL_TOLERANCE * scale:
            raise MomentDivergenceError(
                f"outer grid cells contribute {tails:.2e} to the order-{r_max} moment at block {b}"
            )
    return PositionMoments(system=record.system, times=record.times.copy(), values=values)


def _base_rate(system, alpha):
    rates = [w / a for w, a in zip(system.omegas, alpha)]
    if max(rates) - min(rates) > 1e-9 * max(rates):
        raise ShapeError(f"frequencies {system.omegas} are not alpha = {alpha} multiples of one rate")
    return float(np.mean(rates))


def solve_moments(moments: PositionMoments, alpha, r_max, max_total_order=None) -> MomentTable:
    """Per-r least squares on the sampled exponentials of the frequency keys.

    Collision groups appear as aggregated entries holding the group sum.
    max_total_order, when given, restricts the solve to sum(r) below it
    (useful when the record has only a few time points).
    """
    alpha = tuple(int(a) for a in alpha)
    r_max = tuple(int(v) for v in r_max)
    omega = _base_rate(moments.system, alpha)
    thetas = omega * np.asarray(moments.times)
    entries = {}
    for rec_list in recurrence_lists(alpha, r_max):
        r = rec_list.r_prime
        if max_total_order is not None and sum(r) > max_total_order:
            continue
        if sum(r) == 0:
            entries[MomentIndex(r, r)] = MomentEntry(value=1.0 + 0j, status=RESOLVED)
            continue
        group_keys = sorted(rec_list.groups)
        if len(set(np.round(thetas, 12))) < len(group_keys):
            raise NumericalRankError(
                f"{len(group_keys)} frequency keys for r = {r} need at least that many distinct angles"
            )
        design = np.exp(1j * np.outer(thetas, group_keys))
        target = 2.0 ** (sum(r) / 2.0) * moments.moment(r)
        stacked = np.vstack([design.real, design.imag])
        sing = np.linalg.svd(stacked, compute_uv=False)
        if sing[-1] < 1e-10 * sing[0]:
            raise NumericalRankError(
                f"exponential design for r = {r} is rank deficient; choose different sample times"
            )
        sol, *_ = np.linalg.lstsq(design, target.astype(np.complex128), rcond=None)
        for key, group_value in zip(group_keys, sol):
            group = rec_list.groups[key]
            if len(group) == 1:
                idx = MomentIndex(r, group[0])
                entries[idx] = MomentEntry(value=complex(group_value), status=RESOLVED)
            else:
                members = tuple(MomentIndex(r, s) for s in group)
                for idx in members:
                    entries[idx] = MomentEntry(
                        value=complex(group_value),
                        status=AGGREGATED,
                        group=tuple(m for m in members if m != idx),
                    )
    return MomentTable(entries=entries)


def weyl_moment_oracle(rho: DensityMatrix, r, s) -> complex:
    """Brute-force trace of the symmetrized ladder product.

    Sums the distinct orderings of s_j lowering and (r_j - s_j) raising
    operators per mode, which equals the binomial-weighted Weyl-ordered
    product appearing in the moment expansion.
    """
    r = tuple(int(v) for v in r)
    s = tuple(int(v) for v in s)
    if any(v > WEYL_ORACLE_MAX_ORDER for v in r):
        raise ShapeError(f"oracle supports per-mode order <= {WEYL_ORACLE_MAX_ORDER}")
    ops = {}
    for j, (rv, sv) in enumerate(zip(r, s)):
        if rv == 0:
            continue
        a = ladder_matrix(rho.dims[j])
        ad = a.conj().T
        total = np.zeros_like(a)
        for word in set(itertools.permutations((0,) * sv + (1,) * (rv - sv))):
            prod = np.eye(rho.dims[j], dtype=np.complex128)
            for flag in word:
                prod = prod @ (a if flag == 0 else ad)
            total = total + prod
        ops[j] = total
    if not ops:
        return 1.0 + 0j
    return mode_operator_expectation(rho, ops)


def suggest_moment_times(alpha, r_max, base_rate=1.0, max_total_order=None):
    """Equispaced sample times on a sublattice fine enough to avoid aliasing.

    Uses M = 2*K + 1 lattice points for the largest key K and returns only
    as many of them as the widest per-r system needs.
    """
    alpha = tuple(int(a) for a in alpha)
    r_max = tuple(int(v) for v in r_max)
    biggest_key = 0
    most_keys = 1
    for rec_list in recurrence_lists(alpha, r_max):
        if max_total_order is not None and sum(rec_list.r_prime) > max_total_order:
            continue
        keys = rec_list.groups.keys()
        biggest_key = max(biggest_key, max(abs(k) for k in keys))
        most_keys = max(most_keys, len(keys))
    modulus = 2 * biggest_key + 1
    thetas = 2.0 * np.pi * np.arange(most_keys) / modulus
    return thetas / base_rate


@dataclass(frozen=True)
class NullDirection:
    """An unidentifiable antisymmetric cross correlation of one mode pair."""

    modes: tuple[int, int]
    description: str
    known_sum: float


@dataclass(frozen=True)
class GaussianEstimate:
    mean: np.ndarray
    cov: np.ndarray


@dataclass(frozen=True)
class UnderdeterminedReport:
    """Partial Gaussian reconstruction; cov holds NaN at unknown entries."""

    mean: np.ndarray
    cov: np.ndarray
    null_directions: tuple[NullDirection, ...]


def gaussian_from_moments(table: MomentTable, n_modes: int):
    """Mean and covariance from the order <= 2 moment table.

    Equal-frequency mode pairs leave exactly one direction per pair
    unidentified: the antisymmetric cross correlation <x_j p_k> - <p_j x_k>.
    In that case an UnderdeterminedReport naming the direction is returned
    instead of the completed estimate.
    """

    def entry(r, s):
        e = table.entries.get(MomentIndex(tuple(r), tuple(s)))
        if e is None:
            raise ShapeError(f"moment table lacks entry r={r}, s={s}")
        return e

    def unit(j, value=1):
        v = [0] * n_modes
        v[j] = value
        return tuple(v)

    mean = np.zeros(2 * n_modes)
    amean = []
    for j in range(n_modes):
        s0 = entry(unit(j), unit(j, 0)).value  # <a^dag>
        s1 = entry(unit(j), unit(j)).value  # <a>
        amean.append(s1)
        mean[2 * j] = ((s1 + s0) / sqrt(2.0)).real
        mean[2 * j + 1] = ((s1 - s0) / (1j * sqrt(2.0))).real
    cov = np.zeros((2 * n_modes, 2 * n_modes))
    for j in range(n_modes):
        r = unit(j, 2)
        s_raise = entry(r, unit(j, 0)).value  # <a^dag a^dag>
        s_mixed = entry(r, unit(j, 1)).value  # <a a^dag + a^dag a>
        s_lower = entry(r, unit(j, 2)).value  # <a a>
        xx = ((s_lower + s_raise + s_mixed) / 2.0).real
        pp = ((s_mixed - s_lower - s_raise) / 2.0).real
        xp = ((s_lower - s_raise) / 2j).real
        cov[2 * j, 2 * j] = xx - mean[2 * j] ** 2
        cov[2 * j + 1, 2 * j + 1] = pp - mean[2 * j + 1] ** 2
        cov[2 * j, 2 * j + 1] = cov[2 * j + 1, 2 * j] = xp - mean[2 * j] * mean[2 * j + 1]
    nulls = []
    for j in range(n_modes):
        for k in range(j + 1, n_modes):
            r = tuple(1 if m in (j, k) else 0 for m in range(n_modes))

            def sval(sj, sk):
                s = [0] * n_modes
                s[j], s[k] = sj, sk
                return entry(r, tuple(s))

            raise_both = sval(0, 0).value  # <adag_j adag_k>
            lower_both = sval(1, 1).value  # <a_j a_k>
            cross_a = sval(1, 0)  # <a_j adag_k>
            cross_b = sval(0, 1)  # <adag_j a_k>
            # sums of the key-0 pair are always available
            cross_sum = cross_a.value if cross_a.status == AGGREGATED else cross_a.value + cross_b.value
            xx = ((raise_both + lower_both + cross_sum) / 2.0).real - mean[2 * j] * mean[2 * k]
            pp = ((cross_sum - raise_both - lower_both) / 2.0).real - mean[2 * j + 1] * mean[2 * k + 1]
            cov[2 * j, 2 * k] = cov[2 * k, 2 * j] = xx
            cov[2 * j + 1, 2 * k + 1] = cov[2 * k + 1, 2 * j + 1] = pp
            xp_plus_px = ((lower_both - raise_both) / 1j).real
            centered_sum = (
                xp_plus_px - mean[2 * j] * mean[2 * k + 1] - mean[2 * j + 1] * mean[2 * k]
            )
            if cross_a.status == RESOLVED and cross_b.status == RESOLVED:
                xp = ((lower_both - raise_both + cross_b.value - cross_a.value) / 2j).real
                px = ((lower_both - raise_both + cross_a.value - cross_b.value) / 2j).real
                cov[2 * j, 2 * k + 1] = cov[2 * k + 1, 2 * j] = xp - mean[2 * j] * mean[2 * k + 1]
                cov[2 * j + 1, 2 * k] = cov[2 * k, 2 * j + 1] = px - mean[2 * j + 1] * mean[2 * k]
            else:
                cov[2 * j, 2 * k + 1] = cov[2 * k + 1, 2 * j] = np.nan
                cov[2 * j + 1, 2 * k] = cov[2 * k, 2 * j + 1] = np.nan
                nulls.append(
                    NullDirection(
                        modes=(j, k),
                        description=f"<x_{j} p_{k}> - <p_{j} x_{k}>",
                        known_sum=float(centered_sum),
                    )
                )
    if nulls:
        return UnderdeterminedReport(mean=mean, cov=cov, null_directions=tuple(nulls))
    return GaussianEstimate(mean=mean, cov=cov)
