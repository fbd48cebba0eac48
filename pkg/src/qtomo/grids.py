"""Spatial, characteristic-function and phase-space grids."""

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError


@dataclass(frozen=True)
class Axis:
    """Uniform 1D sampling axis with quadrature weights.

    kind selects the quadrature convention:
      "open"     inclusive endpoints, trapezoid weights (decaying functions)
      "periodic" endpoint excluded, full rectangle weights
      "box"      inclusive endpoints, trapezoid weights on [0, L]
    """

    x_min: float
    x_max: float
    n_points: int
    kind: str = "open"

    def __post_init__(self):
        if self.x_min >= self.x_max:
            raise ShapeError("axis needs x_min < x_max")
        if self.n_points < 16:
            raise ShapeError("axis needs at least 16 points")
        if self.kind not in ("open", "periodic", "box"):
            raise ShapeError(f"unknown axis kind {self.kind!r}")

    @property
    def points(self) -> np.ndarray:
        if self.kind == "periodic":
            return np.linspace(self.x_min, self.x_max, self.n_points, endpoint=False)
        return np.linspace(self.x_min, self.x_max, self.n_points)

    @property
    def spacing(self) -> float:
        if self.kind == "periodic":
            return (self.x_max - self.x_min) / self.n_points
        return (self.x_max - self.x_min) / (self.n_points - 1)

    @property
    def weights(self) -> np.ndarray:
        dx = self.spacing
        w = np.full(self.n_points, dx)
        if self.kind != "periodic":
            w[0] *= 0.5
            w[-1] *= 0.5
        return w

    def to_dict(self) -> dict:
        return {"xMin": self.x_min, "xMax": self.x_max, "nPoints": self.n_points, "kind": self.kind}

    @classmethod
    def from_dict(cls, data: dict) -> "Axis":
        return cls(
            x_min=float(data["xMin"]),
            x_max=float(data["xMax"]),
            n_points=int(data["nPoints"]),
            kind=data.get("kind", "open"),
        )


@dataclass(frozen=True)
class SpatialGrid:
    """Cartesian product of per-mode axes."""

    axes: tuple[Axis, ...]

    def __post_init__(self):
        if not self.axes:
            raise ShapeError("grid needs at least one axis")

    @classmethod
    def uniform(cls, x_min, x_max, n_points, n_modes=1):
        return cls(axes=tuple(Axis(x_min, x_max, n_points) for _ in range(n_modes)))

    @classmethod
    def periodic(cls, lengths, n_points):
        n_points = _broadcast_counts(n_points, len(lengths))
        return cls(axes=tuple(Axis(0.0, L, n, kind="periodic") for L, n in zip(lengths, n_points)))

    @classmethod
    def box(cls, lengths, n_points):
        n_points = _broadcast_counts(n_points, len(lengths))
        return cls(axes=tuple(Axis(0.0, L, n, kind="box") for L, n in zip(lengths, n_points)))

    @property
    def n_modes(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(axis.n_points for axis in self.axes)

    def points(self, mode: int) -> np.ndarray:
        return self.axes[mode].points

    def weights(self, mode: int) -> np.ndarray:
        return self.axes[mode].weights

    def weight_mesh(self) -> np.ndarray:
        """Outer product of per-mode quadrature weights over the full mesh."""
        mesh = self.axes[0].weights
        for axis in self.axes[1:]:
            mesh = np.multiply.outer(mesh, axis.weights)
        return mesh

    def integrate(self, values: np.ndarray) -> float:
        return float(np.sum(values * self.weight_mesh()))

    def to_dict(self) -> dict:
        return {"axes": [axis.to_dict() for axis in self.axes]}

    @classmethod
    def from_dict(cls, data: dict) -> "SpatialGrid":
        return cls(axes=tuple(Axis.from_dict(d) for d in data["axes"]))


def _broadcast_counts(n_points, n_modes):
    if np.isscalar(n_points):
        return (int(n_points),) * n_modes
    counts = tuple(int(n) for n in n_points)
    if len(counts) != n_modes:
        raise ShapeError("point counts do not match mode count")
    return counts


@dataclass(frozen=True)
class CharGrid:
    """Sampled characteristic function over per-mode (eta, theta) axes.

    values has shape (*eta_sizes, *theta_sizes).  For grids assembled by
    binning a time series, visit_counts marks how many samples landed in
    each theta cell and theta_samples holds the mean attained angles per
    cell (NaN where unvisited); cell values are estimates of the
    characteristic function at those mean angles.
    """

    eta_axes: tuple[np.ndarray, ...]
    theta_axes: tuple[np.ndarray, ...]
    values: np.ndarray
    visit_counts: np.ndarray | None = None
    theta_samples: np.ndarray | None = None
    inpainted: np.ndarray | None = None

    @property
    def n_modes(self) -> int:
        return len(self.eta_axes)

    @property
    def eta_shape(self) -> tuple[int, ...]:
        return tuple(len(ax) for ax in self.eta_axes)

    @property
    def theta_shape(self) -> tuple[int, ...]:
        return tuple(len(ax) for ax in self.theta_axes)

    @property
    def mask(self) -> np.ndarray:
        """Boolean theta-cell mask of cells holding data."""
        if self.visit_counts is None:
            return np.ones(self.theta_shape, dtype=bool)
        filled = self.visit_counts > 0
        if self.inpainted is not None:
            filled |= self.inpainted
        return filled

    @property
    def fill_fraction(self) -> float:
        if self.visit_counts is None:
            return 1.0
        return float(np.mean(self.visit_counts > 0))

    def zero_indices(self) -> tuple[int, ...]:
        """Index of eta = 0 on each eta axis."""
        out = []
        for ax in self.eta_axes:
            idx = int(np.argmin(np.abs(ax)))
            if abs(ax[idx]) > 1e-12:
                raise ShapeError("eta axis does not contain 0")
            out.append(idx)
        return tuple(out)

    def validate(self, tol=1e-8):
        """Check unit normalization at eta = 0 and |w| <= 1 on filled cells."""
        mask = self.mask
        vals = self.values
        zero = vals[self.zero_indices()]
        if np.any(np.abs(zero[mask] - 1.0) > tol):
            raise ShapeError("characteristic function is not 1 at eta = 0")
        mags = np.abs(vals.reshape(-1, *self.theta_shape))
        if np.any(mags[:, mask] > 1.0 + tol):
            raise ShapeError("characteristic function exceeds unit magnitude")


@dataclass(frozen=True)
class WignerGrid:
    """Phase-space samples over (x_1..x_N, p_1..p_N) axes."""

    x_axes: tuple[np.ndarray, ...]
    p_axes: tuple[np.ndarray, ...]
    values: np.ndarray

    @property
    def n_modes(self) -> int:
        return len(self.x_axes)

    def cell_volume(self) -> float:
        vol = 1.0
        for ax in self.x_axes + self.p_axes:
            vol *= ax[1] - ax[0]
        return vol

    def integral(self) -> float:
        return float(np.sum(self.values) * self.cell_volume())
