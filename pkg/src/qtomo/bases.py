"""Per-mode basis tags for truncated density matrices."""

from dataclasses import dataclass

from .errors import ShapeError


@dataclass(frozen=True)
class FockBasis:
    """Number-state ladder basis |0>, ..., |cutoff-1>."""

    cutoff: int
    kind = "fock"

    def __post_init__(self):
        if self.cutoff < 2:
            raise ShapeError("Fock cutoff must be at least 2")

    @property
    def size(self) -> int:
        return self.cutoff

    def labels(self):
        return list(range(self.cutoff))


@dataclass(frozen=True)
class PlaneWaveBasis:
    """Momentum eigenstates on a ring, quantum numbers n_min..n_max."""

    n_min: int
    n_max: int
    kind = "plane_wave"

    def __post_init__(self):
        if not (self.n_min <= 0 <= self.n_max):
            raise ShapeError("plane-wave window must bracket n = 0")

    @property
    def size(self) -> int:
        return self.n_max - self.n_min + 1

    def labels(self):
        return list(range(self.n_min, self.n_max + 1))

    def index_of(self, n: int) -> int:
        if not (self.n_min <= n <= self.n_max):
            raise ShapeError(f"quantum number {n} outside window [{self.n_min}, {self.n_max}]")
        return n - self.n_min


@dataclass(frozen=True)
class BoxSineBasis:
    """Infinite-well sine eigenstates, quantum numbers 1..n_max."""

    n_max: int
    kind = "box_sine"

    def __post_init__(self):
        if self.n_max < 1:
            raise ShapeError("box basis needs n_max >= 1")

    @property
    def size(self) -> int:
        return self.n_max

    def labels(self):
        return list(range(1, self.n_max + 1))

    def index_of(self, n: int) -> int:
        if not (1 <= n <= self.n_max):
            raise ShapeError(f"quantum number {n} outside window [1, {self.n_max}]")
        return n - 1


BasisTag = FockBasis | PlaneWaveBasis | BoxSineBasis

_KINDS = {"fock": FockBasis, "plane_wave": PlaneWaveBasis, "box_sine": BoxSineBasis}


def basis_to_dict(basis: BasisTag) -> dict:
    if isinstance(basis, FockBasis):
        return {"kind": "fock", "cutoff": basis.cutoff}
    if isinstance(basis, PlaneWaveBasis):
        return {"kind": "plane_wave", "nMin": basis.n_min, "nMax": basis.n_max}
    if isinstance(basis, BoxSineBasis):
        return {"kind": "box_sine", "nMax": basis.n_max}
    raise ShapeError(f"unknown basis {basis!r}")


def basis_from_dict(data: dict) -> BasisTag:
    kind = data.get("kind")
    if kind == "fock":
        return FockBasis(cutoff=int(data["cutoff"]))
    if kind == "plane_wave":
        return PlaneWaveBasis(n_min=int(data["nMin"]), n_max=int(data["nMax"]))
    if kind == "box_sine":
        return BoxSineBasis(n_max=int(data["nMax"]))
    raise ShapeError(f"unknown basis kind {kind!r}")
