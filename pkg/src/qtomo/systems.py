"""System descriptions: what Hamiltonian generated the measured dynamics.

Dimensionless units throughout: hbar = 1, h = 2*pi, oscillator position in
units of sqrt(hbar / (m * omega)).  Energy scales of the semicontinuous
systems are taken as primary inputs; (mass, length) pairs are convenience
constructors.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class OscillatorSystem:
    """N independent harmonic oscillators with angular frequencies omegas."""

    omegas: tuple[float, ...]

    def __post_init__(self):
        omegas = tuple(float(w) for w in self.omegas)
        object.__setattr__(self, "omegas", omegas)
        if len(omegas) == 0 or any(w <= 0 for w in omegas):
            raise ShapeError("oscillator frequencies must be positive")

    @property
    def n_modes(self) -> int:
        return len(self.omegas)


@dataclass(frozen=True)
class ChainSystem:
    """Ring of N identical oscillators with nearest-neighbour coupling."""

    n_sites: int
    omega: float
    kappa: float
    topology: str = "ring"

    def __post_init__(self):
        if self.n_sites < 2:
            raise ShapeError("chain needs at least 2 sites")
        if self.omega <= 0:
            raise ShapeError("chain base frequency must be positive")
        if abs(self.kappa) > self.omega:
            raise ShapeError("coupling |kappa| must not exceed omega")
        if self.topology != "ring":
            raise ShapeError(f"unsupported topology {self.topology!r}")

    @property
    def n_modes(self) -> int:
        return self.n_sites


@dataclass(frozen=True)
class PeriodicSystem:
    """Free particles on rings of circumference L_j, E(n) = Omega_j * n^2."""

    lengths: tuple[float, ...]
    omegas: tuple[float, ...]

    def __post_init__(self):
        lengths = tuple(float(v) for v in self.lengths)
        omegas = tuple(float(v) for v in self.omegas)
        object.__setattr__(self, "lengths", lengths)
        object.__setattr__(self, "omegas", omegas)
        if len(lengths) != len(omegas) or not lengths:
            raise ShapeError("lengths and omegas must be equal-length and non-empty")
        if any(v <= 0 for v in lengths + omegas):
            raise ShapeError("lengths and energy scales must be positive")

    @classmethod
    def from_masses(cls, masses, lengths):
        """Omega_j = pi * h / (m_j * L_j^2) with h = 2*pi."""
        masses = tuple(float(m) for m in masses)
        lengths = tuple(float(v) for v in lengths)
        omegas = tuple(TWO_PI * np.pi / (m * L**2) for m, L in zip(masses, lengths, strict=True))
        return cls(lengths=lengths, omegas=omegas)

    @property
    def n_modes(self) -> int:
        return len(self.lengths)

    def period(self, mode: int) -> float:
        """Recurrence time 2*pi / Omega of one mode."""
        return TWO_PI / self.omegas[mode]


@dataclass(frozen=True)
class BoxSystem:
    """Particles in hard-wall boxes of width L_j, E(n) = OmegaPrime_j * n^2."""

    lengths: tuple[float, ...]
    omegas: tuple[float, ...]  # the quarter-scale energy unit of each box

    def __post_init__(self):
        lengths = tuple(float(v) for v in self.lengths)
        omegas = tuple(float(v) for v in self.omegas)
        object.__setattr__(self, "lengths", lengths)
        object.__setattr__(self, "omegas", omegas)
        if len(lengths) != len(omegas) or not lengths:
            raise ShapeError("lengths and omegas must be equal-length and non-empty")
        if any(v <= 0 for v in lengths + omegas):
            raise ShapeError("lengths and energy scales must be positive")

    @classmethod
    def from_masses(cls, masses, lengths):
        """OmegaPrime_j = pi * h / (4 * m_j * L_j^2), one quarter of the ring scale."""
        masses = tuple(float(m) for m in masses)
        lengths = tuple(float(v) for v in lengths)
        omegas = tuple(TWO_PI * np.pi / (4.0 * m * L**2) for m, L in zip(masses, lengths, strict=True))
        return cls(lengths=lengths, omegas=omegas)

    @property
    def n_modes(self) -> int:
        return len(self.lengths)

    def period(self, mode: int) -> float:
        return TWO_PI / self.omegas[mode]


SystemSpec = OscillatorSystem | ChainSystem | PeriodicSystem | BoxSystem


def system_to_dict(system: SystemSpec) -> dict:
    if isinstance(system, OscillatorSystem):
        return {"kind": "oscillator", "omegas": list(system.omegas)}
    if isinstance(system, ChainSystem):
        return {"kind": "chain", "nSites": system.n_sites, "omega": system.omega, "kappa": system.kappa}
    if isinstance(system, PeriodicSystem):
        return {"kind": "periodic", "lengths": list(system.lengths), "omegas": list(system.omegas)}
    if isinstance(system, BoxSystem):
        return {"kind": "box", "lengths": list(system.lengths), "omegas": list(system.omegas)}
    raise ShapeError(f"unknown system {system!r}")


def system_from_dict(data: dict) -> SystemSpec:
    kind = data.get("kind")
    if kind == "oscillator":
        return OscillatorSystem(omegas=tuple(data["omegas"]))
    if kind == "chain":
        return ChainSystem(n_sites=int(data["nSites"]), omega=float(data["omega"]), kappa=float(data["kappa"]))
    if kind == "periodic":
        return PeriodicSystem(lengths=tuple(data["lengths"]), omegas=tuple(data["omegas"]))
    if kind == "box":
        return BoxSystem(lengths=tuple(data["lengths"]), omegas=tuple(data["omegas"]))
    raise ShapeError(f"unknown system kind {kind!r}")
