"""Time-stamped measurement records and their on-disk formats.

A record holds, per time block, either the exact joint position
distribution on the grid ("distribution"), multinomial counts over the
grid cells ("counts"), or raw per-shot position vectors ("positions",
used after coordinate transformations take samples off the grid).

Two formats: a columnar CSV for human inspection (write-only) and a
length-prefixed little-endian binary for bulk data; see docs/formats.md.
"""

import json
import struct
from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .grids import SpatialGrid
from .systems import SystemSpec, system_from_dict, system_to_dict

PAYLOAD_KINDS = ("distribution", "counts", "positions")

_MAGIC = b"QREC1\n"


@dataclass(frozen=True)
class MeasurementRecord:
    system: SystemSpec
    grid: SpatialGrid | None
    times: np.ndarray  # (n_times,)
    fold_counts: np.ndarray  # (n_times, n_modes) int
    payload_kind: str
    payload: np.ndarray
    seed: int | None = None
    shots: int | None = None
    thetas: np.ndarray | None = None  # (n_times, n_modes), set when angles are driven directly
    config_hash: str | None = None

    def __post_init__(self):
        if self.payload_kind not in PAYLOAD_KINDS:
            raise ShapeError(f"unknown payload kind {self.payload_kind!r}")
        times = np.asarray(self.times, dtype=float)
        folds = np.asarray(self.fold_counts, dtype=np.int64)
        if folds.shape != (times.size, self.n_modes):
            raise ShapeError("fold_counts shape must be (n_times, n_modes)")
        payload = np.asarray(self.payload)
        if self.payload_kind == "positions":
            expected = (times.size, self.shots or payload.shape[1], self.n_modes)
            if payload.ndim != 3 or payload.shape[0] != times.size or payload.shape[2] != self.n_modes:
                raise ShapeError(f"positions payload must have shape {expected}")
            payload = payload.astype(float)
        else:
            if self.grid is None:
                raise ShapeError("gridded payloads require a grid")
            if payload.shape != (times.size,) + self.grid.shape:
                raise ShapeError("payload shape must be (n_times, *grid shape)")
            payload = payload.astype(np.int64 if self.payload_kind == "counts" else float)
        for arr in (times, folds, payload):
            arr.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "fold_counts", folds)
        object.__setattr__(self, "payload", payload)
        if self.thetas is not None:
            thetas = np.asarray(self.thetas, dtype=float)
            if thetas.shape != (times.size, self.n_modes):
                raise ShapeError("thetas shape must be (n_times, n_modes)")
            thetas.setflags(write=False)
            object.__setattr__(self, "thetas", thetas)

    @property
    def n_modes(self) -> int:
        return self.system.n_modes

    @property
    def n_times(self) -> int:
        return self.times.size

    def block_positions(self, index: int) -> np.ndarray:
        """Position samples (shots, n_modes) of one block; expands counts."""
        if self.payload_kind == "positions":
            return self.payload[index]
        if self.payload_kind != "counts":
            raise ShapeError("block has no samples, only a distribution")
        counts = self.payload[index].ravel()
        mesh = np.stack(
            np.meshgrid(*[self.grid.points(m) for m in range(self.n_modes)], indexing="ij"),
            axis=-1,
        ).reshape(-1, self.n_modes)
        return np.repeat(mesh, counts, axis=0)

    # -- serialization ----------------------------------------------------

    def _header(self) -> dict:
        return {
            "format": "qrec-1",
            "system": system_to_dict(self.system),
            "grid": self.grid.to_dict() if self.grid is not None else None,
            "seed": self.seed,
            "shots": self.shots,
            "payloadKind": self.payload_kind,
            "nTimes": int(self.n_times),
            "nModes": int(self.n_modes),
            "payloadShape": list(self.payload.shape),
            "hasThetas": self.thetas is not None,
            "configHash": self.config_hash,
        }

    def save_binary(self, path):
        header = json.dumps(self._header(), sort_keys=True).encode("utf-8")
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<I", len(header)))
            fh.write(header)
            for arr, dtype in self._array_plan():
                raw = np.ascontiguousarray(arr, dtype=dtype).tobytes()
                fh.write(struct.pack("<Q", len(raw)))
                fh.write(raw)

    def _array_plan(self):
        plan = [(self.times, "<f8"), (self.fold_counts, "<i8")]
        if self.thetas is not None:
            plan.append((self.thetas, "<f8"))
        plan.append((self.payload, "<i8" if self.payload_kind == "counts" else "<f8"))
        return plan

    @classmethod
    def load_binary(cls, path) -> "MeasurementRecord":
        with open(path, "rb") as fh:
            if fh.read(len(_MAGIC)) != _MAGIC:
                raise ShapeError(f"{path} is not a record file")
            (hlen,) = struct.unpack("<I", fh.read(4))
            header = json.loads(fh.read(hlen).decode("utf-8"))

            def read_array(dtype, shape):
                (nbytes,) = struct.unpack("<Q", fh.read(8))
                return np.frombuffer(fh.read(nbytes), dtype=dtype).reshape(shape).copy()

            n_times = header["nTimes"]
            n_modes = header["nModes"]
            times = read_array("<f8", (n_times,))
            folds = read_array("<i8", (n_times, n_modes))
            thetas = read_array("<f8", (n_times, n_modes)) if header["hasThetas"] else None
            kind = header["payloadKind"]
            payload = read_array("<i8" if kind == "counts" else "<f8", tuple(header["payloadShape"]))
        return cls(
            system=system_from_dict(header["system"]),
            grid=SpatialGrid.from_dict(header["grid"]) if header["grid"] else None,
            times=times,
            fold_counts=folds,
            payload_kind=kind,
            payload=payload,
            seed=header["seed"],
            shots=header["shots"],
            thetas=thetas,
            config_hash=header.get("configHash"),
        )

    def save_csv(self, path):
        """Long-form columnar CSV, one row per cell (gridded) or shot (positions)."""
        n = self.n_modes
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("# " + json.dumps(self._header(), sort_keys=True) + "\n")
            fold_cols = ",".join(f"fold_{m + 1}" for m in range(n))
            coord_cols = ",".join(f"x_{m + 1}" for m in range(n))
            value_col = {"distribution": "density", "counts": "count", "positions": None}[self.payload_kind]
            header_cols = f"block,t,{fold_cols},{coord_cols}"
            fh.write(header_cols + (f",{value_col}\n" if value_col else "\n"))
            for b in range(self.n_times):
                prefix = f"{b},{self.times[b]!r}," + ",".join(str(v) for v in self.fold_counts[b])
                if self.payload_kind == "positions":
                    for row in self.payload[b]:
                        fh.write(prefix + "," + ",".join(repr(v) for v in row) + "\n")
                else:
                    block = self.payload[b]
                    points = [self.grid.points(m) for m in range(n)]
                    for idx in np.ndindex(*block.shape):
                        coords = ",".join(repr(points[m][idx[m]]) for m in range(n))
                        fh.write(prefix + f",{coords},{block[idx]!r}\n")
