"""Frame-rate feature tracks and the QPF1 feature file format."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import FormatError, ShapeError

QPF_MAGIC = b"QPF1"


@dataclass(frozen=True)
class FrameTrack:
    """Per-frame acoustic features.

    ``f0`` is in Hz and is 0 on unvoiced frames unless the track has been made
    continuous (then ``voiced`` still carries the original U/V decisions).
    ``mcep`` has shape (frames, D); D may be 0 for pitch-only tracks.
    """

    frame_hop: int
    f0: np.ndarray
    voiced: np.ndarray
    mcep: np.ndarray = field(default=None)  # type: ignore[assignment]
    log_energy: np.ndarray = field(default=None)  # type: ignore[assignment]
    continuous: bool = False

    def __post_init__(self):
        f0 = np.asarray(self.f0, dtype=np.float64)
        voiced = np.asarray(self.voiced, dtype=bool)
        n = len(f0)
        if voiced.shape != (n,):
            raise ShapeError("voiced flags must match f0 length")
        mcep = self.mcep
        mcep = np.zeros((n, 0)) if mcep is None else np.asarray(mcep, dtype=np.float64)
        if mcep.ndim != 2 or mcep.shape[0] != n:
            raise ShapeError(f"mcep must have shape ({n}, D), got {mcep.shape}")
        energy = self.log_energy
        energy = np.zeros(n) if energy is None else np.asarray(energy, dtype=np.float64)
        if energy.shape != (n,):
            raise ShapeError("log_energy must match f0 length")
        if self.frame_hop < 1:
            raise ShapeError("frame_hop must be positive")
        object.__setattr__(self, "f0", f0)
        object.__setattr__(self, "voiced", voiced)
        object.__setattr__(self, "mcep", mcep)
        object.__setattr__(self, "log_energy", energy)

    def __len__(self) -> int:
        return len(self.f0)

    @property
    def mcep_dim(self) -> int:
        return self.mcep.shape[1]

    def with_spectral(self, mcep: np.ndarray, log_energy: np.ndarray | None = None) -> "FrameTrack":
        return replace(self, mcep=mcep, log_energy=log_energy if log_energy is not None else self.log_energy)

    def to_matrix(self) -> np.ndarray:
        """Row layout: f0, voiced, log_energy, mcep[0..D-1]."""
        return np.column_stack([self.f0, self.voiced.astype(np.float64), self.log_energy, self.mcep])

    @classmethod
    def from_matrix(cls, matrix: np.ndarray, frame_hop: int) -> "FrameTrack":
        matrix = np.asarray(matrix, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[1] < 3:
            raise ShapeError("feature matrix needs at least f0, voiced and log_energy columns")
        voiced = matrix[:, 1] > 0.5
        return cls(frame_hop, np.where(voiced, matrix[:, 0], 0.0), voiced, matrix[:, 3:], matrix[:, 2])


def write_qpf(path: str | Path, matrix: np.ndarray, frame_hop: int) -> None:
    """Write a (frames, dim) matrix as a QPF1 file."""
    matrix = np.ascontiguousarray(matrix, dtype="<f4")
    if matrix.ndim != 2:
        raise ShapeError("QPF1 stores a 2-D matrix")
    header = QPF_MAGIC + struct.pack("<III", matrix.shape[0], matrix.shape[1], frame_hop)
    Path(path).write_bytes(header + matrix.tobytes())


def read_qpf(path: str | Path) -> tuple[np.ndarray, int]:
    """Read a QPF1 file; returns (matrix as float32, frame_hop)."""
    raw = Path(path).read_bytes()
    if len(raw) < 16 or raw[:4] != QPF_MAGIC:
        raise FormatError(f"{path}: not a QPF1 file")
    frames, dim, hop = struct.unpack("<III", raw[4:16])
    body = raw[16:]
    if len(body) != 4 * frames * dim:
        raise FormatError(f"{path}: expected {frames}x{dim} values, found {len(body) // 4}")
    return np.frombuffer(body, dtype="<f4").reshape(frames, dim).astype(np.float32), hop


def save_track(path: str | Path, track: FrameTrack) -> None:
    write_qpf(path, track.to_matrix(), track.frame_hop)


def load_track(path: str | Path) -> FrameTrack:
    matrix, hop = read_qpf(path)
    return FrameTrack.from_matrix(matrix, hop)
