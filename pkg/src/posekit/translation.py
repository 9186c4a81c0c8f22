"""Cube bins plus normalised residuals for up-to-scale translations.

Cubes are indexed in C order over ``(ix, iy, iz)``, so ``iz`` runs fastest.
A point on a shared face belongs to the higher cube (half-open
``[lo, hi)`` intervals); the last cube on each axis is closed.
"""

import json
from dataclasses import dataclass

import numpy as np

from .errors import BinIndexOutOfRange, InvalidRange

DEFAULT_RANGES = ((-0.25, 1.5), (-0.25, 1.5), (0.5, 10.0))
DEFAULT_DIVISIONS = (4, 4, 8)


@dataclass(frozen=True, eq=False)
class TranslationBinTable:
    ranges: np.ndarray      # (3, 2)
    divisions: tuple

    @property
    def cube_dims(self):
        return (self.ranges[:, 1] - self.ranges[:, 0]) / np.asarray(self.divisions)

    @property
    def n(self):
        return int(np.prod(self.divisions))

    def __len__(self):
        return self.n

    @property
    def cube_diagonal(self):
        return float(np.linalg.norm(self.cube_dims))

    def cube_min(self, index):
        if not 0 <= index < self.n:
            raise BinIndexOutOfRange(f"translation bin {index} outside [0, {self.n})")
        ijk = np.array(np.unravel_index(index, self.divisions))
        return self.ranges[:, 0] + ijk * self.cube_dims

    @property
    def centers(self):
        grid = np.indices(self.divisions).reshape(3, -1).T
        return self.ranges[:, 0] + (grid + 0.5) * self.cube_dims

    def to_dict(self):
        return {
            "ranges": self.ranges.tolist(),
            "divisions": list(self.divisions),
            "cube_dims": self.cube_dims.tolist(),
            "centers": self.centers.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return generate_translation_bins(d["ranges"], d["divisions"])

    def save(self, path):
        with open(path, "w") as f:
            json.dump(self.to_dict(), f)

    @classmethod
    def load(cls, path):
        with open(path) as f:
            return cls.from_dict(json.load(f))


@dataclass(frozen=True, eq=False)
class TranslationCode:
    bin_index: int
    delta: np.ndarray
    out_of_range: bool = False


def generate_translation_bins(ranges=DEFAULT_RANGES, divisions=DEFAULT_DIVISIONS):
    ranges = np.asarray(ranges, dtype=float)
    if ranges.shape != (3, 2):
        raise InvalidRange(f"need three [min, max] pairs, got shape {ranges.shape}")
    if np.any(~(ranges[:, 1] > ranges[:, 0])):
        raise InvalidRange(f"every max must exceed its min: {ranges.tolist()}")
    divisions = tuple(int(d) for d in divisions)
    if len(divisions) != 3 or min(divisions) < 1:
        raise InvalidRange(f"divisions must be three counts >= 1, got {divisions}")
    return TranslationBinTable(ranges=ranges, divisions=divisions)


def encode_translation(t, table):
    """Cube index and residual in [0, 1]^3; out-of-range input is clamped and flagged."""
    t = np.asarray(t, dtype=float)
    lo, hi = table.ranges[:, 0], table.ranges[:, 1]
    clamped = np.clip(t, lo, hi)
    out_of_range = bool(np.any(clamped != t))
    dims = table.cube_dims
    ijk = np.floor((clamped - lo) / dims).astype(int)
    ijk = np.minimum(ijk, np.asarray(table.divisions) - 1)
    cube_min = lo + ijk * dims
    # floor() can land one cube high when (t - lo) / dims rounds up
    low = clamped < cube_min
    ijk[low] -= 1
    cube_min = lo + ijk * dims
    index = int(np.ravel_multi_index(tuple(ijk), table.divisions))
    delta = (clamped - cube_min) / dims
    return TranslationCode(index, delta, out_of_range)


def decode_translation(code, table):
    return table.cube_min(code.bin_index) + np.asarray(code.delta, dtype=float) * table.cube_dims
