"""Uniform SO(3) bin tables, soft labels and the bin + delta rotation codec.

Grids follow the Hopf-fibration construction: HEALPix cell centres on S^2
(nested ordering) crossed with a regular S^1 grid. Level 0 has 12 x 6 = 72
rotations, each level splits every cell 8-fold (576, 4608). Other bin counts
are farthest-point subsets of the smallest sufficient Hopf grid, seeded from
the identity.
"""

import json
from dataclasses import dataclass

import numpy as np

from . import rotation as rot
from .errors import BinIndexOutOfRange, InvalidBinCount

MAX_LEVEL = 2
HOPF_SIZES = {72 * 8**level: level for level in range(MAX_LEVEL + 1)}
MAX_BINS = 72 * 8**MAX_LEVEL
COVERING_SAMPLES = 100_000

_JRLL = np.array([2, 2, 2, 2, 3, 3, 3, 3, 4, 4, 4, 4])
_JPLL = np.array([1, 3, 5, 7, 0, 2, 4, 6, 1, 3, 5, 7])


def _compress_bits(v):
    # keep the even bits of v, packed
    out = np.zeros_like(v)
    bit = 0
    while np.any(v >> (2 * bit)):
        out |= ((v >> (2 * bit)) & 1) << bit
        bit += 1
    return out


def healpix_nested_angles(nside):
    """Colatitude/longitude of every HEALPix pixel centre, nested order."""
    npface = nside * nside
    pix = np.arange(12 * npface)
    face = pix // npface
    ipf = pix % npface
    ix = _compress_bits(ipf)
    iy = _compress_bits(ipf >> 1)

    jr = _JRLL[face] * nside - ix - iy - 1
    nr = np.full_like(jr, nside)
    z = (2 * nside - jr) * (2.0 / (3.0 * nside))
    kshift = (jr - nside) & 1

    north = jr < nside
    nr[north] = jr[north]
    z[north] = 1.0 - nr[north] ** 2 / (3.0 * npface)
    kshift[north] = 0

    south = jr > 3 * nside
    nr[south] = 4 * nside - jr[south]
    z[south] = nr[south] ** 2 / (3.0 * npface) - 1.0
    kshift[south] = 0

    jp = (_JPLL[face] * nr + ix - iy + 1 + kshift) // 2
    jp = np.where(jp > 4 * nside, jp - 4 * nside, jp)
    jp = np.where(jp < 1, jp + 4 * nside, jp)
    phi = (jp - (kshift + 1) * 0.5) * (np.pi / 2 / nr)
    return np.arccos(z), phi


def hopf_to_quat(theta, phi, psi):
    ct, st = np.cos(theta / 2), np.sin(theta / 2)
    return np.stack([
        ct * np.cos(psi / 2),
        ct * np.sin(psi / 2),
        st * np.cos(phi + psi / 2),
        st * np.sin(phi + psi / 2),
    ], axis=-1)


def hopf_grid_quaternions(level):
    """Quaternions of the Hopf grid at ``level`` (72 * 8**level of them)."""
    theta, phi = healpix_nested_angles(2**level)
    n_psi = 6 * 2**level
    psi = (np.arange(n_psi) + 0.5) * (2 * np.pi / n_psi)
    return hopf_to_quat(np.repeat(theta, n_psi), np.repeat(phi, n_psi), np.tile(psi, len(theta)))


def farthest_point_subset(candidates, n):
    """Greedy farthest-point selection of ``n - 1`` candidates after the identity.

    ``candidates`` is ``(m, 3, 3)``. Returns the ``(n, 3, 3)`` stack with the
    identity first. Ties resolve to the lowest candidate index.
    """
    chosen = [np.eye(3)]
    nearest = rot.geodesic_distances(np.eye(3), candidates)
    for _ in range(n - 1):
        k = int(np.argmax(nearest))
        chosen.append(candidates[k])
        nearest = np.minimum(nearest, rot.geodesic_distances(candidates[k], candidates))
    return np.stack(chosen)


def min_spacing(bins):
    if len(bins) < 2:
        return float(np.pi)
    d = rot.pairwise_geodesic(bins, bins)
    np.fill_diagonal(d, np.inf)
    return float(d.min())


def covering_radius(bins, seed=0, samples=COVERING_SAMPLES, chunk=20_000):
    """Largest distance from a Haar-random rotation to its nearest bin (Monte Carlo)."""
    bin_q = np.stack([rot.rotation_to_quat(b) for b in bins])
    rng = np.random.default_rng(seed)
    worst = 0.0
    done = 0
    while done < samples:
        m = min(chunk, samples - done)
        q = rot.random_quaternions(rng, m)
        best = np.abs(q @ bin_q.T).max(axis=1)
        worst = max(worst, float(2.0 * np.arccos(np.clip(best.min(), -1.0, 1.0))))
        done += m
    return worst


@dataclass(frozen=True, eq=False)
class RotationBinTable:
    bins: np.ndarray
    spacing: float
    covering_radius: float
    seed: int = 0

    @property
    def n(self):
        return len(self.bins)

    def __len__(self):
        return len(self.bins)

    def to_dict(self):
        return {
            "n": self.n,
            "seed": self.seed,
            "spacing": self.spacing,
            "covering_radius": self.covering_radius,
            "bins": [rot.to_json(b) for b in self.bins],
        }

    @classmethod
    def from_dict(cls, d):
        bins = np.stack([rot.from_json(b) for b in d["bins"]])
        if len(bins) != d["n"]:
            raise ValueError(f"table says n={d['n']} but holds {len(bins)} bins")
        return cls(bins=bins, spacing=float(d["spacing"]),
                   covering_radius=float(d["covering_radius"]), seed=int(d["seed"]))

    def save(self, path):
        with open(path, "w") as f:
            json.dump(self.to_dict(), f)

    @classmethod
    def load(cls, path):
        with open(path) as f:
            return cls.from_dict(json.load(f))


def bin_rotations(n):
    """Bin rotations for ``n`` bins, without the Monte Carlo bookkeeping."""
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise InvalidBinCount(f"bin count must be a positive integer, got {n!r}")
    if n > MAX_BINS:
        raise InvalidBinCount(f"bin count {n} exceeds the finest grid ({MAX_BINS})")
    if n in HOPF_SIZES:
        q = hopf_grid_quaternions(HOPF_SIZES[n])
        return rot.quat_to_rotation_batch(q)
    level = min(lvl for size, lvl in HOPF_SIZES.items() if size >= n)
    level = max(level, 1)
    candidates = rot.quat_to_rotation_batch(hopf_grid_quaternions(level))
    return farthest_point_subset(candidates, n)


def generate_bin_table(n, seed=0, covering_samples=COVERING_SAMPLES):
    bins = bin_rotations(n)
    return RotationBinTable(
        bins=bins,
        spacing=min_spacing(bins),
        covering_radius=covering_radius(bins, seed=seed, samples=covering_samples),
        seed=seed,
    )


def _bins(table):
    return table.bins if isinstance(table, RotationBinTable) else np.asarray(table)


def nearest_bin(r, table):
    """Index of the closest bin; ties go to the lowest index."""
    return int(np.argmin(rot.geodesic_distances(r, _bins(table))))


def soft_labels(r_gt, table, alpha=0.1, beta=None):
    """Soft bin targets: 1 at the nearest bin, ``alpha`` within ``beta``, else 0.

    ``beta`` defaults to the table spacing.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if beta is None:
        beta = table.spacing
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    d = rot.geodesic_distances(r_gt, _bins(table))
    y = np.where(d < beta, alpha, 0.0)
    y[int(np.argmin(d))] = 1.0
    return y


@dataclass(frozen=True, eq=False)
class PoseCode:
    bin_index: int
    delta: np.ndarray


def encode_pose(r, table):
    """Split ``r`` into its nearest bin and the delta ``R_hat @ r``."""
    k = nearest_bin(r, table)
    return PoseCode(k, _bins(table)[k] @ np.asarray(r, dtype=float))


def decode_pose(code, table):
    """``R_hat.T @ delta`` -- exact inverse of ``encode_pose``."""
    bins = _bins(table)
    k = code.bin_index
    if not 0 <= k < len(bins):
        raise BinIndexOutOfRange(f"bin index {k} outside [0, {len(bins)})")
    return bins[k].T @ np.asarray(code.delta, dtype=float)


def delta_targets(r_gt, table):
    """Per-bin delta ``R_i @ r_gt`` for every bin, shape ``(n, 3, 3)``."""
    return np.einsum("nij,jk->nik", _bins(table), np.asarray(r_gt, dtype=float))
