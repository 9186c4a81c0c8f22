"""Quick built-in checks run by ``posekit selftest``."""

import numpy as np

from . import rotation as rot, so3grid, translation as tr, voxel
from .gradcheck import GRADIENT_CASES, check_gradient

GRAD_TOL = 1e-4


def _codec_roundtrip(seed):
    rs = rot.random_rotations(seed, 500)
    worst = 0.0
    for n in (1, 8, 32):
        table = so3grid.generate_bin_table(n, seed=seed, covering_samples=1000)
        for r in rs:
            back = so3grid.decode_pose(so3grid.encode_pose(r, table), table)
            worst = max(worst, float(np.abs(back - r).max()))
    return worst


def _translation_roundtrip(seed):
    table = tr.generate_translation_bins()
    rng = np.random.default_rng(seed)
    lo, hi = table.ranges[:, 0], table.ranges[:, 1]
    ts = rng.uniform(lo, hi, (500, 3))
    return max(float(np.abs(tr.decode_translation(tr.encode_translation(t, table), table) - t).max())
               for t in ts)


def _binvox_roundtrip(seed):
    rng = np.random.default_rng(seed)
    for _ in range(10):
        g = voxel.OccupancyGrid(rng.random((16, 16, 16)) < 0.3)
        if voxel.read_binvox(voxel.write_binvox(g)) != g:
            return False
    return True


def run_selftest(seed=0, out=None):
    """Print one line per check; return the number of failures."""
    results = []
    for name in GRADIENT_CASES:
        err = check_gradient(name, points=20, seed=seed)
        results.append((f"grad {name}: rel err {err:.2e}", err < GRAD_TOL))
    err = _codec_roundtrip(seed)
    results.append((f"rotation codec roundtrip: max abs err {err:.2e}", err < 1e-9))
    err = _translation_roundtrip(seed)
    results.append((f"translation codec roundtrip: max abs err {err:.2e}", err < 1e-9))
    results.append(("binvox write/read identity", _binvox_roundtrip(seed)))
    for text, ok in results:
        if out is not None:
            print(f"[{'PASS' if ok else 'FAIL'}] {text}", file=out)
    return sum(not ok for _, ok in results)
