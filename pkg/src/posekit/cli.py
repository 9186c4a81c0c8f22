"""``posekit`` command line.

Exit codes: 0 success, 1 usage error, 2 data error. Every JSON artifact
carries ``metadata = {tool_version, seed, config_hash}``; binary outputs get a
``<out>.json`` sidecar holding it. ``--config FILE`` values override flags and
``POSEKIT_SEED`` supplies the default seed.
"""

import argparse
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, metrics, rotation as rot, so3grid, translation as tr, voxel
from .errors import PosekitError
from .mesh import SHAPE_KINDS, make_synthetic_shape, read_obj
from .retrieval import ShapeDatabase, nearest_shape

log = logging.getLogger("posekit")


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def default_seed():
    raw = os.environ.get("POSEKIT_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"POSEKIT_SEED must be an integer, got {raw!r}") from None


NOT_HASHED = ("func", "config", "out", "report", "out_dir", "verbose")


def config_hash(cfg):
    blob = json.dumps(cfg, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def metadata(args):
    cfg = {k: v for k, v in vars(args).items() if k not in NOT_HASHED}
    return {"tool_version": __version__, "seed": args.seed, "config_hash": config_hash(cfg)}


def write_json(path, payload, args):
    payload = dict(payload)
    payload["metadata"] = metadata(args)
    text = json.dumps(payload, indent=1, sort_keys=True) + "\n"
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise PosekitError(f"{path}: invalid JSON ({exc})") from None


def require_files(*paths):
    for p in paths:
        if p is not None and not Path(p).is_file():
            raise FileNotFoundError(f"no such file: {p}")


def require_out(*paths):
    for p in paths:
        if p is not None and str(p) != "-" and not Path(p).resolve().parent.is_dir():
            raise FileNotFoundError(f"output directory does not exist: {Path(p).parent}")


def parse_rotation(text):
    """A rotation from a JSON list of 9 floats, or a file containing one."""
    if Path(text).is_file():
        data = read_json(text)
        if isinstance(data, dict):
            data = data.get("rotation", data.get("delta"))
    else:
        data = json.loads(text)
    r = rot.from_json(data)
    if not rot.is_rotation(r, tol=1e-6):
        raise PosekitError("input matrix is not a proper rotation")
    return r


# -- commands ---------------------------------------------------------------

def cmd_gen_bins(args):
    require_out(args.out)
    table = so3grid.generate_bin_table(args.n, seed=args.seed, covering_samples=args.covering_samples)
    write_json(args.out, table.to_dict(), args)
    log.info("wrote %d bins, spacing %.2f deg", table.n, np.degrees(table.spacing))


def cmd_gen_tbins(args):
    require_out(args.out)
    ranges = np.asarray(args.ranges, dtype=float).reshape(3, 2) if args.ranges else tr.DEFAULT_RANGES
    table = tr.generate_translation_bins(ranges, args.divisions)
    write_json(args.out, table.to_dict(), args)


def _grid_sidecar(out, grid, args, extra=None):
    if out is None:
        return
    _, meta = grid.to_bitset()
    meta["occupied"] = grid.count
    meta.update(extra or {})
    write_json(str(out) + ".json", meta, args)


def cmd_voxelize(args):
    require_files(args.mesh)
    require_out(args.out)
    if args.mesh:
        mesh = read_obj(Path(args.mesh).read_text())
    elif args.shape:
        mesh = make_synthetic_shape(args.shape, json.loads(args.params) if args.params else None, args.seed)
    else:
        raise UsageError("voxelize needs --mesh or --shape")
    grid = voxel.voxelize_mesh(mesh, args.res, fit=args.fit)
    data = voxel.write_binvox(grid)
    if args.out:
        Path(args.out).write_bytes(data)
    else:
        sys.stdout.buffer.write(data)
    _grid_sidecar(args.out, grid, args)


def cmd_rotate_voxel(args):
    require_files(args.input)
    require_out(args.out)
    grid = voxel.read_binvox(Path(args.input).read_bytes())
    r = parse_rotation(args.rotation) if args.rotation else rot.random_rotation(args.seed)
    out = voxel.rotate_grid(grid, r)
    data = voxel.write_binvox(out)
    if args.out:
        Path(args.out).write_bytes(data)
    else:
        sys.stdout.buffer.write(data)
    _grid_sidecar(args.out, out, args, {"rotation": rot.to_json(r)})


def cmd_encode_pose(args):
    require_files(args.bins)
    require_out(args.out)
    table = so3grid.RotationBinTable.from_dict(read_json(args.bins))
    if args.euler:
        r = rot.euler_to_rotation(args.euler)
    elif args.rotation:
        r = parse_rotation(args.rotation)
    else:
        raise UsageError("encode-pose needs --rotation or --euler")
    code = so3grid.encode_pose(r, table)
    write_json(args.out, {"bin_index": code.bin_index, "delta": rot.to_json(code.delta)}, args)


def cmd_decode_pose(args):
    require_files(args.bins, args.code)
    require_out(args.out)
    table = so3grid.RotationBinTable.from_dict(read_json(args.bins))
    if args.code:
        d = read_json(args.code)
        code = so3grid.PoseCode(int(d["bin_index"]), rot.from_json(d["delta"]))
    elif args.bin_index is not None and args.delta:
        code = so3grid.PoseCode(args.bin_index, parse_rotation(args.delta))
    else:
        raise UsageError("decode-pose needs --code or --bin-index with --delta")
    r = so3grid.decode_pose(code, table)
    write_json(args.out, {"rotation": rot.to_json(r), "quaternion": rot.rotation_to_quat(r).tolist()}, args)


def cmd_build_db(args):
    require_files(args.entries)
    require_out(args.out)
    data = read_json(args.entries)
    entries = data["entries"] if isinstance(data, dict) else data
    db = ShapeDatabase.from_dict({"entries": entries})
    write_json(args.out, db.to_dict(), args)


def cmd_retrieve(args):
    require_files(args.query, args.db)
    require_out(args.out)
    db = ShapeDatabase.load(args.db)
    q = read_json(args.query)
    if isinstance(q, dict):
        q = q.get("shape", q.get("vec"))
    shape_id, dist = nearest_shape(np.asarray(q, dtype=float), db)
    write_json(args.out, {"shape_id": shape_id, "distance": dist}, args)


def cmd_evaluate(args):
    require_files(args.pred)
    require_out(args.report)
    records = metrics.read_jsonl(Path(args.pred).read_text())
    report = metrics.bucketed_report(records, per_category=args.per_category)
    write_json(args.report, {"report": report}, args)


def cmd_train_toy(args):
    from . import train

    require_files(args.config)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg = train.TrainConfig.load(args.config) if args.config else train.TrainConfig()
    for k, v in (args.override or []):
        setattr(cfg, k, json.loads(v))
    cfg.validate()
    say = log.info if args.verbose else None

    if args.stage == 1:
        s1 = train.train_stage1(cfg, args.seed, log=say)
        pose_stab, shape_stab = train.disentanglement_probe(s1, cfg, args.seed + 1000)
        s1.model.save(out_dir / "stage1_model.json")
        write_json(out_dir / "bins.json", s1.table.to_dict(), args)
        write_json(out_dir / "db.json", s1.database.to_dict(), args)
        rows = [(1, i + 1, bd) for i, bd in enumerate(s1.history)]
        summary = {"stage": 1, "holdout_accuracy": s1.holdout_accuracy,
                   "holdout_pose_mederr_deg": s1.holdout_pose_mederr,
                   "probe_pose_bin_stability": pose_stab, "probe_retrieval_stability": shape_stab}
    else:
        s1_dir = Path(args.stage1_dir or out_dir)
        require_files(s1_dir / "stage1_model.json", s1_dir / "bins.json", s1_dir / "db.json")
        from .model import EmbeddingMLP
        s1 = train.Stage1Result(
            model=EmbeddingMLP.load(s1_dir / "stage1_model.json"),
            database=ShapeDatabase.load(s1_dir / "db.json"),
            table=so3grid.RotationBinTable.load(s1_dir / "bins.json"),
            history=[], holdout_accuracy=float("nan"), holdout_pose_mederr=float("nan"))
        s2 = train.train_stage2(cfg, s1, args.seed, log=say)
        s2.model.save(out_dir / "stage2_model.json")
        (out_dir / "predictions.jsonl").write_text("".join(json.dumps(r) + "\n" for r in s2.records))
        rows = [(2, i + 1, bd) for i, bd in enumerate(s2.history)]
        summary = {"stage": 2, "top1_acc": s2.top1, "med_err_deg": s2.mederr_deg,
                   "translation_error": s2.translation_error,
                   "cube_diagonal": s2.ttable.cube_diagonal}
    (out_dir / f"losses_stage{args.stage}.csv").write_text(train.history_csv(rows))
    summary["config"] = cfg.to_dict()
    write_json(out_dir / f"summary_stage{args.stage}.json", summary, args)


def cmd_selftest(args):
    from .selftest import run_selftest

    failures = run_selftest(seed=args.seed, out=sys.stdout)
    if failures:
        raise PosekitError(f"{failures} self-test check(s) failed")


# -- parser -------------------------------------------------------------------

def build_parser():
    p = Parser(prog="posekit", description="Shape/pose embedding toolkit.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=Parser)
    sub.required = True

    def add(name, func, help_):
        sp = sub.add_parser(name, help=help_, description=help_)
        sp.add_argument("--seed", type=int, default=None, help="RNG seed (default: $POSEKIT_SEED or 0)")
        sp.add_argument("--config", help="JSON file whose keys override flags")
        sp.set_defaults(func=func)
        return sp

    sp = add("gen-bins", cmd_gen_bins, "Generate an SO(3) bin table.")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--covering-samples", type=int, default=so3grid.COVERING_SAMPLES)
    sp.add_argument("--out")

    sp = add("gen-tbins", cmd_gen_tbins, "Generate a translation cube-bin table.")
    sp.add_argument("--ranges", type=float, nargs=6, metavar=("XMIN", "XMAX", "YMIN", "YMAX", "ZMIN", "ZMAX"))
    sp.add_argument("--divisions", type=int, nargs=3, default=list(tr.DEFAULT_DIVISIONS))
    sp.add_argument("--out")

    sp = add("voxelize", cmd_voxelize, "Voxelize an OBJ mesh or a procedural shape to binvox.")
    sp.add_argument("--mesh")
    sp.add_argument("--shape", choices=SHAPE_KINDS)
    sp.add_argument("--params", help="JSON dict of shape parameters")
    sp.add_argument("--res", type=int, default=voxel.DEFAULT_RESOLUTION)
    sp.add_argument("--fit", choices=("box", "sphere"), default="box")
    sp.add_argument("--out")

    sp = add("rotate-voxel", cmd_rotate_voxel, "Rotate a binvox grid (random Haar rotation from --seed).")
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--rotation", help="9 row-major floats as JSON, or a JSON file")
    sp.add_argument("--out")

    sp = add("encode-pose", cmd_encode_pose, "Split a rotation into bin index and delta.")
    sp.add_argument("--bins", required=True)
    sp.add_argument("--rotation", help="9 row-major floats as JSON, or a JSON file")
    sp.add_argument("--euler", type=float, nargs=3, metavar=("AZ", "EL", "INPLANE"))
    sp.add_argument("--out")

    sp = add("decode-pose", cmd_decode_pose, "Recover a rotation from bin index and delta.")
    sp.add_argument("--bins", required=True)
    sp.add_argument("--code", help="JSON written by encode-pose")
    sp.add_argument("--bin-index", type=int)
    sp.add_argument("--delta")
    sp.add_argument("--out")

    sp = add("build-db", cmd_build_db, "Build a shape database from [{id, category, vec}] entries.")
    sp.add_argument("--entries", required=True)
    sp.add_argument("--out")

    sp = add("retrieve", cmd_retrieve, "Nearest shape for a query embedding.")
    sp.add_argument("--query", required=True)
    sp.add_argument("--db", required=True)
    sp.add_argument("--out")

    sp = add("train-toy", cmd_train_toy, "Desk-scale Stage I / Stage II training.")
    sp.add_argument("--stage", type=int, choices=(1, 2), required=True)
    sp.add_argument("--out-dir", default=".")
    sp.add_argument("--stage1-dir", help="directory holding Stage I artifacts (stage 2)")
    sp.add_argument("--set", dest="override", nargs=2, action="append", metavar=("KEY", "JSON"),
                    help="override one config value")
    sp.add_argument("--verbose", action="store_true")

    sp = add("evaluate", cmd_evaluate, "Metrics report from a JSON-lines prediction file.")
    sp.add_argument("--pred", required=True)
    sp.add_argument("--report")
    sp.add_argument("--per-category", action="store_true")

    add("selftest", cmd_selftest, "Gradient checks and codec roundtrips.")
    return p


def apply_config(args, parser):
    if not args.config:
        return
    require_files(args.config)
    overrides = read_json(args.config)
    if args.command == "train-toy":
        return          # the trainer reads its own config file
    for k, v in overrides.items():
        key = k.replace("-", "_")
        if key in ("func", "command", "config"):
            continue
        if not hasattr(args, key):
            raise UsageError(f"config key {k!r} is not an option of {args.command}")
        setattr(args, key, v)


def main(argv=None):
    logging.basicConfig(level=logging.INFO, format="%(message)s", stream=sys.stderr)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        apply_config(args, parser)
        if args.seed is None:
            args.seed = default_seed()
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    try:
        args.func(args)
    except UsageError as exc:
        print(f"posekit {args.command}: {exc}", file=sys.stderr)
        return 1
    except (PosekitError, ValueError, KeyError, OSError) as exc:
        print(f"posekit {args.command}: {exc}", file=sys.stderr)
        return 2
    return 0


def main_exit():
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
