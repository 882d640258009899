"""Command-line interface: ``clsplat <subcommand> ...``.

Exit codes: 0 success, 1 validation error (bad flag, bad config key, out of
range value), 2 runtime error.

Configuration is layered. Built-in desk defaults come first, then the JSON file
given by ``--config``, then explicit flags and ``--set section.key=value``
pairs. Config sections: ``phantom``, ``geometry``, ``simulate``, ``fdk``,
``af``, ``train``, ``run``.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import sys
from pathlib import Path


from . import io
from .errors import ClsplatError, ValidationError
from .fdk import FdkConfig, fdk
from .geometry import LaminographyGeometry
from .init_af import AfConfig, initialize_scene, uniform_scene
from .metrics import energy_above_support, psnr_volume, report_psnr, ssim_slices
from .optimizer import TrainConfig, train
from .phantom import PhantomSpec, export_slices, generate_phantom, simulate_dataset
from .types import GridSpec, Volume, rasterize_scene_to_volume

log = logging.getLogger("clsplat")

# Desk-scale grid extent; geometry and phantoms are built around a cube of this side.
EXTENT = 2.0

GEOMETRY_KEYS = ("tilt_deg", "d_so", "d_sd", "n_det", "pixel_size")
SIMULATE_KEYS = ("views", "noise", "samples_per_ray")
RUN_KEYS = ("init", "seed", "threads", "dims")

DEFAULTS = {
    "phantom": {},
    "geometry": {"tilt_deg": 30.0, "n_det": 64},
    "simulate": {"views": 50, "noise": 0.0, "samples_per_ray": 512},
    "fdk": {},
    "af": {"num_points": 5000},
    "train": {"iterations": 5000, "grad_threshold": 2e-3},
    "run": {"init": "af", "seed": None, "threads": 0, "dims": 64},
}

SECTION_KEYS = {
    "phantom": tuple(f.name for f in dataclasses.fields(PhantomSpec)),
    "geometry": GEOMETRY_KEYS,
    "simulate": SIMULATE_KEYS,
    "fdk": tuple(f.name for f in dataclasses.fields(FdkConfig)),
    "af": tuple(f.name for f in dataclasses.fields(AfConfig)),
    "train": tuple(TrainConfig.field_names()),
    "run": RUN_KEYS,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValidationError(message)


# ---------------------------------------------------------------- config


def _check_keys(cfg: dict, origin: str) -> None:
    for section, body in cfg.items():
        if section not in SECTION_KEYS:
            raise ValidationError(f"{origin}: unknown config section {section!r}")
        if not isinstance(body, dict):
            raise ValidationError(f"{origin}: section {section!r} must be a mapping")
        for key in body:
            if key not in SECTION_KEYS[section]:
                raise ValidationError(f"{origin}: unknown key {section}.{key}")


def _merge(base: dict, over: dict) -> dict:
    out = {k: dict(v) for k, v in base.items()}
    for section, body in over.items():
        out.setdefault(section, {}).update(body)
    return out


def _parse_set(items) -> dict:
    out: dict = {}
    for item in items or ():
        key, sep, raw = item.partition("=")
        section, dot, name = key.partition(".")
        if not sep or not dot:
            raise ValidationError(f"--set expects section.key=value, got {item!r}")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        out.setdefault(section, {})[name] = value
    return out


def load_config(args) -> dict:
    cfg = DEFAULTS
    if getattr(args, "config", None):
        path = Path(args.config)
        try:
            user = json.loads(path.read_text())
        except OSError as e:
            raise ValidationError(f"cannot read config {path}: {e}") from e
        except json.JSONDecodeError as e:
            raise ValidationError(f"config {path} is not valid JSON: {e}") from e
        if not isinstance(user, dict):
            raise ValidationError(f"config {path} must be a JSON object")
        _check_keys(user, str(path))
        cfg = _merge(cfg, user)
    flags: dict = {}
    for dest, (section, key) in _FLAG_MAP.items():
        value = getattr(args, dest, None)
        if value is not None:
            flags.setdefault(section, {})[key] = value
    sets = _parse_set(getattr(args, "set", None))
    _check_keys(sets, "--set")
    cfg = _merge(_merge(cfg, flags), sets)
    seed = cfg["run"].get("seed")
    if seed is not None:
        # One seed drives every RNG.
        for section, key in (("phantom", "seed"), ("af", "rng_seed"), ("train", "rng_seed")):
            cfg[section][key] = int(seed)
    return cfg


def _build(cls, body: dict, section: str):
    try:
        return cls(**body)
    except TypeError as e:
        raise ValidationError(f"bad {section} config: {e}") from e


def phantom_spec(cfg) -> PhantomSpec:
    body = dict(cfg["phantom"])
    body.setdefault("dims", cfg["run"]["dims"])
    if "levels" in body:
        body["levels"] = tuple(body["levels"])
    return _build(PhantomSpec, body, "phantom")


def geometry(cfg) -> LaminographyGeometry:
    g = cfg["geometry"]
    tilt_deg = float(g["tilt_deg"])
    if not 0.0 <= tilt_deg <= 90.0:
        raise ValidationError(f"tilt must lie in [0, 90] deg (0-pi/2 rad), got {tilt_deg}")
    base = LaminographyGeometry.desk(math.radians(tilt_deg), EXTENT, int(g.get("n_det", 64)))
    return LaminographyGeometry(
        base.tilt,
        float(g.get("d_so", base.d_so)),
        float(g.get("d_sd", base.d_sd)),
        base.nu,
        base.nv,
        float(g.get("pixel_size", base.pixel_size)),
    )


def train_config(cfg) -> TrainConfig:
    body = dict(cfg["train"])
    iterations = int(body.pop("iterations"))
    try:
        return TrainConfig.scaled(iterations, **body)
    except TypeError as e:
        raise ValidationError(f"bad train config: {e}") from e


def _grid(cfg) -> GridSpec:
    dims = int(cfg["run"]["dims"])
    if dims <= 0:
        raise ValidationError(f"dims must be positive, got {dims}")
    return GridSpec.centered(dims, EXTENT)


def _set_threads(n: int) -> None:
    import numba

    if n < 0:
        raise ValidationError(f"--threads must be >= 0, got {n}")
    limit = numba.config.NUMBA_NUM_THREADS
    if n > limit:
        raise ValidationError(f"--threads {n} exceeds the {limit} available")
    numba.set_num_threads(n or limit)


def _write_jsonl(path: Path, records) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


def _load_any_volume(path: str, grid: GridSpec) -> Volume:
    """A volume file, or a scene file rasterized onto ``grid``."""
    p = Path(path)
    if io.sidecar(p).exists() and "dims" in json.loads(io.sidecar(p).read_text()):
        return io.load_volume(p)
    return rasterize_scene_to_volume(io.load_scene(p), grid)


# ---------------------------------------------------------------- commands


def cmd_phantom(args, cfg):
    vol = generate_phantom(phantom_spec(cfg))
    io.save_volume(args.out, vol)
    print(f"wrote {args.out} dims={vol.dims}")


def cmd_simulate(args, cfg):
    phantom = io.load_volume(args.phantom)
    geom = geometry(cfg)
    sim = cfg["simulate"]
    stack = simulate_dataset(phantom, geom, int(sim["views"]), float(sim["noise"]),
                             int(cfg["run"]["seed"] or 0), int(sim["samples_per_ray"]))
    io.save_projections(args.out, stack, geom)
    print(f"wrote {args.out} views={len(stack)}")


def cmd_fdk(args, cfg):
    stack, geom = io.load_projections(args.projections)
    vol = fdk(stack, geom, _grid(cfg), _build(FdkConfig, cfg["fdk"], "fdk"))
    io.save_volume(args.out, vol)
    print(f"wrote {args.out}")


def _init_scene(fdk_vol: Volume, cfg):
    af = _build(AfConfig, cfg["af"], "af")
    kind = cfg["run"]["init"]
    if kind == "af":
        return initialize_scene(fdk_vol, af)
    if kind == "uniform":
        return uniform_scene(fdk_vol, af)
    raise ValidationError(f"init must be 'af' or 'uniform', got {kind!r}")


def cmd_init(args, cfg):
    scene = _init_scene(io.load_volume(args.fdk_volume), cfg)
    io.save_scene(args.out, scene)
    print(f"wrote {args.out} M={len(scene)}")


def _reconstruct(stack, geom, scene, cfg, out: Path, metrics: Path, timings_path: Path | None):
    tc = train_config(cfg)
    timings: list = []
    final, records = train(stack, geom, scene, tc, timings=timings)
    io.save_scene(out, final)
    _write_jsonl(metrics, records)
    if timings_path is not None:
        _write_jsonl(timings_path, timings)
    return final, records


def cmd_reconstruct(args, cfg):
    stack, geom = io.load_projections(args.projections)
    if args.init_scene:
        scene = io.load_scene(args.init_scene)
    else:
        scene = _init_scene(fdk(stack, geom, _grid(cfg), _build(FdkConfig, cfg["fdk"], "fdk")), cfg)
    metrics = Path(args.metrics or str(args.out) + ".metrics.jsonl")
    timings = Path(args.timings) if args.timings else None
    final, records = _reconstruct(stack, geom, scene, cfg, Path(args.out), metrics, timings)
    last = records[-1] if records else {}
    print(f"wrote {args.out} M={len(final)} loss={last.get('loss', float('nan')):.6g}")


def evaluate(a: Volume, b: Volume, axis: str = "z") -> dict:
    return {"psnr": report_psnr(psnr_volume(a, b)), "ssim": ssim_slices(a, b, axis)}


def cmd_eval(args, cfg):
    grid = _grid(cfg)
    a = _load_any_volume(args.volume, grid)
    b = _load_any_volume(args.reference, grid)
    print(json.dumps(evaluate(a, b, args.axis)))


def cmd_export(args, cfg):
    vol = _load_any_volume(args.input, _grid(cfg))
    window = tuple(args.window) if args.window else None
    paths = export_slices(vol, args.axis, args.out_dir, window)
    print(f"wrote {len(paths)} slices to {args.out_dir}")


def cmd_pipeline(args, cfg):
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    grid = _grid(cfg)
    geom = geometry(cfg)
    phantom = generate_phantom(phantom_spec(cfg))
    io.save_volume(out / "phantom.vol", phantom)

    sim = cfg["simulate"]
    stack = simulate_dataset(phantom, geom, int(sim["views"]), float(sim["noise"]),
                             int(cfg["run"]["seed"] or 0), int(sim["samples_per_ray"]))
    io.save_projections(out / "projections.bin", stack, geom)

    fdk_vol = fdk(stack, geom, grid, _build(FdkConfig, cfg["fdk"], "fdk"))
    io.save_volume(out / "fdk.vol", fdk_vol)

    scene = _init_scene(fdk_vol, cfg)
    io.save_scene(out / "init.lgsc", scene)

    final, _ = _reconstruct(stack, geom, scene, cfg, out / "scene.lgsc",
                            out / "metrics.jsonl", out / "timings.jsonl")
    recon = rasterize_scene_to_volume(final, grid)
    io.save_volume(out / "recon.vol", recon)

    report = {
        "fdk": evaluate(fdk_vol, phantom),
        "recon": evaluate(recon, phantom),
        "energy_above_plate": {
            "fdk": energy_above_support(fdk_vol, phantom),
            "recon": energy_above_support(recon, phantom),
        },
        "gaussians": len(final),
        "config": cfg,
    }
    (out / "report.json").write_text(json.dumps(report, indent=2))
    print(json.dumps({k: report[k] for k in ("fdk", "recon", "gaussians")}))


# ---------------------------------------------------------------- parser

# argparse dest -> (config section, key)
_FLAG_MAP = {
    "kind": ("phantom", "kind"),
    "plate_fraction": ("phantom", "plate_fraction"),
    "dims": ("run", "dims"),
    "tilt_deg": ("geometry", "tilt_deg"),
    "n_det": ("geometry", "n_det"),
    "views": ("simulate", "views"),
    "noise": ("simulate", "noise"),
    "samples_per_ray": ("simulate", "samples_per_ray"),
    "filter": ("fdk", "filter"),
    "init": ("run", "init"),
    "seed": ("run", "seed"),
    "threads": ("run", "threads"),
}


def _parse_bool(text: str) -> bool:
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _dataclass_flags(parser, cls, section: str, aliases=None) -> None:
    """One ``--field-name`` flag per dataclass field; seeds come from ``--seed``."""
    aliases = aliases or {}
    for f in dataclasses.fields(cls):
        if f.name == "rng_seed":
            continue
        kind = type(f.default)
        conv = _parse_bool if kind is bool else kind
        dest = f"{section}__{f.name}"
        names = ["--" + f.name.replace("_", "-")] + aliases.get(f.name, [])
        if kind is tuple:
            parser.add_argument(*names, dest=dest, type=float, nargs="+", metavar="X")
        else:
            parser.add_argument(*names, dest=dest, type=conv, metavar=kind.__name__.upper())
        _FLAG_MAP[dest] = (section, f.name)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                        help="override one config value (repeatable)")
    common.add_argument("--seed", type=int, help="seed for every RNG")
    common.add_argument("--threads", type=int, help="worker threads, 0 = all cores")
    common.add_argument("--dims", type=int, help="cubic grid size")
    common.add_argument("-v", "--verbose", action="store_true")

    geo = _Parser(add_help=False)
    geo.add_argument("--tilt-deg", type=float, dest="tilt_deg")
    geo.add_argument("--n-det", type=int, dest="n_det")

    sim = _Parser(add_help=False)
    sim.add_argument("--views", type=int)
    sim.add_argument("--noise", type=float)
    sim.add_argument("--samples-per-ray", type=int, dest="samples_per_ray")

    ph = _Parser(add_help=False)
    ph.add_argument("--kind")
    ph.add_argument("--plate-fraction", type=float, dest="plate_fraction")

    init = _Parser(add_help=False)
    init.add_argument("--init", choices=("af", "uniform"))
    init.add_argument("--filter", choices=("ramp", "ramp-hann"))
    _dataclass_flags(init, AfConfig, "af", aliases={"num_points": ["--points"]})

    tr = _Parser(add_help=False)
    _dataclass_flags(tr, TrainConfig, "train")

    p = _Parser(prog="clsplat", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("phantom", parents=[common, ph], help="generate a voxel phantom")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_phantom)

    s = sub.add_parser("simulate", parents=[common, geo, sim], help="project a phantom")
    s.add_argument("phantom")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("fdk", parents=[common], help="FDK reconstruction")
    s.add_argument("projections")
    s.add_argument("--filter", choices=("ramp", "ramp-hann"))
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_fdk)

    s = sub.add_parser("init", parents=[common, init], help="initial Gaussians from an FDK volume")
    s.add_argument("fdk_volume")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_init)

    s = sub.add_parser("reconstruct", parents=[common, init, tr], help="optimize Gaussians")
    s.add_argument("projections")
    s.add_argument("--init-scene", help="start from this scene file instead of --init")
    s.add_argument("--out", required=True)
    s.add_argument("--metrics", help="metrics log (default: OUT.metrics.jsonl)")
    s.add_argument("--timings", help="wall-clock log, kept apart so metrics stay reproducible")
    s.set_defaults(func=cmd_reconstruct)

    s = sub.add_parser("eval", parents=[common], help="PSNR / SSIM of a volume or scene")
    s.add_argument("volume")
    s.add_argument("reference")
    s.add_argument("--axis", default="z", choices=("x", "y", "z"))
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("export", parents=[common], help="write PNG slices")
    s.add_argument("input")
    s.add_argument("--axis", default="z", choices=("x", "y", "z"))
    s.add_argument("--window", type=float, nargs=2, metavar=("LO", "HI"))
    s.add_argument("--out-dir", required=True, dest="out_dir")
    s.set_defaults(func=cmd_export)

    s = sub.add_parser("pipeline", parents=[common, geo, sim, ph, init, tr],
                       help="phantom -> projections -> FDK -> init -> reconstruct -> eval")
    s.add_argument("--out-dir", default="run", dest="out_dir")
    s.set_defaults(func=cmd_pipeline)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        cfg = load_config(args)
        _set_threads(int(cfg["run"]["threads"]))
        args.func(args, cfg)
    except ValidationError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (ClsplatError, OSError, ValueError, RuntimeError, FloatingPointError) as e:
        print(f"runtime error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
