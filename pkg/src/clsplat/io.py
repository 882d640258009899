"""Binary scene, volume and projection-stack files.

Scene (``.lgsc``)
    ``b"LGSC"``, ``u32`` version, ``u64`` count ``M``, then ``M`` records of
    11 little-endian ``f32``: raw_density, position (3), quaternion (4),
    raw_scale (3). A ``<path>.json`` sidecar carries ``scene_bounds`` and
    ``s_min``; without it the bounds fall back to the positions' bounding box.
Volume
    raw little-endian ``f32`` in (z, y, x) order plus ``<path>.json`` with
    ``dims`` (nx, ny, nz), ``voxel_size`` and ``origin``.
Projection stack
    raw little-endian ``f32`` images, view-major then ``v`` then ``u``, plus
    ``<path>.json`` with ``nu``, ``nv``, ``pixel_size``, ``angles_rad``,
    ``tilt_alpha_rad``, ``d_so``, ``d_sd``.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .geometry import LaminographyGeometry
from .types import GaussianScene, ProjectionStack, Volume

SCENE_MAGIC = b"LGSC"
SCENE_VERSION = 1
_HEADER = struct.Struct("<4sIQ")
_RECORD = np.dtype("<f4")


def sidecar(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def _require_file(path: Path) -> None:
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")


def _read_json(path: Path) -> dict:
    try:
        return json.loads(path.read_text())
    except FileNotFoundError as e:
        raise ValidationError(f"missing sidecar {path}") from e
    except json.JSONDecodeError as e:
        raise ValidationError(f"malformed sidecar {path}: {e}") from e


def _require(meta: dict, keys, path) -> None:
    missing = [k for k in keys if k not in meta]
    if missing:
        raise ValidationError(f"{path}: missing key(s) {', '.join(missing)}")


def scene_to_bytes(scene: GaussianScene) -> bytes:
    m = len(scene)
    rec = np.empty((m, 11), dtype=_RECORD)
    rec[:, 0] = scene.raw_density
    rec[:, 1:4] = scene.position
    rec[:, 4:8] = scene.quaternion
    rec[:, 8:11] = scene.raw_scale
    return _HEADER.pack(SCENE_MAGIC, SCENE_VERSION, m) + rec.tobytes()


def scene_from_bytes(buf: bytes, bounds=None, s_min: float | None = None) -> GaussianScene:
    if len(buf) < _HEADER.size:
        raise ValidationError("scene buffer shorter than header")
    magic, version, m = _HEADER.unpack_from(buf)
    if magic != SCENE_MAGIC:
        raise ValidationError(f"bad scene magic {magic!r}")
    if version != SCENE_VERSION:
        raise ValidationError(f"unsupported scene version {version}")
    expected = _HEADER.size + m * 11 * _RECORD.itemsize
    if len(buf) != expected:
        raise ValidationError(f"scene buffer has {len(buf)} bytes, expected {expected}")
    rec = np.frombuffer(buf, dtype=_RECORD, offset=_HEADER.size).reshape(m, 11).astype(np.float64)
    if bounds is None:
        if m == 0:
            raise ValidationError("empty scene needs explicit bounds")
        pos = rec[:, 1:4]
        bounds = np.stack([pos.min(axis=0), pos.max(axis=0)])
        flat = bounds[1] - bounds[0] <= 0
        bounds[0, flat] -= 0.5
        bounds[1, flat] += 0.5
    return GaussianScene(rec[:, 0], rec[:, 1:4], rec[:, 4:8], rec[:, 8:11], bounds,
                         -1.0 if s_min is None else s_min)


def save_scene(path, scene: GaussianScene) -> None:
    path = Path(path)
    path.write_bytes(scene_to_bytes(scene))
    sidecar(path).write_text(json.dumps(
        {"scene_bounds": scene.bounds.tolist(), "s_min": scene.s_min}, indent=2))


def load_scene(path) -> GaussianScene:
    path = Path(path)
    bounds = s_min = None
    if sidecar(path).exists():
        meta = _read_json(sidecar(path))
        bounds = meta.get("scene_bounds")
        s_min = meta.get("s_min")
    return scene_from_bytes(path.read_bytes(), bounds, s_min)


def save_volume(path, vol: Volume) -> None:
    path = Path(path)
    path.write_bytes(np.ascontiguousarray(vol.data, dtype="<f4").tobytes())
    sidecar(path).write_text(json.dumps(
        {"dims": list(vol.dims), "voxel_size": vol.voxel_size, "origin": list(vol.origin)}, indent=2))


def load_volume(path) -> Volume:
    path = Path(path)
    _require_file(path)
    meta = _read_json(sidecar(path))
    _require(meta, ("dims", "voxel_size", "origin"), sidecar(path))
    nx, ny, nz = (int(d) for d in meta["dims"])
    data = np.fromfile(path, dtype="<f4")
    if data.size != nx * ny * nz:
        raise ValidationError(f"{path}: {data.size} values, sidecar dims {meta['dims']}")
    return Volume(data.reshape(nz, ny, nx).astype(np.float64), float(meta["voxel_size"]),
                  tuple(meta["origin"]))


def save_projections(path, stack: ProjectionStack, geom: LaminographyGeometry) -> None:
    path = Path(path)
    nu, nv = stack.detector
    if (nu, nv) != (geom.nu, geom.nv):
        raise ValidationError(f"stack detector {nu}x{nv} != geometry {geom.nu}x{geom.nv}")
    path.write_bytes(np.ascontiguousarray(stack.images, dtype="<f4").tobytes())
    sidecar(path).write_text(json.dumps({
        "nu": nu, "nv": nv, "pixel_size": geom.pixel_size,
        "angles_rad": stack.angles.tolist(), "tilt_alpha_rad": geom.tilt,
        "d_so": geom.d_so, "d_sd": geom.d_sd,
    }, indent=2))


def load_projections(path) -> tuple[ProjectionStack, LaminographyGeometry]:
    path = Path(path)
    _require_file(path)
    meta = _read_json(sidecar(path))
    _require(meta, ("nu", "nv", "pixel_size", "angles_rad", "tilt_alpha_rad", "d_so", "d_sd"),
             sidecar(path))
    geom = LaminographyGeometry(float(meta["tilt_alpha_rad"]), float(meta["d_so"]), float(meta["d_sd"]),
                                int(meta["nu"]), int(meta["nv"]), float(meta["pixel_size"]))
    angles = np.asarray(meta["angles_rad"], dtype=np.float64)
    data = np.fromfile(path, dtype="<f4")
    if data.size != angles.size * geom.nv * geom.nu:
        raise ValidationError(f"{path}: {data.size} values, expected "
                              f"{angles.size}x{geom.nv}x{geom.nu}")
    images = data.reshape(angles.size, geom.nv, geom.nu).astype(np.float64)
    return ProjectionStack(images, angles, geom.pixel_size), geom
