"""Label image files: 8-bit PGM holding class indices, a colour PPM for
viewing, and a JSON sidecar carrying pose and intrinsics.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image

from .camera import CameraIntrinsics
from .city_model import N_CLASSES, PALETTE, Material
from .geodesy import GeoCoord
from .images import LabelImage, Pose, Rotation


def write_pgm(dest, pixels: np.ndarray) -> None:
    """Binary (P5) graymap, one class index per byte. ``dest`` is a path or binary file."""
    px = np.ascontiguousarray(pixels, dtype=np.uint8)
    Image.fromarray(px).save(dest, format="PPM")


def read_pgm(src) -> np.ndarray:
    with Image.open(src) as im:
        if im.mode != "L":
            raise ValueError(f"expected an 8-bit graymap, got mode {im.mode}")
        return np.array(im, dtype=np.uint8)


def colorize(pixels: np.ndarray) -> np.ndarray:
    lut = np.zeros((256, 3), dtype=np.uint8)
    for m, rgb in PALETTE.items():
        lut[int(m)] = rgb
    return lut[np.asarray(pixels, dtype=np.uint8)]


def write_color(dest, pixels: np.ndarray) -> None:
    """Palette-coloured export; the format follows the file suffix (PPM if unsure)."""
    fmt = None if isinstance(dest, (str, Path)) and Path(dest).suffix else "PPM"
    Image.fromarray(colorize(pixels)).save(dest, format=fmt)


def pose_to_dict(p: Pose) -> dict:
    return {
        "lat": p.position.lat,
        "lon": p.position.lon,
        "alt": p.position.alt,
        "yaw": p.rotation.yaw,
        "pitch": p.rotation.pitch,
        "roll": p.rotation.roll,
    }


def pose_from_dict(d: dict) -> Pose:
    return Pose(
        GeoCoord(float(d["lat"]), float(d["lon"]), float(d.get("alt", 0.0))),
        Rotation(float(d.get("yaw", 0.0)), float(d.get("pitch", 0.0)), float(d.get("roll", 0.0))),
    )


def palette_record() -> dict:
    return {Material(k).name.lower(): list(PALETTE[Material(k)]) for k in range(N_CLASSES)}


def sidecar_path(path) -> Path:
    return Path(path).with_suffix(".json")


def save_label_image(path, img: LabelImage, intr: Optional[CameraIntrinsics] = None) -> None:
    """Write ``path`` (PGM) and a JSON sidecar next to it."""
    path = Path(path)
    write_pgm(path, img.pixels)
    meta = {"width": img.width, "height": img.height, "palette": palette_record()}
    if img.pose is not None:
        meta["pose"] = pose_to_dict(img.pose)
    if intr is not None:
        meta["intrinsics"] = intr.to_dict()
    sidecar_path(path).write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")


def load_label_image(path) -> LabelImage:
    """Read a class-index PGM; the sidecar's pose is attached when present."""
    path = Path(path)
    px = read_pgm(path)
    if px.size and px.max() >= N_CLASSES:
        raise ValueError(f"{path}: pixel value {int(px.max())} is not a class index")
    pose = None
    side = sidecar_path(path)
    if side.exists():
        meta = json.loads(side.read_text())
        if "pose" in meta:
            pose = pose_from_dict(meta["pose"])
    return LabelImage(px, pose)
