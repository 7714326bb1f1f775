"""Pinhole intrinsics and IMU-driven rectification of label images.

Pixel ``(col, row)`` has its centre at continuous coordinates
``(col + 0.5, row + 0.5)``. The camera frame is (right, forward, up), so a
pixel's ray is ``((x - cx) / fx, 1, -(y - cy) / fy)``.

Rectification maps a tilted photo to the view of a level camera at the same
heading. For a pure rotation with known intrinsics this is the homography
``P R^T K^-1`` (level pixel -> tilted pixel), with ``R`` the pitch/roll
rotation. It factors into the in-plane rotation about the principal point
that undoes the roll (horizon correction) followed by the pitch-induced
keystone warp; composing them into one matrix keeps the inverse exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .city_model import Material
from .images import LabelImage, tilt_matrix


@dataclass(frozen=True)
class CameraIntrinsics:
    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image size must be positive")
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")

    @classmethod
    def from_diagonal_fov(cls, width: int, height: int, fov_deg: float) -> "CameraIntrinsics":
        half_diag = 0.5 * math.hypot(width, height)
        f = half_diag / math.tan(math.radians(fov_deg) / 2.0)
        return cls(width, height, f, f, width / 2.0, height / 2.0)

    @property
    def diagonal_fov(self) -> float:
        # only meaningful for square pixels and a centred principal point
        return 2.0 * math.degrees(math.atan(0.5 * math.hypot(self.width, self.height) / self.fx))

    def scaled(self, width: int, height: int) -> "CameraIntrinsics":
        sx, sy = width / self.width, height / self.height
        return CameraIntrinsics(width, height, self.fx * sx, self.fy * sy, self.cx * sx, self.cy * sy)

    def back_project(self) -> np.ndarray:
        """Pixel -> ray matrix acting on homogeneous ``(x, y, 1)``."""
        return np.array(
            [
                [1.0 / self.fx, 0.0, -self.cx / self.fx],
                [0.0, 0.0, 1.0],
                [0.0, -1.0 / self.fy, self.cy / self.fy],
            ]
        )

    def project(self) -> np.ndarray:
        """Ray -> homogeneous pixel matrix; divide by the third component."""
        return np.array([[self.fx, self.cx, 0.0], [0.0, self.cy, -self.fy], [0.0, 1.0, 0.0]])

    def rays(self) -> np.ndarray:
        """Unit camera-frame rays through every pixel centre, shape ``(height, width, 3)``."""
        x = (np.arange(self.width) + 0.5 - self.cx) / self.fx
        y = -(np.arange(self.height) + 0.5 - self.cy) / self.fy
        r = np.empty((self.height, self.width, 3))
        r[..., 0] = x[None, :]
        r[..., 1] = 1.0
        r[..., 2] = y[:, None]
        return r / np.linalg.norm(r, axis=2, keepdims=True)

    def to_dict(self) -> dict:
        return {"width": self.width, "height": self.height, "fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy}

    @classmethod
    def from_dict(cls, d) -> "CameraIntrinsics":
        if isinstance(d, str):
            return intrinsics_preset(d)
        if "fov" in d:
            return cls.from_diagonal_fov(int(d["width"]), int(d["height"]), float(d["fov"]))
        return cls(int(d["width"]), int(d["height"]), float(d["fx"]), float(d["fy"]), float(d["cx"]), float(d["cy"]))


# Smartphone ultra-wide camera: 120° diagonal FOV, 4:3, 1000x750.
STANDARD_INTRINSICS = CameraIntrinsics.from_diagonal_fov(1000, 750, 120.0)
# Same lens at a resolution that keeps exhaustive search fast on a desk machine.
DESK_INTRINSICS = CameraIntrinsics.from_diagonal_fov(160, 120, 120.0)

_PRESETS = {"standard": STANDARD_INTRINSICS, "desk": DESK_INTRINSICS}


def intrinsics_preset(name: str) -> CameraIntrinsics:
    try:
        return _PRESETS[name.lower()]
    except KeyError:
        raise ValueError(f"unknown intrinsics preset {name!r}; known: {sorted(_PRESETS)}") from None


@dataclass(frozen=True)
class ImuAttitude:
    pitch: float = 0.0
    roll: float = 0.0

    def __post_init__(self):
        if abs(self.pitch) > 90.0:
            raise ValueError("|pitch| must not exceed 90°")
        if abs(self.roll) > 180.0:
            raise ValueError("|roll| must not exceed 180°")


def _check(a: ImuAttitude) -> None:
    if abs(a.pitch) >= 90.0:
        raise ValueError("cannot rectify with |pitch| >= 90°: the horizon is not in view")


def rectify_homography(a: ImuAttitude, intr: CameraIntrinsics) -> np.ndarray:
    """Rectified (level) pixel coords -> raw (tilted) pixel coords."""
    _check(a)
    return intr.project() @ tilt_matrix(a.pitch, a.roll).T @ intr.back_project()


def derectify_homography(a: ImuAttitude, intr: CameraIntrinsics) -> np.ndarray:
    """Raw (tilted) pixel coords -> rectified pixel coords; inverse of :func:`rectify_homography`."""
    _check(a)
    return intr.project() @ tilt_matrix(a.pitch, a.roll) @ intr.back_project()


def apply_homography(h: np.ndarray, x: np.ndarray, y: np.ndarray):
    """Map continuous coords; returns ``(x', y', valid)`` with ``valid`` false behind the camera."""
    w = h[2, 0] * x + h[2, 1] * y + h[2, 2]
    valid = w > 1e-12
    with np.errstate(divide="ignore", invalid="ignore"):
        xs = (h[0, 0] * x + h[0, 1] * y + h[0, 2]) / w
        ys = (h[1, 0] * x + h[1, 1] * y + h[1, 2]) / w
    return xs, ys, valid


def warp_labels(pixels: np.ndarray, h_out_to_src: np.ndarray, fill: int = int(Material.SKY)):
    """Nearest-neighbour warp. Returns ``(warped, valid_mask)``."""
    rows, cols = pixels.shape
    yy, xx = np.mgrid[0:rows, 0:cols]
    xs, ys, valid = apply_homography(h_out_to_src, xx + 0.5, yy + 0.5)
    with np.errstate(invalid="ignore"):
        ix = np.floor(xs)
        iy = np.floor(ys)
        valid &= (ix >= 0) & (ix < cols) & (iy >= 0) & (iy < rows)
    out = np.full(pixels.shape, fill, dtype=np.uint8)
    out[valid] = pixels[iy[valid].astype(np.int64), ix[valid].astype(np.int64)]
    return out, valid


def _same_size(img: LabelImage, intr: CameraIntrinsics) -> None:
    if (img.width, img.height) != (intr.width, intr.height):
        raise ValueError(f"image is {img.width}x{img.height} but intrinsics are {intr.width}x{intr.height}")


def rectify(img: LabelImage, a: ImuAttitude, intr: CameraIntrinsics) -> LabelImage:
    """Level a tilted label image; pixels with no source become Sky."""
    _same_size(img, intr)
    out, _ = warp_labels(img.pixels, rectify_homography(a, intr))
    return replace(img, pixels=out)


def derectify(img: LabelImage, a: ImuAttitude, intr: CameraIntrinsics) -> LabelImage:
    """Undo :func:`rectify` for the same attitude."""
    _same_size(img, intr)
    out, _ = warp_labels(img.pixels, derectify_homography(a, intr))
    return replace(img, pixels=out)
