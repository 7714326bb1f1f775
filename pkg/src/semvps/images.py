"""Label images, rotations and poses shared by the renderer, camera and search code."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .city_model import N_CLASSES
from .geodesy import GeoCoord


@dataclass(frozen=True)
class Rotation:
    """Camera attitude in degrees.

    yaw is the heading, clockwise from north; pitch is positive looking up;
    roll is about the viewing axis, positive when the camera's right side dips.
    Applied as yaw about the vertical, then pitch, then roll.
    """

    yaw: float = 0.0
    pitch: float = 0.0
    roll: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.yaw, self.pitch, self.roll)):
            raise ValueError("rotation angles must be finite")
        if not -90.0 <= self.pitch <= 90.0:
            raise ValueError(f"pitch {self.pitch} outside [-90, 90]")
        object.__setattr__(self, "yaw", float(self.yaw) % 360.0)
        object.__setattr__(self, "pitch", float(self.pitch))
        roll = (float(self.roll) + 180.0) % 360.0 - 180.0
        object.__setattr__(self, "roll", 180.0 if roll == -180.0 else roll)

    def matrix(self) -> np.ndarray:
        return rotation_matrix(self.yaw, self.pitch, self.roll)


@dataclass(frozen=True)
class Pose:
    position: GeoCoord
    rotation: Rotation


def _rz(yaw):
    c, s = math.cos(math.radians(yaw)), math.sin(math.radians(yaw))
    return np.array([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]])


def _rx(pitch):
    c, s = math.cos(math.radians(pitch)), math.sin(math.radians(pitch))
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def _ry(roll):
    c, s = math.cos(math.radians(roll)), math.sin(math.radians(roll))
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rotation_matrix(yaw: float, pitch: float, roll: float) -> np.ndarray:
    """Camera (right, forward, up) -> world (east, north, up)."""
    return _rz(yaw) @ _rx(pitch) @ _ry(roll)


def tilt_matrix(pitch: float, roll: float) -> np.ndarray:
    """The yaw-free part of :func:`rotation_matrix`."""
    return _rx(pitch) @ _ry(roll)


@dataclass(eq=False)
class LabelImage:
    """Per-pixel material class indices, ``pixels[row, col]``."""

    pixels: np.ndarray
    pose: Optional[Pose] = None

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 2:
            raise ValueError("label image must be two-dimensional")
        if px.dtype != np.uint8:
            if px.size and (px.min() < 0 or px.max() >= N_CLASSES):
                raise ValueError("label values must be class indices 0..5")
            px = px.astype(np.uint8)
        elif px.size and px.max() >= N_CLASSES:
            raise ValueError("label values must be class indices 0..5")
        self.pixels = px

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def shape(self):
        return self.pixels.shape

    def __eq__(self, other):
        if not isinstance(other, LabelImage):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and bool(np.array_equal(self.pixels, other.pixels))
