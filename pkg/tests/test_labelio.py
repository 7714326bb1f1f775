import io
import json

import numpy as np
import pytest
from PIL import Image

from semvps.camera import DESK_INTRINSICS
from semvps.city_model import PALETTE, Material
from semvps.geodesy import GeoCoord
from semvps.images import LabelImage, Pose, Rotation
from semvps.labelio import (
    colorize,
    load_label_image,
    pose_from_dict,
    pose_to_dict,
    read_pgm,
    save_label_image,
    sidecar_path,
    write_color,
    write_pgm,
)

from .oracles import random_labels


def test_pgm_bytes_are_plain_p5(rng):
    px = random_labels(rng, 7, 11)
    buf = io.BytesIO()
    write_pgm(buf, px)
    data = buf.getvalue()
    header = b"P5\n11 7\n255\n"
    assert data[: len(header)] == header
    assert data[len(header) :] == px.tobytes()
    assert np.array_equal(read_pgm(io.BytesIO(data)), px)


def test_read_rejects_colour(tmp_path):
    p = tmp_path / "c.ppm"
    write_color(p, np.zeros((4, 4), np.uint8))
    with pytest.raises(ValueError):
        read_pgm(p)


def test_colorize_uses_palette():
    px = np.arange(6, dtype=np.uint8).reshape(1, 6)
    rgb = colorize(px)
    for k in range(6):
        assert tuple(rgb[0, k]) == PALETTE[Material(k)]


def test_color_png_by_suffix(tmp_path):
    p = tmp_path / "v.png"
    write_color(p, np.array([[1, 2]], np.uint8))
    with Image.open(p) as im:
        assert im.format == "PNG" and im.getpixel((1, 0)) == PALETTE[Material.GLASS]


def test_label_image_round_trip(tmp_path, rng):
    pose = Pose(GeoCoord(22.3, 114.17, 1.5), Rotation(12.0, 1.0, -2.0))
    img = LabelImage(random_labels(rng, 120, 160), pose)
    p = tmp_path / "q.pgm"
    save_label_image(p, img, DESK_INTRINSICS)
    back = load_label_image(p)
    assert back == img and back.pose == pose
    meta = json.loads(sidecar_path(p).read_text())
    assert meta["intrinsics"]["width"] == 160 and meta["palette"]["glass"] == [0, 255, 0]


def test_load_rejects_non_class_values(tmp_path):
    p = tmp_path / "bad.pgm"
    write_pgm(p, np.full((3, 3), 9, np.uint8))
    with pytest.raises(ValueError):
        load_label_image(p)


def test_pose_dict_defaults():
    p = pose_from_dict({"lat": 22.0, "lon": 114.0})
    assert p.position.alt == 0.0 and p.rotation == Rotation()
    assert pose_from_dict(pose_to_dict(p)) == p
