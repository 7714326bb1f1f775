import json

import pytest

from semvps.camera import DESK_INTRINSICS, STANDARD_INTRINSICS
from semvps.config import DESK_CONFIG, STANDARD_CONFIG, ConfigError, RendererConfig, config_from_dict, config_preset, load_config
from semvps.geodesy import HK1980
from semvps.matching import DEFAULT_FUSION
from semvps.search import STANDARD_SEARCH


def test_presets():
    assert config_preset("standard") is STANDARD_CONFIG
    assert STANDARD_CONFIG.intrinsics is STANDARD_INTRINSICS
    assert STANDARD_CONFIG.renderer == RendererConfig(512, 2048, 1024)
    assert STANDARD_CONFIG.bf_threshold == 5.0 and STANDARD_CONFIG.fusion is DEFAULT_FUSION
    assert DESK_CONFIG.intrinsics is DESK_INTRINSICS
    with pytest.raises(ConfigError):
        config_preset("laptop")


def test_overrides_merge_onto_preset():
    cfg = config_from_dict({"preset": "desk", "search": {"yaw_span": 10}, "datum": "hk1980", "study": {"n_trials": 7}})
    assert cfg.search.yaw_span == 10 and cfg.search.radius == DESK_CONFIG.search.radius
    assert cfg.datum is HK1980
    assert cfg.study.n_trials == 7 and cfg.study.magnitudes == DESK_CONFIG.study.magnitudes
    assert cfg.renderer == DESK_CONFIG.renderer


def test_named_sections():
    cfg = config_from_dict({"search": "standard", "fusion": "default", "intrinsics": {"width": 100, "height": 75, "fov": 120}})
    assert cfg.search is STANDARD_SEARCH
    assert cfg.intrinsics.width == 100


def test_round_trip_through_dict():
    cfg = config_from_dict({"preset": "desk", "bf_threshold": 7, "bf_fixed_classes": True})
    again = config_from_dict({k: v for k, v in cfg.to_dict().items() if v is not None})
    assert again == cfg


@pytest.mark.parametrize(
    "d",
    [
        {"colour": 1},
        {"search": {"radius": -3}},
        {"search": {"wobble": 1}},
        {"renderer": {"erp_width": 100, "erp_height": 100}},
        {"bf_threshold": 0},
        {"fusion": "other"},
        {"intrinsics": {"width": 10}},
        [],
    ],
)
def test_bad_configs(d):
    with pytest.raises(ConfigError):
        config_from_dict(d)


def test_load_config(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"preset": "desk"}))
    assert load_config(p) == DESK_CONFIG
    p.write_text("{nope")
    with pytest.raises(ConfigError):
        load_config(p)
