import os

import pytest

from spikestrack.core.config import TrackerConfig, build_tracker_config, load_tracker_config, parse_tracker_config
from spikestrack.core.exceptions import ConfigError

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")


def test_default_config_text_matches_golden_file():
    with open(os.path.join(FIXTURES, "default.conf")) as handle:
        assert TrackerConfig().to_text() == handle.read()


def test_golden_file_loads_to_defaults():
    assert load_tracker_config(os.path.join(FIXTURES, "default.conf")) == TrackerConfig()


def test_config_text_round_trip_with_overrides():
    cfg = TrackerConfig(theta_c=0.6, theta_o=5, phi_cap=10.0, search_window=True, threads=4,
                        segmentation_rule="literal", scoring_mode="structure_only")
    assert parse_tracker_config(cfg.to_text()) == cfg


def test_parse_accepts_comments_and_spacing():
    cfg = parse_tracker_config("# tuned\ntheta_c=0.5\n  beta = 0.2   # slower\n\n")
    assert cfg.theta_c == 0.5
    assert cfg.beta == 0.2
    assert cfg.alpha_f == 0.1


def test_out_of_range_value_names_field_and_bound():
    with pytest.raises(ConfigError) as info:
        parse_tracker_config("theta_c = 1.5\n")
    assert info.value.field == "theta_c"
    assert "(0, 1)" in str(info.value)


def test_unknown_key_is_rejected():
    with pytest.raises(ConfigError) as info:
        build_tracker_config({"theta_x": "1"})
    assert info.value.field == "theta_x"


def test_line_without_value_is_rejected():
    with pytest.raises(ConfigError) as info:
        parse_tracker_config("theta_c\n")
    assert info.value.field == "theta_c"


def test_non_numeric_value_is_rejected():
    with pytest.raises(ConfigError) as info:
        build_tracker_config({"fg_pool_cap": "many"})
    assert info.value.field == "fg_pool_cap"


def test_phi_cap_accepts_none_and_enforces_minimum():
    assert build_tracker_config({"phi_cap": "none"}).phi_cap is None
    assert build_tracker_config({"phi_cap": "5"}).phi_cap == 5.0
    with pytest.raises(ConfigError):
        build_tracker_config({"phi_cap": "0.5"})


def test_missing_file_raises_config_error(tmp_path):
    with pytest.raises(ConfigError):
        load_tracker_config(str(tmp_path / "absent.conf"))


def test_no_path_means_defaults():
    assert load_tracker_config(None) == TrackerConfig()


def test_scoring_mode_is_checked():
    assert parse_tracker_config("scoring_mode = color_only\n").scoring_mode == "color_only"
    with pytest.raises(ConfigError) as info:
        build_tracker_config({"scoring_mode": "texture"})
    assert info.value.field == "scoring_mode"
