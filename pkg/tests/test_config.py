import pytest

from simultaneity.config import dump_config, load_config, parse_config
from simultaneity.errors import ConfigError
from simultaneity.experiments import FIGURES, build_named


def test_units_are_converted():
    system = parse_config("""
        # comp-dominated setup
        C_min_ms = 10
        C_max_ms = 500
        T_f_ms = 10
        D_max_m = 100
        gamma = 4
        gamma_th = 1
    """)
    assert system.scenario.C_min == pytest.approx(0.01)
    assert system.scenario.C_max == pytest.approx(0.5)
    assert system.comm.T_f == pytest.approx(0.01)
    assert [l.gamma for l in system.derived()] == [4.0, 4.0]


def test_sensor_specific_override():
    system = parse_config("gamma = 4\ngamma_th = 1\nsensor.2.gamma = 1\n")
    assert [l.gamma for l in system.derived()] == [4.0, 1.0]


def test_physical_link_parameters():
    system = parse_config("P = 2\nbeta = 0.5\nN0 = 1\nB = 1\nT_p_ms = 4\nb = 0.004\n")
    link = system.derived()[0]
    assert link.gamma == pytest.approx(1.0)
    assert link.gamma_th == pytest.approx(1.0)


@pytest.mark.parametrize("text, fragment", [
    ("gamma_th = 1\nbogus = 3\n", "line 2"),
    ("gamma_th = 1\ngamma = 1\ngamma = 2\n", "line 3"),
    ("gamma_th = 1\nno equals sign\n", "line 2"),
    ("gamma_th = nan\n", "line 1"),
    ("gamma_th = 1\nI = 2.5\n", "line 2"),
    ("gamma_th = 1\ngamma = 1\nsensor.3.gamma = 1\n", "exceed"),
    ("gamma_th = 1\nsensor.1.colour = 1\n", "line 2"),
    ("gamma_th = 1\nC_min_ms = 5\nC_min = 0.005\n", "already set"),
])
def test_bad_config_is_rejected(text, fragment):
    with pytest.raises(ConfigError, match=fragment):
        parse_config(text)


@pytest.mark.parametrize("name", FIGURES)
def test_dump_round_trips(name):
    system = build_named(name)
    assert parse_config(dump_config(system)) == system


def test_dump_round_trips_flags():
    system = parse_config("gamma = 1\ngamma_th = 1\nserialize_grants = yes\nsensor.1.perfect_detection = true\n")
    again = parse_config(dump_config(system))
    assert again == system and again.serialize_grants and again.links[0].perfect_detection


def test_load_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "nope.txt")
