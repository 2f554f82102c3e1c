import numpy as np
import pytest

from homcontrol.scenario import (SEED_ENV, ParseError, SetpointProfile, ValidationError,
                                 bundled_scenarios, dump_scenario, load_bundled,
                                 parse_scenario_text, resolve_seed)

MINIMAL = "[scenario]\nplant = scalar_cubic\n"


def test_minimal_defaults():
    sc = parse_scenario_text(MINIMAL)
    assert sc.sim.dt == 1e-4 and sc.sim.alpha == 10.0
    assert sc.mode == "hybrid" and sc.x0 == (0.0,)
    assert sc.setpoints[0].value(3.0) == 0.0


def test_negative_dt_is_rejected():
    with pytest.raises(ValidationError) as err:
        parse_scenario_text(MINIMAL + "[sim]\ndt = -1\n")
    assert "dt must be > 0" in err.value.problems


def test_unknown_key_reports_line():
    with pytest.raises(ParseError) as err:
        parse_scenario_text(MINIMAL + "[sim]\ndt = 1e-3\nstep = 2\n")
    assert err.value.line == 5 and err.value.key == "step"


@pytest.mark.parametrize("text, fragment", [
    ("[scenario]\nplant = pendulum\n", "unknown plant"),
    (MINIMAL + "[initial]\nx0 = 1, 2\n", "x0 must have 1 entries"),
    (MINIMAL + "[scenario2]\n", None),
    (MINIMAL + "[setpoint]\ny1 = 1:0, 0:1\n", "increasing"),
    ("[scenario]\nplant = mimo_toy\n[controller]\nkp_current = 1\n", "unknown controller key"),
])
def test_invalid_files(text, fragment):
    with pytest.raises((ParseError, ValidationError)) as err:
        parse_scenario_text(text)
    if fragment:
        assert fragment in str(err.value)


def test_bad_number_is_parse_error():
    with pytest.raises(ParseError) as err:
        parse_scenario_text(MINIMAL + "[sim]\nt_end = soon\n")
    assert err.value.line == 4


def test_setpoint_profile():
    p = SetpointProfile((0.0, 2.0), (0.0, 100.0))
    assert p.value(1.0) == pytest.approx(50.0)
    assert p.value(5.0) == 100.0
    assert p.slope(1.0) == pytest.approx(50.0)
    assert p.slope(3.0) == 0.0


def test_bundled_set():
    assert set(bundled_scenarios()) == {"scalar_cubic", "mimo_toy", "motor"}


@pytest.mark.parametrize("name", ["scalar_cubic", "mimo_toy", "motor"])
def test_roundtrip(name):
    sc = load_bundled(name)
    assert parse_scenario_text(dump_scenario(sc)) == sc


def test_motor_experiment():
    sc = load_bundled("motor")
    assert sc.plant == "induction_motor"
    assert sc.sim.noise_variance == 0.005
    assert sc.setpoints[0].value(5.0) == pytest.approx(0.31 ** 2)
    assert sc.setpoints[1].value(2.0) == pytest.approx(100.0)
    assert sc.setpoints[1].value(1.0) == pytest.approx(50.0)


def test_seed_precedence(monkeypatch):
    monkeypatch.delenv(SEED_ENV, raising=False)
    assert resolve_seed(3) == 3
    monkeypatch.setenv(SEED_ENV, "9")
    assert resolve_seed(3) == 9
    assert resolve_seed(3, 42) == 42


def test_with_seed():
    sc = load_bundled("motor").with_seed(42)
    assert sc.sim.rng_seed == 42 and np.isclose(sc.sim.dt, 1e-4)
