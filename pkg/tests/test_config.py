import pytest

from monadkin.config import KineticsConfig, build_config, override, parse_config
from monadkin.errors import ConfigurationError


def test_minimal_config_takes_scenario_defaults():
    cfg = parse_config('scenario = "box_eigenstate"')
    assert cfg.solver == "schrodinger_cn"
    assert cfg.boundary == "box" and cfg.length == 1.0
    assert cfg.kinetics is None
    assert cfg.n_steps == 1000


def test_full_config_round_trip():
    text = """
scenario = "free_gaussian"
solver = "madelung"
[grid]
points = 256
length = 20
[time]
dt = 1e-3
t_end = 0.1
record_stride = 10
[params]
k = 1
[kinetics]
seed = 7
[output]
dir = "elsewhere"
csv = false
"""
    cfg = parse_config(text)
    assert cfg.solver == "madelung" and cfg.points == 256
    assert cfg.length == 20.0 and isinstance(cfg.length, float)
    assert cfg.kinetics == KineticsConfig(seed=7)
    assert cfg.out_dir == "elsewhere" and cfg.csv is False


@pytest.mark.parametrize(
    "text, key",
    [
        ('scenario = "free_gaussian"\nspeed = 1', "speed"),
        ('scenario = "free_gaussian"\n[grid]\nnodes = 5', "grid.nodes"),
        ('scenario = "free_gaussian"\n[mesh]\nx = 1', "mesh"),
        ('scenario = "free_gaussian"\n[grid]\npoints = 2.5', "grid.points"),
        ('scenario = "free_gaussian"\n[output]\ncsv = "yes"', "output.csv"),
        ("[grid]\npoints = 64", "scenario"),
        ('scenario = "hydrogen"', "scenario"),
    ],
)
def test_bad_keys_are_named(text, key):
    with pytest.raises(ConfigurationError) as info:
        parse_config(text)
    assert info.value.key == key


@pytest.mark.parametrize(
    "values, key",
    [
        ({"scenario": "box_eigenstate", "solver": "schrodinger_split"}, "solver"),
        ({"scenario": "free_gaussian", "boundary": "box"}, "grid.boundary"),
        ({"scenario": "vortex_2d", "solver": "madelung", "dt": 1e-6}, "solver"),
        ({"scenario": "vortex_2d", "dim": 1}, "grid.dim"),
        ({"scenario": "free_gaussian", "solver": "omega", "dt": 1e-2}, "time.dt"),
        ({"scenario": "free_gaussian", "n_monads": 0.5}, "params.n_monads"),
        ({"scenario": "free_gaussian", "dt": -1.0}, "dt"),
    ],
)
def test_incompatible_combinations(values, key):
    with pytest.raises(ConfigurationError) as info:
        build_config(values)
    assert info.value.key == key


def test_kinetics_limits():
    with pytest.raises(ConfigurationError, match="count"):
        build_config({"scenario": "free_gaussian"}, {"count": 10})
    with pytest.raises(ConfigurationError, match="bins"):
        build_config({"scenario": "free_gaussian"}, {"bins": 4})


def test_malformed_toml():
    with pytest.raises(ConfigurationError, match="malformed"):
        parse_config("scenario = ")


def test_override_revalidates_and_switches_scenario():
    cfg = build_config({"scenario": "free_gaussian"})
    assert override(cfg, points=128).points == 128
    assert override(cfg) is cfg
    with pytest.raises(ConfigurationError):
        override(cfg, solver="omega", dt=1.0)
    box = override(cfg, scenario="box_eigenstate")
    assert box.boundary == "box" and box.solver == "schrodinger_cn"
