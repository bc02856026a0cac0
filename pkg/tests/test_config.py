import json

import numpy as np
import pytest

from hfact.config import ExperimentConfig, evaluate_multiplier, multiplier_function
from hfact.errors import ConfigError
from hfact.grid import Grid, GridFunction, write_csv


def test_defaults_validate_and_round_trip(tmp_path):
    cfg = ExperimentConfig()
    cfg.validate()
    path = tmp_path / "cfg.json"
    path.write_text(cfg.to_json())
    again = ExperimentConfig.load(path)
    assert again == cfg
    assert again.to_json() == cfg.to_json()


def test_derived_objects():
    cfg = ExperimentConfig()
    g = cfg.build_grid()
    assert g.size == 129 and g.spacing == (0.125,)
    assert cfg.exponent_config().q == 4.0
    assert cfg.weight_vector(g).is_unit
    B1, B2 = cfg.balls()
    assert B1.center == (-4.0,) and B2.radius == 0.5


def _bad(**changes):
    data = ExperimentConfig().to_dict()
    for path, value in changes.items():
        node = data
        keys = path.split("__")
        for k in keys[:-1]:
            node = node[int(k)] if k.isdigit() else node[k]
        last = keys[-1]
        node[int(last) if last.isdigit() else last] = value
    return data


@pytest.mark.parametrize("changes, where", [
    ({"exponents__p__1": 0.5}, "exponents.p[1]"),
    ({"exponents__p": [4.0]}, "exponents.p"),
    ({"exponents__alpha": 2.0}, "exponents"),
    ({"weights__0__c": -1.0}, "weights[0].c"),
    ({"weights__1": {"kind": "cubic"}}, "weights[1].kind"),
    ({"M": [8.0, 2.0]}, "M[1]"),
    ({"K_max": 0}, "K_max"),
    ({"l": 3}, "l"),
    ({"geometry__r": 0.1}, "geometry.r"),
    ({"geometry__centers": [[-1.0], [0.5]]}, "geometry.centers"),
    ({"geometry__centers": [[-7.9], [4.0]]}, "geometry.centers[0]"),
    ({"grid__points": 2}, "grid.points"),
    ({"formats": ["json", "xml"]}, "formats[1]"),
    ({"multipliers": [{"kind": "wave"}]}, "multipliers[0].kind"),
    ({"dilation_ppr": 1.0}, "dilation_ppr"),
])
def test_validation_names_the_field(changes, where):
    with pytest.raises(ConfigError) as info:
        ExperimentConfig.from_dict(_bad(**changes))
    assert info.value.path == where


def test_unknown_keys_are_rejected():
    with pytest.raises(ConfigError) as info:
        ExperimentConfig.from_dict({"grid": {"points": 65, "spacing": 0.1}})
    assert info.value.path == "grid.spacing"
    with pytest.raises(ConfigError) as info:
        ExperimentConfig.from_dict({"colour": "red"})
    assert info.value.path == "colour"


def test_chain_check_only_without_extension():
    data = _bad(extend_box=False)
    with pytest.raises(ConfigError) as info:
        ExperimentConfig.from_dict(data)
    # the chain for M = 8 still fits; M = 16 is the first to leave the box
    assert info.value.path == "M[1]"
    data["M"] = [4.0]
    data["geometry"]["atom_center"] = [-7.0]
    ExperimentConfig.from_dict(data)


def test_load_errors(tmp_path):
    with pytest.raises(ConfigError):
        ExperimentConfig.load(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        ExperimentConfig.load(bad)
    arr = tmp_path / "arr.json"
    arr.write_text(json.dumps([1, 2]))
    with pytest.raises(ConfigError):
        ExperimentConfig.load(arr)


@pytest.mark.parametrize("spec, expected", [
    ({"kind": "constant", "c": 2.0}, lambda x: np.full_like(x, 2.0)),
    ({"kind": "log", "delta": 0.5}, lambda x: np.log(np.abs(x) + 0.5)),
    ({"kind": "sin", "freq": 2.0}, lambda x: np.sin(2 * x)),
    ({"kind": "power", "a": 0.5, "delta": 1.0, "center": 1.0}, lambda x: np.sqrt(np.abs(x - 1) + 1)),
    ({"kind": "step", "at": 0.3}, lambda x: np.where(x >= 0.3, 1.0, -1.0)),
])
def test_multiplier_kinds(spec, expected):
    g = Grid.uniform(1, -2, 2, 17)
    x = g.points()[:, 0]
    np.testing.assert_allclose(evaluate_multiplier(spec, g).values, expected(x), rtol=1e-15)
    fn = multiplier_function(spec, g)
    np.testing.assert_allclose(fn(g.points()), expected(x), rtol=1e-15)


def test_auto_delta_follows_the_base_grid():
    g = Grid.uniform(1, -2, 2, 17)
    fn = multiplier_function({"kind": "log", "delta": "auto"}, g)
    assert fn(np.zeros((1, 1)))[0] == pytest.approx(np.log(g.spacing[0]))


def test_file_multiplier(tmp_path):
    g = ExperimentConfig().build_grid()
    path = tmp_path / "b.csv"
    write_csv(GridFunction.from_callable(g, lambda p: p[:, 0] ** 2), path)
    b = evaluate_multiplier({"kind": "file", "path": str(path)}, g)
    assert b.values[0] == pytest.approx(g.points()[0, 0] ** 2)
    with pytest.raises(ConfigError):
        evaluate_multiplier({"kind": "file", "path": str(path)}, Grid.uniform(1, -1, 1, 9))
