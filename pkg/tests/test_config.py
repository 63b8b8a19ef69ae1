import json
import math

import numpy as np
import pytest

from agebif.config import DEFAULTS, build_model, parse_config, read_profile_file
from agebif.errors import ConfigError


def _write(tmp_path, data, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return p


def test_minimal_config_defaults(tmp_path):
    cfg = parse_config(_write(tmp_path, {"case": "competing", "xi": 2}))
    assert cfg.grid == {"L": 1.0, "n_x": 64, "a_m": 1.0, "n_a": 128}
    assert all(cfg.model[k] == 1.0 for k in ("alpha1", "alpha2", "beta1", "beta2"))
    assert cfg.model["case"] == "competing" and cfg.xis == [2.0]
    assert cfg.seed == 0


def test_sectioned_and_flat_agree(tmp_path):
    a = parse_config(_write(tmp_path, {"n_x": 32, "alpha2": 0.5}, "a.json"))
    b = parse_config(_write(tmp_path, {"grid": {"n_x": 32}, "model": {"alpha2": 0.5}}, "b.json"))
    assert a.config_hash == b.config_hash


def test_overrides_take_precedence(tmp_path):
    cfg = parse_config(_write(tmp_path, {"case": "competing", "xi": 2}),
                       {"case": "cooperative", "xi": [0.5, 3.0]})
    assert cfg.model["case"] == "cooperative" and cfg.xis == [0.5, 3.0]


@pytest.mark.parametrize("bad,field", [
    ({"alpha1": 0}, "model/alpha1"), ({"beta2": -1.0}, "model/beta2"),
    ({"n_x": 2}, "grid/n_x"), ({"case": "mutualism"}, "model/case"),
    ({"grid": {"dx": 0.1}}, "grid"), ({"unknown": 1}, "<root>"),
    ({"profiles": {"b1": {"family": "sawtooth"}}}, "profiles/b1")])
def test_schema_rejections(tmp_path, bad, field):
    with pytest.raises(ConfigError, match=field):
        parse_config(_write(tmp_path, bad))


def test_unreadable_config(tmp_path):
    with pytest.raises(ConfigError):
        parse_config(tmp_path / "missing.json")
    p = tmp_path / "broken.json"
    p.write_text("{not json")
    with pytest.raises(ConfigError):
        parse_config(p)


def test_env_overrides_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("AGEBIF_OUTPUT_DIR", str(tmp_path / "elsewhere"))
    cfg = parse_config(None, {"output_dir": "here"})
    assert cfg.output_dir == str(tmp_path / "elsewhere")
    # the output location does not enter the hash
    monkeypatch.delenv("AGEBIF_OUTPUT_DIR")
    assert parse_config(None, {"output_dir": "here"}).config_hash == cfg.config_hash


def test_constant_profile_scale_recorded():
    cfg = parse_config(None, {"n_x": 32, "n_a": 64})
    model = build_model(cfg)
    lam = model.eig.lambda1
    assert cfg.profile_scales["b1"] == pytest.approx(lam / -math.expm1(-lam), rel=5e-3)
    assert cfg.profile_scales["b1"] == pytest.approx(9.87, abs=0.05)


def test_tail_vanishing_profile_is_config_error():
    cfg = parse_config(None, {"n_x": 16, "n_a": 32, "profiles": {
        "b1": {"family": "truncated-gaussian-bump", "params": {"center": 0.2, "width": 0.05}}}})
    with pytest.raises(ConfigError, match="maximal age"):
        build_model(cfg)


def test_profile_from_file(tmp_path):
    csv = tmp_path / "b.csv"
    csv.write_text("age,value\n0,0\n0.5,1\n1,2\n")
    cfg = parse_config(_write(tmp_path, {"n_x": 16, "n_a": 32,
                                         "profiles": {"b2": {"file": "b.csv"}}}))
    model = build_model(cfg)
    raw = np.interp(model.ag.ages, [0, 0.5, 1], [0, 1, 2])
    np.testing.assert_allclose(model.b2.samples, raw * cfg.profile_scales["b2"])
    a, v = read_profile_file(str(csv))
    assert list(a) == [0, 0.5, 1]
    csv.write_text("0,1\n0,2\n")
    with pytest.raises(ConfigError):
        read_profile_file(str(csv))


def test_defaults_untouched_by_parsing():
    before = json.dumps(DEFAULTS, sort_keys=True)
    parse_config(None, {"n_x": 8, "xi": [1, 2]})
    assert json.dumps(DEFAULTS, sort_keys=True) == before
