import json

import pytest

from branchmpc.config import (ConfigError, bundled, bundled_names, from_dict, load_config,
                              save_config, to_dict)


def test_bundled_set():
    assert bundled_names() == ["intersection", "junction", "merging", "traffic_light"]


@pytest.mark.parametrize("name", ["intersection", "junction", "merging", "traffic_light"])
def test_round_trip(name, tmp_path):
    cfg = bundled(name)
    save_config(cfg, tmp_path / "c.json")
    again = load_config(tmp_path / "c.json")
    assert again == cfg
    assert again.digest() == cfg.digest()
    assert from_dict(to_dict(cfg)) == cfg


def test_traffic_light_even_odds(traffic_light):
    assert traffic_light.decision.probabilities == (0.5, 0.5)
    assert traffic_light.outcome_names == ["green", "red"]


def _raw(name):
    return to_dict(bundled(name))


def test_defaults_installed():
    d = _raw("merging")
    del d["weights"]["w_j"], d["solver"], d["grid"]
    cfg = from_dict(d)
    assert cfg.weights.w_j == 1.0 and cfg.grid.dt == 0.2 and cfg.grid.horizon == 10.0


@pytest.mark.parametrize("mutate,field", [
    (lambda d: d["geometry"].update(s_br=200.0), "geometry.s_br"),
    (lambda d: d.update(kind="roundabout"), "kind"),
    (lambda d: d["decision"].update(probabilities=[0.5, 0.5]), "decision.probabilities"),
    (lambda d: d["weights"].update(w_v=-1.0), "weights.w_v"),
    (lambda d: d["constraints"].update(u_min=1.0), "constraints.u_min"),
    (lambda d: d["outcomes"][0]["policy"].update(kind="teleport"), "outcomes[0].policy"),
    (lambda d: d["weights"].update(colour=1), "weights.colour"),
    (lambda d: d.pop("av"), "av"),
    (lambda d: d.update(hv=None), "hv"),
    (lambda d: d["av"].update(v=-3.0), "av.v"),
])
def test_validation_names_field(mutate, field):
    d = _raw("merging")
    mutate(d)
    with pytest.raises(ConfigError) as err:
        from_dict(d)
    assert err.value.field == field


def test_file_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
    (tmp_path / "bad.json").write_text("{nope")
    with pytest.raises(ConfigError, match="invalid JSON"):
        load_config(tmp_path / "bad.json")


def test_crossing_frequency_needs_cross_and_stop():
    d = _raw("merging")
    d["decision"]["mode"] = "crossing_frequency"
    with pytest.raises(ConfigError):
        from_dict(d)
