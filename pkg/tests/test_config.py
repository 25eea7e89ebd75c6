import json

import pytest

from otadp.config import (
    ScenarioConfig,
    apply_overrides,
    default_config,
    load_config,
    parse_config,
)
from otadp.errors import ConfigError


def test_default_round_trip_is_fixed_point():
    text = default_config().to_json()
    again = parse_config(json.loads(text)).to_json()
    assert text == again


def test_partial_file_falls_back_to_defaults(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"market": {"a": 80}, "run": {"seed": 5}}))
    cfg = load_config(path)
    assert cfg.market.a == 80.0 and cfg.run.seed == 5
    assert cfg.channel == default_config().channel


def test_flags_override_file(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"run": {"seed": 5, "n_trials": 7}}))
    cfg = apply_overrides(load_config(path), seed=9)
    assert cfg.run.seed == 9 and cfg.run.n_trials == 7
    assert apply_overrides(cfg, trials=3).run.n_trials == 3


@pytest.mark.parametrize(
    "doc, fragment",
    [
        ({"bogus": 1}, "<root>: unknown key"),
        ({"market": {"a": 1, "b": 2}}, "market: unknown key"),
        ({"market": {"a": "x"}}, "market.a"),
        ({"run": {"n_trials": 1.5}}, "run.n_trials"),
        ({"dp": {"alphas": 0.2}}, "dp.alphas"),
        ({"prosumers": [{"c1": 1, "c2": 1, "v1": -1}]}, r"prosumers\[0\].v2"),
        ({"prosumers": [{"c1": -1, "c2": 1, "v1": -1, "v2": 1}] * 2}, r"prosumers\[0\].c1"),
        ({"channel": {"source": "radio"}}, "channel.source"),
        ({"channel": {"source": "file"}}, "channel.path"),
        ({"run": {"stop_mode": "never"}}, "run.stop_mode"),
        ({"dp": {"delta": 2}}, "dp.delta"),
        ({"asweep": {"a_grid": [30, 20]}}, "asweep.a_grid"),
        ({"compare": {"scenarios": [{"name": "x", "I": 3, "Nr": 8}]}},
         r"compare.scenarios\[0\].snr_db"),
        ([1, 2], "expected an object"),
    ],
)
def test_schema_diagnostics(doc, fragment):
    with pytest.raises(ConfigError, match=fragment):
        parse_config(doc)


def test_json_syntax_error_reports_line_and_column(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{\n  "market": {"a": 1,}\n}\n')
    with pytest.raises(ConfigError, match=r"bad.json:2:\d+"):
        load_config(path)


def test_missing_file():
    with pytest.raises(ConfigError, match="cannot read"):
        load_config("/nonexistent/config.json")


def test_manifest_is_accepted_as_config(tmp_path):
    cfg = default_config()
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps({"command": "run", "config": cfg.to_dict(), "derived": {}}))
    assert load_config(path) == cfg


def test_dataclass_defaults_are_independent():
    a, b = ScenarioConfig(), ScenarioConfig()
    a.dp.alphas.append(9.0)
    assert b.dp.alphas == [0.0, 0.2, 0.4, 0.6, 0.8]
