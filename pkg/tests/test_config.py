import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pestov_lab.config import DEFAULTS, MIN_MC_COUNT, RunConfig, load_config, parse_config
from pestov_lab.errors import ConfigError


def test_defaults_are_valid():
    cfg = parse_config("", env={})
    assert cfg.to_dict() == dict(sorted(DEFAULTS.items()))
    assert cfg.model().label == "FlatTorus(2)"


def test_nested_and_dotted_keys_agree():
    a = parse_config("model:\n  kind: RoundSphere\n  dim: 3\n", env={})
    b = parse_config("model.kind: RoundSphere\nmodel.dim: 3\n", env={})
    assert a.digest() == b.digest()


@pytest.mark.parametrize(
    "text, key, line",
    [
        ("seed: 1\nmc.count: 10\n", "mc.count", 2),
        ("suite: all\n\nmodel.kind: Klein\n", "model.kind", 3),
        ("tolerance.pointwise: -1\n", "tolerance.pointwise", 1),
        ("bogus.key: 3\n", "bogus.key", 1),
        ("flow.dt: 0\n", "flow.dt", 1),
        ("model.kind: FlatTorus\nmodel.radius: 2\n", "model", None),
        ("workers: two\n", "workers", 1),
    ],
)
def test_errors_name_key_and_line(text, key, line):
    with pytest.raises(ConfigError) as info:
        parse_config(text, env={})
    assert info.value.key == key
    assert info.value.line == line
    assert key in str(info.value)


def test_malformed_yaml_reports_line():
    with pytest.raises(ConfigError) as info:
        parse_config("seed: 1\nmodel: [unclosed\n", env={})
    assert info.value.line is not None


def test_non_mapping_rejected():
    with pytest.raises(ConfigError):
        parse_config("- 1\n- 2\n", env={})


def test_environment_seed_and_flag_precedence():
    cfg = parse_config("seed: 5\n", env={"PESTOV_LAB_SEED": "77"})
    assert cfg["seed"] == 77
    assert cfg.with_overrides({"seed": 9})["seed"] == 9
    with pytest.raises(ConfigError):
        parse_config("", env={"PESTOV_LAB_SEED": "abc"})


def test_overrides_ignore_none_and_validate():
    cfg = parse_config("", env={})
    assert cfg.with_overrides({"seed": None}).digest() == cfg.digest()
    with pytest.raises(ConfigError):
        cfg.with_overrides({"mc.count": MIN_MC_COUNT - 1})


def test_missing_file():
    with pytest.raises(ConfigError):
        load_config("/nonexistent/config.yaml", env={})


@settings(max_examples=40, deadline=None)
@given(
    seed=st.integers(0, 2**64 - 1),
    count=st.integers(MIN_MC_COUNT, 10**7),
    kind=st.sampled_from(["FlatTorus", "RoundSphere", "HyperbolicBall", "PerturbedHyperbolic"]),
    dim=st.integers(2, 4),
    tol=st.floats(1e-15, 1.0),
)
def test_round_trip_is_lossless(seed, count, kind, dim, tol):
    cfg = RunConfig().with_overrides(
        {"seed": seed, "mc.count": count, "model.kind": kind, "model.dim": dim, "tolerance.structural": tol}
    )
    again = parse_config(cfg.dumps(), env={})
    assert again.to_dict() == cfg.to_dict()
    assert again.digest() == cfg.digest()
