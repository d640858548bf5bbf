from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reactms.config import parse_config, parse_config_text, serialize_config
from reactms.errors import ConfigError

DEMOS = Path(__file__).resolve().parent.parent / "demos"

MINIMAL = """
[[species]]
mass = 1.0
[[species]]
mass = 3.0
[[species]]
mass = 2.0
[[species]]
mass = 2.0
"""


def test_minimal_config_defaults():
    cfg = parse_config_text(MINIMAL)
    assert cfg.seed == 0
    assert cfg.kernel.gamma == 1.0
    assert cfg.diffusion.closure == "zero_mass_flux"
    assert cfg.time.integrator == "explicit"
    assert cfg.reaction().masses.tolist() == [1.0, 3.0, 2.0, 2.0]


@pytest.mark.parametrize("name", ["verify_default.toml", "relax0d.toml", "diffuse1d.toml"])
def test_demo_configs_roundtrip(name):
    cfg = parse_config(DEMOS / name)
    text = serialize_config(cfg)
    again = parse_config_text(text, base_dir=cfg.base_dir)
    assert again == cfg
    assert serialize_config(again) == text


def test_unknown_key_reports_line_and_suggestion():
    text = MINIMAL + "\n[difusion]\nclosure = 'zero_molar_flux'\n"
    with pytest.raises(ConfigError) as err:
        parse_config_text(text, "scenario.toml")
    msg = str(err.value)
    assert "scenario.toml:11" in msg
    assert "diffusion" in msg


@pytest.mark.parametrize(
    "extra, fragment",
    [
        ("[kernel]\ngamma = 0.5\n", "gamma"),
        ("[kernel.reaction.phi]\nfamily = 'power'\np_self = 1.0\n", "symmetric"),
        ("[kernel.elastic.phi]\nfamily = 'constant'\np_R = 1.0\n", "p_R"),
        ("[kernel.elastic.b]\nfamily = 'cosine'\n", "family"),
        ("[time]\nintegrator = 'rk4'\n", "integrator"),
        ("[grid]\ncells = 0\n", "cells"),
        ("[initial]\nT = { value = 0.0 }\n", "positive"),
        ("[initial]\nn1 = { profile = 'gaussian_bump', value = 0.2, amplitude = -0.5 }\n", "non-negative"),
        ("[coefficients]\ntemperatures = [1.0, -2.0]\n", "positive"),
        ("[coefficients]\ntemperatures = 'hot'\n", "list"),
        ("seed = -1\n", "seed"),
        ("[kernel.pairs.5-1]\n", "pairs"),
    ],
)
def test_invalid_values_are_rejected(extra, fragment):
    head = "seed = -1\n" if extra.startswith("seed") else ""
    body = extra if not head else ""
    with pytest.raises(ConfigError, match=fragment):
        parse_config_text(head + MINIMAL + body)


def test_species_count_and_alpha_checks():
    with pytest.raises(ConfigError, match="four"):
        parse_config_text("[[species]]\nmass = 1.0\n")
    with pytest.raises(ConfigError, match="alpha"):
        parse_config_text(MINIMAL.replace("mass = 3.0", "mass = 3.0\nalpha = 1.5", 1))
    with pytest.raises(ConfigError, match="mass"):
        parse_config_text(MINIMAL.replace("mass = 3.0", "mass = -3.0", 1))


def test_malformed_toml():
    with pytest.raises(ConfigError, match="malformed"):
        parse_config_text("[[species]\nmass = 1")


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        parse_config(tmp_path / "nope.toml")


def test_weight_table_is_resolved_relative_to_config(tmp_path):
    grid = np.linspace(0.0, 40.0, 81)
    np.savetxt(tmp_path / "w.csv", np.column_stack([grid, 1.0 + grid]), delimiter=",", header="I,phi", comments="")
    text = MINIMAL.replace("mass = 3.0", "mass = 3.0\nweight_table = 'w.csv'", 1)
    path = tmp_path / "s.toml"
    path.write_text(text)
    cfg = parse_config(path)
    reaction = cfg.reaction()
    assert not reaction.species[1].polytropic
    with pytest.raises(ConfigError):
        parse_config_text(text, base_dir=str(tmp_path / "elsewhere"))


def test_pair_override_builds_kernel():
    text = MINIMAL + "[kernel.pairs.1-2.phi]\nfamily = 'one_minus_R_power'\np_R = 2.0\n"
    kern = parse_config_text(text).kernel_spec()
    assert kern.elastic_phi(0, 1)(1.0, 1.0, 0.5, 0.5) == pytest.approx(0.25)
    assert kern.elastic_phi(0, 2)(1.0, 1.0, 0.5, 0.5) == pytest.approx(1.0)


def test_profiles():
    text = MINIMAL + (
        "[grid]\ncells = 4\nlength = 2.0\n"
        "[initial]\n"
        "n1 = { profile = 'step', value = 1.0, right = 0.5, position = 0.5 }\n"
        "n2 = { profile = 'gaussian_bump', value = 1.0, amplitude = 0.2, center = 0.5, width = 0.25 }\n"
    )
    n, T = parse_config_text(text).initial_profiles()
    assert n[:, 0].tolist() == [1.0, 1.0, 0.5, 0.5]
    assert n[1, 1] == n[2, 1] == pytest.approx(1.0 + 0.2 * np.exp(-0.25))
    assert np.all(T == 1.0)


@settings(max_examples=40, deadline=None)
@given(
    st.integers(0, 2**64 - 1),
    st.floats(1.0, 5.0),
    st.sampled_from(["zero_mass_flux", "zero_molar_flux"]),
    st.lists(st.floats(0.1, 50.0), min_size=0, max_size=5),
)
def test_serialization_roundtrip_property(seed, gamma, closure, temps):
    cfg = parse_config_text(MINIMAL)
    cfg = replace(
        cfg,
        seed=seed,
        kernel=replace(cfg.kernel, gamma=gamma),
        diffusion=replace(cfg.diffusion, closure=closure),
        coefficients=replace(cfg.coefficients, temperatures=tuple(temps)),
    )
    assert parse_config_text(serialize_config(cfg)) == cfg
