import numpy as np
import pytest
import yaml
from hypothesis import given, strategies as st

from aurora_qd.core import (GENOTYPE_SIZE, ConfigError, EncoderSettings, ExperimentConfig, RngState, SnapshotError,
                            Task, Variant, config_from_dict, config_to_dict, controller_param_count, dump_config,
                            load_config, override_config, rng_split)


@pytest.mark.parametrize("shape, expected", [((24, 8, 12), 308), ((6, 8, 2), 74), ((1, 1, 1), 4)])
def test_controller_param_count(shape, expected):
    assert controller_param_count(*shape) == expected


def test_genotype_size():
    assert GENOTYPE_SIZE == 74


def test_controller_param_count_rejects_zero():
    with pytest.raises(ValueError):
        controller_param_count(0, 8, 2)


def test_same_stream_same_draws():
    a = rng_split(RngState(0), "variation", 3).generator().random(100)
    b = rng_split(RngState(0), "variation", 3).generator().random(100)
    np.testing.assert_array_equal(a, b)


def test_purposes_are_independent():
    a = rng_split(RngState(0), "variation").generator().random(100)
    b = rng_split(RngState(0), "evaluation").generator().random(100)
    assert not np.array_equal(a, b)


def test_indices_are_independent():
    a = rng_split(RngState(0), "selection", 1).generator().random(10)
    b = rng_split(RngState(0), "selection", 2).generator().random(10)
    assert not np.array_equal(a, b)


def test_nested_split_differs_from_parent():
    root = RngState(11)
    child = rng_split(root, "encoder", 1)
    grandchild = rng_split(child, "encoder", 1)
    assert child.key != grandchild.key
    assert not np.array_equal(child.generator().random(5), grandchild.generator().random(5))


def test_unknown_purpose():
    with pytest.raises(ValueError, match="unknown rng purpose"):
        rng_split(RngState(0), "sampling")


@pytest.mark.parametrize("seed", [-1, 2**64])
def test_seed_range(seed):
    with pytest.raises(ValueError):
        RngState(seed)


@given(st.integers(min_value=0, max_value=2**64 - 1))
def test_any_64_bit_seed_is_accepted(seed):
    assert 0.0 <= RngState(seed).generator().random() < 1.0


def test_variant_hand_coded_task():
    assert Variant.HC_NAV.hand_coded_task is Task.NAV
    assert Variant.HC_TURN.hand_coded_task is Task.TURN
    assert Variant.AURORA.hand_coded_task is None
    assert Variant.MES.hand_coded_task is None


def test_target_size_follows_focus_task():
    assert ExperimentConfig(variant=Variant.HC_NAV).target_size == 1500
    assert ExperimentConfig(variant=Variant.HC_FORW).target_size == 5000
    assert ExperimentConfig(variant=Variant.AURORA, scoring_task=Task.TURN).target_size == 5000
    assert ExperimentConfig(container_target=500).target_size == 500


def test_active_task_for_hand_coded_variant_ignores_scoring_task():
    config = ExperimentConfig(variant=Variant.HC_FORW, scoring_task=Task.NAV)
    assert config.active_task is Task.FORW


def test_config_round_trip(tmp_path):
    config = ExperimentConfig(variant=Variant.MES, seed=5, tasks=(Task.FORW,),
                              encoder=EncoderSettings(kind="pca", n_steps=10))
    path = tmp_path / "config.yaml"
    dump_config(config, path)
    assert load_config(path) == config


def test_dump_is_sorted_yaml():
    data = yaml.safe_load(dump_config(ExperimentConfig()))
    assert data["variant"] == "AURORA"
    assert data["encoder"]["first_update"] == 10
    assert list(data) == sorted(data)


def test_unknown_key_is_named():
    with pytest.raises(ConfigError, match="unknown configuration key: batch"):
        config_from_dict({"batch": 3})


def test_unknown_nested_key_is_named():
    with pytest.raises(ConfigError, match="encoder.layers"):
        config_from_dict({"encoder": {"layers": 3}})


@pytest.mark.parametrize("data", [
    {"batch_size": 0},
    {"mutation_rate": 0.0},
    {"initial_threshold": -1},
    {"variant": "HC-Jump"},
    {"encoder": {"kind": "vae"}},
    {"n_iterations": "many"},
    {"coverage_grid": "adaptive"},
])
def test_invalid_values(data):
    with pytest.raises(ConfigError):
        config_from_dict(data)


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "absent.yaml")


def test_config_must_be_a_mapping(tmp_path):
    path = tmp_path / "list.yaml"
    path.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError):
        load_config(path)


def test_empty_file_gives_defaults(tmp_path):
    path = tmp_path / "empty.yaml"
    path.write_text("")
    assert load_config(path) == ExperimentConfig()


def test_override_config():
    config = override_config(ExperimentConfig(), seed=3, variant="HC-Nav", threads=None)
    assert config.seed == 3
    assert config.variant is Variant.HC_NAV
    assert config.threads == 1


def test_override_revalidates():
    with pytest.raises(ConfigError):
        override_config(ExperimentConfig(), threads=0)


def test_config_to_dict_is_plain():
    data = config_to_dict(ExperimentConfig())
    assert data["tasks"] == ["nav", "forw", "turn"]
    assert data["container_target"] is None


def test_snapshot_error_names_row():
    err = SnapshotError("bad value", row=4)
    assert err.row == 4
    assert "row 4" in str(err)


def test_seeds_are_independent():
    a = rng_split(RngState(1), "variation").generator().random(100)
    b = rng_split(RngState(2), "variation").generator().random(100)
    assert not np.array_equal(a, b)


@pytest.mark.parametrize("data", [
    {"bootstrap_size": 16, "latent_dim": 32, "encoder": {"kind": "pca"}},
    {"latent_dim": 181, "encoder": {"kind": "pca"}},
])
def test_pca_latent_dim_is_bounded(data):
    with pytest.raises(ConfigError, match="latent_dim"):
        config_from_dict(data)


def test_autoencoder_latent_dim_is_not_bounded_by_bootstrap():
    config = config_from_dict({"bootstrap_size": 16, "latent_dim": 32})
    assert config.encoder.kind == "ae"
    assert config.latent_dim == 32
