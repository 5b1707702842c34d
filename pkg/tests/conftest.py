import os

import hypothesis
import numpy as np
import pytest

from aurora_qd.core import ExperimentConfig, EncoderSettings, Variant

np.seterr(all="warn")

hypothesis.settings.register_profile("fast", max_examples=10, deadline=None)
hypothesis.settings.register_profile("ci", max_examples=200, deadline=None)
hypothesis.settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "fast"))


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run desk-scale acceptance runs")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def tiny_config(tmp_path):
    """A run small enough for unit tests: a handful of iterations, short encoder training."""
    def make(variant=Variant.AURORA, **overrides):
        fields = dict(
            variant=variant,
            n_iterations=12,
            batch_size=8,
            bootstrap_size=32,
            container_target=20,
            seed=7,
            out_dir=str(tmp_path / "runs"),
            encoder=EncoderSettings(hidden=8, n_steps=20, batch_size=16, first_update=2),
        )
        fields.update(overrides)
        return ExperimentConfig(**fields).validate()
    return make
