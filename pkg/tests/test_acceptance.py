"""Desk-scale experiment matrix: 5 variants x 5 seeds, 2,000 iterations each (run with --runslow)."""

from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from aurora_qd import dimred, loop
from aurora_qd.cli import compare_table
from aurora_qd.core import Task, Variant, load_config, override_config

DESK_CONFIG = Path(__file__).resolve().parent.parent / "configs" / "desk.yaml"
SEEDS = range(5)
TARGET = 500


@pytest.fixture(scope="session")
def desk_runs(tmp_path_factory):
    out = tmp_path_factory.mktemp("desk")
    base = load_config(DESK_CONFIG)
    runs = {}
    for variant in Variant:
        for seed in SEEDS:
            config = override_config(base, variant=variant, seed=seed, threads=4, out_dir=str(out))
            _, runs[variant, seed] = loop.run(config)
    return runs


def medians(desk_runs, task):
    manifests = [d / "manifest.json" for d in desk_runs.values()]
    table = compare_table(manifests, task)
    return table[table["row_type"] == "summary"].set_index("variant")["median"], table


@pytest.mark.slow
@pytest.mark.parametrize("variant", list(Variant))
def test_size_regulation(desk_runs, variant):
    sizes = [loop.RunManifest.read(desk_runs[variant, s] / "manifest.json").final_container_size for s in SEEDS]
    assert all(abs(n - TARGET) <= 0.15 * TARGET for n in sizes), sizes


@pytest.mark.slow
def test_encoder_schedule_in_manifest(desk_runs):
    expected = [dimred.schedule_next_update(k) for k in range(1, 20)]
    assert expected[-1] == 1900
    for seed in SEEDS:
        manifest = loop.RunManifest.read(desk_runs[Variant.AURORA, seed] / "manifest.json")
        assert manifest.encoder_phase_iterations == expected


@pytest.mark.slow
def test_entropy_inequality(desk_runs):
    for seed in SEEDS:
        row = pd.read_csv(desk_runs[Variant.AURORA, seed] / "entropy.csv").iloc[0]
        assert row["H_b"] <= row["H_s"] + 1e-9


@pytest.mark.slow
def test_encoder_phases_reduce_loss(desk_runs):
    phases = pd.concat([pd.read_csv(desk_runs[Variant.AURORA, s] / "encoder_phases.csv") for s in SEEDS])
    improved = (phases["loss_after"] < phases["loss_before"]).mean()
    assert improved >= 0.8, phases


@pytest.mark.slow
def test_hand_coded_wins_its_own_task(desk_runs):
    for variant in (Variant.HC_NAV, Variant.HC_FORW, Variant.HC_TURN):
        task = variant.hand_coded_task
        med, table = medians(desk_runs, task)
        assert med[variant.value] >= med.drop(variant.value).max(), table


@pytest.mark.slow
def test_aurora_covers_at_least_mean_streams(desk_runs):
    wins = 0
    for task in Task:
        med, _ = medians(desk_runs, task)
        wins += med["AURORA"] >= med["MeS"]
    assert wins >= 2


@pytest.mark.slow
def test_aurora_covers_at_least_foreign_hand_coded(desk_runs):
    wins = 0
    for task in Task:
        med, _ = medians(desk_runs, task)
        foreign = [v.value for v in (Variant.HC_NAV, Variant.HC_FORW, Variant.HC_TURN) if v.hand_coded_task is not task]
        wins += bool(np.all(med["AURORA"] >= med[foreign]))
    assert wins >= 2
