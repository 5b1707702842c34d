import numpy as np
import pandas as pd
import pytest
from hypothesis import given, strategies as st

from aurora_qd import dimred
from aurora_qd.container import Container, ContainerEntry
from aurora_qd.core import GENOTYPE_SIZE, EncoderSettings, Task, UnfittedModelError, Variant
from aurora_qd.env import simulate_batch, stream_bounds_flat
from aurora_qd.metrics import (CoverageCurve, TASK_GRID, coverage, coverage_curve, empirical_entropy,
                               entropy_inequality_report, grid_cells, projection_curve, snapshot_descriptor_fn,
                               snapshot_entropy_report, snapshot_trajectories, task_thresholds)

points = st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1), st.floats(-10, 10)), min_size=1, max_size=100)


def snapshot(bds, scores=None, task="nav", variant="HC-Nav"):
    bds = np.asarray(bds, dtype=float).reshape(-1, 2)
    scores = np.zeros(len(bds)) if scores is None else np.asarray(scores, dtype=float)
    return pd.DataFrame({
        "variant": variant,
        f"bd_{task}_0": bds[:, 0],
        f"bd_{task}_1": bds[:, 1],
        f"f_{task}": scores,
    })


def from_points(rows):
    arr = np.array(rows)
    return snapshot(arr[:, :2], arr[:, 2])


# --- COVERAGE ---

def test_opposite_corners():
    assert coverage(snapshot([(0.001, 0.001), (0.999, 0.999)]), Task.NAV) == 2


def test_full_grid():
    centers = (np.arange(50) + 0.5) / 50
    grid = np.array([(x, y) for x in centers for y in centers])
    assert coverage(snapshot(grid), Task.NAV) == 2500


def test_threshold_above_best_score():
    snap = snapshot([(0.1, 0.1), (0.6, 0.2)], scores=[1.0, 2.0])
    assert coverage(snap, Task.NAV, f_min=2.5) == 0
    assert coverage(snap, Task.NAV, f_min=1.0) == 1


def test_upper_edge_is_clamped_to_last_cell():
    cells = grid_cells(np.array([[1.0, 1.0], [0.0, 0.0]]))
    assert list(cells) == [49 * 50 + 49, 0]


def test_single_entry_curve():
    curve = coverage_curve(snapshot([(0.3, 0.3)], scores=[-0.4]), Task.NAV, n_thresholds=5)
    assert curve.thresholds[0] == -np.inf
    assert list(curve.coverage) == [1, 0, 0, 0, 0, 0]
    assert curve.total == 1


def test_identical_scores_step():
    snap = snapshot([(0.1, 0.1), (0.5, 0.5), (0.9, 0.9)], scores=[1.0, 1.0, 1.0])
    curve = coverage_curve(snap, Task.NAV, n_thresholds=4)
    assert list(curve.coverage) == [3, 0, 0, 0, 0]


@given(points, st.integers(2, 60))
def test_curve_equals_recount(rows, n):
    snap = from_points(rows)
    curve = coverage_curve(snap, Task.NAV, n_thresholds=n)
    assert len(curve.thresholds) == n + 1
    assert [coverage(snap, Task.NAV, t) for t in curve.thresholds] == list(curve.coverage)


@given(points)
def test_curve_is_monotone_and_bounded(rows):
    curve = coverage_curve(from_points(rows), Task.NAV)
    assert np.all(np.diff(curve.coverage) <= 0)
    assert curve.coverage.max() <= 2500
    assert np.all(np.diff(curve.thresholds[1:]) >= 0)


@given(points, st.data())
def test_duplicates_leave_coverage_unchanged(rows, data):
    snap = from_points(rows)
    i = data.draw(st.integers(0, len(snap) - 1))
    doubled = pd.concat([snap, snap.iloc[[i]]], ignore_index=True)
    for f_min in (-np.inf, 0.0, 5.0):
        assert coverage(doubled, Task.NAV, f_min) == coverage(snap, Task.NAV, f_min)


def test_curve_validation():
    with pytest.raises(ValueError):
        coverage_curve(snapshot([(0.5, 0.5)]), Task.NAV, n_thresholds=1)
    with pytest.raises(ValueError):
        coverage_curve(snapshot(np.empty((0, 2))), Task.NAV)


def test_curve_frame():
    frame = coverage_curve(snapshot([(0.5, 0.5)], scores=[2.0]), Task.NAV, 3).to_frame(seed=4, variant="MeS")
    assert list(frame.columns) == ["threshold", "coverage", "seed", "variant"]
    assert len(frame) == 4
    assert (frame["seed"] == 4).all()


def test_task_thresholds_span_score_range():
    np.testing.assert_allclose(task_thresholds(Task.NAV, 5), np.linspace(-np.pi, 0.0, 5))
    np.testing.assert_allclose(task_thresholds(Task.FORW, 3), [-3.0, 0.0, 3.0])
    with pytest.raises(ValueError):
        task_thresholds(Task.TURN, 1)


def test_task_grid_is_shared_across_snapshots():
    a = coverage_curve(snapshot([(0.1, 0.1), (0.9, 0.9)], scores=[-3.0, -0.5]), Task.NAV, 20, grid=TASK_GRID)
    b = coverage_curve(snapshot([(0.5, 0.5)], scores=[-1.0]), Task.NAV, 20, grid=TASK_GRID)
    np.testing.assert_array_equal(a.thresholds, b.thresholds)
    assert a.thresholds[0] == -np.inf
    assert a.total == 2
    assert b.total == 1


def test_task_grid_curve_equals_recount():
    rng = np.random.default_rng(3)
    snap = snapshot(rng.random((60, 2)), scores=-np.pi * rng.random(60))
    curve = coverage_curve(snap, Task.NAV, 25, grid=TASK_GRID)
    assert [coverage(snap, Task.NAV, t) for t in curve.thresholds] == list(curve.coverage)


def test_unknown_grid():
    with pytest.raises(ValueError, match="grid"):
        coverage_curve(snapshot([(0.5, 0.5)]), Task.NAV, grid="adaptive")


def test_projection_of_foreign_hand_coded_container():
    snap = snapshot([(0.2, 0.2), (0.7, 0.7)], scores=[1.0, 2.0], task="forw", variant="HC-Nav")
    curve = projection_curve(snap, Task.FORW, Variant.HC_NAV)
    assert list(curve.coverage) == [2]
    assert list(curve.thresholds) == [-np.inf]


@pytest.mark.parametrize("variant", [Variant.AURORA, Variant.MES, Variant.HC_FORW])
def test_projection_keeps_thresholds(variant):
    snap = snapshot([(0.2, 0.2), (0.7, 0.7)], scores=[1.0, 2.0], task="forw", variant=variant.value)
    curve = projection_curve(snap, Task.FORW, variant, n_thresholds=10)
    assert isinstance(curve, CoverageCurve)
    assert len(curve.coverage) == 11


# --- ENTROPY ---

def test_four_distinct_cells():
    samples = [[0.05], [0.35], [0.65], [0.95]]
    assert empirical_entropy(samples, 10, (0.0, 1.0)) == pytest.approx(np.log(4))


def test_single_cell():
    assert empirical_entropy(np.full((20, 3), 0.42), 10, (0.0, 1.0)) == 0.0


def test_hand_computed_histogram():
    samples = np.concatenate([np.full(50, 0.05), np.full(30, 0.55), np.full(20, 0.95)])[:, None]
    p = np.array([0.5, 0.3, 0.2])
    assert empirical_entropy(samples, 10, (0.0, 1.0)) == pytest.approx(-(p * np.log(p)).sum())


def test_out_of_range_samples_are_clamped():
    assert empirical_entropy([[-5.0], [5.0]], 10, (0.0, 1.0)) == pytest.approx(np.log(2))


def test_cells_are_keyed_jointly():
    samples = [[0.05, 0.05], [0.05, 0.95], [0.95, 0.05], [0.95, 0.95]]
    assert empirical_entropy(samples, 10, (0.0, 1.0)) == pytest.approx(np.log(4))


@given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1)), min_size=1, max_size=200), st.integers(1, 12))
def test_entropy_bounds(rows, bins):
    h = empirical_entropy(rows, bins, (0.0, 1.0))
    assert -1e-12 <= h <= np.log(len(rows)) + 1e-12
    assert h <= np.log(bins**2) + 1e-12


def test_entropy_needs_samples():
    with pytest.raises(ValueError):
        empirical_entropy(np.empty((0, 2)), 10, (0.0, 1.0))


def banded_trajectories(n):
    low, high = stream_bounds_flat()
    return np.array([low + (i + 0.5) / 10 * (high - low) for i in range(n)])


def test_identical_trajectories_report():
    trajs = np.repeat(banded_trajectories(1), 6, axis=0)
    report = entropy_inequality_report(trajs, lambda t: np.full((len(t), 2), 0.3))
    assert report.h_trajectory == report.h_descriptor == 0.0
    assert report.holds


def test_injective_descriptor_report():
    trajs = banded_trajectories(5)
    low, high = stream_bounds_flat()
    report = entropy_inequality_report(trajs, lambda t: np.column_stack([(t[:, 0] - low[0]) / (high[0] - low[0]),
                                                                         np.full(len(t), 0.5)]))
    assert report.h_descriptor == pytest.approx(report.h_trajectory)
    assert report.h_trajectory == pytest.approx(np.log(5))
    assert report.holds


def test_constant_descriptor_report():
    report = entropy_inequality_report(banded_trajectories(7), lambda t: np.zeros((len(t), 2)))
    assert report.h_descriptor == 0.0
    assert report.holds
    frame = report.to_frame(seed=1, variant="AURORA")
    assert list(frame.columns) == ["seed", "variant", "n_samples", "H_s", "H_b", "holds"]
    assert bool(frame.loc[0, "holds"])


def test_snapshot_trajectories_rerun_episodes():
    genotypes = np.random.default_rng(0).uniform(-1, 1, size=(3, GENOTYPE_SIZE))
    expected = np.vstack([ev.flat_trajectory for ev in simulate_batch(genotypes)])
    np.testing.assert_array_equal(snapshot_trajectories(genotypes), expected)
    assert snapshot_trajectories(np.empty((0, GENOTYPE_SIZE))).shape == (0, 180)


def stored_container(genotypes, descriptor):
    c = Container(threshold=1e-12)
    for g, ev in zip(genotypes, simulate_batch(genotypes)):
        c.try_add(ContainerEntry(g, descriptor(ev), ev, ev.f_nav))
    return c


def test_snapshot_entropy_matches_stored_trajectories():
    genotypes = np.random.default_rng(4).uniform(-1, 1, size=(12, GENOTYPE_SIZE))
    c = stored_container(genotypes, lambda ev: ev.bd_nav)
    direct = entropy_inequality_report(c.trajectories(), snapshot_descriptor_fn(Variant.HC_NAV))
    replayed = snapshot_entropy_report(c.to_frame("HC-Nav"), Variant.HC_NAV)
    assert replayed == direct
    assert replayed.n_samples == len(c)
    assert replayed.holds


def test_snapshot_entropy_with_encoder():
    genotypes = np.random.default_rng(5).uniform(-1, 1, size=(10, GENOTYPE_SIZE))
    c = stored_container(genotypes, lambda ev: ev.bd_mes)
    settings = EncoderSettings(kind="pca")
    rng = np.random.default_rng(0)
    encoder = dimred.fit_encoder(dimred.new_encoder(settings, 180, 2, rng), c, rng, settings)
    report = snapshot_entropy_report(c.to_frame("AURORA"), Variant.AURORA, encoder)
    expected = empirical_entropy(dimred.encode(encoder, c.trajectories()), 10, (0.0, 1.0))
    assert report.h_descriptor == pytest.approx(expected)
    assert report.holds


def test_aurora_descriptor_needs_encoder():
    with pytest.raises(UnfittedModelError):
        snapshot_descriptor_fn(Variant.AURORA)


@pytest.mark.parametrize("variant, column", [(Variant.MES, "bd_mes"), (Variant.HC_TURN, "bd_turn")])
def test_snapshot_descriptor_follows_variant(variant, column):
    genotypes = np.random.default_rng(6).uniform(-1, 1, size=(3, GENOTYPE_SIZE))
    evaluations = simulate_batch(genotypes)
    trajectories = np.vstack([ev.flat_trajectory for ev in evaluations])
    expected = np.vstack([getattr(ev, column) for ev in evaluations])
    np.testing.assert_array_equal(snapshot_descriptor_fn(variant)(trajectories), expected)
