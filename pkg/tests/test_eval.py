import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctcsim.catalog import lookup_task
from ctcsim.evaluation import (
    AlignmentError,
    EvalReport,
    WinRateCurve,
    aggregate_report,
    episode_seed,
    run_episode_batch,
    run_test_batch,
    stability_coefficient,
)


def curve(seed, values, steps=None):
    steps = steps if steps is not None else list(range(len(values)))
    return WinRateCurve(seed=seed, checkpoints=tuple(zip(steps, values)))


# ---------------------------------------------------------------------------
# stability coefficient


def test_identical_curves_zero():
    curves = [curve(s, [0.3, 0.7, 1.0]) for s in range(3)]
    assert stability_coefficient(curves) == 0.0


def test_single_seed_zero():
    assert stability_coefficient([curve(0, [0.2, 0.9])]) == 0.0


def test_hand_case_one_sixth():
    curves = [curve(0, [0.0, 0.0]), curve(1, [1.0, 1.0]), curve(2, [0.5, 0.5])]
    assert stability_coefficient(curves) == pytest.approx(1.0 / 6.0, abs=1e-12)


def test_misaligned_checkpoints_raise():
    a = curve(0, [0.5, 0.5], steps=[0, 10])
    b = curve(1, [0.5, 0.5], steps=[0, 20])
    with pytest.raises(AlignmentError):
        stability_coefficient([a, b])


def test_empty_inputs_raise():
    with pytest.raises(AlignmentError):
        stability_coefficient([])


def test_curve_validation():
    with pytest.raises(ValueError):
        WinRateCurve(seed=0, checkpoints=((0, 0.5), (0, 0.6)))  # non-increasing steps
    with pytest.raises(ValueError):
        WinRateCurve(seed=0, checkpoints=((0, 1.5),))  # out of range


def _brute_force_v(matrix):
    """Independent two-pass population-variance oracle."""
    n_seeds = len(matrix)
    m = len(matrix[0])
    total = 0.0
    for i in range(m):
        col = [matrix[s][i] for s in range(n_seeds)]
        mean = sum(col) / n_seeds
        total += sum((w - mean) ** 2 for w in col) / n_seeds
    return total / m


@settings(max_examples=300, deadline=None)
@given(
    st.integers(1, 6),
    st.integers(1, 8),
    st.randoms(use_true_random=False),
)
def test_agrees_with_brute_force(n_seeds, m, rnd):
    matrix = [[rnd.random() for _ in range(m)] for _ in range(n_seeds)]
    curves = [curve(s, row) for s, row in enumerate(matrix)]
    assert stability_coefficient(curves) == pytest.approx(_brute_force_v(matrix), abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.randoms(use_true_random=False), st.floats(0.0, 1.0))
def test_permutation_and_scaling_invariances(rnd, c):
    matrix = [[rnd.random() for _ in range(4)] for _ in range(3)]
    curves = [curve(s, row) for s, row in enumerate(matrix)]
    v = stability_coefficient(curves)
    # permuting seeds
    assert stability_coefficient(list(reversed(curves))) == pytest.approx(v, abs=1e-12)
    # permuting checkpoints (same permutation for every curve)
    perm = list(reversed(range(4)))
    permuted = [
        curve(s, [matrix[s][j] for j in perm]) for s in range(3)
    ]
    assert stability_coefficient(permuted) == pytest.approx(v, abs=1e-12)
    # scaling win rates by c scales V by c^2
    scaled = [curve(s, [c * w for w in matrix[s]]) for s in range(3)]
    assert stability_coefficient(scaled) == pytest.approx(c * c * v, abs=1e-9)


def test_v_zero_iff_identical_per_checkpoint():
    curves = [curve(0, [0.5, 0.7]), curve(1, [0.5, 0.7])]
    assert stability_coefficient(curves) == 0.0
    curves = [curve(0, [0.5, 0.7]), curve(1, [0.5, 0.8])]
    assert stability_coefficient(curves) > 0.0


def test_sample_variance_mode():
    curves = [curve(0, [0.0]), curve(1, [1.0])]
    assert stability_coefficient(curves) == 0.25  # population
    assert stability_coefficient(curves, population=False) == 0.5
    assert stability_coefficient([curve(0, [0.3])], population=False) == 0.0


# ---------------------------------------------------------------------------
# batches + reports


def test_episode_seed_derivation():
    assert [episode_seed(0, 100, i) for i in (0, 1, 99)] == [0, 1, 99]
    assert episode_seed(2, 32, 5) == 69


def test_run_test_batch_deterministic():
    spec = lookup_task("HoS_D2G")
    a = run_test_batch(spec, "oracle", seed=0, episodes=8)
    b = run_test_batch(spec, "oracle", seed=0, episodes=8)
    assert a == b


def test_run_test_batch_requires_episodes():
    with pytest.raises(ValueError):
        run_test_batch(lookup_task("HoS_D2G"), "oracle", 0, 0)


def test_parallel_batch_matches_serial():
    spec = lookup_task("HoS_D2G")
    serial = run_episode_batch(spec, "random", 0, 8, workers=1, record_replays=True)
    parallel = run_episode_batch(spec, "random", 0, 8, workers=4, record_replays=True)
    assert [r.replay_text for r in serial] == [r.replay_text for r in parallel]
    assert [r.won for r in serial] == [r.won for r in parallel]


def test_aggregate_report_max_and_artifacts(tmp_path):
    report = aggregate_report("HoS_D2G", "oracle", seeds=[1, 2], episodes=4)
    assert 0.0 <= report.max_test_win_rate <= 1.0
    assert report.m_checkpoints == 1
    assert report.stability_v >= 0.0
    from ctcsim.evaluation import write_report

    txt, csv_path = write_report(report, tmp_path)
    assert txt.exists() and csv_path.exists()
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "task,policy,seed,checkpoint,win_rate"
    assert len(lines) == 3


def test_report_max_over_seeds():
    curves = [curve(0, [0.0]), curve(1, [0.5]), curve(2, [1.0])]
    report = EvalReport(
        task="x", policy="p", episodes_per_batch=4, curves=curves,
        max_test_win_rate=max(w for c in curves for _, w in c.checkpoints),
        stability_v=stability_coefficient(curves), m_checkpoints=1,
    )
    assert report.max_test_win_rate == 1.0


def test_single_seed_constant_zero_curve():
    report = aggregate_report("HoS_D2G", "no_dol", seeds=[0], episodes=4)
    assert report.max_test_win_rate == 0.0
    assert report.stability_v == 0.0


def test_oracle_report_on_hoa_d2g():
    report = aggregate_report("HoA_D2G", "oracle", seeds=[0, 1, 2], episodes=8)
    assert report.max_test_win_rate >= 0.9
    assert report.m_checkpoints == 1
