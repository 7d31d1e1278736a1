import io
import json
import math

import numpy as np
import pytest

from prepex.divergence import gaussian
from prepex.errors import InputError
from prepex.geometry import orthant
from prepex.oracle import Instance, optimal_allocation
from prepex.prets import (Environment, RunState, TrackingInvariantError, run_prets,
                          stopping_statistic, tracking_choice)

ASYM = Instance(np.array([[2.0, 0.0, 1.0], [0.0, 2.0, -1.0]]), gaussian([1.0, 1.0]))


def state_with(counts, means, target=None, sigma=1.0):
    counts = np.asarray(counts)
    means = np.atleast_2d(np.asarray(means, dtype=float))
    st = RunState(counts.copy(), means.copy(),
                  np.zeros(len(counts)) if target is None else np.asarray(target, float),
                  int(counts.sum()), gaussian([sigma] * means.shape[0]))
    return st


def test_noiseless_environment_is_exact():
    inst = Instance(ASYM.means, gaussian([0.0, 0.0]))
    env = Environment(inst, 3)
    for k in range(3):
        np.testing.assert_array_equal(env.sample(k), inst.means[:, k])
    res = run_prets(env, orthant(2), 0.1)
    assert res.correct and not res.budget_exhausted
    assert res.recommended_front.arm_indices == (0, 1)
    assert res.stopping_time == 3


def test_sample_mean_and_reproducibility():
    env = Environment(ASYM, 11)
    draws = np.array([env.sample(2) for _ in range(100_000)])
    assert np.all(np.abs(draws.mean(axis=0) - ASYM.means[:, 2]) < 4 / math.sqrt(1e5))
    a, b = Environment(ASYM, 5), Environment(ASYM, 5)
    for k in (0, 2, 1, 1):
        np.testing.assert_array_equal(a.sample(k), b.sample(k))
    with pytest.raises(InputError):
        a.sample(3)


def test_tracking_choice_largest_deficit():
    st = state_with([3, 1, 1], [[0, 0, 0]], target=[0, 0, 0])
    st.cumulative_target = np.array([2.0, 1.5, 1.5]) - np.array([0.2, 0.4, 0.4])
    assert tracking_choice(st, [0.2, 0.4, 0.4]) == 1


def test_tracking_choice_tie_goes_to_lowest_index():
    st = state_with([2, 2, 2], [[0, 0, 0]], target=[2 - 1 / 3] * 3)
    assert tracking_choice(st, np.full(3, 1 / 3)) == 0


def test_tracking_choice_forced_exploration():
    st = state_with([9000, 995, 5], [[0, 0, 0]], target=[9000, 1000, 0])
    assert st.t == 10_000
    assert tracking_choice(st, [0.9, 0.1, 0.0]) == 2


def test_tracking_choice_rejects_bad_weights():
    st = state_with([1, 1], [[0, 0]])
    with pytest.raises(InputError):
        tracking_choice(st, [0.7, 0.7])


def test_statistic_identical_arms_is_zero():
    st = state_with([5, 7, 4], [[1.0, 1.0, 1.0], [0.5, 0.5, 0.5]])
    assert stopping_statistic(st, orthant(2)) == pytest.approx(0.0, abs=1e-12)


def test_statistic_linear_in_counts():
    st = state_with([5, 7, 4], ASYM.means)
    base = stopping_statistic(st, orthant(2))
    st3 = state_with([15, 21, 12], ASYM.means)
    assert stopping_statistic(st3, orthant(2)) == pytest.approx(3 * base, rel=1e-10)


def test_statistic_two_arm_closed_form():
    """One objective: the statistic is the two-sample Gaussian GLR."""
    m = np.array([[1.3, 0.4]])
    st = state_with([6, 9], m, sigma=2.0)
    expected = (1.3 - 0.4) ** 2 / (2 * 4.0 * (1 / 6 + 1 / 9))
    assert stopping_statistic(st, orthant(1)) == pytest.approx(expected, rel=1e-10)


def test_statistic_needs_every_arm():
    with pytest.raises(InputError):
        stopping_statistic(state_with([0, 2], [[0.1, 0.2]]), orthant(1))


def test_run_rejections():
    env = Environment(ASYM, 0)
    with pytest.raises(InputError):
        run_prets(env, orthant(2), 1.0)
    with pytest.raises(InputError):
        run_prets(env, orthant(3), 0.1)
    with pytest.raises(InputError):
        run_prets(env, orthant(2), 0.1, max_steps=2)


def test_budget_exhausted_flag():
    res = run_prets(Environment(ASYM, 1), orthant(2), 0.01, max_steps=20)
    assert res.budget_exhausted and res.stopping_time == 20
    assert res.statistic < res.threshold


def test_single_objective_runs_are_correct():
    inst = Instance(np.array([[1.0, 0.0]]), gaussian([1.0]))
    results = [run_prets(Environment(inst, s), orthant(1), 0.1) for s in range(20)]
    assert all(not r.budget_exhausted for r in results)
    assert sum(not r.correct for r in results) <= 2
    assert all(r.max_tracking_ratio <= 1 for r in results)


def test_relabeling_equivariance():
    perm = [2, 0, 1]
    inst_p = ASYM.with_means(ASYM.means[:, perm])
    a = run_prets(Environment(ASYM, 4), orthant(2), 0.1)
    b = run_prets(Environment(inst_p, 4, stream_ids=perm), orthant(2), 0.1)
    assert a.stopping_time == b.stopping_time
    np.testing.assert_array_equal(a.counts[perm], b.counts)
    assert sorted(perm[i] for i in b.recommended_front.arm_indices) == \
        list(a.recommended_front.arm_indices)


def test_trace_lines():
    buf = io.StringIO()
    res = run_prets(Environment(ASYM, 2), orthant(2), 0.1, trace=buf)
    lines = [json.loads(x) for x in buf.getvalue().splitlines()]
    assert len(lines) == res.stopping_time
    assert set(lines[0]) == {"t", "arm", "statistic", "threshold", "front_estimate"}
    assert lines[0]["statistic"] is None and lines[-1]["statistic"] is not None
    assert [x["t"] for x in lines] == list(range(1, res.stopping_time + 1))


def test_trace_to_path(tmp_path):
    path = tmp_path / "trace.jsonl"
    res = run_prets(Environment(ASYM, 2), orthant(2), 0.1, trace=path)
    assert len(path.read_text().splitlines()) == res.stopping_time


def test_counts_approach_allocation():
    w, _ = optimal_allocation(ASYM, orthant(2))
    res = run_prets(Environment(ASYM, 8), orthant(2), 1e-3)
    assert np.max(np.abs(res.counts / res.stopping_time - w)) < 0.1
    assert res.max_tracking_ratio <= 1


def test_tracking_violation_raises(monkeypatch):
    import prepex.prets as prets
    monkeypatch.setattr(prets, "tracking_choice", lambda state, w: (
        np.add(state.cumulative_target, w, out=state.cumulative_target), 0)[1])
    with pytest.raises(TrackingInvariantError):
        run_prets(Environment(ASYM, 0), orthant(2), 1e-3, max_steps=5000)


def test_result_dict():
    d = run_prets(Environment(ASYM, 3), orthant(2), 0.1).to_dict()
    assert set(d) >= {"tau", "recommended_front", "correct", "budget_exhausted", "counts"}
    json.dumps(d)
