import inspect
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bakeoff.hpo import TPEConfig, load_history, optimize, plateau_curve, plateau_iteration
from bakeoff.hpo.optimize import (
    DEFAULT_BUDGET,
    OptimizationError,
    TrialRecord,
    format_record,
    parse_record,
    trial_seeds,
)
from bakeoff.hpo.space import Choice, IntUniform, SearchSpace, Uniform

SPACE = SearchSpace({"x": Uniform(-1.0, 1.0), "n": IntUniform(1, 4), "c": Choice(("relu", "tanh"))})


def obj(hp, seed):
    return hp["x"] ** 2 + 0.1 * hp["n"] + (hp["c"] == "tanh")


def records(losses):
    return [TrialRecord(i, {}, 0, float(v), "ok" if math.isfinite(v) else "failed") for i, v in enumerate(losses)]


def test_budget_one():
    res = optimize(obj, SPACE, budget=1, seed=0)
    assert len(res.history) == 1 and res.best is res.history[0]


def test_default_budget_is_one_thousand():
    assert DEFAULT_BUDGET == 1000
    assert inspect.signature(optimize).parameters["budget"].default == 1000


def test_budget_validated():
    with pytest.raises(ValueError):
        optimize(obj, SPACE, budget=0)


def test_warm_start_is_trial_zero():
    warm = {"x": 0.5, "n": 2, "c": "relu"}
    res = optimize(obj, SPACE, budget=5, seed=1, warm_start=warm)
    assert res.history[0].id == 0 and res.history[0].params == warm


def test_best_is_min_over_ok_and_ids_increase():
    res = optimize(obj, SPACE, budget=40, seed=2)
    ok = [r for r in res.history if r.status == "ok"]
    assert res.best.val_loss == min(r.val_loss for r in ok)
    assert [r.id for r in res.history] == list(range(40))
    curve = res.best_so_far()
    assert np.all(np.diff(curve) <= 0)


def test_failed_trials_count_against_budget():
    calls = []

    def flaky(hp, seed):
        calls.append(1)
        if hp["x"] < 0:
            raise FloatingPointError("diverged")
        if hp["n"] == 4:
            return float("nan")
        return hp["x"]

    res = optimize(flaky, SPACE, budget=25, seed=4)
    assert len(calls) == 25 == len(res.history)
    failed = [r for r in res.history if r.status == "failed"]
    assert failed and all(math.isnan(r.val_loss) for r in failed)
    assert all(math.isfinite(r.val_loss) for r in res.history if r.status == "ok")


def test_all_failed_raises():
    def boom(hp, seed):
        raise RuntimeError("no")

    with pytest.raises(OptimizationError, match="all 3 trials failed"):
        optimize(boom, SPACE, budget=3)


def test_objective_seed_is_per_trial():
    seen = []
    optimize(lambda hp, s: seen.append(s) or 0.0, SPACE, budget=4, seed=9)
    assert seen == [trial_seeds(9, i)[1] for i in range(4)]
    assert len(set(seen)) == 4


def test_record_round_trip():
    rec = TrialRecord(3, {"x": 0.1 + 0.2, "n": 3, "c": "tanh", "flag": True}, 12345, 0.5, "ok", "gbdt", epochs=17,
                      test_metrics={"test_ce": 0.25})
    back = parse_record(format_record(rec))
    assert back.params == rec.params and back.params["x"] == 0.1 + 0.2
    assert (back.id, back.seed, back.val_loss, back.status, back.learner, back.epochs) == (3, 12345, 0.5, "ok", "gbdt", 17)
    assert back.test_metrics == {"test_ce": 0.25}


def test_record_rejects_unsafe_values():
    with pytest.raises(ValueError):
        format_record(TrialRecord(0, {"s": "a=b"}, 0, 1.0))


def test_persistence_and_resume_continuity(tmp_path):
    full = tmp_path / "full.log"
    optimize(obj, SPACE, budget=30, seed=7, log_path=full)
    part = tmp_path / "part.log"
    optimize(obj, SPACE, budget=12, seed=7, log_path=part)
    res = optimize(obj, SPACE, budget=30, seed=7, log_path=part)
    assert full.read_bytes() == part.read_bytes()
    assert len(res.history) == 30
    hist = load_history(full)
    assert [r.id for r in hist] == list(range(30))
    assert all(r.seconds >= 0 for r in hist)
    assert (tmp_path / "full.log.timing").exists()


def test_partial_trailing_line_dropped(tmp_path):
    p = tmp_path / "t.log"
    optimize(obj, SPACE, budget=3, seed=0, log_path=p)
    with open(p, "a") as fh:
        fh.write("id=3\tlearner=-\tse")
    assert len(load_history(p)) == 3
    assert load_history(tmp_path / "missing.log") == []


def test_workers_complete_budget_and_are_order_independent(tmp_path):
    a = optimize(obj, SPACE, budget=24, seed=3, workers=4, log_path=tmp_path / "a.log")
    b = optimize(obj, SPACE, budget=24, seed=3, workers=4, log_path=tmp_path / "b.log")
    assert len(a.history) == 24
    assert (tmp_path / "a.log").read_bytes() == (tmp_path / "b.log").read_bytes()
    assert a.best.id == b.best.id


# ------------------------------------------------------------------ plateau


def test_running_minimum():
    np.testing.assert_array_equal(plateau_curve(records([5, 3, 4, 2])).mean, [5, 3, 3, 2])


def test_all_equal_plateaus_at_one():
    for rho in (1e-9, 0.01, 0.5):
        assert plateau_curve(records([2.0] * 10), rho).plateau_iteration == 1


def test_hand_plateau_example():
    losses = [10, 5, 4.99, 4.98, 4.975, 4.97]
    assert plateau_curve(records(losses), 0.01).plateau_iteration == 2
    # relative gain from 10 to 4.97 exceeds any small tolerance
    assert plateau_iteration(np.array([10.0, 5.0, 4.97]), 0.01) == 2


def test_failed_trials_carry_previous_best():
    c = plateau_curve(records([float("nan"), 4.0, float("nan"), 3.0]))
    assert math.isnan(c.mean[0])
    np.testing.assert_array_equal(c.mean[1:], [4.0, 4.0, 3.0])


def test_multi_seed_mean_and_sem():
    c = plateau_curve([records([4, 2, 2]), records([2, 2, 0])])
    np.testing.assert_allclose(c.mean, [3, 2, 1])
    np.testing.assert_allclose(c.sem, [1, 0, 1])
    np.testing.assert_array_equal(c.iterations, [1, 2, 3])


def test_empty_history():
    with pytest.raises(ValueError):
        plateau_curve([])


@given(st.lists(st.floats(0.01, 100), min_size=1, max_size=60), st.floats(1e-4, 0.5))
def test_plateau_properties(losses, rho):
    c = plateau_curve(records(losses), rho)
    assert np.all(np.diff(c.mean) <= 0)
    assert c.mean[-1] == min(losses)
    p = c.plateau_iteration
    assert 1 <= p <= len(losses)
    # the remaining gain from the plateau point is below rho, and not before it
    assert (c.mean[p - 1] - c.mean[-1]) / c.mean[p - 1] < rho
    for i in range(p - 1):
        assert (c.mean[i] - c.mean[-1]) / c.mean[i] >= rho
