import json
import math

import pytest

import cascadekit as ck


def test_softmax_and_confidence():
    p = ck.softmax([0.0, 0.0])
    assert p == [0.5, 0.5]
    assert ck.confidence([0.0, 0.0, 0.0, 0.0]) == 0.25
    assert abs(ck.confidence([0.0, 0.0], ck.ScoreMethod.neg_entropy)) < 1e-12


def test_sweep_four_samples():
    ln3, ln9 = math.log(3), math.log(9)
    fast = ck.LogitTable("fast", 2, list("abcd"), [0, 1, 0, 1], [[ln3, 0], [0, 0], [0, ln9], [0, ln3]])
    exp_preds = [1, 1, 0, 1]
    f = ck.StageOutputs(ck.predictions(fast), ck.confidences(fast), ck.StageCost(10))
    e = ck.StageOutputs(exp_preds, [1.0] * 4, ck.StageCost(100))
    curve = ck.sweep_thresholds(fast.labels, f, e)
    assert [(p.acc_casc, p.n_exp, p.macs_casc) for p in curve] == [
        (0.5, 0, 10), (0.75, 1, 35), (0.5, 3, 85), (0.75, 4, 110), (0.75, 4, 110)]
    choice = ck.select_threshold(curve, acc_exp=0.75)
    assert choice["delta"] == 0.5
    assert ck.cascade_macs(ck.StageCost(67.6e6), ck.StageCost(556.8e6), 50, 100) == pytest.approx(346.0e6)


def test_ltc_cases():
    both = ck.CorrectnessPair(True, True)
    assert ck.ltc_loss_sample(0.8, both) == pytest.approx(0.1)
    assert ck.ltc_grad_conf(ck.CorrectnessPair(False, True)) == 0.5
    assert ck.ltc_grad_conf(ck.CorrectnessPair(True, False)) == -1.5
    g = ck.grad_wrt_logits([0.0, 0.0], both)
    assert g == pytest.approx([-0.125, 0.125])


def test_temperature_and_validation_errors(tmp_path):
    table = ck.LogitTable("m", 3, ["a", "b", "c"], [0, 1, 2], [[4, 0, 0], [0, 4, 0], [0, 0, 4]])
    t = ck.fit_temperature(table)
    assert ck.mean_nll(table, t) <= ck.mean_nll(table, 1.0)
    path = tmp_path / "m.csv"
    ck.write_logit_table(table, path)
    assert len(ck.load_logit_table(path)) == 3
    with pytest.raises(ValueError):
        ck.LogitTable("m", 2, ["a"], [5], [[0.0, 1.0]])


def test_small_experiment():
    cfg = json.loads(ck.default_experiment_config())
    cfg["data"].update(n_train=200, n_val=200, n_test=200)
    cfg["train"].update(epochs=2, decay_epochs=[1])
    cfg.update(w=[1.0], c_sweep=[], w_sweep=[])
    out = ck.run_experiment(json.dumps(cfg), 1)
    assert set(out) == {"baseline", "temp_scaling", "ltc"}
    assert 0.0 <= out["ltc"]["acc"]["mean"] <= 1.0
