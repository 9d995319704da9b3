"""Cascade inference toolkit: threshold sweeps, calibration and the LtC loss."""

from ._core import (
    CorrectnessPair,
    LogitTable,
    ScoreMethod,
    StageCost,
    StageOutputs,
    SweepPoint,
    ThresholdPolicy,
    apply_temperature,
    cascade_accuracy,
    cascade_macs,
    confidence,
    confidences,
    default_experiment_config,
    ece,
    fit_temperature,
    grad_wrt_logits,
    load_logit_table,
    ltc_grad_conf,
    ltc_loss_sample,
    mean_nll,
    n_expensive,
    predictions,
    route_multistage,
    run_experiment,
    search_multistage_thresholds,
    select_threshold,
    softmax,
    sweep_thresholds,
    write_logit_table,
)

__all__ = [name for name in dir() if not name.startswith("_")]
