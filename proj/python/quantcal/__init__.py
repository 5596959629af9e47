"""Calibrated prevalence estimation and cross-partisan toxicity modeling."""

from ._quantcal import (  # noqa: F401
    GlmmFit,
    ProxyModel,
    StrataProfile,
    aggregate,
    classify_leaning,
    fit_glmm,
    jsd,
    krippendorff_alpha,
    midpoint_sd,
    neyman_allocate,
    ngrams,
    predict_cell_means,
    predict_proba,
    profile,
    select_calibrator,
    stratum_of,
    subreddit_prevalence,
    tokenize,
    tp_tnp,
    train_classifier,
)
