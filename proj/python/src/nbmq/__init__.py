"""Negative Binomial M-quantile small area estimation."""

from ._nbmq import (
    FitError,
    bootstrap_mse,
    fit_eb,
    fit_robust_nb,
    lip_cancer,
    lip_cancer_adjacency,
    load_dataset,
    nb_pmf,
    run_nbmq,
    simulate,
    smr,
)

__all__ = [
    "FitError",
    "bootstrap_mse",
    "fit_eb",
    "fit_robust_nb",
    "lip_cancer",
    "lip_cancer_adjacency",
    "load_dataset",
    "nb_pmf",
    "run_nbmq",
    "simulate",
    "smr",
]
