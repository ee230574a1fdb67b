"""
Seed, sparsity-factor and method sweeps over independent pipeline runs
"""

import logging
import os
from typing import Dict, Iterable, List, Optional, Tuple

import pandas as pd

from wbprune.classes.dataset import LabeledImageSet
from wbprune.classes.run import RunReport, TrainConfig
from wbprune.harness.pipeline import prepare_data, run_pipeline
from wbprune.interface.utils.config_file import build_config

logger = logging.getLogger(__name__)

Data = Tuple[LabeledImageSet, LabeledImageSet]


def _run_all(configs: List[Tuple[str, TrainConfig]], data: Optional[Data], out_dir: Optional[str]) -> List[RunReport]:
    reports = []
    for name, config in configs:
        run_dir = os.path.join(out_dir, name) if out_dir else None
        logger.info("sweep run %s", name)
        reports.append(run_pipeline(config, run_dir=run_dir, data=data))
    return reports


def seed_sweep(config: TrainConfig, seeds: Iterable[int], data: Optional[Data] = None,
               out_dir: Optional[str] = None) -> List[RunReport]:
    """One run per seed; every run gets its own config copy"""
    data = data or prepare_data(config)
    configs = [(f"seed{seed}", build_config({"seed": seed}, base=config)) for seed in seeds]
    return _run_all(configs, data, out_dir)


def lambda_sweep(config: TrainConfig, lambdas: Iterable[float], data: Optional[Data] = None,
                 out_dir: Optional[str] = None) -> List[RunReport]:
    data = data or prepare_data(config)
    configs = [(f"lambda{lam:g}", build_config({"lam": lam}, base=config)) for lam in lambdas]
    return _run_all(configs, data, out_dir)


def method_sweep(config: TrainConfig, variants: Dict[str, dict], seeds: Iterable[int],
                 data: Optional[Data] = None, out_dir: Optional[str] = None) -> List[RunReport]:
    """Every named config variant (e.g. ``{"random": {"method": "random"}}``) under every seed

    Variants are validated up front, so a bad one fails before any run starts.
    """
    seeds = list(seeds)
    data = data or prepare_data(config)
    configs = [(f"{name}-seed{seed}", build_config({**update, "seed": seed}, base=config))
               for name, update in variants.items() for seed in seeds]
    reports = _run_all(configs, data, out_dir)
    for (name, _), report in zip(configs, reports):
        report.method = name
    return reports


def ablation_variants() -> Dict[str, dict]:
    """Full method, its ablations and the baselines"""
    return {
        "whitebox": {},
        "no_classwise": {"classwise": False},
        "hard_labels": {"soft_labels": False},
        "l1_penalty": {"norm_kind": "l1"},
        "random": {"method": "random"},
        "l1": {"method": "l1"},
    }


def sweep_frame(reports: List[RunReport]) -> pd.DataFrame:
    return pd.DataFrame([{
        "method": r.method, "seed": r.seed, "lambda": r.lam, "alpha": r.target_rate,
        "alpha_hat": r.achieved_rate, "masked_accuracy": r.masked_accuracy, "accuracy": r.final_accuracy,
    } for r in reports])


def summarize(reports: List[RunReport]) -> pd.DataFrame:
    """Mean and std of accuracy and achieved rate per method"""
    frame = sweep_frame(reports)
    return frame.groupby("method")[["accuracy", "alpha_hat"]].agg(["mean", "std"])
