"""
Tabular report exports: training curves, per-layer pruning rates, mask heatmaps, FLOPs tables
"""

import logging
import os
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from wbprune.classes.mask import ClasswiseMask
from wbprune.classes.plan import FlopsModel, PruningPlan, flops_reduction
from wbprune.classes.run import LayerRow, RunReport
from wbprune.interface.config.constants import CURVES_CSV, LAYER_RATES_CSV, SUMMARY_FILE
from wbprune.pruning.flops import flops_rows, model_flops
from wbprune.pruning.scoring import channel_scores

logger = logging.getLogger(__name__)


def format_flops(value: float) -> str:
    for scale, suffix in ((1e9, "G"), (1e6, "M"), (1e3, "K")):
        if abs(value) >= scale:
            return f"{value / scale:.2f}{suffix}"
    return f"{value:.0f}"


def layer_rows(plan: PruningPlan) -> List[LayerRow]:
    return [LayerRow(layer=p.layer_id, original=p.original_channels, kept=len(p.kept), rate=p.pruning_rate,
                     flops_before=p.flops_before, flops_after=p.flops_after)
            for p in plan.layers]


def layer_rates_frame(plan: PruningPlan) -> pd.DataFrame:
    return pd.DataFrame([row.model_dump() for row in layer_rows(plan)],
                        columns=list(LayerRow.model_fields.keys()))


def curves_frame(report: RunReport) -> pd.DataFrame:
    columns = ["phase", "epoch", "lr", "loss", "cross_entropy", "penalty",
               "train_accuracy", "test_accuracy", "mask_norm"]
    return pd.DataFrame([record.model_dump() for record in report.curves], columns=columns)


def mask_heatmap_frame(mask: ClasswiseMask, scores: np.ndarray) -> pd.DataFrame:
    """Rows are classes, columns are channels in ascending score order (pruned first)"""
    order = np.lexsort((np.arange(len(scores)), scores))
    values = mask.values.data[:, order]
    return pd.DataFrame(values, index=[f"class_{d}" for d in range(mask.num_classes)],
                        columns=[f"ch{c}" for c in order])


def flops_frame(model: FlopsModel, kept: Optional[Dict[str, int]] = None) -> pd.DataFrame:
    return pd.DataFrame(flops_rows(model, kept))


def summary_line(plan: PruningPlan, report: Optional[RunReport] = None) -> str:
    """``FLOPs baseline → pruned (↓rate)`` plus accuracies when a report is given"""
    line = (f"FLOPs {format_flops(plan.baseline_flops)} → {format_flops(plan.pruned_flops)} "
            f"(↓{100 * flops_reduction(plan):.1f}%) alpha={plan.target_rate:g} score={plan.score_kind}")
    if report is not None:
        masked = "-" if report.masked_accuracy is None else f"{100 * report.masked_accuracy:.2f}%"
        line += f" | top-1 masked {masked} → pruned {100 * report.final_accuracy:.2f}% method={report.method}"
    return line


def write_mask_heatmaps(directory: str, masks: Dict[str, ClasswiseMask], score_kind: str = "abs_sum") -> List[str]:
    os.makedirs(directory, exist_ok=True)
    table = channel_scores(masks, score_kind)
    paths = []
    for layer_id, mask in masks.items():
        path = os.path.join(directory, f"{layer_id}.csv")
        mask_heatmap_frame(mask, table.scores[layer_id]).to_csv(path)
        paths.append(path)
    return paths


def write_reports(directory: str, plan: PruningPlan, report: Optional[RunReport] = None) -> List[str]:
    """Per-layer rates, curves (when a report exists) and the summary line"""
    os.makedirs(directory, exist_ok=True)
    paths = [os.path.join(directory, LAYER_RATES_CSV)]
    layer_rates_frame(plan).to_csv(paths[0], index=False)
    if report is not None:
        paths.append(os.path.join(directory, CURVES_CSV))
        curves_frame(report).to_csv(paths[-1], index=False)
    paths.append(os.path.join(directory, SUMMARY_FILE))
    with open(paths[-1], "w", encoding="utf-8") as f:
        f.write(summary_line(plan, report) + "\n")
    logger.info("wrote %d report files to %s", len(paths), directory)
    return paths


def total_flops_line(model: FlopsModel) -> str:
    total = model_flops(model)
    return f"total MACs {total} ({format_flops(total)})"
