"""
Run directory layout

    <run>/config.json, plan.json, report.json
    <run>/checkpoints/<phase>/model.wbp + graph.json
    <run>/masks/<layer>.csv
    <run>/reports/curves.csv, layer_rates.csv, summary.txt
"""

import os
from typing import List

from wbprune.errors import ArtifactError
from wbprune.interface.config.constants import (
    CHECKPOINT_DIR, CHECKPOINT_FILE, CHECKPOINT_PHASES, CONFIG_SNAPSHOT_FILE, MASKS_DIR, PLAN_FILE, REPORT_FILE,
    REPORTS_DIR,
)


def init_run_dir(run_dir: str) -> str:
    """Create the run directory tree"""
    for directory in (run_dir, os.path.join(run_dir, CHECKPOINT_DIR),
                      os.path.join(run_dir, MASKS_DIR), os.path.join(run_dir, REPORTS_DIR)):
        os.makedirs(directory, exist_ok=True)
    return run_dir


def checkpoint_dir(run_dir: str, phase: str) -> str:
    if phase not in CHECKPOINT_PHASES:
        raise ArtifactError(f"no checkpoint phase '{phase}'; choose one of {', '.join(CHECKPOINT_PHASES)}")
    return os.path.join(run_dir, CHECKPOINT_DIR, phase)


def config_path(run_dir: str) -> str:
    return os.path.join(run_dir, CONFIG_SNAPSHOT_FILE)


def plan_path(run_dir: str) -> str:
    return os.path.join(run_dir, PLAN_FILE)


def report_path(run_dir: str) -> str:
    return os.path.join(run_dir, REPORT_FILE)


def masks_dir(run_dir: str) -> str:
    return os.path.join(run_dir, MASKS_DIR)


def reports_dir(run_dir: str) -> str:
    return os.path.join(run_dir, REPORTS_DIR)


def require_artifact(path: str) -> str:
    if not os.path.exists(path):
        raise ArtifactError(f"missing artifact: {path}")
    return path


def require_checkpoint(run_dir: str, phase: str) -> str:
    directory = checkpoint_dir(run_dir, phase)
    require_artifact(os.path.join(directory, CHECKPOINT_FILE))
    return directory


def available_checkpoints(run_dir: str) -> List[str]:
    """Phases with a checkpoint on disk, in run order"""
    return [phase for phase in CHECKPOINT_PHASES
            if os.path.exists(os.path.join(run_dir, CHECKPOINT_DIR, phase, CHECKPOINT_FILE))]
