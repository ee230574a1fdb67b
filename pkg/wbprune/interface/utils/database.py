"""
JSON artifact storage: plans, reports and config snapshots
"""

import json
import logging
import os

from pydantic import ValidationError

from wbprune.classes.plan import PruningPlan
from wbprune.classes.run import RunReport, TrainConfig
from wbprune.errors import ArtifactError

logger = logging.getLogger(__name__)


def load_data(file_path: str, required: bool = False) -> dict:
    """Load data from JSON file; a missing or unreadable file is ``{}`` unless ``required``"""
    try:
        with open(file_path, "r", encoding="utf-8") as f:
            return json.load(f)
    except (OSError, ValueError) as e:
        if required:
            raise ArtifactError(f"cannot read {file_path}: {e}")
        logger.warning("could not load %s: %s", file_path, e)
        return {}


def save_data(file_path: str, data: dict):
    """Save data to JSON file"""
    directory = os.path.dirname(file_path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(file_path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2, default=str)
        f.write("\n")


# Plan operations
def save_plan(file_path: str, plan: PruningPlan):
    save_data(file_path, plan.model_dump())


def load_plan(file_path: str) -> PruningPlan:
    data = load_data(file_path, required=True)
    try:
        return PruningPlan(**data)
    except ValidationError as e:
        raise ArtifactError(f"{file_path} is not a valid pruning plan: {e}")


# Report operations
def save_report(file_path: str, report: RunReport):
    save_data(file_path, report.model_dump())


def load_report(file_path: str) -> RunReport:
    data = load_data(file_path, required=True)
    try:
        return RunReport(**data)
    except ValidationError as e:
        raise ArtifactError(f"{file_path} is not a valid run report: {e}")


# Config snapshots
def save_config(file_path: str, config: TrainConfig):
    save_data(file_path, config.model_dump(by_alias=True))


def load_config_snapshot(file_path: str) -> TrainConfig:
    data = load_data(file_path, required=True)
    try:
        return TrainConfig(**data)
    except ValidationError as e:
        raise ArtifactError(f"{file_path} is not a valid config snapshot: {e}")
