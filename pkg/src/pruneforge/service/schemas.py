"""Request/response models of the HTTP API."""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field


class RetrainSettings(BaseModel):
    progressive_epochs: int = 40
    final_epochs: int = 50
    final_learning_rate: float = 1e-5
    complete_learning_rate: float = 1e-5
    per_layer_learning_rates: dict[int, float] = Field(default_factory=dict)
    batch_size: int = 8
    seed: int = 0


class DatasetRef(BaseModel):
    manifest: str
    split_index: int = 0
    split_count: int = 5
    train_fraction: float = 0.5
    split_seed: int = 0


class ModelRef(BaseModel):
    checkpoint: Optional[str] = None
    preset: Optional[str] = None
    preset_seed: int = 0


class PolicySettings(BaseModel):
    mode: Literal["fixed_fraction", "threshold"] = "fixed_fraction"
    fraction: Optional[float] = 0.5
    threshold: Optional[float] = None


class CreateSessionRequest(BaseModel):
    method: Literal["oPPR", "sPPR", "oPCR", "sPCR"]
    dataset: DatasetRef
    model: ModelRef
    id: Optional[str] = None
    criterion: Literal["objective_loss_delta", "l1_norm", "apoz"] = "objective_loss_delta"
    policy: PolicySettings = Field(default_factory=PolicySettings)
    score_subsample: Optional[int] = None
    projection_perplexity: float = 30.0
    projection_iterations: int = 1000
    retrain: RetrainSettings = Field(default_factory=RetrainSettings)


class DecisionsRequest(BaseModel):
    remove: list[int]


class JobView(BaseModel):
    id: str
    kind: str
    session_id: Optional[str]
    status: Literal["running", "succeeded", "failed"]
    progress: float
    epoch: int
    total_epochs: int
    message: str
    error: Optional[str]
    result: Optional[dict]
    trace: list[float] = []


class TrainRequest(BaseModel):
    dataset: DatasetRef
    out: str
    preset: str = "tinyvgg"
    checkpoint: Optional[str] = None
    epochs: int = 20
    learning_rate: float = 0.05
    batch_size: int = 16
    seed: int = 0


class EvalRequest(BaseModel):
    checkpoint: str
    dataset: DatasetRef


class FlopsRequest(BaseModel):
    preset: Optional[str] = None
    checkpoint: Optional[str] = None
    resolution: tuple[int, int, int] = (3, 200, 200)
    class_count: int = 9
    prune_fraction: Optional[float] = None


class ScoreRequest(BaseModel):
    checkpoint: str
    dataset: DatasetRef
    layer: int
    criterion: Literal["objective_loss_delta", "l1_norm", "apoz"] = "objective_loss_delta"
    subsample: Optional[int] = None
