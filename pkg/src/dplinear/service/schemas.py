"""Pydantic request/response models for the training service.

The service validates the shape of incoming JSON here; semantic validation
(budget resolution, clip requirements) lives in the core package and is
reported with a structured error category.
"""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field

from ..datasets import SyntheticSpec
from ..sweep import RunRequest

Method = Literal["first_order", "newton", "least_squares", "feature_covariance"]
Loss = Literal["logistic", "squared"]


class SyntheticModel(BaseModel):
    num_examples: int = Field(ge=1)
    num_features: int = Field(ge=1)
    num_classes: int = Field(ge=1)
    margin: float = 4.0
    noise: float = 1.0
    seed: int = 0

    def to_spec(self) -> SyntheticSpec:
        return SyntheticSpec(
            num_examples=self.num_examples,
            num_features=self.num_features,
            num_classes=self.num_classes,
            margin=self.margin,
            noise=self.noise,
            seed=self.seed,
        )


class RunModel(BaseModel):
    """One training run: data source, method, budget, hyperparameters."""

    method: Method = "least_squares"
    loss: Loss = "logistic"
    iterations: int = Field(default=1, ge=1)
    learning_rate: float = 1.0
    ridge: float = 0.0
    alpha: float = 0.0
    feature_clip: Optional[float] = None
    gradient_clip: Optional[float] = None
    epsilon: Optional[float] = None
    delta: Optional[float] = None
    sigma: Optional[float] = None
    seed: int = 0
    fit_bias: Optional[bool] = None
    optimizer: Literal["adam", "sgd"] = "adam"
    average_iterates: bool = False
    synthetic: Optional[SyntheticModel] = None
    features: Optional[str] = None
    labels: Optional[str] = None
    test_features: Optional[str] = None
    test_labels: Optional[str] = None

    def to_request(self, **overrides) -> RunRequest:
        payload = dict(
            method=self.method,
            loss=self.loss,
            iterations=self.iterations,
            learning_rate=self.learning_rate,
            ridge=self.ridge,
            alpha=self.alpha,
            feature_clip=self.feature_clip,
            gradient_clip=self.gradient_clip,
            epsilon=self.epsilon,
            delta=self.delta,
            sigma=self.sigma,
            seed=self.seed,
            fit_bias=self.fit_bias,
            optimizer=self.optimizer,
            average_iterates=self.average_iterates,
            synthetic=None if self.synthetic is None else self.synthetic.to_spec(),
            features=self.features,
            labels=self.labels,
            test_features=self.test_features,
            test_labels=self.test_labels,
        )
        payload.update(overrides)
        return RunRequest(**payload)


class CalibrateRequest(BaseModel):
    epsilon: float
    delta: float
    method: Method
    iterations: int = Field(default=1, ge=1)


class CalibrateResponse(BaseModel):
    method: str
    iterations: int
    epsilon: float
    delta: float
    rho: float
    sigma: float
    coefficient: float
    non_private: bool
    epsilon_check: Optional[float] = None


class TrainResponse(BaseModel):
    report: dict


class SweepRequest(RunModel):
    methods: list[Method]
    epsilons: list[float]
    seeds: list[int]


class SweepResponse(BaseModel):
    delta: float
    rows: list[dict]
    cells: list[dict]
    table: str


class GridRequest(RunModel):
    learning_rates: Optional[list[float]] = None
    ridges: Optional[list[float]] = None
    alphas: Optional[list[float]] = None


class GridResponse(BaseModel):
    best: dict
    rows: list[dict]
    table: str


class SynthRequest(BaseModel):
    spec: SyntheticModel
    train_features: str
    train_labels: str
    test_features: str
    test_labels: str


class SynthResponse(BaseModel):
    train_features: str
    train_labels: str
    test_features: str
    test_labels: str
    num_train: int
    num_test: int
    num_features: int
    num_classes: int


class HealthResponse(BaseModel):
    status: str
    version: str
