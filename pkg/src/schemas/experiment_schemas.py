# src/schemas/experiment_schemas.py
from typing import Dict, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, Field, field_validator

from .attack_schemas import AttackerConfig, AttackerName, GbtSettings, MlpSettings
from .dataset_schemas import AttributeFormat, GenericColumns, RatingFormat
from .model_schemas import ModelKind, TrainConfig
from .unlearn_schemas import LossKind, UnlearnConfig, UnlearnOptimizer


def _split_list(value):
    """Flat config files carry lists as comma-separated strings."""
    if isinstance(value, str):
        return [part.strip() for part in value.split(",") if part.strip()]
    return value


class DatasetSpec(BaseModel):
    name: str = "ml100k"
    format: RatingFormat = "ml100k"
    attribute_format: Optional[AttributeFormat] = None  # defaults to `format`
    ratings_path: str
    users_path: str
    min_count: int = Field(5, ge=1)
    iterate_filter: bool = True
    split_ratios: Tuple[float, float, float] = (0.8, 0.1, 0.1)
    seed: int = 2023
    generic: GenericColumns = Field(default_factory=GenericColumns)

    split_ratios_from_string = field_validator("split_ratios", mode="before")(_split_list)

    @field_validator("split_ratios")
    @classmethod
    def ratios_sum_to_one(cls, value):
        if any(r < 0 for r in value) or abs(sum(value) - 1.0) > 1e-9:
            raise ValueError("split ratios must be non-negative and sum to 1")
        return value


class ModelSpec(TrainConfig):
    kind: ModelKind = "MF"

    def train_config(self, seed: int) -> TrainConfig:
        fields = self.model_dump(exclude={"kind", "seed"})
        return TrainConfig(**fields, seed=seed)


class UnlearnSpec(BaseModel):
    methods: List[LossKind] = Field(default_factory=lambda: ["U2U-R", "D2D-R"])
    alpha: float = Field(1e-4, ge=0)
    learning_rate: float = Field(0.001, gt=0)
    u2u_epochs: int = Field(5000, ge=0)
    d2d_epochs: int = Field(1000, ge=0)
    mmd_bandwidth: Union[Literal["median"], float] = "median"
    optimizer: UnlearnOptimizer = "adam"
    batch_size: Optional[int] = Field(None, ge=2)

    methods_from_string = field_validator("methods", mode="before")(_split_list)

    def config_for(self, method: str, seed: int, alpha: Optional[float] = None) -> UnlearnConfig:
        return UnlearnConfig(
            loss_kind=method,
            alpha=self.alpha if alpha is None else alpha,
            learning_rate=self.learning_rate,
            epochs=self.u2u_epochs if method == "U2U-R" else self.d2d_epochs,
            mmd_bandwidth=self.mmd_bandwidth,
            optimizer=self.optimizer,
            batch_size=self.batch_size,
            seed=seed,
        )


class RetrainSpec(BaseModel):
    enabled: bool = True
    d2d_weight: float = Field(1.0, ge=0)
    mmd_bandwidth: Union[Literal["median"], float] = "median"


class AttackSpec(BaseModel):
    fraction: float = Field(0.1, gt=0, lt=1)
    attackers: List[AttackerName] = Field(default_factory=lambda: ["MLP", "GBT"])
    mlp: MlpSettings = Field(default_factory=MlpSettings)
    gbt: GbtSettings = Field(default_factory=GbtSettings)

    attackers_from_string = field_validator("attackers", mode="before")(_split_list)

    def attacker_config(self, seed: int, n_jobs: int = 1) -> AttackerConfig:
        return AttackerConfig(mlp=self.mlp, gbt=self.gbt, seed=seed, n_jobs=n_jobs)


class AnalysisSpec(BaseModel):
    bins: int = Field(50, ge=1)
    downsample: bool = True
    sweep_method: LossKind = "D2D-R"
    alpha_grid: List[float] = Field(default_factory=lambda: [1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0])

    alpha_grid_from_string = field_validator("alpha_grid", mode="before")(_split_list)


class ExperimentConfig(BaseModel):
    dataset: DatasetSpec
    model: ModelSpec = Field(default_factory=ModelSpec)
    unlearn: UnlearnSpec = Field(default_factory=UnlearnSpec)
    retrain: RetrainSpec = Field(default_factory=RetrainSpec)
    attack: AttackSpec = Field(default_factory=AttackSpec)
    analysis: AnalysisSpec = Field(default_factory=AnalysisSpec)
    output_dir: str = "runs/default"
    repeat: int = Field(10, ge=1)
    seed: int = 2023

    def seeds(self) -> List[int]:
        return [self.seed + i for i in range(self.repeat)]


class RunManifest(BaseModel):
    config_hash: str
    seeds: List[int]
    stage_times: Dict[str, float] = Field(default_factory=dict)
    files: List[str] = Field(default_factory=list)
    executed_stages: List[str] = Field(default_factory=list)
    skipped_stages: List[str] = Field(default_factory=list)
