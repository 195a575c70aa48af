import datetime
import pathlib
import re
import typing

from pydantic import Field, root_validator, validator

from apps.classifiers.enums import ClassifierKind
from apps.CORE.enums import RunStatus
from apps.CORE.schemas import BaseOutSchema, ConfigSchema, FrozenSchema
from apps.CORE.types import HyperParam
from apps.evaluation.schemas import Comparison, EvalReport
from apps.imaging.enums import PrepRecipeName
from apps.neural.schemas import CBOWConfig, NetworkConfig, TrainConfig
from apps.pipeline.enums import AblationKind
from apps.segmentation.schemas import GoldRecord
from settings import Settings

__all__ = (
    "TRAIN_SIZES",
    "ManifestEntry",
    "SplitConfig",
    "PathsConfig",
    "ClassicalModelConfig",
    "NeuralModelConfig",
    "ModelConfig",
    "TrainSubset",
    "AblationConfig",
    "ExperimentConfig",
    "DatasetSplit",
    "RunRecord",
    "AblationResult",
)

TRAIN_SIZES: tuple[int | None, ...] = (10, 25, 50, 100, None)  # None: the whole training set
RATIO_PATTERN = re.compile(r"^\s*(\d+)\s*:\s*(\d+)\s*$")


class ManifestEntry(FrozenSchema):
    """One report of a corpus manifest; paths are relative to the manifest's directory."""

    report_id: str = Field(min_length=1)
    pages: list[str] = Field(default=[], description="Per-page word tables (TSV)")
    images: list[str] = Field(default=[], description="Per-page scans, used when no word table is given")
    gold_ahi: list[float] = Field(default=[])
    gold_sao2: list[float] = Field(default=[])

    @root_validator(skip_on_failure=True)
    def validate_sources(cls, values: dict) -> dict:
        if not values["pages"] and not values["images"]:
            raise ValueError(f"Report '{values['report_id']}' has neither word tables nor images")
        return values

    @property
    def gold(self) -> GoldRecord:
        return GoldRecord(report_id=self.report_id, ahi_values=self.gold_ahi, sao2_values=self.gold_sao2)


class SplitConfig(ConfigSchema):
    test_fraction: float = Field(default=0.30, gt=0, lt=1)
    val_ratio: str = Field(default="6:1", description="train:val ratio inside the development set")
    seed: int = Field(default=0)

    @validator("val_ratio")
    def validate_val_ratio(cls, v: str) -> str:
        match = RATIO_PATTERN.match(v)
        if not match or int(match.group(1)) == 0 or int(match.group(2)) == 0:
            raise ValueError(f"Ratio must look like '6:1' with positive parts, got '{v}'")
        return v

    @property
    def ratio(self) -> tuple[int, int]:
        train, val = RATIO_PATTERN.match(self.val_ratio).groups()
        return int(train), int(val)


class PathsConfig(ConfigSchema):
    manifest: pathlib.Path
    workdir: pathlib.Path | None = Field(default=None, description="Defaults to `Settings.WORKDIR`")
    deid_lookup: pathlib.Path | None = Field(default=None, description="Defaults to `deid_lookup.csv` next to it")


class ClassicalModelConfig(ConfigSchema):
    """Bag-of-words classifier chosen by report-level cross-validation over `grid`."""

    family: typing.Literal["classical"] = Field(default="classical")
    kind: ClassifierKind
    grid: list[dict[str, HyperParam]] | None = Field(default=None, description="Defaults to the kind's search grid")
    folds: int = Field(default=5, ge=2)


class NeuralModelConfig(ConfigSchema):
    family: typing.Literal["neural"] = Field(default="neural")
    network: NetworkConfig = Field(default_factory=NetworkConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    cbow: CBOWConfig = Field(default_factory=CBOWConfig)

    @root_validator(skip_on_failure=True)
    def validate_embedding_dim(cls, values: dict) -> dict:
        if values["cbow"].enabled and values["cbow"].dim != values["network"].sequence_branch.embed_dim:
            raise ValueError("CBOW dimension must equal the sequence branch embedding dimension")
        return values


ModelConfig = typing.Annotated[typing.Union[ClassicalModelConfig, NeuralModelConfig], Field(discriminator="family")]


class TrainSubset(ConfigSchema):
    """Train on `size` reports sampled from the training split; nested subsets share one sampling order."""

    size: int = Field(ge=1)
    independent: bool = Field(default=False)


class AblationConfig(ConfigSchema):
    kind: AblationKind
    values: list[typing.Any] | None = Field(
        default=None, description="Recipes, include_structured flags or subset sizes; defaults per kind"
    )
    independent_subsets: bool = Field(default=False)


class ExperimentConfig(ConfigSchema):
    name: str = Field(default="experiment", min_length=1)
    recipe: PrepRecipeName = Field(default=PrepRecipeName.GRAY_DE_C20)
    model: ModelConfig
    split: SplitConfig = Field(default_factory=SplitConfig)
    paths: PathsConfig
    ablation: AblationConfig | None = Field(default=None)
    train_subset: TrainSubset | None = Field(default=None)
    seed: int = Field(default=0)
    scale_structured: bool = Field(default_factory=lambda: Settings.SCALE_STRUCTURED)

    def snapshot(self) -> dict[str, typing.Any]:
        """Run-defining fields; `ablation` only spawns runs and `paths.workdir` only says where they go."""
        data = self.dict(exclude={"ablation"})
        data["paths"] = {
            key: None if value is None else str(value) for key, value in data["paths"].items() if key != "workdir"
        }
        data["recipe"] = self.recipe.value
        return data


class DatasetSplit(FrozenSchema):
    """Report-level partition of a corpus."""

    train: list[str]
    val: list[str]
    test: list[str]

    @root_validator(skip_on_failure=True)
    def validate_partition(cls, values: dict) -> dict:
        train, val, test = set(values["train"]), set(values["val"]), set(values["test"])
        if train & val or train & test or val & test:
            raise ValueError("Split sets must be disjoint")
        return values

    @property
    def all(self) -> list[str]:
        return sorted([*self.train, *self.val, *self.test])


class RunRecord(BaseOutSchema):
    run_id: str
    name: str
    status: RunStatus
    config: dict[str, typing.Any]
    manifest_hash: str
    started_at: datetime.datetime
    finished_at: datetime.datetime | None = Field(default=None)
    split_sizes: dict[str, int] = Field(default={})
    metrics: EvalReport | None = Field(default=None)
    artifacts: dict[str, str] = Field(default={})
    artifact_hashes: dict[str, str] = Field(default={})
    error: dict[str, typing.Any] | None = Field(default=None)

    @root_validator(skip_on_failure=True)
    def validate_metrics(cls, values: dict) -> dict:
        if (values["status"] is RunStatus.COMPLETED) != (values["metrics"] is not None):
            raise ValueError("Metrics are present exactly when the run completed")
        return values


class AblationResult(BaseOutSchema):
    kind: AblationKind
    runs: list[RunRecord]
    comparisons: list[Comparison] = Field(default=[])
