"""Ablation harnesses: one base experiment, one varied setting, every other field held fixed."""
import pathlib

import joblib

from apps.CORE.enums import RunStatus
from apps.CORE.exceptions import ConfigException, InvalidInputException
from apps.CORE.utils import content_hash, write_json
from apps.evaluation.services import compare_runs, render_comparison_table, write_comparisons
from apps.imaging.enums import PrepRecipeName
from apps.pipeline.enums import AblationKind, Stage
from apps.pipeline.managers import ExperimentRunner, load_scored, run_experiment
from apps.pipeline.schemas import (
    TRAIN_SIZES,
    AblationConfig,
    AblationResult,
    ExperimentConfig,
    NeuralModelConfig,
    RunRecord,
    TrainSubset,
)
from apps.pipeline.services import load_manifest, split_dataset
from loggers import get_logger
from settings import Settings

__all__ = ("ablation_variants", "run_ablation")

logger = get_logger(name=__name__)


def _train_size_label(size: int | None) -> str:
    return "train_all" if size is None else f"train_{size}"


def ablation_variants(*, config: ExperimentConfig) -> list[tuple[str, ExperimentConfig]]:
    """
    (label, config) for every run of the ablation in `config.ablation`.

    Raises:
        ConfigException: no ablation configured, a value of the wrong type, or a structured-branch ablation
            of a classical model.
        InvalidInputException: a training subset larger than the training split.
    """
    ablation: AblationConfig | None = config.ablation
    if ablation is None:
        raise ConfigException(message="Experiment config has no `ablation` section.")
    base = config.copy(update={"ablation": None})

    if ablation.kind is AblationKind.PREPROCESS:
        try:
            recipes = [PrepRecipeName(value) for value in ablation.values or list(PrepRecipeName)]
        except ValueError as error:
            raise ConfigException(message=f"Unknown preprocessing recipe: {error}.") from error
        return [(recipe.value, base.copy(update={"recipe": recipe})) for recipe in recipes]

    if ablation.kind is AblationKind.STRUCTURED_BRANCH:
        model = base.model
        if not isinstance(model, NeuralModelConfig):
            raise ConfigException(message="The structured-branch ablation needs a neural model.")
        flags = ablation.values if ablation.values is not None else [True, False]
        if not all(isinstance(flag, bool) for flag in flags):
            raise ConfigException(message=f"Structured-branch values must be booleans, got {flags}.")
        variants = []
        for flag in flags:
            network = model.network.copy(update={"include_structured": flag})
            label = "with_structured" if flag else "without_structured"
            variants.append((label, base.copy(update={"model": model.copy(update={"network": network})})))
        return variants

    sizes = ablation.values if ablation.values is not None else list(TRAIN_SIZES)
    if not all(size is None or (isinstance(size, int) and not isinstance(size, bool) and size > 0) for size in sizes):
        raise ConfigException(message=f"Training sizes must be positive integers or null, got {sizes}.")
    entries = load_manifest(path=config.paths.manifest)
    split = split_dataset(report_ids=[entry.report_id for entry in entries], config=config.split)
    too_large = [size for size in sizes if size is not None and size > len(split.train)]
    if too_large:
        raise InvalidInputException(
            message=f"Training subsets {too_large} exceed the {len(split.train)} training reports.",
            data={"sizes": too_large, "train": len(split.train)},
            stage=Stage.SPLIT.value,
        )
    return [
        (
            _train_size_label(size),
            base.copy(
                update={
                    "train_subset": None
                    if size is None
                    else TrainSubset(size=size, independent=ablation.independent_subsets)
                }
            ),
        )
        for size in sizes
    ]


def run_ablation(*, config: ExperimentConfig, force: bool = False, n_jobs: int | None = None) -> AblationResult:
    """
    Run every variant concurrently, then compare completed runs pairwise on the shared test set.

    Outputs go to `<workdir>/ablations/<ablation id>/`: `ablation.json`, `comparisons.csv`, `comparisons.txt`.
    """
    n_jobs = n_jobs or Settings.JOBS
    variants = ablation_variants(config=config)
    # Warm the corpus cache once so concurrent runs only read it; recipes change it for image corpora.
    runner = ExperimentRunner(config=variants[0][1], force=force, n_jobs=n_jobs)
    runner.prepare_corpus()
    logger.info(msg=f"Ablation '{config.ablation.kind.value}': {len(variants)} runs.")

    records: list[RunRecord] = joblib.Parallel(n_jobs=n_jobs)(
        joblib.delayed(run_experiment)(config=variant, force=force, label=label, n_jobs=1)
        for label, variant in variants
    )
    completed = {}
    for record in records:
        if record.status is RunStatus.COMPLETED:
            completed[record.name] = runner.workdir / "runs" / record.run_id
        else:
            logger.warning(msg=f"Ablation run '{record.name}' failed and is left out of the comparisons.")

    split = split_dataset(report_ids=[entry.report_id for entry in runner.entries], config=config.split)
    gold = [runner.gold[report_id] for report_id in split.test]
    comparisons = compare_runs(
        runs={label: load_scored(run_dir=run_dir) for label, run_dir in completed.items()}, gold=gold
    )
    result = AblationResult(kind=config.ablation.kind, runs=records, comparisons=comparisons)

    ablation_id = content_hash(
        {"kind": config.ablation.kind.value, "runs": [record.run_id for record in records]}
    )[:16]
    output_dir: pathlib.Path = runner.workdir / "ablations" / ablation_id
    write_json(output_dir / "ablation.json", result.dict())
    write_comparisons(comparisons=comparisons, path=output_dir / "comparisons.csv")
    (output_dir / "comparisons.txt").write_text(render_comparison_table(comparisons=comparisons) + "\n")
    logger.info(msg=f"Ablation results written to '{output_dir}'.")
    return result

