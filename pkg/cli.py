import dataclasses
import functools
import pathlib
import typing

import typer
from pydantic import ValidationError

from apps.CORE.enums import ErrorKind
from apps.CORE.exceptions import ConfigException, InvalidInputException, PipelineException
from apps.CORE.handlers import pipeline_exception_handler, validation_exception_handler
from apps.CORE.utils import read_json, write_json
from apps.deid.services import deidentify_report, load_lookup_table
from apps.evaluation.services import build_report, render_comparison_table, render_report_table
from apps.imaging.enums import PrepRecipeName
from apps.imaging.schemas import PrepRecipe
from apps.imaging.services import load_gray_image, preprocess_file
from apps.ocr.managers import get_engine, run_ocr
from apps.ocr.services import read_word_table, save_overlay, write_word_table
from apps.pipeline.ablations import run_ablation
from apps.pipeline.managers import load_run, load_scored, run_experiment
from apps.pipeline.schemas import AblationResult, DatasetSplit, ExperimentConfig
from apps.pipeline.services import load_experiment_config, load_manifest
from apps.segmentation.schemas import GoldRecord
from apps.segmentation.services import assign_labels, segment_report, write_instances_csv
from apps.synth.schemas import SynthConfig
from apps.synth.services import generate_corpus
from loggers import get_logger, setup_logging
from settings import Settings

setup_logging()  # enable logging inside CLI
logger = get_logger(name=__name__)


@dataclasses.dataclass
class GlobalOptions:
    config: pathlib.Path | None = None
    seed: int | None = None
    workdir: pathlib.Path | None = None
    force: bool = False
    jobs: int = 1

    @property
    def runs_dir(self) -> pathlib.Path:
        return (self.workdir or Settings.WORKDIR) / "runs"

    def experiment(self) -> ExperimentConfig:
        if self.config is None:
            raise ConfigException(message="This command needs an experiment config (`--config <json>`).")
        overrides = {"seed": self.seed} if self.seed is not None else None
        config = load_experiment_config(path=self.config, overrides=overrides)
        if self.workdir is not None:
            config = config.copy(update={"paths": config.paths.copy(update={"workdir": self.workdir})})
        return config


def handle_errors(func):  # type: ignore
    """Decorator to turn pipeline and validation errors of Typer commands into exit codes."""

    @functools.wraps(func)
    def wrapper(*args, **kwargs):  # type: ignore
        """Run command, map known errors to `typer.Exit`."""
        try:
            return func(*args, **kwargs)
        except PipelineException as exc:
            raise pipeline_exception_handler(exc=exc)
        except ValidationError as exc:
            raise validation_exception_handler(exc=exc)

    return wrapper


app = typer.Typer(name="scandoc", help="Extract AHI and SaO2 values from scanned sleep-study reports.")
# app
# --> synth      (`poetry run python cli.py synth out/corpus --reports 200`)
# --> preprocess (`poetry run python cli.py preprocess page.png page.prep.png --recipe gray_de_c20`)
# --> ocr        (`poetry run python cli.py ocr page.prep.png page.tsv --overlay`)
# --> deid       (`poetry run python cli.py deid page.tsv R00001 deid_lookup.csv page.deid.tsv`)
# --> segment    (`poetry run python cli.py segment page.deid.tsv R00001 instances.csv --ahi 19.5`)
# --> train      (`poetry run python cli.py --config experiment.json train`)
# --> evaluate   (`poetry run python cli.py evaluate <run id>`)
# --> ablate     (`poetry run python cli.py --config ablation.json --jobs 4 ablate`)
# --> report     (`poetry run python cli.py report <run id or directory>`)


@app.callback()
def main(
    ctx: typer.Context,
    config: typing.Optional[pathlib.Path] = typer.Option(
        None, "--config", "-c", exists=True, dir_okay=False, help="Experiment config (JSON)."
    ),
    seed: typing.Optional[int] = typer.Option(None, "--seed", help="Overrides the config / synthetic corpus seed."),
    workdir: typing.Optional[pathlib.Path] = typer.Option(None, "--workdir", help="Run and cache directory."),
    force: bool = typer.Option(False, "--force", help="Rerun completed runs."),
    jobs: int = typer.Option(Settings.JOBS, "--jobs", "-j", min=1, help="Parallel workers."),
) -> None:
    ctx.obj = GlobalOptions(config=config, seed=seed, workdir=workdir, force=force, jobs=jobs)


@app.command(name="synth", help="Generate a synthetic corpus: word tables, manifest and de-identification lookup.")
@handle_errors
def synth(
    ctx: typer.Context,
    output_dir: pathlib.Path = typer.Argument(..., file_okay=False, help="Corpus directory."),
    reports: int = typer.Option(200, "--reports", "-n", min=1, help="Number of reports."),
    noise_rate: float = typer.Option(0.0, "--noise-rate", min=0.0, max=0.99, help="OCR character noise."),
    distractors: int = typer.Option(4, "--distractors", min=0, help="Distractor numbers per page."),
) -> None:
    options: GlobalOptions = ctx.obj
    seed = Settings.SEED if options.seed is None else options.seed
    config = SynthConfig(n_reports=reports, noise_rate=noise_rate, distractor_density=distractors, seed=seed)
    manifest = generate_corpus(config=config, output_dir=output_dir, n_jobs=options.jobs)
    typer.echo(message=str(manifest))


@app.command(name="preprocess", help="Apply a preprocessing recipe to one page image.")
@handle_errors
def preprocess(
    source: pathlib.Path = typer.Argument(..., exists=True, dir_okay=False, help="Page image."),
    destination: pathlib.Path = typer.Argument(..., dir_okay=False, help="Output image."),
    recipe: PrepRecipeName = typer.Option(PrepRecipeName.GRAY_DE_C20, "--recipe", "-r", help="Recipe name."),
) -> None:
    preprocess_file(source=source, recipe=PrepRecipe.from_name(recipe), destination=destination)
    typer.echo(message=str(destination))


@app.command(name="ocr", help="Recognize one page image into a word table (TSV).")
@handle_errors
def ocr(
    image_path: pathlib.Path = typer.Argument(..., exists=True, dir_okay=False, help="Page image."),
    destination: pathlib.Path = typer.Argument(..., dir_okay=False, help="Output word table."),
    page: int = typer.Option(1, "--page", min=1, help="Page number written to the table."),
    overlay: bool = typer.Option(False, "--overlay", help="Also save the image with word boxes drawn."),
) -> None:
    image = load_gray_image(path=image_path)
    words = run_ocr(image=image, engine=get_engine(), page=page, source_image=image_path)
    write_word_table(pages=[words], path=destination)
    if overlay:
        typer.echo(message=str(save_overlay(image=image, words=words, source_image=image_path)))
    typer.echo(message=f"{destination} ({len(words.words)} words)")


@app.command(name="deid", help="Replace patient names, MRNs and dates in a report's word table.")
@handle_errors
def deid(
    words_path: pathlib.Path = typer.Argument(..., exists=True, dir_okay=False, help="Word table of the report."),
    report_id: str = typer.Argument(..., help="Report id in the lookup table."),
    lookup_path: pathlib.Path = typer.Argument(..., exists=True, dir_okay=False, help="Lookup CSV."),
    destination: pathlib.Path = typer.Argument(..., dir_okay=False, help="Output word table."),
) -> None:
    pages = deidentify_report(
        report_id=report_id, pages=read_word_table(path=words_path), lookups=load_lookup_table(path=lookup_path)
    )
    write_word_table(pages=pages, path=destination)
    typer.echo(message=str(destination))


@app.command(name="segment", help="Cut numeric-candidate instances out of a report's word table.")
@handle_errors
def segment(
    words_path: pathlib.Path = typer.Argument(..., exists=True, dir_okay=False, help="Word table of the report."),
    report_id: str = typer.Argument(..., help="Report id written to the instances."),
    destination: pathlib.Path = typer.Argument(..., dir_okay=False, help="Output instance CSV."),
    ahi: typing.Optional[typing.List[float]] = typer.Option(None, "--ahi", help="Gold AHI value(s)."),
    sao2: typing.Optional[typing.List[float]] = typer.Option(None, "--sao2", help="Gold SaO2 value(s)."),
) -> None:
    instances = segment_report(report_id=report_id, pages=read_word_table(path=words_path))
    if ahi or sao2:
        gold = GoldRecord(report_id=report_id, ahi_values=ahi or [], sao2_values=sao2 or [])
        instances = assign_labels(instances=instances, gold=gold)
    write_instances_csv(instances=instances, path=destination)
    typer.echo(message=f"{destination} ({len(instances)} instances)")


@app.command(name="train", help="Run the experiment in `--config` end to end and print its report.")
@handle_errors
def train(ctx: typer.Context, label: typing.Optional[str] = typer.Option(None, "--label", help="Run name.")) -> None:
    options: GlobalOptions = ctx.obj
    record = run_experiment(config=options.experiment(), force=options.force, label=label, n_jobs=options.jobs)
    typer.echo(message=f"Run {record.run_id}: {record.status.value}")
    logger.debug(msg=f"Run artifacts: {record.artifacts}.")
    if record.metrics is None:
        raise pipeline_exception_handler(exc=_failure(record.error))
    typer.echo(message=render_report_table(report=record.metrics))


def _failure(error: dict[str, typing.Any] | None) -> PipelineException:
    error = error or {"kind": ErrorKind.INVALID_INPUT.value, "message": "Run failed."}
    return PipelineException(
        kind=ErrorKind(error["kind"]), data=error.get("data"), message=error["message"], stage=error.get("stage")
    )


def _run_dir(options: GlobalOptions, run: str) -> pathlib.Path:
    path = pathlib.Path(run)
    if path.is_dir():
        return path
    if (options.runs_dir / run).is_dir():
        return options.runs_dir / run
    raise InvalidInputException(message=f"No run directory '{run}'.", data={"run": run})


@app.command(name="evaluate", help="Re-score a completed run's test predictions, e.g. at another confidence level.")
@handle_errors
def evaluate(
    ctx: typer.Context,
    run: str = typer.Argument(..., help="Run id or run directory."),
    level: float = typer.Option(0.95, "--level", min=0.5, max=0.999, help="Confidence level of the intervals."),
) -> None:
    run_dir = _run_dir(ctx.obj, run)
    record = load_run(run_dir=run_dir)
    entries = {entry.report_id: entry for entry in load_manifest(path=record.config["paths"]["manifest"])}
    split = DatasetSplit.parse_obj(read_json(run_dir / "split.json"))
    report = build_report(
        model=record.name,
        scored=load_scored(run_dir=run_dir),
        gold=[entries[report_id].gold for report_id in split.test],
        level=level,
    )
    write_json(run_dir / f"report_{level:g}.json", report.dict())
    typer.echo(message=render_report_table(report=report))


@app.command(name="ablate", help="Run the ablation in `--config` and print the pairwise comparisons.")
@handle_errors
def ablate(ctx: typer.Context) -> None:
    options: GlobalOptions = ctx.obj
    result = run_ablation(config=options.experiment(), force=options.force, n_jobs=options.jobs)
    for record in result.runs:
        typer.echo(message=f"{record.name}: {record.run_id} {record.status.value}")
    typer.echo(message=render_comparison_table(comparisons=result.comparisons))


@app.command(name="report", help="Print the tables of a stored run or ablation.")
@handle_errors
def report(ctx: typer.Context, target: str = typer.Argument(..., help="Run id, run or ablation directory.")) -> None:
    path = pathlib.Path(target)
    if (path / "ablation.json").exists():
        result = AblationResult.parse_obj(read_json(path / "ablation.json"))
        for record in result.runs:
            if record.metrics is not None:
                typer.echo(message=render_report_table(report=record.metrics) + "\n")
        typer.echo(message=render_comparison_table(comparisons=result.comparisons))
        return
    run_dir = _run_dir(ctx.obj, target)
    record = load_run(run_dir=run_dir)
    if record.metrics is None:
        raise pipeline_exception_handler(exc=_failure(record.error))
    typer.echo(message=render_report_table(report=record.metrics))


if __name__ == "__main__":
    app()
