import pathlib

import joblib
import numpy as np

from apps.classifiers.schemas import ClassifierSpec
from apps.classifiers.services import (
    cross_validate,
    default_grid,
    encode_labels,
    predict_proba_batch,
    save_classifier,
)
from apps.CORE.enums import RunStatus
from apps.CORE.exceptions import InvalidInputException, PipelineException
from apps.CORE.utils import bytes_hash, content_hash, read_json, read_jsonl, utc_now, write_json, write_jsonl
from apps.deid.services import load_lookup_table
from apps.evaluation.schemas import EvalReport, ScoredInstance
from apps.evaluation.services import build_report, render_report_table, score_instances, write_roc_points
from apps.features.schemas import FeatureVector, Scaler
from apps.features.services import (
    apply_scaler,
    fit_scaler,
    fit_vocab,
    save_scaler,
    save_vocab,
    tokenize_normalize,
    vectorize,
)
from apps.imaging.schemas import PrepRecipe
from apps.neural.models import DualBranchNetwork
from apps.neural.services import (
    build_codec,
    encode_instances,
    predict_network,
    pretrain_cbow,
    save_checkpoint,
    train_network,
)
from apps.pipeline.enums import SplitName, Stage
from apps.pipeline.schemas import (
    ClassicalModelConfig,
    DatasetSplit,
    ExperimentConfig,
    ManifestEntry,
    NeuralModelConfig,
    RunRecord,
)
from apps.pipeline.services import (
    load_manifest,
    manifest_hash,
    prepare_report,
    read_cache,
    sample_train_subset,
    split_dataset,
    stage_scope,
    write_cache,
)
from apps.segmentation.schemas import GoldRecord, Instance
from apps.segmentation.services import summarize_dataset, write_instances_csv
from loggers import attach_run_log, detach_run_log, get_logger
from settings import Settings

__all__ = ("RUN_FILE", "SCORED_FILE", "ExperimentRunner", "load_run", "load_scored", "run_experiment")

logger = get_logger(name=__name__)

RUN_FILE = "run.json"
SCORED_FILE = "scored.jsonl"
RUN_ID_LENGTH = 16
# Artifacts fitted on training data; their hashes must not depend on the test set.
FITTED_ARTIFACTS: frozenset[str] = frozenset({"vocab", "scaler", "model", "codec", "checkpoint", "checkpoint_blob"})


def load_run(*, run_dir: pathlib.Path) -> RunRecord:
    return RunRecord.parse_obj(read_json(run_dir / RUN_FILE))


def load_scored(*, run_dir: pathlib.Path) -> list[ScoredInstance]:
    return [ScoredInstance.parse_obj(row) for row in read_jsonl(run_dir / SCORED_FILE)]


class ExperimentRunner:
    """
    Runs one experiment end to end under `<workdir>/runs/<run id>`.

    The run id is a content hash of the run-defining config and the corpus, so identical inputs map to the same
    directory: a completed run is returned as stored unless `force` is set. Corpus preparation (OCR,
    de-identification, segmentation, labeling) is cached under `<workdir>/cache` and shared between runs.
    """

    def __init__(self, *, config: ExperimentConfig, force: bool = False, label: str | None = None, n_jobs: int = 1):
        self.config = config
        self.force = force
        self.label = label or config.name
        self.n_jobs = n_jobs
        self.workdir = pathlib.Path(config.paths.workdir or Settings.WORKDIR)
        self.manifest_path = pathlib.Path(config.paths.manifest)
        self.base_dir = self.manifest_path.parent
        self.entries: list[ManifestEntry] = load_manifest(path=self.manifest_path)
        with stage_scope(Stage.LOAD):
            self.manifest_hash = manifest_hash(entries=self.entries, base_dir=self.base_dir)
        self.run_id = content_hash({"config": config.snapshot(), "manifest": self.manifest_hash})[:RUN_ID_LENGTH]
        self.run_dir = self.workdir / "runs" / self.run_id
        self.cache_dir = self.workdir / "cache"
        self.artifacts: dict[str, pathlib.Path] = {}

    @property
    def gold(self) -> dict[str, GoldRecord]:
        return {entry.report_id: entry.gold for entry in self.entries}

    def _artifact(self, name: str, path: pathlib.Path) -> pathlib.Path:
        self.artifacts[name] = path
        return path

    def prepare_corpus(self) -> tuple[list[Instance], dict[str, int]]:
        """Labeled instances of every report plus page counts, from the cache when the inputs are unchanged."""
        lookup_path = self.config.paths.deid_lookup or self.base_dir / "deid_lookup.csv"
        with stage_scope(Stage.DEID):
            lookups = load_lookup_table(path=lookup_path) if lookup_path.exists() else {}
        uses_images = any(not entry.pages for entry in self.entries)
        ocr = [Settings.OCR_BACKEND.value, Settings.OCR_CMD, *Settings.OCR_EXTRA_FLAGS]
        key = content_hash(
            {
                "manifest": self.manifest_hash,
                "recipe": self.config.recipe.value if uses_images else None,
                "ocr": ocr if uses_images else None,
                "lookups": {report_id: lookup.dict() for report_id, lookup in sorted(lookups.items())},
                "policy": Settings.DEID_POLICY.value,
                "radius": Settings.SEGMENT_RADIUS,
                "epsilon": Settings.LABEL_EPSILON,
            }
        )
        cache_path = self.cache_dir / "corpus" / f"{key}.jsonl"
        cached = read_cache(path=cache_path)
        if cached is not None:
            logger.info(msg=f"Corpus preparation cache hit '{cache_path.name}'.")
            return self._from_cache(cached)

        recipe = PrepRecipe.from_name(self.config.recipe)
        results = joblib.Parallel(n_jobs=self.n_jobs)(
            joblib.delayed(prepare_report)(
                entry=entry,
                base_dir=self.base_dir,
                recipe=recipe,
                image_dir=self.cache_dir / "images",
                lookups=lookups,
                policy=Settings.DEID_POLICY,
                radius=Settings.SEGMENT_RADIUS,
                epsilon=Settings.LABEL_EPSILON,
            )
            for entry in self.entries
        )
        rows = [
            {"report_id": entry.report_id, "pages": pages, "instances": [instance.dict() for instance in instances]}
            for entry, (instances, pages) in zip(self.entries, results)
        ]
        cache_path.parent.mkdir(parents=True, exist_ok=True)
        write_cache(path=cache_path, rows=rows)
        return self._from_cache(rows)

    @staticmethod
    def _from_cache(rows: list[dict]) -> tuple[list[Instance], dict[str, int]]:
        instances = [Instance.parse_obj(item) for row in rows for item in row["instances"]]
        return instances, {row["report_id"]: row["pages"] for row in rows}

    def split(self) -> DatasetSplit:
        split = split_dataset(report_ids=[entry.report_id for entry in self.entries], config=self.config.split)
        if self.config.train_subset is not None:
            train = sample_train_subset(train_ids=split.train, subset=self.config.train_subset, seed=self.config.seed)
            split = split.copy(update={"train": train})
        return split

    def _hash_artifacts(self) -> dict[str, str]:
        return {
            name: bytes_hash(path.read_bytes())
            for name, path in sorted(self.artifacts.items())
            if path.exists() and name in FITTED_ARTIFACTS
        }

    def _train_classical(
        self, model: ClassicalModelConfig, train: list[Instance], test: list[Instance]
    ) -> np.ndarray:
        with stage_scope(Stage.FEATURES):
            vocab = fit_vocab(
                segments=[tokenize_normalize(segment=instance.segment) for instance in train], cap=Settings.VOCAB_CAP
            )
            index = vocab.index
            train_vectors = [vectorize(instance=instance, vocab=vocab, index=index) for instance in train]
            test_vectors = [vectorize(instance=instance, vocab=vocab, index=index) for instance in test]
            if self.config.scale_structured:
                scaler = fit_scaler(vectors=train_vectors)
                train_vectors = [apply_scaler(vector=vector, scaler=scaler) for vector in train_vectors]
                test_vectors = [apply_scaler(vector=vector, scaler=scaler) for vector in test_vectors]
                save_scaler(scaler=scaler, path=self._artifact("scaler", self.run_dir / "scaler.json"))
            save_vocab(vocab=vocab, path=self._artifact("vocab", self.run_dir / "vocab.json"))

        with stage_scope(Stage.TRAIN):
            grid = (
                [ClassifierSpec(kind=model.kind, hyperparams=hyperparams) for hyperparams in model.grid]
                if model.grid
                else default_grid(kind=model.kind)
            )
            result = cross_validate(
                grid=grid,
                vectors=train_vectors,
                labels=[instance.label for instance in train],
                report_ids=[instance.report_id for instance in train],
                folds=model.folds,
                seed=self.config.seed,
                n_jobs=self.n_jobs,
            )
            write_json(self._artifact("cv", self.run_dir / "cross_validation.json"), [s.dict() for s in result.scores])
            save_classifier(model=result.model, path=self._artifact("model", self.run_dir / "model.json"))
        with stage_scope(Stage.PREDICT):
            return predict_proba_batch(model=result.model, vectors=test_vectors)

    def _train_neural(
        self, model: NeuralModelConfig, train: list[Instance], val: list[Instance], test: list[Instance]
    ) -> np.ndarray:
        max_len = model.network.sequence_branch.max_len
        with stage_scope(Stage.FEATURES):
            corpus = [tokenize_normalize(segment=instance.segment) for instance in train]
            codec = build_codec(corpus=corpus)
            write_json(self._artifact("codec", self.run_dir / "codec.json"), codec.dict())
            scaler: Scaler | None = None
            if self.config.scale_structured:
                structured = [FeatureVector(structured=instance.structured, dimension=0) for instance in train]
                scaler = fit_scaler(vectors=structured)
                save_scaler(scaler=scaler, path=self._artifact("scaler", self.run_dir / "scaler.json"))
            embeddings = None
            if model.cbow.enabled:
                pretrained = pretrain_cbow(corpus=corpus, codec=codec, config=model.cbow, seed=self.config.seed)
                embeddings = pretrained.embeddings
            batches = {
                name: encode_instances(
                    instances=instances,
                    codec=codec,
                    max_len=max_len,
                    scaler=scaler,
                    labels=encode_labels([instance.label for instance in instances]) if instances else None,
                )
                for name, instances in (("train", train), ("val", val), ("test", test))
            }

        with stage_scope(Stage.TRAIN):
            if not val:
                raise InvalidInputException(message="The validation split is empty.", stage=Stage.TRAIN.value)
            result = train_network(
                config=model.network,
                tconfig=model.train.copy(update={"seed": model.train.seed + self.config.seed}),
                train=batches["train"],
                validation=batches["val"],
                vocab_size=len(codec),
                embeddings=embeddings,
                output_dir=self.run_dir / "training",
            )
            self._artifact("loss_history", self.run_dir / "training" / "loss_history.csv")
            save_checkpoint(checkpoint=result.best, path=self._artifact("checkpoint", self.run_dir / "best.json"))
            self._artifact("checkpoint_blob", self.run_dir / "best.bin")
            network = DualBranchNetwork.from_checkpoint(
                config=model.network, vocab_size=len(codec), checkpoint=result.best
            )
        with stage_scope(Stage.PREDICT):
            return predict_network(network=network, batch=batches["test"])

    def _evaluate(self, test: list[Instance], probabilities: np.ndarray, split: DatasetSplit) -> EvalReport:
        with stage_scope(Stage.EVALUATE):
            scored = score_instances(instances=test, probabilities=probabilities)
            gold = [self.gold[report_id] for report_id in split.test]
            report = build_report(model=self.label, scored=scored, gold=gold)
            write_jsonl(self._artifact("scored", self.run_dir / SCORED_FILE), [item.dict() for item in scored])
            write_json(self._artifact("report", self.run_dir / "report.json"), report.dict())
            text = self._artifact("report_table", self.run_dir / "report.txt")
            text.write_text(render_report_table(report=report) + "\n", encoding="utf-8")
            for label in report.classes:
                path = write_roc_points(
                    scored=scored, label=label.label, path=self.run_dir / f"roc_{label.label.value}.csv"
                )
                if path is not None:
                    self._artifact(f"roc_{label.label.value}", path)
            return report

    def run(self) -> RunRecord:
        """
        Execute every stage; a failure is recorded in the run file with its stage and cause, partial
        artifacts stay in place.
        """
        record_path = self.run_dir / RUN_FILE
        if record_path.exists() and not self.force:
            stored = load_run(run_dir=self.run_dir)
            if stored.status is RunStatus.COMPLETED:
                logger.info(msg=f"Run '{self.run_id}' is already complete, skipping.")
                return stored

        self.run_dir.mkdir(parents=True, exist_ok=True)
        record = RunRecord(
            run_id=self.run_id,
            name=self.label,
            status=RunStatus.RUNNING,
            config=self.config.snapshot(),
            manifest_hash=self.manifest_hash,
            started_at=utc_now(),
        )
        write_json(record_path, record.dict())
        handler = attach_run_log(self.run_dir / "run.log")
        logger.info(msg=f"Run '{self.run_id}' ({self.label}) started.")
        try:
            with stage_scope(Stage.SEGMENT):
                instances, page_counts = self.prepare_corpus()
            with stage_scope(Stage.SPLIT):
                split = self.split()
                split_of = {
                    **{report_id: SplitName.TRAIN for report_id in split.train},
                    **{report_id: SplitName.VAL for report_id in split.val},
                    **{report_id: SplitName.TEST for report_id in split.test},
                }
                by_split: dict[SplitName, list[Instance]] = {name: [] for name in SplitName}
                for instance in instances:
                    if instance.report_id in split_of:
                        by_split[split_of[instance.report_id]].append(instance)
                instances_path = self._artifact("instances", self.run_dir / "instances.csv")
                write_instances_csv(instances=instances, path=instances_path)
                summary = summarize_dataset(
                    instances=instances,
                    page_counts=page_counts,
                    splits={"train": split.train, "val": split.val, "test": split.test},
                )
                write_json(self._artifact("summary", self.run_dir / "summary.json"), summary.dict())
                write_json(self._artifact("split", self.run_dir / "split.json"), split.dict())

            model = self.config.model
            if isinstance(model, ClassicalModelConfig):
                development = by_split[SplitName.TRAIN] + by_split[SplitName.VAL]
                probabilities = self._train_classical(model, development, by_split[SplitName.TEST])
            else:
                probabilities = self._train_neural(
                    model, by_split[SplitName.TRAIN], by_split[SplitName.VAL], by_split[SplitName.TEST]
                )
            report = self._evaluate(by_split[SplitName.TEST], probabilities, split)
            record = record.copy(
                update={
                    "status": RunStatus.COMPLETED,
                    "metrics": report,
                    "split_sizes": {"train": len(split.train), "val": len(split.val), "test": len(split.test)},
                }
            )
            logger.info(msg=f"Run '{self.run_id}' completed.")
        except PipelineException as error:
            logger.error(msg=f"Run '{self.run_id}' failed in stage '{error.stage}': {error.message}")
            record = record.copy(update={"status": RunStatus.FAILED, "error": error.dict()})
        finally:
            record = record.copy(
                update={
                    "finished_at": utc_now(),
                    "artifacts": {name: str(path) for name, path in sorted(self.artifacts.items())},
                    "artifact_hashes": self._hash_artifacts(),
                }
            )
            write_json(record_path, record.dict())
            detach_run_log(handler)
        return record


def run_experiment(
    *, config: ExperimentConfig, force: bool = False, label: str | None = None, n_jobs: int | None = None
) -> RunRecord:
    """Run `config` once; see `ExperimentRunner`."""
    runner = ExperimentRunner(config=config, force=force, label=label, n_jobs=n_jobs or Settings.JOBS)
    return runner.run()
