import pathlib

import pytest

from apps.CORE.enums import Label, RunStatus
from apps.CORE.exceptions import ConfigException, InvalidInputException
from apps.CORE.utils import read_json
from apps.evaluation.enums import Metric
from apps.pipeline.ablations import ablation_variants, run_ablation
from apps.pipeline.managers import load_scored
from apps.pipeline.schemas import AblationResult, DatasetSplit
from settings import Settings
from tests.apps.pipeline.factories import classical_config, neural_config


def diff(left: dict, right: dict, prefix: str = "") -> set[str]:
    """Dotted keys whose values differ."""
    keys = set()
    for key in set(left) | set(right):
        a, b = left.get(key), right.get(key)
        if isinstance(a, dict) and isinstance(b, dict):
            keys |= diff(a, b, f"{prefix}{key}.")
        elif a != b:
            keys.add(f"{prefix}{key}")
    return keys


class TestAblationVariants:
    def test_default_train_sizes(self, noisy_corpus: pathlib.Path) -> None:
        config = classical_config(noisy_corpus, ablation={"kind": "train_size"})

        variants = ablation_variants(config=config)

        assert [label for label, _ in variants] == ["train_10", "train_25", "train_50", "train_100", "train_all"]
        assert [variant.train_subset and variant.train_subset.size for _, variant in variants] == [
            10,
            25,
            50,
            100,
            None,
        ]
        assert all(variant.ablation is None for _, variant in variants)
        assert not any(variant.train_subset and variant.train_subset.independent for _, variant in variants)

    def test_independent_subsets_flag(self, synthetic_corpus: pathlib.Path) -> None:
        config = classical_config(
            synthetic_corpus, ablation={"kind": "train_size", "values": [5, 10], "independent_subsets": True}
        )

        variants = ablation_variants(config=config)

        assert [variant.train_subset.independent for _, variant in variants] == [True, True]

    def test_subset_larger_than_training_split(self, synthetic_corpus: pathlib.Path) -> None:
        config = classical_config(synthetic_corpus, ablation={"kind": "train_size"})

        with pytest.raises(InvalidInputException, match=r"\[25, 50, 100\] exceed the 24 training reports"):
            ablation_variants(config=config)

    @pytest.mark.parametrize(argnames="values", argvalues=([0], [True], ["ten"], [2.5]))
    def test_invalid_sizes(self, synthetic_corpus: pathlib.Path, values: list) -> None:
        config = classical_config(synthetic_corpus, ablation={"kind": "train_size", "values": values})

        with pytest.raises(ConfigException, match="positive integers"):
            ablation_variants(config=config)

    def test_preprocess_recipes(self, synthetic_corpus: pathlib.Path) -> None:
        variants = ablation_variants(config=classical_config(synthetic_corpus, ablation={"kind": "preprocess"}))

        assert [label for label, _ in variants] == [
            "gray",
            "gray_de",
            "gray_c20",
            "gray_c60",
            "gray_de_c20",
            "gray_de_c60",
        ]
        assert [variant.recipe.value for _, variant in variants] == [label for label, _ in variants]

    def test_unknown_recipe(self, synthetic_corpus: pathlib.Path) -> None:
        config = classical_config(synthetic_corpus, ablation={"kind": "preprocess", "values": ["sepia"]})

        with pytest.raises(ConfigException, match="Unknown preprocessing recipe"):
            ablation_variants(config=config)

    def test_structured_branch_needs_neural_model(self, synthetic_corpus: pathlib.Path) -> None:
        config = classical_config(synthetic_corpus, ablation={"kind": "structured_branch"})

        with pytest.raises(ConfigException, match="needs a neural model"):
            ablation_variants(config=config)

    def test_structured_branch_variants(self, synthetic_corpus: pathlib.Path) -> None:
        variants = ablation_variants(config=neural_config(synthetic_corpus, ablation={"kind": "structured_branch"}))

        assert [label for label, _ in variants] == ["with_structured", "without_structured"]
        (_, with_structured), (_, without_structured) = variants
        assert diff(with_structured.snapshot(), without_structured.snapshot()) == {"model.network.include_structured"}

    def test_without_ablation(self, synthetic_corpus: pathlib.Path) -> None:
        with pytest.raises(ConfigException, match="no `ablation` section"):
            ablation_variants(config=classical_config(synthetic_corpus))


class TestRunAblation:
    def test_train_size_runs_share_test_set(self, synthetic_corpus: pathlib.Path) -> None:
        ablation = {"kind": "train_size", "values": [6, 10, 15, 20, None]}
        config = classical_config(synthetic_corpus, ablation=ablation)

        result = run_ablation(config=config, n_jobs=1)

        assert [record.name for record in result.runs] == ["train_6", "train_10", "train_15", "train_20", "train_all"]
        assert all(record.status is RunStatus.COMPLETED for record in result.runs)
        assert [record.split_sizes["train"] for record in result.runs] == [6, 10, 15, 20, 24]
        tests = {
            tuple(DatasetSplit.parse_obj(read_json(Settings.WORKDIR / "runs" / record.run_id / "split.json")).test)
            for record in result.runs
        }
        assert len(tests) == 1
        assert len({record.run_id for record in result.runs}) == 5

        family = len(result.comparisons)
        assert family > 0
        for comparison in result.comparisons:
            assert comparison.p_adjusted == pytest.approx(min(1.0, comparison.p_raw * family))
        ablation_dir = next((Settings.WORKDIR / "ablations").iterdir())
        assert AblationResult.parse_obj(read_json(ablation_dir / "ablation.json")) == result
        header = (ablation_dir / "comparisons.csv").read_text().splitlines()[0]
        assert header == "pair,metric,statistic,p_raw,p_adjusted"
        assert (ablation_dir / "comparisons.txt").exists()

    def test_preprocess_ablation_on_word_tables(self, synthetic_corpus: pathlib.Path) -> None:
        ablation = {"kind": "preprocess", "values": ["gray", "gray_de_c60"]}
        config = classical_config(synthetic_corpus, ablation=ablation)

        result = run_ablation(config=config, n_jobs=1)

        first, second = result.runs
        assert first.run_id != second.run_id
        assert first.metrics.classes == second.metrics.classes
        for comparison in result.comparisons:
            assert comparison.statistic == pytest.approx(0.0)

    def test_structured_branch_ablation(self, synthetic_corpus: pathlib.Path) -> None:
        config = neural_config(synthetic_corpus, epochs=3, ablation={"kind": "structured_branch"})

        result = run_ablation(config=config, n_jobs=1)

        with_structured, without_structured = result.runs
        assert (with_structured.name, without_structured.name) == ("with_structured", "without_structured")
        assert diff(with_structured.config, without_structured.config) == {"model.network.include_structured"}
        scored = {
            record.name: load_scored(run_dir=Settings.WORKDIR / "runs" / record.run_id) for record in result.runs
        }
        assert [item.key for item in scored["with_structured"]] == [item.key for item in scored["without_structured"]]
        assert {comparison.pair for comparison in result.comparisons} <= {("with_structured", "without_structured")}
        assert {comparison.label for comparison in result.comparisons} <= {Label.AHI, Label.SAO2}
        assert {comparison.metric for comparison in result.comparisons} <= {Metric.AUROC, Metric.DOCUMENT_ACCURACY}

    def test_concurrent_runs_match_serial(self, synthetic_corpus: pathlib.Path) -> None:
        # Worker processes do not see the patched settings, so the work directory is set explicitly.
        config = classical_config(
            synthetic_corpus,
            paths={"manifest": str(synthetic_corpus), "workdir": str(Settings.WORKDIR)},
            ablation={"kind": "train_size", "values": [10, None]},
        )

        serial = run_ablation(config=config, n_jobs=1)
        concurrent = run_ablation(config=config, force=True, n_jobs=2)

        assert [record.metrics for record in concurrent.runs] == [record.metrics for record in serial.runs]
        assert concurrent.comparisons == serial.comparisons
