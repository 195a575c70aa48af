import pathlib
import typing

from apps.pipeline.schemas import ExperimentConfig


def classical_config(manifest: pathlib.Path, **update: typing.Any) -> ExperimentConfig:
    """Logistic regression, 3-fold cross-validation."""
    data = {
        "name": "lr",
        "model": {"family": "classical", "kind": "LR", "folds": 3},
        "paths": {"manifest": str(manifest)},
        "seed": 1,
    }
    return ExperimentConfig.parse_obj({**data, **update})


def small_network(encoder: str = "mean_pool", width: int = 16) -> dict[str, typing.Any]:
    return {
        "structured_branch": {"ffnn_layers": 1, "width": width, "dropout": 0.1},
        "sequence_branch": {
            "encoder": encoder,
            "max_len": 21,
            "embed_dim": width,
            "lstm_layers": 1,
            "lstm_hidden": 8,
            "ffnn_width": width,
            "dropout": 0.1,
        },
        "classifier": {"width": width, "dropout": 0.1},
    }


def neural_config(
    manifest: pathlib.Path, *, epochs: int = 6, width: int = 16, learning_rate: float = 0.01, **update: typing.Any
) -> ExperimentConfig:
    data = {
        "name": "dual_branch",
        "model": {
            "family": "neural",
            "network": small_network(width=width),
            "train": {"batch_size": 32, "learning_rate": learning_rate, "epochs": epochs},
        },
        "paths": {"manifest": str(manifest)},
        "seed": 1,
    }
    return ExperimentConfig.parse_obj({**data, **update})
