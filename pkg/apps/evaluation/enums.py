import enum


class Metric(str, enum.Enum):
    """Metric a pairwise comparison tests."""

    AUROC = "auroc"  # DeLong
    DOCUMENT_ACCURACY = "document_accuracy"  # chi-square
