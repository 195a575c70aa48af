"""Config file for tests."""
import pathlib
import random

import pytest
from _pytest.monkeypatch import MonkeyPatch

from apps.CORE.enums import OCRBackend
from apps.ocr.schemas import PageWords
from apps.synth.schemas import SynthConfig
from apps.synth.services import generate_corpus
from settings import Settings
from tests.bases import make_page

TABLE1_TEXT = (
    "Breathing was monitored for 412 minutes and an apnea index of 1.3. There were 129 hypopneas, 120 met the "
    "AASM Version 2 scoring rule, while 26 met the Medicare scoring rule. The total APNEA/HYPOPNEA INDEX (AHI) "
    "was 19.5 . The patient also had 0 respiratory event related arousals (RERA) during the night."
)
# (left, top, width, height) of "26", "19.5" and "120" as printed in the analytical dataset example.
TABLE1_BOXES = {"26": (735, 388, 61, 26), "19.5": (1048, 385, 111, 50), "120": (232, 456, 150, 25)}


@pytest.fixture(scope="session")
def monkeypatch_session() -> MonkeyPatch:
    """Create monkeypatch for session scope.

    Yields:
        monkeypatch (MonkeyPatch): MonkeyPatch instance with `session` (one time per tests run) scope.
    """
    monkeypatch = MonkeyPatch()
    yield monkeypatch
    monkeypatch.undo()


@pytest.fixture(scope="session", autouse=True)
def no_http_requests(monkeypatch_session: MonkeyPatch) -> None:
    """Disable HTTP requests for 3-rd party libraries."""

    def raise_mock(*args, **kwargs):  # type: ignore
        """Thrown and exception when tests try to use HTTP connection.

        Raises:
            RuntimeError: indicates that HTTPS request found.
        """
        raise RuntimeError(f"Found request: {args}, {kwargs}")

    # Disable library `urllib`
    monkeypatch_session.setattr(target="urllib.request.urlopen", name=raise_mock)


@pytest.fixture(scope="function", autouse=True)
def faker_seed() -> None:
    """Generate random seed for Faker instance."""
    return random.seed(version=3)


@pytest.fixture(scope="function", autouse=True)
def isolated_settings(monkeypatch: MonkeyPatch, tmp_path: pathlib.Path) -> pathlib.Path:
    """Point the work directory into `tmp_path`, use the mock OCR engine and one worker."""
    workdir = tmp_path / "workdir"
    monkeypatch.setattr(target=Settings, name="WORKDIR", value=workdir)
    monkeypatch.setattr(target=Settings, name="OCR_BACKEND", value=OCRBackend.MOCK)
    monkeypatch.setattr(target=Settings, name="JOBS", value=1)
    return workdir


@pytest.fixture(scope="session")
def table1_page() -> PageWords:
    """Word stream of the published analytical-dataset example, with its three candidate boxes."""
    tokens = TABLE1_TEXT.split(" ")
    boxes = {tokens.index(token): box for token, box in TABLE1_BOXES.items()}
    return make_page(tokens, page=1, boxes=boxes)


@pytest.fixture(scope="session")
def synthetic_corpus(tmp_path_factory: pytest.TempPathFactory) -> pathlib.Path:
    """Manifest of a small noiseless synthetic corpus shared by pipeline tests."""
    output_dir = tmp_path_factory.mktemp("corpus")
    return generate_corpus(config=SynthConfig(n_reports=40, seed=11), output_dir=output_dir, n_jobs=1)


@pytest.fixture(scope="session")
def noisy_corpus(tmp_path_factory: pytest.TempPathFactory) -> pathlib.Path:
    """Manifest of the 200-report corpus with OCR noise used by the end-to-end targets."""
    output_dir = tmp_path_factory.mktemp("noisy_corpus")
    config = SynthConfig(n_reports=200, noise_rate=0.02, seed=5)
    return generate_corpus(config=config, output_dir=output_dir, n_jobs=1)



@pytest.fixture(scope="session")
def noisy_corpus(tmp_path_factory: pytest.TempPathFactory) -> pathlib.Path:
    """Manifest of a 200-report corpus with light OCR noise and the default distractors."""
    output_dir = tmp_path_factory.mktemp("noisy_corpus")
    config = SynthConfig(n_reports=200, noise_rate=0.02, seed=23)
    return generate_corpus(config=config, output_dir=output_dir, n_jobs=1)
