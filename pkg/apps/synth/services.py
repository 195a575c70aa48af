"""Synthetic sleep-study reports with known gold values, laid out as OCR word tables."""
import pathlib
import typing

import joblib
import numpy as np

from apps.CORE.types import StrOrPath
from apps.CORE.utils import derive_rng, write_jsonl
from apps.deid.schemas import DeidLookup
from apps.deid.services import write_lookup_table
from apps.ocr.schemas import PageWords, WordBox
from apps.ocr.services import write_word_table
from apps.pipeline.schemas import ManifestEntry
from apps.segmentation.schemas import GoldRecord
from apps.synth.schemas import AHI_SLOT, SAO2_SLOT, SynthConfig, SyntheticReport
from loggers import get_logger
from settings import Settings

__all__ = (
    "CONFUSIONS",
    "PAGE_WIDTH",
    "PAGE_HEIGHT",
    "MANIFEST_NAME",
    "LOOKUP_NAME",
    "report_id_for",
    "draw_gold",
    "layout_paragraphs",
    "inject_ocr_noise",
    "generate_report",
    "generate_corpus",
)

logger = get_logger(name=__name__)

# Character confusions seen in OCR output.
CONFUSIONS: dict[str, tuple[str, ...]] = {
    "l": ("!", "|"),
    "S": ("5",),
    "5": ("S",),
    "O": ("0",),
    "0": ("O",),
    "i": ("1",),
}

PAGE_WIDTH, PAGE_HEIGHT = 2550, 3300  # letter page at 300 dpi
MARGIN = 150
CHAR_WIDTH = 22
WORD_GAP = 18
WORD_HEIGHT = 32
LINE_HEIGHT = 56
PARAGRAPH_GAP = 40
MANIFEST_NAME = "manifest.jsonl"
LOOKUP_NAME = "deid_lookup.csv"
WORDS_DIR = "words"

FIRST_NAMES = ("Alice", "Bernard", "Carmen", "Dmitri", "Elena", "Farah", "Gustavo", "Hiroko", "Ivan", "Julia")
LAST_NAMES = ("Novak", "Okafor", "Lindqvist", "Moreau", "Tanaka", "Whitfield", "Quintero", "Haddad", "Brennan")
FILLER_SENTENCES = (
    "The patient was referred for evaluation of loud snoring and excessive daytime sleepiness.",
    "Electroencephalogram, electrooculogram and chin electromyogram were monitored throughout the night.",
    "Airflow was measured with a nasal pressure transducer and an oronasal thermistor.",
    "Respiratory effort was recorded with thoracic and abdominal inductance belts.",
    "Sleep stages were scored according to current scoring guidelines.",
    "The patient slept predominantly in the supine position.",
    "No cardiac arrhythmias were observed on the single lead electrocardiogram.",
    "Snoring was loud and persistent in all body positions.",
    "Clinical correlation and follow up with the sleep physician is recommended.",
    "Positive airway pressure titration may be considered if clinically indicated.",
    "The study was technically adequate for interpretation.",
    "Weight loss and sleep hygiene measures were discussed with the patient.",
)
DISTRACTORS: tuple[tuple[str, str], ...] = (
    ("There were {n} hypopneas recorded during the study.", "count"),
    ("The apnea index was {n} per hour.", "index"),
    ("Total sleep time was {n} minutes.", "minutes"),
    ("Sleep efficiency was {n}% of time in bed.", "percent"),
    ("Heart rate averaged {n} beats per minute.", "bpm"),
    ("In total {n} arousals met the scoring criteria.", "count"),
    ("The periodic limb movement index was {n} .", "index"),
    ("The patient weighed {n} pounds.", "weight"),
)


def report_id_for(index: int) -> str:
    return f"R{index:05d}"


def _distractor_value(kind: str, rng: np.random.Generator) -> str:
    if kind == "index":
        return f"{rng.uniform(0.0, 60.0):.1f}"
    low, high = {"count": (0, 400), "minutes": (200, 480), "percent": (50, 99), "bpm": (45, 100), "weight": (100, 350)}[
        kind
    ]
    return str(int(rng.integers(low, high + 1)))


def draw_gold(rng: np.random.Generator) -> tuple[float, str, float, str]:
    """AHI in [0.5, 120] with one decimal; SaO2 in [60, 100], integer or one decimal, optionally with `%`."""
    ahi = round(float(rng.uniform(0.5, 120.0)), 1)
    if rng.random() < 0.5:
        sao2 = float(rng.integers(60, 101))
        sao2_text = f"{sao2:.0f}"
    else:
        sao2 = round(float(rng.uniform(60.0, 100.0)), 1)
        sao2_text = f"{sao2:.1f}"
    if rng.random() < 0.5:
        sao2_text += "%"
    return ahi, f"{ahi:.1f}", sao2, sao2_text


def layout_paragraphs(*, paragraphs: typing.Sequence[str], page: int, rng: np.random.Generator) -> PageWords:
    """
    Word boxes for paragraphs set left to right, top to bottom on a letter-size page.

    Each paragraph is one Tesseract-style paragraph of block 1; line and word numbers restart inside it.
    """
    words: list[WordBox] = []
    top = MARGIN
    for paragraph_number, paragraph in enumerate(paragraphs, start=1):
        left, line, word_number = MARGIN, 1, 0
        for text in paragraph.split():
            width = CHAR_WIDTH * len(text) + int(rng.integers(0, 6))
            if left + width > PAGE_WIDTH - MARGIN and word_number:
                left, line, word_number = MARGIN, line + 1, 0
                top += LINE_HEIGHT
            word_number += 1
            words.append(
                WordBox(
                    text=text,
                    left=left,
                    top=min(top + int(rng.integers(-3, 4)), PAGE_HEIGHT - WORD_HEIGHT),
                    width=width,
                    height=WORD_HEIGHT + int(rng.integers(0, 6)),
                    page=page,
                    order_key=(1, paragraph_number, line, word_number),
                    confidence=round(float(rng.uniform(80.0, 99.0)), 2),
                )
            )
            left += width + WORD_GAP
        top += LINE_HEIGHT + PARAGRAPH_GAP
    return PageWords(page=page, words=words)


def inject_ocr_noise(*, words: PageWords, rate: float, seed: int) -> PageWords:
    """
    Substitute characters from the confusion table, each with probability `rate`; boxes and token count are kept.

    Examples:
        >>> page = PageWords(page=1, words=[WordBox(text="ll", left=0, top=0, width=9, height=9, page=1,
        ...     order_key=(1, 1, 1, 1))])
        >>> inject_ocr_noise(words=page, rate=0.0, seed=3).tokens
        ['ll']
    """
    if rate <= 0:
        return words
    rng = derive_rng(seed, "noise", words.page)
    tokens = []
    for token in words.tokens:
        characters = list(token)
        for position, character in enumerate(characters):
            choices = CONFUSIONS.get(character)
            if choices and rng.random() < rate:
                characters[position] = choices[int(rng.integers(len(choices)))]
        tokens.append("".join(characters))
    return words.replace_tokens(tokens)


def _findings(template: str, ahi_text: str, sao2_text: str) -> str:
    return template.replace(AHI_SLOT, ahi_text).replace(SAO2_SLOT, sao2_text)


def generate_report(*, config: SynthConfig, report_id: str) -> SyntheticReport:
    """
    One synthetic report, a pure function of (config.seed, report_id).

    Page 1 carries the identifying header and the findings paragraph; later pages repeat the findings with
    probability `repeat_rate`. Every page holds `distractor_density` distractor numbers among filler text.
    """
    rng = derive_rng(config.seed, report_id)
    ahi, ahi_text, sao2, sao2_text = draw_gold(rng)
    weights = np.array([template.weight for template in config.templates])
    template = config.templates[int(rng.choice(len(weights), p=weights / weights.sum()))].text
    first, last = FIRST_NAMES[int(rng.integers(len(FIRST_NAMES)))], LAST_NAMES[int(rng.integers(len(LAST_NAMES)))]
    mrn = str(int(rng.integers(10_000_000, 100_000_000)))
    date = f"{int(rng.integers(1, 13))}/{int(rng.integers(1, 29))}/{int(rng.integers(2010, 2024))}"
    low, high = config.pages_per_report
    n_pages = int(rng.integers(low, high + 1))
    noise_seed = int(rng.integers(2**31))

    pages = []
    for page in range(1, n_pages + 1):
        paragraphs = []
        if page == 1:
            paragraphs += ["POLYSOMNOGRAPHY REPORT", f"Patient: {first} {last} MRN: {mrn} Study date: {date}"]
        n_filler = int(rng.integers(config.filler_sentences[0], config.filler_sentences[1] + 1))
        filler = [FILLER_SENTENCES[int(index)] for index in rng.integers(len(FILLER_SENTENCES), size=n_filler)]
        paragraphs.append(" ".join(filler[: n_filler // 2]) or FILLER_SENTENCES[0])
        if page == 1 or rng.random() < config.repeat_rate:
            paragraphs.append(_findings(template, ahi_text, sao2_text))
        for _ in range(config.distractor_density):
            sentence, kind = DISTRACTORS[int(rng.integers(len(DISTRACTORS)))]
            value = ahi_text if rng.random() < config.collision_rate else _distractor_value(kind, rng)
            paragraphs.append(sentence.format(n=value))
        if filler[n_filler // 2 :]:
            paragraphs.append(" ".join(filler[n_filler // 2 :]))
        words = layout_paragraphs(paragraphs=paragraphs, page=page, rng=rng)
        pages.append(inject_ocr_noise(words=words, rate=config.noise_rate, seed=noise_seed))

    return SyntheticReport(
        report_id=report_id,
        pages=pages,
        gold=GoldRecord(report_id=report_id, ahi_values=[ahi], sao2_values=[sao2]),
        patient_name_tokens=[first, last],
        mrn=mrn,
    )


def _write_report(config: SynthConfig, report_id: str, output_dir: pathlib.Path) -> tuple[ManifestEntry, DeidLookup]:
    report = generate_report(config=config, report_id=report_id)
    page_paths = []
    for words in report.pages:
        relative = pathlib.Path(WORDS_DIR) / f"{report_id}_p{words.page}.tsv"
        write_word_table(pages=[words], path=output_dir / relative)
        page_paths.append(relative.as_posix())
    entry = ManifestEntry(
        report_id=report_id,
        pages=page_paths,
        gold_ahi=report.gold.ahi_values,
        gold_sao2=report.gold.sao2_values,
    )
    lookup = DeidLookup(report_id=report_id, patient_name_tokens=report.patient_name_tokens, mrn_values=[report.mrn])
    return entry, lookup


def generate_corpus(*, config: SynthConfig, output_dir: StrOrPath, n_jobs: int | None = None) -> pathlib.Path:
    """
    Write per-page word tables, `manifest.jsonl` and the de-identification lookup under `output_dir`.

    Returns:
        pathlib.Path: The manifest path.
    """
    output_dir = pathlib.Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    report_ids = [report_id_for(index) for index in range(1, config.n_reports + 1)]
    results = joblib.Parallel(n_jobs=n_jobs or Settings.JOBS)(
        joblib.delayed(_write_report)(config, report_id, output_dir) for report_id in report_ids
    )
    manifest = write_jsonl(output_dir / MANIFEST_NAME, [entry.dict() for entry, _ in results])
    write_lookup_table(lookups=[lookup for _, lookup in results], path=output_dir / LOOKUP_NAME)
    logger.info(msg=f"Generated {config.n_reports} synthetic reports under '{output_dir}'.")
    return manifest
