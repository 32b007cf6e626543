"""Record schema, Likert segmentation, splits, ingestion, and the synthetic generator.

The generator operationalizes the appraisal -> emotion -> behavior chain:
appraisals are drawn uniformly, emotion ratings derive from a planted
appraisal-to-emotion weight matrix, and the two behavior ratings derive from
planted weights over both appraisals and emotions. Review text is rendered
from templates that insert lexicon words for every high/low appraisal and
every flagged emotion, so the text carries a recoverable copy of the signal.
With zero noise the generator is its own closed-form oracle.
"""

from __future__ import annotations

import csv
import enum
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, SizeError, ValidationError
from .serialize import atomic_write_text
from .text import tokenize

APPRAISAL_COUNT = 20
EMOTION_COUNT = 8

EMOTION_NAMES = ("anger", "disappointment", "disgust", "gratitude",
                 "joy", "pride", "regret", "surprise")

# The first five names are the documented dimensions; the rest are placeholders
# treated purely as dataset metadata.
DEFAULT_APPRAISAL_NAMES = (
    "novelty", "pleasantness", "goal_conduciveness", "fairness",
    "accountability_other",
    "durability", "responsiveness", "spaciousness", "quietness", "freshness",
    "polish", "generosity", "reliability", "smoothness", "brightness",
    "crispness", "swiftness", "tidiness", "warmth", "security",
)

PCB_FIELDS = ("pcb_repurchase", "pcb_promote")


class Level(enum.IntEnum):
    LOW = 0
    MODERATE = 1
    HIGH = 2


@dataclass(frozen=True)
class ReviewRecord:
    """One consumer record; all ratings are integers on a 1-7 scale."""

    id: str
    text: str
    appraisals: tuple[int, ...]
    emotions: tuple[int, ...]
    pcb_repurchase: int
    pcb_promote: int

    def pcb(self, target: str) -> int:
        if target == "repurchase":
            return self.pcb_repurchase
        if target == "promote":
            return self.pcb_promote
        raise ConfigError(f"unknown PCB target {target!r}")


@dataclass(frozen=True)
class SegmentedLabels:
    pcb_repurchase: Level
    pcb_promote: Level
    emotion_flags: tuple[int, ...]
    appraisal_classes: tuple[Level, ...]


@dataclass
class DatasetSplit:
    train: list[int]
    validation: list[int]
    test: list[int]
    seed: int


def _check_rating(value: int, what: str) -> int:
    if not isinstance(value, (int, np.integer)) or isinstance(value, bool):
        raise ValidationError(f"{what} must be an integer, got {value!r}")
    if not 1 <= value <= 7:
        raise ValidationError(f"{what} must be in [1, 7], got {value}")
    return int(value)


def segment_pcb(rating: int) -> Level:
    """1-2 -> Low, 3-5 -> Moderate, 6-7 -> High."""
    r = _check_rating(rating, "PCB rating")
    if r <= 2:
        return Level.LOW
    if r <= 5:
        return Level.MODERATE
    return Level.HIGH


def segment_appraisal(rating: int) -> Level:
    """Appraisals segment with the same 1-2 / 3-5 / 6-7 boundaries."""
    r = _check_rating(rating, "appraisal rating")
    if r <= 2:
        return Level.LOW
    if r <= 5:
        return Level.MODERATE
    return Level.HIGH


def segment_emotion(rating: int) -> int:
    """1-4 -> 0 (absent), 5-7 -> 1 (present)."""
    r = _check_rating(rating, "emotion rating")
    return 1 if r >= 5 else 0


def segment_labels(record: ReviewRecord) -> SegmentedLabels:
    return SegmentedLabels(
        pcb_repurchase=segment_pcb(record.pcb_repurchase),
        pcb_promote=segment_pcb(record.pcb_promote),
        emotion_flags=tuple(segment_emotion(e) for e in record.emotions),
        appraisal_classes=tuple(segment_appraisal(a) for a in record.appraisals),
    )


def split_records(n_records: int, ratios: Sequence[float], seed: int) -> DatasetSplit:
    """Seeded shuffle then contiguous partition.

    Validation and test sizes are floors of their ratios; the remainder
    goes to train.
    """
    if len(ratios) != 3 or abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigError(f"split ratios must be three values summing to 1, got {ratios}")
    if n_records < 3:
        raise SizeError(f"need at least 3 records to split, got {n_records}")
    n_val = int(n_records * ratios[1])
    n_test = int(n_records * ratios[2])
    n_train = n_records - n_val - n_test
    perm = np.random.default_rng(seed).permutation(n_records)
    return DatasetSplit(
        train=[int(i) for i in perm[:n_train]],
        validation=[int(i) for i in perm[n_train:n_train + n_val]],
        test=[int(i) for i in perm[n_train + n_val:]],
        seed=seed,
    )


# ---------------------------------------------------------------------------
# Ingestion and export

def _record_from_obj(obj: dict, where: str) -> ReviewRecord:
    problems = []
    for key in ("id", "text", "appraisals", "emotions", *PCB_FIELDS):
        if key not in obj:
            problems.append(f"missing field {key!r}")
    if problems:
        raise ValidationError(f"{where}: " + "; ".join(problems))
    appraisals = obj["appraisals"]
    emotions = obj["emotions"]
    if len(appraisals) != APPRAISAL_COUNT:
        raise ValidationError(
            f"{where}: expected {APPRAISAL_COUNT} appraisal ratings, got {len(appraisals)}")
    if len(emotions) != EMOTION_COUNT:
        raise ValidationError(
            f"{where}: expected {EMOTION_COUNT} emotion ratings, got {len(emotions)}")
    try:
        return ReviewRecord(
            id=str(obj["id"]),
            text=str(obj["text"]),
            appraisals=tuple(_check_rating(a, "appraisal rating") for a in appraisals),
            emotions=tuple(_check_rating(e, "emotion rating") for e in emotions),
            pcb_repurchase=_check_rating(obj["pcb_repurchase"], "pcb_repurchase"),
            pcb_promote=_check_rating(obj["pcb_promote"], "pcb_promote"),
        )
    except ValidationError as exc:
        raise ValidationError(f"{where}: {exc}") from None


def _csv_header() -> list[str]:
    return (["id", "text"]
            + [f"appraisal_{i + 1}" for i in range(APPRAISAL_COUNT)]
            + [f"emotion_{name}" for name in EMOTION_NAMES]
            + list(PCB_FIELDS))


def ingest(path: str | Path, fmt: str | None = None) -> list[ReviewRecord]:
    """Load and validate records from JSONL or CSV.

    Malformed rows are collected with their line numbers and the whole batch
    is rejected in one error.
    """
    path = Path(path)
    if fmt is None:
        fmt = "csv" if path.suffix.lower() == ".csv" else "jsonl"
    if fmt not in ("jsonl", "csv"):
        raise ConfigError(f"unknown dataset format {fmt!r}")
    text = path.read_text(encoding="utf-8")
    records: list[ReviewRecord] = []
    errors: list[str] = []
    if fmt == "jsonl":
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                records.append(_record_from_obj(obj, f"line {lineno}"))
            except json.JSONDecodeError as exc:
                errors.append(f"line {lineno}: invalid JSON ({exc.msg})")
            except ValidationError as exc:
                errors.append(str(exc))
    else:
        reader = csv.reader(io.StringIO(text))
        rows = list(reader)
        header = _csv_header()
        if not rows or rows[0] != header:
            raise ValidationError(f"{path}: CSV header must be {','.join(header)}")
        for lineno, row in enumerate(rows[1:], 2):
            if not row:
                continue
            if len(row) != len(header):
                errors.append(f"line {lineno}: expected {len(header)} columns, got {len(row)}")
                continue
            try:
                obj = {
                    "id": row[0],
                    "text": row[1],
                    "appraisals": [int(v) for v in row[2:2 + APPRAISAL_COUNT]],
                    "emotions": [int(v) for v in
                                 row[2 + APPRAISAL_COUNT:2 + APPRAISAL_COUNT + EMOTION_COUNT]],
                    "pcb_repurchase": int(row[-2]),
                    "pcb_promote": int(row[-1]),
                }
                records.append(_record_from_obj(obj, f"line {lineno}"))
            except ValueError:
                errors.append(f"line {lineno}: non-integer rating value")
            except ValidationError as exc:
                errors.append(str(exc))
    if errors:
        raise ValidationError(f"{path}: {len(errors)} invalid rows\n" + "\n".join(errors))
    return records


def record_to_obj(record: ReviewRecord) -> dict:
    return {
        "id": record.id,
        "text": record.text,
        "appraisals": list(record.appraisals),
        "emotions": list(record.emotions),
        "pcb_repurchase": record.pcb_repurchase,
        "pcb_promote": record.pcb_promote,
    }


def write_jsonl(records: Iterable[ReviewRecord], path: str | Path) -> None:
    lines = [json.dumps(record_to_obj(r), sort_keys=True) for r in records]
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_csv(records: Iterable[ReviewRecord], path: str | Path) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(_csv_header())
    for r in records:
        writer.writerow([r.id, r.text, *r.appraisals, *r.emotions,
                         r.pcb_repurchase, r.pcb_promote])
    atomic_write_text(path, buf.getvalue())


def write_appraisal_names(path: str | Path,
                          names: Sequence[str] = DEFAULT_APPRAISAL_NAMES) -> None:
    if len(names) != APPRAISAL_COUNT:
        raise ConfigError(f"expected {APPRAISAL_COUNT} appraisal names, got {len(names)}")
    atomic_write_text(path, "\n".join(names) + "\n")


def read_appraisal_names(path: str | Path) -> tuple[str, ...]:
    names = Path(path).read_text(encoding="utf-8").splitlines()
    if len(names) != APPRAISAL_COUNT:
        raise ValidationError(
            f"{path}: sidecar must have exactly {APPRAISAL_COUNT} lines, got {len(names)}")
    return tuple(names)


# ---------------------------------------------------------------------------
# Synthetic generator

# +1 means higher ratings on this dimension push behavior intentions up.
APPRAISAL_VALENCE = np.array([+1, +1, +1, +1, -1,
                              +1, +1, +1, +1, +1,
                              -1, +1, -1, +1, -1,
                              +1, -1, +1, -1, +1], dtype=np.float64)
EMOTION_VALENCE = np.array([-1, -1, -1, +1, +1, +1, -1, +1], dtype=np.float64)

# (high words, low words) per appraisal dimension; all single lowercase tokens
# so the tokenizer keeps them intact.
APPRAISAL_WORDS: tuple[tuple[tuple[str, ...], tuple[str, ...]], ...] = (
    (("novel", "unprecedented"), ("familiar", "routine")),
    (("pleasant", "lovely"), ("unpleasant", "miserable")),
    (("effective", "seamless"), ("obstructive", "useless")),
    (("fair", "honest"), ("unfair", "deceptive")),
    (("negligent", "dismissive"), ("attentive", "accommodating")),
    (("durable", "solid"), ("flimsy", "fragile")),
    (("responsive", "prompt"), ("sluggish", "unresponsive")),
    (("spacious", "roomy"), ("cramped", "tight")),
    (("quiet", "peaceful"), ("noisy", "loud")),
    (("fresh", "crisp"), ("stale", "soggy")),
    (("sloppy", "careless"), ("polished", "meticulous")),
    (("generous", "plentiful"), ("stingy", "meager")),
    (("erratic", "unpredictable"), ("reliable", "dependable")),
    (("smooth", "effortless"), ("clunky", "awkward")),
    (("grimy", "dingy"), ("spotless", "immaculate")),
    (("bright", "vivid"), ("dim", "drab")),
    (("tardy", "delayed"), ("punctual", "swift")),
    (("tidy", "organized"), ("cluttered", "messy")),
    (("frosty", "cold"), ("warm", "cozy")),
    (("secure", "sturdy"), ("precarious", "wobbly")),
)

EMOTION_WORDS: tuple[tuple[str, ...], ...] = (
    ("furious", "outraged"),
    ("disappointed", "letdown"),
    ("disgusted", "revolted"),
    ("grateful", "thankful"),
    ("delighted", "overjoyed"),
    ("proud", "accomplished"),
    ("regretful", "remorseful"),
    ("astonished", "stunned"),
)

_FILLER_WORDS = (
    "the", "we", "i", "my", "our", "it", "this", "that", "visit", "order",
    "arrived", "later", "again", "room", "meal", "staff", "table", "menu",
    "day", "trip", "place", "time", "then", "also", "quite", "overall",
    "during", "after", "before", "while", "two", "three", "first", "next",
    "booked", "checked", "paid", "asked", "told", "brought", "package",
    "store", "counter", "drive", "evening", "morning", "weekend", "item",
)

_OPENINGS = (
    "i am writing about a recent purchase .",
    "this review covers our latest visit .",
    "we tried this product not long ago .",
    "here is how the whole experience went .",
)

_APPRAISAL_TEMPLATES = (
    "the whole thing felt {word} to us .",
    "everything about it seemed {word} .",
    "my partner called it {word} outright .",
    "honestly it came across as {word} .",
)

_EMOTION_TEMPLATES = (
    "i felt {word} about it .",
    "it left me {word} for days .",
    "walking away i was simply {word} .",
)


def _default_appraisal_emotion_weights() -> np.ndarray:
    w = np.full((APPRAISAL_COUNT, EMOTION_COUNT), 0.25)
    for k in range(APPRAISAL_COUNT):
        w[k, k % EMOTION_COUNT] = 0.9
    return w * np.outer(APPRAISAL_VALENCE, EMOTION_VALENCE)


@dataclass
class SyntheticGeneratorConfig:
    """Planted-signal generator settings; the defaults are the tested baseline."""

    record_count: int = 1400
    noise_scale: float = 0.25
    mean_review_length: int = 190
    text_signal: float = 1.0
    squash_scale: float = 3.0
    appraisal_emotion_weights: np.ndarray = field(
        default_factory=_default_appraisal_emotion_weights)
    repurchase_appraisal_weights: np.ndarray = field(
        default_factory=lambda: 0.13 * APPRAISAL_VALENCE)
    repurchase_emotion_weights: np.ndarray = field(
        default_factory=lambda: 0.15 * EMOTION_VALENCE)
    promote_appraisal_weights: np.ndarray = field(
        default_factory=lambda: 0.07 * APPRAISAL_VALENCE)
    promote_emotion_weights: np.ndarray = field(
        default_factory=lambda: 0.19 * EMOTION_VALENCE)
    appraisal_high_words: tuple[tuple[str, ...], ...] = tuple(h for h, _ in APPRAISAL_WORDS)
    appraisal_low_words: tuple[tuple[str, ...], ...] = tuple(l for _, l in APPRAISAL_WORDS)
    emotion_words: tuple[tuple[str, ...], ...] = EMOTION_WORDS

    def validate(self) -> None:
        if self.record_count < 1:
            raise ConfigError(f"record_count must be positive, got {self.record_count}")
        if self.noise_scale < 0:
            raise ConfigError(f"noise_scale must be non-negative, got {self.noise_scale}")
        if self.squash_scale <= 0:
            raise ConfigError(f"squash_scale must be positive, got {self.squash_scale}")
        if not 0.0 <= self.text_signal <= 1.0:
            raise ConfigError(f"text_signal must be in [0, 1], got {self.text_signal}")
        mats = [
            (self.appraisal_emotion_weights, (APPRAISAL_COUNT, EMOTION_COUNT)),
            (self.repurchase_appraisal_weights, (APPRAISAL_COUNT,)),
            (self.repurchase_emotion_weights, (EMOTION_COUNT,)),
            (self.promote_appraisal_weights, (APPRAISAL_COUNT,)),
            (self.promote_emotion_weights, (EMOTION_COUNT,)),
        ]
        for m, shape in mats:
            arr = np.asarray(m, dtype=np.float64)
            if arr.shape != shape:
                raise ConfigError(f"weight shape {arr.shape} != expected {shape}")
            if not np.all(np.isfinite(arr)):
                raise ConfigError("weights must be finite")
        for name, lists in (("appraisal_high_words", self.appraisal_high_words),
                            ("appraisal_low_words", self.appraisal_low_words)):
            if len(lists) != APPRAISAL_COUNT or any(len(ws) == 0 for ws in lists):
                raise ConfigError(f"{name} needs a nonempty word list per dimension")
        if len(self.emotion_words) != EMOTION_COUNT or any(
                len(ws) == 0 for ws in self.emotion_words):
            raise ConfigError("emotion_words needs a nonempty word list per emotion")


def discretize_unit(x: float) -> int:
    """Affine-map a squashed latent in (-1, 1) onto [1, 7], rounding half-up."""
    y = 4.0 + 3.0 * float(np.clip(x, -1.0, 1.0))
    return int(min(7, max(1, np.floor(y + 0.5))))


def planted_emotions(appraisals: Sequence[int],
                     cfg: SyntheticGeneratorConfig,
                     noise: np.ndarray | None = None) -> tuple[int, ...]:
    """Closed-form emotion ratings implied by the planted weights."""
    centered = np.asarray(appraisals, dtype=np.float64) - 4.0
    latent = centered @ np.asarray(cfg.appraisal_emotion_weights, dtype=np.float64)
    if noise is not None:
        latent = latent + noise
    return tuple(discretize_unit(v) for v in np.tanh(latent / cfg.squash_scale))


def planted_pcb(appraisals: Sequence[int], emotions: Sequence[int],
                cfg: SyntheticGeneratorConfig, target: str,
                noise: float = 0.0) -> int:
    """Closed-form PCB rating implied by the planted weights."""
    if target == "repurchase":
        wa, we = cfg.repurchase_appraisal_weights, cfg.repurchase_emotion_weights
    elif target == "promote":
        wa, we = cfg.promote_appraisal_weights, cfg.promote_emotion_weights
    else:
        raise ConfigError(f"unknown PCB target {target!r}")
    latent = ((np.asarray(appraisals, dtype=np.float64) - 4.0) @ np.asarray(wa)
              + (np.asarray(emotions, dtype=np.float64) - 4.0) @ np.asarray(we)
              + noise)
    return discretize_unit(np.tanh(latent / cfg.squash_scale))


def _render_text(rng: np.random.Generator, appraisal_classes: Sequence[Level],
                 emotion_flags: Sequence[int], cfg: SyntheticGeneratorConfig,
                 target_tokens: int) -> str:
    signal: list[str] = []
    for k, cls in enumerate(appraisal_classes):
        if cls == Level.MODERATE:
            continue
        if cfg.text_signal < 1.0 and rng.random() >= cfg.text_signal:
            continue
        words = (cfg.appraisal_high_words[k] if cls == Level.HIGH
                 else cfg.appraisal_low_words[k])
        word = words[int(rng.integers(len(words)))]
        template = _APPRAISAL_TEMPLATES[int(rng.integers(len(_APPRAISAL_TEMPLATES)))]
        signal.append(template.format(word=word))
    for e, flag in enumerate(emotion_flags):
        if not flag:
            continue
        if cfg.text_signal < 1.0 and rng.random() >= cfg.text_signal:
            continue
        word = cfg.emotion_words[e][int(rng.integers(len(cfg.emotion_words[e])))]
        template = _EMOTION_TEMPLATES[int(rng.integers(len(_EMOTION_TEMPLATES)))]
        signal.append(template.format(word=word))

    sentences = [_OPENINGS[int(rng.integers(len(_OPENINGS)))]]
    sentences.extend(signal)
    count = len(tokenize(" ".join(sentences)))
    while count < target_tokens:
        n_words = int(rng.integers(6, 13))
        idx = rng.integers(len(_FILLER_WORDS), size=n_words)
        filler = " ".join(_FILLER_WORDS[int(i)] for i in idx) + " ."
        # splice filler between signal sentences so signal position varies
        pos = int(rng.integers(1, len(sentences) + 1))
        sentences.insert(pos, filler)
        count += n_words + 1
    return " ".join(sentences)


def generate_synthetic(cfg: SyntheticGeneratorConfig, seed: int) -> list[ReviewRecord]:
    """Generate records whose ratings follow the planted causal chain."""
    cfg.validate()
    rng = np.random.default_rng(seed)
    records: list[ReviewRecord] = []
    for i in range(cfg.record_count):
        appraisals = tuple(int(v) for v in rng.integers(1, 8, size=APPRAISAL_COUNT))
        emo_noise = rng.normal(0.0, cfg.noise_scale, size=EMOTION_COUNT) \
            if cfg.noise_scale > 0 else None
        emotions = planted_emotions(appraisals, cfg, noise=emo_noise)
        pcb_noise = rng.normal(0.0, cfg.noise_scale, size=2) if cfg.noise_scale > 0 \
            else np.zeros(2)
        repurchase = planted_pcb(appraisals, emotions, cfg, "repurchase",
                                 noise=float(pcb_noise[0]))
        promote = planted_pcb(appraisals, emotions, cfg, "promote",
                              noise=float(pcb_noise[1]))
        target_tokens = int(np.clip(rng.normal(cfg.mean_review_length,
                                               cfg.mean_review_length * 0.12),
                                    30, 2 * cfg.mean_review_length))
        text = _render_text(rng,
                            [segment_appraisal(a) for a in appraisals],
                            [segment_emotion(e) for e in emotions],
                            cfg, target_tokens)
        records.append(ReviewRecord(
            id=f"synth-{i:05d}",
            text=text,
            appraisals=appraisals,
            emotions=emotions,
            pcb_repurchase=repurchase,
            pcb_promote=promote,
        ))
    return records
