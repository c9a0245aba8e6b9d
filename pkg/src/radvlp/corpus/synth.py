"""Synthetic chest-like corpus with known ground truth.

Every positive finding is drawn as its own parametric structure (blob,
shell or stripe) at a category-specific location in the central part of
the field of view. Reports are assembled from tagged sentences; the tags make
label-related / label-unrelated splits exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter

from ..labels.schemas import LabelSchema, LabelVector
from .volume import VolumeTensor

AIR_HU = -1000.0
PARENCHYMA_HU = -600.0
WALL_HU = 40.0

BACKGROUND, BODY = 0, 1
LESION_BASE = 2  # mask class of category c is LESION_BASE + c

FINDING, NEGATION, FILLER = "finding", "negation", "filler"

FINDING_TEMPLATES = (
    "There is {name}.",
    "{Name} is present.",
    "Findings are compatible with {name}.",
    "{Name} is seen.",
    "Evidence of {name} is noted.",
)
NEGATION_TEMPLATES = (
    "No {name}.",
    "There is no {name}.",
    "{Name} is not present.",
    "Findings are not compatible with {name}.",
    "No evidence of {name}.",
)
FILLER_TEMPLATES = (
    "The liver measures {n} cm in craniocaudal dimension.",
    "The spleen measures {n} cm.",
    "The thyroid gland has a homogeneous texture.",
    "The osseous structures show a uniform texture.",
    "The kidneys measure {n} cm in length.",
    "The trachea measures {n} mm in diameter.",
    "Subcutaneous fat has a smooth texture.",
    "The visualized bowel loops are of normal caliber.",
)


@dataclass(frozen=True)
class Structure:
    kind: str  # blob | shell | stripe
    center: tuple[float, float, float]  # fraction of the field of view
    radii: tuple[float, float, float]  # voxels
    contrast_hu: float
    half_thickness: float = 0.75  # stripe only: plate half-width along the first axis, voxels


# One structure per octant of the central box for the first eight categories.
# Each has a locally distinctive signature (bright vs dark, size, shape) so a
# small convolutional encoder with global average pooling can tell them apart
# regardless of where a random crop places them.
_LO, _HI = 0.3, 0.7
_HANDCRAFTED = (
    Structure("blob", (_LO, _LO, _LO), (6.0, 6.0, 3.0), 450.0),
    Structure("shell", (_LO, _HI, _LO), (6.0, 6.0, 3.0), 700.0),
    Structure("blob", (_HI, _LO, _LO), (6.0, 6.0, 3.0), -400.0),
    Structure("stripe", (_HI, _HI, _LO), (6.0, 6.0, 3.0), 650.0, half_thickness=1.6),
    Structure("blob", (_LO, _LO, _HI), (3.5, 3.5, 2.0), 1000.0),
    Structure("blob", (_LO, _HI, _HI), (6.5, 6.5, 3.2), 250.0),
    Structure("shell", (_HI, _LO, _HI), (6.0, 6.0, 3.0), -250.0),
    Structure("blob", (_HI, _HI, _HI), (4.5, 4.5, 2.4), 850.0),
)


def structure_bank(arity: int) -> list[Structure]:
    bank = list(_HANDCRAFTED[:arity])
    rng = np.random.default_rng(12345)
    kinds = ("blob", "shell", "stripe")
    for c in range(len(bank), arity):
        bank.append(
            Structure(
                kinds[c % 3],
                tuple(rng.uniform(0.3, 0.7, size=3)),
                (3.0, 3.0, 1.6),
                float(rng.choice([-1, 1]) * rng.uniform(300, 800)),
            )
        )
    return bank


@dataclass
class SynthConfig:
    shape: tuple[int, int, int] = (40, 40, 20)
    spacing_mm: tuple[float, float, float] = (3.0, 3.0, 6.0)
    prevalence: float | list[float] = 0.3
    uncertain_rate: float = 0.1
    negation_rate: float = 0.5
    render_uncertain: bool = False
    uncertain_contrast: float = 0.3
    contrast_scale: float = 1.0
    noise_hu: float = 20.0
    field_hu: float = 40.0
    jitter_vox: float = 1.0
    split_fractions: tuple[float, float, float] = (0.7, 0.15, 0.15)


@dataclass
class StudyRecord:
    study_id: str
    volume: VolumeTensor
    report: str
    labels: LabelVector
    mask: np.ndarray | None = None
    split: str = "train"
    sentences: list[tuple[str, str, int]] = field(default_factory=list)

    def __post_init__(self):
        if self.split not in ("train", "val", "test"):
            raise ValueError(f"bad split {self.split!r}")
        if self.mask is not None and self.mask.shape != self.volume.shape:
            raise ValueError(f"{self.study_id}: mask shape differs from volume shape")


def _grid(shape):
    return np.meshgrid(*[np.arange(n, dtype=np.float64) for n in shape], indexing="ij")


def structure_mask(shape, s: Structure, offset=(0.0, 0.0, 0.0)) -> np.ndarray:
    grid = _grid(shape)
    center = [f * (n - 1) + o for f, n, o in zip(s.center, shape, offset)]
    r = np.sqrt(sum(((g - c) / rad) ** 2 for g, c, rad in zip(grid, center, s.radii)))
    if s.kind == "blob":
        return r <= 1.0
    if s.kind == "shell":
        return (r <= 1.0) & (r >= 0.55)
    if s.kind == "stripe":
        # thin plate across the first axis
        return (r <= 1.0) & (np.abs(grid[0] - center[0]) <= s.half_thickness)
    raise ValueError(f"unknown structure kind {s.kind!r}")


def _background(shape, rng) -> tuple[np.ndarray, np.ndarray]:
    grid = _grid(shape)
    r = np.sqrt(sum(((g - (n - 1) / 2) / (0.48 * n)) ** 2 for g, n in zip(grid, shape)))
    body = r <= 1.0
    vol = np.full(shape, AIR_HU)
    vol[body] = PARENCHYMA_HU
    vol[body & (r > 0.85)] = WALL_HU
    return vol, body


def draw_labels(rng, arity, prevalence, uncertain_rate) -> np.ndarray:
    prev = np.broadcast_to(np.asarray(prevalence, dtype=np.float64), (arity,))
    u = rng.random(arity)
    v = rng.random(arity)
    labels = np.where(u < prev, 1, np.where(v < uncertain_rate, -1, 0))
    return labels.astype(np.int64)


def render_study(rng, labels, schema: LabelSchema, cfg: SynthConfig):
    """Return (hu volume, pre-lesion background, mask, sentences) for one study."""
    shape = tuple(cfg.shape)
    bank = structure_bank(schema.arity)
    vol, body = _background(shape, rng)
    smooth = gaussian_filter(rng.standard_normal(shape), sigma=3.0)
    smooth *= cfg.field_hu / max(smooth.std(), 1e-12)
    vol = vol + np.where(body, smooth, 0.0) + cfg.noise_hu * rng.standard_normal(shape)
    background = vol.copy()
    mask = np.where(body, BODY, BACKGROUND).astype(np.uint8)

    for c, value in enumerate(labels):
        offset = tuple(rng.uniform(-cfg.jitter_vox, cfg.jitter_vox, size=3))
        if value == 1:
            m = structure_mask(shape, bank[c], offset)
            vol[m] += bank[c].contrast_hu * cfg.contrast_scale
            mask[m] = LESION_BASE + c
        elif value == -1 and cfg.render_uncertain:
            m = structure_mask(shape, bank[c], offset)
            vol[m] += bank[c].contrast_hu * cfg.contrast_scale * cfg.uncertain_contrast

    sentences = []
    for c, value in enumerate(labels):
        name = schema.categories[c].replace("_", " ")
        fill = {"name": name, "Name": name[:1].upper() + name[1:]}
        if value == 1:
            t = FINDING_TEMPLATES[rng.integers(len(FINDING_TEMPLATES))]
            sentences.append((t.format(**fill), FINDING, c))
        elif value == 0 and rng.random() < cfg.negation_rate:
            t = NEGATION_TEMPLATES[rng.integers(len(NEGATION_TEMPLATES))]
            sentences.append((t.format(**fill), NEGATION, c))
    for _ in range(int(rng.integers(1, 4))):
        t = FILLER_TEMPLATES[rng.integers(len(FILLER_TEMPLATES))]
        sentences.append((t.format(n=int(rng.integers(2, 20))), FILLER, -1))
    order = rng.permutation(len(sentences))
    sentences = [sentences[i] for i in order]
    return vol.astype(np.float32), background.astype(np.float32), mask, sentences


def assign_splits(n: int, fractions, rng) -> list[str]:
    f = np.asarray(fractions, dtype=np.float64)
    f = f / f.sum()
    n_train = int(round(f[0] * n))
    n_val = int(round(f[1] * n))
    n_val = min(n_val, n - n_train)
    names = ["train"] * n_train + ["val"] * n_val + ["test"] * (n - n_train - n_val)
    return [names[i] for i in rng.permutation(n)]


def synth_corpus(
    seed: int,
    n_studies: int,
    schema: LabelSchema,
    shape=None,
    cfg: SynthConfig | None = None,
    force_labels=None,
) -> list[StudyRecord]:
    if n_studies < 1:
        raise ValueError("n_studies must be >= 1")
    cfg = cfg or SynthConfig()
    if shape is not None:
        cfg = SynthConfig(**{**cfg.__dict__, "shape": tuple(shape)})
    if min(cfg.shape) < 8:
        raise ValueError(f"shape {cfg.shape} too small to place structures (need >= 8 per axis)")
    root = np.random.SeedSequence(seed)
    split_seq, *study_seqs = root.spawn(n_studies + 1)
    splits = assign_splits(n_studies, cfg.split_fractions, np.random.default_rng(split_seq))

    records = []
    for i, seq in enumerate(study_seqs):
        rng = np.random.default_rng(seq)
        labels = draw_labels(rng, schema.arity, cfg.prevalence, cfg.uncertain_rate)
        if force_labels is not None:
            forced = np.asarray(force_labels)
            labels = np.where(forced == None, labels, forced).astype(np.int64)  # noqa: E711
        vol, _, mask, sentences = render_study(rng, labels, schema, cfg)
        records.append(
            StudyRecord(
                study_id=f"study-{i:05d}",
                volume=VolumeTensor(vol, cfg.spacing_mm, "raw_hu"),
                report=" ".join(s for s, _, _ in sentences),
                labels=LabelVector(schema, tuple(int(v) for v in labels)),
                mask=mask,
                split=splits[i],
                sentences=sentences,
            )
        )
    return records
