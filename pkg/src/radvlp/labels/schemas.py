"""Label schemas and label vectors."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DIAGNOSTIC_DOMAIN = frozenset({-1, 0, 1})
BINARY_DOMAIN = frozenset({0, 1})


@dataclass(frozen=True)
class LabelSchema:
    """Ordered set of categories plus the integer values a label may take.

    ``kind`` selects the extraction prompt template ("diagnostic" or
    "visual"). ``descriptions`` and ``groups`` are only used when rendering
    visual-pattern prompts.
    """

    name: str
    categories: tuple[str, ...]
    value_domain: frozenset[int] = DIAGNOSTIC_DOMAIN
    kind: str = "diagnostic"
    descriptions: tuple[str, ...] = ()
    groups: tuple[tuple[str, int], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "categories", tuple(self.categories))
        object.__setattr__(self, "value_domain", frozenset(self.value_domain))
        if not self.categories:
            raise ValueError("schema needs at least one category")
        if len(set(self.categories)) != len(self.categories):
            raise ValueError(f"duplicate category names in schema {self.name!r}")
        if not self.value_domain:
            raise ValueError("value_domain must be nonempty")
        if self.kind not in ("diagnostic", "visual"):
            raise ValueError(f"unknown schema kind {self.kind!r}")
        if self.descriptions and len(self.descriptions) != len(self.categories):
            raise ValueError("descriptions must align with categories")
        if self.groups and sum(n for _, n in self.groups) != len(self.categories):
            raise ValueError("group sizes must add up to the number of categories")

    @property
    def arity(self) -> int:
        return len(self.categories)

    def index(self, category: str) -> int:
        return self.categories.index(category)

    def subset(self, keep, name: str | None = None) -> "LabelSchema":
        """Schema restricted to the category indices in ``keep`` (order kept)."""
        keep = sorted(keep)
        return LabelSchema(
            name=name or f"{self.name}-subset",
            categories=tuple(self.categories[i] for i in keep),
            value_domain=self.value_domain,
            kind=self.kind,
            descriptions=tuple(self.descriptions[i] for i in keep) if self.descriptions else (),
        )


@dataclass(frozen=True)
class LabelVector:
    schema: LabelSchema
    values: tuple[int, ...] = field(default=())

    def __post_init__(self):
        vals = tuple(int(v) for v in self.values)
        object.__setattr__(self, "values", vals)
        if len(vals) != self.schema.arity:
            raise ValueError(
                f"label vector has {len(vals)} values, schema {self.schema.name!r} "
                f"expects {self.schema.arity}"
            )
        bad = [v for v in vals if v not in self.schema.value_domain]
        if bad:
            raise ValueError(f"values {bad} outside domain {sorted(self.schema.value_domain)}")

    def __len__(self):
        return len(self.values)

    def __getitem__(self, i):
        return self.values[i]

    def __iter__(self):
        return iter(self.values)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=np.int64)

    def render(self) -> str:
        return ",".join(str(v) for v in self.values)


CT_RATE_18 = LabelSchema(
    name="ct-rate-18",
    categories=(
        "medical material",
        "arterial wall calcification",
        "cardiomegaly",
        "pericardial effusion",
        "coronary artery wall calcification",
        "hiatal hernia",
        "lymphadenopathy",
        "emphysema",
        "atelectasis",
        "lung nodule",
        "lung opacity",
        "pulmonary fibrotic sequela",
        "pleural effusion",
        "mosaic attenuation pattern",
        "peribronchial thickening",
        "consolidation",
        "bronchiectasis",
        "interlobular septal thickening",
    ),
)

MERLIN_30 = LabelSchema(
    name="merlin-30",
    categories=(
        "submucosal_edema",
        "renal_hypodensities",
        "aortic_valve_calcification",
        "coronary_calcification",
        "thrombosis",
        "metastatic_disease",
        "pancreatic_atrophy",
        "renal_cyst",
        "osteopenia",
        "surgically_absent_gallbladder",
        "atelectasis",
        "abdominal_aortic_aneurysm",
        "anasarca",
        "hiatal_hernia",
        "lymphadenopathy",
        "prostatomegaly",
        "biliary_ductal_dilation",
        "cardiomegaly",
        "splenomegaly",
        "hepatomegaly",
        "atherosclerosis",
        "ascites",
        "pleural_effusion",
        "hepatic_steatosis",
        "appendicitis",
        "gallstones",
        "hydronephrosis",
        "bowel_obstruction",
        "free_air",
        "fracture",
    ),
)

VISUAL_11 = LabelSchema(
    name="visual-11",
    categories=(
        "density_high",
        "density_low",
        "density_mixed",
        "morphology_nodular",
        "morphology_patchy",
        "morphology_linear",
        "morphology_reticular",
        "distribution_focal",
        "distribution_diffuse",
        "distribution_bilateral_symmetric",
        "distribution_unilateral",
    ),
    value_domain=BINARY_DOMAIN,
    kind="visual",
    descriptions=(
        "High-attenuation focus",
        "Low-attenuation focus",
        "Mixed-attenuation focus",
        "Nodular opacity",
        "Patchy opacity",
        "Linear/stripe-like opacity",
        "Reticular/network-like opacity",
        "Focal distribution",
        "Diffuse distribution",
        "Bilateral symmetric distribution",
        "Unilateral distribution",
    ),
    groups=(("Density patterns", 3), ("Morphology patterns", 4), ("Distribution patterns", 4)),
)

# Eight imageable chest findings used by the synthetic desk corpus.
DESK_8 = LabelSchema(
    name="desk-8",
    categories=(
        "cardiomegaly",
        "pericardial effusion",
        "emphysema",
        "atelectasis",
        "lung nodule",
        "lung opacity",
        "pleural effusion",
        "consolidation",
    ),
)

BUNDLED_SCHEMAS = {s.name: s for s in (CT_RATE_18, MERLIN_30, VISUAL_11, DESK_8)}


def get_schema(name: str) -> LabelSchema:
    try:
        return BUNDLED_SCHEMAS[name]
    except KeyError:
        raise KeyError(f"unknown schema {name!r}; bundled: {sorted(BUNDLED_SCHEMAS)}") from None
