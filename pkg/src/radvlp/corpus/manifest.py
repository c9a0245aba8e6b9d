"""JSON-lines manifest: one study per line, volumes and masks as sidecar files."""

from __future__ import annotations

import json
from pathlib import Path

from ..labels.schemas import BUNDLED_SCHEMAS, LabelSchema, LabelVector
from .synth import StudyRecord
from .volume import VolumeTensor, load_volume, read_header, save_volume

SCHEMA_FILE = "schema.json"


class ManifestError(ValueError):
    pass


def schema_to_dict(schema: LabelSchema, **extra) -> dict:
    d = {
        "name": schema.name,
        "categories": list(schema.categories),
        "value_domain": sorted(schema.value_domain),
        "kind": schema.kind,
    }
    d.update(extra)
    return d


def schema_from_dict(d: dict) -> LabelSchema:
    return LabelSchema(
        name=d["name"],
        categories=tuple(d["categories"]),
        value_domain=frozenset(d["value_domain"]),
        kind=d.get("kind", "diagnostic"),
    )


def write_manifest(records, path, schema_extra: dict | None = None) -> Path:
    """Write ``manifest.jsonl`` plus volumes/ and masks/ next to it."""
    path = Path(path)
    root = path.parent
    (root / "volumes").mkdir(parents=True, exist_ok=True)
    if any(r.mask is not None for r in records):
        (root / "masks").mkdir(exist_ok=True)
    if records:
        schema = records[0].labels.schema
        (root / SCHEMA_FILE).write_text(
            json.dumps(schema_to_dict(schema, **(schema_extra or {})), indent=2) + "\n"
        )
    with open(path, "w") as fh:
        for r in records:
            vol_rel = f"volumes/{r.study_id}.vol"
            save_volume(r.volume, root / vol_rel)
            mask_rel = None
            if r.mask is not None:
                mask_rel = f"masks/{r.study_id}.vol"
                save_volume(VolumeTensor(r.mask, r.volume.spacing_mm, "label"), root / mask_rel)
            rec = {
                "study_id": r.study_id,
                "volume": vol_rel,
                "report": r.report,
                "labels": list(r.labels.values),
                "schema": r.labels.schema.name,
                "mask": mask_rel,
                "split": r.split,
                "sentences": [list(s) for s in r.sentences],
            }
            fh.write(json.dumps(rec) + "\n")
    return path


def load_schema(root: Path, name: str) -> LabelSchema:
    sidecar = root / SCHEMA_FILE
    if sidecar.exists():
        schema = schema_from_dict(json.loads(sidecar.read_text()))
        if schema.name == name:
            return schema
    if name in BUNDLED_SCHEMAS:
        return BUNDLED_SCHEMAS[name]
    raise ManifestError(f"schema {name!r} not bundled and not described in {sidecar}")


def read_manifest(path, min_slices: int | None = None, splits=None, load=True) -> list[StudyRecord]:
    """Read a manifest; studies with fewer than ``min_slices`` slices are dropped."""
    path = Path(path)
    root = path.parent
    if not path.exists():
        raise ManifestError(f"manifest not found: {path}")
    records, schemas = [], {}
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            sid = rec["study_id"]
            name = rec["schema"]
            if name not in schemas:
                schemas[name] = load_schema(root, name)
            labels = LabelVector(schemas[name], rec["labels"])
            split = rec["split"]
            vol_path = root / rec["volume"]
            mask_rel = rec.get("mask")
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ManifestError(f"{path}:{lineno}: malformed record ({exc})") from exc
        if splits is not None and split not in splits:
            continue
        if not vol_path.exists():
            raise ManifestError(f"{path}:{lineno}: volume file for study {sid!r} missing: {vol_path}")
        if min_slices is not None and read_header(vol_path)[0][2] < min_slices:
            continue
        volume = load_volume(vol_path)
        mask = None
        if mask_rel:
            mask_path = root / mask_rel
            if not mask_path.exists():
                raise ManifestError(f"{path}:{lineno}: mask file for study {sid!r} missing: {mask_path}")
            mask = load_volume(mask_path).data
        records.append(
            StudyRecord(
                study_id=sid,
                volume=volume,
                report=rec["report"],
                labels=labels,
                mask=mask,
                split=split,
                sentences=[tuple(s) for s in rec.get("sentences", [])],
            )
        )
    return records


def replace_labels(records, new_labels: dict) -> list[StudyRecord]:
    """Copy of ``records`` with labels swapped for those in ``new_labels``;
    studies mapped to None (flagged) are dropped."""
    out = []
    for r in records:
        if r.study_id not in new_labels:
            out.append(r)
        elif new_labels[r.study_id] is not None:
            out.append(StudyRecord(r.study_id, r.volume, r.report, new_labels[r.study_id], r.mask, r.split, r.sentences))
    return out
