"""Run configuration: one JSON document, validated before any work starts."""

from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import jsonschema

from .corpus.preprocess import PRESETS
from .corpus.synth import SynthConfig
from .labels.schemas import BUNDLED_SCHEMAS
from .models.text import ATTENTION_MODES, TextEncoderConfig
from .models.vision import POOLINGS, VisionEncoderConfig
from .training.loops import DESK_EPOCHS, DESK_LR, STAGES, TrainingConfig
from .training.losses import POLICIES

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


def _obj(props: dict, required=()) -> dict:
    return {"type": "object", "properties": props, "additionalProperties": False, "required": list(required)}


_POS_INT = {"type": "integer", "minimum": 1}
_POS_NUM = {"type": "number", "exclusiveMinimum": 0}
_PROB = {"type": "number", "minimum": 0, "maximum": 1}
_TRIPLE = {"type": "array", "items": _POS_INT, "minItems": 3, "maxItems": 3}

_STAGE = _obj(
    {
        "lr": _POS_NUM,
        "epochs": _POS_INT,
        "batch_size": _POS_INT,
        "lambda_cls": {"type": "number", "minimum": 0},
        "uncertain_policy": {"enum": list(POLICIES)},
        "use_seg": {"type": "boolean"},
        "l2_normalize": {"type": "boolean"},
        "weight_decay": {"type": "number", "minimum": 0},
        "freeze_encoders": {"type": "boolean"},
    }
)

JSON_SCHEMA = _obj(
    {
        "schema_version": {"const": SCHEMA_VERSION},
        "seed": {"type": "integer", "minimum": 0},
        "preset": {"enum": sorted(PRESETS)},
        "schema": {"enum": sorted(BUNDLED_SCHEMAS)},
        "corpus": _obj(
            {
                "n_studies": _POS_INT,
                "shape": _TRIPLE,
                "prevalence": _PROB,
                "uncertain_rate": _PROB,
                "negation_rate": _PROB,
                "noise_hu": {"type": "number", "minimum": 0},
                "split_fractions": {"type": "array", "items": _PROB, "minItems": 3, "maxItems": 3},
            }
        ),
        "vision": _obj(
            {
                "channels_per_stage": {"type": "array", "items": _POS_INT, "minItems": 1},
                "blocks_per_stage": {"type": "array", "items": _POS_INT, "minItems": 1},
                "stem": {"enum": ["lite", "standard"]},
                "pooling": {"enum": list(POOLINGS)},
                "embed_dim": _POS_INT,
            }
        ),
        "text": _obj(
            {
                "layers": _POS_INT,
                "heads": _POS_INT,
                "hidden_dim": _POS_INT,
                "ff_dim": _POS_INT,
                "max_tokens": _POS_INT,
                "embed_dim": _POS_INT,
                "dropout": {"type": "number", "minimum": 0, "maximum": 1},
                "attention": {"enum": list(ATTENTION_MODES)},
            }
        ),
        "training": _obj({stage: _STAGE for stage in STAGES}),
        "evaluation": _obj(
            {
                "split": {"enum": ["train", "val", "test"]},
                "prompt_index": {"type": "integer", "minimum": 1, "maximum": 5},
                "threshold": _PROB,
                "recall_ks": {"type": "array", "items": _POS_INT, "minItems": 1},
            }
        ),
        "extraction": _obj(
            {
                "client": {"enum": ["mock", "http"]},
                "base_url": {"type": "string"},
                "model": {"type": "string"},
                "api_key_env": {"type": "string"},
                "max_attempts": _POS_INT,
                "base_delay": {"type": "number", "minimum": 0},
                "timeout": _POS_NUM,
            }
        ),
    },
    required=["schema_version"],
)


def _default_training() -> dict:
    return {s: {"lr": DESK_LR[s], "epochs": DESK_EPOCHS[s]} for s in STAGES}


@dataclass
class RunConfig:
    schema_version: int = SCHEMA_VERSION
    seed: int = 0
    preset: str = "desk"
    schema: str = "desk-8"
    corpus: dict = field(default_factory=dict)
    vision: dict = field(default_factory=dict)
    text: dict = field(default_factory=dict)
    training: dict = field(default_factory=_default_training)
    evaluation: dict = field(default_factory=dict)
    extraction: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        validate(d)
        d = copy.deepcopy(d)
        training = _default_training()
        for stage, over in d.pop("training", {}).items():
            training[stage].update(over)
        return cls(training=training, **d)

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            d = json.loads(path.read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from None
        return cls.from_dict(d)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    # --- typed views -----------------------------------------------------------

    def synth_config(self) -> SynthConfig:
        kw = {k: (tuple(v) if isinstance(v, list) else v) for k, v in self.corpus.items() if k != "n_studies"}
        return SynthConfig(**kw)

    @property
    def n_studies(self) -> int:
        return self.corpus.get("n_studies", 500)

    def vision_config(self) -> VisionEncoderConfig:
        return VisionEncoderConfig(**self.vision)

    def text_config(self) -> TextEncoderConfig:
        return TextEncoderConfig(**self.text)

    def training_config(self, stage: str) -> TrainingConfig:
        return TrainingConfig(stage=stage, seed=self.seed, **self.training[stage])

    def eval_option(self, key: str):
        defaults = {"split": "test", "prompt_index": 3, "threshold": 0.5, "recall_ks": [1, 5, 10, 50, 100]}
        return self.evaluation.get(key, defaults[key])


def validate(d) -> None:
    """Raise ConfigError naming the offending key path."""
    try:
        jsonschema.validate(d, JSON_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config error at {where}: {exc.message}") from None
    vision = d.get("vision", {})
    if "channels_per_stage" in vision and "blocks_per_stage" in vision and len(
        vision["channels_per_stage"]
    ) != len(vision["blocks_per_stage"]):
        raise ConfigError("config error at vision: channels_per_stage and blocks_per_stage differ in length")
