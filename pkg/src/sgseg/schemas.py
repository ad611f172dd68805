"""Schemas for every file artifact the harness writes.

JSON artifacts carry a JSON Schema (draft 2020-12) here; CSV artifacts are
documented by their column tuples (re-exported from the producing modules).
Tests validate real artifacts against these schemas.
"""

from __future__ import annotations

from .ablate import ABLATION_CSV_COLUMNS
from .metrics import PER_CASE_CSV_COLUMNS
from .train import TRAIN_LOG_COLUMNS

__all__ = [
    "ABLATION_CSV_COLUMNS",
    "PER_CASE_CSV_COLUMNS",
    "TRAIN_LOG_COLUMNS",
    "MANIFEST_SCHEMA",
    "METRICS_JSON_SCHEMA",
    "GRADCHECK_JSON_SCHEMA",
    "ABLATION_SUMMARY_SCHEMA",
]

_NULLABLE_NUMBER = {"type": ["number", "null"]}

MANIFEST_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["format_version", "spacing", "master_seed", "phantom_config", "samples"],
    "properties": {
        "format_version": {"const": 1},
        "spacing": {
            "type": "array",
            "items": {"type": "number", "exclusiveMinimum": 0},
            "minItems": 3,
            "maxItems": 3,
        },
        "master_seed": {"type": "integer"},
        "phantom_config": {"type": "object"},
        "samples": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "split", "seed", "image", "label"],
                "properties": {
                    "id": {"type": "string"},
                    "split": {"enum": ["train", "val", "test"]},
                    "seed": {"type": "integer"},
                    "image": {"type": "string"},
                    "label": {"type": "string"},
                },
            },
        },
    },
}

_CLASS_AGGREGATE = {
    "type": "object",
    "required": ["dsc_mean", "dsc_std", "asd_mean", "asd_std", "asd_undefined_cases", "num_cases"],
    "properties": {
        "dsc_mean": _NULLABLE_NUMBER,
        "dsc_std": _NULLABLE_NUMBER,
        "asd_mean": _NULLABLE_NUMBER,
        "asd_std": _NULLABLE_NUMBER,
        "asd_undefined_cases": {"type": "integer", "minimum": 0},
        "num_cases": {"type": "integer", "minimum": 0},
    },
}

METRICS_JSON_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["classes", "aggregate"],
    "properties": {
        "classes": {"type": "array", "items": {"type": "integer"}},
        "aggregate": {
            "type": "object",
            "additionalProperties": _CLASS_AGGREGATE,
        },
    },
}

GRADCHECK_JSON_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["tolerance", "step", "passed", "components"],
    "properties": {
        "tolerance": {"type": "number"},
        "step": {"type": "number"},
        "passed": {"type": "boolean"},
        "components": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["name", "passed", "max_rel_error", "per_param"],
                "properties": {
                    "name": {"type": "string"},
                    "passed": {"type": "boolean"},
                    "max_rel_error": {"type": "number"},
                    "per_param": {
                        "type": "object",
                        "additionalProperties": {"type": "number"},
                    },
                },
            },
        },
    },
}

_DELTA_BLOCK = {
    "type": "object",
    "required": ["per_seed", "mean", "consistent_sign"],
    "properties": {
        "per_seed": {"type": "object", "additionalProperties": _NULLABLE_NUMBER},
        "mean": _NULLABLE_NUMBER,
        "consistent_sign": {"type": "boolean"},
    },
}

ABLATION_SUMMARY_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["blurry_class", "seeds", "per_config", "deltas"],
    "properties": {
        "blurry_class": {"type": "integer"},
        "seeds": {"type": "array", "items": {"type": "integer"}},
        "per_config": {
            "type": "object",
            "additionalProperties": {
                "type": "object",
                "additionalProperties": {
                    "type": "object",
                    "properties": {
                        "dsc_mean": _NULLABLE_NUMBER,
                        "dsc_std": _NULLABLE_NUMBER,
                        "asd_mean": _NULLABLE_NUMBER,
                        "asd_std": _NULLABLE_NUMBER,
                    },
                },
            },
        },
        "deltas": {
            "type": "object",
            "required": ["sg_effect_dsc_blurry", "soft_contour_effect_asd_blurry"],
            "properties": {
                "sg_effect_dsc_blurry": _DELTA_BLOCK,
                "soft_contour_effect_asd_blurry": _DELTA_BLOCK,
            },
        },
    },
}
