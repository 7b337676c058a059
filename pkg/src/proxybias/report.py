"""Experiment report schema, canonical serialization, and manifests.

Reports are plain dataclasses that round-trip losslessly through JSON.
Hashes are computed over a canonical byte form with runtime fields
stripped, so identical configs and seeds produce identical manifests no
matter how long the run took.
"""
from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import asdict, dataclass, field

from .util import atomic_write_text

SCHEMA_VERSION = "1.0"
RUNTIME_KEYS = ("runtime_s",)


@dataclass
class MethodRecord:
    """One method's results at one labeled-sample size."""

    method: str
    J: int
    beta_hat: float
    se: float
    se_kind: str
    seed: int
    gamma: float = None
    gamma_se: float = None
    gamma_p: float = None
    oof_mse: float = None
    accuracy: float = None
    runtime_s: float = 0.0
    schema_version: str = SCHEMA_VERSION

    def __post_init__(self):
        for name in ("beta_hat", "se", "gamma", "gamma_se", "gamma_p", "oof_mse", "accuracy"):
            value = getattr(self, name)
            if value is not None and not math.isfinite(float(value)):
                raise ValueError(f"record field {name} must be finite, got {value}")


@dataclass
class ExperimentReport:
    """Serializable container for one CLI command's outputs."""

    command: str
    seed: int
    config: dict = field(default_factory=dict)
    records: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)
    runtime_s: float = 0.0
    schema_version: str = SCHEMA_VERSION

    def to_dict(self) -> dict:
        payload = asdict(self)
        payload["records"] = [asdict(r) for r in self.records]
        return payload

    @classmethod
    def from_dict(cls, payload: dict) -> "ExperimentReport":
        records = [MethodRecord(**r) for r in payload.get("records", [])]
        return cls(
            command=payload["command"],
            seed=payload["seed"],
            config=payload.get("config", {}),
            records=records,
            tables=payload.get("tables", {}),
            meta=payload.get("meta", {}),
            runtime_s=payload.get("runtime_s", 0.0),
            schema_version=payload.get("schema_version", SCHEMA_VERSION),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2, allow_nan=False)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentReport":
        return cls.from_dict(json.loads(text))


def _strip_runtime(obj):
    if isinstance(obj, dict):
        return {
            k: _strip_runtime(v) for k, v in obj.items() if k not in RUNTIME_KEYS
        }
    if isinstance(obj, list):
        return [_strip_runtime(v) for v in obj]
    return obj


def canonical_bytes(payload: dict) -> bytes:
    """Deterministic byte form: runtime fields removed, keys sorted."""
    return json.dumps(
        _strip_runtime(payload), sort_keys=True, separators=(",", ":"), allow_nan=False
    ).encode()


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def file_sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_report(report: ExperimentReport, out_dir: str, extra_files=()) -> dict:
    """Write report.json plus manifest.json; returns the manifest dict.

    The manifest hashes the canonical (runtime-stripped) report and the
    config, then records a content hash for every extra file.
    """
    os.makedirs(out_dir, exist_ok=True)
    report_path = os.path.join(out_dir, "report.json")
    atomic_write_text(report_path, report.to_json() + "\n")
    manifest = {
        "schema_version": report.schema_version,
        "command": report.command,
        "seed": report.seed,
        "config_hash": sha256_hex(canonical_bytes(report.config)),
        "report_hash": sha256_hex(canonical_bytes(report.to_dict())),
        "files": {name: file_sha256(os.path.join(out_dir, name)) for name in extra_files},
    }
    atomic_write_text(
        os.path.join(out_dir, "manifest.json"),
        json.dumps(manifest, sort_keys=True, indent=2) + "\n",
    )
    return manifest
