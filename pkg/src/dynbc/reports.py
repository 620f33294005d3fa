"""Report records shared across modules, plus canonical JSON serialization.

Reports are plain dataclasses with an ``as_dict`` view; JSON output is
canonical (sorted keys, fixed indentation, trailing newline) so identical
inputs produce byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

__all__ = [
    "ProbeReport",
    "DefectReport",
    "canonical_json_bytes",
    "write_json",
    "content_hash",
]


@dataclass
class ProbeReport:
    """Outcome of a randomized inequality probe.

    ``max_ratio`` is the empirical sup of LHS/RHS over the sampled inputs;
    the probe passes when it stays at or below ``tolerance``.
    """

    name: str
    trials: int
    max_ratio: float
    argmax_input_id: int
    tolerance: float
    passed: bool
    details: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        out = {
            "name": self.name,
            "trials": self.trials,
            "max_ratio": self.max_ratio,
            "argmax_input_id": self.argmax_input_id,
            "tolerance": self.tolerance,
            "pass": self.passed,
        }
        if self.details:
            out["details"] = self.details
        return out


@dataclass
class DefectReport:
    """Outcome of a qualitative-property check on a computed solution."""

    name: str
    defect: float
    tolerance: float
    n_samples: int
    passed: bool
    details: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        out = {
            "name": self.name,
            "defect": self.defect,
            "tolerance": self.tolerance,
            "n_samples": self.n_samples,
            "pass": self.passed,
        }
        if self.details:
            out["details"] = self.details
        return out


def canonical_json_bytes(obj) -> bytes:
    return (json.dumps(obj, sort_keys=True, indent=2) + "\n").encode("utf-8")


def write_json(path, obj) -> bytes:
    data = canonical_json_bytes(obj)
    with open(path, "wb") as fh:
        fh.write(data)
    return data


def content_hash(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()
