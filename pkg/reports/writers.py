from __future__ import annotations

import hashlib
import io
import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

from utils.run_stamp import run_stamp
from utils.settings import TOOL_NAME, TOOL_VERSION

BASE_DIR = Path(__file__).resolve().parents[1]
RUNS_DIR = BASE_DIR / "runs"
FLOAT_FORMAT = "%.17g"
MANIFEST_NAME = "manifest.json"


def _clean(value: Any) -> Any:
    """JSON-safe copy: numpy scalars and arrays become Python values, non-finite floats become null."""
    if isinstance(value, dict):
        return {str(key): _clean(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(item) for item in value]
    if isinstance(value, np.ndarray):
        return _clean(value.tolist())
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, Path):
        return str(value)
    return value


def to_json_text(payload: Any) -> str:
    return json.dumps(_clean(payload), indent=2, sort_keys=True) + "\n"


def _atomic_write(path: Path | str, data: bytes) -> str:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    temp = target.with_name(f".{target.name}.tmp")
    try:
        with open(temp, "wb") as handle:
            handle.write(data)
            handle.flush()
            os.fsync(handle.fileno())
        os.replace(temp, target)
    except OSError:
        if temp.exists():
            temp.unlink()
        raise
    return str(target)


def write_json(path: Path | str, payload: Any) -> str:
    return _atomic_write(path, to_json_text(payload).encode("utf-8"))


def write_frame_csv(path: Path | str, frame: pd.DataFrame) -> str:
    buffer = io.StringIO()
    frame.to_csv(buffer, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return _atomic_write(path, buffer.getvalue().encode("utf-8"))


def write_bytes(path: Path | str, data: bytes) -> str:
    return _atomic_write(path, data)


def parameter_digest(parameters: Dict[str, Any]) -> str:
    canonical = json.dumps(_clean(parameters), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest().upper()


def default_run_dir(command: str, parameters: Dict[str, Any], stamp: Optional[str] = None) -> Path:
    return RUNS_DIR / f"{command}-{stamp or run_stamp()}-{parameter_digest(parameters)[:8]}"


@dataclass
class RunManifest:
    command: str
    inputs: Dict[str, str]
    parameters: Dict[str, Any]
    seed: Optional[int]
    duration_seconds: float = 0.0
    outputs: List[str] = field(default_factory=list)
    tool: str = TOOL_NAME
    tool_version: str = TOOL_VERSION

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def write(self, run_dir: Path | str) -> str:
        missing = [name for name in self.outputs if not (Path(run_dir) / name).exists()]
        if missing:
            raise RuntimeError(f"manifest names outputs that were not written: {', '.join(missing)}")
        path = write_json(Path(run_dir) / MANIFEST_NAME, self.to_dict())
        logging.info(f"Run manifest written to {path}")
        return path

    @classmethod
    def load(cls, path: Path | str) -> "RunManifest":
        manifest_path = Path(path)
        if manifest_path.is_dir():
            manifest_path = manifest_path / MANIFEST_NAME
        if not manifest_path.exists():
            raise FileNotFoundError(f"Run manifest not found: {manifest_path}")
        data = json.loads(manifest_path.read_text(encoding="utf-8"))
        known = {name: data[name] for name in cls.__dataclass_fields__ if name in data}
        return cls(**known)
