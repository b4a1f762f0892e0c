"""
Artifact Store for the forecasting pipeline
Writes and reads the JSON and CSV artifacts every stage hands to the next
Implements atomic writes so an interrupted run never leaves a half-written file
"""
import hashlib
import json
import logging
import os
import shutil
import tempfile
from pathlib import Path
from typing import Any, Dict, Optional, Sequence

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

ARTIFACT_VERSION = "1.0"


class ArtifactError(Exception):
    """Raised when an artifact is missing, unreadable or incomplete"""
    pass


def _to_jsonable(obj: Any) -> Any:
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, (set, frozenset)):
        return sorted(obj)
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"Object of type {type(obj).__name__} is not JSON serializable")


def canonical_json(document: Dict[str, Any]) -> str:
    """Stable rendering: sorted keys, shortest round-trip floats, no NaN."""
    return json.dumps(document, sort_keys=True, indent=2, default=_to_jsonable, allow_nan=False)


def document_checksum(document: Dict[str, Any]) -> str:
    body = {k: v for k, v in document.items() if k != "checksum"}
    return hashlib.sha256(canonical_json(body).encode("utf-8")).hexdigest()


class ArtifactStore:
    def __init__(self, out_dir: str):
        self.out_dir = Path(out_dir)
        self.logger = logging.getLogger(__name__)

    def path(self, name: str) -> Path:
        return self.out_dir / name

    def exists(self, name: str) -> bool:
        return self.path(name).exists()

    def _atomic_write(self, name: str, text: str) -> Path:
        target = self.path(name)
        try:
            self.out_dir.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise ArtifactError(f"Cannot create output directory {self.out_dir}: {e}")

        temp_file = None
        try:
            with tempfile.NamedTemporaryFile(
                mode="w",
                dir=self.out_dir,
                prefix=f".{target.stem}_tmp_",
                suffix=target.suffix,
                delete=False,
                encoding="utf-8",
                newline="",
            ) as temp_file:
                temp_file.write(text)
                temp_file.flush()
                os.fsync(temp_file.fileno())
            shutil.move(temp_file.name, target)
        except OSError as e:
            if temp_file and Path(temp_file.name).exists():
                try:
                    os.unlink(temp_file.name)
                except OSError:
                    pass
            raise ArtifactError(f"Failed to write {target}: {e}")

        self.logger.info(f"Wrote {target}")
        return target

    def save_json(self, name: str, document: Dict[str, Any]) -> Path:
        """Write a JSON artifact with version and checksum fields."""
        doc = dict(document)
        doc.setdefault("version", ARTIFACT_VERSION)
        doc.pop("checksum", None)
        try:
            doc["checksum"] = document_checksum(doc)
            text = canonical_json(doc) + "\n"
        except (TypeError, ValueError) as e:
            raise ArtifactError(f"Cannot serialize {name}: {e}")
        return self._atomic_write(name, text)

    def load_json(self, name: str, required_keys: Sequence[str] = ()) -> Dict[str, Any]:
        """Load a JSON artifact; checksum mismatches warn, missing keys raise."""
        target = self.path(name)
        if not target.exists():
            raise ArtifactError(f"Missing artifact: {target}")
        try:
            with open(target, "r", encoding="utf-8") as f:
                doc = json.load(f)
        except (json.JSONDecodeError, OSError) as e:
            raise ArtifactError(f"Failed to load {target}: {e}")

        if not isinstance(doc, dict):
            raise ArtifactError(f"{target} is not a JSON object")
        missing_keys = [key for key in required_keys if key not in doc]
        if missing_keys:
            raise ArtifactError(f"{target} is missing required keys: {missing_keys}")

        stored = doc.get("checksum")
        if stored is not None:
            calculated = document_checksum(doc)
            if stored != calculated:
                self.logger.warning(f"Checksum mismatch in {target} (stored: {stored[:12]}, "
                                    f"calculated: {calculated[:12]})")
        return doc

    def save_csv(self, name: str, frame: pd.DataFrame) -> Path:
        text = frame.to_csv(index=False, lineterminator="\n")
        return self._atomic_write(name, text)

    def load_csv(self, name: str, required_columns: Optional[Sequence[str]] = None) -> pd.DataFrame:
        target = self.path(name)
        if not target.exists():
            raise ArtifactError(f"Missing artifact: {target}")
        try:
            frame = pd.read_csv(target, float_precision="round_trip")
        except (pd.errors.ParserError, pd.errors.EmptyDataError, OSError) as e:
            raise ArtifactError(f"Failed to load {target}: {e}")
        missing = [c for c in (required_columns or []) if c not in frame.columns]
        if missing:
            raise ArtifactError(f"{target} is missing required columns: {missing}")
        return frame
