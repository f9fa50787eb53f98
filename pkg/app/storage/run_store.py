"""Output directory handler for run manifests, series and verdicts."""

import csv
import hashlib
import json
import math
import os
from typing import Dict, List, Optional

import config
from app.logger import default_logger as logger


def _jsonable(value):
    if isinstance(value, float) and not math.isfinite(value):
        return repr(value)
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if hasattr(value, "item") and not isinstance(value, (str, bytes)):
        return _jsonable(value.item())
    return value


def content_hash(text: str) -> str:
    """sha256 of the canonical config text."""
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


class RunStore:
    """Writes the artifacts of one run into its output directory."""

    def __init__(self, out_dir: str):
        self.out_dir = out_dir
        self._written: List[str] = []

    def open(self) -> "RunStore":
        """Create the output directory."""
        try:
            os.makedirs(self.out_dir, exist_ok=True)
        except OSError as e:
            logger.critical(f"Cannot create output directory {self.out_dir}: {e}")
            raise
        return self

    @property
    def written(self) -> List[str]:
        return list(self._written)

    def path(self, name: str) -> str:
        return os.path.join(self.out_dir, name)

    def _write_text(self, name: str, text: str) -> str:
        path = self.path(name)
        with open(path, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
        self._written.append(path)
        logger.info(f"Wrote {path}")
        return path

    def write_manifest(self, config_text: str, sections: Dict[str, object]) -> str:
        """Manifest: config, its content hash and derived sections (ledger, constants)."""
        manifest = {"config": config_text, "content_hash": content_hash(config_text)}
        manifest.update(sections)
        text = json.dumps(_jsonable(manifest), indent=2, sort_keys=True) + "\n"
        return self._write_text(config.MANIFEST_NAME, text)

    @staticmethod
    def series_name(kind: str, replica: Optional[int] = None, replicas: int = 1) -> str:
        suffix = f"_r{replica}" if replicas > 1 and replica is not None else ""
        return f"{config.SERIES_PREFIX}{kind}{suffix}.csv"

    def write_series(self, name: str, records: List[Dict[str, float]]) -> str:
        """One row per sample time; floats written with repr so they read back exactly."""
        if not records:
            raise ValueError("no records to write")
        columns = list(records[0].keys())
        path = self.path(name)
        with open(path, "w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(columns)
            for row in records:
                writer.writerow([repr(float(row[c])) for c in columns])
        self._written.append(path)
        logger.info(f"Wrote {path} ({len(records)} rows)")
        return path

    @staticmethod
    def read_series(path: str) -> List[Dict[str, float]]:
        with open(path, "r", encoding="utf-8", newline="") as handle:
            return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(handle)]

    def write_verdict(self, criterion: str, verdict: Dict[str, object]) -> str:
        text = json.dumps(_jsonable(verdict), indent=2, sort_keys=True) + "\n"
        return self._write_text(f"{config.VERDICT_PREFIX}{criterion}.json", text)

    def close(self):
        logger.debug(f"Closed run store {self.out_dir} ({len(self._written)} files)")

    def __enter__(self):
        return self.open()

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.close()
