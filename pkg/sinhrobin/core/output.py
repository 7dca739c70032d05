"""Deterministic CSV and JSON writers for run artifacts."""

import csv
import json
import logging
import math
import threading
from pathlib import Path
from typing import Any, Dict, Iterable, List, Sequence

import numpy as np


def format_value(value: Any) -> str:
    """Round-trip exact text for floats; plain text otherwise."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        return "{:.17g}".format(value)
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if value is None:
        return ""
    return str(value)


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else str(value)
    return value


class OutputWriter:
    """Writes artifacts under one directory, each carrying the run metadata."""

    def __init__(self, output_dir: str, metadata: Dict[str, Any]):
        self.output_dir = Path(output_dir)
        self.metadata = dict(metadata)
        self.files_created: List[str] = []
        self._lock = threading.Lock()

    def _path(self, name: str) -> Path:
        self.output_dir.mkdir(parents=True, exist_ok=True)
        return self.output_dir / name

    def write_csv(self, name: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
        """Write '# key=value' metadata lines, the header row, then the rows."""
        path = self._path(name)
        with self._lock, open(path, "w", encoding="utf-8", newline="") as f:
            for key in sorted(self.metadata):
                f.write(f"# {key}={format_value(self.metadata[key])}\n")
            writer = csv.writer(f, delimiter=",", lineterminator="\n")
            writer.writerow(header)
            count = 0
            for row in rows:
                writer.writerow([format_value(v) for v in row])
                count += 1
            self.files_created.append(str(path))
        logging.info(f"Wrote {count} rows to {path}")
        return str(path)

    def write_json(self, name: str, payload: Dict[str, Any]) -> str:
        """Write the payload with the metadata under the 'metadata' key."""
        path = self._path(name)
        document = {"metadata": self.metadata, **payload}
        with self._lock, open(path, "w", encoding="utf-8") as f:
            json.dump(_jsonable(document), f, indent=2, sort_keys=True, ensure_ascii=False)
            f.write("\n")
            self.files_created.append(str(path))
        logging.info(f"Wrote {path}")
        return str(path)
