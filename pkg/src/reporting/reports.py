"""Report files and the run manifest embedded in them"""

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import pandas as pd

from config.errors import ConfigurationError
from config.settings import REPORT_DECIMALS, REPORT_FORMATS, TOOL_VERSION


def file_digest(path) -> str:
    """SHA-256 hex digest of an input file"""
    sha = hashlib.sha256()
    try:
        with open(path, "rb") as f:
            for block in iter(lambda: f.read(65536), b""):
                sha.update(block)
    except OSError as e:
        raise ConfigurationError(f"cannot read {path}: {e}") from e
    return sha.hexdigest()


@dataclass
class RunManifest:
    """Everything needed to reproduce a report set. Digests are taken before any computation."""

    command: str
    inputs: Dict[str, str] = field(default_factory=dict)
    digests: Dict[str, str] = field(default_factory=dict)
    seed: Optional[int] = None
    alpha: Optional[float] = None
    replications: Optional[int] = None
    scenarios: List[str] = field(default_factory=list)
    parameters: Dict[str, object] = field(default_factory=dict)
    version: str = TOOL_VERSION

    @classmethod
    def for_inputs(cls, command: str, inputs: Dict[str, object], **kwargs) -> "RunManifest":
        """Manifest for a run, digesting every input that was given"""
        paths = {name: str(path) for name, path in inputs.items() if path is not None}
        digests = {name: file_digest(path) for name, path in paths.items()}
        return cls(command=command, inputs=paths, digests=digests, **kwargs)

    def to_dict(self) -> dict:
        """Manifest as a plain dict"""
        return asdict(self)

    def comment_lines(self) -> List[str]:
        """Comment lines that head every CSV report"""
        payload = json.dumps(self.to_dict(), sort_keys=True)
        return [f"# manifest: {payload}"]


def _json_ready(frame: pd.DataFrame) -> List[dict]:
    """Rows as dicts with missing values as None"""
    return frame.astype(object).where(frame.notna(), None).to_dict(orient="records")


def format_text(frame: pd.DataFrame, title: str = "", decimals: int = REPORT_DECIMALS) -> str:
    """Aligned table with fixed decimals; the machine-readable files keep full precision."""
    body = frame.to_string(index=False, float_format=lambda x: f"{x:.{decimals}f}", na_rep="n/a")
    if title:
        return f"{title}\n{'=' * len(title)}\n{body}\n"
    return f"{body}\n"


class ReportWriter:
    """Writes named tables in the requested format plus an aligned text copy"""

    def __init__(self, out_dir, fmt: str, manifest: RunManifest):
        if fmt not in REPORT_FORMATS:
            raise ConfigurationError(f"unknown report format '{fmt}' (expected one of: {', '.join(REPORT_FORMATS)})")
        self.logger = logging.getLogger(__name__)
        self.out_dir = Path(out_dir)
        self.fmt = fmt
        self.manifest = manifest
        self.written: List[Path] = []
        self.out_dir.mkdir(parents=True, exist_ok=True)

    def write_table(self, name: str, frame: pd.DataFrame, title: str = "") -> List[Path]:
        """Write one table in the configured format plus its aligned text copy"""
        paths = []
        if self.fmt == "csv":
            paths.append(self._write_csv(name, frame))
        elif self.fmt == "json":
            paths.append(self._write_json(name, frame))
        paths.append(self._write_text(name, frame, title or name.replace("_", " ").title()))
        self.written.extend(paths)
        return paths

    def write_json(self, name: str, payload: dict) -> Path:
        """Write a JSON payload next to the tables"""
        path = self.out_dir / f"{name}.json"
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            json.dump(payload, f, indent=2, sort_keys=True)
            f.write("\n")
        self.written.append(path)
        return path

    def write_manifest(self) -> Path:
        """Write manifest.json for the run"""
        path = self.write_json("manifest", self.manifest.to_dict())
        self.logger.info(f"Wrote {len(self.written)} report file(s) to {self.out_dir}")
        return path

    def _write_csv(self, name: str, frame: pd.DataFrame) -> Path:
        """CSV table with the manifest as leading comments"""
        path = self.out_dir / f"{name}.csv"
        with open(path, "w", encoding="utf-8", newline="") as f:
            for line in self.manifest.comment_lines():
                f.write(line + "\n")
            frame.to_csv(f, index=False, lineterminator="\n")
        return path

    def _write_json(self, name: str, frame: pd.DataFrame) -> Path:
        """JSON table with the manifest embedded"""
        path = self.out_dir / f"{name}.json"
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            json.dump({"manifest": self.manifest.to_dict(), "rows": _json_ready(frame)}, f, indent=2)
            f.write("\n")
        return path

    def _write_text(self, name: str, frame: pd.DataFrame, title: str) -> Path:
        """Aligned text copy of a table"""
        path = self.out_dir / f"{name}.txt"
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(format_text(frame, title))
        return path


def read_report(path) -> pd.DataFrame:
    """Load a CSV or JSON report written by ReportWriter back into a frame."""
    path = Path(path)
    if path.suffix == ".json":
        with open(path, "r", encoding="utf-8") as f:
            return pd.DataFrame(json.load(f)["rows"])
    return pd.read_csv(path, comment="#")
