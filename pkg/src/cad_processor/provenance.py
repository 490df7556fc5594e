"""Input hashing and the two append-only run logs."""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

CHUNK_SIZE = 65536
EXECUTION_LOG_NAME = "cad_processor_execution.log"
TRACE_LOG_NAME = "cad_processor.log"
STATUS_OK = "OK"
STATUS_ERROR = "ERROR"
UNAVAILABLE = "-"

_HEX64 = re.compile(r"[0-9a-f]{64}")


@dataclass(frozen=True)
class RunRecord:
    status: str
    input_name: str
    output_name: str
    input_sha256_hex: str = UNAVAILABLE
    sheet_name: str = UNAVAILABLE
    header_row_0based: int = -1

    def __post_init__(self):
        if self.status == STATUS_OK and not _HEX64.fullmatch(self.input_sha256_hex):
            raise ValueError(f"not a lowercase SHA-256 hex digest: {self.input_sha256_hex!r}")


def sha256_file(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(CHUNK_SIZE), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _append(path: str | Path, text: str) -> None:
    with open(path, "a", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _field(value: str) -> str:
    # Keep the record one line with exactly four fields.
    return (value or UNAVAILABLE).replace("\t", " ").replace("\n", " ")


def append_execution_log(record: RunRecord, log_path: str | Path) -> None:
    """Append ``status<TAB>input<TAB>output<TAB>sha256`` as a single line."""
    fields = (record.status, record.input_name, record.output_name, record.input_sha256_hex)
    _append(log_path, "\t".join(_field(f) for f in fields) + "\n")


def trace(message: str, log_path: str | Path) -> None:
    stamp = datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
    for line in str(message).splitlines() or [""]:
        _append(log_path, f"{stamp} {line}\n")
