# utils.py
import hashlib
import json
import os
import re
import shutil
import tempfile
import logging
from typing import Any

import numpy as np

log = logging.getLogger("sandwich.utils")


def normalize_key(s: str) -> str:
    """
    Normalizes a config key before lookup:
    - lower
    - camelCase -> snake_case (degreeCap -> degree_cap)
    - '-', '.', spaces -> '_'
    """
    if not s:
        return ""
    s = str(s).strip()
    s = re.sub(r"(?<=[a-z0-9])(?=[A-Z])", "_", s)
    s = s.lower()
    s = re.sub(r"[\s\-\.]+", "_", s)
    s = re.sub(r"_+", "_", s).strip("_")
    return s


def _json_default(o: Any):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.bool_):
        return bool(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def canonical_json(data: Any) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"), default=_json_default)


def digest_of(data: Any) -> str:
    return hashlib.sha256(canonical_json(data).encode("utf-8")).hexdigest()


def file_sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def load_json_safe(path: str, default: Any = None) -> Any:
    """Loads JSON from path; returns default when the file is missing or malformed."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except FileNotFoundError:
        return default
    except json.JSONDecodeError:
        log.exception("JSON decode error for %s", path)
        return default


def atomic_write_text(path: str, text: str):
    """
    Atomically writes text: temp file in the target directory, then move.
    """
    folder = os.path.dirname(os.path.abspath(path))
    os.makedirs(folder, exist_ok=True)
    tmp_fd, tmp_path = tempfile.mkstemp(prefix=".tmp_", dir=folder)
    os.close(tmp_fd)
    try:
        with open(tmp_path, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
        shutil.move(tmp_path, path)
    except Exception:
        log.exception("atomic write failed for %s", path)
        try:
            if os.path.exists(tmp_path):
                os.remove(tmp_path)
        except OSError:
            pass
        raise


def atomic_write_json(path: str, data: Any):
    text = json.dumps(data, ensure_ascii=False, indent=2, default=_json_default)
    atomic_write_text(path, text + "\n")
