# manifest_manager.py
import logging
import os
import time
from datetime import datetime, timezone

from utils import atomic_write_json, file_sha256, load_json_safe

log = logging.getLogger("sandwich.manifest")

MANIFEST_NAME = "manifest.json"


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


class ManifestManager:
    """
    manifest.json of one run directory. Every file written into the directory
    is listed with its sha256 when the run is finished.
    """

    def __init__(self, run_dir: str, subcommand: str, config: dict, schema_version: int, artifact_version: str):
        self.run_dir = run_dir
        self.path = os.path.join(run_dir, MANIFEST_NAME)
        os.makedirs(run_dir, exist_ok=True)
        self._t0 = time.monotonic()
        self._data = {
            "schema_version": schema_version,
            "artifact_version": artifact_version,
            "subcommand": subcommand,
            "config": config,
            "started_at": _now(),
            "finished_at": None,
            "elapsed_s": None,
            "files": {},
            "verdict": None,
            "diagnostics": {},
        }
        self._save()

    def all(self):
        return self._data

    def file_path(self, name: str) -> str:
        return os.path.join(self.run_dir, name)

    def add_diagnostic(self, key: str, value):
        self._data.setdefault("diagnostics", {})[key] = value
        self._save()

    def refresh_files(self):
        files = {}
        for name in sorted(os.listdir(self.run_dir)):
            p = os.path.join(self.run_dir, name)
            if name == MANIFEST_NAME or name.startswith(".tmp_") or not os.path.isfile(p):
                continue
            files[name] = file_sha256(p)
        self._data["files"] = files

    def finish(self, verdict: str):
        self._data["verdict"] = verdict
        self._data["finished_at"] = _now()
        self._data["elapsed_s"] = round(time.monotonic() - self._t0, 3)
        self.refresh_files()
        self._save()
        log.info("manifest %s: verdict %s, %d files", self.path, verdict, len(self._data["files"]))

    def _save(self):
        try:
            atomic_write_json(self.path, self._data)
        except Exception:
            log.exception("ManifestManager _save failed")


def read_manifest(run_dir: str) -> dict:
    return load_json_safe(os.path.join(run_dir, MANIFEST_NAME), {})


def verify_files(manifest: dict, run_dir: str) -> list:
    """Names whose current digest differs from the manifest (or that are missing)."""
    bad = []
    for name, digest in manifest.get("files", {}).items():
        p = os.path.join(run_dir, name)
        if not os.path.isfile(p) or file_sha256(p) != digest:
            bad.append(name)
    return bad
