"""Run directory bookkeeping.

Each stage writes its files into the run directory and registers them in
``manifest.json`` together with the config hash and seed that produced them. Later
stages load through the store, which refuses stale or missing inputs.
"""
import json
import logging
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional

import pandas as pd

from .config import PATHS
from .errors import ConfigHashMismatchError, UpstreamArtifactError

logger = logging.getLogger(__name__)

FLOAT_FORMAT = '%.17g'


class ArtifactStore:
    def __init__(self, run_dir, config_hash: str, seed: int, force: bool = False):
        self.run_dir = Path(run_dir)
        self.run_dir.mkdir(parents=True, exist_ok=True)
        self.config_hash = config_hash
        self.seed = seed
        self.force = force
        self.manifest_path = self.run_dir / PATHS['manifest']
        self.manifest = self._read_manifest()

    def _read_manifest(self) -> Dict[str, Any]:
        if self.manifest_path.exists():
            return json.loads(self.manifest_path.read_text())
        return {'stages': {}}

    def _write_manifest(self):
        self.manifest_path.write_text(json.dumps(self.manifest, indent=2, sort_keys=True))

    def path(self, name: str) -> Path:
        return self.run_dir / name

    def require(self, stage: str, producer: Optional[str] = None) -> Dict[str, Any]:
        """Manifest entry of an upstream stage, checked against the current config hash"""
        entry = self.manifest['stages'].get(stage)
        if entry is None:
            raise UpstreamArtifactError(stage, producer or stage)
        if entry['config_hash'] != self.config_hash:
            if not self.force:
                raise ConfigHashMismatchError(stage, self.config_hash, entry['config_hash'])
            logger.warning(f"Using stage '{stage}' produced under config {entry['config_hash']} (--force)")
        for name in entry['files']:
            if not self.path(name).exists():
                raise UpstreamArtifactError(name, producer or stage)
        return entry

    def record(self, stage: str, files: List[str], wall_time_s: float, extra: Optional[Dict] = None):
        self.manifest['stages'][stage] = {
            'config_hash': self.config_hash,
            'seed': self.seed,
            'files': sorted(files),
            'wall_time_s': wall_time_s,
            'finished_at': datetime.now().isoformat(timespec='seconds'),
            **(extra or {})
        }
        self._write_manifest()
        logger.info(f"Stage '{stage}' recorded {len(files)} file(s) in {wall_time_s:.1f}s")

    def wall_time(self, stage: str) -> float:
        return float(self.manifest['stages'].get(stage, {}).get('wall_time_s', 0.0))

    def write_frame(self, name: str, frame: pd.DataFrame, stamp: bool = True) -> str:
        """CSV with the config hash and seed as leading columns"""
        frame = frame.copy()
        if stamp:
            frame.insert(0, 'seed', self.seed)
            frame.insert(0, 'config_hash', self.config_hash)
        frame.to_csv(self.path(name), index=False, float_format=FLOAT_FORMAT)
        return name

    def read_frame(self, name: str) -> pd.DataFrame:
        return pd.read_csv(self.path(name))

    def write_json(self, name: str, payload: Dict, stamp: bool = True) -> str:
        if stamp:
            payload = {'config_hash': self.config_hash, 'seed': self.seed, **payload}
        self.path(name).write_text(json.dumps(payload, indent=2, sort_keys=True))
        return name

    def read_json(self, name: str) -> Dict:
        return json.loads(self.path(name).read_text())
