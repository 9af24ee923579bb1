"""Run configuration: JSON file, RECENGINE_* environment overrides, command-line flags."""
from __future__ import annotations

import copy
import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path
from typing import Optional

from .models.scorers import SCORERS

ENV_PREFIX = "RECENGINE_"
BUILTIN_PREFIX = "builtin:"


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """Everything a run needs. Relative input paths resolve against ``base_dir``."""

    seed: int = 0
    log: Optional[str] = None
    synthetic: object = None  # path or inline dict
    embeddings: Optional[str] = None
    model: Optional[str] = None
    output_dir: str = "peerrec-out"
    train_end_day: float = 26.0
    validation_end_day: float = 33.0
    test_end_day: float = 40.0
    scorer: str = "MLP"
    baselines: list = field(default_factory=lambda: ["PeopleYouKnow", "MostInits", "Random"])
    feature_dim: int = 768
    feature_blocks: str = "ANT"
    mlp: dict = field(default_factory=dict)
    coverage_authors: int = 1000
    k: int = 5
    cap: int = 10
    batch_id: str = "batch-1"
    n_participants: int = 50
    previous_manifests: list = field(default_factory=list)
    pre_weeks: float = 5.0
    post_weeks: float = 13.0
    threads: Optional[int] = None
    base_dir: str = "."

    def resolve(self, p):
        if p is None:
            return None
        p = Path(p)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def validate(self, need_log=False):
        if not self.train_end_day < self.validation_end_day < self.test_end_day:
            raise ConfigError("train_end_day < validation_end_day < test_end_day is required")
        if self.scorer not in SCORERS:
            raise ConfigError(f"unknown scorer {self.scorer!r}; choose from {sorted(SCORERS)}")
        for b in self.baselines:
            if b not in SCORERS or b in ("MLP", "MF"):
                raise ConfigError(f"baseline {b!r} is not a training-free scorer")
        for name in ("log", "embeddings", "model"):
            p = getattr(self, name)
            if p is not None and not self.resolve(p).is_file():
                raise ConfigError(f"--{name}: file not found: {self.resolve(p)}")
        if isinstance(self.synthetic, str) and not self.resolve(self.synthetic).is_file():
            raise ConfigError(f"--synthetic: file not found: {self.resolve(self.synthetic)}")
        for p in self.previous_manifests:
            if not self.resolve(p).is_file():
                raise ConfigError(f"previous manifest not found: {self.resolve(p)}")
        if need_log and self.log is None and self.synthetic is None:
            raise ConfigError("--log is required (or configure a synthetic log)")
        if self.k < 1 or self.cap < 1 or self.feature_dim < 1:
            raise ConfigError("k, cap and feature_dim must be >= 1")
        if self.threads is not None and self.threads < 1:
            raise ConfigError("--threads must be >= 1")
        return self

    def to_dict(self):
        d = asdict(self)
        d.pop("base_dir")
        return d

    def digest(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()


_FIELDS = {f.name: f for f in fields(RunConfig)}


def _coerce(raw):
    """JSON value if the string parses as one, else the bare string."""
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def builtin_config_path(name):
    return resources.files("peerrec") / "data" / f"{name}.json"


def load_config(path=None, overrides=None, environ=None) -> RunConfig:
    """File values, then RECENGINE_<FIELD> environment values, then ``overrides``."""
    data, base = {}, "."
    if path is not None:
        if str(path).startswith(BUILTIN_PREFIX):
            p = builtin_config_path(str(path)[len(BUILTIN_PREFIX):])
        else:
            p = Path(path)
        try:
            text = p.read_text(encoding="utf-8")
        except (FileNotFoundError, IsADirectoryError):
            raise ConfigError(f"--config: file not found: {path}") from None
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"--config: {path}: invalid JSON ({e})") from None
        if not isinstance(data, dict):
            raise ConfigError(f"--config: {path}: expected a JSON object")
        base = str(Path(str(p)).parent)
    env = os.environ if environ is None else environ
    for key, raw in env.items():
        if key.startswith(ENV_PREFIX):
            name = key[len(ENV_PREFIX):].lower()
            if name in _FIELDS and name != "base_dir":
                data[name] = _coerce(raw)
    for k, v in (overrides or {}).items():
        if v is not None:
            data[k] = v
    unknown = set(data) - set(_FIELDS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    data = copy.deepcopy(data)
    # command-line paths are relative to the working directory
    for k in ("log", "embeddings", "model", "synthetic"):
        v = (overrides or {}).get(k)
        if isinstance(v, str):
            data[k] = str(Path(v).resolve())
    try:
        cfg = RunConfig(**data, base_dir=base)
    except TypeError as e:
        raise ConfigError(str(e)) from None
    return cfg


def file_sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
