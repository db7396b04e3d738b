"""Flat key-value configuration files.

Format: one `key = value` per line, `#` starts a comment anywhere, blank
lines ignored. Keys are dotted paths from the schema below; unknown keys are
rejected so a typo cannot silently fall back to a default. Values are typed
(int / float / bool / str) and range-checked. CLI `--set key=value` flags
override file values. Paths named by data.* must exist at load time.
"""

import hashlib
import json
import os

from .errors import ConfigError, DataError

_SOLVER_METHODS = ("euler", "dopri5", "dopri5-fixed", "dopri5-adaptive")

# key -> (type tag, default). None default = unset (allowed for paths/chains).
SCHEMA = {
    "model.depth": ("int", 2),
    "model.width": ("int", 64),
    "model.ratio_c": ("int", 4),
    "model.L_max": ("int", 50),
    "model.D": ("int", 64),
    "model.attention": ("bool", False),
    "model.embed_scale": ("float", 10.0),
    "model.embed_rank": ("int", 4),
    "model.decoder_hidden": ("int", 64),
    "train.steps": ("int", 2000),
    "train.batch": ("int", 64),
    "train.lr": ("float", 1e-3),
    "train.lr_min": ("float", 2e-4),
    "train.warmup": ("int", 100),
    "train.clip": ("float", 1.0),
    "train.seed": ("int", 0),
    "train.val_every": ("int", 100),
    "train.weight_decay": ("float", 0.01),
    "solver.method": ("str", "dopri5"),
    "solver.steps": ("int", 25),
    "solver.atol": ("float", 1e-6),
    "solver.rtol": ("float", 1e-6),
    "data.train_path": ("str", None),
    "data.val_path": ("str", None),
    "chains": ("str", None),
    "reflow.pairs": ("int", 256),
}

_POSITIVE_INT = (
    "model.depth",
    "model.width",
    "model.ratio_c",
    "model.L_max",
    "model.D",
    "model.decoder_hidden",
    "train.batch",
    "train.val_every",
)
_NONNEG_INT = ("model.embed_rank", "train.steps", "train.warmup", "train.seed", "reflow.pairs")
_POSITIVE_FLOAT = ("train.lr", "train.clip", "solver.atol", "solver.rtol", "model.embed_scale")
_NONNEG_FLOAT = ("train.lr_min", "train.weight_decay")


def _parse_value(key, text):
    kind = SCHEMA[key][0]
    text = text.strip()
    try:
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        if kind == "bool":
            low = text.lower()
            if low not in ("true", "false"):
                raise ValueError(text)
            return low == "true"
        return text
    except ValueError:
        raise ConfigError(f"bad {kind} value for {key}: {text!r}") from None


class Config:
    """Resolved, validated configuration: dotted key -> typed value."""

    def __init__(self, values):
        self._values = dict(values)

    def __getitem__(self, key):
        return self._values[key]

    def get(self, key, default=None):
        return self._values.get(key, default)

    def require(self, key):
        val = self._values.get(key)
        if val is None:
            raise ConfigError(f"config key {key} must be set for this command")
        return val

    def to_dict(self):
        return dict(self._values)

    def hash(self):
        blob = json.dumps(self._values, sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()


def parse_config_text(text, values=None):
    """Apply config lines on top of `values` (or the schema defaults)."""
    out = {k: v for k, (_, v) in SCHEMA.items()} if values is None else dict(values)
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.rstrip()!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        if key not in SCHEMA:
            raise ConfigError(f"line {lineno}: unknown config key: {key}")
        out[key] = _parse_value(key, val)
    return out


def _validate(values):
    for key in _POSITIVE_INT:
        if values[key] < 1:
            raise ConfigError(f"{key} must be >= 1, got {values[key]}")
    for key in _NONNEG_INT:
        if values[key] < 0:
            raise ConfigError(f"{key} must be >= 0, got {values[key]}")
    for key in _POSITIVE_FLOAT:
        if not values[key] > 0:
            raise ConfigError(f"{key} must be > 0, got {values[key]}")
    for key in _NONNEG_FLOAT:
        if values[key] < 0:
            raise ConfigError(f"{key} must be >= 0, got {values[key]}")
    if values["solver.method"] not in _SOLVER_METHODS:
        raise ConfigError(
            f"solver.method must be one of {', '.join(_SOLVER_METHODS)}, "
            f"got {values['solver.method']!r}"
        )
    if not 1 <= values["solver.steps"] <= 100:
        raise ConfigError(f"solver.steps must be in [1, 100], got {values['solver.steps']}")
    if values["model.D"] % values["model.ratio_c"] != 0:
        raise ConfigError(
            f"model.D ({values['model.D']}) must be divisible by "
            f"model.ratio_c ({values['model.ratio_c']})"
        )
    if values["chains"] is not None:
        parse_chains_value(values["chains"])


def load_config(path=None, overrides=None, check_paths=True):
    """Build a Config from an optional file plus `key=value` override strings.

    Args:
        path: config file, or None for pure defaults + overrides.
        overrides: iterable of "key=value" strings (highest precedence).
        check_paths: verify files named by data.* exist (DataError if not).
    """
    values = {k: v for k, (_, v) in SCHEMA.items()}
    if path is not None:
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        with open(path, "r", encoding="utf-8") as f:
            values = parse_config_text(f.read(), values)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override must look like key=value, got {item!r}")
        values = parse_config_text(item, values)
    _validate(values)
    if check_paths:
        for key in ("data.train_path", "data.val_path"):
            p = values[key]
            if p is not None and not os.path.exists(p):
                raise DataError(f"{key} does not exist: {p}")
    return Config(values)


def parse_chains_value(text):
    """Parse the chains key: comma-separated name:length pairs, e.g. "A:30,B:24"."""
    chains = []
    seen = set()
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        name, sep, length = part.partition(":")
        name = name.strip()
        if not sep or not name:
            raise ConfigError(f"chains entry must be name:length, got {part!r}")
        if name in seen:
            raise ConfigError(f"duplicate chain name: {name}")
        seen.add(name)
        try:
            l_max = int(length.strip())
        except ValueError:
            raise ConfigError(f"bad chain length in {part!r}") from None
        if l_max < 1:
            raise ConfigError(f"chain length must be >= 1, got {l_max}")
        chains.append((name, l_max))
    if not chains:
        raise ConfigError("chains is set but names no chains")
    return chains
