"""Flat key=value run configuration with dotted namespaces.

Files look like::

    # comment
    corpus.path = data/crystals.csv
    train.lr_max = 1e-3
    split.fractions = 0.8,0.1,0.1

CLI --set overrides win over file values. Values are kept as strings and
converted through typed getters, so a frozen copy of the resolved
configuration is byte-stable.
"""

from __future__ import annotations

from pathlib import Path
from typing import Dict, List, Optional


class ConfigError(ValueError):
    """Bad configuration file, key or value."""


class RunConfig:
    def __init__(self, values: Optional[Dict[str, str]] = None):
        self._values: Dict[str, str] = dict(values or {})

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        values: Dict[str, str] = {}
        for line_no, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{line_no}: expected 'key = value', got {line!r}")
            key, _, value = stripped.partition("=")
            values[key.strip()] = value.strip()
        return cls(values)

    def apply_overrides(self, overrides: List[str]) -> "RunConfig":
        """Merge 'key=value' strings (CLI --set), overrides winning."""
        merged = dict(self._values)
        for item in overrides:
            if "=" not in item:
                raise ConfigError(f"override must look like key=value, got {item!r}")
            key, _, value = item.partition("=")
            merged[key.strip()] = value.strip()
        return RunConfig(merged)

    def freeze(self, path) -> None:
        """Write the fully-resolved configuration, sorted, one key per line."""
        lines = [f"{key} = {self._values[key]}" for key in sorted(self._values)]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    # --- typed getters ---

    def has(self, key: str) -> bool:
        return key in self._values and self._values[key] != ""

    def get(self, key: str, default: Optional[str] = None) -> str:
        if not self.has(key):
            if default is None:
                raise ConfigError(f"missing required config key {key!r}")
            return default
        return self._values[key]

    def get_int(self, key: str, default: Optional[int] = None) -> int:
        raw = self.get(key, None if default is None else str(default))
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"config key {key!r} must be an integer, got {raw!r}") from None

    def get_float(self, key: str, default: Optional[float] = None) -> float:
        raw = self.get(key, None if default is None else repr(default))
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"config key {key!r} must be a number, got {raw!r}") from None

    def get_bool(self, key: str, default: Optional[bool] = None) -> bool:
        raw = self.get(key, None if default is None else str(default).lower()).lower()
        if raw in ("true", "yes", "1"):
            return True
        if raw in ("false", "no", "0"):
            return False
        raise ConfigError(f"config key {key!r} must be true/false, got {raw!r}")

    def get_list(self, key: str, default: Optional[str] = None) -> List[str]:
        # an explicitly empty value means an empty list, not "use the default"
        if key in self._values:
            raw = self._values[key]
        elif default is not None:
            raw = default
        else:
            raise ConfigError(f"missing required config key {key!r}")
        return [item.strip() for item in raw.split(",") if item.strip()]

    def as_dict(self) -> Dict[str, str]:
        return dict(self._values)
