"""Pipeline configuration: defaults, ``key=value`` config files and overrides."""

from __future__ import annotations

import datetime as dt
import os
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any, Mapping

from .ingest import DEFAULT_WINDOW

OUTPUT_DIR_ENV = "REVIEWQ_OUTPUT_DIR"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    users: Path | None = None
    reviews: Path | None = None
    businesses: Path | None = None
    out_dir: Path = Path("reviewq-out")
    window_start: dt.date = DEFAULT_WINDOW[0]
    window_end: dt.date = DEFAULT_WINDOW[1]
    link_policy: str = "drop"
    max_error_rate: float = 0.01
    k_min: int = 2
    k_max: int = 6
    restarts: int = 5
    seed: int = 0
    max_iters: int = 100
    min_reviews: int = 10
    min_active_days: int = 5
    etf_window: int = 180
    s_threshold: float = 0.5
    tolerance: float = 0.5
    theta_min: int = 3
    theta_max: int = 10
    strict_quarantine: bool = False
    trust_full_count: bool = False
    orientations: Path | None = None
    max_plots: int = 50

    @property
    def window(self) -> tuple[dt.date, dt.date]:
        return self.window_start, self.window_end

    @property
    def thetas(self) -> range:
        return range(self.theta_min, self.theta_max + 1)

    def validate(self) -> "PipelineConfig":
        if self.window_start > self.window_end:
            raise ConfigError("window_start must not be after window_end")
        if not 1 <= self.k_min <= self.k_max:
            raise ConfigError("need 1 <= k_min <= k_max")
        if self.restarts < 1 or self.max_iters < 1:
            raise ConfigError("restarts and max_iters must be >= 1")
        if self.min_reviews < 1 or self.min_active_days < 1:
            raise ConfigError("min_reviews and min_active_days must be >= 1")
        if self.etf_window < 1:
            raise ConfigError("etf_window must be >= 1")
        if not 0.0 <= self.s_threshold <= 1.0:
            raise ConfigError("s_threshold must lie in [0, 1]")
        if not 0.0 <= self.tolerance < 4.0:
            raise ConfigError("tolerance must lie in [0, 4)")
        if not 0 <= self.theta_min <= self.theta_max:
            raise ConfigError("need 0 <= theta_min <= theta_max")
        if not 0.0 <= self.max_error_rate <= 1.0:
            raise ConfigError("max_error_rate must lie in [0, 1]")
        if self.link_policy not in ("drop", "stub"):
            raise ConfigError("link_policy must be 'drop' or 'stub'")
        if self.max_plots < 0:
            raise ConfigError("max_plots must be >= 0")
        return self

    def echo(self) -> dict[str, Any]:
        """JSON-safe view of the settings that influence results (output dir excluded)."""
        out = {}
        for f in fields(self):
            if f.name == "out_dir":
                continue
            v = getattr(self, f.name)
            out[f.name] = v.isoformat() if isinstance(v, dt.date) else str(v) if isinstance(v, Path) else v
        return out


_TYPES = {f.name: f.type for f in fields(PipelineConfig)}


def _coerce(name: str, raw: Any) -> Any:
    if name not in _TYPES:
        raise ConfigError(f"unknown config key {name!r}")
    if raw is None:
        return None
    kind = _TYPES[name]
    try:
        if "date" in kind:
            return raw if isinstance(raw, dt.date) else dt.date.fromisoformat(str(raw).strip())
        if "Path" in kind:
            return Path(raw)
        if kind == "bool":
            if isinstance(raw, bool):
                return raw
            s = str(raw).strip().lower()
            if s in ("1", "true", "yes", "on"):
                return True
            if s in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        return str(raw).strip()
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {name}: {raw!r}") from exc


def read_config_file(path: Path | str) -> dict[str, Any]:
    out: dict[str, Any] = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        out[key] = _coerce(key, value)
    return out


def build_config(
    flags: Mapping[str, Any] | None = None,
    config_file: Path | str | None = None,
    env: Mapping[str, str] | None = None,
) -> PipelineConfig:
    """Merge defaults < config file < environment (output dir only) < flags."""
    env = os.environ if env is None else env
    values: dict[str, Any] = {}
    if config_file is not None:
        values.update(read_config_file(config_file))
    if env.get(OUTPUT_DIR_ENV):
        values["out_dir"] = Path(env[OUTPUT_DIR_ENV])
    for k, v in (flags or {}).items():
        if v is not None:
            values[k] = _coerce(k, v)
    return replace(PipelineConfig(), **values).validate()
