"""
Run configuration for the oligodyn CLI.

Each subcommand declares its options once as `Option` rows; the same table
drives argparse, flat `key = value` config files and the rendered `run.cfg`.
Values from a config file are strings converted with the option's parser;
command-line flags override them.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

from pydantic import BaseModel, ConfigDict, Field

from src.core.errors import OutputError, ParameterError

logger = logging.getLogger(__name__)

# Keys that name output locations; never echoed into meta or run.cfg
OUTPUT_KEYS = ("out", "out_dir")


# ===== Value parsers and renderers =====

def parse_float(text: str) -> float:
    return float(text)


def parse_int(text: str) -> int:
    return int(text)


def parse_floats(text: str) -> Tuple[float, ...]:
    items = [item.strip() for item in str(text).split(",") if item.strip()]
    if not items:
        raise ValueError("expected a comma-separated list of numbers")
    return tuple(float(item) for item in items)


def parse_pair(text: str) -> Tuple[int, int]:
    items = [item.strip() for item in str(text).split(",")]
    if len(items) != 2:
        raise ValueError("expected two comma-separated integers")
    return int(items[0]), int(items[1])


def parse_bool(text: Any) -> bool:
    if isinstance(text, bool):
        return text
    lowered = str(text).strip().lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"expected true/false, got {text!r}")


def parse_str(text: str) -> str:
    return str(text).strip()


def render(value: Any) -> str:
    """Canonical text form; floats use repr so parsing returns the same value."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (tuple, list)):
        return ",".join(render(v) for v in value)
    return str(value)


@dataclass(frozen=True)
class Option:
    """One configurable value of a subcommand."""
    name: str
    parse: Callable[[str], Any]
    default: Any = None
    help: str = ""
    choices: Optional[Sequence[str]] = None
    flag: bool = False

    @property
    def cli(self) -> str:
        return "--" + self.name.replace("_", "-")


class RunConfig(BaseModel):
    """Resolved configuration of one CLI invocation."""

    model_config = ConfigDict(frozen=True)

    command: str
    values: Dict[str, Any] = Field(default_factory=dict)
    out: Optional[Path] = None
    out_dir: Optional[Path] = None

    def get(self, key: str, default: Any = None) -> Any:
        value = self.values.get(key)
        return default if value is None else value

    def rendered(self) -> Dict[str, str]:
        """Non-empty values as config-file text, sorted by key."""
        return {key: render(self.values[key]) for key in sorted(self.values) if self.values[key] is not None}


# ===== Config files =====

def read_config_file(path: Path) -> Dict[str, str]:
    """
    Parse flat `key = value` lines; `#` starts a comment, blank lines are skipped.

    Raises:
        ParameterError: missing file or a line without '='
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ParameterError(f"Cannot read config file: {e}", details={'path': str(path)}) from e

    values: Dict[str, str] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParameterError(
                "Config line is not 'key = value'",
                details={'path': str(path), 'line': number}
            )
        key, value = (part.strip() for part in line.split("=", 1))
        values[key.replace("-", "_")] = value
    logger.debug(f"Read {len(values)} keys from {path}")
    return values


def write_config_file(config: RunConfig, path: Path) -> None:
    """Write the resolved values as a config file that `--config` reads back."""
    from .emit import atomic_write_text

    lines = [f"# oligodyn {config.command}"]
    lines.extend(f"{key} = {value}" for key, value in config.rendered().items())
    atomic_write_text(path, "\n".join(lines) + "\n")


def resolve(
    command: str,
    options: List[Option],
    cli_values: Dict[str, Any],
    config_path: Optional[Path] = None
) -> RunConfig:
    """
    Merge defaults, config-file values and command-line values, in that order.

    Raises:
        ParameterError: unknown config key or a value its option cannot parse
    """
    by_name = {opt.name: opt for opt in options}
    merged: Dict[str, Any] = {opt.name: opt.default for opt in options}

    if config_path is not None:
        for key, text in read_config_file(config_path).items():
            if key not in by_name:
                raise ParameterError(
                    f"Unknown config key '{key}' for {command}",
                    details={'path': str(config_path), 'allowed': sorted(by_name)}
                )
            merged[key] = _convert(by_name[key], text)

    for key, value in cli_values.items():
        if key in by_name:
            merged[key] = value

    out = merged.pop("out", None)
    out_dir = merged.pop("out_dir", None)
    return RunConfig(
        command=command,
        values=merged,
        out=Path(out) if out else None,
        out_dir=Path(out_dir) if out_dir else None,
    )


def _convert(option: Option, text: str) -> Any:
    try:
        value = option.parse(text)
    except (TypeError, ValueError) as e:
        raise ParameterError(
            f"Invalid value for {option.name}: {text!r} ({e})",
            details={'key': option.name}
        ) from e
    if option.choices is not None and value not in option.choices:
        raise ParameterError(
            f"Invalid value for {option.name}: {value!r}",
            details={'key': option.name, 'choices': list(option.choices)}
        )
    return value


def ensure_directory(path: Path) -> Path:
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OutputError(f"Cannot create output directory: {e}", path=str(path)) from e
    return path
