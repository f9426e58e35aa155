"""Scenario and spec file manager: sectioned key = value text."""

import asyncio
import logging
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Optional, Tuple

import aiofiles

from .app_settings import NumericSettings
from .errors import ConfigError, StaffingError
from .marks import parse_mark, parse_service

logger = logging.getLogger(__name__)

SECTION_PATTERN = re.compile(r"^\[\s*(system|scenario|simulation|numerics)(?:\.([A-Za-z0-9_\-]+))?\s*\]$")
ENTRY_PATTERN = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*)\s*=\s*(.*)$")
OVERRIDE_PATTERN = re.compile(r"^([a-z]+(?:\.[A-Za-z0-9_\-]+)?)\.([A-Za-z_][A-Za-z0-9_]*)=(.*)$")


def _number_list(text: str) -> Tuple[float, ...]:
    return tuple(float(part) for part in text.split(",") if part.strip())


def _int_list(text: str) -> Tuple[int, ...]:
    """Comma list; an item a..b or a..b:step expands to an inclusive range."""
    values: List[int] = []
    for part in (p.strip() for p in text.split(",")):
        if not part:
            continue
        if ".." in part:
            bounds, _, step = part.partition(":")
            lo, hi = bounds.split("..", 1)
            values.extend(range(int(lo), int(hi) + 1, int(step) if step else 1))
        else:
            values.append(int(part))
    return tuple(values)


def _flag(text: str) -> bool:
    lowered = text.lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


class ConfigKey:
    """Represents one recognised key: its value pattern and its parser."""

    def __init__(self, name: str, pattern: str, parser: Callable[[str], Any], description: str):
        """
        Initialize a config key.

        Args:
            name: Key as written in the file (unit suffix included)
            pattern: Regex the raw value must match in full
            parser: Converts the raw text to the typed value
            description: Human-readable description
        """
        self.name = name
        self.pattern = re.compile(pattern)
        self.parser = parser
        self.description = description

    def parse(self, raw: str, line: Optional[int]) -> Any:
        if not self.pattern.fullmatch(raw):
            raise ConfigError(f"Malformed value {raw!r} for {self.description}", line=line, key=self.name)
        try:
            return self.parser(raw)
        except StaffingError as e:
            raise ConfigError(e.message, line=line, key=self.name) from e
        except ValueError as e:
            raise ConfigError(f"Invalid value {raw!r}: {e}", line=line, key=self.name) from e


NUMBER = r"[-+]?(\d+\.?\d*|\.\d+)([eE][-+]?\d+)?"
NUMBERS = rf"{NUMBER}(\s*,\s*{NUMBER})*"
INTS = r"\d+(\.\.\d+(:\d+)?)?(\s*,\s*\d+(\.\.\d+(:\d+)?)?)*"
DIST = r"[a-z]+(:[^\s,]+(,[^\s,]+)*)?"
WORD = r"[A-Za-z0-9_\-]+"
TEXT = r".+"
BOOL = r"(?i)(1|0|true|false|yes|no|on|off)"


def _key(name: str, pattern: str, parser: Callable[[str], Any], description: str) -> Tuple[str, ConfigKey]:
    return name, ConfigKey(name, pattern, parser, description)


COMMON_KEYS = dict(
    [
        _key("label", TEXT, str, "Row label"),
        _key("lambda_per_hour", NUMBER, float, "Batch arrival rate (per hour)"),
        _key("mu_per_hour", NUMBER, float, "Service rate per job (per hour)"),
        _key("mean_service_minutes", NUMBER, float, "Mean service time (minutes)"),
        _key("mark", DIST, parse_mark, "Limiting mark distribution"),
        _key("epsilon", NUMBER, float, "Target exceedance probability"),
        _key("criterion", r"p0|p1|blocking", str, "Staffing criterion"),
        _key("n_list", INTS, _int_list, "Batch indices for staff counts"),
    ]
)

# Define all available keys per section kind
SECTION_KEYS: Dict[str, Dict[str, ConfigKey]] = {
    "system": {
        **COMMON_KEYS,
        **dict(
            [
                _key("c", NUMBER, float, "Operator-to-batch-size ratio"),
                _key("c_list", NUMBERS, _number_list, "Ratios to evaluate"),
                _key("service", DIST, parse_service, "Service-time distribution"),
            ]
        ),
    },
    "scenario": {
        **COMMON_KEYS,
        **dict(
            [
                _key("annual_miles_millions", NUMBER, float, "Annual miles driven (millions)"),
                _key("days_per_year", r"360|365", int, "Day-count convention"),
                _key("peak_hour_fraction", NUMBER, float, "Share of daily miles in the peak hour"),
                _key("hourly_miles", NUMBERS, _number_list, "Miles driven in each hour of the day"),
                _key("hourly_miles_file", TEXT, str, "Delimited file with hourly miles"),
                _key("metro_file", TEXT, str, "Delimited file with metro annual miles"),
                _key("miles_per_disengagement", NUMBER, float, "Miles between disengagements"),
                _key("fleet_sizes", INTS, _int_list, "Fleet sizes to sweep"),
                _key("miles_per_vehicle_per_year", NUMBER, float, "Annual miles per vehicle"),
                _key("shift_fraction", NUMBER, float, "Share of daily miles driven in the shift"),
                _key("shift_hours", NUMBER, float, "Shift length (hours)"),
            ]
        ),
    },
    "simulation": dict(
        [
            _key("model", r"queue|storage", str, "Simulated object"),
            _key("discipline", r"delay|blocking|infinite", str, "Queue discipline"),
            _key("variant", r"shot_noise|threshold|finite", str, "Storage variant"),
            _key("batch", DIST, str, "Batch-size law"),
            _key("n", r"\d+", int, "Batch index"),
            _key("n_list", INTS, _int_list, "Batch indices for the convergence study"),
            _key("service", DIST, parse_service, "Service-time distribution"),
            _key("horizon_hours", NUMBER, float, "Simulated horizon (hours)"),
            _key("reps", r"\d+", int, "Replications"),
            _key("seed", r"\d+", int, "Master seed"),
            _key("grid_points", r"\d+", int, "Time grid size for recorded paths"),
            _key("record_paths", r"\d+", int, "Number of event-level paths to record"),
            _key("initial_jobs", r"\d+", int, "Jobs in system at time zero"),
            _key("initial_level", NUMBER, float, "Storage level at time zero"),
            _key("dependence", r"independent|copy_first|copy_previous|average_previous", str, "Within-batch dependence"),
            _key("dependence_rho", NUMBER, float, "Dependence strength"),
            _key("rho_list", NUMBERS, _number_list, "Dependence strengths for the study"),
            _key("track_busy", BOOL, _flag, "Measure the busy-server fraction"),
        ]
    ),
}


@dataclass(frozen=True)
class ConfigEntry:
    raw: str
    line: Optional[int]


@dataclass(frozen=True)
class ConfigSection:
    """One [kind] or [kind.name] block."""

    kind: str
    name: Optional[str]
    entries: Dict[str, ConfigEntry] = field(default_factory=dict)
    line: Optional[int] = None

    @property
    def header(self) -> str:
        return self.kind if self.name is None else f"{self.kind}.{self.name}"

    def has(self, key: str) -> bool:
        return key in self.entries

    def get(self, key: str, default: Any = None) -> Any:
        """Typed value of key, or default when absent."""
        entry = self.entries.get(key)
        if entry is None:
            return default
        return SECTION_KEYS[self.kind][key].parse(entry.raw, entry.line)

    def values(self) -> Dict[str, Any]:
        return {key: self.get(key) for key in self.entries}

    def raw_values(self) -> Dict[str, str]:
        return {key: entry.raw for key, entry in self.entries.items()}


@dataclass(frozen=True)
class ConfigDocument:
    """Parsed config file in section order."""

    sections: Tuple[ConfigSection, ...] = ()
    source: str = "<text>"

    def section(self, header: str) -> Optional[ConfigSection]:
        for section in self.sections:
            if section.header == header:
                return section
        return None

    def of_kind(self, kind: str) -> List[ConfigSection]:
        return [s for s in self.sections if s.kind == kind]

    def numerics(self, base: NumericSettings) -> NumericSettings:
        """base with the [numerics] section applied."""
        section = self.section("numerics")
        if section is None:
            return base
        try:
            return base.with_overrides(section.raw_values())
        except ConfigError as e:
            entry = section.entries.get(e.key) if e.key else None
            raise ConfigError(e.detail, line=entry.line if entry else None, key=e.key) from e

    def to_text(self) -> str:
        lines: List[str] = []
        for section in self.sections:
            lines.append(f"[{section.header}]")
            lines.extend(f"{key} = {entry.raw}" for key, entry in section.entries.items())
            lines.append("")
        return "\n".join(lines)


class ConfigManager:
    """Load scenario/spec files and apply command-line overrides."""

    def __init__(self, path: Optional[str] = None):
        """
        Initialize config manager.

        Args:
            path: Config file to read; None means an empty document
        """
        self.path: Optional[Path] = Path(path) if path else None
        self.document: ConfigDocument = ConfigDocument()

    async def load(self) -> ConfigDocument:
        """
        Read and parse the config file.

        Returns:
            Parsed document (empty when no path was given)

        Raises:
            ConfigError: Missing file or malformed text
        """
        if self.path is None:
            self.document = ConfigDocument()
            return self.document
        if not await asyncio.to_thread(self.path.exists):
            raise ConfigError(f"Config file not found: {self.path}")

        async with aiofiles.open(self.path, mode="r", encoding="utf-8-sig") as f:
            content = await f.read()
        self.document = self.parse_text(content, str(self.path))
        logger.info(f"Loaded {len(self.document.sections)} section(s) from {self.path}")
        return self.document

    @staticmethod
    def parse_text(content: str, source: str = "<text>") -> ConfigDocument:
        """
        Parse sectioned key = value text.

        Blank lines and lines starting with # or ; are ignored; a trailing
        ' #' starts an inline comment. Every value is validated against its
        key pattern here so errors carry the line number.
        """
        sections: List[ConfigSection] = []
        current: Optional[ConfigSection] = None
        for number, raw_line in enumerate(content.splitlines(), start=1):
            line = raw_line.split(" #", 1)[0].strip()
            if not line or line.startswith(("#", ";")):
                continue

            header = SECTION_PATTERN.match(line)
            if header:
                kind, name = header.group(1), header.group(2)
                if kind == "scenario" and name is None:
                    raise ConfigError("Scenario sections need a name: [scenario.<name>]", line=number)
                if kind != "scenario" and name is not None:
                    raise ConfigError(f"[{kind}] sections take no name", line=number)
                current = ConfigSection(kind, name, {}, number)
                if any(s.header == current.header for s in sections):
                    raise ConfigError(f"Duplicate section [{current.header}]", line=number)
                sections.append(current)
                continue
            if line.startswith("["):
                raise ConfigError(f"Unknown section header {line}", line=number)

            entry = ENTRY_PATTERN.match(line)
            if not entry:
                raise ConfigError(f"Expected 'key = value', got {line!r}", line=number)
            if current is None:
                raise ConfigError("Entry outside of any section", line=number, key=entry.group(1))
            key, value = entry.group(1), entry.group(2).strip()
            ConfigManager._validate(current, key, value, number)
            if key in current.entries:
                raise ConfigError("Duplicate key", line=number, key=key)
            current.entries[key] = ConfigEntry(value, number)

        logger.debug(f"Parsed {source}: {[s.header for s in sections]}")
        return ConfigDocument(tuple(sections), source)

    @staticmethod
    def _validate(section: ConfigSection, key: str, value: str, line: Optional[int]) -> None:
        if section.kind == "numerics":
            try:
                NumericSettings().with_overrides({key: value})
            except ConfigError as e:
                raise ConfigError(e.detail, line=line, key=key) from e
            return
        known = SECTION_KEYS[section.kind]
        if key not in known:
            raise ConfigError(f"Unknown key in [{section.header}]", line=line, key=key)
        known[key].parse(value, line)

    @staticmethod
    def apply_overrides(document: ConfigDocument, overrides: Iterable[str]) -> ConfigDocument:
        """
        Apply section.key=value overrides, creating sections as needed.

        Args:
            document: Parsed document
            overrides: Items like "system.epsilon=0.01" or "scenario.ny.days_per_year=365"

        Returns:
            New document; the input is left untouched
        """
        sections = {s.header: replace(s, entries=dict(s.entries)) for s in document.sections}
        order = [s.header for s in document.sections]
        for item in overrides:
            match = OVERRIDE_PATTERN.match(item.strip().replace(" ", ""))
            if not match:
                raise ConfigError(f"Override must look like section.key=value, got {item!r}")
            header, key, value = match.groups()
            head = SECTION_PATTERN.match(f"[{header}]")
            if not head:
                raise ConfigError(f"Unknown section in override {item!r}", key=key)
            if header not in sections:
                sections[header] = ConfigSection(head.group(1), head.group(2), {}, None)
                order.append(header)
            ConfigManager._validate(sections[header], key, value, None)
            sections[header].entries[key] = ConfigEntry(value, None)
            logger.info(f"Override applied: {header}.{key} = {value}")
        return ConfigDocument(tuple(sections[h] for h in order), document.source)
