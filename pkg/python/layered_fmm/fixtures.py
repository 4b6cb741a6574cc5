"""Frozen high-accuracy references for the quadrature studies, stored as YAML."""
import datetime
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional, Union

import yaml

from .errors import FixtureError

logger = logging.getLogger(__name__)

FIXTURE_FILE = "quad_references.yaml"
FIXTURES_ENV = "LAYERED_FMM_FIXTURES"


@dataclass(frozen=True)
class FrozenReference:
    """One reference value with the oracle error estimate and how it was produced."""
    name: str
    value: complex
    oracle_error: float
    command: str = ""
    created: str = ""

    def as_dict(self) -> Dict:
        return {
            "re": float(self.value.real),
            "im": float(self.value.imag),
            "oracle_error": float(self.oracle_error),
            "command": self.command,
            "created": self.created,
        }


def find_fixture_file(path: Optional[Union[str, Path]] = None) -> Path:
    """
    Locate the reference file: an explicit path, then the package data
    directory, then ./fixtures/ under the working directory, then the directory
    (or file) named by LAYERED_FMM_FIXTURES.

    Raises:
        FixtureError: If no reference file can be found
    """
    if path is not None:
        candidate = Path(path)
        if candidate.is_file():
            return candidate
        raise FixtureError(f"Reference file '{candidate}' does not exist", str(candidate))

    potential_paths = [
        Path(__file__).parent / 'data' / FIXTURE_FILE,
        Path('fixtures') / FIXTURE_FILE,
    ]
    for candidate in potential_paths:
        if candidate.is_file():
            return candidate

    env_path = os.environ.get(FIXTURES_ENV)
    if env_path:
        candidate = Path(env_path)
        if candidate.is_dir():
            candidate = candidate / FIXTURE_FILE
        if candidate.is_file():
            return candidate

    raise FixtureError(
        f"Could not find {FIXTURE_FILE}. Run 'cli.py validate --freeze PATH' or set the "
        f"{FIXTURES_ENV} environment variable to the directory holding it."
    )


def load_references(path: Optional[Union[str, Path]] = None) -> Dict[str, FrozenReference]:
    """
    Read every frozen reference from the fixture file.

    Raises:
        FixtureError: If the file is missing, is not valid YAML or has malformed entries
    """
    fixture = find_fixture_file(path)
    try:
        with open(fixture, 'r') as f:
            data = yaml.safe_load(f) or {}
    except (OSError, yaml.YAMLError) as e:
        raise FixtureError(f"Failed to read reference file: {e}", str(fixture))

    entries = data.get("references") if isinstance(data, dict) else None
    if not isinstance(entries, dict):
        raise FixtureError("Reference file has no 'references' mapping", str(fixture))
    references = {}
    for name, entry in entries.items():
        try:
            references[name] = FrozenReference(
                name,
                complex(float(entry["re"]), float(entry["im"])),
                float(entry["oracle_error"]),
                str(entry.get("command", "")),
                str(entry.get("created", "")))
        except (KeyError, TypeError, ValueError) as e:
            raise FixtureError(f"Malformed reference '{name}': {e}", str(fixture))
    logger.debug("loaded %d references from %s", len(references), fixture)
    return references


def available_references(path: Optional[Union[str, Path]] = None) -> Dict[str, FrozenReference]:
    """
    Like `load_references`, but an empty mapping when discovery finds no file.

    Raises:
        FixtureError: If an explicit path is missing or any file found is malformed
    """
    try:
        find_fixture_file(path)
    except FixtureError as e:
        if path is not None:
            raise
        logger.debug("no frozen references available: %s", e.message)
        return {}
    return load_references(path)


def freeze_references(references: Dict[str, FrozenReference],
                      path: Union[str, Path], command: str = "") -> Path:
    """
    Write references to a YAML fixture file, merging with entries already there.

    Entries without a command or creation date are stamped with `command` and
    today's date.

    Raises:
        FixtureError: If the file cannot be written
    """
    path = Path(path)
    existing: Dict[str, FrozenReference] = {}
    if path.is_file():
        existing = load_references(path)
    today = datetime.date.today().isoformat()
    for name, reference in references.items():
        existing[name] = FrozenReference(name, reference.value, reference.oracle_error,
                                         reference.command or command,
                                         reference.created or today)
    data = {"references": {name: existing[name].as_dict() for name in sorted(existing)}}
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w') as f:
            yaml.dump(data, f, default_flow_style=False, sort_keys=False)
    except (OSError, yaml.YAMLError) as e:
        raise FixtureError(f"Failed to write reference file: {e}", str(path))
    logger.info("froze %d references to %s", len(references), path)
    return path
