"""Package and dependency versions recorded in run manifests."""

import logging
from importlib import metadata
from pathlib import Path
from typing import Dict

logger = logging.getLogger(__name__)

DISTRIBUTION = "teleop-staffing"
MANIFEST_PACKAGES = ("numpy", "scipy", "pandas")


def _get_version_from_pyproject() -> str:
    """
    Read version from pyproject.toml, falling back to installed metadata.

    Returns:
        Version string, or "0.0.0" if neither source is available.
    """
    try:
        import tomllib

        pyproject_path = Path(__file__).parent.parent.parent / "pyproject.toml"
        if pyproject_path.exists():
            with open(pyproject_path, "rb") as f:
                data = tomllib.load(f)
                return data.get("project", {}).get("version", "0.0.0")
    except (ImportError, OSError, ValueError) as e:
        logger.debug(f"Could not read version from pyproject.toml: {e}")

    try:
        return metadata.version(DISTRIBUTION)
    except metadata.PackageNotFoundError:
        logger.warning("Package metadata not found; reporting version 0.0.0")
        return "0.0.0"


CURRENT_VERSION = _get_version_from_pyproject()


def dependency_versions() -> Dict[str, str]:
    """Versions of this package and the numeric stack, for manifests."""
    versions = {DISTRIBUTION: CURRENT_VERSION}
    for name in MANIFEST_PACKAGES:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = "unknown"
    return versions
