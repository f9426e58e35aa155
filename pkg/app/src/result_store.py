"""Delimited-text result files with JSON run manifests."""

import asyncio
import hashlib
import io
import json
import logging
import os
import tempfile
from dataclasses import asdict
from pathlib import Path
from typing import Any, Dict, Optional

import aiofiles
import pandas as pd

from .app_settings import NumericSettings
from .version import dependency_versions

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.12g"
UTILIZATION_TOLERANCE = 1e-9


def frame_to_text(frame: pd.DataFrame) -> str:
    """Render a result frame exactly as it is written to disk."""
    buffer = io.StringIO()
    frame.to_csv(buffer, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return buffer.getvalue()


def manifest_path(result_path: Path) -> Path:
    return result_path.with_name(result_path.name + ".manifest.json")


class ResultStore:
    """Write result tables and their manifests atomically."""

    def __init__(self, output_dir: Optional[str] = None):
        """
        Initialize result store.

        Args:
            output_dir: Directory for relative result paths (default: cwd)
        """
        self.output_dir = Path(output_dir) if output_dir else Path.cwd()

    def resolve(self, name: str) -> Path:
        path = Path(name)
        return path if path.is_absolute() else self.output_dir / path

    async def write_result(
        self,
        frame: pd.DataFrame,
        name: str,
        command: str,
        inputs: Dict[str, Any],
        numerics: NumericSettings,
        seed: Optional[int] = None,
    ) -> Dict[str, Any]:
        """
        Write frame as CSV plus a manifest with inputs, seed, settings and versions.

        Returns:
            Dict with success flag, message and written paths
        """
        path = self.resolve(name)
        content = frame_to_text(frame)
        manifest = {
            "command": command,
            "inputs": inputs,
            "seed": seed,
            "numerics": {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(numerics).items()},
            "versions": dependency_versions(),
            "columns": list(frame.columns),
            "rows": int(len(frame)),
            "sha256": hashlib.sha256(content.encode("utf-8")).hexdigest(),
        }
        try:
            await asyncio.to_thread(path.parent.mkdir, parents=True, exist_ok=True)
            await self._atomic_write(path, content)
            await self._atomic_write(manifest_path(path), json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")
        except OSError as e:
            logger.error(f"Failed to write result {path}: {e}")
            return {"success": False, "message": f"Error: {e}"}

        logger.info(f"Wrote {len(frame)} row(s) to {path}")
        return {
            "success": True,
            "message": f"Wrote {len(frame)} row(s)",
            "result_path": str(path),
            "manifest_path": str(manifest_path(path)),
        }

    async def _atomic_write(self, file_path: Path, content: str) -> None:
        """
        Atomically write content to file.

        Args:
            file_path: Target file path
            content: Content to write
        """
        temp_fd, temp_path = await asyncio.to_thread(
            tempfile.mkstemp, dir=file_path.parent, prefix=".tmp_", text=True
        )
        os.close(temp_fd)

        try:
            async with aiofiles.open(temp_path, mode="w", encoding="utf-8", newline="") as f:
                await f.write(content)

            # Atomic replace with retry logic for Windows file locking
            max_retries = 3
            for attempt in range(max_retries):
                try:
                    await asyncio.to_thread(os.replace, temp_path, file_path)
                    logger.debug(f"Atomically wrote to {file_path}")
                    break
                except PermissionError:
                    if attempt < max_retries - 1:
                        logger.warning(f"File locked, retrying... (attempt {attempt + 1}/{max_retries})")
                        await asyncio.sleep(0.5)
                    else:
                        raise
        except BaseException:
            if os.path.exists(temp_path):
                await asyncio.to_thread(os.unlink, temp_path)
            raise


async def verify_result_file(path: str) -> Dict[str, Any]:
    """
    Re-parse a result file and re-check it against its manifest.

    Checks the content hash and, for staffing tables, recomputes every
    utilisation column from lambda_per_hour, mu_per_hour, mark_mean and the
    matching c column.

    Returns:
        Dict with success flag, message and the list of problems found
    """
    path = Path(path)
    problems = []
    try:
        async with aiofiles.open(path, mode="r", encoding="utf-8", newline="") as f:
            content = await f.read()
    except OSError as e:
        return {"success": False, "message": f"Cannot read {path}: {e}", "problems": [str(e)]}

    mpath = manifest_path(path)
    if await asyncio.to_thread(mpath.exists):
        async with aiofiles.open(mpath, mode="r", encoding="utf-8") as f:
            manifest = json.loads(await f.read())
        if manifest.get("sha256") != hashlib.sha256(content.encode("utf-8")).hexdigest():
            problems.append("content hash differs from manifest")
        if manifest.get("columns") and manifest["columns"] != content.split("\n", 1)[0].split(","):
            problems.append("header differs from manifest")
    else:
        problems.append("manifest missing")

    frame = pd.read_csv(io.StringIO(content))
    if {"lambda_per_hour", "mu_per_hour", "mark_mean"} <= set(frame.columns):
        for criterion in ("p0", "p1"):
            c_col, u_col = f"c_{criterion}", f"util_{criterion}"
            if c_col not in frame.columns or u_col not in frame.columns:
                continue
            expected = frame["lambda_per_hour"] * frame["mark_mean"] / (frame[c_col] * frame["mu_per_hour"])
            gap = (expected - frame[u_col]).abs()
            for index in gap.index[gap > UTILIZATION_TOLERANCE]:
                problems.append(f"row {index} {u_col} off by {gap[index]:.3g}")

    if problems:
        logger.warning(f"Verification of {path} found {len(problems)} problem(s)")
        return {"success": False, "message": "; ".join(problems), "problems": problems}
    logger.info(f"Verified {path}")
    return {"success": True, "message": f"{len(frame)} row(s) verified", "problems": []}
