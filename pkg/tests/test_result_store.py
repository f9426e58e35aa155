"""Tests for result files, manifests and their verification."""

import json

import pandas as pd
import pytest

from app.src.app_settings import NumericSettings
from app.src.result_store import ResultStore, frame_to_text, manifest_path, verify_result_file


@pytest.fixture
def table():
    return pd.DataFrame(
        {
            "label": ["A", "B"],
            "lambda_per_hour": [120.0, 300.0],
            "c_p0": [2.5, 5.75],
            "c_p1": [2.75, 6.0],
            "util_p0": [120.0 / (2.5 * 60.0), 300.0 / (5.75 * 60.0)],
            "util_p1": [120.0 / (2.75 * 60.0), 300.0 / (6.0 * 60.0)],
            "staff_n100": [250, 575],
            "mu_per_hour": [60.0, 60.0],
            "mark_mean": [1.0, 1.0],
        }
    )


class TestWrite:
    async def test_writes_result_and_manifest(self, tmp_path, table):
        store = ResultStore(str(tmp_path))
        outcome = await store.write_result(table, "out/table.csv", "table", {"scenarios": ["a"]}, NumericSettings(), 7)
        assert outcome["success"]
        path = tmp_path / "out" / "table.csv"
        assert path.read_text(encoding="utf-8") == frame_to_text(table)

        manifest = json.loads(manifest_path(path).read_text(encoding="utf-8"))
        assert manifest["command"] == "table"
        assert manifest["seed"] == 7
        assert manifest["rows"] == 2
        assert manifest["columns"] == list(table.columns)
        assert manifest["numerics"]["legendre_orders"] == list(range(5, 26))
        assert set(manifest["versions"]) >= {"teleop-staffing", "numpy", "scipy", "pandas"}
        assert not list(path.parent.glob(".tmp_*"))

    async def test_rewrite_is_byte_identical(self, tmp_path, table):
        store = ResultStore(str(tmp_path))
        await store.write_result(table, "a.csv", "table", {}, NumericSettings())
        await store.write_result(table, "b.csv", "table", {}, NumericSettings())
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_float_format(self):
        text = frame_to_text(pd.DataFrame({"x": [1 / 3]}))
        assert text == "x\n0.333333333333\n"


class TestVerify:
    async def test_clean_file(self, tmp_path, table):
        await ResultStore(str(tmp_path)).write_result(table, "t.csv", "table", {}, NumericSettings())
        outcome = await verify_result_file(str(tmp_path / "t.csv"))
        assert outcome["success"], outcome["message"]

    async def test_tampered_content(self, tmp_path, table):
        await ResultStore(str(tmp_path)).write_result(table, "t.csv", "table", {}, NumericSettings())
        path = tmp_path / "t.csv"
        path.write_text(path.read_text(encoding="utf-8").replace("575", "576"), encoding="utf-8")
        outcome = await verify_result_file(str(path))
        assert not outcome["success"]
        assert "content hash differs from manifest" in outcome["problems"]

    async def test_utilization_mismatch(self, tmp_path, table):
        table.loc[1, "util_p1"] = 0.5
        await ResultStore(str(tmp_path)).write_result(table, "t.csv", "table", {}, NumericSettings())
        outcome = await verify_result_file(str(tmp_path / "t.csv"))
        assert not outcome["success"]
        assert outcome["problems"] == [f"row 1 util_p1 off by {abs(300.0 / 360.0 - 0.5):.3g}"]

    async def test_missing_manifest(self, tmp_path, table):
        path = tmp_path / "bare.csv"
        path.write_text(frame_to_text(table), encoding="utf-8")
        outcome = await verify_result_file(str(path))
        assert outcome["problems"] == ["manifest missing"]

    async def test_missing_file(self, tmp_path):
        outcome = await verify_result_file(str(tmp_path / "absent.csv"))
        assert not outcome["success"]
