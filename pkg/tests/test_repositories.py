from __future__ import annotations

import io
import json
import math

import pytest

from models.bccm_records import FeedbackMode, PowerSplit, RegionPoint
from models.bound_result import BoundResult
from models.curve_rows import BoundsRow, RegionRow, ValidationCheck
from models.estimates import McEstimate, ScalingRow
from repositories.base_repository import CurveMetadata, CurveSaveError, format_cell
from repositories.bounds_repository import BoundsCurveRepository, bounds_columns
from repositories.estimate_repository import EstimateRepository
from repositories.region_repository import REGION_COLUMNS, RegionCurveRepository
from repositories.scaling_repository import ScalingRepository


def bounds_row(value: float) -> BoundsRow:
    return BoundsRow(
        sweep_name="P_avg_dB",
        sweep_value=value,
        bounds={1: BoundResult(0.25, 0.5), 2: BoundResult(0.375, 0.5)},
        high_snr={1: BoundResult(0.125, 1.0), 2: BoundResult(0.25, 1.0)},
        capacity_perfect_csit=0.625,
    )


def test_cells_use_twelve_significant_digits():
    assert format_cell(1.0 / 3.0) == "0.333333333333"
    assert format_cell(None) == ""
    assert format_cell(True) == "true"
    assert format_cell(7) == "7"
    assert format_cell(math.inf) == "inf"


def test_nan_cells_are_refused():
    with pytest.raises(CurveSaveError):
        format_cell(math.nan)


def test_bounds_columns_follow_the_swept_bits():
    assert bounds_columns("P_avg_dB", [1, 2], shares=2) == [
        "P_avg_dB",
        "lower_1",
        "upper_1",
        "hsnr_lower_1",
        "lower_2",
        "upper_2",
        "hsnr_lower_2",
        "capacity_perfect_csit",
        "hsnr_upper",
        "share_1",
        "share_2",
    ]


def test_bounds_curve_is_written_with_json_mirror(tmp_path):
    path = tmp_path / "curves" / "cm.csv"
    metadata = CurveMetadata(command="cm-bounds", seed=3, scenario_hash="abc")
    repository = BoundsCurveRepository(bounds_columns("P_avg_dB", [1, 2]), path, metadata, json_mirror=True)
    assert repository.save_many([bounds_row(0.0), bounds_row(5.0)]) == 2

    lines = path.read_text(encoding="utf-8").split("\n")
    assert lines[0].startswith("P_avg_dB,lower_1,upper_1,hsnr_lower_1")
    assert lines[1] == "0,0.25,0.5,0.125,0.375,0.5,0.25,0.625,1"
    assert lines[-1] == ""

    mirror = json.loads(path.with_suffix(".json").read_text(encoding="utf-8"))
    assert mirror["command"] == "cm-bounds"
    assert mirror["seed"] == 3
    assert mirror["scenario_hash"] == "abc"
    assert mirror["columns"] == lines[0].split(",")
    assert len(mirror["rows"]) == 2


def test_empty_input_writes_nothing(tmp_path):
    path = tmp_path / "empty.csv"
    assert BoundsCurveRepository(["x"], path).save_many([]) == 0
    assert not path.exists()


def test_region_rows_without_a_split_leave_blank_cells():
    stream = io.StringIO()
    point = RegionPoint(r1_target=2.0, r0=0.0, r1=0.0, split=None, status="infeasible")
    row = RegionRow(FeedbackMode.BEC, 0.5, 1, 1.0, point)
    RegionCurveRepository(stream=stream).save_many([row])
    header, body, _ = stream.getvalue().split("\n")
    assert header.split(",") == REGION_COLUMNS
    assert body == "bec,0.5,1,0,2,0,0,,,,,,,infeasible"


def test_region_rows_carry_the_split():
    stream = io.StringIO()
    point = RegionPoint(r1_target=0.5, r0=1.25, r1=0.5, split=PowerSplit(p01=1.0, p02=2.0, p1=1.0))
    RegionCurveRepository(stream=stream).save_many([RegionRow(FeedbackMode.ERRORFREE, 0.0, 1, 10.0, point)])
    body = stream.getvalue().split("\n")[1]
    assert body == "errorfree,0,1,10,0.5,1.25,0.5,,,,1,2,1,ok"


def test_partitioned_points_write_one_row_per_cell(tmp_path):
    point = RegionPoint(
        r1_target=0.5,
        r0=1.25,
        r1=0.5,
        split=None,
        cell_splits=(PowerSplit(p01=1.0, p02=2.0, p1=1.0), PowerSplit(p01=0.5, p02=2.0, p1=1.5)),
        cell_edges=((0.0, 0.4), (0.4, math.inf)),
    )
    path = tmp_path / "bbit.csv"
    repository = RegionCurveRepository(path, json_mirror=True)
    assert repository.save_many([RegionRow(FeedbackMode.BBIT, 0.0, 2, 10.0, point)]) == 2
    _, first, second, _ = path.read_text(encoding="utf-8").split("\n")
    assert first == "bbit,0,2,10,0.5,1.25,0.5,0,0,0.4,1,2,1,ok"
    assert second == "bbit,0,2,10,0.5,1.25,0.5,1,0.4,inf,0.5,2,1.5,ok"
    mirror = json.loads(path.with_suffix(".json").read_text(encoding="utf-8"))
    assert mirror["rows"][1][REGION_COLUMNS.index("cell_hi")] is None


def test_infinite_values_become_null_in_the_mirror(tmp_path):
    path = tmp_path / "scaling.csv"
    row = ScalingRow(K=1, tau=0.0, c_minus_hsnr=0.0, c_plus_hsnr=math.inf, loglog_k=None,
                     mean_log_max=-0.8, mc_c_plus=1.0, mc_stderr=0.01)
    ScalingRepository(path, json_mirror=True).save_many([row])
    assert path.read_text(encoding="utf-8").split("\n")[1].split(",")[3] == "inf"
    mirror = json.loads(path.with_suffix(".json").read_text(encoding="utf-8"))
    assert mirror["rows"][0][3] is None
    assert mirror["rows"][0][4] is None


def test_estimate_rows_report_the_check():
    stream = io.StringIO()
    estimate = McEstimate("cm_lower", 0.5, 0.01, 1000, 4, "rayleigh")
    EstimateRepository(stream=stream).save_many([ValidationCheck("cm_lower", estimate, 0.51)])
    assert stream.getvalue().split("\n")[1] == "rayleigh,cm_lower:cm_lower,0.5,0.01,1000,4,0.51,true"


def test_estimate_rows_can_omit_the_standard_error():
    stream = io.StringIO()
    estimate = McEstimate("cm_lower", 0.5, 0.01, 1000, 4, "rayleigh")
    EstimateRepository(stream=stream, report_stderr=False).save_many([ValidationCheck("cm_lower", estimate, 0.51)])
    assert stream.getvalue().split("\n")[1] == "rayleigh,cm_lower:cm_lower,0.5,,1000,4,0.51,true"
