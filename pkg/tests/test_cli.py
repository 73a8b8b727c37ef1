from __future__ import annotations

import argparse

import pytest

from config import SecrecySettings
from main import EXIT_FAILURE, EXIT_OK, EXIT_USAGE, main, parse_ints, parse_sweep
from repositories.region_repository import REGION_COLUMNS

SMALL_SCENARIO = """
label = "cli-small"

[channel]
K = 2
sigma_e2 = 1.0

[power]
P_avg = 2.0

[optimizer]
restarts = 2
power_line_search_points = 24
perfect_csit_knots = 32

[sim]
num_batches = 10
"""


@pytest.fixture(autouse=True)
def isolated_settings(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.setenv("LOG_DIRECTORY", str(tmp_path / "logs"))
    monkeypatch.setenv("SECRECY_OUTPUT_DIR", str(tmp_path / "out"))
    monkeypatch.setenv("SECRECY_WORKERS", "1")
    monkeypatch.delenv("SECRECY_SCENARIO", raising=False)


@pytest.fixture
def small_scenario(tmp_path):
    path = tmp_path / "small.toml"
    path.write_text(SMALL_SCENARIO, encoding="utf-8")
    return path


def test_range_sweeps_are_inclusive():
    assert parse_sweep("0:10:5") == [0.0, 5.0, 10.0]
    assert parse_sweep("1,2") == [1.0, 2.0]
    assert parse_ints("1:3:1") == [1, 2, 3]


@pytest.mark.parametrize("text", ["10:0:5", "0:10:0", "0:10", "a,b"])
def test_malformed_sweeps_are_rejected(text):
    with pytest.raises(argparse.ArgumentTypeError):
        parse_sweep(text)


def test_settings_read_the_environment(tmp_path):
    settings = SecrecySettings()
    assert settings.log_directory == (tmp_path / "logs").resolve()
    assert settings.workers == 1
    assert settings.build_sim_config(num_blocks=5_000).num_blocks == 5_000
    assert settings.build_optimizer_spec(seed=None).seed == settings.default_seed


def test_rejected_scenario_file_is_a_usage_error(tmp_path):
    path = tmp_path / "bad.toml"
    path.write_text("[channel]\nK = 0\n\n[power]\nP_avg = 1.0\n", encoding="utf-8")
    assert main(["cm-bounds", "--scenario", str(path)]) == EXIT_USAGE


def test_high_snr_region_is_written(tmp_path, small_scenario):
    out = tmp_path / "region.csv"
    code = main(["bccm-region", "--scenario", str(small_scenario), "--high-snr", "--frontier-samples", "8", "--out", str(out)])
    assert code == EXIT_OK
    lines = out.read_text(encoding="utf-8").splitlines()
    assert lines[0].split(",") == REGION_COLUMNS
    assert len(lines) > 1
    assert all(line.startswith("errorfree,") for line in lines[1:])


def test_json_flag_writes_under_the_output_directory(tmp_path, small_scenario):
    code = main(["bccm-region", "--scenario", str(small_scenario), "--high-snr", "--frontier-samples", "4", "--json"])
    assert code == EXIT_OK
    written = sorted(path.suffix for path in (tmp_path / "out").iterdir())
    assert written == [".csv", ".json"]


def test_zero_sigma_validation_fails(tmp_path, small_scenario):
    out = tmp_path / "checks.csv"
    code = main(["validate", "--scenario", str(small_scenario), "--blocks", "2000", "--sigmas", "0", "--out", str(out)])
    assert code == EXIT_FAILURE
    assert out.read_text(encoding="utf-8").startswith("scenario_id,quantity,estimate,stderr,L,seed,analytic,passed\n")


@pytest.mark.slow
def test_cm_bounds_curve_has_one_row_per_sweep_point(tmp_path, small_scenario):
    out = tmp_path / "cm.csv"
    assert main(["cm-bounds", "--scenario", str(small_scenario), "--sweep", "0,10", "--bits", "1", "--out", str(out)]) == EXIT_OK
    header, *rows = out.read_text(encoding="utf-8").splitlines()
    assert header == "P_avg_dB,lower_1,upper_1,hsnr_lower_1,capacity_perfect_csit,hsnr_upper"
    assert [row.split(",")[0] for row in rows] == ["0", "10"]
    for row in rows:
        lower, upper = (float(value) for value in row.split(",")[1:3])
        assert 0.0 <= lower <= upper + 1e-6


@pytest.mark.slow
def test_cm_bounds_with_unequal_receivers(tmp_path):
    path = tmp_path / "unequal.toml"
    path.write_text(
        SMALL_SCENARIO.replace(
            "K = 2\n",
            'K = 2\nmains = [{ kind = "exponential", mean = 1.0 }, { kind = "exponential", mean = 0.3 }]\n',
        ),
        encoding="utf-8",
    )
    out = tmp_path / "cm.csv"
    assert main(["cm-bounds", "--scenario", str(path), "--sweep", "5", "--bits", "1", "--out", str(out)]) == EXIT_OK
    _, row = out.read_text(encoding="utf-8").splitlines()
    lower, upper = (float(value) for value in row.split(",")[1:3])
    assert 0.0 < lower <= upper + 1e-6


def test_per_receiver_feedback_has_no_bccm_region(tmp_path):
    path = tmp_path / "per_receiver.toml"
    path.write_text(SMALL_SCENARIO + '\n[feedback]\ntopology = "per-receiver"\n', encoding="utf-8")
    code = main(["bccm-region", "--scenario", str(path), "--high-snr", "--out", str(tmp_path / "region.csv")])
    assert code == EXIT_USAGE
