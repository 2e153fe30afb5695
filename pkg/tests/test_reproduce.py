import numpy as np
import pytest

from noonproj.analysis import count_dips
from noonproj.cli import main
from noonproj.reproduce import Settings, default_seed, grids, run


@pytest.fixture(scope="module")
def ideal():
    return run(Settings(beta_overlapped=1, beta_separated=1, ea_overlapped=1, ea_separated=1,
                        mc_samples=2000))


def test_ideal_limits(ideal):
    assert ideal.passed, ideal.table()
    assert ideal.fits["overlapped"].dips[0].visibility == pytest.approx(1.0, abs=1e-6)
    assert ideal.fits["separated"].visibilities == pytest.approx((0.5, 0.5), abs=1e-6)


def test_uncorrelated_pairs_remove_second_dip():
    report = run(Settings(ea_overlapped=0, ea_separated=0, mc_samples=2000))
    assert report.passed, report.table()
    assert report.fits["separated"].dips[1].visibility < 0.02
    assert count_dips(report.scans["separated"].fourfold) == 1


def test_report_table_layout(ideal):
    lines = ideal.table().splitlines()
    assert lines[0].split() == ["quantity", "reported", "expected", "simulated", "tolerance", "status"]
    assert len(lines) == 2 + len(ideal.rows) == 15


def test_grids():
    g3, g4 = grids(Settings())
    assert g3[0] == -600 and g3[-1] == 600 and g3.size == 49
    assert g4[-1] == 1200 and np.allclose(np.diff(g4), 25)


def test_seed_from_environment(monkeypatch):
    monkeypatch.setenv("NOONPROJ_SEED", "42")
    assert default_seed() == 42 and Settings().seed == 42


def test_too_few_events_is_a_config_error(tmp_path, capsys):
    # 20 events per point cannot hold the Monte Carlo error of the wings estimate
    code = main(["reproduce", "--mc-samples", "20", "--out-dir", str(tmp_path)])
    assert code == 2
    assert "standard error" in capsys.readouterr().err


def test_failed_row_exits_1(tmp_path, capsys):
    # scaling the H-H overlap as well acts like extra pair distinguishability, which the
    # closed-form visibilities do not include
    code = main(["reproduce", "--mc-samples", "2000", "--mismatch", "all", "--beta-overlapped", "0.8",
                 "--beta-separated", "0.8", "--out-dir", str(tmp_path)])
    text = capsys.readouterr().out
    assert code == 1
    assert "FAILED rows" in text and "V3 single dip" in text.split("FAILED rows")[1]
