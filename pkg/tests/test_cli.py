import io as _io
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from noonproj import analysis, io
from noonproj.analysis import ScanCurve, dip_model
from noonproj.cli import build_parser, main, resolve, SOURCE_KEYS


def run(*argv):
    buf = _io.StringIO()
    code = main(list(argv), out=buf)
    return code, buf.getvalue()


finite = st.floats(-1e12, 1e12, allow_nan=False, allow_infinity=False)


@settings(max_examples=40, deadline=None)
@given(y=arrays(float, st.integers(1, 40), elements=finite))
def test_csv_round_trip(tmp_path_factory, y):
    path = tmp_path_factory.mktemp("rt") / "curve.csv"
    x = np.cumsum(np.full(y.size, 0.1)) - 3.3
    curve = ScanCurve(x, y, np.abs(y) * 1e-3)
    io.write_curve(path, curve)
    back = io.read_curve(path)
    for a, b in ((curve.x, back.x), (curve.y, back.y), (curve.yerr, back.yerr)):
        assert np.allclose(a, b, rtol=1e-12, atol=0)
    raw = path.read_bytes()
    assert b"\r" not in raw and raw.startswith(b"tv_um,rate,stderr\n")


def test_csv_errors(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,x\n")
    with pytest.raises(ValueError):
        io.read_csv(bad)
    with pytest.raises(ValueError):
        io.write_csv(tmp_path / "c.csv", {"a": [1, 2], "b": [1]})


def test_fringe_command(tmp_path):
    code, text = run("fringe", "--n", "3", "--points", "360", "--out", str(tmp_path / "f"))
    assert code == 0
    cols = io.read_csv(tmp_path / "f.csv")
    power = np.abs(np.fft.rfft(cols["rate"])) ** 2
    assert power.argmax() == 3 or np.delete(power, [0, 3]).max() < 1e-9 * power[3]
    assert (tmp_path / "f.svg").read_text().lstrip().startswith("<?xml")
    code, _ = run("fringe", "--n", "3", "--c0", "1", "--cn", "0", "--out", str(tmp_path / "flat"))
    assert code == 0 and np.ptp(io.read_csv(tmp_path / "flat.csv")["rate"]) < 1e-12
    run("fringe", "--n", "2", "--points", "360", "--out", str(tmp_path / "two"))
    r = io.read_csv(tmp_path / "two.csv")["rate"]
    assert np.allclose(r[:180], r[180:], atol=1e-14)


def test_scan_fit_pipeline(tmp_path):
    prefix = str(tmp_path / "s")
    code, _ = run("scan", "--sigma", "52", "--jitter", "20", "--mc-samples", "2000",
                  "--grid-min", "-600", "--grid-max", "600", "--grid-step", "25", "--out", prefix)
    assert code == 0
    cols = io.read_csv(prefix + ".csv")
    assert list(cols) == ["tv_um", "rate", "stderr", "r2x2", "r_ab", "r_ac", "r_bc"]
    assert cols["tv_um"].size == 49
    assert cols["tv_um"][np.argmin(cols["rate"])] == 0.0
    code, text = run("fit", "--input", prefix + ".csv")
    assert code == 0
    report = json.loads(text)
    assert 0.5 < report["dips"][0]["visibility"] <= 1.0
    code, text = run("infer-ea", "--method", "wings", "--input", prefix + ".csv")
    assert code == 0 and 0 < json.loads(text)["ea"] < 1


def test_scan_ideal_dip_reaches_zero(tmp_path):
    code, _ = run("scan", "--grid-min", "-300", "--grid-max", "300", "--out", str(tmp_path / "z"))
    assert code == 0
    cols = io.read_csv(tmp_path / "z.csv")
    assert cols["rate"][cols["tv_um"] == 0][0] < 1e-12


def test_fit_command_on_synthetic(tmp_path):
    x = np.arange(-1000.0, 1000.1, 10.0)
    io.write_curve(tmp_path / "one.csv", ScanCurve(x, dip_model(x, 2.0, [(0.91, 0.0, 185.0)])))
    code, text = run("fit", "--input", str(tmp_path / "one.csv"))
    assert code == 0
    assert json.loads(text)["dips"][0]["visibility"] == pytest.approx(0.91, abs=1e-6)
    io.write_curve(tmp_path / "two.csv",
                   ScanCurve(x, dip_model(x, 1.0, [(0.46, 0.0, 200.0), (0.40, 600.0, 200.0)])))
    code, text = run("fit", "--input", str(tmp_path / "two.csv"), "--n-dips", "2")
    vis = [d["visibility"] for d in json.loads(text)["dips"]]
    assert code == 0 and vis == pytest.approx([0.46, 0.40], abs=1e-6)


def test_predict_and_infer():
    code, text = run("predict", "--beta", "0.96", "--ea", "0.82")
    assert code == 0 and json.loads(text)["v3_overlapped"] == pytest.approx(0.9125, abs=1e-4)
    code, text = run("predict", "--n", "3", "--m", "1")
    assert json.loads(text)["v_mk"] == 0.5
    code, text = run("infer-ea", "--v3", "0.3956", "--beta", "0.92", "--method", "dip2")
    assert code == 0 and json.loads(text)["ea"] == pytest.approx(0.86)


def test_config_errors_exit_2(tmp_path):
    assert run("predict", "--beta", "0.9")[0] == 2
    assert run("infer-ea", "--v3", "0.2", "--beta", "0.96")[0] == 2
    assert run("fit")[0] == 2
    assert run("fit", "--input", str(tmp_path / "missing.csv"))[0] == 2
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("no_such_key = 3\n")
    assert run("scan", "--config", str(cfg))[0] == 2
    cfg.write_text("sigma = abc\n")
    assert run("scan", "--config", str(cfg))[0] == 2
    assert run("scan", "--grid-step", "0", "--out", str(tmp_path / "x"))[0] == 2
    assert run("scan", "--mu", "1.5", "--out", str(tmp_path / "x"))[0] == 2
    with pytest.raises(SystemExit) as info:
        main(["scan", "--sigma", "wide"])
    assert info.value.code == 2


def test_fit_failure_exit_3(tmp_path, monkeypatch):
    x = np.arange(-1000.0, 1000.1, 10.0)
    noise = 1 + 0.05 * np.random.default_rng(1).standard_normal(x.size)
    io.write_curve(tmp_path / "one.csv", ScanCurve(x, dip_model(x, 1.0, [(0.5, 37.0, 160.0)]) * noise))
    assert run("fit", "--input", str(tmp_path / "one.csv"))[0] == 0
    monkeypatch.setattr(analysis, "MAX_ITER", 1)
    assert run("fit", "--input", str(tmp_path / "one.csv"))[0] == 3


def test_config_precedence(tmp_path, monkeypatch):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# comment\nsigma = 40\njitter = 5  # trailing\nmc-samples = 10\n")
    parser = build_parser()
    c = resolve(SOURCE_KEYS, parser.parse_args(["scan", "--config", str(cfg), "--jitter", "7"]))
    assert (c["sigma"], c["jitter"], c["mc_samples"], c["mu"]) == (40.0, 7.0, 10, 1.0)
    monkeypatch.setenv("NOONPROJ_SEED", "17")
    assert resolve(SOURCE_KEYS, parser.parse_args(["scan"]))["seed"] == 17
    assert resolve(SOURCE_KEYS, parser.parse_args(["scan", "--seed", "3"]))["seed"] == 3


def test_help_documents_every_key(capsys):
    with pytest.raises(SystemExit):
        main(["scan", "--help"])
    text = capsys.readouterr().out
    for key, *_ in SOURCE_KEYS:
        assert "--" + key.replace("_", "-") in text


def test_same_seed_same_bytes(tmp_path):
    args = ["scan", "--jitter", "30", "--mc-samples", "500", "--t-h", "300", "--workers", "3"]
    run(*args, "--out", str(tmp_path / "a"))
    run(*args, "--out", str(tmp_path / "b"))
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()
    run(*args, "--seed", "5", "--out", str(tmp_path / "c"))
    assert (tmp_path / "a.csv").read_bytes() != (tmp_path / "c.csv").read_bytes()


def test_poisson_option(tmp_path):
    args = ["scan", "--jitter", "30", "--mc-samples", "500", "--poisson-counts", "1000"]
    assert run(*args, "--out", str(tmp_path / "p"))[0] == 0
    assert run(*args, "--out", str(tmp_path / "q"))[0] == 0
    assert (tmp_path / "p.csv").read_bytes() == (tmp_path / "q.csv").read_bytes()
