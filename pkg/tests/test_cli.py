import json
import math

import numpy as np
import pytest

from schedlaw import __version__
from schedlaw.bounds import BoundCoefficients, bound_last
from schedlaw.cli import main
from schedlaw.fitter import LossTrace, trace_to_csv
from schedlaw.schedule import ScheduleSpec, eval_discrete

T = 2000
SPEC = {"kind": "linear_decay", "eta_peak": 1 / math.sqrt(T), "T": T}


@pytest.fixture
def spec_file(tmp_path):
    p = tmp_path / "spec.json"
    p.write_text(json.dumps(SPEC))
    return p


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_qualify_linear(capsys):
    code, out, _ = run(capsys, "qualify", "--kind", "linear_decay")
    assert code == 0
    report = json.loads(out)
    assert report["verdict"] == "Qualified"
    assert {"kind", "alpha", "log_growth", "T_grid", "values"} <= set(report)
    assert report["version"] == __version__
    assert report["config"]["kind"] == "linear_decay"


def test_qualify_constant_fails(capsys):
    code, out, _ = run(capsys, "qualify", "--kind", "constant")
    assert json.loads(out)["verdict"] == "NotQualified" and code == 0


def test_bound_csv_matches_engine(capsys, spec_file):
    code, out, _ = run(capsys, "bound", "--schedule", spec_file, "--D", 1, "--G", 1, "--grid", "log:1000", "--format", "csv")
    assert code == 0
    lines = out.strip().splitlines()
    assert lines[0] == "tau,bound"
    rows = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    lrs = eval_discrete(ScheduleSpec.from_dict(SPEC))
    unit = BoundCoefficients(0, 1, 1)
    for tau, val in rows[:: len(rows) // 7]:
        assert val == pytest.approx(bound_last(unit, lrs, int(tau)), rel=1e-12)
    # figure shape: decreasing from the first step, ending near 2/sqrt(T)
    assert rows[-1, 1] < rows[0, 1]
    assert rows[-1, 1] == pytest.approx(2 / math.sqrt(T), rel=0.05)


def test_bound_closed_form_block(capsys, spec_file):
    _, out, _ = run(capsys, "bound", "--schedule", spec_file, "--grid", "1,10,100")
    cf = json.loads(out)["closed_form"]
    assert set(cf) == {"kind", "eta_star", "bound_star", "formula"}
    assert cf["eta_star"] == pytest.approx(1 / math.sqrt(T))


def test_outputs_are_byte_identical(tmp_path, spec_file, capsys):
    out = tmp_path / "run" / "report.json"
    argv = ["bound", "--schedule", str(spec_file), "--grid", "log:50", "--format", "svg", "--out", str(out)]
    assert main(argv) == 0
    first = {ext: out.with_suffix("." + ext).read_bytes() for ext in ("json", "svg")}
    assert main(argv) == 0
    for ext in ("json", "svg"):
        assert out.with_suffix("." + ext).read_bytes() == first[ext]
    assert first["svg"].startswith(b"<svg")
    assert json.loads(first["json"])["config"]["grid"] == "log:50"


def test_fit_dispatch(tmp_path, spec_file, capsys):
    lrs = eval_discrete(ScheduleSpec.from_dict(SPEC))
    coeffs = BoundCoefficients(2.0, 1.5, 0.8)
    steps = np.arange(1, T + 1)
    y = np.array([bound_last(coeffs, lrs, int(t)) for t in steps])
    trace = tmp_path / "run.csv"
    trace.write_text(trace_to_csv(LossTrace(steps, y)))
    code, out, _ = run(capsys, "fit", "--trace", trace, "--schedule", spec_file, "--split", 0.5, "--smooth", 1)
    assert code == 0
    rep = json.loads(out)
    assert {"L_inf", "D", "G", "r2_fit", "r2_predict", "split_step"} <= set(rep)
    assert rep["D"] == pytest.approx(1.5, rel=1e-3)


def test_simulate_then_scale(tmp_path, capsys):
    cfg = {
        "problem": {"kind": "l1_distance", "d": 5, "noise_scale": 0.2},
        "schedule": {"kind": "constant", "eta_peak": 1.0, "T": 10},
        "seeds": 3,
        "T_list": [3000, 6000, 12000],
        "eta_list": [0.5, 1.0],
    }
    code, out, _ = run(capsys, "simulate", "--config", json.dumps(cfg), "--format", "csv")
    assert code == 0
    records = tmp_path / "records.csv"
    records.write_text(out)
    code, out, _ = run(capsys, "scale", "--records", records)
    assert code == 0
    rep = json.loads(out)
    assert set(rep["per_eta_ref"]) == {"0.5", "1.0"}
    code, out, _ = run(capsys, "predict", "--records", records, "--T", "1e5", "--eta-small", 0.01, "--T-small", 1000)
    assert code == 0
    assert json.loads(out)["transfer"][0]["eta_peak"] == pytest.approx(0.001)


def test_simulate_trace(capsys):
    code, out, _ = run(capsys, "simulate", "--schedule", json.dumps({"kind": "cosine_decay", "eta_peak": 0.05, "T": 50}),
                       "--seeds", 2, "--grid", "all", "--format", "csv")
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "step,loss,lr" and len(lines) == 51


@pytest.mark.parametrize(
    "argv",
    [
        ["bound", "--schedule", '{"kind": "constant", "T": 10}'],
        ["bound", "--schedule", "/no/such/file.json"],
        ["qualify", "--kind", "banana"],
        ["fit", "--trace", "/no/such/trace.csv"],
        ["scale"],
        ["bound"],
    ],
)
def test_validation_exit_code(argv, capsys):
    assert main(argv) == 1


def test_bad_csv_line_reported(tmp_path, spec_file, capsys):
    trace = tmp_path / "bad.csv"
    trace.write_text("step,loss\n1,0.5\n2,oops\n")
    code, _, err = run(capsys, "fit", "--trace", trace, "--schedule", spec_file)
    assert code == 1 and "line 3" in err


def test_numeric_exit_code(tmp_path, capsys):
    records = tmp_path / "r.csv"
    records.write_text("eta_ref,T_or_tokens,unit,final_loss\n1,3000,steps,2.0\n1,6000,steps,1.9\n")
    code, _, err = run(capsys, "scale", "--records", records)
    assert code == 2 and "numeric" in err
