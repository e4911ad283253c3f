import json
import math

import pytest

from tensegrity import cli
from tensegrity.cli import EXIT_DEGENERATE, EXIT_FAILED, EXIT_OK, EXIT_USAGE, main, record_to_equilibrium
from tensegrity.mechanism import MechanismParams
from tensegrity.polysolve import DegenerateResultant, solve_equilibria
from tensegrity.reproduction import select


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


# --- solve ------------------------------------------------------------------------------


def test_solve_unloaded_mirror_pair(capsys):
    code, out, _ = run(capsys, "solve", "--l2", "1.5", "--rho", "1", "--format", "json")
    assert code == EXIT_OK
    data = json.loads(out)
    stable = [r for r in data["equilibria"] if r["stability"] == "stable"]
    assert len(stable) == 2
    assert sorted(r["theta1"] for r in stable) == pytest.approx([-0.812756, 0.812756], abs=1e-6)
    assert all(r["theta1_deg"] == pytest.approx(math.degrees(r["theta1"])) for r in data["equilibria"])


def test_solve_sorted_by_theta1(capsys):
    _, out, _ = run(capsys, "solve", "--l2", "1.5", "--rho", "1", "--format", "json")
    thetas = [r["theta1"] for r in json.loads(out)["equilibria"]]
    assert thetas == sorted(thetas)


def test_solve_pushing_load_csv(capsys):
    code, out, _ = run(capsys, "solve", "--f3", "-10", "--f4", "-10", "--rho", "0.75", "--format", "csv")
    assert code == EXIT_OK
    header, *rows = out.strip().splitlines()
    assert header.split(",") == cli.SOLVE_COLUMNS
    assert sum(r.split(",")[11] == "stable" for r in rows) == 2


def test_solve_text_header(capsys):
    _, out, _ = run(capsys, "solve", "--l2", "1.5", "--rho", "1")
    assert "6 equilibria, 2 stable" in out.splitlines()[1]


@pytest.mark.parametrize("argv", [["solve", "--rho", "0"], ["solve", "--rho", "-1"], ["solve"], ["solve", "--rho", "x"]])
def test_solve_bad_flags_exit_2(capsys, argv):
    # argparse rejects unparsable flags by raising SystemExit(2)
    try:
        code = main(argv)
    except SystemExit as exc:
        code = exc.code
    assert code == EXIT_USAGE


def test_solve_degenerate_exit_3(capsys, monkeypatch):
    def degenerate(*args, **kwargs):
        raise DegenerateResultant("resultant vanishes identically")

    monkeypatch.setattr(cli, "solve_equilibria", degenerate)
    code, _, err = run(capsys, "solve", "--rho", "0.5")
    assert code == EXIT_DEGENERATE
    assert cli.DEGENERATE_HINT in err


def test_json_round_trip(capsys):
    params = MechanismParams(1.0, 1.3, 100.0, 2.5, -4.0)
    _, out, _ = run(capsys, "solve", "--l2", "1.3", "--f3", "2.5", "--f4", "-4", "--rho", "0.6", "--format", "json")
    records = json.loads(out)["equilibria"]
    expected = solve_equilibria(params, 0.6)
    assert [record_to_equilibrium(r) for r in records] == expected


def test_tolerance_override_from_env(capsys, monkeypatch):
    monkeypatch.setenv("TENSEGRITY_EPS_H", "1e6")
    _, out, _ = run(capsys, "solve", "--l2", "1.5", "--rho", "1", "--format", "json")
    assert {r["stability"] for r in json.loads(out)["equilibria"]} <= {"degenerate", "unstable"}


# --- map --------------------------------------------------------------------------------


def test_map_minimal_resolution(capsys):
    code, out, _ = run(capsys, "map", "--plane", "rho=0.01:2,f4=0:10", "--res", "2")
    assert code == EXIT_OK
    body = [line for line in out.splitlines() if line and not line.startswith("#")]
    assert body[0] == "rho,f4,count,degenerate"
    assert len(body) == 5


def test_map_unloaded_validation(capsys):
    code, out, _ = run(capsys, "map", "--plane", "rho=0.01:2,l2=0.01:2", "--res", "200", "--validate", "unloaded_lines")
    assert code == EXIT_OK
    report = [line for line in out.splitlines() if line.startswith("# validation:")]
    assert len(report) == 1 and "passes_2_cells=1" in report[0]


def test_map_symmetric_json_validation(capsys):
    code, out, _ = run(
        capsys, "map", "--plane", "rho=0.01:2,f4=-10:0", "--sym", "--res", "60", "--validate", "symmetric_sextics", "--format", "json"
    )
    assert code == EXIT_OK
    report = json.loads(out)["validation"]
    assert report["family"] == "symmetric_sextics"
    assert report["passes_2_cells"] is True


@pytest.mark.parametrize(
    "plane",
    ["rho=0.01:2", "rho=0.01:2,rho=0.1:1", "rho=0.01:2,l2=2:1", "rho=a:b,l2=0.1:1", "rho=0.01:2,k=1:2", "rho:0.01:2,l2=0.1:1"],
)
def test_map_malformed_plane_exit_2(capsys, plane):
    code, _, _ = run(capsys, "map", "--plane", plane, "--res", "4")
    assert code == EXIT_USAGE


def test_map_sym_needs_force_axis(capsys):
    code, _, _ = run(capsys, "map", "--plane", "rho=0.01:2,l2=0.1:1", "--sym", "--res", "4")
    assert code == EXIT_USAGE


def test_map_output_is_deterministic(capsys, tmp_path):
    paths = [tmp_path / "a.csv", tmp_path / "b.csv"]
    for path, jobs in zip(paths, ("1", "2")):
        argv = ["map", "--plane", "rho=0.05:1.5,f3=-5:5", "--f4", "2", "--l2", "1.2", "--res", "16", "--jobs", jobs, "--output", str(path)]
        assert main(argv) == EXIT_OK
    assert paths[0].read_bytes() == paths[1].read_bytes()


# --- trace ------------------------------------------------------------------------------


def negative_segment_line(text):
    lines = [line for line in text.splitlines() if line.startswith("stable segment")]
    neg = []
    for line in lines:
        mean = line.split("mean_theta=(")[1].split(")")[0]
        t1, t2 = (float(v) for v in mean.split(","))
        if t1 < -0.1 and t2 < -0.1:
            neg.append(line)
    assert len(neg) == 1
    return neg[0]


def test_trace_branch_point_and_fold(capsys, tmp_path):
    out_path = tmp_path / "trace.csv"
    code, out, _ = run(capsys, "trace", "--f3", "5", "--f4", "5", "--rho", "0.01:2", "--steps", "400", "--output", str(out_path))
    assert code == EXIT_OK
    seg = negative_segment_line(out)
    assert "BranchPoint@" in seg.split("->")[0]
    assert "Fold@" in seg.split("->")[1]
    text = out_path.read_text()
    assert text.startswith("# l1=1\n")
    assert "rho,branch_id,theta1,theta2,energy,h11,detH,stability,event" in text


def test_trace_detuned_two_folds(capsys):
    code, _, err = run(capsys, "trace", "--l2", "1.05", "--f3", "5", "--f4", "5", "--rho", "0.01:2")
    assert code == EXIT_OK
    seg = negative_segment_line(err)
    assert seg.count("Fold@") == 2 and "BranchPoint" not in seg


@pytest.mark.parametrize("argv", [["--rho", "1:1", "--steps", "2"], ["--rho", "0:1"], ["--rho", "0.1:1", "--steps", "1"], ["--rho", "1"]])
def test_trace_bad_range_exit_2(capsys, argv):
    code, _, _ = run(capsys, "trace", *argv)
    assert code == EXIT_USAGE


def test_trace_is_byte_identical(capsys, tmp_path):
    paths = [tmp_path / "a.csv", tmp_path / "b.csv"]
    for path, jobs in zip(paths, ("1", "2")):
        assert main(["trace", "--f3", "5", "--f4", "5", "--rho", "0.3:1", "--steps", "60", "--jobs", jobs, "--output", str(path)]) == EXIT_OK
    capsys.readouterr()
    assert paths[0].read_bytes() == paths[1].read_bytes()


# --- verify -----------------------------------------------------------------------------


def test_verify_filter_by_tag():
    assert [c.number for c in select("unloaded")] == [3, 4, 8]
    assert [c.number for c in select("7,symmetric_instability")] == [5, 7]
    assert len(select(None)) == 10


def test_verify_subset_is_seeded(capsys):
    outputs = []
    for _ in range(2):
        code, out, _ = run(capsys, "verify", "--only", "4,5,7", "--seed", "7")
        assert code == EXIT_OK
        # drop the timing column
        outputs.append([line.rsplit("|", 1)[0] for line in out.splitlines()])
    assert outputs[0] == outputs[1]
    assert outputs[0][-1] == "3/3 criteria passed"


def test_verify_failure_exit_1(capsys, monkeypatch):
    from tensegrity import reproduction

    failing = reproduction.Criterion(7, "specific_points", "forced failure", ("points",), lambda seed, jobs: (False, "forced"))
    monkeypatch.setattr(reproduction, "CRITERIA", (failing,))
    code, out, _ = run(capsys, "verify", "--only", "7")
    assert code == EXIT_FAILED
    assert out.startswith("[FAIL]")


def test_verify_unknown_filter_exit_2(capsys):
    code, _, _ = run(capsys, "verify", "--only", "nonexistent")
    assert code == EXIT_USAGE
