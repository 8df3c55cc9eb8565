import json
from pathlib import Path

import highspy
import pytest

from slice_embed import oracle
from slice_embed.admission import state_before
from slice_embed.cli import EXIT_CONFIG, EXIT_MISMATCH, EXIT_OK, main
from slice_embed.config import load_config
from slice_embed.formulation import build_problem
from slice_embed.solver import brute_force_solve, solve_milp

CONFIGS = Path(__file__).parent.parent / "configs"
DESK = str(CONFIGS / "desk_cpu.cfg")


def test_zero_request_override(tmp_path):
    code = main(["run", "--config", DESK, "--k-rel", "1", "--requests", "0", "--seed", "0",
                 "--out", str(tmp_path)])
    assert code == EXIT_OK
    lines = (tmp_path / "results.csv").read_text().splitlines()
    rows = [l.split(",") for l in lines[1:]]
    per_seed = [r for r in rows if r[2] != "mean"]
    assert len(per_seed) == 1
    assert per_seed[0][:6] == ["1", "500.0", "0", "0", "0", "0"]
    assert per_seed[0][6:9] == ["0.0", "0.0", "0.0"]
    assert (tmp_path / "events.log").read_text() == ""


def test_missing_topology_is_config_error(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("workload.request_count = 3\nsweep.k_rel = 1\nsweep.d_e2e = 500\n")
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg), "--out", str(out)]) == EXIT_CONFIG
    assert not out.exists()
    assert "topology" in capsys.readouterr().err


def test_unreadable_config(tmp_path):
    assert main(["run", "--config", str(tmp_path / "nope.cfg")]) == EXIT_CONFIG


def test_run_twice_byte_identical(tmp_path):
    args = ["run", "--config", DESK, "--k-rel", "2", "--seed", "1", "--requests", "12"]
    assert main(args + ["--out", str(tmp_path / "a")]) == EXIT_OK
    assert main(args + ["--out", str(tmp_path / "b")]) == EXIT_OK
    for name in ("results.csv", "events.log"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_sweep_prints_summary(tmp_path, capsys):
    assert main(["sweep", "--config", DESK, "--k-rel", "3", "--seed", "0", "--requests", "3",
                 "--out", str(tmp_path)]) == EXIT_OK
    out = capsys.readouterr().out.splitlines()
    assert out[0].split() == ["K_rel", "d_E2E", "cpu%", "bw%", "acc%"]
    assert out[1].split()[:2] == ["3", "500"]


def test_oracle_check_small(tmp_path, capsys):
    assert main(["oracle-check", "--count", "50", "--max-servers", "4", "--max-vnfs", "3",
                 "--out", str(tmp_path)]) == EXIT_OK
    assert "checked=50" in capsys.readouterr().out
    assert not list(tmp_path.iterdir())


def test_oracle_check_zero(tmp_path, capsys):
    assert main(["oracle-check", "--count", "0", "--out", str(tmp_path)]) == EXIT_OK
    assert "checked=0" in capsys.readouterr().out


def test_oracle_check_catches_corrupted_solver(tmp_path, monkeypatch):
    def negated(problem, **kw):
        sol = solve_milp(problem, **kw)
        if sol.is_optimal:
            sol.objective = -sol.objective - 1.0
        return sol

    monkeypatch.setattr(oracle, "solve_milp", negated)
    assert main(["oracle-check", "--count", "5", "--out", str(tmp_path)]) == EXIT_MISMATCH
    dumps = sorted(tmp_path.glob("mismatch_*.json"))
    assert dumps
    assert json.loads(dumps[0].read_text())["kind"] == "objective"
    net, req = oracle.load_instance(dumps[0])
    # the dumped instance replays to the honest answer
    assert solve_milp(build_problem(net, req)).objective == \
        pytest.approx(brute_force_solve(net, req).objective, abs=1e-6)


def test_export_lp(tmp_path):
    base = ["export-lp", "--config", DESK, "--k-rel", "2", "--seed", "0", "--index"]
    assert main(base + ["0", "--out", str(tmp_path / "a")]) == EXIT_OK
    assert main(base + ["0", "--out", str(tmp_path / "b")]) == EXIT_OK
    a = (tmp_path / "a" / "request_0.lp").read_bytes()
    assert a == (tmp_path / "b" / "request_0.lp").read_bytes()
    lines = a.decode().splitlines()
    binary = lines[lines.index("Binary") + 1:lines.index("End")]
    names = " ".join(binary).split()
    assert len(names) == 5 * 20 and all(n.startswith("x_") for n in names)


def test_export_lp_index_out_of_range(tmp_path):
    assert main(["export-lp", "--config", DESK, "--index", "40",
                 "--out", str(tmp_path)]) == EXIT_CONFIG
    assert not (tmp_path / "request_40.lp").exists()


def test_exported_mid_run_lp_matches_external_solver(tmp_path):
    assert main(["export-lp", "--config", DESK, "--k-rel", "2", "--seed", "0", "--index", "6",
                 "--out", str(tmp_path)]) == EXIT_OK
    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.readModel(str(tmp_path / "request_6.lp"))
    h.run()
    exp = load_config(DESK).experiment
    exp.sweep = [type(exp.sweep[0])(2, 500.0)]
    net, req, delays = state_before(exp, 6, seed=0)
    ours = solve_milp(build_problem(net, req, delays))
    assert ours.is_optimal
    assert h.getInfo().objective_function_value == pytest.approx(ours.objective, abs=1e-6)
