import json
import subprocess
import sys

import pytest

from iltlab.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_bounds(capsys):
    code, out, _ = run(capsys, "bounds", "--d", "2", "--p", "2")
    data = json.loads(out)
    assert code == 0
    assert set(data) == {"d", "p", "resolvent_integral", "bound_2_4", "gamma_lower_1_14",
                         "error_estimates"}
    assert data["gamma_lower_1_14"] == pytest.approx(3.141592653589793)


def test_kappa(capsys, tmp_path):
    out_file = tmp_path / "k.json"
    code, _, _ = run(capsys, "kappa", "--d", "2", "--p", "2", "--out", str(out_file))
    data = json.loads(out_file.read_text())
    assert code == 0
    assert {"kappa", "M", "gamma_alpha", "lil_brownian", "norms", "residual",
            "solver_diagnostics"} <= set(data)
    assert data["kappa"] == pytest.approx(0.643, abs=1e-3)


def test_exit_codes(capsys):
    assert run(capsys, "bounds", "--d", "3", "--p", "3")[0] == 2
    assert run(capsys, "kappa", "--d", "2", "--p", "2", "--tol", "1e-9")[0] == 3
    assert run(capsys, "tail", "--lambdas", "0.3,0.1", "--replicas", "5")[0] == 2
    with pytest.raises(SystemExit) as exc:
        main(["nope"])
    assert exc.value.code == 2


def test_config_overrides_flags(capsys, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"n": 12, "replicas": 4, "format": "json"}))
    code, out, _ = run(capsys, "simulate", "--n", "99", "--replicas", "2", "--config", str(cfg))
    rows = json.loads(out)
    assert code == 0
    assert len(rows) == 4 and all(r["n"] == 12 for r in rows)


def test_bad_config_file(capsys, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text("[1, 2]")
    assert run(capsys, "simulate", "--config", str(cfg))[0] == 2


def test_moments_and_tail_csv(capsys):
    code, out, _ = run(capsys, "moments", "--n", "3", "--replicas", "500", "--exact")
    assert code == 0
    assert out.splitlines()[0] == "n,m,p,law,method,value,stderr"
    assert "exact-formula" in out
    code, out, _ = run(capsys, "tail", "--n", "30", "--replicas", "50", "--lambdas", "0.1,0.2")
    assert code == 0
    assert out.startswith("lambda,n,b_n,threshold,hits,trials,p_hat,log_p_hat_over_b_n,theory\r\n")


def test_lil_deterministic(capsys):
    args = ("lil", "--n-max", "300", "--replicas", "2", "--seed", "3")
    assert run(capsys, *args)[1] == run(capsys, *args)[1]


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "iltlab", "bounds", "--d", "3", "--p", "2"],
                         capture_output=True, text=True, check=True)
    assert json.loads(res.stdout)["bound_2_4"] == pytest.approx(0.5916, abs=1e-4)
