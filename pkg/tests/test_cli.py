import json

import numpy as np
import pytest

from polaronmc import cli


def _write_cfg(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def _load_json(out_dir, name):
    with open(out_dir / f"{name}.json") as f:
        return json.load(f)


def test_config_round_trip(tmp_path):
    cfg = {
        "alpha": 0.5,
        "beta": 1.0,
        "potential.name": "frohlich",
        "f.t_list": [0.5, 1.0, 2.0],
        "flag": True,
        "label": "run-a",
    }
    path = _write_cfg(tmp_path, cli.emit_config(cfg))
    back = cli.parse_config(path)
    assert back == cfg


def test_config_parsing_details(tmp_path):
    path = _write_cfg(
        tmp_path,
        "# comment line\nalpha = 0.5\nn = 100\nnames = a, b, c\nok = false\n",
    )
    cfg = cli.parse_config(path)
    assert cfg["alpha"] == 0.5 and isinstance(cfg["alpha"], float)
    assert cfg["n"] == 100 and isinstance(cfg["n"], int)
    assert cfg["names"] == ["a", "b", "c"]
    assert cfg["ok"] is False


def test_renewal_solve_command(tmp_path):
    cfg = _write_cfg(tmp_path, "alpha = 1.0\nrenewal.h = 0.01\nrenewal.horizon = 5.0\n")
    out = tmp_path / "out"
    assert cli.main(["renewal-solve", "--config", cfg, "--out", str(out)]) == 0
    payload = _load_json(out, "renewal_solve")
    assert payload["max_error_vs_poisson"] < 1e-3
    assert (out / "renewal_solve.csv").exists()


def test_cycles_command(tmp_path):
    cfg = _write_cfg(tmp_path, "alpha = 1.0\nbeta = 1.0\ncycles.n = 5000\n")
    out = tmp_path / "out"
    assert cli.main(["cycles", "--config", cfg, "--seed", "5", "--out", str(out)]) == 0
    payload = _load_json(out, "cycles")
    assert abs(payload["mean_total"] - np.e) < 0.15
    assert payload["expected_total_closed_form"] == pytest.approx(np.e)
    assert (out / "cycles.csv").exists()


def test_estimate_f_command(tmp_path):
    cfg = _write_cfg(
        tmp_path, "potential.name = frohlich\nf.t_list = 1.0\nf.n = 20000\n"
    )
    out = tmp_path / "out"
    assert cli.main(["estimate-f", "--config", cfg, "--seed", "1", "--out", str(out)]) == 0
    payload = _load_json(out, "estimate_f")
    row = payload["results"][0]
    ref = np.sqrt(2.0 / np.pi)
    assert abs(row["plain"] - ref) <= 4.0 * row["plain_se"]
    assert row["mixture"] == pytest.approx(ref, rel=1e-9)


def test_unknown_potential_is_usage_error(tmp_path):
    cfg = _write_cfg(tmp_path, "potential.name = bogus\nalpha = 1.0\n")
    out = tmp_path / "out"
    assert cli.main(["solve-lambda", "--config", cfg, "--out", str(out)]) == 1


def test_missing_config_is_usage_error(tmp_path):
    assert cli.main(["cycles", "--config", str(tmp_path / "nope.cfg")]) == 1


def test_guard_refusal_exit_code(tmp_path):
    # v = 0.01 makes the tilt root sit below -alpha at any realistic pool:
    # refuse with exit code 2 rather than report a bogus tilt
    cfg = _write_cfg(
        tmp_path,
        "potential.name = const_v\npotential.c = 0.000001\nalpha = 1.0\n"
        "pool.n = 500\npool.inner = 1\n",
    )
    out = tmp_path / "out"
    code = cli.main(["solve-lambda", "--config", cfg, "--seed", "3", "--out", str(out)])
    assert code == 2


def _strip_volatile(path):
    lines = path.read_text().splitlines()
    return "\n".join(l for l in lines if '"timestamp"' not in l)


def test_worker_count_does_not_change_output(tmp_path):
    cfg = _write_cfg(
        tmp_path,
        "potential.name = trivial\nalpha = 1.0\npool.n = 4000\npool.inner = 1\n",
    )
    out1, out2 = tmp_path / "w1", tmp_path / "w2"
    assert cli.main(["solve-lambda", "--config", cfg, "--seed", "9", "--out", str(out1)]) == 0
    assert (
        cli.main(
            ["solve-lambda", "--config", cfg, "--seed", "9", "--out", str(out2), "--workers", "4"]
        )
        == 0
    )
    assert _strip_volatile(out1 / "solve_lambda.json") == _strip_volatile(
        out2 / "solve_lambda.json"
    )


def test_cycles_deterministic_across_workers(tmp_path):
    cfg = _write_cfg(tmp_path, "alpha = 1.0\nbeta = 1.0\ncycles.n = 6000\n")
    out1, out2 = tmp_path / "w1", tmp_path / "w2"
    cli.main(["cycles", "--config", cfg, "--seed", "11", "--out", str(out1)])
    cli.main(["cycles", "--config", cfg, "--seed", "11", "--out", str(out2), "--workers", "3"])
    assert (out1 / "cycles.csv").read_bytes() == (out2 / "cycles.csv").read_bytes()
    assert _strip_volatile(out1 / "cycles.json") == _strip_volatile(out2 / "cycles.json")
