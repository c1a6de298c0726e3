"""Command-line front end: config parsing, seed management, result files.

Config files are flat key-value text with dotted keys::

    potential.name = frohlich
    alpha = 0.5
    pool.n = 20000
    seed = 12345

All parallelism lives here: work is split into fixed-size chunks, chunk i
always uses the stream derived from (seed, task_kind, i), and results are
merged in chunk order — so output is identical for any worker count.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import cluster_process, diagnostics, renewal, stationary_clt, tilting
from .potentials import from_config as potential_from_config
from .streams import KIND_CYCLES, KIND_POOL, substream

SCHEMA_VERSION = 1
CHUNK = 2000


# ---------------------------------------------------------------------------
# config
# ---------------------------------------------------------------------------


def _parse_value(s: str):
    s = s.strip()
    if "," in s:
        return [_parse_value(p) for p in s.split(",")]
    low = s.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        pass
    return s


def parse_config(path: str | Path) -> dict:
    cfg = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"malformed config line: {raw!r}")
        key, val = line.split("=", 1)
        cfg[key.strip()] = _parse_value(val)
    return cfg


def emit_config(cfg: dict) -> str:
    def fmt(v):
        if isinstance(v, list):
            return ",".join(fmt(x) for x in v)
        return str(v)

    return "\n".join(f"{k} = {fmt(v)}" for k, v in sorted(cfg.items())) + "\n"


def build_potential(cfg: dict):
    name = cfg.get("potential.name")
    if name is None:
        raise ValueError("config must set potential.name")
    params = {
        k.split(".", 1)[1]: v
        for k, v in cfg.items()
        if k.startswith("potential.") and k != "potential.name"
    }
    return potential_from_config(name, params)


# ---------------------------------------------------------------------------
# parallel helpers (worker-count independent)
# ---------------------------------------------------------------------------


def _chunk_sizes(n: int, chunk: int = CHUNK) -> list[int]:
    full, rem = divmod(n, chunk)
    return [chunk] * full + ([rem] if rem else [])


def parallel_pool(alpha, pot, n_pool, n_inner, seed, workers) -> tilting.CyclePool:
    sizes = _chunk_sizes(n_pool)

    def job(i_size):
        i, size = i_size
        rng = substream(seed, KIND_POOL, i)
        return tilting.build_pool(alpha, pot, size, n_inner, rng)

    with ThreadPoolExecutor(max_workers=max(workers, 1)) as ex:
        pools = list(ex.map(job, enumerate(sizes)))
    return tilting.CyclePool.merge(pools)


def parallel_cycles(alpha, beta, n, seed, workers) -> list:
    sizes = _chunk_sizes(n)

    def job(i_size):
        i, size = i_size
        rng = substream(seed, KIND_CYCLES, i)
        return cluster_process.sample_busy_cycles(rng, alpha, beta, size)

    with ThreadPoolExecutor(max_workers=max(workers, 1)) as ex:
        out = list(ex.map(job, enumerate(sizes)))
    return [c for chunk in out for c in chunk]


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------


def write_json(out_dir: Path, name: str, payload: dict):
    payload = dict(payload)
    payload["schema_version"] = SCHEMA_VERSION
    payload["timestamp"] = datetime.datetime.now(datetime.timezone.utc).isoformat()
    path = out_dir / f"{name}.json"
    path.write_text(json.dumps(payload, sort_keys=True, indent=2, default=_json_default) + "\n")
    return path


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"not serializable: {type(o)}")


def write_csv(out_dir: Path, name: str, header: list[str], rows):
    path = out_dir / f"{name}.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow(row)
    return path


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _cmd_cycles(cfg, out_dir, seed, workers):
    alpha = float(cfg["alpha"])
    beta = float(cfg.get("beta", 1.0))
    n = int(cfg.get("cycles.n", 100000))
    cycles = parallel_cycles(alpha, beta, n, seed, workers)
    T = np.array([c.total for c in cycles])
    d = np.array([c.dormant for c in cycles])
    N = np.array([c.cluster.n_customers for c in cycles])
    payload = {
        "alpha": alpha,
        "beta": beta,
        "n": n,
        "mean_total": T.mean(),
        "mean_total_se": T.std(ddof=1) / np.sqrt(n),
        "mean_customers": N.mean(),
        "p_single_customer": float((N == 1).mean()),
        "dormancy_fraction": d.sum() / T.sum(),
        "expected_total_closed_form": cluster_process.expected_cycle_length(alpha, beta),
        "seed": seed,
    }
    write_json(out_dir, "cycles", payload)
    rows = cluster_process.cycles_to_csv_rows(cycles[:1000])
    write_csv(
        out_dir,
        "cycles",
        ["cycle_id", "d", "a", "N", "intervals"],
        ([r["cycle_id"], r["d"], r["a"], r["N"], r["intervals"]] for r in rows),
    )
    return 0


def _cmd_estimate_f(cfg, out_dir, seed, workers):
    from .cluster_process import Cluster
    from .gaussian_engine import estimate_F

    pot = build_potential(cfg)
    t_list = cfg.get("f.t_list", [0.5, 1.0, 2.0])
    if not isinstance(t_list, list):
        t_list = [t_list]
    n = int(cfg.get("f.n", 100000))
    results = []
    for i, t in enumerate(t_list):
        cl = Cluster(starts=np.array([0.0]), ends=np.array([float(t)]))
        rng = substream(seed, KIND_POOL, i)
        plain = estimate_F(cl, pot, n, rng, method="plain")
        row = {"t": t, "plain": plain.value, "plain_se": plain.se}
        if pot.marks is not None:
            mix = estimate_F(cl, pot, n, rng, method="mixture")
            row.update({"mixture": mix.value, "mixture_se": mix.se})
        results.append(row)
    write_json(out_dir, "estimate_f", {"potential": pot.name, "results": results, "seed": seed})
    return 0


def _cmd_solve_lambda(cfg, out_dir, seed, workers):
    pot = build_potential(cfg)
    alpha = float(cfg["alpha"])
    n_pool = int(cfg.get("pool.n", 20000))
    n_inner = int(cfg.get("pool.inner", 64))
    tol = float(cfg.get("lambda.tol", 1e-4))
    pool = parallel_pool(alpha, pot, n_pool, n_inner, seed, workers)
    rng = substream(seed, KIND_POOL, 1_000_000)
    tl = tilting.solve_lambda(alpha, pot, rng, tol=tol, pool=pool)
    lc = tilting.limit_constant(tl, rng=substream(seed, KIND_POOL, 1_000_001))
    payload = tl.to_summary()
    payload.update(
        {
            "potential": pot.name,
            "limit_constant_1": lc["expr1"].value,
            "limit_constant_1_se": lc["expr1"].se,
            "limit_constant_2": lc["expr2"].value,
            "limit_constant_2_se": lc["expr2"].se,
            "limit_constants_agree": lc["agree_2se"],
            "seed": seed,
        }
    )
    write_json(out_dir, "solve_lambda", payload)
    return 0


def _cmd_psi(cfg, out_dir, seed, workers):
    pot = build_potential(cfg)
    alpha = float(cfg["alpha"])
    T_list = cfg.get("psi.lengths", [2.0, 4.0, 6.0])
    n = int(cfg.get("psi.n", 20000))
    rng = substream(seed, KIND_POOL, 0)
    report = tilting.estimate_psi_direct(alpha, pot, [float(t) for t in T_list], n, rng)
    report.update({"potential": pot.name, "alpha": alpha, "seed": seed})
    write_json(out_dir, "psi", report)
    return 0


def _cmd_gc_scan(cfg, out_dir, seed, workers):
    pot = build_potential(cfg)
    alpha = float(cfg["alpha"])
    T_list = cfg.get("gc.lengths", [2.0, 4.0])
    n = int(cfg.get("gc.n", 20000))
    rng = substream(seed, KIND_POOL, 0)
    report = diagnostics.gc_scan(alpha, pot, [float(t) for t in T_list], n, rng)
    payload = report.to_summary()
    payload.update({"potential": pot.name, "alpha": alpha, "seed": seed})
    write_json(out_dir, "gc_scan", payload)
    write_csv(
        out_dir,
        "gc_scan",
        ["length", "ratio", "ratio_se", "dormancy", "dormancy_se", "condition4", "condition4_se"],
        (
            [
                L,
                report.ratio[i].value,
                report.ratio[i].se,
                report.dormancy[i].value,
                report.dormancy[i].se,
                report.condition4[i].value if report.condition4 else "",
                report.condition4[i].se if report.condition4 else "",
            ]
            for i, L in enumerate(report.lengths)
        ),
    )
    return 0


def _cmd_sigma(cfg, out_dir, seed, workers):
    pot = build_potential(cfg)
    alpha = float(cfg["alpha"])
    pool = parallel_pool(
        alpha, pot, int(cfg.get("pool.n", 20000)), int(cfg.get("pool.inner", 64)), seed, workers
    )
    rng = substream(seed, KIND_POOL, 1_000_000)
    tl = tilting.solve_lambda(alpha, pot, rng, pool=pool)
    rep = stationary_clt.estimate_sigma(
        tl, pot, int(cfg.get("sigma.cycles", 2000)), int(cfg.get("sigma.inner", 64)), rng
    )
    payload = rep.to_summary()
    payload.update({"potential": pot.name, "alpha": alpha, "psi": tl.psi, "seed": seed})
    write_json(out_dir, "sigma", payload)
    return 0


def _cmd_fclt(cfg, out_dir, seed, workers):
    pot = build_potential(cfg)
    alpha = float(cfg["alpha"])
    pool = parallel_pool(
        alpha, pot, int(cfg.get("pool.n", 20000)), int(cfg.get("pool.inner", 64)), seed, workers
    )
    rng = substream(seed, KIND_POOL, 1_000_000)
    tl = tilting.solve_lambda(alpha, pot, rng, pool=pool)
    scales = cfg.get("fclt.scales", [4.0, 16.0, 64.0])
    rep = stationary_clt.fclt_test(
        tl,
        pot,
        [float(s) for s in scales],
        int(cfg.get("fclt.paths", 200)),
        rng,
    )
    payload = rep.to_summary()
    payload["per_n"] = {str(k): v for k, v in payload["per_n"].items()}
    payload.update({"potential": pot.name, "alpha": alpha, "seed": seed})
    write_json(out_dir, "fclt", payload)
    return 0


def _cmd_identities(cfg, out_dir, seed, workers):
    pot = build_potential(cfg)
    alphas = cfg.get("identities.alphas", [0.45, 0.5, 0.55])
    rng = substream(seed, KIND_POOL, 0)
    rep = stationary_clt.psi_identities_check(
        [float(a) for a in alphas],
        pot,
        rng,
        n_pool=int(cfg.get("pool.n", 20000)),
        n_inner=int(cfg.get("pool.inner", 32)),
    )
    rep.update({"potential": pot.name, "seed": seed})
    write_json(out_dir, "identities", rep)
    return 0


def _cmd_renewal_solve(cfg, out_dir, seed, workers):
    alpha = float(cfg.get("alpha", 1.0))
    h = float(cfg.get("renewal.h", 1e-3))
    horizon = float(cfg.get("renewal.horizon", 10.0))
    Z = renewal.renewal_function(alpha, horizon, h)
    t = h * np.arange(len(Z))
    err = float(np.abs(Z - (1.0 + alpha * t)).max())
    write_json(
        out_dir,
        "renewal_solve",
        {"alpha": alpha, "h": h, "horizon": horizon, "max_error_vs_poisson": err, "seed": seed},
    )
    stride = max(len(Z) // 1000, 1)
    write_csv(out_dir, "renewal_solve", ["t", "Z"], zip(t[::stride], Z[::stride]))
    return 0


def _cmd_bounds(cfg, out_dir, seed, workers):
    pot = build_potential(cfg)
    alpha = float(cfg["alpha"])
    rng = substream(seed, KIND_POOL, 0)
    sw = diagnostics.sandwich_suite(
        alpha, pot, int(cfg.get("bounds.cycles", 1000)), rng, n_inner=int(cfg.get("bounds.inner", 512))
    )
    gci = diagnostics.correlation_inequality_suite(
        int(cfg.get("bounds.d_max", 3)), int(cfg.get("bounds.cases", 1000)), substream(seed, KIND_POOL, 1)
    )
    payload = {
        "potential": pot.name,
        "alpha": alpha,
        "sandwich_violation_rate": sw["violation_rate"],
        "sandwich_ordering_ok": sw["ordering_ok"],
        "gci": gci,
        "seed": seed,
    }
    write_json(out_dir, "bounds", payload)
    return 0


_COMMANDS = {
    "cycles": _cmd_cycles,
    "estimate-f": _cmd_estimate_f,
    "solve-lambda": _cmd_solve_lambda,
    "psi": _cmd_psi,
    "gc-scan": _cmd_gc_scan,
    "sigma": _cmd_sigma,
    "fclt": _cmd_fclt,
    "identities": _cmd_identities,
    "renewal-solve": _cmd_renewal_solve,
    "bounds": _cmd_bounds,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="polaronmc")
    parser.add_argument("subcommand", choices=sorted(_COMMANDS))
    parser.add_argument("--config", required=True)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--out", default=".")
    parser.add_argument("--workers", type=int, default=1)
    args = parser.parse_args(argv)
    try:
        cfg = parse_config(args.config)
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        return _COMMANDS[args.subcommand](cfg, out_dir, seed, args.workers)
    except (KeyError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (tilting.ConditionGError, RuntimeError) as e:
        print(json.dumps({"refused": True, "reason": str(e)}), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
