"""Experiment runner.

Usage: bpire <kind> --config FILE [--seed U64] [--workers K] [--out DIR]
             [--format csv|json]

Kinds: validate, estimate, sweep, walkseries, renewal, identities, oracle.
Configs are TOML; unknown keys are rejected rather than ignored.  Artifacts
are written atomically (temp file + rename) together with a manifest that
records the config hash, seed, package versions and wall time.

Exit codes: 0 success; 1 config parse or validation error; 2 numeric failure
(population overflow, rejection sampler accepted nothing); 3 identity-suite
violation (identities kind only).
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import re
import sys
import time
from datetime import datetime, timezone

import numpy as np
import scipy

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from . import __version__
from ._rng import (
    TAG_CONDITIONED,
    TAG_ORACLE,
    TAG_PATH,
    TAG_RENEWAL_U,
    TAG_RENEWAL_V,
    make_stream,
)
from .asymptotics import (
    FixedGap,
    FixedI,
    Proportional,
    ScalingSeries,
    SlopeFit,
    decomposition_check,
    duality_check,
    estimate_event_prob,
    estimate_event_prob_reversed,
    fit_log_slope,
    scaling_sweep,
    sparre_andersen_prob,
    walk_functional_series,
)
from .conditioned import (
    NoSampleError,
    estimate_U,
    estimate_V,
    harmonicity_residual,
    mu_nu_normalizers,
)
from .env import IncrementLaw, InvalidLawError, validate_hypotheses
from .gfalgebra import clan_prob, clan_prob_all, no_survivor_prob
from .popsim import ClanOverflowError, oracle_event_frequencies
from .walk import WalkPath, simulate_path

KINDS = ("validate", "estimate", "sweep", "walkseries", "renewal", "identities", "oracle")

_COMMON_KEYS = {"kind", "seed", "workers", "out_dir", "format", "law"}
_KIND_KEYS = {
    "validate": set(),
    "estimate": {"regime", "n", "convention", "estimator", "nsamples", "rel_se", "budget"},
    "sweep": {
        "regime", "n_grid", "convention", "estimator",
        "nsamples", "rel_se", "budget", "emit_plot",
    },
    "walkseries": {"functional", "n_grid", "reps", "params"},
    "renewal": {"x_grid_u", "x_grid_v", "paths", "cap", "lam"},
    "identities": {"n", "reps", "env_samples", "branch_reps", "n_small", "z_max"},
    "oracle": {"n", "reps", "convention", "increments"},
}


class ConfigError(Exception):
    """Config file failed to parse or validate."""


class IdentityViolation(Exception):
    """The identity suite found a statistically significant violation."""


# --------------------------------------------------------------------------
# config handling


def _find_line(raw: str, key: str) -> int | None:
    pat = re.compile(rf"(^|[\[\s,{{]){re.escape(key)}\s*=")
    for idx, line in enumerate(raw.splitlines(), start=1):
        if pat.search(line):
            return idx
    return None


def _load_config(config_path: str, kind: str) -> dict:
    try:
        with open(config_path, "rb") as fh:
            raw_bytes = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {config_path}: {exc}") from exc
    try:
        config = tomllib.loads(raw_bytes.decode("utf-8"))
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"config parse error in {config_path}: {exc}") from exc

    raw = raw_bytes.decode("utf-8", errors="replace")
    allowed = _COMMON_KEYS | _KIND_KEYS[kind]
    for key in config:
        if key not in allowed:
            line = _find_line(raw, key)
            where = f" (line {line})" if line else ""
            raise ConfigError(f"unknown config key {key!r} for kind {kind!r}{where}")
    if "kind" in config and config["kind"] != kind:
        raise ConfigError(
            f"config kind {config['kind']!r} does not match subcommand {kind!r}"
        )
    return config


def _parse_law(config: dict, required: bool = True) -> IncrementLaw | None:
    if "law" not in config:
        if required:
            raise ConfigError("missing required config key 'law'")
        return None
    spec = config["law"]
    if not isinstance(spec, dict):
        raise ConfigError("'law' must be a table, e.g. [law] family=\"gaussian\" sigma=1.0")
    try:
        return IncrementLaw.from_config(spec)
    except InvalidLawError as exc:
        raise ConfigError(str(exc)) from exc


def _parse_regime(config: dict):
    if "regime" not in config:
        raise ConfigError("missing required config key 'regime'")
    d = config["regime"]
    if not isinstance(d, dict) or "kind" not in d:
        raise ConfigError("'regime' must be a table with a 'kind' key")
    kind = d["kind"]
    if kind == "fixed_i":
        extra = set(d) - {"kind", "i"}
        if extra or "i" not in d:
            raise ConfigError("fixed_i regime takes exactly the key 'i'")
        return FixedI(int(d["i"]))
    if kind == "fixed_gap":
        extra = set(d) - {"kind", "gap"}
        if extra or "gap" not in d:
            raise ConfigError("fixed_gap regime takes exactly the key 'gap'")
        return FixedGap(int(d["gap"]))
    if kind == "proportional":
        extra = set(d) - {"kind", "rho"}
        if extra or "rho" not in d:
            raise ConfigError("proportional regime takes exactly the key 'rho'")
        return Proportional(float(d["rho"]))
    raise ConfigError(f"unknown regime kind {kind!r}")


def _target_kwargs(config: dict) -> dict:
    nsamples = config.get("nsamples")
    rel_se = config.get("rel_se")
    if (nsamples is None) == (rel_se is None):
        raise ConfigError("give exactly one of 'nsamples' or 'rel_se'")
    out: dict = {}
    if nsamples is not None:
        out["nsamples"] = int(nsamples)
    else:
        out["rel_se"] = float(rel_se)
    if "budget" in config:
        out["budget"] = int(config["budget"])
    return out


# --------------------------------------------------------------------------
# artifact plumbing


def _atomic_write(out_dir: str, name: str, text: str) -> str:
    path = os.path.join(out_dir, name)
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)
    return path


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _series_rows_json(series: ScalingSeries) -> list[dict]:
    return [
        {
            "n": r.n,
            "i": r.i,
            "estimate": r.estimate,
            "stderr": r.stderr,
            "nsamples": r.nsamples,
            "seed": series.master_seed,
        }
        for r in series.rows
    ]


def _write_series(out_dir: str, stem: str, series: ScalingSeries, fmt: str, written: list) -> None:
    if fmt == "json":
        written.append(
            _atomic_write(out_dir, f"{stem}.json", _json_text(_series_rows_json(series)))
        )
    else:
        written.append(_atomic_write(out_dir, f"{stem}.csv", series.to_csv()))


def emit_plot_data(series: ScalingSeries, fit: SlopeFit, out_path: str) -> str:
    """Log-log points plus the fitted line, ready for any plotting tool."""
    if not series.rows:
        raise ValueError("refusing to emit plot data for an empty series")
    lines = ["log_n,log_est,log_fit"]
    for r in series.rows:
        if r.estimate <= 0:
            raise ValueError("plot data needs positive estimates")
        ln = math.log(r.n)
        lines.append(f"{ln!r},{math.log(r.estimate)!r},{fit.intercept + fit.slope * ln!r}")
    text = "\n".join(lines) + "\n"
    out_dir, name = os.path.split(os.path.abspath(out_path))
    try:
        return _atomic_write(out_dir, name, text)
    except OSError as exc:
        raise OSError(f"cannot write plot data to {out_path}: {exc}") from exc


# --------------------------------------------------------------------------
# kind handlers; each returns a list of artifact paths


def _run_validate(config, law, seed, workers, out_dir, fmt):
    report = validate_hypotheses(law)
    payload = {
        "family": law.family,
        "param": {law.param_name: law.value} if law.param_name else {},
        "a1_ok": report.a1_ok,
        "a2_ok": report.a2_ok,
        "a3_ok": report.a3_ok,
        "moments": report.moments,
        "notes": report.notes,
    }
    return [_atomic_write(out_dir, "validate.json", _json_text(payload))]


def _run_estimate(config, law, seed, workers, out_dir, fmt):
    regime = _parse_regime(config)
    n = int(config.get("n", 0))
    if n < 1:
        raise ConfigError("missing or invalid 'n'")
    convention = config.get("convention", "paper_corollary")
    estimator = config.get("estimator", "direct")
    kwargs = _target_kwargs(config)
    if estimator == "direct":
        res = estimate_event_prob(
            law, regime, n, convention=convention,
            master_seed=seed, workers=workers, **kwargs,
        )
    elif estimator == "reversed":
        res = estimate_event_prob_reversed(
            law, regime, n, master_seed=seed, workers=workers, **kwargs
        )
    else:
        raise ConfigError(f"unknown estimator {estimator!r}")
    payload = {
        "regime": regime.label,
        "estimator": estimator,
        "convention": convention,
        "n": n,
        "i": regime.resolve(n),
        "mean": res.mean,
        "stderr": res.stderr,
        "nsamples": res.nsamples,
        "batches": res.batches,
        "budget_exhausted": res.budget_exhausted,
        "seed": seed,
    }
    return [_atomic_write(out_dir, "estimate.json", _json_text(payload))]


def _run_sweep(config, law, seed, workers, out_dir, fmt):
    regime = _parse_regime(config)
    grid = config.get("n_grid")
    if not grid:
        raise ConfigError("missing required config key 'n_grid'")
    convention = config.get("convention", "paper_corollary")
    estimator = config.get("estimator", "direct")
    kwargs = _target_kwargs(config)
    series = scaling_sweep(
        law, regime, grid, convention=convention, master_seed=seed,
        workers=workers, estimator=estimator, **kwargs,
    )
    written: list = []
    _write_series(out_dir, "sweep", series, fmt, written)
    if len(series.rows) >= 3:
        fit = fit_log_slope(series)
        written.append(_atomic_write(out_dir, "slope.json", _json_text(fit.to_json_dict())))
        if config.get("emit_plot", True):
            written.append(emit_plot_data(series, fit, os.path.join(out_dir, "plot.csv")))
    return written


def _run_walkseries(config, law, seed, workers, out_dir, fmt):
    functional = config.get("functional")
    if not functional:
        raise ConfigError("missing required config key 'functional'")
    grid = config.get("n_grid")
    if not grid:
        raise ConfigError("missing required config key 'n_grid'")
    reps = int(config.get("reps", 0))
    if reps < 1:
        raise ConfigError("missing or invalid 'reps'")
    params = config.get("params", {})
    if not isinstance(params, dict):
        raise ConfigError("'params' must be a table")
    series = walk_functional_series(
        law, functional, grid, reps, params, master_seed=seed, workers=workers
    )
    written: list = []
    _write_series(out_dir, "walkseries", series, fmt, written)
    if len(series.rows) >= 3:
        fit = fit_log_slope(series)
        written.append(_atomic_write(out_dir, "slope.json", _json_text(fit.to_json_dict())))
    return written


def _renewal_csv_or_json(table, fmt):
    if fmt == "json":
        return _json_text(
            {
                "side": table.side,
                "cap": table.cap,
                "paths": table.paths,
                "seed": table.seed,
                "truncated_fraction": table.truncated_fraction,
                "rows": [
                    {"x": float(x), "value": float(v), "stderr": float(s)}
                    for x, v, s in zip(table.grid, table.values, table.stderr)
                ],
            }
        )
    return table.to_csv()


def _run_renewal(config, law, seed, workers, out_dir, fmt):
    grid_u = config.get("x_grid_u", [0.0, 0.5, 1.0, 2.0, 4.0])
    grid_v = config.get("x_grid_v", [-4.0, -2.0, -1.0, -0.5, 0.0])
    paths = int(config.get("paths", 100_000))
    cap = int(config.get("cap", 1_000_000))
    ext = "json" if fmt == "json" else "csv"
    table_u = estimate_U(law, grid_u, paths, cap, make_stream(seed, TAG_RENEWAL_U, 0), seed=seed)
    table_v = estimate_V(law, grid_v, paths, cap, make_stream(seed, TAG_RENEWAL_V, 0), seed=seed)
    written = [
        _atomic_write(out_dir, f"renewal_U.{ext}", _renewal_csv_or_json(table_u, fmt)),
        _atomic_write(out_dir, f"renewal_V.{ext}", _renewal_csv_or_json(table_v, fmt)),
    ]
    if "lam" in config:
        spec = mu_nu_normalizers(table_u, table_v, float(config["lam"]))
        written.append(
            _atomic_write(
                out_dir,
                "normalizers.json",
                _json_text({"lam": spec.lam, "c1": spec.c1, "c2": spec.c2}),
            )
        )
    return written


def _run_oracle(config, law, seed, workers, out_dir, fmt):
    reps = int(config.get("reps", 0))
    if reps < 1:
        raise ConfigError("missing or invalid 'reps'")
    convention = config.get("convention", "paper_corollary")
    if "increments" in config:
        inc = np.asarray(config["increments"], dtype=float)
        if inc.ndim != 1 or inc.size < 1:
            raise ConfigError("'increments' must be a nonempty list of reals")
        path = WalkPath.from_increments(inc)
    else:
        if law is None:
            raise ConfigError("oracle needs either 'increments' or a 'law'")
        n = int(config.get("n", 0))
        if n < 1:
            raise ConfigError("missing or invalid 'n'")
        path = simulate_path(law, n, make_stream(seed, TAG_PATH, 0))
    table = oracle_event_frequencies(path, reps, make_stream(seed, TAG_ORACLE, 0), convention)
    exact = clan_prob_all(path, convention)
    rows = []
    for i in range(path.n):
        se = table.ses[i]
        z = (table.freqs[i] - exact[i]) / se if se > 0 else 0.0
        rows.append(
            {
                "i": i,
                "oracle_freq": float(table.freqs[i]),
                "oracle_se": float(se),
                "exact": float(exact[i]),
                "z": float(z),
            }
        )
    payload = {
        "n": path.n,
        "reps": reps,
        "reps_valid": table.reps_valid,
        "convention": convention,
        "increments": [float(v) for v in path.increments],
        "no_survivor_exact": no_survivor_prob(path),
        "none_alive_freq": table.none_alive_freq,
        "multi_alive_freq": table.multi_alive_freq,
        "rows": rows,
        "seed": seed,
    }
    if fmt == "json":
        return [_atomic_write(out_dir, "oracle.json", _json_text(payload))]
    lines = ["i,oracle_freq,oracle_se,exact,z"]
    for r in rows:
        lines.append(
            f"{r['i']},{r['oracle_freq']!r},{r['oracle_se']!r},{r['exact']!r},{r['z']!r}"
        )
    return [_atomic_write(out_dir, "oracle.csv", "\n".join(lines) + "\n")]


def _run_identities(config, law, seed, workers, out_dir, fmt):
    """Fast self-test bundle; raises IdentityViolation on a significant miss."""
    n = int(config.get("n", 64))
    reps = int(config.get("reps", 1 << 17))
    env_samples = int(config.get("env_samples", 10))
    branch_reps = int(config.get("branch_reps", 20_000))
    n_small = int(config.get("n_small", 6))
    z_max = float(config.get("z_max", 5.0))
    checks = []

    def record(name, ok, detail):
        checks.append({"name": name, "ok": bool(ok), **detail})

    # first-minimum duality and the tilted factorization
    rep = duality_check(law, n, reps, master_seed=seed, workers=workers)
    record(
        "duality_tau_vs_max", abs(rep.z) <= z_max,
        {"p_tau": rep.p_tau, "p_max": rep.p_max, "z": rep.z},
    )
    record(
        "tilted_factorization", abs(rep.fact_z) <= z_max,
        {"lhs": rep.fact_lhs, "rhs": rep.fact_rhs, "z": rep.fact_z},
    )

    # distribution-free stay-positive probabilities
    for m in (2, 5):
        series = walk_functional_series(
            law, "prob_min_nonneg", [m], reps, master_seed=seed, workers=workers
        )
        row = series.rows[0]
        exact = sparre_andersen_prob(m)
        z = (row.estimate - exact) / row.stderr if row.stderr > 0 else 0.0
        record(
            f"stay_positive_n{m}", abs(z) <= z_max,
            {"estimate": row.estimate, "exact": exact, "z": z},
        )

    # renewal harmonicity at the origin, both sides
    table_u = estimate_U(
        law, [0.0, 0.5, 1.0, 2.0], 20_000, 100_000, make_stream(seed, TAG_RENEWAL_U, 1)
    )
    table_v = estimate_V(
        law, [-2.0, -1.0, -0.5, 0.0], 20_000, 100_000, make_stream(seed, TAG_RENEWAL_V, 1)
    )
    for hk, (side, table) in enumerate((("U", table_u), ("V", table_v))):
        resid, se = harmonicity_residual(
            law, table, 0.0, 100_000, make_stream(seed, TAG_CONDITIONED, hk)
        )
        combined = math.hypot(se, float(table.stderr.max()))
        record(
            f"harmonicity_{side}_at_0", abs(resid) <= z_max * combined,
            {"residual": resid, "se": combined},
        )

    # partition closure on oracle-scale populations
    dec = decomposition_check(
        law, n_small, env_samples, branch_reps, master_seed=seed
    )
    record(
        "survivor_partition",
        dec.fraction_within(4.0) >= 0.8 and dec.max_abs_z <= z_max + 3.0,
        {"fraction_within_4se": dec.fraction_within(4.0), "max_abs_z": dec.max_abs_z},
    )

    # exact convention bridge on sampled paths
    worst = 0.0
    for k in range(64):
        path = simulate_path(law, 8, make_stream(seed, TAG_PATH, 1, k))
        a_b = float(np.exp(-path.partial_sums).sum())
        b1 = 1.0
        for i in range(1, path.n):
            hs = clan_prob(path, i, "strict").probability
            hp = clan_prob(path, i, "paper_corollary").probability
            lhs = hs * a_b
            rhs = hp * (a_b - b1)
            worst = max(worst, abs(lhs - rhs) / max(lhs, rhs))
    record("convention_bridge", worst <= 1e-12, {"max_rel_gap": worst})

    payload = {"law": law.family, "seed": seed, "checks": checks}
    written = [_atomic_write(out_dir, "identities.json", _json_text(payload))]
    failed = [c["name"] for c in checks if not c["ok"]]
    if failed:
        raise IdentityViolation(f"identity checks failed: {', '.join(failed)}")
    return written


_HANDLERS = {
    "validate": _run_validate,
    "estimate": _run_estimate,
    "sweep": _run_sweep,
    "walkseries": _run_walkseries,
    "renewal": _run_renewal,
    "identities": _run_identities,
    "oracle": _run_oracle,
}


# --------------------------------------------------------------------------
# driver


def _resolve_workers(cli_value, config) -> int:
    if cli_value is not None:
        return int(cli_value)
    if "workers" in config:
        return int(config["workers"])
    env = os.environ.get("BPIRE_WORKERS")
    if env:
        try:
            return int(env)
        except ValueError as exc:
            raise ConfigError(f"BPIRE_WORKERS must be an integer, got {env!r}") from exc
    return 1


def run_experiment(
    kind: str,
    config_path: str,
    *,
    seed: int | None = None,
    workers: int | None = None,
    out_dir: str | None = None,
    fmt: str | None = None,
) -> int:
    """Execute one experiment; returns the process exit code."""
    try:
        if kind not in KINDS:
            raise ConfigError(f"unknown kind {kind!r}; choose from {', '.join(KINDS)}")
        config = _load_config(config_path, kind)
        law = _parse_law(config, required=not (kind == "oracle" and "increments" in config))
        seed = int(seed if seed is not None else config.get("seed", 0))
        if not 0 <= seed < (1 << 64):
            raise ConfigError("seed must fit in 64 unsigned bits")
        workers = _resolve_workers(workers, config)
        if workers < 1:
            raise ConfigError("workers must be >= 1")
        fmt = fmt or config.get("format", "csv")
        if fmt not in ("csv", "json"):
            raise ConfigError(f"unknown format {fmt!r}")
        out_dir = out_dir or config.get("out_dir", f"bpire_{kind}_out")
        os.makedirs(out_dir, exist_ok=True)

        start = time.monotonic()
        try:
            written = _HANDLERS[kind](config, law, seed, workers, out_dir, fmt)
        except (InvalidLawError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        wall = time.monotonic() - start

        manifest = {
            "kind": kind,
            "config": os.path.abspath(config_path),
            "config_sha256": hashlib.sha256(open(config_path, "rb").read()).hexdigest(),
            "seed": seed,
            "workers": workers,
            "format": fmt,
            "artifacts": [os.path.basename(p) for p in written],
            "versions": {
                "bpire": __version__,
                "numpy": np.__version__,
                "scipy": scipy.__version__,
                "python": sys.version.split()[0],
            },
            "wall_time_s": round(wall, 3),
            "created": datetime.now(timezone.utc).isoformat(),
        }
        _atomic_write(out_dir, "manifest.json", _json_text(manifest))
        names = ", ".join(os.path.basename(p) for p in written)
        print(f"bpire {kind}: wrote {names} + manifest.json to {out_dir} ({wall:.1f}s)")
        return 0
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ClanOverflowError, NoSampleError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 2
    except IdentityViolation as exc:
        print(f"identity violation: {exc}", file=sys.stderr)
        return 3


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="bpire",
        description="Critical branching process in random environment with "
        "one immigrant per generation: estimators and checks.",
    )
    sub = parser.add_subparsers(dest="kind", required=True)
    for kind in KINDS:
        p = sub.add_parser(kind)
        p.add_argument("--config", required=True, help="TOML experiment config")
        p.add_argument("--seed", type=int, default=None, help="master seed (u64)")
        p.add_argument("--workers", type=int, default=None,
                       help="worker processes (default: config, then $BPIRE_WORKERS, then 1)")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--format", choices=("csv", "json"), default=None,
                       dest="fmt", help="tabular artifact format")
    args = parser.parse_args(argv)
    return run_experiment(
        args.kind,
        args.config,
        seed=args.seed,
        workers=args.workers,
        out_dir=args.out,
        fmt=args.fmt,
    )


if __name__ == "__main__":
    sys.exit(main())
