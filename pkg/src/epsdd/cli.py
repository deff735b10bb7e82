"""Batch command-line front end.

One subcommand per pipeline stage plus ``run-all``; stages communicate
through files in the output directory so partial runs are resumable.
Exit codes: 0 ok, 1 analysis error, 2 usage/IO error.
"""

import hashlib
import json
import sys
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import date, datetime, time, timedelta
from pathlib import Path

import click
import numpy as np
import pandas as pd

import epsdd
from epsdd import events as ev
from epsdd import market_data as md
from epsdd import null_model as nm
from epsdd import outlier_tests as ot
from epsdd import powerlaw as pl
from epsdd import tail_dependence as td


class ConfigError(Exception):
    pass


@dataclass
class ContractConfig:
    label: str
    files: list
    roll_dates: list
    session: md.SessionSpec
    columns: dict


@dataclass
class RunConfig:
    contracts: list
    dt: float = 30.0
    eps0: float = 1.0
    epsilon_mode: str = "adaptive"
    fixed_epsilon: float = 0.0
    seed: int = 0
    workers: int = 1
    out: Path = Path("out")
    n_min: int = 100
    distance: str = "KS"
    p0: float = 0.1
    tail_size: int = 200
    r_max: int = 30
    u_rank: str = "auto"
    u_grid: tuple = td.DEFAULT_GRID
    n_reshuffles: int = 1
    config_hash: str = ""

    @property
    def epsilon_config(self) -> ev.EpsilonConfig:
        return ev.EpsilonConfig(bar_width=self.dt, epsilon0=self.eps0,
                                epsilon_mode=self.epsilon_mode,
                                fixed_epsilon=self.fixed_epsilon)

    @property
    def provenance(self) -> dict:
        return {"config_hash": self.config_hash, "version": epsdd.__version__,
                "seed": self.seed}


def _parse_time(raw: str) -> time:
    h, m = raw.split(":")[:2]
    return time(int(h), int(m))


def load_config(path: Path, overrides: dict) -> RunConfig:
    try:
        raw_bytes = Path(path).read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    try:
        doc = tomllib.loads(raw_bytes.decode("utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid config: {exc}") from exc

    run = doc.get("run", {})
    scan = doc.get("scan", {})
    tests = doc.get("tests", {})

    contracts = []
    for c in doc.get("contracts", []):
        try:
            session = md.SessionSpec(
                ath_start=_parse_time(c["ath_start"]),
                ath_end=_parse_time(c["ath_end"]),
                timezone_label=c.get("timezone", ""),
                max_gap=float(c.get("max_gap", 300)),
            )
            contract = ContractConfig(
                label=c["label"],
                files=[Path(f) for f in c["files"]],
                roll_dates=[date.fromisoformat(d) for d in c.get("roll_dates", [])],
                session=session,
                columns=dict(c.get("columns", {"timestamp": "timestamp",
                                              "price": "price"})),
            )
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"bad contract entry: {exc}") from exc
        if len(contract.files) != len(contract.roll_dates) + 1:
            raise ConfigError(
                f"contract {contract.label}: need exactly one roll date "
                f"between consecutive files")
        contracts.append(contract)

    cfg = RunConfig(
        contracts=sorted(contracts, key=lambda c: c.label),
        dt=float(run.get("dt", 30.0)),
        eps0=float(run.get("eps0", 1.0)),
        epsilon_mode=run.get("epsilon_mode", "adaptive"),
        fixed_epsilon=float(run.get("fixed_epsilon", 0.0)),
        seed=int(run.get("seed", 0)),
        workers=int(run.get("workers", 1)),
        out=Path(run.get("out", "out")),
        n_min=int(scan.get("n_min", 100)),
        distance=scan.get("distance", "KS"),
        p0=float(tests.get("p0", 0.1)),
        tail_size=int(tests.get("tail_size", 200)),
        r_max=int(tests.get("r_max", 30)),
        u_rank=str(tests.get("u_rank", "auto")),
        u_grid=tuple(doc.get("taildep", {}).get("u_grid", td.DEFAULT_GRID)),
        n_reshuffles=int(doc.get("nullsim", {}).get("n_reshuffles", 1)),
    )
    for key, value in overrides.items():
        if value is not None:
            setattr(cfg, key, Path(value) if key == "out" else value)
    if cfg.dt <= 0:
        raise ConfigError("dt must be positive")
    for c in cfg.contracts:
        for f in c.files:
            if not f.exists():
                raise ConfigError(f"tick file not found: {f}")
    digest = hashlib.sha256(raw_bytes)
    digest.update(json.dumps({k: str(v) for k, v in sorted(overrides.items())},
                             sort_keys=True).encode())
    cfg.config_hash = digest.hexdigest()
    return cfg


def _write_json(path: Path, payload: dict, cfg: RunConfig):
    payload = {"provenance": cfg.provenance, **payload}
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, frame: pd.DataFrame, cfg: RunConfig):
    path.parent.mkdir(parents=True, exist_ok=True)
    prov = cfg.provenance
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_hash={prov['config_hash']} version={prov['version']}"
                 f" seed={prov['seed']}\n")
        frame.to_csv(fh, index=False)


def _read_csv(path: Path) -> pd.DataFrame:
    return pd.read_csv(path, comment="#")


# ---------------------------------------------------------------- pipeline


def _load_bars(contract: ContractConfig, cfg: RunConfig):
    """Parse, clean, aggregate and roll-stitch one contract's tick files."""
    stitched = None
    reports = []
    for i, path in enumerate(contract.files):
        ticks, errors = md.parse_ticks(path, contract.columns)
        cleaned, report = md.clean_ticks(ticks, contract.session)
        reports.append((path, report, errors))
        bars = md.aggregate_bars(cleaned, cfg.dt, contract.session)
        if stitched is None:
            stitched = bars
        else:
            stitched = md.stitch_roll(stitched, bars, contract.roll_dates[i - 1])
    return stitched, reports


def _stage_clean(contract: ContractConfig, cfg: RunConfig):
    outdir = cfg.out / contract.label
    report_payload = []
    for path in contract.files:
        ticks, errors = md.parse_ticks(path, contract.columns)
        cleaned, report = md.clean_ticks(ticks, contract.session)
        frame = cleaned.copy()
        frame["timestamp"] = frame["timestamp"].astype("int64") // 10**6
        _write_csv(outdir / f"cleaned_{path.stem}.csv", frame, cfg)
        report_payload.append({
            "file": path.name,
            "report": report.to_dict(),
            "parse_errors": [{"line": e.line, "message": e.message} for e in errors],
        })
    _write_json(outdir / "clean_report.json", {"files": report_payload}, cfg)
    return contract.label


def _event_frame(series: ev.EventSeries, session: md.SessionSpec,
                 dt: float) -> pd.DataFrame:
    rows = []
    for e in series.events:
        start = datetime.combine(e.day, session.ath_start) + timedelta(
            seconds=e.k_start * dt)
        rows.append({
            "contract": e.contract, "kind": e.kind, "day": e.day.isoformat(),
            "timestamp": start.isoformat(), "tau_s": e.duration,
            "delta_p": e.size, "r": e.ret, "r_norm": e.norm_ret,
            "v": e.speed, "v_norm": e.norm_speed,
        })
    return pd.DataFrame(rows, columns=["contract", "kind", "day", "timestamp",
                                       "tau_s", "delta_p", "r", "r_norm",
                                       "v", "v_norm"])


def _stage_detect(contract: ContractConfig, cfg: RunConfig):
    bars, _ = _load_bars(contract, cfg)
    series = ev.detect_series(bars, cfg.epsilon_config, contract=contract.label)
    outdir = cfg.out / contract.label
    _write_csv(outdir / "events.csv", _event_frame(series, contract.session, cfg.dt),
               cfg)
    # constituent normalized bar returns, needed by the tail-composition stage
    outdir.mkdir(parents=True, exist_ok=True)
    with open(outdir / "event_returns.jsonl", "w") as fh:
        for e in series.events:
            fh.write(json.dumps({"kind": e.kind,
                                 "r_norm": e.norm_ret,
                                 "bar_returns": list(map(float,
                                                         e.norm_bar_returns))})
                     + "\n")
    stats_rows = []
    for kind in (ev.DRAWDOWN, ev.DRAWUP):
        sub = ev.EventSeries(contract=contract.label, config=series.config,
                             events=[e for e in series.events if e.kind == kind])
        if not sub.events:
            continue
        for field_name in ev.STAT_FIELDS:
            st = ev.descriptive_stats(sub, field_name)
            stats_rows.append({"contract": contract.label, "kind": kind,
                               "field": field_name, **st})
    _write_csv(outdir / "descriptive_stats.csv", pd.DataFrame(stats_rows), cfg)
    return contract.label


def _pooled_events(cfg: RunConfig) -> pd.DataFrame:
    frames = []
    for c in cfg.contracts:
        path = cfg.out / c.label / "events.csv"
        if not path.exists():
            raise FileNotFoundError(f"missing {path}; run the detect stage first")
        frames.append(_read_csv(path))
    pooled = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame()
    return pooled


def _stage_fit(contract: ContractConfig, cfg: RunConfig):
    outdir = cfg.out / contract.label
    frame = _read_csv(outdir / "events.csv")
    scan = pl.ScanConfig(n_min=cfg.n_min)
    fits = {}
    for kind in (ev.DRAWDOWN, ev.DRAWUP):
        sample = frame.loc[frame["kind"] == kind, "r_norm"].dropna().to_numpy()
        if len(sample) < cfg.n_min:
            fits[kind] = {"error": f"only {len(sample)} events"}
            continue
        fit = pl.scan_xmin(sample, scan, distance=cfg.distance)
        fits[kind] = fit.to_dict()
        fits[kind]["candidates_evaluated"] = int(len(np.unique(sample)))
    _write_json(outdir / "fit.json", {"fits": fits}, cfg)

    # tail composition: count and contribution of large single returns
    comp_rows = []
    jl_path = outdir / "event_returns.jsonl"
    if jl_path.exists():
        records = [json.loads(line) for line in jl_path.read_text().splitlines()]
        for kind in (ev.DRAWDOWN, ev.DRAWUP):
            fit = fits.get(kind, {})
            if "x_m" not in fit:
                continue
            ret_sample = np.abs(np.concatenate(
                [r["bar_returns"] for r in records if r["bar_returns"]]
                or [[]]))
            if len(ret_sample) < cfg.n_min:
                continue
            ret_fit = pl.scan_xmin(ret_sample, pl.ScanConfig(n_min=cfg.n_min),
                                   distance=cfg.distance)
            for rec in records:
                if rec["kind"] != kind or not np.isfinite(rec["r_norm"]):
                    continue
                if rec["r_norm"] < fit["x_m"]:
                    continue
                r = np.asarray(rec["bar_returns"])
                own = r[r < 0] if kind == ev.DRAWDOWN else r[r > 0]
                tail = np.abs(own)[np.abs(own) >= ret_fit.x_m]
                n_large = int(len(tail))
                comp_rows.append({
                    "kind": kind, "r_norm": rec["r_norm"], "n_large": n_large,
                    "contribution": (float(tail.sum() / rec["r_norm"])
                                     if n_large else np.nan),
                })
    _write_csv(outdir / "tail_composition.csv", pd.DataFrame(comp_rows), cfg)
    return contract.label


def _dk_tail(sample: np.ndarray, fitted_xm: float, tail_size: int):
    """Exponential tail for the DK test: the N largest observations anchored
    at the next-largest value, falling back to the fitted bound for small
    samples."""
    s = np.sort(sample)[::-1]
    if len(s) > tail_size:
        x_m = s[tail_size]
        return ot.to_exponential(s[:tail_size], x_m)
    return ot.to_exponential(s[s >= fitted_xm], fitted_xm)


def _stage_dk(contract: ContractConfig, cfg: RunConfig):
    outdir = cfg.out / contract.label
    frame = _read_csv(outdir / "events.csv")
    fit_doc = json.loads((outdir / "fit.json").read_text())["fits"]
    results = {}
    for kind in (ev.DRAWDOWN, ev.DRAWUP):
        fit = fit_doc.get(kind, {})
        if "x_m" not in fit:
            continue
        sample = frame.loc[frame["kind"] == kind, "r_norm"].dropna().to_numpy()
        tail = _dk_tail(sample, fit["x_m"], cfg.tail_size)
        r_max = min(cfg.r_max, len(tail) - 2)
        modified = ot.modified_dk_test(tail, p0=cfg.p0, r_max=r_max)
        original = ot.original_dk_test(tail, p0=cfg.p0, r_max=r_max)
        results[kind] = {"modified": modified.to_dict(),
                         "original": original.to_dict(),
                         "outliers": _outlier_rows(frame, kind, tail, modified.r)}
    _write_json(outdir / "dk.json", {"results": results}, cfg)
    return contract.label


def _outlier_rows(frame: pd.DataFrame, kind: str, tail: ot.ExponentialTail,
                  r: int) -> list:
    sub = frame.loc[frame["kind"] == kind].sort_values(
        "r_norm", ascending=False, kind="stable")
    rows = []
    for k in range(min(r, len(sub))):
        rec = sub.iloc[k]
        rows.append({"timestamp": rec["timestamp"], "r_norm": float(rec["r_norm"]),
                     "y": float(tail.y[k])})
    return rows


def _auto_u_rank(tail: ot.ExponentialTail, p0: float, r_max: int) -> int:
    """Iterative re-fitting extension: r converges to the largest flagged rank."""
    r = 1
    for _ in range(r_max + 1):
        res = ot.u_test(tail, r)
        flagged = [k + 1 for k, p in enumerate(res.p_values) if p < p0]
        new_r = min(max(flagged) + 1 if flagged else 0 + 1, r_max, len(tail) - 2)
        if flagged and max(flagged) == r:
            new_r = r
        if new_r == r:
            break
        r = max(new_r, 1)
    res = ot.u_test(tail, r)
    flagged = [k + 1 for k, p in enumerate(res.p_values) if p < p0]
    return max(flagged) if flagged else 0


def _stage_utest(contract: ContractConfig, cfg: RunConfig):
    outdir = cfg.out / contract.label
    frame = _read_csv(outdir / "events.csv")
    fit_doc = json.loads((outdir / "fit.json").read_text())["fits"]
    results = {}
    for kind in (ev.DRAWDOWN, ev.DRAWUP):
        fit = fit_doc.get(kind, {})
        if "x_m" not in fit:
            continue
        sample = frame.loc[frame["kind"] == kind, "r_norm"].dropna().to_numpy()
        tail = _dk_tail(sample, fit["x_m"], cfg.tail_size)
        if cfg.u_rank == "auto":
            r = _auto_u_rank(tail, cfg.p0, min(cfg.r_max, len(tail) - 2))
        else:
            r = min(int(cfg.u_rank), len(tail) - 2)
        res = ot.u_test(tail, max(r, 0))
        results[kind] = {"u": res.to_dict(), "rank_mode": cfg.u_rank,
                         "outliers": _outlier_rows(
                             frame, kind, tail,
                             sum(1 for p in res.p_values if p < cfg.p0))}
    _write_json(outdir / "utest.json", {"results": results}, cfg)
    return contract.label


def _stage_taildep(cfg: RunConfig):
    pooled = _pooled_events(cfg)
    rows = []
    if pooled.empty:
        _write_csv(cfg.out / "tail_dependence.csv",
                   pd.DataFrame(columns=["kind", "x", "y", "u", "lambda",
                                         "n_cond"]), cfg)
        return
    pairs = (("r_norm", "v_norm"), ("r_norm", "tau_s"))
    for kind in (ev.DRAWDOWN, ev.DRAWUP):
        sub = pooled.loc[pooled["kind"] == kind].dropna(subset=["r_norm"])
        for xf, yf in pairs:
            grid = [u for u in cfg.u_grid if len(sub) >= 1.0 / (1.0 - u)]
            if not grid:
                continue
            curve = td.lambda_curve(sub[xf].to_numpy(), sub[yf].to_numpy(), grid)
            for rec in curve.to_rows():
                rows.append({"kind": kind, "x": xf, "y": yf, **rec})
    _write_csv(cfg.out / "tail_dependence.csv", pd.DataFrame(rows), cfg)


def _stage_nullsim(contract: ContractConfig, cfg: RunConfig):
    bars, _ = _load_bars(contract, cfg)
    outdir = cfg.out / contract.label
    rows = []
    real = ev.detect_series(bars, cfg.epsilon_config, contract=contract.label)
    for rep in range(cfg.n_reshuffles):
        shuffled = [
            nm.reshuffle_day(b, nm.SeededGenerator(cfg.seed, rep * 100003 + i))
            for i, b in enumerate(bars)
        ]
        null_series = ev.detect_series(shuffled, cfg.epsilon_config,
                                       contract=contract.label)
        rows.append({"replicate": rep, "events_real": len(real.events),
                     "events_null": len(null_series.events)})
        if rep == 0:
            _write_csv(outdir / "null_events.csv",
                       _event_frame(null_series, contract.session, cfg.dt), cfg)
    _write_json(outdir / "nullsim.json",
                {"replicates": rows,
                 "generator": nm.GENERATOR_ALGORITHM}, cfg)
    return contract.label


def _run_per_contract(stage_fn, cfg: RunConfig):
    if cfg.workers > 1 and len(cfg.contracts) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            list(pool.map(stage_fn, cfg.contracts, [cfg] * len(cfg.contracts)))
    else:
        for contract in cfg.contracts:
            stage_fn(contract, cfg)


# ---------------------------------------------------------------- commands


_CONFIG_OPTIONS = [
    click.option("--config", "config_path", required=True,
                 type=click.Path(path_type=Path)),
    click.option("--out", type=click.Path(path_type=Path), default=None),
    click.option("--seed", type=int, default=None),
    click.option("--workers", type=int, default=None),
    click.option("--dt", type=float, default=None),
    click.option("--eps0", type=float, default=None),
    click.option("--p0", type=float, default=None),
]


def _with_config(fn):
    for opt in reversed(_CONFIG_OPTIONS):
        fn = opt(fn)
    return fn


def _load_or_exit(config_path, **overrides) -> RunConfig:
    try:
        return load_config(config_path, overrides)
    except ConfigError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)


def _guarded(fn, cfg: RunConfig):
    try:
        fn(cfg)
    except (FileNotFoundError,) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    except Exception as exc:  # analysis failure
        click.echo(f"analysis error: {exc}", err=True)
        sys.exit(1)


@click.group()
def main():
    """Intraday drawdown/drawup analysis pipeline."""


def _register(name, runner):
    @main.command(name=name)
    @_with_config
    def _cmd(config_path, **overrides):
        cfg = _load_or_exit(config_path, **overrides)
        _guarded(runner, cfg)


_register("clean", lambda cfg: _run_per_contract(_stage_clean, cfg))
_register("detect", lambda cfg: (
    _run_per_contract(_stage_detect, cfg),
    _write_csv(cfg.out / "pooled_events.csv", _pooled_events(cfg), cfg)))
_register("fit", lambda cfg: _run_per_contract(_stage_fit, cfg))
_register("dk", lambda cfg: _run_per_contract(_stage_dk, cfg))
_register("utest", lambda cfg: _run_per_contract(_stage_utest, cfg))
_register("taildep", _stage_taildep)
_register("nullsim", lambda cfg: _run_per_contract(_stage_nullsim, cfg))


def _run_all(cfg: RunConfig):
    _run_per_contract(_stage_clean, cfg)
    _run_per_contract(_stage_detect, cfg)
    _write_csv(cfg.out / "pooled_events.csv", _pooled_events(cfg), cfg)
    _run_per_contract(_stage_fit, cfg)
    _run_per_contract(_stage_dk, cfg)
    _run_per_contract(_stage_utest, cfg)
    _stage_taildep(cfg)
    _run_per_contract(_stage_nullsim, cfg)


_register("run-all", _run_all)


if __name__ == "__main__":
    main()
