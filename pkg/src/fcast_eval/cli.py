"""``fcast-eval`` command line: simulate, fit, predict, calibrate, skill, rejection-study."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from fcast_eval import __version__, calibration, ingest, models, plots, simulator, skill
from fcast_eval.core import ForecastCurve, TimeGrid, interpolate_to_grid

log = logging.getLogger("fcast_eval")

SIM_FORECASTERS = ("Ora", "OraBM1", "OraBM2", "OraOU1", "OraOU2")


@dataclass
class RunConfig:
    grid_points: int = 201
    bins: int = 10
    alpha: float = 0.05
    d: int = 10
    mc_draws: int = 100_000
    smoother_window: float = 0.05
    link: str | None = None  # logit for real data, probit for simulation
    seed: int = 0
    threads: int | None = None
    events: str | None = None
    outcomes: str | None = None
    out_dir: str = "."
    format: str = "csv"

    def validate(self) -> None:
        if self.grid_points < 3:
            raise UsageError("--grid-points must be >= 3")
        if self.bins < 2:
            raise UsageError("--bins must be >= 2")
        if not 0 < self.alpha < 1:
            raise UsageError("--alpha must be in (0, 1)")
        if self.d < 1:
            raise UsageError("--d must be >= 1")
        if self.mc_draws < 1:
            raise UsageError("--mc-draws must be >= 1")
        if not 0 < self.smoother_window <= 1:
            raise UsageError("smoother_window must be in (0, 1]")
        if self.link not in (None, "logit", "probit"):
            raise UsageError("--link must be logit or probit")
        if self.format not in ("csv", "json"):
            raise UsageError("--format must be csv or json")

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid.uniform(self.grid_points)


class UsageError(Exception):
    pass


# --- output helpers ------------------------------------------------------------

def _num(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return "" if np.isnan(v) else repr(float(v))
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


def _json_safe(obj):
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _json_safe(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return None if np.isnan(obj) else float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path: Path, doc: dict) -> Path:
    path.write_text(json.dumps(_json_safe(doc), indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return path


def write_table(out_dir: Path, stem: str, columns, rows, meta: dict, fmt: str) -> Path:
    if fmt == "json":
        doc = {"config": meta, "columns": list(columns),
               "rows": [[_num(v) if not isinstance(v, str) else v for v in r] for r in rows]}
        return write_json(out_dir / f"{stem}.json", doc)
    path = out_dir / f"{stem}.csv"
    with path.open("w", newline="", encoding="utf-8") as fh:
        fh.write("# " + json.dumps(_json_safe(meta), sort_keys=True) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_num(v) for v in r])
    return path


def _meta(cfg: RunConfig, command: str, **extra) -> dict:
    doc = {"command": command, "version": __version__, **asdict(cfg), **extra}
    doc.pop("threads", None)  # does not affect results
    return doc


# --- input helpers -------------------------------------------------------------

def _require(path: str | None, what: str) -> Path:
    if not path:
        raise UsageError(f"--{what} is required")
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"{what} file not found: {p}")
    return p


def _load(cfg: RunConfig):
    events = _require(cfg.events, "events")
    outcomes = _require(cfg.outcomes, "outcomes")
    games = ingest.load_games(events, outcomes, cfg.grid)
    if not games:
        raise ValueError("no games")
    log.info("loaded %d games from %s", len(games), events)
    return games


def read_forecast_file(path, games, grid: TimeGrid) -> dict[str, np.ndarray]:
    """Forecast file: ``game_id,t,<method>[,<method>...]`` -> {method: (N, K)}."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"forecast file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    header, body = rows[0], rows[1:]
    if header[:2] != ["game_id", "t"]:
        raise ValueError(f"{path}: header must start with game_id,t")
    by_game: dict[str, list] = {}
    for r in body:
        by_game.setdefault(r[0], []).append([float(v) for v in r[1:]])
    out = {}
    for j, name in enumerate(header[2:]):
        mat = []
        for g in games:
            if g.id not in by_game:
                raise ValueError(f"{path}: no forecasts for game {g.id}")
            data = np.array(by_game[g.id])
            mat.append(interpolate_to_grid(data[:, [0, 1 + j]], grid))
        out[name] = np.vstack(mat)
    return out


def _method_matrix(name: str, games, extra: dict[str, np.ndarray]) -> np.ndarray:
    if name in extra:
        return extra[name]
    if name in ("CF", "HomeWP"):
        return models.predict_many(models.fit(models.ModelSpec(name), games), games)
    missing = [g.id for g in games if name not in g.forecasts]
    if missing:
        raise ValueError(f"method {name!r} not found (first game without it: {missing[0]})")
    return np.vstack([g.forecasts[name].values for g in games])


def _extra_forecasts(paths, games, grid) -> dict[str, np.ndarray]:
    out = {}
    for p in paths or []:
        out.update(read_forecast_file(p, games, grid))
    return out


# --- commands ------------------------------------------------------------------

def cmd_simulate(cfg: RunConfig, args) -> list[Path]:
    if args.games is None or args.games < 1:
        raise UsageError("--games must be >= 1")
    out = Path(cfg.out_dir)
    sim_cfg = simulator.SimConfig(args.games, cfg.grid, args.a, args.c, cfg.seed, SIM_FORECASTERS)
    season = simulator.simulate_arrays(sim_cfg)
    streams = season.event_streams(primary="Ora")
    # keep an explicit Ora column alongside the primary forecast column
    streams = [ingest.EventStream(s.game_id, s.t, s.forecast, s.home_score, s.away_score,
                                  s.outcome, s.regulation_end, {"Ora": s.forecast, **s.extra})
               for s in streams]
    meta = json.dumps(_json_safe(_meta(cfg, "simulate", games=args.games, a=sim_cfg.a, c=sim_cfg.c)),
                      sort_keys=True)
    ev, oc = out / "events.csv", out / "outcomes.csv"
    ingest.write_events(ev, streams, comment=meta)
    ingest.write_outcomes(oc, streams, dict(zip(season.ids(), season.rs)), comment=meta)
    log.info("simulated %d games, home win rate %.4f", args.games, season.outcomes.mean())
    return [ev, oc]


def cmd_fit(cfg: RunConfig, args) -> list[Path]:
    games = _load(cfg)
    link = cfg.link or "logit"
    model = models.fit(models.ModelSpec(args.model, models.LinkFunction(link)), games)
    doc = model.to_json()
    doc["config"] = _meta(cfg, "fit", model=args.model, link=link)
    path = Path(args.output) if args.output else Path(cfg.out_dir) / f"model_{args.model}.json"
    write_json(path, doc)
    return [path]


def cmd_predict(cfg: RunConfig, args) -> list[Path]:
    model_path = _require(args.model_file, "model-file")
    model = models.FittedModel.from_json(json.loads(model_path.read_text(encoding="utf-8")))
    if len(model.grid) != cfg.grid_points:
        cfg.grid_points = len(model.grid)
    games = _load(cfg)
    name = args.name or model.spec.kind
    P = models.predict_many(model, games)
    path = Path(cfg.out_dir) / f"forecasts_{name}.csv"
    meta = _meta(cfg, "predict", model_file=str(model_path), name=name)
    t = model.grid.points
    rows = [(g.id, t[j], P[i, j]) for i, g in enumerate(games) for j in range(t.size)]
    with path.open("w", newline="", encoding="utf-8") as fh:
        fh.write("# " + json.dumps(_json_safe(meta), sort_keys=True) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["game_id", "t", name])
        for r in rows:
            w.writerow([_num(v) for v in r])
    return [path]


def cmd_calibrate(cfg: RunConfig, args) -> list[Path]:
    games = _load(cfg)
    grid = games[0].grid
    extra = _extra_forecasts(args.forecasts, games, grid)
    P = _method_matrix(args.method, games, extra)
    y = np.array([g.outcome for g in games])
    res = calibration.calibrate(P, y, m=cfg.bins, alpha=cfg.alpha, smooth=not args.no_smooth,
                                window=cfg.smoother_window, grid=grid, method=args.method)
    meta = _meta(cfg, "calibrate", method=args.method, smooth=not args.no_smooth)
    out = Path(cfg.out_dir)
    verdict = np.where(res.missing, "missing", np.where(res.verdict, "calibrated", "not_calibrated"))
    paths = [
        write_table(out, "calibration_summary", ["t", "u_min", "l_max", "verdict"],
                    zip(grid.points, res.u_min, res.l_max, verdict), meta, cfg.format),
        write_table(out, "calibration_bins", ["t", "bin", "n", "reference", "event_rate", "lower", "upper"],
                    [(grid.points[i], b.index, b.n, b.reference, b.event_rate, b.lower, b.upper)
                     for i, bins in enumerate(res.bins) for b in bins], meta, cfg.format),
        write_table(out, "extremes", ["method", "side", "games", "home_wins", "proportion"],
                    res.extremes.rows, meta, cfg.format),
    ]
    log.info("%s calibrated at %.1f%% of non-missing grid points",
             args.method, 100 * res.calibrated_fraction())
    if args.plot:
        paths.append(out / "calibration_summary.svg")
        plots.calibration_summary_plot(paths[-1], res, f"{args.method}: U_min / L_max")
        paths.append(out / "calibration_scatter.svg")
        plots.calibration_scatter_plot(paths[-1], res, args.plot_t)
    return paths


def cmd_skill(cfg: RunConfig, args) -> list[Path]:
    games = _load(cfg)
    grid = games[0].grid
    extra = _extra_forecasts(args.forecasts, games, grid)
    A = _method_matrix(args.method_a, games, extra)
    B = _method_matrix(args.method_b, games, extra)
    y = np.array([g.outcome for g in games])
    pair = skill.loss_difference(A, B, y, alpha=cfg.alpha, smooth=not args.no_smooth,
                                 window=cfg.smoother_window, grid=grid)
    test = skill.functional_test(A, B, y, d=cfg.d, mc_draws=cfg.mc_draws, seed=cfg.seed,
                                 grid=grid, threads=cfg.threads)
    meta = _meta(cfg, "skill", method_a=args.method_a, method_b=args.method_b,
                 smooth=not args.no_smooth)
    out = Path(cfg.out_dir)
    paths = [
        write_table(out, "skill_curve", ["t", "delta_hat", "ci_lower", "ci_upper"],
                    zip(grid.points, pair.delta_hat, pair.ci_lower, pair.ci_upper), meta, cfg.format),
        write_json(out / "skill_test.json", {**test.to_json(), "n": len(games),
                                             "method_a": args.method_a, "method_b": args.method_b,
                                             "config": meta}),
    ]
    log.info("%s vs %s: statistic %.6g, p = %.4g", args.method_a, args.method_b,
             test.statistic, test.p_value)
    if args.plot:
        paths.append(out / "skill_curve.svg")
        plots.skill_plot(paths[-1], pair, test.p_value, f"{args.method_a} vs {args.method_b}")
    return paths


def cmd_rejection_study(cfg: RunConfig, args) -> list[Path]:
    if args.replications < 1:
        raise UsageError("--replications must be >= 1")
    if args.n < 2:
        raise UsageError("--n must be >= 2")
    link = cfg.link or "probit"
    rows = []
    for pairing in args.pairing:
        rep = simulator.rejection_study(pairing, args.n, args.replications, seed=cfg.seed, d=cfg.d,
                                        mc_draws=cfg.mc_draws, grid=cfg.grid, a=args.a, c=args.c,
                                        link=link, threads=cfg.threads or 1)
        rows.append((rep.pairing, rep.n, rep.replications, rep.rate(0.10), rep.rate(0.05),
                     rep.rate(0.01), rep.seed))
    meta = _meta(cfg, "rejection-study", pairing=args.pairing, n=args.n,
                 replications=args.replications, link=link, a=args.a, c=args.c)
    return [write_table(Path(cfg.out_dir), "rejection_report",
                        ["pairing", "n", "replications", "rate10", "rate5", "rate1", "seed"],
                        rows, meta, cfg.format)]


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "predict": cmd_predict,
    "calibrate": cmd_calibrate,
    "skill": cmd_skill,
    "rejection-study": cmd_rejection_study,
}


# --- argument parsing ----------------------------------------------------------

def _common(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("run configuration (overrides --config)")
    g.add_argument("--config", help="JSON file with RunConfig fields")
    g.add_argument("--seed", type=int)
    g.add_argument("--out-dir")
    g.add_argument("--grid-points", type=int)
    g.add_argument("--bins", type=int)
    g.add_argument("--alpha", type=float)
    g.add_argument("--d", type=int)
    g.add_argument("--mc-draws", type=int)
    g.add_argument("--smoother-window", type=float)
    g.add_argument("--link", choices=["logit", "probit"])
    g.add_argument("--format", choices=["csv", "json"])
    g.add_argument("--threads", type=int, help="worker cap (default: $FCAST_EVAL_THREADS or 1)")
    g.add_argument("--events", help="events CSV")
    g.add_argument("--outcomes", help="outcomes CSV")
    g.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fcast-eval",
        description="Calibration and skill evaluation of continuously updated probability forecasts.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write a simulated season in the events/outcomes format")
    _common(p)
    p.add_argument("--games", type=int, required=True)
    p.add_argument("--a", type=float, default=1.0, help="spread of the relative strength")
    p.add_argument("--c", type=float, default=None, help="offset (default: solved for 0.593)")

    p = sub.add_parser("fit", help="fit a benchmark model and write it as JSON")
    _common(p)
    p.add_argument("--model", required=True, choices=list(models.MODEL_TERMS))
    p.add_argument("--output", help="model JSON path (default OUT_DIR/model_<MODEL>.json)")

    p = sub.add_parser("predict", help="write a fitted model's forecasts for a set of games")
    _common(p)
    p.add_argument("--model-file", required=True)
    p.add_argument("--name", help="method name used in the forecast file")

    p = sub.add_parser("calibrate", help="calibration summary for one method")
    _common(p)
    p.add_argument("--method", default="forecast")
    p.add_argument("--forecasts", action="append", help="extra forecast CSV (repeatable)")
    p.add_argument("--no-smooth", action="store_true", help="skip the moving-average smoother")
    p.add_argument("--plot", action="store_true", help="also write SVG plots")
    p.add_argument("--plot-t", type=float, default=0.5, help="game time of the scatter plot")

    p = sub.add_parser("skill", help="compare two methods' Brier skill")
    _common(p)
    p.add_argument("--method-a", required=True)
    p.add_argument("--method-b", required=True)
    p.add_argument("--forecasts", action="append", help="extra forecast CSV (repeatable)")
    p.add_argument("--no-smooth", action="store_true", help="skip the moving-average smoother")
    p.add_argument("--plot", action="store_true", help="also write an SVG plot")

    p = sub.add_parser("rejection-study", help="empirical rejection rates on simulated seasons")
    _common(p)
    p.add_argument("--pairing", action="append", required=True, help="e.g. OraBM1:OraBM2 (repeatable)")
    p.add_argument("--n", type=int, default=100, help="games per season")
    p.add_argument("--replications", type=int, default=1000)
    p.add_argument("--a", type=float, default=1.0)
    p.add_argument("--c", type=float, default=None)
    return parser


def resolve_config(args) -> RunConfig:
    cfg = RunConfig()
    if args.config:
        doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
        known = {f.name for f in fields(RunConfig)}
        unknown = set(doc) - known
        if unknown:
            raise UsageError(f"unknown config fields: {sorted(unknown)}")
        for k, v in doc.items():
            setattr(cfg, k, v)
    for f in fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            setattr(cfg, f.name, v)
    if cfg.threads is None and os.environ.get("FCAST_EVAL_THREADS"):
        cfg.threads = int(os.environ["FCAST_EVAL_THREADS"])
    cfg.validate()
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = resolve_config(args)
        Path(cfg.out_dir).mkdir(parents=True, exist_ok=True)
        paths = COMMANDS[args.command](cfg, args)
    except UsageError as exc:
        parser.error(str(exc))
    except (OSError, ValueError) as exc:
        print(f"fcast-eval {args.command}: error: {exc}", file=sys.stderr)
        return 1
    for p in paths:
        log.info("wrote %s", p)
    return 0


if __name__ == "__main__":
    sys.exit(main())
