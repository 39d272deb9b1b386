"""Event-file parsing and preprocessing.

Events CSV: ``game_id,t,forecast,home_score,away_score`` followed by any
number of extra forecast columns (one per additional method). Outcomes CSV:
``game_id,home_win,regulation_end`` with an optional ``rs`` column that
overrides the pre-game-forecast proxy for relative strength.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from fcast_eval.core import ForecastCurve, GameRecord, ScoreCurve, TimeGrid, interpolate_to_grid

log = logging.getLogger(__name__)

EVENT_COLUMNS = ("game_id", "t", "forecast", "home_score", "away_score")
OUTCOME_COLUMNS = ("game_id", "home_win", "regulation_end")


class IngestError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class EventStream:
    game_id: str
    t: np.ndarray
    forecast: np.ndarray
    home_score: np.ndarray
    away_score: np.ndarray
    outcome: int
    regulation_end: float = 1.0
    extra: Mapping[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        for name in ("t", "forecast", "home_score", "away_score"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        n = self.t.size
        if any(getattr(self, k).size != n for k in ("forecast", "home_score", "away_score")):
            raise IngestError(f"game {self.game_id}: ragged event columns")
        extra = {k: np.asarray(v, dtype=float) for k, v in self.extra.items()}
        if any(v.size != n for v in extra.values()):
            raise IngestError(f"game {self.game_id}: ragged forecast columns")
        object.__setattr__(self, "extra", extra)

    def __len__(self) -> int:
        return self.t.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, EventStream):
            return NotImplemented
        same = (
            self.game_id == other.game_id
            and self.outcome == other.outcome
            and self.regulation_end == other.regulation_end
            and self.extra.keys() == other.extra.keys()
        )
        arrays = ("t", "forecast", "home_score", "away_score")
        return (
            same
            and all(np.array_equal(getattr(self, a), getattr(other, a)) for a in arrays)
            and all(np.array_equal(self.extra[k], other.extra[k]) for k in self.extra)
        )

    __hash__ = None

    def validate(self) -> None:
        """Raise IngestError if the stream violates the file invariants."""
        if len(self) == 0:
            raise IngestError(f"game {self.game_id}: no events")
        if np.any(np.diff(self.t) < 0):
            raise IngestError(f"game {self.game_id}: events not sorted by t")
        if np.any((self.t < 0) | (self.t > 1)):
            raise IngestError(f"game {self.game_id}: t outside [0, 1]")
        for name, f in [("forecast", self.forecast), *self.extra.items()]:
            if np.any(~np.isfinite(f)) or np.any((f < 0) | (f > 1)):
                raise IngestError(f"game {self.game_id}: {name} outside [0, 1]")
        for side, s in (("home", self.home_score), ("away", self.away_score)):
            if np.any(s < 0) or np.any(np.diff(s) < 0):
                raise IngestError(f"game {self.game_id}: {side} score not monotone")


def merge_simultaneous(stream: EventStream) -> EventStream:
    """Collapse events sharing a time into one.

    Forecasts are averaged; scores are taken from the last event in file order.
    """
    t = stream.t
    if t.size < 2 or np.all(np.diff(t) != 0):
        return stream
    starts = np.flatnonzero(np.concatenate([[True], np.diff(t) != 0]))
    ends = np.append(starts[1:], t.size) - 1
    counts = ends - starts + 1

    def mean_by_group(x):
        return np.add.reduceat(x, starts) / counts

    return replace(
        stream,
        t=t[starts],
        forecast=mean_by_group(stream.forecast),
        home_score=stream.home_score[ends],
        away_score=stream.away_score[ends],
        extra={k: mean_by_group(v) for k, v in stream.extra.items()},
    )


def truncate_overtime(stream: EventStream) -> EventStream:
    """Drop events after regulation and rescale regulation time to [0, 1]."""
    end = stream.regulation_end
    if not end > 0:
        raise IngestError(f"game {stream.game_id}: regulation_end must be > 0, got {end}")
    if end == 1.0:
        return stream
    keep = stream.t <= end
    if not np.any(keep):
        raise IngestError(f"game {stream.game_id}: no regulation events")
    return replace(
        stream,
        t=stream.t[keep] / end,
        forecast=stream.forecast[keep],
        home_score=stream.home_score[keep],
        away_score=stream.away_score[keep],
        extra={k: v[keep] for k, v in stream.extra.items()},
        regulation_end=1.0,
    )


def to_game_record(
    stream: EventStream,
    grid: TimeGrid,
    method_name: str = "forecast",
    rs: float | None = None,
) -> GameRecord:
    """Interpolate a preprocessed stream onto ``grid``.

    ``rs`` defaults to the forecast curve at t=0 (the pre-game probability).
    """
    def curve(values):
        return interpolate_to_grid(np.column_stack([stream.t, values]), grid)

    main = curve(stream.forecast)
    forecasts = {method_name: ForecastCurve(grid, main)}
    for name, values in stream.extra.items():
        forecasts[name] = ForecastCurve(grid, curve(values))
    scd = ScoreCurve(grid, curve(stream.home_score - stream.away_score))
    return GameRecord(
        id=stream.game_id,
        outcome=int(stream.outcome),
        rs=float(main[0]) if rs is None else float(rs),
        scd=scd,
        forecasts=forecasts,
    )


# --- file IO -----------------------------------------------------------------

def _data_rows(fh) -> Iterable[list[str]]:
    for row in csv.reader(fh):
        if not row or row[0].startswith("#"):
            continue
        yield row


def read_outcomes(path) -> dict[str, dict]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"outcomes file not found: {path}")
    out: dict[str, dict] = {}
    with path.open(newline="", encoding="utf-8") as fh:
        rows = _data_rows(fh)
        header = next(rows, None)
        if header is None:
            return out
        header = [h.strip() for h in header]
        missing = [c for c in OUTCOME_COLUMNS if c not in header]
        if missing:
            raise IngestError(f"{path}: missing outcome columns {missing}")
        col = {h: i for i, h in enumerate(header)}
        for row in rows:
            gid = row[col["game_id"]]
            try:
                rec = {
                    "home_win": int(row[col["home_win"]]),
                    "regulation_end": float(row[col["regulation_end"]]),
                }
                if "rs" in col and row[col["rs"]] != "":
                    rec["rs"] = float(row[col["rs"]])
            except (ValueError, IndexError) as exc:
                log.warning("skipping outcome row for game %s: %s", gid, exc)
                continue
            if rec["home_win"] not in (0, 1):
                log.warning("skipping game %s: home_win must be 0 or 1", gid)
                continue
            out[gid] = rec
    return out


def read_events(path, outcomes: Mapping[str, dict]) -> tuple[list[EventStream], list[tuple[str, str]]]:
    """Parse an events file into streams.

    Returns ``(streams, skipped)`` where ``skipped`` lists ``(game_id, reason)``
    for games that could not be parsed or violate the file invariants.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"events file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = _data_rows(fh)
        header = next(rows, None)
        if header is None:
            return [], []
        header = [h.strip() for h in header]
        if tuple(header[:5]) != EVENT_COLUMNS:
            raise IngestError(f"{path}: header must start with {','.join(EVENT_COLUMNS)}")
        extras = header[5:]
        grouped: dict[str, list[list[str]]] = {}
        for row in rows:
            grouped.setdefault(row[0], []).append(row)

    streams, skipped = [], []
    for gid, game_rows in grouped.items():
        if gid not in outcomes:
            skipped.append((gid, "no outcome"))
            continue
        try:
            data = np.array([[float(v) for v in r[1:]] for r in game_rows], dtype=float)
            if data.shape[1] != len(header) - 1:
                raise IngestError(f"game {gid}: wrong number of columns")
            oc = outcomes[gid]
            stream = EventStream(
                game_id=gid,
                t=data[:, 0],
                forecast=data[:, 1],
                home_score=data[:, 2],
                away_score=data[:, 3],
                outcome=oc["home_win"],
                regulation_end=oc["regulation_end"],
                extra={name: data[:, 4 + j] for j, name in enumerate(extras)},
            )
            stream.validate()
        except (ValueError, IndexError) as exc:
            skipped.append((gid, str(exc)))
            continue
        streams.append(stream)
    for gid, reason in skipped:
        log.warning("skipped game %s: %s", gid, reason)
    return streams, skipped


def write_events(path, streams: Iterable[EventStream], comment: str | None = None) -> None:
    streams = list(streams)
    extras = list(streams[0].extra) if streams else []
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*EVENT_COLUMNS, *extras])
        for s in streams:
            for i in range(len(s)):
                w.writerow([
                    s.game_id,
                    repr(float(s.t[i])),
                    repr(float(s.forecast[i])),
                    _fmt_score(s.home_score[i]),
                    _fmt_score(s.away_score[i]),
                    *(repr(float(s.extra[k][i])) for k in extras),
                ])


def write_outcomes(path, streams: Iterable[EventStream], rs: Mapping[str, float] | None = None,
                   comment: str | None = None) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*OUTCOME_COLUMNS, *(["rs"] if rs is not None else [])])
        for s in streams:
            row = [s.game_id, int(s.outcome), repr(float(s.regulation_end))]
            if rs is not None:
                row.append(repr(float(rs[s.game_id])))
            w.writerow(row)


def _fmt_score(x: float) -> str:
    x = float(x)
    return str(int(x)) if x.is_integer() else repr(x)


def load_games(events_path, outcomes_path, grid: TimeGrid, method_name: str = "forecast") -> list[GameRecord]:
    """Read, merge, truncate and grid every parseable game in a file pair."""
    outcomes = read_outcomes(outcomes_path)
    streams, _ = read_events(events_path, outcomes)
    games = []
    for s in streams:
        try:
            s = truncate_overtime(merge_simultaneous(s))
        except IngestError as exc:
            log.warning("skipped game %s: %s", s.game_id, exc)
            continue
        games.append(to_game_record(s, grid, method_name, rs=outcomes[s.game_id].get("rs")))
    return games
