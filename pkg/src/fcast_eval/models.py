"""Benchmark forecasters: constants and pointwise binary GLMs fit by IRLS.

Every GLM is fit separately at each grid point t; the fits are batched over
t so one IRLS iteration updates all K coefficient vectors at once.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import special

from fcast_eval.core import ForecastCurve, GameRecord, TimeGrid

HOME_WIN_RATE = 0.593
COIN_FLIP = 0.5

P_CLAMP = 1e-6
SEPARATION_ETA = 30.0
MAX_ITER = 25
TOL = 1e-10
MAX_HALVINGS = 30
_EPS = np.finfo(float).eps

INTERCEPT = "(Intercept)"
COVARIATES = ("RS", "ScD", "LS")

# kind -> (has intercept, covariates); None for constant forecasters
MODEL_TERMS: dict[str, tuple[bool, tuple[str, ...]] | None] = {
    "CF": None,
    "HomeWP": None,
    "PgRS": (True, ("RS",)),
    "LS": (True, ("LS",)),
    "ScDnoInt": (False, ("ScD",)),
    "ScD": (True, ("ScD",)),
    "PgRSLS": (True, ("RS", "LS")),
    "PgRSScD": (True, ("RS", "ScD")),
}


class SingularDesignError(ValueError):
    def __init__(self, index: int, t: float):
        super().__init__(f"singular weighted design at grid point {index} (t={t:g})")
        self.index = index
        self.t = t


# --- links -------------------------------------------------------------------

@dataclass(frozen=True)
class LinkFunction:
    kind: str = "logit"

    def __post_init__(self):
        if self.kind not in ("logit", "probit"):
            raise ValueError(f"unknown link {self.kind!r}")

    def inverse(self, eta):
        return special.expit(eta) if self.kind == "logit" else special.ndtr(eta)

    def __call__(self, mu):
        return special.logit(mu) if self.kind == "logit" else special.ndtri(mu)

    def derivative(self, eta):
        """d mu / d eta, floored at machine epsilon."""
        if self.kind == "logit":
            e = np.exp(-np.abs(eta))
            d = e / (1.0 + e) ** 2
        else:
            d = np.exp(-0.5 * np.square(eta)) / np.sqrt(2.0 * np.pi)
        return np.maximum(d, _EPS)


# --- specs -------------------------------------------------------------------

@dataclass(frozen=True)
class ModelSpec:
    """A benchmark model. ``covariates``/``intercept`` override the kind's
    defaults, which is how reduced models for variable importance are built."""

    kind: str
    link: LinkFunction = field(default_factory=LinkFunction)
    covariates: tuple[str, ...] | None = None
    intercept: bool | None = None

    def __post_init__(self):
        if isinstance(self.link, str):
            object.__setattr__(self, "link", LinkFunction(self.link))
        if self.kind not in MODEL_TERMS and self.covariates is None:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.covariates is not None:
            object.__setattr__(self, "covariates", tuple(self.covariates))
            bad = [c for c in self.covariates if c not in COVARIATES]
            if bad:
                raise ValueError(f"unknown covariates {bad}")

    @property
    def is_constant(self) -> bool:
        return self.covariates is None and MODEL_TERMS.get(self.kind) is None

    @property
    def has_intercept(self) -> bool:
        if self.intercept is not None:
            return self.intercept
        terms = MODEL_TERMS.get(self.kind)
        return bool(terms and terms[0])

    @property
    def covariate_names(self) -> tuple[str, ...]:
        if self.covariates is not None:
            return self.covariates
        terms = MODEL_TERMS.get(self.kind)
        return terms[1] if terms else ()

    @property
    def terms(self) -> tuple[str, ...]:
        return ((INTERCEPT,) if self.has_intercept else ()) + self.covariate_names

    def drop(self, position: int) -> "ModelSpec":
        covs = list(self.covariate_names)
        del covs[position]
        return ModelSpec(f"{self.kind}-{self.covariate_names[position]}", self.link,
                         tuple(covs), self.has_intercept)

    def constant(self) -> float:
        return HOME_WIN_RATE if self.kind == "HomeWP" else COIN_FLIP

    def to_dict(self) -> dict:
        return {"kind": self.kind, "link": self.link.kind,
                "covariates": list(self.covariate_names), "intercept": self.has_intercept}


def design(games: Sequence[GameRecord], spec: ModelSpec) -> np.ndarray:
    """Design tensor of shape (K, N, p) for the ModelSpec terms."""
    k = len(games[0].grid)
    n = len(games)
    scd = np.vstack([g.scd.values for g in games]).T  # (K, N)
    rs = np.array([g.rs for g in games], dtype=float)
    cols = []
    for term in spec.terms:
        if term == INTERCEPT:
            cols.append(np.ones((k, n)))
        elif term == "RS":
            cols.append(np.broadcast_to(rs, (k, n)))
        elif term == "ScD":
            cols.append(scd)
        elif term == "LS":
            cols.append(np.sign(scd))
    return np.stack(cols, axis=-1)


def outcomes_of(games: Sequence[GameRecord]) -> np.ndarray:
    return np.array([g.outcome for g in games], dtype=float)


# --- IRLS --------------------------------------------------------------------

def aliased_columns(X: np.ndarray, rtol: float = 1e-9) -> np.ndarray:
    """Columns linearly dependent on earlier ones, per grid point (K, p).

    Sequential Gram-Schmidt, mirroring the pivot-free aliasing rule of
    standard GLM software: a later duplicate is aliased, the first kept.
    """
    k, n, p = X.shape
    basis = np.zeros((k, n, p))
    aliased = np.zeros((k, p), dtype=bool)
    for j in range(p):
        col = X[:, :, j].astype(float)
        norm0 = np.linalg.norm(col, axis=1)
        r = col.copy()
        for i in range(j):
            q = basis[:, :, i]
            r -= np.sum(q * r, axis=1, keepdims=True) * q
        norm = np.linalg.norm(r, axis=1)
        bad = (norm0 == 0) | (norm <= rtol * np.maximum(norm0, 1.0))
        aliased[:, j] = bad
        with np.errstate(invalid="ignore", divide="ignore"):
            basis[:, :, j] = np.where(bad[:, None], 0.0, r / norm[:, None])
    return aliased


def _loglik(y, mu):
    return np.sum(y * np.log(mu) + (1.0 - y) * np.log1p(-mu), axis=-1)


@dataclass
class IRLSResult:
    beta: np.ndarray  # (K, p)
    aliased: np.ndarray  # (K, p)
    separated: np.ndarray  # (K,)
    converged: np.ndarray  # (K,)
    iterations: np.ndarray  # (K,)
    loglik: np.ndarray  # (K,)
    trace: list[np.ndarray]  # loglik after each iteration, each (K,)


def irls(
    X: np.ndarray,
    y: np.ndarray,
    link: LinkFunction,
    times: np.ndarray | None = None,
    on_singular: str = "alias",
    max_iter: int = MAX_ITER,
    tol: float = TOL,
) -> IRLSResult:
    """Pointwise binomial GLM fits, batched over the leading axis of ``X``.

    ``X`` has shape (K, N, p), ``y`` shape (N,). Fitted probabilities are
    clamped to [1e-6, 1 - 1e-6]. A grid point whose linear predictor exceeds
    30 in absolute value is frozen and flagged as separated. With
    ``on_singular="raise"`` aliased columns raise SingularDesignError;
    with ``"alias"`` they get coefficient 0.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    k, n, p = X.shape
    times = np.arange(k, dtype=float) if times is None else np.asarray(times)
    aliased = aliased_columns(X)
    if on_singular == "raise" and aliased.any():
        idx = int(np.flatnonzero(aliased.any(axis=1))[0])
        raise SingularDesignError(idx, float(times[idx]))
    Xa = np.where(aliased[:, None, :], 0.0, X)
    pad = np.zeros((k, p, p))
    pad[:, np.arange(p), np.arange(p)] = aliased

    def probs(eta):
        return np.clip(link.inverse(eta), P_CLAMP, 1.0 - P_CLAMP)

    def predictor(beta, idx):
        return np.einsum("knp,kp->kn", Xa[idx], beta)

    def wls_step(eta, idx):
        mu = probs(eta)
        d = link.derivative(eta)
        w = d * d / (mu * (1.0 - mu))
        z = eta + (y - mu) / d
        xw = Xa[idx] * w[:, :, None]
        A = np.einsum("knp,knq->kpq", xw, Xa[idx]) + pad[idx]
        b = np.einsum("knp,kn->kp", xw, z)
        try:
            return np.linalg.solve(A, b[:, :, None])[:, :, 0]
        except np.linalg.LinAlgError:
            pos = np.flatnonzero(idx) if idx.dtype == bool else np.arange(k)[idx]
            bad = [i for i, a in zip(pos, A) if np.linalg.matrix_rank(a) < p]
            i = int(bad[0] if bad else pos[0])
            raise SingularDesignError(i, float(times[i])) from None

    everything = np.ones(k, dtype=bool)
    mu0 = (y + 0.5) / 2.0
    beta = wls_step(np.broadcast_to(link(mu0), (k, n)), everything)
    eta = predictor(beta, everything)
    ll = _loglik(y, probs(eta))
    separated = np.max(np.abs(eta), axis=1) > SEPARATION_ETA
    done = separated.copy()
    converged = np.zeros(k, dtype=bool)
    iterations = np.ones(k, dtype=int)
    trace = [ll.copy()]

    for _ in range(max_iter - 1):
        act = ~done
        if not act.any():
            break
        old_b, old_eta, old_ll = beta[act], eta[act], ll[act]
        new_b = wls_step(old_eta, act)
        new_eta = predictor(new_b, act)
        new_ll = _loglik(y, probs(new_eta))
        for _h in range(MAX_HALVINGS):
            worse = new_ll < old_ll
            if not worse.any():
                break
            new_b[worse] = 0.5 * (new_b[worse] + old_b[worse])
            sub = np.flatnonzero(act)[worse]
            new_eta[worse] = np.einsum("knp,kp->kn", Xa[sub], new_b[worse])
            new_ll[worse] = _loglik(y, probs(new_eta[worse]))
        stuck = new_ll < old_ll
        new_b[stuck], new_eta[stuck], new_ll[stuck] = old_b[stuck], old_eta[stuck], old_ll[stuck]

        rel = np.abs(new_ll - old_ll) / (np.abs(new_ll) + 0.1)
        beta[act], eta[act], ll[act] = new_b, new_eta, new_ll
        iterations[act] += 1
        sep = np.max(np.abs(new_eta), axis=1) > SEPARATION_ETA
        conv = (rel < tol) | stuck
        separated[act] |= sep
        converged[act] |= conv & ~sep
        done[act] |= sep | conv
        trace.append(ll.copy())

    return IRLSResult(beta, aliased, separated, converged, iterations, ll, trace)


# --- fitted models -----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FittedModel:
    spec: ModelSpec
    grid: TimeGrid
    coefficients: np.ndarray  # (K, p); empty second axis for constant models
    aliased: np.ndarray
    separated: np.ndarray
    converged: np.ndarray
    iterations: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    @property
    def terms(self) -> tuple[str, ...]:
        return self.spec.terms

    def to_json(self) -> dict:
        doc = {
            "spec": self.spec.to_dict(),
            "link": self.spec.link.kind,
            "grid": self.grid.points.tolist(),
            "terms": list(self.terms),
            "coefficients": self.coefficients.tolist(),
            "aliased": self.aliased.tolist(),
            "separated": self.separated.tolist(),
            "converged": self.converged.tolist(),
            "iterations": self.iterations.tolist(),
            "diagnostics": {
                k: (v.tolist() if isinstance(v, np.ndarray) else
                    {name: c.tolist() for name, c in v.items()} if isinstance(v, dict) else v)
                for k, v in self.diagnostics.items()
            },
        }
        if self.spec.is_constant:
            doc["constant"] = self.spec.constant()
        return _nan_to_none(doc)

    @classmethod
    def from_json(cls, doc: dict) -> "FittedModel":
        s = doc["spec"]
        kind = s["kind"]
        if kind in MODEL_TERMS:
            spec = ModelSpec(kind, LinkFunction(doc["link"]))
        else:
            spec = ModelSpec(kind, LinkFunction(doc["link"]), tuple(s["covariates"]), s["intercept"])
        grid = TimeGrid(np.array(doc["grid"]))
        p = len(spec.terms)
        coef = np.array(doc["coefficients"], dtype=float).reshape(len(grid), p)
        diags = {}
        for k, v in doc.get("diagnostics", {}).items():
            if isinstance(v, dict):
                diags[k] = {n: _none_to_nan(c) for n, c in v.items()}
            else:
                diags[k] = _none_to_nan(v)
        return cls(
            spec, grid, coef,
            np.array(doc["aliased"], dtype=bool).reshape(len(grid), p),
            np.array(doc["separated"], dtype=bool),
            np.array(doc["converged"], dtype=bool),
            np.array(doc["iterations"], dtype=int),
            diags,
        )

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1, sort_keys=True)

    @classmethod
    def loads(cls, text: str) -> "FittedModel":
        return cls.from_json(json.loads(text))


def _nan_to_none(obj):
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    if isinstance(obj, list):
        return [_nan_to_none(v) for v in obj]
    if isinstance(obj, dict):
        return {k: _nan_to_none(v) for k, v in obj.items()}
    return obj


def _none_to_nan(values):
    return np.array([np.nan if v is None else v for v in values], dtype=float)


def fit(spec: ModelSpec, training: Sequence[GameRecord], on_singular: str = "alias") -> FittedModel:
    """Fit ``spec`` pointwise at every grid time of the training games."""
    if len(training) == 0:
        raise ValueError("no games")
    grid = training[0].grid
    if any(g.grid != grid for g in training):
        raise ValueError("training games are on different grids")
    k = len(grid)
    if spec.is_constant:
        empty = np.zeros((k, 0))
        return FittedModel(spec, grid, empty, empty.astype(bool), np.zeros(k, bool),
                           np.ones(k, bool), np.zeros(k, int))
    y = outcomes_of(training)
    res = irls(design(training, spec), y, spec.link, grid.points, on_singular)
    model = FittedModel(spec, grid, res.beta, res.aliased, res.separated,
                        res.converged, res.iterations)
    model.diagnostics["pseudo_r2"] = pseudo_r2(model, training)
    return model


def _linear_predictor(model: FittedModel, games: Sequence[GameRecord]) -> np.ndarray:
    """(K, N) linear predictors of a GLM model on ``games``."""
    for g in games:
        if g.grid != model.grid:
            raise ValueError(f"game {g.id} is not on the model's grid")
    return np.einsum("knp,kp->kn", design(games, model.spec), model.coefficients)


def predict_many(model: FittedModel, games: Sequence[GameRecord]) -> np.ndarray:
    """Forecast matrix of shape (N, K)."""
    k = len(model.grid)
    if model.spec.is_constant:
        for g in games:
            if g.grid != model.grid:
                raise ValueError(f"game {g.id} is not on the model's grid")
        return np.full((len(games), k), model.spec.constant())
    eta = _linear_predictor(model, games)
    return np.clip(model.spec.link.inverse(eta), P_CLAMP, 1.0 - P_CLAMP).T


def predict(model: FittedModel, game: GameRecord) -> ForecastCurve:
    return ForecastCurve(model.grid, predict_many(model, [game])[0])


def _null_loglik(y: np.ndarray) -> float:
    ybar = np.clip(y.mean(), P_CLAMP, 1.0 - P_CLAMP)
    return float(_loglik(y, np.full_like(y, ybar)))


def pseudo_r2(model: FittedModel, data: Sequence[GameRecord]) -> np.ndarray:
    """McFadden pseudo-R^2 against the intercept-only fit on ``data``.

    NaN where every outcome is identical (null log-likelihood zero).
    """
    if len(data) == 0:
        raise ValueError("no games")
    y = outcomes_of(data)
    k = len(model.grid)
    if y.min() == y.max():
        return np.full(k, np.nan)
    p = predict_many(model, data).T  # (K, N)
    return 1.0 - _loglik(y, p) / _null_loglik(y)


def variable_importance(model: FittedModel, data: Sequence[GameRecord]) -> dict[str, dict[str, np.ndarray]]:
    """Drop-one pseudo-R^2 loss per covariate.

    Returns ``{"raw": {name: curve}, "normalized": {name: curve}}``; the
    normalized curves sum to the full model's pseudo-R^2 at every t.
    """
    names = model.spec.covariate_names
    if len(names) < 2:
        raise ValueError("variable importance needs a model with at least 2 covariates")
    full = pseudo_r2(model, data)
    labels = [n if names.count(n) == 1 else f"{n}#{i + 1}" for i, n in enumerate(names)]
    raw = {}
    for i, label in enumerate(labels):
        reduced = fit(model.spec.drop(i), data)
        raw[label] = np.maximum(full - pseudo_r2(reduced, data), 0.0)
    total = sum(raw.values())
    with np.errstate(invalid="ignore", divide="ignore"):
        scale = np.where(total > 0, full / total, 0.0)
    normalized = {label: r * scale for label, r in raw.items()}
    return {"raw": raw, "normalized": normalized}
