"""Linear mixed-effects fits for positional drift of surprisal and uniformity.

The model regresses a per-unit response on normalized position, context
condition, their interaction, and log unit length, with a random intercept
and position slope per story:

    y ~ position * condition + log(length) + (1 + position | story)

Estimation maximizes the restricted likelihood over a log-Cholesky
parameterization of the 2x2 random-effect covariance plus log residual
variance, using a quasi-Newton optimizer with fixed restarts. Fixed effects
come from generalized least squares at the optimum; their covariance feeds
Wald z statistics for the per-condition position slopes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.stats import norm

from .contour import normalized_position
from .errors import LmmError
from .metrics import LEVEL_PARAGRAPH, LEVEL_SENTENCE, compute_metrics
from .stats import significance_code
from .trace import Condition, Story

RESPONSE_MEAN_SURPRISAL = "mean_surprisal"
RESPONSE_UID_V = "uid_v"

GRAD_TOL = 1e-6
STEP_TOL = 1e-9
MAX_ITER = 500


@dataclass(frozen=True)
class Observation:
    y: float
    position: float
    condition: Condition
    length: int
    story_id: str


@dataclass(frozen=True)
class LmmSpec:
    response: str = RESPONSE_MEAN_SURPRISAL
    level: str = LEVEL_PARAGRAPH
    baseline_condition: Condition = Condition.U
    reml: bool = True
    max_iter: int = MAX_ITER


@dataclass(frozen=True)
class LmmFit:
    beta_names: tuple[str, ...]
    beta: dict[str, float]
    cov_beta: np.ndarray
    slope_by_condition: dict[Condition, float]
    G: np.ndarray
    sigma2: float
    loglik: float
    converged: bool
    n_obs: int
    n_groups: int
    method: str
    n_iter: int
    deviance_history: tuple[float, ...] = field(default_factory=tuple)

    def slope_se(self, condition: Condition, baseline: Condition) -> float:
        names = list(self.beta_names)
        i_pos = names.index("position")
        if condition == baseline:
            var = self.cov_beta[i_pos, i_pos]
        else:
            i_int = names.index(f"position:condition[{condition.value}]")
            var = (
                self.cov_beta[i_pos, i_pos]
                + self.cov_beta[i_int, i_int]
                + 2.0 * self.cov_beta[i_pos, i_int]
            )
        return math.sqrt(max(var, 0.0))


def _design(
    rows: Sequence[Observation], baseline: Condition
) -> tuple[np.ndarray, np.ndarray, np.ndarray, list[str], list[Condition]]:
    conditions = [c for c in Condition if any(r.condition == c for r in rows)]
    if baseline not in conditions:
        raise LmmError(f"baseline condition {baseline.value} has no rows")
    others = [c for c in conditions if c != baseline]
    names = ["(Intercept)", "position"]
    names += [f"condition[{c.value}]" for c in others]
    names += [f"position:condition[{c.value}]" for c in others]
    names += ["log_length"]
    n, p = len(rows), len(names)
    X = np.zeros((n, p))
    y = np.empty(n)
    Z = np.empty((n, 2))
    for i, r in enumerate(rows):
        if r.length < 1:
            raise LmmError(f"non-positive unit length in story {r.story_id!r}")
        X[i, 0] = 1.0
        X[i, 1] = r.position
        if r.condition != baseline:
            j = others.index(r.condition)
            X[i, 2 + j] = 1.0
            X[i, 2 + len(others) + j] = r.position
        X[i, p - 1] = math.log(r.length)
        y[i] = r.y
        Z[i, 0] = 1.0
        Z[i, 1] = r.position
    rank = np.linalg.matrix_rank(X)
    if rank < p:
        for j in range(1, p + 1):
            if np.linalg.matrix_rank(X[:, :j]) < j:
                raise LmmError(f"singular design: column {names[j - 1]!r} is redundant")
    return X, y, Z, names, conditions


@dataclass
class _GroupStats:
    """Per-story sufficient statistics, stacked over the group axis."""

    XtX_total: np.ndarray   # p x p
    Xty_total: np.ndarray   # p
    yty_total: float
    XtZ: np.ndarray         # g x p x 2
    Zty: np.ndarray         # g x 2
    ZtZ: np.ndarray         # g x 2 x 2
    n_total: int
    n_groups: int


def _group_stats(X: np.ndarray, y: np.ndarray, Z: np.ndarray, groups: list[np.ndarray]):
    XtZ = np.stack([X[idx].T @ Z[idx] for idx in groups])
    Zty = np.stack([Z[idx].T @ y[idx] for idx in groups])
    ZtZ = np.stack([Z[idx].T @ Z[idx] for idx in groups])
    return _GroupStats(
        XtX_total=X.T @ X,
        Xty_total=X.T @ y,
        yty_total=float(y @ y),
        XtZ=XtZ,
        Zty=Zty,
        ZtZ=ZtZ,
        n_total=X.shape[0],
        n_groups=len(groups),
    )


def _chol_from_params(params: np.ndarray) -> tuple[np.ndarray, float]:
    a, b, c, d = params
    L = np.array([[math.exp(a), 0.0], [b, math.exp(c)]])
    return L, math.exp(d)


def _deviance(params: np.ndarray, stats: _GroupStats, p: int, n: int, reml: bool):
    """-2 log (restricted) likelihood with beta profiled out by GLS.

    Everything is vectorized over stories: the per-story capacitance matrix
    ``C = sigma2 I + L' Z'Z L`` is 2x2, so its determinant and inverse have
    closed forms.
    """
    L, sigma2 = _chol_from_params(params)
    WtW = np.einsum("ba,gbc,cd->gad", L, stats.ZtZ, L)
    C = WtW + sigma2 * np.eye(2)
    det = C[:, 0, 0] * C[:, 1, 1] - C[:, 0, 1] * C[:, 1, 0]
    if np.any(det <= 0.0) or sigma2 <= 0.0:
        return None
    Cinv = np.empty_like(C)
    Cinv[:, 0, 0] = C[:, 1, 1]
    Cinv[:, 1, 1] = C[:, 0, 0]
    Cinv[:, 0, 1] = -C[:, 0, 1]
    Cinv[:, 1, 0] = -C[:, 1, 0]
    Cinv /= det[:, None, None]

    XtW = stats.XtZ @ L                       # g x p x 2
    Wty = stats.Zty @ L                       # g x 2  (= L' Zty per group)
    XtW_Cinv = np.einsum("gpa,gab->gpb", XtW, Cinv)
    A = (stats.XtX_total - np.einsum("gpa,gqa->pq", XtW_Cinv, XtW)) / sigma2
    bvec = (stats.Xty_total - np.einsum("gpa,ga->p", XtW_Cinv, Wty)) / sigma2
    cquad = (
        stats.yty_total - float(np.einsum("ga,gab,gb->", Wty, Cinv, Wty))
    ) / sigma2
    logdet_v = (n - 2 * stats.n_groups) * math.log(sigma2) + float(np.log(det).sum())

    sign_a, logdet_a = np.linalg.slogdet(A)
    if sign_a <= 0:
        return None
    beta = np.linalg.solve(A, bvec)
    quad = cquad - float(bvec @ beta)
    if reml:
        dev = logdet_v + logdet_a + quad + (n - p) * math.log(2.0 * math.pi)
    else:
        dev = logdet_v + quad + n * math.log(2.0 * math.pi)
    return dev, beta, A, quad


def fit_lmm(rows: Iterable[Observation], spec: LmmSpec = LmmSpec()) -> LmmFit:
    """Fit the position-by-condition mixed model to per-unit observations.

    Raises :class:`LmmError` for singular designs or unusable grouping; a fit
    that exhausts the iteration budget is returned with ``converged=False``.
    """
    rows = sorted(
        rows, key=lambda r: (r.story_id, r.position, r.condition.value, r.y, r.length)
    )
    if not rows:
        raise LmmError("no observations")
    story_ids = sorted({r.story_id for r in rows})
    if len(story_ids) < 2:
        raise LmmError("at least two stories are required for random effects")
    index_of = {sid: i for i, sid in enumerate(story_ids)}
    groups: list[list[int]] = [[] for _ in story_ids]
    for i, r in enumerate(rows):
        groups[index_of[r.story_id]].append(i)
    for sid, idx in zip(story_ids, groups):
        if len(idx) < 2:
            raise LmmError(f"story {sid!r} has fewer than two observations")

    baseline = spec.baseline_condition
    X, y, Z, names, conditions = _design(rows, baseline)
    n, p = X.shape
    stats = _group_stats(X, y, Z, [np.asarray(g) for g in groups])

    var_y = float(np.var(y)) + 1e-12
    log_sd = 0.5 * math.log(var_y)
    starts = [
        np.array([log_sd - math.log(2.0), 0.0, log_sd - math.log(2.0), math.log(var_y / 2.0)]),
        np.array([log_sd - 2.0, 0.0, log_sd - 2.0, math.log(var_y)]),
        np.array([-5.0, 0.0, -5.0, math.log(var_y)]),
        np.array([log_sd + 0.5, 0.0, log_sd + 0.5, math.log(var_y / 4.0)]),
    ]
    bounds = [(-20.0, 20.0), (-1e6, 1e6), (-20.0, 20.0), (-20.0, 20.0)]

    def objective(params: np.ndarray) -> float:
        out = _deviance(params, stats, p, n, spec.reml)
        if out is None:
            return 1e12
        return out[0]

    best = None
    for start in starts:
        history: list[np.ndarray] = [start.copy()]
        minimize_kwargs = dict(
            method="L-BFGS-B",
            jac="3-point",
            bounds=bounds,
            callback=lambda xk: history.append(np.array(xk)),
            options={"maxiter": spec.max_iter, "gtol": GRAD_TOL, "ftol": 0.0},
        )
        result = minimize(objective, start, **minimize_kwargs)
        grad_norm = float(np.max(np.abs(result.jac))) if result.jac is not None else math.inf
        step = (
            float(np.linalg.norm(history[-1] - history[-2]))
            if len(history) >= 2
            else math.inf
        )
        converged = grad_norm < GRAD_TOL or step < STEP_TOL
        dev_history = tuple(objective(x) for x in history)
        candidate = (result.fun, converged, result.x, result.nit, dev_history)
        if best is None or (candidate[1] and not best[1]) or (
            candidate[1] == best[1] and candidate[0] < best[0]
        ):
            best = candidate
        if converged:
            break
    assert best is not None
    fun, converged, params, n_iter, dev_history = best

    out = _deviance(params, stats, p, n, spec.reml)
    if out is None:
        raise LmmError("optimizer ended in an infeasible region")
    dev, beta, A, quad = out
    L, sigma2 = _chol_from_params(params)
    G = L @ L.T
    cov_beta = np.linalg.inv(A)
    beta_map = {name: float(b) for name, b in zip(names, beta)}
    slopes: dict[Condition, float] = {baseline: beta_map["position"]}
    for c in conditions:
        if c != baseline:
            slopes[c] = beta_map["position"] + beta_map[f"position:condition[{c.value}]"]
    return LmmFit(
        beta_names=tuple(names),
        beta=beta_map,
        cov_beta=cov_beta,
        slope_by_condition=slopes,
        G=G,
        sigma2=sigma2,
        loglik=-0.5 * dev,
        converged=converged,
        n_obs=n,
        n_groups=len(story_ids),
        method="reml" if spec.reml else "ml",
        n_iter=int(n_iter),
        deviance_history=dev_history,
    )


def build_observations(
    stories: Iterable[Story],
    response: str,
    level: str,
    conditions: Sequence[Condition],
    min_sentences_per_paragraph: int = 3,
) -> list[Observation]:
    """Assemble per-unit observations from aligned stories.

    Sentence-level rows are restricted to paragraphs with at least
    ``min_sentences_per_paragraph`` sentences; positions are normalized within
    the unit's parent (sentence within paragraph, paragraph within story).
    """
    if response not in (RESPONSE_MEAN_SURPRISAL, RESPONSE_UID_V):
        raise LmmError(f"unknown response {response!r}")
    if level not in (LEVEL_SENTENCE, LEVEL_PARAGRAPH):
        raise LmmError(f"regression level must be sentence or paragraph, not {level!r}")
    out: list[Observation] = []
    for story in stories:
        rows = compute_metrics(story, level, conditions)
        by_unit: dict[int, list] = {}
        for row in rows:
            by_unit.setdefault(row.unit_index, []).append(row)
        if level == LEVEL_PARAGRAPH:
            n_units = len(story.paragraphs)
            positions = {i: normalized_position(i, n_units) for i in range(n_units)}
            keep = set(range(n_units))
        else:
            positions = {}
            keep = set()
            for para in story.paragraphs:
                s0, s1 = para.sentence_range
                if s1 - s0 < min_sentences_per_paragraph:
                    continue
                for offset, s_index in enumerate(range(s0, s1)):
                    positions[s_index] = normalized_position(offset, s1 - s0)
                    keep.add(s_index)
        for unit_index, unit_rows in by_unit.items():
            if unit_index not in keep:
                continue
            for row in unit_rows:
                value = row.mean_surprisal if response == RESPONSE_MEAN_SURPRISAL else row.uid_v
                out.append(
                    Observation(
                        y=float(value),
                        position=positions[unit_index],
                        condition=row.condition,
                        length=row.n_words,
                        story_id=story.story_id,
                    )
                )
    return out


def slopes_report(
    fits: dict[tuple[str, str, str], LmmFit], baseline: Condition = Condition.U
) -> list[dict]:
    """Flatten per-(language, level, response) fits into slope rows.

    Unconverged fits are flagged and carry no p-value.
    """
    rows = []
    for (language, level, response), fit in sorted(fits.items()):
        for condition in [c for c in Condition if c in fit.slope_by_condition]:
            slope = fit.slope_by_condition[condition]
            if fit.converged:
                se = fit.slope_se(condition, baseline)
                if se > 0.0:
                    z = slope / se
                    p = 2.0 * float(norm.sf(abs(z)))
                    sig = significance_code(p)
                else:
                    p, sig = None, "degenerate"
            else:
                se, p, sig = None, None, "unconverged"
            rows.append(
                {
                    "language": language,
                    "level": level,
                    "response": response,
                    "condition": condition.value,
                    "slope": slope,
                    "se": se,
                    "p_value": p,
                    "significance": sig,
                    "converged": fit.converged,
                    "n_obs": fit.n_obs,
                    "n_groups": fit.n_groups,
                }
            )
    return rows
