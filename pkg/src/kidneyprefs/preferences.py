"""Bradley-Terry and random-coefficients logit models of profile preferences.

Profiles carry three binary features (age 30, rare drinking, healthy). A
utility function is a coefficient vector ``beta``; a profile's score under it
is ``features @ beta``. The random-coefficients model draws ``beta`` from
``N(mu, chol @ chol.T)`` once per respondent (or per donor vertex).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp

from .graph import FEATURES, PROFILE_IDS, PROFILES, PatientProfile
from .rng import stream
from .survey import PAIRS, Respondent, SurveyDataset

log = logging.getLogger(__name__)

# Published BT scores of the eight profiles (max-normalised).
REFERENCE_BT_SCORES: dict[int, float] = {
    1: 1.000,
    2: 0.103,
    3: 0.236,
    4: 0.036,
    5: 0.070,
    6: 0.012,
    7: 0.024,
    8: 0.003,
}

_N = len(PROFILE_IDS)


def _profile_id(profile: PatientProfile | int) -> int:
    return profile if isinstance(profile, int) else profile.id


# ---------------------------------------------------------------------------
# Bradley-Terry
# ---------------------------------------------------------------------------


def bt_probability(score_i: float, score_j: float) -> float:
    """Probability that the profile with ``score_i`` is preferred.

    Only the larger side is divided out; the smaller is its complement,
    which is exact for values in [0.5, 1], so ``P(i, j) + P(j, i) == 1``.
    """
    if not (0 < score_i < math.inf and 0 < score_j < math.inf):
        raise ValueError(f"BT scores must be positive and finite, got {score_i}, {score_j}")
    if score_i >= score_j:
        return score_i / (score_i + score_j)
    return 1.0 - score_j / (score_i + score_j)


@dataclass(frozen=True)
class BtScores:
    scores: dict[int, float]
    non_identifiable: bool = False
    iterations: int = 0

    def __post_init__(self) -> None:
        if set(self.scores) != set(PROFILE_IDS):
            raise ValueError("BtScores needs one score per profile")
        if any(not s > 0 for s in self.scores.values()):
            raise ValueError("BT scores must be positive")

    def __getitem__(self, profile_id: int) -> float:
        return self.scores[profile_id]

    def as_array(self) -> np.ndarray:
        return np.array([self.scores[k] for k in PROFILE_IDS])

    def to_dict(self) -> dict:
        return {
            "model": "bt",
            "scores": {str(k): self.scores[k] for k in PROFILE_IDS},
            "fit": {"iterations": self.iterations, "non_identifiable": self.non_identifiable},
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> BtScores:
        if data.get("model") != "bt":
            raise ValueError("not a BT parameter document")
        fit = data.get("fit", {})
        return cls(
            {int(k): float(v) for k, v in data["scores"].items()},
            non_identifiable=bool(fit.get("non_identifiable", False)),
            iterations=int(fit.get("iterations", 0)),
        )


REFERENCE_BT = BtScores(dict(REFERENCE_BT_SCORES))


def _strongly_connected(wins: np.ndarray) -> bool:
    """True when every profile can reach every other through "beat" edges."""
    beat = wins > 0

    def reach(adj: np.ndarray) -> set[int]:
        seen, todo = {0}, [0]
        while todo:
            u = todo.pop()
            for v in np.flatnonzero(adj[u]):
                if v not in seen:
                    seen.add(int(v))
                    todo.append(int(v))
        return seen

    return len(reach(beat)) == _N and len(reach(beat.T)) == _N


def fit_bt(
    survey: SurveyDataset | np.ndarray,
    tol: float = 1e-8,
    max_iter: int = 100_000,
    init: np.ndarray | None = None,
) -> BtScores:
    """Pooled maximum-likelihood BT scores by minorization-maximization.

    ``survey`` may also be an 8x8 win-count matrix. If the comparison graph
    is not strongly connected (e.g. a profile never wins or never loses) the
    MLE does not exist; 0.5 is then added to every off-diagonal count and
    the result is flagged ``non_identifiable``.
    """
    wins = survey.win_matrix() if isinstance(survey, SurveyDataset) else np.asarray(survey, dtype=float)
    wins = wins.copy()
    np.fill_diagonal(wins, 0.0)
    flagged = not _strongly_connected(wins)
    if flagged:
        log.warning("BT comparison graph is not strongly connected; applying 0.5 pseudocounts")
        wins = wins + 0.5 * (1.0 - np.eye(_N))
    games = wins + wins.T
    total_wins = wins.sum(axis=1)

    p = np.ones(_N) if init is None else np.asarray(init, dtype=float).copy()
    p = p / p.max()
    for it in range(1, max_iter + 1):
        denom = (games / (p[:, None] + p[None, :])).sum(axis=1)
        p_new = total_wins / denom
        p_new /= p_new.max()
        delta = np.max(np.abs(np.log(p_new) - np.log(p)))
        p = p_new
        if delta < tol:
            break
    else:
        log.warning("BT MM iteration hit max_iter=%d", max_iter)
    return BtScores({k: float(p[k - 1]) for k in PROFILE_IDS}, flagged, it)


def generate_bt_survey(scores: Mapping[int, float] | BtScores, n: int, rng: np.random.Generator) -> SurveyDataset:
    """Respondents answering every pair independently under the BT model."""
    s = scores.scores if isinstance(scores, BtScores) else scores
    first = np.array([bt_probability(s[i], s[j]) for i, j in PAIRS])
    respondents = []
    for k in range(n):
        picks_first = rng.random(len(PAIRS)) < first
        respondents.append(
            Respondent(k, {(i, j): (i if f else j) for (i, j), f in zip(PAIRS, picks_first)})
        )
    return SurveyDataset(respondents)


# ---------------------------------------------------------------------------
# Random-coefficients logit
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MvnParams:
    """Normal distribution over feature coefficients, Sigma = chol @ chol.T."""

    mu: np.ndarray
    chol: np.ndarray

    def __post_init__(self) -> None:
        mu = np.asarray(self.mu, dtype=float).reshape(3)
        chol = np.asarray(self.chol, dtype=float).reshape(3, 3)
        if np.any(np.triu(chol, 1) != 0):
            raise ValueError("chol must be lower triangular")
        if np.any(np.diag(chol) < 0):
            raise ValueError("chol must have a non-negative diagonal")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "chol", chol)

    @classmethod
    def from_cov(cls, mu, sigma) -> MvnParams:
        sigma = np.asarray(sigma, dtype=float)
        if not np.any(sigma):
            return cls(mu, np.zeros((3, 3)))
        return cls(mu, np.linalg.cholesky(sigma))

    @property
    def sigma(self) -> np.ndarray:
        return self.chol @ self.chol.T

    def to_dict(self) -> dict:
        rows, cols = np.tril_indices(3)
        return {"mu": [float(x) for x in self.mu], "chol": [float(x) for x in self.chol[rows, cols]]}

    @classmethod
    def from_dict(cls, data: Mapping) -> MvnParams:
        chol = np.zeros((3, 3))
        values = [float(x) for x in data["chol"]]
        if len(values) != 6:
            raise ValueError("chol needs 6 lower-triangular entries")
        chol[np.tril_indices(3)] = values
        return cls(np.array([float(x) for x in data["mu"]]), chol)


DEFAULT_BLP_PARAMS = MvnParams.from_cov([2.0, 1.0, 0.5], np.diag([1.0, 0.5, 0.25]))


@dataclass(frozen=True)
class CommonRandomDraws:
    """Standard-normal draws shared by every likelihood evaluation."""

    z: np.ndarray

    def __post_init__(self) -> None:
        z = np.asarray(self.z, dtype=float)
        if z.ndim != 2 or z.shape[1] != 3 or len(z) < 1:
            raise ValueError("draws must have shape (R, 3) with R >= 1")
        object.__setattr__(self, "z", z)

    @classmethod
    def generate(cls, r: int, rng: np.random.Generator) -> CommonRandomDraws:
        return cls(rng.standard_normal((r, 3)))

    def __len__(self) -> int:
        return len(self.z)

    def betas(self, params: MvnParams) -> np.ndarray:
        return params.mu + self.z @ params.chol.T


@dataclass(frozen=True)
class BetaSample:
    beta: np.ndarray
    source_seed: int


def blp_score(profile: PatientProfile | int, beta) -> float:
    return float(FEATURES[_profile_id(profile) - 1] @ np.asarray(beta, dtype=float))


def profile_scores(beta) -> np.ndarray:
    """Scores of profiles 1..8 under ``beta``."""
    return FEATURES @ np.asarray(beta, dtype=float)


def sample_beta(params: MvnParams, rng: np.random.Generator | int) -> BetaSample:
    """Draw ``beta = mu + chol @ z``.

    Passing a generator draws a fresh 63-bit seed from it first, so every
    sample is reproducible from ``(params, source_seed)``.
    """
    seed = int(rng.integers(0, 2**63)) if isinstance(rng, np.random.Generator) else int(rng)
    z = np.random.default_rng(seed).standard_normal(3)
    return BetaSample(params.mu + params.chol @ z, seed)


def normalized_profile_weights(beta) -> dict[int, float]:
    """Min-max normalised profile scores; all 1.0 when the scores are flat."""
    s = profile_scores(beta)
    lo, hi = s.min(), s.max()
    if hi == lo:
        return {k: 1.0 for k in PROFILE_IDS}
    w = (s - lo) / (hi - lo)
    return {k: float(w[k - 1]) for k in PROFILE_IDS}


def profile_ranks(beta) -> np.ndarray:
    """Competition ranks of profiles 1..8 (1 = most preferred, ties share)."""
    s = profile_scores(beta)
    return 1 + (s[None, :] > s[:, None]).sum(axis=1)


def rank(beta, profile: PatientProfile | int) -> int:
    return int(profile_ranks(beta)[_profile_id(profile) - 1])


def _pair_log_probs(betas: np.ndarray) -> np.ndarray:
    """(R, 8, 8) log P(i chosen over j) for each draw."""
    s = betas @ FEATURES.T
    return s[:, :, None] - np.logaddexp(s[:, :, None], s[:, None, :])


def _log_likelihoods(params: MvnParams, outcomes: np.ndarray, draws: CommonRandomDraws) -> np.ndarray:
    """Per-respondent simulated log-likelihoods for (N, 8, 8) outcome counts."""
    lp = _pair_log_probs(draws.betas(params)).reshape(len(draws), -1)
    per_draw = outcomes.reshape(len(outcomes), -1) @ lp.T
    return logsumexp(per_draw, axis=1) - math.log(len(draws))


def likelihood_mc(params: MvnParams, respondent: Respondent, draws: CommonRandomDraws) -> float:
    """Simulated probability of one respondent's full set of choices."""
    return float(np.exp(_log_likelihoods(params, respondent.outcome_matrix()[None], draws)[0]))


def mean_log_likelihood(params: MvnParams, survey: SurveyDataset, draws: CommonRandomDraws) -> float:
    return float(_log_likelihoods(params, survey.outcome_tensor(), draws).mean())


def generate_synthetic_survey(params: MvnParams, n: int, rng: np.random.Generator) -> SurveyDataset:
    """Respondents with one ``beta`` each, answering every pair by logit."""
    first = np.array([i for i, _ in PAIRS]) - 1
    second = np.array([j for _, j in PAIRS]) - 1
    respondents = []
    for k in range(n):
        beta = params.mu + params.chol @ rng.standard_normal(3)
        s = FEATURES @ beta
        p_first = 1.0 / (1.0 + np.exp(s[second] - s[first]))
        picks_first = rng.random(len(PAIRS)) < p_first
        respondents.append(
            Respondent(k, {(i, j): (i if f else j) for (i, j), f in zip(PAIRS, picks_first)})
        )
    return SurveyDataset(respondents)


def _softplus(x):
    return np.logaddexp(0.0, x)


def _inv_softplus(y: float) -> float:
    return y + math.log(-math.expm1(-y))


_TRIL = np.tril_indices(3, -1)


def _unpack(theta: np.ndarray) -> MvnParams:
    chol = np.zeros((3, 3))
    chol[np.diag_indices(3)] = _softplus(theta[3:6])
    chol[_TRIL] = theta[6:9]
    return MvnParams(theta[:3], chol)


def _pack(params: MvnParams) -> np.ndarray:
    diag = [_inv_softplus(max(d, 1e-8)) for d in np.diag(params.chol)]
    return np.concatenate([params.mu, diag, params.chol[_TRIL]])


def fit_homogeneous_logit(outcomes: np.ndarray, ridge: float = 1e-3, max_iter: int = 100) -> np.ndarray:
    """Pooled 3-coefficient logit by damped Newton; ``outcomes`` is (…, 8, 8)."""
    counts = outcomes.reshape(-1, _N, _N).sum(axis=0)
    wi, li = np.nonzero(counts)
    n = counts[wi, li]
    d = FEATURES[wi] - FEATURES[li]
    beta = np.zeros(3)
    for _ in range(max_iter):
        p = 1.0 / (1.0 + np.exp(-(d @ beta)))
        grad = d.T @ (n * (1.0 - p)) - ridge * beta
        hess = (d * (n * p * (1.0 - p))[:, None]).T @ d + ridge * np.eye(3)
        step = np.linalg.solve(hess, grad)
        beta = beta + step
        if np.max(np.abs(step)) < 1e-10:
            break
    return beta


@dataclass(frozen=True)
class BlpFitConfig:
    n_draws: int = 500
    max_iter: int = 2000
    init_chol_scale: float = 0.1
    simplex_step: float = 0.5
    xatol: float = 1e-4
    fatol: float = 1e-8
    seed: int = 0
    # Independent draws for the reported likelihood (0 skips it).
    report_draws: int = 200


@dataclass(frozen=True)
class BlpFit:
    params: MvnParams
    log_likelihood: float
    init_log_likelihood: float
    iterations: int
    evaluations: int
    converged: bool
    n_respondents: int
    n_draws: int
    seed: int
    report_log_likelihood: float | None = None
    report_draws: int = 0

    def to_dict(self) -> dict:
        return {
            "model": "blp",
            **self.params.to_dict(),
            "fit": {
                "N": self.n_respondents,
                "R": self.n_draws,
                "log_likelihood": self.log_likelihood,
                "init_log_likelihood": self.init_log_likelihood,
                "iterations": self.iterations,
                "evaluations": self.evaluations,
                "converged": self.converged,
                "seed": self.seed,
                "report_log_likelihood": self.report_log_likelihood,
                "report_R": self.report_draws,
            },
        }


def load_blp_params(data: Mapping) -> MvnParams:
    if data.get("model") != "blp":
        raise ValueError("not a BLP parameter document")
    return MvnParams.from_dict(data)


def _simplex(x: np.ndarray, step: float) -> np.ndarray:
    """Initial simplex with edges of length ``step`` in (mu, chol) units."""
    pts = [x]
    for i in range(len(x)):
        y = x.copy()
        if 3 <= i < 6:
            y[i] = _inv_softplus(float(_softplus(x[i])) + step)
        else:
            y[i] += step
        pts.append(y)
    return np.array(pts)


def fit_blp(survey: SurveyDataset, config: BlpFitConfig | None = None) -> BlpFit:
    """Simulated maximum likelihood for (mu, chol) by Nelder-Mead.

    The draw set is generated once from ``config.seed`` and held fixed for
    the whole search. The start point is the pooled logit for ``mu`` and
    ``init_chol_scale * I`` for ``chol``. The search restarts from its
    incumbent with a fresh simplex until a restart stops improving or the
    ``max_iter`` budget is spent; a fresh simplex lets a standard deviation
    that drifted towards zero (where the likelihood is flat) grow back.
    """
    config = config or BlpFitConfig()
    if config.n_draws < 100:
        raise ValueError("fit_blp needs at least 100 draws")
    if not len(survey):
        raise ValueError("survey is empty")
    outcomes = survey.outcome_tensor()
    # Identical answer sheets contribute identical terms; fold them.
    uniq, counts = np.unique(outcomes.reshape(len(outcomes), -1), axis=0, return_counts=True)
    uniq = uniq.reshape(-1, _N, _N)
    weights = counts / counts.sum()
    draws = CommonRandomDraws.generate(config.n_draws, np.random.default_rng(config.seed))

    def objective(theta: np.ndarray) -> float:
        return -float(weights @ _log_likelihoods(_unpack(theta), uniq, draws))

    x = _pack(MvnParams(fit_homogeneous_logit(outcomes), config.init_chol_scale * np.eye(3)))
    fx = f0 = objective(x)
    iterations = evaluations = 0
    converged = False
    while iterations < config.max_iter:
        res = minimize(
            objective,
            x,
            method="Nelder-Mead",
            options={
                "maxiter": config.max_iter - iterations,
                "xatol": config.xatol,
                "fatol": config.fatol,
                "initial_simplex": _simplex(x, config.simplex_step),
                "adaptive": True,
            },
        )
        iterations += int(res.nit)
        evaluations += int(res.nfev)
        converged = bool(res.success)
        if res.fun < fx - config.fatol:
            x, fx = res.x, float(res.fun)
        else:
            break
    if not converged:
        log.warning("BLP fit stopped after %d iterations without converging", iterations)
    params = _unpack(x)
    report = None
    if config.report_draws > 0:
        fresh = CommonRandomDraws.generate(config.report_draws, stream(config.seed, "report-draws"))
        report = float(weights @ _log_likelihoods(params, uniq, fresh))
    return BlpFit(
        params=params,
        log_likelihood=-fx,
        init_log_likelihood=-f0,
        iterations=iterations,
        evaluations=evaluations,
        converged=converged,
        n_respondents=len(survey),
        n_draws=config.n_draws,
        seed=config.seed,
        report_log_likelihood=report,
        report_draws=config.report_draws,
    )
