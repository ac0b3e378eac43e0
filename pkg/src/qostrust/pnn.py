"""Probabilistic neural network (Gaussian Parzen windows) for trust verdicts.

Category 1 holds untrustworthy patterns, category 2 trustworthy ones.  A query
goes to the category with the larger averaged kernel response; exact ties are
resolved as untrustworthy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .qos_model import TrustLabel

UNIVARIATE = "univariate"
MULTIVARIATE = "multivariate"


@dataclass(frozen=True)
class PnnModel:
    untrustworthy: np.ndarray  # (n_1, m)
    trustworthy: np.ndarray  # (n_2, m)
    sigma: float = 1.0
    prefactor: str = UNIVARIATE

    def __post_init__(self):
        u = np.array(self.untrustworthy, dtype=np.float64, ndmin=2)
        t = np.array(self.trustworthy, dtype=np.float64, ndmin=2)
        if u.shape[0] == 0 or t.shape[0] == 0 or u.size == 0 or t.size == 0:
            raise ValueError("PNN requires at least one pattern per category")
        if u.shape[1] != t.shape[1]:
            raise ValueError("patterns of both categories must share one dimension")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.prefactor not in (UNIVARIATE, MULTIVARIATE):
            raise ValueError(f"unknown prefactor {self.prefactor!r}")
        u.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "untrustworthy", u)
        object.__setattr__(self, "trustworthy", t)
        object.__setattr__(self, "sigma", float(self.sigma))

    @property
    def m(self) -> int:
        return self.trustworthy.shape[1]

    def patterns(self, category: TrustLabel | int) -> np.ndarray:
        return self.untrustworthy if TrustLabel(category) is TrustLabel.UNTRUSTWORTHY else self.trustworthy

    def counts(self) -> dict[str, int]:
        return {"untrustworthy": len(self.untrustworthy), "trustworthy": len(self.trustworthy)}

    def to_dict(self) -> dict:
        return {
            "sigma": self.sigma,
            "prefactor": self.prefactor,
            "untrustworthy": self.untrustworthy.tolist(),
            "trustworthy": self.trustworthy.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PnnModel":
        return cls(np.array(d["untrustworthy"]), np.array(d["trustworthy"]), d["sigma"], d.get("prefactor", UNIVARIATE))


@dataclass(frozen=True)
class TrustVerdict:
    label: TrustLabel
    p_untrustworthy: float
    p_trustworthy: float


def fit(
    trustworthy: Sequence[np.ndarray],
    untrustworthy: Sequence[np.ndarray],
    sigma: float = 1.0,
    prefactor: str = UNIVARIATE,
) -> PnnModel:
    """Store the labelled patterns verbatim; nothing is optimized."""
    if len(trustworthy) == 0 or len(untrustworthy) == 0:
        raise ValueError("PNN requires at least one pattern per category")
    return PnnModel(np.asarray(untrustworthy), np.asarray(trustworthy), sigma, prefactor)


def normalizer(sigma: float, m: int = 1, prefactor: str = UNIVARIATE) -> float:
    """Gaussian kernel constant: ``1/(sqrt(2 pi) sigma)``, or its m-variate form."""
    if prefactor == MULTIVARIATE:
        return 1.0 / ((2.0 * math.pi) ** (m / 2.0) * sigma**m)
    return 1.0 / (math.sqrt(2.0 * math.pi) * sigma)


def pattern_density(pattern: np.ndarray, query: np.ndarray, sigma: float) -> float:
    pattern = np.asarray(pattern, dtype=np.float64)
    query = np.asarray(query, dtype=np.float64)
    if pattern.shape != query.shape:
        raise ValueError("pattern and query dimensions differ")
    sq = float(np.sum((pattern - query) ** 2))
    return normalizer(sigma) * math.exp(-sq / (2.0 * sigma * sigma))


def _sq_dists(patterns: np.ndarray, query: np.ndarray) -> np.ndarray:
    diff = patterns - query
    return np.einsum("ij,ij->i", diff, diff)


def category_probability(model: PnnModel, query: np.ndarray, category: TrustLabel | int) -> float:
    """Mean Gaussian response of the category's stored patterns to ``query``."""
    query = np.asarray(query, dtype=np.float64)
    if query.shape != (model.m,):
        raise ValueError(f"query has shape {query.shape}, model expects ({model.m},)")
    sq = _sq_dists(model.patterns(category), query)
    kernel = np.exp(-sq / (2.0 * model.sigma**2))
    return normalizer(model.sigma, model.m, model.prefactor) * float(np.mean(kernel))


def _log_score(model: PnnModel, query: np.ndarray, category: TrustLabel) -> float:
    # log of the category probability without the shared constant
    sq = _sq_dists(model.patterns(category), query)
    return float(logsumexp(-sq / (2.0 * model.sigma**2))) - math.log(len(sq))


def identify(model: PnnModel, query: np.ndarray) -> TrustVerdict:
    """Trust verdict for one query.

    The comparison is made on log-scores so that far-away queries whose kernel
    responses underflow to zero are still decided by their nearest patterns.
    Reported probabilities are the direct (possibly underflowed) values.
    """
    query = np.asarray(query, dtype=np.float64)
    p1 = category_probability(model, query, TrustLabel.UNTRUSTWORTHY)
    p2 = category_probability(model, query, TrustLabel.TRUSTWORTHY)
    if p1 > 0 and p2 > 0:
        trusted = p2 > p1
    else:
        trusted = _log_score(model, query, TrustLabel.TRUSTWORTHY) > _log_score(
            model, query, TrustLabel.UNTRUSTWORTHY
        )
    label = TrustLabel.TRUSTWORTHY if trusted else TrustLabel.UNTRUSTWORTHY
    return TrustVerdict(label, p1, p2)


def identify_many(model: PnnModel, queries: np.ndarray) -> list[TrustVerdict]:
    return [identify(model, q) for q in np.asarray(queries, dtype=np.float64)]
