"""Covariance matrix adaptation evolution strategy (maximization convention).

Standard rank-mu + rank-one update with cumulative step-size adaptation,
default population 4 + floor(3 ln n). `tell` recomputes displacements from
the candidates it receives, so externally repaired (e.g. box-clamped)
candidates are handled by the plain repair-and-update route.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

MAX_CONDITION = 1e14


def default_popsize(n: int) -> int:
    return 4 + int(3 * math.log(n))


@dataclass
class CmaParams:
    """Static strategy constants derived from (n, popsize)."""

    n: int
    lam: int
    mu: int
    weights: np.ndarray
    mu_eff: float
    c_sigma: float
    d_sigma: float
    c_c: float
    c_1: float
    c_mu: float
    chi_n: float

    @classmethod
    def for_dim(cls, n: int, popsize: int | None = None) -> "CmaParams":
        lam = popsize or default_popsize(n)
        mu = lam // 2
        w = np.log(mu + 0.5) - np.log(np.arange(1, mu + 1))
        w = w / w.sum()
        mu_eff = 1.0 / np.sum(w ** 2)
        c_sigma = (mu_eff + 2.0) / (n + mu_eff + 5.0)
        d_sigma = 1.0 + 2.0 * max(0.0, math.sqrt((mu_eff - 1.0) / (n + 1.0)) - 1.0) + c_sigma
        c_c = (4.0 + mu_eff / n) / (n + 4.0 + 2.0 * mu_eff / n)
        c_1 = 2.0 / ((n + 1.3) ** 2 + mu_eff)
        c_mu = min(1.0 - c_1, 2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((n + 2.0) ** 2 + mu_eff))
        chi_n = math.sqrt(n) * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n))
        return cls(n, lam, mu, w, mu_eff, c_sigma, d_sigma, c_c, c_1, c_mu, chi_n)


class CmaEs:
    """ask/tell optimizer; higher fitness is better."""

    def __init__(self, x0, sigma0: float, popsize: int | None = None, seed: int = 0):
        self.mean = np.asarray(x0, dtype=float).copy()
        self.sigma = float(sigma0)
        self.p = CmaParams.for_dim(self.mean.size, popsize)
        n = self.p.n
        self.cov = np.eye(n)
        self.p_sigma = np.zeros(n)
        self.p_c = np.zeros(n)
        self.generation = 0
        self.num_evals = 0
        self.best_x = self.mean.copy()
        self.best_fitness = -np.inf
        self.rng = np.random.default_rng(seed)
        self._decompose()

    # eigendecomposition cache: cov = B diag(d^2) B^T
    def _decompose(self):
        cov = 0.5 * (self.cov + self.cov.T)
        eigvals, eigvecs = np.linalg.eigh(cov)
        floor = max(eigvals.max(), 1e-300) / MAX_CONDITION
        if eigvals.min() < floor:
            bump = floor - eigvals.min()
            cov = cov + bump * np.eye(self.p.n)
            eigvals = eigvals + bump
        self.cov = cov
        self._eigvals = eigvals
        self._B = eigvecs
        self._D = np.sqrt(eigvals)

    @property
    def popsize(self) -> int:
        return self.p.lam

    def ask(self) -> np.ndarray:
        """Sample lambda candidates, shape (lam, n)."""
        z = self.rng.standard_normal((self.p.lam, self.p.n))
        y = (z * self._D) @ self._B.T
        return self.mean + self.sigma * y

    def tell(self, candidates: np.ndarray, fitnesses) -> None:
        candidates = np.asarray(candidates, dtype=float)
        fit = np.asarray(fitnesses, dtype=float)
        if candidates.shape != (self.p.lam, self.p.n) or fit.shape != (self.p.lam,):
            raise ValueError("tell expects lam candidates with lam fitnesses")
        self.num_evals += self.p.lam
        self.generation += 1

        # non-finite fitness ranks last
        rank_key = np.where(np.isfinite(fit), fit, -np.inf)
        order = np.argsort(-rank_key, kind="stable")

        k = int(order[0])
        if np.isfinite(fit[k]) and fit[k] > self.best_fitness:
            self.best_fitness = float(fit[k])
            self.best_x = candidates[k].copy()

        finite = rank_key[np.isfinite(rank_key)]
        if finite.size == 0 or (finite.size == self.p.lam and finite.max() == finite.min()):
            # flat batch carries no ranking information: leave the state alone
            return

        pp = self.p
        old_mean = self.mean.copy()
        sel = candidates[order[:pp.mu]]
        y_sel = (sel - old_mean) / self.sigma
        y_w = pp.weights @ y_sel
        self.mean = old_mean + self.sigma * y_w

        # step-size path uses C^(-1/2) y_w
        c_inv_half_yw = self._B @ ((self._B.T @ y_w) / self._D)
        self.p_sigma = ((1.0 - pp.c_sigma) * self.p_sigma
                        + math.sqrt(pp.c_sigma * (2.0 - pp.c_sigma) * pp.mu_eff) * c_inv_half_yw)
        ps_norm = np.linalg.norm(self.p_sigma)
        denom = math.sqrt(1.0 - (1.0 - pp.c_sigma) ** (2.0 * self.generation))
        h_sigma = 1.0 if ps_norm / denom < (1.4 + 2.0 / (pp.n + 1.0)) * pp.chi_n else 0.0

        self.p_c = ((1.0 - pp.c_c) * self.p_c
                    + h_sigma * math.sqrt(pp.c_c * (2.0 - pp.c_c) * pp.mu_eff) * y_w)

        rank_mu = (y_sel * pp.weights[:, None]).T @ y_sel
        delta_h = (1.0 - h_sigma) * pp.c_c * (2.0 - pp.c_c)
        self.cov = ((1.0 - pp.c_1 - pp.c_mu) * self.cov
                    + pp.c_1 * (np.outer(self.p_c, self.p_c) + delta_h * self.cov)
                    + pp.c_mu * rank_mu)

        self.sigma *= math.exp((pp.c_sigma / pp.d_sigma) * (ps_norm / pp.chi_n - 1.0))
        self._decompose()

    # --- checkpointing ---
    def to_dict(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "sigma": self.sigma,
            "cov": self.cov.tolist(),
            "p_sigma": self.p_sigma.tolist(),
            "p_c": self.p_c.tolist(),
            "generation": self.generation,
            "num_evals": self.num_evals,
            "popsize": self.p.lam,
            "best_x": self.best_x.tolist(),
            "best_fitness": self.best_fitness,
            "rng_state": self.rng.bit_generator.state,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CmaEs":
        es = cls(np.array(d["mean"]), d["sigma"], popsize=d["popsize"])
        es.cov = np.array(d["cov"])
        es.p_sigma = np.array(d["p_sigma"])
        es.p_c = np.array(d["p_c"])
        es.generation = d["generation"]
        es.num_evals = d["num_evals"]
        es.best_x = np.array(d["best_x"])
        es.best_fitness = d["best_fitness"]
        es.rng.bit_generator.state = d["rng_state"]
        es._decompose()
        return es
