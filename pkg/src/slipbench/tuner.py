"""Preference-driven search over the controller weights (p, q, N).

There is no numeric objective: a human (or a scripted stand-in) compares
two simulated candidates and says which behaved better, plus whether each
looked stable.  A thin-plate radial-basis surrogate is fitted to honor the
recorded orderings (squared hinge on each preference), a second surrogate
learns the stability labels, and the next candidate minimizes the
surrogate minus an inverse-distance exploration bonus plus an
infeasibility penalty.  Everything is deterministic given the seed and the
record sequence.
"""

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import minimize

SESSION_SCHEMA = "slipbench/tuning-session/v1"

OUTCOMES = ("a_preferred", "b_preferred", "tie")


class SearchConverged(Exception):
    """No candidate point is usefully far from the evaluated set."""


@dataclass(frozen=True)
class ParameterPoint:
    p_weight: float
    q_weight: float
    horizon: int

    def as_dict(self) -> dict:
        return {"p_weight": self.p_weight, "q_weight": self.q_weight,
                "horizon": self.horizon}


@dataclass(frozen=True)
class PreferenceRecord:
    index_a: int
    index_b: int
    outcome: str
    stable_a: bool = True
    stable_b: bool = True

    def __post_init__(self):
        if self.outcome not in OUTCOMES:
            raise ValueError(f"outcome must be one of {OUTCOMES}")
        if self.index_a == self.index_b:
            raise ValueError("a preference needs two distinct points")

    def as_dict(self) -> dict:
        return {"index_a": self.index_a, "index_b": self.index_b,
                "outcome": self.outcome, "stable_a": self.stable_a,
                "stable_b": self.stable_b}


@dataclass(frozen=True)
class SearchBounds:
    p_range: tuple[float, float] = (1.0, 1e4)
    q_range: tuple[float, float] = (1.0, 1e4)
    horizon_range: tuple[int, int] = (10, 2000)

    def __post_init__(self):
        for lo, hi in (self.p_range, self.q_range, self.horizon_range):
            if not 0 < lo < hi:
                raise ValueError("bounds must satisfy 0 < min < max")

    def as_dict(self) -> dict:
        return {"p_range": list(self.p_range), "q_range": list(self.q_range),
                "horizon_range": list(self.horizon_range)}


def _thin_plate(r: np.ndarray) -> np.ndarray:
    out = np.zeros_like(r)
    nz = r > 0.0
    out[nz] = r[nz] ** 2 * np.log(r[nz])
    return out


class _Surrogate:
    """Thin-plate RBF over normalized points, weights fitted elsewhere."""

    def __init__(self, centers: np.ndarray, weights: np.ndarray):
        self.centers = centers
        self.weights = weights

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        r = np.linalg.norm(x[:, None, :] - self.centers[None, :, :], axis=2)
        return _thin_plate(r) @ self.weights


class TuningSession:
    """Candidate points, preference records and the fitted surrogates.

    Points live internally in log-space normalized to the unit cube; the
    horizon is snapped to a log-spaced integer grid because every new
    horizon costs a gain recomputation.
    """

    HINGE_MARGIN = 1.0
    REGULARIZATION = 1e-3
    EXPLORE_WEIGHT = 0.5
    EXPLORE_EVERY = 4           # every n-th proposal is distance-only
    INFEASIBLE_PENALTY = 2.0
    CANDIDATES = 512
    LOCAL_CANDIDATES = 64
    DUPLICATE_TOL = 1e-6

    def __init__(self, bounds: SearchBounds | None = None, seed: int = 0,
                 pair_budget: int = 50):
        self.bounds = bounds or SearchBounds()
        self.seed = seed
        self.pair_budget = pair_budget
        self.points: list[ParameterPoint] = []
        self.records: list[PreferenceRecord] = []
        self._coords: list[np.ndarray] = []
        self._surrogate: _Surrogate | None = None
        self._feasibility: _Surrogate | None = None
        self._horizon_grid = np.unique(np.round(np.logspace(
            math.log10(self.bounds.horizon_range[0]),
            math.log10(self.bounds.horizon_range[1]), 64)).astype(int))

    # -- coordinate transforms ------------------------------------------

    def _to_unit(self, point: ParameterPoint) -> np.ndarray:
        b = self.bounds
        return np.array([
            (math.log10(point.p_weight) - math.log10(b.p_range[0]))
            / (math.log10(b.p_range[1]) - math.log10(b.p_range[0])),
            (math.log10(point.q_weight) - math.log10(b.q_range[0]))
            / (math.log10(b.q_range[1]) - math.log10(b.q_range[0])),
            (math.log10(point.horizon) - math.log10(b.horizon_range[0]))
            / (math.log10(b.horizon_range[1]) - math.log10(b.horizon_range[0])),
        ])

    def _from_unit(self, x: np.ndarray) -> ParameterPoint:
        b = self.bounds

        def expand(v, rng):
            lo, hi = math.log10(rng[0]), math.log10(rng[1])
            return 10.0 ** (lo + float(np.clip(v, 0.0, 1.0)) * (hi - lo))

        horizon_raw = expand(x[2], b.horizon_range)
        idx = int(np.argmin(np.abs(np.log(self._horizon_grid) - math.log(horizon_raw))))
        return ParameterPoint(
            p_weight=expand(x[0], b.p_range),
            q_weight=expand(x[1], b.q_range),
            horizon=int(self._horizon_grid[idx]),
        )

    # -- bookkeeping -----------------------------------------------------

    def add_point(self, point: ParameterPoint) -> int:
        self.points.append(point)
        self._coords.append(self._to_unit(point))
        return len(self.points) - 1

    @property
    def coords(self) -> np.ndarray:
        return np.array(self._coords) if self._coords else np.empty((0, 3))

    def stability_of(self, index: int) -> bool:
        stable = True
        for rec in self.records:
            if rec.index_a == index:
                stable = stable and rec.stable_a
            if rec.index_b == index:
                stable = stable and rec.stable_b
        return stable

    def losses_of(self, index: int) -> int:
        losses = 0
        for rec in self.records:
            if rec.index_a == index and rec.outcome == "b_preferred":
                losses += 1
            if rec.index_b == index and rec.outcome == "a_preferred":
                losses += 1
        return losses

    @property
    def converged(self) -> bool:
        return len(self.records) >= self.pair_budget

    # -- seeding and proposals -------------------------------------------

    def seed_points(self, count: int = 2) -> list[int]:
        """Space-filling initial design (stratified Latin hypercube)."""
        rng = np.random.default_rng(self.seed)
        samples = np.empty((count, 3))
        for dim in range(3):
            perm = rng.permutation(count)
            samples[:, dim] = (perm + rng.random(count)) / count
        return [self.add_point(self._from_unit(x)) for x in samples]

    def propose_next(self) -> ParameterPoint:
        """Acquisition minimizer over a seeded candidate pool.

        The pool mixes uniform samples with a cloud around the incumbent
        for local refinement; every fourth proposal ignores the surrogate
        and goes wherever the evaluated set is thinnest, so a confidently
        wrong surrogate cannot trap the whole search.
        """
        if len(self.points) < 2:
            raise RuntimeError("session not seeded; call seed_points() first")
        rng = np.random.default_rng((self.seed, len(self.points), len(self.records)))
        evaluated = self.coords
        cand = rng.random((self.CANDIDATES, 3))
        best = self.best_so_far()
        if best is not None:
            for sigma in (0.05, 0.2):
                local = evaluated[best[0]] + rng.normal(
                    0.0, sigma, size=(self.LOCAL_CANDIDATES, 3))
                cand = np.vstack([cand, np.clip(local, 0.0, 1.0)])
        d = np.linalg.norm(cand[:, None, :] - evaluated[None, :, :], axis=2)
        d_min = d.min(axis=1)
        fresh = d_min > self.DUPLICATE_TOL
        if not fresh.any():
            raise SearchConverged("all candidates duplicate evaluated points")
        cand, d_min = cand[fresh], d_min[fresh]

        explore_only = len(self.records) % self.EXPLORE_EVERY == self.EXPLORE_EVERY - 1
        if self._surrogate is not None and not explore_only:
            fhat = self._surrogate(cand)
            spread = fhat.max() - fhat.min()
            fhat = (fhat - fhat.min()) / (spread if spread > 0 else 1.0)
        else:
            fhat = np.zeros(len(cand))
        if self._feasibility is not None:
            feas = np.clip(self._feasibility(cand), 0.0, 1.0)
        else:
            feas = np.ones(len(cand))

        explore = 1.0 if explore_only else self.EXPLORE_WEIGHT
        score = (fhat - explore * d_min / math.sqrt(3.0)
                 + self.INFEASIBLE_PENALTY * (1.0 - feas))
        order = np.argsort(score, kind="stable")
        for idx in order:
            point = self._from_unit(cand[idx])
            x = self._to_unit(point)
            if np.linalg.norm(evaluated - x, axis=1).min() > self.DUPLICATE_TOL:
                return point
        raise SearchConverged("every acquisition minimum snapped onto an evaluated point")

    def next_pair(self) -> tuple[int, int]:
        """Indices of the next comparison.

        Mostly champion versus a fresh proposal; every third round pits
        two fresh proposals against each other, which is what ranks the
        non-champions and gives the surrogate a direction.  Seeds the
        session on first use.  Raises :class:`SearchConverged` once the
        pair budget is exhausted or the space is saturated.
        """
        if self.converged:
            raise SearchConverged(f"pair budget of {self.pair_budget} reached")
        if not self.points:
            a, b = self.seed_points(2)
            return a, b
        if len(self.records) % 3 == 2:
            first = self.add_point(self.propose_next())
            second = self.add_point(self.propose_next())
            return first, second
        best = self.best_so_far()
        champion = best[0] if best is not None else len(self.points) - 1
        challenger = self.add_point(self.propose_next())
        return champion, challenger

    # -- recording and fitting -------------------------------------------

    def record(self, rec: PreferenceRecord) -> None:
        n = len(self.points)
        if not (0 <= rec.index_a < n and 0 <= rec.index_b < n):
            raise IndexError("preference references unknown points")
        key = (rec.index_a, rec.index_b)
        for existing in self.records:
            if (existing.index_a, existing.index_b) == key:
                raise ValueError(f"pair {key} already recorded")
        self.records.append(rec)
        self._refit()

    def _refit(self) -> None:
        centers = self.coords
        weights = self._fit_preferences()
        self._surrogate = _Surrogate(centers, weights) if weights is not None else None
        feas_weights = self._fit_feasibility()
        self._feasibility = (
            _Surrogate(centers, feas_weights) if feas_weights is not None else None)

    def _fit_preferences(self) -> np.ndarray | None:
        if not self.records:
            return None
        centers = self.coords
        k = len(centers)
        r = np.linalg.norm(centers[:, None, :] - centers[None, :, :], axis=2)
        basis = _thin_plate(r)      # basis[i] = feature row of point i
        margin = self.HINGE_MARGIN
        lam = self.REGULARIZATION

        rows_strict = []
        rows_tie = []
        for rec in self.records:
            diff = basis[rec.index_a] - basis[rec.index_b]
            if rec.outcome == "a_preferred":
                rows_strict.append(diff)        # want f(a) <= f(b) - margin
            elif rec.outcome == "b_preferred":
                rows_strict.append(-diff)
            else:
                rows_tie.append(diff)           # want |f(a) - f(b)| <= margin
        strict = np.array(rows_strict) if rows_strict else np.empty((0, k))
        ties = np.array(rows_tie) if rows_tie else np.empty((0, k))

        def objective(w):
            loss = lam * (w @ w)
            grad = 2.0 * lam * w
            if len(strict):
                viol = strict @ w + margin      # <= 0 when satisfied
                mask = viol > 0.0
                loss += np.sum(viol[mask] ** 2)
                grad += 2.0 * viol[mask] @ strict[mask]
            if len(ties):
                gap = ties @ w
                over = np.abs(gap) - margin
                mask = over > 0.0
                loss += np.sum(over[mask] ** 2)
                grad += 2.0 * (over[mask] * np.sign(gap[mask])) @ ties[mask]
            return loss, grad

        result = minimize(objective, np.zeros(k), jac=True, method="L-BFGS-B",
                          options={"maxiter": 200})
        return result.x

    def _fit_feasibility(self) -> np.ndarray | None:
        if not self.records:
            return None
        labels = np.array([1.0 if self.stability_of(i) else 0.0
                           for i in range(len(self.points))])
        centers = self.coords
        r = np.linalg.norm(centers[:, None, :] - centers[None, :, :], axis=2)
        basis = _thin_plate(r)
        k = len(centers)
        # ridge regression onto the labels
        return np.linalg.solve(basis.T @ basis + self.REGULARIZATION * np.eye(k),
                               basis.T @ labels)

    def surrogate_value(self, index: int) -> float:
        if self._surrogate is None:
            return 0.0
        return float(self._surrogate(self._coords[index])[0])

    def predicted_stable(self, index: int) -> bool:
        if self._feasibility is None:
            return True
        return float(self._feasibility(self._coords[index])[0]) >= 0.5

    # -- results -----------------------------------------------------------

    def best_so_far(self) -> tuple[int, ParameterPoint] | None:
        """Best stable point: never beaten, ties broken by surrogate value."""
        candidates = [
            i for i in range(len(self.points))
            if self.stability_of(i) and self.losses_of(i) == 0 and self._compared(i)
        ]
        if not candidates:
            candidates = [i for i in range(len(self.points))
                          if self.stability_of(i) and self._compared(i)]
        if not candidates:
            return None
        best = min(candidates, key=lambda i: (self.surrogate_value(i), self.losses_of(i), i))
        return best, self.points[best]

    def _compared(self, index: int) -> bool:
        return any(rec.index_a == index or rec.index_b == index
                   for rec in self.records)

    # -- serialization -----------------------------------------------------

    def to_json(self) -> str:
        return json.dumps({
            "schema": SESSION_SCHEMA,
            "seed": self.seed,
            "pair_budget": self.pair_budget,
            "bounds": self.bounds.as_dict(),
            "points": [p.as_dict() for p in self.points],
            "records": [r.as_dict() for r in self.records],
        }, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "TuningSession":
        data = json.loads(text)
        if data.get("schema") != SESSION_SCHEMA:
            raise ValueError(f"unsupported session schema {data.get('schema')!r}")
        b = data["bounds"]
        session = cls(
            bounds=SearchBounds(
                p_range=tuple(b["p_range"]), q_range=tuple(b["q_range"]),
                horizon_range=tuple(b["horizon_range"]),
            ),
            seed=data["seed"], pair_budget=data["pair_budget"],
        )
        for p in data["points"]:
            session.add_point(ParameterPoint(**p))
        for r in data["records"]:
            session.records.append(PreferenceRecord(**r))
        if session.records:
            session._refit()
        return session

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "TuningSession":
        return cls.from_json(Path(path).read_text())


# Spec-shaped functional entry points ------------------------------------

def propose_next(session: TuningSession) -> ParameterPoint:
    if not session.points:
        raise RuntimeError("seed the session first (seed_points)")
    return session.propose_next()


def record_preference(session: TuningSession, rec: PreferenceRecord) -> TuningSession:
    session.record(rec)
    return session


def best_so_far(session: TuningSession) -> tuple[int, ParameterPoint] | None:
    return session.best_so_far()
