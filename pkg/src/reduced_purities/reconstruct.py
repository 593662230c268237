"""Recover the coherence content of rho_e from orbital populations and
reduced purities.

The workflow is: enumerate determinant subsets consistent with the orbital
populations, fit the determinant populations ``a_nn`` of each candidate
model, bracket the observed ``P1`` (then ``P2``) between the model's fully
incoherent and fully coherent values, and discard models whose bracket
misses the observation.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from itertools import combinations
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import null_space
from scipy.integrate import trapezoid
from scipy.optimize import linprog, minimize, nnls

from .densmat import DensityMatrixExpansion
from .fock import SlaterDeterminant, coherence_order
from .purity import p1_terms, p2_terms, purity_trace
from .rdm import build_rdm

ZERO = "zero"
FULL = "full"
FREE = "free"
REGIMES = (ZERO, FULL, FREE)

FIT_TOL = 1e-6
ENVELOPE_TOL = 1e-6
ENSEMBLE_ENVELOPE_TOL = 0.02
SERIES_TOL = 1e-6


class ReconstructionError(ValueError):
    pass


def occupation_matrix(dets: Sequence[SlaterDeterminant]) -> np.ndarray:
    """``F[n, eps] = f_n(eps)``."""
    return np.array([[d.bits >> k & 1 for k in range(d.K)] for d in dets], dtype=float)


@dataclass(frozen=True)
class CoherenceModel:
    """Candidate form of rho_e over a determinant list.

    ``equal_populations`` lists groups of determinant indices whose
    populations are tied; ``zero_populations`` are excluded determinants.
    ``coherence`` maps pairs ``(n, m)`` with ``n < m`` to a regime; pairs not
    listed use ``default_regime``.
    """

    name: str
    dets: tuple[SlaterDeterminant, ...]
    equal_populations: tuple[tuple[int, ...], ...] = ()
    zero_populations: tuple[int, ...] = ()
    coherence: tuple[tuple[tuple[int, int], str], ...] = ()
    default_regime: str = FREE

    def __post_init__(self):
        object.__setattr__(self, "dets", tuple(self.dets))
        M = len(self.dets)
        if M == 0:
            raise ReconstructionError("a model needs at least one determinant")
        for group in self.equal_populations:
            if any(not 0 <= n < M for n in group):
                raise ReconstructionError(f"{self.name}: population group {group} out of range")
        for (n, m), regime in self.coherence:
            if regime not in REGIMES:
                raise ReconstructionError(f"{self.name}: unknown coherence regime {regime!r}")
            if not 0 <= n < M or not 0 <= m < M or n == m:
                raise ReconstructionError(f"{self.name}: bad coherence pair {(n, m)}")
        if self.default_regime not in REGIMES:
            raise ReconstructionError(f"{self.name}: unknown default regime {self.default_regime!r}")
        if len(self.groups()) == 0:
            raise ReconstructionError(f"{self.name}: every determinant is constrained to zero population")
        witness = self.witness()
        if np.linalg.eigvalsh(witness)[0] < -1e-10:
            raise ReconstructionError(f"{self.name}: constraints admit no valid density matrix")

    @property
    def M(self) -> int:
        return len(self.dets)

    @property
    def N(self) -> int:
        return self.dets[0].N

    def regime(self, n: int, m: int) -> str:
        key = (min(n, m), max(n, m))
        for pair, regime in self.coherence:
            if (min(pair), max(pair)) == key:
                return regime
        return self.default_regime

    def groups(self) -> list[tuple[int, ...]]:
        """Independent population variables as groups of determinant indices."""
        zero = set(self.zero_populations)
        parent = list(range(self.M))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for group in self.equal_populations:
            for n in group[1:]:
                parent[find(n)] = find(group[0])
        out: dict[int, list[int]] = {}
        for n in range(self.M):
            out.setdefault(find(n), []).append(n)
        # a zero constraint on one member zeroes the whole tied group
        return [tuple(g) for g in out.values() if not zero.intersection(g)]

    def expand(self, x: np.ndarray) -> np.ndarray:
        """Map group variables to per-determinant populations."""
        pops = np.zeros(self.M)
        for value, group in zip(x, self.groups()):
            pops[list(group)] = value
        return pops

    def witness(self) -> np.ndarray:
        """Coefficient matrix with equal group populations and every full
        coherence switched on."""
        groups = self.groups()
        pops = self.expand(np.full(len(groups), 1.0 / sum(len(g) for g in groups)))
        a = np.diag(pops)
        for n, m in combinations(range(self.M), 2):
            if self.regime(n, m) == FULL:
                a[n, m] = a[m, n] = np.sqrt(pops[n] * pops[m])
        return a

    def orders(self) -> list[list[int]]:
        M = self.M
        s = [[0] * M for _ in range(M)]
        for n, m in combinations(range(M), 2):
            s[n][m] = s[m][n] = coherence_order(self.dets[n], self.dets[m])
        return s

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "determinants": [d.to_string() for d in self.dets],
            "equal_populations": [list(g) for g in self.equal_populations],
            "zero_populations": list(self.zero_populations),
            "coherence": [{"pair": list(p), "regime": r} for p, r in self.coherence],
            "default_regime": self.default_regime,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CoherenceModel":
        return cls(
            name=d["name"],
            dets=tuple(SlaterDeterminant.from_string(s) for s in d["determinants"]),
            equal_populations=tuple(tuple(g) for g in d.get("equal_populations", ())),
            zero_populations=tuple(d.get("zero_populations", ())),
            coherence=tuple((tuple(c["pair"]), c["regime"]) for c in d.get("coherence", ())),
            default_regime=d.get("default_regime", FREE),
        )


@dataclass
class ObservationSeries:
    times: np.ndarray
    orbital_populations: np.ndarray
    P1: np.ndarray
    P2: Optional[np.ndarray] = None
    N: Optional[int] = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.orbital_populations = np.atleast_2d(np.asarray(self.orbital_populations, dtype=float))
        self.P1 = np.asarray(self.P1, dtype=float)
        if self.P2 is not None:
            self.P2 = np.asarray(self.P2, dtype=float)
        T = len(self.times)
        if self.orbital_populations.shape[0] != T or len(self.P1) != T:
            raise ReconstructionError("times, populations and P1 must have the same length")
        if self.P2 is not None and len(self.P2) != T:
            raise ReconstructionError("P2 must have the same length as times")
        pops = self.orbital_populations
        if np.any(pops < -SERIES_TOL) or np.any(pops > 1 + SERIES_TOL):
            raise ReconstructionError("orbital populations must lie in [0, 1]")
        sums = pops.sum(axis=1)
        if self.N is None:
            self.N = int(round(sums[0]))
        if np.any(np.abs(sums - self.N) > SERIES_TOL):
            raise ReconstructionError(f"orbital populations do not sum to N={self.N}")


def observe(times, rhos: Sequence[DensityMatrixExpansion]) -> ObservationSeries:
    """Exact observation series of a known density-matrix trajectory."""
    pops, p1, p2 = [], [], []
    for rho in rhos:
        g1 = build_rdm(rho, 1)
        pops.append(g1.matrix().diagonal().real)
        p1.append(purity_trace(g1))
        p2.append(purity_trace(build_rdm(rho, 2)) if rho.N >= 2 else np.nan)
    return ObservationSeries(np.asarray(times), np.array(pops), np.array(p1),
                             np.array(p2), rhos[0].N)


@dataclass
class PopulationFit:
    """Fitted determinant populations.

    ``null_space`` columns are per-determinant directions along which the
    populations can move without changing the fitted orbital populations;
    empty when the fit is unique.
    """

    populations: np.ndarray
    residual: float
    unique: bool
    null_space: np.ndarray


def fit_populations_at(model: CoherenceModel, orbital_populations, tol: float = FIT_TOL) -> Optional[PopulationFit]:
    """Nonnegative least-squares fit of the model's ``a_nn`` to one vector of
    orbital populations.  ``None`` when the residual exceeds ``tol``."""
    b = np.asarray(orbital_populations, dtype=float)
    groups = model.groups()
    F = occupation_matrix(model.dets)
    G = np.zeros((model.M, len(groups)))
    for k, g in enumerate(groups):
        G[list(g), k] = 1.0
    A = np.vstack([F.T @ G, G.sum(axis=0)])
    target = np.concatenate([b, [1.0]])
    x, _ = nnls(A, target)
    residual = float(np.max(np.abs(A @ x - target)))
    if residual > tol:
        return None
    Z = null_space(A)
    return PopulationFit(model.expand(x), residual, Z.shape[1] == 0, G @ Z)


def fit_populations(model: CoherenceModel, obs: ObservationSeries, t: int, tol: float = FIT_TOL) -> Optional[PopulationFit]:
    """Fit at time index ``t`` of ``obs``."""
    return fit_populations_at(model, obs.orbital_populations[t], tol)


@dataclass(frozen=True)
class Envelope:
    P1_inc: float
    P1_coh: float
    P2_inc: float
    P2_coh: float

    def bounds(self, r: int) -> tuple[float, float]:
        return (self.P1_inc, self.P1_coh) if r == 1 else (self.P2_inc, self.P2_coh)


def purity_envelope(model: CoherenceModel, populations) -> Envelope:
    """P1/P2 with coherences at their smallest and largest values allowed by
    the model: zero pairs stay 0, full pairs sit at ``a_nn a_mm``, free
    pairs go from 0 (incoherent) to ``a_nn a_mm`` (coherent)."""
    pops = [float(p) for p in populations]
    M, N = model.M, model.N
    orders = model.orders()
    lo = [[0.0] * M for _ in range(M)]
    hi = [[0.0] * M for _ in range(M)]
    for n, m in combinations(range(M), 2):
        regime = model.regime(n, m)
        full = pops[n] * pops[m]
        if regime == FULL:
            lo[n][m] = lo[m][n] = hi[n][m] = hi[m][n] = full
        elif regime == FREE:
            hi[n][m] = hi[m][n] = full
    p1i, p1c = sum(p1_terms(pops, lo, orders, N)), sum(p1_terms(pops, hi, orders, N))
    p2i, p2c = sum(p2_terms(pops, lo, orders, N)), sum(p2_terms(pops, hi, orders, N))
    return Envelope(float(p1i), float(p1c), float(p2i), float(p2c))


def _violation(env: Envelope, r: int, observed: float) -> float:
    lo, hi = env.bounds(r)
    return max(0.0, lo - observed, observed - hi)


def _best_violation(model, fit: PopulationFit, r: int, observed: float) -> tuple[float, Envelope]:
    """Smallest envelope violation over the fit's solution set."""
    env = purity_envelope(model, fit.populations)
    v0 = _violation(env, r, observed)
    if fit.unique or v0 == 0.0:
        return v0, env
    x0, Z = fit.populations, fit.null_space

    def objective(z):
        return _violation(purity_envelope(model, x0 + Z @ z), r, observed) ** 2

    cons = {"type": "ineq", "fun": lambda z: x0 + Z @ z}
    best_v, best_env = v0, env
    rng = np.random.default_rng(0)
    starts = [np.zeros(Z.shape[1])] + [rng.normal(scale=0.1, size=Z.shape[1]) for _ in range(4)]
    for z0 in starts:
        res = minimize(objective, z0, constraints=[cons], method="SLSQP",
                       options={"ftol": 1e-16, "maxiter": 200})
        x = np.clip(x0 + Z @ res.x, 0.0, None)
        env_z = purity_envelope(model, x)
        v = _violation(env_z, r, observed)
        if v < best_v:
            best_v, best_env = v, env_z
    return best_v, best_env


def enumerate_candidates(active_space: Sequence[SlaterDeterminant], orbital_populations,
                         max_size: Optional[int] = None, tol: float = FIT_TOL,
                         min_weight: float = 1e-9) -> list[CoherenceModel]:
    """Subsets of the active space that reproduce the orbital populations
    with strictly positive weight on every member.  A weight counts as
    positive only above ``max(min_weight, 2 * tol)``: smaller weights are
    hidden by the fit tolerance.

    Subsets larger than ``max_size`` are skipped with a warning.  Returns an
    empty list (and warns) when no subset is feasible.
    """
    active = tuple(active_space)
    if not active:
        raise ReconstructionError("active space is empty")
    b = np.asarray(orbital_populations, dtype=float)
    F = occupation_matrix(active)
    M = len(active)
    limit = M if max_size is None else min(max_size, M)
    if limit < M:
        warnings.warn(f"active space of {M} determinants: subsets above size {limit} pruned")
    out = []
    for size in range(1, limit + 1):
        for subset in combinations(range(M), size):
            if _positive_mixture(F[list(subset)], b, tol, min_weight):
                dets = tuple(active[i] for i in subset)
                out.append(CoherenceModel(
                    name="{" + ",".join(str(i) for i in subset) + "}", dets=dets))
    if not out:
        warnings.warn("no subset of the active space reproduces the orbital populations")
    return out


def _positive_mixture(F, b, tol, min_weight) -> bool:
    # maximize t subject to |F^T w - b| <= tol, sum w = 1, w_i >= t
    m = F.shape[0]
    c = np.zeros(m + 1)
    c[-1] = -1.0
    A_ub = np.vstack([
        np.hstack([F.T, np.zeros((F.shape[1], 1))]),
        np.hstack([-F.T, np.zeros((F.shape[1], 1))]),
        np.hstack([-np.eye(m), np.ones((m, 1))]),
    ])
    b_ub = np.concatenate([b + tol, -b + tol, np.zeros(m)])
    A_eq = np.hstack([np.ones((1, m)), np.zeros((1, 1))])
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=[1.0],
                  bounds=[(0, 1)] * m + [(None, 1)], method="highs")
    return res.status == 0 and -res.fun > max(min_weight, 2 * tol)


@dataclass
class ModelVerdict:
    name: str
    status: str = "survivor"
    stage: Optional[str] = None
    first_violation_time: Optional[float] = None
    max_violation: dict = field(default_factory=dict)
    integrated_violation: dict = field(default_factory=dict)
    integrated_width: dict = field(default_factory=dict)
    non_unique_fit: bool = False
    envelopes: dict = field(default_factory=dict)

    def to_dict(self, with_envelopes: bool = False) -> dict:
        d = {k: v for k, v in self.__dict__.items() if k != "envelopes"}
        if with_envelopes:
            d["envelopes"] = {k: [list(map(float, row)) for row in v] for k, v in self.envelopes.items()}
        return d


@dataclass
class DiscardResult:
    verdicts: list[ModelVerdict]
    survivors: list[str]
    stages_used: list[str]
    ranking_metric: str = ("integrated envelope violation at the last stage used, "
                           "ties broken by integrated envelope width (narrower first)")
    diagnostic: Optional[str] = None

    def to_dict(self, with_envelopes: bool = False) -> dict:
        return {
            "survivors": self.survivors,
            "stages_used": self.stages_used,
            "ranking_metric": self.ranking_metric,
            "diagnostic": self.diagnostic,
            "models": [v.to_dict(with_envelopes) for v in self.verdicts],
        }


def discard(models: Sequence[CoherenceModel], obs: ObservationSeries, tol: float = ENVELOPE_TOL, *,
            fit_tol: float = FIT_TOL, stride: int = 1,
            initial_coherence: Optional[str] = None) -> DiscardResult:
    """Envelope test over the observation series.

    Models failing the population fit or the P1 bracket at any sampled time
    are discarded.  ``initial_coherence`` ("coherent" or "incoherent") pins
    the model value at the first time step to the corresponding envelope
    edge, which must then match the observation within ``tol``.  If more
    than one model survives and ``obs.P2`` is present, the P2 stage repeats
    the test on the survivors.  Survivors are ranked, never collapsed.
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if initial_coherence not in (None, "coherent", "incoherent"):
        raise ValueError("initial_coherence must be 'coherent', 'incoherent' or None")
    steps = list(range(0, len(obs.times), stride))
    verdicts = {m.name: ModelVerdict(m.name) for m in models}
    if len(verdicts) != len(models):
        raise ReconstructionError("model names must be unique")

    fits: dict[str, list] = {}
    for model in models:
        v = verdicts[model.name]
        fits[model.name] = []
        for t in steps:
            fit = fit_populations(model, obs, t, fit_tol)
            if fit is None:
                v.status, v.stage = "discarded", "populations"
                v.first_violation_time = float(obs.times[t])
                break
            v.non_unique_fit |= not fit.unique
            fits[model.name].append(fit)

    def run_stage(r: int, candidates):
        values = obs.P1 if r == 1 else obs.P2
        label = f"P{r}"
        for model in candidates:
            v = verdicts[model.name]
            lo, hi, viol = [], [], []
            for t, fit in zip(steps, fits[model.name]):
                best, env = _best_violation(model, fit, r, values[t])
                bl, bh = env.bounds(r)
                lo.append(bl)
                hi.append(bh)
                viol.append(best)
            lo, hi, viol = np.array(lo), np.array(hi), np.array(viol)
            times = obs.times[steps]
            v.envelopes[label] = np.vstack([times, lo, hi, values[steps]]).T
            v.max_violation[label] = float(viol.max())
            v.integrated_violation[label] = float(trapezoid(viol, times)) if len(times) > 1 else float(viol[0])
            v.integrated_width[label] = float(trapezoid(hi - lo, times)) if len(times) > 1 else float(hi[0] - lo[0])
            bad = np.nonzero(viol > tol)[0]
            if bad.size:
                v.status, v.stage = "discarded", label
                v.first_violation_time = float(times[bad[0]])
                continue
            if initial_coherence is not None:
                edge = lo[0] if initial_coherence == "incoherent" else hi[0]
                if abs(edge - values[0]) > tol:
                    v.status, v.stage = "discarded", f"{label}(0)"
                    v.first_violation_time = float(times[0])

    alive = lambda: [m for m in models if verdicts[m.name].status == "survivor"]
    stages = ["P1"]
    run_stage(1, alive())
    if len(alive()) > 1 and obs.P2 is not None and not np.all(np.isnan(obs.P2)):
        stages.append("P2")
        run_stage(2, alive())

    last = stages[-1]
    survivors = sorted(alive(), key=lambda m: (verdicts[m.name].integrated_violation.get(last, 0.0),
                                               verdicts[m.name].integrated_width.get(last, 0.0)))
    diagnostic = None
    if not survivors:
        diagnostic = "; ".join(
            f"{v.name}: first violation at t={v.first_violation_time} ({v.stage})" for v in verdicts.values())
    ordered = [verdicts[m.name] for m in survivors] + [v for v in verdicts.values() if v.status != "survivor"]
    return DiscardResult(ordered, [m.name for m in survivors], stages, diagnostic=diagnostic)


def photoexcitation_models(dets: Sequence[SlaterDeterminant]) -> list[CoherenceModel]:
    """The five three-determinant models M1-M5 over ``(Phi0, Phi1, Phi2)``."""
    dets = tuple(dets)
    if len(dets) != 3:
        raise ReconstructionError("M1-M5 are defined over three determinants")
    all_pairs = ((0, 1), (0, 2), (1, 2))
    return [
        CoherenceModel("M1", dets, zero_populations=(2,),
                       coherence=tuple((p, FULL) for p in all_pairs)),
        CoherenceModel("M2", dets, equal_populations=((1, 2),),
                       coherence=tuple((p, FULL) for p in all_pairs)),
        CoherenceModel("M3", dets, zero_populations=(2,),
                       coherence=tuple((p, ZERO) for p in all_pairs)),
        CoherenceModel("M4", dets, equal_populations=((1, 2),),
                       coherence=(((0, 1), ZERO), ((0, 2), ZERO), ((1, 2), FULL))),
        CoherenceModel("M5", dets, equal_populations=((1, 2),),
                       coherence=tuple((p, ZERO) for p in all_pairs)),
    ]
