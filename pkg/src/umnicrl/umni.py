"""Latent recovery from unknown multi-node interventions.

Stage 1 picks a basis of score differences, Stage 2 recovers the encoder up
to a causal order, Stage 3 up to ancestors and builds the transitive-closure
graph, and (hard interventions only) Stage 4 unmixes ancestors and prunes the
graph with conditional independence tests.
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Literal, Sequence

import numpy as np

from . import kernels
from .graph import Dag
from .lattice import SearchBox, pair_candidates
from .linalg import column_basis, complement_projector, numerical_rank, orthonormal_rows
from .score import (
    AffineScoreFn,
    ScoreDifferenceStack,
    estimate_gaussian_score,
    score_difference,
    select_basis,
)
from .stats import (
    EnvMoments,
    fisher_z_pvalue,
    partial_correlation,
    regression_coefficients,
    residual_cross_correlation,
)
from .theory import kappa_bound

log = logging.getLogger(__name__)

#: relative cutoff for the column basis of the stacked probe evaluations
_BASIS_RTOL = 1e-12
#: relative eigenvalue cutoff for the dimension of the data support
SUPPORT_RTOL = 1e-8


class RecoveryError(RuntimeError):
    def __init__(self, stage: int, message: str):
        super().__init__(f"stage {stage}: {message}")
        self.stage = stage


@dataclass(frozen=True)
class UmniOptions:
    """Knobs of the recovery pipeline.

    The image-dimension test counts singular values (in whitened support
    coordinates) that are at least ``rank_tol`` times the largest and, for
    estimated scores, at least ``noise_tol * ||w||_2 / sqrt(n_samples)``.
    ``indep_tol`` applies when moments are exact.
    """

    kind: Literal["soft", "hard"] = "hard"
    rank_tol: float = 1e-3
    noise_tol: float = 30.0
    basis_tol: float = 1e-3
    kappa: int | None = None
    se_multiplier: float = 3.0
    ci_alpha: float = 0.05
    indep_tol: float = 1e-8
    estimate_rtol: float = 1e-9

    @classmethod
    def oracle(cls, kind: Literal["soft", "hard"] = "hard", **kw) -> UmniOptions:
        return cls(kind=kind, rank_tol=1e-6, basis_tol=1e-6, **kw)


@dataclass
class RecoveryState:
    encoder: np.ndarray
    mix: np.ndarray
    filled: int = 0
    graph: Dag | None = None
    trace: list[dict] = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.mix.shape[0]

    @property
    def order(self) -> list[int]:
        """Estimated nodes in the order Stage 2 recovered them (a causal order of ``graph``)."""
        return list(range(self.filled))

    def copy(self) -> RecoveryState:
        return replace(
            self,
            encoder=self.encoder.copy(),
            mix=self.mix.copy(),
            trace=list(self.trace),
        )

    def to_dict(self) -> dict:
        return {
            "encoder": self.encoder.tolist(),
            "mix": self.mix.tolist(),
            "graph": sorted(list(e) for e in self.graph.edges) if self.graph else None,
            "trace": self.trace,
        }

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))


# ---------------------------------------------------------------------------
# image-dimension tests


def _top_direction(pe: np.ndarray) -> np.ndarray:
    _, _, vt = np.linalg.svd(pe, full_matrices=False)
    v = vt[0]
    return v if v[np.argmax(np.abs(v))] > 0 else -v


def projected_image_dim(
    stack: ScoreDifferenceStack,
    w: np.ndarray,
    null_of: np.ndarray,
    probes: np.ndarray,
    tol: float,
) -> tuple[int, np.ndarray | None]:
    """Dimension of the projected image of ``stack . w`` over the probes (direct SVD).

    Returns the dimension and, when it is 1, the unit image vector along the
    top right-singular direction of the projected evaluations.
    """
    w = np.asarray(w, dtype=float)
    e = np.tensordot(w, stack.evaluate(probes), axes=1)  # (d, p)
    pe = complement_projector(null_of, stack.d) @ e
    norm_e = np.linalg.norm(e)
    if norm_e == 0.0 or np.linalg.norm(pe) < tol * norm_e:
        return 0, None
    s = np.linalg.svd(pe, compute_uv=False)
    dim = int(np.sum(s >= tol * s[0]))
    if dim != 1:
        return dim, None
    v = e @ _top_direction(pe)
    return 1, v / np.linalg.norm(v)


@dataclass(frozen=True, eq=False)
class TestFrame:
    """Where the dimension tests are evaluated.

    ``out_map`` (r x d) sends score vectors to test coordinates, ``probes``
    (p x d) are the evaluation points and ``floor`` is the squared noise
    level per unit ``||w||^2`` (zero for exact scores).
    """

    __test__ = False  # not a pytest class

    out_map: np.ndarray
    probes: np.ndarray
    floor: float = 0.0

    @classmethod
    def raw(cls, probes: np.ndarray) -> TestFrame:
        probes = np.atleast_2d(probes)
        return cls(np.eye(probes.shape[1]), probes)

    @classmethod
    def whitened(
        cls,
        cov: np.ndarray,
        mean: np.ndarray,
        n: int,
        n_samples: int | None = None,
        noise_tol: float = 0.0,
    ) -> TestFrame:
        """Frame of the top-``n`` principal axes of ``cov``, scaled to unit variance.

        Probes are the mean and the mean moved one standard deviation along
        each axis. Score vectors are mapped by ``diag(sqrt(lam)) U^T``, which
        whitens the observational precision on the support.
        """
        lam, vec = np.linalg.eigh(0.5 * (cov + cov.T))
        lam, vec = lam[::-1][:n], vec[:, ::-1][:, :n]
        if np.any(lam <= 0):
            raise ValueError("covariance has fewer than n positive directions")
        root = np.sqrt(lam)
        out_map = root[:, None] * vec.T
        probes = np.vstack([mean, mean + (vec * root).T])
        floor = noise_tol**2 / n_samples if n_samples else 0.0
        return cls(out_map, probes, floor)


class ProbeContext:
    """Probe evaluations of the basis stack, compressed for fast lattice scans."""

    def __init__(self, stack: ScoreDifferenceStack, frame: TestFrame):
        self.stack = stack
        self.frame = frame
        self.evals_x = stack.evaluate(frame.probes)  # (n, d, p)
        self.evals = np.einsum("rd,ndp->nrp", frame.out_map, self.evals_x)
        n, r, p = self.evals.shape
        self.basis = column_basis(self.evals.transpose(1, 0, 2).reshape(r, n * p), _BASIS_RTOL)
        self.comp = np.einsum("rk,nrp->nkp", self.basis, self.evals)
        self.trace_u = np.ascontiguousarray(np.einsum("arp,brp->ab", self.comp, self.comp))

    def _null_in_frame(self, null_rows: np.ndarray) -> np.ndarray:
        return np.reshape(null_rows, (-1, self.stack.d)) @ self.frame.out_map.T

    def projected(self, null_rows: np.ndarray) -> np.ndarray:
        """Compressed evaluations with ``null_rows`` projected out; the rows must lie in their span."""
        k = self.basis.shape[1]
        rows = self._null_in_frame(null_rows) @ self.basis
        q = orthonormal_rows(rows) if rows.shape[0] else np.zeros((0, k))
        proj = np.eye(k) - q.T @ q
        return np.ascontiguousarray(np.einsum("ij,njp->nip", proj, self.comp))

    def dims(self, null_rows: np.ndarray, points: np.ndarray, tol: float) -> np.ndarray:
        pts = np.ascontiguousarray(points, dtype=float)
        return kernels.lattice_dims(self.projected(null_rows), self.trace_u, pts, float(tol), self.frame.floor)

    def first_rank_one(self, null_rows: np.ndarray, points: np.ndarray, tol: float) -> int:
        pts = np.ascontiguousarray(points, dtype=float)
        ev = self.projected(null_rows)
        return int(kernels.first_rank_one(ev, self.trace_u, pts, float(tol), self.frame.floor))

    def representative(self, w: np.ndarray, null_rows: np.ndarray) -> np.ndarray:
        """Unit image vector (in data space) along the top projected singular direction."""
        w = np.asarray(w, dtype=float)
        e = np.tensordot(w, self.evals, axes=1)
        pe = complement_projector(self._null_in_frame(null_rows), e.shape[0]) @ e
        v = np.tensordot(w, self.evals_x, axes=1) @ _top_direction(pe)
        return v / np.linalg.norm(v)


# ---------------------------------------------------------------------------
# stages 2 and 3


def _frame(frame_or_probes) -> TestFrame:
    return frame_or_probes if isinstance(frame_or_probes, TestFrame) else TestFrame.raw(frame_or_probes)


def stage2_causal_order(
    stack: ScoreDifferenceStack,
    probes: TestFrame | np.ndarray,
    kappa: int,
    tol: float,
) -> RecoveryState:
    """Scan the lattice for each step; ``probes`` is a point array or a :class:`TestFrame`."""
    n, d = stack.n, stack.d
    ctx = ProbeContext(stack, _frame(probes))
    points = SearchBox(kappa, n).points()
    state = RecoveryState(np.zeros((n, d)), np.zeros((n, n), dtype=np.int64))
    for t in range(n):
        k = ctx.first_rank_one(state.encoder[:t], points, tol)
        if k < 0:
            raise RecoveryError(2, f"no lattice vector with one-dimensional image at step {t}")
        w = points[k]
        state.encoder[t] = ctx.representative(w, state.encoder[:t])
        state.mix[:, t] = w
        state.filled = t + 1
        state.trace.append({"stage": 2, "t": t, "w": w.tolist(), "lattice_index": int(k)})
    state.graph = Dag.empty(n)
    return state


def stage3_ancestors(
    state: RecoveryState,
    stack: ScoreDifferenceStack,
    probes: TestFrame | np.ndarray,
    tol: float,
) -> RecoveryState:
    state = state.copy()
    n = state.n
    ctx = ProbeContext(stack, _frame(probes))
    edges: set[tuple[int, int]] = set()

    def children(a: int) -> set[int]:
        return {v for u, v in edges if u == a}

    def descendants(a: int) -> set[int]:
        out, frontier = set(), [a]
        while frontier:
            k = frontier.pop()
            for v in children(k) - out:
                out.add(v)
                frontier.append(v)
        return out

    for t in range(n - 2, -1, -1):
        for j in range(t + 1, n):
            ch_t = children(t)
            if j in ch_t:
                continue
            null_set = [i for i in range(j) if i not in ch_t and i != t]
            w_t, w_j = state.mix[:, t], state.mix[:, j]
            # the listing and the proof bound alpha and beta by different column norms
            bound = int(max(np.abs(w_t).sum(), np.abs(w_j).sum()))
            cands, pairs = pair_candidates(w_t, w_j, bound)
            null_rows = state.encoder[null_set]
            k = ctx.first_rank_one(null_rows, cands, tol)
            if k >= 0:
                state.mix[:, j] = cands[k]
                state.encoder[j] = ctx.representative(cands[k], null_rows)
                state.trace.append(
                    {"stage": 3, "t": t, "j": j, "alpha": int(pairs[k, 0]),
                     "beta": int(pairs[k, 1]), "w": cands[k].tolist()}
                )
            else:
                new = {(t, j)} | {(t, u) for u in descendants(j)}
                edges |= new
                state.trace.append({"stage": 3, "t": t, "j": j, "edges": sorted(map(list, new))})
    state.graph = Dag(n, frozenset(edges))
    return state


# ---------------------------------------------------------------------------
# stage 4


def _as_moments(x: EnvMoments | np.ndarray) -> EnvMoments:
    return x if isinstance(x, EnvMoments) else EnvMoments.from_samples(x)


def zero_covariance_test(cov: np.ndarray, target: int, given: list[int], u: np.ndarray, tol: float) -> bool:
    """Independence surrogate: the corrected coordinate is uncorrelated with every ancestor."""
    return bool(np.all(np.abs(residual_cross_correlation(cov, target, given, u)) <= tol))


IndependenceTest = Callable[[np.ndarray, int, list, np.ndarray, float], bool]


def stage4_unmix(
    state: RecoveryState,
    obs: EnvMoments | np.ndarray,
    envs: Sequence[EnvMoments | np.ndarray],
    options: UmniOptions = UmniOptions(),
    independence_test: IndependenceTest = zero_covariance_test,
) -> RecoveryState:
    """Remove ancestor mixing row by row, using an environment that intervenes the node.

    ``envs[m]`` are the moments of basis environment ``m`` (row ``m`` of ``mix``).
    """
    state = state.copy()
    obs = _as_moments(obs)
    envs = [_as_moments(e) for e in envs]
    g = state.graph
    h = state.encoder
    for t in range(1, state.n):
        anc = sorted(g.ancestors(t))
        if not anc:
            continue
        cov_obs = h @ obs.cov @ h.T
        u_obs, se_obs = regression_coefficients(cov_obs, t, anc, obs.n_samples)
        accepted = None
        for m in np.flatnonzero(state.mix[:, t]):
            env = envs[m]
            cov_m = h @ env.cov @ h.T
            u_m, se_m = regression_coefficients(cov_m, t, anc, env.n_samples)
            exact = env.n_samples is None or obs.n_samples is None
            if exact:
                thresh = options.indep_tol * (1.0 + np.max(np.abs(u_obs)))
            else:
                thresh = options.se_multiplier * np.sqrt(se_m**2 + se_obs**2)
            differs = bool(np.any(np.abs(u_m - u_obs) > thresh))
            indep_tol = options.indep_tol if exact else 1e-6
            if differs and independence_test(cov_m, t, anc, u_m, indep_tol):
                accepted = (int(m), u_m)
                break
        if accepted is None:
            raise RecoveryError(4, f"no environment unmixes estimated node {t}")
        m, u = accepted
        row = h[t] + u @ h[anc]
        h[t] = row / np.linalg.norm(row)
        state.trace.append({"stage": 4, "t": t, "env": m, "u": u.tolist()})
    return state


def stage4_prune_graph(
    state: RecoveryState,
    obs: EnvMoments | np.ndarray,
    alpha_level: float = 0.05,
    exact_tol: float = 1e-8,
) -> Dag:
    """Drop ``t -> j`` when the encoded ``t`` and ``j`` are independent given ``j``'s other parents."""
    obs = _as_moments(obs)
    cov = state.encoder @ obs.cov @ state.encoder.T
    g = state.graph
    parents = {j: g.parents(j) for j in range(g.n)}
    keep = set(g.edges)
    for t, j in sorted(g.edges):
        given = sorted(parents[j] - {t})
        sub = cov[np.ix_(given + [t, j], given + [t, j])]
        if np.linalg.cond(sub) > 1e12:
            warnings.warn(f"singular conditioning covariance for edge {t}->{j}; edge kept")
            continue
        r = partial_correlation(cov, t, j, given)
        if obs.n_samples is None:
            independent = abs(r) <= exact_tol
        else:
            independent = fisher_z_pvalue(r, obs.n_samples, len(given)) >= alpha_level
        if independent:
            keep.discard((t, j))
    return Dag(g.n, frozenset(keep))


# ---------------------------------------------------------------------------
# end to end


@dataclass
class UmniResult:
    graph: Dag
    encoder: np.ndarray
    z_hat: np.ndarray | None
    state: RecoveryState
    basis: list[int]


def recover(
    obs_score: AffineScoreFn,
    env_scores: Sequence[AffineScoreFn],
    frame: TestFrame,
    options: UmniOptions,
    obs_moments: EnvMoments | None = None,
    env_moments: Sequence[EnvMoments] | None = None,
    n: int | None = None,
) -> tuple[RecoveryState, list[int]]:
    """Run the stages on given score functions; moments are needed only for hard pipelines."""
    diffs = [score_difference(s, obs_score) for s in env_scores]
    try:
        basis, stack = select_basis(diffs, frame.probes, options.basis_tol, n)
    except RuntimeError as exc:
        raise RecoveryError(1, str(exc)) from exc
    kappa = options.kappa if options.kappa is not None else kappa_bound(stack.n)
    state = stage2_causal_order(stack, frame, kappa, options.rank_tol)
    state = stage3_ancestors(state, stack, frame, options.rank_tol)
    state.trace.insert(0, {"stage": 1, "basis": basis})
    if options.kind == "hard":
        if obs_moments is None or env_moments is None:
            raise ValueError("hard pipeline needs observational and environment moments")
        basis_moments = [env_moments[b] for b in basis]
        state = stage4_unmix(state, obs_moments, basis_moments, options)
        state.graph = stage4_prune_graph(state, obs_moments, options.ci_alpha, options.indep_tol)
    return state, basis


def run_umni(env_x: Sequence[np.ndarray], options: UmniOptions = UmniOptions()) -> UmniResult:
    """Recover the latent graph and variables from observational + interventional samples.

    ``env_x[0]`` holds observational samples; the rest one matrix per environment.
    """
    if len(env_x) < 2:
        raise ValueError("need observational samples and at least one environment")
    env_x = [np.atleast_2d(np.asarray(x, dtype=float)) for x in env_x]
    d = env_x[0].shape[1]
    if any(x.shape[1] != d for x in env_x):
        raise ValueError("all sample matrices must share their column count")
    obs_score = estimate_gaussian_score(env_x[0], options.estimate_rtol)
    env_scores = [estimate_gaussian_score(x, options.estimate_rtol) for x in env_x[1:]]
    moments = [EnvMoments.from_samples(x) for x in env_x]
    n = min(len(env_scores), numerical_rank(moments[0].cov, SUPPORT_RTOL))
    n_s = min(x.shape[0] for x in env_x)
    frame = TestFrame.whitened(moments[0].cov, env_x[0].mean(axis=0), n, n_s, options.noise_tol)
    state, basis = recover(obs_score, env_scores, frame, options, moments[0], moments[1:], n)
    z_hat = env_x[0] @ state.encoder.T
    return UmniResult(state.graph, state.encoder, z_hat, state, basis)
