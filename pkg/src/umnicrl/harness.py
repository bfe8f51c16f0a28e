"""Seeded experiment trials and batches with CSV output."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Literal

import numpy as np
from joblib import Parallel, delayed

from .graph import random_dag
from .metrics import evaluate
from .scm import (
    EnvironmentSpec,
    analytic_latent_covariance,
    analytic_latent_mean,
    mix,
    random_interventions,
    random_sem,
    random_transform,
    sample_latent,
)
from .score import oracle_scores
from .stats import EnvMoments
from .umni import RecoveryError, TestFrame, UmniOptions, recover, run_umni

log = logging.getLogger(__name__)

CSV_VERSION = "# umnicrl-trials/1"
SUMMARY_VERSION = "# umnicrl-summary/1"

_MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def trial_seed(master: int, index: int) -> int:
    return splitmix64((master + index) & _MASK64)


@dataclass(frozen=True)
class ExperimentConfig:
    n: int = 4
    d: int = 5
    n_samples: int = 100_000
    n_graphs: int = 200
    density: float = 0.5
    intervention_kind: Literal["soft", "hard"] = "soft"
    score_mode: Literal["oracle", "estimated"] = "estimated"
    seed: int = 0
    rank_tol: float = 1e-3
    noise_tol: float = 30.0
    mixing_threshold: float = 0.1
    ci_alpha: float = 0.05
    normalize: bool = True
    alignment: Literal["assignment", "greedy"] = "assignment"
    output: str | None = None

    def __post_init__(self) -> None:
        if self.n < 1 or self.d < self.n:
            raise ValueError(f"need d >= n >= 1, got n={self.n}, d={self.d}")
        if self.n_graphs < 1 or self.n_samples < 2:
            raise ValueError("n_graphs must be >= 1 and n_samples >= 2")
        if min(self.rank_tol, self.noise_tol, self.mixing_threshold, self.ci_alpha) <= 0:
            raise ValueError("tolerances must be positive")
        if not 0.0 <= self.density <= 1.0:
            raise ValueError("density must lie in [0, 1]")
        if self.intervention_kind not in ("soft", "hard"):
            raise ValueError(f"unknown intervention kind {self.intervention_kind!r}")
        if self.score_mode not in ("oracle", "estimated"):
            raise ValueError(f"unknown score mode {self.score_mode!r}")

    @classmethod
    def from_dict(cls, data: dict) -> ExperimentConfig:
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path: str | Path) -> ExperimentConfig:
        text = Path(path).read_text()
        if str(path).endswith((".yaml", ".yml")):
            import yaml

            data = yaml.safe_load(text)
        else:
            data = json.loads(text)
        return cls.from_dict(data or {})

    def options(self) -> UmniOptions:
        if self.score_mode == "oracle":
            return UmniOptions.oracle(self.intervention_kind)
        return UmniOptions(
            kind=self.intervention_kind,
            rank_tol=self.rank_tol,
            noise_tol=self.noise_tol,
            ci_alpha=self.ci_alpha,
        )


_CONFIG_COLUMNS = ("n", "d", "n_samples", "density", "intervention_kind", "score_mode")
TRIAL_COLUMNS = ("trial", "seed") + _CONFIG_COLUMNS + (
    "status", "failed_stage", "true_edges", "est_edges", "shd", "mixing_ratio", "alignment",
)
SUMMARY_COLUMNS = _CONFIG_COLUMNS + ("n_graphs", "n_ok", "n_failed", "mean_shd", "mean_mixing_ratio")


def draw_instance(config: ExperimentConfig, rng: np.random.Generator):
    dag = random_dag(config.n, config.density, rng)
    sem = random_sem(dag, rng)
    specs = random_interventions(config.n, config.intervention_kind, sem, rng)
    model = random_transform(config.d, config.n, rng)
    return sem, specs, model


def oracle_moments(sem, specs, model) -> tuple[EnvMoments, list[EnvMoments]]:
    g = model.transform
    obs = EnvMoments(g @ analytic_latent_covariance(sem, EnvironmentSpec.observational()) @ g.T)
    return obs, [EnvMoments(g @ analytic_latent_covariance(sem, s) @ g.T) for s in specs]


def oracle_frame(sem, model) -> TestFrame:
    obs = EnvironmentSpec.observational()
    g = model.transform
    cov = g @ analytic_latent_covariance(sem, obs) @ g.T
    return TestFrame.whitened(cov, g @ analytic_latent_mean(sem, obs), sem.n)


def recover_instance(config: ExperimentConfig, sem, specs, model, rng: np.random.Generator):
    """Run the pipeline on one drawn instance; returns ``(graph, encoder, state)``."""
    options = config.options()
    if config.score_mode == "oracle":
        obs_score, env_scores = oracle_scores(sem, specs, model)
        obs_m, env_m = oracle_moments(sem, specs, model)
        state, _ = recover(obs_score, env_scores, oracle_frame(sem, model), options, obs_m, env_m, sem.n)
        return state.graph, state.encoder, state
    env_x = [
        mix(model, sample_latent(sem, spec, config.n_samples, rng))
        for spec in [EnvironmentSpec.observational(), *specs]
    ]
    result = run_umni(env_x, options)
    return result.graph, result.encoder, result.state


def run_trial(config: ExperimentConfig, index: int) -> dict:
    """One seeded trial; recovery failures come back as rows with ``status`` failed."""
    seed = trial_seed(config.seed, index)
    rng = np.random.default_rng(seed)
    sem, specs, model = draw_instance(config, rng)
    row = {"trial": index, "seed": seed}
    row.update({k: getattr(config, k) for k in _CONFIG_COLUMNS})
    row["true_edges"] = _edge_str(sem.dag)
    try:
        g_hat, encoder, _ = recover_instance(config, sem, specs, model, rng)
        report = evaluate(
            g_hat, encoder @ model.transform, sem.dag, config.intervention_kind,
            config.mixing_threshold, config.normalize, config.alignment,
        )
    except (RecoveryError, ValueError, np.linalg.LinAlgError) as exc:
        log.info("trial %d failed: %s", index, exc)
        row.update(status="failed", failed_stage=getattr(exc, "stage", ""), est_edges="",
                   shd="", mixing_ratio="", alignment="")
        return row
    row.update(status="ok", failed_stage="", est_edges=_edge_str(g_hat.relabel(report.alignment)))
    row.update(report.to_row())
    return row


def _edge_str(g) -> str:
    return ";".join(f"{a}-{b}" for a, b in sorted(g.edges))


def summarize(config: ExperimentConfig, rows: list[dict]) -> dict:
    ok = [r for r in rows if r["status"] == "ok"]
    ratios = [float(r["mixing_ratio"]) for r in ok if not math.isnan(float(r["mixing_ratio"]))]
    out = {k: getattr(config, k) for k in _CONFIG_COLUMNS}
    out.update(
        n_graphs=len(rows),
        n_ok=len(ok),
        n_failed=len(rows) - len(ok),
        mean_shd=float(np.mean([float(r["shd"]) for r in ok])) if ok else float("nan"),
        mean_mixing_ratio=float(np.mean(ratios)) if ratios else float("nan"),
    )
    return out


def run_batch(config: ExperimentConfig, jobs: int = 1, out: str | Path | None = None) -> tuple[list[dict], dict]:
    """Run ``n_graphs`` trials; writes ``<out>.trials.csv`` and ``<out>.summary.csv`` when ``out`` is set."""
    rows = Parallel(n_jobs=jobs)(delayed(run_trial)(config, i) for i in range(config.n_graphs))
    rows = sorted(rows, key=lambda r: r["trial"])
    summary = summarize(config, rows)
    out = out or config.output
    if out:
        write_csv(f"{out}.trials.csv", rows, TRIAL_COLUMNS, CSV_VERSION)
        write_csv(f"{out}.summary.csv", [summary], SUMMARY_COLUMNS, SUMMARY_VERSION)
    return rows, summary


def write_csv(path: str | Path, rows: list[dict], columns, version: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(version + "\n")
        writer = csv.DictWriter(fh, fieldnames=list(columns), lineterminator="\n")
        writer.writeheader()
        for r in rows:
            writer.writerow({k: _fmt(r[k]) for k in columns})


def read_csv(path: str | Path) -> list[dict]:
    with open(path, newline="") as fh:
        first = fh.readline()
        if not first.startswith("# umnicrl-"):
            raise ValueError(f"{path} lacks a version header")
        return list(csv.DictReader(fh))


def _fmt(v):
    return repr(v) if isinstance(v, float) else v


def with_overrides(config: ExperimentConfig, **kw) -> ExperimentConfig:
    return replace(config, **{k: v for k, v in kw.items() if v is not None})


def config_dict(config: ExperimentConfig) -> dict:
    return asdict(config)


# ---------------------------------------------------------------------------
# oracle invariant suite


def _recovered_order(mixing: np.ndarray, tol: float) -> list[int] | None:
    """True node introduced by each estimated row of a lower-triangular-up-to-permutation mixing."""
    seen: list[int] = []
    for row in np.abs(mixing):
        support = set(np.flatnonzero(row > tol * row.max()).tolist())
        new = support - set(seen)
        if len(new) != 1:
            return None
        seen.append(new.pop())
    return seen


def oracle_check_instance(n: int, d: int, kind: Literal["soft", "hard"], seed: int, tol: float = 1e-6) -> dict:
    """Run the stages with analytic scores and check the exactness invariants.

    Returns a dict of named booleans plus the recovered order.
    """
    from .graph import transitive_closure
    from .metrics import mixing_ratio_hard, row_sup_normalize
    from .scm import intervention_signature
    from .score import score_difference, select_basis
    from .theory import kappa_bound
    from .umni import stage2_causal_order, stage3_ancestors, stage4_prune_graph, stage4_unmix

    config = ExperimentConfig(n=n, d=d, intervention_kind=kind, score_mode="oracle", n_graphs=1)
    rng = np.random.default_rng(seed)
    sem, specs, model = draw_instance(config, rng)
    g = model.transform
    frame = oracle_frame(sem, model)
    opts = config.options()
    obs_score, env_scores = oracle_scores(sem, specs, model)
    diffs = [score_difference(s, obs_score) for s in env_scores]
    basis, stack = select_basis(diffs, frame.probes, opts.basis_tol, n)
    d_b = intervention_signature([specs[b] for b in basis], n)
    out: dict = {"seed": seed, "n": n, "kind": kind}

    st2 = stage2_causal_order(stack, frame, kappa_bound(n), opts.rank_tol)
    order = _recovered_order(st2.encoder @ g, tol)
    out["order"] = order
    dw = d_b @ st2.mix
    out["stage2_triangular"] = order is not None and all(
        dw[order[s], t] == 0 for t in range(n) for s in range(t + 1, n)
    ) and all(dw[order[t], t] != 0 for t in range(n))
    if order is None:
        out["stage2_subspace"] = False
    else:
        g_pinv = np.linalg.pinv(g)
        res = []
        for t in range(n):
            span = np.linalg.qr(g_pinv[order[: t + 1]].T)[0]
            h = st2.encoder[t]
            res.append(np.linalg.norm(h - span @ (span.T @ h)))
        out["stage2_subspace"] = max(res) <= tol

    st3 = stage3_ancestors(st2, stack, frame, opts.rank_tol)
    tc = transitive_closure(sem.dag)
    if order is None:
        out["stage3_closure"] = out["stage3_ancestor_mixing"] = out["stage3_integer"] = False
    else:
        out["stage3_closure"] = st3.graph.relabel(order) == tc
        mixing = row_sup_normalize(st3.encoder @ g)
        an = [sem.dag.ancestors(order[t]) | {order[t]} for t in range(n)]
        out["stage3_ancestor_mixing"] = all(
            mixing[t, k] <= tol for t in range(n) for k in range(n) if k not in an[t]
        )
        dw3 = d_b @ st3.mix
        out["stage3_integer"] = all(
            dw3[order[t], j] == 0 for t in range(n) for j in range(n)
            if order[t] not in (sem.dag.ancestors(order[j]) | {order[j]})
        )

    if kind == "hard":
        obs_m, env_m = oracle_moments(sem, specs, model)
        st4 = stage4_unmix(st3, obs_m, [env_m[b] for b in basis], opts)
        st4.graph = stage4_prune_graph(st4, obs_m, opts.ci_alpha, opts.indep_tol)
        report = evaluate(st4.graph, st4.encoder @ g, sem.dag, "hard")
        norm = report.mixing
        out["stage4_graph"] = report.shd_value == 0
        out["stage4_diagonal"] = mixing_ratio_hard(norm) == 0.0 and bool(
            np.all(np.sum(norm > 0.5, axis=1) == 1) and np.all(norm.max(axis=1) > 1 - tol)
        )
    out["ok"] = all(v for k, v in out.items() if k.startswith("stage"))
    return out
