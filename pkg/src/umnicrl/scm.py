"""Linear-Gaussian latent SEMs, intervention environments and the linear mixing map.

Conventions: ``weights[i, j]`` is the coefficient of ``Z_j`` in the equation of
``Z_i``, so ``Z = A Z + N`` with ``A = weights``. Nodes are 0-indexed.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Sequence

import numpy as np

from .graph import Dag

Kind = Literal["observational", "soft", "hard"]

#: smallest-to-largest singular value ratio accepted for generated transforms
TRANSFORM_MIN_SV_RATIO = 1e-6


class GenerationError(RuntimeError):
    """A rejection sampler ran out of retries."""


@dataclass(frozen=True, eq=False)
class LinearGaussianSem:
    dag: Dag
    weights: np.ndarray
    noise_vars: np.ndarray

    def __post_init__(self) -> None:
        w = np.array(self.weights, dtype=float)
        v = np.array(self.noise_vars, dtype=float)
        n = self.dag.n
        if w.shape != (n, n) or v.shape != (n,):
            raise ValueError(f"expected weights {(n, n)} and variances {(n,)}")
        support = self.dag.adjacency.T  # support[i, j] iff j -> i
        if np.any(w[~support] != 0):
            raise ValueError("nonzero weight on a pair that is not an edge")
        if np.any(v <= 0):
            raise ValueError("noise variances must be positive")
        w.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "noise_vars", v)

    @property
    def n(self) -> int:
        return self.dag.n


@dataclass(frozen=True, eq=False)
class EnvironmentSpec:
    """Targets of one environment and the replacement mechanisms of each target.

    ``weights[i]`` is the new parent-weight row of target ``i`` (length n),
    ``noise_vars[i]`` its new noise variance and ``shifts[i]`` an optional
    additive noise mean.
    """

    targets: frozenset[int] = frozenset()
    kind: Kind = "observational"
    weights: dict[int, np.ndarray] = field(default_factory=dict)
    noise_vars: dict[int, float] = field(default_factory=dict)
    shifts: dict[int, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        targets = frozenset(int(i) for i in self.targets)
        object.__setattr__(self, "targets", targets)
        if self.kind not in ("observational", "soft", "hard"):
            raise ValueError(f"unknown intervention kind {self.kind!r}")
        if self.kind == "observational" and targets:
            raise ValueError("observational environment cannot have targets")
        if set(self.weights) != set(targets) or set(self.noise_vars) != set(targets):
            raise ValueError("every target needs a weight row and a noise variance")
        if not set(self.shifts) <= targets:
            raise ValueError("shift given for a non-target node")
        rows = {int(i): np.asarray(r, dtype=float) for i, r in self.weights.items()}
        if self.kind == "hard" and any(np.any(r != 0) for r in rows.values()):
            raise ValueError("hard intervention must zero every target weight row")
        object.__setattr__(self, "weights", rows)

    @classmethod
    def observational(cls) -> EnvironmentSpec:
        return cls()

    def validate(self, sem: LinearGaussianSem) -> None:
        """Check the targets' mechanisms fit ``sem`` and differ from the observational ones."""
        support = sem.dag.adjacency.T
        for i in self.targets:
            if not 0 <= i < sem.n:
                raise ValueError(f"target {i} out of range")
            row = self.weights[i]
            if row.shape != (sem.n,) or np.any(row[~support[i]] != 0):
                raise ValueError(f"target {i}: weight row leaves the parent set")
            if self.noise_vars[i] <= 0:
                raise ValueError(f"target {i}: noise variance must be positive")
            same = (
                np.array_equal(row, sem.weights[i])
                and self.noise_vars[i] == sem.noise_vars[i]
                and self.shifts.get(i, 0.0) == 0.0
            )
            if same:
                raise ValueError(f"target {i}: mechanism identical to the observational one")


@dataclass(frozen=True, eq=False)
class ObservationModel:
    transform: np.ndarray

    def __post_init__(self) -> None:
        g = np.array(self.transform, dtype=float)
        if g.ndim != 2 or g.shape[0] < g.shape[1]:
            raise ValueError(f"transform must be d x n with d >= n, got {g.shape}")
        s = np.linalg.svd(g, compute_uv=False)
        if s[-1] < TRANSFORM_MIN_SV_RATIO * s[0]:
            raise ValueError("transform is numerically rank deficient")
        g.setflags(write=False)
        object.__setattr__(self, "transform", g)

    @property
    def d(self) -> int:
        return self.transform.shape[0]

    @property
    def n(self) -> int:
        return self.transform.shape[1]

    @property
    def pinv(self) -> np.ndarray:
        return np.linalg.pinv(self.transform)


# ---------------------------------------------------------------------------
# environments


def environment_parameters(
    sem: LinearGaussianSem, spec: EnvironmentSpec
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Weight matrix, noise variances and noise means in force under ``spec``."""
    a = sem.weights.copy()
    v = sem.noise_vars.copy()
    mu = np.zeros(sem.n)
    for i in spec.targets:
        a[i] = spec.weights[i]
        v[i] = spec.noise_vars[i]
        mu[i] = spec.shifts.get(i, 0.0)
    return a, v, mu


def intervene(
    sem: LinearGaussianSem,
    targets: Sequence[int],
    kind: Literal["soft", "hard"],
    weight_factor: float = 0.5,
    var_factor: float = 0.25,
) -> EnvironmentSpec:
    """Default harness mechanisms: soft scales weights by ``weight_factor``, hard
    zeroes them; both scale the noise variance by ``var_factor``."""
    targets = sorted(int(i) for i in targets)
    scale = weight_factor if kind == "soft" else 0.0
    return EnvironmentSpec(
        targets=frozenset(targets),
        kind=kind,
        weights={i: sem.weights[i] * scale for i in targets},
        noise_vars={i: float(sem.noise_vars[i] * var_factor) for i in targets},
    )


def intervention_signature(specs: Sequence[EnvironmentSpec], n: int) -> np.ndarray:
    """Binary ``n x M`` matrix whose column ``m`` marks the targets of environment ``m``."""
    d_int = np.zeros((n, len(specs)), dtype=int)
    for m, spec in enumerate(specs):
        if spec.kind == "observational":
            raise ValueError("signature excludes the observational environment")
        for i in spec.targets:
            d_int[i, m] = 1
    return d_int


def check_assumption1(d_int: np.ndarray) -> bool:
    d_int = np.atleast_2d(np.asarray(d_int, dtype=float))
    if d_int.size == 0:
        return False
    return int(np.linalg.matrix_rank(d_int)) == d_int.shape[0]


def random_sem(
    dag: Dag,
    seed: int | np.random.Generator | None = None,
    weight_range: tuple[float, float] = (0.5, 1.5),
    var_range: tuple[float, float] = (0.5, 1.5),
) -> LinearGaussianSem:
    """Edge weights from Unif(+-weight_range), variances from Unif(var_range)."""
    rng = np.random.default_rng(seed)
    n = dag.n
    mag = rng.uniform(*weight_range, size=(n, n))
    sign = rng.choice([-1.0, 1.0], size=(n, n))
    w = np.where(dag.adjacency.T, mag * sign, 0.0)
    v = rng.uniform(*var_range, size=n)
    return LinearGaussianSem(dag, w, v)


def random_signature(
    n: int, seed: int | np.random.Generator | None = None, max_tries: int = 10_000
) -> np.ndarray:
    """Uniform draw from the full-rank matrices in {0,1}^{n x n}."""
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        d = rng.integers(0, 2, size=(n, n))
        if check_assumption1(d):
            return d
    raise GenerationError(f"no full-rank binary {n}x{n} matrix in {max_tries} draws")


def random_interventions(
    n: int,
    kind: Literal["soft", "hard"],
    sem: LinearGaussianSem,
    seed: int | np.random.Generator | None = None,
    max_tries: int = 10_000,
) -> list[EnvironmentSpec]:
    if n < 1:
        raise ValueError("n must be positive")
    if sem.n != n:
        raise ValueError("sem node count does not match n")
    d = random_signature(n, seed, max_tries)
    return [intervene(sem, np.flatnonzero(d[:, m]), kind) for m in range(n)]


# ---------------------------------------------------------------------------
# moments and sampling


def analytic_latent_mean(sem: LinearGaussianSem, spec: EnvironmentSpec) -> np.ndarray:
    a, _, mu = environment_parameters(sem, spec)
    return np.linalg.solve(np.eye(sem.n) - a, mu)


def analytic_latent_covariance(sem: LinearGaussianSem, spec: EnvironmentSpec) -> np.ndarray:
    a, v, _ = environment_parameters(sem, spec)
    if np.any(v <= 0):
        raise ValueError("singular noise covariance")
    b_inv = np.linalg.inv(np.eye(sem.n) - a)
    return b_inv @ np.diag(v) @ b_inv.T


def analytic_latent_precision(sem: LinearGaussianSem, spec: EnvironmentSpec) -> np.ndarray:
    a, v, _ = environment_parameters(sem, spec)
    if np.any(v <= 0):
        raise ValueError("singular noise covariance")
    b = np.eye(sem.n) - a
    return b.T @ np.diag(1.0 / v) @ b


def sample_latent(
    sem: LinearGaussianSem,
    spec: EnvironmentSpec,
    n_samples: int,
    seed: int | np.random.Generator | None = None,
) -> np.ndarray:
    """``n_samples x n`` i.i.d. draws generated node by node in topological order."""
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    rng = np.random.default_rng(seed)
    a, v, mu = environment_parameters(sem, spec)
    noise = rng.standard_normal((n_samples, sem.n)) * np.sqrt(v) + mu
    z = np.zeros_like(noise)
    for i in sem.dag.topological_order():
        z[:, i] = z @ a[i] + noise[:, i]
    return z


def random_transform(
    d: int, n: int, seed: int | np.random.Generator | None = None, max_tries: int = 1000
) -> ObservationModel:
    if d < n or n < 1:
        raise ValueError(f"need d >= n >= 1, got d={d}, n={n}")
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        g = rng.standard_normal((d, n))
        s = np.linalg.svd(g, compute_uv=False)
        if s[-1] >= TRANSFORM_MIN_SV_RATIO * s[0]:
            return ObservationModel(g)
    raise GenerationError(f"no well-conditioned {d}x{n} transform in {max_tries} draws")


def mix(model: ObservationModel, z: np.ndarray) -> np.ndarray:
    z = np.atleast_2d(np.asarray(z, dtype=float))
    if z.shape[1] != model.n:
        raise ValueError(f"latent samples have {z.shape[1]} columns, transform expects {model.n}")
    return z @ model.transform.T


# ---------------------------------------------------------------------------
# serialization


def _spec_to_dict(spec: EnvironmentSpec) -> dict:
    return {
        "kind": spec.kind,
        "targets": sorted(spec.targets),
        "weights": {str(i): spec.weights[i].tolist() for i in sorted(spec.targets)},
        "noise_vars": {str(i): spec.noise_vars[i] for i in sorted(spec.targets)},
        "shifts": {str(i): s for i, s in sorted(spec.shifts.items())},
    }


def _spec_from_dict(d: dict) -> EnvironmentSpec:
    return EnvironmentSpec(
        targets=frozenset(d["targets"]),
        kind=d["kind"],
        weights={int(i): np.asarray(r) for i, r in d["weights"].items()},
        noise_vars={int(i): float(v) for i, v in d["noise_vars"].items()},
        shifts={int(i): float(v) for i, v in d.get("shifts", {}).items()},
    )


def model_to_dict(
    sem: LinearGaussianSem,
    specs: Sequence[EnvironmentSpec] = (),
    model: ObservationModel | None = None,
) -> dict:
    out = {
        "format": "umnicrl-model/1",
        "n": sem.n,
        "edges": sorted([list(e) for e in sem.dag.edges]),
        "weights": sem.weights.tolist(),
        "noise_vars": sem.noise_vars.tolist(),
        "environments": [_spec_to_dict(s) for s in specs],
    }
    if model is not None:
        out["transform"] = model.transform.tolist()
    return out


def model_from_dict(
    data: dict,
) -> tuple[LinearGaussianSem, list[EnvironmentSpec], ObservationModel | None]:
    dag = Dag(int(data["n"]), frozenset(tuple(e) for e in data["edges"]))
    sem = LinearGaussianSem(dag, np.asarray(data["weights"]), np.asarray(data["noise_vars"]))
    specs = [_spec_from_dict(s) for s in data.get("environments", [])]
    g = data.get("transform")
    return sem, specs, (ObservationModel(np.asarray(g)) if g is not None else None)


def save_model(path: str | Path, sem, specs=(), model=None) -> None:
    Path(path).write_text(json.dumps(model_to_dict(sem, specs, model), indent=2))


def load_model(path: str | Path):
    return model_from_dict(json.loads(Path(path).read_text()))


def save_samples_csv(path: str | Path, samples: np.ndarray, prefix: str = "x") -> None:
    samples = np.atleast_2d(samples)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"{prefix}{k}" for k in range(samples.shape[1])])
        writer.writerows(samples.tolist())
