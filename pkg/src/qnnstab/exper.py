"""Experiment harness: paired stability runs, gap sweeps and the inequality fuzz suite.

Every random quantity is drawn from a stream keyed by ``(seed, replicate,
purpose)``. The key never includes the swept knob, so grid points of a
sweep share data splits, initial parameters (as a common prefix), index
streams and label corruption draws.
"""
from __future__ import annotations

import functools
import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import spearmanr

from . import bounds
from .circuit import Circuit, assemble_unitary, build_hea, encode_batch, forward_batch
from .exceptions import ConfigurationError, ContractError
from .grad import finite_diff_grad, value_and_grad_batch
from .loss import LossSpec, loss_deriv, loss_value, squared_error
from .qcore import GateSpec, Observable, default_observable, run_gates_batch
from .data import corrupt_labels, load_dataset_dir, prepare_binary
from .train import (
    Dataset,
    SamplingScheme,
    StepSchedule,
    empirical_risk,
    gradient_variance,
    init_theta,
    make_rng,
    sample_indices,
    sgd_train,
    zero_one_error,
)

# stream purposes
SPLIT, INIT, INDEX, LABELS_TRAIN, LABELS_TEST = range(5)


def derive_seed(seed: int, *keys: int) -> int:
    """A 63-bit integer seed for the stream ``(seed, *keys)``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(2, dtype=np.uint32).astype(np.uint64) @ np.array([1 << 31, 1], dtype=np.uint64))


@dataclass(frozen=True)
class ExperimentConfig:
    """One training setup. Defaults are the desk-scale choices (4 qubits, 64/256 examples)."""

    n_qubits: int = 4
    layers: int = 2
    eta: float = 0.01
    schedule: str = "constant"
    T: int = 200
    p: float = 0.0
    m_train: int = 64
    m_test: int = 256
    class_a: int = 0
    class_b: int = 1
    label_noise: float = 0.0
    sampling: str = "uniform"
    seed: int = 0
    data_dir: Optional[str] = None

    def __post_init__(self):
        if self.n_qubits < 1 or self.layers < 1:
            raise ConfigurationError("n_qubits and layers must be >= 1")
        if self.T < 0:
            raise ConfigurationError("T must be non-negative")
        if not 0.0 <= self.p <= 1.0:
            raise ConfigurationError(f"noise level must lie in [0, 1], got {self.p}")
        if not 0.0 <= self.label_noise <= 1.0:
            raise ConfigurationError(f"label noise must lie in [0, 1], got {self.label_noise}")
        SamplingScheme(self.sampling)
        self.step_schedule  # validates schedule and eta

    @property
    def step_schedule(self) -> StepSchedule:
        return StepSchedule(self.schedule, float(self.eta))

    def circuit(self) -> Circuit:
        return build_hea(self.n_qubits, self.layers)

    def with_(self, **changes) -> "ExperimentConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        """Short hash of the canonical JSON form; identical configs hash identically."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    @classmethod
    def from_mapping(cls, mapping) -> "ExperimentConfig":
        """Build from string values (config files, CLI); unknown keys are rejected."""
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, value in mapping.items():
            if key not in known:
                raise ConfigurationError(f"unknown config key {key!r}")
            kwargs[key] = _coerce(key, value, cls.__dataclass_fields__[key].default)
        return cls(**kwargs)


def _coerce(key, value, default):
    if not isinstance(value, str):
        return value
    if key == "data_dir":
        return value or None
    try:
        if isinstance(default, bool):
            return value.lower() in ("1", "true", "yes")
        if isinstance(default, int):
            return int(value)
        if isinstance(default, float):
            return float(value)
    except ValueError as exc:
        raise ConfigurationError(f"bad value for {key}: {value!r}") from exc
    return value


@functools.lru_cache(maxsize=4)
def _raw(data_dir):
    return load_dataset_dir(data_dir)


def make_datasets(config: ExperimentConfig, replicate: int = 0) -> Tuple[Dataset, Dataset]:
    """Train/test sets for one replicate, label-corrupted on both sides when ``label_noise > 0``."""
    train, test = prepare_binary(
        _raw(config.data_dir),
        config.class_a,
        config.class_b,
        config.n_qubits,
        config.m_train,
        config.m_test,
        derive_seed(config.seed, replicate, SPLIT),
    )
    if config.label_noise > 0:
        train = corrupt_labels(train, config.label_noise, derive_seed(config.seed, replicate, LABELS_TRAIN))
        test = corrupt_labels(test, config.label_noise, derive_seed(config.seed, replicate, LABELS_TEST))
    return train, test


# --------------------------------------------------------------------------- gaps


@dataclass(frozen=True)
class ReplicateRow:
    replicate: int
    train_loss: float
    test_loss: float
    train_err01: float
    test_err01: float
    sigma_hat: float

    @property
    def gap_loss(self) -> float:
        return abs(self.train_loss - self.test_loss)

    @property
    def gap_err01(self) -> float:
        return abs(self.train_err01 - self.test_err01)


@dataclass(frozen=True)
class GapStats:
    rows: Tuple[ReplicateRow, ...]

    def _col(self, name):
        return np.array([getattr(r, name) for r in self.rows])

    @property
    def mean_gap_loss(self) -> float:
        return float(np.mean(self._col("gap_loss")))

    @property
    def std_gap_loss(self) -> float:
        return float(np.std(self._col("gap_loss")))

    @property
    def mean_gap_err01(self) -> float:
        return float(np.mean(self._col("gap_err01")))

    @property
    def std_gap_err01(self) -> float:
        return float(np.std(self._col("gap_err01")))

    @property
    def mean_sigma_hat(self) -> float:
        return float(np.mean(self._col("sigma_hat")))


def run_replicate(config: ExperimentConfig, replicate: int) -> ReplicateRow:
    """Train once and measure train/test loss, 0-1 error and gradient spread at the final parameters."""
    train, test = make_datasets(config, replicate)
    circuit = config.circuit()
    obs = default_observable(config.n_qubits)
    spec = squared_error(obs.spectral_norm)
    theta0 = init_theta(circuit.K, make_rng(config.seed, replicate, INIT))
    record = sgd_train(
        circuit,
        theta0,
        train,
        config.step_schedule,
        config.sampling,
        config.T,
        config.p,
        spec,
        seed=derive_seed(config.seed, replicate, INDEX),
        obs=obs,
        record_risk=False,
    )
    theta = record.theta
    return ReplicateRow(
        replicate=replicate,
        train_loss=empirical_risk(circuit, theta, train, obs, config.p, spec),
        test_loss=empirical_risk(circuit, theta, test, obs, config.p, spec),
        train_err01=zero_one_error(circuit, theta, train, obs, config.p),
        test_err01=zero_one_error(circuit, theta, test, obs, config.p),
        sigma_hat=math.sqrt(gradient_variance(circuit, theta, train, obs, config.p, spec)),
    )


def _run_task(task):
    config, replicate = task
    return run_replicate(config, replicate)


def _run_all(tasks, n_jobs):
    if n_jobs is None or n_jobs <= 1 or len(tasks) <= 1:
        return [_run_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(_run_task, tasks))


def gap_experiment(config: ExperimentConfig, replicates: int, n_jobs: int = 1) -> GapStats:
    if replicates < 1:
        raise ConfigurationError("replicates must be >= 1")
    rows = _run_all([(config, r) for r in range(replicates)], n_jobs)
    return GapStats(tuple(rows))


# --------------------------------------------------------------------------- sweeps

KNOBS = {"f1": "layers", "f2": "eta", "f3": "p", "f4": "label_noise"}
KNOB_COLUMNS = {"f1": "L", "f2": "eta", "f3": "p", "f4": "r"}
GAP_COLUMNS = ("replicate", "train_loss", "test_loss", "gap_loss", "gap_err01")

# desk-scale versions of the four figure protocols
FIGURE_DEFAULTS = {
    "f1": dict(grid=(2, 3, 4, 5), config=dict(eta=0.01, T=200)),
    "f2": dict(grid=(0.001, 0.005, 0.01, 0.05), config=dict(layers=3, T=200)),
    "f3": dict(grid=(0.001, 0.01, 0.05, 0.1), config=dict(layers=2, eta=0.01, T=200)),
    "f4": dict(grid=(0.1, 0.3, 0.5), config=dict(layers=8, eta=0.01, T=200)),
}
DEFAULT_REPLICATES = 10


def _figure(figure):
    key = str(figure).lower()
    if key not in KNOBS:
        raise ConfigurationError(f"unknown figure {figure!r}; expected one of f1, f2, f3, f4")
    return key


def _apply_knob(figure, config, value):
    knob = KNOBS[figure]
    if figure == "f1":
        if int(value) != value or value < 1:
            raise ConfigurationError(f"layer count must be a positive integer, got {value}")
        return config.with_(layers=int(value))
    if figure == "f2":
        if not value > 0:
            raise ConfigurationError(f"step size must be positive, got {value}")
        return config.with_(eta=float(value), schedule="constant")
    if not 0.0 <= value <= 1.0:
        raise ConfigurationError(f"{knob} must lie in [0, 1], got {value}")
    return config.with_(**{knob: float(value)})


@dataclass(frozen=True)
class ResultTable:
    columns: Tuple[str, ...]
    rows: Tuple[tuple, ...] = ()

    def records(self) -> List[dict]:
        return [dict(zip(self.columns, row)) for row in self.rows]


@dataclass(frozen=True)
class SweepResult:
    figure: str
    grid: Tuple[float, ...]
    stats: Tuple[GapStats, ...]

    @property
    def mean_gaps(self) -> np.ndarray:
        return np.array([s.mean_gap_loss for s in self.stats])

    @property
    def mean_sigmas(self) -> np.ndarray:
        return np.array([s.mean_sigma_hat for s in self.stats])

    def table(self) -> ResultTable:
        columns = (KNOB_COLUMNS[self.figure],) + GAP_COLUMNS
        if self.figure == "f4":
            columns += ("sigma_hat",)
        rows = []
        for value, stats in zip(self.grid, self.stats):
            for r in stats.rows:
                row = (value, r.replicate, r.train_loss, r.test_loss, r.gap_loss, r.gap_err01)
                rows.append(row + ((r.sigma_hat,) if self.figure == "f4" else ()))
        return ResultTable(columns, tuple(rows))


def sweep(figure, grid: Sequence[float] = None, base_config: ExperimentConfig = None, replicates: int = None, n_jobs: int = 1) -> SweepResult:
    """One :class:`GapStats` per grid value of the figure's knob.

    ``f1`` sweeps layers, ``f2`` the constant step size, ``f3`` the
    depolarizing level and ``f4`` the label-noise rate. Missing arguments
    fall back to the desk-scale defaults in :data:`FIGURE_DEFAULTS`.
    """
    figure = _figure(figure)
    defaults = FIGURE_DEFAULTS[figure]
    grid = tuple(defaults["grid"] if grid is None else grid)
    if not grid:
        raise ConfigurationError("grid must not be empty")
    base_config = base_config or ExperimentConfig(**defaults["config"])
    replicates = DEFAULT_REPLICATES if replicates is None else replicates
    if replicates < 1:
        raise ConfigurationError("replicates must be >= 1")
    configs = [_apply_knob(figure, base_config, v) for v in grid]
    tasks = [(c, r) for c in configs for r in range(replicates)]
    results = _run_all(tasks, n_jobs)
    keyed: Dict[Tuple[int, int], ReplicateRow] = {(i // replicates, row.replicate): row for i, row in enumerate(results)}
    stats = tuple(GapStats(tuple(keyed[(g, r)] for r in range(replicates))) for g in range(len(grid)))
    return SweepResult(figure, grid, stats)


@dataclass(frozen=True)
class Trend:
    spearman: float
    inversions: int


def trend(values, knob_values) -> Trend:
    """Spearman correlation of ``values`` against the knob and the count of adjacent decreases."""
    values = np.asarray(values, dtype=float)
    rho = spearmanr(np.asarray(knob_values, dtype=float), values).statistic if len(values) > 1 else float("nan")
    return Trend(float(rho), int(np.sum(np.diff(values) < 0)))


# --------------------------------------------------------------------------- paired stability


@dataclass(frozen=True)
class StabilityResult:
    delta_trace: np.ndarray  # seed-averaged ||theta_t - theta'_t||, length T + 1
    delta_se: np.ndarray
    loss_gap_sup: float
    thm1_bound: float
    per_step_recursion_ok: np.ndarray
    seeds: Tuple[int, ...]

    @property
    def bound_ok(self) -> bool:
        return self.loss_gap_sup <= self.thm1_bound

    @property
    def recursion_ok(self) -> bool:
        return bool(np.all(self.per_step_recursion_ok))


def bound_query(config: ExperimentConfig, circuit: Circuit, obs: Observable, spec: LossSpec, m: int, p: float = None) -> bounds.BoundQuery:
    return bounds.BoundQuery(
        alpha=spec.alpha,
        nu=spec.nu,
        big_m=spec.bound,
        K=circuit.K,
        Kg=circuit.K_g,
        o_norm=obs.spectral_norm,
        m=m,
        T=config.T,
        schedule=config.step_schedule,
        p=config.p if p is None else p,
    )


def paired_stability(
    data: Dataset,
    replace_index: int,
    replacement,
    config: ExperimentConfig,
    seeds: Sequence[int],
    eval_points: Dataset = None,
) -> StabilityResult:
    """Train on ``data`` and on ``data`` with one example swapped, sharing start point and index stream.

    ``replacement`` is an ``(x, y)`` pair. The loss gap is the largest
    absolute seed-averaged loss difference over ``eval_points`` (defaults
    to the training set plus the replacement), which under-approximates
    the supremum over all examples.
    """
    if not 0 <= replace_index < data.m:
        raise ContractError(f"replace_index {replace_index} out of range for m={data.m}")
    if len(seeds) < 1:
        raise ConfigurationError("need at least one seed")
    x_new, y_new = replacement
    other = data.replace(replace_index, x_new, y_new)
    if eval_points is None:
        eval_points = Dataset.concat(data, Dataset(np.atleast_2d(x_new), [y_new]))
    circuit = config.circuit()
    obs = default_observable(config.n_qubits)
    spec = squared_error(obs.spectral_norm)
    deltas, loss_diffs = [], []
    for s in seeds:
        theta0 = init_theta(circuit.K, make_rng(s, INIT))
        idx = sample_indices(data.m, config.T, config.sampling, make_rng(s, INDEX))
        run = [
            sgd_train(circuit, theta0, d, config.step_schedule, config.sampling, config.T, config.p, spec, s, obs=obs, indices=idx, record_risk=False)
            for d in (data, other)
        ]
        deltas.append(np.linalg.norm(run[0].thetas - run[1].thetas, axis=1))
        f = forward_batch(circuit, np.stack([run[0].theta, run[1].theta]).repeat(eval_points.m, axis=0), np.tile(eval_points.X, (2, 1)), obs, config.p)
        f = f.reshape(2, eval_points.m)
        loss_diffs.append(loss_value(f[0], eval_points.y) - loss_value(f[1], eval_points.y))
    deltas = np.array(deltas)
    n = len(seeds)
    mean_delta = deltas.mean(axis=0)
    se_delta = deltas.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros_like(mean_delta)

    q = bound_query(config, circuit, obs, spec, data.m)
    kap = bounds.kappa(q)
    etas = q.step_sizes
    jump = 2 * bounds.SQRT2 * etas * spec.alpha * math.sqrt(circuit.K) * obs.spectral_norm / data.m
    # residual of the recursion per seed; its mean must not exceed the jump term
    resid = deltas[:, 1:] - (1 + etas * kap) * deltas[:, :-1]
    resid_se = resid.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros(config.T)
    ok = resid.mean(axis=0) <= jump + 3 * resid_se + 1e-15

    return StabilityResult(
        delta_trace=mean_delta,
        delta_se=se_delta,
        loss_gap_sup=float(np.max(np.abs(np.mean(loss_diffs, axis=0)))),
        thm1_bound=bounds.stability_general(q),
        per_step_recursion_ok=ok,
        seeds=tuple(int(s) for s in seeds),
    )


def stability_experiment(config: ExperimentConfig, seeds: Sequence[int], replace_index: int = 0, grid_size: int = 256) -> StabilityResult:
    """Paired stability on real data: ``m_train`` examples, one held-out replacement and a held-out evaluation grid."""
    train, pool = prepare_binary(
        _raw(config.data_dir), config.class_a, config.class_b, config.n_qubits, config.m_train, grid_size + 1, derive_seed(config.seed, 0, SPLIT)
    )
    grid = pool.subset(np.arange(1, pool.m))
    return paired_stability(train, replace_index, pool.example(0), config, seeds, eval_points=grid)


# --------------------------------------------------------------------------- fuzz suite


@dataclass
class PropertyResult:
    name: str
    description: str
    cases: int = 0
    violations: int = 0
    worst_slack: float = math.inf

    @property
    def passed(self) -> bool:
        return self.cases > 0 and self.violations == 0

    def add(self, lhs: float, rhs: float, tol: float = 1e-10):
        slack = rhs - lhs
        self.cases += 1
        self.worst_slack = min(self.worst_slack, slack)
        if slack < -tol:
            self.violations += 1


@dataclass
class VerifyReport:
    seed: int
    case_count: int
    kappa_scale: float
    results: List[PropertyResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def __getitem__(self, name) -> PropertyResult:
        for r in self.results:
            if r.name == name:
                return r
        raise KeyError(name)

    def table(self) -> ResultTable:
        rows = tuple((r.name, r.cases, r.violations, r.worst_slack, "pass" if r.passed else "FAIL") for r in self.results)
        return ResultTable(("property", "cases", "violations", "worst_slack", "status"), rows)


@dataclass(frozen=True)
class FuzzCase:
    circuit: Circuit
    obs: Observable
    x: np.ndarray
    y: float
    y2: float
    x2: np.ndarray
    theta1: np.ndarray
    theta2: np.ndarray
    p: float


_ROT = ("RX", "RY", "RZ")
_NOISE_LEVELS = (0.01, 0.1, 0.3)


def _random_circuit(rng, n, max_gates=12):
    gates, k = [], 0
    for _ in range(int(rng.integers(1, max_gates + 1))):
        roll = rng.random()
        if n > 1 and roll < 0.25:
            c, t = rng.choice(n, size=2, replace=False)
            gates.append(GateSpec("CNOT", int(t), control=int(c)))
        elif roll < 0.35:
            gates.append(GateSpec(str(rng.choice(_ROT)), int(rng.integers(n)), fixed_angle=float(rng.uniform(-np.pi, np.pi))))
        else:
            gates.append(GateSpec(str(rng.choice(_ROT)), int(rng.integers(n)), param_index=k))
            k += 1
    if k == 0:
        gates.append(GateSpec("RY", 0, param_index=0))
    return Circuit(n, gates)


def _random_observable(rng, n):
    letters = ["I"] * n
    while all(c == "I" for c in letters):
        letters = [str(rng.choice(list("IXYZ"))) for _ in range(n)]
    return Observable([(float(rng.choice([-1.0, 1.0])), "".join(letters))])


def fuzz_cases(seed: int, count: int) -> List[FuzzCase]:
    """Random circuits (up to 4 qubits, 12 gates), inputs, labels and parameter pairs.

    A fifth of the cases are the single-rotation circuit, where the loss
    curvature gets closest to the smoothness constant; half of the pairs
    are small perturbations, which probe local slopes.
    """
    rng = make_rng(seed, 0xF022)
    cases = []
    for _ in range(count):
        if rng.random() < 0.2:
            n = 1
            circuit = Circuit(1, [GateSpec("RY", 0, param_index=0)])
            obs = Observable.pauli("Z", 0, 1)
        else:
            n = int(rng.integers(1, 5))
            circuit = _random_circuit(rng, n)
            obs = _random_observable(rng, n)
        theta1 = rng.uniform(-np.pi, np.pi, circuit.K)
        scale = 1e-2 if rng.random() < 0.5 else 1.0
        theta2 = theta1 + scale * rng.standard_normal(circuit.K)
        cases.append(
            FuzzCase(
                circuit,
                obs,
                rng.uniform(0, np.pi, n),
                float(rng.choice([-1.0, 1.0])),
                float(rng.choice([-1.0, 1.0])),
                rng.uniform(0, np.pi, n),
                theta1,
                theta2,
                float(rng.choice(_NOISE_LEVELS)),
            )
        )
    return cases


def _loss_grads(case, thetas, xs, ys, p, spec):
    f, g = value_and_grad_batch(case.circuit, thetas, xs, case.obs, p)
    return f, g, loss_deriv(f, np.asarray(ys, float), spec)[:, None] * g


def verify_suite(seed: int = 0, case_count: int = 1000, kappa_scale: float = 1.0) -> VerifyReport:
    """Check every inequality of the analysis on ``case_count`` random cases.

    ``kappa_scale`` multiplies the smoothness constant used by the
    same-sample gradient check; values below one serve as a negative control.
    """
    if case_count < 1:
        raise ConfigurationError("case_count must be >= 1")
    spec = squared_error(1.0)
    alpha = spec.alpha
    props = {
        name: PropertyResult(name, text)
        for name, text in (
            ("channel_composition", "per-gate depolarizing equals one channel with p~ = 1-(1-p)^Kg (entrywise, 1e-10)"),
            ("unitary_distance_sines", "||U(a) - U(b)|| <= sum_k |2 sin(d_k / 4)|"),
            ("unitary_distance_norm", "sum_k |2 sin(d_k / 4)| <= sqrt(K)/2 ||a - b||"),
            ("output_lipschitz", "|f(a) - f(b)| <= sqrt(K) ||O|| ||a - b||"),
            ("output_lipschitz_noisy", "|f_p(a) - f_p(b)| <= q sqrt(K) ||O|| ||a - b||"),
            ("noisy_output_closed_form", "f_p = q f + (1 - q) Tr(O)/2^n (1e-10)"),
            ("shift_rule_exact", "|shift gradient - finite difference| <= 1e-6"),
            ("grad_component", "|df/dtheta_j| <= q sqrt(2) ||O||"),
            ("grad_norm", "||grad f|| <= q sqrt(2K) ||O||"),
            ("loss_grad_same_sample", "||grad l(a; z) - grad l(b; z)|| <= kappa ||a - b||"),
            ("loss_grad_same_sample_noisy", "||grad l_p(a; z) - grad l_p(b; z)|| <= q kappa ||a - b||"),
            ("loss_grad_diff_sample", "||grad l(a; z) - grad l(b; z')|| <= 2 sqrt(2) alpha sqrt(K) ||O||"),
            ("loss_grad_diff_sample_noisy", "||grad l_p(a; z) - grad l_p(b; z')|| <= 2 sqrt(2) q alpha sqrt(K) ||O||"),
            ("descent", "l(a) - l(b) <= <grad l(b), a - b> + kappa/2 ||a - b||^2"),
            ("variance_cap", "sigma^2 <= G^2 = 2 alpha^2 K ||O||^2"),
        )
    }

    def add(name, lhs, rhs, tol=1e-10):
        props[name].add(float(lhs), float(rhs), tol)

    for i, case in enumerate(fuzz_cases(seed, case_count)):
        c, obs = case.circuit, case.obs
        K, n, on = c.K, c.n_qubits, obs.spectral_norm
        q = (1.0 - case.p) ** c.K_g
        kap = alpha * K * on + bounds.SQRT2 * spec.nu * K * on**2
        d = case.theta1 - case.theta2
        dn = float(np.linalg.norm(d))
        thetas = np.stack([case.theta1, case.theta2])

        # channel composition on the full density matrix
        psi = encode_batch(case.x[None], n)
        rho = np.einsum("bi,bj->bij", psi, psi.conj())
        noisy = run_gates_batch(rho.copy(), c.gates, case.theta1[None], n, p=case.p)[0]
        clean = run_gates_batch(psi.copy(), c.gates, case.theta1[None], n)[0]
        pt = 1.0 - q
        closed = (1 - pt) * np.outer(clean, clean.conj()) + pt * np.eye(2**n) / 2**n
        add("channel_composition", np.max(np.abs(noisy - closed)), 1e-10, tol=0.0)

        dist = np.linalg.norm(assemble_unitary(c, case.theta1) - assemble_unitary(c, case.theta2), 2)
        sines = float(np.sum(np.abs(2 * np.sin(d / 4))))
        add("unitary_distance_sines", dist, sines, tol=1e-9)
        add("unitary_distance_norm", sines, math.sqrt(K) / 2 * dn)

        f_clean, g_clean, lg_clean = _loss_grads(case, thetas, case.x[None], [case.y, case.y], 0.0, spec)
        f_noisy, g_noisy, lg_noisy = _loss_grads(case, thetas, case.x[None], [case.y, case.y], case.p, spec)
        add("output_lipschitz", abs(f_clean[0] - f_clean[1]), math.sqrt(K) * on * dn)
        add("output_lipschitz_noisy", abs(f_noisy[0] - f_noisy[1]), q * math.sqrt(K) * on * dn)
        tr = obs.trace / 2**n
        add("noisy_output_closed_form", np.max(np.abs(f_noisy - (q * f_clean + (1 - q) * tr))), 1e-10, tol=0.0)

        # odd cases check the noisy forward map
        fd = finite_diff_grad(c, case.theta1, case.x, obs, case.p if i % 2 else 0.0)
        ps = g_noisy[0] if i % 2 else g_clean[0]
        add("shift_rule_exact", np.max(np.abs(ps - fd)), 1e-6, tol=0.0)

        for g, scale in ((g_clean, 1.0), (g_noisy, q)):
            add("grad_component", np.max(np.abs(g)), scale * bounds.SQRT2 * on)
            add("grad_norm", np.max(np.linalg.norm(g, axis=1)), scale * math.sqrt(2 * K) * on)

        if dn > 0:
            add("loss_grad_same_sample", np.linalg.norm(lg_clean[0] - lg_clean[1]), kappa_scale * kap * dn)
            add("loss_grad_same_sample_noisy", np.linalg.norm(lg_noisy[0] - lg_noisy[1]), kappa_scale * q * kap * dn)

        xs = np.stack([case.x, case.x2])
        _, _, lg2 = _loss_grads(case, thetas, xs, [case.y, case.y2], 0.0, spec)
        add("loss_grad_diff_sample", np.linalg.norm(lg2[0] - lg2[1]), 2 * bounds.SQRT2 * alpha * math.sqrt(K) * on)
        _, _, lg2n = _loss_grads(case, thetas, xs, [case.y, case.y2], case.p, spec)
        add("loss_grad_diff_sample_noisy", np.linalg.norm(lg2n[0] - lg2n[1]), 2 * bounds.SQRT2 * q * alpha * math.sqrt(K) * on)

        l1, l2 = loss_value(f_clean, case.y)
        add("descent", l1 - l2, float(lg_clean[1] @ d) + kap / 2 * dn**2)

        spread = lg2 - lg2.mean(axis=0)
        add("variance_cap", np.mean(np.sum(spread**2, axis=1)), 2 * alpha**2 * K * on**2)

    return VerifyReport(seed, case_count, kappa_scale, list(props.values()))
