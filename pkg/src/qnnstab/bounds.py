"""Closed-form uniform-stability and generalization bounds for SGD-trained QNNs.

Every calculator takes a :class:`BoundQuery`. Products of growth factors
``(1 + eta kappa)`` are accumulated as sums of ``log1p`` terms; a value that
leaves the float range comes back as ``math.inf`` together with a
:class:`~qnnstab.exceptions.BoundOverflowWarning`.

The high-probability generalization bounds are known only up to absolute
constants. :func:`gen_bound` and :func:`noisy_gen_bound` set those constants
to one, so their output is an indicative scale. The stability values
``epsilon`` are the certified part and are returned by their own functions.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from .exceptions import BoundOverflowWarning, ConfigurationError, ContractError
from .train import StepSchedule

SQRT2 = math.sqrt(2.0)
_LOG_MAX = math.log(np.finfo(float).max)


@dataclass(frozen=True)
class BoundQuery:
    """Constants shared by all calculators.

    ``alpha``/``nu``/``big_m`` come from the loss, ``K``/``Kg``/``o_norm``
    from the circuit and observable, ``m``/``T``/``schedule`` from training.
    """

    alpha: float
    nu: float
    big_m: float
    K: int
    Kg: int
    o_norm: float
    m: int
    T: int
    schedule: StepSchedule
    p: float = 0.0
    delta: float = 0.05
    sigma: Optional[float] = None
    grad_norm_trace: Optional[Sequence[float]] = None

    def __post_init__(self):
        if self.alpha <= 0 or self.nu < 0 or self.big_m <= 0 or self.o_norm < 0:
            raise ConfigurationError("alpha and M must be positive; nu and o_norm non-negative")
        if self.K < 0 or self.Kg < self.K:
            raise ConfigurationError("need 0 <= K <= Kg")
        if self.m < 1 or self.T < 0:
            raise ConfigurationError("need m >= 1 and T >= 0")
        if not 0.0 <= self.p <= 1.0:
            raise ConfigurationError("noise level must lie in [0, 1]")
        if not 0.0 < self.delta < 1.0:
            raise ConfigurationError("delta must lie in (0, 1)")
        if self.sigma is not None and self.sigma < 0:
            raise ConfigurationError("sigma must be non-negative")

    def with_(self, **changes) -> "BoundQuery":
        return replace(self, **changes)

    @property
    def step_sizes(self) -> np.ndarray:
        return self.schedule.rates(self.T)


def _finite(log_value: float) -> float:
    if log_value > _LOG_MAX:
        warnings.warn("bound exceeds the float range; returning inf", BoundOverflowWarning, stacklevel=3)
        return math.inf
    return math.exp(log_value)


def _log(x):
    return math.log(x) if x > 0 else -math.inf


def kappa(q: BoundQuery) -> float:
    """Smoothness constant of the loss in the parameters: ``alpha K ||O|| + sqrt(2) nu K ||O||^2``."""
    return q.alpha * q.K * q.o_norm + SQRT2 * q.nu * q.K * q.o_norm**2


def _noise_factor(q):
    return (1.0 - q.p) ** q.Kg


def _recursion_sum(etas, kap, per_step):
    """``sum_t prod_{j>t} (1 + eta_j kap) * per_step[t]`` evaluated in log space."""
    T = len(etas)
    if T == 0:
        return 0.0
    per_step = np.asarray(per_step, dtype=float)
    log_growth = np.log1p(np.asarray(etas) * kap)
    # suffix[t] = sum_{j=t+1}^{T-1} log(1 + eta_j kap)
    suffix = np.concatenate([np.cumsum(log_growth[::-1])[::-1][1:], [0.0]])
    with np.errstate(divide="ignore"):
        logs = suffix + np.log(per_step)
    if np.all(np.isneginf(logs)):
        return 0.0
    return _finite(float(logsumexp(logs)))


def stability_general(q: BoundQuery) -> float:
    """Uniform stability of SGD for an arbitrary step schedule."""
    k = kappa(q)
    etas = q.step_sizes
    return _recursion_sum(etas, k, 2 * SQRT2 * etas * q.alpha**2 * q.K * q.o_norm**2 / q.m)


def stability_geometric(q: BoundQuery) -> float:
    """Exact value of :func:`stability_general` under a constant step.

    ``(2 sqrt(2) alpha^2 K ||O||^2 / (kappa m)) ((1 + eta kappa)^T - 1)``.
    """
    _require(q, "constant")
    k = kappa(q)
    scale = 2 * SQRT2 * q.alpha**2 * q.K * q.o_norm**2
    if scale == 0 or q.T == 0:
        return 0.0
    log_growth = q.T * math.log1p(q.schedule.value * k)
    # (e^a - 1) = e^a * (-expm1(-a))
    return _finite(math.log(scale / (k * q.m)) + log_growth + math.log(-math.expm1(-log_growth)))


def _require(q, kind):
    if q.schedule.kind != kind:
        raise ConfigurationError(f"this bound needs a {kind} step schedule, got {q.schedule.kind}")


def _const_eps(q, factor):
    k = kappa(q)
    scale = 2 * SQRT2 * q.alpha**2 * q.K * q.o_norm**2
    if scale == 0:
        return 0.0
    return _finite(math.log(scale / (k * q.m)) + q.T * math.log1p(factor * q.schedule.value * k))


def stability_const(q: BoundQuery) -> float:
    """Constant step ``eta``: ``(2 sqrt(2) alpha^2 K ||O||^2 / (kappa m)) (1 + eta kappa)^T``."""
    _require(q, "constant")
    return _const_eps(q, 1.0)


def _decay_eps(q, factor):
    # factor scales c: the noiseless closed form with c -> c (1-p)^Kg
    k = kappa(q)
    scale = 2 * SQRT2 * q.alpha**2 * q.K * q.o_norm**2
    if scale == 0:
        return 0.0
    a = q.schedule.value * factor * k
    if a == 0.0:
        # limit a -> 0 of (1 + 1/a) (scale c factor)^(1/(a+1)) / m
        return scale / (k * q.m)
    expo = a / (a + 1.0)
    log_eps = (
        math.log1p(1.0 / a)
        - math.log(q.m)
        + expo * math.log(q.big_m)
        + math.log(scale * q.schedule.value * factor) / (a + 1.0)
        + expo * _log(q.T)
    )
    return _finite(log_eps)


def stability_decay(q: BoundQuery) -> float:
    """Steps ``eta_t <= c / (t + 1)``.

    ``((1 + 1/(c kappa)) / m) M^(c kappa/(c kappa+1)) (2 sqrt(2) c alpha^2 K ||O||^2)^(1/(c kappa+1)) T^(c kappa/(c kappa+1))``.
    """
    _require(q, "inverse_decay")
    return _decay_eps(q, 1.0)


def _mode(q, mode):
    if mode is None:
        return "const" if q.schedule.kind == "constant" else "decay"
    if mode not in ("const", "decay"):
        raise ConfigurationError(f"mode must be 'const' or 'decay', got {mode!r}")
    return mode


def _assemble(eps, q):
    log_inv_delta = math.log(1.0 / q.delta)
    return eps * math.log(q.m) * log_inv_delta + q.big_m * math.sqrt(log_inv_delta / q.m)


def gen_bound(q: BoundQuery, mode: str = None) -> float:
    """High-probability generalization bound with unit constants.

    ``eps log(m) log(1/delta) + M sqrt(log(1/delta) / m)`` where ``eps`` is
    :func:`stability_const` or :func:`stability_decay`.
    """
    mode = _mode(q, mode)
    eps = stability_const(q) if mode == "const" else stability_decay(q)
    return _assemble(eps, q)


def noisy_stability(q: BoundQuery, mode: str = None) -> float:
    """Stability under per-gate depolarizing noise of strength ``q.p``.

    ``const``: the constant-step value with growth factor
    ``(1 + (1-p)^Kg eta kappa)^T``. ``decay``: the decaying-step value with
    ``c`` replaced by ``c (1-p)^Kg``, whose ``T`` exponent is
    ``c kappa / (c kappa + 1/(1-p)^Kg)``. At ``p = 1`` both reduce to
    ``2 sqrt(2) alpha^2 K ||O||^2 / (kappa m)``. The decay value decreases in
    ``p`` whenever ``M T kappa > 2 sqrt(2) c alpha^2 K ||O||^2 kappa (1-p)^Kg``.
    """
    mode = _mode(q, mode)
    factor = _noise_factor(q)
    if mode == "const":
        _require(q, "constant")
        return _const_eps(q, factor)
    _require(q, "inverse_decay")
    return _decay_eps(q, factor)


def noisy_gen_bound(q: BoundQuery, mode: str = None) -> float:
    """:func:`gen_bound` with :func:`noisy_stability` in place of the noiseless ``eps``."""
    return _assemble(noisy_stability(q, mode), q)


def onavg_bound(q: BoundQuery, sigma: float = None, grad_norm_trace=None) -> float:
    """Optimization-dependent bound on the expected generalization gap.

    ``sum_t prod_{j>t} (1 + eta_j kappa) 2 eta_t alpha sqrt(K) ||O|| (g_t + sigma) / m``
    where ``g_t`` is the supplied gradient-norm trace (an empirical stand-in
    for the expected full-batch gradient norm at step ``t``).
    """
    sigma = q.sigma if sigma is None else sigma
    trace = q.grad_norm_trace if grad_norm_trace is None else grad_norm_trace
    if sigma is None or trace is None:
        raise ContractError("onavg_bound needs sigma and a gradient-norm trace")
    trace = np.asarray(trace, dtype=float)
    if trace.shape != (q.T,):
        raise ContractError(f"gradient-norm trace has length {trace.size}, expected T={q.T}")
    if sigma < 0 or np.any(trace < 0):
        raise ContractError("sigma and gradient norms must be non-negative")
    etas = q.step_sizes
    per_step = 2 * etas * q.alpha * math.sqrt(q.K) * q.o_norm * (trace + sigma) / q.m
    return _recursion_sum(etas, kappa(q), per_step)


def gradient_cap(q: BoundQuery) -> float:
    """``G = sqrt(2) alpha sqrt(K) ||O||``, a uniform bound on loss-gradient norms."""
    return SQRT2 * q.alpha * math.sqrt(q.K) * q.o_norm


def init_link(q: BoundQuery, risk0: float, risk_min: float, sigma: float = None) -> float:
    """Bound on ``sum_t eta_t E||grad R_S(theta_t)||`` from the initial risk.

    Requires ``eta_t <= 1 / kappa`` for every step.
    """
    sigma = (q.sigma or 0.0) if sigma is None else sigma
    if not risk0 >= risk_min >= 0:
        raise ContractError("need risk0 >= risk_min >= 0")
    etas = q.step_sizes
    k = kappa(q)
    if q.T and np.max(etas) * k > 1.0:
        raise ContractError("step sizes must satisfy eta_t <= 1/kappa")
    total = float(np.sum(etas))
    return 2.0 * math.sqrt(total * (risk0 - risk_min + 0.5 * k * sigma**2 * float(np.sum(etas**2))))
