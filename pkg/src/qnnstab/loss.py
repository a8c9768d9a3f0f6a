"""Squared-error loss with its Lipschitz, smoothness and boundedness constants."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigurationError


@dataclass(frozen=True)
class LossSpec:
    """Loss plus the constants the stability bounds consume.

    ``alpha`` is the Lipschitz constant in the model output, ``nu`` the
    Lipschitz constant of its derivative and ``bound`` the maximum loss value.
    """

    kind: str
    alpha: float
    nu: float
    bound: float

    def __post_init__(self):
        if self.kind != "squared_error":
            raise ConfigurationError(f"unsupported loss {self.kind!r}")
        if min(self.alpha, self.nu, self.bound) <= 0:
            raise ConfigurationError("loss constants must be positive")


def squared_error(o_norm: float = 1.0) -> LossSpec:
    """Certified constants for ``(f - y)**2`` with ``|f| <= o_norm`` and ``y`` in ``{-1, +1}``."""
    if o_norm < 0:
        raise ConfigurationError("o_norm must be non-negative")
    return LossSpec("squared_error", alpha=2.0 * (o_norm + 1.0), nu=2.0, bound=(o_norm + 1.0) ** 2)


def loss_value(f, y, spec: LossSpec = None):
    f = np.asarray(f, dtype=float)
    y = np.asarray(y, dtype=float)
    out = (f - y) ** 2
    return float(out) if out.ndim == 0 else out


def loss_deriv(f, y, spec: LossSpec = None):
    """Derivative of the loss with respect to the model output."""
    f = np.asarray(f, dtype=float)
    y = np.asarray(y, dtype=float)
    out = 2.0 * (f - y)
    return float(out) if out.ndim == 0 else out
