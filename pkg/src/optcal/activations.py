"""Activation functions with two continuous derivatives everywhere.

Each tag supplies value, d1, d2 and d3. The stack must be C2 so that a
surrogate pricer has continuous first and second Greeks; d3 exists almost
everywhere and feeds the reverse pass over second-order input propagation.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

VALID_TAGS = ("leaky_relu", "elu", "melu", "softplus_shift")


def melu_coeffs(alpha: float) -> tuple[float, float]:
    """(a, b) for the rational branch; requires 0 < alpha < 0.5 so b > 0."""
    if not 0.0 < alpha < 0.5:
        raise ValueError(f"melu alpha must be in (0, 0.5), got {alpha}")
    return 1.0 - 2.0 * alpha, -2.0 + 1.0 / alpha


def melu(z, alpha):
    """Modified ELU: rational for z > 0, alpha*(e^z - 1) for z <= 0.

    Value, slope and curvature all meet at z = 0 (slope = curvature = alpha),
    and melu(z) > -alpha everywhere.
    """
    a, b = melu_coeffs(alpha)
    z = np.asarray(z, dtype=float)
    zp = np.maximum(z, 0.0)
    zn = np.minimum(z, 0.0)
    return np.where(z > 0.0, (0.5 * zp * zp + a * zp) / (zp + b), alpha * np.expm1(zn))


def melu_d1(z, alpha):
    a, b = melu_coeffs(alpha)
    z = np.asarray(z, dtype=float)
    zp = np.maximum(z, 0.0)
    zn = np.minimum(z, 0.0)
    pos = (0.5 * zp * zp + b * zp + a * b) / (zp + b) ** 2
    return np.where(z > 0.0, pos, alpha * np.exp(zn))


def melu_d2(z, alpha):
    a, b = melu_coeffs(alpha)
    z = np.asarray(z, dtype=float)
    zp = np.maximum(z, 0.0)
    zn = np.minimum(z, 0.0)
    pos = b * (b - 2.0 * a) / (zp + b) ** 3
    return np.where(z > 0.0, pos, alpha * np.exp(zn))


def melu_d3(z, alpha):
    a, b = melu_coeffs(alpha)
    z = np.asarray(z, dtype=float)
    zp = np.maximum(z, 0.0)
    zn = np.minimum(z, 0.0)
    pos = -3.0 * b * (b - 2.0 * a) / (zp + b) ** 4
    return np.where(z > 0.0, pos, alpha * np.exp(zn))


def _leaky(z, alpha):
    z = np.asarray(z, dtype=float)
    return np.where(z > 0.0, z, alpha * z)


def _leaky_d1(z, alpha):
    z = np.asarray(z, dtype=float)
    return np.where(z > 0.0, 1.0, alpha)


def _elu(z, alpha):
    z = np.asarray(z, dtype=float)
    return np.where(z > 0.0, z, alpha * np.expm1(np.minimum(z, 0.0)))


def _elu_d1(z, alpha):
    z = np.asarray(z, dtype=float)
    return np.where(z > 0.0, 1.0, alpha * np.exp(np.minimum(z, 0.0)))


def _elu_d2(z, alpha):
    z = np.asarray(z, dtype=float)
    return np.where(z > 0.0, 0.0, alpha * np.exp(np.minimum(z, 0.0)))


def softplus_shift(z):
    """log(1 + e^z) - 0.5, computed overflow-free."""
    return np.logaddexp(0.0, np.asarray(z, dtype=float)) - 0.5


def _softplus_d1(z):
    return expit(np.asarray(z, dtype=float))


def _softplus_d2(z):
    s = expit(np.asarray(z, dtype=float))
    return s * (1.0 - s)


def _softplus_d3(z):
    s = expit(np.asarray(z, dtype=float))
    return s * (1.0 - s) * (1.0 - 2.0 * s)


@dataclass(frozen=True)
class Activation:
    """An activation tag with its parameter, dispatching value/d1/d2/d3."""

    tag: str
    alpha: float | None = None

    def __post_init__(self):
        if self.tag not in VALID_TAGS:
            raise ValueError(f"unknown activation tag: {self.tag!r}")
        if self.tag == "softplus_shift":
            if self.alpha is not None:
                raise ValueError("softplus_shift takes no parameter")
        elif self.alpha is None:
            raise ValueError(f"{self.tag} requires an alpha parameter")
        elif self.tag == "melu":
            melu_coeffs(self.alpha)  # validates the (0, 0.5) window

    def value(self, z):
        if self.tag == "melu":
            return melu(z, self.alpha)
        if self.tag == "leaky_relu":
            return _leaky(z, self.alpha)
        if self.tag == "elu":
            return _elu(z, self.alpha)
        return softplus_shift(z)

    def d1(self, z):
        if self.tag == "melu":
            return melu_d1(z, self.alpha)
        if self.tag == "leaky_relu":
            return _leaky_d1(z, self.alpha)
        if self.tag == "elu":
            return _elu_d1(z, self.alpha)
        return _softplus_d1(z)

    def d2(self, z):
        if self.tag == "melu":
            return melu_d2(z, self.alpha)
        if self.tag == "leaky_relu":
            return np.zeros_like(np.asarray(z, dtype=float))
        if self.tag == "elu":
            return _elu_d2(z, self.alpha)
        return _softplus_d2(z)

    def d3(self, z):
        if self.tag == "melu":
            return melu_d3(z, self.alpha)
        if self.tag == "leaky_relu":
            return np.zeros_like(np.asarray(z, dtype=float))
        if self.tag == "elu":
            return _elu_d2(z, self.alpha)  # third derivative equals second on both branches
        return _softplus_d3(z)

    def label(self) -> str:
        if self.alpha is None:
            return self.tag
        return f"{self.tag}:{self.alpha!r}"


def parse_activation(label: str) -> Activation:
    """Inverse of Activation.label(), e.g. 'melu:0.49' or 'softplus_shift'."""
    tag, sep, param = label.partition(":")
    if tag not in VALID_TAGS:
        raise ValueError(f"unknown activation tag: {tag!r}")
    if not sep:
        return Activation(tag)
    return Activation(tag, float(param))


def paper_stack() -> list[Activation]:
    """Default 4-layer stack: identity-slope leaky ReLU, two MELU, shifted softplus."""
    return [
        Activation("leaky_relu", 1.0),
        Activation("melu", 0.49),
        Activation("melu", 0.49),
        Activation("softplus_shift"),
    ]
