"""Scalar GLM losses: values, derivatives, convex conjugates, smoothness.

Conventions
-----------
The squared loss is ``0.5 * (s - y)**2`` so that its derivative is the plain
residual ``s - y``. When comparing objective values against solvers that use
``(s - y)**2`` the effective ridge strength differs by a factor of two.

The logistic loss is ``log(1 + exp(-y * s))`` with labels ``y`` in ``{-1, +1}``.

Every function here is vectorised: ``s``, ``y`` and ``zeta`` may be scalars or
broadcast-compatible arrays.
"""

from __future__ import annotations

import enum

import numpy as np

__all__ = [
    "LossKind",
    "loss_value",
    "loss_derivative",
    "loss_conjugate",
    "smoothness_constant",
    "check_labels",
    "spectral_norm",
]


class LossKind(str, enum.Enum):
    SQUARED = "squared"
    LOGISTIC = "logistic"

    @classmethod
    def parse(cls, value: "LossKind | str") -> "LossKind":
        if isinstance(value, LossKind):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(
                f"unknown loss {value!r}; expected one of "
                f"{[k.value for k in cls]}"
            ) from None

    @property
    def curvature(self) -> float:
        """Upper bound on the second derivative of the scalar loss in ``s``."""
        return 1.0 if self is LossKind.SQUARED else 0.25


def check_labels(y) -> None:
    """Raise ``ValueError`` unless every label is exactly -1 or +1."""
    y = np.asarray(y, dtype=float)
    bad = ~((y == 1.0) | (y == -1.0))
    if np.any(bad):
        first = int(np.flatnonzero(bad.ravel())[0])
        raise ValueError(
            f"logistic labels must be in {{-1, +1}}; found {y.ravel()[first]!r} "
            f"at position {first}"
        )


def _log1pexp(t):
    # log(1 + exp(t)) without overflow
    t = np.asarray(t, dtype=float)
    return np.maximum(t, 0.0) + np.log1p(np.exp(-np.abs(t)))


def loss_value(kind, s, y, *, check: bool = True):
    kind = LossKind.parse(kind)
    s = np.asarray(s, dtype=float)
    y = np.asarray(y, dtype=float)
    if kind is LossKind.SQUARED:
        out = 0.5 * (s - y) ** 2
    else:
        if check:
            check_labels(y)
        out = _log1pexp(-y * s)
    return out[()] if out.ndim == 0 else out


def loss_derivative(kind, s, y, *, check: bool = True):
    """Derivative of the scalar loss with respect to the linear predictor."""
    kind = LossKind.parse(kind)
    s = np.asarray(s, dtype=float)
    y = np.asarray(y, dtype=float)
    if kind is LossKind.SQUARED:
        out = s - y
    else:
        if check:
            check_labels(y)
        t = y * s
        # -y * sigmoid(-t), split on the sign of t so exp never overflows
        e = np.exp(-np.abs(t))
        sig_neg = np.where(t >= 0, e / (1.0 + e), 1.0 / (1.0 + e))
        out = -y * sig_neg
    return out[()] if out.ndim == 0 else out


def _xlogx(a):
    a = np.asarray(a, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(a > 0, a * np.log(np.where(a > 0, a, 1.0)), 0.0)


def loss_conjugate(kind, zeta, y):
    """Convex conjugate ``l*(zeta, y) = sup_s zeta*s - l(s, y)``.

    Returns ``+inf`` outside the conjugate's domain (logistic only: the domain
    is ``zeta * y`` in ``[-1, 0]``).
    """
    kind = LossKind.parse(kind)
    zeta = np.asarray(zeta, dtype=float)
    y = np.asarray(y, dtype=float)
    if kind is LossKind.SQUARED:
        out = 0.5 * zeta**2 + zeta * y
    else:
        a = -zeta * y  # in [0, 1] on the domain
        inside = (a >= 0.0) & (a <= 1.0)
        ac = np.clip(a, 0.0, 1.0)
        out = np.where(inside, _xlogx(1.0 - ac) + _xlogx(ac), np.inf)
    return out[()] if out.ndim == 0 else out


def spectral_norm(X, *, tol: float = 1e-4, max_iter: int = 100, seed: int = 0) -> float:
    """Largest singular value of ``X`` by power iteration on ``X^T X``."""
    X = np.asarray(X, dtype=float)
    if X.size == 0 or not np.any(X):
        return 0.0
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(X.shape[1])
    v /= np.linalg.norm(v)
    sigma = 0.0
    for _ in range(max_iter):
        w = X.T @ (X @ v)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        new_sigma = np.sqrt(nw)
        v = w / nw
        if abs(new_sigma - sigma) <= tol * new_sigma:
            sigma = new_sigma
            break
        sigma = new_sigma
    return float(sigma)


def smoothness_constant(kind, X) -> float:
    """Lipschitz constant of the gradient of ``sum_i l(x_i^T b, y_i)``.

    ``c * sigma_max(X)**2`` with ``c = 1`` (squared) or ``1/4`` (logistic),
    inflated by 1% to absorb the power-iteration error. An all-zero design
    returns the floor ``1e-12``.
    """
    kind = LossKind.parse(kind)
    X = np.asarray(X, dtype=float)
    if X.size == 0:
        raise ValueError("design matrix is empty")
    sigma = spectral_norm(X)
    if sigma == 0.0:
        return 1e-12
    return 1.01 * kind.curvature * sigma**2
