"""Problem instances, CSV ingestion, preprocessing and the synthetic generator."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .losses import LossKind, check_labels

__all__ = [
    "ProblemInstance",
    "generate_synthetic",
    "true_support",
    "load_csv",
    "save_csv",
    "preprocess",
    "gaussian_stream",
]

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    """``min f(X b, y) + lambda2 ||b||^2  s.t. ||b||_0 <= k, ||b||_inf <= M``.

    ``feature_index`` maps columns of ``X`` back to the caller's original
    column numbering (0-indexed); preprocessing may drop columns.
    """

    X: np.ndarray
    y: np.ndarray
    loss: LossKind
    k: int
    M: float
    lambda2: float
    feature_index: np.ndarray = field(default=None)  # type: ignore[assignment]
    feature_names: tuple = ()

    def __post_init__(self):
        X = np.array(self.X, dtype=float, order="C")
        y = np.array(self.y, dtype=float).ravel()
        loss = LossKind.parse(self.loss)
        if X.ndim != 2:
            raise ValueError(f"X must be 2-D, got shape {X.shape}")
        n, p = X.shape
        if y.shape[0] != n:
            raise ValueError(f"X has {n} rows but y has {y.shape[0]} entries")
        if not np.all(np.isfinite(X)):
            raise ValueError("X contains non-finite entries")
        if not np.all(np.isfinite(y)):
            raise ValueError("y contains non-finite entries")
        if loss is LossKind.LOGISTIC:
            check_labels(y)
        k = int(self.k)
        if not 1 <= k <= p:
            raise ValueError(f"k must satisfy 1 <= k <= p={p}, got {k}")
        if not self.M > 0:
            raise ValueError(f"M must be positive, got {self.M}")
        if not self.lambda2 > 0:
            raise ValueError(f"lambda2 must be positive, got {self.lambda2}")
        fidx = (
            np.arange(p) if self.feature_index is None
            else np.asarray(self.feature_index, dtype=np.int64)
        )
        if fidx.shape != (p,):
            raise ValueError("feature_index must have one entry per column")
        X.setflags(write=False)
        y.setflags(write=False)
        fidx.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "loss", loss)
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "M", float(self.M))
        object.__setattr__(self, "lambda2", float(self.lambda2))
        object.__setattr__(self, "feature_index", fidx)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def with_params(self, **kwargs) -> "ProblemInstance":
        return replace(self, **kwargs)

    def objective(self, beta) -> float:
        """Objective of a full-length coefficient vector (constraints not checked)."""
        from .losses import loss_value

        beta = np.asarray(beta, dtype=float)
        s = self.X @ beta
        return float(np.sum(loss_value(self.loss, s, self.y)) + self.lambda2 * beta @ beta)


# -- synthetic data --------------------------------------------------------

def _box_muller(u: np.ndarray) -> np.ndarray:
    u1 = 1.0 - u[:, 0]  # (0, 1], keeps the log finite
    r = np.sqrt(-2.0 * np.log(u1))
    theta = 2.0 * np.pi * u[:, 1]
    z = np.empty(2 * u.shape[0])
    z[0::2] = r * np.cos(theta)
    z[1::2] = r * np.sin(theta)
    return z


def gaussian_stream(seed: int, size: int) -> np.ndarray:
    """Standard normals from PCG64 uniforms via the Box-Muller transform.

    Uniforms come from ``numpy.random.PCG64(seed)`` as 53-bit doubles, whose
    stream is fixed by the PCG64 definition, so the output is reproducible
    across platforms.
    """
    gen = np.random.Generator(np.random.PCG64(seed))
    return _box_muller(gen.random(((size + 1) // 2, 2)))[:size]


def true_support(p: int, k: int) -> np.ndarray:
    """0-indexed positions of the planted nonzeros: every ``p // k``-th coordinate,
    the first at 1-indexed coordinate ``p // k``."""
    if k > p:
        raise ValueError(f"k={k} exceeds p={p}")
    step = p // k
    return np.arange(1, k + 1) * step - 1


def generate_synthetic(
    n: int,
    p: int,
    k: int,
    correlation: float = 0.9,
    loss="squared",
    snr: float = 5.0,
    seed: int = 0,
    *,
    M: float = 2.0,
    lambda2: float = 1.0,
) -> ProblemInstance:
    """Toeplitz-correlated Gaussian design with a planted ``k``-sparse signal.

    Rows are ``N(0, Sigma)`` with ``Sigma[j, l] = correlation**|j - l|``. For
    the squared loss ``y = X b* + eps`` where each ``eps_i`` has *variance*
    ``||X b*||_2 / snr``; for the logistic loss ``P(y = 1 | x) = sigmoid(x^T b*)``.
    """
    loss = LossKind.parse(loss)
    if k > p:
        raise ValueError(f"k={k} exceeds p={p}")
    if not 0.0 <= correlation < 1.0:
        raise ValueError("correlation must lie in [0, 1)")
    idx = np.arange(p)
    sigma = correlation ** np.abs(idx[:, None] - idx[None, :])
    chol = np.linalg.cholesky(sigma)
    gen = np.random.Generator(np.random.PCG64(seed))
    X = _box_muller(gen.random(((n * p + 1) // 2, 2)))[: n * p].reshape(n, p) @ chol.T
    beta = np.zeros(p)
    beta[true_support(p, k)] = 1.0
    signal = X @ beta
    if loss is LossKind.SQUARED:
        var = np.linalg.norm(signal) / snr
        noise = _box_muller(gen.random(((n + 1) // 2, 2)))[:n]
        y = signal + math.sqrt(var) * noise
    else:
        u = gen.random(n)
        prob = 1.0 / (1.0 + np.exp(-signal))
        y = np.where(u < prob, 1.0, -1.0)
    return ProblemInstance(X, y, loss, k, M, lambda2)


# -- CSV -------------------------------------------------------------------

def load_csv(path, response_column: str, loss="squared", *, k: int = 1, M: float = 1.0,
             lambda2: float = 1.0) -> ProblemInstance:
    """Read a numeric CSV with a header row; all other columns become features."""
    path = Path(path)
    loss = LossKind.parse(loss)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if response_column not in header:
            raise ValueError(f"{path}: response column {response_column!r} not in header")
        ycol = header.index(response_column)
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValueError(
                    f"{path}: row {lineno} has {len(row)} fields, expected {len(header)}"
                )
            vals = []
            for j, cell in enumerate(row):
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise ValueError(
                        f"{path}: row {lineno}, column {header[j]!r}: "
                        f"non-numeric value {cell!r}"
                    ) from None
            rows.append(vals)
    if not rows:
        raise ValueError(f"{path}: no data rows")
    data = np.array(rows, dtype=float)
    y = data[:, ycol]
    X = np.delete(data, ycol, axis=1)
    names = tuple(h for j, h in enumerate(header) if j != ycol)
    if loss is LossKind.LOGISTIC:
        check_labels(y)
    k = min(k, X.shape[1])
    return ProblemInstance(X, y, loss, k, M, lambda2, feature_names=names)


def save_csv(instance: ProblemInstance, path, response_column: str = "y") -> None:
    path = Path(path)
    names = instance.feature_names or tuple(f"x{j + 1}" for j in range(instance.p))
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*names, response_column])
        for xi, yi in zip(instance.X, instance.y):
            w.writerow([repr(float(v)) for v in xi] + [repr(float(yi))])


# -- preprocessing ---------------------------------------------------------

def preprocess(instance: ProblemInstance) -> ProblemInstance:
    """Center every column and scale it to unit Euclidean norm.

    Columns that are constant (zero after centering) are dropped; their
    original indices are logged at WARNING level under ``extra["dropped"]``.
    """
    X = np.array(instance.X, dtype=float)
    Xc = X - X.mean(axis=0)
    norms = np.linalg.norm(Xc, axis=0)
    scale = np.maximum(np.abs(X).max(axis=0), 1.0)
    keep = norms > 1e-12 * scale * math.sqrt(max(instance.n, 1))
    dropped = instance.feature_index[~keep]
    if dropped.size:
        logger.warning(
            "dropping %d constant column(s): %s", dropped.size, dropped.tolist(),
            extra={"dropped": dropped.tolist()},
        )
    Xc = Xc[:, keep] / norms[keep]
    # a second centring pass removes the rounding left by the first
    Xc -= Xc.mean(axis=0)
    Xc /= np.linalg.norm(Xc, axis=0)
    names = tuple(nm for nm, kp in zip(instance.feature_names, keep) if kp) \
        if instance.feature_names else ()
    p_new = Xc.shape[1]
    if p_new == 0:
        raise ValueError("all columns are constant")
    return ProblemInstance(
        Xc, instance.y, instance.loss, min(instance.k, p_new), instance.M,
        instance.lambda2, feature_index=instance.feature_index[keep], feature_names=names,
    )
