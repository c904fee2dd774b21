"""Linear plant description, discounted Riccati solver and scheduling bounds.

Everything here is a pure function of immutable values. Matrices are stored as
float64 numpy arrays; the dataclasses are frozen and compare by identity.
"""

from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional

import numpy as np

from .errors import (
    DimensionMismatch,
    GammaOutOfRange,
    NoConvergence,
    NotPositiveDefinite,
    NotPSD,
    Uncontrollable,
    Unobservable,
    ValidationError,
)

PSD_TOL = 1e-9
RANK_RTOL = 1e-8
DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 100_000


@dataclass(frozen=True, eq=False)
class NoiseModel:
    """Zero-mean additive plant noise.

    ``kind`` is ``"gaussian"`` (covariance ``cov``) or ``"uniform"`` (i.i.d.
    coordinates on ``[-h_i, h_i]``, covariance ``diag(h**2 / 3)``).
    """

    kind: str
    cov: np.ndarray
    half_width: Optional[np.ndarray] = None
    factor: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.kind == "gaussian":
            w, v = np.linalg.eigh(self.cov)
            # singular K_W: round-off negatives are clipped to zero
            w = np.where(w < 1e-12, 0.0, w)
            object.__setattr__(self, "factor", v * np.sqrt(w))
        elif self.kind == "uniform":
            object.__setattr__(self, "factor", np.diag(self.half_width))
        else:
            raise ValidationError(f"unknown noise kind {self.kind!r}")

    @classmethod
    def gaussian(cls, cov) -> "NoiseModel":
        return cls("gaussian", np.array(cov, dtype=np.float64))

    @classmethod
    def uniform(cls, half_width, n: int) -> "NoiseModel":
        h = np.broadcast_to(np.asarray(half_width, dtype=np.float64), (n,)).copy()
        if np.any(h < 0):
            raise ValidationError("uniform half-width must be non-negative")
        return cls("uniform", np.diag(h**2 / 3.0), half_width=h)

    @property
    def dim(self) -> int:
        return self.cov.shape[0]

    def to_json(self):
        if self.kind == "gaussian":
            return "gaussian"
        return {"uniform": self.half_width.tolist()}


@dataclass(frozen=True, eq=False)
class SystemModel:
    A: np.ndarray
    B: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    K_W: np.ndarray
    gamma: float
    lam: float
    noise: NoiseModel

    @property
    def n_x(self) -> int:
        return self.A.shape[0]

    @property
    def n_u(self) -> int:
        return self.B.shape[1]

    def with_lambda(self, lam: float) -> "SystemModel":
        return validate_system(self.A, self.B, self.Q, self.R, self.K_W, self.gamma, lam, noise=self.noise)

    def to_dict(self) -> dict:
        return {
            "A": self.A.tolist(),
            "B": self.B.tolist(),
            "Q": self.Q.tolist(),
            "R": self.R.tolist(),
            "K_W": self.K_W.tolist(),
            "gamma": self.gamma,
            "lambda": self.lam,
            "noise": self.noise.to_json(),
        }


@dataclass(frozen=True, eq=False)
class RiccatiSolution:
    P: np.ndarray
    Rhat: np.ndarray
    L: np.ndarray
    Gamma: np.ndarray
    trace_gamma_kw: float
    residual: float
    iterations: int

    def to_dict(self) -> dict:
        return {
            "P": self.P.tolist(),
            "Rhat": self.Rhat.tolist(),
            "L": self.L.tolist(),
            "Gamma": self.Gamma.tolist(),
            "trace_gamma_kw": self.trace_gamma_kw,
            "residual": self.residual,
            "iterations": self.iterations,
        }


@dataclass(frozen=True, eq=False)
class LemmaBounds:
    """Quadratic-form bounds on the error for sufficient (no-)scheduling.

    A point ``e`` is certainly not scheduled when ``e' shape e < c_inner`` and
    certainly scheduled when ``e' shape e > c_outer``.
    """

    shape: np.ndarray
    c_inner: float
    c_outer: float
    always_threshold: float

    def to_dict(self) -> dict:
        return {
            "shape": self.shape.tolist(),
            "c_inner": self.c_inner,
            "c_outer": self.c_outer,
            "always_threshold": self.always_threshold,
        }


class LemmaClass(str, enum.Enum):
    NO_SCHEDULE = "NoScheduleSufficient"
    SCHEDULE = "ScheduleSufficient"
    INDETERMINATE = "Indeterminate"


def _as_matrix(name, value, shape=None) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2:
        raise DimensionMismatch(f"{name} must be a matrix, got ndim={arr.ndim}")
    if shape is not None and arr.shape != shape:
        raise DimensionMismatch(f"{name} has shape {arr.shape}, expected {shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} has non-finite entries")
    return arr


def _check_symmetric(name, M):
    if not np.allclose(M, M.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(M).max())):
        raise NotPSD(f"{name} is not symmetric")


def _rank(M: np.ndarray) -> int:
    s = np.linalg.svd(M, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > RANK_RTOL * s[0]))


def psd_sqrt(M: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(M)
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


def controllability_matrix(A, B) -> np.ndarray:
    blocks = [B]
    for _ in range(A.shape[0] - 1):
        blocks.append(A @ blocks[-1])
    return np.hstack(blocks)


def observability_matrix(A, C) -> np.ndarray:
    blocks = [C]
    for _ in range(A.shape[0] - 1):
        blocks.append(blocks[-1] @ A)
    return np.vstack(blocks)


def validate_system(A, B, Q, R, K_W, gamma, lam, noise=None) -> SystemModel:
    """Check a plant/cost description and freeze it into a :class:`SystemModel`.

    ``noise`` may be ``None``/``"gaussian"`` (Gaussian with covariance ``K_W``),
    ``{"uniform": h}`` or an existing :class:`NoiseModel`. Uniform noise
    replaces ``K_W`` with its covariance ``diag(h**2/3)`` so that every
    trace term sees the noise actually being simulated.
    """
    A = _as_matrix("A", A)
    n = A.shape[0]
    if A.shape != (n, n):
        raise DimensionMismatch(f"A must be square, got {A.shape}")
    B = _as_matrix("B", B)
    if B.shape[0] != n:
        raise DimensionMismatch(f"B has {B.shape[0]} rows, expected {n}")
    m = B.shape[1]
    Q = _as_matrix("Q", Q, (n, n))
    R = _as_matrix("R", R, (m, m))

    if isinstance(noise, NoiseModel):
        nm = noise
    elif noise is None or noise == "gaussian":
        nm = None
    elif isinstance(noise, Mapping) and "uniform" in noise:
        nm = NoiseModel.uniform(noise["uniform"], n)
    else:
        raise ValidationError(f"unrecognized noise spec {noise!r}")
    if nm is not None and nm.dim != n:
        raise DimensionMismatch(f"noise dimension {nm.dim} != {n}")
    if nm is not None and nm.kind == "uniform":
        K_W = nm.cov
    K_W = _as_matrix("K_W", K_W, (n, n))

    gamma = float(gamma)
    if not 0.0 < gamma < 1.0:
        raise GammaOutOfRange(f"gamma must lie in (0, 1), got {gamma}")
    lam = float(lam)
    if not np.isfinite(lam) or lam < 0.0:
        raise ValidationError(f"lambda must be a non-negative number, got {lam}")

    _check_symmetric("Q", Q)
    _check_symmetric("K_W", K_W)
    if not np.allclose(R, R.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(R).max())):
        raise NotPositiveDefinite("R is not symmetric")
    if np.linalg.eigvalsh(R).min() <= 0.0:
        raise NotPositiveDefinite("R must be positive definite")
    for name, M in (("Q", Q), ("K_W", K_W)):
        scale = max(1.0, np.abs(M).max())
        if np.linalg.eigvalsh(M).min() < -PSD_TOL * scale:
            raise NotPSD(f"{name} must be positive semi-definite")

    if _rank(controllability_matrix(A, B)) < n:
        raise Uncontrollable("(A, B) is not controllable")
    if _rank(observability_matrix(A, psd_sqrt(Q))) < n:
        raise Unobservable("(A, Q^1/2) is not observable")

    if nm is None:
        nm = NoiseModel.gaussian(K_W)
    return SystemModel(A, B, Q, R, K_W, gamma, lam, nm)


def system_from_dict(d: Mapping[str, Any]) -> SystemModel:
    missing = [k for k in ("A", "B", "Q", "R", "gamma", "lambda") if k not in d]
    noise = d.get("noise")
    if "K_W" not in d and not (isinstance(noise, Mapping) and "uniform" in noise):
        missing.append("K_W")
    if missing:
        raise ValidationError(f"system config missing keys: {', '.join(missing)}")
    K_W = d.get("K_W")
    if K_W is None:
        K_W = np.zeros((np.atleast_2d(d["A"]).shape[0],) * 2)
    return validate_system(d["A"], d["B"], d["Q"], d["R"], K_W, d["gamma"], d["lambda"], noise=noise)


def load_system(path) -> SystemModel:
    with open(Path(path)) as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: invalid JSON ({exc})") from None
    if "system" in d:
        d = d["system"]
    return system_from_dict(d)


def system_digest(m: SystemModel) -> str:
    """Hash of everything that shapes the learned Q-function except lambda."""
    d = m.to_dict()
    del d["lambda"]
    blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def riccati_map(P: np.ndarray, m: SystemModel) -> np.ndarray:
    A, B, g = m.A, m.B, m.gamma
    PA = P @ A
    Rhat = m.R + g * B.T @ P @ B
    return g * A.T @ PA - g * g * PA.T @ B @ np.linalg.solve(Rhat, B.T @ PA) + m.Q


def solve_riccati(m: SystemModel, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> RiccatiSolution:
    """Discounted ARE by value iteration from ``P0 = Q``.

    Raises:
        NoConvergence: if the map defect is still above ``tol`` after
            ``max_iter`` iterations.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    P = m.Q.copy()
    residual = np.inf
    for it in range(max_iter):
        mapped = riccati_map(P, m)
        residual = float(np.abs(mapped - P).max())
        if residual <= tol:
            break
        if not np.isfinite(residual):
            break
        P = 0.5 * (mapped + mapped.T)
    if not residual <= tol:
        raise NoConvergence(f"Riccati iteration did not reach tol={tol:g} in {max_iter} steps (defect {residual:.3g})")

    g = m.gamma
    Rhat = m.R + g * m.B.T @ P @ m.B
    Rhat = 0.5 * (Rhat + Rhat.T)
    L = g * np.linalg.solve(Rhat, m.B.T @ P @ m.A)
    Gamma = L.T @ Rhat @ L
    Gamma = 0.5 * (Gamma + Gamma.T)
    return RiccatiSolution(
        P=P,
        Rhat=Rhat,
        L=L,
        Gamma=Gamma,
        trace_gamma_kw=float(np.trace(Gamma @ m.K_W)),
        residual=residual,
        iterations=it,
    )


def lemma_bounds(m: SystemModel, sol: RiccatiSolution) -> LemmaBounds:
    g, lam, tr = m.gamma, m.lam, sol.trace_gamma_kw
    shape = m.A.T @ sol.Gamma @ m.A
    return LemmaBounds(
        shape=0.5 * (shape + shape.T),
        c_inner=lam * (1.0 / g - 1.0) - tr,
        c_outer=lam / (g * (1.0 - g)) - tr,
        always_threshold=g * (1.0 - g) * tr,
    )


def classify_error(e, b: LemmaBounds) -> LemmaClass:
    e = np.asarray(e, dtype=np.float64)
    q = float(e @ b.shape @ e)
    if q < b.c_inner:
        return LemmaClass.NO_SCHEDULE
    if q > b.c_outer:
        return LemmaClass.SCHEDULE
    return LemmaClass.INDETERMINATE


def classify_errors(E: np.ndarray, b: LemmaBounds) -> np.ndarray:
    """Vectorized :func:`classify_error`; returns an array of LemmaClass values."""
    E = np.atleast_2d(np.asarray(E, dtype=np.float64))
    q = np.einsum("ij,jk,ik->i", E, b.shape, E)
    # element-wise assignment keeps the enum objects; bulk fills coerce them to str
    lookup = np.empty(3, dtype=object)
    for i, c in enumerate((LemmaClass.INDETERMINATE, LemmaClass.NO_SCHEDULE, LemmaClass.SCHEDULE)):
        lookup[i] = c
    codes = np.where(q < b.c_inner, 1, np.where(q > b.c_outer, 2, 0))
    return lookup[codes]
