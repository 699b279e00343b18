"""Gauge-covariant Gaussian channels parametrized by a pair of matrices (K, mu).

The channel acts on Weyl operators as ``Phi*(D(z)) = exp(-z* mu z) D(K z)``.
Every analytic quantity here depends on ``K`` only through the Gram matrix
``K* K``; phases of ``K`` never matter.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.linalg import block_diag

from .matcore import PSD_RTOL, as_hermitian, eig_hermitian, is_psd

SINGULAR_RTOL = 1e-12
MIN_P_GAP = 1e-6


class ChannelSpecError(ValueError):
    """Malformed channel parameters or channel-spec document."""


class NotCompletelyPositiveError(ValueError):
    def __init__(self, report: "CpReport"):
        self.report = report
        super().__init__(
            "channel parameters violate complete positivity: "
            f"min eig(mu - (1-K*K)/2) = {report.min_eig_first:.6e}, "
            f"min eig(mu + (1-K*K)/2) = {report.min_eig_second:.6e}"
        )


class InvalidStateError(ValueError):
    """Covariance matrix does not describe a quantum state (Sigma - 1/2 not PSD)."""


@dataclass(frozen=True, eq=False)
class ChannelParams:
    K: np.ndarray
    mu: np.ndarray
    _gram: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        K = np.atleast_2d(np.asarray(self.K, dtype=complex))
        if K.ndim != 2 or K.shape[0] != K.shape[1] or K.shape[0] < 1:
            raise ChannelSpecError(f"K must be a nonempty square matrix, got shape {K.shape}")
        try:
            mu = as_hermitian(self.mu)
        except ValueError as exc:
            raise ChannelSpecError(f"mu: {exc}") from exc
        if mu.shape != K.shape:
            raise ChannelSpecError(f"K has shape {K.shape} but mu has shape {mu.shape}")
        K.setflags(write=False)
        mu.setflags(write=False)
        gram = K.conj().T @ K
        gram = 0.5 * (gram + gram.conj().T)
        gram.setflags(write=False)
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "_gram", gram)

    @property
    def s(self) -> int:
        return self.K.shape[0]

    @property
    def gram(self) -> np.ndarray:
        """``K* K``."""
        return self._gram

    @cached_property
    def gram_eigenvalues(self) -> np.ndarray:
        return np.clip(eig_hermitian(self._gram)[0], 0.0, None)

    @property
    def is_invertible(self) -> bool:
        w = self.gram_eigenvalues
        return bool(w[0] > SINGULAR_RTOL * max(w[-1], 1e-300))

    @classmethod
    def single_mode(cls, K: complex, mu: float) -> "ChannelParams":
        return cls(np.array([[K]]), np.array([[mu]]))

    @classmethod
    def identity(cls, s: int = 1) -> "ChannelParams":
        return cls(np.eye(s), np.zeros((s, s)))


def attenuator(eta: float) -> ChannelParams:
    """Quantum-limited attenuator with transmissivity ``eta``."""
    return ChannelParams.single_mode(math.sqrt(eta), (1.0 - eta) / 2)


def amplifier(G: float) -> ChannelParams:
    """Quantum-limited amplifier with gain ``G``."""
    return ChannelParams.single_mode(math.sqrt(G), (G - 1.0) / 2)


def classical_noise(nbar: float) -> ChannelParams:
    """Additive classical Gaussian noise (K = 1) adding ``nbar`` photons."""
    return ChannelParams.single_mode(1.0, nbar)


@dataclass(frozen=True)
class CpReport:
    is_cp: bool
    min_eig_first: float
    min_eig_second: float

    def to_dict(self) -> dict:
        return {
            "is_cp": self.is_cp,
            "min_eig_first": self.min_eig_first,
            "min_eig_second": self.min_eig_second,
        }


def cp_matrices(params: ChannelParams) -> tuple[np.ndarray, np.ndarray]:
    """The two matrices ``mu -/+ (1 - K*K)/2`` that must be PSD."""
    half_defect = 0.5 * (np.eye(params.s) - params.gram)
    return params.mu - half_defect, params.mu + half_defect


def cp_check(params: ChannelParams) -> CpReport:
    first, second = cp_matrices(params)
    scale = max(1.0, float(np.linalg.norm(params.gram, 2)), float(np.linalg.norm(params.mu, 2)))
    m1 = float(eig_hermitian(first)[0][0])
    m2 = float(eig_hermitian(second)[0][0])
    tol = -PSD_RTOL * scale
    return CpReport(is_cp=m1 >= tol and m2 >= tol, min_eig_first=m1, min_eig_second=m2)


def require_cp(params: ChannelParams) -> CpReport:
    report = cp_check(params)
    if not report.is_cp:
        raise NotCompletelyPositiveError(report)
    return report


def log_det_gram(params: ChannelParams) -> float:
    """``ln det K*K``, or ``-inf`` when K is singular at machine scale."""
    if not params.is_invertible:
        return -math.inf
    return float(np.sum(np.log(params.gram_eigenvalues)))


def schatten_norm_analytic(params: ChannelParams, p: float) -> float:
    """Norm of the channel as a map on the Schatten class of order ``p``.

    Equals ``(det K*K) ** (-(p-1)/p)`` for invertible K and ``inf`` otherwise.
    ``p == 1`` returns 1 (the channel is trace preserving and positive).
    """
    require_cp(params)
    if p == 1:
        return 1.0
    if p < 1 + MIN_P_GAP:
        raise ValueError(f"p must be 1 or at least 1 + {MIN_P_GAP:g}, got {p!r}")
    logdet = log_det_gram(params)
    if logdet == -math.inf:
        return math.inf
    if math.isinf(p):
        return math.exp(-logdet)
    # -1/p' = -(p-1)/p, with p-1 formed directly to keep digits near p = 1
    return math.exp(-((p - 1.0) / p) * logdet)


def entropy_gain_bound(params: ChannelParams) -> float:
    """Minimal entropy gain ``ln det K*K`` (``-inf`` for singular K)."""
    return log_det_gram(params)


def validate_sigma(Sigma, s: int | None = None) -> np.ndarray:
    try:
        S = as_hermitian(Sigma)
    except ValueError as exc:
        raise InvalidStateError(str(exc)) from exc
    if s is not None and S.shape != (s, s):
        raise InvalidStateError(f"Sigma has shape {S.shape}, expected {(s, s)}")
    if not is_psd(S - 0.5 * np.eye(S.shape[0])):
        raise InvalidStateError("Sigma - 1/2 is not positive semidefinite")
    return S


def thermal_sigma(E: float, s: int = 1) -> np.ndarray:
    return (E + 0.5) * np.eye(s)


def transform_sigma(params: ChannelParams, Sigma) -> np.ndarray:
    """Covariance of the output state: ``mu + K* Sigma K``."""
    S = validate_sigma(Sigma, params.s)
    out = params.mu + params.K.conj().T @ S @ params.K
    out = 0.5 * (out + out.conj().T)
    if cp_check(params).is_cp:
        assert is_psd(out - 0.5 * np.eye(params.s)), "CP channel produced an invalid state"
    return out


def tensor(a: ChannelParams, b: ChannelParams) -> ChannelParams:
    """Parameters of ``a (x) b``: block-diagonal K and mu."""
    return ChannelParams(block_diag(a.K, b.K), block_diag(a.mu, b.mu))


# channel-spec documents ---------------------------------------------------------


def _parse_matrix(raw, name: str) -> np.ndarray:
    if not isinstance(raw, list) or not raw or not all(isinstance(r, list) for r in raw):
        raise ChannelSpecError(f"{name!r} must be a nonempty list of rows")
    rows = []
    for row in raw:
        out = []
        for x in row:
            if isinstance(x, bool):
                raise ChannelSpecError(f"{name!r}: boolean entry")
            if isinstance(x, (int, float)):
                out.append(complex(x))
            elif (isinstance(x, list) and len(x) == 2
                  and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in x)):
                out.append(complex(x[0], x[1]))
            else:
                raise ChannelSpecError(f"{name!r}: bad entry {x!r}")
        rows.append(out)
    if len({len(r) for r in rows}) != 1:
        raise ChannelSpecError(f"{name!r}: ragged rows")
    return np.array(rows, dtype=complex)


def from_spec(doc: dict) -> ChannelParams:
    """Build parameters from a channel-spec mapping ``{"s", "K", "mu"}``."""
    if not isinstance(doc, dict):
        raise ChannelSpecError("channel spec must be a JSON object")
    missing = {"s", "K", "mu"} - doc.keys()
    if missing:
        raise ChannelSpecError(f"channel spec missing keys: {sorted(missing)}")
    s = doc["s"]
    if not isinstance(s, int) or isinstance(s, bool) or s < 1:
        raise ChannelSpecError(f"'s' must be a positive integer, got {s!r}")
    K = _parse_matrix(doc["K"], "K")
    mu = _parse_matrix(doc["mu"], "mu")
    if K.shape != (s, s) or mu.shape != (s, s):
        raise ChannelSpecError(f"K {K.shape} and mu {mu.shape} must both be {s}x{s}")
    return ChannelParams(K, mu)


def _encode_matrix(M: np.ndarray) -> list:
    if np.all(M.imag == 0):
        return [[float(x) for x in row] for row in M.real]
    return [[[float(x.real), float(x.imag)] for x in row] for row in M]


def to_spec(params: ChannelParams) -> dict:
    return {"s": params.s, "K": _encode_matrix(params.K), "mu": _encode_matrix(params.mu)}


def load_channel(path) -> ChannelParams:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ChannelSpecError(f"cannot read channel spec {path}: {exc}") from exc
    return from_spec(doc)
