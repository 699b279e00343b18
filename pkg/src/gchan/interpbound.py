"""Randomized check of the interpolation bound for positive maps on matrices.

For a positive map ``N`` on ``d x d`` matrices and ``1 < p < inf``::

    ||N||_{p->p} <= ||N(1)||^(1/p') * ||N*(1)||^(1/p),   p' = p/(p-1).

Maps are given by Kraus operators, optionally preceded by a transpose; both
families are positive by construction (the transposed one is generally not
completely positive).  The p -> p norm is probed from below by a nonlinear
power iteration, so any witness exceeding the right-hand side would falsify
the bound.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

DEFAULT_P_GRID = (1.1, 1.5, 2.0, 3.0, 10.0, 1000.0)
DEFAULT_TRIALS = 20
DEFAULT_ITERS = 50
VIOLATION_RTOL = 1e-9


@dataclass(frozen=True, eq=False)
class PositiveMapRep:
    """``X -> sum_l A_l T(X) A_l^dagger`` with ``T`` the transpose when flagged."""

    kraus: np.ndarray
    pre_transpose: bool = False

    def __post_init__(self):
        A = np.asarray(self.kraus, dtype=complex)
        if A.ndim == 2:
            A = A[None]
        if A.ndim != 3 or A.shape[1] != A.shape[2]:
            raise ValueError(f"Kraus stack must have shape (k, d, d), got {A.shape}")
        A.setflags(write=False)
        object.__setattr__(self, "kraus", A)

    @property
    def d(self) -> int:
        return self.kraus.shape[1]

    @cached_property
    def superop(self) -> np.ndarray:
        """Matrix ``S`` with ``vec(N(X)) = S vec(X)`` for row-major ``vec``."""
        d = self.d
        S = sum(np.kron(A, A.conj()) for A in self.kraus)
        if self.pre_transpose:
            perm = np.arange(d * d).reshape(d, d).T.ravel()
            S = S[:, perm]
        return S

    def _check(self, X):
        X = np.asarray(X, dtype=complex)
        if X.shape[-2:] != (self.d, self.d):
            raise ValueError(f"operand shape {X.shape[-2:]} does not match map dimension {self.d}")
        return X

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "pre_transpose": self.pre_transpose,
            "kraus_re": self.kraus.real.tolist(),
            "kraus_im": self.kraus.imag.tolist(),
        }


def apply(nmap: PositiveMapRep, X) -> np.ndarray:
    """Apply the map; ``X`` may carry leading batch axes."""
    X = nmap._check(X)
    if nmap.pre_transpose:
        X = np.swapaxes(X, -1, -2)
    A = nmap.kraus
    AX = A @ X[..., None, :, :]
    return np.sum(AX @ np.conj(np.swapaxes(A, -1, -2)), axis=-3)


def apply_dual(nmap: PositiveMapRep, Y) -> np.ndarray:
    """Dual with respect to ``tr(Y N(X)) = tr(N*(Y) X)``."""
    Y = nmap._check(Y)
    A = nmap.kraus
    out = np.sum(np.conj(np.swapaxes(A, -1, -2)) @ Y[..., None, :, :] @ A, axis=-3)
    if nmap.pre_transpose:
        out = np.swapaxes(out, -1, -2)
    return out


def _apply_batch(nmap: PositiveMapRep, X: np.ndarray) -> np.ndarray:
    t, d = X.shape[0], nmap.d
    return (X.reshape(t, d * d) @ nmap.superop.T).reshape(t, d, d)


def _adjoint_batch(nmap: PositiveMapRep, Y: np.ndarray) -> np.ndarray:
    # Hilbert-Schmidt adjoint: <Y, N(X)> = <adj(Y), X> with <A, B> = tr(A^dagger B)
    t, d = Y.shape[0], nmap.d
    return (Y.reshape(t, d * d) @ nmap.superop.conj()).reshape(t, d, d)


def bound_rhs(nmap: PositiveMapRep, p: float) -> float:
    """``||N(1)||^(1/p') * ||N*(1)||^(1/p)`` in operator norm."""
    eye = np.eye(nmap.d)
    top = float(np.linalg.norm(apply(nmap, eye), 2))
    bottom = float(np.linalg.norm(apply_dual(nmap, eye), 2))
    if top == 0 or bottom == 0:
        return 0.0
    return math.exp((1 - 1 / p) * math.log(top) + math.log(bottom) / p)


def _schatten(sv: np.ndarray, p: float) -> np.ndarray:
    top = sv.max(axis=-1)
    safe = np.where(top > 0, top, 1.0)
    return top * np.sum((sv / safe[..., None]) ** p, axis=-1) ** (1.0 / p)


def _dual_element(M: np.ndarray, p: float) -> tuple[np.ndarray, np.ndarray]:
    """``U S^(p-1) V^dagger`` for ``M = U S V^dagger``, scaled to unit p'-norm.

    Returns the matrix, its singular values and those of ``M``.
    """
    U, S, Vh = np.linalg.svd(M)
    top = S.max(axis=-1, keepdims=True)
    W = (S / np.where(top > 0, top, 1.0)) ** (p - 1)
    W = W / np.maximum(_schatten(W, p / (p - 1))[..., None], 1e-300)
    return (U * W[..., None, :]) @ Vh, W, S


def _random_starts(rng: np.random.Generator, d: int, trials: int) -> np.ndarray:
    G = rng.standard_normal((trials, d, d)) + 1j * rng.standard_normal((trials, d, d))
    herm = (G + np.conj(np.swapaxes(G, -1, -2))) / 2
    starts = np.where((np.arange(trials) % 2 == 0)[:, None, None], herm, G)
    starts[0] = np.eye(d)
    return starts


def norm_ascent(nmap: PositiveMapRep, p: float, trials: int = DEFAULT_TRIALS,
                iters: int = DEFAULT_ITERS, rng: np.random.Generator | None = None):
    """Best ratio ``||N(X)||_p / ||X||_p`` found and the witness ``X`` attaining it.

    Starts are the identity plus random Hermitian and non-Hermitian matrices;
    each is refined by ``X <- dual_{p'}(N^dagger(dual_p(N(X))))``.  Every
    reported value is an exactly evaluated ratio, so it is a lower bound
    whether or not the iteration converges.
    """
    if trials < 1 or iters < 1:
        raise ValueError("trials and iters must be >= 1")
    rng = np.random.default_rng() if rng is None else rng
    X = _random_starts(rng, nmap.d, trials)
    best, witness = -1.0, X[0]
    q = p / (p - 1)
    for _ in range(iters + 1):
        xn = _schatten(np.linalg.svd(X, compute_uv=False), p)
        Y = _apply_batch(nmap, X)
        G, _, sy = _dual_element(Y, p)
        # ratio of the iterate as it stands, before any rescaling
        ratios = np.where(xn > 0, _schatten(sy, p) / np.where(xn > 0, xn, 1.0), 0.0)
        k = int(np.argmax(ratios))
        if ratios[k] > best:
            best, witness = float(ratios[k]), X[k].copy()
        Z = _adjoint_batch(nmap, G)
        moving = np.linalg.norm(Z, axis=(-2, -1)) > 0
        if not moving.any():
            break
        X = np.where(moving[:, None, None], _dual_element(Z, q)[0], X)
    return best, witness


def norm_lower_bound(nmap: PositiveMapRep, p: float, trials: int = DEFAULT_TRIALS,
                     iters: int = DEFAULT_ITERS, rng: np.random.Generator | None = None) -> float:
    return norm_ascent(nmap, p, trials, iters, rng)[0]


class BoundViolation(AssertionError):
    def __init__(self, nmap: PositiveMapRep, p: float, lower: float, rhs: float, witness: np.ndarray):
        self.counterexample = {
            "map": nmap.to_dict(),
            "p": p,
            "lower_bound": lower,
            "rhs": rhs,
            "witness_re": witness.real.tolist(),
            "witness_im": witness.imag.tolist(),
        }
        super().__init__(f"interpolation bound violated at p={p}: {lower!r} > {rhs!r}")

    def dump(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.counterexample, fh, indent=2)


@dataclass(frozen=True)
class PEntry:
    p: float
    lower: float
    rhs: float

    @property
    def slack(self) -> float:
        """Relative room ``1 - lower/rhs`` (0 when the bound is attained)."""
        return 0.0 if self.rhs == 0 else 1.0 - self.lower / self.rhs


@dataclass(frozen=True)
class BoundReport:
    d: int
    pre_transpose: bool
    entries: tuple[PEntry, ...] = field(default_factory=tuple)

    @property
    def min_slack(self) -> float:
        return min(e.slack for e in self.entries)

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "pre_transpose": self.pre_transpose,
            "entries": [
                {"p": e.p, "lower": e.lower, "rhs": e.rhs, "slack": e.slack} for e in self.entries
            ],
        }


def verify_bound(nmap: PositiveMapRep, p_grid=DEFAULT_P_GRID, trials: int = DEFAULT_TRIALS,
                 iters: int = DEFAULT_ITERS, rng: np.random.Generator | None = None) -> BoundReport:
    """Probe every ``p`` in the grid; raise :class:`BoundViolation` on any excess."""
    rng = np.random.default_rng() if rng is None else rng
    entries = []
    for p in p_grid:
        lower, witness = norm_ascent(nmap, p, trials, iters, rng)
        rhs = bound_rhs(nmap, p)
        if lower > rhs * (1 + VIOLATION_RTOL) + 1e-300:
            raise BoundViolation(nmap, p, lower, rhs, witness)
        entries.append(PEntry(float(p), lower, rhs))
    return BoundReport(nmap.d, nmap.pre_transpose, tuple(entries))


# ---------------------------------------------------------------------- generators


def random_positive_map(rng: np.random.Generator, d: int, copositive: bool = False) -> PositiveMapRep:
    """Between 1 and d^2 Kraus operators with standard complex Gaussian entries."""
    k = int(rng.integers(1, d * d + 1))
    A = (rng.standard_normal((k, d, d)) + 1j * rng.standard_normal((k, d, d))) / math.sqrt(2)
    return PositiveMapRep(A, copositive)


def normalize_unital(nmap: PositiveMapRep) -> PositiveMapRep:
    """Rescale Kraus operators by ``N(1)^(-1/2)`` so that ``N(1) = 1``."""
    w, U = np.linalg.eigh(apply(nmap, np.eye(nmap.d)))
    inv_sqrt = (U / np.sqrt(w)) @ U.conj().T
    return PositiveMapRep(inv_sqrt @ nmap.kraus, nmap.pre_transpose)


def random_mixed_unitary(rng: np.random.Generator, d: int, k: int, copositive: bool = False) -> PositiveMapRep:
    """Random mixture of ``k`` Haar unitaries: unital and trace preserving."""
    weights = rng.dirichlet(np.ones(k))
    ops = []
    for w in weights:
        Z = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
        Q, R = np.linalg.qr(Z)
        Q = Q * (np.diagonal(R) / np.abs(np.diagonal(R)))
        ops.append(math.sqrt(w) * Q)
    return PositiveMapRep(np.array(ops), copositive)


def map_rng(seed: int, index: int) -> np.random.Generator:
    """Per-map generator derived from a root seed, independent of scheduling."""
    return np.random.default_rng([seed, index])


@dataclass
class SuiteResult:
    reports: list[BoundReport]
    violations: list[BoundViolation]

    def to_dict(self) -> dict:
        slacks = [r.min_slack for r in self.reports]
        return {
            "n_maps": len(self.reports) + len(self.violations),
            "violations": len(self.violations),
            "min_slack": min(slacks) if slacks else None,
            "maps": [r.to_dict() for r in self.reports],
            "counterexamples": [v.counterexample for v in self.violations],
        }


def run_suite(seed: int, n_maps: int, d_max: int = 8, p_grid=DEFAULT_P_GRID,
              families=("cp", "copositive"), trials: int = DEFAULT_TRIALS,
              iters: int = DEFAULT_ITERS, workers: int = 1) -> SuiteResult:
    """Generate ``n_maps`` random maps per family and verify each one."""
    jobs = [(fam, i) for fam in families for i in range(n_maps)]

    def one(job):
        fam, i = job
        rng = map_rng(seed, i if fam == "cp" else n_maps + i)
        d = int(rng.integers(2, d_max + 1)) if d_max >= 2 else 1
        nmap = random_positive_map(rng, d, copositive=(fam == "copositive"))
        try:
            return verify_bound(nmap, p_grid, trials, iters, rng)
        except BoundViolation as exc:
            return exc

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, jobs))
    else:
        results = [one(j) for j in jobs]
    reports = [r for r in results if isinstance(r, BoundReport)]
    violations = [r for r in results if isinstance(r, BoundViolation)]
    return SuiteResult(reports, violations)
