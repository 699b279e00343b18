"""Truncated Fock-space oracle for single-mode and product Gaussian channels.

Everything here is computed from explicit Kraus operators in the number
basis, never from the closed forms in :mod:`gchan.thermal`, so the two can be
compared.  A general single-mode channel is realized as a quantum-limited
amplifier after a quantum-limited attenuator; multi-mode channels are tensor
products of those.

Operators on several modes use C-order (row-major) multi-indices, matching
``numpy.kron``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.special import gammaln
from scipy.stats import nbinom

from .channel import ChannelParams, cp_check
from .matcore import PSD_RTOL

THERMAL_TAIL = 1e-12
KRAUS_TAIL = 1e-12


# ----------------------------------------------------------------------------- states


@dataclass(frozen=True, eq=False)
class FockOperator:
    """Operator on a truncated multi-mode Fock space.

    ``data`` is either the full square matrix or, for operators diagonal in
    the number basis, just the 1-D diagonal.
    """

    mode_cutoffs: tuple[int, ...]
    data: np.ndarray

    def __post_init__(self):
        cutoffs = tuple(int(c) for c in self.mode_cutoffs)
        if not cutoffs or min(cutoffs) < 1:
            raise ValueError(f"cutoffs must be positive, got {cutoffs}")
        data = np.asarray(self.data)
        dim = math.prod(cutoffs)
        if data.ndim == 1:
            ok = data.shape == (dim,)
        else:
            ok = data.shape == (dim, dim)
        if not ok:
            raise ValueError(f"data shape {data.shape} does not match cutoffs {cutoffs}")
        object.__setattr__(self, "mode_cutoffs", cutoffs)
        object.__setattr__(self, "data", data)

    @property
    def dim(self) -> int:
        return math.prod(self.mode_cutoffs)

    @property
    def is_diagonal(self) -> bool:
        return self.data.ndim == 1

    @property
    def matrix(self) -> np.ndarray:
        return np.diag(self.data) if self.is_diagonal else self.data

    def diagonal(self) -> np.ndarray:
        return self.data if self.is_diagonal else np.diagonal(self.data)

    def trace(self) -> complex:
        return complex(np.sum(self.diagonal()))

    def check_state(self, tol: float = 1e-10) -> None:
        """Raise ``ValueError`` unless Hermitian, PSD, with trace in (0, 1]."""
        if self.is_diagonal:
            w = self.data
            if np.any(np.abs(np.imag(w)) > tol):
                raise ValueError("diagonal state has complex entries")
            w = np.real(w)
        else:
            M = self.data
            if np.linalg.norm(M - M.conj().T) > tol * max(1.0, np.linalg.norm(M)):
                raise ValueError("state is not Hermitian")
            w = np.linalg.eigvalsh(0.5 * (M + M.conj().T))
        if w.min() < -tol:
            raise ValueError(f"state has negative eigenvalue {w.min():.3e}")
        tr = float(np.sum(w))
        if not 0 < tr <= 1 + tol:
            raise ValueError(f"state trace {tr!r} outside (0, 1]")


def kron(a: FockOperator, b: FockOperator) -> FockOperator:
    """Tensor product, staying diagonal when both factors are."""
    if a.is_diagonal and b.is_diagonal:
        data = np.kron(a.data, b.data)
    else:
        data = np.kron(a.matrix, b.matrix)
    return FockOperator(a.mode_cutoffs + b.mode_cutoffs, data)


def thermal_cutoff(E: float, tail: float = THERMAL_TAIL) -> int:
    """Smallest convenient cutoff with ``(E/(E+1))**N < tail``.

    For the default tail this is ``ceil(28 (E+1))``, since
    ``(E/(E+1))**N <= exp(-N/(E+1))``.
    """
    if E == 0:
        return 1
    if tail == THERMAL_TAIL:
        return math.ceil(28 * (E + 1))
    return math.ceil(math.log(tail) / math.log(E / (E + 1))) + 1


def thermal_matrix(E: float, cutoff: int) -> FockOperator:
    """Truncated thermal state: diagonal ``(1/(E+1)) (E/(E+1))**n``, ``n < cutoff``."""
    if E < 0:
        raise ValueError(f"E must be nonnegative, got {E}")
    n = np.arange(cutoff)
    if E == 0:
        diag = (n == 0).astype(float)
    else:
        diag = np.exp(-math.log1p(E) - n * math.log1p(1.0 / E))
    return FockOperator((cutoff,), diag)


def thermal_tail(E: float, cutoff: int) -> float:
    """Trace mass lost by truncating ``omega_E`` at ``cutoff`` levels."""
    return 0.0 if E == 0 else (E / (E + 1)) ** cutoff


# --------------------------------------------------------------------------- channels


def _pairwise_sum(terms: Iterable[np.ndarray]):
    """Deterministic pairwise-tree reduction with O(log n) live partial sums."""
    stack: list[tuple[int, np.ndarray]] = []
    for term in terms:
        level, acc = 0, term
        while stack and stack[-1][0] == level:
            _, prev = stack.pop()
            acc = prev + acc
            level += 1
        stack.append((level, acc))
    if not stack:
        return None
    total = stack.pop()[1]
    while stack:
        total = stack.pop()[1] + total
    return total


class FockChannel:
    """Common interface of Kraus leaves, compositions and tensor products.

    ``apply_blocks`` acts on arrays of shape ``(d_in, d_in, r)`` (a batch of
    ``r`` operators stacked on the last axis); ``apply_diag`` acts on
    ``(d_in, r)`` batches of diagonals and is valid only when
    ``preserves_diagonal`` holds.
    """

    cutoffs_in: tuple[int, ...]
    cutoffs_out: tuple[int, ...]

    @property
    def dim_in(self) -> int:
        return math.prod(self.cutoffs_in)

    @property
    def dim_out(self) -> int:
        return math.prod(self.cutoffs_out)

    @property
    def tail(self) -> float:
        """Upper bound on the trace lost per unit input trace."""
        raise NotImplementedError

    @property
    def preserves_diagonal(self) -> bool:
        raise NotImplementedError

    @property
    def kraus_ops(self) -> tuple[sp.csr_array, ...]:
        raise NotImplementedError

    def apply_blocks(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def apply_diag(self, P: np.ndarray) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class KrausChannel(FockChannel):
    """Explicit Kraus family ``rho -> sum_l A_l rho A_l^dagger``."""

    cutoffs_in: tuple[int, ...]
    cutoffs_out: tuple[int, ...]
    ops: tuple[sp.csr_array, ...]
    reported_tail: float = 0.0
    level_tails: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "cutoffs_in", tuple(self.cutoffs_in))
        object.__setattr__(self, "cutoffs_out", tuple(self.cutoffs_out))
        ops = tuple(
            A if isinstance(A, sp.csr_array) and A.dtype == complex else sp.csr_array(A, dtype=complex)
            for A in self.ops
        )
        for A in ops:
            if A.shape != (self.dim_out, self.dim_in):
                raise ValueError(f"Kraus operator shape {A.shape} != {(self.dim_out, self.dim_in)}")
        object.__setattr__(self, "ops", ops)

    @property
    def kraus_ops(self):
        return self.ops

    @property
    def tail(self) -> float:
        return self.reported_tail

    @cached_property
    def preserves_diagonal(self) -> bool:
        # every Kraus operator maps number states to multiples of number states
        return all(np.all(np.diff(A.tocsc().indptr) <= 1) for A in self.ops)

    @cached_property
    def transition(self) -> sp.csr_array:
        """``T[m, n] = sum_l |<m|A_l|n>|^2``."""
        coo = [A.tocoo() for A in self.ops]
        vals = np.concatenate([np.abs(c.data) ** 2 for c in coo]) if coo else np.zeros(0)
        rows = np.concatenate([c.row for c in coo]) if coo else np.zeros(0, int)
        cols = np.concatenate([c.col for c in coo]) if coo else np.zeros(0, int)
        # duplicates are summed on conversion
        return sp.coo_array((vals, (rows, cols)), shape=(self.dim_out, self.dim_in)).tocsr()

    def apply_blocks(self, X):
        d_in, _, r = X.shape
        flat = X.reshape(d_in, d_in * r)

        def term(A):
            Y = (A @ flat).reshape(self.dim_out, d_in, r)
            Z = Y.transpose(1, 0, 2).reshape(d_in, self.dim_out * r)
            W = (A.conj() @ Z).reshape(self.dim_out, self.dim_out, r)
            return W.transpose(1, 0, 2)

        out = _pairwise_sum(term(A) for A in self.ops)
        return out if out is not None else np.zeros((self.dim_out, self.dim_out, r), complex)

    def apply_diag(self, P):
        return self.transition @ P

    def completeness_defect(self) -> np.ndarray:
        """Dense ``sum_l A_l^dagger A_l - I`` on the input space."""
        S = _pairwise_sum((A.conj().T @ A) for A in self.ops)
        return S.toarray() - np.eye(self.dim_in)


@dataclass(frozen=True, eq=False)
class ComposedChannel(FockChannel):
    """``outer o inner``."""

    outer: FockChannel
    inner: FockChannel

    def __post_init__(self):
        if self.outer.cutoffs_in != self.inner.cutoffs_out:
            raise ValueError(
                f"cannot compose: inner outputs {self.inner.cutoffs_out}, "
                f"outer expects {self.outer.cutoffs_in}"
            )

    @property
    def cutoffs_in(self):
        return self.inner.cutoffs_in

    @property
    def cutoffs_out(self):
        return self.outer.cutoffs_out

    @property
    def tail(self):
        return self.outer.tail + self.inner.tail

    @property
    def preserves_diagonal(self):
        return self.outer.preserves_diagonal and self.inner.preserves_diagonal

    @cached_property
    def kraus_ops(self):
        return tuple(sp.csr_array(B @ A) for B in self.outer.kraus_ops for A in self.inner.kraus_ops)

    def apply_blocks(self, X):
        return self.outer.apply_blocks(self.inner.apply_blocks(X))

    def apply_diag(self, P):
        return self.outer.apply_diag(self.inner.apply_diag(P))


def _move_factor_first(X, da, db, r, *, diag: bool):
    if diag:
        return X.reshape(da, db, r).transpose(1, 0, 2).reshape(db, da * r)
    Y = X.reshape(da, db, da, db, r).transpose(1, 3, 0, 2, 4)
    return Y.reshape(db, db, da * da * r)


@dataclass(frozen=True, eq=False)
class TensorChannel(FockChannel):
    """``a (x) b`` acting on the C-order product of their mode spaces."""

    a: FockChannel
    b: FockChannel

    @property
    def cutoffs_in(self):
        return self.a.cutoffs_in + self.b.cutoffs_in

    @property
    def cutoffs_out(self):
        return self.a.cutoffs_out + self.b.cutoffs_out

    @property
    def tail(self):
        return self.a.tail + self.b.tail

    @property
    def preserves_diagonal(self):
        return self.a.preserves_diagonal and self.b.preserves_diagonal

    @cached_property
    def kraus_ops(self):
        return tuple(sp.csr_array(sp.kron(A, B)) for A in self.a.kraus_ops for B in self.b.kraus_ops)

    def apply_blocks(self, X):
        da, db = self.a.dim_in, self.b.dim_in
        ea, eb = self.a.dim_out, self.b.dim_out
        r = X.shape[2]
        # act with a on (i, k) of X[(i j), (k l), r]
        Y = X.reshape(da, db, da, db, r).transpose(0, 2, 1, 3, 4).reshape(da, da, db * db * r)
        Y = self.a.apply_blocks(Y).reshape(ea, ea, db, db, r)
        # act with b on (j, l)
        Y = Y.transpose(2, 3, 0, 1, 4).reshape(db, db, ea * ea * r)
        Y = self.b.apply_blocks(Y).reshape(eb, eb, ea, ea, r)
        return Y.transpose(2, 0, 3, 1, 4).reshape(ea * eb, ea * eb, r)

    def apply_diag(self, P):
        da, db = self.a.dim_in, self.b.dim_in
        ea, eb = self.a.dim_out, self.b.dim_out
        r = P.shape[1]
        Y = self.a.apply_diag(P.reshape(da, db * r)).reshape(ea, db, r)
        Y = Y.transpose(1, 0, 2).reshape(db, ea * r)
        Y = self.b.apply_diag(Y).reshape(eb, ea, r)
        return Y.transpose(1, 0, 2).reshape(ea * eb, r)


def _shift_op(vals: np.ndarray, rows: np.ndarray, cols: np.ndarray, shape) -> sp.csr_array:
    """CSR matrix with one entry per row, ``rows`` strictly increasing."""
    indptr = np.zeros(shape[0] + 1, dtype=np.int64)
    indptr[rows + 1] = 1
    return sp.csr_array((vals.astype(complex), cols.astype(np.int64), np.cumsum(indptr)), shape=shape)


def identity_channel(cutoff: int) -> KrausChannel:
    return KrausChannel((cutoff,), (cutoff,), (sp.eye_array(cutoff, format="csr"),))


def attenuator_kraus(eta: float, cutoff: int) -> KrausChannel:
    """Quantum-limited attenuator, ``<n-l|A_l|n> = sqrt(C(n,l) (1-eta)^l eta^(n-l))``.

    The family is exactly trace preserving on the truncated space.
    """
    if not 0 < eta <= 1:
        raise ValueError(f"eta must lie in (0, 1], got {eta}")
    if eta == 1:
        return identity_channel(cutoff)
    ops = []
    log_eta, log_loss = math.log(eta), math.log1p(-eta)
    for l in range(cutoff):
        n = np.arange(l, cutoff)
        logc = gammaln(n + 1) - gammaln(l + 1) - gammaln(n - l + 1)
        vals = np.exp(0.5 * (logc + l * log_loss + (n - l) * log_eta))
        ops.append(_shift_op(vals, n - l, n, (cutoff, cutoff)))
    return KrausChannel((cutoff,), (cutoff,), tuple(ops))


def amplifier_tail(G: float, n: int | np.ndarray, l_max: int):
    """Weight of the Kraus terms ``l > l_max`` on input level ``n``."""
    if G == 1:
        return np.zeros_like(np.asarray(n, float))
    return nbinom.sf(l_max, np.asarray(n) + 1, 1.0 / G)


def amplifier_cutoff_out(G: float, cutoff_in: int, tail: float = KRAUS_TAIL) -> int:
    """Output cutoff whose Kraus range keeps the worst input level's tail below ``tail``."""
    if G == 1:
        return cutoff_in
    l_max = int(nbinom.isf(tail, cutoff_in, 1.0 / G))
    while amplifier_tail(G, cutoff_in - 1, l_max) >= tail:
        l_max += 1
    return cutoff_in + l_max


def amplifier_kraus(G: float, cutoff_in: int, cutoff_out: int | None = None) -> KrausChannel:
    """Quantum-limited amplifier, ``<n+l|B_l|n> = sqrt(C(n+l,l)) G^(-(n+1)/2) (1-1/G)^(l/2)``.

    Kraus indices run over ``l = 0 .. cutoff_out - cutoff_in``; the discarded
    weight for each input level is recorded in ``level_tails``.
    """
    if G < 1:
        raise ValueError(f"gain must be >= 1, got {G}")
    if cutoff_out is None:
        cutoff_out = amplifier_cutoff_out(G, cutoff_in)
    if cutoff_out < cutoff_in:
        raise ValueError("cutoff_out must be at least cutoff_in")
    l_max = cutoff_out - cutoff_in
    n = np.arange(cutoff_in)
    if G == 1:
        embed = sp.csr_array((np.ones(cutoff_in), (n, n)), shape=(cutoff_out, cutoff_in))
        return KrausChannel((cutoff_in,), (cutoff_out,), (embed,), 0.0, np.zeros(cutoff_in))
    log_g, log_gain = math.log(G), math.log1p(-1.0 / G)
    ops = []
    for l in range(l_max + 1):
        logc = gammaln(n + l + 1) - gammaln(l + 1) - gammaln(n + 1)
        vals = np.exp(0.5 * (logc - (n + 1) * log_g + l * log_gain))
        ops.append(_shift_op(vals, n + l, n, (cutoff_out, cutoff_in)))
    tails = amplifier_tail(G, n, l_max)
    return KrausChannel((cutoff_in,), (cutoff_out,), tuple(ops), float(tails.max()), tails)


def single_mode_decompose(K_abs2: float, mu: float) -> tuple[float, float]:
    """Split a single-mode channel into ``amplifier(G) o attenuator(eta)``.

    ``G = (|K|^2 + 2 mu + 1)/2`` and ``eta = |K|^2 / G``; the composition has
    the same ``(|K|^2, mu)`` and hence is the same channel up to a phase.
    """
    if K_abs2 <= 0:
        raise ValueError(f"|K|^2 must be positive, got {K_abs2}")
    report = cp_check(ChannelParams.single_mode(math.sqrt(K_abs2), mu))
    if not report.is_cp:
        raise ValueError(f"(|K|^2={K_abs2}, mu={mu}) is not completely positive: {report}")
    G = (K_abs2 + 2 * mu + 1) / 2
    eta = K_abs2 / G
    tol = 1e-12 * max(1.0, K_abs2)
    if abs(G - 1) <= tol or G < 1:
        G = 1.0
    if abs(eta - 1) <= tol or eta > 1:
        eta = 1.0
    assert 0 < eta <= 1 and G >= 1
    return eta, G


def single_mode_channel(K_abs2: float, mu: float, cutoff_in: int, cutoff_out: int | None = None) -> FockChannel:
    eta, G = single_mode_decompose(K_abs2, mu)
    att = attenuator_kraus(eta, cutoff_in)
    if G == 1:
        return att
    return ComposedChannel(amplifier_kraus(G, cutoff_in, cutoff_out), att)


def tensor_channel(a: FockChannel, b: FockChannel) -> TensorChannel:
    return TensorChannel(a, b)


def channel_from_params(params: ChannelParams, cutoffs: Sequence[int]) -> FockChannel:
    """Oracle channel for parameters that are a product of single modes.

    ``K`` and ``mu`` must both be diagonal; phases of ``K`` are dropped.
    """
    K, mu = params.K, params.mu
    off = lambda M: np.linalg.norm(M - np.diag(np.diagonal(M)))
    if off(K) > 0 or off(mu) > 0:
        raise ValueError("oracle needs diagonal K and mu (a tensor product of single modes)")
    if len(cutoffs) != params.s:
        raise ValueError(f"need {params.s} cutoffs, got {len(cutoffs)}")
    chans = [
        single_mode_channel(float(abs(K[j, j]) ** 2), float(mu[j, j].real), int(cutoffs[j]))
        for j in range(params.s)
    ]
    out = chans[0]
    for ch in chans[1:]:
        out = TensorChannel(out, ch)
    return out


def apply_channel(ch: FockChannel, rho: FockOperator) -> FockOperator:
    """``sum_l A_l rho A_l^dagger``; diagonal inputs take the probability-vector path."""
    if rho.mode_cutoffs != ch.cutoffs_in:
        raise ValueError(f"state cutoffs {rho.mode_cutoffs} != channel input {ch.cutoffs_in}")
    if rho.is_diagonal and ch.preserves_diagonal:
        out = ch.apply_diag(rho.data.reshape(-1, 1))[:, 0]
        return FockOperator(ch.cutoffs_out, np.asarray(out))
    out = ch.apply_blocks(rho.matrix.astype(complex).reshape(rho.dim, rho.dim, 1))[:, :, 0]
    return FockOperator(ch.cutoffs_out, out)


def phi_of_identity_diag(eta: float, cutoff: int) -> np.ndarray:
    """Diagonal of the attenuator applied to the truncated identity."""
    ch = attenuator_kraus(eta, cutoff)
    return np.asarray(ch.apply_diag(np.ones((cutoff, 1))))[:, 0]


# ----------------------------------------------------------------------- functionals


def _spectrum(rho: FockOperator) -> np.ndarray:
    if rho.is_diagonal:
        return np.abs(rho.data)
    M = rho.data
    if np.allclose(M, M.conj().T, rtol=0, atol=1e-14 * max(1.0, np.abs(M).max())):
        return np.abs(np.linalg.eigvalsh(0.5 * (M + M.conj().T)))
    return np.linalg.svd(M, compute_uv=False)


def schatten_norm_numeric(rho: FockOperator, p: float) -> float:
    """``(sum_i sigma_i^p)^(1/p)`` over the singular values of ``rho``."""
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    sv = _spectrum(rho)
    top = float(sv.max()) if sv.size else 0.0
    if top == 0:
        return 0.0
    if math.isinf(p):
        return top
    return top * float(np.sum((sv / top) ** p)) ** (1.0 / p)


def entropy_numeric(rho: FockOperator) -> float:
    """von Neumann entropy ``-sum lambda ln lambda`` in nats."""
    if rho.is_diagonal:
        w = np.real(rho.data)
    else:
        M = rho.data
        w = np.linalg.eigvalsh(0.5 * (M + M.conj().T))
    if w.size and w.min() < -PSD_RTOL:
        raise ValueError(f"negative eigenvalue {w.min():.3e} in entropy argument")
    w = w[w > 0]
    return float(-np.sum(w * np.log(w)))


def oracle_output(params: ChannelParams, E: float, cutoff: int | None = None) -> tuple[FockOperator, FockOperator, float]:
    """Truncated input ``omega_E^{(x)s}``, its numerical image, and the error budget.

    The budget adds the input truncation tail and the channel's Kraus tail.
    """
    N = cutoff or thermal_cutoff(E)
    ch = channel_from_params(params, [N] * params.s)
    state = thermal_matrix(E, N)
    for _ in range(params.s - 1):
        state = kron(state, thermal_matrix(E, N))
    budget = params.s * thermal_tail(E, N) + ch.tail
    return state, apply_channel(ch, state), budget


def oracle_norm_ratio(params: ChannelParams, E: float, p: float, cutoff: int | None = None) -> tuple[float, float]:
    """Numerical ``||Phi(omega_E^{(x)s})||_p / ||omega_E^{(x)s}||_p`` and its error budget."""
    state, out, budget = oracle_output(params, E, cutoff)
    return schatten_norm_numeric(out, p) / schatten_norm_numeric(state, p), budget


def oracle_output_norm(params: ChannelParams, E: float, p: float, cutoff: int | None = None) -> tuple[float, float]:
    """Numerical ``||Phi(omega_E^{(x)s})||_p`` and its error budget."""
    _, out, budget = oracle_output(params, E, cutoff)
    return schatten_norm_numeric(out, p), budget
