"""Closed forms for thermal product states and their images under a channel.

``omega_E`` is the single-mode thermal state with mean photon number ``E``.
A channel maps ``omega_E^{(x)s}`` to a state unitarily equivalent to
``omega_{e_1} (x) ... (x) omega_{e_s}`` where ``e_j`` are the eigenvalues of
``(E + 1/2) K*K + mu - 1/2``.  All entropies are in nats.
"""
from __future__ import annotations

import math

import numpy as np

from .channel import ChannelParams, entropy_gain_bound, require_cp, schatten_norm_analytic
from .matcore import det_psd, eig_hermitian, psd_power

DEFAULT_P_GRID = (1.1, 1.5, 2.0, 3.0, 5.0, 10.0)
SPECTRUM_CLAMP = 1e-10
DUAL_PATH_RTOL = 1e-10


def log_gap(E: float, p: float) -> float:
    """``ln((E+1)**p - E**p)``, evaluated without overflow or cancellation.

    Uses ``p ln(E+1) + ln(1 - (E/(E+1))**p)`` with ``log1p``/``expm1``.
    """
    if E < 0:
        raise ValueError(f"E must be nonnegative, got {E}")
    if E == 0:
        return 0.0
    return p * math.log1p(E) + math.log(-math.expm1(-p * math.log1p(1.0 / E)))


def thermal_schatten_norm(E: float, p: float, s: int = 1) -> float:
    """``||omega_E^{(x)s}||_p = ((E+1)^p - E^p)^(-s/p)``."""
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    return math.exp(-s * log_gap(E, p) / p)


def output_spectrum(params: ChannelParams, E: float) -> np.ndarray:
    """Thermal parameters ``e_j`` of the output for input ``omega_E^{(x)s}``, ascending."""
    require_cp(params)
    if E < 0:
        raise ValueError(f"E must be nonnegative, got {E}")
    M = (E + 0.5) * params.gram + params.mu - 0.5 * np.eye(params.s)
    e = eig_hermitian(M)[0]
    scale = max(1.0, float(np.abs(e).max()))
    if e[0] < -SPECTRUM_CLAMP * scale:
        raise ArithmeticError(f"negative output occupation {e[0]:.3e} for a CP channel")
    return np.clip(e, 0.0, None)


def output_schatten_norm_spectrum(params: ChannelParams, E: float, p: float) -> float:
    e = output_spectrum(params, E)
    return math.exp(-sum(log_gap(float(x), p) for x in e) / p)


def output_schatten_norm_det(params: ChannelParams, E: float, p: float) -> float:
    """Determinant form ``det(A^p - (A-1)^p)^(-1/p)`` with ``A = (E+1/2)K*K + mu + 1/2``.

    Evaluated as ``det(A)^p det(1 - (1 - A^-1)^p)``: ``A >= 1`` so the powered
    matrix has spectrum in ``[0, 1)`` and no large terms cancel.
    """
    require_cp(params)
    eye = np.eye(params.s)
    A = (E + 0.5) * params.gram + params.mu + 0.5 * eye
    A_inv = np.linalg.inv(A)
    C = eye - 0.5 * (A_inv + A_inv.conj().T)
    D = eye - psd_power(C, p)
    log_det = p * math.log(det_psd(A)) + math.log(det_psd(D))
    return math.exp(-log_det / p)


def output_schatten_norm(params: ChannelParams, E: float, p: float) -> float:
    """``||Phi(omega_E^{(x)s})||_p``, cross-checked between the two closed forms."""
    via_spec = output_schatten_norm_spectrum(params, E, p)
    via_det = output_schatten_norm_det(params, E, p)
    # 1 - (e/(e+1))^p cancels about log10((e+1)/p) digits
    rtol = max(DUAL_PATH_RTOL, 1e-15 * (E + 1) * float(np.linalg.norm(params.gram, 2) + 1))
    if abs(via_det - via_spec) > rtol * via_spec:
        raise AssertionError(f"dual-path mismatch: det {via_det!r} vs spectrum {via_spec!r}")
    return via_spec


def norm_ratio(params: ChannelParams, E: float, p: float) -> float:
    """``||Phi(omega)||_p / ||omega||_p`` for ``omega = omega_E^{(x)s}``.

    A lower bound on the channel's p -> p norm that attains it as E -> inf.
    """
    if p <= 1:
        raise ValueError(f"p must exceed 1, got {p}")
    e = output_spectrum(params, E)
    log_ratio = sum(log_gap(E, p) - log_gap(float(x), p) for x in e) / p
    ratio = math.exp(log_ratio)
    bound = schatten_norm_analytic(params, p)
    assert ratio <= bound * (1 + 1e-10), f"thermal ratio {ratio!r} exceeds norm {bound!r}"
    return ratio


def thermal_entropy(E: float) -> float:
    """von Neumann entropy ``(E+1) ln(E+1) - E ln E`` of ``omega_E``."""
    if E < 0:
        raise ValueError(f"E must be nonnegative, got {E}")
    if E == 0:
        return 0.0
    return math.log1p(E) + E * math.log1p(1.0 / E)


def entropy_gain(params: ChannelParams, E: float) -> float:
    """``S(Phi(omega)) - S(omega)`` for ``omega = omega_E^{(x)s}``."""
    e = output_spectrum(params, E)
    gain = sum(thermal_entropy(float(x)) for x in e) - params.s * thermal_entropy(E)
    bound = entropy_gain_bound(params)
    assert gain >= bound - 1e-9, f"entropy gain {gain!r} below ln det K*K = {bound!r}"
    return gain


def cross_norm_ratio(params: ChannelParams, E: float, p: float, q: float) -> float:
    """``||Phi(omega)||_q / ||omega||_p`` for ``1 <= q < p``; unbounded in E."""
    if not 1 <= q < p:
        raise ValueError(f"need 1 <= q < p, got q={q}, p={p}")
    e = output_spectrum(params, E)
    log_num = -sum(log_gap(float(x), q) for x in e) / q
    log_den = -params.s * log_gap(E, p) / p
    return math.exp(log_num - log_den)


def loglog_slope(x, y) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])
