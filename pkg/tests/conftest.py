import math

import numpy as np
import pytest

from gchan.channel import ChannelParams


def random_cp_params(rng, s, excess_scale=0.5, K_scale=1.0):
    """Random CP-valid (K, mu): mu = |(1 - K*K)/2| + random PSD excess noise."""
    K = K_scale * (rng.standard_normal((s, s)) + 1j * rng.standard_normal((s, s))) / math.sqrt(2 * s)
    D = 0.5 * (np.eye(s) - K.conj().T @ K)
    w, U = np.linalg.eigh(0.5 * (D + D.conj().T))
    absD = (U * np.abs(w)) @ U.conj().T
    B = rng.standard_normal((s, s)) + 1j * rng.standard_normal((s, s))
    P = B @ B.conj().T
    P *= excess_scale * rng.uniform() / max(np.linalg.norm(P, 2), 1e-300)
    return ChannelParams(K, absD + P)


def random_single_mode(rng, K2_range=(0.1, 4.0), excess_max=0.5):
    """Single-mode channel with |K|^2 uniform in ``K2_range`` and bounded excess noise."""
    K2 = rng.uniform(*K2_range)
    mu = abs(1 - K2) / 2 + rng.uniform(0, excess_max)
    phase = np.exp(1j * rng.uniform(0, 2 * np.pi))
    return ChannelParams.single_mode(math.sqrt(K2) * phase, mu)


@pytest.fixture
def rng():
    return np.random.default_rng(20170315)


_ACCEPTANCE_LINES = []


@pytest.fixture
def criterion():
    """Context manager recording one PASS/FAIL line per acceptance criterion."""
    import contextlib
    import time

    @contextlib.contextmanager
    def run(number, title, limit_s):
        detail = {}
        start = time.perf_counter()
        status = "FAIL"
        try:
            yield detail
            elapsed = time.perf_counter() - start
            assert elapsed < limit_s, f"runtime {elapsed:.1f}s exceeds {limit_s}s"
            status = "PASS"
        finally:
            elapsed = time.perf_counter() - start
            info = ", ".join(f"{k}={v}" for k, v in detail.items())
            line = f"[{status}] criterion {number}: {title} ({elapsed:.2f}s; {info})"
            _ACCEPTANCE_LINES.append(line)
            print(line)

    return run


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
