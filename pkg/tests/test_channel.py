import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gchan.channel import (
    ChannelParams,
    ChannelSpecError,
    InvalidStateError,
    NotCompletelyPositiveError,
    amplifier,
    attenuator,
    cp_check,
    cp_matrices,
    entropy_gain_bound,
    from_spec,
    load_channel,
    schatten_norm_analytic,
    tensor,
    to_spec,
    transform_sigma,
)
from gchan.matcore import is_psd

from conftest import random_cp_params


def test_cp_identity():
    assert cp_check(ChannelParams.identity()).is_cp


def test_cp_quantum_limited_boundary():
    report = cp_check(ChannelParams.single_mode(0.8, 0.18))
    assert report.is_cp
    # 0.18 - (1 - 0.64)/2 = 0
    assert report.min_eig_first == pytest.approx(0, abs=1e-15)


def test_cp_violation():
    report = cp_check(ChannelParams.single_mode(0.8, 0.10))
    assert not report.is_cp
    assert report.min_eig_first == pytest.approx(0.10 - 0.18, abs=1e-15)


def test_dimension_mismatch():
    with pytest.raises(ChannelSpecError):
        ChannelParams(np.eye(2), np.zeros((1, 1)))


def test_cp_report_depends_only_on_cp_matrices(rng):
    # K and U K share K*K; reports must coincide
    for _ in range(20):
        params = random_cp_params(rng, 3)
        Q, _ = np.linalg.qr(rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3)))
        other = ChannelParams(Q @ params.K, params.mu)
        a, b = cp_matrices(params), cp_matrices(other)
        np.testing.assert_allclose(a[0], b[0], atol=1e-13)
        ra, rb = cp_check(params), cp_check(other)
        assert ra.is_cp == rb.is_cp
        assert ra.min_eig_first == pytest.approx(rb.min_eig_first, abs=1e-12)
        assert ra.min_eig_second == pytest.approx(rb.min_eig_second, abs=1e-12)


@pytest.mark.parametrize("s", [1, 2, 4])
def test_norm_identity(s):
    assert schatten_norm_analytic(ChannelParams.identity(s), 3) == pytest.approx(1, rel=1e-15)


def test_norm_attenuator():
    assert schatten_norm_analytic(ChannelParams.single_mode(0.8, 0.18), 2) == pytest.approx(1.25, rel=1e-14)


def test_norm_two_mode_diag():
    params = ChannelParams(np.diag([0.8, math.sqrt(2)]), np.diag([0.18, 0.5]))
    assert schatten_norm_analytic(params, 2) == pytest.approx(1.28 ** -0.5, rel=1e-14)


def test_norm_singular_is_unbounded():
    params = ChannelParams(np.diag([1.0, 0.0]), np.diag([0.0, 0.5]))
    assert schatten_norm_analytic(params, 2) == math.inf
    assert entropy_gain_bound(params) == -math.inf


def test_norm_p_one_is_trace_preservation():
    assert schatten_norm_analytic(attenuator(0.3), 1) == 1.0


@pytest.mark.parametrize("p", [0.5, 1 - 1e-9, 1 + 1e-9])
def test_norm_rejects_bad_p(p):
    with pytest.raises(ValueError):
        schatten_norm_analytic(attenuator(0.5), p)


def test_norm_rejects_non_cp():
    with pytest.raises(NotCompletelyPositiveError):
        schatten_norm_analytic(ChannelParams.single_mode(0.8, 0.1), 2)


def test_norm_phase_invariant():
    a = ChannelParams.single_mode(0.8, 0.18)
    b = ChannelParams.single_mode(0.8 * np.exp(0.7j), 0.18)
    assert schatten_norm_analytic(a, 2.5) == pytest.approx(schatten_norm_analytic(b, 2.5), rel=1e-15)


def test_norm_on_p_grid_matches_scalar_evaluation(rng):
    for _ in range(20):
        params = random_cp_params(rng, 3, K_scale=1.5)
        det = float(np.linalg.det(params.K.conj().T @ params.K).real)
        for p in np.linspace(1.01, 20, 25):
            assert schatten_norm_analytic(params, p) == pytest.approx(det ** (-(p - 1) / p), rel=1e-10)


def test_norm_monotone_in_p():
    ps = np.linspace(1.05, 30, 40)
    up = [schatten_norm_analytic(attenuator(0.5), p) for p in ps]
    down = [schatten_norm_analytic(amplifier(3.0), p) for p in ps]
    assert np.all(np.diff(up) > 0)
    assert np.all(np.diff(down) < 0)


def test_transform_identity(rng):
    Sigma = np.array([[2.0, 0.3 + 0.1j], [0.3 - 0.1j, 1.0]])
    np.testing.assert_allclose(transform_sigma(ChannelParams.identity(2), Sigma), Sigma)


def test_transform_attenuator():
    # quantum-limited attenuator sends E to eta E: 0.64 * 1.5 + 0.18 = 1.14
    out = transform_sigma(ChannelParams.single_mode(0.8, 0.18), [[1.5]])
    assert out[0, 0].real == pytest.approx(1.14, rel=1e-14)


def test_transform_amplifier():
    # G E + G - 1 with G = 2, E = 1 gives 3, i.e. Sigma' = 3.5
    out = transform_sigma(amplifier(2.0), [[1.5]])
    assert out[0, 0].real == pytest.approx(3.5, rel=1e-14)


def test_transform_rejects_invalid_state():
    with pytest.raises(InvalidStateError):
        transform_sigma(attenuator(0.5), [[0.3]])


def _random_state_sigma(rng, s):
    B = rng.standard_normal((s, s)) + 1j * rng.standard_normal((s, s))
    return 0.5 * np.eye(s) + B @ B.conj().T * rng.uniform(0, 3)


def test_transform_maps_states_to_states(rng):
    for _ in range(200):
        s = int(rng.integers(1, 5))
        params = random_cp_params(rng, s, excess_scale=rng.choice([0.0, 0.5]))
        out = transform_sigma(params, _random_state_sigma(rng, s))
        assert is_psd(out - 0.5 * np.eye(s))


def test_transform_monotone(rng):
    for _ in range(200):
        s = int(rng.integers(1, 5))
        params = random_cp_params(rng, s)
        S2 = _random_state_sigma(rng, s)
        B = rng.standard_normal((s, s)) + 1j * rng.standard_normal((s, s))
        S1 = S2 + B @ B.conj().T
        diff = transform_sigma(params, S1) - transform_sigma(params, S2)
        assert is_psd(diff)


def test_tensor_examples():
    t = tensor(ChannelParams.identity(), ChannelParams.identity())
    assert t.s == 2
    assert schatten_norm_analytic(t, 2) == pytest.approx(1, rel=1e-15)
    a, b = ChannelParams.single_mode(0.8, 0.18), amplifier(2.0)
    ab, ba = tensor(a, b), tensor(b, a)
    assert schatten_norm_analytic(ab, 2) == pytest.approx(1.25 * 2 ** -0.5, rel=1e-14)
    assert schatten_norm_analytic(ab, 2) == pytest.approx(0.883883476, rel=1e-9)
    assert schatten_norm_analytic(ab, 3.3) == pytest.approx(schatten_norm_analytic(ba, 3.3), rel=1e-14)


@settings(max_examples=60, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    sa=st.integers(1, 3),
    sb=st.integers(1, 3),
    p=st.floats(1.01, 50),
)
def test_tensor_multiplicative(seed, sa, sb, p):
    rng = np.random.default_rng(seed)
    a, b = random_cp_params(rng, sa, K_scale=1.3), random_cp_params(rng, sb, K_scale=1.3)
    t = tensor(a, b)
    assert cp_check(t).is_cp
    expected = schatten_norm_analytic(a, p) * schatten_norm_analytic(b, p)
    assert schatten_norm_analytic(t, p) == pytest.approx(expected, rel=1e-12)


def test_entropy_gain_bound_examples():
    assert entropy_gain_bound(ChannelParams.identity()) == 0
    assert entropy_gain_bound(ChannelParams.single_mode(0.8, 0.18)) == pytest.approx(math.log(0.64), rel=1e-14)
    params = ChannelParams(np.diag([0.8, math.sqrt(2)]), np.diag([0.18, 0.5]))
    assert entropy_gain_bound(params) == pytest.approx(math.log(1.28), rel=1e-13)
    assert entropy_gain_bound(params) == pytest.approx(0.246860, abs=1e-6)


def test_spec_roundtrip_and_parsing(tmp_path):
    doc = {"s": 2, "K": [[[0.8, 0.1], 0], [0, 1.2]], "mu": [[0.4, 0], [0, 0.3]]}
    params = from_spec(doc)
    assert params.K[0, 0] == 0.8 + 0.1j
    again = from_spec(json.loads(json.dumps(to_spec(params))))
    np.testing.assert_array_equal(again.K, params.K)
    np.testing.assert_array_equal(again.mu, params.mu)
    path = tmp_path / "c.json"
    path.write_text(json.dumps(doc))
    np.testing.assert_array_equal(load_channel(path).K, params.K)


@pytest.mark.parametrize(
    "doc",
    [
        [],
        {"s": 1, "K": [[1]]},
        {"s": 0, "K": [[1]], "mu": [[0]]},
        {"s": 1, "K": [[1, 2]], "mu": [[0]]},
        {"s": 1, "K": [["x"]], "mu": [[0]]},
        {"s": 1, "K": [[1]], "mu": [[[0, 1]]]},
        {"s": 2, "K": [[1, 0], [0]], "mu": [[0, 0], [0, 0]]},
    ],
)
def test_spec_rejects_malformed(doc):
    with pytest.raises(ChannelSpecError):
        from_spec(doc)


def test_load_missing_file(tmp_path):
    with pytest.raises(ChannelSpecError):
        load_channel(tmp_path / "nope.json")
