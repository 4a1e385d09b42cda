import numpy as np
import pytest

from shotnoise.qcore import track_eigenframe
from shotnoise.schemes import (
    phase_changing_scheme,
    rap_noise_h1,
    rap_scheme,
    stirap_noise_h1,
    stirap_scheme,
)

TEMPLATE = lambda r, i, d: 0.5 * np.array([[-d, r - 1j * i], [r + 1j * i, d]])  # noqa: E731


def test_phase_scheme_entries_and_spectrum():
    s = phase_changing_scheme(0.4, 20.0)
    assert s.h1 is s.h0 and s.horizon == 20.0
    for t in np.linspace(0, 20, 9):
        np.testing.assert_allclose(s.h0(t), TEMPLATE(2 * np.cos(0.4 * t), 2 * np.sin(0.4 * t), -1.0))
        np.testing.assert_allclose(np.linalg.eigvalsh(s.h0(t)), [-np.sqrt(5) / 2, np.sqrt(5) / 2])
    np.testing.assert_allclose(s.h0(0.0), [[0.5, 1.0], [1.0, -0.5]])


def test_phase_scheme_target_populations_constant():
    s = phase_changing_scheme(0.4, 20.0)
    pops = np.array([np.abs(s.target(t)) ** 2 for t in np.linspace(0, 20, 41)])
    np.testing.assert_allclose(pops, np.broadcast_to(pops[0], pops.shape), atol=1e-12)


def test_rap_endpoints_and_midpoint():
    s = rap_scheme(1.7, 20.0)
    np.testing.assert_allclose(s.h0(0.0), TEMPLATE(0, 0, -1.7), atol=1e-15)
    np.testing.assert_allclose(s.h0(20.0), TEMPLATE(0, 0, 1.7), atol=1e-15)
    np.testing.assert_allclose(s.h0(10.0), TEMPLATE(1.0, 0, 0), atol=1e-15)
    psi0, psiT = np.abs(s.target(0.0)), np.abs(s.target(20.0))
    np.testing.assert_allclose(psi0, [1, 0], atol=1e-12)
    np.testing.assert_allclose(psiT, [0, 1], atol=1e-12)
    np.testing.assert_allclose(s.initial_state, s.target(0.0))


def test_rap_noise_variants():
    s = rap_scheme(1.0, 20.0)
    np.testing.assert_allclose(rap_noise_h1("frequency_error", s.h0)(3.0), 0.5 * np.diag([-1.0, 1.0]))
    same = rap_noise_h1("timing_frequency", s.h0, c=0.0)
    for t in (0.0, 4.0, 13.0):
        np.testing.assert_allclose(same(t), s.h0(t))
    degenerate = rap_noise_h1("timing_frequency", s.h0, c=1.0)
    assert np.allclose(degenerate(0.0), 0.0)
    with pytest.raises(ValueError):
        rap_noise_h1("bogus", s.h0)


def test_timing_frequency_detuning_shift():
    s = rap_scheme(2.0, 10.0, h1="timing_frequency", c=0.5)
    for t in (1.0, 6.0):
        expected = s.h0(t) + 0.5 * 0.5 * np.diag([-1.0, 1.0])
        np.testing.assert_allclose(s.h1(t), expected)


def test_stirap_dark_state_and_order():
    s = stirap_scheme(200.0, 0.1)
    h0 = s.h0
    for t in np.linspace(0, 200, 11):
        assert np.abs(h0(t) @ h0.dark_state(t)).max() < 1e-14
    ts = np.linspace(0, 200, 20001)
    o12, o23 = h0.rabi(ts)
    assert np.isclose(ts[np.argmax(o23)], 200 * 0.4) and np.isclose(ts[np.argmax(o12)], 200 * 0.6)
    np.testing.assert_allclose(np.abs(h0.dark_state(0.0)), [1, 0, 0], atol=1e-4)
    np.testing.assert_allclose(np.abs(h0.dark_state(200.0)), [0, 0, 1], atol=1e-4)
    theta = h0.mixing_angle(ts)
    assert theta[0] < 1e-4 and abs(theta[-1] - np.pi / 2) < 1e-4
    assert np.all(np.diff(theta) >= -1e-15)


def test_stirap_pulse_width():
    h0 = stirap_scheme(1.0, 0.1).h0
    o12, _ = h0.rabi(np.array([0.6, 0.7]))
    np.testing.assert_allclose(o12, [1.0, np.exp(-0.5)])


def test_stirap_target_tracks_frame_dark_state():
    s = stirap_scheme(200.0)
    times = np.linspace(0, 200, 401)
    frame = track_eigenframe(s.h0, times)
    for k in (0, 200, 400):
        assert abs(np.vdot(frame.vectors[k][:, 1], s.target(times[k]))) > 1 - 1e-12


def test_stirap_phase_fluctuation():
    s = stirap_scheme(200.0, h1="phase_fluctuation")
    for t in (50.0, 80.0, 120.0):
        m = s.h1(t)
        np.testing.assert_allclose(m, m.conj().T)
        _, o23 = s.h0.rabi(t)
        np.testing.assert_allclose(m[1, 2], 0.5j * o23)
        assert np.count_nonzero(m) == 2
        np.testing.assert_allclose(np.linalg.eigvalsh(m), [-o23 / 2, 0, o23 / 2], atol=1e-15)
    assert stirap_noise_h1("same_as_h0", s.h0) is s.h0
    with pytest.raises(ValueError):
        stirap_noise_h1("bogus", s.h0)


def test_parameter_validation():
    with pytest.raises(ValueError):
        stirap_scheme(200.0, tau=0.6)
    with pytest.raises(ValueError):
        rap_scheme(T=0.0)


@pytest.mark.parametrize("scheme", [phase_changing_scheme(), rap_scheme(), rap_scheme(h1="timing_frequency"),
                                    stirap_scheme(), stirap_scheme(h1="phase_fluctuation")])
def test_smooth_and_vectorized(scheme):
    T = scheme.horizon
    ts = np.linspace(0, T, 2001)
    for op in (scheme.h0, scheme.h1):
        stack = op.stack(ts)
        np.testing.assert_allclose(stack[::250], np.array([op(t) for t in ts[::250]]), atol=1e-15)
        h = ts[1] - ts[0]
        second = np.abs(stack[2:] - 2 * stack[1:-1] + stack[:-2]).max() / h**2
        assert second < 10.0 / min(T, 1.0) ** 2
