"""Acceptance suite.  Each test carries a ``criterion`` marker; the terminal
summary prints one PASS/FAIL line per criterion."""
import itertools
import math
from pathlib import Path

import numpy as np
import pytest

from shotnoise.approx import (
    fidelity,
    finite_difference_slope,
    naive_strong_noise,
    noise_sensitivity,
    strong_noise_second_order,
)
from shotnoise.cli import main
from shotnoise.config import build_noise, build_scheme, load_config, parse_config, with_value
from shotnoise.experiment import read_csv, run_experiment, validate_experiment
from shotnoise.liouvillian import (
    build_L0,
    build_L1_quadrature,
    build_L1_series,
    build_L1_spectral,
    build_two_level_generator,
)
from shotnoise.noise import (
    Custom,
    Gaussian,
    Laplace,
    NoiseError,
    NoiseModel,
    PointMass,
    TwoLevelCoefficients,
    beta_eigenvalue,
)
from shotnoise.presets import PRESETS
from shotnoise.propagate import integrate_master
from shotnoise.qcore import eigendecompose, nested_commutator, two_level_chi
from shotnoise.schemes import rap_scheme, stirap_scheme

from _util import random_density, random_hermitian

CONFIG_DIR = Path(__file__).resolve().parents[1] / "configs"
CONFIGS = sorted(CONFIG_DIR.glob("*.toml"))
criterion = pytest.mark.criterion


def report(n, text):
    print(f"[criterion {n}] {text}")


def start(s):
    return np.outer(s.initial_state, s.initial_state.conj())


def config_points(cfg):
    """(scheme params, noise params) for the base point and every sweep point."""
    points = [(cfg.scheme, cfg.noise)] if not cfg.sweep else []
    for values in itertools.product(*[a.values for a in cfg.sweep]):
        scheme, noise = dict(cfg.scheme), dict(cfg.noise)
        for axis, v in zip(cfg.sweep, values):
            section, key = axis.parameter.split(".", 1)
            if section == "scheme":
                scheme = with_value(scheme, key, v)
            else:
                noise = with_value(noise, key, v)
        points.append((scheme, noise))
    return points


def opnorm(m):
    return np.linalg.norm(m, 2)


# ---------------------------------------------------------------- 1 conservation

def _preset_corners():
    out = []
    for fig, curves in PRESETS.items():
        for label, raw in curves:
            cfg = parse_config(raw)
            if "controls" in cfg.observables:
                continue
            pts = config_points(cfg)
            out.append((f"{fig}:{label}", pts[-1]))
    return out


CONSERVATION_CASES = [(p.stem, pt) for p in CONFIGS for pt in config_points(load_config(p))]
CONSERVATION_CASES += _preset_corners()


@criterion(1, "conservation along every integration")
def test_conservation():
    worst = [0.0, 0.0, 0.0]
    for name, (scheme_p, noise_p) in CONSERVATION_CASES:
        s = build_scheme(scheme_p)
        rec = integrate_master(s.h0, s.h1, build_noise(noise_p), start(s), s.horizon)
        assert not rec.failed, (name, rec.message)
        tr, herm, mineig = rec.trace_error.max(), rec.hermiticity_error.max(), rec.min_eigenvalue.min()
        assert tr <= 1e-8 and herm <= 1e-10 and mineig >= -1e-7, (name, scheme_p, noise_p)
        worst = [max(worst[0], tr), max(worst[1], herm), min(worst[2], mineig)]
    report(1, f"{len(CONSERVATION_CASES)} integrations: max trace error {worst[0]:.1e}, "
              f"max hermiticity error {worst[1]:.1e}, min eigenvalue {worst[2]:.1e}")


# ---------------------------------------------------------------- 2 builder equivalence

def _random_model(rng, k):
    nu = rng.uniform(0.1, 5.0)
    kind = k % 4
    if kind == 0:
        return NoiseModel(nu, Gaussian(rng.uniform(0.05, 0.8), rng.uniform(-0.5, 0.5)))
    if kind == 1:
        return NoiseModel(nu, Laplace(rng.uniform(0.05, 0.3)))
    if kind == 2:
        return NoiseModel(nu, PointMass(rng.uniform(-1.5, 1.5)))
    s = rng.uniform(0.1, 0.6)
    moments = {j: 0.0 if j % 2 else s**j * math.prod(range(j - 1, 0, -2)) for j in range(1, 81)}
    return NoiseModel(nu, Custom(moments, cf=lambda x: np.exp(-0.5 * (s * np.asarray(x)) ** 2),
                                 density=lambda x: np.exp(-0.5 * (x / s) ** 2) / (s * math.sqrt(2 * math.pi)),
                                 is_symmetric=True, width=s))


@criterion(2, "spectral, series and quadrature L1 builders agree")
def test_builder_equivalence(rng):
    worst, n_series = 0.0, 0
    for k in range(50):
        d = 2 + k % 2
        h1 = random_hermitian(rng, d, rng.uniform(0.2, 1.5))
        model = _random_model(rng, k)
        spectral = build_L1_spectral(h1, model)[0].matrix
        builds = [build_L1_quadrature(h1, model).matrix]
        try:
            builds.append(build_L1_series(h1, model, max_terms=60, rtol=1e-12).matrix)
            n_series += 1
        except NoiseError:
            pass
        mats = [spectral] + builds
        for a, b in itertools.combinations(mats, 2):
            err = opnorm(a - b) / max(opnorm(a), opnorm(b))
            worst = max(worst, err)
            assert err <= 1e-7, (k, type(model.distribution).__name__, err)
    report(2, f"50 instances ({n_series} with a convergent series): worst relative difference {worst:.1e}")


# ---------------------------------------------------------------- 3 two-level reduction

@criterion(3, "two-level reduction and beta formula")
def test_two_level_reduction(rng):
    worst = 0.0
    for _ in range(30):
        h0, h1 = random_hermitian(rng, 2), random_hermitian(rng, 2)
        J, D = rng.uniform(-1, 1), rng.uniform(0, 2)
        coeffs = TwoLevelCoefficients(J, D)
        two = build_two_level_generator(h0, h1, coeffs).matrix
        full = (build_L0(h0) + build_L1_spectral(h1, coeffs)[0]).matrix
        worst = max(worst, np.abs(two - full).max())
        assert np.abs(two - full).max() <= 1e-9
        e, _ = eigendecompose(h1)
        gap = e[:, None] - e[None, :]
        np.testing.assert_allclose(coeffs.betas(e), -1j * J * gap - D * gap**2, rtol=0, atol=1e-9)
        for g in gap.ravel():
            assert abs(beta_eigenvalue(coeffs, g) - (-1j * J * g - D * g**2)) <= 1e-9
    report(3, f"30 instances: max generator difference {worst:.1e}")


# ---------------------------------------------------------------- 4 nested commutators

@criterion(4, "two-level nested-commutator closed forms to n = 10")
def test_commutator_closed_forms(rng):
    worst = 0.0
    for _ in range(20):
        h1 = random_hermitian(rng, 2, rng.uniform(0.3, 2.0))
        rho = random_density(rng, 2)
        chi = two_level_chi(h1)
        c1 = h1 @ rho - rho @ h1
        c2 = h1 @ c1 - c1 @ h1
        brute = rho
        for n in range(1, 11):
            brute = h1 @ brute - brute @ h1
            k = n // 2
            closed = (4 * chi) ** k * c1 if n % 2 else (4 * chi) ** (k - 1) * c2
            err = np.linalg.norm(brute - closed) / np.linalg.norm(brute)
            worst = max(worst, err)
            assert err <= 1e-9, (n, err)
            assert np.linalg.norm(nested_commutator(h1, rho, n) - closed) <= 1e-9 * np.linalg.norm(brute)
    report(4, f"20 instances, n = 1..10: worst relative error {worst:.1e}")


# ---------------------------------------------------------------- 5 Gaussian limit

@criterion(5, "Poisson generator approaches the Gaussian one like 1/nu")
@pytest.mark.parametrize("Dt", [0.1, 1.0])
def test_gaussian_limit(Dt):
    s = rap_scheme(1.0, 20.0)
    gauss = integrate_master(s.h0, s.h1, TwoLevelCoefficients(0.0, Dt), start(s), s.horizon).final
    nus = np.array([1e2, 1e3, 1e4])
    dist = []
    for nu in nus:
        pois = integrate_master(s.h0, s.h1, NoiseModel(nu, Laplace(math.sqrt(Dt / nu))), start(s), s.horizon).final
        dist.append(np.linalg.norm(pois - gauss))
    slope = np.polyfit(np.log10(nus), np.log10(dist), 1)[0]
    report(5, f"D~ = {Dt}: distances {', '.join(f'{x:.2e}' for x in dist)}; slope {slope:.4f}")
    assert abs(slope + 1) <= 0.15


# ---------------------------------------------------------------- 6 Monte-Carlo oracle

@criterion(6, "trajectory averages agree with the master equation")
@pytest.mark.parametrize("name", ["rap_point_mass", "stirap_gaussian"])
def test_monte_carlo(name):
    cfg = load_config(CONFIG_DIR / f"{name}.toml")
    passed = 0
    fractions = []
    for seed in range(20):
        rep, _ = validate_experiment(cfg, 4000, seed)
        passed += rep.passed
        fractions.append(rep.fraction_within)
    report(6, f"{name}: {passed}/20 seeds pass; worst fraction within 3 SE {min(fractions):.3f}")
    assert passed >= 18


# ---------------------------------------------------------------- 7 strong-noise limits

LIMITS = {"same_as_h0": 1.0, "frequency_error": 0.0, "timing_frequency": 1 / math.sqrt(2)}


@criterion(7, "RAP strong-noise limits")
@pytest.mark.parametrize("variant", list(LIMITS))
def test_strong_noise_limits(variant):
    cfg = parse_config({
        "scheme": {"id": "rap", "delta0": 1.0, "T": 20.0, "h1": variant, "c": 1.0},
        "noise": {"J": 0.0, "D": 0.0},
        "outputs": {"observables": ["fidelity"]},
        "sweep": {"axes": [{"parameter": "noise.D", "log_start": 1.0, "log_stop": 5.0, "num": 17}]},
    })
    t = run_experiment(cfg)[0]
    D, F = t.column("noise.D"), t.column("F")
    gap = np.abs(F - LIMITS[variant])
    last = D >= D[-1] / 10 * (1 - 1e-12)
    report(7, f"{variant}: F(D=1e4) = {F[last][0]:.5f}, F(D=1e5) = {F[-1]:.5f}, "
              f"limit {LIMITS[variant]:.5f}")
    assert np.all(np.diff(gap[last]) <= 0), gap[last]
    assert gap[-1] <= 0.02


# ---------------------------------------------------------------- 8 fidelity dip

def _dip(F):
    i = int(np.argmin(F))
    return i, 0 < i < len(F) - 1 and F[i] < F[0] and F[i] < F[-1]


@criterion(8, "interior fidelity minimum against noise strength")
def test_fidelity_dip_rap():
    cfg = parse_config(PRESETS["fig2a"][1][1] | {"outputs": {"observables": ["fidelity"]}})
    t = run_experiment(cfg)[0]
    i, ok = _dip(t.column("F"))
    F = t.column("F")
    report(8, f"RAP: min F = {F[i]:.4f} at D = {t.column('noise.D')[i]:.3g}; endpoints {F[0]:.4f}, {F[-1]:.4f}")
    assert ok


@criterion(8, "interior fidelity minimum against noise strength")
def test_fidelity_dip_stirap():
    cfg = parse_config(PRESETS["fig5a"][1][1] | {"outputs": {"observables": ["fidelity"]}})
    t = run_experiment(cfg)[0]
    F = t.column("F")
    i, ok = _dip(F)
    report(8, f"STIRAP: min F = {F[i]:.4f} at nu = {t.column('noise.nu')[i]:.3g}; endpoints {F[0]:.4f}, {F[-1]:.4f}")
    assert ok


# ---------------------------------------------------------------- 9 weak-noise slope

def _weak_point(cfg):
    """A representative noise point: the sweep value closest to unit strength."""
    pts = config_points(cfg)
    if len(pts) == 1:
        return pts[0]

    def strength(p):
        n = p[1]
        return n["D"] if "D" in n else n["nu"]

    return min(pts, key=lambda p: abs(math.log10(strength(p))) if strength(p) > 0 else np.inf)


def _weak_cases():
    cases = [(p.stem, _weak_point(load_config(p))) for p in CONFIGS]
    cases.append(("phase_J", ({"id": "phase", "omega": 0.4, "T": 20.0}, {"J": 0.3, "D": 0.05})))
    cases.append(("rap_delta3.5", ({"id": "rap", "delta0": 3.5, "T": 20.0, "h1": "same_as_h0", "c": 1.0},
                                   {"J": 0.0, "D": 0.1})))
    cases.append(("rap_freq", ({"id": "rap", "delta0": 1.0, "T": 20.0, "h1": "frequency_error", "c": 1.0},
                               {"J": 0.0, "D": 0.1})))
    return cases


EXAMPLES = {"phase_bias", "rap_sweep", "rap_delta3.5", "rap_freq"}


@criterion(9, "weak-noise sensitivity matches finite differences")
@pytest.mark.parametrize("name,point", _weak_cases(), ids=lambda v: v if isinstance(v, str) else "")
def test_weak_noise_slope(name, point):
    scheme_p, noise_p = point
    s = build_scheme(scheme_p)
    noise = build_noise(noise_p)
    target = s.target(s.horizon)
    sens = noise_sensitivity(s.h0, s.h1, noise, start(s), target, s.horizon)
    assert sens.F0 > 0.1
    fd = finite_difference_slope(s.h0, s.h1, noise, start(s), target, s.horizon)
    rel = abs(sens.slope - fd) / abs(fd)
    report(9, f"{name}: F(0) = {sens.F0:.5f}, F'(0) = {sens.slope:.6e}, FD = {fd:.6e}, rel {rel:.1e}")
    assert rel <= 5e-3
    if name in EXAMPLES:
        assert sens.slope < 0


# ---------------------------------------------------------------- 10 strong-noise second order

@criterion(10, "STIRAP second-order strong-noise accuracy")
@pytest.mark.parametrize("nu", [1.0, 3.0, 10.0])
def test_second_order_stirap(nu):
    s = stirap_scheme(200.0, 0.1)
    noise = NoiseModel(nu, Gaussian(2.0))
    target = s.target(s.horizon)
    exact = fidelity(integrate_master(s.h0, s.h1, noise, start(s), s.horizon).final, target)
    approx = strong_noise_second_order(s.h0, s.h1, noise, start(s), s.horizon, target).fidelity
    naive = fidelity(naive_strong_noise(s.h1, noise, start(s), s.horizon).final, target)
    err, err_naive = abs(approx - exact), abs(naive - exact)
    report(10, f"nu = {nu:g}: F = {exact:.6f}, second-order error {err:.2e}, naive error {err_naive:.2e}")
    assert err <= 0.02
    assert err < err_naive


# ---------------------------------------------------------------- 11 figure reproduction

EXPECTED_ROWS = {
    "fig1a": {"fidelity": 401}, "fig1b": {"fidelity": 401},
    "fig2a": {"fidelity": 25, "fidelity_weak": 25, "fidelity_naive": 25, "fidelity_second_order": 13},
    "fig2b": {"fidelity": 13 * 12},
    "fig3a": {"fidelity": 25, "fidelity_weak": 25}, "fig3b": {"fidelity": 25, "fidelity_weak": 25},
    "fig4": {"controls": 401},
    "fig5a": {"fidelity": 17, "fidelity_weak": 17, "fidelity_second_order": 9},
    "fig5b": {"fidelity": 17, "fidelity_weak": 17, "fidelity_second_order": 9},
    "fig6a": {"fidelity": 9 * 6}, "fig6b": {"fidelity": 9 * 6}, "fig6c": {"fidelity": 9 * 6},
}


@pytest.fixture(scope="module")
def figures(tmp_path_factory):
    out = tmp_path_factory.mktemp("figures")
    codes = {fig: main(["reproduce", fig, "--out", str(out)]) for fig in PRESETS}
    return out, codes


@criterion(11, "figure presets run and emit their grids")
@pytest.mark.parametrize("fig", list(PRESETS))
def test_reproduce_grid(figures, fig):
    out, codes = figures
    assert codes[fig] == 0
    for label, _ in PRESETS[fig]:
        for name, n in EXPECTED_ROWS[fig].items():
            t = read_csv(out / fig / f"{label}_{name}.csv")
            assert len(t.rows) == n, (label, name)
            assert np.all(np.isfinite(np.asarray(t.rows, float)))
    report(11, f"{fig}: {len(PRESETS[fig])} curve(s) written")


@criterion(11, "figure presets run and emit their grids")
def test_fig1a_bias_ordering(figures):
    out, _ = figures
    mins, means = [], []
    for label, _ in PRESETS["fig1a"]:
        F = read_csv(out / "fig1a" / f"{label}_fidelity.csv").column("F")
        mins.append(F.min())
        means.append(F.mean())
    report(11, "fig1a min F(t): " + ", ".join(f"{m:.5f}" for m in mins)
           + "; mean F(t): " + ", ".join(f"{m:.5f}" for m in means))
    assert np.all(np.diff(mins) > 0) and np.all(np.diff(means) > 0)
