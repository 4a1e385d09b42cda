"""Parameter grids behind each reproducible figure.

Each preset is a list of (curve label, config mapping); the mappings use the
same vocabulary as TOML config files.  Sweep ranges are chosen to show the
full weak-to-strong crossover.
"""
from __future__ import annotations

PHASE_J = (0.0, 0.01, 0.1, 1.0)
PHASE_D = (0.0, 0.01, 0.05, 0.1)
RAP_D_AXIS = {"parameter": "noise.D", "log_start": -3.0, "log_stop": 3.0, "num": 25}
STIRAP_NU_AXIS = {"parameter": "noise.nu", "log_start": -2.0, "log_stop": 2.0, "num": 17}
HEAT_NU_AXIS = {"parameter": "noise.nu", "log_start": -2.0, "log_stop": 2.0, "num": 9}


def _label(value):
    return format(value, "g")


def _phase(J, D):
    return {
        "scheme": {"id": "phase", "omega": 0.4, "T": 20.0},
        "noise": {"J": J, "D": D},
        "integration": {"n_out": 401},
        "outputs": {"observables": ["fidelity"]},
    }


def _rap_sweep(delta0, h1, approximations, strong_from=0.0):
    return {
        "scheme": {"id": "rap", "delta0": delta0, "T": 20.0, "h1": h1, "c": 1.0},
        "noise": {"J": 0.0, "D": 0.0},
        "outputs": {"observables": ["fidelity"], "approximations": approximations, "strong_from": strong_from},
        "sweep": {"axes": [dict(RAP_D_AXIS)]},
    }


def _stirap_sweep(T, sigma):
    return {
        "scheme": {"id": "stirap", "T": T, "tau": 0.1, "h1": "same_as_h0"},
        "noise": {"nu": 0.0, "distribution": "gaussian", "sigma": sigma},
        "outputs": {"observables": ["fidelity"], "approximations": ["weak", "second_order"], "strong_from": 1.0},
        "sweep": {"axes": [dict(STIRAP_NU_AXIS)]},
    }


def _stirap_heatmap(h1, second_axis, T=200.0, sigma=2.0):
    return {
        "scheme": {"id": "stirap", "T": T, "tau": 0.1, "h1": h1},
        "noise": {"nu": 0.0, "distribution": "gaussian", "sigma": sigma},
        "outputs": {"observables": ["fidelity"]},
        "sweep": {"axes": [dict(HEAT_NU_AXIS), second_axis]},
    }


T_AXIS = {"parameter": "scheme.T", "values": [50.0, 100.0, 150.0, 200.0, 250.0, 300.0]}
SIGMA_AXIS = {"parameter": "noise.sigma", "values": [0.5, 1.0, 1.5, 2.0, 2.5, 3.0]}

PRESETS = {
    "fig1a": [(f"J={_label(J)}", _phase(J, 1e-4)) for J in PHASE_J],
    "fig1b": [(f"D={_label(D)}", _phase(0.0, D)) for D in PHASE_D],
    "fig2a": [(f"delta0={_label(d)}", _rap_sweep(d, "same_as_h0", ["weak", "naive", "second_order"], 1.0))
              for d in (3.5, 1.0)],
    "fig2b": [("delta0=1", {
        "scheme": {"id": "rap", "delta0": 1.0, "T": 20.0},
        "noise": {"J": 0.0, "D": 0.0},
        "outputs": {"observables": ["fidelity"]},
        "sweep": {"axes": [{"parameter": "noise.D", "log_start": -2.0, "log_stop": 2.0, "num": 13},
                           {"parameter": "scheme.T", "start": 5.0, "stop": 60.0, "num": 12}]},
    })],
    "fig3a": [(f"delta0={_label(d)}", _rap_sweep(d, "frequency_error", ["weak"])) for d in (3.5, 1.0, 0.5)],
    "fig3b": [(f"delta0={_label(d)}", _rap_sweep(d, "timing_frequency", ["weak"])) for d in (3.5, 1.0, 0.5)],
    "fig4": [("pulses", {
        "scheme": {"id": "stirap", "T": 1.0, "tau": 0.1},
        "noise": {"nu": 0.0, "distribution": "gaussian", "sigma": 2.0},
        "integration": {"n_out": 401},
        "outputs": {"observables": ["controls"]},
    })],
    "fig5a": [(f"T={_label(T)}", _stirap_sweep(T, 2.0)) for T in (100.0, 200.0, 300.0)],
    "fig5b": [(f"sigma={_label(s)}", _stirap_sweep(200.0, s)) for s in (1.0, 2.0, 3.0)],
    "fig6a": [("nu_T", _stirap_heatmap("same_as_h0", dict(T_AXIS)))],
    "fig6b": [("nu_sigma", _stirap_heatmap("same_as_h0", dict(SIGMA_AXIS)))],
    "fig6c": [("nu_T", _stirap_heatmap("phase_fluctuation", dict(T_AXIS)))],
}

FIGURES = tuple(PRESETS)
