import numpy as np
import pytest

from xsts.cross_section import ModelSpec, PanelData, default_loading, linear_loading
from xsts.criteria import ParamVector
from xsts.factor_process import FactorPath, Stationary


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def noiseless_stationary(n=50, T=3, beta=1.5, rho=0.5, nu=(0.7, -0.4, 1.1), seed=0,
                         loading=None):
    """Panel with sigma_eps = 0 and an exact AR(1) path (all innovations zero
    except the first), so every estimator can recover the truth exactly."""
    loading = loading or default_loading()
    spec = ModelSpec("stationary", loading, sigma_eps=1.0)
    x = 1.0 + np.random.default_rng(seed).standard_normal((n, T))
    nu = np.asarray(nu[:T], dtype=float)
    y = beta * x + float(loading(rho)) * nu[None, :]
    panel = PanelData(y, x)
    phi0 = ParamVector(beta, nu, rho)
    return spec, panel, phi0


def exact_ar_path(rho, tau, start=1.0, tau0=0):
    levels = start * rho ** np.arange(tau + 1)
    return FactorPath.from_levels(levels, Stationary(rho), tau0=tau0)


def random_problem(seed, kind="stationary", criterion=None, n=200, T=3, tau=300):
    """Simulated reference-model data plus a perturbed parameter point."""
    from xsts.cross_section import Likelihood, simulate_panel
    from xsts.factor_process import Fixed, simulate_local_to_unity, simulate_stationary

    rng = np.random.default_rng(seed)
    if kind == "stationary":
        spec = ModelSpec("stationary", default_loading(), 1.0, 1.0, criterion or Likelihood())
        path = simulate_stationary(0.5, 1.0, tau, Fixed(0), seed=seed)
        panel = simulate_panel(spec, 1.0, path, None, n, T, seed=seed + 1)
        phi = ParamVector(1.0 + 0.1 * rng.standard_normal(),
                          path.window(1, T) + 0.1 * rng.standard_normal(T),
                          0.5 + 0.05 * rng.standard_normal())
    else:
        spec = ModelSpec("unit_root", linear_loading(), 1.0, 1.0, criterion or Likelihood())
        path = simulate_local_to_unity(0.0, 1.0, tau, 1.0, seed=seed)
        panel = simulate_panel(spec, 1.0, path, None, n, T, seed=seed + 1)
        phi = ParamVector(1.0 + 0.1 * rng.standard_normal(), 1.0 + 0.1 * rng.standard_normal(),
                          0.98 + 0.01 * rng.standard_normal())
    return spec, panel, path, phi


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
