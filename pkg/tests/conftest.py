import numpy as np
import pytest

from gatedhawkes.core import (HawkesParams, ModelSpec, Taxonomy,
                              TransitionKernel, Variant)
from gatedhawkes.simulate import ImpactTable, simulate

# one line per acceptance criterion, printed in the terminal summary so the
# report survives pytest's output capture
ACCEPTANCE_RESULTS: dict[str, str] = {}
ACCEPTANCE_DETAILS: dict[str, str] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call" and item.name.startswith("test_criterion_"):
        key = item.name.removeprefix("test_criterion_")
        ACCEPTANCE_RESULTS[key] = "PASS" if rep.passed else "FAIL"


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_RESULTS):
        num, _, name = key.partition("_")
        detail = ACCEPTANCE_DETAILS.get(key, "")
        suffix = f" ({detail})" if detail else ""
        terminalreporter.write_line(
            f"ACCEPTANCE {num} {name.replace('_', '-')}: "
            f"{ACCEPTANCE_RESULTS[key]}{suffix}")


def random_gated_model(rng, n_events=3, n_states=2, closed=((2, 0),),
                       rho_scale=0.4):
    """Small valid model with a couple of closed gates and random kernels."""
    tax = Taxonomy.from_codes([f"E{i}" for i in range(n_events)],
                              [str(i + 1) for i in range(n_states)])
    phi = np.zeros((n_events, n_states, n_states))
    gate = np.ones((n_events, n_states), dtype=np.int64)
    for e, x in closed:
        gate[e, x] = 0
    for e in range(n_events):
        for x in range(n_states):
            if gate[e, x]:
                row = rng.uniform(0.2, 1.0, n_states)
                phi[e, x] = row / row.sum()
    nu = rng.uniform(0.2, 0.5, n_events)
    beta = rng.uniform(1.0, 3.0, (n_events, n_states, n_events))
    # scale alpha for a sub-critical spectral radius in every state
    alpha = rng.uniform(0.3, 1.0, (n_events, n_states, n_events)) * beta
    for x in range(n_states):
        K = alpha[:, x, :] / beta[:, x, :]
        r = np.max(np.abs(np.linalg.eigvals(K)))
        alpha[:, x, :] *= rho_scale / r
    return ModelSpec(taxonomy=tax, variant=Variant.EXSD_HAWKES,
                     transition=TransitionKernel(phi=phi, gate=gate),
                     hawkes=HawkesParams(nu=nu, alpha=alpha, beta=beta))


def simulate_stream(model, horizon, seed, **kw):
    impact = ImpactTable(delta_m=np.zeros((model.taxonomy.n_events,
                                           model.taxonomy.n_states)))
    return simulate(model, impact, horizon=horizon, seed=seed, **kw).stream


@pytest.fixture(scope="session")
def small_model():
    return random_gated_model(np.random.default_rng(10))


@pytest.fixture(scope="session")
def small_stream(small_model):
    return simulate_stream(small_model, horizon=400.0, seed=3)
