import numpy as np
import pytest

from hubmpc.conic import ConicSolver
from hubmpc.forecast.recipes import ForecastConfig, Site, train_models
from hubmpc.forecast.scenarios import ScenarioTree
from hubmpc.hub import BatteryParams, max_external_power, short_circuit_cap
from hubmpc.synth import synth


@pytest.fixture(scope="session")
def bundle45():
    return synth(seed=7, days=45)


@pytest.fixture(scope="session")
def site():
    return Site(latitude=37.33, longitude=-121.89)


@pytest.fixture(scope="session")
def models30(bundle45, site):
    cfg = ForecastConfig(n_bootstrap=30, max_rounds=30, patience=5, seed=0)
    return train_models(bundle45, site, cfg, last_day_exclusive=40)


@pytest.fixture(scope="session")
def battery():
    return BatteryParams()


@pytest.fixture(scope="session")
def solver():
    return ConicSolver(tol=1e-6)


def make_tree(seed: int, n_branches: int = 27, n_steps: int = 96) -> ScenarioTree:
    """Smooth random scenario tree shaped like real forecasts."""
    rng = np.random.default_rng(seed)
    t = np.linspace(0.0, 2.0 * np.pi, n_steps)
    ev = np.clip(45 + 35 * np.sin(t - 1.0) + rng.normal(0, 4, n_steps), 0, 160)
    pv = np.clip(55 * np.sin(t / 2.0) ** 2 + rng.normal(0, 2, n_steps), 0, 70)
    pr = 0.25 * (55 + 30 * np.sin(t + 0.5) + rng.normal(0, 2, n_steps))
    widths = rng.uniform(2.0, 15.0, size=3)
    variants = []
    for s in range(n_branches):
        shift = rng.normal(0.0, 1.0, size=3)
        variants.append((np.clip(ev + widths[0] * shift[0], 0, None),
                         np.clip(pv + widths[1] * shift[1], 0, None),
                         pr + widths[2] * shift[2]))
    return ScenarioTree(
        p_ev=np.stack([v[0] for v in variants]),
        p_pv=np.stack([v[1] for v in variants]),
        p_buy=np.stack([v[2] for v in variants]),
        p_sell=np.stack([v[2] for v in variants]),
        probabilities=np.full(n_branches, 1.0 / n_branches),
    )


def two_step_grid_search(tree: ScenarioTree, battery: BatteryParams,
                         resolution: float = 0.01):
    """Exhaustive 2-step dispatch oracle on the exact loss manifold.

    Sweeps the first-step internal power; periodicity pins the second step to
    its negative.  Returns (best cost, best p_ib0, cost Lipschitz bound) so
    callers can convert the grid resolution into an objective tolerance.
    """
    assert tree.n_branches == 1 and tree.n_steps == 2
    dT = 0.25
    e0 = battery.e_init
    best, arg = np.inf, 0.0
    bound = battery.p_ib_bound
    psc_min = min(short_circuit_cap(battery.e_min, battery),
                  short_circuit_cap(battery.e_max, battery))
    for p0 in np.arange(-bound, bound + resolution / 2, resolution):
        e1 = e0 - dT * p0
        if not (battery.e_min <= e1 <= battery.e_max):
            continue
        p1 = -p0
        psc0 = short_circuit_cap(e0, battery)
        psc1 = short_circuit_cap(e1, battery)
        cost = 0.0
        for i, (p_ib, psc) in enumerate(((p0, psc0), (p1, psc1))):
            p_b = max_external_power(p_ib, psc)
            p_g = tree.p_ev[0, i] - tree.p_pv[0, i] - p_b
            cost += max(tree.p_buy[0, i] * p_g, tree.p_sell[0, i] * p_g)
        if cost < best:
            best, arg = cost, p0
    price_sum = float(tree.p_buy[0].sum())
    lipschitz = price_sum * (1.0 + 2.0 * bound / psc_min)
    return best, arg, lipschitz


@pytest.fixture(scope="session")
def tree_factory():
    return make_tree


@pytest.fixture(scope="session")
def two_step_oracle():
    return two_step_grid_search
