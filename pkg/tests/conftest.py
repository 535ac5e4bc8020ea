import json
from pathlib import Path

import numpy as np
import pytest

from radner import MarketSpec, constant_twap, solve
from radner.scenario import load_scenario

ROOT = Path(__file__).resolve().parents[1]
TWENTY_AGENTS = ROOT / "scenarios" / "twenty_agents.json"
TWENTY_TARGETS = [-300, -202, -165, -102, -75, -60, -35, -20, -15, 0, 6, 11, 23, 30, 63, 70, 115, 150, 220, 290]


def market(a, lam, supply=0.0, endowments=None, horizon=1.0, dividend_mean=0.0):
    endowments = endowments if endowments is not None else [0.0] * len(a)
    agents = tuple((float(x) + e, float(e)) for x, e in zip(a, endowments))
    return MarketSpec(horizon, lam, supply, agents, dividend_mean)


def solved(a, lam, model=None, **kw):
    model = model or constant_twap()
    return solve(market(a, lam, horizon=model.horizon, **kw), model)


def write_scenario(path, targets, lam=0.1, endowments=None, **extra):
    endowments = endowments or [0.0] * len(targets)
    doc = {
        "horizon": 1.0,
        "lambda": lam,
        "supply": float(sum(endowments)),
        "agents": [{"target": float(t), "endowment": float(e)} for t, e in zip(targets, endowments)],
        "kappa": {"type": "constant", "value": 0.1},
        "gamma": {"type": "twap"},
    }
    doc.update(extra)
    Path(path).write_text(json.dumps(doc))
    return Path(path)


@pytest.fixture(scope="session")
def twenty_agents():
    return load_scenario(TWENTY_AGENTS)


@pytest.fixture(scope="session")
def twenty_solution(twenty_agents):
    return solve(twenty_agents.spec, twenty_agents.model)


@pytest.fixture
def rng():
    return np.random.default_rng(20240501)
