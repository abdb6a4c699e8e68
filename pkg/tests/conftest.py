import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from swapmc import bundled  # noqa: E402
from swapmc.checker import ModelChecker  # noqa: E402
from swapmc.parser import parse_model  # noqa: E402

TOGGLE = """
x : Bool
init_cond = x
transitions x := neg x
spec_obs = "infinitely often x" A(G F (x == True))
spec_obs = "always x" A(G (x == True))
"""

# the "player" protocol and one agent, used by small hand-written models
PLAYER = """
type Strategy = {Cooperate,Recover,Random}
strategyA : Strategy
depositedA : Bool
protocol "player" (strategy : Strategy, deposited : Bool)
begin do
    strategy == Cooperate /\\ neg deposited -> <<Deposit>>
 [] strategy == Recover /\\ deposited -> <<Cancel>>
 [] otherwise -> <<Skip>>
od end
agent Alice "player" (strategyA, depositedA)
init_cond = neg depositedA
"""


@pytest.fixture(scope="session")
def escrow():
    return bundled.load("escrow")


@pytest.fixture(scope="session")
def htlc():
    return bundled.load("htlc")


@pytest.fixture(scope="session")
def escrow_checker(escrow):
    return ModelChecker(escrow)


@pytest.fixture(scope="session")
def htlc_checker(htlc):
    return ModelChecker(htlc)


@pytest.fixture
def toggle():
    return parse_model(TOGGLE)
