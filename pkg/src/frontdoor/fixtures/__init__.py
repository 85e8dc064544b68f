"""Hand-transcribed example graphs shipped as ``.smcm`` text files."""

from importlib import resources

from ..graph import Smcm, parse_smcm

TOY = ("gtoy", "gtoy1", "gtoy2", "gtoy3")
RANDOM = ("rnd1", "rnd2", "rnd3", "rnd4", "rnd5", "rnd6")
NAMED = TOY + ("fig3left", "fig3right", "fig4a", "fig4b", "fig6") + RANDOM


def fixture_text(name: str) -> str:
    if name not in NAMED:
        raise KeyError(f"unknown fixture {name!r}; choose from {', '.join(NAMED)}")
    return resources.files(__name__).joinpath(f"{name}.smcm").read_text()


def load_fixture(name: str) -> Smcm:
    return parse_smcm(fixture_text(name))
