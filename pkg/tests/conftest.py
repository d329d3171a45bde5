import numpy as np
import pytest

from eaa.agent import ToolRegistry
from eaa.beamline import VirtualBeamline
from eaa.context import TickClock
from eaa.engine import Session
from eaa.plotting import save_png
from eaa.tools import microscope_tools


@pytest.fixture
def tiny_png(tmp_path):
    """Factory writing small valid PNG files."""

    def make(name: str = "img.png", value: float = 0.5):
        return save_png(np.full((8, 8), value), tmp_path / name)

    return make


@pytest.fixture
def make_beamline(tmp_path):
    counter = {"n": 0}

    def make(scenario, session: str | None = None) -> VirtualBeamline:
        counter["n"] += 1
        return VirtualBeamline(
            scenario, out_dir=tmp_path / "out", session=session or f"s{counter['n']}"
        )

    return make


@pytest.fixture
def make_session(make_beamline):
    """Session with microscope tools on a fresh simulator and a fixed clock."""

    def make(model, scenario, session_id: str = "test", **kwargs) -> Session:
        beamline = make_beamline(scenario, session=session_id)
        registry = ToolRegistry()
        for tool in microscope_tools(beamline):
            registry.register(tool)
        return Session(
            session_id=session_id,
            model=model,
            registry=registry,
            beamline=beamline,
            clock=TickClock(),
            **kwargs,
        )

    return make
