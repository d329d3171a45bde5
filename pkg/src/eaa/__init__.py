"""eaa: a vision-capable agentic runtime for scanning-microscopy automation.

Sessions pair a tool registry and a chat-completions model with a simulated
beamline; workflows (focusing, feature search) run on top of the generic chat
loop, and every tool can also be served or consumed over MCP.
"""

__version__ = "0.1.0"

from .analysis import GaussianFit, Offset2D, Profile1D, fwhm_from_sigma, gaussian_fit, phase_correlate
from .agent import Tool, ToolOutput, ToolParam, ToolPolicy, ToolRegistry, postprocess_result
from .beamline import ScenarioConfig, VirtualBeamline, default_scenario
from .context import Context, Message, Role, ToolCall, ToolResult, render_for_wire
from .engine import LoopConfig, LoopOutcome, LoopStatus, Session, run_loop, spawn_subtask
from .memory import HashingEmbedder, MemoryStore, detect_notable
from .model import ModelConfig, ModelResponse, OpenAIModel, ScriptedModel, make_scripted_model
from .workflows import FeatureSearchParams, FocusingParams, run_feature_search, run_focusing

__all__ = [
    "Context",
    "FeatureSearchParams",
    "FocusingParams",
    "GaussianFit",
    "HashingEmbedder",
    "LoopConfig",
    "LoopOutcome",
    "LoopStatus",
    "MemoryStore",
    "Message",
    "ModelConfig",
    "ModelResponse",
    "Offset2D",
    "OpenAIModel",
    "Profile1D",
    "Role",
    "ScenarioConfig",
    "ScriptedModel",
    "Session",
    "Tool",
    "ToolCall",
    "ToolOutput",
    "ToolParam",
    "ToolPolicy",
    "ToolRegistry",
    "ToolResult",
    "VirtualBeamline",
    "default_scenario",
    "detect_notable",
    "fwhm_from_sigma",
    "gaussian_fit",
    "make_scripted_model",
    "phase_correlate",
    "postprocess_result",
    "render_for_wire",
    "run_feature_search",
    "run_focusing",
    "run_loop",
    "spawn_subtask",
]
