"""Hybrid workflows: automated focusing and natural-language feature search.

Both assemble a templated initial prompt, a soft expected-sequence guardrail,
and recording hooks, then hand control to the generic chat loop.  Reports are
plain dicts ready for JSON serialization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Optional

from .context import Message, ToolResult
from .engine import (
    Hook,
    LoopConfig,
    LoopStatus,
    Session,
    make_registration_hook,
    run_loop,
)

FOCUSING_SEQUENCE = ("scan_line_1d", "set_zone_plate_z", "acquire_image_2d")

FOCUSING_PROMPT_TEMPLATE = """\
You are focusing a scanning microscope by moving its zone plate along z.
Sharpness is measured by the FWHM of a Gaussian fitted to a line scan across
a thin reference feature: the smaller the FWHM, the sharper the image.

Procedure:
1. Acquire a 2D image of the region of operation: center ({region_x:g}, {region_y:g}), \
width {region_size:g}, height {region_size:g}, step {region_step:g} (all in um).
2. Perform a horizontal 1D line scan across the reference feature ({feature}), \
from ({scan_x0:g}, {scan_y:g}) to ({scan_x1:g}, {scan_y:g}) with {n_points} points.
3. The line scan reports the fitted FWHM. Note it down together with the current z.
4. Use set_zone_plate_z to move the zone plate (z must stay within [{z_min:g}, {z_max:g}] mm). \
Moving the optic makes the field of view drift.
5. Acquire a new 2D image at the same region coordinates. You will be told the offset \
between this image and the previous one.
6. Repeat from step 2, shifting the line-scan coordinates by the accumulated offsets so \
the scan always crosses the same feature. Start with coarse z steps of {coarse_step:g} mm; \
once the FWHM starts increasing again, search finely between the bracketing pair.

When you have found the z with the minimal FWHM, state it and say TERMINATE.
Explain every tool call you make."""

FEATURE_SEARCH_PROMPT_TEMPLATE = """\
You are searching a sample for this feature: {description}

Use acquire_image_2d to take local scans and examine each image. Field-of-view
size: {fov:g} um; scan step: {scan_step:g} um. Keep every scan center inside
x in [{x_min:g}, {x_max:g}], y in [{y_min:g}, {y_max:g}].

Start with a grid search over the bounds, visiting cells row by row with a
spacing of {coarse_step:g} um. When a part of the feature appears in the FOV,
you may close in on it with any direction and step size. Explain every tool
call you make. When the feature is centered in the FOV, describe where it is
and say TERMINATE. If you exhaust the search area, say NEED HUMAN."""


@dataclass
class FocusingParams:
    feature: str = "the vertical grid line at x=0"
    region_x: float = 0.0
    region_y: float = 4.0
    region_size: float = 12.0
    region_step: float = 0.5
    scan_x0: float = -4.0
    scan_x1: float = 4.0
    scan_y: float = 2.0
    n_points: int = 81
    z_min: float = -210.0
    z_max: float = -180.0
    coarse_step: float = 2.0
    max_rounds: int = 64
    # 0 reports every registration offset outright; raise it to make the hook
    # ask the overlap question (and fall back to feature tracking) when the
    # correlation peak is weak.
    registration_threshold: float = 0.0


@dataclass
class FeatureSearchParams:
    description: str = (
        "the center of a Siemens star, which is a disk formed by a lot of radial "
        "spokes (the spokes must be radial; a disk formed by concentric circles "
        "is not a Siemens star)"
    )
    x_min: float = 0.0
    x_max: float = 60.0
    y_min: float = -40.0
    y_max: float = 0.0
    fov: float = 20.0
    scan_step: float = 1.0
    coarse_step: float = 20.0
    max_rounds: int = 64


def focusing_prompt(params: FocusingParams) -> str:
    return FOCUSING_PROMPT_TEMPLATE.format(**vars(params))


def feature_search_prompt(params: FeatureSearchParams) -> str:
    return FEATURE_SEARCH_PROMPT_TEMPLATE.format(**vars(params))


def _fwhm_trajectory_hook(trajectory: list[tuple[float, float]]) -> Hook:
    def action(session: Session, call: Any, result: Optional[ToolResult]) -> list[Message]:
        if result is None or result.is_error or session.beamline is None:
            return []
        from .tools import parse_kv

        kv = parse_kv(result.text)
        if "FWHM" in kv:
            trajectory.append((session.beamline.zone_plate_z, float(kv["FWHM"])))
        return []

    return Hook(trigger="after_tool:scan_line_1d", action=action)


def _visit_hook(visited: list[tuple[float, float]]) -> Hook:
    def action(session: Session, call: Any, result: Optional[ToolResult]) -> list[Message]:
        if call is not None and result is not None and not result.is_error:
            args = call.arguments()
            visited.append((float(args["x"]), float(args["y"])))
        return []

    return Hook(trigger="after_tool:acquire_image_2d", action=action)


def run_focusing(session: Session, params: FocusingParams | None = None) -> dict[str, Any]:
    """Hybrid focusing workflow; the report records the (z, FWHM) trajectory.

    The reported optimum is the visited z with the smallest fitted FWHM.
    """
    params = params or FocusingParams()
    trajectory: list[tuple[float, float]] = []
    config = LoopConfig(
        initial_prompt=focusing_prompt(params),
        expected_sequence=FOCUSING_SEQUENCE,
        sequence_start=FOCUSING_SEQUENCE.index("acquire_image_2d"),  # step 1 is a 2D scan
        hooks=(
            make_registration_hook(confidence_threshold=params.registration_threshold),
            _fwhm_trajectory_hook(trajectory),
        ),
        max_rounds=params.max_rounds,
    )
    outcome = run_loop(session, config)
    final = min(trajectory, key=lambda zf: zf[1]) if trajectory else None
    return {
        "task": "focusing",
        "status": outcome.status.value,
        "rounds": outcome.rounds,
        "trajectory": [[z, fwhm] for z, fwhm in trajectory],
        "final": {"z": final[0], "fwhm": final[1]} if final else None,
    }


def run_feature_search(session: Session, params: FeatureSearchParams | None = None) -> dict[str, Any]:
    """Agent-driven feature search; the report records visited FOV centers."""
    params = params or FeatureSearchParams()
    visited: list[tuple[float, float]] = []
    if "acquire_image_2d" in session.registry.names():
        policy = session.registry.policy("acquire_image_2d")
        policy.limits.setdefault("x", (params.x_min, params.x_max))
        policy.limits.setdefault("y", (params.y_min, params.y_max))
    config = LoopConfig(
        initial_prompt=feature_search_prompt(params),
        hooks=(_visit_hook(visited),),
        max_rounds=params.max_rounds,
    )
    outcome = run_loop(session, config)
    found = outcome.status is LoopStatus.TERMINATED and bool(visited)
    return {
        "task": "feature_search",
        "status": outcome.status.value,
        "rounds": outcome.rounds,
        "trajectory": [[x, y] for x, y in visited],
        "found": found,
        "final": {"x": visited[-1][0], "y": visited[-1][1]} if found else None,
    }
