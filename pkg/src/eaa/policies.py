"""Deterministic scripted policies replaying the workflows without a model.

Each builder emits a script (canned responses with tool calls) that drives a
workflow exactly the way a competent operator would, using the scenario's
known geometry: coarse-then-fine focusing, and grid-then-refine feature
search.  Scripts can be saved as JSON and used from the CLI via
``--model scripted:<file>``.
"""

from __future__ import annotations

import json

from .beamline import LineGrid, SamplePattern, ScenarioConfig, SiemensStar, SpeckleDots, default_scenario
from .context import ToolCall
from .model import ModelResponse, ScriptEntry
from .workflows import FeatureSearchParams, FocusingParams


def focusing_scenario(**overrides) -> ScenarioConfig:
    """Demo scenario for the focusing workflow: an isolated vertical line to
    scan across, plus a star inside the region so registration has a
    distinctive anchor."""
    pattern = SamplePattern(
        primitives=(
            SiemensStar(center=(4.0, 8.0), radius=3.5, n_spokes=12),
            LineGrid(pitch=40.0, line_width=1.2, origin=(0.0, 0.0)),
            SpeckleDots(cell=1.5, fill=0.25, radius=0.3, salt=7),
        )
    )
    return default_scenario(pattern=pattern, **overrides)


def feature_search_scenario(
    star_center: tuple[float, float] | None = (30.0, -20.0), star_radius: float = 6.0,
    **overrides,
) -> ScenarioConfig:
    """Demo scenario for feature search; ``star_center=None`` removes the target."""
    primitives: tuple = (
        LineGrid(pitch=15.0, line_width=0.8, origin=(2.0, 3.0)),
        SpeckleDots(cell=2.0, fill=0.2, radius=0.35, salt=3),
    )
    if star_center is not None:
        primitives = (SiemensStar(center=star_center, radius=star_radius, n_spokes=16),) + primitives
    return default_scenario(pattern=SamplePattern(primitives=primitives), **overrides)


def _call(counter: list[int], tool: str, **arguments) -> ToolCall:
    counter[0] += 1
    return ToolCall(
        id=f"call_{counter[0]:04d}", tool_name=tool, arguments_json=json.dumps(arguments)
    )


def _entry(text: str, *calls: ToolCall) -> ScriptEntry:
    return ScriptEntry(response=ModelResponse(text=text, tool_calls=tuple(calls)))


def focusing_z_visits(scenario: ScenarioConfig, params: FocusingParams) -> list[float]:
    """The z positions a coarse-then-fine search visits, ending at the optimum pair.

    Coarse steps from the scenario's start toward the focus until the defocus
    magnitude grows again, then the two half-millimeter candidates bracketing
    the focus, best first.
    """
    z0 = scenario.z_start
    target = scenario.z_focus
    sign = 1.0 if target >= z0 else -1.0
    visits = [z0]
    z = z0
    while True:
        z_next = z + sign * params.coarse_step
        if not scenario.z_limits.contains(z_next):
            break
        visits.append(z_next)
        if abs(z_next - target) > abs(z - target):
            break
        z = z_next
    fine_best = round(target * 2.0) / 2.0
    fine_probe = fine_best + 0.5 * sign
    for cand in (fine_best, fine_probe):
        if cand not in visits and scenario.z_limits.contains(cand):
            visits.append(cand)
    return visits


def build_focusing_script(
    scenario: ScenarioConfig, params: FocusingParams | None = None
) -> list[ScriptEntry]:
    """Replay script for :func:`eaa.workflows.run_focusing`.

    Line-scan coordinates are shifted by the accumulated drift after each zone
    plate move, mirroring the offsets the registration hook reports.
    """
    params = params or FocusingParams()
    counter = [0]
    entries: list[ScriptEntry] = []
    visits = focusing_z_visits(scenario, params)

    def drift(z: float) -> tuple[float, float]:
        dz = z - scenario.z_start
        return scenario.drift_coeff[0] * dz, scenario.drift_coeff[1] * dz

    entries.append(
        _entry(
            "Acquiring the initial 2D image of the region of operation.",
            _call(
                counter,
                "acquire_image_2d",
                x=params.region_x,
                y=params.region_y,
                width=params.region_size,
                height=params.region_size,
                step=params.region_step,
            ),
        )
    )
    for i, z in enumerate(visits):
        dx, dy = drift(z)
        entries.append(
            _entry(
                f"Line scan across the reference feature at z={z:g} mm "
                f"(coordinates shifted by the reported offset dx={dx:.3f}, dy={dy:.3f}).",
                _call(
                    counter,
                    "scan_line_1d",
                    x_start=round(params.scan_x0 + dx, 6),
                    y_start=round(params.scan_y + dy, 6),
                    x_end=round(params.scan_x1 + dx, 6),
                    y_end=round(params.scan_y + dy, 6),
                    n_points=params.n_points,
                ),
            )
        )
        if i + 1 < len(visits):
            z_next = visits[i + 1]
            entries.append(
                _entry(
                    f"Noting the FWHM, then moving the zone plate to z={z_next:g} mm.",
                    _call(counter, "set_zone_plate_z", z_mm=z_next),
                )
            )
            entries.append(
                _entry(
                    "Acquiring a new 2D image at the same region coordinates to track drift.",
                    _call(
                        counter,
                        "acquire_image_2d",
                        x=params.region_x,
                        y=params.region_y,
                        width=params.region_size,
                        height=params.region_size,
                        step=params.region_step,
                    ),
                )
            )
    best = min(visits, key=lambda z: abs(z - scenario.z_focus))
    entries.append(
        _entry(
            f"The FWHM is minimal at z = {best:g} mm; moving further increases it "
            f"again. The optimal focus is {best:g} mm. TERMINATE"
        )
    )
    return entries


def grid_centers(params: FeatureSearchParams) -> list[tuple[float, float]]:
    """Row-major grid of FOV centers covering the search bounds, top row first."""
    xs: list[float] = []
    x = params.x_min + params.fov / 2.0
    while x <= params.x_max - params.fov / 2.0 + 1e-9:
        xs.append(round(x, 6))
        x += params.coarse_step
    ys: list[float] = []
    y = params.y_max - params.fov / 2.0
    while y >= params.y_min + params.fov / 2.0 - 1e-9:
        ys.append(round(y, 6))
        y -= params.coarse_step
    return [(cx, cy) for cy in ys for cx in xs]


def build_feature_search_script(
    params: FeatureSearchParams | None = None,
    star_center: tuple[float, float] | None = None,
    star_radius: float = 6.0,
) -> list[ScriptEntry]:
    """Replay script for :func:`eaa.workflows.run_feature_search`.

    With a *star_center*, the grid is walked until the feature edges into the
    FOV, then two refinement steps center it and the script terminates.  With
    ``star_center=None`` (negative control) every grid cell is visited and the
    script simply runs out of places to look.
    """
    params = params or FeatureSearchParams()
    counter = [0]
    entries: list[ScriptEntry] = []

    def visit(cx: float, cy: float, reason: str) -> None:
        entries.append(
            _entry(
                reason,
                _call(
                    counter,
                    "acquire_image_2d",
                    x=cx,
                    y=cy,
                    width=params.fov,
                    height=params.fov,
                    step=params.scan_step,
                ),
            )
        )

    centers = grid_centers(params)
    if star_center is None:
        for i, (cx, cy) in enumerate(centers):
            visit(cx, cy, f"Grid search step {i + 1}: scanning cell ({cx:g}, {cy:g}).")
        entries.append(
            _entry("The requested feature did not appear in any scanned cell. NEED HUMAN")
        )
        return entries

    sx, sy = star_center
    for i, (cx, cy) in enumerate(centers):
        reach = params.fov / 2.0 + star_radius
        sees_star = abs(cx - sx) < reach and abs(cy - sy) < reach
        visit(cx, cy, f"Grid search step {i + 1}: scanning cell ({cx:g}, {cy:g}).")
        if sees_star:
            break
    else:
        entries.append(_entry("The feature never appeared in the grid. NEED HUMAN"))
        return entries

    last = centers[i]
    midpoint = (round((last[0] + sx) / 2.0, 6), round((last[1] + sy) / 2.0, 6))
    visit(*midpoint, "Part of the feature is visible; stepping toward it.")
    visit(sx, sy, "Centering the field of view on the feature.")
    entries.append(
        _entry(
            f"The requested feature is now centered in the FOV at x = {sx:g}, "
            f"y = {sy:g}. TERMINATE"
        )
    )
    return entries


def build_grid_script(
    locations: list[tuple[float, float]] | None = None,
    size: float = 256.0,
    calls_per_response: int = 1,
) -> list[ScriptEntry]:
    """Script acquiring the benchmark grid, one or more calls per response."""
    locations = locations or [(0.0, 0.0), (100.0, 0.0), (0.0, 100.0), (100.0, 100.0)]
    counter = [0]
    calls = [
        _call(counter, "acquire_image", x=x, y=y, width=size, height=size)
        for x, y in locations
    ]
    entries: list[ScriptEntry] = []
    for i in range(0, len(calls), calls_per_response):
        chunk = calls[i : i + calls_per_response]
        entries.append(_entry(f"Acquiring image {i + 1} of {len(calls)}.", *chunk))
    entries.append(_entry("All 4 images have been acquired. TERMINATE"))
    return entries


def build_marker_echo_script(
    truths: list[tuple[float, float]], offset: tuple[float, float] = (0.0, 0.0)
) -> list[ScriptEntry]:
    """One reply per trial echoing the true marker coordinates (plus an offset)."""
    return [
        _entry(f"x = {tx + offset[0]:g}, y = {ty + offset[1]:g}") for tx, ty in truths
    ]


def repeat_script(entries: list[ScriptEntry], trials: int) -> list[ScriptEntry]:
    """Concatenate a per-trial script for a multi-trial benchmark run."""
    return [entry for _ in range(trials) for entry in entries]
