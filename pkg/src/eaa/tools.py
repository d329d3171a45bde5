"""Instrument tools: schema-declared, stateful wrappers around the simulator.

Result text is structured as ``key=value`` lines followed by prose, so
workflow hooks can parse it while the model reads it as plain text.  Image
files land under the beamline's session directory; result text quotes the
file name while ``image_paths`` carries the resolvable path.
"""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np

from .agent import Tool, ToolOutput, ToolParam
from .beamline import ScanRecord, VirtualBeamline
from .plotting import save_png


def parse_kv(text: str) -> dict[str, str]:
    """Parse ``key=value`` pairs out of tool result text (commas or newlines)."""
    out: dict[str, str] = {}
    for match in re.finditer(r"([A-Za-z_][A-Za-z0-9_]*)\s*=\s*([^,\n]+)", text):
        out[match.group(1)] = match.group(2).strip()
    return out


def _image_name(record: ScanRecord) -> str:
    return Path(record.rendered_path).name


class BeamlineTool(Tool):
    def __init__(self, beamline: VirtualBeamline) -> None:
        self.beamline = beamline


class AcquireImage2D(BeamlineTool):
    name = "acquire_image_2d"
    description = (
        "Acquire a 2D raster scan image centered on (x, y) with the given width, "
        "height, and step, all in sample units (um). Returns the rendered image "
        "with axis ticks in sample coordinates (row 0 = minimum y)."
    )
    produces_images = True

    def __init__(self, beamline: VirtualBeamline) -> None:
        super().__init__(beamline)
        lim = beamline.config
        self.params = (
            ToolParam("x", "number", "scan center x (um)", minimum=lim.x_limits.lo, maximum=lim.x_limits.hi),
            ToolParam("y", "number", "scan center y (um)", minimum=lim.y_limits.lo, maximum=lim.y_limits.hi),
            ToolParam("width", "number", "scan width (um)", minimum=0.0),
            ToolParam("height", "number", "scan height (um)", minimum=0.0),
            ToolParam("step", "number", "step size (um)", minimum=0.0),
        )

    def call(self, x: float, y: float, width: float, height: float, step: float) -> ToolOutput:
        record = self.beamline.acquire_2d(x, y, width, height, step)
        ny, nx = record.data.shape
        text = (
            f"x_center={x:.3f}, y_center={y:.3f}\n"
            f"width={width:.3f}, height={height:.3f}, step={step:.4f}\n"
            f"nx={nx}, ny={ny}\n"
            f"image_path={_image_name(record)}\n"
            "Acquired 2D image. Axis ticks are sample coordinates in um; row 0 is the minimum y."
        )
        return ToolOutput(text=text, image_paths=(record.rendered_path,))


class ScanLine1D(BeamlineTool):
    name = "scan_line_1d"
    description = (
        "Scan along a straight line from (x_start, y_start) to (x_end, y_end) with "
        "n_points samples. Fits a Gaussian to the profile and reports its FWHM; "
        "returns an annotated profile plot."
    )
    produces_images = True

    def __init__(self, beamline: VirtualBeamline) -> None:
        super().__init__(beamline)
        lim = beamline.config
        self.params = (
            ToolParam("x_start", "number", "start x (um)", minimum=lim.x_limits.lo, maximum=lim.x_limits.hi),
            ToolParam("y_start", "number", "start y (um)", minimum=lim.y_limits.lo, maximum=lim.y_limits.hi),
            ToolParam("x_end", "number", "end x (um)", minimum=lim.x_limits.lo, maximum=lim.x_limits.hi),
            ToolParam("y_end", "number", "end y (um)", minimum=lim.y_limits.lo, maximum=lim.y_limits.hi),
            ToolParam("n_points", "integer", "number of samples (>= 8)", minimum=8),
        )

    def call(self, x_start: float, y_start: float, x_end: float, y_end: float, n_points: int) -> ToolOutput:
        record = self.beamline.scan_line_1d(x_start, y_start, x_end, y_end, int(n_points))
        if record.fit is not None:
            peak = self.beamline.peak_position(record)
            assert peak is not None
            text = (
                f"FWHM={record.fit.fwhm:.4g}\n"
                f"peak_distance={record.fit.center:.4f}\n"
                f"peak_x={peak[0]:.4f}, peak_y={peak[1]:.4f}\n"
                f"image_path={_image_name(record)}\n"
                "Line profile fitted with a Gaussian; FWHM is in sample units (um)."
            )
        else:
            text = (
                f"image_path={_image_name(record)}\n"
                "The scanned profile did not contain a discernible peak (no FWHM available)."
            )
        return ToolOutput(text=text, image_paths=(record.rendered_path,))


class SetZonePlateZ(BeamlineTool):
    name = "set_zone_plate_z"
    description = "Move the zone plate to the given z position (mm). Changing z drifts the field of view."

    def __init__(self, beamline: VirtualBeamline) -> None:
        super().__init__(beamline)
        lim = beamline.config.z_limits
        self.params = (
            ToolParam("z_mm", "number", "target zone plate z (mm)", minimum=lim.lo, maximum=lim.hi),
        )

    def call(self, z_mm: float) -> ToolOutput:
        return ToolOutput(text=self.beamline.set_zone_plate_z(z_mm))


class MoveStage(BeamlineTool):
    name = "move_stage"
    description = "Move the sample stage to absolute coordinates (x, y) in sample units (um)."

    def __init__(self, beamline: VirtualBeamline) -> None:
        super().__init__(beamline)
        lim = beamline.config
        self.params = (
            ToolParam("x", "number", "target x (um)", minimum=lim.x_limits.lo, maximum=lim.x_limits.hi),
            ToolParam("y", "number", "target y (um)", minimum=lim.y_limits.lo, maximum=lim.y_limits.hi),
        )

    def call(self, x: float, y: float) -> ToolOutput:
        return ToolOutput(text=self.beamline.move_stage(x, y))


class ReadStatus(BeamlineTool):
    name = "read_status"
    description = "Read the current stage position and zone plate z."

    def call(self) -> ToolOutput:
        b = self.beamline
        return ToolOutput(
            text=(
                f"stage_x={b.stage_x:.3f}, stage_y={b.stage_y:.3f}\n"
                f"zone_plate_z={b.zone_plate_z:.3f}"
            )
        )


class DummyAcquire(Tool):
    """Call-recording acquirer returning a canned gray image (benchmark stand-in)."""

    name = "acquire_image"
    description = (
        "Acquire an image at pixel location (x, y) with the given size in pixels. "
        "Returns the acquired image."
    )
    produces_images = True
    params = (
        ToolParam("x", "number", "image location x (pixels)"),
        ToolParam("y", "number", "image location y (pixels)"),
        ToolParam("width", "number", "image width (pixels)"),
        ToolParam("height", "number", "image height (pixels)"),
    )

    def __init__(self, out_dir: str | Path = "eaa_out/dummy") -> None:
        self.out_dir = Path(out_dir)
        self.calls: list[tuple[float, float, float, float]] = []

    def call(self, x: float, y: float, width: float, height: float) -> ToolOutput:
        self.calls.append((x, y, width, height))
        canned = np.full((32, 32), 0.5)
        path = save_png(canned, self.out_dir / f"dummy_{len(self.calls):03d}.png")
        return ToolOutput(
            text=f"x={x:g}, y={y:g}, width={width:g}, height={height:g}\nAcquired image.",
            image_paths=(path,),
        )

    def hit_set(self) -> set[tuple[float, float, float, float]]:
        return set(self.calls)


class PythonExec(Tool):
    """Code-execution stub. Marked high-risk so registration defaults to
    requiring human approval; actual execution is not available in this build."""

    name = "python_exec"
    description = "Run a Python snippet (disabled in this build)."
    high_risk = True
    params = (ToolParam("code", "string", "Python source to run"),)

    def call(self, code: str) -> ToolOutput:
        raise RuntimeError("code execution is not available in this build")


def microscope_tools(beamline: VirtualBeamline) -> list[Tool]:
    """The standard instrument tool suite for one simulator."""
    return [
        AcquireImage2D(beamline),
        ScanLine1D(beamline),
        SetZonePlateZ(beamline),
        MoveStage(beamline),
        ReadStatus(beamline),
    ]
