"""Surface and terrain rasters, and building height extraction from their difference.

Heights come from the difference between a digital surface model (DSM, roofs and
canopy included) and a digital terrain model (DTM, bare earth). For each footprint
the band of raster cells hugging the perimeter is sampled and the maximum
DSM minus DTM difference inside that band becomes the eave height estimate. The
perimeter band dodges both the courtyard noise of inner cells and the street
clutter further out.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import Polygon

HEIGHT_MIN_M = 2.5
HEIGHT_MAX_M = 150.0

_ALIGN_TOL = 1e-6


class RasterFormatError(ValueError):
    pass


class RasterAlignmentError(ValueError):
    """DSM and DTM do not share shape, origin and cell size."""


class RasterNodataError(ValueError):
    """A sampled cell holds the nodata sentinel."""


class EmptyBandError(ValueError):
    """No raster cell center falls inside the requested perimeter band."""


@dataclass
class RasterGrid:
    """Regular grid in the local metric frame. Row 0 is the northernmost row."""

    data: np.ndarray
    xll: float
    yll: float
    cellsize: float
    nodata: float = -9999.0

    @property
    def nrows(self) -> int:
        return self.data.shape[0]

    @property
    def ncols(self) -> int:
        return self.data.shape[1]

    def cell_center(self, row: int, col: int) -> tuple[float, float]:
        x = self.xll + (col + 0.5) * self.cellsize
        y = self.yll + (self.nrows - row - 0.5) * self.cellsize
        return x, y

    def window(self, xmin: float, ymin: float, xmax: float, ymax: float):
        """Index ranges (row0, row1, col0, col1) whose cell centers may fall in the bbox."""
        c0 = int(math.floor((xmin - self.xll) / self.cellsize - 0.5))
        c1 = int(math.ceil((xmax - self.xll) / self.cellsize - 0.5)) + 1
        # rows count from the top
        r0 = int(math.floor((self.yll + self.nrows * self.cellsize - ymax) / self.cellsize - 0.5))
        r1 = int(math.ceil((self.yll + self.nrows * self.cellsize - ymin) / self.cellsize - 0.5)) + 1
        return max(r0, 0), min(r1, self.nrows), max(c0, 0), min(c1, self.ncols)

    def aligned_with(self, other: "RasterGrid") -> bool:
        return (
            self.data.shape == other.data.shape
            and abs(self.xll - other.xll) <= _ALIGN_TOL
            and abs(self.yll - other.yll) <= _ALIGN_TOL
            and abs(self.cellsize - other.cellsize) <= _ALIGN_TOL
        )


def load_raster(path: str | Path) -> RasterGrid:
    """Read an ESRI ASCII grid (ncols/nrows/xllcorner/yllcorner/cellsize header)."""
    path = Path(path)
    header: dict[str, float] = {}
    with path.open() as fh:
        lines = fh.read().split("\n")
    idx = 0
    while idx < len(lines):
        parts = lines[idx].split()
        if len(parts) == 2 and parts[0].lower() in (
            "ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "nodata_value",
        ):
            header[parts[0].lower()] = float(parts[1])
            idx += 1
        else:
            break
    for key in ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize"):
        if key not in header:
            raise RasterFormatError(f"{path}: missing header field {key}")
    ncols = int(header["ncols"])
    nrows = int(header["nrows"])
    body = "\n".join(lines[idx:])
    values = np.array(body.split(), dtype=float)
    if values.size != nrows * ncols:
        raise RasterFormatError(
            f"{path}: expected {nrows * ncols} cells, found {values.size}"
        )
    return RasterGrid(
        data=values.reshape(nrows, ncols),
        xll=header["xllcorner"],
        yll=header["yllcorner"],
        cellsize=header["cellsize"],
        nodata=header.get("nodata_value", -9999.0),
    )


def write_raster(grid: RasterGrid, path: str | Path, decimals: int = 3) -> None:
    path = Path(path)
    fmt = f"%.{decimals}f"
    with path.open("w", newline="\n") as fh:
        fh.write(f"ncols {grid.ncols}\n")
        fh.write(f"nrows {grid.nrows}\n")
        fh.write(f"xllcorner {grid.xll:.3f}\n")
        fh.write(f"yllcorner {grid.yll:.3f}\n")
        fh.write(f"cellsize {grid.cellsize:.3f}\n")
        fh.write(f"NODATA_value {grid.nodata:.1f}\n")
        for row in grid.data:
            fh.write(" ".join(fmt % v for v in row))
            fh.write("\n")


@dataclass(frozen=True)
class PerimeterBand:
    """Signed-distance window around the footprint boundary, negative side inward."""

    inner_offset_m: float = -0.5
    outer_offset_m: float = 0.5

    def __post_init__(self):
        if not self.inner_offset_m < self.outer_offset_m:
            raise ValueError("perimeter band requires inner < outer")


@dataclass(frozen=True)
class HeightSample:
    height_m: float
    raw_max_m: float
    cell_count: int
    clamped: bool


def band_cell_indices(
    footprint: Polygon, grid: RasterGrid, band: PerimeterBand
) -> tuple[np.ndarray, np.ndarray]:
    """Rows and cols of grid cells whose centers land inside the perimeter band."""
    xmin, ymin, xmax, ymax = footprint.bounds()
    pad = abs(band.outer_offset_m) + grid.cellsize
    r0, r1, c0, c1 = grid.window(xmin - pad, ymin - pad, xmax + pad, ymax + pad)
    if r0 >= r1 or c0 >= c1:
        return np.empty(0, dtype=int), np.empty(0, dtype=int)
    rows = np.arange(r0, r1)
    cols = np.arange(c0, c1)
    xs = grid.xll + (cols + 0.5) * grid.cellsize
    ys = grid.yll + (grid.nrows - rows - 0.5) * grid.cellsize
    gx, gy = np.meshgrid(xs, ys)
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    d = footprint.boundary_distance(pts)
    mask = (d >= band.inner_offset_m) & (d <= band.outer_offset_m)
    rr, cc = np.meshgrid(rows, cols, indexing="ij")
    return rr.ravel()[mask], cc.ravel()[mask]


def extract_height(
    footprint: Polygon,
    dsm: RasterGrid,
    dtm: RasterGrid,
    band: PerimeterBand = PerimeterBand(),
    parcel_id: str = "",
) -> HeightSample:
    """Max DSM minus DTM difference over the perimeter band, clamped to plausible bounds."""
    tag = f" (parcel {parcel_id})" if parcel_id else ""
    if not dsm.aligned_with(dtm):
        raise RasterAlignmentError(f"DSM and DTM grids are not aligned{tag}")
    rows, cols = band_cell_indices(footprint, dsm, band)
    if rows.size == 0:
        raise EmptyBandError(f"no raster cells inside the perimeter band{tag}")
    surf = dsm.data[rows, cols]
    terr = dtm.data[rows, cols]
    if np.any(surf == dsm.nodata) or np.any(terr == dtm.nodata):
        raise RasterNodataError(f"nodata cell inside the perimeter band{tag}")
    raw = float(np.max(surf - terr))
    clamped_value = min(max(raw, HEIGHT_MIN_M), HEIGHT_MAX_M)
    return HeightSample(
        height_m=clamped_value,
        raw_max_m=raw,
        cell_count=int(rows.size),
        clamped=clamped_value != raw,
    )
