"""Image-level representations: soft Gaussian maps, pooling, stripes.

An image is converted to 16 soft Gaussian maps per color space, each
map is max-pooled over non-overlapping 3x3 patches, and every
horizontal stripe is sum-pooled and sum-normalized into a 16-vector.
Concatenating the stripes over (view, space) yields the final
descriptor.  Complementary per-stripe color histograms and local
ternary texture histograms are available for fusion, and descriptor
sets can be persisted to a compact binary file or exported as CSV.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    ArtifactMismatch,
    CorruptFile,
    EmptyStripe,
    SourceMismatch,
    StackTooSmall,
    UnsupportedFormat,
)
from .imaging import ALL_SPACES, ColorSpace, ForegroundMask, PixelSet, RasterImage, convert
from .sgm import (
    DEFAULT_EPSILON0,
    ColorNamePalette,
    GaussianMapModel,
    default_palette,
    fit_model,
    identity_model,
    soft_map,
)

POOL_SIZE = 3  # max pooling over 3x3 patches with stride 3

FEATURE_KINDS = ("SGM", "CH", "SILTP")

VIEW_WHOLE = "whole"
VIEW_FOREGROUND = "foreground"

CH_BINS = 16        # histogram bins per color channel
SILTP_TAU = 0.3     # relative comparison threshold
SILTP_CODES = 81    # 4 ternary neighbors -> 3**4 codes

DESCRIPTOR_MAGIC = b"SGMD"
DESCRIPTOR_VERSION = 1


@dataclass(frozen=True)
class ExtractionConfig:
    """Knobs of the extraction pipeline; defaults follow the evaluated setup."""

    k: int = 5
    stripes: int = 10
    spaces: tuple[ColorSpace, ...] = ALL_SPACES
    use_mask: bool = True
    epsilon0: float = DEFAULT_EPSILON0
    features: tuple[str, ...] = ("SGM",)
    palette_path: str | None = None
    euclidean: bool = False   # force the identity covariance (no discrepancy fit)
    global_fit: bool = False  # fit shared models on pixels pooled across a corpus

    def __post_init__(self):
        if not 1 <= self.k <= 16:
            raise ValueError(f"k must lie in [1, 16], got {self.k}")
        if self.stripes < 1:
            raise ValueError(f"stripe count must be positive, got {self.stripes}")
        for kind in self.features:
            if kind not in FEATURE_KINDS:
                raise ValueError(f"unknown feature kind {kind!r}")


@dataclass(frozen=True)
class LayoutRecord:
    """One contiguous segment of a representation vector."""

    kind: str
    space: str | None
    view: str
    stripe: int
    length: int

    def path(self) -> str:
        space = self.space if self.space is not None else "gray"
        return f"{self.kind}/{space}/{self.view}/stripe{self.stripe:02d}"


@dataclass(frozen=True)
class ImageRepresentation:
    """Concatenated per-stripe descriptor vector plus provenance.

    ``vector`` is float32 (the storage dtype); ``layout`` records the
    ordered segments the vector concatenates.
    """

    vector: np.ndarray
    layout: tuple[LayoutRecord, ...]
    source_id: str = ""

    def __post_init__(self):
        total = sum(rec.length for rec in self.layout)
        if total != self.vector.shape[0]:
            raise ArtifactMismatch(
                f"layout covers {total} components but vector has {self.vector.shape[0]}"
            )

    @property
    def dim(self) -> int:
        return int(self.vector.shape[0])


def feature_span(layout, kind: str) -> tuple[int, int]:
    """(offset, length) of the contiguous segment of ``kind`` in a layout."""
    offset = 0
    start = None
    length = 0
    for rec in layout:
        if rec.kind == kind:
            if start is None:
                start = offset
            elif offset != start + length:
                raise ArtifactMismatch(f"feature kind {kind} is not contiguous in layout")
            length += rec.length
        offset += rec.length
    if start is None:
        raise ArtifactMismatch(f"feature kind {kind} is absent from layout")
    return start, length


def stripe_bounds(height: int, stripes: int) -> list[tuple[int, int]]:
    """Equal-height horizontal stripes; remainder rows join the last one."""
    base = height // stripes
    if base == 0:
        raise EmptyStripe(f"{height} rows cannot form {stripes} stripes")
    bounds = [(i * base, (i + 1) * base) for i in range(stripes)]
    bounds[-1] = (bounds[-1][0], height)
    return bounds


def build_maps(
    image: RasterImage,
    space: ColorSpace,
    palette: ColorNamePalette,
    k: int,
    mask: ForegroundMask | None = None,
    epsilon0: float = DEFAULT_EPSILON0,
    model: GaussianMapModel | None = None,
) -> np.ndarray:
    """Convert an image into its 16 soft Gaussian maps, shape (16, h, w).

    The discrepancy model is fitted on the masked pixel set when a mask
    is given (whole image when it selects nothing) and then evaluated at
    every location of the full grid.  A pre-fitted ``model`` skips the
    fit, which serves both shared-corpus fits and the forced-identity
    covariance variant.
    """
    grid = convert(image, space)
    if model is None:
        fit_pixels = grid
        if mask is not None:
            # Conversion is per-pixel, so masking the converted grid equals
            # converting the masked selection.
            keep = mask.values.reshape(-1) == 1
            if keep.any():
                fit_pixels = PixelSet(space=space, points=grid.points[keep])
        model = fit_model(fit_pixels, palette, epsilon0)
    weights = soft_map(model, grid.points, palette, k)
    return np.ascontiguousarray(weights.reshape(image.height, image.width, 16).transpose(2, 0, 1))


def max_pool(stack: np.ndarray) -> np.ndarray:
    """Max-pool each plane over non-overlapping 3x3 patches (stride 3).

    Right/bottom remainder patches narrower than 3 pool over their
    actual extent; output dims are ceil(h/3) x ceil(w/3).
    """
    planes, height, width = stack.shape
    if height < POOL_SIZE or width < POOL_SIZE:
        raise StackTooSmall(f"stack is {width}x{height}; pooling needs at least 3x3")
    rows = np.arange(0, height, POOL_SIZE)
    cols = np.arange(0, width, POOL_SIZE)
    pooled = np.maximum.reduceat(stack, rows, axis=1)
    pooled = np.maximum.reduceat(pooled, cols, axis=2)
    return pooled


def stripe_descriptor(stack: np.ndarray, stripe: tuple[int, int]) -> np.ndarray:
    """Sum-pool one stripe of a (pooled) stack and sum-normalize.

    ``stripe`` is a half-open (start, stop) row range.  A zero-sum
    stripe degenerates to the uniform distribution.
    """
    start, stop = stripe
    height = stack.shape[1]
    if not (0 <= start < stop <= height):
        raise EmptyStripe(f"rows [{start}, {stop}) are empty within height {height}")
    values = stack[:, start:stop, :].sum(axis=(1, 2))
    total = values.sum()
    if total <= 0.0:
        return np.full(stack.shape[0], 1.0 / stack.shape[0])
    return values / total


def _views(mask: ForegroundMask | None, config: ExtractionConfig):
    views = [(VIEW_WHOLE, None)]
    if mask is not None and config.use_mask:
        views.append((VIEW_FOREGROUND, mask))
    return views


def _stripe_pixel_selector(mask, bounds, width):
    """Per-stripe flat pixel indices; masked stripes fall back to all rows."""
    selectors = []
    for start, stop in bounds:
        rows = np.arange(start, stop)
        if mask is None:
            sel = np.ones((stop - start) * width, dtype=bool)
        else:
            sel = (mask.values[rows, :] == 1).reshape(-1)
            if not sel.any():
                sel = np.ones((stop - start) * width, dtype=bool)
        base = start * width
        selectors.append(base + np.flatnonzero(sel))
    return selectors


def extract_sgm(
    image: RasterImage,
    mask: ForegroundMask | None,
    config: ExtractionConfig,
    palette: ColorNamePalette | None = None,
    source_id: str = "",
    shared_models: dict | None = None,
) -> ImageRepresentation:
    """Full soft-Gaussian-map representation of one image.

    Concatenation order is (view, space, stripe, color name) with the
    view outermost; whole-image first, then the foreground view when a
    mask is in play.  With the default configuration this yields
    16 x stripes x spaces x views components.
    """
    palette = palette or default_palette()
    segments = []
    layout = []
    for view, view_mask in _views(mask, config):
        for space in config.spaces:
            if config.euclidean:
                model = identity_model(config.epsilon0)
            elif shared_models is not None:
                model = shared_models[(space, view)]
            else:
                model = None
            stack = build_maps(
                image, space, palette, config.k,
                mask=view_mask, epsilon0=config.epsilon0, model=model,
            )
            pooled = max_pool(stack)
            for idx, bounds in enumerate(stripe_bounds(pooled.shape[1], config.stripes)):
                segments.append(stripe_descriptor(pooled, bounds))
                layout.append(
                    LayoutRecord(kind="SGM", space=space.value, view=view,
                                 stripe=idx, length=16)
                )
    vector = np.concatenate(segments).astype(np.float32)
    return ImageRepresentation(vector=vector, layout=tuple(layout), source_id=source_id)


def fit_shared_models(
    items,
    config: ExtractionConfig,
    palette: ColorNamePalette | None = None,
) -> dict:
    """Fit one model per (space, view) on pixels pooled across a corpus.

    ``items`` iterates (image, mask-or-None) pairs.  The returned dict
    plugs into ``extract_sgm`` via ``shared_models``.
    """
    palette = palette or default_palette()
    pools: dict = {}
    for image, mask in items:
        for view, view_mask in _views(mask, config):
            for space in config.spaces:
                pts = convert(image, space, view_mask).points
                pools.setdefault((space, view), []).append(pts)
    models = {}
    for (space, view), chunks in pools.items():
        points = np.concatenate(chunks, axis=0)
        models[(space, view)] = fit_model(
            PixelSet(space=space, points=points), palette, config.epsilon0
        )
    return models


def extract_color_histogram(
    image: RasterImage,
    mask: ForegroundMask | None,
    config: ExtractionConfig,
    source_id: str = "",
) -> ImageRepresentation:
    """Per-stripe marginal color histograms, 16 bins per channel.

    Histograms are taken over un-pooled pixels in the same (view,
    space, stripe) order as the map pipeline; each stripe's 48-vector is
    sum-normalized.  Foreground stripes with no masked pixel fall back
    to all of the stripe's pixels.
    """
    bounds = stripe_bounds(image.height, config.stripes)
    segments = []
    layout = []
    for view, view_mask in _views(mask, config):
        selectors = _stripe_pixel_selector(view_mask, bounds, image.width)
        for space in config.spaces:
            points = convert(image, space).points
            for idx, select in enumerate(selectors):
                vals = points[select]
                bins = np.minimum((vals * CH_BINS).astype(np.int64), CH_BINS - 1)
                hist = np.concatenate(
                    [np.bincount(bins[:, c], minlength=CH_BINS) for c in range(3)]
                ).astype(np.float64)
                segments.append(hist / hist.sum())
                layout.append(
                    LayoutRecord(kind="CH", space=space.value, view=view,
                                 stripe=idx, length=3 * CH_BINS)
                )
    vector = np.concatenate(segments).astype(np.float32)
    return ImageRepresentation(vector=vector, layout=tuple(layout), source_id=source_id)


def siltp_codes(gray: np.ndarray, tau: float = SILTP_TAU) -> np.ndarray:
    """Scale-invariant local ternary pattern codes, radius 1, 4 neighbors.

    Each neighbor contributes a ternary digit: 1 above (1+tau) times the
    center, 2 below (1-tau) times the center, 0 otherwise; digit order
    is north, east, south, west (base-3, north least significant).
    Edges use replicate padding.
    """
    padded = np.pad(gray, 1, mode="edge")
    center = gray
    upper = (1.0 + tau) * center
    lower = (1.0 - tau) * center
    code = np.zeros(gray.shape, dtype=np.int64)
    neighbors = (
        padded[:-2, 1:-1],  # north
        padded[1:-1, 2:],   # east
        padded[2:, 1:-1],   # south
        padded[1:-1, :-2],  # west
    )
    weight = 1
    for nb in neighbors:
        digit = np.where(nb > upper, 1, np.where(nb < lower, 2, 0))
        code += weight * digit
        weight *= 3
    return code


def extract_siltp(
    image: RasterImage,
    mask: ForegroundMask | None,
    config: ExtractionConfig,
    source_id: str = "",
) -> ImageRepresentation:
    """Per-stripe ternary-pattern texture histograms on the gray image."""
    gray = image.pixels.astype(np.float64).sum(axis=2) / (3.0 * 255.0)
    codes = siltp_codes(gray).reshape(-1)
    bounds = stripe_bounds(image.height, config.stripes)
    segments = []
    layout = []
    for view, view_mask in _views(mask, config):
        selectors = _stripe_pixel_selector(view_mask, bounds, image.width)
        for idx, select in enumerate(selectors):
            hist = np.bincount(codes[select], minlength=SILTP_CODES).astype(np.float64)
            segments.append(hist / hist.sum())
            layout.append(
                LayoutRecord(kind="SILTP", space=None, view=view,
                             stripe=idx, length=SILTP_CODES)
            )
    vector = np.concatenate(segments).astype(np.float32)
    return ImageRepresentation(vector=vector, layout=tuple(layout), source_id=source_id)


def fuse(reps: list[ImageRepresentation]) -> ImageRepresentation:
    """Concatenate representations of the same source image, in order."""
    if not reps:
        raise ValueError("nothing to fuse")
    source = reps[0].source_id
    for rep in reps[1:]:
        if rep.source_id != source:
            raise SourceMismatch(f"cannot fuse {rep.source_id!r} into {source!r}")
    vector = np.concatenate([rep.vector for rep in reps])
    layout = tuple(rec for rep in reps for rec in rep.layout)
    return ImageRepresentation(vector=vector, layout=layout, source_id=source)


def extract_features(
    image: RasterImage,
    mask: ForegroundMask | None,
    config: ExtractionConfig,
    palette: ColorNamePalette | None = None,
    source_id: str = "",
    shared_models: dict | None = None,
) -> ImageRepresentation:
    """Extract and fuse every feature kind requested by the config."""
    parts = []
    for kind in config.features:
        if kind == "SGM":
            parts.append(
                extract_sgm(image, mask, config, palette=palette,
                            source_id=source_id, shared_models=shared_models)
            )
        elif kind == "CH":
            parts.append(extract_color_histogram(image, mask, config, source_id=source_id))
        else:
            parts.append(extract_siltp(image, mask, config, source_id=source_id))
    return parts[0] if len(parts) == 1 else fuse(parts)


def _layout_to_json(layout) -> list:
    return [
        {"kind": r.kind, "space": r.space, "view": r.view,
         "stripe": r.stripe, "length": r.length}
        for r in layout
    ]


def _layout_from_json(records) -> tuple[LayoutRecord, ...]:
    try:
        return tuple(
            LayoutRecord(kind=r["kind"], space=r["space"], view=r["view"],
                         stripe=int(r["stripe"]), length=int(r["length"]))
            for r in records
        )
    except (KeyError, TypeError) as exc:
        raise CorruptFile(f"malformed layout footer: {exc}") from None


def save_descriptors(path, reps: list[ImageRepresentation]) -> None:
    """Write representations to the binary descriptor format.

    Layout: magic ``SGMD``, version u16, count u32, dim u32 (all
    little-endian), count*dim float32 values row-major, then a JSON text
    footer holding the shared layout and the per-row source ids.  All
    rows must share one layout.
    """
    if not reps:
        raise ValueError("nothing to save")
    layout = reps[0].layout
    for rep in reps[1:]:
        if rep.layout != layout:
            raise ArtifactMismatch("descriptor rows disagree on layout")
    dim = reps[0].dim
    matrix = np.vstack([rep.vector for rep in reps]).astype("<f4")
    footer = json.dumps(
        {"layout": _layout_to_json(layout), "source_ids": [rep.source_id for rep in reps]}
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(DESCRIPTOR_MAGIC)
        fh.write(struct.pack("<HII", DESCRIPTOR_VERSION, len(reps), dim))
        fh.write(matrix.tobytes())
        fh.write(footer)


def load_descriptors(path) -> list[ImageRepresentation]:
    """Read back a descriptor file written by ``save_descriptors``."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != DESCRIPTOR_MAGIC:
        raise UnsupportedFormat(f"{path}: bad magic {data[:4]!r}, expected {DESCRIPTOR_MAGIC!r}")
    header = struct.calcsize("<HII")
    if len(data) < 4 + header:
        raise CorruptFile(f"{path}: truncated header")
    version, count, dim = struct.unpack("<HII", data[4 : 4 + header])
    if version != DESCRIPTOR_VERSION:
        raise UnsupportedFormat(f"{path}: unsupported version {version}")
    start = 4 + header
    need = count * dim * 4
    if len(data) < start + need:
        raise CorruptFile(f"{path}: payload holds {len(data) - start} bytes, expected {need}")
    matrix = np.frombuffer(data[start : start + need], dtype="<f4").reshape(count, dim)
    try:
        footer = json.loads(data[start + need :].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptFile(f"{path}: malformed footer: {exc}") from None
    layout = _layout_from_json(footer.get("layout", []))
    source_ids = footer.get("source_ids", [])
    if len(source_ids) != count:
        raise CorruptFile(f"{path}: footer lists {len(source_ids)} ids for {count} rows")
    if sum(rec.length for rec in layout) != dim:
        raise CorruptFile(f"{path}: layout does not cover dim {dim}")
    return [
        ImageRepresentation(vector=matrix[i].copy(), layout=layout, source_id=source_ids[i])
        for i in range(count)
    ]


def export_csv(path, reps: list[ImageRepresentation]) -> None:
    """Write one CSV row per image; the header names every component."""
    if not reps:
        raise ValueError("nothing to export")
    layout = reps[0].layout
    columns = ["source_id"]
    for rec in layout:
        prefix = rec.path()
        columns.extend(f"{prefix}/c{i:02d}" for i in range(rec.length))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(columns) + "\n")
        for rep in reps:
            values = ",".join("%.9g" % v for v in rep.vector)
            fh.write(f"{rep.source_id},{values}\n")
