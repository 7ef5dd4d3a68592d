"""Soft Gaussian mapping of pixels onto a 16-entry color-name palette.

The pixel-name discrepancies of an image are modeled with a zero-mean
Gaussian whose 3x3 covariance is the average outer product over all
pixel-name pairs.  Non-positive eigenvalues are rectified so the
inverse exists, and each pixel is then described by its normalized
Gaussian likelihoods over its k most similar color names.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import EmptyPixelSet, NotPositiveDefinite
from .imaging import PixelSet

PALETTE_SIZE = 16
DEFAULT_EPSILON0 = 1e-4

# Covariance eigenvalues at or below this magnitude are treated as zero,
# so float noise cannot flip the sign seen by the rectification rule.
EIGENVALUE_SNAP = 1e-12

_GAUSS_CONST = (2.0 * np.pi) ** -1.5


@dataclass(frozen=True)
class ColorNamePalette:
    """16 reference color-name points in [0, 1]^3 with display labels."""

    names: np.ndarray  # (16, 3) float64
    labels: tuple[str, ...]

    def __post_init__(self):
        if self.names.shape != (PALETTE_SIZE, 3) or len(self.labels) != PALETTE_SIZE:
            raise ValueError(f"palette must hold exactly {PALETTE_SIZE} entries")
        if self.names.min() < 0.0 or self.names.max() > 1.0:
            raise ValueError("palette components must lie in [0, 1]")
        for i in range(PALETTE_SIZE):
            for j in range(i + 1, PALETTE_SIZE):
                if np.array_equal(self.names[i], self.names[j]):
                    raise ValueError(
                        f"palette entries {i} ({self.labels[i]}) and {j} "
                        f"({self.labels[j]}) coincide"
                    )


def parse_palette(text: str) -> ColorNamePalette:
    """Parse palette text: 16 lines of ``label r g b``, order significant.

    Blank lines and ``#`` comments are ignored.
    """
    names = []
    labels = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 4:
            raise ValueError(f"palette line {lineno}: expected 'label r g b', got {raw!r}")
        labels.append(parts[0])
        try:
            names.append([float(v) for v in parts[1:]])
        except ValueError:
            raise ValueError(f"palette line {lineno}: non-numeric component in {raw!r}") from None
    if len(names) != PALETTE_SIZE:
        raise ValueError(f"palette must hold exactly {PALETTE_SIZE} entries, got {len(names)}")
    return ColorNamePalette(names=np.asarray(names, dtype=np.float64), labels=tuple(labels))


def load_palette(path) -> ColorNamePalette:
    """Load a palette file (plain text, 16 lines of ``label r g b``)."""
    return parse_palette(Path(path).read_text())


def default_palette() -> ColorNamePalette:
    """The palette shipped with the package."""
    text = resources.files("reid_sgm").joinpath("data/colornames16.txt").read_text()
    return parse_palette(text)


def _jacobi_refine(a: np.ndarray, vecs: np.ndarray, sweeps: int = 8):
    """Polish approximate eigenvectors of symmetric ``a`` by Jacobi sweeps."""
    v = vecs
    for _ in range(sweeps):
        m = v.T @ a @ v
        off = max(abs(m[0, 1]), abs(m[0, 2]), abs(m[1, 2]))
        scale = max(abs(m[0, 0]), abs(m[1, 1]), abs(m[2, 2]), 1e-300)
        if off <= 1e-15 * scale:
            break
        for p, q in ((0, 1), (0, 2), (1, 2)):
            apq = m[p, q]
            if apq == 0.0:
                continue
            theta = 0.5 * np.arctan2(2.0 * apq, m[p, p] - m[q, q])
            c, s = np.cos(theta), np.sin(theta)
            rot = np.eye(3)
            rot[p, p] = c
            rot[q, q] = c
            rot[p, q] = -s
            rot[q, p] = s
            v = v @ rot
            m = rot.T @ m @ rot
    m = v.T @ a @ v
    return np.array([m[0, 0], m[1, 1], m[2, 2]]), v


def _null_vector(m: np.ndarray, avoid: list[np.ndarray]) -> np.ndarray:
    """Best unit vector with m @ v ~ 0, orthogonal to already-found ones."""
    cands = [
        np.cross(m[0], m[1]),
        np.cross(m[0], m[2]),
        np.cross(m[1], m[2]),
    ]
    norms = [np.linalg.norm(c) for c in cands]
    best = int(np.argmax(norms))
    if norms[best] > 1e-14:
        v = cands[best] / norms[best]
        for u in avoid:
            v -= (v @ u) * u
        n = np.linalg.norm(v)
        if n > 1e-8:
            return v / n
    # (Near-)repeated eigenvalue, or the candidate collapsed under
    # orthogonalization: any completion of the found set works, since the
    # remaining eigenspace absorbs every orthogonal direction.
    for axis in np.eye(3):
        w = axis.copy()
        for u in avoid:
            w -= (w @ u) * u
        n = np.linalg.norm(w)
        if n > 1e-8:
            return w / n
    return np.array([1.0, 0.0, 0.0])  # pragma: no cover - unreachable for len(avoid) < 3


def eig3_symmetric(a: np.ndarray):
    """Eigendecomposition of a real symmetric 3x3 matrix.

    Closed-form trigonometric eigenvalues, eigenvectors from cross
    products of the shifted rows, then Jacobi refinement sweeps.

    Returns
    -------
    vals : (3,) ndarray, ascending
    vecs : (3, 3) ndarray with orthonormal columns, vecs[:, i] matching vals[i]
    """
    a = np.asarray(a, dtype=np.float64)
    a = 0.5 * (a + a.T)
    scale = float(np.max(np.abs(a)))
    if scale == 0.0:
        return np.zeros(3), np.eye(3)
    b = a / scale

    p1 = b[0, 1] ** 2 + b[0, 2] ** 2 + b[1, 2] ** 2
    if p1 == 0.0:
        vals = np.diag(b).copy()
        order = np.argsort(vals, kind="stable")
        return vals[order] * scale, np.eye(3)[:, order]

    q = np.trace(b) / 3.0
    p2 = (b[0, 0] - q) ** 2 + (b[1, 1] - q) ** 2 + (b[2, 2] - q) ** 2 + 2.0 * p1
    p = np.sqrt(p2 / 6.0)
    m = (b - q * np.eye(3)) / p
    r = np.clip(np.linalg.det(m) / 2.0, -1.0, 1.0)
    phi = np.arccos(r) / 3.0
    hi = q + 2.0 * p * np.cos(phi)
    lo = q + 2.0 * p * np.cos(phi + 2.0 * np.pi / 3.0)
    mid = 3.0 * q - hi - lo
    vals = np.array([lo, mid, hi])

    # Recover the best-separated eigenvector first; the last comes free.
    gaps = np.array(
        [
            min(abs(vals[0] - vals[1]), abs(vals[0] - vals[2])),
            min(abs(vals[1] - vals[0]), abs(vals[1] - vals[2])),
            min(abs(vals[2] - vals[0]), abs(vals[2] - vals[1])),
        ]
    )
    order = list(np.argsort(-gaps, kind="stable"))
    vecs = [None, None, None]
    found: list[np.ndarray] = []
    for idx in order[:2]:
        v = _null_vector(b - vals[idx] * np.eye(3), found)
        vecs[idx] = v
        found.append(v)
    last = order[2]
    w = np.cross(found[0], found[1])
    n = np.linalg.norm(w)
    vecs[last] = w / n if n > 0 else _null_vector(b - vals[last] * np.eye(3), found)

    v = np.column_stack(vecs)
    vals, v = _jacobi_refine(b, v)
    order = np.argsort(vals, kind="stable")
    return vals[order] * scale, v[:, order]


@dataclass(frozen=True)
class GaussianMapModel:
    """Fitted discrepancy Gaussian for one pixel set.

    ``eigenvalues``/``eigenvectors`` decompose ``sigma`` (eigenvalues
    below the snap threshold are stored as zero); ``rectified_inverse``
    is the positive-definite inverse after tuning up non-positive
    eigenvalues, and ``norm_const`` is the Gaussian normalization built
    from the rectified determinant.
    """

    sigma: np.ndarray               # (3, 3)
    rectified_inverse: np.ndarray   # (3, 3) symmetric positive-definite
    eigenvalues: np.ndarray         # (3,)
    eigenvectors: np.ndarray        # (3, 3), orthonormal columns
    norm_const: float
    epsilon0: float = DEFAULT_EPSILON0


def rectify_eigenvalues(eigenvalues: np.ndarray, epsilon0: float) -> np.ndarray:
    """Replace each non-positive eigenvalue by 1/epsilon0."""
    eigenvalues = np.asarray(eigenvalues, dtype=np.float64)
    return np.where(eigenvalues > 0.0, eigenvalues, 1.0 / epsilon0)


def model_from_sigma(sigma: np.ndarray, epsilon0: float = DEFAULT_EPSILON0) -> GaussianMapModel:
    """Build the rectified-covariance machinery from a raw 3x3 covariance."""
    if epsilon0 <= 0.0:
        raise ValueError(f"epsilon0 must be positive, got {epsilon0}")
    sigma = np.asarray(sigma, dtype=np.float64)
    if sigma.shape != (3, 3):
        raise ValueError(f"covariance must be 3x3, got {sigma.shape}")
    if np.max(np.abs(sigma - sigma.T)) > 1e-12:
        raise ValueError("covariance must be symmetric to within 1e-12")
    sigma = 0.5 * (sigma + sigma.T)

    vals, vecs = eig3_symmetric(sigma)
    vals = np.where(np.abs(vals) <= EIGENVALUE_SNAP, 0.0, vals)
    rectified = rectify_eigenvalues(vals, epsilon0)
    inv = (vecs * (1.0 / rectified)) @ vecs.T
    inv = 0.5 * (inv + inv.T)
    norm_const = float(_GAUSS_CONST / np.sqrt(np.prod(rectified)))
    return GaussianMapModel(
        sigma=sigma,
        rectified_inverse=inv,
        eigenvalues=vals,
        eigenvectors=vecs,
        norm_const=norm_const,
        epsilon0=epsilon0,
    )


def identity_model(epsilon0: float = DEFAULT_EPSILON0) -> GaussianMapModel:
    """Model with the covariance forced to identity (plain Euclidean mode)."""
    return model_from_sigma(np.eye(3), epsilon0)


def estimate_sigma(points: np.ndarray, names: np.ndarray) -> np.ndarray:
    """Average outer product of all pixel-name discrepancies.

    Uses the expanded sufficient-statistics form rather than the n*16
    double loop; the two agree to float precision.
    """
    points = np.asarray(points, dtype=np.float64)
    names = np.asarray(names, dtype=np.float64)
    n = points.shape[0]
    k = names.shape[0]
    sum_z = points.sum(axis=0)
    sum_c = names.sum(axis=0)
    outer_z = points.T @ points
    outer_c = names.T @ names
    sigma = (k * outer_z + n * outer_c - np.outer(sum_z, sum_c) - np.outer(sum_c, sum_z)) / (
        k * n
    )
    return 0.5 * (sigma + sigma.T)


def fit_model(
    pixels: PixelSet,
    palette: ColorNamePalette,
    epsilon0: float = DEFAULT_EPSILON0,
) -> GaussianMapModel:
    """Fit the discrepancy Gaussian between a pixel set and the palette."""
    if pixels.points.shape[0] == 0:
        raise EmptyPixelSet("cannot fit a model on zero pixels")
    sigma = estimate_sigma(pixels.points, palette.names)
    return model_from_sigma(sigma, epsilon0)


def pixel_likelihoods(
    model: GaussianMapModel,
    z: np.ndarray,
    palette: ColorNamePalette,
) -> np.ndarray:
    """Gaussian likelihood of each color name for pixel(s) ``z``.

    ``z`` may be a single 3-vector or an (n, 3) batch; the result is a
    16-vector or an (n, 16) array.  Entries are finite and nonnegative;
    exponent underflow flushes to zero.
    """
    z = np.asarray(z, dtype=np.float64)
    single = z.ndim == 1
    pts = np.atleast_2d(z)
    names = palette.names
    a = model.rectified_inverse
    za = pts @ a
    quad = (
        (za * pts).sum(axis=1)[:, None]
        + ((names @ a) * names).sum(axis=1)[None, :]
        - 2.0 * (za @ names.T)
    )
    like = model.norm_const * np.exp(-0.5 * np.maximum(quad, 0.0))
    return like[0] if single else like


def soft_map(
    model: GaussianMapModel,
    z: np.ndarray,
    palette: ColorNamePalette,
    k: int,
) -> np.ndarray:
    """Normalized soft color-name descriptor over the k best names.

    Keeps the k largest likelihoods (ties go to the lower palette
    index), zeroes the rest and sum-normalizes.  If everything kept
    underflowed to zero, the kept entries share uniform weight 1/k.
    Accepts a single pixel or an (n, 3) batch like ``pixel_likelihoods``.
    """
    if not 1 <= k <= PALETTE_SIZE:
        raise ValueError(f"k must lie in [1, {PALETTE_SIZE}], got {k}")
    like = pixel_likelihoods(model, z, palette)
    single = like.ndim == 1
    like = np.atleast_2d(like)

    # Stable sort on the negated values: descending, ties by lower index.
    order = np.argsort(-like, axis=1, kind="stable")
    keep = order[:, :k]
    kept = np.take_along_axis(like, keep, axis=1)
    sums = kept.sum(axis=1, keepdims=True)
    weights = np.divide(kept, sums, out=np.full_like(kept, 1.0 / k), where=sums > 0)

    out = np.zeros_like(like)
    np.put_along_axis(out, keep, weights, axis=1)
    return out[0] if single else out


def transform_space(model: GaussianMapModel) -> np.ndarray:
    """Matrix L with L.T @ L equal to the rectified inverse covariance.

    Mapping points by L turns the model's Mahalanobis distance into a
    plain Euclidean one, which is handy for visualizing how the fitted
    covariance reshapes the space.
    """
    try:
        lower = np.linalg.cholesky(model.rectified_inverse)
    except np.linalg.LinAlgError:
        raise NotPositiveDefinite("rectified inverse covariance is not positive-definite") from None
    return lower.T
