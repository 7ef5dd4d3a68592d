"""Cross-view coupled subspace learning and similarity scoring.

Matched cross-camera pairs (x, y) define the coupled variables
m = x + y (commonness) and e = x - y (difference).  The projection W
maximizes the ratio of the intra-personal commonness variance to the
intra-personal difference variance, which reduces to a generalized
eigenproblem solved here by Cholesky whitening.  Similarity of two
projected vectors combines quadratic forms of m and e under the
projected-space covariance inverses.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import (
    CorruptFile,
    DimensionMismatch,
    NotPositiveDefinite,
    RankTooLarge,
    TooFewPairs,
    UnsupportedFormat,
)

DEFAULT_RIDGE = 1e-3
DEFAULT_SUBSPACE_DIM = 100

MODEL_MAGIC = b"CCLM"
MODEL_VERSION = 1


@dataclass(frozen=True)
class PairedSample:
    """One matched cross-camera pair; x from camera A, y from camera B."""

    x: np.ndarray
    y: np.ndarray
    person_id: str = ""


@dataclass(frozen=True)
class CoupledStats:
    """Means and intra-personal covariances of the coupled variables."""

    dim: int
    mean_x: np.ndarray
    mean_y: np.ndarray
    sigma_m: np.ndarray  # covariance of m = x + y over matched pairs
    sigma_e: np.ndarray  # covariance of e = x - y over matched pairs
    pair_count: int


@dataclass(frozen=True)
class CclModel:
    """Learned projection plus the projected-space scoring matrices.

    Columns of ``w`` are unit-norm generalized eigenvectors in
    descending eigenvalue order.  The three inverses live in the
    projected space; ``inv_sigma`` inverts the average of the projected
    commonness and difference covariances.
    """

    w: np.ndarray             # (d, r)
    eigenvalues: np.ndarray   # (r,), descending
    inv_sigma_m: np.ndarray   # (r, r)
    inv_sigma_e: np.ndarray   # (r, r)
    inv_sigma: np.ndarray     # (r, r)
    mean_x: np.ndarray        # (d,)
    mean_y: np.ndarray        # (d,)

    @property
    def dim(self) -> int:
        return int(self.w.shape[0])

    @property
    def rank(self) -> int:
        return int(self.w.shape[1])


def accumulate_stats(pairs: list[PairedSample], ridge: float = DEFAULT_RIDGE) -> CoupledStats:
    """Estimate coupled covariances from matched pairs.

    Both views are centered on their own training mean, which makes m
    and e zero-centered.  Each covariance receives a ridge of
    ``ridge * s * I`` where s is the mean diagonal of the averaged
    coupled covariance; the shared scale keeps the difference side
    positive-definite even when every pair matches exactly.
    """
    if len(pairs) < 2:
        raise TooFewPairs(f"need at least 2 pairs, got {len(pairs)}")
    if ridge < 0:
        raise ValueError(f"ridge must be nonnegative, got {ridge}")
    dim = pairs[0].x.shape[0]
    for p in pairs:
        if p.x.shape != (dim,) or p.y.shape != (dim,):
            raise DimensionMismatch(
                f"pair for {p.person_id!r} has shapes {p.x.shape}/{p.y.shape}, expected ({dim},)"
            )
    xs = np.vstack([p.x for p in pairs]).astype(np.float64)
    ys = np.vstack([p.y for p in pairs]).astype(np.float64)
    n = len(pairs)
    mean_x = xs.mean(axis=0)
    mean_y = ys.mean(axis=0)
    xc = xs - mean_x
    yc = ys - mean_y
    m = xc + yc
    e = xc - yc
    sigma_m = (m.T @ m) / n
    sigma_e = (e.T @ e) / n
    sigma_m = 0.5 * (sigma_m + sigma_m.T)
    sigma_e = 0.5 * (sigma_e + sigma_e.T)
    scale = (np.trace(sigma_m) + np.trace(sigma_e)) / (2.0 * dim)
    if ridge > 0 and scale > 0:
        bump = ridge * scale * np.eye(dim)
        sigma_m = sigma_m + bump
        sigma_e = sigma_e + bump
    return CoupledStats(
        dim=dim, mean_x=mean_x, mean_y=mean_y,
        sigma_m=sigma_m, sigma_e=sigma_e, pair_count=n,
    )


def solve_subspace(stats: CoupledStats, r: int) -> CclModel:
    """Top-r generalized eigenvectors of (sigma_m, sigma_e) by whitening.

    Factors sigma_e = L L^T, eigendecomposes the whitened commonness
    covariance, and back-transforms.  Columns are normalized to unit
    length with the largest-magnitude component made positive, and the
    projected-space covariance inverses are computed from the
    W-projected statistics.
    """
    if not 1 <= r <= stats.dim:
        raise RankTooLarge(f"r={r} outside [1, {stats.dim}]")
    try:
        lower = np.linalg.cholesky(stats.sigma_e)
    except np.linalg.LinAlgError:
        raise NotPositiveDefinite("difference covariance is not positive-definite") from None

    half = solve_triangular(lower, stats.sigma_m, lower=True)
    whitened = solve_triangular(lower, half.T, lower=True).T
    whitened = 0.5 * (whitened + whitened.T)
    evals, evecs = np.linalg.eigh(whitened)

    top = evecs[:, ::-1][:, :r]
    eigenvalues = evals[::-1][:r].copy()
    w = solve_triangular(lower.T, top, lower=False)
    w /= np.linalg.norm(w, axis=0, keepdims=True)
    for col in range(r):
        lead = np.argmax(np.abs(w[:, col]))
        if w[lead, col] < 0:
            w[:, col] = -w[:, col]

    proj_m = w.T @ stats.sigma_m @ w
    proj_e = w.T @ stats.sigma_e @ w
    proj_m = 0.5 * (proj_m + proj_m.T)
    proj_e = 0.5 * (proj_e + proj_e.T)
    proj_avg = 0.5 * (proj_m + proj_e)
    return CclModel(
        w=w,
        eigenvalues=eigenvalues,
        inv_sigma_m=_symmetric_inverse(proj_m),
        inv_sigma_e=_symmetric_inverse(proj_e),
        inv_sigma=_symmetric_inverse(proj_avg),
        mean_x=stats.mean_x.copy(),
        mean_y=stats.mean_y.copy(),
    )


def _symmetric_inverse(matrix: np.ndarray) -> np.ndarray:
    try:
        inv = np.linalg.inv(matrix)
    except np.linalg.LinAlgError:
        raise NotPositiveDefinite("projected covariance is singular") from None
    return 0.5 * (inv + inv.T)


def fit(pairs: list[PairedSample], r: int = DEFAULT_SUBSPACE_DIM,
        ridge: float = DEFAULT_RIDGE) -> CclModel:
    """Convenience wrapper: accumulate statistics, then solve."""
    stats = accumulate_stats(pairs, ridge=ridge)
    return solve_subspace(stats, min(r, stats.dim))


def project(model: CclModel, rep: np.ndarray, view: str) -> np.ndarray:
    """Project a representation (or an (n, d) batch) into the subspace.

    ``view`` selects which camera's training mean to subtract: "A" for
    the x side, "B" for the y side.
    """
    if view not in ("A", "B"):
        raise ValueError(f"view must be 'A' or 'B', got {view!r}")
    mean = model.mean_x if view == "A" else model.mean_y
    rep = np.asarray(rep, dtype=np.float64)
    if rep.shape[-1] != model.dim:
        raise DimensionMismatch(f"representation has dim {rep.shape[-1]}, model expects {model.dim}")
    return (rep - mean) @ model.w


def score(model: CclModel, px: np.ndarray, py: np.ndarray) -> float:
    """Similarity of two projected vectors; higher means more alike.

    The commonness m = px + py is rewarded and the difference
    e = px - py penalized through the projected covariance inverses.
    Symmetric in its arguments.
    """
    px = np.asarray(px, dtype=np.float64)
    py = np.asarray(py, dtype=np.float64)
    if px.shape != (model.rank,) or py.shape != (model.rank,):
        raise DimensionMismatch(
            f"projected vectors must have dim {model.rank}, got {px.shape} and {py.shape}"
        )
    gain_m = model.inv_sigma - model.inv_sigma_m
    cost_e = model.inv_sigma_e - model.inv_sigma
    m = px + py
    e = px - py
    return float(m @ (gain_m @ m) - e @ (cost_e @ e))


def score_matrix(model: CclModel, gallery, probes) -> np.ndarray:
    """All-pairs similarity; rows are probes, columns gallery entries.

    Plain loop over the pairwise scorer, so entries match individual
    ``score`` calls bit for bit; probes are independent, so callers may
    shard rows across workers if they need to.
    """
    gallery = np.asarray(gallery, dtype=np.float64)
    probes = np.asarray(probes, dtype=np.float64)
    if gallery.ndim != 2 or probes.ndim != 2 or gallery.shape[1] != probes.shape[1]:
        raise DimensionMismatch(
            f"expected 2-d inputs with equal width, got {probes.shape} and {gallery.shape}"
        )
    if gallery.shape[1] != model.rank:
        raise DimensionMismatch(f"vectors have dim {gallery.shape[1]}, model expects {model.rank}")
    gain_m = model.inv_sigma - model.inv_sigma_m
    cost_e = model.inv_sigma_e - model.inv_sigma
    out = np.empty((probes.shape[0], gallery.shape[0]))
    for i in range(probes.shape[0]):
        px = probes[i]
        for j in range(gallery.shape[0]):
            m = px + gallery[j]
            e = px - gallery[j]
            out[i, j] = m @ (gain_m @ m) - e @ (cost_e @ e)
    return out


def _write_array(fh, arr: np.ndarray) -> None:
    fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def save_models(path, models: dict[str, CclModel]) -> None:
    """Serialize named models (one per feature kind) to one binary file.

    Layout: magic ``CCLM``, version u16, model count u16; per model a
    16-byte space-padded kind tag, d u32, r u32, then mean_x, mean_y,
    W (row-major), eigenvalues and the three projected inverses as
    little-endian float64.
    """
    if not models:
        raise ValueError("nothing to save")
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<HH", MODEL_VERSION, len(models)))
        for kind, model in models.items():
            tag = kind.encode("utf-8")
            if len(tag) > 16:
                raise ValueError(f"kind tag too long: {kind!r}")
            fh.write(tag.ljust(16))
            fh.write(struct.pack("<II", model.dim, model.rank))
            _write_array(fh, model.mean_x)
            _write_array(fh, model.mean_y)
            _write_array(fh, model.w)
            _write_array(fh, model.eigenvalues)
            _write_array(fh, model.inv_sigma_m)
            _write_array(fh, model.inv_sigma_e)
            _write_array(fh, model.inv_sigma)


def load_models(path) -> dict[str, CclModel]:
    """Read back a model file written by ``save_models``."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MODEL_MAGIC:
        raise UnsupportedFormat(f"{path}: bad magic {data[:4]!r}, expected {MODEL_MAGIC!r}")
    if len(data) < 8:
        raise CorruptFile(f"{path}: truncated header")
    version, count = struct.unpack("<HH", data[4:8])
    if version != MODEL_VERSION:
        raise UnsupportedFormat(f"{path}: unsupported version {version}")
    offset = 8
    models: dict[str, CclModel] = {}

    def take(n_floats: int, shape) -> np.ndarray:
        nonlocal offset
        need = n_floats * 8
        if len(data) < offset + need:
            raise CorruptFile(f"{path}: truncated payload")
        arr = np.frombuffer(data[offset : offset + need], dtype="<f8").reshape(shape)
        offset += need
        return arr.copy()

    for _ in range(count):
        if len(data) < offset + 24:
            raise CorruptFile(f"{path}: truncated model record")
        kind = data[offset : offset + 16].rstrip(b" ").decode("utf-8")
        dim, rank = struct.unpack("<II", data[offset + 16 : offset + 24])
        offset += 24
        if not 1 <= rank <= dim:
            raise CorruptFile(f"{path}: invalid dims d={dim}, r={rank}")
        models[kind] = CclModel(
            mean_x=take(dim, (dim,)),
            mean_y=take(dim, (dim,)),
            w=take(dim * rank, (dim, rank)),
            eigenvalues=take(rank, (rank,)),
            inv_sigma_m=take(rank * rank, (rank, rank)),
            inv_sigma_e=take(rank * rank, (rank, rank)),
            inv_sigma=take(rank * rank, (rank, rank)),
        )
    return models
