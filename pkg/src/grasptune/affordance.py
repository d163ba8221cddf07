"""Grasp-prior data model and estimation math.

Covers the path from a contact heatmap to executable grasp parameters: a
Gaussian mixture over contact points, sub-cell point estimation via a spatial
softmax, pinhole deprojection to the workspace, the weighted three-block
training loss with its analytic gradient, a small trainable head exercising
that loss, and the pluggable prior interface the fine-tuning loop consumes.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence, runtime_checkable

import numpy as np

from .errors import (
    DimensionMismatchError,
    EmptyDatasetError,
    InsufficientPointsError,
    InvalidDepthError,
    MissingPriorError,
    PreconditionError,
)
from .mlp import MLP, Adam, cosine_lr, monotone_step

log = logging.getLogger(__name__)

PARAM_DIM = 22  # 3 contact + 3 wrist euler + 16 hand joints
VARIANCE_FLOOR = 1e-6
DEFAULT_LAMBDAS = (1.0, 0.1, 0.1)


@dataclass(frozen=True)
class GraspParams:
    """The 22 numbers the fine-tuning loop optimizes.

    ``mu`` is the workspace contact location (meters), ``theta_wrist`` the
    wrist rotation as intrinsic-XYZ Euler angles (radians), ``pose`` the 16
    hand joint angles (radians).
    """

    mu: np.ndarray
    theta_wrist: np.ndarray
    pose: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=np.float64).reshape(3)
        theta = np.asarray(self.theta_wrist, dtype=np.float64).reshape(3)
        pose = np.asarray(self.pose, dtype=np.float64).reshape(16)
        for name, arr in (("mu", mu), ("theta_wrist", theta), ("pose", pose)):
            if not np.all(np.isfinite(arr)):
                raise PreconditionError(f"{name} must be finite")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "theta_wrist", theta)
        object.__setattr__(self, "pose", pose)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.mu, self.theta_wrist, self.pose])

    @staticmethod
    def from_vector(vec: np.ndarray) -> "GraspParams":
        vec = np.asarray(vec, dtype=np.float64).reshape(PARAM_DIM)
        return GraspParams(vec[:3], vec[3:6], vec[6:])

    @staticmethod
    def zeros() -> "GraspParams":
        return GraspParams(np.zeros(3), np.zeros(3), np.zeros(16))

    def add(self, residual: np.ndarray) -> "GraspParams":
        return GraspParams.from_vector(self.as_vector() + np.asarray(residual))

    def clamp_pose(self, layout) -> "GraspParams":
        """Clamp the 16 joint angles to a :class:`~grasptune.kinematics.HandLayout`."""
        lims = np.array([lim for f in ("thumb", "index", "middle", "ring")
                         for lim in layout.dof_limits(f)])
        pose = np.clip(self.pose, lims[:, 0], lims[:, 1])
        return GraspParams(self.mu, self.theta_wrist, pose)

    def to_dict(self) -> dict:
        return {
            "mu": self.mu.tolist(),
            "theta_wrist": self.theta_wrist.tolist(),
            "pose": self.pose.tolist(),
        }

    @staticmethod
    def from_dict(doc: dict) -> "GraspParams":
        return GraspParams(
            np.array(doc["mu"]), np.array(doc["theta_wrist"]), np.array(doc["pose"])
        )


@dataclass(frozen=True)
class ContactSet:
    """Contact points in image (N x 2, pixels) or workspace (N x 3, meters) frame."""

    points: np.ndarray
    frame: str  # "image" | "workspace"

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=np.float64))
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] not in (2, 3):
            raise PreconditionError("points must be N x 2 or N x 3 with N >= 1")
        if not np.all(np.isfinite(pts)):
            raise PreconditionError("points must be finite")
        if self.frame not in ("image", "workspace"):
            raise PreconditionError("frame must be 'image' or 'workspace'")
        object.__setattr__(self, "points", pts)


# --------------------------------------------------------------------------
# Gaussian mixture over contact points
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class GMMModel:
    """Diagonal-covariance Gaussian mixture with per-fit log-likelihood trace."""

    weights: np.ndarray  # (k,)
    means: np.ndarray  # (k, d)
    variances: np.ndarray  # (k, d)
    ll_curve: tuple[float, ...] = field(default=(), compare=False)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        m = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        v = np.atleast_2d(np.asarray(self.variances, dtype=np.float64))
        if abs(float(w.sum()) - 1.0) > 1e-9:
            raise PreconditionError("weights must sum to 1 within 1e-9")
        if np.any(v < VARIANCE_FLOOR - 1e-15):
            raise PreconditionError(f"variances must be >= {VARIANCE_FLOOR}")
        if not (len(w) == m.shape[0] == v.shape[0]) or m.shape != v.shape:
            raise PreconditionError("component shapes disagree")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "variances", v)

    @property
    def k(self) -> int:
        return len(self.weights)

    def component_logpdf(self, x: np.ndarray) -> np.ndarray:
        """(N, k) log density of each point under each weighted component."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        diff = x[:, None, :] - self.means[None, :, :]
        quad = np.sum(diff * diff / self.variances[None, :, :], axis=2)
        norm = np.sum(np.log(2.0 * np.pi * self.variances), axis=1)
        return np.log(self.weights)[None, :] - 0.5 * (norm[None, :] + quad)

    def log_likelihood(self, x: np.ndarray) -> float:
        return float(np.sum(_logsumexp(self.component_logpdf(x), axis=1)))

    def average_contact(self) -> np.ndarray:
        """Weight-averaged component means: the single contact point estimate."""
        return self.weights @ self.means

    def to_json(self) -> str:
        return json.dumps(
            {
                "schema_version": 1,
                "weights": self.weights.tolist(),
                "means": self.means.tolist(),
                "variances": self.variances.tolist(),
            }
        )

    @staticmethod
    def from_json(text: str) -> "GMMModel":
        doc = json.loads(text)
        return GMMModel(
            np.array(doc["weights"]), np.array(doc["means"]), np.array(doc["variances"])
        )


def _logsumexp(a: np.ndarray, axis: int) -> np.ndarray:
    m = np.max(a, axis=axis, keepdims=True)
    return np.squeeze(m, axis=axis) + np.log(np.sum(np.exp(a - m), axis=axis))


def _kmeanspp_centers(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centers = [x[rng.integers(n)]]
    for _ in range(1, k):
        d2 = np.min(
            np.sum((x[:, None, :] - np.array(centers)[None, :, :]) ** 2, axis=2), axis=1
        )
        total = float(d2.sum())
        if total <= 0.0:
            centers.append(x[rng.integers(n)])
            continue
        centers.append(x[rng.choice(n, p=d2 / total)])
    return np.array(centers)


def fit_gmm(points: ContactSet | np.ndarray, k: int, iters: int = 100,
            seed: int = 0) -> GMMModel:
    """EM fit of a diagonal-covariance mixture, k-means++ initialized.

    The per-iteration log-likelihood is non-decreasing (within float noise)
    and recorded on the returned model. Variances are floored at 1e-6, so a
    degenerate cloud of identical points yields a floored single-point model.
    """
    x = points.points if isinstance(points, ContactSet) else np.atleast_2d(
        np.asarray(points, dtype=np.float64))
    n, d = x.shape
    if k < 1:
        raise PreconditionError("k must be >= 1")
    if n < k:
        raise InsufficientPointsError(f"{n} points cannot support {k} components")
    rng = np.random.default_rng(seed)

    means = _kmeanspp_centers(x, k, rng)
    assign = np.argmin(
        np.sum((x[:, None, :] - means[None, :, :]) ** 2, axis=2), axis=1
    )
    weights = np.full(k, 1.0 / k)
    variances = np.full((k, d), max(float(np.var(x, axis=0).mean()), VARIANCE_FLOOR))
    for c in range(k):
        mask = assign == c
        if mask.any():
            means[c] = x[mask].mean(axis=0)
            variances[c] = np.maximum(np.var(x[mask], axis=0), VARIANCE_FLOOR)
    model = GMMModel(weights, means, variances)

    ll_curve: list[float] = []
    for _ in range(iters):
        logp = model.component_logpdf(x)
        ll = float(np.sum(_logsumexp(logp, axis=1)))
        if ll_curve and ll < ll_curve[-1] - 1e-12:
            # Variance flooring can pin EM against the constraint boundary;
            # keep the best iterate rather than drift downhill.
            break
        ll_curve.append(ll)
        resp = np.exp(logp - _logsumexp(logp, axis=1)[:, None])
        mass = resp.sum(axis=0)
        weights = mass / n
        safe = np.maximum(mass, 1e-300)[:, None]
        means = (resp.T @ x) / safe
        sq = resp.T @ (x * x) / safe
        variances = np.maximum(sq - means * means, VARIANCE_FLOOR)
        model = GMMModel(weights / weights.sum(), means, variances)
        if len(ll_curve) > 1 and abs(ll_curve[-1] - ll_curve[-2]) < 1e-10 * (
            1.0 + abs(ll_curve[-1])
        ):
            break
    return GMMModel(model.weights, model.means, model.variances, tuple(ll_curve))


# --------------------------------------------------------------------------
# Heatmap -> contact point
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Heatmap:
    """Non-negative H x W score grid with an affine grid-to-metric mapping."""

    values: np.ndarray
    origin: np.ndarray = field(default_factory=lambda: np.zeros(2))
    cell_size: np.ndarray = field(default_factory=lambda: np.ones(2))

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise PreconditionError("heatmap must be 2D")
        if not np.all(np.isfinite(v)):
            raise PreconditionError("heatmap must be finite")
        if np.any(v < 0.0) or not np.any(v > 0.0):
            raise PreconditionError("heatmap must be non-negative with a positive cell")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=np.float64).reshape(2))
        object.__setattr__(self, "cell_size", np.asarray(self.cell_size, dtype=np.float64).reshape(2))

    def grid_to_metric(self, ij: np.ndarray) -> np.ndarray:
        return self.origin + np.asarray(ij, dtype=np.float64) * self.cell_size


def spatial_softargmax(h: Heatmap, temperature: float = 1.0) -> np.ndarray:
    """Expected (row, col) grid coordinate under softmax(h / temperature).

    Shift-invariant in the heatmap scores and always inside the grid's convex
    hull; low temperatures sharpen toward the argmax cell.
    """
    if temperature <= 0.0:
        raise PreconditionError("temperature must be > 0")
    logits = h.values / temperature
    w = np.exp(logits - logits.max())
    w /= w.sum()
    rows, cols = np.indices(h.values.shape)
    return np.array([float(np.sum(w * rows)), float(np.sum(w * cols))])


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if self.fx <= 0.0 or self.fy <= 0.0:
            raise PreconditionError("focal lengths must be positive")


def deproject(pixel: np.ndarray, depth: float, k: CameraIntrinsics) -> np.ndarray:
    """Pinhole lift of an (u, v) pixel at the given depth to camera-frame meters."""
    if depth <= 0.0:
        raise InvalidDepthError(f"depth must be positive, got {depth}")
    u, v = np.asarray(pixel, dtype=np.float64).reshape(2)
    return np.array([(u - k.cx) * depth / k.fx, (v - k.cy) * depth / k.fy, depth])


def project(point: np.ndarray, k: CameraIntrinsics) -> np.ndarray:
    """Inverse of :func:`deproject`: camera-frame point to (u, v) pixel."""
    x, y, z = np.asarray(point, dtype=np.float64).reshape(3)
    if z <= 0.0:
        raise InvalidDepthError("point must be in front of the camera")
    return np.array([x * k.fx / z + k.cx, y * k.fy / z + k.cy])


# --------------------------------------------------------------------------
# Training loss and the toy trainable head
# --------------------------------------------------------------------------


def eq1_loss(
    pred: GraspParams,
    target: GraspParams,
    lambdas: tuple[float, float, float] = DEFAULT_LAMBDAS,
) -> tuple[float, np.ndarray]:
    """Weighted sum of unsquared L2 block errors, with the gradient w.r.t. pred.

    The three blocks (contact location, wrist rotation, hand pose) are
    weighted by ``lambdas``; the gradient is the 22-vector in
    :meth:`GraspParams.as_vector` layout, with the subgradient 0 at an
    exactly-zero block error.
    """
    diff = pred.as_vector() - target.as_vector()
    grad = np.zeros(PARAM_DIM)
    loss = 0.0
    for lam, sl in zip(lambdas, (slice(0, 3), slice(3, 6), slice(6, 22))):
        norm = float(np.linalg.norm(diff[sl]))
        loss += lam * norm
        if norm > 0.0:
            grad[sl] = lam * diff[sl] / norm
    return loss, grad


@dataclass
class ToyAffordanceHead:
    """Two-layer perceptron from scene features to the 22 grasp parameters."""

    net: MLP
    loss_curve: tuple[float, ...] = ()

    def predict(self, features: np.ndarray) -> GraspParams:
        out = self.net(np.asarray(features, dtype=np.float64))[0]
        return GraspParams.from_vector(out)


def train_toy_head(
    dataset: Sequence[tuple[np.ndarray, GraspParams]],
    lambdas: tuple[float, float, float] = DEFAULT_LAMBDAS,
    epochs: int = 2000,
    lr: float = 1e-3,
    seed: int = 0,
    hidden: int = 64,
) -> ToyAffordanceHead:
    """Full-batch fit of the toy head on (features, grasp-parameter) pairs.

    Optimizes the mean block-norm loss with Adam under a cosine schedule; the
    recorded loss curve is non-increasing up to small optimizer noise.
    """
    if len(dataset) == 0:
        raise EmptyDatasetError("cannot train on an empty dataset")
    rows = [np.asarray(f, dtype=np.float64).reshape(-1) for f, _ in dataset]
    if len({r.shape[0] for r in rows}) != 1:
        raise DimensionMismatchError("inconsistent feature dimensions")
    feats = np.array(rows)
    targets = [t for _, t in dataset]
    n = len(dataset)

    rng = np.random.default_rng(seed)
    net = MLP.init(feats.shape[1], hidden, PARAM_DIM, rng)
    opt = Adam(net.params, lr=lr)
    curve = []

    def batch_loss() -> float:
        preds = net(feats)
        return sum(
            eq1_loss(GraspParams.from_vector(preds[i]), targets[i], lambdas)[0]
            for i in range(n)
        ) / n

    for epoch in range(epochs):
        preds, cache = net.forward(feats)
        dy = np.zeros_like(preds)
        total = 0.0
        for i in range(n):
            li, gi = eq1_loss(GraspParams.from_vector(preds[i]), targets[i], lambdas)
            total += li
            dy[i] = gi
        curve.append(total / n)
        _, grads = net.backward(cache, dy / n)
        monotone_step(opt, net.params, grads, batch_loss, total / n,
                      cosine_lr(epoch, epochs))
    return ToyAffordanceHead(net=net, loss_curve=tuple(curve))


# --------------------------------------------------------------------------
# Prior sources
# --------------------------------------------------------------------------


@runtime_checkable
class ObservationLike(Protocol):
    instance_id: str
    features: np.ndarray


class PriorSource(Protocol):
    """Anything that predicts grasp parameters from an observation."""

    def predict(self, obs: ObservationLike) -> GraspParams: ...


@dataclass(frozen=True)
class TablePrior:
    """File-backed table of precomputed predictions keyed by observation id."""

    table: dict[str, GraspParams]

    @staticmethod
    def from_jsonl(path: str | Path) -> "TablePrior":
        table = {}
        for line in Path(path).read_text().splitlines():
            if not line.strip():
                continue
            doc = json.loads(line)
            table[str(doc["id"])] = GraspParams.from_dict(doc)
        return TablePrior(table)

    def predict(self, obs: ObservationLike) -> GraspParams:
        if obs.instance_id not in self.table:
            raise MissingPriorError(f"no prior entry for observation {obs.instance_id!r}")
        return self.table[obs.instance_id]


@dataclass(frozen=True)
class HeadPrior:
    """Wraps a trained :class:`ToyAffordanceHead` as a prior source."""

    head: ToyAffordanceHead

    def predict(self, obs: ObservationLike) -> GraspParams:
        return self.head.predict(obs.features)


def prior_predict(source: PriorSource, obs: ObservationLike) -> GraspParams:
    """Query a prior source; deterministic given (source, obs)."""
    params = source.predict(obs)
    if not isinstance(params, GraspParams):
        raise PreconditionError("prior source must return GraspParams")
    return params
