"""Conditional radiance field and volume-rendering integrator.

The field factorizes as F(x, condition, d) -> (color, density) with the
density depending on (x, condition) only; the view direction enters the
color head. Rendering accumulates stratified samples front to back and
composites the residual transmittance over a white background.
"""

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn

from . import facemodel, nets
from .errors import NumericInputError, RayBoundsError, ShapeError

DEFAULT_NEAR = 1.0
DEFAULT_FAR = 4.0
COND_DIM = 40


@dataclass
class RenderCondition:
    """Per-frame render condition: audio feature (32) + eye embedding (8)."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).ravel()
        if not np.all(np.isfinite(self.values)):
            raise NumericInputError("render condition must be finite")


@dataclass
class Ray:
    origin: np.ndarray
    direction: np.ndarray
    near: float = DEFAULT_NEAR
    far: float = DEFAULT_FAR

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=np.float64).ravel()
        self.direction = np.asarray(self.direction, dtype=np.float64).ravel()
        if abs(np.linalg.norm(self.direction) - 1.0) > 1e-9:
            raise ShapeError("ray direction must be unit length")
        if not (0.0 < self.near < self.far):
            raise RayBoundsError(f"invalid bounds near={self.near} far={self.far}")


@dataclass
class RenderedImage:
    pixels: np.ndarray   # [H,W,3] in [0,1]
    opacity: np.ndarray  # [H,W] in [0,1]


def positional_encode(x, n_freq):
    """Concatenate x with (sin, cos)(2^k * pi * x) for k = 0..n_freq-1."""
    tensor = torch.as_tensor(x)
    parts = [tensor]
    for k in range(n_freq):
        scaled = (2.0**k) * np.pi * tensor
        parts.append(torch.sin(scaled))
        parts.append(torch.cos(scaled))
    return torch.cat(parts, dim=-1)


class RadianceField(nn.Module):
    """MLP field; condition is injected by concatenation at the first layer."""

    def __init__(self, cond_dim=COND_DIM, width=128, depth=4, n_freq_x=10,
                 n_freq_d=4, dtype=torch.float32):
        super().__init__()
        self.cond_dim = cond_dim
        self.n_freq_x = n_freq_x
        self.n_freq_d = n_freq_d
        in_dim = 3 + 6 * n_freq_x + cond_dim
        sizes = [in_dim] + [width] * depth
        self.trunk = nets.mlp(sizes, dtype=dtype, final_activation=True)
        self.density_head = nn.Linear(width, 1, dtype=dtype)
        dir_dim = 3 + 6 * n_freq_d
        self.color_head = nn.Sequential(
            nn.Linear(width + dir_dim, width // 2, dtype=dtype),
            nets.SmoothLeaky(),
            nn.Linear(width // 2, 3, dtype=dtype),
        )
        # transparent start: empty space converges to the white background fast
        with torch.no_grad():
            self.density_head.bias.fill_(-2.0)

    @property
    def dtype(self):
        return self.density_head.weight.dtype

    def forward(self, x, cond, d):
        """x [...,3], cond [...,cond_dim], d [...,3] -> (color [...,3], sigma [...])."""
        feat = self.trunk(torch.cat([positional_encode(x, self.n_freq_x), cond], dim=-1))
        sigma = torch.nn.functional.softplus(self.density_head(feat)).squeeze(-1)
        color_in = torch.cat([feat, positional_encode(d, self.n_freq_d)], dim=-1)
        color = torch.sigmoid(self.color_head(color_in))
        return color, sigma


def field_query(field: RadianceField, condition, direction, position):
    """Single-point query; density is independent of the view direction."""
    if not all(p.isfinite().all() for p in field.parameters()):
        raise NumericInputError("field parameters must be finite")
    cond = _as_cond(condition, field)
    x = torch.as_tensor(np.asarray(position, dtype=np.float64), dtype=field.dtype)
    d = torch.as_tensor(np.asarray(direction, dtype=np.float64), dtype=field.dtype)
    with torch.no_grad():
        color, sigma = field(x, cond, d)
    return color.numpy(), float(sigma)


def _as_cond(condition, field):
    if isinstance(condition, RenderCondition):
        condition = condition.values
    arr = np.asarray(condition, dtype=np.float64)
    if arr.shape[-1] != field.cond_dim:
        raise ShapeError(f"condition dim {arr.shape[-1]} != {field.cond_dim}")
    return torch.as_tensor(arr, dtype=field.dtype)


def sample_depths(near, far, n_samples, jitter):
    """Stratified depths: one sample per bin at offset jitter in [0,1)."""
    delta = (far - near) / n_samples
    idx = torch.arange(n_samples, dtype=jitter.dtype)
    return near + (idx + jitter) * delta


def render_ray_batch(field, cond, origins, dirs, near, far, n_samples, jitter=None):
    """Differentiable batched rendering.

    origins/dirs: [B,3] tensors; cond: [B,cond_dim] or [cond_dim];
    jitter: [B,n_samples] in [0,1) or None for bin midpoints.
    Returns dict with color [B,3], opacity [B], trans_end [B].
    """
    if not (0.0 < near < far):
        raise RayBoundsError(f"invalid bounds near={near} far={far}")
    dtype = origins.dtype
    batch = origins.shape[0]
    if jitter is None:
        jitter = torch.full((batch, n_samples), 0.5, dtype=dtype)
    delta = (far - near) / n_samples
    idx = torch.arange(n_samples, dtype=dtype)
    t = near + (idx[None, :] + jitter) * delta                     # [B,n]
    deltas = torch.cat([t[:, 1:] - t[:, :-1], far - t[:, -1:]], dim=1)
    pts = origins[:, None, :] + t[..., None] * dirs[:, None, :]    # [B,n,3]
    if cond.dim() == 1:
        cond_pts = cond[None, None, :].expand(batch, n_samples, -1)
    else:
        cond_pts = cond[:, None, :].expand(-1, n_samples, -1)
    dirs_pts = dirs[:, None, :].expand(-1, n_samples, -1)
    color, sigma = field(pts, cond_pts, dirs_pts)                  # [B,n,3],[B,n]
    alpha = 1.0 - torch.exp(-sigma * deltas)
    one_minus = 1.0 - alpha
    trans = torch.cumprod(torch.cat([torch.ones_like(alpha[:, :1]), one_minus], dim=1), dim=1)
    weights = trans[:, :-1] * alpha                                # [B,n]
    trans_end = trans[:, -1]
    out_color = (weights[..., None] * color).sum(dim=1) + trans_end[:, None]
    opacity = weights.sum(dim=1)
    return {"color": out_color, "opacity": opacity, "trans_end": trans_end}


def render_ray(field, condition, ray: Ray, n_samples, jitter_seed=None):
    """Render one ray; jitter stream is derived from (seed, pixel index 0)."""
    if n_samples < 2:
        raise ShapeError("need at least 2 samples per ray")
    cond = _as_cond(condition, field)
    origins = torch.as_tensor(ray.origin, dtype=field.dtype)[None, :]
    dirs = torch.as_tensor(ray.direction, dtype=field.dtype)[None, :]
    jitter = None
    if jitter_seed is not None:
        u = nets.hash_uniform(np.uint64(jitter_seed), np.zeros(n_samples, dtype=np.uint64),
                              np.arange(n_samples, dtype=np.uint64))
        jitter = torch.as_tensor(u, dtype=field.dtype)[None, :]
    with torch.no_grad():
        out = render_ray_batch(field, cond, origins, dirs, ray.near, ray.far,
                               n_samples, jitter)
    return out["color"][0].numpy(), float(out["opacity"][0])


def camera_rays(camera: facemodel.Camera, supersample=1):
    """Per-pixel world rays, row-major from the top-left pixel.

    Returns (origins [H*s, W*s, 3], directions [H*s, W*s, 3]) with unit
    directions; supersample s subdivides each pixel into s*s sub-rays on
    a fixed master grid so different resolutions nest consistently.
    """
    intr = camera.intrinsics.scaled(supersample)
    i = np.arange(intr.width, dtype=np.float64) + 0.5
    j = np.arange(intr.height, dtype=np.float64) + 0.5
    ii, jj = np.meshgrid(i, j)
    dirs_cam = np.stack(
        [(ii - intr.cx) / intr.fx, -(jj - intr.cy) / intr.fy, -np.ones_like(ii)],
        axis=-1,
    )
    dirs = dirs_cam @ camera.orientation.T
    dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
    origins = np.broadcast_to(camera.origin, dirs.shape).copy()
    return origins, dirs


def render_image(field, condition, pose, intrinsics=None, resolution=64,
                 n_samples=256, jitter_seed=None, near=DEFAULT_NEAR,
                 far=DEFAULT_FAR, chunk=16384) -> RenderedImage:
    """One ray per pixel through the camera for the given head pose."""
    if intrinsics is None:
        intrinsics = facemodel.default_intrinsics(resolution)
    camera = facemodel.pose_to_camera(pose, intrinsics)
    origins, dirs = camera_rays(camera)
    h, w = dirs.shape[:2]
    origins = origins.reshape(-1, 3)
    dirs = dirs.reshape(-1, 3)
    cond = _as_cond(condition, field)

    colors = np.zeros((h * w, 3), dtype=np.float64)
    opacity = np.zeros(h * w, dtype=np.float64)
    pixel_index = np.arange(h * w, dtype=np.uint64)
    for start in range(0, h * w, chunk):
        sl = slice(start, min(start + chunk, h * w))
        jitter = None
        if jitter_seed is not None:
            u = nets.hash_uniform(
                np.uint64(jitter_seed),
                pixel_index[sl][:, None],
                np.arange(n_samples, dtype=np.uint64)[None, :],
            )
            jitter = torch.as_tensor(u, dtype=field.dtype)
        with torch.no_grad():
            out = render_ray_batch(
                field, cond,
                torch.as_tensor(origins[sl], dtype=field.dtype),
                torch.as_tensor(dirs[sl], dtype=field.dtype),
                near, far, n_samples, jitter,
            )
        colors[sl] = out["color"].double().numpy()
        opacity[sl] = out["opacity"].double().numpy()
    return RenderedImage(
        pixels=np.clip(colors.reshape(h, w, 3), 0.0, 1.0),
        opacity=opacity.reshape(h, w),
    )


def photometric_loss(pred, gt):
    """Sum over rays of the squared color error."""
    if isinstance(pred, RenderedImage):
        pred = pred.pixels
    if isinstance(gt, RenderedImage):
        gt = gt.pixels
    if torch.is_tensor(pred) or torch.is_tensor(gt):
        pred_t, gt_t = torch.as_tensor(pred), torch.as_tensor(gt)
        if pred_t.shape != gt_t.shape:
            raise ShapeError("ray sets must match")
        return ((pred_t - gt_t) ** 2).sum()
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ShapeError("ray sets must match")
    return float(((pred - gt) ** 2).sum())


def train_field(images, poses, conditions, intrinsics, iters=1000,
                rays_per_iter=1024, n_samples=64, lr=5e-4, seed=0,
                near=DEFAULT_NEAR, far=DEFAULT_FAR, log_every=50):
    """Fit the radiance field to frames of one sequence.

    images: [T,H,W,3]; poses: list of HeadPose; conditions: [T,cond_dim].
    Returns (field, history) where history logs the running loss.
    """
    torch.manual_seed(seed)
    images = np.asarray(images, dtype=np.float32)
    conditions = np.asarray(conditions, dtype=np.float32)
    t_frames, h, w = images.shape[:3]
    all_origins = np.zeros((t_frames, h * w, 3), dtype=np.float32)
    all_dirs = np.zeros((t_frames, h * w, 3), dtype=np.float32)
    for t in range(t_frames):
        cam = facemodel.pose_to_camera(poses[t], intrinsics)
        o, d = camera_rays(cam)
        all_origins[t] = o.reshape(-1, 3)
        all_dirs[t] = d.reshape(-1, 3)
    gt_pixels = images.reshape(t_frames, h * w, 3)

    field = RadianceField(cond_dim=conditions.shape[1])
    opt = torch.optim.Adam(field.parameters(), lr=lr)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x4EF]))
    history = []
    for it in range(iters):
        frame_idx = rng.integers(0, t_frames, size=rays_per_iter)
        pix_idx = rng.integers(0, h * w, size=rays_per_iter)
        origins = torch.from_numpy(all_origins[frame_idx, pix_idx])
        dirs = torch.from_numpy(all_dirs[frame_idx, pix_idx])
        cond = torch.from_numpy(conditions[frame_idx])
        target = torch.from_numpy(gt_pixels[frame_idx, pix_idx])
        u = nets.hash_uniform(
            np.uint64(seed), np.uint64(it) * np.uint64(1 << 32) + pix_idx.astype(np.uint64)[:, None],
            np.arange(n_samples, dtype=np.uint64)[None, :],
        )
        jitter = torch.as_tensor(u, dtype=field.dtype)
        out = render_ray_batch(field, cond, origins, dirs, near, far, n_samples, jitter)
        loss = ((out["color"] - target) ** 2).mean()
        opt.zero_grad()
        loss.backward()
        opt.step()
        if it % log_every == 0 or it == iters - 1:
            history.append({"step": it, "loss": float(loss)})
    return field, history
