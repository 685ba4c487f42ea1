"""Procedural synthetic world: paired audio, expression codes, landmarks,
pose/blink trajectories, and exactly ray-traced reference images.

A dataset is a directory of per-sequence array containers plus a top-level
``index.json``. Every array is a pure function of (config, seed): sequence
RNGs are spawned from ``SeedSequence([seed, identity, sequence])``.
"""

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import container, facemodel, renderer
from .errors import MissingFileError, ValidationError

FPS = 25
WINDOWS_PER_FRAME = 4   # 10 ms audio windows at 25 FPS
AUDIO_PAD = 4           # lead-in/out windows so every frame has full context
AUDIO_CHANNELS = 13
ART_SCALE = 0.35        # mouth-opening expression coefficient at full aperture
POSE_ROT_SIGMA = np.deg2rad(5.0)
POSE_TRANS_SIGMA = 0.03
POSE_LENGTH_SCALE = 8.0
BLINK_PULSE = np.array([0.3, 0.8, 1.0, 0.8, 0.3])

DATASET_DEFAULTS = {
    "identities": 2,
    "sequences_per_identity": 4,
    "frames": 200,
    "resolution": 64,
    "fps": FPS,
    "render_images": True,
    "articulation": "gp",  # or "zero"
    "basis_seed": 0,
}


@dataclass
class IdentityProfile:
    """Per-identity statistics: articulation tempo, blink rate, pose habits."""

    art_length_scale: float
    blink_rate: float                 # blinks per second
    rot_offset: np.ndarray            # [3] radians
    trans_offset: np.ndarray          # [3] mesh units


def identity_profile(index) -> IdentityProfile:
    sign = 1.0 if index % 2 else -1.0
    stretch = 1.0 + 0.15 * (index // 2)
    return IdentityProfile(
        art_length_scale=(2.0 if index % 2 == 0 else 4.0) * stretch,
        blink_rate=0.40 if index % 2 == 0 else 0.28,
        rot_offset=sign * np.array([1.2, -1.2, 1.2]) * POSE_ROT_SIGMA,
        trans_offset=sign * np.array([1.2, -1.2, 1.2]) * POSE_TRANS_SIGMA,
    )


# ---------------------------------------------------------------------------
# Gaussian-process utilities (Cauchy kernel)


def cauchy_cov(times, length_scale, sigma2=1.0, jitter=0.0):
    """Covariance matrix sigma2 / (1 + (dt/l)^2) + jitter * I."""
    t = np.asarray(times, dtype=np.float64)
    lag = t[:, None] - t[None, :]
    cov = sigma2 / (1.0 + (lag / length_scale) ** 2)
    return cov + jitter * np.eye(t.shape[0])


_CHOL_CACHE = {}


def _gp_chol(n, length_scale):
    key = (int(n), float(length_scale))
    if key not in _CHOL_CACHE:
        cov = cauchy_cov(np.arange(n), length_scale, 1.0, jitter=1e-8)
        _CHOL_CACHE[key] = np.linalg.cholesky(cov)
    return _CHOL_CACHE[key]


def gp_sample(rng, n, length_scale, sigma=1.0, size=1):
    """Draw `size` unit-variance Cauchy-kernel GP paths of length n, scaled."""
    chol = _gp_chol(n, length_scale)
    draws = chol @ rng.standard_normal((n, size))
    return sigma * draws.T  # [size, n]


def sample_pose_channels(rng, frames, offsets_rot, offsets_trans):
    """[frames, 6] pose: per-channel GP plus the identity offset."""
    pose = np.zeros((frames, 6))
    for c in range(3):
        pose[:, c] = offsets_rot[c] + gp_sample(rng, frames, POSE_LENGTH_SCALE, POSE_ROT_SIGMA)[0]
    for c in range(3):
        pose[:, 3 + c] = offsets_trans[c] + gp_sample(rng, frames, POSE_LENGTH_SCALE, POSE_TRANS_SIGMA)[0]
    return pose


def sample_pose_set(n_sequences, frames, length_scale=POSE_LENGTH_SCALE,
                    sigma=POSE_ROT_SIGMA, seed=0):
    """Zero-mean pose channel draws for autocorrelation checks: [n, frames]."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x90, 5]))
    return gp_sample(rng, frames, length_scale, sigma, size=n_sequences)


# ---------------------------------------------------------------------------
# scripts and audio


def blink_script(rng, frames, fps, rate):
    """Blink aperture in [0,1]; pulses of ~5 frames at the given rate."""
    blink = np.zeros(frames)
    mean_gap = max(fps / rate - len(BLINK_PULSE), 4.0)
    t = int(rng.uniform(2.0, fps / rate))
    while t < frames:
        end = min(t + len(BLINK_PULSE), frames)
        blink[t:end] = np.maximum(blink[t:end], BLINK_PULSE[: end - t])
        t = end + int(max(3.0, rng.exponential(mean_gap)))
    return blink


def articulation_latents(rng, frames, profile, mode="gp"):
    """(opening in [0,1], two shape latents) driving mouth and audio."""
    if mode == "zero":
        return np.zeros(frames), np.zeros(frames), np.zeros(frames)
    g = gp_sample(rng, frames, profile.art_length_scale)[0]
    s1 = gp_sample(rng, frames, profile.art_length_scale * 1.3)[0]
    s2 = gp_sample(rng, frames, profile.art_length_scale * 1.3)[0]
    opening = 1.0 / (1.0 + np.exp(-1.3 * g))
    return opening, s1, s2


def _audio_response(opening, s1, s2):
    """Clean 13-channel spectral envelope for articulation latents."""
    t1 = np.tanh(0.8 * s1)
    t2 = np.tanh(0.8 * s2)
    channels = [
        0.9 * np.exp(-(((opening - c) / 0.16) ** 2)) for c in np.linspace(0.0, 1.0, 5)
    ]
    channels += [
        0.55 * t1,
        0.45 * (t1**2 - 0.5),
        0.5 * np.sin(1.3 * t1 + 0.3),
        0.5 * np.cos(0.9 * t1 - 0.2),
        0.55 * t2,
        0.45 * (t2**2 - 0.5),
        0.5 * np.sin(1.1 * t2 - 0.2),
        0.5 * np.cos(0.8 * t2 + 0.4),
    ]
    return np.stack(channels, axis=-1)


def synth_audio(rng, opening, s1, s2):
    """Noisy filtered signal at 4 windows/frame: [4*T + 8, 13]."""
    frames = opening.shape[0]
    n_windows = WINDOWS_PER_FRAME * frames + 2 * AUDIO_PAD
    wtime = (np.arange(n_windows) - AUDIO_PAD) / WINDOWS_PER_FRAME
    ftime = np.arange(frames, dtype=np.float64)
    o = np.interp(wtime, ftime, opening)
    a1 = np.interp(wtime, ftime, s1)
    a2 = np.interp(wtime, ftime, s2)
    clean = _audio_response(o, a1, a2)
    return clean + 0.05 * rng.standard_normal(clean.shape)


def frames_covered(n_windows):
    """Video frames a window stream covers (9-window context, stride 4)."""
    if n_windows < 2 * AUDIO_PAD + 1:
        return 0
    return (n_windows - (2 * AUDIO_PAD + 1)) // WINDOWS_PER_FRAME + 1


# ---------------------------------------------------------------------------
# analytic blob scene


@dataclass
class SyntheticScene:
    """Sphere-head world; geometry is analytic so reference renders are exact."""

    radius: float = 1.0
    center: np.ndarray = field(default_factory=lambda: facemodel.HEAD_CENTER.copy())
    skin: tuple = (0.82, 0.62, 0.52)
    lip: tuple = (0.58, 0.26, 0.24)
    mouth_dark: tuple = (0.42, 0.10, 0.10)
    sclera: tuple = (0.93, 0.93, 0.96)
    iris: tuple = (0.16, 0.11, 0.10)
    background: tuple = (1.0, 1.0, 1.0)
    mouth_center: tuple = (0.0, -0.38)
    mouth_half_width: float = 0.26
    mouth_half_height_base: float = 0.035
    mouth_half_height_gain: float = 0.13
    eye_offset: tuple = (0.30, 0.26)
    eye_radius: float = 0.11
    light: tuple = (0.35, 0.5, 0.8)

    def signed_distance(self, points):
        return np.linalg.norm(points - self.center, axis=-1) - self.radius


def _unit(v):
    v = np.asarray(v, dtype=np.float64)
    return v / np.linalg.norm(v)


def _feature_frame(direction):
    """Tangent basis (horizontal, vertical) at a unit feature direction."""
    d = _unit(direction)
    hx = _unit(np.array([1.0, 0.0, 0.0]) - d[0] * d)
    vy = _unit(np.array([0.0, 1.0, 0.0]) - d[1] * d)
    return d, hx, vy


def _smooth_in(x, edge, width):
    """1 inside x < edge, 0 outside, smoothstep over [edge-width, edge+width]."""
    t = np.clip((edge + width - x) / (2.0 * width), 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def _shade_surface(scene, local_unit, articulation, blink, want_mask=False):
    """Surface color for unit directions on the head sphere."""
    articulation = float(np.clip(articulation, 0.0, 1.0))
    blink = float(np.clip(blink, 0.0, 1.0))
    light = _unit(scene.light)
    lambert = (0.62 + 0.38 * np.clip(local_unit @ light, 0.0, None))[..., None]
    color = np.asarray(scene.skin) * lambert

    mx, my = scene.mouth_center
    mouth_dir, mh, mv = _feature_frame([mx, my, math.sqrt(max(1.0 - mx * mx - my * my, 0.0))])
    rel = local_unit - mouth_dir
    h = rel @ mh
    v = rel @ mv
    half_h = scene.mouth_half_height_base + scene.mouth_half_height_gain * articulation
    radial = np.sqrt((h / scene.mouth_half_width) ** 2 + (v / half_h) ** 2)
    interior = _smooth_in(radial, 1.0, 0.12)
    ring = _smooth_in(radial, 1.35, 0.15) * (1.0 - interior)
    color = color * (1.0 - ring[..., None]) + np.asarray(scene.lip) * lambert * ring[..., None]
    cavity = np.asarray(scene.mouth_dark) * (0.75 + 0.25 * lambert)
    color = color * (1.0 - interior[..., None]) + cavity * interior[..., None]

    ex, ey = scene.eye_offset
    eye_mask = np.zeros(local_unit.shape[:-1])
    lid_line = scene.eye_radius * (1.0 - 2.0 * blink)
    for sx in (-1.0, 1.0):
        eye_dir, ehx, evy = _feature_frame(
            [sx * ex, ey, math.sqrt(max(1.0 - ex * ex - ey * ey, 0.0))]
        )
        rel = local_unit - eye_dir
        h = rel @ ehx
        v = rel @ evy
        re = np.sqrt(h * h + v * v) / scene.eye_radius
        inside = _smooth_in(re, 1.0, 0.12)
        eye_mask = np.maximum(eye_mask, inside)
        visible = _smooth_in(v, lid_line, 0.02)
        weight = inside * visible
        iris = _smooth_in(re, 0.45, 0.10)
        eye_color = (
            np.asarray(scene.sclera) * (1.0 - iris[..., None])
            + np.asarray(scene.iris) * iris[..., None]
        ) * (0.75 + 0.25 * lambert)
        color = color * (1.0 - weight[..., None]) + eye_color * weight[..., None]

    if want_mask:
        return color, eye_mask > 1e-9
    return color


def render_reference(scene: SyntheticScene, pose, resolution=64, articulation=0.0,
                     blink=0.0, intrinsics=None, supersample=None, want_eye_mask=False):
    """Exact analytic render of the blob (ray-sphere intersection).

    Pixels are footprint averages over a fixed master grid (256 wide by
    default), so doubling the resolution and box-downsampling reproduces
    the coarser render.
    """
    if intrinsics is None:
        intrinsics = facemodel.default_intrinsics(resolution)
    if isinstance(pose, facemodel.Camera):
        camera = facemodel.Camera(pose.origin, pose.orientation, intrinsics)
    else:
        camera = facemodel.pose_to_camera(pose, intrinsics)
    s = supersample if supersample is not None else max(1, 256 // resolution)
    origins, dirs = renderer.camera_rays(camera, supersample=s)
    shape = dirs.shape[:2]
    origins = origins.reshape(-1, 3)
    dirs = dirs.reshape(-1, 3)

    oc = origins - scene.center
    b = np.einsum("ij,ij->i", oc, dirs)
    disc = b * b - (np.einsum("ij,ij->i", oc, oc) - scene.radius**2)
    hit = disc > 0.0
    t_hit = -b[hit] - np.sqrt(disc[hit])
    hit[hit] = hit_front = t_hit > 1e-9

    colors = np.ones((origins.shape[0], 3)) * np.asarray(scene.background)
    mask = np.zeros(origins.shape[0], dtype=bool)
    if hit.any():
        pts = origins[hit] + t_hit[hit_front][:, None] * dirs[hit]
        local = (pts - scene.center) / scene.radius
        shaded, eye_mask = _shade_surface(scene, local, articulation, blink, want_mask=True)
        colors[hit] = shaded
        mask[hit] = eye_mask

    colors = colors.reshape(shape[0], shape[1], 3)
    mask = mask.reshape(shape)
    if s > 1:
        h, w = shape[0] // s, shape[1] // s
        colors = colors.reshape(h, s, w, s, 3).mean(axis=(1, 3))
        mask = mask.reshape(h, s, w, s).any(axis=(1, 3))
    colors = np.clip(colors, 0.0, 1.0)
    if want_eye_mask:
        return colors, mask
    return colors


def eye_region_mask(scene, pose, resolution=64, intrinsics=None):
    """Pixels that can ever be affected by the eyelid aperture at this pose."""
    _, mask = render_reference(
        scene, pose, resolution, 0.0, 0.0, intrinsics, want_eye_mask=True
    )
    return mask


# ---------------------------------------------------------------------------
# dataset generation


def _validate_config(config):
    cfg = dict(DATASET_DEFAULTS)
    unknown = set(config) - set(cfg)
    if unknown:
        raise ValidationError(f"unknown dataset config keys: {sorted(unknown)}")
    cfg.update(config)
    if cfg["identities"] < 1 or cfg["sequences_per_identity"] < 1 or cfg["frames"] < 1:
        raise ValidationError("identities, sequences and frames must be positive")
    if cfg["articulation"] not in ("gp", "zero"):
        raise ValidationError("articulation mode must be 'gp' or 'zero'")
    if cfg["fps"] != FPS:
        raise ValidationError("datasets are fixed at 25 FPS")
    return cfg


def generate_dataset(config, seed, out_dir):
    """Generate a dataset directory; byte-identical for identical (config, seed)."""
    cfg = _validate_config(config)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    basis = facemodel.synthetic_face_basis(cfg["basis_seed"])
    blink_coef = facemodel.blink_coefficient(basis)
    scene = SyntheticScene()
    frames = cfg["frames"]
    lm_rows = (3 * basis.landmark_index[:, None] + np.arange(3)[None, :]).reshape(-1)
    mean_lms = basis.mean_mesh[lm_rows]
    b_exp_lms = basis.expression_basis[lm_rows]

    sequences = []
    for ident in range(cfg["identities"]):
        profile = identity_profile(ident)
        id_rng = np.random.default_rng(np.random.SeedSequence([seed, 0x1D, ident]))
        identity_code = 0.5 * id_rng.standard_normal(facemodel.K_ID)
        for seq in range(cfg["sequences_per_identity"]):
            rng = np.random.default_rng(np.random.SeedSequence([seed, ident, seq]))
            opening, s1, s2 = articulation_latents(rng, frames, profile, cfg["articulation"])
            blink = blink_script(rng, frames, cfg["fps"], profile.blink_rate)
            eye_wiggles = gp_sample(rng, frames, 6.0, size=2)
            pose = sample_pose_channels(rng, frames, profile.rot_offset, profile.trans_offset)
            audio = synth_audio(rng, opening, s1, s2)

            codes = np.zeros((frames, facemodel.K_EXP))
            codes[:, 0] = ART_SCALE * opening
            codes[:, 1] = 0.5 * np.tanh(0.8 * s1)
            codes[:, 2] = 0.5 * np.tanh(0.8 * s2)
            codes[:, 8] = blink_coef * blink
            codes[:, 9] = 0.08 * eye_wiggles[0]
            codes[:, 10] = 0.08 * eye_wiggles[1]
            landmarks = (mean_lms[None, :] + codes @ b_exp_lms.T).reshape(frames, 68, 3)

            arrays = {
                "articulation": opening,
                "articulation_aux": np.stack([s1, s2], axis=-1),
                "audio_raw": audio,
                "expression": codes,
                "landmarks": landmarks,
                "pose": pose,
                "blink": blink,
            }
            if cfg["render_images"]:
                res = cfg["resolution"]
                images = np.zeros((frames, res, res, 3), dtype=np.float32)
                for t in range(frames):
                    images[t] = render_reference(
                        scene,
                        facemodel.HeadPose(pose[t, :3], pose[t, 3:]),
                        resolution=res,
                        articulation=opening[t],
                        blink=blink[t],
                    )
                arrays["images"] = images

            name = f"id{ident}_seq{seq}"
            seq_dir = out / name
            container.write_container(
                seq_dir,
                arrays,
                name=name,
                seed=seed,
                meta={
                    "identity_code": identity_code.tolist(),
                    "rot_offset": profile.rot_offset.tolist(),
                    "trans_offset": profile.trans_offset.tolist(),
                    "art_length_scale": profile.art_length_scale,
                    "blink_rate": profile.blink_rate,
                    "pose_length_scale": POSE_LENGTH_SCALE,
                    "pose_rot_sigma": POSE_ROT_SIGMA,
                    "pose_trans_sigma": POSE_TRANS_SIGMA,
                    "blink_coefficient": blink_coef,
                    "resolution": cfg["resolution"],
                },
                extra_manifest={
                    "fps": cfg["fps"],
                    "frame_count": frames,
                    "identity_id": ident,
                },
            )
            if cfg["render_images"]:
                container.write_frames(seq_dir, arrays["images"])
            sequences.append(name)

    index = {
        "schema_version": container.SCHEMA_VERSION,
        "name": "synthetic_dataset",
        "seed": seed,
        "config": cfg,
        "sequences": sequences,
    }
    (out / "index.json").write_text(container.canonical_json(index) + "\n", "utf-8")
    return out


class SequenceHandle:
    """Lazy view over one sequence container."""

    def __init__(self, cont: container.Container):
        self.container = cont

    @property
    def identity_id(self):
        return self.container.manifest["identity_id"]

    @property
    def frame_count(self):
        return self.container.manifest["frame_count"]

    @property
    def meta(self):
        return self.container.meta

    def __getattr__(self, name):
        if name in self.container:
            return self.container.load(name)
        raise AttributeError(name)


class DatasetHandle:
    def __init__(self, root, index, sequences):
        self.root = Path(root)
        self.index = index
        self.sequences = sequences

    @property
    def config(self):
        return self.index["config"]


def load_dataset(path):
    """Load a dataset root (index.json) or a single sequence container."""
    path = Path(path)
    if (path / "index.json").exists():
        index = json.loads((path / "index.json").read_text("utf-8"))
        seqs = [SequenceHandle(container.load_container(path / name))
                for name in index["sequences"]]
        return DatasetHandle(path, index, seqs)
    if (path / "manifest.json").exists():
        return SequenceHandle(container.load_container(path))
    raise MissingFileError(f"no dataset at {path}")
