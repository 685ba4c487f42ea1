"""Evaluation suite: PSNR, SSIM, mouth-landmark distance, sync confidence,
and blink rate, plus the JSON evaluation report."""

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateGeometryError,
    InfinitePsnr,
    ShapeError,
)

MOUTH = slice(48, 68)
EAR_THRESHOLD = 0.2
BLINK_MIN_FRAMES = 1
BLINK_MAX_FRAMES = 10
BLINK_MERGE_GAP = 3


def psnr(a, b, peak=1.0):
    """10 log10(peak^2 / MSE); identical images raise the infinite signal."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"image shapes differ: {a.shape} vs {b.shape}")
    if peak <= 0:
        raise ShapeError("peak must be positive")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        raise InfinitePsnr("images are identical; PSNR is unbounded")
    return 10.0 * np.log10(peak * peak / mse)


def _window_means(x, window):
    """Uniform sliding-window means via an integral image; x is [H,W]."""
    s = np.zeros((x.shape[0] + 1, x.shape[1] + 1))
    s[1:, 1:] = np.cumsum(np.cumsum(x, axis=0), axis=1)
    w = window
    total = s[w:, w:] - s[:-w, w:] - s[w:, :-w] + s[:-w, :-w]
    return total / (w * w)


def ssim(a, b, window=8, k1=0.01, k2=0.03, peak=1.0):
    """Mean local SSIM over uniform sliding windows (channel-averaged)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"image shapes differ: {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a, b = a[..., None], b[..., None]
    if a.shape[0] < window or a.shape[1] < window:
        raise ShapeError(f"image smaller than the {window}x{window} window")
    c1 = (k1 * peak) ** 2
    c2 = (k2 * peak) ** 2
    values = []
    for ch in range(a.shape[2]):
        x, y = a[..., ch], b[..., ch]
        mx = _window_means(x, window)
        my = _window_means(y, window)
        vx = _window_means(x * x, window) - mx * mx
        vy = _window_means(y * y, window) - my * my
        cxy = _window_means(x * y, window) - mx * my
        num = (2 * mx * my + c1) * (2 * cxy + c2)
        den = (mx * mx + my * my + c1) * (vx + vy + c2)
        values.append(np.mean(num / den))
    return float(np.mean(values))


def project_landmarks(points):
    """Front-view orthographic projection: keep (x, y)."""
    points = np.asarray(points, dtype=np.float64)
    return points[..., :2]


def lmd(pred_landmarks, gt_landmarks, align=True):
    """Mean mouth-landmark distance after per-frame centroid alignment."""
    pred = np.asarray(pred_landmarks, dtype=np.float64)
    gt = np.asarray(gt_landmarks, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ShapeError(f"landmark sequences differ: {pred.shape} vs {gt.shape}")
    if pred.shape[1] == 68:
        pred, gt = pred[:, MOUTH], gt[:, MOUTH]
    if align:
        pred = pred - pred.mean(axis=1, keepdims=True)
        gt = gt - gt.mean(axis=1, keepdims=True)
    return float(np.mean(np.linalg.norm(pred - gt, axis=-1)))


def lmd_trace(pred_landmarks, gt_landmarks, align=True):
    pred = np.asarray(pred_landmarks, dtype=np.float64)[:, MOUTH]
    gt = np.asarray(gt_landmarks, dtype=np.float64)[:, MOUTH]
    if align:
        pred = pred - pred.mean(axis=1, keepdims=True)
        gt = gt - gt.mean(axis=1, keepdims=True)
    return np.mean(np.linalg.norm(pred - gt, axis=-1), axis=1)


def sync_offset_profile(audio_features, mouth_embeddings, max_offset=15):
    """Per-frame cosine scores over offsets: comparing f_a[t] to f_m[t+o].

    Returns (offsets [2m+1], scores [T_valid, 2m+1]).
    """
    f_a = np.asarray(audio_features, dtype=np.float64)
    f_m = np.asarray(mouth_embeddings, dtype=np.float64)
    t_total = min(f_a.shape[0], f_m.shape[0])
    if t_total < 2 * max_offset + 1:
        raise ShapeError(
            f"need overlap of {2 * max_offset + 1} frames, got {t_total}"
        )
    f_a = f_a[:t_total] / np.maximum(np.linalg.norm(f_a[:t_total], axis=1, keepdims=True), 1e-12)
    f_m = f_m[:t_total] / np.maximum(np.linalg.norm(f_m[:t_total], axis=1, keepdims=True), 1e-12)
    offsets = np.arange(-max_offset, max_offset + 1)
    valid = np.arange(max_offset, t_total - max_offset)
    scores = np.stack(
        [np.einsum("ij,ij->i", f_a[valid], f_m[valid + o]) for o in offsets], axis=1
    )
    return offsets, scores


def sync_confidence(audio_features, mouth_embeddings, max_offset=15):
    """Mean over frames of (score at the best offset - mean score)."""
    offsets, scores = sync_offset_profile(audio_features, mouth_embeddings, max_offset)
    best = int(np.argmax(scores.mean(axis=0)))
    return float(np.mean(scores[:, best] - scores.mean(axis=1)))


def best_sync_offset(audio_features, mouth_embeddings, max_offset=15):
    offsets, scores = sync_offset_profile(audio_features, mouth_embeddings, max_offset)
    return int(offsets[np.argmax(scores.mean(axis=0))])


_RIGHT_EYE = [36, 37, 38, 39, 40, 41]
_LEFT_EYE = [42, 43, 44, 45, 46, 47]


def eye_aspect_ratio(points):
    """Mean EAR of both eyes from a 68-point frame (2-D front view)."""
    pts = project_landmarks(points)
    ratios = []
    for eye in (_RIGHT_EYE, _LEFT_EYE):
        p = pts[eye]
        width = np.linalg.norm(p[0] - p[3])
        if width < 1e-9:
            raise DegenerateGeometryError("zero eye width")
        h1 = np.linalg.norm(p[1] - p[5])
        h2 = np.linalg.norm(p[2] - p[4])
        ratios.append((h1 + h2) / (2.0 * width))
    return float(np.mean(ratios))


def _below_runs(below):
    """(start, end) pairs of maximal runs where below is True; end exclusive."""
    runs = []
    start = None
    for i, flag in enumerate(below):
        if flag and start is None:
            start = i
        elif not flag and start is not None:
            runs.append((start, i))
            start = None
    if start is not None:
        runs.append((start, len(below)))
    return runs


def blink_rate(eye_landmark_sequence, fps=25):
    """Blinks per second from the eye-aspect-ratio trace.

    A blink is a maximal EAR < 0.2 run lasting 1-10 frames; runs separated
    by fewer than 3 open frames merge into one blink.
    """
    seq = np.asarray(eye_landmark_sequence, dtype=np.float64)
    if seq.shape[0] < 2 * fps:
        raise ShapeError("need at least 2 seconds of frames")
    ears = np.array([eye_aspect_ratio(f) for f in seq])
    runs = _below_runs(ears < EAR_THRESHOLD)
    merged = []
    for run in runs:
        if merged and run[0] - merged[-1][1] < BLINK_MERGE_GAP:
            merged[-1] = (merged[-1][0], run[1])
        else:
            merged.append(run)
    count = sum(
        1 for s, e in merged if BLINK_MIN_FRAMES <= (e - s) <= BLINK_MAX_FRAMES
    )
    return count / (seq.shape[0] / fps)


@dataclass
class EvalReport:
    """Metric snapshot; psnr is the string "infinite" when images match."""

    psnr: object
    ssim: float
    lmd: float
    sync_conf: float
    blinks_per_s: float
    traces: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "psnr": self.psnr,
            "ssim": self.ssim,
            "lmd": self.lmd,
            "sync_conf": self.sync_conf,
            "blinks_per_s": self.blinks_per_s,
            "traces": self.traces,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text):
        data = json.loads(text)
        return cls(
            psnr=data["psnr"],
            ssim=data["ssim"],
            lmd=data["lmd"],
            sync_conf=data["sync_conf"],
            blinks_per_s=data["blinks_per_s"],
            traces=data.get("traces", {}),
        )
