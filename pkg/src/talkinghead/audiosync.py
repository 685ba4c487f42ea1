"""Convolutional audio encoder and contrastive audio-lip alignment.

Each video frame is summarized from 9 consecutive 10 ms windows (three
valid kernel-3 convolutions plus a 3-wide average pool), stride 4 windows
per frame. The encoder is trained so the cosine similarity between the
per-frame audio feature and the mouth embedding separates aligned pairs
from cross-sequence and time-shifted negatives.
"""

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn

from . import container, nets, synthdata
from .errors import (
    DegenerateVectorError,
    InsufficientContextError,
    InsufficientDataError,
    ShapeError,
)

AUDIO_DIM = 32
RECEPTIVE_WINDOWS = 9
MIN_SHIFT = 3
MAX_SHIFT = 15
CLAMP_EPS = 1e-6


class AudioEncoder(nn.Module):
    """Three valid kernel-3 convolutions, frame pooling, linear head."""

    def __init__(self, in_channels=synthdata.AUDIO_CHANNELS, width=32,
                 out_dim=AUDIO_DIM, dtype=torch.float32):
        super().__init__()
        self.conv = nn.ModuleList([
            nn.Conv1d(in_channels, width, 3, dtype=dtype),
            nn.Conv1d(width, width, 3, dtype=dtype),
            nn.Conv1d(width, width, 3, dtype=dtype),
        ])
        self.head = nn.Linear(width, out_dim, dtype=dtype)

    @property
    def dtype(self):
        return self.head.weight.dtype

    def forward(self, windows):
        """windows [B, W, channels] -> per-frame features [B, T, out_dim]."""
        w = windows.shape[1]
        if w < RECEPTIVE_WINDOWS:
            raise InsufficientContextError(
                f"need at least {RECEPTIVE_WINDOWS} windows, got {w}"
            )
        h = windows.transpose(1, 2)  # [B, C, W]
        for conv in self.conv:
            h = nets.smooth_leaky(conv(h))
        pooled = torch.nn.functional.avg_pool1d(h, 3, stride=1)  # [B, C, W-8]
        frames = (w - RECEPTIVE_WINDOWS) // synthdata.WINDOWS_PER_FRAME + 1
        idx = torch.arange(frames) * synthdata.WINDOWS_PER_FRAME
        return self.head(pooled[:, :, idx].transpose(1, 2))


def encode_audio(net: AudioEncoder, raw):
    """raw [W, 13] -> features [T, 32]; T frames covered by the window stream."""
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 2 or raw.shape[1] != net.conv[0].in_channels:
        raise ShapeError(f"expected [W,{net.conv[0].in_channels}] windows")
    with torch.no_grad():
        out = net(torch.as_tensor(raw, dtype=net.dtype)[None])
    return out[0].double().numpy()


def cosine_score(u, v):
    """Cosine similarity in [-1, 1]; raises on zero-norm vectors."""
    u = np.asarray(u, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu < 1e-12 or nv < 1e-12:
        raise DegenerateVectorError("cosine of a zero-norm vector")
    return float(np.clip(u @ v / (nu * nv), -1.0, 1.0))


@dataclass
class SyncPairBatch:
    """Aligned/negative feature pairs with binary labels."""

    audio: object          # [B, 32] features (torch or numpy), or None
    mouth: object          # [B, 32]
    labels: np.ndarray     # [B] in {0, 1}
    audio_blocks: np.ndarray = None  # [B, 9, 13] raw context windows
    kinds: np.ndarray = None         # "pos" | "cross" | "shift"
    shifts: np.ndarray = None        # signed frame offsets (shift negatives)


def contrastive_loss(batch: SyncPairBatch):
    """Binary cross-entropy on p = clamp((cos + 1)/2, eps, 1 - eps)."""
    audio = batch.audio if torch.is_tensor(batch.audio) else torch.as_tensor(
        np.asarray(batch.audio, dtype=np.float64)
    )
    mouth = torch.as_tensor(batch.mouth, dtype=audio.dtype) if not torch.is_tensor(
        batch.mouth
    ) else batch.mouth.to(audio.dtype)
    labels = torch.as_tensor(np.asarray(batch.labels, dtype=np.float64), dtype=audio.dtype)
    if audio.shape != mouth.shape or labels.shape[0] != audio.shape[0]:
        raise ShapeError("batch arrays disagree")
    d = torch.nn.functional.cosine_similarity(audio, mouth, dim=1)
    p = torch.clamp((d + 1.0) / 2.0, CLAMP_EPS, 1.0 - CLAMP_EPS)
    loss = -(labels * torch.log(p) + (1.0 - labels) * torch.log(1.0 - p)).mean()
    return loss if torch.is_tensor(batch.audio) else float(loss)


@dataclass
class SyncTrainingSet:
    """Per-sequence aligned audio windows and mouth embeddings."""

    audio: list   # list of [W, 13]
    mouth: list   # list of [T, 32]

    def __post_init__(self):
        if len(self.audio) != len(self.mouth):
            raise ShapeError("audio and mouth sequence counts differ")


def _audio_block(audio, frame):
    start = frame * synthdata.WINDOWS_PER_FRAME
    return audio[start : start + RECEPTIVE_WINDOWS]


def sample_pairs(training_set: SyncTrainingSet, batch_size, seed, encoder=None):
    """Draw a contrastive batch: 50% aligned, 25% cross-sequence, 25% shifted.

    Shift negatives use offsets with 3 <= |shift| <= 15. Deterministic per
    seed; pass an encoder to materialize audio features for the blocks.
    """
    n_seqs = len(training_set.audio)
    lengths = [m.shape[0] for m in training_set.mouth]
    if n_seqs < 2 or min(lengths) < 10:
        raise InsufficientDataError("need >= 2 sequences of >= 10 frames")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5C]))
    blocks, mouths, labels, kinds, shifts = [], [], [], [], []
    for _ in range(batch_size):
        s = int(rng.integers(n_seqs))
        t = int(rng.integers(lengths[s]))
        u = rng.random()
        if u < 0.5:
            kind, label = "pos", 1
            mouth = training_set.mouth[s][t]
            shift = 0
        elif u < 0.75:
            kind, label = "cross", 0
            s2 = int(rng.integers(n_seqs - 1))
            s2 = s2 + 1 if s2 >= s else s2
            mouth = training_set.mouth[s2][int(rng.integers(lengths[s2]))]
            shift = 0
        else:
            kind, label = "shift", 0
            max_mag = min(MAX_SHIFT, max(t, lengths[s] - 1 - t))
            mag = int(rng.integers(MIN_SHIFT, max_mag + 1))
            if t + mag < lengths[s] and t - mag >= 0:
                sign = 1 if rng.random() < 0.5 else -1
            elif t + mag < lengths[s]:
                sign = 1
            else:
                sign = -1
            shift = sign * mag
            mouth = training_set.mouth[s][t + shift]
        blocks.append(_audio_block(training_set.audio[s], t))
        mouths.append(mouth)
        labels.append(label)
        kinds.append(kind)
        shifts.append(shift)
    blocks = np.asarray(blocks, dtype=np.float64)
    batch = SyncPairBatch(
        audio=None,
        mouth=np.asarray(mouths, dtype=np.float64),
        labels=np.asarray(labels, dtype=np.int64),
        audio_blocks=blocks,
        kinds=np.asarray(kinds),
        shifts=np.asarray(shifts, dtype=np.int64),
    )
    if encoder is not None:
        with torch.no_grad():
            feats = encoder(torch.as_tensor(blocks, dtype=encoder.dtype))
        batch.audio = feats[:, 0].double().numpy()
    return batch


def training_set_from_dataset(dataset, disentangle_net, sequence_indices=None):
    from . import disentangle as dis

    seqs = dataset.sequences
    if sequence_indices is not None:
        seqs = [seqs[i] for i in sequence_indices]
    audio, mouth = [], []
    for seq in seqs:
        audio.append(seq.audio_raw.astype(np.float64))
        m, _ = dis.encode_batch(disentangle_net, seq.landmarks)
        mouth.append(m)
    return SyncTrainingSet(audio, mouth)


def train_sync(training_set, steps=3000, batch=64, lr=1e-3, seed=0, log_every=100):
    """Contrastive training of the audio encoder."""
    torch.manual_seed(seed)
    net = AudioEncoder()
    opt = torch.optim.Adam(net.parameters(), lr=lr)
    history = []
    for step in range(steps):
        pair_batch = sample_pairs(training_set, batch, seed=seed * 1_000_003 + step)
        feats = net(torch.as_tensor(pair_batch.audio_blocks, dtype=net.dtype))[:, 0]
        loss = contrastive_loss(
            SyncPairBatch(feats, pair_batch.mouth, pair_batch.labels)
        )
        opt.zero_grad()
        loss.backward()
        opt.step()
        if step % log_every == 0 or step == steps - 1:
            history.append({"step": step, "loss": float(loss)})
    return net, history


def fit_lip_readout(features, mouth, ridge=1e-3):
    """Closed-form ridge regression from audio features to mouth embeddings."""
    a = np.concatenate([np.asarray(f, dtype=np.float64) for f in features])
    b = np.concatenate([np.asarray(m, dtype=np.float64) for m in mouth])
    a1 = np.concatenate([a, np.ones((a.shape[0], 1))], axis=1)
    gram = a1.T @ a1 + ridge * np.eye(a1.shape[1])
    return np.linalg.solve(gram, a1.T @ b)  # [33, 32]


def apply_lip_readout(readout, features):
    features = np.asarray(features, dtype=np.float64)
    return np.concatenate([features, np.ones((features.shape[0], 1))], axis=1) @ readout


def blurred_stub_features(audio_raw, out_dim=AUDIO_DIM, blur_frames=10, seed=0):
    """Deliberately time-blurred baseline feature (weak by construction)."""
    raw = np.asarray(audio_raw, dtype=np.float64)
    width = blur_frames * synthdata.WINDOWS_PER_FRAME
    kernel = np.ones(2 * width + 1) / (2 * width + 1)
    blurred = np.stack(
        [np.convolve(raw[:, c], kernel, mode="same") for c in range(raw.shape[1])],
        axis=1,
    )
    frames = synthdata.frames_covered(raw.shape[0])
    centers = np.arange(frames) * synthdata.WINDOWS_PER_FRAME + RECEPTIVE_WINDOWS // 2
    proj = np.random.default_rng(np.random.SeedSequence([seed, 0xB1])).standard_normal(
        (raw.shape[1], out_dim)
    ) / np.sqrt(raw.shape[1])
    return blurred[centers] @ proj


def retrieval_fraction(audio_features, mouth_embeddings, shifts=range(3, 18)):
    """Fraction of frames whose aligned pair beats every shifted negative."""
    f_a = np.asarray(audio_features, dtype=np.float64)
    f_m = np.asarray(mouth_embeddings, dtype=np.float64)
    t_total = min(f_a.shape[0], f_m.shape[0])
    shifts = list(shifts)
    lo = -min(0, min(shifts))
    hi = max(0, max(shifts))
    f_a_n = f_a / np.linalg.norm(f_a, axis=1, keepdims=True)
    f_m_n = f_m / np.linalg.norm(f_m, axis=1, keepdims=True)
    wins = 0
    count = 0
    for t in range(lo, t_total - hi):
        aligned = f_a_n[t] @ f_m_n[t]
        if all(aligned > f_a_n[t] @ f_m_n[t + s] for s in shifts):
            wins += 1
        count += 1
    return wins / max(count, 1)


def save_checkpoint(path, net: AudioEncoder, readout=None, seed=0, extra_meta=None):
    arrays = {k.replace(".", "__"): v.detach().cpu().numpy()
              for k, v in net.state_dict().items()}
    if readout is not None:
        arrays["lip_readout"] = np.asarray(readout)
    meta = {"state_keys": list(net.state_dict().keys()),
            "has_readout": readout is not None}
    meta.update(extra_meta or {})
    container.write_container(path, arrays, name="audiosync", seed=seed, meta=meta)


def load_checkpoint(path):
    c = container.load_container(path)
    net = AudioEncoder()
    state = {k: torch.as_tensor(c.load(k.replace(".", "__")), dtype=net.dtype)
             for k in c.meta["state_keys"]}
    net.load_state_dict(state)
    readout = c.load("lip_readout") if c.meta.get("has_readout") else None
    return net, readout
