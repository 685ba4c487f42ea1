"""Swap-trained landmark autoencoder splitting mouth and eye embeddings.

The encoder maps a flattened 68x3 landmark frame to a 32-dim mouth
embedding and an 8-dim eye embedding; the decoder mirrors it. Training
reconstructs frames and randomly swapped mouth/eye recombinations whose
ground truth is assembled analytically from the generating codes.
"""

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn

from . import container, facemodel, nets
from .errors import NumericInputError, ShapeError, UnsupportedSupervisionError

INPUT_DIM = 3 * facemodel.N_LANDMARKS  # 204
MOUTH_DIM = 32
EYE_DIM = 8
INPUT_SCALE = 3.0


@dataclass
class AttributeEmbedding:
    """Disentangled per-frame embeddings."""

    mouth: np.ndarray  # [32]
    eye: np.ndarray    # [8]

    def __post_init__(self):
        self.mouth = np.asarray(self.mouth, dtype=np.float64).ravel()
        self.eye = np.asarray(self.eye, dtype=np.float64).ravel()
        if not (np.all(np.isfinite(self.mouth)) and np.all(np.isfinite(self.eye))):
            raise NumericInputError("embeddings must be finite")


class DisentangleNet(nn.Module):
    """Encoder 204 -> 128 -> 64 -> (mouth || eye); mirrored decoder."""

    def __init__(self, hidden=(128, 64), mouth_dim=MOUTH_DIM, eye_dim=EYE_DIM,
                 center=None, dtype=torch.float32):
        super().__init__()
        self.mouth_dim = mouth_dim
        self.eye_dim = eye_dim
        h1, h2 = hidden
        self.enc_trunk = nets.mlp([INPUT_DIM, h1, h2], dtype=dtype, final_activation=True)
        self.enc_mouth = nn.Linear(h2, mouth_dim, dtype=dtype)
        self.enc_eye = nn.Linear(h2, eye_dim, dtype=dtype)
        self.dec = nets.mlp([mouth_dim + eye_dim, h2, h1, INPUT_DIM], dtype=dtype)
        if center is None:
            center = np.zeros(INPUT_DIM)
        self.register_buffer(
            "center", torch.as_tensor(np.asarray(center, dtype=np.float64), dtype=dtype)
        )

    @property
    def dtype(self):
        return self.enc_mouth.weight.dtype

    def normalize(self, flat):
        return (flat - self.center) * INPUT_SCALE

    def denormalize(self, flat):
        return flat / INPUT_SCALE + self.center

    def encode(self, flat_landmarks):
        """flat_landmarks [...,204] (mesh units) -> (mouth [...,32], eye [...,8])."""
        h = self.enc_trunk(self.normalize(flat_landmarks))
        return self.enc_mouth(h), self.enc_eye(h)

    def decode(self, mouth, eye):
        """-> flat landmarks [...,204] in mesh units."""
        return self.denormalize(self.dec(torch.cat([mouth, eye], dim=-1)))


def encode_landmarks(net: DisentangleNet, frame) -> AttributeEmbedding:
    points = frame.points if isinstance(frame, facemodel.LandmarkFrame) else np.asarray(frame)
    if points.shape != (facemodel.N_LANDMARKS, 3):
        raise ShapeError(f"expected [68,3] landmarks, got {points.shape}")
    if not np.all(np.isfinite(points)):
        raise NumericInputError("landmarks must be finite")
    flat = torch.as_tensor(points.reshape(-1), dtype=net.dtype)
    with torch.no_grad():
        mouth, eye = net.encode(flat)
    return AttributeEmbedding(mouth.double().numpy(), eye.double().numpy())


def decode_embeddings(net: DisentangleNet, emb: AttributeEmbedding) -> facemodel.LandmarkFrame:
    if emb.mouth.shape[0] != net.mouth_dim or emb.eye.shape[0] != net.eye_dim:
        raise ShapeError("embedding dims do not match network")
    mouth = torch.as_tensor(emb.mouth, dtype=net.dtype)
    eye = torch.as_tensor(emb.eye, dtype=net.dtype)
    with torch.no_grad():
        flat = net.decode(mouth, eye)
    return facemodel.LandmarkFrame(flat.double().numpy().reshape(-1, 3))


def encode_batch(net, landmarks):
    """[T,68,3] -> (mouth [T,32], eye [T,8]) numpy."""
    flat = torch.as_tensor(
        np.asarray(landmarks, dtype=np.float64).reshape(len(landmarks), -1), dtype=net.dtype
    )
    with torch.no_grad():
        mouth, eye = net.encode(flat)
    return mouth.double().numpy(), eye.double().numpy()


def decode_batch(net, mouth, eye):
    """(mouth [T,32], eye [T,8]) -> landmarks [T,68,3] numpy."""
    with torch.no_grad():
        flat = net.decode(
            torch.as_tensor(np.asarray(mouth, dtype=np.float64), dtype=net.dtype),
            torch.as_tensor(np.asarray(eye, dtype=np.float64), dtype=net.dtype),
        )
    return flat.double().numpy().reshape(len(mouth), 68, 3)


def mixed_code(host: facemodel.ExpressionCode, donor: facemodel.ExpressionCode):
    """Host keeps identity and eye columns; mouth columns come from the donor."""
    expr = host.expression.copy()
    expr[: facemodel.N_MOUTH_COLS] = donor.expression[: facemodel.N_MOUTH_COLS]
    return facemodel.ExpressionCode(host.identity.copy(), expr)


def _require_synthetic(frame):
    if frame.source_code is None or frame.source_basis is None:
        raise UnsupportedSupervisionError(
            "swap supervision needs frames assembled from the synthetic model"
        )


def swap_reconstruction_loss(net, frame_a, frame_b):
    """Self reconstructions plus both swapped reconstructions (mean-abs, mesh units)."""
    _require_synthetic(frame_a)
    _require_synthetic(frame_b)
    basis = frame_a.source_basis
    if not np.array_equal(basis.mean_mesh, frame_b.source_basis.mean_mesh):
        raise UnsupportedSupervisionError("frames come from different bases")
    mix_ab = facemodel.assemble_landmarks(basis, mixed_code(frame_a.source_code, frame_b.source_code))
    mix_ba = facemodel.assemble_landmarks(basis, mixed_code(frame_b.source_code, frame_a.source_code))

    la = torch.as_tensor(frame_a.points.reshape(-1), dtype=net.dtype)
    lb = torch.as_tensor(frame_b.points.reshape(-1), dtype=net.dtype)
    tab = torch.as_tensor(mix_ab.points.reshape(-1), dtype=net.dtype)
    tba = torch.as_tensor(mix_ba.points.reshape(-1), dtype=net.dtype)
    return swap_loss_terms(net, la[None], lb[None], tab[None], tba[None])


def swap_loss_terms(net, la, lb, mix_ab, mix_ba, swap_mask=None):
    """Differentiable batched loss.

    la/lb: [B,204] frames; mix_ab is the target with eyes from A and mouth
    from B (decoded from (mouth_B, eye_A)), mix_ba symmetric. swap_mask
    [B] weights the swap terms (None = always on).
    """
    fm_a, fe_a = net.encode(la)
    fm_b, fe_b = net.encode(lb)
    self_a = (net.decode(fm_a, fe_a) - la).abs().mean(dim=-1)
    self_b = (net.decode(fm_b, fe_b) - lb).abs().mean(dim=-1)
    cross_ab = (net.decode(fm_b, fe_a) - mix_ab).abs().mean(dim=-1)
    cross_ba = (net.decode(fm_a, fe_b) - mix_ba).abs().mean(dim=-1)
    if swap_mask is None:
        swap_mask = torch.ones_like(self_a)
    return (self_a + self_b + swap_mask * (cross_ab + cross_ba)).mean()


def collect_frames(dataset):
    """Stack landmarks and generating codes from every sequence."""
    landmarks, codes, identity = [], [], []
    for seq in dataset.sequences:
        landmarks.append(seq.landmarks)
        codes.append(seq.expression)
        identity.append(np.full(seq.frame_count, seq.identity_id))
    return (
        np.concatenate(landmarks).astype(np.float64),
        np.concatenate(codes).astype(np.float64),
        np.concatenate(identity),
    )


def train_split(n_frames, holdout_every=10, holdout_size=2):
    """Deterministic train/held-out frame split (last slots of each block)."""
    idx = np.arange(n_frames)
    test = (idx % holdout_every) >= (holdout_every - holdout_size)
    return idx[~test], idx[test]


def train_disentangle(dataset, steps=2000, batch=64, lr=1e-3, seed=0, log_every=100):
    """Train on all synthetic frames; returns (net, history, basis)."""
    torch.manual_seed(seed)
    basis = facemodel.synthetic_face_basis(dataset.config.get("basis_seed", 0))
    landmarks, codes, _ = collect_frames(dataset)
    train_idx, _ = train_split(len(landmarks))
    flat = landmarks.reshape(len(landmarks), -1)

    lm_rows = (3 * basis.landmark_index[:, None] + np.arange(3)[None, :]).reshape(-1)
    mean_lms = basis.mean_mesh[lm_rows]
    b_exp_lms = basis.expression_basis[lm_rows]  # [204, 16]

    net = DisentangleNet(center=mean_lms)
    opt = torch.optim.Adam(net.parameters(), lr=lr)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xD15]))
    nm = facemodel.N_MOUTH_COLS
    history = []
    for step in range(steps):
        ia = rng.choice(train_idx, size=batch)
        ib = rng.choice(train_idx, size=batch)
        swap = (rng.random(batch) < 0.5).astype(np.float64)
        code_a, code_b = codes[ia], codes[ib]
        mix_ab = np.concatenate([code_b[:, :nm], code_a[:, nm:]], axis=1)
        mix_ba = np.concatenate([code_a[:, :nm], code_b[:, nm:]], axis=1)
        t = net.dtype
        loss = swap_loss_terms(
            net,
            torch.as_tensor(flat[ia], dtype=t),
            torch.as_tensor(flat[ib], dtype=t),
            torch.as_tensor(mean_lms[None] + mix_ab @ b_exp_lms.T, dtype=t),
            torch.as_tensor(mean_lms[None] + mix_ba @ b_exp_lms.T, dtype=t),
            torch.as_tensor(swap, dtype=t),
        )
        opt.zero_grad()
        loss.backward()
        opt.step()
        if step % log_every == 0 or step == steps - 1:
            history.append({"step": step, "loss": float(loss)})
    return net, history, basis


def save_checkpoint(path, net: DisentangleNet, seed=0, extra_meta=None):
    arrays = {k.replace(".", "_"): v.detach().cpu().numpy() for k, v in net.state_dict().items()}
    meta = {
        "state_keys": list(net.state_dict().keys()),
        "mouth_dim": net.mouth_dim,
        "eye_dim": net.eye_dim,
        "hidden": [net.enc_trunk[0].out_features, net.enc_trunk[2].out_features],
    }
    meta.update(extra_meta or {})
    container.write_container(path, arrays, name="disentangle", seed=seed, meta=meta)


def load_checkpoint(path) -> DisentangleNet:
    c = container.load_container(path)
    meta = c.meta
    net = DisentangleNet(
        hidden=tuple(meta["hidden"]), mouth_dim=meta["mouth_dim"], eye_dim=meta["eye_dim"]
    )
    state = {k: torch.as_tensor(c.load(k.replace(".", "_")), dtype=net.dtype)
             for k in meta["state_keys"]}
    net.load_state_dict(state)
    return net
