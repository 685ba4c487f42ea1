"""Sequence VAE with a Gaussian-process prior plus the cross-modal encoder
that conditions generation on audio and a short attribute prefix.

Attribute frames are 14-dimensional (6 pose DoF followed by the 8-dim eye
embedding). The posterior is diagonal over time per latent channel; the
prior is a full Cauchy-kernel Gram per channel, so the closed-form KL stays
tractable. The KL argument order follows the training objective literally:
KL(prior || posterior).
"""

import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn

from . import container, nets
from .errors import (
    EmptyHorizonError,
    HorizonError,
    NonPSDError,
    NumericInputError,
    ParameterError,
    SequenceTooLongError,
    ShapeError,
)

D_ATTR = 14
D_Z = 16
DEFAULT_WINDOW = 50
DEFAULT_TAU = 5
MAX_LEN = 256
ARCHS = ("transformer", "lstm", "mlp")


@dataclass
class GPKernelParams:
    amplitude: float = 1.0
    length_scale: float = 5.0
    jitter: float = 1e-5

    def __post_init__(self):
        if self.length_scale <= 0:
            raise ParameterError("length_scale must be positive")
        if self.amplitude <= 0:
            raise ParameterError("amplitude must be positive")
        if self.jitter < 0:
            raise ParameterError("jitter must be non-negative")


@dataclass
class AttributeSequence:
    """Time series of per-frame attribute vectors at 25 FPS."""

    values: np.ndarray      # [T, d_attr]
    timestamps: np.ndarray  # [T] frame indices

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.timestamps = np.asarray(self.timestamps, dtype=np.int64).ravel()
        if self.values.ndim != 2 or self.values.shape[0] != self.timestamps.shape[0]:
            raise ShapeError("values and timestamps disagree")
        if self.timestamps.shape[0] > 1 and not np.all(np.diff(self.timestamps) > 0):
            raise ShapeError("timestamps must be strictly increasing")
        if not np.all(np.isfinite(self.values)):
            raise NumericInputError("attribute values must be finite")


@dataclass
class LatentGaussian:
    """Gaussian over latent paths: diagonal posterior or per-channel full prior."""

    mean: object   # [T, d_z]
    cov: object    # diagonal: variances [T, d_z]; gp_full: [T,T] or [d_z,T,T]
    kind: str      # "diagonal" | "gp_full"


def cauchy_gram(timestamps, params: GPKernelParams, dtype=torch.float64):
    """K[i,j] = amplitude / (1 + ((t_i - t_j)/l)^2) + jitter * 1[i=j]."""
    t = torch.as_tensor(np.asarray(timestamps, dtype=np.float64))
    lag = (t[:, None] - t[None, :]) / params.length_scale
    gram = params.amplitude / (1.0 + lag**2)
    return (gram + params.jitter * torch.eye(t.shape[0], dtype=torch.float64)).to(dtype)


def _cholesky(mat):
    try:
        return torch.linalg.cholesky(mat)
    except Exception as exc:  # torch raises LinAlgError
        raise NonPSDError(f"covariance is not positive definite: {exc}") from None


# ---------------------------------------------------------------------------
# sequence stacks


class TransformerBlock(nn.Module):
    def __init__(self, width, heads, dtype):
        super().__init__()
        if width % heads:
            raise ParameterError("width must divide into heads")
        self.heads = heads
        self.norm1 = nn.LayerNorm(width, dtype=dtype)
        self.qkv = nn.Linear(width, 3 * width, dtype=dtype)
        self.proj = nn.Linear(width, width, dtype=dtype)
        self.norm2 = nn.LayerNorm(width, dtype=dtype)
        self.ff = nn.Sequential(
            nn.Linear(width, 2 * width, dtype=dtype),
            nets.SmoothLeaky(),
            nn.Linear(2 * width, width, dtype=dtype),
        )

    def forward(self, x):
        b, t, w = x.shape
        h = self.heads
        q, k, v = self.qkv(self.norm1(x)).chunk(3, dim=-1)
        q = q.reshape(b, t, h, w // h).transpose(1, 2)
        k = k.reshape(b, t, h, w // h).transpose(1, 2)
        v = v.reshape(b, t, h, w // h).transpose(1, 2)
        attn = torch.softmax(q @ k.transpose(-1, -2) / math.sqrt(w // h), dim=-1)
        mixed = (attn @ v).transpose(1, 2).reshape(b, t, w)
        x = x + self.proj(mixed)
        return x + self.ff(self.norm2(x))


class SeqStack(nn.Module):
    """Sequence trunk: transformer (with positions), LSTM, or per-frame MLP."""

    def __init__(self, in_dim, width, heads=4, depth=2, arch="transformer",
                 max_len=MAX_LEN, dtype=torch.float32):
        super().__init__()
        if arch not in ARCHS:
            raise ParameterError(f"unknown arch {arch!r}")
        self.arch = arch
        self.max_len = max_len
        self.proj = nn.Linear(in_dim, width, dtype=dtype)
        if arch == "transformer":
            self.register_buffer("positions", nets.sinusoidal_positions(max_len, width, dtype))
            self.blocks = nn.ModuleList(TransformerBlock(width, heads, dtype) for _ in range(depth))
        elif arch == "lstm":
            self.lstm = nn.LSTM(width, width, num_layers=depth, batch_first=True)
            if dtype == torch.float64:
                self.lstm.double()
        else:
            self.mlp = nets.mlp([width, width, width], dtype=dtype)

    def forward(self, x, positions=None):
        """x [B,T,in_dim]; positions [T] frame indices for the positional table."""
        t = x.shape[1]
        if positions is None:
            positions = torch.arange(t)
        if int(positions.max()) >= self.max_len:
            raise SequenceTooLongError(
                f"sequence position {int(positions.max())} exceeds table ({self.max_len})"
            )
        h = self.proj(x)
        if self.arch == "transformer":
            h = h + self.positions[positions.long()][None, :, :]
            for block in self.blocks:
                h = block(h)
            return h
        if self.arch == "lstm":
            return self.lstm(h)[0]
        return self.mlp(h)


class SeqVAE(nn.Module):
    """Encoder/decoder over attribute sequences with per-frame latent stats."""

    def __init__(self, d_attr=D_ATTR, d_z=D_Z, width=64, heads=4, depth=2,
                 arch="transformer", max_len=MAX_LEN, dtype=torch.float32):
        super().__init__()
        self.d_attr = d_attr
        self.d_z = d_z
        self.arch = arch
        self.encoder = SeqStack(d_attr, width, heads, depth, arch, max_len, dtype)
        self.enc_readout = nn.Linear(width, 2 * d_z, dtype=dtype)
        self.decoder = SeqStack(d_z, width, heads, depth, arch, max_len, dtype)
        self.dec_readout = nn.Linear(width, d_attr, dtype=dtype)
        self.register_buffer("norm_mean", torch.zeros(d_attr, dtype=dtype))
        self.register_buffer("norm_std", torch.ones(d_attr, dtype=dtype))

    @property
    def dtype(self):
        return self.enc_readout.weight.dtype

    def set_normalization(self, mean, std):
        self.norm_mean.copy_(torch.as_tensor(mean, dtype=self.dtype))
        self.norm_std.copy_(torch.as_tensor(std, dtype=self.dtype))

    def normalize(self, h):
        return (h - self.norm_mean) / self.norm_std

    def denormalize(self, h):
        return h * self.norm_std + self.norm_mean

    def encoder_stats(self, h_norm, positions=None):
        """h_norm [B,T,d_attr] -> (mean [B,T,d_z], var [B,T,d_z])."""
        out = self.enc_readout(self.encoder(h_norm, positions))
        mean, logvar = out.chunk(2, dim=-1)
        return mean, torch.exp(logvar)

    def decoder_forward(self, z, positions=None):
        """z [B,T,d_z] -> normalized attributes [B,T,d_attr]."""
        return self.dec_readout(self.decoder(z, positions))


def _seq_values(seq):
    if isinstance(seq, AttributeSequence):
        return seq.values, seq.timestamps
    arr = np.asarray(seq, dtype=np.float64)
    return arr, np.arange(arr.shape[0])


def encode_sequence(vae: SeqVAE, seq) -> LatentGaussian:
    """Posterior over latent paths: per-frame mean and variance per channel."""
    values, timestamps = _seq_values(seq)
    if values.shape[1] != vae.d_attr:
        raise ShapeError(f"expected {vae.d_attr} attribute channels")
    h = torch.as_tensor(values, dtype=vae.dtype)[None]
    pos = torch.as_tensor(timestamps - timestamps.min())
    with torch.no_grad():
        mean, var = vae.encoder_stats(vae.normalize(h), pos)
    return LatentGaussian(mean[0].double().numpy(), var[0].double().numpy(), "diagonal")


def decode_sequence(vae: SeqVAE, z, timestamps=None) -> AttributeSequence:
    """Latent path [T,d_z] -> attribute sequence in raw units."""
    z = np.asarray(z, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise NumericInputError("latent path must be finite")
    if timestamps is None:
        timestamps = np.arange(z.shape[0])
    pos = torch.as_tensor(np.asarray(timestamps) - np.asarray(timestamps).min())
    with torch.no_grad():
        out = vae.denormalize(
            vae.decoder_forward(torch.as_tensor(z, dtype=vae.dtype)[None], pos)
        )
    return AttributeSequence(out[0].double().numpy(), np.asarray(timestamps))


def reparam_sample(g: LatentGaussian, noise, mode):
    """z = mean + scale(noise); differentiable in mean and covariance."""
    was_numpy = isinstance(g.mean, np.ndarray)
    mean = torch.as_tensor(g.mean, dtype=torch.float64)
    cov = torch.as_tensor(g.cov, dtype=torch.float64)
    eps = torch.as_tensor(noise, dtype=torch.float64)
    if eps.shape != mean.shape:
        raise ShapeError("noise must match the mean shape [T, d_z]")
    if mode == "diagonal":
        if g.kind != "diagonal":
            raise ShapeError("diagonal sampling needs a diagonal covariance")
        z = mean + torch.sqrt(cov) * eps
    elif mode == "gp_full":
        grams = cov[None] if cov.dim() == 2 else cov
        chol = _cholesky(grams)  # [C,T,T] with C in {1, d_z}
        if chol.shape[0] == 1:
            chol = chol.expand(mean.shape[1], -1, -1)
        z = mean + torch.einsum("cts,sc->tc", chol, eps)
    else:
        raise ParameterError(f"unknown sampling mode {mode!r}")
    return z.numpy() if was_numpy else z


def recon_loss(h_hat, h):
    """Mean over the batch of the (unsquared) L2 norm of the difference."""
    torch_in = torch.is_tensor(h_hat) or torch.is_tensor(h)
    a = torch.as_tensor(h_hat)
    b = torch.as_tensor(h).to(a.dtype)
    if a.shape != b.shape:
        raise ShapeError("reconstruction shape mismatch")
    if a.dim() == 2:
        a, b = a[None], b[None]
    norms = (a - b).reshape(a.shape[0], -1).pow(2).sum(dim=1).sqrt()
    out = norms.mean()
    return out if torch_in else float(out)


def kl_term(prior: LatentGaussian, posterior: LatentGaussian):
    """Closed-form KL(prior || posterior), summed over latent channels.

    Prior: N(mean0_c, K_c) with full Grams; posterior: N(mean1_c, diag v_c).
    Uses the Cholesky of the prior Gram for its log-determinant.
    """
    if prior.kind != "gp_full" or posterior.kind != "diagonal":
        raise ShapeError("kl_term expects a full prior and a diagonal posterior")
    torch_in = torch.is_tensor(posterior.mean)
    mean0 = torch.as_tensor(prior.mean, dtype=torch.float64)
    mean1 = torch.as_tensor(posterior.mean)
    var1 = torch.as_tensor(posterior.cov)
    dtype = mean1.dtype if torch_in else torch.float64
    mean1, var1 = mean1.to(torch.float64), var1.to(torch.float64)
    t, d_z = mean1.shape
    grams = torch.as_tensor(prior.cov, dtype=torch.float64)
    if grams.dim() == 2:
        grams = grams[None]
    chol = _cholesky(grams)
    logdet_k = 2.0 * torch.log(torch.diagonal(chol, dim1=-2, dim2=-1)).sum(dim=-1)  # [C]
    diag_k = torch.diagonal(grams, dim1=-2, dim2=-1)  # [C,T]
    if grams.shape[0] == 1:
        logdet_k = logdet_k.expand(d_z)
        diag_k = diag_k.expand(d_z, t)
    delta = (mean1 - mean0).T  # [d_z, T]
    v = var1.T                 # [d_z, T]
    per_channel = 0.5 * (
        ((diag_k + delta**2) / v).sum(dim=1)
        - t
        + torch.log(v).sum(dim=1)
        - logdet_k
    )
    total = per_channel.sum()
    return total.to(dtype) if torch_in else float(total)


def gp_prior(timestamps, kernel: GPKernelParams, d_z=D_Z):
    """Zero-mean GP prior shared across channels."""
    gram = cauchy_gram(timestamps, kernel)
    t = gram.shape[0]
    return LatentGaussian(np.zeros((t, d_z)), gram.numpy(), "gp_full")


def diagonal_prior(timestamps, d_z=D_Z):
    """Standard-normal prior expressed as an identity Gram."""
    t = len(np.asarray(timestamps))
    return LatentGaussian(np.zeros((t, d_z)), np.eye(t), "gp_full")


def vae_loss(vae, h, prior, beta, noise=None, positions=None):
    """Reconstruction + beta * KL on a batch [B,T,d_attr] of raw attributes."""
    h = torch.as_tensor(np.asarray(h, dtype=np.float64), dtype=vae.dtype)
    if h.dim() == 2:
        h = h[None]
    h_norm = vae.normalize(h)
    mean, var = vae.encoder_stats(h_norm, positions)
    if noise is None:
        noise = torch.randn_like(mean)
    z = mean + torch.sqrt(var) * noise
    h_hat = vae.decoder_forward(z, positions)
    rec = recon_loss(h_hat, h_norm)
    kls = [
        kl_term(prior, LatentGaussian(mean[b], var[b], "diagonal"))
        for b in range(h.shape[0])
    ]
    kl = torch.stack(kls).mean().to(vae.dtype)
    return {"total": rec + beta * kl, "recon": rec, "kl": kl}


# ---------------------------------------------------------------------------
# cross-modal encoder


class CrossModalEncoder(nn.Module):
    """Embeds audio and an encoded attribute prefix into the VAE latent space."""

    def __init__(self, d_audio=32, d_z=D_Z, width=64, heads=4, depth=2,
                 arch="transformer", max_len=MAX_LEN, dtype=torch.float32):
        super().__init__()
        self.d_z = d_z
        self.audio_proj = nn.Linear(d_audio, width, dtype=dtype)
        self.bop_proj = nn.Linear(d_z, width, dtype=dtype)
        self.segment = nn.Parameter(torch.zeros(2, width, dtype=dtype))
        self.trunk = SeqStack(width, width, heads, depth, arch, max_len, dtype)
        self.readout = nn.Linear(width, 2 * d_z, dtype=dtype)

    @property
    def dtype(self):
        return self.readout.weight.dtype

    def forward(self, audio, bop_latent, audio_enabled=True):
        """audio [B,T,d_audio], bop_latent [B,tau,d_z] -> (mean, var) [B,T-tau,d_z]."""
        b, t = audio.shape[:2]
        tau = bop_latent.shape[1]
        if tau >= t:
            raise EmptyHorizonError(f"prefix length {tau} covers the horizon {t}")
        audio_tokens = self.audio_proj(audio) + self.segment[0]
        if not audio_enabled:
            audio_tokens = torch.zeros_like(audio_tokens) + self.segment[0]
        bop_tokens = self.bop_proj(bop_latent) + self.segment[1]
        tokens = torch.cat([audio_tokens, bop_tokens], dim=1)  # [f_a : f_h] along time
        positions = torch.cat([torch.arange(t), torch.arange(tau)])
        h = self.trunk(tokens, positions)[:, tau:t]  # readout at audio tokens tau..T-1
        mean, logvar = self.readout(h).chunk(2, dim=-1)
        return mean, torch.exp(logvar)


def cross_modal_encode(cme: CrossModalEncoder, vae: SeqVAE, audio_features, bop,
                       audio_enabled=True) -> LatentGaussian:
    """Latent Gaussian over frames tau+1..T given audio and the prefix."""
    audio = torch.as_tensor(np.asarray(audio_features, dtype=np.float64), dtype=cme.dtype)
    bop_values, _ = _seq_values(bop)
    bop_t = torch.as_tensor(bop_values, dtype=vae.dtype)[None]
    with torch.no_grad():
        bop_mean, _ = vae.encoder_stats(vae.normalize(bop_t))
        mean, var = cme(audio[None], bop_mean.to(cme.dtype), audio_enabled)
    return LatentGaussian(mean[0].double().numpy(), var[0].double().numpy(), "diagonal")


def cme_loss(cme, vae, audio, bop, target, noise=None):
    """Prediction loss; gradients flow only into the cross-modal encoder."""
    audio = torch.as_tensor(np.asarray(audio, dtype=np.float64), dtype=cme.dtype)
    bop = torch.as_tensor(np.asarray(bop, dtype=np.float64), dtype=vae.dtype)
    target = torch.as_tensor(np.asarray(target, dtype=np.float64), dtype=vae.dtype)
    if audio.dim() == 2:
        audio, bop, target = audio[None], bop[None], target[None]
    if bop.shape[1] + target.shape[1] != audio.shape[1]:
        raise ShapeError("audio must cover prefix plus target frames")
    with torch.no_grad():
        bop_mean, _ = vae.encoder_stats(vae.normalize(bop))
    mean, var = cme(audio, bop_mean.to(cme.dtype), audio_enabled=True)
    if noise is None:
        noise = torch.randn_like(mean)
    z = mean + torch.sqrt(var) * noise
    tau = bop.shape[1]
    positions = torch.arange(tau, audio.shape[1])
    h_hat = vae.decoder_forward(z.to(vae.dtype), positions)
    return recon_loss(h_hat, vae.normalize(target))


def generate_attributes(vae, cme, audio_features, bop, seed,
                        kernel=None, window=DEFAULT_WINDOW, tau=DEFAULT_TAU,
                        mode="gp_full") -> AttributeSequence:
    """Autoregressive window-chained generation of frames tau+1..T'.

    Each window predicts window - tau frames; the tail of every generated
    window becomes the next window's prefix. Deterministic per seed.
    """
    audio = np.asarray(audio_features, dtype=np.float64)
    horizon = audio.shape[0]
    bop_values, _ = _seq_values(bop)
    if bop_values.shape[0] != tau:
        raise ShapeError(f"prefix must hold {tau} frames")
    if horizon <= tau:
        raise HorizonError(f"audio horizon {horizon} must exceed the prefix {tau}")
    kernel = kernel or GPKernelParams()
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x6E4]))

    bop_norm = vae.normalize(torch.as_tensor(bop_values, dtype=vae.dtype))[None]
    outputs = []
    pos = tau
    while pos < horizon:
        win_end = min(pos + (window - tau), horizon)
        length = win_end - pos
        audio_slice = torch.as_tensor(audio[pos - tau : win_end], dtype=cme.dtype)[None]
        with torch.no_grad():
            bop_mean, _ = vae.encoder_stats(bop_norm)
            mean, var = cme(audio_slice, bop_mean.to(cme.dtype))
            mean, var = mean[0].double(), var[0].double()
            eps = torch.as_tensor(rng.standard_normal(mean.shape))
            if mode == "gp_full":
                corr = cauchy_gram(np.arange(length), kernel).double()
                corr = corr / (kernel.amplitude + kernel.jitter)
                z = mean + torch.sqrt(var) * (_cholesky(corr) @ eps)
            else:
                z = mean + torch.sqrt(var) * eps
            h_norm = vae.decoder_forward(
                z.to(vae.dtype)[None], torch.arange(tau, win_end - pos + tau)
            )[0]
        outputs.append(h_norm.double().numpy())
        bop_norm = h_norm[None, -tau:].to(vae.dtype) if length >= tau else torch.cat(
            [bop_norm[0], h_norm], dim=0
        )[None, -tau:]
        pos = win_end
    values_norm = np.concatenate(outputs, axis=0)
    values = (
        torch.as_tensor(values_norm, dtype=vae.dtype) * vae.norm_std + vae.norm_mean
    ).double().numpy()
    return AttributeSequence(values, np.arange(tau, horizon))


# ---------------------------------------------------------------------------
# training loops


def make_windows(series_list, window=DEFAULT_WINDOW, stride=10):
    """Slice [T,d] series into overlapping windows [N,window,d]."""
    out = []
    for series in series_list:
        arr = np.asarray(series, dtype=np.float64)
        for start in range(0, arr.shape[0] - window + 1, stride):
            out.append(arr[start : start + window])
    return np.stack(out) if out else np.zeros((0, window, series_list[0].shape[1]))


def train_vae(windows, arch="transformer", prior_mode="gp", kernel=None,
              steps=1200, batch=16, lr=1e-3, beta_max=1.0, warmup_frac=0.25,
              seed=0, log_every=100):
    """Fit the sequence VAE; prior_mode 'gp' or 'diagonal'."""
    torch.manual_seed(seed)
    windows = np.asarray(windows, dtype=np.float64)
    n, t, d = windows.shape
    kernel = kernel or GPKernelParams()
    vae = SeqVAE(d_attr=d, arch=arch)
    flat = windows.reshape(-1, d)
    vae.set_normalization(flat.mean(axis=0), flat.std(axis=0) + 1e-8)
    prior = gp_prior(np.arange(t), kernel, vae.d_z) if prior_mode == "gp" \
        else diagonal_prior(np.arange(t), vae.d_z)
    opt = torch.optim.Adam(vae.parameters(), lr=lr)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x7AE]))
    warmup = max(1, int(warmup_frac * steps))
    history = []
    for step in range(steps):
        beta = beta_max * min(1.0, step / warmup)
        idx = rng.integers(0, n, size=min(batch, n))
        losses = vae_loss(vae, windows[idx], prior, beta)
        opt.zero_grad()
        losses["total"].backward()
        opt.step()
        if step % log_every == 0 or step == steps - 1:
            history.append(
                {"step": step, "loss": float(losses["total"]),
                 "recon": float(losses["recon"]), "kl": float(losses["kl"]), "beta": beta}
            )
    return vae, history


def train_cross_modal(windows, audio_windows, vae, arch=None, tau=DEFAULT_TAU,
                      steps=1200, batch=16, lr=1e-3, seed=0, log_every=100):
    """Fit the cross-modal encoder against a frozen VAE."""
    torch.manual_seed(seed + 1)
    windows = np.asarray(windows, dtype=np.float64)
    audio_windows = np.asarray(audio_windows, dtype=np.float64)
    n = windows.shape[0]
    for p in vae.parameters():
        p.requires_grad_(False)
    cme = CrossModalEncoder(d_audio=audio_windows.shape[2], d_z=vae.d_z,
                            arch=arch or vae.arch)
    opt = torch.optim.Adam(cme.parameters(), lr=lr)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xC3E]))
    history = []
    for step in range(steps):
        idx = rng.integers(0, n, size=min(batch, n))
        loss = cme_loss(
            cme, vae, audio_windows[idx], windows[idx, :tau], windows[idx, tau:]
        )
        opt.zero_grad()
        loss.backward()
        opt.step()
        if step % log_every == 0 or step == steps - 1:
            history.append({"step": step, "loss": float(loss)})
    return cme, history


# ---------------------------------------------------------------------------
# checkpoints


def _save_module(path, module, name, seed, meta):
    arrays = {k.replace(".", "__"): v.detach().cpu().numpy()
              for k, v in module.state_dict().items()}
    meta = dict(meta, state_keys=list(module.state_dict().keys()))
    container.write_container(path, arrays, name=name, seed=seed, meta=meta)


def _load_state(path, module):
    c = container.load_container(path)
    state = {k: torch.as_tensor(c.load(k.replace(".", "__")), dtype=module.dtype)
             for k in c.meta["state_keys"]}
    module.load_state_dict(state)
    return c.meta


def save_vae(path, vae: SeqVAE, seed=0, extra_meta=None):
    meta = {"arch": vae.arch, "d_attr": vae.d_attr, "d_z": vae.d_z}
    meta.update(extra_meta or {})
    _save_module(path, vae, "gpvae", seed, meta)


def load_vae(path) -> SeqVAE:
    c = container.load_container(path)
    vae = SeqVAE(d_attr=c.meta["d_attr"], d_z=c.meta["d_z"], arch=c.meta["arch"])
    _load_state(path, vae)
    return vae


def save_cme(path, cme: CrossModalEncoder, seed=0, extra_meta=None):
    meta = {"d_z": cme.d_z, "arch": cme.trunk.arch,
            "d_audio": cme.audio_proj.in_features}
    meta.update(extra_meta or {})
    _save_module(path, cme, "crossmodal", seed, meta)


def load_cme(path) -> CrossModalEncoder:
    c = container.load_container(path)
    cme = CrossModalEncoder(d_audio=c.meta["d_audio"], d_z=c.meta["d_z"],
                            arch=c.meta["arch"])
    _load_state(path, cme)
    return cme
