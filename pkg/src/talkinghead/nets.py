"""Shared network building blocks (torch)."""

import math

import numpy as np
import torch
import torch.nn as nn

LOG2 = math.log(2.0)


def smooth_leaky(x):
    """Smooth leaky rectifier: slope 0.1 at -inf, 1.0 at +inf, f(0) = 0."""
    return 0.1 * x + 0.9 * (torch.nn.functional.softplus(x) - LOG2)


class SmoothLeaky(nn.Module):
    def forward(self, x):
        return smooth_leaky(x)


def mlp(sizes, dtype=torch.float32, final_activation=False):
    """Fully connected stack with the smooth leaky rectifier between layers."""
    layers = []
    for i in range(len(sizes) - 1):
        layers.append(nn.Linear(sizes[i], sizes[i + 1], dtype=dtype))
        if i < len(sizes) - 2 or final_activation:
            layers.append(SmoothLeaky())
    return nn.Sequential(*layers)


def sinusoidal_positions(length, dim, dtype=torch.float32):
    """Standard sin/cos positional table [length, dim]."""
    pos = torch.arange(length, dtype=torch.float64)[:, None]
    idx = torch.arange(0, dim, 2, dtype=torch.float64)[None, :]
    angles = pos / torch.pow(10000.0, idx / dim)
    table = torch.zeros(length, dim, dtype=torch.float64)
    table[:, 0::2] = torch.sin(angles)
    table[:, 1::2] = torch.cos(angles[:, : table[:, 1::2].shape[1]])
    return table.to(dtype)


def hash_uniform(*streams):
    """Deterministic per-element uniforms in [0,1) via a splitmix64-style hash.

    streams: integer arrays broadcast together; independent of evaluation
    order, so per-ray jitter is reproducible under any parallel chunking.
    """
    streams = [np.asarray(s, dtype=np.uint64) for s in streams]
    h = np.uint64(0x9E3779B97F4A7C15)
    acc = np.zeros(np.broadcast_shapes(*[s.shape for s in streams]), dtype=np.uint64)
    with np.errstate(over="ignore"):
        for s in streams:
            acc = (acc + s) * np.uint64(0xBF58476D1CE4E5B9) + h
            acc ^= acc >> np.uint64(31)
            acc *= np.uint64(0x94D049BB133111EB)
            acc ^= acc >> np.uint64(29)
    return (acc >> np.uint64(11)).astype(np.float64) / float(1 << 53)


def flat_parameters(module):
    return torch.cat([p.detach().reshape(-1) for p in module.parameters()])


def set_flat_parameters(module, flat):
    offset = 0
    with torch.no_grad():
        for p in module.parameters():
            n = p.numel()
            p.copy_(flat[offset : offset + n].reshape(p.shape))
            offset += n


def finite_difference_gradient(module, loss_fn, step=1e-5):
    """Central-difference gradient of loss_fn() w.r.t. all module parameters."""
    base = flat_parameters(module).clone()
    grad = torch.zeros_like(base)
    for i in range(base.numel()):
        for sign in (1.0, -1.0):
            shifted = base.clone()
            shifted[i] += sign * step
            set_flat_parameters(module, shifted)
            with torch.no_grad():
                grad[i] += sign * float(loss_fn())
    set_flat_parameters(module, base)
    return grad / (2.0 * step)


def autograd_gradient(module, loss_fn):
    for p in module.parameters():
        p.grad = None
    loss = loss_fn()
    loss.backward()
    return torch.cat(
        [
            (p.grad if p.grad is not None else torch.zeros_like(p)).reshape(-1)
            for p in module.parameters()
        ]
    )


def gradient_relative_error(module, loss_fn, step=1e-5):
    """Global relative L2 error between autograd and central differences."""
    g_ad = autograd_gradient(module, loss_fn)
    g_fd = finite_difference_gradient(module, loss_fn, step=step)
    denom = max(float(g_ad.norm()), float(g_fd.norm()), 1e-12)
    return float((g_ad - g_fd).norm()) / denom
