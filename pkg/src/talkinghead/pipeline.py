"""Pipeline orchestration: stage training DAG, checkpoint persistence,
video generation, evaluation, and the ablation grid.

Stage order: disentangle -> {sync, gpvae} -> crossmodal -> nerf. Every run
directory is self-describing: the resolved config, seeds, and checkpoint
manifests suffice to reproduce artifacts bit-exactly.
"""

import copy
import hashlib
import json
import os
import time
from pathlib import Path

import numpy as np
import torch

from . import (
    audiosync,
    container,
    disentangle,
    facemodel,
    gpvae,
    metrics,
    renderer,
    synthdata,
)
from .errors import DependencyError, InfinitePsnr, ValidationError

STAGES = ("disentangle", "sync", "gpvae", "crossmodal", "nerf")
STAGE_DEPS = {
    "disentangle": (),
    "sync": ("disentangle",),
    "gpvae": ("disentangle",),
    "crossmodal": ("sync", "gpvae"),
    "nerf": ("crossmodal",),
}

DEFAULT_CONFIG = {
    "out_root": "runs/default",
    "data_path": "data/default",
    "seed": 0,
    "disentangle": {"steps": 2000, "batch": 64, "lr": 1e-3},
    "sync": {"steps": 3000, "batch": 64, "lr": 1e-3, "ridge": 1e-3},
    "gpvae": {
        "steps": 1200,
        "batch": 16,
        "lr": 1e-3,
        "arch": "transformer",
        "prior": "gp",
        "window": 50,
        "stride": 10,
        "beta_max": 1.0,
        "warmup_frac": 0.25,
        "kernel_amplitude": 1.0,
        "kernel_length_scale": 5.0,
        "kernel_jitter": 1e-5,
    },
    "crossmodal": {"steps": 1200, "batch": 16, "lr": 1e-3, "tau": 5},
    "nerf": {
        "iters": 1000,
        "rays_per_iter": 1024,
        "n_samples": 64,
        "lr": 5e-4,
        "train_sequence": 0,
        "holdout_frames": 20,
        "eval_samples": 256,
    },
    "ablation": {"seeds": [0, 1, 2], "steps": 400, "batch": 8, "eval_horizon": 10},
}


def resolve_config(overrides=None):
    """Defaults plus overrides; unknown keys are rejected."""
    config = copy.deepcopy(DEFAULT_CONFIG)
    overrides = overrides or {}
    if not isinstance(overrides, dict):
        raise ValidationError("config must be a JSON object")
    for key, value in overrides.items():
        if key not in config:
            raise ValidationError(f"unknown config key {key!r}")
        if isinstance(config[key], dict):
            if not isinstance(value, dict):
                raise ValidationError(f"config section {key!r} must be an object")
            unknown = set(value) - set(config[key])
            if unknown:
                raise ValidationError(f"unknown keys in {key!r}: {sorted(unknown)}")
            config[key].update(value)
        else:
            config[key] = value
    return config


def config_hash(config):
    return hashlib.sha256(container.canonical_json(config).encode()).hexdigest()


def apply_thread_cap():
    cap = os.environ.get("DFA_THREADS")
    if cap:
        torch.set_num_threads(max(1, int(cap)))


def split_sequences(dataset):
    """Hold out the last sequence of each identity for evaluation."""
    per_identity = dataset.config["sequences_per_identity"]
    train, held = [], []
    for i in range(len(dataset.sequences)):
        (held if per_identity > 1 and i % per_identity == per_identity - 1 else train).append(i)
    return train, held


def sequence_attributes(seq, dis_net):
    """[T,14] per-frame attributes: pose (6) followed by the eye embedding (8)."""
    _, eye = disentangle.encode_batch(dis_net, seq.landmarks)
    return np.concatenate([seq.pose.astype(np.float64), eye], axis=1)


def sequence_audio_features(seq, audio_net):
    return audiosync.encode_audio(audio_net, seq.audio_raw)


def _ckpt_dir(config, stage):
    return Path(config["out_root"]) / "checkpoints" / stage


def _require_deps(config, stage):
    for dep in STAGE_DEPS[stage]:
        if not (_ckpt_dir(config, dep) / "manifest.json").exists():
            raise DependencyError(
                f"stage {stage!r} needs the {dep!r} checkpoint "
                f"({_ckpt_dir(config, dep)}); run that stage first"
            )


def _append_record(config, record):
    root = Path(config["out_root"])
    root.mkdir(parents=True, exist_ok=True)
    with open(root / "runs.jsonl", "a", encoding="utf-8") as fh:
        fh.write(container.canonical_json(record) + "\n")
    (root / "config.json").write_text(
        container.canonical_json(config) + "\n", "utf-8"
    )


def run_stage(stage, config):
    """Train one stage, write its checkpoint, and append a run record."""
    config = resolve_config(config)
    if stage not in STAGES:
        raise ValidationError(f"unknown stage {stage!r}")
    _require_deps(config, stage)
    dataset = synthdata.load_dataset(config["data_path"])
    seed = config["seed"]
    start = time.time()
    ckpt = _ckpt_dir(config, stage)

    if stage == "disentangle":
        cfg = config["disentangle"]
        net, history, _ = disentangle.train_disentangle(
            dataset, steps=cfg["steps"], batch=cfg["batch"], lr=cfg["lr"], seed=seed
        )
        disentangle.save_checkpoint(ckpt, net, seed=seed)
        snapshot = {}

    elif stage == "sync":
        cfg = config["sync"]
        dis_net = disentangle.load_checkpoint(_ckpt_dir(config, "disentangle"))
        train_idx, held_idx = split_sequences(dataset)
        training_set = audiosync.training_set_from_dataset(dataset, dis_net, train_idx)
        net, history = audiosync.train_sync(
            training_set, steps=cfg["steps"], batch=cfg["batch"], lr=cfg["lr"], seed=seed
        )
        feats = [audiosync.encode_audio(net, a) for a in training_set.audio]
        readout = audiosync.fit_lip_readout(feats, training_set.mouth, cfg["ridge"])
        audiosync.save_checkpoint(ckpt, net, readout, seed=seed)
        held = dataset.sequences[held_idx[0]] if held_idx else dataset.sequences[0]
        mouth, _ = disentangle.encode_batch(dis_net, held.landmarks)
        snapshot = {
            "holdout_retrieval": audiosync.retrieval_fraction(
                sequence_audio_features(held, net), mouth
            )
        }

    elif stage == "gpvae":
        cfg = config["gpvae"]
        dis_net = disentangle.load_checkpoint(_ckpt_dir(config, "disentangle"))
        train_idx, _ = split_sequences(dataset)
        attrs = [sequence_attributes(dataset.sequences[i], dis_net) for i in train_idx]
        windows = gpvae.make_windows(attrs, cfg["window"], cfg["stride"])
        kernel = gpvae.GPKernelParams(
            cfg["kernel_amplitude"], cfg["kernel_length_scale"], cfg["kernel_jitter"]
        )
        vae, history = gpvae.train_vae(
            windows, arch=cfg["arch"], prior_mode=cfg["prior"], kernel=kernel,
            steps=cfg["steps"], batch=cfg["batch"], lr=cfg["lr"],
            beta_max=cfg["beta_max"], warmup_frac=cfg["warmup_frac"], seed=seed,
        )
        gpvae.save_vae(ckpt, vae, seed=seed, extra_meta={
            "window": cfg["window"], "kernel_amplitude": cfg["kernel_amplitude"],
            "kernel_length_scale": cfg["kernel_length_scale"],
            "kernel_jitter": cfg["kernel_jitter"],
        })
        snapshot = {}

    elif stage == "crossmodal":
        cfg = config["crossmodal"]
        gcfg = config["gpvae"]
        dis_net = disentangle.load_checkpoint(_ckpt_dir(config, "disentangle"))
        audio_net, _ = audiosync.load_checkpoint(_ckpt_dir(config, "sync"))
        vae = gpvae.load_vae(_ckpt_dir(config, "gpvae"))
        train_idx, _ = split_sequences(dataset)
        attrs = [sequence_attributes(dataset.sequences[i], dis_net) for i in train_idx]
        feats = [sequence_audio_features(dataset.sequences[i], audio_net) for i in train_idx]
        windows = gpvae.make_windows(attrs, gcfg["window"], gcfg["stride"])
        audio_windows = gpvae.make_windows(feats, gcfg["window"], gcfg["stride"])
        cme, history = gpvae.train_cross_modal(
            windows, audio_windows, vae, tau=cfg["tau"],
            steps=cfg["steps"], batch=cfg["batch"], lr=cfg["lr"], seed=seed,
        )
        gpvae.save_cme(ckpt, cme, seed=seed, extra_meta={"tau": cfg["tau"]})
        snapshot = {}

    elif stage == "nerf":
        cfg = config["nerf"]
        dis_net = disentangle.load_checkpoint(_ckpt_dir(config, "disentangle"))
        audio_net, _ = audiosync.load_checkpoint(_ckpt_dir(config, "sync"))
        seq = dataset.sequences[cfg["train_sequence"]]
        f_a = sequence_audio_features(seq, audio_net)
        mouth, eye = disentangle.encode_batch(dis_net, seq.landmarks)
        conditions = np.concatenate([f_a, eye], axis=1)
        poses = [facemodel.HeadPose(p[:3], p[3:]) for p in seq.pose]
        images = seq.images
        holdout = cfg["holdout_frames"]
        train_slice = slice(0, len(images) - holdout)
        resolution = seq.meta["resolution"]
        intrinsics = facemodel.default_intrinsics(resolution)
        field, history = renderer.train_field(
            images[train_slice], poses[train_slice], conditions[train_slice],
            intrinsics, iters=cfg["iters"], rays_per_iter=cfg["rays_per_iter"],
            n_samples=cfg["n_samples"], lr=cfg["lr"], seed=seed,
        )
        arrays = {k.replace(".", "__"): v.detach().cpu().numpy()
                  for k, v in field.state_dict().items()}
        container.write_container(
            ckpt, arrays, name="nerf", seed=seed,
            meta={
                "state_keys": list(field.state_dict().keys()),
                "cond_dim": conditions.shape[1],
                "resolution": resolution,
                "train_sequence": cfg["train_sequence"],
                "holdout_frames": holdout,
                "eval_samples": cfg["eval_samples"],
            },
        )
        container.write_container(
            Path(config["out_root"]) / "exports" / "render_inputs",
            {"f_a": f_a, "f_e": eye, "f_m": mouth, "pose": seq.pose},
            name="render_inputs", seed=seed,
        )
        snapshot = {}

    record = {
        "stage": stage,
        "config_hash": config_hash(config),
        "seed": seed,
        "wall_clock_s": round(time.time() - start, 3),
        "final_losses": history[-1] if history else {},
        "metrics": snapshot,
        "checkpoint_hash": container.content_hash(ckpt),
        "history": history,
    }
    _append_record(config, record)
    return record


def load_nerf(path):
    c = container.load_container(path)
    field = renderer.RadianceField(cond_dim=c.meta["cond_dim"])
    state = {k: torch.as_tensor(c.load(k.replace(".", "__")), dtype=field.dtype)
             for k in c.meta["state_keys"]}
    field.load_state_dict(state)
    return field, c.meta


# ---------------------------------------------------------------------------
# generation and evaluation


def _derive_bop(cont, dis_net, tau):
    if "bop" in cont:
        return cont.load("bop")[:tau].astype(np.float64)
    if "pose" in cont and "landmarks" in cont:
        _, eye = disentangle.encode_batch(dis_net, cont.load("landmarks")[:tau])
        return np.concatenate([cont.load("pose")[:tau].astype(np.float64), eye], axis=1)
    raise ValidationError("prefix source needs a 'bop' array or pose+landmarks")


def generate_video(checkpoint_root, audio_path, bop_path, seed, out_dir,
                   frames=None, n_samples=None):
    """Full generation: attributes from audio + prefix, then per-frame renders."""
    apply_thread_cap()
    root = Path(checkpoint_root)
    for stage in STAGES:
        if not (root / "checkpoints" / stage / "manifest.json").exists():
            raise DependencyError(f"missing checkpoint for stage {stage!r}")
    dis_net = disentangle.load_checkpoint(root / "checkpoints" / "disentangle")
    audio_net, _ = audiosync.load_checkpoint(root / "checkpoints" / "sync")
    vae = gpvae.load_vae(root / "checkpoints" / "gpvae")
    vae_meta = container.load_container(root / "checkpoints" / "gpvae").meta
    cme = gpvae.load_cme(root / "checkpoints" / "crossmodal")
    cme_meta = container.load_container(root / "checkpoints" / "crossmodal").meta
    field, nerf_meta = load_nerf(root / "checkpoints" / "nerf")

    audio_cont = container.load_container(audio_path)
    f_a = audiosync.encode_audio(audio_net, audio_cont.load("audio_raw"))
    if frames is not None:
        f_a = f_a[:frames]
    tau = cme_meta.get("tau", gpvae.DEFAULT_TAU)
    window = vae_meta.get("window", gpvae.DEFAULT_WINDOW)
    kernel = gpvae.GPKernelParams(
        vae_meta.get("kernel_amplitude", 1.0),
        vae_meta.get("kernel_length_scale", 5.0),
        vae_meta.get("kernel_jitter", 1e-5),
    )
    bop_cont = container.load_container(bop_path)
    bop = _derive_bop(bop_cont, dis_net, tau)

    generated = gpvae.generate_attributes(
        vae, cme, f_a, bop, seed, kernel=kernel, window=window, tau=tau
    )
    attributes = np.concatenate([bop, generated.values], axis=0)  # [T',14]

    resolution = nerf_meta["resolution"]
    samples = n_samples or nerf_meta.get("eval_samples", 256)
    horizon = attributes.shape[0]
    images = np.zeros((horizon, resolution, resolution, 3), dtype=np.float32)
    for t in range(horizon):
        cond = np.concatenate([f_a[t], attributes[t, 6:]])
        pose = facemodel.HeadPose(attributes[t, :3], attributes[t, 3:6])
        images[t] = renderer.render_image(
            field, cond, pose, resolution=resolution, n_samples=samples
        ).pixels
    out = Path(out_dir)
    container.write_container(
        out,
        {
            "pose": attributes[:, :6],
            "f_e": attributes[:, 6:],
            "f_a": f_a[:horizon],
            "images": images,
        },
        name="generated",
        seed=seed,
        extra_manifest={"fps": synthdata.FPS, "frame_count": horizon, "identity_id": -1},
        meta={"n_samples": samples, "resolution": resolution, "tau": tau},
    )
    container.write_frames(out, images)
    return out


def evaluate(pred_dir, gt_dir, report_path=None, checkpoint_root=None):
    """All five metrics between a generated (or dataset) dir and a dataset dir."""
    pred = container.load_container(pred_dir)
    gt = container.load_container(gt_dir)
    pred_images = pred.load("images")
    gt_images = gt.load("images")
    if pred_images.shape[0] != gt_images.shape[0]:
        raise ValidationError(
            f"frame counts differ: {pred_images.shape[0]} vs {gt_images.shape[0]}"
        )
    frames = pred_images.shape[0]

    psnr_trace, ssim_trace = [], []
    for t in range(frames):
        try:
            psnr_trace.append(metrics.psnr(pred_images[t], gt_images[t]))
        except InfinitePsnr:
            psnr_trace.append(None)
        ssim_trace.append(metrics.ssim(pred_images[t], gt_images[t]))
    try:
        psnr_value = metrics.psnr(pred_images, gt_images)
    except InfinitePsnr:
        psnr_value = "infinite"
    ssim_value = float(np.mean(ssim_trace))

    dis_net = None
    if checkpoint_root is not None:
        dis_net = disentangle.load_checkpoint(
            Path(checkpoint_root) / "checkpoints" / "disentangle"
        )

    gt_landmarks = gt.load("landmarks")
    if "landmarks" in pred:
        pred_landmarks = pred.load("landmarks")
    else:
        if dis_net is None:
            raise ValidationError("need checkpoint_root to decode generated landmarks")
        audio_net, readout = audiosync.load_checkpoint(
            Path(checkpoint_root) / "checkpoints" / "sync"
        )
        f_a = pred.load("f_a")
        mouth_pred = audiosync.apply_lip_readout(readout, f_a)
        pred_landmarks = disentangle.decode_batch(dis_net, mouth_pred, pred.load("f_e"))

    lmd_value = metrics.lmd(
        metrics.project_landmarks(pred_landmarks),
        metrics.project_landmarks(gt_landmarks),
    )
    lmd_tr = metrics.lmd_trace(
        metrics.project_landmarks(pred_landmarks),
        metrics.project_landmarks(gt_landmarks),
    )

    sync_value = None
    if dis_net is not None and frames >= 31:
        audio_net, _ = audiosync.load_checkpoint(
            Path(checkpoint_root) / "checkpoints" / "sync"
        )
        f_a_eval = pred.load("f_a") if "f_a" in pred else audiosync.encode_audio(
            audio_net, gt.load("audio_raw")
        )
        mouth_emb, _ = disentangle.encode_batch(dis_net, pred_landmarks)
        sync_value = metrics.sync_confidence(f_a_eval[:frames], mouth_emb)

    blink_value = None
    if frames >= 2 * synthdata.FPS:
        blink_value = metrics.blink_rate(pred_landmarks, fps=synthdata.FPS)

    report = metrics.EvalReport(
        psnr=psnr_value,
        ssim=ssim_value,
        lmd=lmd_value,
        sync_conf=sync_value,
        blinks_per_s=blink_value,
        traces={
            "psnr": psnr_trace,
            "ssim": [float(v) for v in ssim_trace],
            "lmd": [float(v) for v in lmd_tr],
        },
    )
    if report_path is not None:
        Path(report_path).parent.mkdir(parents=True, exist_ok=True)
        Path(report_path).write_text(report.to_json() + "\n", "utf-8")
    return report


# ---------------------------------------------------------------------------
# ablation grid


def _relative_error(pred, gt, ranges):
    return 100.0 * float(np.mean(np.abs(pred - gt) / ranges))


def _vae_cell(windows_train, windows_eval, audio_train, audio_eval, arch, prior,
              kernel, tau, horizon, steps, batch, seed):
    vae, _ = gpvae.train_vae(
        windows_train, arch=arch, prior_mode=prior, kernel=kernel,
        steps=steps, batch=batch, seed=seed,
    )
    cme, _ = gpvae.train_cross_modal(
        windows_train, audio_train, vae, tau=tau, steps=steps, batch=batch, seed=seed,
    )
    preds, gts = [], []
    for w, a in zip(windows_eval, audio_eval):
        post = gpvae.cross_modal_encode(cme, vae, a, w[:tau])
        decoded = gpvae.decode_sequence(
            vae, post.mean, timestamps=np.arange(tau, w.shape[0])
        )
        preds.append(decoded.values[:horizon])
        gts.append(w[tau : tau + horizon])
    preds = np.asarray(preds)
    gts = np.asarray(gts)
    ranges = gts.reshape(-1, gts.shape[-1]).max(axis=0) - gts.reshape(-1, gts.shape[-1]).min(axis=0)
    ranges = np.maximum(ranges, 1e-9)
    return {
        "d_rot": _relative_error(preds[..., :3], gts[..., :3], ranges[:3]),
        "d_pos": _relative_error(preds[..., 3:6], gts[..., 3:6], ranges[3:6]),
    }


def ablation_grid(config):
    """VAE structure/prior grid plus the audio-feature comparison.

    Returns the cell dictionary and writes table.txt, cells.json, and
    ablation.png under <out_root>/ablation/.
    """
    config = resolve_config(config)
    _require_deps(config, "crossmodal")  # needs disentangle + sync + gpvae deps met
    dataset = synthdata.load_dataset(config["data_path"])
    acfg = config["ablation"]
    gcfg = config["gpvae"]
    tau = config["crossmodal"]["tau"]
    kernel = gpvae.GPKernelParams(
        gcfg["kernel_amplitude"], gcfg["kernel_length_scale"], gcfg["kernel_jitter"]
    )
    dis_net = disentangle.load_checkpoint(_ckpt_dir(config, "disentangle"))
    audio_net, _ = audiosync.load_checkpoint(_ckpt_dir(config, "sync"))

    train_idx, held_idx = split_sequences(dataset)
    pose_train = [dataset.sequences[i].pose.astype(np.float64) for i in train_idx]
    pose_eval = [dataset.sequences[i].pose.astype(np.float64) for i in held_idx]
    audio_train = [sequence_audio_features(dataset.sequences[i], audio_net) for i in train_idx]
    audio_eval = [sequence_audio_features(dataset.sequences[i], audio_net) for i in held_idx]
    w_train = gpvae.make_windows(pose_train, gcfg["window"], gcfg["stride"])
    w_eval = gpvae.make_windows(pose_eval, gcfg["window"], gcfg["window"] // 2)
    a_train = gpvae.make_windows(audio_train, gcfg["window"], gcfg["stride"])
    a_eval = gpvae.make_windows(audio_eval, gcfg["window"], gcfg["window"] // 2)

    cells = {}
    for arch in gpvae.ARCHS:
        for prior in ("diagonal", "gp"):
            runs = []
            for seed in acfg["seeds"]:
                runs.append(
                    _vae_cell(
                        w_train, w_eval, a_train, a_eval, arch, prior, kernel,
                        tau, acfg["eval_horizon"], acfg["steps"], acfg["batch"], seed,
                    )
                )
            cells[f"vae/{arch}/{prior}"] = {
                "runs": runs,
                "d_rot": float(np.mean([r["d_rot"] for r in runs])),
                "d_pos": float(np.mean([r["d_pos"] for r in runs])),
            }

    # audio-feature cells: lip readout quality on held-out sequences
    mouth_train = [disentangle.encode_batch(dis_net, dataset.sequences[i].landmarks)[0]
                   for i in train_idx]
    mouth_eval = [disentangle.encode_batch(dis_net, dataset.sequences[i].landmarks)[0]
                  for i in held_idx]
    eye_eval = [disentangle.encode_batch(dis_net, dataset.sequences[i].landmarks)[1]
                for i in held_idx]
    gt_eval = [dataset.sequences[i].landmarks for i in held_idx]
    feature_sets = {
        "contrastive": (audio_train, audio_eval),
        "blurred_stub": (
            [audiosync.blurred_stub_features(dataset.sequences[i].audio_raw)
             for i in train_idx],
            [audiosync.blurred_stub_features(dataset.sequences[i].audio_raw)
             for i in held_idx],
        ),
    }
    for name, (feats_train, feats_eval) in feature_sets.items():
        readout = audiosync.fit_lip_readout(feats_train, mouth_train, config["sync"]["ridge"])
        lmds, syncs = [], []
        for feats, eye, gt_lms, mouth_gt in zip(feats_eval, eye_eval, gt_eval, mouth_eval):
            mouth_pred = audiosync.apply_lip_readout(readout, feats)
            pred_lms = disentangle.decode_batch(dis_net, mouth_pred, eye)
            lmds.append(metrics.lmd(
                metrics.project_landmarks(pred_lms), metrics.project_landmarks(gt_lms)
            ))
            syncs.append(metrics.sync_confidence(feats, mouth_gt))
        cells[f"audio/{name}"] = {
            "lmd": float(np.mean(lmds)),
            "sync_conf": float(np.mean(syncs)),
        }

    out_dir = Path(config["out_root"]) / "ablation"
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "cells.json").write_text(container.canonical_json(cells) + "\n", "utf-8")
    lines = [f"{'cell':28s} {'D-Rot%':>8s} {'D-Pos%':>8s} {'LMD':>8s} {'Sync':>8s}"]
    for name, cell in cells.items():
        lines.append(
            f"{name:28s} "
            f"{cell.get('d_rot', float('nan')):8.2f} "
            f"{cell.get('d_pos', float('nan')):8.2f} "
            f"{cell.get('lmd', float('nan')):8.3f} "
            f"{cell.get('sync_conf', float('nan')):8.3f}"
        )
    (out_dir / "table.txt").write_text("\n".join(lines) + "\n", "utf-8")
    plot_ablation(cells, out_dir / "ablation.png")
    return cells


# ---------------------------------------------------------------------------
# plots


def _matplotlib():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def plot_ablation(cells, out_path):
    plt = _matplotlib()
    vae_names = [n for n in cells if n.startswith("vae/")]
    fig, axes = plt.subplots(1, 2, figsize=(11, 4))
    axes[0].bar(range(len(vae_names)), [cells[n]["d_pos"] for n in vae_names])
    axes[0].set_xticks(range(len(vae_names)))
    axes[0].set_xticklabels([n[4:] for n in vae_names], rotation=30, ha="right")
    axes[0].set_ylabel("D-Pos (%)")
    audio_names = [n for n in cells if n.startswith("audio/")]
    axes[1].bar(range(len(audio_names)), [cells[n]["lmd"] for n in audio_names])
    axes[1].set_xticks(range(len(audio_names)))
    axes[1].set_xticklabels([n[6:] for n in audio_names])
    axes[1].set_ylabel("mouth landmark distance")
    fig.tight_layout()
    fig.savefig(out_path, dpi=110)
    plt.close(fig)


def plot_report(report: metrics.EvalReport, out_path):
    plt = _matplotlib()
    fig, axes = plt.subplots(1, 3, figsize=(13, 3.5))
    for ax, key in zip(axes, ("psnr", "ssim", "lmd")):
        trace = report.traces.get(key, [])
        ax.plot([v if v is not None else np.nan for v in trace])
        ax.set_title(key)
        ax.set_xlabel("frame")
    fig.tight_layout()
    fig.savefig(out_path, dpi=110)
    plt.close(fig)


def plot_run(out_root, out_path):
    """Loss curves for every recorded stage run."""
    plt = _matplotlib()
    path = Path(out_root) / "runs.jsonl"
    records = [json.loads(line) for line in path.read_text("utf-8").splitlines()]
    fig, ax = plt.subplots(figsize=(7, 4))
    for rec in records:
        hist = rec.get("history") or []
        if hist:
            ax.plot([h["step"] for h in hist], [h["loss"] for h in hist],
                    label=rec["stage"])
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=110)
    plt.close(fig)


def plot_latent_scatter(vae, cme, windows_by_identity, audio_by_identity, out_path):
    """PCA of cross-modal latent means, with and without audio conditioning."""
    plt = _matplotlib()
    tau = gpvae.DEFAULT_TAU
    pooled = {True: [], False: []}
    labels = []
    for ident, (wins, auds) in enumerate(zip(windows_by_identity, audio_by_identity)):
        for w, a in zip(wins, auds):
            for enabled in (True, False):
                post = gpvae.cross_modal_encode(cme, vae, a, w[:tau], audio_enabled=enabled)
                pooled[enabled].append(post.mean.mean(axis=0))
            labels.append(ident)
    labels = np.asarray(labels)
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    for ax, enabled in zip(axes, (True, False)):
        data = np.asarray(pooled[enabled])
        data = data - data.mean(axis=0)
        _, _, vt = np.linalg.svd(data, full_matrices=False)
        proj = data @ vt[:2].T
        for ident in np.unique(labels):
            sel = labels == ident
            ax.scatter(proj[sel, 0], proj[sel, 1], s=12, label=f"identity {ident}")
        ax.set_title("with audio" if enabled else "without audio")
        ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=110)
    plt.close(fig)
