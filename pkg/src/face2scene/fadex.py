"""Face-derived degradation extractor.

A small convolutional encoder reads the channel-concatenated HQ-LQ face
pair and produces a spatial degradation code; a projection head maps the
pooled code to a unit embedding trained with a supervised contrastive
objective over degradation labels, using a momentum twin encoder and a
FIFO queue of negatives.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from . import rng as rngmod
from .checkpoint import load_checkpoint, load_into_module, save_checkpoint, state_dict_to_numpy
from .datagen import ManifestRecord
from .errors import (
    CheckpointError,
    ContractError,
    DegenerateEmbeddingError,
    DegenerateTaskError,
    ShapeError,
    TooSmallFaceError,
)
from .pairs import TrainingSample, build_samples

MIN_FACE_SIDE = 16
UNIT_NORM_TOL = 1e-5


@dataclass
class FadexConfig:
    channels: int = 32  # C; the full-scale model uses 256
    proj_dim: int = 64  # p
    temperature: float = 0.07
    momentum: float = 0.99
    queue_capacity: int = 1024
    queue_labels: bool = False  # queue entries as candidate positives, not just negatives
    lr: float = 3e-2
    epochs: int = 200
    batch_size: int = 20
    canonical_size: int = 32
    refq: str = "gt"

    def validate(self) -> "FadexConfig":
        if self.temperature <= 0:
            raise ContractError("temperature must be > 0")
        if not 0 <= self.momentum <= 1:
            raise ContractError("momentum must lie in [0, 1]")
        if self.queue_capacity < self.batch_size:
            raise ContractError("queue capacity must be >= batch size")
        return self


@dataclass
class DegCode:
    """Spatial degradation feature map, C x (S/2) x (S/2) for face side S."""

    features: torch.Tensor

    def __post_init__(self):
        if self.features.dim() != 3:
            raise ShapeError(f"DegCode expects C x H x W, got {tuple(self.features.shape)}")
        if not torch.isfinite(self.features).all():
            raise ShapeError("DegCode contains non-finite values")


class FadexEncoder(nn.Module):
    """Four 3x3 conv + BatchNorm + LeakyReLU blocks, one with stride 2."""

    def __init__(self, channels: int):
        super().__init__()
        c = channels

        def block(cin, cout, stride):
            return nn.Sequential(
                nn.Conv2d(cin, cout, 3, stride=stride, padding=1),
                nn.BatchNorm2d(cout),
                nn.LeakyReLU(0.2, inplace=True),
            )

        self.blocks = nn.Sequential(
            block(6, c, 1),
            block(c, c, 2),
            block(c, c, 1),
            block(c, c, 1),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.blocks(x)


class ProjectionHead(nn.Module):
    """Linear + LeakyReLU + Linear on the globally pooled code."""

    def __init__(self, channels: int, proj_dim: int):
        super().__init__()
        self.net = nn.Sequential(
            nn.Linear(channels, channels),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Linear(channels, proj_dim),
        )

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        return self.net(z)


class FadexModel(nn.Module):
    def __init__(self, cfg: FadexConfig):
        super().__init__()
        self.cfg = cfg.validate()
        self.encoder = FadexEncoder(cfg.channels)
        self.head = ProjectionHead(cfg.channels, cfg.proj_dim)

    @staticmethod
    def _stack_pair(hq: np.ndarray, lq: np.ndarray) -> torch.Tensor:
        hq = np.asarray(hq, dtype=np.float32)
        lq = np.asarray(lq, dtype=np.float32)
        if hq.shape != lq.shape:
            raise ShapeError(f"hq {hq.shape} vs lq {lq.shape}")
        if hq.ndim != 3 or hq.shape[2] != 3 or hq.shape[0] != hq.shape[1]:
            raise ShapeError(f"expected square H x W x 3 faces, got {hq.shape}")
        if hq.shape[0] < MIN_FACE_SIDE:
            raise TooSmallFaceError(f"face side {hq.shape[0]} < minimum {MIN_FACE_SIDE}")
        x = np.concatenate([hq, lq], axis=2).transpose(2, 0, 1)
        return torch.from_numpy(np.ascontiguousarray(x))

    def encode(self, hq: np.ndarray, lq: np.ndarray) -> DegCode:
        """Encode one aligned HQ-LQ face pair into its degradation code."""
        x = self._stack_pair(hq, lq)[None]
        was_training = self.training
        self.eval()
        with torch.no_grad():
            feats = self.encoder(x)[0]
        self.train(was_training)
        return DegCode(features=feats)

    def project(self, code: DegCode) -> torch.Tensor:
        """Pool the code and project to the unit-norm contrastive embedding."""
        if not torch.isfinite(code.features).all():
            raise ContractError("code contains non-finite values")
        z = code.features.mean(dim=(1, 2))[None]
        with torch.no_grad():
            u = self.head(z)[0]
        norm = float(u.norm())
        if norm < 1e-12:
            raise DegenerateEmbeddingError("projection collapsed to the zero vector")
        return u / norm

    def embed(self, hq: np.ndarray, lq: np.ndarray) -> torch.Tensor:
        return self.project(self.encode(hq, lq))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """Batched training path: (B,6,S,S) -> unit embeddings (B,p)."""
        feats = self.encoder(x)
        z = feats.mean(dim=(2, 3))
        u = self.head(z)
        return F.normalize(u, dim=1, eps=1e-12)


# ---------------------------------------------------------------------------
# contrastive objective


def _check_unit(t: torch.Tensor, what: str) -> None:
    norms = t.norm(dim=-1)
    if not torch.isfinite(t).all():
        raise ContractError(f"{what} contain non-finite values")
    if (norms - 1.0).abs().max().item() > UNIT_NORM_TOL:
        raise ContractError(f"{what} must be unit-normalized (max |norm-1| = {(norms - 1).abs().max():.2e})")


def supcon_loss(
    queries: torch.Tensor,
    labels: torch.Tensor,
    tau: float,
    extra_embeddings: torch.Tensor | None = None,
    extra_labels: torch.Tensor | None = None,
    validate: bool = True,
) -> torch.Tensor:
    """Supervised contrastive loss over temperature-scaled cosine similarities.

    Sum over batch elements i and their positives p of
    -log( exp(<q_i,q_p>/tau) / sum_a exp(<q_i,q_a>/tau) ) where a ranges
    over every candidate except i itself. ``extra_embeddings`` (e.g. a
    negative queue) join the denominator; they also join the positive set
    when ``extra_labels`` is given and matches.
    """
    if tau <= 0:
        raise ContractError("temperature must be > 0")
    if queries.dim() != 2:
        raise ShapeError(f"queries must be (B, p), got {tuple(queries.shape)}")
    if validate:
        _check_unit(queries, "queries")
        if extra_embeddings is not None:
            _check_unit(extra_embeddings, "extra embeddings")

    # cosine similarity regardless of input scale: keeps the loss (and its
    # gradient) well-defined off the unit sphere for finite-difference checks
    q = F.normalize(queries, dim=1, eps=1e-12)
    b = q.shape[0]
    labels = labels.reshape(-1)
    if labels.shape[0] != b:
        raise ShapeError("labels must match the batch size")

    if extra_embeddings is not None and extra_embeddings.numel() > 0:
        extras = F.normalize(extra_embeddings.detach(), dim=1, eps=1e-12)
        cands = torch.cat([q, extras], dim=0)
        if extra_labels is not None:
            cand_labels = torch.cat([labels, extra_labels.reshape(-1)])
            extra_pos = True
        else:
            cand_labels = torch.cat([labels, torch.full((extras.shape[0],), -1, dtype=labels.dtype)])
            extra_pos = False
    else:
        cands = q
        cand_labels = labels
        extra_pos = False

    sim = (q @ cands.T) / tau  # (B, B+K)
    n_cand = cands.shape[0]
    self_mask = torch.zeros(b, n_cand, dtype=torch.bool)
    self_mask[:, :b] = torch.eye(b, dtype=torch.bool)

    pos_mask = labels[:, None] == cand_labels[None, :]
    if not extra_pos and n_cand > b:
        pos_mask[:, b:] = False
    pos_mask &= ~self_mask

    denom = sim.masked_fill(self_mask, float("-inf")).logsumexp(dim=1)  # (B,)
    per_pair = denom[:, None] - sim  # -log softmax
    loss = (per_pair * pos_mask).sum()
    return loss


def momentum_update(principal: nn.Module, momentum: nn.Module, m: float) -> None:
    """EMA update: every momentum tensor <- m * old + (1 - m) * principal."""
    p_state = principal.state_dict()
    m_state = momentum.state_dict()
    if set(p_state) != set(m_state):
        raise CheckpointError("parameter structures differ between principal and momentum modules")
    with torch.no_grad():
        for k in m_state:
            pv, mv = p_state[k], m_state[k]
            if pv.shape != mv.shape:
                raise CheckpointError(f"shape mismatch for {k!r}")
            if not torch.is_floating_point(mv):
                mv.copy_(pv)  # integer buffers (e.g. BN step counters) track directly
            else:
                mv.mul_(m).add_(pv.to(mv.dtype), alpha=1.0 - m)


class NegativeQueue:
    """Fixed-capacity FIFO of (unit embedding, label) pairs."""

    def __init__(self, capacity: int, dim: int):
        if capacity < 1:
            raise ContractError("queue capacity must be >= 1")
        self.capacity = capacity
        self.embeddings = torch.zeros(capacity, dim)
        self.labels = torch.full((capacity,), -1, dtype=torch.long)
        self._ptr = 0
        self._count = 0

    def __len__(self) -> int:
        return self._count

    def push(self, embeddings: torch.Tensor, labels: torch.Tensor) -> None:
        embeddings = embeddings.detach()
        _check_unit(embeddings, "queued embeddings")
        n = embeddings.shape[0]
        if n > self.capacity:  # only the newest entries can survive anyway
            embeddings, labels = embeddings[-self.capacity:], labels[-self.capacity:]
            n = self.capacity
        for i in range(n):
            self.embeddings[self._ptr] = embeddings[i]
            self.labels[self._ptr] = labels[i]
            self._ptr = (self._ptr + 1) % self.capacity
        self._count = min(self._count + n, self.capacity)

    def snapshot(self) -> tuple[torch.Tensor, torch.Tensor]:
        return self.embeddings[: self._count].clone(), self.labels[: self._count].clone()


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainLog:
    epoch_losses: list[float] = field(default_factory=list)
    step_losses: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"epoch_losses": self.epoch_losses, "step_losses": self.step_losses}


def _samples_to_tensor(samples: list[TrainingSample]) -> tuple[torch.Tensor, torch.Tensor]:
    xs = [FadexModel._stack_pair(s.hq_face, s.lq_face) for s in samples]
    labels = torch.tensor([s.label for s in samples], dtype=torch.long)
    return torch.stack(xs), labels


def train_fadex(
    records: list[ManifestRecord],
    dataset_root: str | Path,
    cfg: FadexConfig,
    seed: int = 0,
    out_path: str | Path | None = None,
) -> tuple[FadexModel, TrainLog]:
    """Contrastive training of the degradation encoder on manifest face pairs."""
    cfg.validate()
    samples = build_samples(records, dataset_root, cfg.canonical_size, cfg.refq, seed=seed)
    labels_present = {s.label for s in samples}
    if len(labels_present) < 2:
        raise DegenerateTaskError(f"need >= 2 distinct degradation labels, found {len(labels_present)}")

    x_all, y_all = _samples_to_tensor(samples)
    n = x_all.shape[0]

    torch.manual_seed(rngmod.derive_seed(seed, "fadex-init"))
    n_threads = torch.get_num_threads()
    torch.set_num_threads(1)  # keeps the loop bit-deterministic
    try:
        model = FadexModel(cfg)
        momentum_model = copy.deepcopy(model)
        for p in momentum_model.parameters():
            p.requires_grad_(False)

        opt = torch.optim.SGD(model.parameters(), lr=cfg.lr, momentum=0.9)
        queue = NegativeQueue(cfg.queue_capacity, cfg.proj_dim)
        shuffle = rngmod.stream(seed, "fadex-shuffle")
        log = TrainLog()

        model.train()
        momentum_model.train()
        for _epoch in range(cfg.epochs):
            perm = shuffle.permutation(n)
            epoch_losses = []
            for start in range(0, n, cfg.batch_size):
                idx = perm[start : start + cfg.batch_size]
                if len(idx) < 2:
                    continue
                xb = x_all[idx]
                yb = y_all[idx]
                q = model(xb)
                with torch.no_grad():
                    k = momentum_model(xb)
                extra_emb, extra_lab = queue.snapshot()
                loss = supcon_loss(
                    q, yb, cfg.temperature,
                    extra_embeddings=extra_emb if len(queue) else None,
                    extra_labels=extra_lab if (len(queue) and cfg.queue_labels) else None,
                    validate=False,
                )
                opt.zero_grad()
                loss.backward()
                opt.step()
                momentum_update(model, momentum_model, cfg.momentum)
                queue.push(k, yb)
                val = float(loss.detach())
                epoch_losses.append(val)
                log.step_losses.append(val)
            log.epoch_losses.append(float(np.mean(epoch_losses)) if epoch_losses else 0.0)
    finally:
        torch.set_num_threads(n_threads)

    model.eval()
    if out_path is not None:
        save_fadex(out_path, model, log)
    return model, log


def save_fadex(path: str | Path, model: FadexModel, log: TrainLog | None = None) -> None:
    config = {"kind": "fadex", "config": asdict(model.cfg)}
    if log is not None:
        config["log"] = log.to_dict()
    save_checkpoint(path, state_dict_to_numpy(model), config)


def load_fadex(path: str | Path) -> FadexModel:
    params, config = load_checkpoint(path)
    if config.get("kind") != "fadex":
        raise CheckpointError(f"not a degradation-encoder checkpoint: kind={config.get('kind')!r}")
    model = FadexModel(FadexConfig(**config["config"]))
    load_into_module(model, params)
    model.eval()
    return model


# ---------------------------------------------------------------------------
# disentanglement analysis


def cos_sim_analysis(
    model: FadexModel,
    scenes: list[tuple[np.ndarray, "object"]],
    preset_ids: tuple[str, ...] = ("d1", "d2", "d3", "d4"),
    seed: int = 0,
    refq: str = "gt",
) -> dict:
    """Cosine-similarity study of the embedding space.

    For every (scene, preset) cell: degrade the scene, align the face
    pair, and embed it. Reports the mean same-degradation similarity
    across images (per preset), the mean same-image similarity across
    degradations (per image), their grand statistics, and the
    preset-retrieval accuracy over all ordered image pairs.
    """
    from .degrade import apply_pipeline, preset as get_preset
    from .facegeom import align_face, crop_with_warp
    from .refsim import oracle_restore

    if len(scenes) < 2 or len(preset_ids) < 2:
        raise ContractError("need >= 2 images and >= 2 presets")
    size = model.cfg.canonical_size
    emb = {}
    for i, (scene, ann) in enumerate(scenes):
        hq_face, warp = align_face(scene, ann, size)
        for pid in preset_ids:
            lq_scene = apply_pipeline(scene, get_preset(pid), rngmod.stream(seed, "cossim", i, pid))
            lq_face = crop_with_warp(lq_scene, warp)
            oracle = oracle_restore(hq_face, refq, rngmod.stream(seed, "cossim-oracle", i, pid))
            emb[(i, pid)] = model.embed(oracle, lq_face)

    n = len(scenes)
    sim = lambda a, b: float(emb[a] @ emb[b])

    same_deg = {}
    for pid in preset_ids:
        vals = [sim((i, pid), (j, pid)) for i in range(n) for j in range(n) if i != j]
        same_deg[pid] = {"mean": float(np.mean(vals)), "std": float(np.std(vals))}
    same_img = {}
    for i in range(n):
        vals = [sim((i, p), (i, q)) for p in preset_ids for q in preset_ids if p != q]
        same_img[i] = {"mean": float(np.mean(vals)), "std": float(np.std(vals))}

    sd = [v["mean"] for v in same_deg.values()]
    si = [v["mean"] for v in same_img.values()]

    correct = total = 0
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            for pid in preset_ids:
                sims = [sim((i, pid), (j, other)) for other in preset_ids]
                correct += int(preset_ids[int(np.argmax(sims))] == pid)
                total += 1

    return {
        "presets": list(preset_ids),
        "n_images": n,
        "same_degradation": same_deg,
        "same_image": {str(k): v for k, v in same_img.items()},
        "grand_mean_same_degradation": float(np.mean(sd)),
        "grand_std_same_degradation": float(np.std(sd)),
        "grand_mean_same_image": float(np.mean(si)),
        "grand_std_same_image": float(np.std(si)),
        "separation": float(np.mean(sd) - np.mean(si)),
        "retrieval_accuracy": correct / total if total else float("nan"),
    }
