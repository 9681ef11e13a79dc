"""One-step conditional full-scene restorer.

A small encoder-decoder (three resolution levels, skip connections) with
one cross-attention block per level attending over the degradation
tokens concatenated with a learned prompt bank. Training mixes a
reconstruction loss (pixel + perceptual) with a multi-level adversarial
term and online negative-target learning; inference runs two conditioned
forwards (positive / negative bank) and blends their decoder-input
features with classifier-free guidance before a single decode.
"""

from __future__ import annotations

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
from .errors import CheckpointError, ContractError, DataError, ParameterError, ShapeError
from .facegeom import FaceAnnotation, align_face, crop_with_warp
from .fadex import FadexModel
from .imgio import check_image
from .mapnet import MapnetConfig, MapnetModel
from .pairs import build_samples
from .perceptual import FixedFeatureExtractor, MultiLevelDiscriminator, perceptual_distance
from .refsim import oracle_restore

_LOG_EPS = 1e-8


@dataclass
class RestorerConfig:
    base_width: int = 16
    depth: int = 3  # resolution levels (fixed by this architecture)
    token_dim: int = 64
    lambda_l2: float = 2.0
    lambda_lpips: float = 5.0
    lambda_gan: float = 0.5
    p_negative: float = 0.1  # probability of swapping in the LQ target + negative bank
    cfg_scale: float = 1.10
    bank_tokens: int = 8
    steps: int = 500
    lr: float = 1e-3
    batch: int = 4
    eval_every: int = 100
    refq: str = "gt"

    def validate(self) -> "RestorerConfig":
        for name in ("lambda_l2", "lambda_lpips", "lambda_gan"):
            if getattr(self, name) < 0:
                raise ParameterError(f"{name} must be non-negative")
        if not 0 <= self.p_negative < 1:
            raise ParameterError("p_negative must lie in [0, 1)")
        if self.cfg_scale < 0:
            raise ParameterError("cfg_scale must be >= 0")
        if self.depth != 3:
            raise ParameterError("this restorer is built with exactly 3 resolution levels")
        return self


class TokenBank(nn.Module):
    """Learned stand-ins for the positive / negative prompt embeddings."""

    def __init__(self, rows: int, dim: int):
        super().__init__()
        self.positive = nn.Parameter(torch.randn(rows, dim) * 0.02)
        self.negative = nn.Parameter(torch.randn(rows, dim) * 0.02)


class ConvBlock(nn.Module):
    def __init__(self, cin: int, cout: int):
        super().__init__()
        groups = math.gcd(4, cout)
        self.net = nn.Sequential(
            nn.Conv2d(cin, cout, 3, padding=1),
            nn.GroupNorm(groups, cout),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(cout, cout, 3, padding=1),
            nn.GroupNorm(groups, cout),
            nn.LeakyReLU(0.2, inplace=True),
        )

    def forward(self, x):
        return self.net(x)


class CrossAttentionBlock(nn.Module):
    """Residual single-head cross-attention from feature positions to tokens."""

    def __init__(self, channels: int, token_dim: int):
        super().__init__()
        self.q = nn.Conv2d(channels, channels, 1)
        self.k = nn.Linear(token_dim, channels, bias=False)
        self.v = nn.Linear(token_dim, channels, bias=False)
        self.proj = nn.Conv2d(channels, channels, 1)
        self.norm = nn.GroupNorm(math.gcd(4, channels), channels)
        self.scale = channels**-0.5

    def forward(self, x: torch.Tensor, tokens: torch.Tensor) -> torch.Tensor:
        b, c, h, w = x.shape
        if tokens.dim() != 3 or tokens.shape[0] != b:
            raise ShapeError(f"tokens must be (B, n, D) matching batch {b}, got {tuple(tokens.shape)}")
        q = self.q(x).reshape(b, c, h * w).transpose(1, 2)  # (B, N, C)
        k = self.k(tokens)  # (B, n, C)
        v = self.v(tokens)
        attn = torch.softmax(q @ k.transpose(1, 2) * self.scale, dim=-1)
        ctx = (attn @ v).transpose(1, 2).reshape(b, c, h, w)
        return x + self.norm(self.proj(ctx))


class RestorerNet(nn.Module):
    """Three-level conditional U-Net with bounded [0,1] output."""

    def __init__(self, cfg: RestorerConfig):
        super().__init__()
        cfg.validate()
        w, d = cfg.base_width, cfg.token_dim
        self.cfg = cfg
        self.inc = ConvBlock(3, w)
        self.attn1 = CrossAttentionBlock(w, d)
        self.down1 = nn.Conv2d(w, 2 * w, 3, stride=2, padding=1)
        self.enc2 = ConvBlock(2 * w, 2 * w)
        self.attn2 = CrossAttentionBlock(2 * w, d)
        self.down2 = nn.Conv2d(2 * w, 4 * w, 3, stride=2, padding=1)
        self.bott = ConvBlock(4 * w, 4 * w)
        self.attn3 = CrossAttentionBlock(4 * w, d)
        self.up2 = nn.ConvTranspose2d(4 * w, 2 * w, 2, stride=2)
        self.dec2 = ConvBlock(4 * w, 2 * w)
        self.up1 = nn.ConvTranspose2d(2 * w, w, 2, stride=2)
        self.dec1 = ConvBlock(2 * w, w)
        self.head = nn.Conv2d(w, 3, 3, padding=1)

    @staticmethod
    def _pad(x: torch.Tensor) -> tuple[torch.Tensor, tuple[int, int]]:
        h, w = x.shape[-2:]
        ph, pw = (-h) % 4, (-w) % 4
        if ph or pw:
            x = F.pad(x, (0, pw, 0, ph), mode="replicate")
        return x, (h, w)

    def forward_features(self, lq: torch.Tensor, tokens: torch.Tensor):
        """Conditioned encoder pass -> the decoder-input feature maps."""
        x, size = self._pad(lq)
        s1 = self.attn1(self.inc(x), tokens)
        s2 = self.attn2(self.enc2(self.down1(s1)), tokens)
        b = self.attn3(self.bott(self.down2(s2)), tokens)
        return (b, s2, s1, size)

    def decode(self, feats) -> torch.Tensor:
        b, s2, s1, size = feats
        d2 = self.dec2(torch.cat([self.up2(b), s2], dim=1))
        d1 = self.dec1(torch.cat([self.up1(d2), s1], dim=1))
        out = torch.sigmoid(self.head(d1))
        return out[..., : size[0], : size[1]]

    def forward(self, lq: torch.Tensor, tokens: torch.Tensor) -> torch.Tensor:
        return self.decode(self.forward_features(lq, tokens))


# ---------------------------------------------------------------------------
# losses and guidance


def rec_loss(
    pred: torch.Tensor,
    gt: torch.Tensor,
    lambda_l2: float = 2.0,
    lambda_lpips: float = 5.0,
    perceptual=None,
) -> torch.Tensor:
    """lambda_l2 * MSE + lambda_lpips * perceptual distance.

    ``perceptual`` is any callable d(pred, gt) -> scalar tensor; when
    omitted (or weighted zero) only the pixel term contributes.
    """
    if pred.shape != gt.shape:
        raise ShapeError(f"pred {tuple(pred.shape)} vs gt {tuple(gt.shape)}")
    loss = lambda_l2 * (pred - gt).pow(2).mean()
    if lambda_lpips > 0 and perceptual is not None:
        loss = loss + lambda_lpips * perceptual(pred, gt)
    return loss


def discriminator_loss(
    discriminator: MultiLevelDiscriminator, real: torch.Tensor, fake_detached: torch.Tensor
) -> torch.Tensor:
    d_real = discriminator(real)
    d_fake = discriminator(fake_detached)
    return torch.stack(
        [
            -(torch.log(dr.clamp_min(_LOG_EPS)).mean() + torch.log((1 - df).clamp_min(_LOG_EPS)).mean())
            for dr, df in zip(d_real, d_fake)
        ]
    ).mean()


def generator_adv_loss(discriminator: MultiLevelDiscriminator, fake: torch.Tensor) -> torch.Tensor:
    d_fake = discriminator(fake)
    return torch.stack([-torch.log(df.clamp_min(_LOG_EPS)).mean() for df in d_fake]).mean()


def gan_losses(
    discriminator: MultiLevelDiscriminator, real: torch.Tensor, fake: torch.Tensor
) -> tuple[torch.Tensor, torch.Tensor]:
    """Level-averaged non-saturating GAN losses (d_loss, g_loss).

    The discriminator loss sees the fake detached; generator gradients
    flow only through g_loss.
    """
    return discriminator_loss(discriminator, real, fake.detach()), generator_adv_loss(discriminator, fake)


def cfg_combine(z_pos, z_neg, lam: float):
    """z_neg + lam * (z_pos - z_neg); endpoints return the inputs exactly."""
    if isinstance(z_pos, (tuple, list)):
        if not isinstance(z_neg, (tuple, list)) or len(z_pos) != len(z_neg):
            raise ShapeError("mismatched feature structures")
        return type(z_pos)(cfg_combine(p, n, lam) for p, n in zip(z_pos, z_neg))
    if isinstance(z_pos, torch.Tensor):
        if z_pos.shape != z_neg.shape:
            raise ShapeError(f"shape mismatch {tuple(z_pos.shape)} vs {tuple(z_neg.shape)}")
        if lam == 1.0:
            return z_pos.clone()
        if lam == 0.0:
            return z_neg.clone()
        return z_neg + lam * (z_pos - z_neg)
    a, b = np.asarray(z_pos), np.asarray(z_neg)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch {a.shape} vs {b.shape}")
    if lam == 1.0:
        return a.copy()
    if lam == 0.0:
        return b.copy()
    return b + lam * (a - b)


# ---------------------------------------------------------------------------
# bundle (everything trained in stage 2) + image-level API


@dataclass
class RestorerBundle:
    mapnet: MapnetModel
    net: RestorerNet
    bank: TokenBank
    discriminator: MultiLevelDiscriminator
    restorer_cfg: RestorerConfig
    mapnet_cfg: MapnetConfig

    def eval(self) -> "RestorerBundle":
        self.mapnet.eval()
        self.net.eval()
        return self


def _img_to_tensor(img: np.ndarray) -> torch.Tensor:
    check_image(img)
    return torch.from_numpy(np.ascontiguousarray(img.transpose(2, 0, 1)))[None].float()


def _tensor_to_img(t: torch.Tensor) -> np.ndarray:
    return np.clip(t[0].detach().cpu().numpy().transpose(1, 2, 0), 0.0, 1.0).astype(np.float32)


def restore(
    lq: np.ndarray,
    tokens: torch.Tensor | np.ndarray,
    bank_rows: torch.Tensor | np.ndarray,
    net: RestorerNet,
) -> np.ndarray:
    """Single conditioned forward pass on one image."""
    t = torch.as_tensor(np.asarray(tokens), dtype=torch.float32)
    b = torch.as_tensor(np.asarray(bank_rows), dtype=torch.float32)
    if t.dim() != 2 or b.dim() != 2 or t.shape[1] != b.shape[1]:
        raise ShapeError(f"tokens {tuple(t.shape)} and bank {tuple(b.shape)} must be (n, D), (T, D)")
    cond = torch.cat([t, b], dim=0)[None]
    with torch.no_grad():
        out = net(_img_to_tensor(lq), cond)
    return _tensor_to_img(out)


def infer(
    lq_scene: np.ndarray,
    hq_scene: np.ndarray,
    ann: FaceAnnotation,
    fadex_model: FadexModel,
    bundle: RestorerBundle,
    refq: str = "gt",
    cfg_scale: float | None = None,
    seed: int = 0,
    mode: str = "all",
    zero_conditioning: bool = False,
) -> np.ndarray:
    """Full two-stage inference on one scene.

    Align the face, simulate the reference-based HQ reconstruction at
    quality ``refq``, extract the degradation code, map it to tokens,
    run positive- and negative-bank conditioned forwards, and blend
    their decoder-input features with guidance scale ``cfg_scale``
    before decoding once.
    """
    bundle.eval()
    lam = bundle.restorer_cfg.cfg_scale if cfg_scale is None else float(cfg_scale)
    hq_face, warp = align_face(hq_scene, ann, fadex_model.cfg.canonical_size)
    lq_face = crop_with_warp(lq_scene, warp)
    oracle = oracle_restore(hq_face, refq, rngmod.stream(seed, "infer-oracle"))
    with torch.no_grad():
        code = fadex_model.encode(oracle, lq_face)
        tokens = bundle.mapnet.map_tokens(code, mode)
        if zero_conditioning:
            tokens = torch.zeros_like(tokens)
            pos = torch.zeros_like(bundle.bank.positive)
            neg = torch.zeros_like(bundle.bank.negative)
        else:
            pos, neg = bundle.bank.positive, bundle.bank.negative
        x = _img_to_tensor(lq_scene)
        feats_pos = bundle.net.forward_features(x, torch.cat([tokens, pos], dim=0)[None])
        feats_neg = bundle.net.forward_features(x, torch.cat([tokens, neg], dim=0)[None])
        combined = cfg_combine(feats_pos[:3], feats_neg[:3], lam) + (feats_pos[3],)
        out = bundle.net.decode(combined)
    return _tensor_to_img(out)


# ---------------------------------------------------------------------------
# training


@dataclass
class RestorerTrainLog:
    steps: list[dict] = field(default_factory=list)
    val_l2: list[tuple[int, float]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"steps": self.steps, "val_l2": [[s, v] for s, v in self.val_l2]}


def _stack_scenes(samples, attr) -> torch.Tensor:
    return torch.stack([torch.from_numpy(getattr(s, attr).transpose(2, 0, 1)).float() for s in samples])


def train_restorer(
    records: list[ManifestRecord],
    dataset_root: str | Path,
    fadex_model: FadexModel,
    mapnet_cfg: MapnetConfig | None = None,
    cfg: RestorerConfig | None = None,
    seed: int = 0,
    zero_tokens: bool = False,
    val_records: list[ManifestRecord] | None = None,
    out_path: str | Path | None = None,
) -> tuple[RestorerBundle, RestorerTrainLog]:
    """Jointly train the token mapper, restorer, prompt banks, and D heads.

    The degradation encoder stays frozen. With probability p_negative a
    sample trains against its LQ input paired with the negative bank;
    otherwise against the HQ target with the positive bank. With
    ``zero_tokens`` the conditioning is zeroed everywhere (the
    no-degradation-estimation ablation arm).
    """
    cfg = (cfg or RestorerConfig()).validate()
    mapnet_cfg = mapnet_cfg or MapnetConfig(in_channels=fadex_model.cfg.channels, token_dim=cfg.token_dim)
    if mapnet_cfg.token_dim != cfg.token_dim:
        raise ContractError("mapnet token_dim must match restorer token_dim")

    samples = build_samples(records, dataset_root, fadex_model.cfg.canonical_size, cfg.refq, seed=seed)
    if not samples:
        raise DataError("no training samples with face annotations")
    fadex_model.eval()
    with torch.no_grad():
        codes = torch.stack(
            [fadex_model.encode(s.hq_face, s.lq_face).features for s in samples]
        )
    lq_all = _stack_scenes(samples, "scene_lq")
    hq_all = _stack_scenes(samples, "scene_hq")

    val_tensors = None
    if val_records:
        val_samples = build_samples(val_records, dataset_root, fadex_model.cfg.canonical_size,
                                    cfg.refq, seed=seed, max_variants=1)
        with torch.no_grad():
            val_codes = torch.stack(
                [fadex_model.encode(s.hq_face, s.lq_face).features for s in val_samples]
            )
        val_tensors = (_stack_scenes(val_samples, "scene_lq"), _stack_scenes(val_samples, "scene_hq"), val_codes)

    torch.manual_seed(rngmod.derive_seed(seed, "restorer-init"))
    n_threads = torch.get_num_threads()
    torch.set_num_threads(1)
    try:
        mapnet = MapnetModel(mapnet_cfg)
        net = RestorerNet(cfg)
        bank = TokenBank(cfg.bank_tokens, cfg.token_dim)
        extractor = FixedFeatureExtractor()
        disc = MultiLevelDiscriminator(extractor)
        perc = (lambda a, b: perceptual_distance(a, b, extractor)) if cfg.lambda_lpips > 0 else None

        gen_params = list(mapnet.parameters()) + list(net.parameters()) + list(bank.parameters())
        opt_g = torch.optim.Adam(gen_params, lr=cfg.lr)
        opt_d = torch.optim.Adam(disc.trainable_parameters(), lr=cfg.lr)
        picker = rngmod.stream(seed, "restorer-batches")
        log = RestorerTrainLog()
        n = len(samples)
        n_tokens = 21

        def validate_l2(step: int) -> None:
            if val_tensors is None:
                return
            vlq, vhq, vcodes = val_tensors
            mapnet.eval(); net.eval()
            with torch.no_grad():
                if zero_tokens:
                    tok = torch.zeros(vlq.shape[0], n_tokens, cfg.token_dim)
                    bank_rows = torch.zeros(vlq.shape[0], cfg.bank_tokens, cfg.token_dim)
                else:
                    tok = mapnet(vcodes)
                    bank_rows = bank.positive[None].expand(vlq.shape[0], -1, -1)
                pred = net(vlq, torch.cat([tok, bank_rows], dim=1))
                l2 = float((pred - vhq).pow(2).mean())
            mapnet.train(); net.train()
            log.val_l2.append((step, l2))

        mapnet.train(); net.train()
        validate_l2(0)
        for step in range(1, cfg.steps + 1):
            idx = picker.choice(n, size=min(cfg.batch, n), replace=False)
            lq = lq_all[idx]
            hq = hq_all[idx]
            bsz = lq.shape[0]
            if zero_tokens:
                tokens = torch.zeros(bsz, n_tokens, cfg.token_dim)
                bank_rows = torch.zeros(bsz, cfg.bank_tokens, cfg.token_dim)
                target = hq
            else:
                tokens = mapnet(codes[idx])
                neg_arm = torch.from_numpy(picker.random(bsz) < cfg.p_negative)
                bank_rows = torch.where(
                    neg_arm[:, None, None],
                    bank.negative[None].expand(bsz, -1, -1),
                    bank.positive[None].expand(bsz, -1, -1),
                )
                target = torch.where(neg_arm[:, None, None, None], lq, hq)
            pred = net(lq, torch.cat([tokens, bank_rows], dim=1))
            loss_rec = rec_loss(pred, target, cfg.lambda_l2, cfg.lambda_lpips, perc)

            entry = {"step": step, "rec": float(loss_rec.detach())}
            if cfg.lambda_gan > 0:
                # D step first on the detached fake, then a fresh forward for G
                d_loss = discriminator_loss(disc, hq, pred.detach())
                opt_d.zero_grad()
                d_loss.backward()
                opt_d.step()
                g_loss = generator_adv_loss(disc, pred)
                total = loss_rec + cfg.lambda_gan * g_loss
                entry.update(d=float(d_loss.detach()), g=float(g_loss.detach()))
            else:
                total = loss_rec
            opt_g.zero_grad()
            total.backward()
            opt_g.step()
            entry["total"] = float(total.detach())
            log.steps.append(entry)
            if step % cfg.eval_every == 0 or step == cfg.steps:
                validate_l2(step)
    finally:
        torch.set_num_threads(n_threads)

    bundle = RestorerBundle(mapnet, net, bank, disc, cfg, mapnet_cfg).eval()
    if out_path is not None:
        save_restorer(out_path, bundle, log)
    return bundle, log


def save_restorer(path: str | Path, bundle: RestorerBundle, log: RestorerTrainLog | None = None) -> None:
    params = {}
    params.update(state_dict_to_numpy(bundle.mapnet, "mapnet."))
    params.update(state_dict_to_numpy(bundle.net, "net."))
    params.update(state_dict_to_numpy(bundle.bank, "bank."))
    params.update(state_dict_to_numpy(bundle.discriminator, "disc."))
    config = {
        "kind": "restorer",
        "restorer": asdict(bundle.restorer_cfg),
        "mapnet": asdict(bundle.mapnet_cfg),
    }
    if log is not None:
        config["log"] = log.to_dict()
    save_checkpoint(path, params, config)


def load_restorer(path: str | Path) -> RestorerBundle:
    params, config = load_checkpoint(path)
    if config.get("kind") != "restorer":
        raise CheckpointError(f"not a restorer checkpoint: kind={config.get('kind')!r}")
    cfg = RestorerConfig(**config["restorer"])
    mcfg = MapnetConfig(**config["mapnet"])
    mapnet = MapnetModel(mcfg)
    net = RestorerNet(cfg)
    bank = TokenBank(cfg.bank_tokens, cfg.token_dim)
    disc = MultiLevelDiscriminator(FixedFeatureExtractor())
    load_into_module(mapnet, params, "mapnet.")
    load_into_module(net, params, "net.")
    load_into_module(bank, params, "bank.")
    load_into_module(disc, params, "disc.")
    return RestorerBundle(mapnet, net, bank, disc, cfg, mcfg).eval()
