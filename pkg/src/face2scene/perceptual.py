"""Fixed random feature extractor: perceptual distance and GAN backbone.

A seed-pinned, never-trained convolutional stack provides multi-level
features. The built-in perceptual distance is the mean squared feature
gap summed over levels (a documented stand-in for pretrained perceptual
metrics; any replacement scorer can be passed wherever a perceptual
callable is accepted). The discriminator attaches one trainable affine
classifier per frozen feature level.
"""

from __future__ import annotations

import torch
import torch.nn as nn

EXTRACTOR_SEED = 24243


class FixedFeatureExtractor(nn.Module):
    """Frozen conv pyramid with deterministic random weights."""

    def __init__(self, seed: int = EXTRACTOR_SEED, widths: tuple[int, ...] = (16, 32, 64)):
        super().__init__()
        gen = torch.Generator().manual_seed(seed)
        layers = []
        cin = 3
        for w in widths:
            conv = nn.Conv2d(cin, w, 3, stride=2, padding=1)
            with torch.no_grad():
                conv.weight.copy_(torch.randn(conv.weight.shape, generator=gen) * (cin * 9) ** -0.5)
                conv.bias.zero_()
            layers.append(conv)
            cin = w
        self.convs = nn.ModuleList(layers)
        self.act = nn.LeakyReLU(0.2)
        for p in self.parameters():
            p.requires_grad_(False)

    def forward(self, x: torch.Tensor) -> list[torch.Tensor]:
        feats = []
        for conv in self.convs:
            x = self.act(conv(x))
            feats.append(x)
        return feats


def perceptual_distance(a: torch.Tensor, b: torch.Tensor, extractor: FixedFeatureExtractor) -> torch.Tensor:
    """Symmetric multi-level feature MSE; zero iff features agree."""
    fa = extractor(a)
    fb = extractor(b)
    return torch.stack([(x - y).pow(2).mean() for x, y in zip(fa, fb)]).sum()


class MultiLevelDiscriminator(nn.Module):
    """Frozen backbone + one trainable 1x1-conv classifier per level."""

    def __init__(self, extractor: FixedFeatureExtractor | None = None):
        super().__init__()
        self.backbone = extractor if extractor is not None else FixedFeatureExtractor()
        widths = [conv.out_channels for conv in self.backbone.convs]
        self.heads = nn.ModuleList([nn.Conv2d(w, 1, 1) for w in widths])

    def trainable_parameters(self):
        return self.heads.parameters()

    def forward(self, x: torch.Tensor) -> list[torch.Tensor]:
        """Per-level probabilities that the input is real, each (B,).

        Backbone weights are frozen but gradients still flow through the
        features, so the generator can learn from the adversarial signal.
        """
        feats = self.backbone(x)
        return [torch.sigmoid(head(f).mean(dim=(1, 2, 3))) for head, f in zip(self.heads, feats)]
