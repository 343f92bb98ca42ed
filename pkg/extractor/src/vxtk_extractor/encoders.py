"""Encoder registry: DINOv2-L/14 (default) and CLIP ViT-L/14, plus thin
random-init variants of the same architectures for offline smoke runs.

All encoders share patch size 14 and hidden width 1024, so every backbone
produces [N_p, N_p, 1024] patch grids at H = 224 and swaps in via config
alone. Pretrained weights come from the hub when available; the ``*-test``
variants build the architecture with seeded random weights and a thin MLP,
keeping the full extraction path exercisable without network access.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch


@dataclass(frozen=True)
class EncoderSpec:
    name: str
    family: str  # "dinov2" | "clip"
    checkpoint: str | None  # hub id for pretrained weights
    num_layers: int
    mean: tuple[float, float, float]
    std: tuple[float, float, float]
    thin_mlp: int | None = None  # intermediate size for random-init test variants


_IMAGENET_MEAN = (0.485, 0.456, 0.406)
_IMAGENET_STD = (0.229, 0.224, 0.225)
_CLIP_MEAN = (0.48145466, 0.4578275, 0.40821073)
_CLIP_STD = (0.26862954, 0.26130258, 0.27577711)

ENCODERS: dict[str, EncoderSpec] = {
    "dinov2-large": EncoderSpec(
        "dinov2-large", "dinov2", "facebook/dinov2-large", 24, _IMAGENET_MEAN, _IMAGENET_STD
    ),
    "clip-vit-l14": EncoderSpec(
        "clip-vit-l14", "clip", "openai/clip-vit-large-patch14", 24, _CLIP_MEAN, _CLIP_STD
    ),
    # architecture-faithful but thin-and-shallow variants for offline tests
    "dinov2-test": EncoderSpec(
        "dinov2-test", "dinov2", None, 2, _IMAGENET_MEAN, _IMAGENET_STD, thin_mlp=256
    ),
    "clip-test": EncoderSpec(
        "clip-test", "clip", None, 2, _CLIP_MEAN, _CLIP_STD, thin_mlp=256
    ),
}

PATCH_SIZE = 14
HIDDEN_SIZE = 1024


def encoder_spec(name: str) -> EncoderSpec:
    if name not in ENCODERS:
        raise ValueError(f"unknown encoder {name!r}; choose from {sorted(ENCODERS)}")
    return ENCODERS[name]


def build_encoder(
    name: str,
    image_size: int,
    pretrained: bool = True,
    init_seed: int = 0,
    device: str = "cpu",
) -> tuple[torch.nn.Module, EncoderSpec]:
    """Construct a frozen encoder in eval mode.

    ``pretrained=False`` (or a checkpoint-less test variant) builds the
    architecture with weights seeded by ``init_seed`` so extraction stays
    reproducible.
    """
    spec = encoder_spec(name)
    if pretrained and spec.checkpoint is None:
        raise ValueError(f"{name} has no pretrained checkpoint; pass pretrained=False")

    if spec.family == "dinov2":
        from transformers import Dinov2Config, Dinov2Model

        if pretrained:
            model = Dinov2Model.from_pretrained(spec.checkpoint, attn_implementation="sdpa")
        else:
            torch.manual_seed(init_seed)
            config = Dinov2Config(
                hidden_size=HIDDEN_SIZE,
                num_hidden_layers=spec.num_layers,
                num_attention_heads=8 if spec.thin_mlp else 16,
                intermediate_size=spec.thin_mlp or 4096,
                patch_size=PATCH_SIZE,
                image_size=image_size,
                attn_implementation="sdpa",
            )
            model = Dinov2Model(config)
    elif spec.family == "clip":
        from transformers import CLIPVisionConfig, CLIPVisionModel

        if pretrained:
            model = CLIPVisionModel.from_pretrained(spec.checkpoint, attn_implementation="sdpa")
        else:
            torch.manual_seed(init_seed)
            config = CLIPVisionConfig(
                hidden_size=HIDDEN_SIZE,
                num_hidden_layers=spec.num_layers,
                num_attention_heads=8 if spec.thin_mlp else 16,
                intermediate_size=spec.thin_mlp or 4096,
                patch_size=PATCH_SIZE,
                image_size=image_size,
                attn_implementation="sdpa",
            )
            model = CLIPVisionModel(config)
    else:  # pragma: no cover - registry is closed
        raise ValueError(f"unknown encoder family {spec.family}")

    model.eval()
    for p in model.parameters():
        p.requires_grad_(False)
    return model.to(device), spec
