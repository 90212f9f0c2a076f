#!/usr/bin/env python3
"""Reference outputs from independent implementations (open_clip, torchvision)
for the C++ embedder and perceptual encoder. Exits 77 when a dependency is missing."""

import argparse
import os
import sys

import numpy as np

HERE = os.path.dirname(os.path.abspath(__file__))
sys.path.insert(0, os.path.join(HERE, "..", "..", "tools"))

try:
    import torch
    import open_clip
    import torchvision
except ImportError as e:  # pragma: no cover
    print(f"skipping: {e}")
    sys.exit(77)

from txst_archive import write_archive  # noqa: E402
import convert_clip_checkpoint  # noqa: E402
import convert_vgg_checkpoint  # noqa: E402

PROMPTS = [
    "Photo",
    "a painting by Vincent van Gogh",
    "Claude Monet style",
    "Hello, World! It's 2022 & we're here.",
    "café naïve résumé",
    "  multiple   spaces\tand\ttabs ",
]
MEAN = np.array([0.48145466, 0.4578275, 0.40821073])
STD = np.array([0.26862954, 0.26130258, 0.27577711])
IMAGENET_MEAN = np.array([0.485, 0.456, 0.406])
IMAGENET_STD = np.array([0.229, 0.224, 0.225])


def clip_reference(out_dir, rng):
    torch.manual_seed(11)
    vision = {"image_size": 64, "layers": 2, "width": 128, "patch_size": 16, "head_width": 32}
    text = {"context_length": 77, "vocab_size": 49408, "width": 128, "heads": 4, "layers": 2}
    model = open_clip.model.CLIP(embed_dim=512, vision_cfg=vision, text_cfg=text, quick_gelu=True).eval()
    # Random init leaves some parameters at zero; spread them so every path is exercised.
    with torch.no_grad():
        for p in model.parameters():
            p.add_(torch.randn_like(p) * 0.02)
    config = {
        "name": "reference", "embed_dim": 512, "image_resolution": 64, "patch_size": 16, "vision_width": 128,
        "vision_layers": 2, "vision_heads": 4, "context_length": 77, "vocab_size": 49408, "text_width": 128,
        "text_layers": 2, "text_heads": 4,
    }
    convert_clip_checkpoint.save(model.state_dict(), os.path.join(out_dir, "clip_model.txst"), False, config)

    images = rng.random((3, 3, 64, 64)).astype(np.float32)
    x = torch.from_numpy(((images - MEAN[None, :, None, None]) / STD[None, :, None, None]).astype(np.float32))
    tokens = open_clip.tokenize(PROMPTS)
    with torch.no_grad():
        emb = model.encode_image(x)
        proj = model.visual.proj
        model.visual.proj = None
        nu = model.visual(x)
        model.visual.proj = proj
        text_emb = model.encode_text(tokens)
    write_archive(
        os.path.join(out_dir, "clip_expected.txst"),
        {"prompts": PROMPTS},
        {
            "images": images,
            "image_embeddings": emb.numpy(),
            "image_tokens": nu.numpy(),
            "tokens": tokens.numpy().astype(np.int64),
            "text_embeddings": text_emb.numpy(),
        },
    )


def vgg_reference(out_dir, rng):
    torch.manual_seed(5)
    vgg = torchvision.models.vgg19(weights=None).eval()
    convert_vgg_checkpoint.save(vgg.state_dict(), os.path.join(out_dir, "vgg_model.txst"), False)
    images = rng.random((2, 3, 48, 64)).astype(np.float32)
    x = torch.from_numpy(((images - IMAGENET_MEAN[None, :, None, None]) / IMAGENET_STD[None, :, None, None]).astype(np.float32))
    out = {"images": images}
    names = {3: "relu1_2", 8: "relu2_2", 17: "relu3_4", 20: "relu4_1"}
    with torch.no_grad():
        for i, layer in enumerate(vgg.features[:21]):
            x = layer(x)
            if i in names:
                out[names[i]] = x.numpy().copy()
    write_archive(os.path.join(out_dir, "vgg_expected.txst"), {}, out)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", required=True)
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)
    rng = np.random.default_rng(2022)
    clip_reference(args.out, rng)
    vgg_reference(args.out, rng)
    print(f"wrote reference data to {args.out}")


if __name__ == "__main__":
    main()
