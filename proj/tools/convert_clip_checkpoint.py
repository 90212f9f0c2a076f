#!/usr/bin/env python3
"""Convert an OpenAI-layout CLIP checkpoint into the txst archive format.

Accepted inputs:
  --openai PATH            an OpenAI release file (TorchScript or plain state dict)
  --open-clip NAME --pretrained TAG
                           any open_clip model with OpenAI parameter names
                           (e.g. ViT-B-32-quickgelu / openai)
"""

import argparse
import os
import sys

import numpy as np
import torch

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))
from txst_archive import write_archive  # noqa: E402

NAMESPACE = "clip"


def infer_config(sd):
    """Architecture hyper-parameters from tensor shapes, as the reference loader does."""
    vision_width = sd["visual.conv1.weight"].shape[0]
    patch = sd["visual.conv1.weight"].shape[-1]
    vision_layers = len({k.split(".")[3] for k in sd if k.startswith("visual.transformer.resblocks.")})
    grid = round((sd["visual.positional_embedding"].shape[0] - 1) ** 0.5)
    text_width = sd["ln_final.weight"].shape[0]
    text_layers = len({k.split(".")[2] for k in sd if k.startswith("transformer.resblocks.")})
    cfg = {
        "name": "custom",
        "embed_dim": int(sd["text_projection"].shape[1]),
        "image_resolution": int(patch * grid),
        "patch_size": int(patch),
        "vision_width": int(vision_width),
        "vision_layers": int(vision_layers),
        "vision_heads": int(vision_width // 64),
        "context_length": int(sd["positional_embedding"].shape[0]),
        "vocab_size": int(sd["token_embedding.weight"].shape[0]),
        "text_width": int(text_width),
        "text_layers": int(text_layers),
        "text_heads": int(text_width // 64),
    }
    if (cfg["image_resolution"], cfg["patch_size"], vision_width, vision_layers) == (224, 32, 768, 12):
        cfg["name"] = "ViT-B/32"
    return cfg


def convert_state_dict(sd, config=None):
    skip = {"input_resolution", "context_length", "vocab_size", "attn_mask"}
    tensors = {}
    for key, value in sd.items():
        if key in skip or key.endswith(".attn_mask"):
            continue
        tensors[f"{NAMESPACE}.{key}"] = value.detach().cpu().float().numpy().astype(np.float32)
    return config or infer_config(sd), tensors


def save(sd, path, pretrained, config=None):
    config, tensors = convert_state_dict(sd, config)
    write_archive(path, {"kind": "clip", "config": config, "pretrained": bool(pretrained)}, tensors)
    return config


def load_openai(path):
    try:
        model = torch.jit.load(path, map_location="cpu")
        return model.state_dict()
    except RuntimeError:
        return torch.load(path, map_location="cpu")


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    src = ap.add_mutually_exclusive_group(required=True)
    src.add_argument("--openai", help="OpenAI checkpoint file")
    src.add_argument("--open-clip", help="open_clip model name")
    ap.add_argument("--pretrained", default="openai", help="open_clip pretrained tag")
    ap.add_argument("--out", required=True)
    args = ap.parse_args()
    if args.openai:
        sd = load_openai(args.openai)
    else:
        import open_clip

        model = open_clip.create_model(args.open_clip, pretrained=args.pretrained)
        sd = model.state_dict()
    config = save(sd, args.out, pretrained=True)
    print(f"wrote {args.out} ({config['name']})")


if __name__ == "__main__":
    main()
