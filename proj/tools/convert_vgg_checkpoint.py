#!/usr/bin/env python3
"""Convert torchvision VGG-19 weights (up to relu4_1) into the txst archive format.

  --torchvision            use torchvision's IMAGENET1K_V1 weights (downloads them)
  --state-dict PATH        a saved torchvision vgg19 state dict
"""

import argparse
import os
import sys

import numpy as np
import torch

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))
from txst_archive import write_archive  # noqa: E402

# Convolution indices of features[0..20] (conv1_1 .. conv4_1).
CONV_INDICES = (0, 2, 5, 7, 10, 12, 14, 16, 19)


def save(sd, path, pretrained):
    tensors = {}
    for i in CONV_INDICES:
        for part in ("weight", "bias"):
            tensors[f"vgg.features.{i}.{part}"] = sd[f"features.{i}.{part}"].detach().cpu().float().numpy().astype(np.float32)
    write_archive(path, {"kind": "vgg19", "pretrained": bool(pretrained)}, tensors)


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    src = ap.add_mutually_exclusive_group(required=True)
    src.add_argument("--torchvision", action="store_true")
    src.add_argument("--state-dict")
    ap.add_argument("--out", required=True)
    args = ap.parse_args()
    if args.torchvision:
        import torchvision

        sd = torchvision.models.vgg19(weights=torchvision.models.VGG19_Weights.IMAGENET1K_V1).state_dict()
    else:
        sd = torch.load(args.state_dict, map_location="cpu")
    save(sd, args.out, pretrained=True)
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
