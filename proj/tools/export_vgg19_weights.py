#!/usr/bin/env python3
"""Export the sixteen VGG19 convolutions to the fbst weight format.

Writes <output> and <output>.sha256. Source is torchvision's ImageNet VGG19
(downloaded once) or a local state dict via --state-dict.
"""

import argparse
import hashlib
import struct
import sys
from pathlib import Path

import numpy as np

MAGIC = b"FBVGG19\x01"
CHANNELS = [(64, 3), (64, 64), (128, 64), (128, 128), (256, 128), (256, 256), (256, 256), (256, 256),
            (512, 256), (512, 512), (512, 512), (512, 512), (512, 512), (512, 512), (512, 512), (512, 512)]


def conv_tensors(state_dict):
    keys = sorted({k.rsplit(".", 1)[0] for k in state_dict if k.startswith("features.") and k.endswith(".weight")},
                  key=lambda k: int(k.split(".")[1]))
    if len(keys) != len(CHANNELS):
        raise SystemExit(f"expected {len(CHANNELS)} convolutions, found {len(keys)}")
    for key, (out_c, in_c) in zip(keys, CHANNELS):
        w = np.asarray(state_dict[key + ".weight"], dtype="<f4")
        b = np.asarray(state_dict[key + ".bias"], dtype="<f4")
        if w.shape != (out_c, in_c, 3, 3) or b.shape != (out_c,):
            raise SystemExit(f"{key}: unexpected shape {w.shape}")
        yield w, b


def write_weights(path, tensors):
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(CHANNELS)))
        for w, b in tensors:
            f.write(struct.pack("<III", w.shape[0], w.shape[1], 3))
            f.write(np.ascontiguousarray(w).tobytes())
            f.write(np.ascontiguousarray(b).tobytes())


def load_state_dict(args):
    import torch

    if args.state_dict:
        sd = torch.load(args.state_dict, map_location="cpu")
    else:
        from torchvision.models import VGG19_Weights, vgg19

        sd = vgg19(weights=VGG19_Weights.IMAGENET1K_V1).state_dict()
    return {k: v.detach().cpu().numpy() for k, v in sd.items()}


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--output", required=True, type=Path)
    p.add_argument("--state-dict", type=Path, help="torch state dict with torchvision VGG19 key names")
    args = p.parse_args(argv)

    write_weights(args.output, conv_tensors(load_state_dict(args)))
    digest = hashlib.sha256(args.output.read_bytes()).hexdigest()
    Path(str(args.output) + ".sha256").write_text(digest + "\n")
    print(f"{args.output}\nsha256 {digest}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
