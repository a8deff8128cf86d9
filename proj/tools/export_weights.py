#!/usr/bin/env python3
"""Convert pretrained torch weights into filmpipe archives.

Writes into --out-dir:
  vgg19.bin       torchvision VGG-19 features up to relu3_2 (vgg loss)
  lpips_vgg.bin   LPIPS v0.1 VGG trunk + linear heads   (needs `lpips`)
  pieapp.bin      PieAPP network                        (needs `piq`)

Point FILMPIPE_WEIGHTS_DIR (or weights_dir in a config) at the directory.

--random-init skips downloads and exports a seeded VGG-19 instead, together
with vgg19_check.bin holding an input image and the torch activations at the
three feature taps; the test suite compares against those.
"""

import argparse
import json
import struct
import sys
from pathlib import Path

import numpy as np

MAGIC = b"FPARCHV1"
VGG_KEEP = {0, 2, 5, 7, 10, 12}  # convs through relu3_2
VGG_TAPS = (3, 8, 13)


def write_archive(path, arrays, meta):
    header, payload, offset = [], [], 0
    for name, value in arrays.items():
        a = np.ascontiguousarray(value, dtype="<f4")
        header.append({"name": name, "dtype": "f32", "shape": list(a.shape),
                       "offset": offset, "nbytes": a.nbytes})
        payload.append(a.tobytes())
        offset += a.nbytes
    text = json.dumps({"meta": meta, "arrays": header}, separators=(",", ":")).encode()
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<Q", len(text)))
        f.write(text)
        for p in payload:
            f.write(p)
    print(f"wrote {path} ({len(arrays)} arrays)")


def numpy_state(state, keep=lambda k: True, rename=lambda k: k):
    return {rename(k): v.detach().cpu().numpy() for k, v in state.items() if keep(k)}


def export_vgg(out_dir, random_init, seed):
    import torch
    import torchvision

    if random_init:
        torch.manual_seed(seed)
        model = torchvision.models.vgg19(weights=None)
    else:
        model = torchvision.models.vgg19(weights=torchvision.models.VGG19_Weights.IMAGENET1K_V1)
    model.eval()
    keep = lambda k: k.startswith("features.") and int(k.split(".")[1]) in VGG_KEEP
    write_archive(out_dir / "vgg19.bin", numpy_state(model.state_dict(), keep),
                  {"format": "vgg19", "source": "random" if random_init else "torchvision"})

    if random_init:
        g = torch.Generator().manual_seed(seed + 1)
        x = torch.rand(1, 3, 40, 48, generator=g)
        mean = torch.tensor([0.485, 0.456, 0.406]).view(1, 3, 1, 1)
        std = torch.tensor([0.229, 0.224, 0.225]).view(1, 3, 1, 1)
        h = (x - mean) / std
        taps = {}
        with torch.no_grad():
            for i, layer in enumerate(model.features[: VGG_TAPS[-1] + 1]):
                h = layer(h)
                if i in VGG_TAPS:
                    taps[f"tap{len(taps)}"] = h[0].numpy()
        write_archive(out_dir / "vgg19_check.bin", {"input": x[0].numpy(), **taps},
                      {"format": "vgg19-check"})


def export_lpips(out_dir):
    try:
        import lpips
    except ImportError:
        print("lpips not installed; skipping lpips_vgg.bin", file=sys.stderr)
        return
    model = lpips.LPIPS(net="vgg", version="0.1", verbose=False)
    keep = lambda k: k.startswith("net.slice") or (k.startswith("lin") and k.endswith(".weight"))
    write_archive(out_dir / "lpips_vgg.bin", numpy_state(model.state_dict(), keep),
                  {"format": "lpips", "variant": "vgg16-v0.1"})


def export_pieapp(out_dir):
    try:
        import piq
    except ImportError:
        print("piq not installed; skipping pieapp.bin", file=sys.stderr)
        return
    metric = piq.PieAPP(data_range=1.0, stride=27)
    state = metric.model.state_dict() if hasattr(metric, "model") else metric.state_dict()
    strip = lambda k: k[len("model."):] if k.startswith("model.") else k
    write_archive(out_dir / "pieapp.bin", numpy_state(state, rename=strip),
                  {"format": "pieapp", "variant": "pieapp-v0.1"})


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out-dir", type=Path, required=True)
    ap.add_argument("--only", choices=["vgg", "lpips", "pieapp"], action="append")
    ap.add_argument("--random-init", action="store_true")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    which = args.only or (["vgg"] if args.random_init else ["vgg", "lpips", "pieapp"])
    if "vgg" in which:
        export_vgg(args.out_dir, args.random_init, args.seed)
    if "lpips" in which and not args.random_init:
        export_lpips(args.out_dir)
    if "pieapp" in which and not args.random_init:
        export_pieapp(args.out_dir)


if __name__ == "__main__":
    main()
