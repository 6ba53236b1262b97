"""Regenerates the committed golden fixtures.

A tiny randomly initialised convolutional network is run over synthetic
images; its deepest post-ReLU feature maps, the fully connected chain and the
reference penultimate embeddings are written as .npy/.npz files together with
plain-text manifests. Requires numpy and torch. Run from this directory:

    python make_golden.py
"""

import os

import numpy as np
import torch
from torch import nn

HERE = os.path.dirname(os.path.abspath(__file__))


def tiny_net(channels, d1, d2, pooled):
    features = nn.Sequential(
        nn.Conv2d(3, 6, 3, padding=1), nn.ReLU(),
        nn.MaxPool2d(2, 2),
        nn.Conv2d(6, channels, 3, padding=1), nn.ReLU(),
    )
    head = nn.Sequential(
        nn.MaxPool2d(2, 2),
        nn.Flatten(),
        nn.Linear(channels * pooled * pooled, d1), nn.ReLU(),
        nn.Linear(d1, d2), nn.ReLU(),
    )
    return features, head


def write_manifest(path, entries):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# generated by make_golden.py\n")
        for key, value in entries:
            fh.write(f"{key} = {value}\n")


def build(out_dir, name, n, channels, fmap, d1, d2, render, seed, with_extras):
    torch.manual_seed(seed)
    rng = np.random.default_rng(seed)
    os.makedirs(out_dir, exist_ok=True)
    pooled = fmap // 2
    features, head = tiny_net(channels, d1, d2, pooled)
    features.eval()
    head.eval()
    images = torch.rand(n, 3, fmap * 2, fmap * 2)
    with torch.no_grad():
        acts = features(images)
        emb = head(acts)
        pooled_emb = acts.mean(dim=(2, 3))
        logits = torch.randn(n, 10) * 2.0
        probs = torch.softmax(logits.double(), dim=1)

    prefix = "acts_small" if name == "small" else "acts"
    np.save(os.path.join(out_dir, f"{prefix}.npy"), acts.numpy().astype("<f4"))
    lin1, lin2 = head[2], head[4]
    np.savez(
        os.path.join(out_dir, "weights.npz"),
        W1=lin1.weight.detach().numpy().astype("<f4"),
        b1=lin1.bias.detach().numpy().astype("<f4"),
        W2=lin2.weight.detach().numpy().astype("<f4"),
        b2=lin2.bias.detach().numpy().astype("<f4"),
    )
    np.save(os.path.join(out_dir, "embeddings.npy"), emb.numpy().astype("<f4"))
    np.save(os.path.join(out_dir, "embeddings_pool.npy"), pooled_emb.numpy().astype("<f8"))

    ids = ",".join(f"img{i:02d}" for i in range(n))
    common = [
        ("dataset_name", f"golden-{name}"),
        ("n_images", n),
        ("image_ids", ids),
        ("category", "synthetic"),
        ("feature_maps", channels),
        ("feature_map_height", fmap),
        ("feature_map_width", fmap),
        ("image_render_size", render),
        ("layout", "channel-major"),
        ("activations", f"{prefix}.npy"),
    ]
    extras = []
    if with_extras:
        h = rng.uniform(0.0, 1.0, size=(n, n))
        h = (h + h.T) / 2.0
        np.fill_diagonal(h, 1.0)
        np.save(os.path.join(out_dir, "judgments.npy"), h.astype("<f8"))
        np.save(os.path.join(out_dir, "class_probs.npy"), probs.numpy().astype("<f8"))
        sal = rng.uniform(0.0, 1.0, size=(n, render, render))
        np.save(os.path.join(out_dir, "saliency.npy"), sal.astype("<f4"))
        rgb = rng.uniform(0.0, 1.0, size=(n, render, render, 3))
        np.save(os.path.join(out_dir, "images.npy"), rgb.astype("<f4"))
        extras = [
            ("judgments", "judgments.npy"),
            ("class_probs", "class_probs.npy"),
            ("saliency", "saliency.npy"),
            ("images", "images.npy"),
        ]
    write_manifest(
        os.path.join(out_dir, "manifest.txt"),
        common
        + [
            ("architecture_mode", "fc-chain"),
            ("weights", "weights.npz"),
            ("pool_window", 2),
            ("pool_stride", 2),
            ("embeddings_golden", "embeddings.npy"),
        ]
        + extras,
    )
    write_manifest(
        os.path.join(out_dir, "manifest_pool.txt"),
        common
        + [
            ("architecture_mode", "global-pool"),
            ("embeddings_golden", "embeddings_pool.npy"),
        ]
        + extras,
    )


if __name__ == "__main__":
    build(os.path.join(HERE, "golden"), "small", 4, 8, 3, 16, 12, 32, 7, True)
    build(os.path.join(HERE, "golden", "layout"), "layout", 3, 5, 6, 10, 9, 24, 11, False)
