"""GradCAM saliency from the last convolutional layer, for the true label."""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .convnet import Network, ReLU
from .raster import Raster, RgbImage, normalize_minmax, resample_bilinear, write_pgm, write_rstr

__all__ = ["SaliencyMap", "gradcam_target_layer", "activation_gradients", "gradcam",
           "gradcam_batch", "write_saliency"]


@dataclass
class SaliencyMap:
    raster: Raster
    image_id: str
    label: int


def gradcam_target_layer(net: Network) -> int:
    """Index of the layer whose output is the last conv layer's activations
    (its ReLU if one follows directly)."""
    convs = net.conv_indices()
    if not convs:
        raise ValueError("GradCAM needs a network with at least one conv layer")
    i = convs[-1]
    if i + 1 < len(net.layers) and isinstance(net.layers[i + 1], ReLU):
        i += 1
    return i


def activation_gradients(net: Network, x: np.ndarray, labels) -> tuple[np.ndarray, np.ndarray]:
    """Target-layer activations ``A`` and ``d logit[label] / dA`` for a batch."""
    t = gradcam_target_layer(net)
    record, logits = net.forward(x)
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if labels.min() < 0 or labels.max() >= logits.shape[1]:
        raise ValueError(f"label outside [0, {logits.shape[1]})")
    dlogits = np.zeros_like(logits)
    dlogits[np.arange(len(labels)), labels] = 1.0
    _, dA = net.backward(record, dlogits, stop_at=t)
    return record.outputs[t], dA


def _cam(A: np.ndarray, dA: np.ndarray) -> np.ndarray:
    alpha = dA.mean(axis=(-2, -1))
    return np.maximum(np.einsum("...k,...kij->...ij", alpha, A), 0.0)


def gradcam_batch(net: Network, x: np.ndarray, labels, image_ids=None) -> list[SaliencyMap]:
    """GradCAM maps for a batch ``x`` of shape (N, 3, H, W)."""
    x = np.asarray(x, dtype=np.float64)
    A, dA = activation_gradients(net, x, labels)
    cams = _cam(A, dA)
    h, w = x.shape[2:]
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    ids = image_ids if image_ids is not None else [str(i) for i in range(len(x))]
    out = []
    for cam, label, image_id in zip(cams, labels, ids):
        up = resample_bilinear(Raster(cam), w, h)
        out.append(SaliencyMap(normalize_minmax(up), str(image_id), int(label)))
    return out


def gradcam(net: Network, image: RgbImage, label: int, image_id: str = "") -> SaliencyMap:
    """Normalized ReLU(sum_k alpha_k A^k), upsampled to the image size.

    ``alpha_k`` is the spatial mean of the gradient of the pre-softmax score
    for ``label`` w.r.t. channel ``k`` of the last conv activations.  A map
    that is constant (e.g. all zero) normalizes to all zeros.
    """
    return gradcam_batch(net, image.values[None], [label], [image_id])[0]


def write_saliency(directory: str | os.PathLike, smap: SaliencyMap, preview: bool = True) -> None:
    os.makedirs(directory, exist_ok=True)
    write_rstr(os.path.join(directory, f"{smap.image_id}_gradcam.rstr"), smap.raster)
    if preview:
        write_pgm(os.path.join(directory, f"{smap.image_id}_gradcam.pgm"), smap.raster)
