"""Image encoders. Each produces one fixed-width embedding per image.

Preprocessing follows the usual vision-encoder recipe: images are resized
to the encoder's square input size with bicubic interpolation before
encoding.

Built in:
  rp512        deterministic random-projection encoder, 512-d, offline.
               A stand-in with the same interface and output width as a
               ViT-B/16-class CLIP image tower, for pipeline runs and
               tests on machines without model weights.
  hf-clip:<id> any Hugging Face CLIP checkpoint (e.g.
               hf-clip:openai/clip-vit-base-patch16), loaded through
               transformers; requires torch and locally available weights.
"""

from __future__ import annotations

from typing import Protocol, Sequence

import numpy as np
from PIL import Image


class Encoder(Protocol):
    name: str
    width: int
    input_size: int

    def embed_batch(self, images: Sequence[Image.Image]) -> np.ndarray: ...


def preprocess(image: Image.Image, input_size: int) -> np.ndarray:
    """RGB, bicubic resize to (input_size, input_size), floats in [0, 1]."""
    resized = image.convert("RGB").resize(
        (input_size, input_size), Image.Resampling.BICUBIC
    )
    return np.asarray(resized, dtype=np.float32) / 255.0


class RandomProjectionEncoder:
    """Fixed seeded Gaussian projection of bicubic-resized pixels.

    Deterministic across runs and platforms; carries no semantic prior,
    so it exercises the extraction pipeline rather than recognition
    quality.
    """

    _SEED = 0xB10C11F

    def __init__(self, width: int = 512, input_size: int = 32):
        self.name = f"rp{width}"
        self.width = width
        self.input_size = input_size
        flat = input_size * input_size * 3
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(self._SEED)))
        self._projection = (
            rng.standard_normal((width, flat)) / np.sqrt(flat)
        ).astype(np.float64)

    def embed_batch(self, images: Sequence[Image.Image]) -> np.ndarray:
        pixels = np.stack(
            [preprocess(img, self.input_size).reshape(-1) for img in images]
        ).astype(np.float64)
        return (pixels @ self._projection.T).astype(np.float32)


class HfClipEncoder:
    """Image tower of a Hugging Face CLIP checkpoint."""

    def __init__(self, model_id: str):
        try:
            import torch  # noqa: F401
            from transformers import CLIPImageProcessor, CLIPModel
        except ImportError as exc:
            raise RuntimeError(
                f"encoder hf-clip:{model_id} needs torch and transformers: {exc}"
            )
        try:
            self._model = CLIPModel.from_pretrained(model_id)
            self._processor = CLIPImageProcessor.from_pretrained(model_id)
        except Exception as exc:
            raise RuntimeError(
                f"encoder hf-clip:{model_id} unavailable "
                f"(weights not cached and not downloadable): {exc}"
            )
        self._model.eval()
        self.name = f"hf-clip:{model_id}"
        self.width = int(self._model.config.projection_dim)
        self.input_size = int(self._processor.crop_size["height"])

    def embed_batch(self, images: Sequence[Image.Image]) -> np.ndarray:
        import torch

        resized = [
            img.convert("RGB").resize(
                (self.input_size, self.input_size), Image.Resampling.BICUBIC
            )
            for img in images
        ]
        inputs = self._processor(images=resized, do_resize=False, return_tensors="pt")
        with torch.no_grad():
            features = self._model.get_image_features(**inputs)
        return features.cpu().numpy().astype(np.float32)


def get_encoder(name: str) -> Encoder:
    if name == "rp512":
        return RandomProjectionEncoder()
    if name.startswith("hf-clip:"):
        return HfClipEncoder(name.split(":", 1)[1])
    raise ValueError(
        f"unknown encoder {name!r}; available: rp512, hf-clip:<model_id>"
    )
