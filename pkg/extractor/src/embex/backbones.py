"""Backbone registry: real pretrained encoders plus deterministic toy stand-ins.

Identifiers:
  images:  "clip:<hf-model-id>"   frozen CLIP image tower via transformers
           "toy-pixel:<dim>"      downsampled-pixel random projection; fully
                                  deterministic, no downloads (tests, demos)
  text:    "sbert:<model-id>"     sentence-transformers encoder
           "toy-hash:<dim>"       sha256 token hashing; identical text maps
                                  to identical vectors

Real backbones abort with BackboneError when their weights cannot be loaded
(e.g. offline); the toy ones always work.
"""

from __future__ import annotations

import hashlib

import numpy as np
from PIL import Image


class BackboneError(RuntimeError):
    """The requested backbone could not be loaded."""


TOY_PIXEL_GRID = 8  # images are resized to GRID x GRID RGB before projection
_TOY_PIXEL_SEED = 57656


class ToyPixelBackbone:
    """Deterministic stand-in image encoder: resize, flatten, project."""

    def __init__(self, dim: int):
        if dim < 1:
            raise BackboneError(f"toy-pixel dimension must be positive, got {dim}")
        self.dim = dim
        rng = np.random.default_rng(_TOY_PIXEL_SEED)
        n_pixels = TOY_PIXEL_GRID * TOY_PIXEL_GRID * 3
        self._projection = rng.normal(size=(n_pixels, dim)) / np.sqrt(n_pixels)

    def encode_images(self, images: list[Image.Image]) -> np.ndarray:
        rows = []
        for img in images:
            small = img.convert("RGB").resize((TOY_PIXEL_GRID, TOY_PIXEL_GRID), Image.BILINEAR)
            rows.append(np.asarray(small, dtype=np.float64).ravel() / 255.0)
        return np.stack(rows) @ self._projection


class ClipBackbone:
    """Weight-frozen CLIP image tower; embeddings are the projected image features."""

    def __init__(self, model_id: str, device: str = "cpu"):
        try:
            import torch
            from transformers import CLIPModel, CLIPProcessor
        except ImportError as exc:
            raise BackboneError(f"clip backbone needs torch+transformers: {exc}") from exc
        try:
            self._model = CLIPModel.from_pretrained(model_id).to(device).eval()
            self._processor = CLIPProcessor.from_pretrained(model_id)
        except Exception as exc:  # hub/download/load failures all abort
            raise BackboneError(f"could not load CLIP backbone {model_id!r}: {exc}") from exc
        self._torch = torch
        self._device = device
        self.dim = int(self._model.config.projection_dim)

    def encode_images(self, images: list[Image.Image]) -> np.ndarray:
        inputs = self._processor(images=[img.convert("RGB") for img in images],
                                 return_tensors="pt").to(self._device)
        with self._torch.no_grad():
            features = self._model.get_image_features(**inputs)
        return features.cpu().numpy().astype(np.float64)


class ToyHashEncoder:
    """Deterministic bag-of-hashed-tokens sentence encoder."""

    def __init__(self, dim: int):
        if dim < 1:
            raise BackboneError(f"toy-hash dimension must be positive, got {dim}")
        self.dim = dim

    def encode_text(self, sentences: list[str]) -> np.ndarray:
        out = np.zeros((len(sentences), self.dim))
        for i, sentence in enumerate(sentences):
            for token in sentence.lower().split():
                token = "".join(ch for ch in token if ch.isalnum())
                if not token:
                    continue
                digest = hashlib.sha256(token.encode()).digest()
                index = int.from_bytes(digest[:8], "big") % self.dim
                sign = 1.0 if digest[8] % 2 == 0 else -1.0
                out[i, index] += sign
            if not out[i].any():
                out[i, 0] = 1.0  # degenerate all-punctuation sentence
        return out


class SbertEncoder:
    def __init__(self, model_id: str, device: str = "cpu"):
        try:
            from sentence_transformers import SentenceTransformer
        except ImportError as exc:
            raise BackboneError(f"sbert encoder needs sentence-transformers: {exc}") from exc
        try:
            self._model = SentenceTransformer(model_id, device=device)
        except Exception as exc:
            raise BackboneError(f"could not load sentence encoder {model_id!r}: {exc}") from exc
        self.dim = int(self._model.get_sentence_embedding_dimension())

    def encode_text(self, sentences: list[str]) -> np.ndarray:
        return np.asarray(self._model.encode(sentences, convert_to_numpy=True), dtype=np.float64)


def image_backbone(identifier: str, device: str = "cpu"):
    kind, _, arg = identifier.partition(":")
    if kind == "toy-pixel":
        return ToyPixelBackbone(int(arg or 64))
    if kind == "clip":
        return ClipBackbone(arg or "openai/clip-vit-base-patch32", device=device)
    raise BackboneError(f"unknown image backbone {identifier!r} (use clip:<id> or toy-pixel:<dim>)")


def text_encoder(identifier: str, device: str = "cpu"):
    kind, _, arg = identifier.partition(":")
    if kind == "toy-hash":
        return ToyHashEncoder(int(arg or 32))
    if kind == "sbert":
        return SbertEncoder(arg or "all-MiniLM-L6-v2", device=device)
    raise BackboneError(f"unknown text encoder {identifier!r} (use sbert:<id> or toy-hash:<dim>)")
