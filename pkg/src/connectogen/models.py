"""GCN building blocks: encoder, cluster-specific generators, discriminator.

Every layer computes phi(normA @ F @ W) where normA is a normalized
subject-affinity adjacency.  The encoder maps f -> 32 -> 16, generators map
16 -> 32 -> f, and the discriminator trunk maps f -> 32 -> 16 with a linear
critic head and a sigmoid domain-classifier head on top.

Bundles serialize to a fixed little-endian layout: 5-byte magic ``TMGP1``,
1-byte format version, u32 dims (r, v, c, d), then float64 parameter blobs
row-major in a documented order (encoder L1, L2; generators row-major by
(cluster, view); discriminator trunk L1, L2, critic, classifier).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .data import feature_count
from .errors import DimensionError, PreconditionError, SerializationError
from .losses import LossWeights

MAGIC = b"TMGP1"
FORMAT_VERSION = 1

HIDDEN_WIDE = 32
EMBED_DIM = 16

_ACTIVATIONS = ("relu", "linear", "sigmoid")


@dataclass
class GCNLayer:
    weight: ad.Tensor  # (in, out), trainable
    activation: str = "relu"

    def __post_init__(self):
        if self.activation not in _ACTIVATIONS:
            raise PreconditionError(f"unknown activation {self.activation!r}")


def gcn_forward(layer: GCNLayer, features: ad.Tensor, norm_adj: ad.Tensor) -> ad.Tensor:
    """phi(normA @ F @ W), recorded on the active tape."""
    n = features.shape[0]
    if norm_adj.shape != (n, n):
        raise DimensionError(f"adjacency {norm_adj.shape} does not match {n} subjects")
    if features.shape[1] != layer.weight.shape[0]:
        raise DimensionError(
            f"features {features.shape} incompatible with weight {layer.weight.shape}")
    if layer.weight.shape[1] < features.shape[1]:
        # shrink the wide dimension first; associativity keeps the math exact
        pre = ad.matmul(norm_adj, ad.matmul(features, layer.weight))
    else:
        pre = ad.matmul(ad.matmul(norm_adj, features), layer.weight)
    if layer.activation == "relu":
        return ad.relu(pre)
    if layer.activation == "sigmoid":
        return ad.sigmoid(pre)
    return pre


@dataclass
class EncoderModel:
    layer1: GCNLayer  # f -> 32, relu
    layer2: GCNLayer  # 32 -> 16, linear

    def params(self) -> list[ad.Tensor]:
        return [self.layer1.weight, self.layer2.weight]


@dataclass
class GeneratorModel:
    layer1: GCNLayer  # 16 -> 32, relu
    layer2: GCNLayer  # 32 -> f, linear
    cluster: int = 0
    target_view: int = 0

    def params(self) -> list[ad.Tensor]:
        return [self.layer1.weight, self.layer2.weight]


@dataclass
class DiscriminatorModel:
    layer1: GCNLayer  # f -> 32, relu
    layer2: GCNLayer  # 32 -> 16, relu
    critic_head: GCNLayer  # 16 -> 1, linear
    classifier_head: GCNLayer  # 16 -> 1, sigmoid

    def params(self) -> list[ad.Tensor]:
        return [self.layer1.weight, self.layer2.weight,
                self.critic_head.weight, self.classifier_head.weight]


def encode(encoder: EncoderModel, features: ad.Tensor, norm_adj: ad.Tensor) -> ad.Tensor:
    """Two-layer GCN embedding, (n, f) -> (n, 16)."""
    hidden = gcn_forward(encoder.layer1, features, norm_adj)
    return gcn_forward(encoder.layer2, hidden, norm_adj)


def generate(generator: GeneratorModel, embeddings: ad.Tensor, norm_adj: ad.Tensor) -> ad.Tensor:
    """Two-layer GCN decode, (n, 16) -> (n, f) predicted feature rows."""
    hidden = gcn_forward(generator.layer1, embeddings, norm_adj)
    return gcn_forward(generator.layer2, hidden, norm_adj)


def discriminate(disc: DiscriminatorModel, features: ad.Tensor,
                 norm_adj: ad.Tensor) -> tuple[ad.Tensor, ad.Tensor]:
    """Critic scores (unbounded) and domain probabilities, both (n, 1)."""
    trunk = gcn_forward(disc.layer2, gcn_forward(disc.layer1, features, norm_adj), norm_adj)
    critic = gcn_forward(disc.critic_head, trunk, norm_adj)
    probs = gcn_forward(disc.classifier_head, trunk, norm_adj)
    return critic, probs


def discriminator_input_gradient(disc: DiscriminatorModel, features: ad.Tensor,
                                 norm_adj: ad.Tensor) -> ad.Tensor:
    """Gradient of the summed critic output w.r.t. the input features.

    Built from forward primitives (relu masks enter as constants, which is
    exact almost everywhere), so the result stays differentiable w.r.t. the
    discriminator parameters.  Used by the exact gradient-penalty mode.
    """
    pre1 = ad.matmul(norm_adj, ad.matmul(features, disc.layer1.weight))
    h1 = ad.relu(pre1)
    pre2 = ad.matmul(norm_adj, ad.matmul(h1, disc.layer2.weight))
    h2 = ad.relu(pre2)
    mask1 = ad.constant((pre1.data > 0).astype(float))
    mask2 = ad.constant((pre2.data > 0).astype(float))
    n = features.shape[0]
    ones = ad.constant(np.ones((n, 1)))
    norm_t = ad.transpose(norm_adj)
    # d(sum critic)/dh2 back through critic head, then the trunk layers
    g2 = ad.mul(ad.matmul(ad.matmul(norm_t, ones), ad.transpose(disc.critic_head.weight)), mask2)
    g1 = ad.mul(ad.matmul(ad.matmul(norm_t, g2), ad.transpose(disc.layer2.weight)), mask1)
    return ad.matmul(ad.matmul(norm_t, g1), ad.transpose(disc.layer1.weight))


@dataclass(frozen=True)
class Dims:
    r: int
    v: int
    c: int
    d: int = EMBED_DIM

    @property
    def k(self) -> int:
        return self.v - 1

    @property
    def f(self) -> int:
        return feature_count(self.r)


@dataclass
class ModelBundle:
    """Encoder + c*k generator grid + discriminator and their dimensions.

    seed and loss_weights are in-memory training metadata; the binary file
    format carries only dims and parameters.
    """

    encoder: EncoderModel
    generators: list[list[GeneratorModel]]  # [cluster][target view]
    discriminator: DiscriminatorModel
    dims: Dims
    seed: int | None = None
    loss_weights: LossWeights | None = None
    format_version: int = FORMAT_VERSION

    def generator(self, cluster: int, view: int) -> GeneratorModel:
        return self.generators[cluster][view]

    def generator_params(self) -> list[ad.Tensor]:
        out = []
        for row in self.generators:
            for g in row:
                out.extend(g.params())
        return out

    def all_params(self) -> list[ad.Tensor]:
        return (self.encoder.params() + self.generator_params()
                + self.discriminator.params())

    def _blobs(self) -> list[np.ndarray]:
        return [p.data for p in self.all_params()]


def _glorot(rng: np.random.Generator, n_in: int, n_out: int) -> ad.Tensor:
    limit = np.sqrt(6.0 / (n_in + n_out))
    return ad.parameter(rng.uniform(-limit, limit, size=(n_in, n_out)))


def init_params(dims: Dims, seed: int) -> ModelBundle:
    """Glorot-uniform bundle, deterministic by seed; draw order matches the
    serialization order."""
    if dims.r < 3 or dims.v < 2 or dims.c < 1:
        raise PreconditionError(f"invalid dims {dims}")
    rng = np.random.default_rng(seed)
    f, d = dims.f, dims.d
    encoder = EncoderModel(
        layer1=GCNLayer(_glorot(rng, f, HIDDEN_WIDE), "relu"),
        layer2=GCNLayer(_glorot(rng, HIDDEN_WIDE, d), "linear"),
    )
    generators = []
    for j in range(dims.c):
        row = []
        for i in range(dims.k):
            row.append(GeneratorModel(
                layer1=GCNLayer(_glorot(rng, d, HIDDEN_WIDE), "relu"),
                layer2=GCNLayer(_glorot(rng, HIDDEN_WIDE, f), "linear"),
                cluster=j, target_view=i,
            ))
        generators.append(row)
    discriminator = DiscriminatorModel(
        layer1=GCNLayer(_glorot(rng, f, HIDDEN_WIDE), "relu"),
        layer2=GCNLayer(_glorot(rng, HIDDEN_WIDE, d), "relu"),
        critic_head=GCNLayer(_glorot(rng, d, 1), "linear"),
        classifier_head=GCNLayer(_glorot(rng, d, 1), "sigmoid"),
    )
    return ModelBundle(encoder=encoder, generators=generators,
                       discriminator=discriminator, dims=dims, seed=seed)


def save_bundle(bundle: ModelBundle, path) -> None:
    dims = bundle.dims
    header = MAGIC + struct.pack("<B", FORMAT_VERSION)
    header += struct.pack("<4I", dims.r, dims.v, dims.c, dims.d)
    payload = b"".join(np.ascontiguousarray(blob).astype("<f8").tobytes()
                       for blob in bundle._blobs())
    Path(path).write_bytes(header + payload)


def load_bundle(path) -> ModelBundle:
    raw = Path(path).read_bytes()
    if len(raw) < len(MAGIC) + 1 + 16:
        raise SerializationError(f"{path}: file too short for a model header")
    if raw[:len(MAGIC)] != MAGIC:
        raise SerializationError(f"{path}: bad magic bytes")
    version = raw[len(MAGIC)]
    if version != FORMAT_VERSION:
        raise SerializationError(f"{path}: unsupported format version {version}")
    offset = len(MAGIC) + 1
    r, v, c, d = struct.unpack_from("<4I", raw, offset)
    offset += 16
    if d != EMBED_DIM:
        raise SerializationError(f"{path}: embedding width {d} unsupported")
    if not (3 <= r <= 10_000 and 2 <= v <= 1_000 and 1 <= c <= 1_000):
        raise SerializationError(f"{path}: implausible dims r={r}, v={v}, c={c}")
    dims = Dims(r=r, v=v, c=c, d=d)
    bundle = init_params(dims, seed=0)
    blobs = bundle._blobs()
    expected = sum(b.size for b in blobs) * 8
    if len(raw) - offset != expected:
        raise SerializationError(
            f"{path}: payload is {len(raw) - offset} bytes, expected {expected} "
            f"for dims r={r}, v={v}, c={c}, d={d}")
    for blob in blobs:
        size = blob.size * 8
        blob[...] = np.frombuffer(raw[offset:offset + size], dtype="<f8").reshape(blob.shape)
        offset += size
    bundle.seed = None
    return bundle
