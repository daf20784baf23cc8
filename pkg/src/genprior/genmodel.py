"""Synthetic generative prior: a fixed-weight multilayer decoder.

The decoder maps a bounded latent ball into ambient space. It is immutable
after construction, its forward pass is deterministic, and it carries a
certified Lipschitz upper bound (product of per-layer spectral norms; the
activations used here are all 1-Lipschitz).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .seeding import derive_seed

__all__ = [
    "GenerativeDecoder",
    "decoder_new",
    "identity_decoder",
    "orthonormal_linear_decoder",
    "forward",
    "vjp",
    "lipschitz_bound",
    "sample_latent",
    "out_of_ball",
    "decoder_to_json",
    "decoder_from_json",
]

ACTIVATIONS = ("tanh", "relu", "identity")


@dataclass(frozen=True)
class GenerativeDecoder:
    """Fixed-weight feed-forward decoder z in B_2^k(r) -> R^p.

    ``layers`` is an ordered list of (weight, bias) pairs; the activation is
    applied after every layer except the last. ``family`` records how the
    weights were generated so they can be rebuilt from the seed alone.
    """

    latent_dim: int
    ambient_dim: int
    latent_radius: float
    layers: tuple
    activation: str
    seed: int
    weight_scale: float
    family: str = "mlp"
    hidden_dims: tuple = ()
    lipschitz: float = field(default=0.0)

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        dims = [self.latent_dim]
        for w, b in self.layers:
            if w.shape[1] != dims[-1]:
                raise ValueError("layer dimensions do not chain")
            if b.shape != (w.shape[0],):
                raise ValueError("bias shape does not match layer output")
            dims.append(w.shape[0])
        if dims[-1] != self.ambient_dim:
            raise ValueError("last layer output dim != ambient dim")


def decoder_new(seed, k, hidden_dims, p, r, activation="tanh", weight_scale=1.0):
    """Build a decoder with Gaussian weights of std weight_scale/sqrt(fan_in).

    Biases are zero. Empty ``hidden_dims`` yields a single linear layer.
    """
    if k < 1 or p < 1:
        raise ValueError("dimensions must be positive")
    if p < k:
        raise ValueError("ambient dim must be >= latent dim")
    if r <= 0:
        raise ValueError("latent radius must be positive")
    if weight_scale <= 0:
        raise ValueError("weight scale must be positive")
    if any(int(h) < 1 for h in hidden_dims):
        raise ValueError("hidden dims must be positive")
    rng = np.random.default_rng(seed)
    dims = [int(k)] + [int(h) for h in hidden_dims] + [int(p)]
    layers = []
    for d_in, d_out in zip(dims[:-1], dims[1:]):
        w = rng.standard_normal((d_out, d_in)) * (weight_scale / np.sqrt(d_in))
        layers.append((w, np.zeros(d_out)))
    dec = GenerativeDecoder(
        latent_dim=int(k),
        ambient_dim=int(p),
        latent_radius=float(r),
        layers=tuple(layers),
        activation=activation,
        seed=int(seed),
        weight_scale=float(weight_scale),
        family="mlp",
        hidden_dims=tuple(int(h) for h in hidden_dims),
    )
    object.__setattr__(dec, "lipschitz", _lipschitz_product(dec))
    return dec


def identity_decoder(k, r=1.0):
    """Decoder with a single identity layer: forward(z) = z."""
    layers = ((np.eye(k), np.zeros(k)),)
    dec = GenerativeDecoder(k, k, float(r), layers, "identity", 0, 1.0,
                            family="identity")
    object.__setattr__(dec, "lipschitz", _lipschitz_product(dec))
    return dec


def orthonormal_linear_decoder(seed, k, p, r):
    """Single linear layer whose columns are orthonormal (QR of a Gaussian).

    Projection onto the range of this decoder has a closed form, which makes
    it the exact-projection oracle used in tests.
    """
    if p < k:
        raise ValueError("need p >= k for orthonormal columns")
    rng = np.random.default_rng(seed)
    q, rmat = np.linalg.qr(rng.standard_normal((p, k)))
    q = q * np.sign(np.diag(rmat))  # canonical sign, deterministic
    dec = GenerativeDecoder(int(k), int(p), float(r), ((q, np.zeros(p)),),
                            "identity", int(seed), 1.0,
                            family="orthonormal_linear")
    object.__setattr__(dec, "lipschitz", _lipschitz_product(dec))
    return dec


def forward(decoder, z):
    """Evaluate the decoder at a latent point.

    Points outside the latent ball still evaluate; callers that care use
    ``out_of_ball`` as the diagnostic.
    """
    z = np.asarray(z, dtype=float)
    if z.shape != (decoder.latent_dim,):
        raise ValueError(f"latent vector must have length {decoder.latent_dim}")
    h = z
    last = len(decoder.layers) - 1
    for i, (w, b) in enumerate(decoder.layers):
        h = w @ h + b
        if i < last:
            h = _act(decoder.activation, h)
    return h


def out_of_ball(decoder, z):
    """True when z lies outside the decoder's latent ball."""
    return float(np.linalg.norm(z)) > decoder.latent_radius


def vjp(decoder, z, v):
    """Gradient of <G(z), v> with respect to z (reverse accumulation).

    ReLU uses derivative 0 at 0.
    """
    z = np.asarray(z, dtype=float)
    v = np.asarray(v, dtype=float)
    if z.shape != (decoder.latent_dim,):
        raise ValueError(f"latent vector must have length {decoder.latent_dim}")
    if v.shape != (decoder.ambient_dim,):
        raise ValueError(f"ambient vector must have length {decoder.ambient_dim}")
    h = z
    pre = []
    last = len(decoder.layers) - 1
    for i, (w, b) in enumerate(decoder.layers):
        h = w @ h + b
        if i < last:
            pre.append(h)
            h = _act(decoder.activation, h)
    g = v
    for i in range(last, -1, -1):
        w, _ = decoder.layers[i]
        g = w.T @ g
        if i > 0:
            g = g * _act_deriv(decoder.activation, pre[i - 1])
    return g


def lipschitz_bound(decoder):
    """Upper bound on the decoder's Lipschitz constant (cached at build)."""
    return decoder.lipschitz


def sample_latent(decoder, seed, inset=0.9):
    """Uniform sample from the ball of radius inset * r.

    The default inset keeps planted signals strictly interior to the latent
    ball, away from projection boundary effects.
    """
    rng = np.random.default_rng(seed)
    k = decoder.latent_dim
    direction = rng.standard_normal(k)
    direction /= np.linalg.norm(direction)
    radius = decoder.latent_radius * inset * rng.uniform() ** (1.0 / k)
    return radius * direction


def decoder_to_json(decoder):
    """JSON-serializable description; weights regenerate from the seed."""
    doc = {
        "family": decoder.family,
        "k": decoder.latent_dim,
        "p": decoder.ambient_dim,
        "r": decoder.latent_radius,
        "activation": decoder.activation,
        "seed": decoder.seed,
        "layer_dims": list(decoder.hidden_dims),
        "weight_scale": decoder.weight_scale,
    }
    return doc


def decoder_from_json(doc):
    family = doc.get("family", "mlp")
    if family == "mlp":
        return decoder_new(doc["seed"], doc["k"], doc.get("layer_dims", []),
                           doc["p"], doc["r"], doc.get("activation", "tanh"),
                           doc.get("weight_scale", 1.0))
    if family == "orthonormal_linear":
        return orthonormal_linear_decoder(doc["seed"], doc["k"], doc["p"], doc["r"])
    if family == "identity":
        return identity_decoder(doc["k"], doc["r"])
    raise ValueError(f"unknown decoder family {family!r}")


def _act(name, x):
    if name == "tanh":
        return np.tanh(x)
    if name == "relu":
        return np.maximum(x, 0.0)
    return x


def _act_deriv(name, pre):
    if name == "tanh":
        t = np.tanh(pre)
        return 1.0 - t * t
    if name == "relu":
        return (pre > 0).astype(float)
    return np.ones_like(pre)


def _lipschitz_product(decoder):
    # tanh/relu/identity are 1-Lipschitz, so the product of per-layer
    # spectral norms is a valid upper bound.
    prod = 1.0
    for i, (w, _) in enumerate(decoder.layers):
        prod *= _spectral_norm(w, seed=derive_seed(decoder.seed, "lipschitz", i))
    return prod


def _spectral_norm(w, seed, tol=1e-8, max_iter=10_000):
    """Top singular value by power iteration on W^T W."""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(w.shape[1])
    v /= np.linalg.norm(v)
    sigma = 0.0
    for _ in range(max_iter):
        u = w @ v
        sigma_new = np.linalg.norm(u)
        if sigma_new == 0.0:
            return 0.0
        v = w.T @ u
        v /= np.linalg.norm(v)
        if abs(sigma_new - sigma) <= tol * sigma_new:
            return float(np.linalg.norm(w @ v))
        sigma = sigma_new
    return float(sigma)
