"""Three-layer residual GCN over the 21-node hand graph, forward and backward.

Architecture (per sample; X is the 21x4 node-feature matrix):

    s0 = X P + bP                      input projection into the hidden width
    g1 = GCN1(X, residual=s0)
    d1 = Dropout(g1);             r1 = d1 + s0
    g2 = GCN2(r1, residual=r1)
    d2 = Dropout(BatchNorm(g2));  r2 = d2 + d1 + s0
    g3 = GCN3(r2, residual=r2)
    d3 = Dropout(g3);             r3 = d3 + d2 + d1 + s0
    logp = log_softmax(flatten(r3) Wout + bout)

so every accumulated stream satisfies r_k = s0 + sum of the d_j up to k.
One GCN layer is LeakyReLU(A_hat (H W + b)) + residual with
A_hat = D^-1/2 (A + I) D^-1/2, degrees taken from (A + I) so they stay
positive even when edge dropout isolates a node.

Dropout is structural: whole node rows and whole undirected edges are dropped
independently with probability p.  Surviving node rows are scaled by 1/(1-p)
(inverted dropout), and each layer's normalized adjacency is rebuilt from the
surviving edges, so edge drops compound across the three sites within one
forward pass.  Drop decisions are drawn per sample, per site, in a fixed
order (nodes, then edges, site 1 through 3).  Inference applies neither kind
of dropout and always uses the full-topology adjacency.

With all GCN weights and biases zero and dropout off, the wiring collapses to
the closed form r3 = 4*s0 + 2*BatchNorm(2*s0), which the tests assert.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .errors import DimensionMismatch, InsufficientBatch, StaleCache
from .hand_graph import HAND_EDGES, NUM_FEATURES, NUM_LANDMARKS, PoseGraph, build_adjacency
from .numerics import RngStream, leaky_relu, leaky_relu_grad, log_softmax, xavier_uniform

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


@dataclass(frozen=True)
class ModelConfig:
    hidden_dim: int = 128
    num_classes: int = 29
    num_nodes: int = NUM_LANDMARKS
    in_features: int = NUM_FEATURES
    leaky_alpha: float = 0.2
    dropout_p: float = 0.4
    d_desired: float = 1.0

    def __post_init__(self):
        if self.hidden_dim < 1:
            raise ValueError("hidden_dim must be >= 1")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValueError("dropout_p must lie in [0, 1)")
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        if not 0.0 < self.leaky_alpha < 1.0:
            raise ValueError("leaky_alpha must lie in (0, 1)")


# Tensor names in fixed order; Adam iterates and checkpoints serialize in
# exactly this order.  Running statistics are stored but never optimized.
TRAINABLE_FIELDS = (
    "w1", "b1", "w2", "b2", "w3", "b3",
    "proj_w", "proj_b", "gamma", "beta", "w_out", "b_out",
)
STAT_FIELDS = ("running_mean", "running_var")
ALL_FIELDS = TRAINABLE_FIELDS + STAT_FIELDS


@dataclass
class ModelParams:
    """Every stored tensor of the model, trainables plus batch-norm stats."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray
    proj_w: np.ndarray
    proj_b: np.ndarray
    gamma: np.ndarray
    beta: np.ndarray
    w_out: np.ndarray
    b_out: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray

    def copy(self) -> "ModelParams":
        return ModelParams(**{name: getattr(self, name).copy() for name in ALL_FIELDS})

    def tensors(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in ALL_FIELDS}


def init_params(config: ModelConfig, rng: RngStream) -> ModelParams:
    """Xavier-uniform weights drawn in the order w1, w2, w3, proj_w, w_out;
    biases and beta start at zero, gamma at one, running stats at (0, 1)."""
    h = config.hidden_dim
    f = config.in_features
    n = config.num_nodes
    k = config.num_classes
    return ModelParams(
        w1=xavier_uniform(f, h, rng),
        w2=xavier_uniform(h, h, rng),
        w3=xavier_uniform(h, h, rng),
        proj_w=xavier_uniform(f, h, rng),
        w_out=xavier_uniform(n * h, k, rng),
        b1=np.zeros(h),
        b2=np.zeros(h),
        b3=np.zeros(h),
        proj_b=np.zeros(h),
        gamma=np.ones(h),
        beta=np.zeros(h),
        b_out=np.zeros(k),
        running_mean=np.zeros(h),
        running_var=np.ones(h),
    )


def parameter_count(params: ModelParams) -> int:
    """Total element count over every stored tensor (running stats included).

    For the default wiring this equals 2*H^2 + 625*H + 29.
    """
    return sum(int(t.size) for t in params.tensors().values())


def normalized_adjacency(a: np.ndarray) -> np.ndarray:
    """Self-loop-augmented symmetric normalization D^-1/2 (A + I) D^-1/2.

    Degrees come from (A + I), so every degree is >= 1 and the result is
    exactly symmetric by construction (the denominator is an outer product).
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"adjacency must be square, got {a.shape}")
    a_loop = a + np.eye(a.shape[0])
    deg = a_loop.sum(axis=1)
    return a_loop / np.sqrt(deg[:, None] * deg[None, :])


def _normalized_adjacency_batch(a: np.ndarray) -> np.ndarray:
    """Batched variant for (B, n, n) adjacency stacks."""
    n = a.shape[-1]
    a_loop = a + np.eye(n)
    deg = a_loop.sum(axis=-1)
    return a_loop / np.sqrt(deg[..., :, None] * deg[..., None, :])


@lru_cache(maxsize=1)
def full_normalized_adjacency() -> np.ndarray:
    """Normalized adjacency of the complete hand skeleton (precomputed once)."""
    a_hat = normalized_adjacency(build_adjacency())
    a_hat.setflags(write=False)
    return a_hat


def gcn_layer_forward(
    a_hat: np.ndarray,
    h_in: np.ndarray,
    w: np.ndarray,
    b: np.ndarray,
    residual_in: np.ndarray,
    alpha: float,
) -> np.ndarray:
    """One GCN layer: LeakyReLU(A_hat (h_in W + b)) + residual_in.

    Accepts single graphs (n, f) or batched stacks (B, n, f); ``a_hat`` may be
    shared (n, n) or per-sample (B, n, n).
    """
    h_in = np.asarray(h_in, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if h_in.shape[-1] != w.shape[0]:
        raise DimensionMismatch(f"gcn layer: features {h_in.shape} vs weight {w.shape}")
    residual_in = np.asarray(residual_in, dtype=np.float64)
    if residual_in.shape != h_in.shape[:-1] + (w.shape[1],):
        raise DimensionMismatch(
            f"gcn layer: residual {residual_in.shape} does not match output "
            f"{h_in.shape[:-1] + (w.shape[1],)}"
        )
    z = h_in @ w + b
    return leaky_relu(a_hat @ z, alpha) + residual_in


@dataclass
class DropoutMasks:
    """Survival masks from one dropout site: True entries were kept."""

    node_keep: np.ndarray
    edge_keep: np.ndarray


def _undirected_edges(a: np.ndarray) -> np.ndarray:
    """Upper-triangle nonzero index pairs of a symmetric adjacency, row-major."""
    return np.argwhere(np.triu(a, k=1) != 0)


def node_edge_dropout(
    h: np.ndarray,
    a: np.ndarray,
    p: float,
    rng: RngStream | None,
    training: bool,
) -> tuple[np.ndarray, np.ndarray, DropoutMasks]:
    """Structural dropout on one graph: zero whole node rows and whole edges.

    Each node is dropped independently with probability p (its feature row
    zeroed, survivors scaled by 1/(1-p)); each undirected edge of ``a`` is
    dropped independently with probability p (both symmetric entries zeroed).
    Node draws happen before edge draws.  In inference mode both tensors pass
    through untouched.
    """
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must lie in [0, 1), got {p}")
    h = np.asarray(h, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    edges = _undirected_edges(a)
    if not training or p == 0.0:
        masks = DropoutMasks(np.ones(h.shape[0], dtype=bool), np.ones(len(edges), dtype=bool))
        return h, a, masks
    node_keep = rng.random(h.shape[0]) >= p
    edge_keep = rng.random(len(edges)) >= p
    h_out = h * (node_keep[:, None] / (1.0 - p))
    a_out = a.copy()
    dropped = edges[~edge_keep]
    a_out[dropped[:, 0], dropped[:, 1]] = 0.0
    a_out[dropped[:, 1], dropped[:, 0]] = 0.0
    return h_out, a_out, DropoutMasks(node_keep, edge_keep)


@dataclass
class BatchNormResult:
    output: np.ndarray
    new_running_mean: np.ndarray
    new_running_var: np.ndarray
    x_hat: np.ndarray
    inv_std: np.ndarray


def batch_norm(
    x: np.ndarray,
    gamma: np.ndarray,
    beta: np.ndarray,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = BN_MOMENTUM,
    eps: float = BN_EPS,
) -> BatchNormResult:
    """Per-channel batch normalization over all leading axes.

    Training mode normalizes with batch statistics (biased variance) and
    returns running stats blended with the given momentum; inference mode
    normalizes with the running statistics and leaves them unchanged.  The
    input is never mutated.
    """
    x = np.asarray(x, dtype=np.float64)
    rows = x.reshape(-1, x.shape[-1])
    if training:
        if rows.shape[0] < 2:
            raise InsufficientBatch(f"batch norm needs >= 2 rows, got {rows.shape[0]}")
        mean = rows.mean(axis=0)
        var = rows.var(axis=0)
        new_mean = (1.0 - momentum) * running_mean + momentum * mean
        new_var = (1.0 - momentum) * running_var + momentum * var
    else:
        mean = running_mean
        var = running_var
        new_mean = running_mean
        new_var = running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    x_hat = (rows - mean) * inv_std
    out = (gamma * x_hat + beta).reshape(x.shape)
    return BatchNormResult(out, new_mean, new_var, x_hat, inv_std)


@dataclass
class ForwardCache:
    """Everything the backward pass replays: inputs, pre-activations, masks,
    per-layer adjacencies, and batch-norm internals.  Built only in training
    mode; backward(cache, labels) is a pure function of its arguments."""

    x: np.ndarray
    a_hat1: np.ndarray
    a_hat2: np.ndarray
    a_hat3: np.ndarray
    u1: np.ndarray
    u2: np.ndarray
    u3: np.ndarray
    r1: np.ndarray
    r2: np.ndarray
    r3: np.ndarray
    node_keep: tuple[np.ndarray, np.ndarray, np.ndarray]
    edge_keep: tuple[np.ndarray, np.ndarray, np.ndarray]
    bn_x_hat: np.ndarray
    bn_inv_std: np.ndarray
    gamma: np.ndarray
    w2: np.ndarray
    w3: np.ndarray
    w_out: np.ndarray
    logp: np.ndarray
    alpha: float
    dropout_p: float
    new_running_mean: np.ndarray
    new_running_var: np.ndarray

    @property
    def batch_size(self) -> int:
        return self.x.shape[0]


_EDGE_INDEX = np.asarray(HAND_EDGES, dtype=np.intp)


def stack_features(batch) -> np.ndarray:
    """Stack PoseGraphs (or accept a ready array) into a (B, 21, 4) tensor."""
    if isinstance(batch, np.ndarray):
        x = np.asarray(batch, dtype=np.float64)
        if x.ndim == 2:
            x = x[None]
        return x
    return np.stack([g.node_features for g in batch]).astype(np.float64)


def _adjacency_from_survival(edge_alive: np.ndarray) -> np.ndarray:
    """Per-sample adjacency stacks from (B, E) edge-survival booleans."""
    b = edge_alive.shape[0]
    a = np.zeros((b, NUM_LANDMARKS, NUM_LANDMARKS))
    alive = edge_alive.astype(np.float64)
    a[:, _EDGE_INDEX[:, 0], _EDGE_INDEX[:, 1]] = alive
    a[:, _EDGE_INDEX[:, 1], _EDGE_INDEX[:, 0]] = alive
    return a


def _contract(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """sum_b a_b^T @ b_b over the batch, as one flat BLAS product."""
    return a.reshape(-1, a.shape[-1]).T @ b.reshape(-1, b.shape[-1])


def _matmul_t(a_hat: np.ndarray, d: np.ndarray) -> np.ndarray:
    """A_hat^T @ d for shared (n, n) or per-sample (B, n, n) adjacencies."""
    if a_hat.ndim == 2:
        return a_hat.T @ d
    return np.matmul(a_hat.transpose(0, 2, 1), d)


def model_forward(
    batch: Sequence[PoseGraph] | np.ndarray,
    params: ModelParams,
    config: ModelConfig,
    training: bool = False,
    rng: RngStream | None = None,
) -> tuple[np.ndarray, ForwardCache | None]:
    """Run the network on a batch; returns (B, 29) log-probabilities and, in
    training mode, the cache the backward pass consumes.

    Training mode with dropout_p > 0 requires an RngStream; inference mode
    consumes no randomness and is a pure function of (batch, params).
    """
    x = stack_features(batch)
    b = x.shape[0]
    if x.shape[1:] != (config.num_nodes, config.in_features):
        raise DimensionMismatch(
            f"expected (B, {config.num_nodes}, {config.in_features}), got {x.shape}"
        )
    p = config.dropout_p if training else 0.0
    if training and p > 0.0 and rng is None:
        raise ValueError("training-mode forward with dropout needs an RngStream")
    alpha = config.leaky_alpha
    a_hat_full = full_normalized_adjacency()
    n_edges = len(_EDGE_INDEX)

    def drop_site(h):
        """One dropout site: node keeps, then edge keeps, drawn per sample."""
        if p == 0.0:
            return h, np.ones((b, NUM_LANDMARKS), dtype=bool), np.ones((b, n_edges), dtype=bool)
        keep = rng.random((b, NUM_LANDMARKS)) >= p
        edge_draw = rng.random((b, n_edges)) >= p
        return h * (keep[:, :, None] / (1.0 - p)), keep, edge_draw

    s0 = x @ params.proj_w + params.proj_b

    # layer 1 always sees the full topology; dropout sites run after each layer
    u1 = a_hat_full @ (x @ params.w1 + params.b1)
    g1 = leaky_relu(u1, alpha) + s0
    d1, keep1, edge1 = drop_site(g1)
    r1 = d1 + s0

    edge_alive = edge1
    a_hat2 = (
        _normalized_adjacency_batch(_adjacency_from_survival(edge_alive))
        if p > 0.0 else a_hat_full
    )
    u2 = a_hat2 @ (r1 @ params.w2 + params.b2)
    g2 = leaky_relu(u2, alpha) + r1

    bn = batch_norm(
        g2, params.gamma, params.beta, params.running_mean, params.running_var, training
    )
    d2, keep2, edge2 = drop_site(bn.output)
    r2 = d2 + d1 + s0

    edge_alive = edge_alive & edge2
    a_hat3 = (
        _normalized_adjacency_batch(_adjacency_from_survival(edge_alive))
        if p > 0.0 else a_hat_full
    )
    u3 = a_hat3 @ (r2 @ params.w3 + params.b3)
    g3 = leaky_relu(u3, alpha) + r2
    d3, keep3, edge3 = drop_site(g3)
    r3 = d3 + d2 + d1 + s0

    logits = r3.reshape(b, -1) @ params.w_out + params.b_out
    logp = log_softmax(logits)

    if not training:
        return logp, None
    cache = ForwardCache(
        x=x, a_hat1=a_hat_full, a_hat2=a_hat2, a_hat3=a_hat3,
        u1=u1, u2=u2, u3=u3, r1=r1, r2=r2, r3=r3,
        node_keep=(keep1, keep2, keep3),
        edge_keep=(edge1, edge2, edge3),
        bn_x_hat=bn.x_hat, bn_inv_std=bn.inv_std, gamma=params.gamma.copy(),
        w2=params.w2.copy(), w3=params.w3.copy(), w_out=params.w_out.copy(),
        logp=logp, alpha=alpha, dropout_p=p,
        new_running_mean=bn.new_running_mean, new_running_var=bn.new_running_var,
    )
    return logp, cache


def nll_loss(logp: np.ndarray, labels: Sequence[int]) -> float:
    """Mean negative log-likelihood of the true classes over the batch."""
    logp = np.asarray(logp, dtype=np.float64)
    labels = np.asarray(labels)
    return float(-logp[np.arange(len(labels)), labels].mean())


def _bn_backward(dout: np.ndarray, x_hat: np.ndarray, inv_std: np.ndarray, gamma: np.ndarray):
    """Backprop through batch statistics: returns (dx, dgamma, dbeta)."""
    n = dout.shape[0]
    dgamma = (dout * x_hat).sum(axis=0)
    dbeta = dout.sum(axis=0)
    dx_hat = dout * gamma
    dx = (inv_std / n) * (
        n * dx_hat - dx_hat.sum(axis=0) - x_hat * (dx_hat * x_hat).sum(axis=0)
    )
    return dx, dgamma, dbeta


def model_backward(cache: ForwardCache, labels: Sequence[int]) -> dict[str, np.ndarray]:
    """Analytic gradients of the batch-mean NLL for every trainable tensor.

    Gradients flow through every residual branch, the recorded dropout masks
    (including the 1/(1-p) survivor scaling), and the batch statistics of the
    normalization layer.
    """
    labels = np.asarray(labels)
    b = cache.batch_size
    if labels.shape != (b,):
        raise StaleCache(f"cache holds batch of {b}, labels have shape {labels.shape}")
    keep1, keep2, keep3 = cache.node_keep
    scale = 1.0 / (1.0 - cache.dropout_p)

    probs = np.exp(cache.logp)
    dlogits = probs.copy()
    dlogits[np.arange(b), labels] -= 1.0
    dlogits /= b

    flat = cache.r3.reshape(b, -1)
    d_w_out = flat.T @ dlogits
    d_b_out = dlogits.sum(axis=0)
    dr3 = (dlogits @ cache.w_out.T).reshape(cache.r3.shape)

    # r3 = d3 + d2 + d1 + s0
    dd3 = dr3
    dd2 = dr3.copy()
    dd1 = dr3.copy()
    ds0 = dr3.copy()

    # d3 = mask3(g3); g3 = LeakyReLU(u3) + r2
    dg3 = dd3 * (keep3[:, :, None] * scale)
    dr2 = dg3.copy()
    du3 = dg3 * leaky_relu_grad(cache.u3, cache.alpha)
    dz3 = _matmul_t(cache.a_hat3, du3)
    d_w3 = _contract(cache.r2, dz3)
    d_b3 = dz3.sum(axis=(0, 1))
    dr2 += dz3 @ cache.w3.T

    # r2 = d2 + d1 + s0
    dd2 += dr2
    dd1 += dr2
    ds0 += dr2

    # d2 = mask2(BN(g2))
    dn2 = dd2 * (keep2[:, :, None] * scale)
    dg2_rows, d_gamma, d_beta = _bn_backward(
        dn2.reshape(-1, dn2.shape[-1]), cache.bn_x_hat, cache.bn_inv_std, cache.gamma
    )
    dg2 = dg2_rows.reshape(dn2.shape)

    # g2 = LeakyReLU(u2) + r1
    dr1 = dg2.copy()
    du2 = dg2 * leaky_relu_grad(cache.u2, cache.alpha)
    dz2 = _matmul_t(cache.a_hat2, du2)
    d_w2 = _contract(cache.r1, dz2)
    d_b2 = dz2.sum(axis=(0, 1))
    dr1 += dz2 @ cache.w2.T

    # r1 = d1 + s0
    dd1 += dr1
    ds0 += dr1

    # d1 = mask1(g1); g1 = LeakyReLU(u1) + s0
    dg1 = dd1 * (keep1[:, :, None] * scale)
    ds0 += dg1
    du1 = dg1 * leaky_relu_grad(cache.u1, cache.alpha)
    dz1 = cache.a_hat1.T @ du1
    d_w1 = _contract(cache.x, dz1)
    d_b1 = dz1.sum(axis=(0, 1))

    # s0 = x proj_w + proj_b
    d_proj_w = _contract(cache.x, ds0)
    d_proj_b = ds0.sum(axis=(0, 1))

    return {
        "w1": d_w1, "b1": d_b1, "w2": d_w2, "b2": d_b2, "w3": d_w3, "b3": d_b3,
        "proj_w": d_proj_w, "proj_b": d_proj_b,
        "gamma": d_gamma, "beta": d_beta,
        "w_out": d_w_out, "b_out": d_b_out,
    }
