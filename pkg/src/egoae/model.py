"""The orbit-aware network, its training loop, and a minimal sum-MPNN baseline.

Per layer, each template channel aggregates features over the per-orbit
equivalence sets (learnable orbit weights, then a small MLP), and a
squeeze-and-excitation step pools every channel into a per-channel gate
that fuses them into one embedding per node. A two-layer head produces
class logits. Everything runs in float64 with hand-written reverse-mode
gradients so the whole computation stays checkable against finite
differences.
"""

from __future__ import annotations

import itertools
import json
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .matcher import EgoAeIndex
from .templates import canonical_form, parse_template

log = logging.getLogger("egoae.model")


class NumericError(RuntimeError):
    """Non-finite values appeared inside a forward pass."""


class DivergenceError(RuntimeError):
    """Training loss became non-finite."""


@dataclass(frozen=True)
class ModelConfig:
    """Architecture plus training schedule.

    Defaults follow the standard protocol: 2 layers, grid-searchable
    embedding/dropout/L2/learning-rate, learning rate halved every 100
    epochs, at most 500 epochs with a 50-epoch early-stop window.

    With ``per_channel_history`` each template channel consumes its own
    previous-layer embedding instead of the fused one; the fused embedding
    then only feeds the classifier after the last layer.
    """

    num_layers: int = 2
    embed_dim: int = 16
    dropout: float = 0.3
    l2: float = 3e-5
    lr: float = 0.01
    lr_decay: float = 0.5
    lr_decay_every: int = 100
    max_epochs: int = 500
    patience: int = 50
    seed: int = 0
    per_channel_history: bool = False

    def __post_init__(self):
        if self.num_layers < 1:
            raise ValueError("need at least one layer")
        for name in ("embed_dim", "lr", "lr_decay", "lr_decay_every",
                     "max_epochs", "patience"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.l2 < 0.0:
            raise ValueError("l2 must be nonnegative")


def hyperparameter_grid(base: ModelConfig | None = None):
    """The 16-point tuning grid: embed {16,32} x dropout {0.3,0.5}
    x L2 {3e-5,5e-5} x lr {0.01,0.03}."""
    base = base or ModelConfig()
    for embed, drop, l2, lr in itertools.product(
            (16, 32), (0.3, 0.5), (3e-5, 5e-5), (0.01, 0.03)):
        yield replace(base, embed_dim=embed, dropout=drop, l2=l2, lr=lr)


def relu(x):
    return np.maximum(x, 0.0)


@dataclass
class Mlp:
    """One-hidden-layer perceptron; out_relu=False gives linear output."""

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    out_relu: bool = True

    def apply(self, x):
        h = relu(x @ self.W1.T + self.b1)
        z = h @ self.W2.T + self.b2
        return relu(z) if self.out_relu else z


def _uniform(rng, shape, fan_in):
    a = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-a, a, size=shape)


def _init_mlp(params, prefix, rng, in_dim, out_dim):
    params[f"{prefix}/W1"] = _uniform(rng, (out_dim, in_dim), in_dim)
    params[f"{prefix}/b1"] = _uniform(rng, (out_dim,), in_dim)
    params[f"{prefix}/W2"] = _uniform(rng, (out_dim, out_dim), out_dim)
    params[f"{prefix}/b2"] = _uniform(rng, (out_dim,), out_dim)


class GrapeModel:
    """All learnable state: per-layer per-template orbit weights and MLPs,
    per-layer SE matrices, and the classifier head.

    Orbit weights start uniform (1/m per orbit) and SE matrices start near
    the identity so early training behaves like unweighted fusion.
    """

    def __init__(self, in_dim: int, num_classes: int, orbit_counts, config: ModelConfig):
        if num_classes < 2:
            raise ValueError("need at least two classes")
        self.in_dim = in_dim
        self.num_classes = num_classes
        self.orbit_counts = tuple(int(m) for m in orbit_counts)
        self.config = config
        L = len(self.orbit_counts)
        if L < 1:
            raise ValueError("need at least one template channel")
        E = config.embed_dim
        rng = np.random.default_rng(config.seed)
        params = {}
        for k in range(config.num_layers):
            d_in = in_dim if k == 0 else E
            for l, m in enumerate(self.orbit_counts):
                params[f"beta/{k}/{l}"] = np.full(m, 1.0 / m, dtype=np.float64)
                _init_mlp(params, f"mlp/{k}/{l}", rng, d_in, E)
            params[f"se/{k}/W1"] = np.eye(L) + 0.01 * rng.standard_normal((L, L))
            params[f"se/{k}/W2"] = np.eye(L) + 0.01 * rng.standard_normal((L, L))
        params["cls/W1"] = _uniform(rng, (E, E), E)
        params["cls/b1"] = _uniform(rng, (E,), E)
        params["cls/W2"] = _uniform(rng, (num_classes, E), E)
        params["cls/b2"] = _uniform(rng, (num_classes,), E)
        self.params = params

    @property
    def num_templates(self) -> int:
        return len(self.orbit_counts)

    def weight_matrix_keys(self):
        """Parameters covered by the L2 penalty (weight matrices only)."""
        return [k for k in self.params
                if k.endswith("/W1") or k.endswith("/W2")]

    def mlp(self, layer: int, template: int, out_relu: bool = True) -> Mlp:
        p = self.params
        pre = f"mlp/{layer}/{template}"
        return Mlp(p[f"{pre}/W1"], p[f"{pre}/b1"], p[f"{pre}/W2"], p[f"{pre}/b2"], out_relu)

    def snapshot(self) -> dict:
        return {k: v.copy() for k, v in self.params.items()}

    def restore(self, snap: dict) -> None:
        for k, v in snap.items():
            self.params[k] = v.copy()


# -- forward ------------------------------------------------------------------

def aggregate_orbit_sum(h_prev: np.ndarray, index: EgoAeIndex, beta: np.ndarray):
    """Per-node weighted sum over equivalence sets: for each node v,
    sum_j beta[j] * sum_{u in ae_sets[v][j]} h_prev[u]. Empty sets contribute
    zero. The combined sparse matrix accumulates in canonical sorted order,
    so the result is bitwise reproducible for any input set ordering."""
    if len(beta) != index.partition.num_orbits:
        raise ValueError(f"beta has {len(beta)} weights for "
                         f"{index.partition.num_orbits} orbits")
    return index.weighted_matrix(beta) @ h_prev


def aggregate_ae(h_prev: np.ndarray, index: EgoAeIndex, beta, mlp: Mlp | None = None):
    """One template channel: orbit-weighted neighborhood sum, then the
    channel MLP (pass mlp=None for the identity map)."""
    S = aggregate_orbit_sum(np.asarray(h_prev, dtype=np.float64), index,
                            np.asarray(beta, dtype=np.float64))
    return mlp.apply(S) if mlp is not None else S


def se_weights(channel_embeddings, W1, W2):
    """Channel gates from global average pooling: gamma[l] is the scalar
    mean of channel l's embedding table, alpha = relu(W2 @ relu(W1 @ gamma))."""
    gamma = np.array([h.mean() for h in channel_embeddings], dtype=np.float64)
    return relu(W2 @ relu(W1 @ gamma))


def fuse(channel_embeddings, alpha):
    """Weighted channel sum: h[v] = sum_l alpha[l] * h_l[v]."""
    alpha = np.asarray(alpha, dtype=np.float64)
    if len(alpha) != len(channel_embeddings):
        raise ValueError("one gate per channel required")
    out = np.zeros_like(channel_embeddings[0])
    for a, h in zip(alpha, channel_embeddings):
        out += a * h
    return out


@dataclass
class LayerTrace:
    h_in: np.ndarray | None
    h_in_channels: list | None
    proj: list          # per channel: h_in @ W1.T, reused for orbit-weight grads
    Z1: list
    U: list
    Z2: list
    H: list
    gamma: np.ndarray
    se_p: np.ndarray
    se_q: np.ndarray
    se_r: np.ndarray
    alpha: np.ndarray
    mask: np.ndarray | None
    h_out: np.ndarray


@dataclass
class ForwardTrace:
    layers: list
    cls_Z1: np.ndarray = None
    cls_U: np.ndarray = None
    logits: np.ndarray = None
    training: bool = False
    indices: tuple = ()
    loss: float | None = None


def forward(model: GrapeModel, graph, indices, X, training: bool = False,
            rng=None) -> ForwardTrace:
    """Full forward pass; the trace keeps every intermediate needed for the
    backward pass. Dropout is applied to each layer's fused embedding during
    training only (pass the rng that draws the masks)."""
    cfg = model.config
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] != graph.num_nodes:
        raise ValueError("feature rows do not match graph nodes")
    if len(indices) != model.num_templates:
        raise ValueError(f"model has {model.num_templates} channels, "
                         f"got {len(indices)} indices")
    for l, idx in enumerate(indices):
        if idx.partition.num_orbits != model.orbit_counts[l]:
            raise ValueError(f"channel {l}: orbit count mismatch")
    if training and cfg.dropout > 0.0 and rng is None:
        raise ValueError("training forward with dropout needs an rng")

    p = model.params
    L = model.num_templates
    H = X
    channels_prev = [X] * L
    layers = []
    for k in range(cfg.num_layers):
        proj, Z1, U, Z2, Hl = [], [], [], [], []
        for l in range(L):
            h_in = channels_prev[l] if cfg.per_channel_history else H
            # aggregate-then-project re-associated as project-then-aggregate:
            # (M @ h) @ W1.T == M @ (h @ W1.T), but the sparse work runs at
            # embedding width instead of feature width
            hp = h_in @ p[f"mlp/{k}/{l}/W1"].T
            z1 = indices[l].weighted_matrix(p[f"beta/{k}/{l}"]) @ hp \
                + p[f"mlp/{k}/{l}/b1"]
            u = relu(z1)
            z2 = u @ p[f"mlp/{k}/{l}/W2"].T + p[f"mlp/{k}/{l}/b2"]
            proj.append(hp)
            Z1.append(z1)
            U.append(u)
            Z2.append(z2)
            Hl.append(relu(z2))
        gamma = np.array([h.mean() for h in Hl])
        se_p = p[f"se/{k}/W1"] @ gamma
        se_q = relu(se_p)
        se_r = p[f"se/{k}/W2"] @ se_q
        alpha = relu(se_r)
        fused = fuse(Hl, alpha)
        mask = None
        if training and cfg.dropout > 0.0:
            mask = (rng.random(fused.shape) >= cfg.dropout).astype(np.float64)
            fused = fused * mask / (1.0 - cfg.dropout)
        if not np.all(np.isfinite(fused)):
            raise NumericError(f"non-finite embedding at layer {k + 1}")
        layers.append(LayerTrace(
            h_in=None if cfg.per_channel_history else H,
            h_in_channels=list(channels_prev) if cfg.per_channel_history else None,
            proj=proj, Z1=Z1, U=U, Z2=Z2, H=Hl, gamma=gamma,
            se_p=se_p, se_q=se_q, se_r=se_r, alpha=alpha,
            mask=mask, h_out=fused))
        H = fused
        channels_prev = Hl

    cls_Z1 = H @ p["cls/W1"].T + p["cls/b1"]
    cls_U = relu(cls_Z1)
    logits = cls_U @ p["cls/W2"].T + p["cls/b2"]
    if not np.all(np.isfinite(logits)):
        raise NumericError("non-finite logits at classifier head")
    return ForwardTrace(layers=layers, cls_Z1=cls_Z1, cls_U=cls_U,
                        logits=logits, training=training, indices=tuple(indices))


# -- loss and gradients ---------------------------------------------------------

def softmax_cross_entropy(logits, labels, ids):
    """Mean softmax cross-entropy over the given node ids; also returns the
    gradient w.r.t. the full logits table."""
    ids = np.asarray(ids, dtype=np.int64)
    sel = logits[ids]
    shifted = sel - sel.max(axis=1, keepdims=True)
    expz = np.exp(shifted)
    probs = expz / expz.sum(axis=1, keepdims=True)
    y = labels[ids]
    eps = 1e-300
    ce = float(-np.mean(np.log(probs[np.arange(len(ids)), y] + eps)))
    dlogits = np.zeros_like(logits)
    g = probs.copy()
    g[np.arange(len(ids)), y] -= 1.0
    dlogits[ids] = g / len(ids)
    return ce, dlogits


def loss_and_gradients(model: GrapeModel, trace: ForwardTrace, labels, train_ids):
    """Cross-entropy over training nodes plus L2 on all weight matrices;
    gradients for every parameter by reverse-mode differentiation of the
    traced computation."""
    cfg = model.config
    p = model.params
    ce, dlogits = softmax_cross_entropy(trace.logits, labels, train_ids)
    l2_term = cfg.l2 * sum(float(np.sum(p[k] * p[k]))
                           for k in model.weight_matrix_keys())
    loss = ce + l2_term
    trace.loss = loss

    grads = {k: np.zeros_like(v) for k, v in p.items()}

    # classifier head
    h_top = trace.layers[-1].h_out
    grads["cls/W2"] = dlogits.T @ trace.cls_U
    grads["cls/b2"] = dlogits.sum(axis=0)
    dU = dlogits @ p["cls/W2"]
    dZ1 = dU * (trace.cls_Z1 > 0)
    grads["cls/W1"] = dZ1.T @ h_top
    grads["cls/b1"] = dZ1.sum(axis=0)
    dH = dZ1 @ p["cls/W1"]

    L = model.num_templates
    d_channels_next = None  # per-channel grads flowing from layer k+1 (variant mode)
    for k in reversed(range(cfg.num_layers)):
        lt = trace.layers[k]
        if lt.mask is not None:
            dF = dH * lt.mask / (1.0 - cfg.dropout)
        else:
            dF = dH

        dalpha = np.array([np.vdot(dF, lt.H[l]) for l in range(L)])
        dr = dalpha * (lt.se_r > 0)
        grads[f"se/{k}/W2"] = np.outer(dr, lt.se_q)
        dq = p[f"se/{k}/W2"].T @ dr
        dp_ = dq * (lt.se_p > 0)
        grads[f"se/{k}/W1"] = np.outer(dp_, lt.gamma)
        dgamma = p[f"se/{k}/W1"].T @ dp_

        if cfg.per_channel_history:
            d_channels_here = [None] * L
            dH_prev = None
        else:
            dH_prev = np.zeros_like(lt.h_in)
            d_channels_here = None
        for l in range(L):
            dHl = lt.alpha[l] * dF + dgamma[l] / lt.H[l].size
            if cfg.per_channel_history and d_channels_next is not None:
                dHl = dHl + d_channels_next[l]
            dZ2 = dHl * (lt.Z2[l] > 0)
            grads[f"mlp/{k}/{l}/W2"] = dZ2.T @ lt.U[l]
            grads[f"mlp/{k}/{l}/b2"] = dZ2.sum(axis=0)
            dUl = dZ2 @ p[f"mlp/{k}/{l}/W2"]
            dZ1l = dUl * (lt.Z1[l] > 0)
            grads[f"mlp/{k}/{l}/b1"] = dZ1l.sum(axis=0)

            h_in = lt.h_in_channels[l] if cfg.per_channel_history else lt.h_in
            beta = p[f"beta/{k}/{l}"]
            index = trace.indices[l]
            dbeta = np.empty_like(beta)
            for j, A in enumerate(index.orbit_matrices()):
                dbeta[j] = np.vdot(dZ1l, A @ lt.proj[l])
            grads[f"beta/{k}/{l}"] = dbeta
            # pull dZ1 back through the aggregation once, then fan out into
            # the projection weight and the layer input
            T = index.weighted_matrix(beta).T @ dZ1l
            grads[f"mlp/{k}/{l}/W1"] = T.T @ h_in
            d_in = T @ p[f"mlp/{k}/{l}/W1"]
            if cfg.per_channel_history:
                d_channels_here[l] = d_in
            else:
                dH_prev += d_in

        if cfg.per_channel_history:
            # intermediate fused embeddings feed nothing below the top layer,
            # so only the per-channel paths carry gradient downward
            d_channels_next = d_channels_here
            dH = np.zeros_like(lt.h_out)
        else:
            dH = dH_prev

    for key in model.weight_matrix_keys():
        grads[key] += 2.0 * cfg.l2 * p[key]
    return loss, grads


# -- optimizer and training loop ------------------------------------------------

class Adam:
    """Adaptive-moment estimation with bias correction."""

    def __init__(self, params, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params, grads, lr):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for k in params:
            g = grads[k]
            self.m[k] = b1 * self.m[k] + (1.0 - b1) * g
            self.v[k] = b2 * self.v[k] + (1.0 - b2) * (g * g)
            params[k] -= lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


def predict(logits):
    return np.argmax(logits, axis=1)


def accuracy(logits, labels, ids):
    ids = np.asarray(ids, dtype=np.int64)
    if len(ids) == 0:
        return 0.0
    return float(np.mean(predict(logits[ids]) == labels[ids]))


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    val_acc: float
    lr: float


@dataclass
class TrainReport:
    logs: list
    best_val_acc: float
    best_epoch: int
    test_acc: float

    @property
    def num_epochs(self) -> int:
        return len(self.logs)


def _run_training(params, fwd_train, lossgrad, eval_logits, labels, split, cfg,
                  restore):
    adam = Adam(params)
    best_val = -1.0
    best_epoch = -1
    best_snap = None
    since_improve = 0
    logs = []
    for epoch in range(1, cfg.max_epochs + 1):
        lr = cfg.lr * cfg.lr_decay ** ((epoch - 1) // cfg.lr_decay_every)
        try:
            trace = fwd_train()
            loss, grads = lossgrad(trace)
            if not np.isfinite(loss):
                raise DivergenceError(f"non-finite loss {loss} at epoch {epoch}")
            adam.step(params, grads, lr)
            val_acc = accuracy(eval_logits(), labels, split.val)
        except NumericError as exc:
            raise DivergenceError(f"{exc} (epoch {epoch})") from exc
        logs.append(EpochLog(epoch, float(loss), val_acc, lr))
        if val_acc > best_val:
            best_val = val_acc
            best_epoch = epoch
            best_snap = {k: v.copy() for k, v in params.items()}
            since_improve = 0
        else:
            since_improve += 1
            if since_improve >= cfg.patience:
                break
    if best_snap is not None:
        restore(best_snap)
    test_acc = accuracy(eval_logits(), labels, split.test)
    return TrainReport(logs=logs, best_val_acc=best_val,
                       best_epoch=best_epoch, test_acc=test_acc)


def train(model: GrapeModel, graph, indices, X, labels, split,
          config: ModelConfig | None = None) -> TrainReport:
    """Full-batch Adam training with per-100-epoch lr halving and early
    stopping on validation accuracy; restores and evaluates the
    best-validation parameters. Deterministic for a fixed seed."""
    cfg = config or model.config
    drop_rng = np.random.default_rng(cfg.seed + 0x5EED)
    labels = np.asarray(labels, dtype=np.int64)
    return _run_training(
        model.params,
        fwd_train=lambda: forward(model, graph, indices, X, training=True, rng=drop_rng),
        lossgrad=lambda t: loss_and_gradients(model, t, labels, split.train),
        eval_logits=lambda: forward(model, graph, indices, X, training=False).logits,
        labels=labels, split=split, cfg=cfg, restore=model.restore)


# -- minimal MPNN baseline -------------------------------------------------------

class MpnnModel:
    """Sum-aggregator message passer: h^k(v) = MLP(h^{k-1}(v) +
    sum_{u in N(v)} h^{k-1}(u)), shared MLP per layer, plus the same
    two-layer head. On directed graphs messages flow along edge direction
    (aggregation over in-neighbors)."""

    def __init__(self, in_dim, num_classes, config: ModelConfig):
        self.in_dim = in_dim
        self.num_classes = num_classes
        self.config = config
        E = config.embed_dim
        rng = np.random.default_rng(config.seed)
        params = {}
        for k in range(config.num_layers):
            _init_mlp(params, f"mlp/{k}", rng, in_dim if k == 0 else E, E)
        params["cls/W1"] = _uniform(rng, (E, E), E)
        params["cls/b1"] = _uniform(rng, (E,), E)
        params["cls/W2"] = _uniform(rng, (num_classes, E), E)
        params["cls/b2"] = _uniform(rng, (num_classes,), E)
        self.params = params

    def weight_matrix_keys(self):
        return [k for k in self.params if k.endswith("/W1") or k.endswith("/W2")]

    def restore(self, snap):
        for k, v in snap.items():
            self.params[k] = v.copy()


def _neighbor_sum_matrix(graph):
    from scipy.sparse import csr_matrix

    rows, cols = [], []
    for v in range(graph.num_nodes):
        ns = graph.in_neighbors(v) if graph.directed else graph.neighbors(v)
        for u in ns:
            rows.append(v)
            cols.append(u)
    data = np.ones(len(rows), dtype=np.float64)
    return csr_matrix((data, (rows, cols)), shape=(graph.num_nodes, graph.num_nodes))


@dataclass
class MpnnTrace:
    S: list
    Z1: list
    U: list
    Z2: list
    H: list
    masks: list
    cls_Z1: np.ndarray
    cls_U: np.ndarray
    logits: np.ndarray
    A: object


def mpnn_apply(model: MpnnModel, graph, X, training=False, rng=None,
               A=None) -> MpnnTrace:
    cfg = model.config
    p = model.params
    X = np.asarray(X, dtype=np.float64)
    if A is None:
        A = _neighbor_sum_matrix(graph)
    if training and cfg.dropout > 0.0 and rng is None:
        raise ValueError("training forward with dropout needs an rng")
    H = X
    S, Z1, U, Z2, Hs, masks = [], [], [], [], [], []
    for k in range(cfg.num_layers):
        s = H + A @ H
        z1 = s @ p[f"mlp/{k}/W1"].T + p[f"mlp/{k}/b1"]
        u = relu(z1)
        z2 = u @ p[f"mlp/{k}/W2"].T + p[f"mlp/{k}/b2"]
        h = relu(z2)
        mask = None
        if training and cfg.dropout > 0.0:
            mask = (rng.random(h.shape) >= cfg.dropout).astype(np.float64)
            h = h * mask / (1.0 - cfg.dropout)
        S.append(s)
        Z1.append(z1)
        U.append(u)
        Z2.append(z2)
        Hs.append(h)
        masks.append(mask)
        H = h
    cls_Z1 = H @ p["cls/W1"].T + p["cls/b1"]
    cls_U = relu(cls_Z1)
    logits = cls_U @ p["cls/W2"].T + p["cls/b2"]
    return MpnnTrace(S, Z1, U, Z2, Hs, masks, cls_Z1, cls_U, logits, A)


def mpnn_loss_and_gradients(model: MpnnModel, trace: MpnnTrace, labels, train_ids):
    cfg = model.config
    p = model.params
    ce, dlogits = softmax_cross_entropy(trace.logits, labels, train_ids)
    l2_term = cfg.l2 * sum(float(np.sum(p[k] * p[k]))
                           for k in model.weight_matrix_keys())
    loss = ce + l2_term
    grads = {k: np.zeros_like(v) for k, v in p.items()}
    h_top = trace.H[-1]
    grads["cls/W2"] = dlogits.T @ trace.cls_U
    grads["cls/b2"] = dlogits.sum(axis=0)
    dU = dlogits @ p["cls/W2"]
    dZ1 = dU * (trace.cls_Z1 > 0)
    grads["cls/W1"] = dZ1.T @ h_top
    grads["cls/b1"] = dZ1.sum(axis=0)
    dH = dZ1 @ p["cls/W1"]
    A = trace.A
    for k in reversed(range(cfg.num_layers)):
        if trace.masks[k] is not None:
            dH = dH * trace.masks[k] / (1.0 - cfg.dropout)
        dZ2 = dH * (trace.Z2[k] > 0)
        grads[f"mlp/{k}/W2"] = dZ2.T @ trace.U[k]
        grads[f"mlp/{k}/b2"] = dZ2.sum(axis=0)
        dUk = dZ2 @ p[f"mlp/{k}/W2"]
        dZ1k = dUk * (trace.Z1[k] > 0)
        grads[f"mlp/{k}/W1"] = dZ1k.T @ trace.S[k]
        grads[f"mlp/{k}/b1"] = dZ1k.sum(axis=0)
        dS = dZ1k @ p[f"mlp/{k}/W1"]
        dH = dS + A.T @ dS
    for key in model.weight_matrix_keys():
        grads[key] += 2.0 * cfg.l2 * p[key]
    return loss, grads


def train_mpnn(model: MpnnModel, graph, X, labels, split,
               config: ModelConfig | None = None) -> TrainReport:
    cfg = config or model.config
    drop_rng = np.random.default_rng(cfg.seed + 0x5EED)
    labels = np.asarray(labels, dtype=np.int64)
    A = _neighbor_sum_matrix(graph)
    return _run_training(
        model.params,
        fwd_train=lambda: mpnn_apply(model, graph, X, training=True, rng=drop_rng, A=A),
        lossgrad=lambda t: mpnn_loss_and_gradients(model, t, labels, split.train),
        eval_logits=lambda: mpnn_apply(model, graph, X, training=False, A=A).logits,
        labels=labels, split=split, cfg=cfg, restore=model.restore)


def mpnn_forward(graph, X, layers: int, embed_dim: int = 16, seed: int = 0,
                 return_all: bool = False):
    """Seeded fresh MPNN stack applied to the features: returns the final
    node-embedding table, or all per-layer tables with return_all=True."""
    cfg = ModelConfig(num_layers=layers, embed_dim=embed_dim, dropout=0.0, seed=seed)
    model = MpnnModel(in_dim=np.asarray(X).shape[1], num_classes=2, config=cfg)
    trace = mpnn_apply(model, graph, X, training=False)
    return trace.H if return_all else trace.H[-1]


# -- checkpointing ----------------------------------------------------------------

def save_checkpoint(path, model: GrapeModel, templates) -> None:
    """Single .npz with all parameter tensors plus JSON metadata: the config,
    the template list and each template's canonical form."""
    meta = {
        "config": {
            "num_layers": model.config.num_layers,
            "embed_dim": model.config.embed_dim,
            "dropout": model.config.dropout,
            "l2": model.config.l2,
            "lr": model.config.lr,
            "lr_decay": model.config.lr_decay,
            "lr_decay_every": model.config.lr_decay_every,
            "max_epochs": model.config.max_epochs,
            "patience": model.config.patience,
            "seed": model.config.seed,
            "per_channel_history": model.config.per_channel_history,
        },
        "in_dim": model.in_dim,
        "num_classes": model.num_classes,
        "orbit_counts": list(model.orbit_counts),
        "templates": [t.to_json_dict() for t in templates],
        "canonical_forms": [canonical_form(t).hex() for t in templates],
    }
    arrays = {f"param:{k}": v for k, v in model.params.items()}
    np.savez(path, __meta__=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8),
             **arrays)


def load_checkpoint(path):
    """Inverse of save_checkpoint: returns (model, templates)."""
    with np.load(path) as data:
        meta = json.loads(bytes(data["__meta__"]).decode())
        params = {k[len("param:"):]: data[k] for k in data.files
                  if k.startswith("param:")}
    cfg = ModelConfig(**meta["config"])
    model = GrapeModel(meta["in_dim"], meta["num_classes"],
                       meta["orbit_counts"], cfg)
    for k in model.params:
        model.params[k] = params[k].astype(np.float64)
    templates = [parse_template(t) for t in meta["templates"]]
    return model, templates
