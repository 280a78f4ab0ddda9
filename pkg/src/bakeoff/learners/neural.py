"""Differentiable learners trained with Adam: soft oblivious trees and an MLP.

Both networks expose the same three functions (init, forward, backward) over
a flat ``name -> ndarray`` parameter dict, so gradients can be checked
against finite differences and the best epoch restored by copying the dict.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, softmax

from ..data import Dataset
from ..metrics import task_loss
from .base import (
    HyperparameterError,
    TargetScaler,
    check_hyperparameters,
    encode_dense,
    head_loss,
    head_predictions,
    output_dim,
    prior_scores,
)
from .training import Adam, DivergenceError, train_iterative

__all__ = [
    "SOFT_ODT_DEFAULTS",
    "MLP_DEFAULTS",
    "SoftODTNet",
    "MLPNet",
    "NeuralModel",
    "fit_soft_odt",
    "fit_mlp",
    "leaf_bits",
    "hard_odt_output",
]

SOFT_ODT_DEFAULTS = {
    "num_layers": 1,
    "tree_count": 16,
    "tree_depth": 4,
    "tree_output_dim": 1,
    "learning_rate": 1e-2,
    "batch_size": 512,
}
MLP_DEFAULTS = {
    "hidden_size": 64,
    "num_layers": 2,
    "learning_rate": 1e-3,
    "batch_size": 512,
}


def leaf_bits(depth: int) -> np.ndarray:
    """``(2**depth, depth)`` table; bit ``d`` of leaf ``i`` is the branch taken at level ``d``."""
    i = np.arange(2**depth)[:, None]
    shift = depth - 1 - np.arange(depth)[None, :]
    return ((i >> shift) & 1).astype(np.float64)


def odt_layer_forward(X, logits, thresholds, responses, tau):
    """One layer of soft oblivious trees.

    Each tree picks a feature per level by a temperature softmax over
    ``logits``, routes right with probability ``sigmoid((x_f - b) / tau)``, and
    outputs the routing-weighted mean of its leaf responses. Leaf
    probabilities are built level by level, so leaf ``i`` has the level-0
    branch as its most significant bit.
    """
    T, D, _ = logits.shape
    S = softmax(logits / tau, axis=-1)
    f = np.einsum("nf,tdf->ntd", X, S)
    c = expit((f - thresholds) / tau)
    levels = [np.ones(X.shape[:1] + (T, 1))]
    for d in range(D):
        prev = levels[-1]
        cd = c[:, :, d : d + 1]
        nxt = np.empty(prev.shape[:2] + (2 * prev.shape[2],))
        nxt[:, :, 0::2] = prev * (1.0 - cd)
        nxt[:, :, 1::2] = prev * cd
        levels.append(nxt)
    P = levels[-1]
    Y = np.einsum("nti,tio->nto", P, responses)
    return Y, (X, S, c, levels)


def odt_layer_backward(dY, cache, logits, responses, tau):
    X, S, c, levels = cache
    P = levels[-1]
    D = c.shape[2]
    dR = np.einsum("nti,nto->tio", P, dY)
    dP = np.einsum("nto,tio->nti", dY, responses)
    dc = np.empty_like(c)
    for d in reversed(range(D)):
        prev = levels[d]
        d_left, d_right = dP[:, :, 0::2], dP[:, :, 1::2]
        dc[:, :, d] = np.sum(prev * (d_right - d_left), axis=2)
        cd = c[:, :, d : d + 1]
        dP = d_left * (1.0 - cd) + d_right * cd
    dz = dc * c * (1.0 - c)
    df = dz / tau
    db = -df.sum(axis=0)
    dS = np.einsum("ntd,nf->tdf", df, X)
    dX = np.einsum("ntd,tdf->nf", df, S)
    dlogits = S * (dS - np.sum(dS * S, axis=-1, keepdims=True)) / tau
    return dX, dlogits, db, dR


def hard_odt_output(X, logits, thresholds, responses) -> np.ndarray:
    """Zero-temperature limit: argmax feature per level, hard comparison."""
    T, D, _ = logits.shape
    feat = np.argmax(logits, axis=-1)
    out = np.empty((X.shape[0], T, responses.shape[-1]))
    weights = 2 ** (D - 1 - np.arange(D))
    for t in range(T):
        bits = (X[:, feat[t]] > thresholds[t]).astype(np.int64)
        out[:, t] = responses[t, bits @ weights]
    return out


class SoftODTNet:
    """Stack of soft oblivious-tree layers with dense connections.

    Layer ``l`` sees the inputs concatenated with every earlier layer's tree
    outputs; a linear head maps all tree outputs to logits (or a scalar).
    """

    def __init__(self, n_in, n_out, num_layers, trees_per_layer, depth, tree_output_dim, tau=1.0):
        self.n_in = n_in
        self.n_out = n_out
        self.num_layers = num_layers
        self.trees = trees_per_layer
        self.depth = depth
        self.tree_dim = tree_output_dim
        self.tau = tau

    def layer_width(self, layer):
        return self.n_in + layer * self.trees * self.tree_dim

    def init_params(self, rng, X, bias):
        params = {}
        inp = X
        for l in range(self.num_layers):
            F = self.layer_width(l)
            logits = rng.normal(0.0, 1.0, (self.trees, self.depth, F))
            S = softmax(logits / self.tau, axis=-1)
            f = np.einsum("nf,tdf->ntd", inp, S)
            q = rng.uniform(0.0, 1.0, (self.trees, self.depth))
            thresholds = np.empty((self.trees, self.depth))
            for t in range(self.trees):
                for d in range(self.depth):
                    thresholds[t, d] = np.quantile(f[:, t, d], q[t, d])
            params[f"layer{l}.logits"] = logits
            params[f"layer{l}.thresholds"] = thresholds
            params[f"layer{l}.responses"] = np.zeros((self.trees, 2**self.depth, self.tree_dim))
            # zero responses: deeper layers see constant extra inputs at init
            inp = np.hstack([inp, np.zeros((inp.shape[0], self.trees * self.tree_dim))])
        fan_in = self.num_layers * self.trees * self.tree_dim
        params["head.W"] = rng.normal(0.0, 1.0 / np.sqrt(fan_in), (fan_in, self.n_out))
        params["head.b"] = np.array(bias, dtype=np.float64)
        return params

    def forward(self, params, X):
        n = X.shape[0]
        inp = X
        caches, outs = [], []
        for l in range(self.num_layers):
            Y, cache = odt_layer_forward(
                inp, params[f"layer{l}.logits"], params[f"layer{l}.thresholds"], params[f"layer{l}.responses"], self.tau
            )
            flat = Y.reshape(n, -1)
            caches.append(cache)
            outs.append(flat)
            inp = np.hstack([inp, flat])
        H = np.hstack(outs)
        out = H @ params["head.W"] + params["head.b"]
        return out, (caches, H)

    def backward(self, params, cache, dout):
        caches, H = cache
        n = dout.shape[0]
        grads = {"head.W": H.T @ dout, "head.b": dout.sum(axis=0)}
        width = self.trees * self.tree_dim
        dH = dout @ params["head.W"].T
        gY = [dH[:, l * width : (l + 1) * width].copy() for l in range(self.num_layers)]
        for l in reversed(range(self.num_layers)):
            dY = gY[l].reshape(n, self.trees, self.tree_dim)
            dX, dlog, db, dR = odt_layer_backward(
                dY, caches[l], params[f"layer{l}.logits"], params[f"layer{l}.responses"], self.tau
            )
            grads[f"layer{l}.logits"] = dlog
            grads[f"layer{l}.thresholds"] = db
            grads[f"layer{l}.responses"] = dR
            for j in range(l):
                start = self.n_in + j * width
                gY[j] += dX[:, start : start + width]
        return grads


class MLPNet:
    """Fully connected ReLU network with a linear output layer."""

    def __init__(self, n_in, n_out, hidden_size, num_layers, activation="relu"):
        if activation not in ("relu", "tanh"):
            raise HyperparameterError(f"unknown activation {activation!r}")
        self.sizes = [n_in] + [hidden_size] * num_layers + [n_out]
        self.activation = activation

    @property
    def n_layers(self):
        return len(self.sizes) - 1

    def init_params(self, rng, X, bias):
        params = {}
        for i in range(self.n_layers):
            fan_in, fan_out = self.sizes[i], self.sizes[i + 1]
            scale = np.sqrt(2.0 / fan_in) if i < self.n_layers - 1 else np.sqrt(1.0 / fan_in)
            params[f"W{i}"] = rng.normal(0.0, scale, (fan_in, fan_out))
            params[f"b{i}"] = np.zeros(fan_out)
        params[f"b{self.n_layers - 1}"] = np.array(bias, dtype=np.float64)
        return params

    def _act(self, z):
        return np.maximum(z, 0.0) if self.activation == "relu" else np.tanh(z)

    def _dact(self, z, a):
        return (z > 0).astype(np.float64) if self.activation == "relu" else 1.0 - a * a

    def forward(self, params, X):
        acts, pre = [X], []
        h = X
        for i in range(self.n_layers):
            z = h @ params[f"W{i}"] + params[f"b{i}"]
            pre.append(z)
            h = self._act(z) if i < self.n_layers - 1 else z
            acts.append(h)
        return h, (acts, pre)

    def backward(self, params, cache, dout):
        acts, pre = cache
        grads = {}
        d = dout
        for i in reversed(range(self.n_layers)):
            grads[f"W{i}"] = acts[i].T @ d
            grads[f"b{i}"] = d.sum(axis=0)
            if i:
                d = (d @ params[f"W{i}"].T) * self._dact(pre[i - 1], acts[i])
        return grads


@dataclass(frozen=True)
class NeuralModel:
    """Fitted soft-ODT or MLP; ``predict`` returns probabilities or scalars."""

    kind: str
    net: object
    params: dict
    task: str
    n_classes: int
    feature_meta: tuple
    target_mean: float = 0.0
    target_std: float = 1.0
    hyperparameters: dict = field(default_factory=dict)
    best_epoch: int = 0
    reached_max_epochs: bool = False
    val_losses: tuple[float, ...] = ()

    @property
    def n_features(self) -> int:
        return len(self.feature_meta)

    def predict(self, data) -> np.ndarray:
        X = encode_dense(data, self.feature_meta, self.n_features)
        out, _ = self.net.forward(self.params, X)
        preds = head_predictions(out, self.task)
        if self.task == "regression":
            preds = preds * self.target_std + self.target_mean
        return preds


def _fit_network(kind, net, train, val, hp, seed, patience, max_epochs, epochs=None):
    rng = np.random.default_rng(seed)
    X = encode_dense(train, train.feature_meta, train.n_features)
    scaler = TargetScaler(train.target, train.task)
    y = scaler.forward(train.target)
    bias = prior_scores(y, train.task, train.n_classes)
    if train.task == "regression":
        bias = np.zeros(1)
    params = net.init_params(rng, X, bias)
    opt = Adam(params, lr=float(hp["learning_rate"]))
    batch = max(1, min(int(hp["batch_size"]), X.shape[0]))

    def run_epoch(epoch):
        perm = rng.permutation(X.shape[0])
        for start in range(0, X.shape[0], batch):
            idx = perm[start : start + batch]
            out, cache = net.forward(params, X[idx])
            loss, dout = head_loss(out, y[idx], train.task)
            if not np.isfinite(loss):
                raise DivergenceError(f"training loss became {loss} in epoch {epoch}")
            opt.step(net.backward(params, cache, dout))

    def model_from(p, result=None):
        return NeuralModel(
            kind, net, p, train.task, train.n_classes, train.feature_meta, scaler.mean, scaler.std, dict(hp),
            result.best_epoch if result else 0,
            result.reached_max_epochs if result else False,
            tuple(result.losses) if result else (),
        )

    if val is None:
        # fixed-length training (e.g. retraining on train+val with a known epoch count)
        n_epochs = int(epochs or max_epochs)
        for epoch in range(1, n_epochs + 1):
            run_epoch(epoch)
        return model_from({k: v.copy() for k, v in params.items()})

    Xv = encode_dense(val, train.feature_meta, train.n_features)

    def validate():
        out, _ = net.forward(params, Xv)
        return task_loss(scaler.inverse(head_predictions(out, val.task)), val.target, val.task)

    result = train_iterative(params, run_epoch, validate, patience=patience, max_epochs=max_epochs)
    return model_from(result.params, result)


def fit_soft_odt(train: Dataset, val: Dataset | None, hp: dict, seed: int = 0, patience: int = 100,
                 max_epochs: int = 1000, epochs: int | None = None, tau: float = 1.0) -> NeuralModel:
    if train.n_samples == 0:
        raise ValueError("empty training set")
    hp = check_hyperparameters(hp, SOFT_ODT_DEFAULTS, "soft_odt")
    for k in ("num_layers", "tree_count", "tree_depth", "tree_output_dim", "batch_size"):
        hp[k] = int(round(hp[k]))
    if tau <= 0:
        raise HyperparameterError("temperature must be positive")
    n_in = encode_dense(train.take([0]), train.feature_meta, train.n_features).shape[1]
    net = SoftODTNet(
        n_in, output_dim(train.task, train.n_classes), hp["num_layers"],
        max(1, hp["tree_count"] // hp["num_layers"]), hp["tree_depth"], hp["tree_output_dim"], tau,
    )
    return _fit_network("soft_odt", net, train, val, hp, seed, patience, max_epochs, epochs)


def fit_mlp(train: Dataset, val: Dataset | None, hp: dict, seed: int = 0, patience: int = 100,
            max_epochs: int = 1000, epochs: int | None = None, activation: str = "relu") -> NeuralModel:
    if train.n_samples == 0:
        raise ValueError("empty training set")
    hp = check_hyperparameters(hp, MLP_DEFAULTS, "mlp")
    for k in ("hidden_size", "num_layers", "batch_size"):
        hp[k] = int(round(hp[k]))
    n_in = encode_dense(train.take([0]), train.feature_meta, train.n_features).shape[1]
    net = MLPNet(n_in, output_dim(train.task, train.n_classes), hp["hidden_size"], hp["num_layers"], activation)
    return _fit_network("mlp", net, train, val, hp, seed, patience, max_epochs, epochs)
