"""Shallow mapping network from class-name embeddings to visual feature space,
with hand-derived gradients and Adam updates (no autodiff framework).

Architecture: linear -> ReLU -> batch norm -> hidden linear, per the stated
layer order; `relu_before_norm=False` swaps to linear -> batch norm -> ReLU.
The batch for normalization is the episode's class-name embeddings. Training
minimizes the mean softmax cross-entropy of the combined visual + textual
score over an episode's queries.

The batch-norm epsilon is 1e-12 rather than the usual 1e-5 so normalized
activations have unit batch variance to much better than 1e-6.
"""

from dataclasses import dataclass, field
from pathlib import Path

import json
import numpy as np

from .errors import DataError, FormatError, NumericalError
from .data import load_matrix, write_matrix
from .prototypes import episode_prototypes
from .scoring import NORM_FLOOR, softmax_ce

BN_EPS = 1e-12

PARAM_NAMES = ("w1", "b1", "gamma", "beta", "w2", "b2")


@dataclass
class MapNet:
    w1: np.ndarray  # (m_t, hidden)
    b1: np.ndarray  # (hidden,)
    gamma: np.ndarray  # (hidden,)
    beta: np.ndarray  # (hidden,)
    running_mean: np.ndarray  # (hidden,)
    running_var: np.ndarray  # (hidden,)
    w2: np.ndarray  # (hidden, m_v)
    b2: np.ndarray  # (m_v,)
    mode: str = "train"
    bn_momentum: float = 0.1
    relu_before_norm: bool = True

    def __post_init__(self):
        if self.mode not in ("train", "eval"):
            raise DataError(f"mode must be train or eval, got {self.mode!r}")
        if np.any(self.running_var < 0):
            raise DataError("running variance must be non-negative")
        for name in PARAM_NAMES + ("running_mean", "running_var"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise DataError(f"parameter {name} contains non-finite values")

    @property
    def m_t(self):
        return self.w1.shape[0]

    @property
    def hidden(self):
        return self.w1.shape[1]

    @property
    def m_v(self):
        return self.w2.shape[1]

    def params(self):
        return {name: getattr(self, name) for name in PARAM_NAMES}


def init_mapnet(m_t, m_v, hidden=512, seed=0, relu_before_norm=True):
    """Fresh network; weights uniform in +-1/sqrt(fan_in), biases zero."""
    rng = np.random.default_rng(seed)
    lim1 = 1.0 / np.sqrt(m_t)
    lim2 = 1.0 / np.sqrt(hidden)
    return MapNet(
        w1=rng.uniform(-lim1, lim1, size=(m_t, hidden)),
        b1=np.zeros(hidden),
        gamma=np.ones(hidden),
        beta=np.zeros(hidden),
        running_mean=np.zeros(hidden),
        running_var=np.ones(hidden),
        w2=rng.uniform(-lim2, lim2, size=(hidden, m_v)),
        b2=np.zeros(m_v),
        relu_before_norm=relu_before_norm,
    )


def _forward(net, x):
    """Forward pass without side effects; returns (output, cache)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != net.m_t:
        raise DataError(f"input must be (batch, {net.m_t}), got {x.shape}")
    n = x.shape[0]
    training = net.mode == "train"
    if training and n < 2:
        raise DataError("batch norm needs a batch of at least 2 in train mode")
    if n < 1:
        raise DataError("empty batch")

    h1 = x @ net.w1 + net.b1
    cache = {"x": x, "h1": h1, "n": n, "training": training}

    def normalize(pre):
        if training:
            mu = pre.mean(axis=0)
            var = pre.var(axis=0)
        else:
            mu = net.running_mean
            var = net.running_var
        ivar = 1.0 / np.sqrt(var + BN_EPS)
        xhat = (pre - mu) * ivar
        cache.update(mu=mu, var=var, ivar=ivar, xhat=xhat)
        return net.gamma * xhat + net.beta

    if net.relu_before_norm:
        act = np.maximum(h1, 0.0)
        z = normalize(act)
        cache["bn_out"] = z
        out = z @ net.w2 + net.b2
    else:
        z = normalize(h1)
        act = np.maximum(z, 0.0)
        cache["z"] = z
        cache["act"] = act
        out = act @ net.w2 + net.b2
    return out, cache


def _commit_running_stats(net, cache):
    n = cache["n"]
    mom = net.bn_momentum
    unbiased = cache["var"] * (n / (n - 1)) if n > 1 else cache["var"]
    net.running_mean = (1 - mom) * net.running_mean + mom * cache["mu"]
    net.running_var = (1 - mom) * net.running_var + mom * unbiased


def forward(net, x):
    """Map a batch of class-name embeddings to visual space.

    Train mode normalizes with batch statistics and folds them into the
    running statistics; eval mode uses the stored running statistics and
    leaves the network untouched.
    """
    out, cache = _forward(net, x)
    if cache["training"]:
        _commit_running_stats(net, cache)
    return out


def _bn_backward(dxhat, cache):
    n = cache["n"]
    xhat = cache["xhat"]
    ivar = cache["ivar"]
    return (ivar / n) * (
        n * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0)
    )


def _backward(net, cache, dout):
    """Gradients of all parameters given d(loss)/d(output)."""
    grads = {}
    if net.relu_before_norm:
        z = cache["bn_out"]
        grads["w2"] = z.T @ dout
        grads["b2"] = dout.sum(axis=0)
        dz = dout @ net.w2.T
        grads["gamma"] = (dz * cache["xhat"]).sum(axis=0)
        grads["beta"] = dz.sum(axis=0)
        dact = _bn_backward(dz * net.gamma, cache)
        dh1 = dact * (cache["h1"] > 0)
    else:
        act = cache["act"]
        grads["w2"] = act.T @ dout
        grads["b2"] = dout.sum(axis=0)
        dact = dout @ net.w2.T
        dz = dact * (cache["z"] > 0)
        grads["gamma"] = (dz * cache["xhat"]).sum(axis=0)
        grads["beta"] = dz.sum(axis=0)
        dh1 = _bn_backward(dz * net.gamma, cache)
    grads["w1"] = cache["x"].T @ dh1
    grads["b1"] = dh1.sum(axis=0)
    return grads


def episode_loss_and_grads(net, queries, true_indices, protos, names, lam):
    """Mean cross-entropy of the combined score over queries, with gradients.

    Pure: running statistics are not touched. Returns (loss, grads, cache) so
    the caller can commit the batch statistics after a successful step.
    """
    queries = np.asarray(queries, dtype=np.float64)
    mapped, cache = _forward(net, names)
    n_classes = mapped.shape[0]
    n_q = queries.shape[0]

    diffs = queries[:, None, :] - protos.matrix[None, :, :]
    visual = -np.einsum("qcj,qcj->qc", diffs, diffs)

    q_norms = np.linalg.norm(queries, axis=1)
    y_norms = np.linalg.norm(mapped, axis=1)
    q_ok = q_norms >= NORM_FLOOR
    y_ok = y_norms >= NORM_FLOOR
    safe_q = np.where(q_ok, q_norms, 1.0)
    safe_y = np.where(y_ok, y_norms, 1.0)
    cos = (queries @ mapped.T) / (safe_q[:, None] * safe_y[None, :])
    cos *= q_ok[:, None] & y_ok[None, :]

    scores = visual + lam * cos

    dscores = np.empty_like(scores)
    total = 0.0
    for j in range(n_q):
        probs, loss_j = softmax_ce(scores[j], true_indices[j])
        total += loss_j
        dscores[j] = probs
        dscores[j, true_indices[j]] -= 1.0
    loss = total / n_q
    dscores /= n_q

    # d cos(q, y)/dy = q/(|q||y|) - cos * y/|y|^2, zero at the norm floor
    weights = dscores * (q_ok[:, None] & y_ok[None, :])
    term1 = (weights / safe_q[:, None]).T @ queries / safe_y[:, None]
    term2 = ((weights * cos).sum(axis=0) / safe_y**2)[:, None] * mapped
    dmapped = lam * (term1 - term2)

    grads = _backward(net, cache, dmapped)
    return loss, grads, cache


@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def init_adam(net, lr=1e-4, beta1=0.9, beta2=0.999, epsilon=1e-8):
    state = AdamState(lr=lr, beta1=beta1, beta2=beta2, epsilon=epsilon)
    for name, param in net.params().items():
        state.m[name] = np.zeros_like(param)
        state.v[name] = np.zeros_like(param)
    return state


def adam_update(adam, net, grads):
    adam.step += 1
    bc1 = 1.0 - adam.beta1**adam.step
    bc2 = 1.0 - adam.beta2**adam.step
    for name, param in net.params().items():
        g = grads[name]
        adam.m[name] = adam.beta1 * adam.m[name] + (1 - adam.beta1) * g
        adam.v[name] = adam.beta2 * adam.v[name] + (1 - adam.beta2) * g * g
        step = adam.lr * (adam.m[name] / bc1) / (np.sqrt(adam.v[name] / bc2) + adam.epsilon)
        param -= step


def train_step(net, episode, store, names_table, lam, adam):
    """One optimization step on one episode; returns the pre-update loss."""
    protos = episode_prototypes(episode.support, store)
    names = names_table.rows(protos.classes)
    class_index = {c: i for i, c in enumerate(protos.classes)}
    queries = np.stack([store.feature(image_id) for image_id, _ in episode.query])
    true_indices = [class_index[cls] for _, cls in episode.query]

    loss, grads, cache = episode_loss_and_grads(
        net, queries, true_indices, protos, names, lam
    )
    if not np.isfinite(loss):
        raise NumericalError(f"training diverged: loss={loss}")
    _commit_running_stats(net, cache)
    adam_update(adam, net, grads)
    return loss


def train(net, store, names_table, classes, adam, *, episodes, n_way, k_shot,
          n_query, lam, seed, log_interval=100):
    """Episode-based training loop; deterministic under the master seed.

    Returns (net, curve) where curve lists (episode index, loss) every
    `log_interval` steps plus the final step.
    """
    from .episodes import episode_rng, sample_episode

    if not classes:
        raise DataError("no classes to train on")
    curve = []
    for i in range(episodes):
        rng = episode_rng(seed, i)
        episode = sample_episode(classes, store, n_way, k_shot, n_query, rng)
        loss = train_step(net, episode, store, names_table, lam, adam)
        if i % log_interval == 0 or i == episodes - 1:
            curve.append((i, loss))
    return net, curve


def save_mapnet(net, directory, adam=None):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    meta = {
        "m_t": net.m_t,
        "hidden": net.hidden,
        "m_v": net.m_v,
        "mode": net.mode,
        "bn_momentum": net.bn_momentum,
        "relu_before_norm": net.relu_before_norm,
    }
    if adam is not None:
        meta["optimizer"] = {
            "lr": adam.lr,
            "beta1": adam.beta1,
            "beta2": adam.beta2,
            "epsilon": adam.epsilon,
            "step": adam.step,
        }
    (directory / "meta.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    for name in PARAM_NAMES + ("running_mean", "running_var"):
        write_matrix(np.atleast_2d(getattr(net, name)), directory / f"{name}.cmm")


def load_mapnet(directory):
    directory = Path(directory)
    try:
        meta = json.loads((directory / "meta.json").read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise FormatError(f"{directory}: missing meta.json") from None
    except json.JSONDecodeError as e:
        raise FormatError(f"{directory}/meta.json: invalid JSON: {e}") from None
    tensors = {}
    for name in PARAM_NAMES + ("running_mean", "running_var"):
        value = load_matrix(directory / f"{name}.cmm")
        tensors[name] = value if name in ("w1", "w2") else value.reshape(-1)
    net = MapNet(
        mode=meta["mode"],
        bn_momentum=meta["bn_momentum"],
        relu_before_norm=meta["relu_before_norm"],
        **tensors,
    )
    if (net.m_t, net.hidden, net.m_v) != (meta["m_t"], meta["hidden"], meta["m_v"]):
        raise FormatError(f"{directory}: tensor shapes disagree with meta.json")
    return net
