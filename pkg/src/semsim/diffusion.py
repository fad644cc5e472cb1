"""Conditional denoising diffusion at desk scale.

Implements the full DDPM chain (variance schedule, forward process, posterior,
simplified epsilon loss, ancestral sampling) plus classifier-free guidance,
with a small fully connected noise predictor whose gradients are written by
hand so they can be checked against finite differences. Data is low
dimensional; the math is the same as at image scale.
"""

from __future__ import annotations

import hashlib
import struct
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

TIME_EMBED_DIM = 8


class UntrainedBranchWarning(UserWarning):
    """Guided sampling requested from a net whose null branch never trained."""

_PARAMS_HEADER = struct.Struct("<4sHHHHHHB8sQ")
_PARAMS_MAGIC = b"EPSP"
_PARAMS_VERSION = 1
_FLAG_UNCOND_TRAINED = 0x01


@dataclass(frozen=True, eq=False)
class VarianceSchedule:
    """Per-step variances and their cumulative products.

    ``alpha_bars[n-1]`` is the product of (1 - beta) over steps 1..n; the
    convention alpha_bar(0) = 1 makes the posterior variance at the final
    denoising step exactly zero.
    """

    betas: np.ndarray
    alpha_bars: np.ndarray

    def __post_init__(self) -> None:
        betas = np.asarray(self.betas, dtype=float)
        abars = np.asarray(self.alpha_bars, dtype=float)
        if betas.ndim != 1 or betas.size == 0:
            raise ValueError("betas must be a non-empty 1-D array")
        if np.any(betas <= 0.0) or np.any(betas >= 1.0):
            raise ValueError("betas must lie strictly inside (0, 1)")
        if abars.shape != betas.shape:
            raise ValueError("alpha_bars must match betas in shape")
        recomputed = np.cumprod(1.0 - betas)
        if np.max(np.abs(recomputed - abars)) > 1e-12:
            raise ValueError("alpha_bars inconsistent with betas beyond 1e-12")
        if np.any(np.diff(abars) >= 0.0):
            raise ValueError("alpha_bars must be strictly decreasing")
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "alpha_bars", abars)

    @property
    def n_steps(self) -> int:
        return self.betas.size

    def alpha_bar(self, n) -> np.ndarray:
        """alpha_bar at step(s) n with the alpha_bar(0) = 1 convention."""
        n = np.asarray(n)
        if np.any(n < 0) or np.any(n > self.n_steps):
            raise ValueError(f"step out of range 0..{self.n_steps}")
        padded = np.concatenate(([1.0], self.alpha_bars))
        return padded[n]

    def hash_bytes(self) -> bytes:
        """Stable 8-byte digest of the schedule, for serialized headers."""
        return hashlib.sha256(self.betas.astype("<f8").tobytes()).digest()[:8]


def linear_schedule(n_steps: int, beta_min: float = 1e-4, beta_max: float = 2e-2) -> VarianceSchedule:
    """Variance schedule with beta interpolated linearly over the steps."""
    if n_steps < 1:
        raise ValueError(f"n_steps must be >= 1, got {n_steps}")
    if not (0.0 < beta_min <= beta_max < 1.0):
        raise ValueError(f"need 0 < beta_min <= beta_max < 1, got ({beta_min}, {beta_max})")
    betas = np.linspace(beta_min, beta_max, n_steps)
    return VarianceSchedule(betas=betas, alpha_bars=np.cumprod(1.0 - betas))


def _check_step(n: int, sched: VarianceSchedule) -> None:
    if not 1 <= n <= sched.n_steps:
        raise ValueError(f"step {n} outside 1..{sched.n_steps}")


def forward_marginal(x0: np.ndarray, n, eps: np.ndarray, sched: VarianceSchedule) -> np.ndarray:
    """Jump straight to step n: sqrt(abar_n) x0 + sqrt(1 - abar_n) eps.

    ``n`` may be a scalar or a per-row array matching the batch dimension.
    """
    x0 = np.asarray(x0, dtype=float)
    eps = np.asarray(eps, dtype=float)
    if eps.shape != x0.shape:
        raise ValueError("eps must match x0 in shape")
    n_arr = np.asarray(n)
    if np.any(n_arr < 1) or np.any(n_arr > sched.n_steps):
        raise ValueError(f"step outside 1..{sched.n_steps}")
    abar = sched.alpha_bar(n_arr)
    if x0.ndim == 2 and n_arr.ndim == 1:
        abar = abar[:, None]
    return np.sqrt(abar) * x0 + np.sqrt(1.0 - abar) * eps


def forward_step(x_prev: np.ndarray, n: int, sched: VarianceSchedule, rng: np.random.Generator) -> np.ndarray:
    """One forward kernel draw: N(sqrt(1 - beta_n) x_{n-1}, beta_n I)."""
    _check_step(n, sched)
    x_prev = np.asarray(x_prev, dtype=float)
    beta = sched.betas[n - 1]
    return np.sqrt(1.0 - beta) * x_prev + np.sqrt(beta) * rng.standard_normal(x_prev.shape)


def posterior_params(x_n: np.ndarray, eps: np.ndarray, n: int, sched: VarianceSchedule) -> tuple[np.ndarray, float]:
    """Reverse-step mean and variance in the epsilon parameterization.

    mean = x_n / sqrt(1 - beta_n) - beta_n eps / (sqrt(1 - beta_n) sqrt(1 - abar_n))
    var  = (1 - abar_{n-1}) / (1 - abar_n) * beta_n   (zero at n = 1)
    """
    _check_step(n, sched)
    x_n = np.asarray(x_n, dtype=float)
    eps = np.asarray(eps, dtype=float)
    beta = sched.betas[n - 1]
    abar = sched.alpha_bars[n - 1]
    abar_prev = float(sched.alpha_bar(n - 1))
    mean = x_n / np.sqrt(1.0 - beta) - beta * eps / (np.sqrt(1.0 - beta) * np.sqrt(1.0 - abar))
    var = (1.0 - abar_prev) / (1.0 - abar) * beta
    return mean, float(var)


def posterior_params_from_x0(x_n: np.ndarray, x0: np.ndarray, n: int, sched: VarianceSchedule) -> tuple[np.ndarray, float]:
    """Same reverse-step parameters written against x0 instead of epsilon.

    Independent algebraic route used to cross-check posterior_params: the two
    must agree whenever (x0, eps, x_n) are linked by the forward marginal.
    """
    _check_step(n, sched)
    x_n = np.asarray(x_n, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    beta = sched.betas[n - 1]
    abar = sched.alpha_bars[n - 1]
    abar_prev = float(sched.alpha_bar(n - 1))
    mean = (
        np.sqrt(abar_prev) * beta / (1.0 - abar) * x0
        + np.sqrt(1.0 - beta) * (1.0 - abar_prev) / (1.0 - abar) * x_n
    )
    var = (1.0 - abar_prev) / (1.0 - abar) * beta
    return mean, float(var)


def cfg_combine(eps_cond: np.ndarray, eps_uncond: np.ndarray, k: float) -> np.ndarray:
    """Classifier-free guidance: eps_cond + k (eps_cond - eps_uncond)."""
    eps_cond = np.asarray(eps_cond, dtype=float)
    eps_uncond = np.asarray(eps_uncond, dtype=float)
    if eps_cond.shape != eps_uncond.shape:
        raise ValueError("guidance branches must share a shape")
    if k < 0:
        raise ValueError(f"guidance scale must be >= 0, got {k}")
    return eps_cond + k * (eps_cond - eps_uncond)


def time_embedding(n) -> np.ndarray:
    """Sinusoidal embedding of raw step indices, shape (batch, TIME_EMBED_DIM)."""
    n = np.atleast_1d(np.asarray(n, dtype=float))[:, None]
    half = TIME_EMBED_DIM // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / half)[None, :]
    return np.concatenate([np.sin(n * freqs), np.cos(n * freqs)], axis=1)


def _dsilu(z: np.ndarray) -> np.ndarray:
    s = expit(z)
    return s * (1.0 + z * (1.0 - s))


@dataclass(frozen=True)
class Condition:
    """Conditioning inputs for one sample batch.

    ``null_flag`` marks the learned "no semantic condition" token: the
    semantic slot is zeroed and the flag channel set, so a genuinely empty
    semantic vector stays distinguishable from "unconditional".
    """

    reference: np.ndarray
    semantic: np.ndarray
    null_flag: bool = False


_PARAM_ORDER = ("W1", "b1", "W2", "b2", "W3", "b3")


class Denoiser:
    """Two-hidden-layer SiLU network predicting the injected noise.

    Input is the concatenation [x, reference, semantic, null_flag,
    time_embedding(n)]; output has the data dimensionality. ``backward``
    consumes the cache left by the last ``forward(..., keep_cache=True)`` and
    fills ``grads`` with exact analytic gradients.
    """

    def __init__(self, data_dim: int, ref_dim: int, sem_dim: int, hidden: int,
                 rng: np.random.Generator | None = None):
        if min(data_dim, ref_dim, sem_dim, hidden) < 1:
            raise ValueError("all dimensions must be >= 1")
        self.data_dim = data_dim
        self.ref_dim = ref_dim
        self.sem_dim = sem_dim
        self.hidden = hidden
        self.in_dim = data_dim + ref_dim + sem_dim + 1 + TIME_EMBED_DIM
        rng = rng or np.random.default_rng(0)
        self.params = {
            "W1": rng.normal(0.0, 1.0 / np.sqrt(self.in_dim), (hidden, self.in_dim)),
            "b1": np.zeros(hidden),
            "W2": rng.normal(0.0, 1.0 / np.sqrt(hidden), (hidden, hidden)),
            "b2": np.zeros(hidden),
            "W3": rng.normal(0.0, 1.0 / np.sqrt(hidden), (data_dim, hidden)),
            "b3": np.zeros(data_dim),
        }
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        self.ema_params: dict[str, np.ndarray] | None = None
        self.uncond_trained = False
        self._cache = None

    def forward(self, x: np.ndarray, ref: np.ndarray, sem: np.ndarray,
                null_flag: np.ndarray, n, params: dict | None = None,
                keep_cache: bool = False) -> np.ndarray:
        p = self.params if params is None else params
        flag = np.asarray(null_flag, dtype=float)[:, None]
        inp = np.concatenate([x, ref, sem, flag, time_embedding(n)], axis=1)
        z1 = inp @ p["W1"].T + p["b1"]
        h1 = z1 * expit(z1)
        z2 = h1 @ p["W2"].T + p["b2"]
        h2 = z2 * expit(z2)
        out = h2 @ p["W3"].T + p["b3"]
        if keep_cache:
            self._cache = (inp, z1, h1, z2, h2)
        return out

    def backward(self, grad_out: np.ndarray) -> None:
        """Backpropagate d(loss)/d(output) through the cached forward pass."""
        if self._cache is None:
            raise RuntimeError("backward requires a forward pass with keep_cache=True")
        inp, z1, h1, z2, h2 = self._cache
        p = self.params
        self.grads["W3"] = grad_out.T @ h2
        self.grads["b3"] = grad_out.sum(axis=0)
        gh2 = grad_out @ p["W3"] * _dsilu(z2)
        self.grads["W2"] = gh2.T @ h1
        self.grads["b2"] = gh2.sum(axis=0)
        gh1 = gh2 @ p["W2"] * _dsilu(z1)
        self.grads["W1"] = gh1.T @ inp
        self.grads["b1"] = gh1.sum(axis=0)
        self._cache = None

    def sampling_params(self) -> dict[str, np.ndarray]:
        """Weights used at sampling time: the EMA shadow once trained."""
        return self.ema_params if self.ema_params is not None else self.params

    def flat_params(self, params: dict | None = None) -> np.ndarray:
        p = self.params if params is None else params
        return np.concatenate([p[k].ravel() for k in _PARAM_ORDER])

    def set_flat_params(self, flat: np.ndarray) -> None:
        pos = 0
        for k in _PARAM_ORDER:
            size = self.params[k].size
            self.params[k] = flat[pos : pos + size].reshape(self.params[k].shape).copy()
            pos += size
        if pos != flat.size:
            raise ValueError(f"expected {pos} parameters, got {flat.size}")


def denoising_loss(x0: np.ndarray, ref: np.ndarray, sem: np.ndarray,
                   null_flag: np.ndarray, denoiser: Denoiser,
                   sched: VarianceSchedule, rng: np.random.Generator,
                   accumulate: bool = True) -> float:
    """Simplified diffusion loss on one batch, with analytic gradients.

    Per item: draw a uniform step and a standard normal noise vector, corrupt
    x0 to that step, and score mean over the batch of |eps - eps_hat|^2
    (summed over coordinates). Gradients land in ``denoiser.grads`` unless
    ``accumulate`` is off.
    """
    x0 = np.asarray(x0, dtype=float)
    if x0.ndim != 2 or x0.shape[0] == 0:
        raise ValueError("x0 must be a non-empty (batch, dim) array")
    batch = x0.shape[0]
    n = rng.integers(1, sched.n_steps + 1, batch)
    eps = rng.standard_normal(x0.shape)
    x_n = forward_marginal(x0, n, eps, sched)
    out = denoiser.forward(x_n, ref, sem, null_flag, n, keep_cache=accumulate)
    diff = out - eps
    loss = float((diff ** 2).sum(axis=1).mean())
    if accumulate:
        denoiser.backward(2.0 / batch * diff)
    return loss


@dataclass
class AdamState:
    """Hand-rolled Adam with bias correction."""

    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def update(self, params: dict, grads: dict, lr: float | None = None) -> None:
        if not self.m:
            self.m = {k: np.zeros_like(p) for k, p in params.items()}
            self.v = {k: np.zeros_like(p) for k, p in params.items()}
        self.step += 1
        lr = self.lr if lr is None else lr
        for k, g in grads.items():
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g ** 2
            m_hat = self.m[k] / (1.0 - self.beta1 ** self.step)
            v_hat = self.v[k] / (1.0 - self.beta2 ** self.step)
            params[k] -= lr * m_hat / (np.sqrt(v_hat) + self.eps)


def train(x0: np.ndarray, ref: np.ndarray, sem: np.ndarray, denoiser: Denoiser,
          sched: VarianceSchedule, rng: np.random.Generator, epochs: int,
          lr: float, batch_size: int, null_prob: float,
          warmup_epochs: int = 2, lr_floor: float = 0.03,
          ema_decay: float = 0.999) -> list[float]:
    """Mini-batch Adam training of the noise predictor with CFG dropout.

    Each item's semantic condition is independently nulled with probability
    ``null_prob`` so the network learns both guidance branches. The learning
    rate warms up linearly over the first ``warmup_epochs`` worth of updates,
    then decays exponentially to ``lr_floor`` of its peak. An EMA shadow of
    the weights is kept for sampling. Returns per-epoch mean losses.
    """
    if not 0.0 <= null_prob < 1.0:
        raise ValueError(f"null_prob must be in [0, 1), got {null_prob}")
    if epochs < 1:
        raise ValueError(f"epochs must be >= 1, got {epochs}")
    x0 = np.asarray(x0, dtype=float)
    count = x0.shape[0]
    if batch_size < 1 or batch_size > count:
        raise ValueError(f"batch_size must be in 1..{count}, got {batch_size}")
    opt = AdamState(lr=lr)
    denoiser.uncond_trained = null_prob > 0.0
    denoiser.ema_params = {k: v.copy() for k, v in denoiser.params.items()}
    steps_per_epoch = (count + batch_size - 1) // batch_size
    warmup_steps = max(warmup_epochs * steps_per_epoch, 1)
    history: list[float] = []
    for epoch in range(epochs):
        decay_frac = max(0.0, epoch - warmup_epochs) / max(epochs - 1 - warmup_epochs, 1)
        epoch_lr = lr * lr_floor ** decay_frac
        order = rng.permutation(count)
        total = 0.0
        for start in range(0, count, batch_size):
            idx = order[start : start + batch_size]
            sem_batch = sem[idx].copy()
            nulled = rng.random(idx.size) < null_prob
            sem_batch[nulled] = 0.0
            loss = denoising_loss(
                x0[idx], ref[idx], sem_batch, nulled, denoiser, sched, rng
            )
            if not np.isfinite(loss):
                raise RuntimeError(f"training diverged: non-finite loss at epoch {epoch + 1}")
            total += loss * idx.size
            step_lr = epoch_lr * min(1.0, (opt.step + 1) / warmup_steps)
            opt.update(denoiser.params, denoiser.grads, lr=step_lr)
            for k, p in denoiser.params.items():
                denoiser.ema_params[k] = ema_decay * denoiser.ema_params[k] + (1.0 - ema_decay) * p
        history.append(total / count)
    return history


def sample(denoiser: Denoiser, cond: Condition, k: float, sched: VarianceSchedule,
           rng: np.random.Generator, count: int = 1) -> np.ndarray:
    """Ancestral sampling with classifier-free guidance, EMA weights if trained.

    Starts from standard normal noise and walks n = N..1, combining the
    conditional and unconditional noise estimates at scale ``k`` each step.
    Returns a (count, data_dim) array of x0 draws.
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    if k > 0.0 and not denoiser.uncond_trained:
        warnings.warn(
            "guidance scale > 0 but the unconditional branch was never trained "
            "(null_prob was 0); guided samples are unreliable",
            UntrainedBranchWarning,
            stacklevel=2,
        )
    params = denoiser.sampling_params()
    ref = np.tile(np.asarray(cond.reference, dtype=float), (count, 1))
    if cond.null_flag:
        sem = np.zeros((count, denoiser.sem_dim))
        flag_cond = np.ones(count)
    else:
        sem = np.tile(np.asarray(cond.semantic, dtype=float), (count, 1))
        flag_cond = np.zeros(count)
    sem_null = np.zeros((count, denoiser.sem_dim))
    flag_null = np.ones(count)
    x = rng.standard_normal((count, denoiser.data_dim))
    for n in range(sched.n_steps, 0, -1):
        n_arr = np.full(count, n)
        eps_cond = denoiser.forward(x, ref, sem, flag_cond, n_arr, params=params)
        eps_uncond = denoiser.forward(x, ref, sem_null, flag_null, n_arr, params=params)
        eps_hat = cfg_combine(eps_cond, eps_uncond, k)
        mean, var = posterior_params(x, eps_hat, n, sched)
        x = mean
        if var > 0.0:
            x = x + np.sqrt(var) * rng.standard_normal(x.shape)
    return x


def save_denoiser(denoiser: Denoiser, sched: VarianceSchedule) -> bytes:
    """Serialize weights as a versioned header plus flat little-endian f64s."""
    flat = denoiser.flat_params(denoiser.sampling_params())
    flags = _FLAG_UNCOND_TRAINED if denoiser.uncond_trained else 0
    header = _PARAMS_HEADER.pack(
        _PARAMS_MAGIC, _PARAMS_VERSION, denoiser.data_dim, denoiser.ref_dim,
        denoiser.sem_dim, denoiser.hidden, TIME_EMBED_DIM, flags,
        sched.hash_bytes(), flat.size,
    )
    return header + flat.astype("<f8").tobytes()


def load_denoiser(blob: bytes, sched: VarianceSchedule | None = None) -> Denoiser:
    """Rebuild a denoiser from ``save_denoiser`` output, checking the header."""
    (magic, version, data_dim, ref_dim, sem_dim, hidden, time_dim, flags,
     sched_hash, count) = _PARAMS_HEADER.unpack_from(blob, 0)
    if magic != _PARAMS_MAGIC:
        raise ValueError(f"bad parameter blob magic {magic!r}")
    if version != _PARAMS_VERSION:
        raise ValueError(f"unsupported parameter blob version {version}")
    if time_dim != TIME_EMBED_DIM:
        raise ValueError(f"time embedding dim {time_dim} != {TIME_EMBED_DIM}")
    if sched is not None and sched_hash != sched.hash_bytes():
        raise ValueError("parameter blob was trained against a different schedule")
    flat = np.frombuffer(blob, dtype="<f8", offset=_PARAMS_HEADER.size)
    if flat.size != count:
        raise ValueError(f"expected {count} parameters, found {flat.size}")
    denoiser = Denoiser(data_dim, ref_dim, sem_dim, hidden)
    denoiser.set_flat_params(flat.astype(float))
    denoiser.uncond_trained = bool(flags & _FLAG_UNCOND_TRAINED)
    return denoiser


def loss_history_csv(history: list[float]) -> str:
    """Loss history as CSV text with an (epoch, mean_loss) header."""
    lines = ["epoch,mean_loss"]
    lines += [f"{i + 1},{loss!r}" for i, loss in enumerate(history)]
    return "\n".join(lines) + "\n"
