"""Training: the SGD driver and the three regimes.

* naive: one shared tradeoff for every width level.
* estimated: per-level tradeoffs read off independently trained
  rate-distortion curves (where adjacent-width curves start diverging, the
  local slope of the narrower curve is the tradeoff for that level).
* scheduled: start from a naive model at the top tradeoff, then alternate
  multiplying the tradeoffs of the first i levels by kappa > 1 with T
  optimizer steps, freezing level i when the validation RD segment slope
  between levels i and i+1 stops improving.

The loss convention is D + lambda*R throughout, so pushing a level toward
lower rate means growing its lambda; validation distortion is measured as
PSNR while scheduling, so segment slopes are positive dB-per-bpp and the
stop condition is "slope got larger than last time".

The optimizer is Adam (the stochastic-gradient method used for every
experiment here), with separate learning rates for the transform and the
entropy model, and lazy updates: a parameter whose gradient is identically
zero in a step is skipped entirely, so training one width level leaves the
other levels' entropy tables bitwise untouched.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np

from .autograd import backward
from .checkpoint import load_state, save_state
from .data import Dataset, _rng
from .entropy import quantize
from .errors import ConfigError, NumericError
from .model import RDPoint, SlimAutoencoder, pad_to_factor, psnr

_DOMAIN_NOISE = 3

LOG_COLUMNS = ("phase", "iteration", "level", "lambdas", "rates", "psnrs", "xi")


@dataclass
class ScheduleParams:
    """Inputs of the tradeoff-scheduling loop."""

    lambda_top: float = 0.01
    kappa: float = 1.25
    T: int = 200
    M: int = 7
    lr_main: float = 1e-3
    lr_entropy: float = 1e-2

    def __post_init__(self):
        if self.kappa <= 1.0:
            raise ConfigError(f"kappa must exceed 1, got {self.kappa}")
        if self.T < 1 or self.M < 1:
            raise ConfigError("T and M must be at least 1")
        if self.lambda_top <= 0:
            raise ConfigError("lambda_top must be positive")


class Adam:
    """Adam with per-group learning rates and lazy zero-grad skipping."""

    def __init__(self, params, lr_main: float, lr_entropy: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = {"main": float(lr_main), "entropy": float(lr_entropy)}
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.lr_scale = 1.0
        self.m = {p.name: np.zeros_like(p.value) for p in self.params}
        self.v = {p.name: np.zeros_like(p.value) for p in self.params}
        self.t = {p.name: 0 for p in self.params}

    def step(self):
        for p in self.params:
            g = p.grad
            if g is None or not g.any():
                continue
            if not np.all(np.isfinite(g)):
                raise NumericError(f"non-finite gradient on {p.name}")
            t = self.t[p.name] + 1
            self.t[p.name] = t
            m = self.m[p.name]
            v = self.v[p.name]
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * (g * g)
            mhat = m / (1 - self.beta1**t)
            vhat = v / (1 - self.beta2**t)
            lr = self.lr[p.group] * self.lr_scale
            p.value -= lr * mhat / (np.sqrt(vhat) + self.eps)

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def state_arrays(self) -> dict:
        out = {}
        for p in self.params:
            out[p.name + "#m"] = self.m[p.name]
            out[p.name + "#v"] = self.v[p.name]
            out[p.name + "#t"] = np.array(float(self.t[p.name]))
        return out

    def load_state_arrays(self, arrays: dict):
        for p in self.params:
            self.m[p.name] = arrays[p.name + "#m"].copy()
            self.v[p.name] = arrays[p.name + "#v"].copy()
            self.t[p.name] = int(arrays[p.name + "#t"])


def _format_row(phase, iteration, level, lambdas, rates, psnrs, xi):
    return {
        "phase": phase,
        "iteration": iteration,
        "level": level,
        "lambdas": ";".join(f"{v:.10g}" for v in lambdas),
        "rates": ";".join(f"{v:.6f}" for v in rates),
        "psnrs": ";".join(f"{v:.4f}" for v in psnrs),
        "xi": f"{xi:.6f}" if xi is not None else "",
    }


def write_log(path, rows):
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=LOG_COLUMNS)
        w.writeheader()
        for row in rows:
            w.writerow(row)


def sgd_train(model: SlimAutoencoder, dataset: Dataset, lambdas, iterations: int,
              opt: Adam, seed: int, start_iter: int = 0, snapshot_every: int = 50):
    """Minibatch gradient descent on the joint multi-tradeoff loss.

    Deterministic under a fixed seed: batches and quantization noise are
    pure functions of (seed, iteration).  On divergence the model is
    restored to the last snapshot and a NumericError is raised.
    """
    if len(lambdas) != model.config.K:
        raise ConfigError(f"need {model.config.K} tradeoffs, got {len(lambdas)}")
    params = model.params()
    last_good = [p.value.copy() for p in params]
    c = dataset.crop_size
    for it in range(start_iter, start_iter + iterations):
        batch = dataset.sample_batch(it)
        ph = batch.shape[2] + (-batch.shape[2]) % model.config.downsample_factor
        pw = batch.shape[3] + (-batch.shape[3]) % model.config.downsample_factor
        noise = model.make_noise(batch.shape[0], ph, pw, _rng(seed, _DOMAIN_NOISE, it))
        try:
            loss, _ = model.loss_joint(batch, lambdas, noise)
            if not np.isfinite(loss.value):
                raise NumericError(f"loss became non-finite at iteration {it}")
            opt.zero_grad()
            backward(loss)
            opt.step()
        except NumericError:
            for p, v in zip(params, last_good):
                p.value[...] = v
            raise
        if snapshot_every and (it + 1) % snapshot_every == 0:
            for p, v in zip(params, last_good):
                v[...] = p.value
    return model


def train_naive(model: SlimAutoencoder, dataset: Dataset, lam: float,
                iterations: int, opt: Adam, seed: int, start_iter: int = 0):
    """Single shared tradeoff across every width level."""
    return sgd_train(model, dataset, [lam] * model.config.K, iterations, opt,
                     seed, start_iter=start_iter)


def validate_rd(model: SlimAutoencoder, val_images) -> list:
    """Deterministic RD point per level: hard quantization, no noise.

    Rate is the mean likelihood-model estimate in bits per source pixel;
    distortion is mean PSNR (and MSE) of the clipped reconstruction.
    """
    if not val_images:
        raise ConfigError("validation set is empty")
    K = model.config.K
    points = []
    for k in range(1, K + 1):
        rates, psnrs, mses = [], [], []
        for x in val_images:
            H, W = x.shape[2], x.shape[3]
            xp, _, _ = pad_to_factor(np.asarray(x, dtype=np.float64),
                                     model.config.downsample_factor)
            z = model.encode_latent(xp, k).value
            q, _ = quantize(z, model.config.support)
            bits = float(model.entropy.rate_bits(q.astype(np.float64), k).value)
            rates.append(bits / (H * W))
            xhat = model.reconstruct(q, k, H, W)
            psnrs.append(psnr(x, xhat))
            mses.append(float(np.mean((np.asarray(x) - xhat) ** 2)))
        points.append(RDPoint(level=k, width=model.config.widths[k - 1],
                              rate=float(np.mean(rates)), psnr=float(np.mean(psnrs)),
                              mse=float(np.mean(mses))))
    return points


def segment_slope(lo: RDPoint, hi: RDPoint) -> float:
    """PSNR-over-rate slope between two adjacent levels' RD points."""
    if hi.rate == lo.rate:
        return float("inf")
    return (hi.psnr - lo.psnr) / (hi.rate - lo.rate)


@dataclass
class TrainState:
    """Resumable position inside the scheduling loop."""

    lambdas: list
    iteration: int
    level: int          # 1-based level currently being scheduled
    m: int              # next push number within the level (1..M)
    xi_prev: float
    done: bool = False

    def scalars(self) -> dict:
        return {
            "lambdas": self.lambdas,
            "iteration": self.iteration,
            "level": self.level,
            "m": self.m,
            "xi_prev": self.xi_prev,
            "done": self.done,
        }

    @classmethod
    def from_scalars(cls, d: dict) -> "TrainState":
        return cls(lambdas=list(d["lambdas"]), iteration=int(d["iteration"]),
                   level=int(d["level"]), m=int(d["m"]),
                   xi_prev=float(d["xi_prev"]), done=bool(d["done"]))


def save_trainstate(path, state: TrainState, opt: Adam, seed: int):
    save_state(path, {"state": state.scalars(), "seed": seed,
                      "lr_scale": opt.lr_scale}, opt.state_arrays())


def load_trainstate(path, opt: Adam):
    scalars, arrays = load_state(path)
    opt.load_state_arrays(arrays)
    opt.lr_scale = float(scalars["lr_scale"])
    return TrainState.from_scalars(scalars["state"]), int(scalars["seed"])


def lambda_scheduling(model: SlimAutoencoder, train_ds: Dataset, val_images,
                      sched: ScheduleParams, opt: Adam, seed: int,
                      state: TrainState | None = None, start_iteration: int = 0,
                      log_rows: list | None = None, max_steps: int | None = None):
    """Alternate tradeoff pushes and training until each level's RD slope
    stops improving.

    The model must already be naive-trained at ``sched.lambda_top``.  Levels
    are frozen from the widest-but-one down to the narrowest; a level's
    tradeoff never changes after its stop condition fires.  The slope
    history is per level: entering level i re-baselines on the current
    (i, i+1) segment, the same way the very first baseline comes from the
    (K-1, K) segment after naive training.  Pass ``state`` to resume an
    interrupted run and ``max_steps`` to pause after that many
    push-train-evaluate cycles.  Returns (lambdas, state).
    """
    K = model.config.K
    if state is None:
        rd = validate_rd(model, val_images)
        if K < 2:
            state = TrainState(lambdas=[sched.lambda_top] * K,
                               iteration=start_iteration, level=0, m=1,
                               xi_prev=0.0, done=True)
            model.lambdas = list(state.lambdas)
            return state.lambdas, state
        xi0 = segment_slope(rd[K - 2], rd[K - 1])
        state = TrainState(lambdas=[sched.lambda_top] * K, iteration=start_iteration,
                           level=K - 1, m=1, xi_prev=xi0)
        if log_rows is not None:
            log_rows.append(_format_row("schedule", state.iteration, K - 1,
                                        state.lambdas, [p.rate for p in rd],
                                        [p.psnr for p in rd], xi0))

    def enter_level(new_level, rd):
        state.level = new_level
        state.m = 1
        if new_level >= 1:
            state.xi_prev = segment_slope(rd[new_level - 1], rd[new_level])
            if log_rows is not None:
                log_rows.append(_format_row("schedule", state.iteration, new_level,
                                            state.lambdas, [p.rate for p in rd],
                                            [p.psnr for p in rd], state.xi_prev))
        else:
            state.done = True

    steps = 0
    while not state.done:
        if max_steps is not None and steps >= max_steps:
            break
        i = state.level
        if i < 1:
            state.done = True
            break
        if state.m > sched.M:
            warnings.warn(f"level {i}: schedule budget M={sched.M} exhausted")
            enter_level(i - 1, validate_rd(model, val_images))
            continue

        for j in range(i):
            state.lambdas[j] *= sched.kappa
        sgd_train(model, train_ds, state.lambdas, sched.T, opt, seed,
                  start_iter=state.iteration)
        state.iteration += sched.T
        steps += 1

        rd = validate_rd(model, val_images)
        if rd[i].rate <= rd[i - 1].rate:
            # levels i and i+1 are still ill-ordered in rate: keep pushing
            state.m += 1
            if log_rows is not None:
                log_rows.append(_format_row("schedule", state.iteration, i,
                                            state.lambdas, [p.rate for p in rd],
                                            [p.psnr for p in rd], None))
            continue
        xi_t = segment_slope(rd[i - 1], rd[i])
        if log_rows is not None:
            log_rows.append(_format_row("schedule", state.iteration, i,
                                        state.lambdas, [p.rate for p in rd],
                                        [p.psnr for p in rd], xi_t))
        if xi_t > state.xi_prev:
            enter_level(i - 1, rd)
        else:
            state.xi_prev = xi_t
            state.m += 1

    if state.done:
        model.lambdas = list(state.lambdas)
    return state.lambdas, state


def estimate_lambdas_from_curves(curves, lambda_top: float, delta: float = 0.05,
                                 grid_points: int = 512):
    """Per-level tradeoffs from independent fixed-width RD curves.

    ``curves[k]`` is a list of (rate, mse) points for width level k+1,
    ordered narrow to wide.  For each adjacent pair, find the lowest rate
    where the narrower curve's distortion exceeds the wider one's by more
    than ``delta`` (relative) and return the local distortion-rate slope of
    the narrower curve there; the widest level gets ``lambda_top``.
    """
    K = len(curves)
    if K < 1:
        raise ConfigError("need at least one RD curve")
    prepared = []
    for pts in curves:
        if len(pts) < 3:
            raise ConfigError("each RD curve needs at least 3 points")
        pts = sorted((float(r), float(d)) for r, d in pts)
        rates = np.array([p[0] for p in pts])
        dists = np.array([p[1] for p in pts])
        prepared.append((rates, dists))

    lambdas = [None] * K
    lambdas[K - 1] = float(lambda_top)
    for k in range(K - 1):
        r_a, d_a = prepared[k]
        r_b, d_b = prepared[k + 1]
        lo = max(r_a.min(), r_b.min())
        hi = min(r_a.max(), r_b.max())
        if hi <= lo:
            raise ConfigError(
                f"curves {k + 1} and {k + 2} share no rate range; widen the sweep"
            )
        grid = np.linspace(lo, hi, grid_points)
        da = np.interp(grid, r_a, d_a)
        db = np.interp(grid, r_b, d_b)
        gap = (da - db) / np.maximum(db, 1e-12)
        above = np.nonzero(gap > delta)[0]
        if above.size == 0:
            raise ConfigError(
                f"curves {k + 1} and {k + 2} never diverge beyond {delta:.0%} "
                f"within the sweep; extend it to higher rates"
            )
        r_star = grid[above[0]]
        h = (hi - lo) / grid_points
        slope = (np.interp(r_star + h, r_a, d_a) - np.interp(r_star - h, r_a, d_a)) / (2 * h)
        lambdas[k] = float(max(-slope, 0.0))
    return lambdas
