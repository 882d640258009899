"""Training loop: L1 + SSIM rendering loss, Adam, and adaptive density control."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields
from typing import Callable

import numpy as np

from .errors import NonFiniteLoss, ValidationError
from .geometry import LaminographyGeometry, build_view
from .rasterizer import Gradients, render, render_backward
from .ssim import ssim_and_grad
from .types import GaussianScene, ProjectionStack

log = logging.getLogger(__name__)

GROUPS = ("raw_density", "position", "quaternion", "raw_scale")


@dataclass
class TrainConfig:
    iterations: int = 30000
    lambda_ssim: float = 0.25
    lr_density: float = 5e-2
    lr_position: float = 2e-4
    lr_position_final: float = 2e-6
    lr_rotation: float = 1e-3
    lr_scale: float = 5e-3
    densify_start: int = 500
    densify_end: int = 20000
    densify_interval: int = 100
    grad_threshold: float = 5e-5
    prune_density_fraction: float = 1e-4
    split_scale_threshold: float = 0.01
    prune_scale_fraction: float = 0.5
    clone_mass_split: bool = True
    max_gaussians: int = 0
    rng_seed: int = 0
    views_per_step: int = 1
    log_interval: int = 100
    position_clamp: float = 1.2
    holdout_view: int = -1

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.iterations < 0:
            raise ValidationError(f"iterations must be >= 0, got {self.iterations}")
        if not 0.0 <= self.lambda_ssim <= 1.0:
            raise ValidationError(f"lambda_ssim must lie in [0, 1], got {self.lambda_ssim}")
        if not self.grad_threshold > 0:
            raise ValidationError(f"grad_threshold must be positive, got {self.grad_threshold}")
        if self.iterations > 0:
            if not self.densify_start < self.densify_end <= self.iterations:
                raise ValidationError(
                    "need densify_start < densify_end <= iterations, got "
                    f"{self.densify_start}, {self.densify_end}, {self.iterations}"
                )
        if self.densify_interval < 1:
            raise ValidationError(f"densify_interval must be >= 1, got {self.densify_interval}")
        if self.views_per_step < 1:
            raise ValidationError(f"views_per_step must be >= 1, got {self.views_per_step}")
        if self.holdout_view < -1:
            raise ValidationError(f"holdout_view must be -1 (none) or a view index, got {self.holdout_view}")
        if self.log_interval < 1:
            raise ValidationError(f"log_interval must be >= 1, got {self.log_interval}")
        for name in ("lr_density", "lr_position", "lr_position_final", "lr_rotation", "lr_scale"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be >= 0")

    @classmethod
    def scaled(cls, iterations: int, **overrides) -> "TrainConfig":
        """Defaults with the densification window rescaled to a shorter budget.

        Keeps the 500/30000 and 20000/30000 proportions of the full schedule.
        """
        kw = dict(
            iterations=iterations,
            densify_start=max(1, round(iterations * 500 / 30000)),
            densify_end=max(2, round(iterations * 20000 / 30000)),
        )
        kw.update(overrides)
        return cls(**kw)

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def to_dict(self) -> dict:
        return asdict(self)


class Adam:
    """Adam over named parameter arrays with one learning rate per group."""

    def __init__(self, betas=(0.9, 0.999), eps=1e-15):
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray], lrs: dict[str, float]):
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for k, p in params.items():
            g = grads[k]
            if k not in self.m:
                self.m[k] = np.zeros_like(p)
                self.v[k] = np.zeros_like(p)
            m, v = self.m[k], self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            lr = lrs[k]
            if lr:
                p -= lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)

    def remap(self, keep: np.ndarray, n_new: int):
        """Keep rows ``keep`` and append ``n_new`` zero rows to every buffer."""
        for buf in (self.m, self.v):
            for k, a in buf.items():
                tail = np.zeros((n_new,) + a.shape[1:])
                buf[k] = np.concatenate([a[keep], tail])


@dataclass
class TrainState:
    scene: GaussianScene
    adam: Adam = field(default_factory=Adam)
    screen_accum: np.ndarray | None = None
    screen_count: np.ndarray | None = None
    iteration: int = 0
    loss_history: list[float] = field(default_factory=list)

    def __post_init__(self):
        m = len(self.scene)
        if self.screen_accum is None:
            self.screen_accum = np.zeros(m)
        if self.screen_count is None:
            self.screen_count = np.zeros(m)

    def params(self) -> dict[str, np.ndarray]:
        return {k: getattr(self.scene, k) for k in GROUPS}


def compute_loss(rendered: np.ndarray, measured: np.ndarray, lambda_ssim: float,
                 data_range: float | None = None):
    """``L1 + lambda_ssim * (1 - SSIM)`` and its gradient w.r.t. ``rendered``.

    Returns ``(loss, grad, l1, ssim_term)``. ``data_range`` defaults to the
    dynamic range of ``measured``.
    """
    if rendered.shape != measured.shape:
        raise ValidationError(f"shape mismatch {rendered.shape} vs {measured.shape}")
    if data_range is None:
        data_range = float(measured.max() - measured.min()) or 1.0
    diff = rendered - measured
    n = diff.size
    if not diff.any():
        # Global minimum of both terms: the exact subgradient is zero, while the
        # SSIM formula would return roundoff that Adam rescales to a full step.
        return 0.0, np.zeros_like(diff), 0.0, 0.0
    l1 = float(np.mean(np.abs(diff)))
    grad = np.sign(diff) / n
    if lambda_ssim > 0:
        s, gs = ssim_and_grad(rendered, measured, data_range)
        ssim_term = 1.0 - s
        grad = grad - lambda_ssim * gs
    else:
        ssim_term = 0.0
    return l1 + lambda_ssim * ssim_term, grad, l1, ssim_term


def position_lr(cfg: TrainConfig, iteration: int, extent: float) -> float:
    """Exponential decay from ``lr_position`` to ``lr_position_final``, scaled by extent."""
    lr0, lr1 = cfg.lr_position * extent, cfg.lr_position_final * extent
    if cfg.iterations <= 0 or lr0 == 0 or lr1 == 0:
        return lr0
    r = min(max(iteration / cfg.iterations, 0.0), 1.0)
    return math.exp((1 - r) * math.log(lr0) + r * math.log(lr1))


def _learning_rates(cfg: TrainConfig, iteration: int, extent: float) -> dict[str, float]:
    return {
        "raw_density": cfg.lr_density,
        "position": position_lr(cfg, iteration, extent),
        "quaternion": cfg.lr_rotation,
        "raw_scale": cfg.lr_scale,
    }


def train_step(state: TrainState, views, stack: ProjectionStack, geom: LaminographyGeometry,
               cfg: TrainConfig, data_range: float | None = None) -> dict:
    """One Adam update from the given view indices; returns the step's loss parts."""
    views = list(views)
    if not views:
        raise ValidationError("train_step needs at least one view")
    scene = state.scene
    if data_range is None:
        data_range = float(stack.images.max() - stack.images.min()) or 1.0
    total = {k: np.zeros_like(getattr(scene, k)) for k in GROUPS}
    parts = np.zeros(3)
    for vi in views:
        view = build_view(geom, stack.angles[vi])
        out = render(scene, view, geom)
        loss, g_img, l1, st = compute_loss(out.image, stack.images[vi], cfg.lambda_ssim, data_range)
        if not math.isfinite(loss):
            raise NonFiniteLoss(state.iteration + 1, int(vi), loss)
        grads: Gradients = render_backward(scene, view, geom, g_img, forward=out)
        for k in GROUPS:
            total[k] += getattr(grads, k)
        state.screen_accum += grads.screen
        state.screen_count += grads.visible
        parts += (loss, l1, st)
    inv = 1.0 / len(views)
    grads = {k: v * inv for k, v in total.items()}
    state.iteration += 1
    state.adam.step(state.params(), grads, _learning_rates(cfg, state.iteration, scene.extent))

    scene.quaternion /= np.linalg.norm(scene.quaternion, axis=1, keepdims=True)
    center = scene.bounds.mean(axis=0)
    half = 0.5 * (scene.bounds[1] - scene.bounds[0]) * cfg.position_clamp
    np.clip(scene.position, center - half, center + half, out=scene.position)

    loss, l1, st = parts * inv
    state.loss_history.append(loss)
    return {"loss": loss, "l1": l1, "ssim_term": st}


def psnr_image(a: np.ndarray, ref: np.ndarray) -> float:
    """PSNR of a rendered view against its measurement, peak = ``max(ref)``, capped at 99 dB."""
    mse = float(np.mean((a - ref) ** 2))
    peak = float(ref.max())
    if mse == 0.0 or peak <= 0.0:
        return 99.0 if mse == 0.0 else -99.0
    return min(10.0 * math.log10(peak * peak / mse), 99.0)


def _offsets(scene: GaussianScene, idx: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One-standard-deviation samples from the selected Gaussians."""
    R = scene.rotation[idx]
    local = rng.standard_normal((idx.size, 3)) * scene.scale[idx]
    return np.einsum("nij,nj->ni", R, local)


def densify_and_prune(state: TrainState, cfg: TrainConfig, rng: np.random.Generator) -> dict:
    """Clone small / split large high-gradient Gaussians, then prune negligible ones."""
    scene = state.scene
    m = len(scene)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean_grad = np.where(state.screen_count > 0, state.screen_accum / state.screen_count, 0.0)
    extent = scene.extent
    max_scale = scene.scale.max(axis=1)
    high = mean_grad > cfg.grad_threshold
    if cfg.max_gaussians and m + int(high.sum()) > cfg.max_gaussians:
        budget = max(cfg.max_gaussians - m, 0)
        order = np.argsort(-mean_grad, kind="stable")[:budget]
        high = np.zeros(m, dtype=bool)
        high[order] = True
        high &= mean_grad > cfg.grad_threshold
    small = max_scale <= cfg.split_scale_threshold * extent
    clone_idx = np.flatnonzero(high & small)
    split_idx = np.flatnonzero(high & ~small)

    raw_density = scene.raw_density.copy()
    new_parts = []
    if clone_idx.size:
        if cfg.clone_mass_split:
            raw_density[clone_idx] -= math.log(2.0)
        c = scene.subset(clone_idx)
        c.raw_density = raw_density[clone_idx].copy()
        c.position = c.position + _offsets(scene, clone_idx, rng)
        new_parts.append(c)
    if split_idx.size:
        children = []
        for _ in range(2):
            c = scene.subset(split_idx)
            c.position = c.position + _offsets(scene, split_idx, rng)
            c.raw_scale = c.raw_scale - math.log(1.6)
            if cfg.clone_mass_split:
                # Two children with scales / 1.6 keep the parent's integrated mass.
                c.raw_density = c.raw_density + 3 * math.log(1.6) - math.log(2.0)
            children.append(c)
        new_parts.extend(children)

    keep = np.ones(m, dtype=bool)
    keep[split_idx] = False
    base = scene.subset(keep)
    base.raw_density = raw_density[keep]
    pieces = [base] + new_parts
    grown = GaussianScene.concatenate(pieces)
    n_new = len(grown) - int(keep.sum())
    state.adam.remap(np.flatnonzero(keep), n_new)

    rho = grown.density
    prune = (rho < cfg.prune_density_fraction * rho.max()) | (
        grown.scale.max(axis=1) > cfg.prune_scale_fraction * extent
    )
    if prune.all():
        log.warning("pruning would remove all %d Gaussians; skipping prune", len(grown))
        prune[:] = False
    if prune.any():
        survivors = ~prune
        grown = grown.subset(survivors)
        state.adam.remap(np.flatnonzero(survivors), 0)

    state.scene = grown
    state.screen_accum = np.zeros(len(grown))
    state.screen_count = np.zeros(len(grown))
    return {"cloned": int(clone_idx.size), "split": int(split_idx.size), "pruned": int(prune.sum())}


def train(stack: ProjectionStack, geom: LaminographyGeometry, init_scene: GaussianScene,
          cfg: TrainConfig, callback: Callable[[int, TrainState], None] | None = None,
          timings: list | None = None):
    """Optimize ``init_scene`` against ``stack``.

    Returns ``(scene, records)`` where each record holds the mean loss parts
    over the last ``log_interval`` iterations plus ``psnr_view``, the PSNR of
    the monitor view (``holdout_view`` when set, which is then never trained
    on, else view 0). Wall-clock times go to ``timings`` (if given) so the
    records stay reproducible.
    """
    cfg.validate()
    state = TrainState(init_scene.copy())
    if cfg.iterations == 0:
        return state.scene, []
    n_views = len(stack)
    if cfg.holdout_view >= n_views:
        raise ValidationError(f"holdout_view {cfg.holdout_view} out of range for {n_views} views")
    if cfg.holdout_view >= 0 and n_views < 2:
        raise ValidationError("holding out a view needs at least 2 views")
    pool = np.array([i for i in range(n_views) if i != cfg.holdout_view])
    monitor = max(cfg.holdout_view, 0)
    monitor_view = build_view(geom, stack.angles[monitor])
    rng = np.random.default_rng(cfg.rng_seed)
    seen = stack.images[pool]
    data_range = float(seen.max() - seen.min()) or 1.0
    records = []
    window = np.zeros(3)
    n_window = 0
    t0 = time.perf_counter()
    for it in range(1, cfg.iterations + 1):
        views = pool[rng.integers(0, pool.size, size=cfg.views_per_step)]
        parts = train_step(state, views, stack, geom, cfg, data_range)
        window += (parts["loss"], parts["l1"], parts["ssim_term"])
        n_window += 1
        if cfg.densify_start <= it <= cfg.densify_end and it % cfg.densify_interval == 0:
            densify_and_prune(state, cfg, rng)
        if it % cfg.log_interval == 0 or it == cfg.iterations:
            loss, l1, st = window / n_window
            image = render(state.scene, monitor_view, geom).image
            records.append({"iter": it, "loss": loss, "l1": l1, "ssim_term": st, "M": len(state.scene),
                            "psnr_view": psnr_image(image, stack.images[monitor])})
            if timings is not None:
                timings.append({"iter": it, "wall_ms": (time.perf_counter() - t0) * 1e3})
            window[:] = 0
            n_window = 0
        if callback is not None:
            callback(it, state)
    return state.scene, records
